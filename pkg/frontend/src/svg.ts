/**
 * Minimal deterministic SVG assembly. Output depends only on the input
 * numbers, so identical artifacts render to identical bytes.
 */

export function fmt(value: number): string {
  if (!Number.isFinite(value)) return "0";
  const rounded = Math.round(value * 100) / 100;
  return Object.is(rounded, -0) ? "0" : String(rounded);
}

export function escapeText(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;");
}

export interface Stroke {
  color: string;
  width: number;
  dash?: string;
}

/** Polyline path, split into segments wherever a coordinate is NaN. */
export function polylinePath(xs: number[], ys: number[]): string {
  const parts: string[] = [];
  let pen = false;
  for (let i = 0; i < xs.length; i++) {
    const x = xs[i] as number;
    const y = ys[i] as number;
    if (!Number.isFinite(x) || !Number.isFinite(y)) {
      pen = false;
      continue;
    }
    parts.push(`${pen ? "L" : "M"}${fmt(x)} ${fmt(y)}`);
    pen = true;
  }
  return parts.join(" ");
}

export function pathElement(d: string, stroke: Stroke, cls?: string): string {
  const dash = stroke.dash ? ` stroke-dasharray="${stroke.dash}"` : "";
  const classAttr = cls ? ` class="${cls}"` : "";
  return `<path${classAttr} d="${d}" fill="none" stroke="${stroke.color}" ` +
    `stroke-width="${stroke.width}"${dash}/>`;
}

export function lineElement(
  x1: number, y1: number, x2: number, y2: number, color: string,
  width = 1,
): string {
  return `<line x1="${fmt(x1)}" y1="${fmt(y1)}" x2="${fmt(x2)}" ` +
    `y2="${fmt(y2)}" stroke="${color}" stroke-width="${width}"/>`;
}

export function textElement(
  x: number, y: number, text: string,
  options: { size?: number; anchor?: string; color?: string } = {},
): string {
  const size = options.size ?? 11;
  const anchor = options.anchor ?? "start";
  const color = options.color ?? "#222222";
  return `<text x="${fmt(x)}" y="${fmt(y)}" font-size="${size}" ` +
    `font-family="sans-serif" text-anchor="${anchor}" fill="${color}">` +
    `${escapeText(text)}</text>`;
}

export function document(width: number, height: number, body: string[]): string {
  return [
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" ` +
    `height="${height}" viewBox="0 0 ${width} ${height}">`,
    `<rect width="${width}" height="${height}" fill="#ffffff"/>`,
    ...body,
    "</svg>",
    "",
  ].join("\n");
}
