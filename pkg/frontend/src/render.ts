/**
 * Paper-style figure panels from evaluation artifacts.
 *
 * One subplot per channel against time. Output figures overlay the measured
 * record with the smoother output, the free simulation and, when present,
 * the steady-state one-step predictions; derivative figures overlay the
 * smoother-mean finite differences with the model drift.
 */

import {
  DerivativesArtifact,
  OutputsArtifact,
  parseDerivatives,
  parseOutputs,
} from "./artifacts";
import { linearScale, tickLabel } from "./scale";
import {
  document as svgDocument,
  lineElement,
  pathElement,
  polylinePath,
  Stroke,
  textElement,
} from "./svg";

export interface RenderOptions {
  width?: number;
  panelHeight?: number;
}

interface Series {
  label: string;
  values: number[];
  stroke: Stroke;
}

const MEASURED_STROKE: Stroke = { color: "#9aa0a6", width: 1 };
const SMOOTHER_STROKE: Stroke = { color: "#1a73e8", width: 1.5 };
const FREESIM_STROKE: Stroke = { color: "#d93025", width: 1.5, dash: "6 3" };
const KF_STROKE: Stroke = { color: "#188038", width: 1.5, dash: "2 3" };
const FD_STROKE: Stroke = { color: "#9aa0a6", width: 1 };
const DRIFT_STROKE: Stroke = { color: "#1a73e8", width: 1.5 };

const MARGIN = { left: 64, right: 16, top: 28, bottom: 34 };
const PANEL_GAP = 14;

export function renderOutputs(
  artifact: OutputsArtifact,
  options: RenderOptions = {},
): string {
  const panels = artifact.channels.map((channel) => {
    const series: Series[] = [
      { label: "measured", values: channel.measured, stroke: MEASURED_STROKE },
      { label: "smoother", values: channel.smoother, stroke: SMOOTHER_STROKE },
      { label: "free simulation", values: channel.freeSim, stroke: FREESIM_STROKE },
    ];
    if (channel.kfPrediction !== undefined) {
      series.push({
        label: "KF prediction",
        values: channel.kfPrediction,
        stroke: KF_STROKE,
      });
    }
    return { name: channel.name, series };
  });
  return renderPanels(artifact.time, panels, options);
}

export function renderDerivatives(
  artifact: DerivativesArtifact,
  options: RenderOptions = {},
): string {
  const panels = artifact.channels.map((channel) => ({
    name: `d/dt ${channel.name}`,
    series: [
      {
        label: "smoother finite difference",
        values: channel.finiteDifference,
        stroke: FD_STROKE,
      },
      { label: "model drift", values: channel.drift, stroke: DRIFT_STROKE },
    ],
  }));
  return renderPanels(artifact.time, panels, options);
}

export function renderOutputsFile(
  text: string,
  channels?: string[],
  options: RenderOptions = {},
): string {
  return renderOutputs(parseOutputs(text, channels), options);
}

export function renderDerivativesFile(
  text: string,
  channels?: string[],
  options: RenderOptions = {},
): string {
  return renderDerivatives(parseDerivatives(text, channels), options);
}

function renderPanels(
  time: number[],
  panels: { name: string; series: Series[] }[],
  options: RenderOptions,
): string {
  const width = options.width ?? 860;
  const panelHeight = options.panelHeight ?? 150;
  const height =
    MARGIN.top +
    panels.length * panelHeight +
    (panels.length - 1) * PANEL_GAP +
    MARGIN.bottom;
  const body: string[] = [];

  // shared legend from the first panel (labels are uniform across panels)
  const legendSeries = panels[0]?.series ?? [];
  let legendX = MARGIN.left;
  for (const entry of legendSeries) {
    body.push(
      pathElement(
        polylinePath([legendX, legendX + 22], [14, 14]),
        entry.stroke,
        "legend",
      ),
    );
    body.push(textElement(legendX + 27, 18, entry.label));
    legendX += 36 + 7 * entry.label.length + 22;
  }

  const xScale = linearScale(
    time,
    MARGIN.left,
    width - MARGIN.right,
    Math.floor(width / 110),
  );
  panels.forEach((panel, index) => {
    const top = MARGIN.top + index * (panelHeight + PANEL_GAP);
    const bottom = top + panelHeight;
    const all = panel.series.flatMap((s) => s.values);
    const yScale = linearScale(all, bottom, top, 4);

    body.push(
      `<rect x="${MARGIN.left}" y="${top}" ` +
      `width="${width - MARGIN.left - MARGIN.right}" ` +
      `height="${panelHeight}" fill="none" stroke="#444444"/>`,
    );
    for (const tick of yScale.ticks) {
      const y = yScale.map(tick);
      body.push(lineElement(MARGIN.left - 4, y, MARGIN.left, y, "#444444"));
      body.push(textElement(MARGIN.left - 7, y + 3.5, tickLabel(tick), {
        anchor: "end",
        size: 10,
      }));
    }
    for (const tick of xScale.ticks) {
      const x = xScale.map(tick);
      body.push(lineElement(x, bottom, x, bottom + 4, "#444444"));
      if (index === panels.length - 1) {
        body.push(textElement(x, bottom + 16, tickLabel(tick), {
          anchor: "middle",
          size: 10,
        }));
      }
    }
    body.push(textElement(MARGIN.left + 6, top + 14, panel.name, {
      size: 12,
    }));
    for (const entry of panel.series) {
      const xs = time.map((t) => xScale.map(t));
      const ys = entry.values.map((v) =>
        Number.isFinite(v) ? yScale.map(v) : NaN,
      );
      const d = polylinePath(xs, ys);
      if (d.length > 0) {
        body.push(pathElement(d, entry.stroke, "series"));
      }
    }
  });
  body.push(
    textElement((MARGIN.left + width - MARGIN.right) / 2, height - 8,
      "time [s]", { anchor: "middle" }),
  );
  return svgDocument(width, height, body);
}
