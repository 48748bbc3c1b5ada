/**
 * Strict parser for the artifact CSV files written by the estimation tool.
 *
 * The format is deliberately narrow: a single header row, comma separation,
 * no quoting, and numeric cells. Blank cells mark missing measurements and
 * map to NaN.
 */

export interface Table {
  /** Column names in file order. */
  header: string[];
  /** Column-major numeric data; missing cells are NaN. */
  columns: Map<string, number[]>;
  /** Number of data rows. */
  rows: number;
}

export function parseCsv(text: string): Table {
  const lines = text.split(/\r?\n/).filter((line) => line.trim().length > 0);
  if (lines.length === 0) {
    throw new Error("empty CSV file");
  }
  const header = (lines[0] as string).split(",").map((h) => h.trim());
  const seen = new Set<string>();
  for (const name of header) {
    if (name.length === 0) throw new Error("blank column name in header");
    if (seen.has(name)) throw new Error(`duplicate column name '${name}'`);
    seen.add(name);
  }
  const columns = new Map<string, number[]>(header.map((h) => [h, []]));
  for (let i = 1; i < lines.length; i++) {
    const cells = (lines[i] as string).split(",");
    if (cells.length !== header.length) {
      throw new Error(
        `line ${i + 1}: expected ${header.length} cells, got ${cells.length}`,
      );
    }
    for (let j = 0; j < header.length; j++) {
      const cell = (cells[j] as string).trim();
      let value: number;
      if (cell === "" || cell.toLowerCase() === "nan") {
        value = NaN;
      } else {
        value = Number(cell);
        if (!Number.isFinite(value)) {
          throw new Error(`line ${i + 1}: cell '${cell}' is not numeric`);
        }
      }
      (columns.get(header[j] as string) as number[]).push(value);
    }
  }
  return { header, columns, rows: lines.length - 1 };
}

export function requireColumn(table: Table, name: string): number[] {
  const column = table.columns.get(name);
  if (column === undefined) {
    throw new Error(
      `no column '${name}'; available columns: ${table.header.join(", ")}`,
    );
  }
  return column;
}
