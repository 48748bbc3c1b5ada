/**
 * Typed views over the two evaluation artifact files.
 *
 * outputs.csv holds, per output channel, the measured series and up to three
 * model series (smoother output, free simulation, one-step predictions; the
 * predictor columns are absent for nonlinear models). derivatives.csv holds,
 * per state channel, the smoother-mean finite difference, the model drift
 * and their residual.
 */

import { parseCsv, requireColumn, Table } from "./csv";

export interface OutputChannel {
  name: string;
  measured: number[];
  smoother: number[];
  freeSim: number[];
  /** Absent when the steady-state predictor is unavailable. */
  kfPrediction?: number[];
}

export interface OutputsArtifact {
  time: number[];
  channels: OutputChannel[];
}

export interface DerivativeChannel {
  name: string;
  finiteDifference: number[];
  drift: number[];
  residual: number[];
}

export interface DerivativesArtifact {
  time: number[];
  channels: DerivativeChannel[];
}

const MEASURED = "measured_";

function channelNames(table: Table, prefix: string): string[] {
  return table.header
    .filter((h) => h.startsWith(prefix))
    .map((h) => h.slice(prefix.length));
}

export function parseOutputs(text: string, selection?: string[]): OutputsArtifact {
  const table = parseCsv(text);
  const available = channelNames(table, MEASURED);
  if (available.length === 0) {
    throw new Error(
      `not an outputs artifact: no measured_* columns (found: ${table.header.join(", ")})`,
    );
  }
  const wanted = resolveSelection(selection, available);
  const channels = wanted.map((name): OutputChannel => {
    const channel: OutputChannel = {
      name,
      measured: requireColumn(table, `${MEASURED}${name}`),
      smoother: requireColumn(table, `smoother_${name}`),
      freeSim: requireColumn(table, `freesim_${name}`),
    };
    const kf = table.columns.get(`kfpred_${name}`);
    if (kf !== undefined) {
      channel.kfPrediction = kf;
    }
    return channel;
  });
  return { time: requireColumn(table, "time"), channels };
}

export function parseDerivatives(
  text: string,
  selection?: string[],
): DerivativesArtifact {
  const table = parseCsv(text);
  const available = channelNames(table, "fd_");
  if (available.length === 0) {
    throw new Error(
      `not a derivatives artifact: no fd_* columns (found: ${table.header.join(", ")})`,
    );
  }
  const wanted = resolveSelection(selection, available);
  const channels = wanted.map((name): DerivativeChannel => ({
    name,
    finiteDifference: requireColumn(table, `fd_${name}`),
    drift: requireColumn(table, `drift_${name}`),
    residual: requireColumn(table, `resid_${name}`),
  }));
  return { time: requireColumn(table, "time"), channels };
}

function resolveSelection(selection: string[] | undefined, available: string[]): string[] {
  if (selection === undefined || selection.length === 0) {
    return available;
  }
  for (const name of selection) {
    if (!available.includes(name)) {
      throw new Error(
        `no channel '${name}'; available channels: ${available.join(", ")}`,
      );
    }
  }
  return selection;
}
