export {
  parseOutputs,
  parseDerivatives,
  OutputsArtifact,
  DerivativesArtifact,
  OutputChannel,
  DerivativeChannel,
} from "./artifacts";
export { parseCsv, requireColumn, Table } from "./csv";
export { linearScale, niceStep, tickLabel, Scale } from "./scale";
export {
  renderOutputs,
  renderDerivatives,
  renderOutputsFile,
  renderDerivativesFile,
  RenderOptions,
} from "./render";
export { main, runPlot, parsePlotArgs, PlotSpec, PlotKind } from "./cli";
