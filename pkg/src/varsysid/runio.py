"""Run configuration, CSV records and result/artifact files.

All interchange formats are versioned: a JSON config drives each run, data
travels as header-row CSV (blank cells mark missing outputs), and results are
self-describing JSON embedding the full config plus a content hash of the
input data, so every run is reproducible from its outputs.
"""

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Dataset
from .elbo import DIFFUSE, InitialStatePrior
from .errors import ConfigError, DataFormatError
from .gauss_markov import GeneralGaussMarkov, SteadyStateGaussMarkov
from .model import LtiModel
from .optimize import OptimizerOptions

SCHEMA_VERSION = 1

# %.17g reproduces float64 bit patterns exactly on read-back
FLOAT_FMT = "%.17g"


# ---------------------------------------------------------------------------
# configuration


@dataclass
class RunConfig:
    raw: dict
    model: LtiModel
    prior: InitialStatePrior
    optimizer: OptimizerOptions
    init_mode: str
    data_block: dict
    simulate_block: dict
    output_dir: Path
    base_dir: Path


def load_config(path):
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    return parse_config(raw, base_dir=path.parent)


def parse_config(raw, base_dir="."):
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    version = raw.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported config schema_version {version!r}; "
                          f"this build reads version {SCHEMA_VERSION}")
    model = build_model(raw.get("model"))
    prior = _parse_prior(raw.get("prior", {"kind": "diffuse"}), model.dims.nx)
    opt_block = dict(raw.get("optimizer", {}))
    init_mode = opt_block.pop("init", "zeros")
    if not (init_mode in ("zeros", "measurements")
            or init_mode.startswith("file:")):
        raise ConfigError(f"unknown init mode {init_mode!r}; expected zeros, "
                          f"measurements or file:<path>")
    try:
        optimizer = OptimizerOptions.from_dict(opt_block)
    except (TypeError, ConfigError) as exc:
        raise ConfigError(f"bad optimizer block: {exc}") from None
    if optimizer.q_family not in ("steady", "general"):
        raise ConfigError(f"unknown q_family {optimizer.q_family!r}")
    out_dir = Path(base_dir) / raw.get("output", {}).get("directory", ".")
    return RunConfig(raw=raw, model=model, prior=prior, optimizer=optimizer,
                     init_mode=init_mode, data_block=raw.get("data", {}),
                     simulate_block=raw.get("simulate", {}),
                     output_dir=out_dir, base_dir=Path(base_dir))


def build_model(block):
    if not isinstance(block, dict):
        raise ConfigError("config must contain a model object")
    kind = block.get("type")
    if kind != "lti":
        raise ConfigError(f"unknown model type {kind!r}; this build ships "
                          f"the masked LTI family only")
    required = ("nx", "nu", "ny", "params")
    missing = [key for key in required if key not in block]
    if missing:
        raise ConfigError(f"model block missing {missing}")
    kwargs = {}
    for name in ("a", "b", "c", "d", "bias_state", "bias_output",
                 "log_diffusion", "log_meas_std"):
        if name in block:
            kwargs[name] = block[name]
    return LtiModel(params=block["params"], nx=block["nx"], nu=block["nu"],
                    ny=block["ny"], state_names=block.get("state_names"),
                    **kwargs)


def _parse_prior(block, nx):
    kind = block.get("kind", "diffuse")
    if kind == "diffuse":
        return DIFFUSE
    if kind == "gaussian":
        mean = np.asarray(block.get("mean"), dtype=float)
        cov = np.asarray(block.get("cov"), dtype=float)
        if mean.shape != (nx,) or cov.shape != (nx, nx):
            raise ConfigError("gaussian prior mean/cov shapes do not match "
                              "the state dimension")
        return InitialStatePrior.gaussian(mean, cov)
    raise ConfigError(f"unknown prior kind {kind!r}")


def theta_from_named(model, named):
    """Theta vector from a {parameter name: value} mapping."""
    values = np.zeros(model.dims.ntheta)
    unknown = set(named) - set(model.params)
    if unknown:
        raise ConfigError(f"unknown parameter names {sorted(unknown)}; "
                          f"model defines {model.params}")
    missing = set(model.params) - set(named)
    if missing:
        raise ConfigError(f"missing values for parameters {sorted(missing)}")
    for k, name in enumerate(model.params):
        values[k] = float(named[name])
    return values


# ---------------------------------------------------------------------------
# CSV records


def _parse_cell(cell):
    cell = cell.strip()
    if cell == "" or cell.lower() in ("nan", "na"):
        return np.nan
    return float(cell)


def load_dataset(path, data_block, model=None):
    """Read a CSV record with explicit channel mapping.

    Blank (or nan) output cells become masked entries. Sampling uniformity is
    validated against the configured period, or against the median gap when
    no override is given.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError:
        raise
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise DataFormatError(f"{path}: empty file")
    header = [h.strip() for h in lines[0].split(",")]
    columns = {name: idx for idx, name in enumerate(header)}

    def column_index(name):
        if name not in columns:
            raise DataFormatError(f"{path}: no column {name!r}; available "
                                  f"columns: {header}")
        return columns[name]

    tcol = column_index(data_block.get("time_column", "time"))
    unames = list(data_block.get("input_columns", []))
    ynames = list(data_block.get("output_columns", []))
    if not ynames:
        raise DataFormatError("data block must name at least one output "
                              "column")
    uidx = [column_index(name) for name in unames]
    yidx = [column_index(name) for name in ynames]

    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != len(header):
            raise DataFormatError(f"{path}:{lineno}: expected "
                                  f"{len(header)} cells, got {len(cells)}")
        try:
            rows.append([_parse_cell(c) for c in cells])
        except ValueError as exc:
            raise DataFormatError(f"{path}:{lineno}: {exc}") from None
    table = np.asarray(rows, dtype=float)
    t = table[:, tcol]
    u = table[:, uidx] if uidx else np.zeros((table.shape[0], 0))
    y = table[:, yidx]
    mask = np.isfinite(y)
    period = data_block.get("sampling_period")
    if period is None:
        if t.shape[0] < 2:
            raise DataFormatError(f"{path}: cannot infer the sampling "
                                  f"period from a single sample")
        period = float(np.median(np.diff(t)))
    if model is not None:
        if len(unames) != model.dims.nu or len(ynames) != model.dims.ny:
            raise ConfigError(
                f"channel mapping ({len(unames)} inputs, {len(ynames)} "
                f"outputs) does not match the model dimensions "
                f"({model.dims.nu}, {model.dims.ny})")
    return Dataset(period=float(period), t=t, u=u, y=y, y_mask=mask,
                   input_names=tuple(unames), output_names=tuple(ynames))


def write_dataset_csv(path, dataset, time_name="time"):
    header = [time_name, *dataset.input_names, *dataset.output_names]
    lines = [",".join(header)]
    for k in range(dataset.t.shape[0]):
        cells = [FLOAT_FMT % dataset.t[k]]
        cells += [FLOAT_FMT % v for v in dataset.u[k]]
        cells += [(FLOAT_FMT % v) if m else ""
                  for v, m in zip(dataset.y[k], dataset.y_mask[k])]
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")


def sha256_of(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# result files


def q_to_json(q):
    if isinstance(q, SteadyStateGaussMarkov):
        return {"family": "steady", "mu": q.mu.tolist(),
                "sigma_cond": q.sigma_cond.tolist(),
                "sigma_cross": q.sigma_cross.tolist()}
    if isinstance(q, GeneralGaussMarkov):
        return {"family": "general", "mu": q.mu.tolist(),
                "sigma_cond": q.sigma_cond.tolist(),
                "sigma_cross": q.sigma_cross.tolist()}
    raise ConfigError(f"cannot serialize density of type {type(q)!r}")


def q_from_json(block):
    family = block.get("family")
    mu = np.asarray(block["mu"], dtype=float)
    cond = np.asarray(block["sigma_cond"], dtype=float)
    cross = np.asarray(block["sigma_cross"], dtype=float)
    if family == "steady":
        return SteadyStateGaussMarkov(mu, cond, cross)
    if family == "general":
        return GeneralGaussMarkov(mu, cond, cross)
    raise ConfigError(f"unknown density family {family!r}")


def write_result(path, *, kind, config_raw, data_hash, model, theta, q,
                 breakdown, report, rms=None, kf_status=None):
    doc = {
        "schema_version": SCHEMA_VERSION,
        "kind": kind,
        "config": config_raw,
        "data_sha256": data_hash,
        "theta": {"names": list(model.params),
                  "values": np.asarray(theta, dtype=float).tolist()},
        "q": q_to_json(q),
        "elbo": breakdown.as_dict(),
        "optimizer": report.as_dict(),
    }
    if rms is not None:
        doc["evaluation_rms"] = rms
    if kf_status is not None:
        doc["kf_status"] = kf_status
    Path(path).write_text(json.dumps(doc, indent=1))


def read_result(path):
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: not valid JSON: {exc}") from None
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise DataFormatError(f"{path}: unsupported schema_version "
                              f"{doc.get('schema_version')!r}")
    return doc


def theta_from_result(doc, model):
    block = doc.get("theta", {})
    names = block.get("names")
    values = np.asarray(block.get("values"), dtype=float)
    if list(names) != list(model.params) or values.shape != (
            model.dims.ntheta,):
        raise ConfigError(
            f"parameter file does not match the configured model: file has "
            f"{names}, model defines {model.params}")
    return values


# ---------------------------------------------------------------------------
# evaluation artifact files


def write_artifacts(out_dir, dataset, model, artifacts):
    """Write the criterion CSVs consumed by the plotting component.

    outputs.csv: per output channel the measured series plus the smoother,
    free-simulation and (when available) steady-state predictor outputs.
    derivatives.csv: per state channel the smoother-mean finite difference,
    the drift value and their residual.
    """
    out_dir = Path(out_dir)
    ynames = list(dataset.output_names) \
        or [f"y{i + 1}" for i in range(dataset.ny)]
    cols = ["time"]
    for name in ynames:
        cols.append(f"measured_{name}")
        cols.append(f"smoother_{name}")
        cols.append(f"freesim_{name}")
        if artifacts.kf_predictions is not None:
            cols.append(f"kfpred_{name}")
    lines = [",".join(cols)]
    for k in range(dataset.t.shape[0]):
        cells = [FLOAT_FMT % dataset.t[k]]
        for ch in range(dataset.ny):
            cells.append((FLOAT_FMT % dataset.y[k, ch])
                         if dataset.y_mask[k, ch] else "")
            cells.append(FLOAT_FMT % artifacts.smoother_outputs[k, ch])
            cells.append(FLOAT_FMT % artifacts.free_sim_outputs[k, ch])
            if artifacts.kf_predictions is not None:
                cells.append(FLOAT_FMT % artifacts.kf_predictions[k, ch])
        lines.append(",".join(cells))
    (out_dir / "outputs.csv").write_text("\n".join(lines) + "\n")

    snames = model.state_names
    cols = ["time"]
    for name in snames:
        cols += [f"fd_{name}", f"drift_{name}", f"resid_{name}"]
    lines = [",".join(cols)]
    for k in range(artifacts.drift_residuals.shape[0]):
        cells = [FLOAT_FMT % dataset.t[k]]
        for ch in range(len(snames)):
            cells.append(FLOAT_FMT % artifacts.finite_differences[k, ch])
            cells.append(FLOAT_FMT % artifacts.drift_values[k, ch])
            cells.append(FLOAT_FMT % artifacts.drift_residuals[k, ch])
        lines.append(",".join(cells))
    (out_dir / "derivatives.csv").write_text("\n".join(lines) + "\n")

    (out_dir / "rms.json").write_text(json.dumps({
        "schema_version": SCHEMA_VERSION,
        "kf_status": artifacts.kf_status,
        "output_channels": ynames,
        "state_channels": snames,
        "rms": artifacts.rms,
    }, indent=1))


def read_artifact_csv(path):
    """Header-keyed columns of an artifact CSV (blank cells become nan)."""
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    header = [h.strip() for h in lines[0].split(",")]
    table = np.asarray([[_parse_cell(c) for c in ln.split(",")]
                        for ln in lines[1:]], dtype=float)
    return {name: table[:, idx] for idx, name in enumerate(header)}
