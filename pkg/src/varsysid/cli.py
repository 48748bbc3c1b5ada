"""Command-line entry point: simulate | estimate | smooth | evaluate.

Exit codes: 0 success, 1 numerical/optimization failure, 2 configuration
error, 3 I/O error. Estimation that stops short of convergence still writes
its result file and reports exit code 1.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from . import runio
from .data import make_dataset
from .errors import ConfigError, DataFormatError, NumericalError
from .optimize import STATUS_CONVERGED, maximize, smooth
from .packing import make_layout
from .signals import build_signal
from .simulate import SimConfig, evaluate, synthetic_dataset

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_CONFIG = 2
EXIT_IO = 3


def build_parser():
    parser = argparse.ArgumentParser(
        prog="varsysid",
        description="Variational identification of stochastic state-space "
                    "models from sampled input/output records.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="JSON run config")
        p.add_argument("--output", help="output directory (overrides config)")

    p = sub.add_parser("simulate", help="generate a synthetic record")
    common(p)
    p.add_argument("--seed", type=int, help="override the simulation seed")

    p = sub.add_parser("estimate", help="maximize the bound over (theta, q)")
    common(p)
    p.add_argument("--init", default=None,
                   help="zeros | measurements | file:<result.json>")
    p.add_argument("--data", help="override the data path in the config")

    p = sub.add_parser("smooth", help="estimate q only, theta fixed")
    common(p)
    p.add_argument("--theta", required=True,
                   help="result file holding the fixed parameters")
    p.add_argument("--data", help="override the data path in the config")

    p = sub.add_parser("evaluate", help="recompute evaluation artifacts")
    common(p)
    p.add_argument("--theta", required=True, help="result file with theta")
    p.add_argument("--q", help="result file with the density "
                               "(defaults to the --theta file)")
    p.add_argument("--data", help="override the data path in the config")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        config = runio.load_config(args.config)
        if args.output:
            config.output_dir = Path(args.output)
        config.output_dir.mkdir(parents=True, exist_ok=True)
        handler = {
            "simulate": _run_simulate,
            "estimate": _run_estimate,
            "smooth": _run_smooth,
            "evaluate": _run_evaluate,
        }[args.command]
        return handler(config, args)
    except (ConfigError, DataFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def _data_path(config, args):
    override = getattr(args, "data", None)
    if override:
        return Path(override)
    path = config.data_block.get("path")
    if not path:
        raise ConfigError("no data path given (config data.path or --data)")
    path = Path(path)
    return path if path.is_absolute() else config.base_dir / path


def _load_record(config, args):
    path = _data_path(config, args)
    data = runio.load_dataset(path, config.data_block, model=config.model)
    return data, runio.sha256_of(path)


def _run_simulate(config, args):
    block = config.simulate_block
    if not block:
        raise ConfigError("config has no simulate block")
    model = config.model
    theta = runio.theta_from_named(model, block.get("theta_true", {}))
    period = float(block.get("sampling_period", 0.0))
    num_steps = int(block.get("num_steps", 0))
    if period <= 0 or num_steps < 1:
        raise ConfigError("simulate block needs sampling_period > 0 and "
                          "num_steps >= 1")
    seed = args.seed if args.seed is not None else int(block.get("seed", 0))
    t = period * np.arange(num_steps + 1)
    input_names = list(config.data_block.get("input_columns", []))
    specs = block.get("inputs", {})
    unknown = set(specs) - set(input_names)
    if unknown:
        raise ConfigError(f"input signals for unknown channels "
                          f"{sorted(unknown)}; data block defines "
                          f"{input_names}")
    u = np.zeros((num_steps + 1, model.dims.nu))
    for idx, name in enumerate(input_names):
        if name in specs:
            u[:, idx] = build_signal(specs[name], t)
    cfg = SimConfig(period=period, num_steps=num_steps,
                    x0=np.asarray(block.get("x0", np.zeros(model.dims.nx)),
                                  dtype=float),
                    seed=seed,
                    noise_scale=float(block.get("noise_scale", 1.0)))
    outputs = list(config.data_block.get("output_columns", []))
    if len(outputs) != model.dims.ny:
        outputs = [f"y{i + 1}" for i in range(model.dims.ny)]
    data, states = synthetic_dataset(model, theta, u, cfg,
                                     input_names=input_names,
                                     output_names=outputs)
    out_csv = config.output_dir / block.get("dataset_name", "dataset.csv")
    runio.write_dataset_csv(
        out_csv, data, time_name=config.data_block.get("time_column", "time"))
    states_data = make_dataset(period, u, states,
                               input_names=input_names,
                               output_names=model.state_names)
    runio.write_dataset_csv(
        config.output_dir / block.get("states_name", "states.csv"),
        states_data,
        time_name=config.data_block.get("time_column", "time"))
    print(f"wrote {out_csv}")
    return EXIT_OK


def _initial_vector(config, data):
    model = config.model
    layout = make_layout(config.optimizer.q_family, model.dims.ntheta,
                         model.dims.nx, data.num_steps + 1)
    mode = config.init_mode
    if mode == "zeros":
        return np.zeros(layout.size)
    if mode == "measurements":
        theta0 = np.zeros(model.dims.ntheta)
        mats = model.matrices(theta0)
        cmat = mats["c"]
        if np.linalg.matrix_rank(cmat) < model.dims.nx:
            raise ConfigError(
                "measurements init needs an output matrix of full state "
                "rank at theta = 0; fix the relevant C entries or use zeros")
        pinv = np.linalg.pinv(cmat)
        yfill = data.y.copy()
        yfill[~data.y_mask] = 0.0
        mu = (yfill - data.u @ mats["d"].T - mats["bias_output"]) @ pinv.T
        vec = np.zeros(layout.size)
        sl = layout._slices()[1]
        vec[sl] = mu.ravel()
        return vec
    if mode.startswith("file:"):
        doc = runio.read_result(mode[len("file:"):])
        theta = runio.theta_from_result(doc, model)
        q = runio.q_from_json(doc["q"])
        if q.mu.shape[0] != data.num_steps + 1:
            raise ConfigError("init file covers a different record length")
        return layout.pack(theta, q)
    raise ConfigError(f"unknown init mode {mode!r}")


def _write_run_outputs(config, kind, data, data_hash, theta, q, breakdown,
                       report):
    artifacts = evaluate(config.model, data, theta, q)
    runio.write_artifacts(config.output_dir, data, config.model, artifacts)
    runio.write_result(config.output_dir / "result.json", kind=kind,
                       config_raw=config.raw, data_hash=data_hash,
                       model=config.model, theta=theta, q=q,
                       breakdown=breakdown, report=report,
                       rms=artifacts.rms, kf_status=artifacts.kf_status)


def _run_estimate(config, args):
    data, data_hash = _load_record(config, args)
    if args.init:
        config.init_mode = args.init
    init = _initial_vector(config, data)
    result, report = maximize(config.model, data, config.prior, init=init,
                              options=config.optimizer)
    _write_run_outputs(config, "estimate", data, data_hash, result.theta,
                       result.q, result.breakdown, report)
    print(f"status: {report.status}; elbo: {report.final_elbo:.6f}; "
          f"iterations: {report.iterations}")
    return EXIT_OK if report.status == STATUS_CONVERGED else EXIT_NUMERICAL


def _run_smooth(config, args):
    data, data_hash = _load_record(config, args)
    doc = runio.read_result(args.theta)
    theta = runio.theta_from_result(doc, config.model)
    q, report = smooth(config.model, data, theta, config.prior,
                       options=config.optimizer)
    from .elbo import elbo_value
    breakdown = elbo_value(config.model, data, q, theta, config.prior)
    _write_run_outputs(config, "smooth", data, data_hash, theta, q,
                       breakdown, report)
    print(f"status: {report.status}; elbo: {report.final_elbo:.6f}; "
          f"iterations: {report.iterations}")
    return EXIT_OK if report.status == STATUS_CONVERGED else EXIT_NUMERICAL


def _run_evaluate(config, args):
    data, data_hash = _load_record(config, args)
    doc = runio.read_result(args.theta)
    theta = runio.theta_from_result(doc, config.model)
    qdoc = runio.read_result(args.q) if args.q else doc
    q = runio.q_from_json(qdoc["q"])
    if q.mu.shape != (data.num_steps + 1, config.model.dims.nx):
        raise ConfigError("stored density does not match the record length "
                          "or state dimension")
    artifacts = evaluate(config.model, data, theta, q)
    runio.write_artifacts(config.output_dir, data, config.model, artifacts)
    print(f"kf predictions: {artifacts.kf_status}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
