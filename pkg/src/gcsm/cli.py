"""Command-line front end: ``gcsm {fit,predict,spectrum,experiment}``.

Failures print a single line ``error <CODE>: <message>`` to standard error
and exit with status 2. ``experiment`` exits 1 when every cell failed.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import (
    DatasetIntegrityError, GcsmError, InvalidArgumentError, ModelIncompatibleError, UnknownKernelError,
)
from .experiments import (
    ALL_KERNELS, DATASETS, BenchmarkConfig, SyntheticConfig, _baseline_spec, format_table, load_dataset,
    run_suite, write_results,
)
from .gp import Dataset, load_model, predict, save_model
from .hyperopt import INIT_STRATEGIES, FitConfig, fit, init_hyperparams
from .kernels import SM
from .spectral import gmm_init, periodogram

logger = logging.getLogger("gcsm")


class DatasetIOError(GcsmError):
    code = "E_DATASET_IO"


@dataclass
class CliConfig:
    seed: int = 0
    Q: int = 10
    kernel: str = "GCSM"
    init: str = "spectral-gmm"
    max_iters: int = 1000
    delays: bool = True
    dataset: str = ""
    out: str = ""

    def validate(self) -> None:
        if self.kernel not in ALL_KERNELS:
            raise UnknownKernelError(f"unknown kernel {self.kernel!r}; expected one of {', '.join(ALL_KERNELS)}")
        if self.init not in INIT_STRATEGIES:
            raise InvalidArgumentError(f"unknown init strategy {self.init!r}")
        if self.Q < 1:
            raise InvalidArgumentError("--q must be a positive integer")
        if self.max_iters < 0:
            raise InvalidArgumentError("--max-iters must be nonnegative")


# ---------------------------------------------------------------------------
# data


def read_table(path) -> Dataset:
    """Read a CSV whose ``y`` column is the target and whose other columns are inputs."""
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            fields = reader.fieldnames or []
            rows = list(reader)
    except OSError as exc:
        raise DatasetIOError(f"cannot read {path}: {exc.strerror or exc}") from exc
    inputs = [f for f in fields if f != "y"]
    if "y" not in fields or not inputs or not rows:
        raise DatasetIOError(f"{path}: expected a header with input columns and 'y' plus at least one row")
    try:
        x = np.array([[float(r[f]) for f in inputs] for r in rows])
        y = np.array([float(r["y"]) for r in rows])
    except (TypeError, ValueError) as exc:
        raise DatasetIOError(f"{path}: non-numeric entry ({exc})") from exc
    return Dataset(x, y)


def read_inputs(path) -> np.ndarray:
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            fields = [f for f in (reader.fieldnames or []) if f != "y"]
            rows = list(reader)
        return np.array([[float(r[f]) for f in fields] for r in rows]).reshape(len(rows), len(fields))
    except OSError as exc:
        raise DatasetIOError(f"cannot read {path}: {exc.strerror or exc}") from exc
    except (TypeError, ValueError) as exc:
        raise InvalidArgumentError(f"{path}: non-numeric input ({exc})") from exc


def training_data(dataset: str) -> Dataset:
    """A named dataset gives its training split; a path gives every row."""
    if dataset in DATASETS:
        try:
            return load_dataset(None, dataset).train
        except OSError as exc:
            raise DatasetIOError(f"dataset {dataset!r} is not available: {exc.strerror or exc}") from exc
        except DatasetIntegrityError as exc:
            raise DatasetIOError(str(exc)) from exc
    return read_table(dataset)


def parse_range(start: str, stop: str, step: str) -> np.ndarray:
    try:
        a, b, h = float(start), float(stop), float(step)
    except ValueError as exc:
        raise InvalidArgumentError(f"malformed range: {exc}") from exc
    if not all(math.isfinite(v) for v in (a, b, h)) or h <= 0 or b < a:
        raise InvalidArgumentError(f"malformed range --from {start} --to {stop} --step {step}")
    n = int(math.floor((b - a) / h + 1e-9)) + 1
    return a + h * np.arange(n)


# ---------------------------------------------------------------------------
# commands


def _fit_config(args) -> FitConfig:
    doc = {}
    if args.config:
        doc = _read_json(args.config).get("fit", {})
    cfg = FitConfig.from_dict(doc)
    if args.max_iters is not None:
        cfg = replace(cfg, max_iters=args.max_iters)
    return cfg


def _read_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise DatasetIOError(f"cannot read {path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidArgumentError(f"{path}: invalid JSON ({exc})") from exc


def cmd_fit(args) -> int:
    cfg = CliConfig(seed=args.seed, Q=args.q, kernel=args.kernel, init=args.init,
                    max_iters=args.max_iters if args.max_iters is not None else 1000,
                    delays=args.delays == "on", dataset=args.dataset, out=args.out)
    cfg.validate()
    fit_cfg = _fit_config(args)
    raw = training_data(cfg.dataset)
    y_mean = float(raw.y.mean())
    data = Dataset(raw.x, raw.y - y_mean)
    noise0 = 0.05 * (float(np.var(data.y)) or 1.0)
    if cfg.kernel in ("SM", "GCSM"):
        initial = init_hyperparams(data, cfg.Q, cfg.init, seed=cfg.seed, kind=cfg.kernel,
                                   delays_enabled=cfg.delays, noise_var=noise0)
    else:
        initial = _baseline_spec(cfg.kernel, data)
    model = fit(initial, noise0, data, replace(fit_cfg, seed=cfg.seed))
    model.meta.update(y_mean=y_mean, train_checksum=raw.checksum(), kernel=cfg.kernel, Q=cfg.Q,
                      init=cfg.init, seed=cfg.seed)
    save_model(model, cfg.out)
    print(f"fit nlml={model.meta['nlml']:.6f} iters={model.meta['iters']} jitter={model.meta['jitter']:.3g}")
    return 0


def cmd_predict(args) -> int:
    try:
        model = load_model(args.model)
    except OSError as exc:
        raise DatasetIOError(f"cannot read model {args.model}: {exc.strerror or exc}") from exc
    if args.dataset:
        expected = model.meta.get("train_checksum")
        found = training_data(args.dataset).checksum()
        if expected != found:
            raise ModelIncompatibleError(f"model was not trained on {args.dataset!r}")
    if args.inputs and (args.start is not None or args.stop is not None):
        raise InvalidArgumentError("give either --inputs or --from/--to, not both")
    if args.inputs:
        xs = read_inputs(args.inputs)
    elif args.start is not None and args.stop is not None:
        xs = parse_range(args.start, args.stop, args.step)[:, None]
    else:
        raise InvalidArgumentError("prediction inputs required: --inputs FILE or --from A --to B")
    if xs.shape[1] != model.data.dim:
        raise ModelIncompatibleError(f"inputs have {xs.shape[1]} columns, model expects {model.data.dim}")
    mean, var = predict(model, xs)
    mean = mean + float(model.meta.get("y_mean", 0.0))
    fh = sys.stdout if args.out == "-" else open(args.out, "w", newline="")
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "mean", "var"] if xs.shape[1] == 1 else [f"x{i}" for i in range(xs.shape[1])] + ["mean", "var"])
        for x, m, v in zip(xs, mean, var):
            w.writerow([repr(float(c)) for c in x] + [repr(float(m)), repr(float(v))])
    finally:
        if fh is not sys.stdout:
            fh.close()
    return 0


def cmd_spectrum(args) -> int:
    if args.q < 1:
        raise InvalidArgumentError("--q must be a positive integer")
    data = training_data(args.dataset)
    if data.dim != 1:
        raise InvalidArgumentError("spectrum needs one-dimensional inputs")
    order = np.argsort(data.x[:, 0])
    y = data.y[order] - data.y.mean()
    spec = periodogram(data.x[order, 0], y)
    comps = gmm_init(spec, args.q, float(np.var(y)) or 1.0, rng_seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    spec.to_csv(out / "spectrum.csv")
    with open(out / "init.json", "w") as fh:
        json.dump(SM(tuple(comps)).to_dict(), fh, indent=1, sort_keys=True)
    peak = spec.freqs[int(np.argmax(spec.density))]
    print(f"spectrum bins={spec.freqs.size} peak={peak:.6g} q={args.q}")
    return 0


def cmd_experiment(args) -> int:
    doc = _read_json(args.config) if args.config else {}
    config = BenchmarkConfig.from_dict(doc)
    synthetic = SyntheticConfig(**doc["synthetic"]) if "synthetic" in doc else None
    kernels = tuple(args.kernels.split(",")) if args.kernels else ALL_KERNELS
    for k in kernels:
        if k not in ALL_KERNELS:
            raise UnknownKernelError(f"unknown kernel {k!r}")
    if args.max_iters is not None:
        config.fit = replace(config.fit, max_iters=args.max_iters)
    result = run_suite(args.suite, kernels, args.seed, config, synthetic)
    write_results(result, args.out, timings=config.timings)
    print(format_table(result))
    for c in result.cells:
        if c.error:
            print(f"failed {c.task}/{c.kernel}: {c.error}", file=sys.stderr)
    return 0 if any(c.error is None for c in result.cells) else 1


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gcsm", description="GP regression with spectral mixture kernels")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a kernel to a dataset and save the model")
    p.add_argument("--dataset", required=True, help="'airline', 'riverflow' or a CSV path")
    p.add_argument("--kernel", default="GCSM")
    p.add_argument("--q", type=int, default=10)
    p.add_argument("--init", default="spectral-gmm")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iters", type=int, default=None)
    p.add_argument("--delays", choices=("on", "off"), default="on")
    p.add_argument("--config", help="JSON file with a 'fit' section")
    p.add_argument("--out", default="model.json")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="predictive mean and variance from a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", help="check that the model was trained on this dataset")
    p.add_argument("--inputs", help="CSV of input columns")
    p.add_argument("--from", dest="start")
    p.add_argument("--to", dest="stop")
    p.add_argument("--step", default="1")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("spectrum", help="periodogram and Gaussian-mixture initialization")
    p.add_argument("--dataset", required=True)
    p.add_argument("--q", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("experiment", help="run a benchmark suite")
    p.add_argument("--suite", choices=("synthetic", "airline", "riverflow", "all"), default="all")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--kernels", help="comma-separated subset of " + ",".join(ALL_KERNELS))
    p.add_argument("--max-iters", type=int, default=None)
    p.add_argument("--config", help="JSON with 'fit', 'bo', 'synthetic' and benchmark keys")
    p.add_argument("--out", default="results")
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except GcsmError as exc:
        print(f"error {exc.code}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error {DatasetIOError.code}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
