"""Forecasting benchmarks: synthetic tasks, bundled datasets, MAE tables."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import DatasetIntegrityError, InvalidArgumentError
from .gp import Dataset, TrainedModel, predict, sample_prior
from .hyperopt import BoConfig, FitConfig, _input_range, fit, init_hyperparams
from .kernels import (
    GCSM, SE, SM, GcsmComponent, Kernel, Matern52, Periodic, SmComponent,
    gcsm_cross_terms_at_zero, gram,
)
from .spectral import periodogram

logger = logging.getLogger(__name__)

SYNTHETIC_TASKS = ("arti1-normal", "arti2-integral", "arti3-derivative", "arti4-delayed")
REAL_TASKS = ("airline", "riverflow")
ALL_KERNELS = ("SE", "Periodic", "Matern52", "SM", "GCSM")


@dataclass(frozen=True)
class DatasetInfo:
    rows: int
    n_train: int
    sha256: str | None
    filename: str


DATASETS = {
    "airline": DatasetInfo(144, 96, "61f6c854af8a2f56eac6d147714c9e361645e52e5ccdf8ef5210a92ee1dbc5e9", "airline.csv"),
    "riverflow": DatasetInfo(348, 174, None, "riverflow.csv"),
}


@dataclass(frozen=True)
class Task:
    name: str
    train: Dataset
    test: Dataset
    provenance: str = ""


@dataclass(frozen=True)
class SyntheticConfig:
    """Generator of the synthetic tasks (declared defaults, version 1)."""

    version: int = 1
    n: int = 500
    lo: float = -10.0
    hi: float = 10.0
    w: tuple = (1.0, 0.5, 0.25)
    mu: tuple = (0.15, 0.5, 1.0)
    sigma2: tuple = (0.02, 0.02, 0.05)
    delays: tuple = (-1.0, 0.0, 1.5)


def mae(y, yhat) -> float:
    y = np.asarray(y, dtype=float).ravel()
    yhat = np.asarray(yhat, dtype=float).ravel()
    if y.shape != yhat.shape or y.size == 0:
        raise InvalidArgumentError("mae needs two nonempty vectors of equal length")
    return float(np.mean(np.abs(y - yhat)))


def _split(name, x, y, train_mask, provenance) -> Task:
    return Task(name, Dataset(x[train_mask], y[train_mask]), Dataset(x[~train_mask], y[~train_mask]), provenance)


def gen_synthetic(seed=0, config: SyntheticConfig | None = None) -> dict[str, Task]:
    """Four synthetic forecasting tasks built from one SM-GP draw.

    Each SM component is sampled as an independent GP jointly at ``x`` and
    at ``x + t_q``; the normal signal is the sum at ``x``, the delayed
    signal the sum at the shifted inputs. Integral and derivative use the
    cumulative trapezoid rule and central differences.
    """
    cfg = config or SyntheticConfig()
    x = np.linspace(cfg.lo, cfg.hi, cfg.n)
    seeds = np.random.SeedSequence(seed).spawn(len(cfg.w) + 1)
    normal = np.zeros(cfg.n)
    delayed = np.zeros(cfg.n)
    for q, (w, mu, s2, t) in enumerate(zip(cfg.w, cfg.mu, cfg.sigma2, cfg.delays)):
        comp = SM((SmComponent(w, [mu], [s2]),))
        xx = np.concatenate([x, x + t])
        f = sample_prior(comp, xx, 0.0, seed=seeds[q])
        normal += f[: cfg.n]
        delayed += f[cfg.n :]
    integral = cumulative_trapezoid(normal, x, initial=0.0)
    derivative = np.gradient(normal, x)
    rng = np.random.default_rng(seeds[-1])
    half = np.zeros(cfg.n, dtype=bool)
    half[rng.permutation(cfg.n)[: cfg.n // 2]] = True
    return {
        "arti1-normal": _split("arti1-normal", x, normal, half, "random half for training"),
        "arti2-integral": _split("arti2-integral", x, integral, x <= 0, "train x in [-10, 0], test (0, 10]"),
        "arti3-derivative": _split("arti3-derivative", x, derivative, x >= 0, "train x in [0, 10], test [-10, 0)"),
        "arti4-delayed": _split("arti4-delayed", x, delayed, (x < -5) | (x > 5), "test x in [-5, 5], train elsewhere"),
    }


def bundled_path(name: str) -> Path:
    return Path(str(resources.files("gcsm") / "data" / DATASETS[name].filename))


def dataset_path(name: str) -> Path:
    """Location of a named dataset: ``$GCSM_<NAME>_CSV`` if set, else the bundled copy."""
    override = os.environ.get(f"GCSM_{name.upper()}_CSV")
    return Path(override) if override else bundled_path(name)


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def load_dataset(path, name: str) -> Task:
    """Load a ``t,y`` CSV and split it chronologically.

    airline: first 96 months train, next 48 test. riverflow: first 174
    train, last 174 test. Inputs become the month index.
    """
    if name not in DATASETS:
        raise InvalidArgumentError(f"unknown dataset {name!r}")
    info = DATASETS[name]
    path = dataset_path(name) if path is None else Path(path)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"t", "y"} <= set(reader.fieldnames):
            raise DatasetIntegrityError(name, info.rows, 0)
        rows = [(float(r["t"]), float(r["y"])) for r in reader]
    if len(rows) != info.rows:
        raise DatasetIntegrityError(name, info.rows, len(rows))
    if path == bundled_path(name) and info.sha256 and _sha256(path) != info.sha256:
        raise DatasetIntegrityError(name, info.rows, len(rows))
    y = np.array([r[1] for r in rows])
    x = np.arange(1, info.rows + 1, dtype=float)
    mask = np.arange(info.rows) < info.n_train
    return _split(name, x, y, mask, f"first {info.n_train} rows train, remaining {info.rows - info.n_train} test")


def synthetic_stand_in(name: str, seed=0) -> Task:
    """A seeded synthetic series with the row counts of a real dataset.

    For exercising the pipeline when the real data file is unavailable;
    never a substitute for benchmark numbers.
    """
    info = DATASETS[name]
    x = np.arange(1, info.rows + 1, dtype=float)
    spec = SM((SmComponent(1.0, [1 / 12], [1e-5]), SmComponent(0.3, [0.0], [1e-4])))
    y = 10 + 3 * sample_prior(spec, x, 0.05, seed=seed)
    mask = np.arange(info.rows) < info.n_train
    return _split(name, x, y, mask, "synthetic stand-in")


# ---------------------------------------------------------------------------
# benchmark


@dataclass
class BenchmarkConfig:
    fit: FitConfig = field(default_factory=FitConfig)
    bo: BoConfig = field(default_factory=BoConfig)
    q_synthetic: int = 3
    q_real: int = 10
    sm_restarts: int = 10
    timings: bool = False

    @classmethod
    def from_dict(cls, doc: dict) -> "BenchmarkConfig":
        cfg = cls()
        if "fit" in doc:
            cfg.fit = FitConfig.from_dict(doc["fit"])
        if "bo" in doc:
            cfg.bo = BoConfig.from_dict(doc["bo"])
        for k in ("q_synthetic", "q_real", "sm_restarts", "timings"):
            if k in doc:
                setattr(cfg, k, doc[k])
        return cfg


@dataclass
class CellResult:
    task: str
    kernel: str
    mae: float = math.nan
    nlml: float = math.nan
    seconds: float = math.nan
    mean: list = field(default_factory=list)
    var: list = field(default_factory=list)
    spec: dict = field(default_factory=dict)
    noise_var: float = math.nan
    error: str | None = None


@dataclass
class ExperimentResult:
    cells: list = field(default_factory=list)
    grams: dict = field(default_factory=dict)
    cross_terms: dict = field(default_factory=dict)

    def cell(self, task: str, kernel: str) -> CellResult:
        for c in self.cells:
            if c.task == task and c.kernel == kernel:
                return c
        raise KeyError((task, kernel))

    def table(self) -> dict:
        return {(c.task, c.kernel): c.mae for c in self.cells}


def _seed(master, *labels) -> int:
    words = [int(master) & 0xFFFFFFFF] + [zlib.crc32(str(l).encode()) for l in labels]
    return int(np.random.SeedSequence(words).generate_state(1)[0])


def default_strategy(task_name: str) -> str:
    return "spectral-gmm" if task_name == "airline" else "bayes-opt"


def _baseline_spec(kind: str, data: Dataset) -> Kernel:
    var_y = float(np.var(data.y)) or 1.0
    span = _input_range(data)
    if kind == "SE":
        return SE(var_y, 0.1 * span)
    if kind == "Matern52":
        return Matern52(var_y, 0.1 * span)
    order = np.argsort(data.x[:, 0])
    try:
        spec = periodogram(data.x[order, 0], data.y[order])
        period = 1.0 / spec.freqs[int(np.argmax(spec.density))]
    except InvalidArgumentError:
        period = 0.25 * span
    return Periodic(var_y, period, 1.0)


def _resample_components(spec: SM, rng) -> SM:
    """Perturb frequency means within their fitted spread, keep the rest."""
    comps = []
    for c in spec.components:
        mu = np.abs(np.asarray(c.mu) + rng.normal(0.0, 1.0, len(c.mu)) * np.sqrt(c.sigma2))
        comps.append(SmComponent(c.w, mu, c.sigma2))
    return SM(tuple(comps))


class _TaskRunner:
    def __init__(self, task: Task, kernels, strategy: str, seed: int, config: BenchmarkConfig):
        self.task = task
        self.kernels = kernels
        self.strategy = default_strategy(task.name) if strategy == "auto" else strategy
        self.seed = seed
        self.config = config
        self.y_mean = float(task.train.y.mean())
        self.data = Dataset(task.train.x, task.train.y - self.y_mean)
        self.noise0 = 0.05 * (float(np.var(self.data.y)) or 1.0)
        self.Q = self.config.q_real if task.name in REAL_TASKS else self.config.q_synthetic
        self.models = {}

    def fit_config(self, kernel: str) -> FitConfig:
        return replace(self.config.fit, seed=_seed(self.seed, self.task.name, kernel, "fit"))

    def shared_init(self) -> SM:
        if not hasattr(self, "_init"):
            self._init = init_hyperparams(
                self.data, self.Q, self.strategy, seed=_seed(self.seed, self.task.name, "init"),
                kind="SM", bo_config=self.config.bo, noise_var=self.noise0,
            )
        return self._init

    def train(self, kernel: str):
        if kernel in ("SE", "Periodic", "Matern52"):
            return fit(_baseline_spec(kernel, self.data), self.noise0, self.data, self.fit_config(kernel))
        if kernel == "SM":
            init = self.shared_init()
            restarts = self.config.sm_restarts if self.task.name == "airline" else 1
            rng = np.random.default_rng(_seed(self.seed, self.task.name, "restarts"))
            best = None
            for r in range(restarts):
                start = init if r == 0 else _resample_components(init, rng)
                cfg = replace(self.fit_config(kernel), seed=_seed(self.seed, self.task.name, kernel, r))
                model = fit(start, self.noise0, self.data, cfg)
                if best is None or model.meta["nlml"] < best.meta["nlml"]:
                    best = model
            return best
        if kernel == "GCSM":
            if self.task.name == "airline":
                sm = self.models.get("SM") or self.train("SM")
                self.models["SM"] = sm
                # zero-delay GCSM reuses the SM optimum as-is so the two Gram matrices are comparable
                spec = GCSM(tuple(GcsmComponent(c.w, c.mu, c.sigma2) for c in sm.spec.components), False)
                model = TrainedModel.condition(spec, sm.noise_var, self.data)
                model.meta.update(nlml=model.nlml(), initial_nlml=model.nlml(), iters=0, jitter=model.jitter)
                return model
            init = self.shared_init()
            rng = np.random.default_rng(_seed(self.seed, self.task.name, "delays"))
            span = _input_range(self.data)
            P = self.data.dim
            comps = tuple(
                GcsmComponent(c.w, c.mu, c.sigma2,
                              rng.uniform(-0.1 * span, 0.1 * span, P), rng.uniform(0, 2 * math.pi, P))
                for c in init.components
            )
            return fit(GCSM(comps, True), self.noise0, self.data, self.fit_config(kernel))
        raise InvalidArgumentError(f"unknown kernel {kernel!r}")

    def run(self) -> ExperimentResult:
        out = ExperimentResult()
        for kernel in self.kernels:
            cell = CellResult(self.task.name, kernel)
            t0 = time.perf_counter()
            try:
                model = self.models.get(kernel) or self.train(kernel)
                self.models[kernel] = model
                mean, var = predict(model, self.task.test.x)
                mean = mean + self.y_mean
                cell.mae = mae(self.task.test.y, mean)
                cell.nlml = float(model.meta["nlml"])
                cell.mean = mean.tolist()
                cell.var = var.tolist()
                cell.spec = model.spec.to_dict()
                cell.noise_var = model.noise_var
            except Exception as exc:  # noqa: BLE001 - a failed cell must not stop the sweep
                logger.warning("cell %s/%s failed: %s", self.task.name, kernel, exc)
                cell.error = f"{type(exc).__name__}: {exc}"
            cell.seconds = time.perf_counter() - t0
            out.cells.append(cell)
        if self.task.name in REAL_TASKS and {"SM", "GCSM"} <= self.models.keys():
            X = self.data.x
            k_sm = gram(self.models["SM"].spec, X)
            k_gcsm = gram(self.models["GCSM"].spec, X)
            out.grams[self.task.name] = {"SM": k_sm, "GCSM": k_gcsm, "absdiff": np.abs(k_gcsm - k_sm)}
        if "GCSM" in self.models:
            spec = self.models["GCSM"].spec
            out.cross_terms[self.task.name] = gcsm_cross_terms_at_zero(spec.components, spec.delays_enabled)
        return out


def _run_task(args) -> ExperimentResult:
    return _TaskRunner(*args).run()


def run_benchmark(tasks, kernels=ALL_KERNELS, init_strategy: str = "auto", seed: int = 0,
                  config: BenchmarkConfig | None = None) -> ExperimentResult:
    """Train every kernel on every task and score test MAE.

    ``init_strategy="auto"`` follows the per-task protocol: spectral-GMM
    initialization with SM restarts for airline, whose optimum is reused
    unchanged by a zero-delay GCSM; Bayesian optimization elsewhere.
    """
    config = config or BenchmarkConfig()
    tasks = list(tasks.values()) if isinstance(tasks, dict) else list(tasks)
    jobs = [(t, tuple(kernels), init_strategy, seed, config) for t in tasks]
    threads = int(os.environ.get("GCSM_THREADS", "1") or 1)
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(threads, len(jobs))) as pool:
            parts = list(pool.map(_run_task, jobs))
    else:
        parts = [_run_task(j) for j in jobs]
    result = ExperimentResult()
    for p in parts:
        result.cells += p.cells
        result.grams.update(p.grams)
        result.cross_terms.update(p.cross_terms)
    return result


SUITES = {"synthetic": SYNTHETIC_TASKS, "airline": ("airline",), "riverflow": ("riverflow",),
          "all": SYNTHETIC_TASKS + REAL_TASKS}


def run_suite(suite: str, kernels=ALL_KERNELS, seed: int = 0, config: BenchmarkConfig | None = None,
              synthetic: SyntheticConfig | None = None) -> ExperimentResult:
    """Run a named suite. A dataset that cannot be loaded yields failed cells."""
    if suite not in SUITES:
        raise InvalidArgumentError(f"unknown suite {suite!r}")
    names = SUITES[suite]
    tasks, failed = {}, {}
    if any(n in SYNTHETIC_TASKS for n in names):
        tasks.update(gen_synthetic(seed, synthetic))
    for name in names:
        if name in REAL_TASKS:
            try:
                tasks[name] = load_dataset(None, name)
            except (OSError, DatasetIntegrityError, ValueError) as exc:
                logger.warning("dataset %s unavailable: %s", name, exc)
                failed[name] = f"{type(exc).__name__}: {exc}"
    result = run_benchmark({n: tasks[n] for n in names if n in tasks}, kernels, "auto", seed, config)
    ordered = ExperimentResult(grams=result.grams, cross_terms=result.cross_terms)
    for name in names:
        if name in failed:
            ordered.cells += [CellResult(name, k, error=failed[name]) for k in kernels]
        else:
            ordered.cells += [c for c in result.cells if c.task == name]
    return ordered


# ---------------------------------------------------------------------------
# output


def _fmt(v: float) -> str:
    return "nan" if v is None or not math.isfinite(v) else f"{v:.6f}"


def format_table(result: ExperimentResult) -> str:
    tasks = list(dict.fromkeys(c.task for c in result.cells))
    kernels = list(dict.fromkeys(c.kernel for c in result.cells))
    lines = ["kernel".ljust(10) + "".join(t.rjust(18) for t in tasks)]
    for k in kernels:
        row = k.ljust(10)
        for t in tasks:
            try:
                c = result.cell(t, k)
                row += ("FAILED" if c.error else f"{c.mae:.3f}").rjust(18)
            except KeyError:
                row += "-".rjust(18)
        lines.append(row)
    return "\n".join(lines)


def write_results(result: ExperimentResult, out_dir, timings: bool = False) -> None:
    """``results.csv``, ``results.json`` and one CSV per Gram matrix.

    The ``seconds`` column is left empty unless ``timings`` is set, so that
    repeated runs with one seed produce identical files.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "results.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["task", "kernel", "mae", "nlml", "seconds"])
        for c in result.cells:
            w.writerow([c.task, c.kernel, _fmt(c.mae), _fmt(c.nlml), f"{c.seconds:.3f}" if timings else ""])
    doc = {
        "cells": [
            {k: v for k, v in asdict(c).items() if timings or k != "seconds"}
            for c in result.cells
        ],
        "cross_terms_at_zero": {k: v.tolist() for k, v in result.cross_terms.items()},
        "grams": {t: {k: f"gram_{t}_{k}.csv" for k in g} for t, g in result.grams.items()},
    }
    with open(out / "results.json", "w") as fh:
        json.dump(_finite(doc), fh, indent=1, sort_keys=True, allow_nan=False)
    for task, mats in result.grams.items():
        for key, K in mats.items():
            np.savetxt(out / f"gram_{task}_{key}.csv", K, delimiter=",", fmt="%.10e")


def _finite(v):
    """Recursively replace NaN and infinities by ``None`` for strict JSON."""
    if isinstance(v, dict):
        return {k: _finite(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_finite(x) for x in v]
    if isinstance(v, np.generic):
        v = v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v
