"""Hyperparameter training and initialization.

``fit`` minimizes the NLML with an Adam-style optimizer on the packed
(unconstrained) parameter vector. ``bayes_opt`` is a small Bayesian
optimizer with a Matérn 5/2 surrogate and expected improvement, used by
``init_hyperparams`` to pick frequency means and variances.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Callable, Sequence

import numpy as np
from scipy import optimize as sopt
from scipy.stats import norm, qmc

from .errors import InvalidArgumentError, NumericalFailureError
from .gp import Dataset, TrainedModel, nlml, nlml_and_grad, predict
from .kernels import GCSM, SM, GcsmComponent, Kernel, Matern52, SmComponent
from .params import ParamPacking
from .spectral import gmm_init, periodogram

logger = logging.getLogger(__name__)

INIT_STRATEGIES = ("spectral-gmm", "bayes-opt", "random")


@dataclass
class FitConfig:
    max_iters: int = 1000
    lr: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    grad_tol: float = 1e-5
    rel_tol: float = 1e-9
    fix_noise: bool = False
    fixed: tuple = ()
    seed: int = 0
    max_retries: int = 3

    @classmethod
    def from_dict(cls, doc: dict) -> "FitConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in doc.items() if k in names})


@dataclass
class BoConfig:
    budget: int | None = None
    n_init: int | None = None
    n_candidates: int = 2048
    n_local: int = 256
    inner_steps: int = 50
    inner_lr: float = 0.05

    @classmethod
    def from_dict(cls, doc: dict) -> "BoConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in doc.items() if k in names})


def load_config(path) -> tuple[FitConfig, BoConfig]:
    """Read ``{"fit": {...}, "bo": {...}}`` from a JSON file."""
    with open(path) as fh:
        doc = json.load(fh)
    return FitConfig.from_dict(doc.get("fit", {})), BoConfig.from_dict(doc.get("bo", {}))


def _input_range(data: Dataset) -> float:
    span = float(np.max(np.ptp(data.x, axis=0)))
    return span if span > 0 else 1.0


def _nyquist(data: Dataset) -> float:
    """Nyquist frequency from the median input spacing (first dimension)."""
    xs = np.unique(data.x[:, 0])
    if xs.size < 2:
        return 0.5
    return 0.5 / float(np.median(np.diff(xs)))


def _step_scales(packing: ParamPacking, data: Dataset) -> np.ndarray:
    """Per-coordinate step multipliers in natural units of each parameter kind."""
    span = _input_range(data)
    table = {"mu": 1.0 / span, "theta": 0.05 * span}
    return np.array([table.get(k, 1.0) for k in packing.kinds])


def fit(initial: Kernel, noise_var: float, data: Dataset, config: FitConfig | None = None) -> TrainedModel:
    """Minimize the NLML starting from ``initial``.

    The returned model is the best iterate seen, so its NLML never exceeds
    the NLML at the start.
    """
    config = config or FitConfig()
    fixed = set(config.fixed)
    if config.fix_noise:
        fixed.add("noise_var")
    packing = ParamPacking(initial, noise_var, nyquist=_nyquist(data), fixed=fixed)
    scales = _step_scales(packing, data)
    rng = np.random.default_rng(config.seed)

    def objective(vec):
        spec, nv = packing.unpack(vec)
        return nlml_and_grad(spec, nv, data, packing)

    x = packing.project(packing.pack())
    f0, g = objective(x)
    best_x, best_f = x.copy(), f0
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    prev = f0
    iters = 0
    retries = 0
    t = 0
    while iters < config.max_iters:
        if np.linalg.norm(g) < config.grad_tol:
            break
        t += 1
        m = config.beta1 * m + (1 - config.beta1) * g
        v = config.beta2 * v + (1 - config.beta2) * g**2
        mhat = m / (1 - config.beta1**t)
        vhat = v / (1 - config.beta2**t)
        x_new = packing.project(x - config.lr * scales * mhat / (np.sqrt(vhat) + 1e-8))
        iters += 1
        try:
            f, g_new = objective(x_new)
            if not (math.isfinite(f) and np.all(np.isfinite(g_new))):
                raise NumericalFailureError("non-finite NLML or gradient")
        except NumericalFailureError:
            if retries >= config.max_retries:
                raise
            retries += 1
            logger.info("numerical failure at iteration %d, restarting from perturbed best", iters)
            x = packing.project(best_x + rng.normal(0.0, 0.01, best_x.shape) * scales)
            f, g = objective(x)
            m[:] = 0.0
            v[:] = 0.0
            t = 0
            prev = f
            continue
        x, g = x_new, g_new
        if f < best_f:
            best_f, best_x = f, x.copy()
        if abs(prev - f) <= config.rel_tol * max(abs(prev), 1e-300):
            break
        prev = f
    spec, nv = packing.unpack(best_x)
    model = TrainedModel.condition(
        spec, nv, data,
        meta={"nlml": best_f, "initial_nlml": f0, "iters": iters},
    )
    model.meta["jitter"] = model.jitter
    return model


# ---------------------------------------------------------------------------
# Bayesian optimization


def expected_improvement(pred_mean, pred_sd, f_best):
    """Expected improvement below ``f_best`` for a minimization problem."""
    mu = np.asarray(pred_mean, dtype=float)
    sd = np.asarray(pred_sd, dtype=float)
    if np.any(sd < 0):
        raise InvalidArgumentError("pred_sd must be nonnegative")
    diff = f_best - mu
    with np.errstate(divide="ignore", invalid="ignore"):
        gamma = np.where(sd > 0, diff / np.where(sd > 0, sd, 1.0), 0.0)
        ei = np.where(sd > 0, sd * (gamma * norm.cdf(gamma) + norm.pdf(gamma)), np.maximum(diff, 0.0))
    ei = np.maximum(ei, 0.0)
    return float(ei) if ei.ndim == 0 else ei


@dataclass
class BoTrace:
    points: list = field(default_factory=list)
    values: list = field(default_factory=list)
    incumbents: list = field(default_factory=list)
    surrogate: dict = field(default_factory=dict)
    # per acquisition step: (EI at the chosen point, largest EI at an evaluated point)
    acquisitions: list = field(default_factory=list)

    @property
    def best_index(self) -> int:
        return int(np.argmin(self.values))

    @property
    def incumbent(self) -> tuple[np.ndarray, float]:
        i = self.best_index
        return self.points[i], self.values[i]

    def to_csv(self, path) -> None:
        dim = len(self.points[0]) if self.points else 0
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iter"] + [f"x{k}" for k in range(dim)] + ["value", "incumbent"])
            for i, (p, v, b) in enumerate(zip(self.points, self.values, self.incumbents)):
                w.writerow([i] + [repr(float(c)) for c in p] + [repr(float(v)), repr(float(b))])


def _fit_surrogate(Z: np.ndarray, y: np.ndarray, start: np.ndarray | None):
    """Matérn 5/2 GP with a single length-scale on unit-box inputs."""
    data = Dataset(Z, y)

    def obj(p):
        spec = Matern52(math.exp(p[0]), math.exp(p[1]))
        packing = ParamPacking(spec, math.exp(p[2]))
        try:
            return nlml_and_grad(spec, math.exp(p[2]), data, packing)
        except NumericalFailureError:
            return 1e10, np.zeros(3)

    x0 = np.array([0.0, math.log(0.3), math.log(1e-2)]) if start is None else start
    bounds = [(math.log(1e-2), math.log(1e2)), (math.log(1e-3), math.log(1e1)), (math.log(1e-8), math.log(1.0))]
    res = sopt.minimize(obj, x0, jac=True, method="L-BFGS-B", bounds=bounds)
    p = res.x
    model = TrainedModel.condition(Matern52(math.exp(p[0]), math.exp(p[1])), math.exp(p[2]), data)
    return model, p


def bayes_opt(objective: Callable[[np.ndarray], float], bounds: Sequence, budget: int, seed=None,
              n_init: int | None = None, n_candidates: int = 2048, n_local: int = 256) -> BoTrace:
    """Minimize ``objective`` over a box with EI-guided sampling.

    The first ``n_init`` points (default ``5 * dim``) come from a Latin
    hypercube; afterwards each point maximizes EI over the evaluated
    inputs, seeded uniform candidates and perturbations of the incumbent. Failed evaluations are
    recorded as ``+inf``.
    """
    bounds = np.asarray(bounds, dtype=float)
    dim = bounds.shape[0]
    lo, hi = bounds[:, 0], bounds[:, 1]
    n_init = 5 * dim if n_init is None else n_init
    if budget < n_init:
        raise InvalidArgumentError(f"budget {budget} is smaller than the initial design {n_init}")
    rng = np.random.default_rng(seed)
    trace = BoTrace()
    design = qmc.LatinHypercube(d=dim, seed=rng).random(n_init)
    Z: list[np.ndarray] = []

    def evaluate(z):
        x = lo + z * (hi - lo)
        try:
            val = float(objective(x))
            if math.isnan(val):
                val = math.inf
        except Exception as exc:  # noqa: BLE001 - any objective failure is recorded
            logger.info("objective failed at %s: %s", x, exc)
            val = math.inf
        Z.append(z)
        trace.points.append(x)
        trace.values.append(val)
        best = min(trace.values)
        trace.incumbents.append(best)

    for z in design:
        evaluate(z)
    hyp = None
    while len(trace.values) < budget:
        vals = np.array(trace.values)
        finite = np.isfinite(vals)
        if not finite.any():
            evaluate(rng.random(dim))
            continue
        filled = np.where(finite, vals, vals[finite].max())
        ymean, ysd = filled.mean(), filled.std()
        ysd = ysd if ysd > 0 else 1.0
        ys = (filled - ymean) / ysd
        model, hyp = _fit_surrogate(np.array(Z), ys, hyp)
        inc = np.array(Z)[int(np.argmin(filled))]
        n_seen = len(Z)
        cands = np.vstack([
            np.array(Z),
            rng.random((n_candidates, dim)),
            np.clip(inc + rng.normal(0.0, 0.05, (n_local, dim)), 0.0, 1.0),
        ])
        mean, var = predict(model, cands)
        ei = expected_improvement(mean, np.sqrt(var), ys.min())
        trace.surrogate = {"theta_f": model.spec.theta_f, "theta_l": model.spec.theta_l,
                           "noise_var": model.noise_var}
        # evaluated inputs stay in the pool, so a revisit happens only when the surrogate ranks it best
        pick = int(np.argmax(ei))
        trace.acquisitions.append((float(ei[pick]), float(ei[:n_seen].max())))
        evaluate(cands[pick].copy())
    return trace


# ---------------------------------------------------------------------------
# initialization


def _delays(rng, Q: int, P: int, span: float):
    theta = rng.uniform(-0.1 * span, 0.1 * span, (Q, P))
    phi = rng.uniform(0.0, 2 * math.pi, (Q, P))
    return theta, phi


def _assemble(kind: str, w, mu, s2, rng, span, delays_enabled=True) -> Kernel:
    Q = len(w)
    mu = np.asarray(mu, dtype=float).reshape(Q, -1)
    s2 = np.asarray(s2, dtype=float).reshape(Q, -1)
    if kind == "SM":
        return SM(tuple(SmComponent(w[q], mu[q], s2[q]) for q in range(Q)))
    theta, phi = _delays(rng, Q, mu.shape[1], span)
    if not delays_enabled:
        theta = np.zeros_like(theta)
        phi = np.zeros_like(phi)
    return GCSM(tuple(GcsmComponent(w[q], mu[q], s2[q], theta[q], phi[q]) for q in range(Q)), delays_enabled)


def frequency_box(data: Dataset) -> tuple[tuple[float, float], tuple[float, float]]:
    """Search ranges for ``mu`` and ``log sigma2``."""
    nyq = _nyquist(data)
    span = _input_range(data)
    return (0.0, nyq), (math.log(1e-2 / span**2), math.log(nyq**2))


def init_hyperparams(data: Dataset, Q: int, strategy: str = "spectral-gmm", seed=None,
                     kind: str = "GCSM", delays_enabled: bool = True,
                     bo_config: BoConfig | None = None, noise_var: float | None = None) -> Kernel:
    """Initial SM or GCSM hyperparameters from the data.

    ``bayes-opt`` searches the (mu, sigma2) box with an SM objective (NLML
    after a short inner fit, weights fixed at var(y)/Q); the resulting
    frequencies are shared by both kernel kinds. GCSM delays are always
    drawn at random.
    """
    if Q < 1:
        raise InvalidArgumentError("Q must be at least 1")
    if strategy not in INIT_STRATEGIES:
        raise InvalidArgumentError(f"unknown init strategy {strategy!r}")
    if kind not in ("SM", "GCSM"):
        raise InvalidArgumentError("init_hyperparams builds SM or GCSM kernels")
    seq = np.random.SeedSequence(seed)
    bo_seed, delay_seed, draw_seed = (int(s.generate_state(1)[0]) for s in seq.spawn(3))
    span = _input_range(data)
    var_y = float(np.var(data.y)) or 1.0
    P = data.dim
    (mu_lo, mu_hi), (ls_lo, ls_hi) = frequency_box(data)

    if strategy == "spectral-gmm":
        if P != 1:
            raise InvalidArgumentError("spectral initialization is implemented for P = 1")
        order = np.argsort(data.x[:, 0])
        comps = gmm_init(periodogram(data.x[order, 0], data.y[order]), Q, var_y, rng_seed=bo_seed)
        w = [c.w for c in comps]
        mu = [c.mu for c in comps]
        s2 = [c.sigma2 for c in comps]
    elif strategy == "random":
        rng = np.random.default_rng(draw_seed)
        w = np.full(Q, var_y / Q)
        mu = rng.uniform(mu_lo, mu_hi, (Q, P))
        s2 = np.exp(rng.uniform(ls_lo, ls_hi, (Q, P)))
    else:
        bo_config = bo_config or BoConfig()
        trace = bo_search(data, Q, bo_config, bo_seed, noise_var)
        x, _ = trace.incumbent
        w = np.full(Q, var_y / Q)
        mu = x[: Q * P].reshape(Q, P)
        s2 = np.exp(x[Q * P :].reshape(Q, P))
    return _assemble(kind, list(w), mu, s2, np.random.default_rng(delay_seed), span, delays_enabled)


def bo_search(data: Dataset, Q: int, config: BoConfig, seed, noise_var: float | None = None) -> BoTrace:
    """Run :func:`bayes_opt` over SM frequency means and log variances."""
    P = data.dim
    var_y = float(np.var(data.y)) or 1.0
    noise = 0.05 * var_y if noise_var is None else noise_var
    (mu_lo, mu_hi), (ls_lo, ls_hi) = frequency_box(data)
    bounds = [(mu_lo, mu_hi)] * (Q * P) + [(ls_lo, ls_hi)] * (Q * P)
    inner = FitConfig(max_iters=config.inner_steps, lr=config.inner_lr, fixed=("w",))

    def objective(x):
        mu = x[: Q * P].reshape(Q, P)
        s2 = np.exp(x[Q * P :].reshape(Q, P))
        spec = SM(tuple(SmComponent(var_y / Q, mu[q], s2[q]) for q in range(Q)))
        if config.inner_steps <= 0:
            return nlml(spec, noise, data)
        return fit(spec, noise, data, inner).meta["nlml"]

    dim = len(bounds)
    n_init = 5 * dim if config.n_init is None else config.n_init
    budget = n_init + 10 if config.budget is None else config.budget
    return bayes_opt(objective, bounds, budget, seed, n_init=n_init,
                     n_candidates=config.n_candidates, n_local=config.n_local)
