"""Stationary covariance functions and Gram-matrix assembly.

Five kernel families are provided: squared exponential, periodic, Matérn 5/2,
the spectral mixture (SM) kernel and the generalized convolution spectral
mixture (GCSM) kernel, whose Q components are coupled through all Q**2
cross-convolutions of their complex basis densities, each carrying a time
delay ``theta`` and a phase delay ``phi``.

All kernels are functions of the input difference ``tau = x - x'``. Kernel
objects are immutable; hyperparameter updates produce new objects through
:meth:`Kernel.with_raw`.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import ClassVar, Sequence

import numpy as np

from .errors import InvalidArgumentError, UnknownKernelError, UnsupportedDimensionError

__all__ = [
    "SmComponent",
    "GcsmComponent",
    "Kernel",
    "SE",
    "Periodic",
    "Matern52",
    "SM",
    "GCSM",
    "KERNEL_KINDS",
    "eval_se",
    "eval_periodic",
    "eval_matern52",
    "eval_sm",
    "eval_gcsm_cross",
    "eval_gcsm",
    "gcsm_diag_value",
    "gcsm_cross_terms_at_zero",
    "gram",
    "lag_index",
    "kernel_from_dict",
]

PI2 = math.pi**2


def _vec(values, name: str) -> tuple:
    arr = np.atleast_1d(np.asarray(values, dtype=float))
    if arr.ndim != 1:
        raise InvalidArgumentError(f"{name} must be a scalar or 1-D vector")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"{name} must be finite")
    return tuple(float(v) for v in arr)


def _positive(value, name: str) -> float:
    value = float(value)
    if not math.isfinite(value) or value <= 0:
        raise InvalidArgumentError(f"{name} must be a positive finite number, got {value}")
    return value


def _single_tau(tau) -> np.ndarray:
    """One input difference as a (1, P) array."""
    arr = np.atleast_1d(np.asarray(tau, dtype=float))
    if arr.ndim != 1:
        raise InvalidArgumentError("tau must be a scalar or a 1-D vector")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError("tau must be finite")
    return arr[None, :]


def _tau_batch(tau) -> np.ndarray:
    """Many input differences as an (M, P) array; 1-D input means P = 1."""
    arr = np.asarray(tau, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr[:, None]
    elif arr.ndim != 2:
        raise InvalidArgumentError("tau batch must have shape (M, P)")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError("tau must be finite")
    return arr


def _inputs(X) -> np.ndarray:
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise InvalidArgumentError("inputs must be a nonempty list of P-vectors")
    return arr


@functools.lru_cache(maxsize=16)
def _lag_index_cached(key: bytes, shape: tuple, key2: bytes | None, shape2: tuple | None):
    X = np.frombuffer(key, dtype=float).reshape(shape)
    X2 = X if key2 is None else np.frombuffer(key2, dtype=float).reshape(shape2)
    tau = (X[:, None, :] - X2[None, :, :]).reshape(-1, X.shape[1])
    if tau.shape[1] == 1:
        uniq, inv = np.unique(tau[:, 0], return_inverse=True)
        uniq = uniq[:, None]
    else:
        uniq, inv = np.unique(tau, axis=0, return_inverse=True)
    uniq.setflags(write=False)
    inv = inv.ravel()
    inv.setflags(write=False)
    return uniq, inv


def lag_index(X, X2=None):
    """Distinct input differences of ``X`` against ``X2`` and the scatter index.

    ``uniq[inv].reshape(N, M)`` reproduces the full lag array. On regularly
    spaced inputs there are about ``N + M`` distinct lags instead of ``N M``.
    """
    X = np.ascontiguousarray(X, dtype=float)
    if X.shape[1] > 1:
        # scattered multi-dimensional inputs rarely repeat a lag
        X2 = X if X2 is None else np.asarray(X2, dtype=float)
        tau = (X[:, None, :] - X2[None, :, :]).reshape(-1, X.shape[1])
        return tau, np.arange(tau.shape[0])
    if X2 is None:
        return _lag_index_cached(X.tobytes(), X.shape, None, None)
    X2 = np.ascontiguousarray(X2, dtype=float)
    return _lag_index_cached(X.tobytes(), X.shape, X2.tobytes(), X2.shape)


# ---------------------------------------------------------------------------
# components


@dataclass(frozen=True)
class SmComponent:
    """One spectral mixture component with diagonal frequency covariance."""

    w: float
    mu: tuple
    sigma2: tuple

    def __post_init__(self):
        object.__setattr__(self, "w", _positive(self.w, "w"))
        mu = _vec(self.mu, "mu")
        sigma2 = _vec(self.sigma2, "sigma2")
        if len(mu) != len(sigma2):
            raise InvalidArgumentError("mu and sigma2 must have the same length")
        if any(m < 0 for m in mu):
            raise InvalidArgumentError("mu must be nonnegative")
        if any(s <= 0 for s in sigma2):
            raise InvalidArgumentError("sigma2 must be positive")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma2", sigma2)

    @property
    def dim(self) -> int:
        return len(self.mu)

    def to_dict(self) -> dict:
        return {"w": self.w, "mu": list(self.mu), "sigma2": list(self.sigma2)}


@dataclass(frozen=True)
class GcsmComponent(SmComponent):
    """SM component extended with a time delay and a phase delay per dimension.

    Only differences of ``phi`` between components enter the kernel, as the
    offset ``pi * (phi_i - phi_j)`` of the cross-term cosine.
    """

    theta: tuple = None
    phi: tuple = None

    def __post_init__(self):
        super().__post_init__()
        P = len(self.mu)
        theta = (0.0,) * P if self.theta is None else _vec(self.theta, "theta")
        phi = (0.0,) * P if self.phi is None else _vec(self.phi, "phi")
        if len(theta) != P or len(phi) != P:
            raise InvalidArgumentError("theta and phi must match the dimension of mu")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "phi", phi)

    def to_dict(self) -> dict:
        d = super().to_dict()
        d["theta"] = list(self.theta)
        d["phi"] = list(self.phi)
        return d


# ---------------------------------------------------------------------------
# kernel families


class Kernel:
    """Base class of all covariance functions.

    Subclasses implement :meth:`evaluate` on a batch of input differences,
    expose their hyperparameters through :meth:`raw_params` and
    :meth:`with_raw`, and contract the Gram derivative with a weight matrix
    in :meth:`grad_contract`.
    """

    kind: ClassVar[str] = ""
    dim: int | None = None

    def evaluate(self, tau) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, tau) -> float:
        """Evaluate at a single input difference (scalar or P-vector)."""
        return float(self.evaluate(_single_tau(tau))[0])

    def gram(self, X, X2=None) -> np.ndarray:
        return gram(self, X, X2)

    def raw_params(self) -> list[tuple[str, str, float]]:
        """Ordered ``(name, kind, value)`` triples of free hyperparameters."""
        raise NotImplementedError

    def with_raw(self, values: Sequence[float]) -> "Kernel":
        raise NotImplementedError

    def grad_contract(self, X, W) -> np.ndarray:
        """Return ``d/dp sum(W * K(X, X))`` for every raw hyperparameter ``p``."""
        X = _inputs(X)
        tau, inv = lag_index(X)
        Wf = np.bincount(inv, weights=np.asarray(W, dtype=float).ravel(), minlength=tau.shape[0])
        dks = self._grad_batch(tau)
        return np.array([Wf @ dk for dk in dks])

    def _grad_batch(self, tau: np.ndarray) -> list[np.ndarray]:
        raise NotImplementedError

    def _check_dim(self, tau: np.ndarray) -> None:
        if self.dim is not None and tau.shape[1] != self.dim:
            raise InvalidArgumentError(
                f"input dimension {tau.shape[1]} does not match kernel dimension {self.dim}"
            )

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": {}, "components": [], "delays_enabled": False}


@dataclass(frozen=True)
class SE(Kernel):
    theta_f: float = 1.0
    theta_l: float = 1.0
    kind: ClassVar[str] = "SE"

    def __post_init__(self):
        object.__setattr__(self, "theta_f", _positive(self.theta_f, "theta_f"))
        object.__setattr__(self, "theta_l", _positive(self.theta_l, "theta_l"))

    def evaluate(self, tau):
        tau = _tau_batch(tau)
        r2 = np.sum(tau**2, axis=1)
        return self.theta_f * np.exp(-r2 / (2 * self.theta_l**2))

    def raw_params(self):
        return [("theta_f", "theta_f", self.theta_f), ("theta_l", "theta_l", self.theta_l)]

    def with_raw(self, values):
        return SE(*values)

    def _grad_batch(self, tau):
        r2 = np.sum(tau**2, axis=1)
        e = np.exp(-r2 / (2 * self.theta_l**2))
        return [e, self.theta_f * e * r2 / self.theta_l**3]

    def to_dict(self):
        d = super().to_dict()
        d["params"] = {"theta_f": self.theta_f, "theta_l": self.theta_l}
        return d


@dataclass(frozen=True)
class Periodic(Kernel):
    theta_f: float = 1.0
    theta_per: float = 1.0
    theta_l: float = 1.0
    kind: ClassVar[str] = "Periodic"
    dim: ClassVar[int] = 1

    def __post_init__(self):
        for name in ("theta_f", "theta_per", "theta_l"):
            object.__setattr__(self, name, _positive(getattr(self, name), name))

    def evaluate(self, tau):
        tau = _tau_batch(tau)
        if tau.shape[1] != 1:
            raise UnsupportedDimensionError("the periodic kernel is defined for P = 1 only")
        s = np.sin(math.pi * tau[:, 0] / self.theta_per)
        return self.theta_f * np.exp(-2 * s**2 / self.theta_l)

    def raw_params(self):
        return [
            ("theta_f", "theta_f", self.theta_f),
            ("theta_per", "theta_per", self.theta_per),
            ("theta_l", "theta_l", self.theta_l),
        ]

    def with_raw(self, values):
        return Periodic(*values)

    def _grad_batch(self, tau):
        if tau.shape[1] != 1:
            raise UnsupportedDimensionError("the periodic kernel is defined for P = 1 only")
        t = tau[:, 0]
        u = math.pi * t / self.theta_per
        s2 = np.sin(u) ** 2
        e = np.exp(-2 * s2 / self.theta_l)
        k = self.theta_f * e
        d_per = k * 2 * math.pi * t * np.sin(2 * u) / (self.theta_l * self.theta_per**2)
        d_l = k * 2 * s2 / self.theta_l**2
        return [e, d_per, d_l]

    def to_dict(self):
        d = super().to_dict()
        d["params"] = {"theta_f": self.theta_f, "theta_per": self.theta_per, "theta_l": self.theta_l}
        return d


@dataclass(frozen=True)
class Matern52(Kernel):
    theta_f: float = 1.0
    theta_l: float = 1.0
    kind: ClassVar[str] = "Matern52"

    def __post_init__(self):
        object.__setattr__(self, "theta_f", _positive(self.theta_f, "theta_f"))
        object.__setattr__(self, "theta_l", _positive(self.theta_l, "theta_l"))

    def evaluate(self, tau):
        tau = _tau_batch(tau)
        z = math.sqrt(5.0) * np.sqrt(np.sum(tau**2, axis=1)) / self.theta_l
        return self.theta_f * (1 + z + z**2 / 3) * np.exp(-z)

    def raw_params(self):
        return [("theta_f", "theta_f", self.theta_f), ("theta_l", "theta_l", self.theta_l)]

    def with_raw(self, values):
        return Matern52(*values)

    def _grad_batch(self, tau):
        z = math.sqrt(5.0) * np.sqrt(np.sum(tau**2, axis=1)) / self.theta_l
        e = np.exp(-z)
        return [(1 + z + z**2 / 3) * e, self.theta_f * e * z**2 * (1 + z) / (3 * self.theta_l)]

    def to_dict(self):
        d = super().to_dict()
        d["params"] = {"theta_f": self.theta_f, "theta_l": self.theta_l}
        return d


def _stack(components, attr):
    return np.array([getattr(c, attr) for c in components], dtype=float)


def _check_components(components, cls) -> tuple:
    components = tuple(components)
    if not components:
        raise InvalidArgumentError("component list must be nonempty")
    for c in components:
        if not isinstance(c, cls):
            raise InvalidArgumentError(f"expected {cls.__name__} entries")
    P = components[0].dim
    if any(c.dim != P for c in components):
        raise InvalidArgumentError("all components must share the same dimension")
    return components


@dataclass(frozen=True)
class SM(Kernel):
    components: tuple = ()
    kind: ClassVar[str] = "SM"

    def __post_init__(self):
        object.__setattr__(self, "components", _check_components(self.components, SmComponent))

    @property
    def dim(self) -> int:
        return self.components[0].dim

    @property
    def Q(self) -> int:
        return len(self.components)

    def evaluate(self, tau):
        tau = _tau_batch(tau)
        self._check_dim(tau)
        w = _stack(self.components, "w")
        mu = _stack(self.components, "mu")
        s2 = _stack(self.components, "sigma2")
        c = np.cos(2 * math.pi * tau @ mu.T)
        e = np.exp(-2 * PI2 * (tau**2) @ s2.T)
        return (c * e) @ w

    def raw_params(self):
        out = []
        for q, c in enumerate(self.components):
            out.append((f"w[{q}]", "w", c.w))
            out += [(f"mu[{q}][{p}]", "mu", v) for p, v in enumerate(c.mu)]
            out += [(f"sigma2[{q}][{p}]", "sigma2", v) for p, v in enumerate(c.sigma2)]
        return out

    def with_raw(self, values):
        values = list(values)
        P = self.dim
        comps, i = [], 0
        for _ in self.components:
            comps.append(SmComponent(values[i], values[i + 1 : i + 1 + P], values[i + 1 + P : i + 1 + 2 * P]))
            i += 1 + 2 * P
        return SM(tuple(comps))

    def _grad_batch(self, tau):
        out = []
        for c in self.components:
            mu = np.asarray(c.mu)
            s2 = np.asarray(c.sigma2)
            phase = 2 * math.pi * tau @ mu
            e = np.exp(-2 * PI2 * (tau**2) @ s2)
            ce = np.cos(phase) * e
            out.append(ce)
            se = np.sin(phase) * e
            out += [-c.w * se * 2 * math.pi * tau[:, p] for p in range(len(mu))]
            out += [-2 * PI2 * c.w * ce * tau[:, p] ** 2 for p in range(len(mu))]
        return out

    def to_dict(self):
        d = super().to_dict()
        d["components"] = [c.to_dict() for c in self.components]
        return d


@dataclass(frozen=True)
class GCSM(Kernel):
    components: tuple = ()
    delays_enabled: bool = True
    kind: ClassVar[str] = "GCSM"

    def __post_init__(self):
        comps = tuple(
            c if isinstance(c, GcsmComponent) else GcsmComponent(c.w, c.mu, c.sigma2)
            for c in self.components
        )
        object.__setattr__(self, "components", _check_components(comps, GcsmComponent))
        object.__setattr__(self, "delays_enabled", bool(self.delays_enabled))

    @property
    def dim(self) -> int:
        return self.components[0].dim

    @property
    def Q(self) -> int:
        return len(self.components)

    def arrays(self):
        """Component parameters stacked as (Q,) and (Q, P) arrays.

        Delays are returned as zeros when they are disabled.
        """
        w = _stack(self.components, "w")
        mu = _stack(self.components, "mu")
        s2 = _stack(self.components, "sigma2")
        if self.delays_enabled:
            th = _stack(self.components, "theta")
            ph = _stack(self.components, "phi")
        else:
            th = np.zeros_like(mu)
            ph = np.zeros_like(mu)
        return w, mu, s2, th, ph

    def evaluate(self, tau):
        tau = _tau_batch(tau)
        self._check_dim(tau)
        t = _GcsmPairs(self, tau)
        return np.einsum("ij,ijm->m", t.scale, t.env * np.cos(t.arg))

    def raw_params(self):
        out = []
        for q, c in enumerate(self.components):
            out.append((f"w[{q}]", "w", c.w))
            out += [(f"mu[{q}][{p}]", "mu", v) for p, v in enumerate(c.mu)]
            out += [(f"sigma2[{q}][{p}]", "sigma2", v) for p, v in enumerate(c.sigma2)]
            if self.delays_enabled:
                out += [(f"theta[{q}][{p}]", "theta", v) for p, v in enumerate(c.theta)]
                out += [(f"phi[{q}][{p}]", "phi", v) for p, v in enumerate(c.phi)]
        return out

    def with_raw(self, values):
        values = list(values)
        P = self.dim
        comps, i = [], 0
        for c in self.components:
            w = values[i]
            mu = values[i + 1 : i + 1 + P]
            s2 = values[i + 1 + P : i + 1 + 2 * P]
            i += 1 + 2 * P
            if self.delays_enabled:
                th = values[i : i + P]
                ph = values[i + P : i + 2 * P]
                i += 2 * P
            else:
                th, ph = c.theta, c.phi
            comps.append(GcsmComponent(w, mu, s2, th, ph))
        return GCSM(tuple(comps), self.delays_enabled)

    def grad_contract(self, X, W):
        X = _inputs(X)
        self._check_dim(X)
        P = X.shape[1]
        tau, inv = lag_index(X)
        t = _GcsmPairs(self, tau)
        Wf = np.bincount(inv, weights=np.asarray(W, dtype=float).ravel(), minlength=tau.shape[0])

        cos_part = t.env * np.cos(t.arg)  # (Q, Q, M)
        sin_part = t.env * np.sin(t.arg)
        # W-weighted contractions per pair, scaled by sqrt(w_i w_j) * A * G
        Tc = t.scale * (cos_part @ Wf)
        Ts = t.scale * (sin_part @ Wf)
        Tc_d = t.scale[..., None] * np.einsum("ijm,ijmp->ijp", cos_part * Wf, t.d)
        Tc_d2 = t.scale[..., None] * np.einsum("ijm,ijmp->ijp", cos_part * Wf, t.d**2)
        Ts_d = t.scale[..., None] * np.einsum("ijm,ijmp->ijp", sin_part * Wf, t.d)

        a = t.s2[:, None, :]  # sigma2_i
        b = t.s2[None, :, :]  # sigma2_j
        S = a + b
        dmu = t.mu[:, None, :] - t.mu[None, :, :]
        m = (a * t.mu[None, :, :] + b * t.mu[:, None, :]) / S
        c = a * b / S

        # log weights: each side of the pair contributes one half
        g_w = 0.5 * (Tc.sum(axis=1) + Tc.sum(axis=0))

        g_mu_i = -(dmu / (2 * S)) * Tc[..., None] - math.pi * (b / S) * Ts_d
        g_mu_j = (dmu / (2 * S)) * Tc[..., None] - math.pi * (a / S) * Ts_d
        g_mu = g_mu_i.sum(axis=1) + g_mu_j.sum(axis=0)

        common = (-1 / (2 * S) + dmu**2 / (4 * S**2)) * Tc[..., None]
        g_a = (1 / (4 * a)) * Tc[..., None] + common - PI2 * (b**2 / S**2) * Tc_d2 + math.pi * b * dmu / S**2 * Ts_d
        g_b = (1 / (4 * b)) * Tc[..., None] + common - PI2 * (a**2 / S**2) * Tc_d2 - math.pi * a * dmu / S**2 * Ts_d
        g_s2 = g_a.sum(axis=1) + g_b.sum(axis=0)

        g_w = g_w / t.w  # from d/dlog w to d/dw
        parts = [g_w[:, None], g_mu, g_s2]
        if self.delays_enabled:
            D = -2 * PI2 * c * Tc_d - math.pi * m * Ts[..., None]
            g_th = -D.sum(axis=1) + D.sum(axis=0)
            g_ph = math.pi * (Ts.sum(axis=1) - Ts.sum(axis=0))
            g_ph = np.repeat(g_ph[:, None], P, axis=1)
            parts += [g_th, g_ph]
        return np.concatenate(parts, axis=1).ravel()

    def to_dict(self):
        d = super().to_dict()
        d["components"] = [c.to_dict() for c in self.components]
        d["delays_enabled"] = self.delays_enabled
        return d


class _GcsmPairs:
    """Per-pair intermediate quantities of the GCSM double sum on a tau batch."""

    def __init__(self, spec: GCSM, tau: np.ndarray):
        w, mu, s2, th, ph = spec.arrays()
        self.w, self.mu, self.s2 = w, mu, s2
        a = s2[:, None, :]
        b = s2[None, :, :]
        S = a + b
        amp = np.prod(np.sqrt(2 * np.sqrt(a * b) / S), axis=-1)
        gap = np.exp(-0.25 * np.sum((mu[:, None, :] - mu[None, :, :]) ** 2 / S, axis=-1))
        self.scale = np.sqrt(np.outer(w, w)) * amp * gap  # (Q, Q)
        c = a * b / S
        m = (a * mu[None, :, :] + b * mu[:, None, :]) / S
        dth = th[:, None, :] - th[None, :, :]
        dph = np.sum(ph[:, None, :] - ph[None, :, :], axis=-1)
        self.d = 2 * tau[None, None, :, :] - dth[:, :, None, :]  # (Q, Q, M, P)
        self.env = np.exp(-PI2 * np.einsum("ijp,ijmp->ijm", c, self.d**2))
        self.arg = math.pi * (np.einsum("ijp,ijmp->ijm", m, self.d) - dph[:, :, None])


KERNEL_KINDS = {"SE": SE, "Periodic": Periodic, "Matern52": Matern52, "SM": SM, "GCSM": GCSM}


def kernel_from_dict(doc: dict) -> Kernel:
    """Inverse of ``Kernel.to_dict``."""
    kind = doc.get("kind")
    if kind not in KERNEL_KINDS:
        raise UnknownKernelError(f"unknown kernel kind {kind!r}")
    if kind in ("SE", "Periodic", "Matern52"):
        return KERNEL_KINDS[kind](**doc["params"])
    if kind == "SM":
        return SM(tuple(SmComponent(c["w"], c["mu"], c["sigma2"]) for c in doc["components"]))
    comps = tuple(
        GcsmComponent(c["w"], c["mu"], c["sigma2"], c.get("theta"), c.get("phi"))
        for c in doc["components"]
    )
    return GCSM(comps, doc.get("delays_enabled", True))


# ---------------------------------------------------------------------------
# single-point operations


def eval_se(tau, theta_f: float, theta_l: float) -> float:
    return SE(theta_f, theta_l)(tau)


def eval_periodic(tau, theta_f: float, theta_per: float, theta_l: float) -> float:
    tau = _single_tau(tau)
    if tau.shape[1] != 1:
        raise UnsupportedDimensionError("the periodic kernel is defined for P = 1 only")
    return Periodic(theta_f, theta_per, theta_l)(tau[0])


def eval_matern52(tau, theta_f: float, theta_l: float) -> float:
    return Matern52(theta_f, theta_l)(tau)


def eval_sm(tau, components: Sequence[SmComponent]) -> float:
    return SM(tuple(components))(tau)


def eval_gcsm_cross(tau, comp_i: GcsmComponent, comp_j: GcsmComponent) -> float:
    """Weight-free symmetrized cross term between components ``i`` and ``j``.

    With ``a = sigma2_i``, ``b = sigma2_j`` (per dimension) and
    ``d = 2 tau - (theta_i - theta_j)`` this is::

        prod sqrt(2 sqrt(ab) / (a + b))
        * exp(-1/4 sum (mu_i - mu_j)^2 / (a + b))
        * exp(-pi^2 sum ab d^2 / (a + b))
        * cos(pi (sum d (a mu_j + b mu_i) / (a + b) - sum (phi_i - phi_j)))
    """
    t = _single_tau(tau)[0]
    if comp_i.dim != comp_j.dim or t.size != comp_i.dim:
        raise InvalidArgumentError("tau and components must share the same dimension")
    a = np.asarray(comp_i.sigma2)
    b = np.asarray(comp_j.sigma2)
    mi = np.asarray(comp_i.mu)
    mj = np.asarray(comp_j.mu)
    S = a + b
    d = 2 * t - (np.asarray(comp_i.theta) - np.asarray(comp_j.theta))
    amp = np.prod(np.sqrt(2 * np.sqrt(a * b) / S))
    gap = math.exp(-0.25 * np.sum((mi - mj) ** 2 / S))
    env = math.exp(-PI2 * np.sum(a * b / S * d**2))
    arg = math.pi * (np.sum(d * (a * mj + b * mi) / S) - np.sum(np.asarray(comp_i.phi) - np.asarray(comp_j.phi)))
    return float(amp * gap * env * math.cos(arg))


def eval_gcsm(tau, components: Sequence[GcsmComponent], delays_enabled: bool = True) -> float:
    return GCSM(tuple(components), delays_enabled)(tau)


def gcsm_cross_terms_at_zero(components: Sequence, delays_enabled: bool = True) -> np.ndarray:
    """Q x Q matrix of the weighted cross terms at ``tau = 0``.

    Written directly from the closed diagonal-value expression, without the
    general evaluation path, so it can serve as an oracle for it.
    """
    comps = list(components)
    Q = len(comps)
    out = np.empty((Q, Q))
    for i, ci in enumerate(comps):
        for j, cj in enumerate(comps):
            a = np.asarray(ci.sigma2)
            b = np.asarray(cj.sigma2)
            mi = np.asarray(ci.mu)
            mj = np.asarray(cj.mu)
            val = math.sqrt(ci.w * cj.w)
            val *= np.prod(np.sqrt(np.abs(np.sqrt(4 * a * b) / (a + b))))
            val *= math.exp(-0.25 * np.sum((mi - mj) ** 2 / (a + b)))
            if delays_enabled:
                dt = np.asarray(getattr(cj, "theta", 0.0)) - np.asarray(getattr(ci, "theta", 0.0))
                dp = np.sum(np.asarray(getattr(ci, "phi", 0.0)) - np.asarray(getattr(cj, "phi", 0.0)))
                val *= math.exp(-PI2 * np.sum(dt * a * b * dt / (a + b)))
                val *= math.cos(math.pi * (np.sum(dt * (a * mj + b * mi) / (a + b)) - dp))
            out[i, j] = val
    return out


def gcsm_diag_value(components: Sequence, delays_enabled: bool = True) -> float:
    """Closed-form ``k_GCSM(0)``: the sum of :func:`gcsm_cross_terms_at_zero`."""
    return float(gcsm_cross_terms_at_zero(components, delays_enabled).sum())


# ---------------------------------------------------------------------------
# Gram matrices


def gram(spec: Kernel, X, X2=None) -> np.ndarray:
    """Covariance matrix with entries ``k(X[a] - X2[b])``.

    When ``X2`` is omitted (or is ``X``) the upper triangle is mirrored so the
    result is exactly symmetric.
    """
    X = _inputs(X)
    same = X2 is None or X2 is X
    X2 = X if same else _inputs(X2)
    if X.shape[1] != X2.shape[1]:
        raise InvalidArgumentError("X and X2 must have the same dimension")
    tau, inv = lag_index(X, None if same else X2)
    K = spec.evaluate(tau)[inv].reshape(X.shape[0], X2.shape[0])
    if same:
        K = np.triu(K) + np.triu(K, 1).T
    return K
