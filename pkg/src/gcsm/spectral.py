"""Spectral densities, a Fourier-inversion oracle, the periodogram and
Gaussian-mixture initialization from an empirical spectrum."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, GmmComponentError, InvalidArgumentError, UnsupportedInputError
from .kernels import GcsmComponent, SmComponent

__all__ = [
    "Spectrum",
    "IntegrationConfig",
    "sm_density",
    "gcsm_basis_density",
    "cross_density",
    "symmetrized_cross_density",
    "kernel_from_density",
    "periodogram",
    "weighted_em",
    "gmm_init",
]


@dataclass(frozen=True)
class Spectrum:
    freqs: np.ndarray
    density: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.freqs, dtype=float).ravel()
        d = np.asarray(self.density, dtype=float).ravel()
        if f.shape != d.shape or f.size == 0:
            raise InvalidArgumentError("freqs and density must be nonempty and of equal length")
        if np.any(np.diff(f) <= 0) or np.any(f < 0):
            raise InvalidArgumentError("freqs must be nonnegative and strictly increasing")
        if np.any(d < 0):
            raise InvalidArgumentError("density must be nonnegative")
        object.__setattr__(self, "freqs", f)
        object.__setattr__(self, "density", d)

    @property
    def df(self) -> float:
        return float(self.freqs[1] - self.freqs[0]) if self.freqs.size > 1 else float(self.freqs[0])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["freq", "density"])
            for f, d in zip(self.freqs, self.density):
                writer.writerow([repr(float(f)), repr(float(d))])

    @classmethod
    def from_csv(cls, path) -> "Spectrum":
        with open(Path(path), newline="") as fh:
            rows = list(csv.DictReader(fh))
        return cls([float(r["freq"]) for r in rows], [float(r["density"]) for r in rows])


# ---------------------------------------------------------------------------
# densities (P = 1)


def _gauss(s, mu, var):
    return np.exp(-((s - mu) ** 2) / (2 * var)) / np.sqrt(2 * np.pi * var)


def _scalar(values, name):
    v = np.atleast_1d(values)
    if v.size != 1:
        raise InvalidArgumentError(f"{name}: spectral densities are implemented for P = 1")
    return float(v[0])


def sm_density(s, comp: SmComponent):
    """Symmetrized Gaussian ``[N(s; mu, s2) + N(-s; mu, s2)] / 2`` (unit weight)."""
    mu = _scalar(comp.mu, "mu")
    var = _scalar(comp.sigma2, "sigma2")
    s = np.asarray(s, dtype=float)
    return 0.5 * (_gauss(s, mu, var) + _gauss(-s, mu, var))


def gcsm_basis_density(s, comp: GcsmComponent):
    """Complex basis density: square root of the Gaussian times ``exp(-i pi (theta s + phi))``."""
    mu = _scalar(comp.mu, "mu")
    var = _scalar(comp.sigma2, "sigma2")
    theta = _scalar(comp.theta, "theta")
    phi = _scalar(comp.phi, "phi")
    s = np.asarray(s, dtype=float)
    modulus = (2 * np.pi * var) ** -0.25 * np.exp(-((s - mu) ** 2) / (4 * var))
    return modulus * np.exp(-1j * np.pi * (theta * s + phi))


def cross_density(s, comp_i: GcsmComponent, comp_j: GcsmComponent):
    """``g_i(s) * conj(g_j(s))``; Hermitian in ``(i, j)``."""
    return gcsm_basis_density(s, comp_i) * np.conj(gcsm_basis_density(s, comp_j))


def symmetrized_cross_density(s, comp_i: GcsmComponent, comp_j: GcsmComponent):
    """Hermitian symmetrization ``[c(s) + conj(c(-s))] / 2`` of the cross density.

    Its inverse Fourier transform is real. For a single component without
    delays it coincides with :func:`sm_density`.
    """
    s = np.asarray(s, dtype=float)
    return 0.5 * (cross_density(s, comp_i, comp_j) + np.conj(cross_density(-s, comp_i, comp_j)))


@dataclass(frozen=True)
class IntegrationConfig:
    """Symmetric grid ``[-half_width, half_width]`` with spacing ``step``.

    ``None`` entries are derived from the components being integrated.
    """

    half_width: float | None = None
    step: float | None = None


def _as_gcsm(comp) -> GcsmComponent:
    if isinstance(comp, GcsmComponent):
        return comp
    return GcsmComponent(comp.w, comp.mu, comp.sigma2)


def kernel_from_density(comp_i, comp_j, tau: float, config: IntegrationConfig | None = None) -> float:
    """Numerically invert the symmetrized cross density at lag ``tau``.

    Composite trapezoid rule; an independent check of the closed-form
    cross term, not a production path.
    """
    ci, cj = _as_gcsm(comp_i), _as_gcsm(comp_j)
    mu_max = max(_scalar(ci.mu, "mu"), _scalar(cj.mu, "mu"))
    sd = [math.sqrt(_scalar(ci.sigma2, "sigma2")), math.sqrt(_scalar(cj.sigma2, "sigma2"))]
    config = config or IntegrationConfig()
    min_width = mu_max + 8 * max(sd)
    max_step = min(sd) / 8
    half_width = min_width if config.half_width is None else config.half_width
    if half_width < min_width:
        raise ConfigurationError(f"integration half width {half_width} < {min_width}")
    if config.step is None:
        shift = abs(tau) + abs(_scalar(ci.theta, "theta") - _scalar(cj.theta, "theta"))
        step = min(max_step, 1.0 / (8.0 * max(shift, 1.0)))
    else:
        step = config.step
        if step > max_step:
            raise ConfigurationError(f"integration step {step} exceeds {max_step}")
    n = int(math.ceil(2 * half_width / step))
    s = np.linspace(-half_width, half_width, n + 1)
    integrand = symmetrized_cross_density(s, ci, cj) * np.exp(2j * np.pi * tau * s)
    return float(np.real(np.trapezoid(integrand, s)))


# ---------------------------------------------------------------------------
# empirical spectrum


def periodogram(x, y) -> Spectrum:
    """Un-tapered periodogram of a uniformly sampled series.

    ``density[k] = |DFT(y - mean)[k]|^2 dx / N`` at ``freqs[k] = k / (N dx)``
    for ``k = 1 .. N // 2``.
    """
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    N = x.size
    if N < 8 or y.size != N:
        raise InvalidArgumentError("periodogram needs N >= 8 samples with matching x and y")
    steps = np.diff(x)
    dx = float(np.mean(steps))
    if dx <= 0 or np.max(np.abs(steps - dx)) >= 1e-6 * dx:
        raise UnsupportedInputError("periodogram requires uniformly spaced, ascending inputs")
    spec = np.fft.rfft(y - y.mean())
    k = np.arange(1, N // 2 + 1)
    density = np.abs(spec[k]) ** 2 * dx / N
    return Spectrum(k / (N * dx), density)


def weighted_em(freqs, weights, means0, var_floor: float, max_iter: int = 200, tol: float = 1e-8):
    """EM for a 1-D Gaussian mixture with per-sample weights.

    Returns ``(proportions, means, variances, loglik_trace)``; the trace holds
    the weighted log-likelihood after every E-step and is non-decreasing.
    """
    f = np.asarray(freqs, dtype=float)
    wt = np.asarray(weights, dtype=float)
    wt = wt / wt.sum()
    means = np.array(means0, dtype=float)
    Q = means.size
    mean_all = wt @ f
    var0 = max(float(wt @ (f - mean_all) ** 2) / Q**2, var_floor)
    variances = np.full(Q, var0)
    props = np.full(Q, 1.0 / Q)
    trace = []
    for _ in range(max_iter):
        logp = (
            np.log(props)[None, :]
            - 0.5 * np.log(2 * np.pi * variances)[None, :]
            - (f[:, None] - means[None, :]) ** 2 / (2 * variances[None, :])
        )
        top = logp.max(axis=1, keepdims=True)
        lse = top[:, 0] + np.log(np.exp(logp - top).sum(axis=1))
        ll = float(wt @ lse)
        trace.append(ll)
        if len(trace) > 1 and abs(trace[-1] - trace[-2]) <= tol * abs(trace[-2]):
            break
        resp = np.exp(logp - lse[:, None]) * wt[:, None]
        nk = resp.sum(axis=0)
        nk = np.maximum(nk, 1e-300)
        props = nk / nk.sum()
        means = (resp.T @ f) / nk
        variances = np.maximum((resp * (f[:, None] - means[None, :]) ** 2).sum(axis=0) / nk, var_floor)
        props = np.maximum(props, 1e-12)
        props /= props.sum()
    return props, means, variances, trace


def _weighted_quantiles(f, wt, qs):
    cdf = np.cumsum(wt) / wt.sum()
    return np.interp(qs, cdf, f)


def gmm_init(spectrum: Spectrum, Q: int, signal_variance: float, rng_seed=None,
             restarts: int = 10, max_iter: int = 200, tol: float = 1e-8) -> list[SmComponent]:
    """Fit a Q-component Gaussian mixture to the frequency axis of a spectrum.

    Density values act as sample weights. The best of ``restarts`` EM runs
    (started from jittered weighted quantiles) gives ``mu`` and ``sigma2``;
    weights are the mixture proportions times ``signal_variance``.
    """
    if Q < 1:
        raise InvalidArgumentError("Q must be at least 1")
    f = spectrum.freqs
    wt = spectrum.density
    if wt.sum() <= 0:
        raise InvalidArgumentError("spectrum has no mass")
    if Q > int(np.count_nonzero(wt > 0)):
        raise GmmComponentError(f"Q={Q} exceeds the number of frequencies with positive density")
    rng = np.random.default_rng(rng_seed)
    df = spectrum.df
    floor = df**2
    base = _weighted_quantiles(f, wt, (np.arange(Q) + 0.5) / Q)
    best = None
    for r in range(restarts):
        start = base if r == 0 else base + rng.normal(0.0, 2 * df, Q)
        start = np.clip(start, f[0], f[-1])
        props, means, variances, trace = weighted_em(f, wt, start, floor, max_iter, tol)
        if best is None or trace[-1] > best[3][-1]:
            best = (props, means, variances, trace)
    props, means, variances, _ = best
    order = np.argsort(means)
    return [
        SmComponent(props[q] * signal_variance, [max(means[q], 0.0)], [variances[q]])
        for q in order
    ]
