"""Exact Gaussian-process regression with a zero mean function."""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import InvalidArgumentError, NumericalFailureError
from .kernels import Kernel, _inputs, gram, kernel_from_dict
from .params import ParamPacking

logger = logging.getLogger(__name__)

JITTER_LADDER = (0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2)
VAR_CLAMP_TOL = 1e-10


@dataclass(frozen=True)
class Dataset:
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = _inputs(self.x)
        y = np.asarray(self.y, dtype=float).ravel()
        if x.shape[0] != y.shape[0]:
            raise InvalidArgumentError("x and y must have the same length")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise InvalidArgumentError("dataset values must be finite")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return self.y.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def checksum(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.x, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.y, dtype="<f8").tobytes())
        return h.hexdigest()


def cholesky_with_jitter(K, base_noise: float = 0.0):
    """Lower Cholesky factor of ``K + (base_noise + j) I``.

    ``j`` climbs the ladder ``{0, 1e-8, ..., 1e-2} * mean(diag K)`` until the
    factorization succeeds. Returns ``(L, j)``.
    """
    K = np.asarray(K, dtype=float)
    scale = float(np.mean(np.diag(K)))
    if not math.isfinite(scale):
        raise NumericalFailureError("Gram matrix has non-finite diagonal")
    scale = abs(scale) if scale != 0 else 1.0
    tried = []
    for rel in JITTER_LADDER:
        jitter = rel * scale
        tried.append(jitter)
        A = K + (base_noise + jitter) * np.eye(K.shape[0])
        try:
            L = linalg.cholesky(A, lower=True, check_finite=True)
        except (linalg.LinAlgError, ValueError):
            continue
        if jitter > 0:
            logger.debug("cholesky succeeded with jitter %.3g", jitter)
        return L, jitter
    raise NumericalFailureError(
        f"Cholesky failed up to jitter {tried[-1]:.3g}", ladder=tried
    )


@dataclass(frozen=True)
class TrainedModel:
    """A kernel conditioned on data, ready for prediction."""

    spec: Kernel
    noise_var: float
    data: Dataset
    chol: np.ndarray
    alpha: np.ndarray
    jitter: float = 0.0
    meta: dict = field(default_factory=dict)

    @classmethod
    def condition(cls, spec: Kernel, noise_var: float, data: Dataset, meta=None):
        K = gram(spec, data.x)
        L, jitter = cholesky_with_jitter(K, noise_var)
        alpha = linalg.cho_solve((L, True), data.y)
        return cls(spec, float(noise_var), data, L, alpha, jitter, dict(meta or {}))

    def nlml(self) -> float:
        return _nlml_from_factor(self.chol, self.alpha, self.data.y)

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "spec": self.spec.to_dict(),
            "noise_var": self.noise_var,
            "data": {"x": self.data.x.tolist(), "y": self.data.y.tolist(), "checksum": self.data.checksum()},
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainedModel":
        """Rebuild a model; the factorization is recomputed from the stored data."""
        if doc.get("format") != MODEL_FORMAT:
            raise InvalidArgumentError(f"unsupported model format {doc.get('format')!r}")
        data = Dataset(np.asarray(doc["data"]["x"], dtype=float), np.asarray(doc["data"]["y"], dtype=float))
        if data.checksum() != doc["data"]["checksum"]:
            raise InvalidArgumentError("stored training data do not match their checksum")
        return cls.condition(kernel_from_dict(doc["spec"]), float(doc["noise_var"]), data, doc.get("meta"))


MODEL_FORMAT = 1


def save_model(model: TrainedModel, path) -> None:
    with open(path, "w") as fh:
        json.dump(model.to_dict(), fh, indent=1, sort_keys=True)


def load_model(path) -> TrainedModel:
    with open(path) as fh:
        return TrainedModel.from_dict(json.load(fh))


def _nlml_from_factor(L, alpha, y) -> float:
    n = y.shape[0]
    return float(0.5 * y @ alpha + np.sum(np.log(np.diag(L))) + 0.5 * n * math.log(2 * math.pi))


def nlml(spec: Kernel, noise_var: float, data: Dataset) -> float:
    """Negative log marginal likelihood of ``y ~ N(0, K + noise_var I)``."""
    if noise_var < 0:
        raise InvalidArgumentError("noise_var must be nonnegative")
    K = gram(spec, data.x)
    L, _ = cholesky_with_jitter(K, noise_var)
    alpha = linalg.cho_solve((L, True), data.y)
    return _nlml_from_factor(L, alpha, data.y)


def nlml_and_grad(spec: Kernel, noise_var: float, data: Dataset, packing: ParamPacking | None = None):
    """NLML and its gradient with respect to the packed parameter vector.

    Uses ``dNLML/dp = 1/2 tr[(Kn^-1 - alpha alpha^T) dKn/dp]``.
    """
    if packing is None:
        packing = ParamPacking(spec, noise_var)
    K = gram(spec, data.x)
    L, _ = cholesky_with_jitter(K, noise_var)
    alpha = linalg.cho_solve((L, True), data.y)
    value = _nlml_from_factor(L, alpha, data.y)
    Kinv = linalg.cho_solve((L, True), np.eye(len(data)))
    W = Kinv - np.outer(alpha, alpha)
    raw = 0.5 * spec.grad_contract(data.x, W)
    noise_grad = 0.5 * float(np.trace(W))
    grad = packing.chain(raw, noise_grad, packing.pack(spec, noise_var))
    return value, grad


def nlml_grad(spec: Kernel, noise_var: float, data: Dataset, packing: ParamPacking | None = None) -> np.ndarray:
    return nlml_and_grad(spec, noise_var, data, packing)[1]


def predict(model: TrainedModel, xstar):
    """Predictive mean and variance of the latent function at ``xstar``."""
    xstar = _inputs(xstar)
    if xstar.shape[1] != model.data.dim:
        raise InvalidArgumentError("prediction inputs do not match the training dimension")
    Ks = gram(model.spec, model.data.x, xstar)
    mean = Ks.T @ model.alpha
    v = linalg.solve_triangular(model.chol, Ks, lower=True)
    prior = model.spec.evaluate(np.zeros_like(xstar))
    var = prior - np.sum(v**2, axis=0)
    neg = var < 0
    if np.any(var < -VAR_CLAMP_TOL * max(1.0, float(np.max(np.abs(prior))))):
        raise NumericalFailureError(f"predictive variance {var.min():.3g} is negative")
    if np.any(neg):
        logger.warning("clamped %d slightly negative predictive variances", int(neg.sum()))
        var = np.where(neg, 0.0, var)
    return mean, var


def sample_prior(spec: Kernel, X, noise_var: float = 0.0, seed=None) -> np.ndarray:
    """Draw one sample of ``N(0, K(X, X) + noise_var I)``."""
    K = gram(spec, X)
    L, _ = cholesky_with_jitter(K, noise_var)
    z = np.random.default_rng(seed).standard_normal(K.shape[0])
    return L @ z
