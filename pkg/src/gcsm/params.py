"""Mapping between kernel hyperparameters and an unconstrained real vector."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import Kernel

LOG_KINDS = frozenset({"w", "sigma2", "theta_f", "theta_l", "theta_per", "noise_var"})
IDENTITY_KINDS = frozenset({"mu", "theta", "phi"})


@dataclass(frozen=True)
class Slot:
    name: str
    kind: str
    index: int  # position in the kernel's raw parameter list, -1 for noise

    @property
    def transform(self) -> str:
        return "log" if self.kind in LOG_KINDS else "identity"


class ParamPacking:
    """Ordered slots for every free kernel hyperparameter plus the noise variance.

    Positive quantities are stored as logarithms; frequency means and delays
    are stored as-is, with frequency means clamped to ``[0, nyquist]`` when
    unpacked. Kinds listed in ``fixed`` keep the values of the template spec
    (``"noise_var"`` fixes the noise).

    For a GCSM kernel with delays enabled the vector has ``(4P + 1) Q + 1``
    entries, for SM ``(2P + 1) Q + 1``.
    """

    def __init__(self, spec: Kernel, noise_var: float, nyquist: float | None = None,
                 fixed=()):
        self.template = spec
        self.template_noise = float(noise_var)
        self.nyquist = nyquist
        self.fixed = frozenset(fixed)
        self._raw = np.array([v for _, _, v in spec.raw_params()], dtype=float)
        slots = [
            Slot(name, kind, i)
            for i, (name, kind, _) in enumerate(spec.raw_params())
            if kind not in self.fixed
        ]
        if "noise_var" not in self.fixed:
            slots.append(Slot("noise_var", "noise_var", -1))
        self.slots = tuple(slots)
        self._log = np.array([s.transform == "log" for s in self.slots])

    def __len__(self) -> int:
        return len(self.slots)

    @property
    def kinds(self) -> list[str]:
        return [s.kind for s in self.slots]

    def pack(self, spec: Kernel | None = None, noise_var: float | None = None) -> np.ndarray:
        spec = self.template if spec is None else spec
        noise_var = self.template_noise if noise_var is None else noise_var
        raw = [v for _, _, v in spec.raw_params()]
        vals = np.array([noise_var if s.index < 0 else raw[s.index] for s in self.slots], dtype=float)
        vals[self._log] = np.log(vals[self._log])
        return vals

    def values(self, vec) -> np.ndarray:
        """Constrained values of each slot."""
        vec = np.asarray(vec, dtype=float)
        vals = vec.copy()
        vals[self._log] = np.exp(vec[self._log])
        for k, s in enumerate(self.slots):
            if s.kind == "mu":
                hi = np.inf if self.nyquist is None else self.nyquist
                vals[k] = min(max(vals[k], 0.0), hi)
        return vals

    def project(self, vec) -> np.ndarray:
        """Clamp frequency-mean coordinates into their admissible interval."""
        vec = np.array(vec, dtype=float)
        hi = np.inf if self.nyquist is None else self.nyquist
        for k, s in enumerate(self.slots):
            if s.kind == "mu":
                vec[k] = min(max(vec[k], 0.0), hi)
        return vec

    def unpack(self, vec) -> tuple[Kernel, float]:
        vals = self.values(vec)
        raw = self._raw.copy()
        noise = self.template_noise
        for k, s in enumerate(self.slots):
            if s.index < 0:
                noise = float(vals[k])
            else:
                raw[s.index] = vals[k]
        return self.template.with_raw(raw), noise

    def chain(self, raw_grad, noise_grad: float, vec) -> np.ndarray:
        """Gradient in packed coordinates from the gradient in raw coordinates."""
        vals = self.values(vec)
        g = np.array([noise_grad if s.index < 0 else raw_grad[s.index] for s in self.slots], dtype=float)
        g[self._log] *= vals[self._log]
        return g
