"""Reverse-flow velocity field: exact mixture score plus artificial error.

All integrators in this package work in reverse time ``u`` on
``[0, T - tau]``; this module is the single place where reverse time is
mapped to forward diffusion time ``T - u``, so sign conventions cannot
drift between callers. The sampled dynamics is

    dx/du = x + score(T - u, x) + perturbation(u, x).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mixture import DiffusedMixture, GaussianMixture

__all__ = ["PERTURBATION_KINDS", "ScorePerturbation", "VelocityField"]

PERTURBATION_KINDS = ("none", "constant", "linear", "sinusoidal")

_HORIZON_SLACK = 1e-9


@dataclass(frozen=True)
class ScorePerturbation:
    """Artificial score error of magnitude ``delta``.

    kinds, acting coordinatewise on points ``x`` with center ``m``:
      constant:   delta / sqrt(d) in every coordinate
      linear:     delta * (x - m) / sqrt(d)
      sinusoidal: delta * sin(x) * (x - m) / sqrt(d)
    """

    kind: str
    delta: float
    center: np.ndarray

    def __post_init__(self):
        if self.kind not in PERTURBATION_KINDS:
            raise ValueError(f"unknown perturbation kind {self.kind!r}, expected one of {PERTURBATION_KINDS}")
        if self.delta < 0:
            raise ValueError(f"perturbation magnitude must be >= 0, got {self.delta}")
        center = np.atleast_1d(np.array(self.center, dtype=np.float64))
        center.setflags(write=False)
        object.__setattr__(self, "center", center)

    @property
    def is_zero(self) -> bool:
        return self.kind == "none" or self.delta == 0.0

    def __call__(self, t: float, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        d = self.center.shape[0]
        if x.shape[-1] != d:
            raise ValueError(f"points have dimension {x.shape[-1]}, center has {d}")
        if self.is_zero:
            return np.zeros_like(x)
        scale = self.delta / np.sqrt(d)
        if self.kind == "constant":
            return np.full_like(x, scale)
        if self.kind == "linear":
            return scale * (x - self.center)
        # sinusoidal: sin acts coordinatewise, in radians
        return scale * np.sin(x) * (x - self.center)


def _default_center(gm: GaussianMixture) -> np.ndarray:
    # weight-averaged global mean of the target
    return gm.mean()


@dataclass
class VelocityField:
    """Reverse-flow velocity ``x + s(x)`` over reverse time ``[0, T - tau]``.

    Diffused-mixture factorizations are cached per queried forward time;
    each integrator stage re-queries the same time for every particle, so
    one factorization serves the whole ensemble.
    """

    target: GaussianMixture
    horizon: float
    tau: float = 0.0
    perturbation: ScorePerturbation | None = None
    _cache: dict[float, DiffusedMixture] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.tau < 0 or not self.horizon > self.tau:
            raise ValueError(f"need horizon > tau >= 0, got T={self.horizon}, tau={self.tau}")
        if self.perturbation is None:
            self.perturbation = ScorePerturbation("none", 0.0, _default_center(self.target))
        if self.perturbation.center.shape[0] != self.target.d:
            raise ValueError("perturbation center dimension does not match target")

    @property
    def t_end(self) -> float:
        """Last valid reverse time."""
        return self.horizon - self.tau

    @property
    def d(self) -> int:
        return self.target.d

    def diffused(self, t_forward: float) -> DiffusedMixture:
        dm = self._cache.get(t_forward)
        if dm is None:
            dm = self.target.diffuse(t_forward)
            self._cache[t_forward] = dm
        return dm

    def _forward_time(self, t: float) -> float:
        end = self.t_end
        if t < 0 or t > end:
            if -_HORIZON_SLACK <= t < 0:
                t = 0.0
            elif end < t <= end + _HORIZON_SLACK * max(1.0, self.horizon):
                t = end
            else:
                raise ValueError(f"reverse time {t} outside [0, {end}]")
        return self.horizon - t

    def score(self, t: float, x: np.ndarray) -> np.ndarray:
        """Perturbed score at reverse time ``t``."""
        s = self.diffused(self._forward_time(t)).score(x)
        if self.perturbation.is_zero:
            return s
        return s + self.perturbation(t, x)

    def __call__(self, t: float, x: np.ndarray) -> np.ndarray:
        """Velocity at reverse time ``t`` for points ``x`` of shape (n, d)."""
        return x + self.score(t, x)
