"""Forward noise schedule and uniform time grids.

The forward process contracts states by ``lambda(t) = exp(-t)`` while
injecting noise at level ``sigma(t) = sqrt(1 - exp(-2t))``, so that
``lambda**2 + sigma**2 == 1`` at every time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["NoiseSchedule", "TimeGrid", "make_grid"]


class NoiseSchedule:
    """Exponential contraction / complementary noise-level pair."""

    def evaluate(self, t):
        """Return ``(lambda, sigma)`` at time ``t >= 0`` (scalar or array).

        ``sigma`` is computed as ``sqrt(-expm1(-2t))``: the naive form
        ``sqrt(1 - exp(-2t))`` cancels catastrophically for small ``t``.
        """
        t = np.asarray(t, dtype=np.float64)
        if np.any(t < 0):
            raise ValueError("schedule time must be nonnegative")
        lam = np.exp(-t)
        sigma = np.sqrt(-np.expm1(-2.0 * t))
        if t.ndim == 0:
            return float(lam), float(sigma)
        return lam, sigma

    def contraction(self, t: float) -> float:
        return self.evaluate(t)[0]

    def noise_level(self, t: float) -> float:
        return self.evaluate(t)[1]

    def noise_variance(self, t: float) -> float:
        """sigma(t)**2, computed without cancellation."""
        if np.any(np.asarray(t) < 0):
            raise ValueError(f"schedule time must be nonnegative, got {t}")
        return float(-np.expm1(-2.0 * t))


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid of ``n_steps + 1`` nodes on ``[t_start, t_end]``."""

    t_start: float
    t_end: float
    n_steps: int
    nodes: np.ndarray = field(repr=False)

    @property
    def h(self) -> float:
        return (self.t_end - self.t_start) / self.n_steps

    def __len__(self) -> int:
        return self.n_steps + 1


def make_grid(t_start: float, t_end: float, n_steps: int) -> TimeGrid:
    """Build a uniform grid whose last node is bitwise ``t_end``.

    Nodes are computed multiplicatively (``i / n_steps`` scaling) rather
    than by repeated addition, which would drift over ~100 steps.
    """
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    if not t_end > t_start:
        raise ValueError(f"need t_end > t_start, got [{t_start}, {t_end}]")
    frac = np.arange(n_steps + 1, dtype=np.float64) / n_steps
    nodes = t_start + frac * (t_end - t_start)
    nodes[0] = t_start
    nodes[-1] = t_end
    nodes.setflags(write=False)
    return TimeGrid(t_start=float(t_start), t_end=float(t_end), n_steps=int(n_steps), nodes=nodes)
