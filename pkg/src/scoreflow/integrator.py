"""Explicit Runge-Kutta stepping of particle ensembles.

Any explicit tableau (a, b, c) is supported; stage velocity evaluations
are batched over the whole ensemble so that per-stage-time factorization
caches in the velocity field are reused across particles.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .schedule import TimeGrid, make_grid

__all__ = [
    "ButcherTableau",
    "EULER",
    "HEUN",
    "TABLEAUS",
    "IntegrationError",
    "IntegrationResult",
    "OrderEstimate",
    "ParticleEnsemble",
    "ReferenceProblem",
    "estimate_order",
    "get_tableau",
    "integrate",
    "step",
    "tableau_from_dict",
    "validate",
]

_CONSISTENCY_TOL = 1e-14
_CHECKPOINT_TOL = 1e-9


class IntegrationError(RuntimeError):
    """A step produced a non-finite state (outside the stability regime)."""

    def __init__(self, message: str, *, time: float, stage: int, particle: int):
        super().__init__(message)
        self.time = time
        self.stage = stage
        self.particle = particle


@dataclass(frozen=True)
class ButcherTableau:
    """Coefficients of an explicit s-stage method."""

    name: str
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    order: int

    def __post_init__(self):
        a = np.array(self.a, dtype=np.float64)
        b = np.array(self.b, dtype=np.float64)
        c = np.array(self.c, dtype=np.float64)
        s = b.shape[0]
        if a.shape != (s, s) or c.shape != (s,):
            raise ValueError(f"inconsistent tableau shapes: a {a.shape}, b {b.shape}, c {c.shape}")
        if self.order < 1:
            raise ValueError(f"nominal order must be >= 1, got {self.order}")
        for arr in (a, b, c):
            arr.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)

    @property
    def stages(self) -> int:
        return self.b.shape[0]


def validate(tableau: ButcherTableau) -> list[str]:
    """Check tableau invariants; returns violation messages (empty = ok)."""
    violations = []
    bsum = tableau.b.sum()
    if abs(bsum - 1.0) > _CONSISTENCY_TOL:
        violations.append(f"weights must sum to 1 (consistency), got {bsum!r}")
    upper = np.triu(tableau.a)
    if np.any(upper != 0.0):
        violations.append("coefficient matrix must be strictly lower triangular (explicit method)")
    row_sums = tableau.a.sum(axis=1)
    bad = np.abs(row_sums - tableau.c) > _CONSISTENCY_TOL
    for j in np.nonzero(bad)[0]:
        violations.append(
            f"node c[{j}]={tableau.c[j]!r} does not match row sum {row_sums[j]!r}"
        )
    return violations


EULER = ButcherTableau(name="euler", a=[[0.0]], b=[1.0], c=[0.0], order=1)
HEUN = ButcherTableau(
    name="heun",
    a=[[0.0, 0.0], [1.0, 0.0]],
    b=[0.5, 0.5],
    c=[0.0, 1.0],
    order=2,
)

TABLEAUS: dict[str, ButcherTableau] = {t.name: t for t in (EULER, HEUN)}


def get_tableau(name: str) -> ButcherTableau:
    try:
        return TABLEAUS[name]
    except KeyError:
        raise KeyError(f"unknown tableau {name!r}; registered: {sorted(TABLEAUS)}") from None


def tableau_from_dict(spec: dict, name: str = "custom") -> ButcherTableau:
    """Build a tableau from a JSON-style dict with keys a, b, c, nominal_order."""
    missing = [k for k in ("a", "b", "c", "nominal_order") if k not in spec]
    if missing:
        raise ValueError(f"tableau spec missing fields: {missing}")
    return ButcherTableau(
        name=spec.get("name", name),
        a=spec["a"],
        b=spec["b"],
        c=spec["c"],
        order=int(spec["nominal_order"]),
    )


@dataclass(frozen=True)
class ParticleEnsemble:
    """States of ``n`` particles in ``R^d`` at a reverse time ``t``."""

    states: np.ndarray
    t: float = 0.0
    seed_key: tuple = ()

    def __post_init__(self):
        states = np.asarray(self.states, dtype=np.float64)
        if states.ndim != 2:
            raise ValueError(f"states must be (n, d), got shape {states.shape}")
        object.__setattr__(self, "states", states)

    @property
    def n(self) -> int:
        return self.states.shape[0]

    @property
    def d(self) -> int:
        return self.states.shape[1]


def _check_finite(values: np.ndarray, t: float, stage: int) -> None:
    finite = np.isfinite(values)
    if not finite.all():
        bad = int(np.nonzero(~finite.all(axis=1))[0][0])
        raise IntegrationError(
            f"non-finite state for particle {bad} at stage {stage}, t={t}: "
            "step size is outside the stability regime",
            time=t,
            stage=stage,
            particle=bad,
        )


def step(
    tableau: ButcherTableau,
    velocity: Callable[[float, np.ndarray], np.ndarray],
    ensemble: ParticleEnsemble,
    t: float,
    h: float,
) -> ParticleEnsemble:
    """Advance every particle from ``t`` to ``t + h`` with one RK step."""
    if not h > 0:
        raise ValueError(f"step size must be positive, got {h}")
    horizon = getattr(velocity, "t_end", None)
    if horizon is not None and t + h > horizon * (1.0 + 1e-12) + 1e-15:
        raise ValueError(f"step to {t + h} exceeds the field horizon {horizon}")

    y = ensemble.states
    a, b, c = tableau.a, tableau.b, tableau.c
    ks: list[np.ndarray] = []
    for j in range(tableau.stages):
        yj = y
        for l in range(j):
            if a[j, l] != 0.0:
                yj = yj + (h * a[j, l]) * ks[l]
        kj = velocity(t + c[j] * h, yj)
        _check_finite(kj, t + c[j] * h, stage=j + 1)
        ks.append(kj)

    out = y.copy()
    for j in range(tableau.stages):
        if b[j] != 0.0:
            out += (h * b[j]) * ks[j]
    _check_finite(out, t + h, stage=tableau.stages)
    return replace(ensemble, states=out, t=t + h)


@dataclass
class IntegrationResult:
    final: ParticleEnsemble
    checkpoints: dict[float, np.ndarray] = field(default_factory=dict)


def integrate(
    tableau: ButcherTableau,
    velocity: Callable[[float, np.ndarray], np.ndarray],
    ensemble: ParticleEnsemble,
    grid: TimeGrid,
    checkpoint_times: Sequence[float] = (),
) -> IntegrationResult:
    """Compose steps over all grid intervals, snapshotting requested nodes."""
    horizon = getattr(velocity, "t_end", None)
    if horizon is not None and grid.t_end > horizon * (1.0 + 1e-12) + 1e-15:
        raise ValueError(f"grid end {grid.t_end} exceeds the field horizon {horizon}")

    wanted: dict[int, float] = {}
    for ct in checkpoint_times:
        idx = np.argmin(np.abs(grid.nodes - ct))
        if abs(grid.nodes[idx] - ct) > _CHECKPOINT_TOL:
            raise ValueError(f"checkpoint time {ct} is not a grid node")
        wanted[int(idx)] = float(ct)

    result = IntegrationResult(final=ensemble)
    current = replace(ensemble, t=float(grid.nodes[0]))
    if 0 in wanted:
        result.checkpoints[wanted[0]] = current.states.copy()
    for i in range(grid.n_steps):
        t_i = float(grid.nodes[i])
        h_i = float(grid.nodes[i + 1] - grid.nodes[i])
        current = step(tableau, velocity, current, t_i, h_i)
        current = replace(current, t=float(grid.nodes[i + 1]))
        if (i + 1) in wanted:
            result.checkpoints[wanted[i + 1]] = current.states.copy()
    result.final = current
    return result


@dataclass(frozen=True)
class ReferenceProblem:
    """Scalar-or-vector ODE with a known solution, for order measurement."""

    velocity: Callable[[float, np.ndarray], np.ndarray]
    y0: np.ndarray
    t_end: float
    exact_final: np.ndarray


def _default_problem() -> ReferenceProblem:
    # y' = -y on [0, 1], y(0) = 1
    return ReferenceProblem(
        velocity=lambda t, y: -y,
        y0=np.array([[1.0]]),
        t_end=1.0,
        exact_final=np.array([[np.exp(-1.0)]]),
    )


@dataclass(frozen=True)
class OrderEstimate:
    slope: float | None
    exact: bool
    step_sizes: np.ndarray
    errors: np.ndarray

    def __str__(self) -> str:
        if self.exact:
            return "exact on this problem"
        return f"measured order {self.slope:.3f}"


_ERROR_FLOOR = 1e-13


def estimate_order(
    tableau: ButcherTableau,
    problem: ReferenceProblem | None = None,
    exponents: Sequence[int] = range(3, 9),
) -> OrderEstimate:
    """Empirical convergence order from a step-halving study.

    Fits the slope of log(global error) against log(h) for
    ``h = 2**-k`` over ``exponents``; reports "exact" when every error
    sits below the rounding floor.
    """
    problem = problem or _default_problem()
    hs, errs = [], []
    for k in exponents:
        n = int(round(problem.t_end * 2**k))
        grid = make_grid(0.0, problem.t_end, n)
        ens = ParticleEnsemble(states=problem.y0)
        final = integrate(tableau, problem.velocity, ens, grid).final
        hs.append(grid.h)
        errs.append(float(np.abs(final.states - problem.exact_final).max()))
    hs = np.array(hs)
    errs = np.array(errs)
    if np.all(errs < _ERROR_FLOOR):
        return OrderEstimate(slope=None, exact=True, step_sizes=hs, errors=errs)
    slope = np.polyfit(np.log(hs), np.log(np.maximum(errs, 1e-300)), 1)[0]
    return OrderEstimate(slope=float(slope), exact=False, step_sizes=hs, errors=errs)
