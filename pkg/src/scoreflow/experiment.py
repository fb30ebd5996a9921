"""Declarative experiment harness: config loading, sweeps, CSV/JSON output.

A run sweeps over score-error magnitudes ``delta`` (paired with step
counts so that ``h**2 ~ delta``), measures total-variation and moment
errors against the analytic target, and fits log-log convergence slopes.
All randomness descends from one master seed; per-cell streams are
derived from ``(master_seed, delta_index, repeat_index)`` so no sweep
cell can perturb another's draws.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import fv1d
from .integrator import (
    ButcherTableau,
    IntegrationError,
    ParticleEnsemble,
    get_tableau,
    integrate,
    tableau_from_dict,
    validate,
)
from .metrics import (
    KDEConfig,
    density_on_grid,
    fit_loglog,
    kde_1d,
    moment_errors,
    tv_marginal,
)
from .mixture import GaussianMixture, make_random_mixture, marginalize
from .schedule import make_grid
from .velocity import PERTURBATION_KINDS, ScorePerturbation, VelocityField

__all__ = [
    "CSV_COLUMNS",
    "ConfigError",
    "ExperimentConfig",
    "RunRecord",
    "couple_delta_to_steps",
    "load_config",
    "mixture_to_spec",
    "run_ode_experiment",
    "run_pde_experiment",
    "run_sample_dump",
]

CSV_COLUMNS = [
    "config_hash",
    "d",
    "delta",
    "perturbation",
    "n_steps",
    "h",
    "seed",
    "tv",
    "rel_mean_err",
    "rel_cov_err",
    "wall_time_s",
]

SCHEMA_VERSION = 1

# Step counts for the standard error sweep at horizon 8: h**2 roughly
# tracks delta while every step size stays inside the explicit
# integrator's stability regime.
_STEP_SCHEDULE_T8 = {0.005: 96, 0.01: 64, 0.02: 48, 0.04: 32, 0.08: 24, 0.16: 16}


class ConfigError(ValueError):
    """Invalid or malformed experiment configuration."""


def couple_delta_to_steps(deltas, horizon: float) -> list[int]:
    """Step counts balancing discretization error against score error.

    Uses the curated horizon-8 schedule for its exact magnitudes and
    ``round(T / sqrt(delta))`` otherwise.
    """
    out = []
    for delta in deltas:
        if delta <= 0:
            raise ValueError(f"delta must be positive to couple steps, got {delta}")
        if horizon == 8.0 and delta in _STEP_SCHEDULE_T8:
            out.append(_STEP_SCHEDULE_T8[delta])
        else:
            out.append(max(1, round(horizon / math.sqrt(delta))))
    return out


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def _require(raw: dict, key: str, path: str = "") -> object:
    if key not in raw:
        where = f"{path}.{key}" if path else key
        raise ConfigError(f'missing required field "{where}"')
    return raw[key]


def _parse_covariances(spec, n_modes: int, d: int) -> np.ndarray:
    def one(entry, k: int) -> np.ndarray:
        if isinstance(entry, dict):
            if "scaled_identity" not in entry:
                raise ConfigError(f'covariance {k}: dict form needs key "scaled_identity"')
            return float(entry["scaled_identity"]) * np.eye(d)
        if isinstance(entry, (int, float)):
            if d != 1:
                raise ConfigError(f"covariance {k}: scalar form is only valid for d=1")
            return np.array([[float(entry)]])
        arr = np.asarray(entry, dtype=np.float64)
        if arr.ndim == 1:
            if arr.shape[0] != d * d:
                raise ConfigError(f"covariance {k}: flat row-major form must have {d * d} entries")
            return arr.reshape(d, d)
        if arr.shape != (d, d):
            raise ConfigError(f"covariance {k}: expected shape ({d}, {d}), got {arr.shape}")
        return arr

    if isinstance(spec, dict):  # one scaled identity shared by all modes
        return np.stack([one(spec, k) for k in range(n_modes)])
    if len(spec) != n_modes:
        raise ConfigError(f"got {len(spec)} covariances for {n_modes} modes")
    return np.stack([one(entry, k) for k, entry in enumerate(spec)])


def _resolve_target(spec: dict) -> tuple[GaussianMixture, GaussianMixture | None]:
    """Returns (target, optional full-dimensional base for persistence)."""
    if not isinstance(spec, dict):
        raise ConfigError('"target" must be an object')
    kind = _require(spec, "kind", "target")
    if kind == "explicit":
        weights = np.asarray(_require(spec, "weights", "target"), dtype=np.float64)
        means = np.asarray(_require(spec, "means", "target"), dtype=np.float64)
        if means.ndim == 1:
            means = means[:, None]
        cov_spec = _require(spec, "covariances", "target")
        covs = _parse_covariances(cov_spec, means.shape[0], means.shape[1])
        try:
            return GaussianMixture(weights=weights, means=means, covariances=covs), None
        except ValueError as exc:
            raise ConfigError(f"target: {exc}") from exc
    if kind == "generated":
        base_dim = int(spec.get("base_dim", 128))
        modes = int(spec.get("modes", 5))
        seed = int(_require(spec, "seed", "target"))
        base = make_random_mixture(base_dim, modes, seed)
        dims = spec.get("dims", base_dim)
        if isinstance(dims, int):
            dims = list(range(dims))
        target = base if list(dims) == list(range(base_dim)) else marginalize(base, dims)
        return target, base
    raise ConfigError(f'target.kind must be "explicit" or "generated", got {kind!r}')


def mixture_to_spec(gm: GaussianMixture) -> dict:
    return {
        "kind": "explicit",
        "weights": gm.weights.tolist(),
        "means": gm.means.tolist(),
        "covariances": [c.tolist() for c in gm.covariances],
    }


@dataclass
class PdeSettings:
    n_cells: int = 1000
    h: float = 1e-3
    cfl_limit: float = 1.0
    domain: tuple[float, float] = (-10.0, 10.0)


@dataclass
class ExperimentConfig:
    target: GaussianMixture
    horizon: float
    tau: float
    tableau: ButcherTableau
    particles: int
    deltas: list[float]
    n_steps: list[int]
    perturbation: str
    grid_lo: float
    grid_hi: float
    grid_points: int
    seed: int
    repeats: int
    snapshot_times: list[float]
    out_dir: Path
    pde: PdeSettings
    base_target: GaussianMixture | None = None
    resolved: dict = field(default_factory=dict)

    @property
    def t_end(self) -> float:
        return self.horizon - self.tau

    @property
    def config_hash(self) -> str:
        hashable = {k: v for k, v in self.resolved.items() if k != "out_dir"}
        canon = json.dumps(hashable, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:12]

    def metric_grid(self, t: float) -> KDEConfig:
        return KDEConfig(
            lo=self.grid_lo,
            hi=self.grid_hi,
            points=self.grid_points,
            t=t,
            horizon=self.horizon,
        )


def config_from_dict(raw: dict, *, seed: int | None = None, out_dir=None) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    version = raw.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version}, expected {SCHEMA_VERSION}")

    target, base = _resolve_target(_require(raw, "target"))

    deltas = [float(x) for x in _require(raw, "deltas")]
    if not deltas:
        raise ConfigError('"deltas" must be a nonempty list')
    if any(d < 0 for d in deltas):
        raise ConfigError('"deltas" entries must be nonnegative')

    horizon = float(raw.get("horizon", 8.0))
    tau = float(raw.get("tau", 0.0))
    if tau < 0 or not horizon > tau:
        raise ConfigError(f'need horizon > tau >= 0, got horizon={horizon}, tau={tau}')

    if "n_steps" in raw:
        n_steps = [int(n) for n in raw["n_steps"]]
        if len(n_steps) != len(deltas):
            raise ConfigError('"n_steps" must pair one entry with each delta')
        if any(n < 1 for n in n_steps):
            raise ConfigError('"n_steps" entries must be >= 1')
    else:
        try:
            n_steps = couple_delta_to_steps(deltas, horizon)
        except ValueError as exc:
            raise ConfigError(f'"n_steps" is required when a delta is 0 ({exc})') from exc

    integrator = raw.get("integrator", "heun")
    if isinstance(integrator, str):
        try:
            tableau = get_tableau(integrator)
        except KeyError as exc:
            raise ConfigError(str(exc)) from exc
    else:
        try:
            tableau = tableau_from_dict(integrator)
        except ValueError as exc:
            raise ConfigError(f"integrator: {exc}") from exc
    violations = validate(tableau)
    if violations:
        raise ConfigError("integrator: " + "; ".join(violations))

    perturbation = raw.get("perturbation", "constant")
    if perturbation not in PERTURBATION_KINDS:
        raise ConfigError(
            f'perturbation must be one of {list(PERTURBATION_KINDS)}, got {perturbation!r}'
        )

    grid = raw.get("metric_grid", {})
    grid_lo = float(grid.get("lo", -10.0))
    grid_hi = float(grid.get("hi", 10.0))
    grid_points = int(grid.get("points", 2000))

    pde_raw = raw.get("pde", {})
    pde = PdeSettings(
        n_cells=int(pde_raw.get("n_cells", 1000)),
        h=float(pde_raw.get("h", 1e-3)),
        cfl_limit=float(pde_raw.get("cfl_limit", 1.0)),
        domain=tuple(pde_raw.get("domain", (-10.0, 10.0))),
    )

    particles = int(raw.get("particles", 40000))
    if particles < 2:
        raise ConfigError(f'"particles" must be >= 2, got {particles}')
    repeats = int(raw.get("repeats", 3))
    if repeats < 1:
        raise ConfigError(f'"repeats" must be >= 1, got {repeats}')

    if seed is None:
        seed = int(raw.get("seed", 0))
    out = out_dir if out_dir is not None else raw.get("out_dir", "results")

    snapshot_times = [float(t) for t in raw.get("snapshot_times", [])]
    for t in snapshot_times:
        if not 0 <= t <= horizon:
            raise ConfigError(f"snapshot time {t} outside [0, {horizon}]")

    resolved = dict(raw)
    resolved["schema_version"] = version
    resolved["seed"] = seed
    resolved["horizon"] = horizon
    resolved["tau"] = tau
    resolved["deltas"] = deltas
    resolved["n_steps"] = n_steps
    resolved["perturbation"] = perturbation
    resolved["particles"] = particles
    resolved["repeats"] = repeats

    return ExperimentConfig(
        target=target,
        horizon=horizon,
        tau=tau,
        tableau=tableau,
        particles=particles,
        deltas=deltas,
        n_steps=n_steps,
        perturbation=perturbation,
        grid_lo=grid_lo,
        grid_hi=grid_hi,
        grid_points=grid_points,
        seed=seed,
        repeats=repeats,
        snapshot_times=snapshot_times,
        out_dir=Path(out),
        pde=pde,
        base_target=base,
        resolved=resolved,
    )


def load_config(path, *, seed: int | None = None, out_dir=None) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"malformed JSON in {path} at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    return config_from_dict(raw, seed=seed, out_dir=out_dir)


# ---------------------------------------------------------------------------
# run records and CSV output
# ---------------------------------------------------------------------------

@dataclass
class RunRecord:
    config_hash: str
    rows: list[dict]
    fits: list[dict]
    wall_time_s: float
    failures: int = 0
    csv_path: Path | None = None
    summary_path: Path | None = None


def _format_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: Path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(_format_cell(row[c]) for c in CSV_COLUMNS) + "\n")


def _fit_sweeps(rows: list[dict], d: int) -> list[dict]:
    """Log-log slope fits of each metric against delta and against h."""
    fits = []
    for metric in ("tv", "rel_mean_err", "rel_cov_err"):
        for x_name in ("delta", "h"):
            xs, ys = [], []
            for row in rows:
                x, y = row[x_name], row[metric]
                if x > 0 and np.isfinite(y) and y > 0:
                    xs.append(x)
                    ys.append(y)
            if len(set(xs)) < 2:
                continue
            fit = fit_loglog(xs, ys)
            fits.append(
                {
                    "metric": metric,
                    "x": x_name,
                    "d": d,
                    "slope": fit.slope,
                    "intercept": fit.intercept,
                    "r2": fit.r2,
                    "cells": fit.n_points,
                }
            )
    return fits


def _cell_seed(master: int, delta_index: int, repeat: int) -> tuple[np.random.SeedSequence, int]:
    ss = np.random.SeedSequence((master, delta_index, repeat))
    return ss, int(ss.generate_state(1, dtype=np.uint32)[0])


def _persist_base_target(config: ExperimentConfig) -> None:
    if config.base_target is None:
        return
    spec = config.resolved.get("target", {})
    name = f"mixture_base{config.base_target.d}_seed{spec.get('seed', 'NA')}.json"
    path = config.out_dir / name
    if not path.exists():
        path.write_text(json.dumps(mixture_to_spec(config.base_target), indent=1))


# ---------------------------------------------------------------------------
# particle (ODE) experiment
# ---------------------------------------------------------------------------

def _snapshot_path(out_dir: Path, source: str, delta: float, t_forward: float) -> Path:
    return out_dir / f"snapshot_{source}_delta{delta!r}_t{t_forward!r}.csv"


def _write_reference_snapshots(config: ExperimentConfig, grid_cfg_for) -> None:
    """Analytic first-coordinate density at each snapshot time.

    Written alongside the estimates so figure tooling can overlay the
    reference without recomputing mixture densities.
    """
    from .mixture import marginalize as _marg

    for tf in config.snapshot_times:
        ref = density_on_grid(_marg(config.target.diffuse(tf), [0]), grid_cfg_for(tf))
        fv1d.write_snapshot_csv(ref, config.out_dir / f"snapshot_ref_t{tf!r}.csv")


def run_ode_experiment(config: ExperimentConfig, threads: int = 1) -> RunRecord:
    """Reverse-flow particle sweep over every (delta, n_steps, repeat) cell."""
    t_start = time.perf_counter()
    config.out_dir.mkdir(parents=True, exist_ok=True)
    _persist_base_target(config)
    target = config.target
    d = target.d
    center = target.mean()
    chash = config.config_hash
    reverse_snapshots = [config.horizon - tf for tf in config.snapshot_times]
    _write_reference_snapshots(config, lambda tf: config.metric_grid(config.horizon - tf))

    cells = [
        (i, r)
        for i in range(len(config.deltas))
        for r in range(config.repeats)
    ]

    def run_cell(cell: tuple[int, int]) -> dict:
        i, r = cell
        delta, n = config.deltas[i], config.n_steps[i]
        ss, seed32 = _cell_seed(config.seed, i, r)
        rng = np.random.default_rng(ss)
        wall0 = time.perf_counter()
        row = {
            "config_hash": chash,
            "d": d,
            "delta": delta,
            "perturbation": config.perturbation,
            "n_steps": n,
            "h": config.t_end / n,
            "seed": seed32,
            "tv": float("nan"),
            "rel_mean_err": float("nan"),
            "rel_cov_err": float("nan"),
        }
        try:
            states = rng.standard_normal((config.particles, d))
            ensemble = ParticleEnsemble(states=states, t=0.0, seed_key=(config.seed, i, r))
            fieldv = VelocityField(
                target=target,
                horizon=config.horizon,
                tau=config.tau,
                perturbation=ScorePerturbation(config.perturbation, delta, center),
            )
            grid = make_grid(0.0, config.t_end, n)
            result = integrate(
                config.tableau,
                fieldv,
                ensemble,
                grid,
                checkpoint_times=reverse_snapshots if r == 0 else (),
            )
            final = result.final.states
            tv = tv_marginal(final, target, 0, config.metric_grid(config.t_end))
            moments = moment_errors(final, target)
            row.update(
                tv=tv,
                rel_mean_err=moments.rel_mean_err,
                rel_cov_err=moments.rel_cov_err,
            )
            if r == 0:
                for t_rev, states_snap in result.checkpoints.items():
                    est = kde_1d(states_snap[:, 0], config.metric_grid(t_rev))
                    fv1d.write_snapshot_csv(
                        est, _snapshot_path(config.out_dir, "ode", delta, config.horizon - t_rev)
                    )
        except IntegrationError as exc:
            row["error"] = str(exc)
        row["wall_time_s"] = time.perf_counter() - wall0
        return row

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(run_cell, cells))
    else:
        rows = [run_cell(c) for c in cells]

    failures = sum(1 for row in rows if "error" in row)
    fits = _fit_sweeps(rows, d)
    record = RunRecord(
        config_hash=chash,
        rows=rows,
        fits=fits,
        wall_time_s=time.perf_counter() - t_start,
        failures=failures,
    )
    record.csv_path = config.out_dir / "ode_results.csv"
    record.summary_path = config.out_dir / "ode_slopes.json"
    _write_csv(record.csv_path, rows)
    record.summary_path.write_text(json.dumps(fits, indent=1))
    return record


# ---------------------------------------------------------------------------
# mean-field (PDE) experiment
# ---------------------------------------------------------------------------

def _standard_normal_density(x: np.ndarray) -> np.ndarray:
    return np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)


def run_pde_experiment(config: ExperimentConfig) -> RunRecord:
    """Finite-volume solve of the mean-field reverse transport per delta."""
    if config.target.d != 1:
        raise ConfigError("the mean-field solver is one-dimensional; target must have d=1")
    t_start = time.perf_counter()
    config.out_dir.mkdir(parents=True, exist_ok=True)
    target = config.target
    center = target.mean()
    chash = config.config_hash
    settings = config.pde

    n_steps = int(round(config.t_end / settings.h))
    grid = make_grid(0.0, config.t_end, n_steps)
    snap_lookup = {}
    for tf in config.snapshot_times:
        t_rev = config.horizon - tf
        idx = int(np.argmin(np.abs(grid.nodes - t_rev)))
        if abs(grid.nodes[idx] - t_rev) > 1e-9:
            raise ConfigError(f"snapshot time {tf} is not reachable with pde.h={settings.h}")
        snap_lookup[idx] = tf

    reference = density_on_grid(
        target, KDEConfig(lo=settings.domain[0], hi=settings.domain[1], points=settings.n_cells)
    )
    _write_reference_snapshots(
        config,
        lambda tf: KDEConfig(lo=settings.domain[0], hi=settings.domain[1], points=settings.n_cells),
    )
    ref_mean = target.mean()[0]
    ref_var = target.covariance()[0, 0]

    rows = []
    for i, delta in enumerate(config.deltas):
        wall0 = time.perf_counter()
        row = {
            "config_hash": chash,
            "d": 1,
            "delta": delta,
            "perturbation": config.perturbation,
            "n_steps": n_steps,
            "h": grid.h,
            "seed": config.seed,
            "tv": float("nan"),
            "rel_mean_err": float("nan"),
            "rel_cov_err": float("nan"),
        }
        try:
            fieldv = VelocityField(
                target=target,
                horizon=config.horizon,
                tau=config.tau,
                perturbation=ScorePerturbation(config.perturbation, delta, center),
            )
            def speed(t: float, x: np.ndarray) -> np.ndarray:
                return fieldv(t, x[:, None])[:, 0]

            state = fv1d.init_from_density(_standard_normal_density, settings.domain, settings.n_cells)
            if 0 in snap_lookup:
                fv1d.write_snapshot_csv(
                    state, _snapshot_path(config.out_dir, "pde", delta, snap_lookup[0])
                )
            for j in range(grid.n_steps):
                h_j = float(grid.nodes[j + 1] - grid.nodes[j])
                state = fv1d.advance(
                    state, speed, float(grid.nodes[j]), h_j, cfl_limit=settings.cfl_limit
                )
                if (j + 1) in snap_lookup:
                    fv1d.write_snapshot_csv(
                        state, _snapshot_path(config.out_dir, "pde", delta, snap_lookup[j + 1])
                    )
            tv = fv1d.total_variation_grid(state, reference)
            centers = state.centers
            mean = float((centers * state.rho).sum() * state.dx)
            var = float(((centers - mean) ** 2 * state.rho).sum() * state.dx)
            row.update(
                tv=tv,
                rel_mean_err=abs(mean - ref_mean) / abs(ref_mean) if ref_mean != 0 else abs(mean),
                rel_cov_err=abs(var - ref_var) / abs(ref_var),
            )
        except (fv1d.CflError, RuntimeError) as exc:
            row["error"] = str(exc)
        row["wall_time_s"] = time.perf_counter() - wall0
        rows.append(row)

    failures = sum(1 for row in rows if "error" in row)
    fits = _fit_sweeps(rows, 1)
    record = RunRecord(
        config_hash=chash,
        rows=rows,
        fits=fits,
        wall_time_s=time.perf_counter() - t_start,
        failures=failures,
    )
    record.csv_path = config.out_dir / "pde_results.csv"
    record.summary_path = config.out_dir / "pde_slopes.json"
    _write_csv(record.csv_path, rows)
    record.summary_path.write_text(json.dumps(fits, indent=1))
    return record


# ---------------------------------------------------------------------------
# raw sample dump
# ---------------------------------------------------------------------------

def run_sample_dump(config: ExperimentConfig) -> list[Path]:
    """Integrate one cell per delta and dump final particle coordinates."""
    config.out_dir.mkdir(parents=True, exist_ok=True)
    target = config.target
    center = target.mean()
    paths = []
    for i, (delta, n) in enumerate(zip(config.deltas, config.n_steps)):
        ss, _ = _cell_seed(config.seed, i, 0)
        rng = np.random.default_rng(ss)
        states = rng.standard_normal((config.particles, target.d))
        fieldv = VelocityField(
            target=target,
            horizon=config.horizon,
            tau=config.tau,
            perturbation=ScorePerturbation(config.perturbation, delta, center),
        )
        grid = make_grid(0.0, config.t_end, n)
        ensemble = ParticleEnsemble(states=states, t=0.0, seed_key=(config.seed, i, 0))
        final = integrate(config.tableau, fieldv, ensemble, grid).final.states
        path = config.out_dir / f"samples_delta{delta!r}.csv"
        with open(path, "w", newline="") as fh:
            fh.write(",".join(f"x{j}" for j in range(target.d)) + "\n")
            for point in final:
                fh.write(",".join(repr(float(v)) for v in point) + "\n")
        paths.append(path)
    return paths
