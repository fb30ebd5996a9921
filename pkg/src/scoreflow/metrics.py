"""Measurement layer: KDE, total-variation and moment errors, slope fits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import gaussian_kde_grid
from .fv1d import DensityField1D, total_variation_grid
from .mixture import GaussianMixture, marginalize

__all__ = [
    "KDEConfig",
    "LogLogFit",
    "MetricsReport",
    "MomentErrors",
    "density_on_grid",
    "fit_loglog",
    "fit_slope",
    "kde_1d",
    "moment_errors",
    "silverman_bandwidth",
    "tv_marginal",
]


def silverman_bandwidth(n: int, d: int, t: float, horizon: float) -> float:
    """Gaussian-kernel rule-of-thumb bandwidth with a late-time taper.

    ``(4 / (n (d + 2)))**(1 / (d + 4)) * (1 - t / (2 T))`` where ``t`` is
    the elapsed reverse time and ``T`` the horizon, so the factor tapers
    from 1 at the start of a reverse run to 1/2 at its end.
    """
    if n < 2:
        raise ValueError(f"need at least 2 samples, got {n}")
    if d < 1:
        raise ValueError(f"need d >= 1, got {d}")
    if not 0 <= t <= horizon:
        raise ValueError(f"need 0 <= t <= horizon, got t={t}, horizon={horizon}")
    return float((4.0 / (n * (d + 2))) ** (1.0 / (d + 4)) * (1.0 - t / (2.0 * horizon)))


@dataclass(frozen=True)
class KDEConfig:
    """Evaluation grid plus bandwidth rule inputs.

    ``bandwidth`` overrides the Silverman rule when set; otherwise the
    rule is applied with the estimate's own sample count, ``d = 1`` (the
    kernel estimate here is always univariate), reverse time ``t`` and
    ``horizon``.
    """

    lo: float = -10.0
    hi: float = 10.0
    points: int = 2000
    t: float = 0.0
    horizon: float = 8.0
    bandwidth: float | None = None

    def __post_init__(self):
        if self.points < 2:
            raise ValueError(f"need at least 2 grid points, got {self.points}")
        if not self.hi > self.lo:
            raise ValueError(f"need hi > lo, got [{self.lo}, {self.hi}]")
        if self.bandwidth is not None and self.bandwidth <= 0:
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")

    def resolve_bandwidth(self, n: int) -> float:
        if self.bandwidth is not None:
            return self.bandwidth
        return silverman_bandwidth(n, 1, self.t, self.horizon)


def kde_1d(samples: np.ndarray, config: KDEConfig) -> DensityField1D:
    """Gaussian-kernel estimate on the config grid, mass-normalized."""
    samples = np.asarray(samples, dtype=np.float64).ravel()
    if samples.shape[0] < 2:
        raise ValueError(f"need at least 2 samples, got {samples.shape[0]}")
    field = DensityField1D(x_lo=config.lo, x_hi=config.hi, rho=np.zeros(config.points))
    values = gaussian_kde_grid(samples, field.centers, config.resolve_bandwidth(samples.shape[0]))
    total = values.sum() * field.dx
    if total <= 0:
        raise ValueError("estimate has no mass on the evaluation grid")
    return DensityField1D(x_lo=config.lo, x_hi=config.hi, rho=values / total)


def density_on_grid(gm: GaussianMixture, config: KDEConfig) -> DensityField1D:
    """Analytic mixture density sampled on the config grid, mass-normalized."""
    if gm.d != 1:
        raise ValueError("grid densities are one-dimensional; marginalize first")
    field = DensityField1D(x_lo=config.lo, x_hi=config.hi, rho=np.zeros(config.points))
    values = np.exp(gm.log_density(field.centers[:, None]))
    total = values.sum() * field.dx
    return DensityField1D(x_lo=config.lo, x_hi=config.hi, rho=values / total)


def tv_marginal(
    samples: np.ndarray,
    reference: GaussianMixture,
    dim_index: int,
    config: KDEConfig,
) -> float:
    """Grid TV between a coordinate's KDE and the analytic marginal."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim == 1:
        samples = samples[:, None]
    if not 0 <= dim_index < samples.shape[1]:
        raise ValueError(f"dim_index {dim_index} out of range for d={samples.shape[1]}")
    marginal = reference if reference.d == 1 else marginalize(reference, [dim_index])
    estimated = kde_1d(samples[:, dim_index], config)
    return total_variation_grid(estimated, density_on_grid(marginal, config))


@dataclass(frozen=True)
class MomentErrors:
    rel_mean_err: float
    rel_cov_err: float
    mean_err_is_absolute: bool = False


def moment_errors(samples: np.ndarray, reference: GaussianMixture) -> MomentErrors:
    """Relative mean (L2) and covariance (Frobenius) errors vs closed form.

    A centered reference has no meaningful relative mean error; the
    absolute error is reported instead, flagged.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim == 1:
        samples = samples[:, None]
    if samples.shape[0] < 2:
        raise ValueError(f"need at least 2 samples, got {samples.shape[0]}")
    ref_mean = reference.mean()
    ref_cov = reference.covariance()
    mean = samples.mean(axis=0)
    centered = samples - mean
    cov = centered.T @ centered / samples.shape[0]

    mean_norm = float(np.linalg.norm(ref_mean))
    mean_err = float(np.linalg.norm(mean - ref_mean))
    absolute = mean_norm == 0.0
    rel_mean = mean_err if absolute else mean_err / mean_norm
    rel_cov = float(np.linalg.norm(cov - ref_cov) / np.linalg.norm(ref_cov))
    return MomentErrors(rel_mean_err=rel_mean, rel_cov_err=rel_cov, mean_err_is_absolute=absolute)


@dataclass(frozen=True)
class MetricsReport:
    """Measured errors for one sweep cell."""

    tv: float
    rel_mean_err: float
    rel_cov_err: float
    mean_err_is_absolute: bool = False

    def __post_init__(self):
        if np.isfinite(self.tv) and not -1e-9 <= self.tv <= 1.0 + 1e-9:
            raise ValueError(f"total variation must lie in [0, 1], got {self.tv}")


@dataclass(frozen=True)
class LogLogFit:
    slope: float
    intercept: float
    r2: float
    n_points: int


def fit_loglog(xs, ys) -> LogLogFit:
    """Least-squares fit of log(y) against log(x)."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError("xs and ys must be 1D arrays of equal length")
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise ValueError("log-log fit requires strictly positive values")
    if np.unique(xs).shape[0] < 2:
        raise ValueError("need at least 2 distinct x values")
    lx, ly = np.log(xs), np.log(ys)
    slope, intercept = np.polyfit(lx, ly, 1)
    pred = slope * lx + intercept
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return LogLogFit(slope=float(slope), intercept=float(intercept), r2=r2, n_points=xs.shape[0])


def fit_slope(points) -> float:
    """Slope of log y vs log x for an iterable of positive (x, y) pairs."""
    pts = list(points)
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    return fit_loglog(xs, ys).slope
