"""Robust inference pipeline: surface learner, resampling kappa estimate, intervals.

The interval construction is a two-step Bonferroni procedure: a uniform
confidence set for the interaction strength from the MPLE limit law, then the
worst-case quantile of the uniform Hajek law over that set, scaled by an
upper bound for the influence moments estimated by resampling.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import warnings

import numpy as np

from .estimators import hajek, mple, MpleResult
from .ising import TreatmentDraw
from .laws import (
    DEFAULT_LAW_SEED,
    LimitLawParams,
    hn_quantile,
    mple_limit_quantile,
)
from .outcomes import SimDataset


class BandwidthError(ValueError):
    """Effective local sample too small for the requested bandwidth."""


class RankError(ValueError):
    """Singular local design (all weighted exposures equal)."""


def _epanechnikov(u):
    return np.where(np.abs(u) <= 1.0, 0.75 * (1.0 - u * u), 0.0)


def _triangular(u):
    return np.where(np.abs(u) <= 1.0, 1.0 - np.abs(u), 0.0)


def _uniform(u):
    return np.where(np.abs(u) <= 1.0, 0.5, 0.0)


KERNELS = {
    "epanechnikov": _epanechnikov,
    "triangular": _triangular,
    "uniform": _uniform,
}


@dataclass(frozen=True)
class LearnedSurface:
    """Level and slope of each arm's response at the evaluation point x0."""

    value0: float
    value1: float
    deriv0: float
    deriv1: float
    x0: float
    bandwidth: float

    def predict(self, t, x):
        """First-order expansion around x0 (the learner certifies only (value, slope))."""
        t = np.asarray(t, dtype=np.float64)
        x = np.asarray(x, dtype=np.float64)
        val1 = self.value1 + self.deriv1 * (x - self.x0)
        val0 = self.value0 + self.deriv0 * (x - self.x0)
        return t * val1 + (1.0 - t) * val0


@dataclass(frozen=True)
class KappaEstimate:
    """Resampled upper-bound-scale estimate: khat and the bound sqrt(khat) passed on."""

    khat: float
    kn_bound: float


@dataclass
class PredictionInterval:
    lo: float
    hi: float
    alpha1: float
    alpha2: float
    beta_set: np.ndarray
    used_fallback: bool = False
    tau_hat: float = np.nan
    kn: float = np.nan
    beta_hat: float = np.nan

    @property
    def length(self) -> float:
        return self.hi - self.lo

    def covers(self, value: float) -> bool:
        return self.lo <= value <= self.hi


@dataclass(frozen=True)
class LearnerConfig:
    x0: float = None
    bandwidth: float = None
    kernel: str = "epanechnikov"


def default_bandwidth(dataset: SimDataset) -> float:
    """1.5 (n rho)^{-1/5} with n rho proxied by the mean degree."""
    mean_deg = max(float(dataset.graph.degrees.mean()), 1.0)
    return 1.5 * mean_deg ** -0.2


def local_linear_fit(dataset: SimDataset, arm: int, x0: float, bandwidth: float,
                     kernel: str = "epanechnikov"):
    """Weighted least squares of Y on (1, frac - x0) within one arm.

    Returns (value, derivative) = (intercept, slope) at x0.
    """
    if bandwidth <= 0:
        raise BandwidthError("bandwidth must be positive")
    kfun = KERNELS[kernel]
    in_arm = (dataset.draw.t == arm) & dataset.exposures.defined
    x = dataset.exposures.frac[in_arm]
    y = dataset.y[in_arm]
    w = kfun((x - x0) / bandwidth)
    active = w > 0
    if int(active.sum()) < 2:
        raise BandwidthError("fewer than 2 in-arm units receive kernel weight")
    x, y, w = x[active], y[active], w[active]
    d = x - x0
    sw, sx, sxx = w.sum(), (w * d).sum(), (w * d * d).sum()
    sy, sxy = (w * y).sum(), (w * d * y).sum()
    det = sw * sxx - sx * sx
    scale = sw * sxx + sx * sx
    if det <= 1e-12 * max(scale, 1e-300):
        raise RankError("singular local design: weighted exposures carry no spread")
    value = (sxx * sy - sx * sxy) / det
    deriv = (sw * sxy - sx * sy) / det
    return float(value), float(deriv)


def fit_surface(dataset: SimDataset, config: LearnerConfig = LearnerConfig()) -> LearnedSurface:
    """Fit both arms at the exposure concentration point."""
    x0 = config.x0 if config.x0 is not None else dataset.fill_frac
    bw = config.bandwidth if config.bandwidth is not None else default_bandwidth(dataset)
    v0, d0 = local_linear_fit(dataset, 0, x0, bw, config.kernel)
    v1, d1 = local_linear_fit(dataset, 1, x0, bw, config.kernel)
    return LearnedSurface(value0=v0, value1=v1, deriv0=d0, deriv1=d1, x0=x0, bandwidth=bw)


def residuals(dataset: SimDataset, surface: LearnedSurface) -> np.ndarray:
    """eps_hat_i = Y_i - fhat(T_i, frac_i), with undefined fractions at x0."""
    frac = dataset.exposures.filled(surface.x0)
    return dataset.y - surface.predict(dataset.draw.t, frac)


def kappa2_resample(dataset: SimDataset, surface: LearnedSurface,
                    rng: np.random.Generator, t_star: np.ndarray = None) -> KappaEstimate:
    """Resampling estimate of the squared influence bound.

    Redraws treatments as fair coins, forms plug-in and leave-one-out
    unbiased-estimator replicates from the learned surface plus residuals,
    and aggregates their jackknife-style deviations:

        Khat = n * sum_i (tau^a_(i) - mean_a + tau^b_(i) - mean_b)^2.

    Because the learned surface is linear around x0, the leave-one-out pass
    reduces to two adjacency products.
    """
    graph = dataset.graph
    n = graph.n
    adj = graph.adjacency
    deg = graph.degrees.astype(np.float64)
    x0 = surface.x0
    eps_hat = residuals(dataset, surface)
    if t_star is None:
        t_star = rng.integers(0, 2, n).astype(np.int8)
    ts = t_star.astype(np.float64)

    m_star = adj @ ts  # float product; int8 would overflow at moderate degree
    with np.errstate(divide="ignore", invalid="ignore"):
        x_star = np.where(deg > 0, m_star / np.maximum(deg, 1.0), x0)

    f1 = surface.value1 + surface.deriv1 * (x_star - x0)
    f0 = surface.value0 + surface.deriv0 * (x_star - x0)
    phi = 2.0 * ts * (f1 + eps_hat) - 2.0 * (1.0 - ts) * (f0 + eps_hat)
    cj = 2.0 * ts * surface.deriv1 - 2.0 * (1.0 - ts) * surface.deriv0

    phi_sum = phi.sum()
    tau_a = (phi_sum - phi) / n

    # leave-one-out exposure shifts enter linearly through the slopes
    ge2 = deg >= 2
    eq1 = deg == 1
    u = np.where(ge2, cj * m_star / np.maximum(deg * (deg - 1.0), 1.0), 0.0)
    v = np.where(ge2, cj / np.maximum(deg - 1.0, 1.0), 0.0)
    w1 = np.where(eq1, cj * (x0 - x_star), 0.0)
    shift = (adj @ u) - ts * (adj @ v) + (adj @ w1)
    tau_b = phi_sum / n + shift / n

    dev = tau_a - tau_a.mean() + tau_b - tau_b.mean()
    khat = float(n * np.sum(dev * dev))
    return KappaEstimate(khat=khat, kn_bound=float(np.sqrt(khat)))


def kappa2_resample_naive(dataset: SimDataset, surface: LearnedSurface,
                          t_star: np.ndarray) -> KappaEstimate:
    """Direct O(n^2) transcription of the resampling steps (reference oracle)."""
    graph = dataset.graph
    n = graph.n
    a = np.asarray(graph.adjacency.todense(), dtype=np.float64)
    x0 = surface.x0
    eps_hat = residuals(dataset, surface)
    ts = t_star.astype(np.float64)

    def fhat(arm, x):
        if arm == 1:
            return surface.value1 + surface.deriv1 * (x - x0)
        return surface.value0 + surface.deriv0 * (x - x0)

    def frac_of(m, nn):
        return m / nn if nn > 0 else x0

    m_star = a @ ts
    n_star = a.sum(axis=1)
    tau_a = np.empty(n)
    tau_b = np.empty(n)
    for i in range(n):
        acc = 0.0
        for j in range(n):
            if j == i:
                continue
            xj = frac_of(m_star[j], n_star[j])
            acc += 2 * ts[j] * (fhat(1, xj) + eps_hat[j]) - 2 * (1 - ts[j]) * (fhat(0, xj) + eps_hat[j])
        tau_a[i] = acc / n
        acc = 0.0
        for j in range(n):
            mji = m_star[j] - a[j, i] * ts[i]
            nji = n_star[j] - a[j, i]
            xji = frac_of(mji, nji)
            acc += 2 * ts[j] * (fhat(1, xji) + eps_hat[j]) - 2 * (1 - ts[j]) * (fhat(0, xji) + eps_hat[j])
        tau_b[i] = acc / n
    dev = tau_a - tau_a.mean() + tau_b - tau_b.mean()
    khat = float(n * np.sum(dev * dev))
    return KappaEstimate(khat=khat, kn_bound=float(np.sqrt(khat)))


def default_beta_grid(num: int = 201) -> np.ndarray:
    return np.linspace(0.0, 1.0, num)


@dataclass
class InferenceTables:
    """Per-(n, grid, levels) caches for the two-step construction.

    base_hi/base_lo are quantiles of the uniform Hajek law at unit influence
    bound (kappa1, kappa2) = (1, 1): the bound K scales them linearly.
    q_thresholds are the MPLE-law cutoffs defining the confidence set.
    """

    n: int
    grid: np.ndarray
    alpha1: float
    alpha2: float
    base_hi: np.ndarray
    base_lo: np.ndarray
    q_thresholds: np.ndarray

    @classmethod
    def build(cls, n: int, grid: np.ndarray, alpha1: float, alpha2: float,
              law_seed: int = DEFAULT_LAW_SEED) -> "InferenceTables":
        grid = np.asarray(grid, dtype=np.float64)
        hi = np.empty(grid.size)
        lo = np.empty(grid.size)
        qs = np.empty(grid.size)
        for k, beta in enumerate(grid):
            params = LimitLawParams(kappa1=1.0, kappa2=1.0, n=n, beta=float(beta))
            hi[k] = hn_quantile(1.0 - alpha2 / 2.0, params)
            lo[k] = hn_quantile(alpha2 / 2.0, params)
            qs[k] = mple_limit_quantile(alpha1, params.c, n, law_seed=law_seed)
        return cls(n=n, grid=grid, alpha1=alpha1, alpha2=alpha2,
                   base_hi=hi, base_lo=lo, q_thresholds=qs)


_tables_cache: dict = {}


def get_tables(n: int, grid: np.ndarray, alpha1: float, alpha2: float) -> InferenceTables:
    key = (int(n), float(alpha1), float(alpha2), np.asarray(grid).tobytes())
    tab = _tables_cache.get(key)
    if tab is None:
        if len(_tables_cache) > 32:
            _tables_cache.clear()
        tab = InferenceTables.build(n, grid, alpha1, alpha2)
        _tables_cache[key] = tab
    return tab


def beta_confidence_set(beta_hat, alpha1: float, n: int, grid=None,
                        tables: InferenceTables = None) -> np.ndarray:
    """Grid points beta whose MPLE-law cutoff q(beta) is below 1 - beta_hat."""
    if isinstance(beta_hat, MpleResult):
        beta_hat = beta_hat.beta_hat
    if grid is None:
        grid = default_beta_grid() if tables is None else tables.grid
    grid = np.asarray(grid, dtype=np.float64)
    if grid.size == 0:
        raise ValueError("grid must be nonempty")
    if tables is None:
        qs = np.array([mple_limit_quantile(alpha1, float(np.sqrt(n) * (1.0 - b)), n)
                       for b in grid])
    else:
        qs = tables.q_thresholds
    return grid[1.0 - beta_hat >= qs]


def infeasible_interval(t, y, kn: float, alpha1: float, alpha2: float,
                        grid=None, tables: InferenceTables = None) -> PredictionInterval:
    """Two-step interval with a known influence bound K_n (kappa2 <= K_n^2).

    The uniform-law quantiles are evaluated at (kappa1, kappa2) = (K_n, K_n^2),
    which dominates every admissible pair; the sup/inf runs over the retained
    beta grid, falling back to the full grid (flagged) if the set is empty.
    """
    if kn < 0:
        raise ValueError("kn must be >= 0")
    draw = t if isinstance(t, TreatmentDraw) else TreatmentDraw(np.asarray(t, dtype=np.int8))
    n = draw.n
    if grid is None and tables is None:
        grid = default_beta_grid()
    if tables is None:
        tables = get_tables(n, grid, alpha1, alpha2)
    fit = mple(draw)
    keep = 1.0 - fit.beta_hat >= tables.q_thresholds
    used_fallback = False
    if not keep.any():
        keep = np.ones(tables.grid.size, dtype=bool)
        used_fallback = True
    hi = kn * float(tables.base_hi[keep].max())
    lo = kn * float(tables.base_lo[keep].min())
    tau = hajek(draw, y)
    return PredictionInterval(lo=tau + lo, hi=tau + hi, alpha1=alpha1, alpha2=alpha2,
                              beta_set=tables.grid[keep], used_fallback=used_fallback,
                              tau_hat=tau, kn=kn, beta_hat=fit.beta_hat)


def feasible_interval(dataset: SimDataset, alpha1: float, alpha2: float,
                      rng: np.random.Generator, grid=None,
                      learner: LearnerConfig = LearnerConfig(),
                      surface: LearnedSurface = None,
                      tables: InferenceTables = None) -> PredictionInterval:
    """Fully data-driven interval: learner -> resampled bound -> two-step interval."""
    n = dataset.n
    mean_deg = float(dataset.graph.degrees.mean())
    if mean_deg ** 3 / max(n, 1) ** 2 < 1.0:
        warnings.warn("sparse regime: (n rho)^3 / n^2 is small; interval may be unreliable",
                      RuntimeWarning)
    if surface is None:
        surface = fit_surface(dataset, learner)
    kappa = kappa2_resample(dataset, surface, rng)
    out = infeasible_interval(dataset.draw, dataset.y, kappa.kn_bound, alpha1, alpha2,
                              grid=grid, tables=tables)
    return out
