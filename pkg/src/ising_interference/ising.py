"""Exact sampling and conditional probabilities for Curie-Weiss treatment assignment.

The assignment law over binary treatments t (spins w_i = 2 t_i - 1) is

    P(T = t)  propto  exp( (beta/n) * sum_{i<j} w_i w_j  +  h * sum_i w_i ),

which depends on t only through the spin sum S = sum_i w_i.  All samplers
here are exact: the magnetization S is drawn from its closed-form pmf and
the treated set is placed uniformly at random (the law is exchangeable).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit, gammaln, logsumexp


class ConfigurationError(ValueError):
    """Invalid model configuration (non-finite densities, bad parameters)."""


@dataclass(frozen=True)
class IsingParams:
    """Interaction strength and external field of the assignment mechanism."""

    beta: float = 0.0
    h: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.beta) and np.isfinite(self.h)):
            raise ConfigurationError("beta and h must be finite")
        if self.beta < 0:
            raise ConfigurationError("beta must be nonnegative")


@dataclass(frozen=True)
class BlockIsingParams:
    """Independent Curie-Weiss blocks: contiguous index ranges of the given sizes."""

    sizes: tuple
    params: tuple

    def __post_init__(self):
        if len(self.sizes) != len(self.params) or len(self.sizes) == 0:
            raise ConfigurationError("sizes and params must have equal positive length")
        if any(int(s) < 1 for s in self.sizes):
            raise ConfigurationError("all block sizes must be >= 1")
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        object.__setattr__(self, "params", tuple(self.params))

    @property
    def n(self) -> int:
        return sum(self.sizes)

    def slices(self):
        """Contiguous unit-index slice for each block."""
        out, start = [], 0
        for s in self.sizes:
            out.append(slice(start, start + s))
            start += s
        return out


@dataclass
class TreatmentDraw:
    """One realized assignment vector with cached spins and magnetization."""

    t: np.ndarray
    block_sizes: tuple | None = None
    block_mags: np.ndarray | None = None
    spins: np.ndarray = field(init=False)
    mag: float = field(init=False)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=np.int8)
        if self.t.ndim != 1 or not np.isin(self.t, (0, 1)).all():
            raise ValueError("t must be a 1-d binary vector")
        self.spins = (2 * self.t - 1).astype(np.int8)
        self.mag = float(self.spins.sum()) / self.t.size

    @property
    def n(self) -> int:
        return self.t.size


@dataclass(frozen=True)
class FixedPoints:
    """Roots of x = tanh(beta*x + h): a unique root, or the low-temperature pair."""

    kind: str  # "unique" | "pair"
    pi: float | None = None
    pi_minus: float | None = None
    pi_plus: float | None = None

    def stable_roots(self):
        if self.kind == "unique":
            return (self.pi,)
        return (self.pi_minus, self.pi_plus)


def magnetization_support(n: int) -> np.ndarray:
    """Spin sums S = sum_i w_i reachable with n units: -n, -n+2, ..., n."""
    return np.arange(-n, n + 1, 2)


def magnetization_log_pmf(n: int, params: IsingParams) -> np.ndarray:
    """Normalized log pmf of the spin sum S over magnetization_support(n).

    log w(S) = log C(n, (n+S)/2) + (beta/(2n)) (S^2 - n) + h S, up to the
    log-sum-exp constant.  The quadratic coefficient beta/(2n) matches the
    pairwise exponent (beta/n) sum_{i<j} w_i w_j.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    s = magnetization_support(n).astype(np.float64)
    k = (n + s) / 2.0
    # grouped so the h = 0 pmf is bit-exactly symmetric under S -> -S
    log_binom = gammaln(n + 1) - (gammaln(k + 1) + gammaln(n - k + 1))
    logw = log_binom + params.beta / (2.0 * n) * (s * s - n) + params.h * s
    return logw - logsumexp(logw)


class TreatmentSampler:
    """Exact sampler for one Curie-Weiss block, caching the magnetization pmf."""

    def __init__(self, n: int, params: IsingParams):
        self.n = int(n)
        self.params = params
        self.support = magnetization_support(self.n)
        self.pmf = np.exp(magnetization_log_pmf(self.n, params))
        self.pmf /= self.pmf.sum()

    def draw_spin_sums(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.choice(self.support, size=size, p=self.pmf)

    def draw_mags(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Magnetizations only; skips placing the treated set."""
        return self.draw_spin_sums(rng, size) / self.n

    def draw_t(self, rng: np.random.Generator) -> np.ndarray:
        s = int(self.draw_spin_sums(rng, 1)[0])
        k = (self.n + s) // 2
        t = np.zeros(self.n, dtype=np.int8)
        if k > 0:
            t[rng.permutation(self.n)[:k]] = 1
        return t

    def draw_t_batch(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """(size, n) matrix of independent assignment vectors."""
        sums = self.draw_spin_sums(rng, size)
        out = np.zeros((size, self.n), dtype=np.int8)
        for r in range(size):
            k = (self.n + int(sums[r])) // 2
            if k > 0:
                out[r, rng.permutation(self.n)[:k]] = 1
        return out

    def draw(self, rng: np.random.Generator) -> TreatmentDraw:
        return TreatmentDraw(self.draw_t(rng))


def sample_treatments(n: int, params: IsingParams, rng: np.random.Generator) -> TreatmentDraw:
    """One exact draw from the assignment law."""
    return TreatmentSampler(n, params).draw(rng)


def sample_block_treatments(cfg: BlockIsingParams, rng: np.random.Generator) -> TreatmentDraw:
    """Independent blockwise draw; block magnetizations are recorded."""
    parts = []
    for size, params in zip(cfg.sizes, cfg.params):
        parts.append(TreatmentSampler(size, params).draw_t(rng))
    t = np.concatenate(parts)
    block_mags = np.array([(2.0 * p.sum() - p.size) / p.size for p in parts])
    return TreatmentDraw(t, block_sizes=cfg.sizes, block_mags=block_mags)


def leave_one_out_mags(draw: TreatmentDraw) -> np.ndarray:
    """m_i = n^{-1} sum_{j != i} w_j for every unit."""
    n = draw.n
    return (n * draw.mag - draw.spins) / n


def conditional_prob(i: int, draw: TreatmentDraw, params: IsingParams) -> float:
    """P(W_i = +1 | W_{-i}) = (1 + exp(-2 beta m_i - 2 h))^{-1}."""
    m_i = (draw.n * draw.mag - draw.spins[i]) / draw.n
    return float(expit(2.0 * params.beta * m_i + 2.0 * params.h))


def conditional_probs(draw: TreatmentDraw, params: IsingParams) -> np.ndarray:
    """Vectorized conditional_prob over all units."""
    return expit(2.0 * params.beta * leave_one_out_mags(draw) + 2.0 * params.h)


def _latent_grid(n: int, params: IsingParams, num: int = 20001):
    """Grid and log-density for the scaled latent variable v = U_n / sqrt(n).

    The latent density is proportional to exp(n * (-v^2/2 + log cosh(sqrt(beta) v + h))).
    The grid is centered on the density modes (the tanh fixed points mapped to
    v = sqrt(beta) * pi) with a width generous for every temperature regime.
    """
    beta, h = params.beta, params.h
    roots = solve_fixed_points(params).stable_roots()
    modes = [np.sqrt(beta) * r for r in roots]
    width = 15.0 * n ** -0.25
    if beta < 1.0:
        width = max(width, 15.0 / np.sqrt(n * (1.0 - beta)))
    lo = min(modes) - width
    hi = max(modes) + width
    v = np.linspace(lo, hi, num)
    logdens = n * (-0.5 * v * v + np.log(np.cosh(np.sqrt(beta) * v + h)))
    return v, logdens


def definetti_sample(n: int, params: IsingParams, rng: np.random.Generator) -> TreatmentDraw:
    """Latent-variable sampler: draw U_n, then spins i.i.d. given U_n.

    Cross-check route for sample_treatments; both are exact in distribution
    (up to the inverse-CDF grid of the latent draw).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    v, logdens = _latent_grid(n, params)
    logdens = logdens - logdens.max()
    dens = np.exp(logdens)
    cdf = np.concatenate(([0.0], np.cumsum((dens[1:] + dens[:-1]) * 0.5 * np.diff(v))))
    if not np.isfinite(cdf[-1]) or cdf[-1] <= 0:
        raise ConfigurationError("latent density normalization failed")
    cdf /= cdf[-1]
    v_draw = float(np.interp(rng.random(), cdf, v))
    p_one = 0.5 * (np.tanh(np.sqrt(params.beta) * v_draw + params.h) + 1.0)
    t = (rng.random(n) < p_one).astype(np.int8)
    return TreatmentDraw(t)


def definetti_mags(n: int, params: IsingParams, rng: np.random.Generator, size: int) -> np.ndarray:
    """Batch of magnetizations from the latent-variable route (for KS checks)."""
    v, logdens = _latent_grid(n, params)
    logdens = logdens - logdens.max()
    dens = np.exp(logdens)
    cdf = np.concatenate(([0.0], np.cumsum((dens[1:] + dens[:-1]) * 0.5 * np.diff(v))))
    if not np.isfinite(cdf[-1]) or cdf[-1] <= 0:
        raise ConfigurationError("latent density normalization failed")
    cdf /= cdf[-1]
    v_draws = np.interp(rng.random(size), cdf, v)
    p_one = 0.5 * (np.tanh(np.sqrt(params.beta) * v_draws + params.h) + 1.0)
    treated = rng.binomial(n, p_one)
    return (2.0 * treated - n) / n


def solve_fixed_points(params: IsingParams, tol: float = 1e-14) -> FixedPoints:
    """Roots of x = tanh(beta*x + h).

    Unique root when h != 0 or beta <= 1 (for h != 0 the root on the side of
    the field, which is the stable one); the symmetric pair when h = 0 and
    beta > 1.
    """
    beta, h = params.beta, params.h

    def g(x):
        return x - np.tanh(beta * x + h)

    if h == 0.0:
        if beta <= 1.0:
            return FixedPoints(kind="unique", pi=0.0)
        lo = 1e-8
        while g(lo) > 0:  # guard: just inside 0 the curve is above the diagonal
            lo *= 0.1
        root = brentq(g, lo, 1.0, xtol=tol)
        return FixedPoints(kind="pair", pi_minus=-root, pi_plus=root)
    if h > 0:
        root = brentq(g, 0.0, 1.0, xtol=tol)
    else:
        root = brentq(g, -1.0, 0.0, xtol=tol)
    return FixedPoints(kind="unique", pi=float(root))


def exposure_center(params: IsingParams) -> float:
    """Concentration point of the treated-neighbor fraction, (1 + pi)/2.

    For low-temperature h = 0 the positive branch is returned; callers doing
    conditional analysis should map the sign themselves.
    """
    fp = solve_fixed_points(params)
    pi = fp.pi if fp.kind == "unique" else fp.pi_plus
    return 0.5 * (1.0 + pi)
