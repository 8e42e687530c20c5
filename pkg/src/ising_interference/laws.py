"""Numerical CDFs, quantiles, and samplers for the approximating laws.

The building block is the symmetric family with density proportional to
exp(-x^4/12 - c x^2/2), c >= 0: Gaussian-like for large c, quartic at c = 0.
Pointwise laws are Gaussian (high temperature) or a scaled quartic draw
(critical); the uniform law is the independent sum of a Gaussian and a
quartic-tilt term at drift c = sqrt(n) (1 - beta).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.special import ndtr, ndtri
from scipy.stats import qmc

from .ising import IsingParams, solve_fixed_points

DEFAULT_LAW_SEED = 202208
_GRID_POINTS = 2 ** 14 + 1
_TAIL_LOG = 60.0  # density cutoff exp(-60) relative to the peak


def _halfwidth(c: float) -> float:
    # solve y^2/12 + c*y/2 = TAIL_LOG for y = L^2
    y = 6.0 * (np.sqrt(c * c / 4.0 + _TAIL_LOG / 3.0) - c / 2.0)
    return float(np.sqrt(y))


_leggauss_store: dict = {}


def _leggauss_cached(npanels: int):
    got = _leggauss_store.get(npanels)
    if got is None:
        got = np.polynomial.legendre.leggauss(npanels)
        _leggauss_store[npanels] = got
    return got


class QuarticTiltLaw:
    """Density proportional to exp(-x^4/12 - c x^2/2) on a cached grid."""

    def __init__(self, c: float, npoints: int = _GRID_POINTS):
        if c < 0:
            raise ValueError("c must be >= 0")
        self.c = float(c)
        L = _halfwidth(self.c)
        self.xs = np.linspace(-L, L, npoints)
        logd = -self.xs ** 4 / 12.0 - self.c * self.xs ** 2 / 2.0
        dens = np.exp(logd)
        cdf = np.concatenate(([0.0], np.cumsum((dens[1:] + dens[:-1]) * 0.5 * np.diff(self.xs))))
        self.norm = cdf[-1]
        cdf = cdf / self.norm
        # enforce the exact symmetry of the law on the table
        cdf = 0.5 * (cdf + 1.0 - cdf[::-1])
        cdf[0], cdf[-1] = 0.0, 1.0
        self._cdf_table = cdf
        self.pdf_table = dens / self.norm
        self._gl = None

    def pdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        out = np.exp(-x ** 4 / 12.0 - self.c * x ** 2 / 2.0) / self.norm
        return out

    def cdf(self, x):
        return np.interp(x, self.xs, self._cdf_table, left=0.0, right=1.0)

    def ppf(self, p):
        p = np.asarray(p, dtype=np.float64)
        if np.any((p <= 0.0) | (p >= 1.0)):
            raise ValueError("p must lie in (0, 1)")
        return np.interp(p, self._cdf_table, self.xs)

    def moment(self, k: int) -> float:
        """E[X^k] by adaptive quadrature, independent of the grid tables."""
        L = self.xs[-1]
        z, _ = quad(lambda x: np.exp(-x ** 4 / 12.0 - self.c * x ** 2 / 2.0), -L, L,
                    points=[0.0], limit=200)
        val, _ = quad(lambda x: x ** k * np.exp(-x ** 4 / 12.0 - self.c * x ** 2 / 2.0),
                      -L, L, points=[0.0], limit=200)
        return val / z

    def sample(self, rng: np.random.Generator, size: int = None):
        """Rejection from N(0, 1/max(c, 1)); acceptance >= 0.63 at c = 0."""
        m = 1 if size is None else int(size)
        c0 = max(self.c, 1.0)
        sd = 1.0 / np.sqrt(c0)
        slack = c0 - self.c
        log_m = 0.75 * slack * slack  # max of the log acceptance ratio
        out = np.empty(m)
        got = 0
        while got < m:
            k = max(2 * (m - got), 64)
            x = rng.normal(0.0, sd, k)
            logr = -x ** 4 / 12.0 + 0.5 * slack * x * x - log_m
            keep = np.log(rng.random(k)) <= logr
            take = min(int(keep.sum()), m - got)
            out[got:got + take] = x[keep][:take]
            got += take
        return out[0] if size is None else out

    def gauss_legendre(self, npanels: int = 2001):
        """Nodes, weights, and density values for integrating against the law."""
        if self._gl is None:
            nodes, weights = _leggauss_cached(npanels)
            L = self.xs[-1]
            x = nodes * L
            w = weights * L * self.pdf(x)
            self._gl = (x, w / w.sum())
        return self._gl


_law_cache: dict = {}


def _wc_law(c: float) -> QuarticTiltLaw:
    key = round(float(c), 12)
    law = _law_cache.get(key)
    if law is None:
        if len(_law_cache) > 64:
            _law_cache.clear()
        law = QuarticTiltLaw(key)
        _law_cache[key] = law
    return law


def wc_cdf(c: float, w) -> float | np.ndarray:
    return _wc_law(c).cdf(w)


def wc_quantile(c: float, p) -> float | np.ndarray:
    return _wc_law(c).ppf(p)


def wc_sample(c: float, rng: np.random.Generator, size: int = None):
    return _wc_law(c).sample(rng, size)


def wc_moment(c: float, k: int) -> float:
    return _wc_law(c).moment(k)


@dataclass(frozen=True)
class LimitLawParams:
    """(kappa1, kappa2, n, beta) with the derived drift c = sqrt(n)(1 - beta)."""

    kappa1: float
    kappa2: float
    n: int
    beta: float
    c: float = field(init=False)

    def __post_init__(self):
        if self.kappa2 < 0:
            raise ValueError("kappa2 must be >= 0")
        if not (0.0 <= self.beta <= 1.0):
            raise ValueError("beta must lie in [0, 1]")
        object.__setattr__(self, "c", float(np.sqrt(self.n) * (1.0 - self.beta)))


def ln_sd(params: LimitLawParams) -> float:
    """High-temperature standard deviation sqrt((kappa2 + kappa1^2 beta/(1-beta))/n)."""
    if params.beta >= 1.0:
        raise ValueError("high-temperature law requires beta < 1")
    var = params.kappa2 + params.kappa1 ** 2 * params.beta / (1.0 - params.beta)
    return float(np.sqrt(var / params.n))


def ln_quantile(p, params: LimitLawParams, regime: str = "high"):
    """Pointwise-law quantile: Gaussian below the critical point, scaled quartic at it."""
    if regime == "high":
        return ln_sd(params) * ndtri(p)
    if regime == "critical":
        scale = params.n ** -0.25 * params.kappa1
        return scale * wc_quantile(0.0, p)
    raise ValueError("regime must be 'high' or 'critical'")


def ln_cdf(t, params: LimitLawParams, regime: str = "high"):
    if regime == "high":
        return ndtr(np.asarray(t) / ln_sd(params))
    if regime == "critical":
        scale = params.n ** -0.25 * params.kappa1
        return wc_cdf(0.0, np.asarray(t) / scale)
    raise ValueError("regime must be 'high' or 'critical'")


def _hn_scales(params: LimitLawParams):
    a = np.sqrt(params.kappa2 / params.n)
    b = np.sqrt(params.beta) * params.n ** -0.25 * params.kappa1
    return float(a), float(b)


def hn_cdf(t, params: LimitLawParams):
    """CDF of n^{-1/2} kappa2^{1/2} Z + beta^{1/2} n^{-1/4} kappa1 W_c."""
    a, b = _hn_scales(params)
    t = np.asarray(t, dtype=np.float64)
    if b == 0.0 and a == 0.0:
        return (t >= 0.0).astype(float)
    if b == 0.0:
        return ndtr(t / a)
    law = _wc_law(params.c)
    if a == 0.0:
        return law.cdf(t / b)
    x, w = law.gauss_legendre()
    return ndtr((t[..., None] - b * x) / a) @ w


def hn_quantile(p: float, params: LimitLawParams, xtol: float = None) -> float:
    """Quantile of the uniform law, by bisection on the quadrature CDF."""
    a, b = _hn_scales(params)
    if a == 0.0 and b == 0.0:
        return 0.0
    if b == 0.0:
        return a * float(ndtri(p))
    law = _wc_law(params.c)
    if a == 0.0:
        return b * float(law.ppf(p))
    lo = -(8.0 * a + b * law.xs[-1])
    hi = -lo
    if xtol is None:
        xtol = 1e-9 * (a + b)
    x, w = law.gauss_legendre()

    def cdf(t):
        return float(ndtr((t - b * x) / a) @ w)

    plo, phi = cdf(lo), cdf(hi)
    while plo > p:
        lo *= 2.0
        plo = cdf(lo)
    while phi < p:
        hi *= 2.0
        phi = cdf(hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if cdf(mid) < p:
            lo = mid
        else:
            hi = mid
        if hi - lo < xtol:
            break
    return 0.5 * (lo + hi)


_mple_cache: dict = {}


def _mple_law_sample(c: float, n: int, m: int, law_seed: int) -> np.ndarray:
    """Deterministic quasi-random sample of min{max{T^-2 - T^2/(3n), 0}, 1}."""
    key = (round(float(c), 12), int(n), int(m), int(law_seed))
    val = _mple_cache.get(key)
    if val is not None:
        return val
    if len(_mple_cache) > 512:
        _mple_cache.clear()
    sob = qmc.Sobol(d=2, scramble=True, seed=law_seed)
    u = sob.random(m)
    tiny = 0.5 / m
    u = np.clip(u, tiny, 1.0 - tiny)
    z = ndtri(u[:, 0])
    w = _wc_law(c).ppf(u[:, 1])
    t = z + n ** 0.25 * w
    with np.errstate(divide="ignore"):
        raw = t ** -2.0 - t * t / (3.0 * n)
    val = np.clip(raw, 0.0, 1.0)
    val.sort()
    _mple_cache[key] = val
    return val


def mple_limit_quantile(p, c: float, n: int, m: int = 2 ** 18,
                        law_seed: int = DEFAULT_LAW_SEED):
    """Quantile of the uniform MPLE limit law for 1 - beta_hat at drift c.

    Generalized inverse (smallest q with P[law <= q] >= p), matching the
    threshold definition used by the confidence-set step.
    """
    val = _mple_law_sample(c, n, m, law_seed)
    return np.quantile(val, p, method="inverted_cdf")


def mple_limit_cdf(t, c: float, n: int, m: int = 2 ** 18,
                   law_seed: int = DEFAULT_LAW_SEED):
    val = _mple_law_sample(c, n, m, law_seed)
    return np.searchsorted(val, np.asarray(t), side="right") / val.size


def low_temp_law_sd(kappa1: float, kappa2: float, n: int, beta: float,
                    pi_star: float) -> float:
    """Scale of the conditional low-temperature Gaussian law (beta > 1, h = 0).

    n^{-1/2} sqrt( kappa2 (1-pi^2) + kappa1^2 beta (1-pi^2) / (1 - beta(1-pi^2)) ).
    """
    s2 = 1.0 - pi_star * pi_star
    denom = 1.0 - beta * s2
    if denom <= 0.0:
        raise ValueError("unstable root: beta (1 - pi^2) must be < 1")
    var = kappa2 * s2 + kappa1 ** 2 * beta * s2 / denom
    return float(np.sqrt(var / n))


def asym_law_sd(beta: float, h: float, kappa1: float, kappa2: float, n: int) -> float:
    """Scale of the external-field Gaussian law.

    n^{-1/2} sqrt( kappa2 (1-pi^2) + kappa1^2 beta (1-pi^2)^2 / (1 - beta(1-pi^2)) )
    at the stable root pi of x = tanh(beta x + h).
    """
    fp = solve_fixed_points(IsingParams(beta=beta, h=h))
    pi = fp.pi if fp.kind == "unique" else fp.pi_plus
    s2 = 1.0 - pi * pi
    denom = 1.0 - beta * s2
    if denom <= 0.0:
        raise ValueError("unstable root: beta (1 - pi^2) must be < 1")
    var = kappa2 * s2 + kappa1 ** 2 * beta * s2 * s2 / denom
    return float(np.sqrt(var / n))


def block_sigma(beta: float, pi: float) -> float:
    """Per-block spin-fluctuation scale sqrt(beta (1-pi^2)^2 / (1 - beta(1-pi^2)))."""
    s2 = 1.0 - pi * pi
    denom = 1.0 - beta * s2
    if denom <= 0.0:
        raise ValueError("unstable root: beta (1 - pi^2) must be < 1")
    return float(np.sqrt(beta * s2 * s2 / denom))


@dataclass
class BlockLawSpec:
    """Inputs of the block mixture law.

    Per block k: weight p_k, regime tag ("H", "C", or "L" with a chosen sign),
    conditional fixed point pi_k, fluctuation scale sigma_k (unused for "C"),
    mean vector E[S_k] in R^K, and second-moment matrix E[S_k S_k^T].
    """

    p: np.ndarray
    regimes: tuple
    pis: np.ndarray
    sigmas: np.ndarray
    means: np.ndarray            # (K, K)
    second_moments: np.ndarray   # (K, K, K)

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=np.float64)
        self.pis = np.asarray(self.pis, dtype=np.float64)
        self.sigmas = np.asarray(self.sigmas, dtype=np.float64)
        self.means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        self.second_moments = np.asarray(self.second_moments, dtype=np.float64)
        k = self.p.size
        if abs(self.p.sum() - 1.0) > 1e-12:
            raise ValueError("block weights must sum to 1")
        if self.second_moments.shape != (k, k, k) or self.means.shape != (k, k):
            raise ValueError("means must be (K,K) and second_moments (K,K,K)")
        for km in range(k):
            mat = self.second_moments[km]
            if not np.allclose(mat, mat.T, atol=1e-10):
                raise ValueError("second-moment matrices must be symmetric")

    @property
    def K(self) -> int:
        return self.p.size

    def gaussian_root(self) -> np.ndarray:
        """Matrix square root of sum_k E[S_k S_k^T] (1 - pi_k^2) p_k^2."""
        cov = np.zeros((self.K, self.K))
        for k in range(self.K):
            cov += self.second_moments[k] * (1.0 - self.pis[k] ** 2) * self.p[k] ** 2
        vals, vecs = np.linalg.eigh(cov)
        if vals.min() < -1e-10 * max(1.0, abs(vals.max())):
            raise ValueError("second-moment combination is not positive semidefinite")
        vals = np.clip(vals, 0.0, None)
        return vecs @ (np.sqrt(vals)[:, None] * vecs.T)


def single_block_spec(kappa1: float, kappa2: float, beta: float, h: float = 0.0) -> BlockLawSpec:
    """K = 1 helper: the block law then reduces to the external-field Gaussian law."""
    fp = solve_fixed_points(IsingParams(beta=beta, h=h))
    pi = fp.pi if fp.kind == "unique" else fp.pi_plus
    critical = (h == 0.0 and beta == 1.0)
    regime = "C" if critical else "H"
    sigma = np.nan if critical else block_sigma(beta, pi)
    return BlockLawSpec(p=[1.0], regimes=(regime,), pis=[pi], sigmas=[sigma],
                        means=[[kappa1]], second_moments=[[[kappa2]]])


def block_law_sample(spec: BlockLawSpec, n: int, rng: np.random.Generator,
                     size: int = None) -> np.ndarray:
    """Draws from the K-dimensional block mixture law (one row per draw)."""
    m = 1 if size is None else int(size)
    root = spec.gaussian_root()
    out = (n ** -0.5) * rng.standard_normal((m, spec.K)) @ root.T
    for k in range(spec.K):
        if spec.regimes[k] == "C":
            r = wc_sample(0.0, rng, m)
            out += (n ** -0.25) * spec.p[k] * np.outer(r, spec.means[k])
        else:
            z = rng.standard_normal(m)
            out += (n ** -0.5) * spec.p[k] * spec.sigmas[k] * np.outer(z, spec.means[k])
    return out[0] if size is None else out


def ks_distance(samples, cdf) -> float:
    """Sup distance between the empirical CDF of samples and a reference CDF."""
    x = np.sort(np.asarray(samples, dtype=np.float64))
    if x.size == 0:
        raise ValueError("need at least one sample")
    f = np.asarray(cdf(x), dtype=np.float64)
    i = np.arange(1, x.size + 1)
    d_plus = np.max(i / x.size - f)
    d_minus = np.max(f - (i - 1) / x.size)
    return float(max(d_plus, d_minus))


def ks_two_sample(a, b) -> float:
    """Sup distance between two empirical CDFs."""
    a = np.sort(np.asarray(a, dtype=np.float64))
    b = np.sort(np.asarray(b, dtype=np.float64))
    allv = np.concatenate([a, b])
    ca = np.searchsorted(a, allv, side="right") / a.size
    cb = np.searchsorted(b, allv, side="right") / b.size
    return float(np.abs(ca - cb).max())
