"""Point estimators: Hajek (global and blockwise), unbiased IPW, and the MPLE for beta."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq, minimize_scalar
from scipy.special import log_expit

from .ising import BlockIsingParams, IsingParams, TreatmentDraw, conditional_probs


class DegenerateArmError(ValueError):
    """Raised when a treatment arm is empty."""


def _as_draw(t) -> TreatmentDraw:
    return t if isinstance(t, TreatmentDraw) else TreatmentDraw(np.asarray(t, dtype=np.int8))


def hajek(t, y) -> float:
    """Difference of treated and control outcome means."""
    draw = _as_draw(t)
    yv = np.asarray(y, dtype=np.float64)
    n1 = int(draw.t.sum())
    n0 = draw.n - n1
    if n1 == 0 or n0 == 0:
        raise DegenerateArmError("both arms must be non-empty")
    treated = draw.t == 1
    return float(yv[treated].mean() - yv[~treated].mean())


def hajek_blockwise(t, y, cfg: BlockIsingParams) -> np.ndarray:
    """Per-block Hajek estimates for contiguous blocks of the given sizes."""
    draw = _as_draw(t)
    yv = np.asarray(y, dtype=np.float64)
    if draw.n != cfg.n:
        raise ValueError("treatment length does not match block sizes")
    out = np.empty(len(cfg.sizes))
    for k, sl in enumerate(cfg.slices()):
        try:
            out[k] = hajek(draw.t[sl], yv[sl])
        except DegenerateArmError as exc:
            raise DegenerateArmError(f"block {k} has an empty arm") from exc
    return out


def ipw_unbiased(t, y, params: IsingParams) -> float:
    """Inverse-probability estimator with the exact conditional propensities.

    tau_UB = n^{-1} sum_i [ T_i Y_i / p_i - (1-T_i) Y_i / (1-p_i) ] with
    p_i = P(W_i = +1 | W_{-i}); unbiased for the predictand given the graph
    and outcome functions.
    """
    draw = _as_draw(t)
    yv = np.asarray(y, dtype=np.float64)
    p = conditional_probs(draw, params)
    tv = draw.t.astype(np.float64)
    return float(np.mean(tv * yv / p - (1.0 - tv) * yv / (1.0 - p)))


@dataclass(frozen=True)
class MpleResult:
    """Clipped estimate, the unrestricted closed-form value, and a boundary flag."""

    beta_hat: float
    beta_unrestricted: float
    at_boundary: bool


def mple_closed_form(mag: float, n: int) -> float:
    """Unrestricted pseudo-likelihood estimate n/((n-1) m) artanh(m - 1/(n m)).

    Returns -inf when m = 0 and +inf when the artanh argument leaves (-1, 1)
    (both arms nearly exhausted).
    """
    if mag == 0.0:
        return -np.inf
    arg = mag - 1.0 / (n * mag)
    if abs(arg) >= 1.0:
        return np.inf
    return float(n / ((n - 1.0) * mag) * np.arctanh(arg))


def pseudo_loglik(beta, draw: TreatmentDraw) -> np.ndarray:
    """Pseudo log-likelihood sum_i log P(W_i | W_{-i}) at interaction strength beta.

    Uses the two-point structure of the leave-one-out magnetizations:
    every +1 spin sees m - 1/n and every -1 spin sees m + 1/n.
    """
    b = np.asarray(beta, dtype=np.float64)
    n = draw.n
    n_plus = int(draw.t.sum())
    n_minus = n - n_plus
    a = draw.mag - 1.0 / n
    c = draw.mag + 1.0 / n
    # log(0.5*(1 + tanh(x))) = log_expit(2x)
    return n_plus * log_expit(2.0 * b * a) + n_minus * log_expit(-2.0 * b * c)


def mple_pseudolik_argmax(draw: TreatmentDraw) -> float:
    """Exact maximizer of pseudo_loglik over [0, 1].

    Solves the (strictly decreasing) stationarity condition by bracketing;
    differs from mple_closed_form at O(1/n) on interior solutions.
    """
    n = draw.n
    n_plus = int(draw.t.sum())
    n_minus = n - n_plus
    a = draw.mag - 1.0 / n
    c = draw.mag + 1.0 / n

    def score(b):
        return n_plus * a * (1.0 - np.tanh(b * a)) - n_minus * c * (1.0 + np.tanh(b * c))

    if score(0.0) <= 0.0:
        return 0.0
    if score(1.0) >= 0.0:
        return 1.0
    return float(brentq(score, 0.0, 1.0, xtol=1e-13))


def mple_numeric(draw: TreatmentDraw) -> float:
    """Golden-section maximization of pseudo_loglik over [0, 1] (cross-check route)."""
    res = minimize_scalar(lambda b: -pseudo_loglik(b, draw), bounds=(0.0, 1.0),
                          method="bounded", options={"xatol": 1e-12})
    candidates = [0.0, 1.0, float(res.x)]
    vals = [float(pseudo_loglik(b, draw)) for b in candidates]
    return candidates[int(np.argmax(vals))]


def mple(t) -> MpleResult:
    """MPLE of the interaction strength, clipped to [0, 1].

    beta_unrestricted is the closed form; it diverges to -inf as m -> 0 (then
    the clipped estimate is 0) and to +inf when one arm is nearly exhausted
    (then the clipped estimate is 1).
    """
    draw = _as_draw(t)
    if draw.n < 2:
        raise ValueError("MPLE requires n >= 2")
    bur = mple_closed_form(draw.mag, draw.n)
    if np.isneginf(bur):
        return MpleResult(beta_hat=0.0, beta_unrestricted=bur, at_boundary=True)
    if np.isposinf(bur):
        return MpleResult(beta_hat=1.0, beta_unrestricted=bur, at_boundary=True)
    clipped = min(max(bur, 0.0), 1.0)
    return MpleResult(beta_hat=clipped, beta_unrestricted=bur,
                      at_boundary=clipped in (0.0, 1.0))


def mple_batch_from_mags(mags: np.ndarray, n: int) -> np.ndarray:
    """Vectorized clipped closed-form MPLE from magnetizations (sweep fast path)."""
    m = np.asarray(mags, dtype=np.float64)
    out = np.zeros(m.shape)
    nz = m != 0.0
    arg = np.empty_like(m)
    arg[nz] = m[nz] - 1.0 / (n * m[nz])
    interior = nz & (np.abs(arg) < 1.0)
    out[interior] = n / ((n - 1.0) * m[interior]) * np.arctanh(arg[interior])
    out[nz & ~interior] = np.inf
    return np.clip(out, 0.0, 1.0)
