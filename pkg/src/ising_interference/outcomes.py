"""Potential-outcome realization and oracle computation of the predictand and kappas."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.special import roots_legendre

from .ising import IsingParams, TreatmentDraw, TreatmentSampler, exposure_center
from .network import Graph, GraphonSpec, Exposures, exposures, exposure_fraction_batch, \
    generate_graph, sample_traits


@dataclass(frozen=True)
class OutcomeSpec:
    """Additive response surface: Y_i = f(T_i, M_i/N_i) + eps_i.

    f must accept numpy arrays (t broadcast against x) and be smooth in x;
    fprime is d/dx f(t, x) and may be omitted (finite differences are used).
    """

    f: callable
    noise_sd: float = 0.0
    fprime: callable = None
    smoothness: int = 4
    name: str = ""

    def __post_init__(self):
        if self.noise_sd < 0 or not np.isfinite(self.noise_sd):
            raise ValueError("noise_sd must be finite and >= 0")

    def deriv(self, t, x):
        if self.fprime is not None:
            return self.fprime(t, x)
        eps = 1e-5
        return (self.f(t, np.asarray(x) + eps) - self.f(t, np.asarray(x) - eps)) / (2 * eps)


@dataclass
class SimDataset:
    """One replication of the full data-generating process."""

    traits: np.ndarray
    graph: Graph
    draw: TreatmentDraw
    y: np.ndarray
    exposures: Exposures
    eps: np.ndarray | None
    fill_frac: float
    n_undefined: int

    @property
    def n(self) -> int:
        return self.graph.n

    def frac_filled(self) -> np.ndarray:
        return self.exposures.filled(self.fill_frac)


@dataclass(frozen=True)
class OracleKappas:
    """First and second moments of the influence variable R - E[R] + Q."""

    kappa1: float
    kappa2: float

    def __post_init__(self):
        if self.kappa2 < self.kappa1 ** 2 - 1e-12:
            raise ValueError("kappa2 must be >= kappa1^2")


def realize_outcomes(spec: OutcomeSpec, graph: Graph, draw: TreatmentDraw,
                     rng: np.random.Generator, traits: np.ndarray = None,
                     fill_frac: float = 0.5) -> SimDataset:
    """Evaluate the response surface on realized exposures and add noise.

    Units with no neighbors get the exposure concentration point fill_frac;
    their count is recorded on the dataset.
    """
    exp_set = exposures(graph, draw)
    frac = exp_set.filled(fill_frac)
    eps = rng.normal(0.0, spec.noise_sd, graph.n)
    y = np.asarray(spec.f(draw.t.astype(np.float64), frac), dtype=np.float64) + eps
    if traits is None:
        traits = np.full(graph.n, np.nan)
    return SimDataset(traits=traits, graph=graph, draw=draw, y=y, exposures=exp_set,
                      eps=eps, fill_frac=fill_frac,
                      n_undefined=int((~exp_set.defined).sum()))


def simulate_dataset(outcome: OutcomeSpec, gspec: GraphonSpec, params: IsingParams,
                     n: int, rng: np.random.Generator,
                     sampler: TreatmentSampler = None) -> SimDataset:
    """Draw traits, graph, treatments, and outcomes in one call."""
    traits = sample_traits(n, rng)
    graph = generate_graph(gspec, traits, rng)
    if sampler is None:
        sampler = TreatmentSampler(n, params)
    draw = sampler.draw(rng)
    return realize_outcomes(outcome, graph, draw, rng, traits=traits,
                            fill_frac=exposure_center(params))


@dataclass
class TauEstimate:
    value: float
    mc_se: float
    reps: int


def oracle_tau(spec: OutcomeSpec, graph: Graph, params: IsingParams,
               reps: int, rng: np.random.Generator, condition: str = None,
               sampler: TreatmentSampler = None, batch: int = 512) -> TauEstimate:
    """Direct-effect predictand: inner Monte Carlo over fresh treatment draws.

    Averages n^{-1} sum_i [f(1, M_i/N_i) - f(0, M_i/N_i)] over `reps` fresh
    assignment vectors (the additive noise cancels in the contrast; M_i does
    not involve T_i).  `condition` in {"+", "-"} keeps only draws whose
    magnetization sign matches, for the low-temperature conditional target.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    if sampler is None:
        sampler = TreatmentSampler(graph.n, params)
    fill = exposure_center(params)
    if condition == "-":
        fill = 1.0 - fill
    vals = np.empty(reps)
    got = 0
    attempts = 0
    max_attempts = 100 * reps
    while got < reps:
        take = min(batch, reps - got)
        # oversample when conditioning so the acceptance loop stays vectorized
        draw_n = take if condition is None else min(max(4 * take, 64), max_attempts - attempts)
        if draw_n <= 0:
            raise RuntimeError("conditioning event not hit within 100*reps draws")
        t_batch = sampler.draw_t_batch(rng, draw_n)
        attempts += draw_n
        if condition is not None:
            mags = (2.0 * t_batch.sum(axis=1) - graph.n) / graph.n
            keep = mags >= 0 if condition == "+" else mags < 0
            t_batch = t_batch[keep]
            if t_batch.shape[0] == 0:
                if attempts >= max_attempts:
                    raise RuntimeError("conditioning event not hit within 100*reps draws")
                continue
            t_batch = t_batch[:take]
        frac = exposure_fraction_batch(graph, t_batch, fill)
        contrast = spec.f(1.0, frac) - spec.f(0.0, frac)
        k = t_batch.shape[0]
        vals[got:got + k] = contrast.mean(axis=1)
        got += k
        if condition is not None and attempts >= max_attempts and got < reps:
            raise RuntimeError("conditioning event not hit within 100*reps draws")
    se = float(vals.std(ddof=1) / np.sqrt(reps)) if reps > 1 else float("nan")
    return TauEstimate(value=float(vals.mean()), mc_se=se, reps=reps)


def _kernel_weight_moments(kernel, n_quad: int = 256):
    """E[q(U)] and E[q(U)^2] for q(u) = E_V[ G(u,V) / E_U'[G(U',V)] ]."""
    nodes, weights = roots_legendre(n_quad)
    x = 0.5 * (nodes + 1.0)       # map to [0,1]
    w = 0.5 * weights
    g = np.asarray(kernel(x[:, None], x[None, :]), dtype=np.float64)
    gbar = w @ g                  # E_U[G(U, v)] on the grid
    q = (g / gbar[None, :]) @ w   # q(u) on the grid
    return float(w @ q), float(w @ (q * q))


def oracle_kappas(spec: OutcomeSpec, kernel=None, pi: float = 0.0) -> OracleKappas:
    """Moments of the influence variable at assignment fixed point pi.

    The exposure fraction concentrates at x0 = (1 + pi)/2.  With additive unit
    noise shared across arms,

        R = f(1,x0)/(1+pi) + f(0,x0)/(1-pi) + (2/(1-pi^2)) eps,
        Q = (1/2) E[ G(U_i,V)/E[G(U',V)] ] (f'(1,x0) - f'(0,x0)),

    so kappa1 = E[Q] and kappa2 = Var(R) + E[Q^2].  The derivative carries the
    1/2 from d(M/N)/d(mean spin); see the low-temperature and external-field
    law displays, whose pi -> 0 limit this matches.
    """
    x0 = 0.5 * (1.0 + pi)
    dstar = float(spec.deriv(1.0, x0) - spec.deriv(0.0, x0))
    if kernel is None or getattr(kernel, "is_constant", False):
        eq, eq2 = 1.0, 1.0
    else:
        eq, eq2 = _kernel_weight_moments(kernel)
    q_coef = 0.5 * dstar
    kappa1 = q_coef * eq
    var_r = 4.0 * spec.noise_sd ** 2 / (1.0 - pi * pi) ** 2
    kappa2 = var_r + q_coef * q_coef * eq2
    return OracleKappas(kappa1=kappa1, kappa2=kappa2)


def _quadratic_f(t, x):
    t = np.asarray(t, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    return t * t + t * (x + 1.0) ** 2


def _quadratic_fprime(t, x):
    t = np.asarray(t, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    return 2.0 * t * (x + 1.0)


def _trig_f(t, x):
    t = np.asarray(t, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    return t * (1.0 + np.sin(x)) + 0.5 * x * x


def _trig_fprime(t, x):
    t = np.asarray(t, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    return t * np.cos(x) + x


def _direct_f(t, x):
    return np.asarray(t, dtype=np.float64) + 0.0 * np.asarray(x)


def _direct_fprime(t, x):
    return 0.0 * np.asarray(t) + 0.0 * np.asarray(x)


def dgp_preset(name: str) -> OutcomeSpec:
    """Built-in response surfaces.

    "quadratic": f(t,x) = t^2 + t (x+1)^2 with N(0, 0.05) noise (the benchmark
    sweep surface); "smooth-trig": a second smooth surface for property tests;
    "direct-only": f(t,x) = t, noiseless.
    """
    if name == "quadratic":
        return OutcomeSpec(f=_quadratic_f, fprime=_quadratic_fprime,
                           noise_sd=float(np.sqrt(0.05)), name=name)
    if name == "smooth-trig":
        return OutcomeSpec(f=_trig_f, fprime=_trig_fprime,
                           noise_sd=0.1, name=name)
    if name == "direct-only":
        return OutcomeSpec(f=_direct_f, fprime=_direct_fprime,
                           noise_sd=0.0, name=name)
    raise KeyError(f"unknown DGP preset: {name!r}")


DATASET_COLUMNS = ("unit", "U", "T", "Y", "M", "N")


def dump_dataset_csv(dataset: SimDataset, path) -> None:
    """Columns: unit, U, T, Y, M, N."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(DATASET_COLUMNS)
        for i in range(dataset.n):
            writer.writerow([
                i,
                f"{dataset.traits[i]:.17g}",
                int(dataset.draw.t[i]),
                f"{dataset.y[i]:.17g}",
                int(dataset.exposures.m[i]),
                int(dataset.exposures.deg[i]),
            ])


def load_dataset_csv(path, graph: Graph, fill_frac: float = 0.5) -> SimDataset:
    """Rebuild a SimDataset from the dump (noise is unobserved and left None)."""
    units, traits, t, y, m, deg = [], [], [], [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != DATASET_COLUMNS:
            raise ValueError(f"dataset CSV must have header {','.join(DATASET_COLUMNS)}")
        for row in reader:
            if not row:
                continue
            units.append(int(row[0]))
            traits.append(float(row[1]))
            t.append(int(row[2]))
            y.append(float(row[3]))
            m.append(int(row[4]))
            deg.append(int(row[5]))
    if units != list(range(len(units))):
        raise ValueError("dataset CSV units must be 0..n-1 in order")
    if len(units) != graph.n:
        raise ValueError("dataset CSV size does not match the graph")
    draw = TreatmentDraw(np.asarray(t, dtype=np.int8))
    exp_set = exposures(graph, draw)
    if not (np.array_equal(exp_set.m, np.asarray(m)) and
            np.array_equal(exp_set.deg, np.asarray(deg))):
        raise ValueError("dataset CSV exposure columns disagree with the edge list")
    return SimDataset(traits=np.asarray(traits), graph=graph, draw=draw,
                      y=np.asarray(y), exposures=exp_set, eps=None,
                      fill_frac=fill_frac, n_undefined=int((~exp_set.defined).sum()))
