"""Monte Carlo experiment runner: coverage/length sweeps and distributional diagnostics.

Replications are seeded by a counter scheme derived from (base seed, n, beta,
replication index, stage), so every method sees the same data within a
replication and results are bit-identical regardless of worker count.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, asdict, field

import numpy as np
from scipy.special import ndtr, ndtri

from . import __version__
from .ising import IsingParams, TreatmentSampler
from .network import GraphonSpec, constant_kernel, generate_graph, sample_traits
from .outcomes import dgp_preset, oracle_kappas, oracle_tau, realize_outcomes
from .estimators import hajek
from .inference import (
    InferenceTables,
    LearnerConfig,
    default_beta_grid,
    fit_surface,
    get_tables,
    kappa2_resample,
)
from .laws import LimitLawParams, hn_quantile, ks_distance, ln_cdf, wc_cdf

VALID_METHODS = ("conserv", "beta0", "oracle", "onestep")


class SweepError(RuntimeError):
    """Raised when a sweep cell exceeds the allowed replication failure rate."""


@dataclass(frozen=True)
class SweepConfig:
    n_values: tuple
    beta_values: tuple
    reps: int
    rho: float = 0.5
    kernel_value: float = 0.5
    alpha1: float = 0.05
    alpha2: float = 0.05
    methods: tuple = VALID_METHODS
    base_seed: int = 0
    dgp: str = "quadratic"
    inner_reps: int = 2000
    beta_grid_size: int = 201

    def __post_init__(self):
        object.__setattr__(self, "n_values", tuple(int(v) for v in self.n_values))
        object.__setattr__(self, "beta_values", tuple(float(v) for v in self.beta_values))
        object.__setattr__(self, "methods", tuple(self.methods))
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        for a in (self.alpha1, self.alpha2):
            if not (0.0 < a < 1.0):
                raise ValueError("levels must lie in (0, 1)")
        if not self.methods:
            raise ValueError("methods must be nonempty")
        for m in self.methods:
            if m not in VALID_METHODS:
                raise ValueError(f"unknown method {m!r}")

    @property
    def alpha_total(self) -> float:
        return self.alpha1 + self.alpha2


@dataclass
class SweepRecord:
    n: int
    beta: float
    method: str
    coverage: float
    mean_length: float
    sd_length: float
    reps: int
    seed: int


CSV_HEADER = "n,beta,method,coverage,mean_length,sd_length,reps,seed"


def _beta_key(beta: float) -> int:
    return int(round(beta * 10 ** 9))


def _rep_seed(base_seed: int, n: int, beta: float, rep: int, stage: int) -> np.random.SeedSequence:
    return np.random.SeedSequence((base_seed, n, _beta_key(beta), rep, stage))


def _needs_learner(methods) -> bool:
    return "conserv" in methods or "onestep" in methods


def _one_rep(cfg: SweepConfig, n: int, beta: float, rep: int,
             sampler: TreatmentSampler, gspec: GraphonSpec, outcome,
             tables: InferenceTables, hw_beta0: float, hw_oracle: float):
    """One replication: returns (tau_hat - tau, {method: (hit, length)})."""
    params = sampler.params
    rng = np.random.default_rng(_rep_seed(cfg.base_seed, n, beta, rep, 0))
    traits = sample_traits(n, rng)
    graph = generate_graph(gspec, traits, rng)
    draw = sampler.draw(rng)
    dataset = realize_outcomes(outcome, graph, draw, rng, traits=traits, fill_frac=0.5)

    rng_tau = np.random.default_rng(_rep_seed(cfg.base_seed, n, beta, rep, 1))
    tau = oracle_tau(outcome, graph, params, cfg.inner_reps, rng_tau, sampler=sampler).value
    tau_hat = hajek(draw, dataset.y)
    diff = tau_hat - tau

    out = {}
    if "beta0" in cfg.methods:
        out["beta0"] = (abs(diff) <= hw_beta0, 2.0 * hw_beta0)
    if "oracle" in cfg.methods:
        out["oracle"] = (abs(diff) <= hw_oracle, 2.0 * hw_oracle)
    if _needs_learner(cfg.methods):
        surface = fit_surface(dataset)
        rng_star = np.random.default_rng(_rep_seed(cfg.base_seed, n, beta, rep, 2))
        kn = kappa2_resample(dataset, surface, rng_star).kn_bound
        if "conserv" in cfg.methods:
            keep = 1.0 - _clipped_mple(draw) >= tables.q_thresholds
            if not keep.any():
                keep = np.ones(tables.grid.size, dtype=bool)
            hi = kn * float(tables.base_hi[keep].max())
            lo = kn * float(tables.base_lo[keep].min())
            out["conserv"] = (lo <= diff <= hi, hi - lo)
        if "onestep" in cfg.methods:
            hi = kn * float(tables.base_hi.max())
            lo = kn * float(tables.base_lo.min())
            out["onestep"] = (lo <= diff <= hi, hi - lo)
    return diff, out


def _clipped_mple(draw) -> float:
    from .estimators import mple

    return mple(draw).beta_hat


def _run_cell_chunk(cfg: SweepConfig, n: int, beta: float, rep_lo: int, rep_hi: int,
                    tables: InferenceTables):
    """Self-contained block of replications (safe to run in a worker process)."""
    params = IsingParams(beta=beta)
    sampler = TreatmentSampler(n, params)
    gspec = GraphonSpec(rho=cfg.rho, kernel=constant_kernel(cfg.kernel_value))
    outcome = dgp_preset(cfg.dgp)
    kap = oracle_kappas(outcome, gspec.kernel)
    z = float(ndtri(1.0 - cfg.alpha_total / 2.0))
    hw_beta0 = z * float(np.sqrt(kap.kappa2 / n))
    hw_oracle = float(hn_quantile(1.0 - cfg.alpha_total / 2.0,
                                  LimitLawParams(kap.kappa1, kap.kappa2, n, beta))) \
        if "oracle" in cfg.methods else np.nan

    results, failures = [], []
    for rep in range(rep_lo, rep_hi):
        try:
            results.append(_one_rep(cfg, n, beta, rep, sampler, gspec, outcome,
                                    tables, hw_beta0, hw_oracle))
        except Exception as exc:  # per-replication failures are excluded, never retried
            failures.append((rep, repr(exc)))
    return results, failures


def _cell_results(cfg: SweepConfig, n: int, beta: float, tables: InferenceTables,
                  n_workers: int):
    chunk = max(8, cfg.reps // max(4 * n_workers, 1)) if n_workers > 1 else cfg.reps
    ranges = [(lo, min(lo + chunk, cfg.reps)) for lo in range(0, cfg.reps, chunk)]
    if n_workers > 1 and len(ranges) > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            parts = list(pool.map(_chunk_star,
                                  [(cfg, n, beta, lo, hi, tables) for lo, hi in ranges]))
    else:
        parts = [_run_cell_chunk(cfg, n, beta, lo, hi, tables) for lo, hi in ranges]
    results, failures = [], []
    for res, fail in parts:
        results.extend(res)
        failures.extend(fail)
    if len(failures) > 0.01 * cfg.reps:
        raise SweepError(f"cell (n={n}, beta={beta}): {len(failures)} failed replications: "
                         f"{failures[:3]}")
    return results, failures


def _chunk_star(args):
    return _run_cell_chunk(*args)


def default_workers() -> int:
    return max(1, int(os.environ.get("ISING_INTERFERENCE_WORKERS", "1")))


def run_coverage_sweep(cfg: SweepConfig, n_workers: int = None):
    """Coverage and length of each method on the (n, beta) grid."""
    if n_workers is None:
        n_workers = default_workers()
    records = []
    for n in cfg.n_values:
        tables = (get_tables(n, default_beta_grid(cfg.beta_grid_size), cfg.alpha1, cfg.alpha2)
                  if _needs_learner(cfg.methods) else _EMPTY_TABLES)
        for beta in cfg.beta_values:
            results, _ = _cell_results(cfg, n, beta, tables, n_workers)
            eff = len(results)
            for method in cfg.methods:
                hits = np.array([r[1][method][0] for r in results], dtype=float)
                lens = np.array([r[1][method][1] for r in results], dtype=float)
                records.append(SweepRecord(
                    n=n, beta=beta, method=method,
                    coverage=float(hits.mean()),
                    mean_length=float(lens.mean()),
                    sd_length=float(lens.std(ddof=1)) if eff > 1 else 0.0,
                    reps=eff, seed=cfg.base_seed))
    return records


_EMPTY_TABLES = InferenceTables(n=0, grid=np.array([0.0]), alpha1=0.05, alpha2=0.05,
                                base_hi=np.array([0.0]), base_lo=np.array([0.0]),
                                q_thresholds=np.array([0.0]))


def _ols_loglog(ns, lengths):
    x = np.log(np.asarray(ns, dtype=np.float64))
    y = np.log(np.asarray(lengths, dtype=np.float64))
    xc = x - x.mean()
    slope = float((xc @ (y - y.mean())) / (xc @ xc))
    intercept = float(y.mean() - slope * x.mean())
    resid = y - (intercept + slope * x)
    dof = max(x.size - 2, 1)
    se = float(np.sqrt((resid @ resid) / dof / (xc @ xc)))
    return slope, se


def run_length_vs_n(cfg: SweepConfig, n_workers: int = None):
    """Length-versus-n study at a single beta; adds the 'simulated' pseudo-method.

    'simulated' is the empirical central (1 - alpha) range of tau_hat - tau
    across replications.  Returns (records, slopes) with slopes holding the
    log-log OLS slope and standard error per method.
    """
    if len(cfg.n_values) < 3:
        raise ValueError("need at least 3 sample sizes for a slope")
    if len(cfg.beta_values) != 1:
        raise ValueError("length-vs-n runs use a single beta")
    if n_workers is None:
        n_workers = default_workers()
    beta = cfg.beta_values[0]
    alpha = cfg.alpha_total
    records = []
    sim_lengths = {}
    for n in cfg.n_values:
        tables = (get_tables(n, default_beta_grid(cfg.beta_grid_size), cfg.alpha1, cfg.alpha2)
                  if _needs_learner(cfg.methods) else _EMPTY_TABLES)
        results, _ = _cell_results(cfg, n, beta, tables, n_workers)
        eff = len(results)
        diffs = np.array([r[0] for r in results])
        lo, hi = np.quantile(diffs, [alpha / 2.0, 1.0 - alpha / 2.0])
        sim_lengths[n] = float(hi - lo)
        records.append(SweepRecord(
            n=n, beta=beta, method="simulated",
            coverage=float(np.mean((diffs >= lo) & (diffs <= hi))),
            mean_length=sim_lengths[n], sd_length=0.0, reps=eff, seed=cfg.base_seed))
        for method in cfg.methods:
            hits = np.array([r[1][method][0] for r in results], dtype=float)
            lens = np.array([r[1][method][1] for r in results], dtype=float)
            records.append(SweepRecord(
                n=n, beta=beta, method=method,
                coverage=float(hits.mean()),
                mean_length=float(lens.mean()),
                sd_length=float(lens.std(ddof=1)) if eff > 1 else 0.0,
                reps=eff, seed=cfg.base_seed))
    slopes = {}
    for method in tuple(cfg.methods) + ("simulated",):
        lens = [r.mean_length for r in records if r.method == method]
        slope, se = _ols_loglog(cfg.n_values, lens)
        slopes[method] = {"slope": slope, "se": se}
    return records, slopes


MULTIPLIERS = {
    "one-plus-uniform": {
        "draw": lambda rng, size: 1.0 + rng.random(size),
        "mean": 1.5,
        "second_moment": 7.0 / 3.0,
    },
    "constant": {
        "draw": lambda rng, size: np.ones(size),
        "mean": 1.0,
        "second_moment": 1.0,
    },
}


def berry_esseen_diagnostic(n_values, beta: float, reps: int, seed: int = 0,
                            multiplier: str = "one-plus-uniform") -> dict:
    """KS distance between draws of n^{-1} sum_i X_i W_i and the matching pointwise law.

    X are bounded i.i.d. multipliers independent of the spins; the reference
    law is Gaussian below the critical point and the scaled quartic law at it.
    """
    spec = MULTIPLIERS[multiplier]
    out = {}
    for n in n_values:
        rng = np.random.default_rng(np.random.SeedSequence((seed, n, _beta_key(beta), 7)))
        sampler = TreatmentSampler(n, IsingParams(beta=beta))
        sums = sampler.draw_spin_sums(rng, reps)
        k_treated = (n + sums) // 2
        stats = np.empty(reps)
        chunk = max(1, min(reps, int(4e6 // max(n, 1))))
        for lo in range(0, reps, chunk):
            hi = min(lo + chunk, reps)
            x = spec["draw"](rng, (hi - lo, n))
            csum = np.cumsum(x, axis=1)
            total = csum[:, -1]
            kk = k_treated[lo:hi]
            first = np.where(kk > 0, csum[np.arange(hi - lo), np.maximum(kk, 1) - 1], 0.0)
            stats[lo:hi] = (2.0 * first - total) / n
        params = LimitLawParams(kappa1=spec["mean"], kappa2=spec["second_moment"],
                                n=n, beta=beta)
        if beta < 1.0:
            cdf = lambda t, p=params: ln_cdf(t, p, "high")
        else:
            cdf = lambda t, p=params: ln_cdf(t, p, "critical")
        out[n] = ks_distance(stats, cdf)
    return out


def records_to_csv(records, path) -> None:
    """Fixed-format CSV; identical configs and seeds give identical bytes."""
    lines = [CSV_HEADER]
    for r in records:
        lines.append(f"{r.n},{r.beta:.10g},{r.method},{r.coverage:.10g},"
                     f"{r.mean_length:.10g},{r.sd_length:.10g},{r.reps},{r.seed}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_manifest(cfg: SweepConfig, path, wall_time: float, extra: dict = None) -> None:
    payload = {
        "config": asdict(cfg),
        "version": __version__,
        "wall_time_seconds": wall_time,
    }
    if extra:
        payload.update(extra)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
