"""Shared fixtures and brute-force oracles for the test suite."""

import itertools

import numpy as np
import pytest

from ising_interference import GraphonSpec, IsingParams, constant_kernel, dgp_preset


def enumerate_spins(n: int) -> np.ndarray:
    """All 2^n spin configurations as a (2^n, n) matrix of +-1."""
    return np.array(list(itertools.product((-1, 1), repeat=n)), dtype=np.float64)


def brute_force_probs(n: int, params: IsingParams) -> tuple[np.ndarray, np.ndarray]:
    """Exact configuration probabilities by direct enumeration of the density.

    Uses the pairwise form exp((beta/n) sum_{i<j} w_i w_j + h sum_i w_i); the
    external-field display, of which the equiprobable model is the h = 0 case.
    """
    w = enumerate_spins(n)
    pair_sum = ((w.sum(axis=1) ** 2 - n) / 2.0)
    logwt = params.beta / n * pair_sum + params.h * w.sum(axis=1)
    logwt -= logwt.max()
    probs = np.exp(logwt)
    probs /= probs.sum()
    return w, probs


def brute_force_spin_sum_pmf(n: int, params: IsingParams) -> dict[int, float]:
    """Exact pmf of S = sum_i w_i from full enumeration."""
    w, probs = brute_force_probs(n, params)
    sums = w.sum(axis=1).astype(int)
    out: dict[int, float] = {}
    for s, p in zip(sums, probs):
        out[s] = out.get(s, 0.0) + p
    return out


def brute_force_conditional(n: int, params: IsingParams, spins: np.ndarray, i: int) -> float:
    """P(W_i = +1 | W_{-i}) by enumeration."""
    w, probs = brute_force_probs(n, params)
    rest = np.delete(np.arange(n), i)
    match = np.all(w[:, rest] == spins[rest], axis=1)
    num = probs[match & (w[:, i] == 1)].sum()
    den = probs[match].sum()
    return float(num / den)


@pytest.fixture(scope="session")
def benchmark_outcome():
    return dgp_preset("quadratic")


@pytest.fixture(scope="session")
def benchmark_graphon():
    return GraphonSpec(rho=0.5, kernel=constant_kernel(0.5))
