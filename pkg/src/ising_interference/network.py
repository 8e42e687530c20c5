"""Sparse-graphon random network generation and exposure-fraction computation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .ising import ConfigurationError, TreatmentDraw


def constant_kernel(value: float = 0.5):
    """Kernel G(x, y) = value."""

    def kernel(x, y):
        return np.full(np.broadcast(x, y).shape, float(value))

    kernel.is_constant = True
    kernel.constant_value = float(value)
    return kernel


def smooth_kernel():
    """A smooth, symmetric, strictly positive example kernel on [0,1]^2."""

    def kernel(x, y):
        return 0.4 + 0.3 * (np.asarray(x) + np.asarray(y))

    return kernel


@dataclass(frozen=True)
class GraphonSpec:
    """Sparsity rho in (0,1] and a symmetric positive kernel handle."""

    rho: float
    kernel: callable = field(default_factory=constant_kernel)

    def __post_init__(self):
        if not (0.0 < self.rho <= 1.0):
            raise ConfigurationError("rho must lie in (0, 1]")


@dataclass
class Graph:
    """Symmetric, loop-free adjacency with cached degrees."""

    n: int
    adjacency: sp.csr_matrix
    degrees: np.ndarray = field(init=False)

    def __post_init__(self):
        self.degrees = np.asarray(self.adjacency.sum(axis=1)).ravel().astype(np.int64)
        self._dense = None

    def dense(self) -> np.ndarray:
        """float32 dense adjacency, cached; used for batched exposure products."""
        if self._dense is None:
            self._dense = np.asarray(self.adjacency.todense(), dtype=np.float32)
        return self._dense

    def neighbor_row(self, i: int) -> np.ndarray:
        return np.asarray(self.adjacency.getrow(i).todense()).ravel()


@dataclass
class Exposures:
    """Treated-neighbor counts, degrees, and fractions for all units."""

    m: np.ndarray
    deg: np.ndarray
    frac: np.ndarray      # NaN where deg == 0
    defined: np.ndarray   # boolean mask, deg > 0

    def filled(self, value: float) -> np.ndarray:
        out = self.frac.copy()
        out[~self.defined] = value
        return out


def sample_traits(n: int, rng: np.random.Generator) -> np.ndarray:
    """Latent Uniform[0,1] traits, one per unit."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return rng.random(n)


def generate_graph(spec: GraphonSpec, traits: np.ndarray, rng: np.random.Generator,
                   chunk: int = 512) -> Graph:
    """Bernoulli graph: edge (i,j) present iff xi_ij <= min(1, rho*G(U_i,U_j)).

    Pairs are processed in row chunks to bound memory at desk scale.
    """
    u = np.asarray(traits, dtype=np.float64)
    n = u.size
    rows, cols = [], []
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        block = spec.rho * np.asarray(spec.kernel(u[start:stop, None], u[None, :]), dtype=np.float64)
        if not np.all(np.isfinite(block)):
            raise ConfigurationError("kernel produced non-finite values")
        if np.any(block <= 0.0):
            raise ConfigurationError("kernel must be positive on sampled points")
        np.minimum(block, 1.0, out=block)
        # keep strictly upper-triangular pairs only
        ii = np.arange(start, stop)
        tri = ii[:, None] < np.arange(n)[None, :]
        hit = (rng.random(block.shape) <= block) & tri
        r, c = np.nonzero(hit)
        rows.append(ii[r])
        cols.append(c)
    r = np.concatenate(rows) if rows else np.array([], dtype=np.int64)
    c = np.concatenate(cols) if cols else np.array([], dtype=np.int64)
    data = np.ones(r.size, dtype=np.int8)
    upper = sp.coo_matrix((data, (r, c)), shape=(n, n))
    adj = (upper + upper.T).tocsr()
    return Graph(n=n, adjacency=adj)


def _as_t(t) -> np.ndarray:
    if isinstance(t, TreatmentDraw):
        return t.t
    return np.asarray(t, dtype=np.int8)


def exposures(graph: Graph, t) -> Exposures:
    """M_i = sum_{j != i} E_ij T_j, N_i = degree, frac = M_i / N_i."""
    tv = _as_t(t)
    if tv.size != graph.n:
        raise ValueError("treatment length does not match graph size")
    m = graph.adjacency @ tv.astype(np.int64)
    deg = graph.degrees
    defined = deg > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.where(defined, m / np.maximum(deg, 1), np.nan)
    return Exposures(m=m, deg=deg.copy(), frac=frac, defined=defined)


def leave_one_out_exposures(graph: Graph, t, i: int) -> Exposures:
    """Exposures with unit i's edges removed from every other unit's sums.

    Entry j != i drops the (i,j) edge from both M_j and N_j; entry i keeps its
    own full neighborhood (removing i only affects the sums of others).
    """
    tv = _as_t(t)
    if not (0 <= i < graph.n):
        raise ValueError("unit index out of range")
    base = exposures(graph, tv)
    row = graph.neighbor_row(i)
    m = base.m - row * int(tv[i])
    deg = base.deg - row
    defined = deg > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.where(defined, m / np.maximum(deg, 1), np.nan)
    return Exposures(m=m, deg=deg, frac=frac, defined=defined)


def exposure_fraction_batch(graph: Graph, t_batch: np.ndarray, fill: float) -> np.ndarray:
    """Fractions for a (draws, n) batch of assignments; undefined entries filled.

    Uses the dense adjacency for one BLAS product, which dominates the cost of
    inner Monte Carlo loops.
    """
    a = graph.dense()
    m = t_batch.astype(np.float32) @ a  # (draws, n)
    deg = graph.degrees.astype(np.float32)
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = m / deg[None, :]
    frac[:, graph.degrees == 0] = fill
    return frac


def dump_edge_list(graph: Graph, path) -> None:
    """Write one '(i, j)' pair per line, 0-indexed, i < j."""
    coo = sp.triu(graph.adjacency, k=1).tocoo()
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w") as fh:
        for r, c in zip(coo.row[order], coo.col[order]):
            fh.write(f"{r} {c}\n")


def load_edge_list(path, n: int) -> Graph:
    """Read the dump_edge_list format back into a Graph."""
    rows, cols = [], []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            a, b = line.split()
            rows.append(int(a))
            cols.append(int(b))
    r = np.asarray(rows, dtype=np.int64)
    c = np.asarray(cols, dtype=np.int64)
    if r.size and (r.min() < 0 or c.max() >= n):
        raise ValueError("edge list indices out of range")
    upper = sp.coo_matrix((np.ones(r.size, dtype=np.int8), (r, c)), shape=(n, n))
    return Graph(n=n, adjacency=(upper + upper.T).tocsr())
