"""Four long-run-variance estimators.

All four target sigma_LR^2 = Var(n^{-1/2} sum X_i) but under different
knowledge of the dependence structure:

- sample_variance: ignores dependence; (1/n) sum (x_i - xbar)^2.
- cluster: sums all within-cluster cross products; consistent when the
  cluster structure is known and no cluster dominates.
- graph: sums cross products over graph-neighbor pairs (including i itself).
- second_moment: (1/n) sum x_i^2, valid under a known zero mean.

Estimates are reported raw — the cross-product estimators are not truncated
at zero — with a negative_flag instead.  Each scalar operation delegates to a
row kernel that evaluates whole (replications, n) batches, so the Monte Carlo
harness and the public API share one implementation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse

from .cluster_model import ClusterStructure
from .errors import InvalidInputError
from .graphs import DependencyGraph


@dataclass(frozen=True)
class LrvEstimate:
    """A long-run-variance estimate; negative_flag is True iff value < 0."""

    value: float
    estimator_kind: str  # sample_variance | cluster | graph | second_moment
    negative_flag: bool


def _make(value: float, kind: str) -> LrvEstimate:
    value = float(value)
    return LrvEstimate(value=value, estimator_kind=kind, negative_flag=value < 0.0)


def _as_rows(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise InvalidInputError("expected a 1-d data vector")
    return x[np.newaxis, :]


def sample_variance_rows(X: np.ndarray) -> np.ndarray:
    """(1/n) sum (x - xbar)^2 for each row of a (B, n) matrix."""
    d = X - X.mean(axis=-1, keepdims=True)
    return np.einsum("...i,...i->...", d, d) / X.shape[-1]


def cluster_rows(X: np.ndarray, cs: ClusterStructure) -> np.ndarray:
    """(1/n) sum_m (sum_{i in m} (x_i - xbar))^2 for each row.

    The double sum over pairs inside each cluster collapses to the square of
    the cluster total of deviations, giving an O(n) evaluation.
    """
    d = X - X.mean(axis=-1, keepdims=True)
    block_sums = np.add.reduceat(d, cs.starts, axis=-1)
    return np.einsum("...m,...m->...", block_sums, block_sums) / cs.n


def graph_rows(X: np.ndarray, g: DependencyGraph) -> np.ndarray:
    """(1/n) sum_i sum_{j in N(i) or j = i} (x_i - xbar)(x_j - xbar) per row."""
    d = X - X.mean(axis=-1, keepdims=True)
    s = d @ _neighborhood_operator(g)
    return np.einsum("...i,...i->...", d, s) / g.n


def second_moment_rows(X: np.ndarray) -> np.ndarray:
    """(1/n) sum x^2 for each row; no centering (mean assumed known zero)."""
    return np.einsum("...i,...i->...", X, X) / X.shape[-1]


def _neighborhood_operator(g: DependencyGraph) -> scipy.sparse.csr_array:
    """Sparse A + I for the closed neighborhood sums of the graph estimator."""
    edges = g.edge_array()
    n = g.n
    rows = np.concatenate((edges[:, 0], edges[:, 1], np.arange(n)))
    cols = np.concatenate((edges[:, 1], edges[:, 0], np.arange(n)))
    vals = np.ones(rows.shape[0], dtype=np.float64)
    return scipy.sparse.csr_array((vals, (rows, cols)), shape=(n, n))


def lrv_sample_variance(x) -> LrvEstimate:
    """The naive variance estimator; requires n >= 2."""
    rows = _as_rows(x)
    if rows.shape[-1] < 2:
        raise InvalidInputError("sample variance needs at least two observations")
    return _make(sample_variance_rows(rows)[0], "sample_variance")


def lrv_cluster(x, cs: ClusterStructure) -> LrvEstimate:
    """The cluster estimator; equals lrv_sample_variance when all clusters are singletons."""
    rows = _as_rows(x)
    if rows.shape[-1] != cs.n:
        raise InvalidInputError(
            f"data has length {rows.shape[-1]}, structure has n = {cs.n}"
        )
    return _make(cluster_rows(rows, cs)[0], "cluster")


def lrv_graph(x, g: DependencyGraph) -> LrvEstimate:
    """The dependency-graph estimator over closed neighborhoods."""
    rows = _as_rows(x)
    if rows.shape[-1] != g.n:
        raise InvalidInputError(f"data has length {rows.shape[-1]}, graph has n = {g.n}")
    return _make(graph_rows(rows, g)[0], "graph")


def lrv_second_moment(x) -> LrvEstimate:
    """The uncentered second moment, for designs with a known zero mean."""
    rows = _as_rows(x)
    if rows.shape[-1] < 1:
        raise InvalidInputError("empty data vector")
    return _make(second_moment_rows(rows)[0], "second_moment")
