"""Cluster structures, block-equicorrelation covariance models, their spectra.

Observations 1..n are partitioned into M clusters occupying consecutive index
ranges (an arbitrary partition can be brought into this form by permuting
indices at ingestion).  The covariance models handled here are block diagonal
with equicorrelated blocks::

    Sigma_m = (1 - delta_m) I + delta_m 11'

Everything on the production path is closed-form and O(n); dense matrices
appear only in oracles and validators and are capped at DENSE_N_CAP.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
import math

import numpy as np

from .errors import (
    BudgetExceededError,
    InvalidInputError,
    ModelInvalidError,
    StructureMismatchError,
)

# Dense-matrix operations (oracles/validators only) refuse larger inputs.
DENSE_N_CAP = 2048


@dataclass(frozen=True)
class ClusterStructure:
    """A partition of {1,..,n} into M consecutive clusters.

    Attributes
    ----------
    sizes : tuple of int
        Cluster sizes n_m in index order.
    n : int
        Total number of observations, sum of sizes.
    n_star : int
        Number of observations living in non-singleton clusters.
    M : int
        Number of clusters.
    heterogeneity : float
        h = sum over non-singleton clusters of (n_m / n_star)^2, in [0, 1];
        0 exactly when there are no non-singleton clusters.
    """

    sizes: tuple[int, ...]
    n: int
    n_star: int
    M: int
    heterogeneity: float

    @cached_property
    def starts(self) -> np.ndarray:
        """Start offset of each cluster's index range (length M)."""
        return np.concatenate(([0], np.cumsum(self.sizes)[:-1])).astype(np.intp)

    @cached_property
    def sizes_array(self) -> np.ndarray:
        return np.asarray(self.sizes, dtype=np.intp)


def build_structure(sizes) -> ClusterStructure:
    """Validate a list of cluster sizes and derive the summary statistics.

    Raises InvalidInputError on an empty list or any size < 1.
    """
    sizes = tuple(int(s) for s in sizes)
    if not sizes:
        raise InvalidInputError("cluster size list is empty")
    if any(s < 1 for s in sizes):
        raise InvalidInputError(f"cluster sizes must be >= 1, got {min(sizes)}")
    n = sum(sizes)
    n_star = sum(s for s in sizes if s >= 2)
    if n_star > 0:
        h = sum((s / n_star) ** 2 for s in sizes if s >= 2)
    else:
        h = 0.0
    return ClusterStructure(
        sizes=sizes, n=n, n_star=n_star, M=len(sizes), heterogeneity=h
    )


def max_cluster_share(cs: ClusterStructure) -> float:
    """max_m n_m / n — the finite-n negligibility diagnostic."""
    return max(cs.sizes) / cs.n


@dataclass(frozen=True)
class BlockEquicorrModel:
    """A validated block-equicorrelation covariance model.

    deltas holds one correlation per cluster, in cluster order; singleton
    clusters always carry 0.0.  c_bound, when set, certifies that every
    eigenvalue of Sigma - I lies in [-c_bound, c_bound].
    """

    structure: ClusterStructure
    deltas: tuple[float, ...]
    c_bound: float | None = None

    @cached_property
    def deltas_array(self) -> np.ndarray:
        return np.asarray(self.deltas, dtype=np.float64)


def block_model(
    cs: ClusterStructure, deltas, c_bound: float | None = None
) -> BlockEquicorrModel:
    """Build and validate a block-equicorrelation model.

    Positive definiteness requires 1 - delta_m > 0 and 1 + (n_m - 1) delta_m > 0
    for every non-singleton cluster; violations raise ModelInvalidError naming
    the offending cluster.  With c_bound given, the eigenvalues of Sigma - I
    (that is, -delta_m and (n_m - 1) delta_m) must lie within [-c, c], else
    BudgetExceededError.  Deltas supplied for singleton clusters are ignored
    and stored as 0.
    """
    deltas = [float(d) for d in deltas]
    if len(deltas) != cs.M:
        raise InvalidInputError(
            f"expected {cs.M} deltas (one per cluster), got {len(deltas)}"
        )
    if c_bound is not None:
        c_bound = float(c_bound)
        if c_bound < 0:
            raise InvalidInputError("c_bound must be nonnegative")
    normalized = []
    for m, (k, d) in enumerate(zip(cs.sizes, deltas)):
        if k == 1:
            normalized.append(0.0)
            continue
        if not (1.0 - d > 0.0) or not (1.0 + (k - 1) * d > 0.0):
            raise ModelInvalidError(
                f"cluster {m} (size {k}, delta {d}) is not positive definite: "
                f"requires 1 - delta > 0 and 1 + (k-1) delta > 0"
            )
        if c_bound is not None:
            if abs(d) > c_bound or abs((k - 1) * d) > c_bound:
                raise BudgetExceededError(
                    f"cluster {m} (size {k}, delta {d}) exceeds eigenvalue "
                    f"budget c = {c_bound}"
                )
        normalized.append(d)
    return BlockEquicorrModel(structure=cs, deltas=tuple(normalized), c_bound=c_bound)


@dataclass(frozen=True)
class BlockSpectrum:
    """Closed-form spectrum of one equicorrelated block of size k.

    Eigenvalue 1 + (k-1) delta has multiplicity 1 with eigenvector ones/sqrt(k);
    eigenvalue 1 - delta has multiplicity k - 1 on the orthogonal complement of
    ones.  det = top * base^(k-1).
    """

    size: int
    delta: float
    top_eigenvalue: float
    base_eigenvalue: float
    top_multiplicity: int
    base_multiplicity: int

    def eigenvalues(self) -> np.ndarray:
        """All k eigenvalues, top first."""
        return np.concatenate(
            ([self.top_eigenvalue], np.full(self.base_multiplicity, self.base_eigenvalue))
        )

    def det(self) -> float:
        return self.top_eigenvalue * self.base_eigenvalue ** self.base_multiplicity

    def basis(self) -> np.ndarray:
        """The canonical orthonormal eigenbasis (columns), first column ones/sqrt(k).

        The completion of the ones direction is the Helmert basis: column j
        (j = 2..k, 1-indexed) has entries 1/sqrt(j(j-1)) at positions < j,
        -(j-1)/sqrt(j(j-1)) at position j, and 0 after.  Deterministic, so
        rotated coordinates are reproducible.
        """
        k = self.size
        B = np.zeros((k, k))
        B[:, 0] = 1.0 / math.sqrt(k)
        for j in range(2, k + 1):
            norm = math.sqrt(j * (j - 1))
            B[: j - 1, j - 1] = 1.0 / norm
            B[j - 1, j - 1] = -(j - 1) / norm
        return B


def spectral_block(k: int, delta: float) -> BlockSpectrum:
    """Closed-form spectrum of (1 - delta) I_k + delta 11'.

    Raises ModelInvalidError when the block is not positive definite.  For
    k = 1 the block is the 1x1 identity regardless of delta.
    """
    k = int(k)
    if k < 1:
        raise InvalidInputError(f"block size must be >= 1, got {k}")
    delta = float(delta)
    if k == 1:
        return BlockSpectrum(
            size=1, delta=0.0, top_eigenvalue=1.0, base_eigenvalue=1.0,
            top_multiplicity=1, base_multiplicity=0,
        )
    top = 1.0 + (k - 1) * delta
    base = 1.0 - delta
    if not (base > 0.0) or not (top > 0.0):
        raise ModelInvalidError(
            f"block of size {k} with delta {delta} is not positive definite"
        )
    return BlockSpectrum(
        size=k, delta=delta, top_eigenvalue=top, base_eigenvalue=base,
        top_multiplicity=1, base_multiplicity=k - 1,
    )


def long_run_variance(model: BlockEquicorrModel) -> float:
    """Variance of the normalized sum: (1/n) 1' Sigma 1 = sum (n_m/n)(1 + (n_m-1) delta_m)."""
    cs = model.structure
    total = 0.0
    for k, d in zip(cs.sizes, model.deltas):
        total += k * (1.0 + (k - 1) * d)
    return total / cs.n


def permutation_average(delta_dense: np.ndarray, cs: ClusterStructure):
    """Average each block of a dense correlation perturbation to equicorrelation.

    delta_dense must be a symmetric zero-diagonal matrix that is block diagonal
    along cs (entries outside the blocks exactly zero, StructureMismatchError
    otherwise).  Returns the per-cluster off-diagonal averages
    delta_m = 1' Delta_m 1 / (n_m (n_m - 1)) (0 for singletons), the unique
    equicorrelated block with the same total mass 1' Delta_m 1.
    """
    delta_dense = np.asarray(delta_dense, dtype=np.float64)
    if delta_dense.ndim != 2 or delta_dense.shape[0] != delta_dense.shape[1]:
        raise InvalidInputError("delta_dense must be a square matrix")
    if delta_dense.shape[0] != cs.n:
        raise InvalidInputError(
            f"matrix is {delta_dense.shape[0]}x{delta_dense.shape[0]}, structure has n={cs.n}"
        )
    if not np.array_equal(delta_dense, delta_dense.T):
        raise InvalidInputError("delta_dense must be symmetric")
    if np.any(np.diagonal(delta_dense) != 0.0):
        raise InvalidInputError("delta_dense must have a zero diagonal")
    mask = np.zeros_like(delta_dense, dtype=bool)
    for start, k in zip(cs.starts, cs.sizes):
        mask[start : start + k, start : start + k] = True
    if np.any(delta_dense[~mask] != 0.0):
        raise StructureMismatchError(
            "delta_dense has nonzero entries outside the declared blocks"
        )
    deltas = []
    for start, k in zip(cs.starts, cs.sizes):
        if k < 2:
            deltas.append(0.0)
            continue
        block = delta_dense[start : start + k, start : start + k]
        deltas.append(float(block.sum() / (k * (k - 1))))
    return deltas


def eigen_bounds(delta_dense: np.ndarray) -> tuple[float, float]:
    """(lambda_min, lambda_max) of a dense symmetric matrix, for budget checks.

    Oracle-path only; refuses n > DENSE_N_CAP.
    """
    delta_dense = np.asarray(delta_dense, dtype=np.float64)
    if delta_dense.ndim != 2 or delta_dense.shape[0] != delta_dense.shape[1]:
        raise InvalidInputError("expected a square matrix")
    if delta_dense.shape[0] > DENSE_N_CAP:
        raise InvalidInputError(
            f"dense operations are capped at n = {DENSE_N_CAP}"
        )
    if not np.array_equal(delta_dense, delta_dense.T):
        raise InvalidInputError("matrix is not symmetric")
    w = np.linalg.eigvalsh(delta_dense)
    return float(w[0]), float(w[-1])


def deltas_for_common_variance(cs: ClusterStructure, sigma_sq: float):
    """Deltas making every normalized cluster sum have variance sigma_sq.

    Var(n_m^{-1/2} sum_{i in m} X_i) = 1 + (n_m - 1) delta_m, so
    delta_m = (sigma_sq - 1)/(n_m - 1).  All clusters must have n_m >= 2.
    Raises ModelInvalidError when the implied deltas violate positive
    definiteness (feasible exactly when 0 < sigma_sq < min_m n_m).
    """
    sigma_sq = float(sigma_sq)
    if sigma_sq <= 0.0:
        raise InvalidInputError("sigma_sq must be positive")
    if any(k < 2 for k in cs.sizes):
        raise InvalidInputError(
            "common-variance deltas require every cluster size >= 2"
        )
    deltas = [(sigma_sq - 1.0) / (k - 1) for k in cs.sizes]
    block_model(cs, deltas)  # raises ModelInvalidError when infeasible
    return deltas


def dense_sigma(model: BlockEquicorrModel) -> np.ndarray:
    """Materialize Sigma densely (oracle/validator path; capped at DENSE_N_CAP)."""
    cs = model.structure
    if cs.n > DENSE_N_CAP:
        raise InvalidInputError(f"dense operations are capped at n = {DENSE_N_CAP}")
    sigma = np.eye(cs.n)
    for start, k, d in zip(cs.starts, cs.sizes, model.deltas):
        block = np.full((k, k), d)
        np.fill_diagonal(block, 1.0)
        sigma[start : start + k, start : start + k] = block
    return sigma
