"""Exact O(n) Gaussian sampling for block-equicorrelation models.

Random streams are counter-based (Philox) and keyed by the pair
(master_seed, replication_id), so any replication can be regenerated in
isolation and concurrent replications never share state.  Standard normals are
produced by a fixed, documented transform: each 64-bit word w becomes the
uniform u = ((w >> 11) + 0.5) * 2**-53, strictly inside (0, 1), and the normal
is the inverse standard-normal CDF of u.  Determinism across platforms and
batch sizes is the point; both steps are elementwise.

Within a cluster of size k with parameter delta, a draw is mixed from iid
normals g_1..g_k with mean gbar as

    X_i = mu_bar + sqrt(1 - delta) (g_i - gbar) + sqrt(1 + (k-1) delta) gbar

which has Var(X_i) = 1 and Cov(X_i, X_j) = delta exactly: the centered part
contributes (1 - delta)(delta_ij - 1/k) and the gbar part (1 + (k-1) delta)/k,
summing to delta_ij (1 - delta) + delta.  This works for negative delta all
the way down to the positive-definiteness boundary, where an additive
"common shock" construction would not.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

from .cluster_model import DENSE_N_CAP, BlockEquicorrModel
from .errors import FactorizationError, InvalidInputError, ModelInvalidError

_U64_MASK = (1 << 64) - 1
_INV_2_53 = 2.0 ** -53


class RandomStream:
    """A deterministic stream of uniforms/normals keyed by (master_seed, replication_id).

    The output is a pure function of the key pair and the draw index; distinct
    pairs give statistically independent streams.
    """

    def __init__(self, master_seed: int, replication_id: int):
        self.master_seed = int(master_seed)
        self.replication_id = int(replication_id)
        key = np.array(
            [self.master_seed & _U64_MASK, self.replication_id & _U64_MASK],
            dtype=np.uint64,
        )
        self._bits = np.random.Philox(key=key)

    def raw(self, count: int) -> np.ndarray:
        """count raw 64-bit words from the counter-based generator."""
        return self._bits.random_raw(int(count))

    def uniforms(self, count: int) -> np.ndarray:
        """Uniforms in the open interval (0, 1), 53-bit resolution."""
        return _to_uniform(self.raw(count))

    def normals(self, count: int) -> np.ndarray:
        """Standard normals via the inverse-CDF transform."""
        return ndtri(self.uniforms(count))


def _to_uniform(raw: np.ndarray) -> np.ndarray:
    return ((raw >> np.uint64(11)) + np.float64(0.5)) * _INV_2_53


def derive_stream(master_seed: int, replication_id: int) -> RandomStream:
    """The stream owned by one replication of one experiment."""
    return RandomStream(master_seed, replication_id)


def _mixing_coefficients(model: BlockEquicorrModel):
    """Per-observation mixing factors, repeated along each cluster's range."""
    cs = model.structure
    sizes = cs.sizes_array
    deltas = model.deltas_array
    a = np.sqrt(1.0 - deltas)
    b = np.sqrt(1.0 + (sizes - 1) * deltas)
    return (
        cs.starts,
        sizes,
        np.repeat(a, sizes),
        np.repeat(b, sizes),
    )


def _mix_rows(g: np.ndarray, model: BlockEquicorrModel, mu_bar: float) -> np.ndarray:
    """Apply the within-cluster mixing to each row of an iid-normal matrix.

    Row-independent: row r of the output depends only on row r of g, so a
    one-row call is bit-identical to the same row inside any batch.
    """
    if not np.any(model.deltas_array):
        # Identity covariance: the mixing formula collapses to X = mu_bar + g,
        # and taking the shortcut keeps that collapse exact.
        return mu_bar + g
    deltas = model.deltas_array
    sizes = model.structure.sizes_array
    if np.any(1.0 - deltas <= 0.0) or np.any(1.0 + (sizes - 1) * deltas <= 0.0):
        raise ModelInvalidError("covariance model is not positive definite")
    starts, sizes, a_full, b_full = _mixing_coefficients(model)
    sums = np.add.reduceat(g, starts, axis=-1)
    means = sums / sizes
    means_full = np.repeat(means, sizes, axis=-1)
    return mu_bar + a_full * (g - means_full) + b_full * means_full


def sample(model: BlockEquicorrModel, mu_bar: float, stream: RandomStream) -> np.ndarray:
    """One exact draw from N(mu_bar * 1, Sigma(model)), consuming n normals."""
    n = model.structure.n
    g = stream.normals(n)
    return _mix_rows(g[np.newaxis, :], model, float(mu_bar))[0]


def sample_rows(
    model: BlockEquicorrModel,
    mu_bar: float,
    master_seed: int,
    replication_ids,
) -> np.ndarray:
    """Stack the draws of many replications into a (len(ids), n) matrix.

    Row r equals sample(model, mu_bar, derive_stream(master_seed, ids[r]))
    bit-for-bit; this entry point just amortizes the inverse-CDF transform and
    the mixing over the batch.
    """
    n = model.structure.n
    ids = list(replication_ids)
    raw = np.empty((len(ids), n), dtype=np.uint64)
    for r, rep in enumerate(ids):
        raw[r] = derive_stream(master_seed, rep).raw(n)
    g = ndtri(_to_uniform(raw))
    return _mix_rows(g, model, float(mu_bar))


def normal_rows(master_seed: int, replication_ids, n: int) -> np.ndarray:
    """iid standard-normal rows, one replication per row, n draws each.

    Row r is bit-identical to derive_stream(master_seed, ids[r]).normals(n).
    """
    ids = list(replication_ids)
    raw = np.empty((len(ids), int(n)), dtype=np.uint64)
    for r, rep in enumerate(ids):
        raw[r] = derive_stream(master_seed, rep).raw(n)
    return ndtri(_to_uniform(raw))


def sample_rows_and_uniform(
    model: BlockEquicorrModel,
    mu_bar: float,
    master_seed: int,
    replication_ids,
):
    """Batched draws plus one randomization uniform per replication.

    Each replication consumes n + 1 raw words from its stream: the first n
    become the data row (exactly as in sample_rows), the last becomes a
    uniform in (0, 1) for randomized tests.  Returns (X, u) with shapes
    (B, n) and (B,).
    """
    n = model.structure.n
    ids = list(replication_ids)
    raw = np.empty((len(ids), n + 1), dtype=np.uint64)
    for r, rep in enumerate(ids):
        raw[r] = derive_stream(master_seed, rep).raw(n + 1)
    g = ndtri(_to_uniform(raw[:, :n]))
    u = _to_uniform(raw[:, n])
    return _mix_rows(g, model, float(mu_bar)), u


def sample_dense(mean, sigma, stream: RandomStream) -> np.ndarray:
    """Exact Gaussian draw via a dense Cholesky factor (oracle path).

    mean is a length-n vector, sigma an SPD matrix with n <= DENSE_N_CAP.
    Raises FactorizationError when sigma is not SPD.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    mean = np.asarray(mean, dtype=np.float64)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise InvalidInputError("sigma must be a square matrix")
    n = sigma.shape[0]
    if n > DENSE_N_CAP:
        raise InvalidInputError(f"dense operations are capped at n = {DENSE_N_CAP}")
    if mean.shape != (n,):
        raise InvalidInputError(f"mean must be a vector of length {n}")
    try:
        lower = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise FactorizationError(f"sigma is not positive definite: {exc}") from exc
    return mean + lower @ stream.normals(n)
