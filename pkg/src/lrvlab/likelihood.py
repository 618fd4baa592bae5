"""Exact Gaussian log-likelihood ratios and contiguity diagnostics.

The closed forms here compare N(mu_bar * 1, Sigma) against N(0, I) for
block-equicorrelation Sigma.  Rotating one block of size k by any orthogonal
basis whose first vector is ones/sqrt(k) diagonalizes the block, and the
rotated coordinates enter only through two row statistics — the block sum S1
(Z_1 = S1/sqrt(k)) and the residual square mass T = S2 - S1^2/k — so the
evaluation is O(n) and never materializes a rotation.

For one block of size k with parameter delta (a = 1 + (k-1) delta,
b = 1 - delta):

    log LR = -log(a)/2 - (k-1) log(b)/2
             + (k-1) delta S1^2 / (2 a k) - delta T / (2 b)
             + mu_bar S1 / a - k mu_bar^2 / (2 a)

A general dense pair is handled twice over: a direct log-density difference
via Cholesky factorizations, and a series-free spectral formula that is valid
whenever the eigenvalues of S^{-1/2} U'(Sigma1 - Sigma0) U S^{-1/2} all lie in
(-1, 1).  The two routes must agree; the dense evaluator asserts that.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.special import erf, erfc

from .cluster_model import (
    DENSE_N_CAP,
    BlockEquicorrModel,
    ClusterStructure,
    block_model,
    build_structure,
)
from .errors import FactorizationError, InvalidInputError, ModelInvalidError
from .sampler import normal_rows

# Agreement demanded between the two dense log-LR routes (absolute, scaled up
# by |value| once values leave the unit range).
_DENSE_AGREEMENT = 1e-8

# Scalars generated per Monte Carlo chunk in lr_diagnostics.
_CHUNK_SCALARS = 1 << 22


def normal_cdf(x) -> np.ndarray | float:
    """Standard normal CDF via the error function (1e-12 class accuracy)."""
    return 0.5 * (1.0 + erf(np.asarray(x, dtype=np.float64) / math.sqrt(2.0)))


def chi2_cdf_1df(t) -> np.ndarray | float:
    """CDF of a chi-square with one degree of freedom: P(Z^2 <= t) = erf(sqrt(t/2))."""
    t = np.asarray(t, dtype=np.float64)
    return np.where(t > 0.0, erf(np.sqrt(np.maximum(t, 0.0) / 2.0)), 0.0)


def _block_loglr_terms(model: BlockEquicorrModel, mu_bar: float):
    """Per-block coefficients of the closed form, plus the data-free constant."""
    sizes = model.structure.sizes_array.astype(np.float64)
    deltas = model.deltas_array
    a = 1.0 + (sizes - 1.0) * deltas
    b = 1.0 - deltas
    const = float(
        np.sum(-0.5 * np.log1p((sizes - 1.0) * deltas))
        + np.sum(-0.5 * (sizes - 1.0) * np.log1p(-deltas))
        + np.sum(-sizes * mu_bar * mu_bar / (2.0 * a))
    )
    coef_s1sq = (sizes - 1.0) * deltas / (2.0 * a * sizes)
    coef_t = -deltas / (2.0 * b)
    coef_s1 = mu_bar / a
    return const, coef_s1sq, coef_t, coef_s1


def loglr_cluster_rows(X: np.ndarray, model: BlockEquicorrModel, mu_bar: float) -> np.ndarray:
    """log dN(mu_bar 1, Sigma)/dN(0, I) evaluated on each row of a (B, n) matrix."""
    cs = model.structure
    const, coef_s1sq, coef_t, coef_s1 = _block_loglr_terms(model, float(mu_bar))
    s1 = np.add.reduceat(X, cs.starts, axis=-1)
    s2 = np.add.reduceat(X * X, cs.starts, axis=-1)
    t = np.maximum(s2 - s1 * s1 / cs.sizes_array, 0.0)
    return const + (s1 * s1) @ coef_s1sq + t @ coef_t + s1 @ coef_s1


def loglr_equicorr(x, mu_bar: float, delta: float) -> float:
    """Single-block closed form; requires 1 - delta > 0 and 1 + (n-1) delta > 0.

    (n delta may lie anywhere the positive-definiteness constraints allow.)
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size < 1:
        raise InvalidInputError("expected a nonempty 1-d data vector")
    n = x.size
    delta = float(delta)
    if not (1.0 - delta > 0.0) or not (1.0 + (n - 1) * delta > 0.0):
        raise ModelInvalidError(
            f"equicorrelation block (n={n}, delta={delta}) is not positive definite"
        )
    model = block_model(build_structure([n]), [delta])
    return float(loglr_cluster_rows(x[np.newaxis, :], model, float(mu_bar))[0])


def loglr_cluster(x, cs: ClusterStructure, deltas, mu_bar: float) -> float:
    """Block-diagonal closed form: the sum of per-block evaluations.

    Each block carries the same mean shift mu_bar on its own ones vector, so
    the value is exactly the sum over blocks of loglr_equicorr restricted to
    the block's coordinates.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size != cs.n:
        raise InvalidInputError(f"expected a data vector of length {cs.n}")
    model = block_model(cs, deltas)
    return float(loglr_cluster_rows(x[np.newaxis, :], model, float(mu_bar))[0])


@dataclass(frozen=True, eq=False)
class DenseGaussianPair:
    """Two small-n Gaussian measures for oracle likelihood-ratio evaluation."""

    mu0: np.ndarray
    mu1: np.ndarray
    sigma0: np.ndarray
    sigma1: np.ndarray

    def __post_init__(self):
        for name in ("mu0", "mu1", "sigma0", "sigma1"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        n = self.mu0.shape[0] if self.mu0.ndim == 1 else -1
        if n < 1:
            raise InvalidInputError("mu0 must be a nonempty vector")
        if n > DENSE_N_CAP:
            raise InvalidInputError(f"dense operations are capped at n = {DENSE_N_CAP}")
        if self.mu1.shape != (n,):
            raise InvalidInputError("mu0 and mu1 must have the same length")
        for name in ("sigma0", "sigma1"):
            s = getattr(self, name)
            if s.shape != (n, n):
                raise InvalidInputError(f"{name} must be {n}x{n}")
            if not np.array_equal(s, s.T):
                raise InvalidInputError(f"{name} must be symmetric")

    @property
    def n(self) -> int:
        return self.mu0.shape[0]


def _chol_quad(sigma: np.ndarray, resid: np.ndarray, name: str):
    """(log det sigma, resid' sigma^{-1} resid) via one Cholesky factor."""
    try:
        lower = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise FactorizationError(f"{name} is not positive definite: {exc}") from exc
    half = scipy.linalg.solve_triangular(lower, resid, lower=True)
    return 2.0 * float(np.sum(np.log(np.diagonal(lower)))), float(half @ half)


def loglr_dense(x, pair: DenseGaussianPair) -> float:
    """log [dN(mu1, Sigma1)/dN(mu0, Sigma0)](x) for a dense pair (oracle path).

    Always evaluates the direct log-density difference; additionally evaluates
    the series-free spectral formula whenever its eigenvalue condition
    max|lambda_i| < 1 holds, and asserts the two routes agree.  Returns the
    direct value.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (pair.n,):
        raise InvalidInputError(f"expected a data vector of length {pair.n}")

    logdet0, quad0 = _chol_quad(pair.sigma0, x - pair.mu0, "sigma0")
    logdet1, quad1 = _chol_quad(pair.sigma1, x - pair.mu1, "sigma1")
    direct = -0.5 * (logdet1 - logdet0) - 0.5 * (quad1 - quad0)

    formula = _loglr_spectral(x, pair)
    if formula is not None:
        tol = _DENSE_AGREEMENT * max(1.0, abs(direct))
        assert abs(direct - formula) <= tol, (
            f"dense log-LR routes disagree: direct {direct!r} vs spectral {formula!r}"
        )
    return direct


def _loglr_spectral(x: np.ndarray, pair: DenseGaussianPair) -> float | None:
    """The spectral route: valid only when all |lambda_i| < 1; else None.

    With Sigma0 = U S U' and lambda, B the eigensystem of
    S^{-1/2} U'(Sigma1 - Sigma0) U S^{-1/2}, q_i = sqrt(1 + lambda_i),
    Z = B' S^{-1/2} U'(x - mu0) and mu~ = B' S^{-1/2} U'(mu1 - mu0):

        log LR = -sum log q_i
                 + (1/2) sum (1/q_i^2) (Z_i (q_i+1) - mu~_i)(Z_i (q_i-1) + mu~_i)
    """
    s, u = np.linalg.eigh(pair.sigma0)
    if s[0] <= 0.0:
        return None
    inv_root = 1.0 / np.sqrt(s)
    a = u.T @ (pair.sigma1 - pair.sigma0) @ u
    c = inv_root[:, np.newaxis] * a * inv_root[np.newaxis, :]
    lam, b = np.linalg.eigh(c)
    if np.max(np.abs(lam)) >= 1.0:
        return None
    q = np.sqrt(1.0 + lam)
    z = b.T @ (inv_root * (u.T @ (x - pair.mu0)))
    mu_t = b.T @ (inv_root * (u.T @ (pair.mu1 - pair.mu0)))
    return float(
        -np.sum(np.log(q))
        + 0.5 * np.sum((z * (q + 1.0) - mu_t) * (z * (q - 1.0) + mu_t) / (q * q))
    )


@dataclass(frozen=True)
class LimitLaw:
    """The limit of single-cluster log-LRs when n * delta_n -> delta != 0.

    W = -log sqrt(1 + delta) + delta Z^2 / (2 (1 + delta)) with Z standard
    normal; support is bounded below by -log sqrt(1 + delta) for delta > 0 and
    above by it for delta < 0.
    """

    delta: float

    def __post_init__(self):
        d = float(self.delta)
        object.__setattr__(self, "delta", d)
        if not (-1.0 < d <= 1.0) or d == 0.0:
            raise InvalidInputError(
                f"limit law requires delta in (-1, 1] with delta != 0, got {d}"
            )

    @property
    def support_bound(self) -> float:
        return -0.5 * math.log1p(self.delta)

    def cdf(self, w) -> np.ndarray | float:
        """P(W <= w); vectorized over w."""
        w = np.asarray(w, dtype=np.float64)
        t = 2.0 * (1.0 + self.delta) * (w - self.support_bound) / self.delta
        if self.delta > 0.0:
            out = np.where(t > 0.0, erf(np.sqrt(np.maximum(t, 0.0) / 2.0)), 0.0)
        else:
            out = np.where(t > 0.0, erfc(np.sqrt(np.maximum(t, 0.0) / 2.0)), 1.0)
        if out.ndim == 0:
            return float(out)
        return out


def limit_law_cdf(delta: float, w: float) -> float:
    """CDF of the contiguity limit law at w (see LimitLaw)."""
    return float(LimitLaw(delta).cdf(w))


def ks_distance(values: np.ndarray, cdf) -> float:
    """Kolmogorov-Smirnov distance between a sample and a reference CDF."""
    values = np.sort(np.asarray(values, dtype=np.float64))
    m = values.size
    if m == 0:
        raise InvalidInputError("empty sample")
    f = np.asarray(cdf(values), dtype=np.float64)
    i = np.arange(1, m + 1, dtype=np.float64)
    return float(max(np.max(i / m - f), np.max(f - (i - 1.0) / m)))


def lr_diagnostics(model: BlockEquicorrModel, epsilon: float, reps: int, seed: int) -> dict:
    """Monte Carlo diagnostics of the likelihood ratio under N(0, I).

    Draws `reps` independent replications (streams keyed (seed, rep)), and
    evaluates W = log dN(0, Sigma)/dN(0, I).  Reports the mean of exp(W)
    (identically 1 in expectation), its (1+epsilon)-th moment, and — when the
    model is a single non-singleton cluster whose n*delta lies in the limit
    law's domain — the Kolmogorov-Smirnov distance to the limit CDF.

    Standard errors accompany both moments; `ks` carries no SE of its own
    (the report's conservative 0.5/sqrt(reps) bound is the harness's
    convention).  Keys: mean_lr, se_mean_lr, moment_1pe, se_moment_1pe, ks,
    n, reps, seed.
    """
    epsilon = float(epsilon)
    reps = int(reps)
    if epsilon <= 0.0:
        raise InvalidInputError("epsilon must be positive")
    if reps < 1000:
        raise InvalidInputError("lr diagnostics need reps >= 1000")
    cs = model.structure
    n = cs.n
    w = np.empty(reps, dtype=np.float64)
    chunk = max(1, _CHUNK_SCALARS // n)
    for lo in range(0, reps, chunk):
        ids = range(lo, min(lo + chunk, reps))
        x = normal_rows(seed, ids, n)
        w[lo : lo + len(ids)] = loglr_cluster_rows(x, model, 0.0)

    lr = np.exp(w)
    mean_lr = float(np.mean(lr))
    se_mean_lr = float(np.std(lr, ddof=1) / math.sqrt(reps))
    powered = lr ** (1.0 + epsilon)
    moment_1pe = float(np.mean(powered))
    se_moment_1pe = float(np.std(powered, ddof=1) / math.sqrt(reps))

    ks = None
    if cs.M == 1 and n >= 2:
        delta_star = n * model.deltas[0]
        if delta_star != 0.0 and -1.0 < delta_star <= 1.0:
            ks = ks_distance(w, LimitLaw(delta_star).cdf)

    return {
        "mean_lr": mean_lr,
        "se_mean_lr": se_mean_lr,
        "moment_1pe": moment_1pe,
        "se_moment_1pe": se_moment_1pe,
        "ks": ks,
        "n": n,
        "reps": reps,
        "seed": int(seed),
    }
