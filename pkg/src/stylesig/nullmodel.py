"""Autocovariance null model for label sequences.

Given a binary label sequence L, we fit its lag-wise average
autocovariance (scaled by 1/m so it decays linearly with lag), embed it
as a symmetric Toeplitz covariance matrix, and draw correlated Gaussian
vectors centred at the mean label value. Thresholding each draw at 0.5
yields surrogate label sequences that preserve the second-order
sequential structure of L without any of its content. Comparing the
observed classifier/reference agreement (normalized MCC) against the
surrogate distribution gives an empirical p-value for the hypothesis
that the classification is driven by sequentially correlated properties.

Note: because the Gaussian is centred at the mean label value but always
thresholded at 0.5, surrogate label density can deviate from that mean
when it is far from 0.5 and the variance is small. This matches the
sampling rule as defined and is intentional.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractViolationError

#: Eigenvalues of the Toeplitz matrix below this are clipped up to it.
PSD_EPSILON = 1e-10


@dataclass
class AutocovarianceModel:
    acov: np.ndarray  # lags 0..m-1
    mean: float
    m: int


@dataclass
class NullSampler:
    mean: float
    factor: np.ndarray  # lower-triangular, factor @ factor.T = repaired M
    repair_log: float  # max entrywise |M' - M| introduced by the PSD repair

    @property
    def m(self) -> int:
        return int(self.factor.shape[0])


@dataclass
class TestResult:
    observed_mcc_norm: float  # percent in [50, 100]
    p_value: float
    wilson_lo: float
    wilson_hi: float
    n_draws: int
    exceedances: int


def autocovariance(labels) -> AutocovarianceModel:
    """Average autocovariance of a label sequence at every lag.

    acov[lag] = (1/m) * sum_{j=0}^{m-lag-1} (L_j - mean)(L_{j+lag} - mean).

    The 1/m scaling (instead of 1/(m-lag)) makes the autocovariance decay
    linearly to zero as lag -> m. Summation is sequential left-to-right so
    results are reproducible independent of BLAS/vectorization details.
    """
    seq = [float(v) for v in labels]
    m = len(seq)
    if m < 2:
        raise ContractViolationError("autocovariance requires m >= 2")
    mean = sum(seq) / m
    dev = [v - mean for v in seq]
    acov = np.empty(m, dtype=np.float64)
    for lag in range(m):
        s = 0.0
        for j in range(m - lag):
            s += dev[j] * dev[j + lag]
        acov[lag] = s / m
    return AutocovarianceModel(acov=acov, mean=mean, m=m)


def toeplitz_matrix(model: AutocovarianceModel) -> np.ndarray:
    """Symmetric Toeplitz matrix with M[i, j] = acov[|i - j|]."""
    idx = np.abs(np.arange(model.m)[:, None] - np.arange(model.m)[None, :])
    return model.acov[idx]


def make_sampler(M: np.ndarray, mean: float) -> NullSampler:
    """Factor a (possibly indefinite) covariance matrix for sampling.

    The empirical Toeplitz matrix is not guaranteed PSD, so eigenvalues
    below PSD_EPSILON are clipped up to it before the Cholesky
    factorization; the maximum entrywise change is recorded.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ContractViolationError("covariance matrix must be square")
    if not np.allclose(M, M.T, atol=1e-12, rtol=0.0):
        raise ContractViolationError("covariance matrix must be symmetric")
    eigvals, eigvecs = np.linalg.eigh(M)
    clipped = np.maximum(eigvals, PSD_EPSILON)
    repaired = (eigvecs * clipped) @ eigvecs.T
    repaired = (repaired + repaired.T) / 2.0
    repair_log = float(np.max(np.abs(repaired - M)))
    factor = np.linalg.cholesky(repaired)
    return NullSampler(mean=float(mean), factor=factor, repair_log=repair_log)


def draw_null(sampler: NullSampler, seed) -> np.ndarray:
    """One surrogate label sequence: threshold a correlated Gaussian at 0.5."""
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(sampler.m)
    x = sampler.mean + sampler.factor @ z
    return (x > 0.5).astype(np.int64)


def _confusion(pred, ref) -> tuple[int, int, int, int]:
    pred = np.asarray(pred, dtype=np.int64)
    ref = np.asarray(ref, dtype=np.int64)
    if pred.shape != ref.shape:
        raise ContractViolationError(
            f"label sequences differ in length: {pred.shape} vs {ref.shape}"
        )
    tp = int(np.sum((pred == 1) & (ref == 1)))
    tn = int(np.sum((pred == 0) & (ref == 0)))
    fp = int(np.sum((pred == 1) & (ref == 0)))
    fn = int(np.sum((pred == 0) & (ref == 1)))
    return tp, tn, fp, fn


def mcc(pred, ref) -> float:
    """Matthews correlation coefficient with label 1 as positive.

    Returns 0 when any factor of the denominator is zero.
    """
    tp, tn, fp, fn = _confusion(pred, ref)
    denom_sq = float(tp + fp) * float(tp + fn) * float(tn + fp) * float(tn + fn)
    if denom_sq == 0.0:
        return 0.0
    return (float(tn) * float(tp) - float(fn) * float(fp)) / math.sqrt(denom_sq)


def normalized_mcc(value: float) -> float:
    """Map MCC to a percent in [50, 100].

    The absolute value is taken because the identity of the two cluster
    labels is arbitrary: 50% means arbitrary overlap, 100% perfect
    overlap (in either orientation).
    """
    if not -1.0 - 1e-12 <= value <= 1.0 + 1e-12:
        raise ContractViolationError(f"MCC out of range: {value}")
    return 50.0 * (1.0 + abs(value))


def wilson_interval(successes: int, n: int, z: float = 1.96) -> tuple[float, float]:
    """95% Wilson score interval for a binomial proportion."""
    if n < 1:
        raise ConfigError("Wilson interval requires n >= 1")
    phat = successes / n
    denom = 1.0 + z * z / n
    centre = (phat + z * z / (2.0 * n)) / denom
    half = z * math.sqrt(phat * (1.0 - phat) / n + z * z / (4.0 * n * n)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


def p_value(
    observed,
    ref,
    sampler: NullSampler,
    n_draws: int = 1000,
    seed: int = 0,
) -> TestResult:
    """Empirical p-value of the observed normalized MCC under the null.

    Surrogates are drawn with independent seed-derived streams (draw k
    uses default_rng((seed, k))), so the result is bit-identical however
    the draws are scheduled. The p-value uses the (1 + exceedances) /
    (1 + n_draws) permutation-test convention with >= comparison; the
    Wilson interval brackets the raw exceedance proportion.
    """
    if n_draws < 1:
        raise ConfigError("n_draws must be >= 1")
    observed = np.asarray(observed, dtype=np.int64)
    ref = np.asarray(ref, dtype=np.int64)
    if observed.shape[0] != sampler.m:
        raise ContractViolationError(
            "sampler was not built from a label sequence of this length"
        )
    s_obs = normalized_mcc(mcc(observed, ref))
    exceed = 0
    for k in range(n_draws):
        null_labels = draw_null(sampler, (seed, k))
        if normalized_mcc(mcc(null_labels, ref)) >= s_obs:
            exceed += 1
    p = (1 + exceed) / (n_draws + 1)
    lo, hi = wilson_interval(exceed, n_draws)
    return TestResult(
        observed_mcc_norm=s_obs,
        p_value=p,
        wilson_lo=lo,
        wilson_hi=hi,
        n_draws=n_draws,
        exceedances=exceed,
    )


def bh_fdr(p_values) -> np.ndarray:
    """Benjamini-Hochberg step-up adjusted p-values, in original order."""
    p = np.asarray(p_values, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise ContractViolationError("bh_fdr expects a non-empty 1-D vector")
    if np.any(p < 0.0) or np.any(p > 1.0):
        raise ContractViolationError("p-values must lie in [0, 1]")
    n = p.size
    order = np.argsort(p, kind="stable")
    scaled = p[order] * n / np.arange(1, n + 1)
    adjusted = np.minimum.accumulate(scaled[::-1])[::-1]
    adjusted = np.minimum(adjusted, 1.0)
    out = np.empty(n, dtype=np.float64)
    out[order] = adjusted
    return out
