"""Monte Carlo estimation of the learning-error exponent.

Each trial samples n labeled pairs (plus m = r n unlabeled symbols when
r > 0), builds the empirical or pooled dependence matrix, and records the
H-score gap between the true top-k features and the estimated ones.  Trial i
draws from a stream keyed by (seed, i), so results are independent of worker
scheduling.  Exceedance probabilities over an epsilon grid then yield the
empirical exponent ``-log p_hat / (n eps)``; cells with no exceedances are
masked rather than reported as infinite.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .cdm import empirical_cdm, semi_cdm, true_cdm
from .distributions import (
    EmpiricalCounts,
    JointDistribution,
    merge_counts,
    sample_labeled,
    sample_unlabeled,
)
from .errors import BadRange, EmptyRange
from .rng import stream_rng


@dataclass(frozen=True)
class TrialBatch:
    """Per-trial learning errors for one Monte Carlo configuration."""

    dist: JointDistribution
    k: int
    n: int
    r: float
    num_trials: int
    seed: int
    errors: np.ndarray

    @property
    def m(self) -> int:
        return int(round(self.r * self.n))


@dataclass(frozen=True)
class EmpiricalExponent:
    """Exceedance fractions and exponent estimates over an epsilon grid.

    ``exponent_hat`` is finite exactly where ``p_hat > 0``; elsewhere the
    entry is masked (insufficient trials to see the event)."""

    eps: np.ndarray
    p_hat: np.ndarray
    exponent_hat: np.ndarray
    masked: np.ndarray
    n: int
    num_trials: int

    def std_errors(self) -> np.ndarray:
        """Delta-method standard errors of the exponent estimates (binomial
        noise in p_hat propagated through -log p / (n eps))."""
        out = np.full(self.eps.shape, np.nan)
        ok = ~self.masked
        se_p = np.sqrt(self.p_hat[ok] * (1.0 - self.p_hat[ok]) / self.num_trials)
        out[ok] = se_p / (self.p_hat[ok] * self.n * self.eps[ok])
        return out


def _one_error(dist: JointDistribution, cdm_true, k: int, n: int, m: int, rng) -> float:
    counts = sample_labeled(dist, n, rng)
    if m > 0:
        counts = merge_counts(counts, sample_unlabeled(dist, m, rng))
        est = semi_cdm(counts)
    else:
        est = empirical_cdm(counts)
    phi_hat = est.top_phi(k)
    err = cdm_true.sum_sq_top(k) - float(np.sum((cdm_true.b @ phi_hat) ** 2))
    return 0.0 if -1e-10 < err < 0.0 else err


def _trial_chunk(args) -> list[tuple[int, float]]:
    dist, k, n, m, seed, indices = args
    cdm_true = true_cdm(dist)
    out = []
    for i in indices:
        rng = stream_rng(seed, i)
        out.append((i, _one_error(dist, cdm_true, k, n, m, rng)))
    return out


def run_trials(
    dist: JointDistribution,
    k: int,
    n: int,
    r: float,
    num_trials: int,
    seed: int,
    workers: int = 1,
) -> TrialBatch:
    """Repeated sampling of the learning error; deterministic given the seed,
    for any worker count."""
    if n < 1 or num_trials < 1:
        raise BadRange("n and num_trials must be >= 1")
    if r < 0.0:
        raise BadRange("r must be >= 0")
    m = int(round(r * n))
    indices = list(range(num_trials))
    if workers <= 1 or num_trials < 4:
        chunks = [indices]
    else:
        step = math.ceil(num_trials / workers)
        chunks = [indices[i : i + step] for i in range(0, num_trials, step)]
    args = [(dist, k, n, m, seed, chunk) for chunk in chunks]
    if len(chunks) == 1:
        results = [_trial_chunk(args[0])]
    else:
        with ProcessPoolExecutor(max_workers=len(chunks)) as pool:
            results = list(pool.map(_trial_chunk, args))
    errors = np.empty(num_trials)
    for chunk_result in results:
        for i, err in chunk_result:
            errors[i] = err
    return TrialBatch(
        dist=dist, k=k, n=n, r=r, num_trials=num_trials, seed=seed, errors=errors
    )


def empirical_exponent(batch: TrialBatch, eps_grid) -> EmpiricalExponent:
    """Exceedance fractions and ``-log p_hat / (n eps)`` over the grid."""
    eps = np.asarray(eps_grid, dtype=float)
    if eps.ndim != 1 or eps.size == 0 or np.any(eps <= 0.0) or np.any(np.diff(eps) < 0):
        raise BadRange("eps grid must be positive and ascending")
    p_hat = np.array([(batch.errors > e).mean() for e in eps])
    masked = p_hat == 0.0
    exponent_hat = np.full(eps.shape, np.nan)
    ok = ~masked
    exponent_hat[ok] = -np.log(p_hat[ok]) / (batch.n * eps[ok])
    return EmpiricalExponent(
        eps=eps, p_hat=p_hat, exponent_hat=exponent_hat, masked=masked,
        n=batch.n, num_trials=batch.num_trials,
    )


def auto_eps_grid(
    batch: TrialBatch,
    target_p_range: tuple[float, float] = (0.01, 0.5),
    points: int = 8,
) -> np.ndarray:
    """Epsilon values whose exceedance lands inside ``target_p_range``, where
    the exponent estimate is statistically stable.  Raises EmptyRange when no
    epsilon qualifies (e.g. constant errors)."""
    lo, hi = target_p_range
    if not (0.0 < lo < hi <= 1.0):
        raise BadRange("target_p_range must satisfy 0 < lo < hi <= 1")
    if batch.errors.size == 0:
        raise BadRange("empty batch")
    targets = np.geomspace(hi, lo, points)
    candidates = np.quantile(batch.errors, 1.0 - targets)
    keep = []
    for e in candidates:
        if e <= 0.0:
            continue
        p = (batch.errors > e).mean()
        if lo <= p <= hi:
            keep.append(float(e))
    grid = np.unique(np.asarray(keep))
    if grid.size == 0:
        raise EmptyRange("no epsilon reaches the target exceedance band")
    return grid
