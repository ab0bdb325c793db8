"""Finite discrete joint distributions and their empirical estimates.

Alphabets are stored 0-based; file formats are 0-based as well.  A
:class:`JointDistribution` is immutable after construction and safe to share
across threads.  Samplers take an explicit generator, never hidden global
state.

The module also houses the normalized perturbation encoding that the
exponent machinery is built on: an empirical distribution close to the truth
is rewritten as a direction matrix with entries
``(p_hat(x, y) - p(x, y)) / sqrt(eps * p(x, y))`` (and the analogous marginal
vector for unlabeled samples), a one-to-one re-parametrization that is exact,
not asymptotic.
"""
from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    AllZero,
    BadRange,
    NegativeEntry,
    NonStrictDistribution,
    SupportViolation,
)

NORMALIZATION_TOL = 1e-12


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class JointDistribution:
    """A joint pmf over {0..card_x-1} x {0..card_y-1} with cached marginals.

    ``pxy[x, y]`` is the probability of the pair ``(x, y)``.  ``strict`` means
    every marginal probability is positive; exponent computations require it.
    """

    pxy: np.ndarray
    px: np.ndarray
    py: np.ndarray

    @property
    def card_x(self) -> int:
        return self.pxy.shape[0]

    @property
    def card_y(self) -> int:
        return self.pxy.shape[1]

    @property
    def strict(self) -> bool:
        return bool(np.all(self.px > 0.0) and np.all(self.py > 0.0))

    def cond_y_given_x(self) -> np.ndarray:
        """p(y|x) as a (card_x, card_y) table; rows with px == 0 are zero."""
        out = np.zeros_like(self.pxy)
        pos = self.px > 0.0
        out[pos] = self.pxy[pos] / self.px[pos, None]
        return out

    def require_strict(self) -> None:
        if not self.strict:
            raise NonStrictDistribution(
                "operation requires strictly positive marginals"
            )


def from_matrix(p) -> JointDistribution:
    """Build a JointDistribution from a raw nonnegative (card_x, card_y) table.

    Tables off the simplex by more than ``NORMALIZATION_TOL`` are renormalized
    with a warning rather than rejected (JSON round-trips lose ulps).
    """
    p = np.asarray(p, dtype=float)
    if p.ndim != 2 or min(p.shape) < 1:
        raise BadRange(f"expected a 2-d table, got shape {p.shape}")
    if np.any(p < 0.0):
        raise NegativeEntry("probability table has a negative entry")
    total = float(p.sum())
    if total <= 0.0:
        raise AllZero("probability table has no positive entry")
    if abs(total - 1.0) > NORMALIZATION_TOL:
        warnings.warn(
            f"table sums to {total!r}; renormalizing", RuntimeWarning, stacklevel=2
        )
    p = p / total
    return JointDistribution(
        pxy=_frozen(p), px=_frozen(p.sum(axis=1)), py=_frozen(p.sum(axis=0))
    )


def random_distribution(sizes: tuple[int, int], rng: np.random.Generator) -> JointDistribution:
    """Entries i.i.d. uniform on [0, 1], then normalized.  Deterministic given
    the generator state."""
    cx, cy = sizes
    if cx < 2 or cy < 2:
        raise BadRange("alphabets must have at least 2 symbols")
    p = rng.uniform(size=(cx, cy))
    return from_matrix(p / p.sum())


def diagonal_family(card_x: int, p_diag: float, p_off: float, card_y: int | None = None) -> JointDistribution:
    """Two-level distribution: ``p_diag`` on the diagonal x == y, ``p_off``
    elsewhere, with card_x <= card_y.  Requires
    ``card_x * (p_diag + (card_y - 1) * p_off) == 1``.
    """
    cy = card_x if card_y is None else card_y
    if cy < card_x:
        raise BadRange("diagonal family needs card_y >= card_x")
    p = np.full((card_x, cy), p_off, dtype=float)
    np.fill_diagonal(p, p_diag)
    return from_matrix(p)


@dataclass(frozen=True)
class EmpiricalCounts:
    """Raw labeled pair counts and unlabeled symbol counts.

    ``labeled[x, y]`` counts labeled observations of ``(x, y)``;
    ``unlabeled[x]`` counts unlabeled observations of ``x``.  Derived tables
    (joint_hat, q_x, ...) are well-defined wherever their denominators are
    positive.
    """

    labeled: np.ndarray
    unlabeled: np.ndarray

    def __post_init__(self):
        lab = np.asarray(self.labeled)
        unl = np.asarray(self.unlabeled)
        if np.any(lab < 0) or np.any(unl < 0):
            raise NegativeEntry("counts must be nonnegative")
        object.__setattr__(self, "labeled", _frozen(lab.astype(np.int64)))
        object.__setattr__(self, "unlabeled", _frozen(unl.astype(np.int64)))

    @property
    def card_x(self) -> int:
        return self.labeled.shape[0]

    @property
    def card_y(self) -> int:
        return self.labeled.shape[1]

    @property
    def n(self) -> int:
        return int(self.labeled.sum())

    @property
    def m(self) -> int:
        return int(self.unlabeled.sum())

    @property
    def ratio(self) -> float:
        """Unlabeled-to-labeled ratio m / n."""
        return self.m / self.n

    def joint_hat(self) -> np.ndarray:
        return self.labeled / self.n

    def px_hat(self) -> np.ndarray:
        return self.labeled.sum(axis=1) / self.n

    def py_hat(self) -> np.ndarray:
        return self.labeled.sum(axis=0) / self.n

    def q_x(self) -> np.ndarray:
        return self.unlabeled / self.m

    def cond_hat(self) -> np.ndarray:
        """Empirical p(y|x); rows never observed in the labeled stream are zero."""
        rows = self.labeled.sum(axis=1)
        out = np.zeros(self.labeled.shape, dtype=float)
        pos = rows > 0
        out[pos] = self.labeled[pos] / rows[pos, None]
        return out


def sample_labeled(dist: JointDistribution, n: int, rng: np.random.Generator) -> EmpiricalCounts:
    """n i.i.d. labeled pairs drawn from ``dist``, returned as cell counts."""
    if n < 1:
        raise BadRange("n must be >= 1")
    flat = rng.multinomial(n, dist.pxy.ravel())
    return EmpiricalCounts(
        labeled=flat.reshape(dist.pxy.shape),
        unlabeled=np.zeros(dist.card_x, dtype=np.int64),
    )


def sample_unlabeled(dist: JointDistribution, m: int, rng: np.random.Generator) -> EmpiricalCounts:
    """m i.i.d. unlabeled symbols drawn from the x-marginal of ``dist``."""
    if m < 0:
        raise BadRange("m must be >= 0")
    if m == 0:
        u = np.zeros(dist.card_x, dtype=np.int64)
    else:
        u = rng.multinomial(m, dist.px)
    return EmpiricalCounts(
        labeled=np.zeros((dist.card_x, dist.card_y), dtype=np.int64), unlabeled=u
    )


def merge_counts(labeled: EmpiricalCounts, unlabeled: EmpiricalCounts) -> EmpiricalCounts:
    """Combine a labeled-only and an unlabeled-only count object."""
    return EmpiricalCounts(labeled=labeled.labeled, unlabeled=unlabeled.unlabeled)


def counts_from_distribution(dist: JointDistribution, n: int) -> EmpiricalCounts:
    """Exact synthetic counts ``n * pxy`` (useful when that product is integral)."""
    scaled = dist.pxy * n
    rounded = np.rint(scaled)
    if not np.allclose(scaled, rounded, atol=1e-9):
        raise BadRange(f"{n} * pxy is not integral")
    return EmpiricalCounts(
        labeled=rounded.astype(np.int64),
        unlabeled=np.zeros(dist.card_x, dtype=np.int64),
    )


def kl_divergence(q, p) -> float:
    """Sum of q * log(q / p) with 0 log 0 = 0.

    Accepts JointDistribution objects or plain arrays of matching shape.
    Raises SupportViolation when q puts mass where p has none.
    """
    qa = q.pxy if isinstance(q, JointDistribution) else np.asarray(q, dtype=float)
    pa = p.pxy if isinstance(p, JointDistribution) else np.asarray(p, dtype=float)
    if qa.shape != pa.shape:
        raise BadRange(f"shape mismatch {qa.shape} vs {pa.shape}")
    if np.any((qa > 0.0) & (pa <= 0.0)):
        raise SupportViolation("q has mass outside the support of p")
    pos = qa > 0.0
    val = float(np.sum(qa[pos] * (np.log(qa[pos]) - np.log(pa[pos]))))
    return max(val, 0.0)


@dataclass(frozen=True)
class PerturbationDirection:
    """Normalized perturbation of an empirical distribution around the truth.

    ``joint[y, x]`` encodes the labeled-joint deviation (zero wherever the true
    joint is zero); ``marginal[x]``, present only when unlabeled samples exist,
    encodes the unlabeled-marginal deviation.  The iterative exponent solvers
    search over these objects on the unit ball of
    ``||joint||_F^2 (+ r ||marginal||^2)``.
    """

    joint: np.ndarray
    marginal: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "joint", _frozen(np.asarray(self.joint, dtype=float)))
        if self.marginal is not None:
            object.__setattr__(
                self, "marginal", _frozen(np.asarray(self.marginal, dtype=float))
            )


def perturbation_from_empirical(
    dist: JointDistribution, counts: EmpiricalCounts, eps: float
) -> PerturbationDirection:
    """Encode empirical counts as a normalized direction around ``dist``.

    The map is exactly invertible (see :func:`empirical_from_perturbation`).
    Pairs observed where the true probability is zero are rejected: they have
    probability zero under i.i.d. sampling from a strict truth, and the
    exponent theory does not cover them.
    """
    dist.require_strict()
    if not eps > 0.0:
        raise BadRange("eps must be positive")
    p = dist.pxy
    p_hat = counts.joint_hat()
    if np.any((p_hat > 0.0) & (p <= 0.0)):
        raise SupportViolation("empirical mass on a zero-probability cell")
    joint = np.zeros((dist.card_y, dist.card_x))
    pos = p > 0.0
    joint.T[pos] = (p_hat[pos] - p[pos]) / np.sqrt(eps * p[pos])
    marginal = None
    if counts.m > 0:
        marginal = (counts.q_x() - dist.px) / np.sqrt(eps * dist.px)
    return PerturbationDirection(joint=joint, marginal=marginal)


def empirical_from_perturbation(
    dist: JointDistribution, direction: PerturbationDirection, eps: float
) -> tuple[np.ndarray, np.ndarray | None]:
    """Inverse of :func:`perturbation_from_empirical`.

    Returns the reconstructed joint table and, when the direction carries a
    marginal component, the reconstructed unlabeled marginal.
    """
    if not eps > 0.0:
        raise BadRange("eps must be positive")
    p_hat = dist.pxy + np.sqrt(eps * dist.pxy) * direction.joint.T
    q = None
    if direction.marginal is not None:
        q = dist.px + np.sqrt(eps * dist.px) * direction.marginal
    return p_hat, q


# ---------------------------------------------------------------------------
# File formats: JSON distribution tables and x,y sample CSVs (0-based indices;
# unlabeled rows leave the y column empty).
# ---------------------------------------------------------------------------


def distribution_to_dict(dist: JointDistribution) -> dict:
    return {
        "card_x": dist.card_x,
        "card_y": dist.card_y,
        "pxy": dist.pxy.tolist(),
    }


def distribution_from_dict(doc: dict) -> JointDistribution:
    p = np.asarray(doc["pxy"], dtype=float)
    if p.shape != (doc["card_x"], doc["card_y"]):
        raise BadRange(
            f"pxy shape {p.shape} does not match cards "
            f"({doc['card_x']}, {doc['card_y']})"
        )
    return from_matrix(p)


def save_distribution(dist: JointDistribution, path) -> None:
    with open(path, "w") as fh:
        json.dump(distribution_to_dict(dist), fh, sort_keys=True)
        fh.write("\n")


def load_distribution(path) -> JointDistribution:
    with open(path) as fh:
        return distribution_from_dict(json.load(fh))


def load_samples(path, card_x: int | None = None, card_y: int | None = None) -> EmpiricalCounts:
    """Read an "x,y" CSV into counts; alphabet sizes default to max index + 1."""
    xs_lab, ys_lab, xs_unl = [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header[:2]] != ["x", "y"]:
            raise BadRange(f"{path}: expected header 'x,y'")
        for row in reader:
            if not row or not row[0].strip():
                continue
            x = int(row[0])
            y_field = row[1].strip() if len(row) > 1 else ""
            if y_field:
                xs_lab.append(x)
                ys_lab.append(int(y_field))
            else:
                xs_unl.append(x)
    if not xs_lab and not xs_unl:
        raise AllZero(f"{path}: no samples")
    cx = card_x if card_x is not None else max(xs_lab + xs_unl) + 1
    cy = card_y if card_y is not None else (max(ys_lab) + 1 if ys_lab else 1)
    labeled = np.zeros((cx, cy), dtype=np.int64)
    for x, y in zip(xs_lab, ys_lab):
        labeled[x, y] += 1
    unlabeled = np.zeros(cx, dtype=np.int64)
    for x in xs_unl:
        unlabeled[x] += 1
    return EmpiricalCounts(labeled=labeled, unlabeled=unlabeled)
