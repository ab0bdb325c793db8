"""Canonical dependence matrices and their deterministic SVD.

The dependence between X and Y is encoded by the (card_y, card_x) matrix with
entries ``(p(x, y) - px(x) py(y)) / sqrt(px(x) py(y))``: the divergence
transition matrix ``p(x, y) / sqrt(px py)`` with its trivial top mode
``sqrt(py) sqrt(px)^T`` removed.  Its singular values live in [0, 1], the
k-dimensional maximal correlation is the sum of the top k of them, and the
maximal correlation functions correspond to the top singular vectors.

Three estimators share the construction: the true matrix from a known
distribution, the supervised empirical one from labeled counts, and the
semi-supervised one that re-weights the empirical conditional with the pooled
x-marginal from labeled plus unlabeled samples.

SVDs here are deterministic: singular values are padded with zeros to card_x,
each right vector is sign-fixed so its largest-magnitude entry is positive,
degenerate blocks are re-based by Gram-Schmidt against the standard basis in
lexicographic order, and left vectors follow via ``psi = B phi / sigma``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distributions import EmpiricalCounts, JointDistribution, _frozen
from .errors import DegenerateTopGap, IndexOutOfRange, NotOrthonormal

# sigma_k and sigma_{k+1} count as equal iff their gap is below this, relative
# to sigma_1.  Gates the spectral-norm vs iterative exponent paths.
GAP_RTOL = 1e-9
_SIGMA_FLOOR = 1e-300


@dataclass(frozen=True)
class Cdm:
    """A dependence matrix with its deterministic SVD.

    ``b`` is (card_y, card_x); ``svals`` has length card_x (zero-padded when
    card_x > card_y); ``phi`` / ``psi`` are full orthonormal bases of right /
    left vectors, one per column.  ``source`` tags the provenance:
    ``"true"``, ``"supervised"`` or ``"semi(r)"``.
    """

    b: np.ndarray
    svals: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    source: str

    @property
    def card_x(self) -> int:
        return self.b.shape[1]

    @property
    def card_y(self) -> int:
        return self.b.shape[0]

    def top_phi(self, k: int) -> np.ndarray:
        """(card_x, k) matrix of the top-k right singular vectors."""
        if not 1 <= k <= self.card_x:
            raise IndexOutOfRange(f"k={k} outside [1, {self.card_x}]")
        return self.phi[:, :k]

    def sum_sq_top(self, k: int) -> float:
        """Sum of the top-k squared singular values (the optimal H-score)."""
        return float(np.sum(self.svals[:k] ** 2))

    def rho(self, k: int) -> float:
        """k-dimensional maximal correlation: sum of the top-k singular values."""
        return float(np.sum(self.svals[:k]))

    def gap(self, k: int) -> float:
        """sigma_k - sigma_{k+1} (1-based k, requires k < card_x)."""
        if not 1 <= k < self.card_x:
            raise IndexOutOfRange(f"k={k} outside [1, {self.card_x - 1}]")
        return float(self.svals[k - 1] - self.svals[k])

    def gap_tol(self) -> float:
        return GAP_RTOL * max(float(self.svals[0]), _SIGMA_FLOOR)

    def degenerate_at(self, k: int) -> bool:
        return self.gap(k) <= self.gap_tol()

    def equal_block(self, k: int) -> tuple[np.ndarray, int]:
        """0-based indices whose singular value equals sigma_k under the
        tolerance, and the smallest such index."""
        tol = self.gap_tol()
        idx = np.flatnonzero(np.abs(self.svals - self.svals[k - 1]) <= tol)
        return idx, int(idx.min())


def _sign_fix(v: np.ndarray) -> np.ndarray:
    j = int(np.argmax(np.abs(v)))
    return -v if v[j] < 0.0 else v


def _canonical_block_basis(block: np.ndarray) -> np.ndarray:
    """Deterministic orthonormal basis for the column span of ``block``:
    Gram-Schmidt of projected standard-basis vectors, taken in index order."""
    dim, size = block.shape
    proj = block @ block.T
    out = []
    for j in range(dim):
        w = proj[:, j].copy()
        for u in out:
            w -= (u @ w) * u
        norm = np.linalg.norm(w)
        if norm > 1e-8:
            out.append(w / norm)
        if len(out) == size:
            break
    return np.column_stack(out)


def _complete_basis(cols: list[np.ndarray], dim: int) -> list[np.ndarray]:
    """Extend orthonormal ``cols`` to a full basis of R^dim, deterministically."""
    out = list(cols)
    for j in range(dim):
        if len(out) == dim:
            break
        w = np.zeros(dim)
        w[j] = 1.0
        for u in out:
            w -= (u @ w) * u
        norm = np.linalg.norm(w)
        if norm > 1e-8:
            out.append(w / norm)
    return out


def _deterministic_svd(b: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    cy, cx = b.shape
    _, s, vt = np.linalg.svd(b)
    svals = np.zeros(cx)
    svals[: s.shape[0]] = s
    phi = vt.T.copy()

    tol = GAP_RTOL * max(float(svals[0]), _SIGMA_FLOOR)
    zero = svals <= tol
    i = 0
    while i < cx:
        j = i
        while j + 1 < cx and svals[i] - svals[j + 1] <= tol:
            j += 1
        if j > i or zero[i]:
            phi[:, i : j + 1] = _canonical_block_basis(phi[:, i : j + 1])
        i = j + 1
    for i in range(cx):
        phi[:, i] = _sign_fix(phi[:, i])

    derived = []
    for i in range(min(cx, cy)):
        if not zero[i]:
            derived.append(b @ phi[:, i] / svals[i])
    completed = _complete_basis(derived, cy)
    # sign of a derived psi follows from phi; completion columns get their own fix
    psi = np.column_stack(
        [c if i < len(derived) else _sign_fix(c) for i, c in enumerate(completed)]
    )
    return svals, phi, psi


def _cdm_from_joint(pxy: np.ndarray, source: str) -> Cdm:
    """Dependence matrix of a joint table; rows/columns whose marginal is zero
    (unobserved symbols) are set to zero."""
    px = pxy.sum(axis=1)
    py = pxy.sum(axis=0)
    mass = np.outer(px, py)
    valid = mass > 0.0
    b = np.zeros_like(pxy)
    b[valid] = pxy[valid] / np.sqrt(mass[valid]) - np.sqrt(mass[valid])
    b = b.T
    svals, phi, psi = _deterministic_svd(b)
    return Cdm(b=_frozen(b), svals=_frozen(svals), phi=_frozen(phi),
               psi=_frozen(psi), source=source)


def true_cdm(dist: JointDistribution) -> Cdm:
    """Dependence matrix of the true joint distribution."""
    dist.require_strict()
    return _cdm_from_joint(dist.pxy, "true")


def empirical_cdm(counts: EmpiricalCounts) -> Cdm:
    """Dependence matrix of the labeled empirical distribution."""
    return _cdm_from_joint(counts.joint_hat(), "supervised")


def semi_joint(counts: EmpiricalCounts) -> np.ndarray:
    """Pooled joint table: empirical conditional times the pooled x-marginal.

    With m == 0 this is exactly the labeled empirical joint.  Symbols with
    unlabeled mass but no labeled observation carry no conditional information;
    their columns get zero mass and the table is renormalized.
    """
    if counts.m == 0:
        return counts.joint_hat()
    r = counts.ratio
    px_pool = counts.px_hat() / (1.0 + r) + counts.q_x() * (r / (1.0 + r))
    joint = counts.cond_hat() * px_pool[:, None]
    total = joint.sum()
    return joint / total


def semi_cdm(counts: EmpiricalCounts) -> Cdm:
    """Dependence matrix of the pooled labeled-plus-unlabeled estimate."""
    return _cdm_from_joint(semi_joint(counts), f"semi({counts.m / max(counts.n, 1):g})")


def hscore(cdm: Cdm, phi: np.ndarray) -> float:
    """``||B phi||_F^2`` for an orthonormal feature matrix ``phi``.

    Maximized at the sum of the top-k squared singular values by the top-k
    right singular vectors.
    """
    phi = np.asarray(phi, dtype=float)
    if phi.ndim == 1:
        phi = phi[:, None]
    k = phi.shape[1]
    if not np.allclose(phi.T @ phi, np.eye(k), atol=1e-8):
        raise NotOrthonormal("feature matrix columns are not orthonormal")
    return float(np.sum((cdm.b @ phi) ** 2))


def learning_error(cdm_true: Cdm, phi_hat: np.ndarray) -> float:
    """H-score gap between the true top-k features and an estimate; clamped to
    zero above -1e-10 (it is nonnegative up to roundoff)."""
    k = phi_hat.shape[1] if phi_hat.ndim == 2 else 1
    err = cdm_true.sum_sq_top(k) - hscore(cdm_true, phi_hat)
    return 0.0 if err > -1e-10 and err < 0.0 else err


def metric_bound_check(cdm: Cdm, phi1_hat: np.ndarray) -> tuple[float, float]:
    """Both sides of the squared-distance bound for a unit estimate of the top
    right singular vector: ``||phi_1 - phi1_hat||^2`` on the left and
    ``2 (||B phi_1||^2 - ||B phi1_hat||^2) / (sigma_1^2 - sigma_2^2)`` on the
    right.  The estimate is sign-flipped so its inner product with phi_1 is
    nonnegative."""
    s1, s2 = float(cdm.svals[0]), float(cdm.svals[1])
    if s1 - s2 < 1e-9 * s1:
        raise DegenerateTopGap("sigma_1 == sigma_2; the bound is undefined")
    v = np.asarray(phi1_hat, dtype=float).ravel()
    v = v / np.linalg.norm(v)
    phi1 = cdm.phi[:, 0]
    if v @ phi1 < 0.0:
        v = -v
    lhs = float(np.sum((phi1 - v) ** 2))
    rhs = 2.0 * (hscore(cdm, phi1) - hscore(cdm, v)) / (s1**2 - s2**2)
    return lhs, rhs


def cdm_to_dict(cdm: Cdm) -> dict:
    return {
        "source": cdm.source,
        "card_x": cdm.card_x,
        "card_y": cdm.card_y,
        "matrix": cdm.b.tolist(),
        "singular_values": cdm.svals.tolist(),
    }
