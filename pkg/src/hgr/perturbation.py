"""Second-order eigenspace perturbation predictors and CDM direction maps.

Two layers live here.  The generic layer predicts, for a symmetric matrix
``A`` perturbed along ``A'``, the second-order drop of the top-k trace
``tr{V_k(t)^T A V_k(t)}``; separate formulas cover the simple-gap and
degenerate-gap cases and both are verifiable by finite differences.

The distribution-specific layer maps a normalized perturbation direction of
the joint (and optionally of the unlabeled marginal) to the induced
first-order perturbation of the dependence matrix.  In the semi-supervised
mode the labeled and unlabeled deviations are first pooled into an effective
joint direction, then pushed through the same first-order response.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cdm import GAP_RTOL, _SIGMA_FLOOR
from .distributions import JointDistribution, PerturbationDirection, _frozen
from .errors import BadRange, DegenerateGap

_EIG_EQ_RTOL = 1e-9


@dataclass(frozen=True)
class SymmetricPerturbation:
    """A symmetric matrix, a symmetric perturbation direction, and the
    eigensystem of the base matrix (eigenvalues descending)."""

    a: np.ndarray
    aprime: np.ndarray
    eigvals: np.ndarray
    eigvecs: np.ndarray


def symmetric_perturbation(a, aprime) -> SymmetricPerturbation:
    a = np.asarray(a, dtype=float)
    ap = np.asarray(aprime, dtype=float)
    if a.shape != ap.shape or a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise BadRange("expected two square matrices of equal shape")
    if np.linalg.norm(a - a.T) >= 1e-12 * max(1.0, np.linalg.norm(a)):
        raise BadRange("base matrix is not symmetric")
    if np.linalg.norm(ap - ap.T) >= 1e-12 * max(1.0, np.linalg.norm(ap)):
        raise BadRange("perturbation matrix is not symmetric")
    w, v = np.linalg.eigh(a)
    order = np.argsort(w)[::-1]
    return SymmetricPerturbation(
        a=_frozen(a), aprime=_frozen(ap), eigvals=_frozen(w[order]),
        eigvecs=_frozen(v[:, order]),
    )


def _eig_tol(sp: SymmetricPerturbation) -> float:
    return _EIG_EQ_RTOL * max(abs(float(sp.eigvals[0])), _SIGMA_FLOOR)


def trace_expansion_simple(sp: SymmetricPerturbation, k: int) -> float:
    """Coefficient c in ``tr{V_k(t)^T A V_k(t)} = tr{V_k^T A V_k} - t^2 c + o(t^2)``
    when lambda_k > lambda_{k+1}."""
    d = sp.eigvals.shape[0]
    if not 1 <= k < d:
        raise BadRange(f"k={k} outside [1, {d - 1}]")
    lam = sp.eigvals
    if lam[k - 1] - lam[k] <= _eig_tol(sp):
        raise DegenerateGap("lambda_k == lambda_{k+1}; use the degenerate expansion")
    cross = sp.eigvecs.T @ sp.aprime @ sp.eigvecs
    coef = 0.0
    for i in range(k):
        for j in range(k, d):
            coef += cross[i, j] ** 2 / (lam[i] - lam[j])
    return float(coef)


def trace_expansion_degenerate(sp: SymmetricPerturbation, k: int) -> float:
    """Same coefficient when lambda_k == lambda_{k+1} (under the equality
    tolerance).  Inside the equal block the basis is rotated to the top
    eigenvectors of the compressed perturbation before the cross terms are
    summed.  With a singleton block this reduces algebraically to the simple
    expansion, so the routine is safe to call on any spectrum."""
    d = sp.eigvals.shape[0]
    if not 1 <= k <= d:
        raise BadRange(f"k={k} outside [1, {d}]")
    lam = sp.eigvals
    tol = _eig_tol(sp)
    block = np.flatnonzero(np.abs(lam - lam[k - 1]) <= tol)
    l = int(block.min())  # 0-based index of the first block member
    vb = sp.eigvecs[:, block]
    w = vb.T @ sp.aprime @ vb
    bw, bv = np.linalg.eigh((w + w.T) / 2.0)
    order = np.argsort(bw)[::-1]
    rotated = vb @ bv[:, order][:, : k - l]  # top k-l+1 rotated block vectors

    cross = sp.eigvecs.T @ sp.aprime @ sp.eigvecs
    coef = 0.0
    for i in range(l):
        for j in range(l, d):
            coef += cross[i, j] ** 2 / (lam[i] - lam[j])
    comp = [j for j in range(d) if j not in set(block.tolist())]
    for col in range(rotated.shape[1]):
        vhat = rotated[:, col]
        for j in comp:
            num = float(vhat @ sp.aprime @ sp.eigvecs[:, j])
            coef += num**2 / (lam[k - 1] - lam[j])
    return float(coef)


@dataclass(frozen=True)
class CdmDirection:
    """First-order dependence-matrix perturbation induced by a distribution
    direction, with a sanity flag that its Frobenius norm respects the a
    priori bound of the perturbation lemma."""

    matrix: np.ndarray
    norm_bound_ok: bool


def first_order_response(dist: JointDistribution, joint_dir: np.ndarray) -> np.ndarray:
    """Derivative of the dependence matrix along a normalized joint direction.

    ``joint_dir[y, x]`` perturbs cell (x, y); the response accounts for the
    induced motion of both marginals.
    """
    p = dist.pxy  # (cx, cy)
    px, py = dist.px, dist.py
    sqrt_p = np.sqrt(p)
    xi = np.asarray(joint_dir, dtype=float)  # (cy, cx)
    mass = np.sqrt(np.outer(px, py))  # (cx, cy)
    term1 = (sqrt_p / mass).T * xi
    row_x = np.sum(sqrt_p.T * xi, axis=0)  # per-x sums
    col_y = np.sum(sqrt_p.T * xi, axis=1)  # per-y sums
    factor = ((p + np.outer(px, py)) / (2.0 * mass)).T  # (cy, cx)
    return term1 - factor * (row_x[None, :] / px[None, :] + col_y[:, None] / py[:, None])


def effective_direction(
    dist: JointDistribution, direction: PerturbationDirection, r: float
) -> np.ndarray:
    """Pool a labeled joint direction and an unlabeled marginal direction into
    the effective joint direction seen by the semi-supervised estimator."""
    if r < 0.0:
        raise BadRange("r must be >= 0")
    xi = direction.joint
    xi_m = (
        direction.marginal
        if direction.marginal is not None
        else np.zeros(dist.card_x)
    )
    cond_sqrt = np.sqrt(dist.cond_y_given_x()).T  # (cy, cx)
    shift = xi_m - np.sum(cond_sqrt * xi, axis=0)
    return xi + (r / (1.0 + r)) * cond_sqrt * shift[None, :]


def induced_cdm_direction(
    dist: JointDistribution,
    direction: PerturbationDirection,
    mode: str = "supervised",
    r: float = 0.0,
) -> CdmDirection:
    """First-order dependence-matrix direction for a distribution direction,
    supervised or semi-supervised."""
    dist.require_strict()
    if mode == "supervised":
        eff = direction.joint
    elif mode == "semi":
        eff = effective_direction(dist, direction, r)
    else:
        raise BadRange(f"unknown mode {mode!r}")
    out = first_order_response(dist, eff)
    p_min = float(np.min(dist.pxy[dist.pxy > 0.0]))
    scale = max(1.0, float(np.max(np.abs(eff))))
    bound = (
        (1.0 + dist.card_x + dist.card_y)
        / p_min**2
        * np.sqrt(dist.card_x * dist.card_y)
        * scale
    )
    return CdmDirection(
        matrix=_frozen(out), norm_bound_ok=bool(np.linalg.norm(out) <= bound)
    )
