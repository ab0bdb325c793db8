"""Alternating conditional expectations for maximal correlation functions.

ACE alternates the two conditional-expectation updates

    f(x) <- E[ cov(g)^{-1} g(Y) | X = x ]
    g(y) <- E[ cov(f)^{-1} f(X) | Y = y ]

until the surrogate objective ``2 E[f^T g] - tr{cov(f) cov(g)}`` stops
increasing, then whitens.  In the square-root-weighted coordinates
``phi_i = sqrt(mu_x) f_i`` the updates are alternating least squares on the
working dependence matrix, i.e. a low-rank approximation power method, so the
whitened output spans the matrix's top-k singular subspace and the achieved
correlation ``E[f^T g]`` equals the sum of its top-k singular values.  This
implementation runs the matrix form directly: identical math, fewer code
paths.

Supervised mode works on the labeled empirical distribution; semi-supervised
mode pools the unlabeled marginal into the working joint first.  Passing a
JointDistribution instead of counts runs ACE on exact probabilities, which is
convenient for equivalence checks against a direct SVD.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .cdm import _cdm_from_joint, semi_joint
from .distributions import EmpiricalCounts, JointDistribution, _frozen
from .errors import BadRange, MaxItersExceeded, SingularCovariance
from .rng import make_rng

_COV_FLOOR = 1e-12
_MAX_RESTARTS = 3
_SUBSPACE_TOL = 1e-9
_POLISH_CAP = 200  # extra subspace-settling iterations after the objective converges


@dataclass(frozen=True)
class AceConfig:
    """Dimension k, iteration budget, surrogate-objective tolerance, and the
    seed for the random zero-mean initialization."""

    k: int
    max_iters: int = 10000
    tol: float = 1e-10
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise BadRange("k must be >= 1")


@dataclass(frozen=True)
class FeatureMap:
    """k-dimensional feature pair with the measures its moments are taken
    under.  Rows of ``f`` / ``g`` are the per-symbol feature vectors; after
    whitening they are zero-mean with identity covariance under
    ``(mu_x, mu_y)``, and ``correlation`` holds the achieved ``E[f^T g]``."""

    f: np.ndarray
    g: np.ndarray
    k: int
    mu_x: np.ndarray
    mu_y: np.ndarray
    correlation: float


def _working_joint(data, mode: str) -> np.ndarray:
    if isinstance(data, JointDistribution):
        return data.pxy
    if not isinstance(data, EmpiricalCounts):
        raise BadRange("data must be EmpiricalCounts or JointDistribution")
    if mode == "supervised":
        return data.joint_hat()
    if mode == "semi":
        return semi_joint(data)
    raise BadRange(f"unknown mode {mode!r}")


def _inv_sqrt(mat: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh((mat + mat.T) / 2.0)
    if np.any(w < _COV_FLOOR):
        raise SingularCovariance(f"covariance eigenvalue {w.min():.3e} below floor")
    return v @ np.diag(1.0 / np.sqrt(w)) @ v.T


def _inv(mat: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh((mat + mat.T) / 2.0)
    if np.any(w < _COV_FLOOR):
        raise SingularCovariance(f"covariance eigenvalue {w.min():.3e} below floor")
    return v @ np.diag(1.0 / w) @ v.T


def _centered_init(rng, dim: int, k: int, root_mass: np.ndarray) -> np.ndarray:
    """Random start, mean-centered: the component along sqrt(mass) (the
    constant function in weighted coordinates) is projected out."""
    mat = rng.standard_normal((dim, k))
    return mat - np.outer(root_mass, root_mass @ mat)


def _projector(phi: np.ndarray) -> np.ndarray:
    q, _ = np.linalg.qr(phi)
    return q @ q.T


def _ace_once(b: np.ndarray, mu_y: np.ndarray, k: int, cfg: AceConfig, rng) -> tuple[np.ndarray, np.ndarray]:
    """One ACE run in weighted coordinates on the working dependence matrix.
    Returns whitened (phi, psi) with orthonormal columns.

    Stops when neither the surrogate objective nor the feature subspace moves:
    the objective alone saturates in floating point before the subspace does,
    and when the relevant spectral gap is tiny the subspace stalls while the
    objective (the quantity that matters there) is already converged.
    """
    psi = _centered_init(rng, b.shape[0], k, np.sqrt(mu_y))
    obj_prev = -np.inf
    proj_prev = None
    polish = 0
    for it in range(cfg.max_iters):
        phi = b.T @ psi @ _inv(psi.T @ psi)
        psi = b @ phi @ _inv(phi.T @ phi)
        obj = 2.0 * np.trace(psi.T @ b @ phi) - np.trace((phi.T @ phi) @ (psi.T @ psi))
        proj = _projector(phi)
        moved = _SUBSPACE_TOL if proj_prev is None else np.linalg.norm(proj - proj_prev)
        if obj - obj_prev < cfg.tol:
            polish += 1
            if moved < _SUBSPACE_TOL or polish > _POLISH_CAP:
                break
        else:
            polish = 0
        obj_prev = obj
        proj_prev = proj
    else:
        raise MaxItersExceeded(f"ACE did not converge in {cfg.max_iters} iterations")
    phi = phi @ _inv_sqrt(phi.T @ phi)
    psi = b @ phi
    psi = psi @ _inv_sqrt(psi.T @ psi)
    return phi, psi


def _ace_zero_cdm(mu_x, mu_y, k: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Degenerate case of an exactly-uncorrelated working joint: any whitened
    zero-mean features are optimal, with correlation zero."""
    phi = _centered_init(rng, mu_x.shape[0], k, np.sqrt(mu_x))
    psi = _centered_init(rng, mu_y.shape[0], k, np.sqrt(mu_y))
    return phi @ _inv_sqrt(phi.T @ phi), psi @ _inv_sqrt(psi.T @ psi)


def ace_fit(data, cfg: AceConfig, mode: str = "supervised") -> FeatureMap:
    """Estimate the k-dimensional maximal correlation functions.

    ``data`` is EmpiricalCounts (supervised or semi mode) or a
    JointDistribution (exact probabilities).  A collapsed covariance triggers
    up to three re-randomized restarts before failing.
    """
    joint = _working_joint(data, mode)
    cx, cy = joint.shape
    if cfg.k > min(cx, cy) - 1:
        warnings.warn(
            f"k={cfg.k} above the recommended cap min(|X|,|Y|) - 1 = {min(cx, cy) - 1}",
            RuntimeWarning,
            stacklevel=2,
        )
    cdm = _cdm_from_joint(joint, "working")
    mu_x = joint.sum(axis=1)
    mu_y = joint.sum(axis=0)
    rng = make_rng(cfg.seed)
    if float(cdm.svals[0]) <= _COV_FLOOR:
        phi, psi = _ace_zero_cdm(mu_x, mu_y, cfg.k, rng)
    else:
        last_err: SingularCovariance | None = None
        for _ in range(_MAX_RESTARTS + 1):
            try:
                phi, psi = _ace_once(cdm.b, mu_y, cfg.k, cfg, rng)
                break
            except SingularCovariance as err:
                last_err = err
        else:
            raise last_err
    f = np.zeros((cx, cfg.k))
    g = np.zeros((cy, cfg.k))
    pos_x, pos_y = mu_x > 0.0, mu_y > 0.0
    f[pos_x] = phi[pos_x] / np.sqrt(mu_x[pos_x, None])
    g[pos_y] = psi[pos_y] / np.sqrt(mu_y[pos_y, None])
    corr = float(np.trace(psi.T @ cdm.b @ phi))
    return FeatureMap(
        f=_frozen(f), g=_frozen(g), k=cfg.k, mu_x=_frozen(mu_x),
        mu_y=_frozen(mu_y), correlation=corr,
    )


def feature_to_phi(fm: FeatureMap) -> np.ndarray:
    """Weighted coordinates of the features: column i is
    ``sqrt(mu_x) * f_i``, orthonormal for a whitened map."""
    return np.sqrt(fm.mu_x)[:, None] * fm.f


def phi_to_feature(phi: np.ndarray, mu_x: np.ndarray) -> np.ndarray:
    """Inverse of :func:`feature_to_phi` on symbols with positive mass."""
    out = np.zeros_like(phi)
    pos = mu_x > 0.0
    out[pos] = phi[pos] / np.sqrt(mu_x[pos, None])
    return out


def ace_objective_trace(data, cfg: AceConfig, mode: str = "supervised") -> list[float]:
    """Surrogate-objective values across ACE iterations (monotone
    non-decreasing; exposed for verification)."""
    joint = _working_joint(data, mode)
    cdm = _cdm_from_joint(joint, "working")
    rng = make_rng(cfg.seed)
    b = cdm.b
    psi = _centered_init(rng, b.shape[0], cfg.k, np.sqrt(joint.sum(axis=0)))
    values: list[float] = []
    for _ in range(cfg.max_iters):
        phi = b.T @ psi @ _inv(psi.T @ psi)
        psi = b @ phi @ _inv(phi.T @ phi)
        obj = float(
            2.0 * np.trace(psi.T @ b @ phi) - np.trace((phi.T @ phi) @ (psi.T @ psi))
        )
        if values and obj - values[-1] < cfg.tol:
            values.append(obj)
            break
        values.append(obj)
    return values
