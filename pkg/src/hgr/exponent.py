"""Supervised error-exponent machinery.

The probability that the learning error of k-dimensional features estimated
from n labeled samples exceeds ``eps`` decays like ``exp(-n eps E_k)``.  The
reciprocal ``1 / (2 E_k)`` is the worst-case learning-error gain per unit of
divergence between the empirical and true distributions, and is computed on
one of two paths:

* ``sigma_k > sigma_{k+1}``: the gain is the spectral norm of an explicit
  quadratic form assembled from the dependence-matrix Jacobian and the
  singular-mode pair vectors.
* ``sigma_k == sigma_{k+1}``: the quadratic form depends on the direction
  itself, and the gain is the value of a non-convex maximization solved by
  damped projection onto the form's top eigenspace, with random restarts.

A closed form is available when k spans everything but the trivial mode
(k = card_x - 1 with a positive spectrum): the gain is ``sigma_1^2 / 4``.
The module also evaluates the finite-sample bound on n and runs the
normalized-exponent trend sweep over random distributions.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .cdm import Cdm, true_cdm
from .distributions import JointDistribution, random_distribution
from .errors import AlphabetTooLarge, BadRange, DegenerateGap, IndexOutOfRange, MaxItersExceeded
from .perturbation import first_order_response
from .rng import stream_rng

SIZE_CAP = 4096


@dataclass(frozen=True)
class ExponentReport:
    """Exponent of the learning-error tail for one (distribution, k) pair.

    ``gain`` is the worst-case error per unit divergence (the spectral-path or
    iterative-path quantity); ``exponent`` is ``1 / (2 gain)``; ``normalized``
    rescales by the optimal H-score so exponents are comparable across k.
    ``infinite`` flags independent pairs, whose learning error is identically
    zero.
    """

    k: int
    path: str  # "spectral" or "iterative"
    gain: float
    exponent: float
    normalized: float
    gap: float
    r: float | None = None
    upper_bound: float | None = None
    bound_ok: bool | None = None
    infinite: bool = False

    def to_dict(self) -> dict:
        out = {
            "k": self.k,
            "path": self.path,
            "gain": self.gain,
            "exponent": self.exponent,
            "normalized": self.normalized,
            "gap": self.gap,
            "infinite": self.infinite,
        }
        if self.r is not None:
            out["r"] = self.r
            out["upper_bound"] = self.upper_bound
            out["bound_ok"] = self.bound_ok
        return out


@dataclass(frozen=True)
class SampleBound:
    """Sufficient labeled-sample count for error <= eps with confidence 1 - delta."""

    eps: float
    delta: float
    t: float
    n_bound: float

    def to_dict(self) -> dict:
        return {"eps": self.eps, "delta": self.delta, "t": self.t, "n_bound": self.n_bound}


@dataclass(frozen=True)
class SolverConfig:
    """Knobs for the iterative (degenerate-spectrum) gain solver."""

    eta: float = 0.1
    tol: float = 1e-12
    max_iters: int = 1000
    restarts: int = 5
    seed: int = 0
    force_path: str | None = None


@dataclass(frozen=True)
class DegenerateGainResult:
    gain: float
    trace: list[float]
    direction: np.ndarray  # (cy, cx) joint direction at the returned gain
    iterations: int
    converged: bool


def _check_cap(dist: JointDistribution) -> None:
    if dist.card_x * dist.card_y > SIZE_CAP:
        raise AlphabetTooLarge(
            f"|X||Y| = {dist.card_x * dist.card_y} exceeds the dense cap {SIZE_CAP}"
        )


def cdm_jacobian(dist: JointDistribution) -> np.ndarray:
    """Dense Jacobian of the dependence matrix w.r.t. the normalized joint
    direction, in stacked coordinates.

    Row and column indices both run over cells as ``x * card_y + y``; the
    matrix maps ``vec(joint direction)`` to ``vec(induced CDM direction)``
    where ``vec`` stacks columns of the (card_y, card_x) matrices.
    """
    dist.require_strict()
    _check_cap(dist)
    cx, cy = dist.card_x, dist.card_y
    n = cx * cy
    p = dist.pxy
    px, py = dist.px, dist.py
    mass = np.outer(px, py)

    inv_root = (1.0 / np.sqrt(mass)).reshape(n)  # indexed by (x, y) cell of the row
    src_root = np.sqrt(p).reshape(n)  # indexed by the column cell
    cell_sum = (p + mass).reshape(n)
    px_cell = np.repeat(px, cy)
    py_cell = np.tile(py, cx)

    same_x = np.kron(np.eye(cx), np.ones((cy, cy)))
    same_y = np.kron(np.ones((cx, cx)), np.eye(cy))
    delta = np.eye(n)

    inner = delta - 0.5 * (same_x / px_cell[:, None] + same_y / py_cell[:, None]) * cell_sum[:, None]
    return inv_root[:, None] * src_root[None, :] * inner


def _vec(mat: np.ndarray) -> np.ndarray:
    """Column-stack a (card_y, card_x) matrix into cell order x * card_y + y."""
    return np.ravel(mat, order="F")


def _unvec(v: np.ndarray, cy: int, cx: int) -> np.ndarray:
    return v.reshape((cy, cx), order="F")


def mode_pair_vector(cdm: Cdm, i: int, j: int) -> np.ndarray:
    """Coupling vector of singular modes i <= j (1-based):
    ``phi_j kron (B phi_i) + phi_i kron (B phi_j)``, the gradient direction
    through which a CDM perturbation mixes the two modes."""
    d = cdm.card_x
    if not (1 <= i <= j <= d):
        raise IndexOutOfRange(f"need 1 <= i <= j <= {d}, got ({i}, {j})")
    phi_i, phi_j = cdm.phi[:, i - 1], cdm.phi[:, j - 1]
    return np.kron(phi_j, cdm.b @ phi_i) + np.kron(phi_i, cdm.b @ phi_j)


def _pair_form(cdm: Cdm, pairs: list[tuple[np.ndarray, int]], phi_override=None) -> np.ndarray:
    """Sum of outer products ``theta theta^T / (sigma_i^2 - sigma_j^2)`` over
    (left vector or index, right index) pairs."""
    n = cdm.card_x * cdm.card_y
    out = np.zeros((n, n))
    for left, j in pairs:
        if isinstance(left, (int, np.integer)):
            s_i = cdm.svals[left]
            phi_i = cdm.phi[:, left]
        else:
            phi_i, s_i = left
        phi_j = cdm.phi[:, j]
        theta = np.kron(phi_j, cdm.b @ phi_i) + np.kron(phi_i, cdm.b @ phi_j)
        out += np.outer(theta, theta) / (s_i**2 - cdm.svals[j] ** 2)
    return out


def _zero_cdm(cdm: Cdm) -> bool:
    return float(cdm.svals[0]) <= 1e-12


def error_form(dist: JointDistribution, k: int, cdm: Cdm | None = None) -> tuple[np.ndarray, float]:
    """Quadratic form of the first-order learning error over normalized joint
    directions, and its spectral norm (the error gain).

    Requires ``sigma_k > sigma_{k+1}`` under the gap tolerance; an independent
    pair short-circuits to a zero form.
    """
    dist.require_strict()
    _check_cap(dist)
    cdm = true_cdm(dist) if cdm is None else cdm
    d = cdm.card_x
    if not 1 <= k < d:
        raise IndexOutOfRange(f"k={k} outside [1, {d - 1}]")
    n = d * cdm.card_y
    if _zero_cdm(cdm):
        return np.zeros((n, n)), 0.0
    if cdm.degenerate_at(k):
        raise DegenerateGap(
            f"sigma_{k} == sigma_{k + 1}; use the iterative gain solver"
        )
    jac = cdm_jacobian(dist)
    pairs = [(i, j) for i in range(k) for j in range(k, d)]
    core = _pair_form(cdm, pairs)
    g = jac.T @ core @ jac
    g = (g + g.T) / 2.0
    gain = float(np.linalg.eigvalsh(g)[-1])
    return g, gain


def _degenerate_form(
    dist: JointDistribution, cdm: Cdm, k: int, joint_dir: np.ndarray,
    jac: np.ndarray, base_form: np.ndarray, block: np.ndarray, l: int,
) -> np.ndarray:
    """Direction-dependent quadratic form of the degenerate path.

    The equal-sigma block is re-based on the top eigenvectors of the
    compressed symmetrized response before the cross-mode outer products are
    added to the fixed sub-block form.
    """
    resp = first_order_response(dist, joint_dir)
    sym = cdm.b.T @ resp + resp.T @ cdm.b
    phi_block = cdm.phi[:, block]
    w = phi_block.T @ sym @ phi_block
    bw, bv = np.linalg.eigh((w + w.T) / 2.0)
    order = np.argsort(bw)[::-1]
    rotated = phi_block @ bv[:, order][:, : k - l]  # modes l..k (0-based l)

    comp = [j for j in range(cdm.card_x) if j not in set(block.tolist())]
    pairs = []
    for col in range(rotated.shape[1]):
        vec_phi = rotated[:, col]
        s_i = cdm.svals[l + col]
        for j in comp:
            pairs.append(((vec_phi, s_i), j))
    form = base_form + _pair_form(cdm, pairs)
    return jac.T @ form @ jac


def degenerate_objective(dist: JointDistribution, k: int, joint_dir: np.ndarray) -> float:
    """Value of the degenerate-path quadratic form at one joint direction
    (handy for checking analytically known optimizers)."""
    cdm = true_cdm(dist)
    block, l = cdm.equal_block(k)
    jac = cdm_jacobian(dist)
    base = _base_block_form(cdm, l)
    j_mat = _degenerate_form(dist, cdm, k, joint_dir, jac, base, block, l)
    v = _vec(joint_dir)
    return float(v @ j_mat @ v)


def _base_block_form(cdm: Cdm, l: int) -> np.ndarray:
    """Fixed part of the degenerate form: cross terms of modes above the equal
    block against everything at or below it (empty when the block starts at
    the top)."""
    n = cdm.card_x * cdm.card_y
    if l == 0:
        return np.zeros((n, n))
    pairs = [(i, j) for i in range(l) for j in range(l, cdm.card_x)]
    return _pair_form(cdm, pairs)


def error_gain_degenerate(
    dist: JointDistribution,
    k: int,
    *,
    eta: float = 0.1,
    tol: float = 1e-12,
    max_iters: int = 1000,
    restarts: int = 5,
    rng: np.random.Generator | None = None,
) -> DegenerateGainResult:
    """Iterative gain solver for the degenerate-spectrum path.

    Alternates between rebuilding the direction-dependent quadratic form and
    nudging the direction toward its top eigenspace at rate ``eta``; keeps the
    best of ``restarts`` random starts.  The problem is neither convex nor
    concave, so the result is a certified local optimum only; running out of
    iterations downgrades to a warning and returns the best value seen.
    """
    dist.require_strict()
    _check_cap(dist)
    if rng is None:
        rng = stream_rng(0, 0)
    cdm = true_cdm(dist)
    if not 1 <= k < cdm.card_x:
        raise IndexOutOfRange(f"k={k} outside [1, {cdm.card_x - 1}]")
    n = cdm.card_x * cdm.card_y
    if _zero_cdm(cdm):
        return DegenerateGainResult(0.0, [0.0], np.zeros((cdm.card_y, cdm.card_x)), 0, True)
    block, l = cdm.equal_block(k)
    jac = cdm_jacobian(dist)
    base = _base_block_form(cdm, l)

    best: DegenerateGainResult | None = None
    for _ in range(max(restarts, 1)):
        v = rng.standard_normal(n)
        v /= np.linalg.norm(v)
        trace: list[float] = []
        converged = False
        for _ in range(max_iters):
            joint_dir = _unvec(v, cdm.card_y, cdm.card_x)
            j_mat = _degenerate_form(dist, cdm, k, joint_dir, jac, base, block, l)
            j_mat = (j_mat + j_mat.T) / 2.0
            value = float(v @ j_mat @ v)
            trace.append(value)
            if len(trace) >= 2 and abs(trace[-1] - trace[-2]) < tol:
                converged = True
                break
            w, q = np.linalg.eigh(j_mat)
            top = w[-1]
            sel = w >= top - 1e-9 * abs(top)
            q_top = q[:, sel]
            v = v + eta * (q_top @ (q_top.T @ v))
            v /= np.linalg.norm(v)
        if not converged:
            warnings.warn(
                "degenerate gain solver hit max_iters; value is a local estimate",
                RuntimeWarning,
                stacklevel=2,
            )
        result = DegenerateGainResult(
            gain=trace[-1],
            trace=trace,
            direction=_unvec(v, cdm.card_y, cdm.card_x),
            iterations=len(trace),
            converged=converged,
        )
        if best is None or result.gain > best.gain:
            best = result
    return best


def exponent(dist: JointDistribution, k: int, cfg: SolverConfig | None = None) -> ExponentReport:
    """Error exponent for (dist, k), routed on the spectral gap at k."""
    cfg = cfg or SolverConfig()
    cdm = true_cdm(dist)
    if not 1 <= k < cdm.card_x:
        raise IndexOutOfRange(f"k={k} outside [1, {cdm.card_x - 1}]")
    gap = cdm.gap(k)
    if _zero_cdm(cdm):
        return ExponentReport(
            k=k, path="spectral", gain=0.0, exponent=math.inf,
            normalized=math.inf, gap=gap, infinite=True,
        )
    if cfg.force_path == "spectral":
        degenerate = False
    elif cfg.force_path == "iterative":
        degenerate = True
    else:
        degenerate = cdm.degenerate_at(k)
    if degenerate:
        sol = error_gain_degenerate(
            dist, k, eta=cfg.eta, tol=cfg.tol, max_iters=cfg.max_iters,
            restarts=cfg.restarts, rng=stream_rng(cfg.seed, 0),
        )
        gain, path = sol.gain, "iterative"
    else:
        _, gain = error_form(dist, k, cdm=cdm)
        path = "spectral"
    exp = math.inf if gain <= 0.0 else 1.0 / (2.0 * gain)
    norm = cdm.sum_sq_top(k) * exp
    return ExponentReport(
        k=k, path=path, gain=gain, exponent=exp, normalized=norm, gap=gap,
        infinite=not math.isfinite(exp),
    )


def sample_bound(gain: float, card_x: int, card_y: int, eps: float, delta: float) -> SampleBound:
    """Finite-sample bound: with ``t = 4 * gain``, a labeled sample count above
    ``(t |X||Y| / eps) log(6 t |X||Y| / eps) + (t / eps) log(1 / delta)``
    guarantees error <= eps with probability >= 1 - delta (for eps small
    enough)."""
    if not (0.0 < eps < 1.0 and 0.0 < delta < 1.0):
        raise BadRange("eps and delta must lie in (0, 1)")
    if gain <= 0.0:
        raise BadRange("gain must be positive")
    t = 4.0 * gain
    cells = card_x * card_y
    n = (t * cells / eps) * math.log(6.0 * t * cells / eps) + (t / eps) * math.log(1.0 / delta)
    return SampleBound(eps=eps, delta=delta, t=t, n_bound=n)


# ---------------------------------------------------------------------------
# Normalized-exponent trend sweep
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrendResult:
    k_values: list[int]
    mean_normalized: list[float]
    num_dists: int
    skipped: int


def _trend_chunk(args) -> tuple[list[list[float]], int]:
    card_x, card_y, k_values, seed, indices, factory = args
    rows, skipped = [], 0
    for idx in indices:
        if factory is None:
            dist = random_distribution((card_x, card_y), stream_rng(seed, idx))
        else:
            dist = factory
        cdm = true_cdm(dist)
        vals = []
        try:
            for k in k_values:
                if cdm.degenerate_at(k):
                    cfg = SolverConfig(seed=seed)
                    rep = exponent(dist, k, cfg)
                else:
                    _, gain = error_form(dist, k, cdm=cdm)
                    rep = ExponentReport(
                        k=k, path="spectral", gain=gain,
                        exponent=math.inf if gain <= 0 else 1.0 / (2.0 * gain),
                        normalized=0.0, gap=cdm.gap(k),
                    )
                if not math.isfinite(rep.exponent):
                    raise DegenerateGap("infinite exponent")
                vals.append(cdm.sum_sq_top(k) * rep.exponent)
        except DegenerateGap:
            skipped += 1
            continue
        rows.append(vals)
    return rows, skipped


def trend_experiment(
    card_x: int,
    card_y: int,
    k_values: list[int],
    num_dists: int,
    seed: int,
    workers: int = 1,
    dist_factory: JointDistribution | None = None,
) -> TrendResult:
    """Average normalized exponent over random distributions, per k.

    Distributions hitting a degenerate gap (measure zero under the random
    model) are skipped and counted.  ``dist_factory`` substitutes a fixed
    distribution for every draw, which is useful for closed-form checks.
    """
    if num_dists < 1:
        raise BadRange("num_dists must be >= 1")
    indices = list(range(num_dists))
    if workers <= 1 or num_dists < 4:
        chunks = [indices]
    else:
        step = math.ceil(num_dists / workers)
        chunks = [indices[i : i + step] for i in range(0, num_dists, step)]
    args = [(card_x, card_y, list(k_values), seed, chunk, dist_factory) for chunk in chunks]
    if len(chunks) == 1:
        outputs = [_trend_chunk(args[0])]
    else:
        with ProcessPoolExecutor(max_workers=len(chunks)) as pool:
            outputs = list(pool.map(_trend_chunk, args))
    rows: list[list[float]] = []
    skipped = 0
    for chunk_rows, chunk_skipped in outputs:
        rows.extend(chunk_rows)
        skipped += chunk_skipped
    if not rows:
        raise DegenerateGap("every sampled distribution was degenerate")
    means = np.asarray(rows).mean(axis=0)
    return TrendResult(
        k_values=list(k_values),
        mean_normalized=[float(v) for v in means],
        num_dists=num_dists,
        skipped=skipped,
    )
