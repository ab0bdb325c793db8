"""Semi-supervised error-exponent machinery and the sampling-budget optimizer.

With ``m = r n`` unlabeled symbols pooled into the marginal estimate, the
perturbation seen by the dependence matrix is a linear mixture of the labeled
joint direction and the unlabeled marginal direction.  That mixture is a
single matrix acting on the concatenated variable ``[vec(joint); sqrt(r) *
marginal]``, so every supervised quantity has a semi-supervised counterpart:
compress the supervised quadratic form by the mixing map and take the spectral
norm (simple-gap path), or run the same damped projection solver over the
concatenated variable (degenerate path).

The gain is non-increasing and convex in r, sandwiched between
``gain(0) / (1 + r)`` and ``gain(0) / (1 + r) + r gain(inf) / (1 + r)``; when
k spans everything but the trivial mode it equals ``sigma_1^2 / (4 (1 + r))``
exactly.  The budget optimizer minimizes ``(C_l + r C_u) * gain(r)`` over r by
numerical differentiation, which fixes the labeled/unlabeled split under a
total sampling budget.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .cdm import Cdm, true_cdm
from .distributions import JointDistribution
from .errors import BadRange, DegenerateGap, IndexOutOfRange
from .exponent import (
    DegenerateGainResult,
    ExponentReport,
    SampleBound,
    SolverConfig,
    _base_block_form,
    _check_cap,
    _degenerate_form,
    _unvec,
    _vec,
    _zero_cdm,
    cdm_jacobian,
    error_form,
    exponent,
)
from .perturbation import effective_direction
from .distributions import PerturbationDirection
from .rng import stream_rng

R_INFINITY_PROXY = 1e6


def cond_embedding(dist: JointDistribution) -> np.ndarray:
    """Block-diagonal embedding of per-symbol functions by the conditional
    square root: column x holds ``sqrt(p(y|x))`` in the cells of symbol x.
    Its columns are orthonormal."""
    dist.require_strict()
    cx, cy = dist.card_x, dist.card_y
    m = np.zeros((cx * cy, cx))
    cond_sqrt = np.sqrt(dist.cond_y_given_x())
    for x in range(cx):
        m[x * cy : (x + 1) * cy, x] = cond_sqrt[x]
    return m


def mixing_map(dist: JointDistribution, r: float) -> np.ndarray:
    """Linear map from the concatenated direction ``[vec(joint); sqrt(r) *
    marginal]`` to the effective joint direction: ``[I - r/(1+r) M M^T |
    sqrt(r)/(1+r) M]`` with M the conditional embedding."""
    if r < 0.0:
        raise BadRange("r must be >= 0")
    _check_cap(dist)
    m = cond_embedding(dist)
    n = m.shape[0]
    left = np.eye(n) - (r / (1.0 + r)) * (m @ m.T)
    right = (math.sqrt(r) / (1.0 + r)) * m
    return np.hstack([left, right])


def semi_error_form(
    dist: JointDistribution, k: int, r: float, cdm: Cdm | None = None
) -> tuple[np.ndarray, float]:
    """Semi-supervised error quadratic form over concatenated directions and
    its spectral norm (the semi-supervised gain).  Requires
    ``sigma_k > sigma_{k+1}``."""
    cdm = true_cdm(dist) if cdm is None else cdm
    g_sup, _ = error_form(dist, k, cdm=cdm)
    mix = mixing_map(dist, r)
    g = mix.T @ g_sup @ mix
    g = (g + g.T) / 2.0
    if _zero_cdm(cdm):
        return g, 0.0
    gain = float(np.linalg.eigvalsh(g)[-1])
    return g, gain


def _split(u: np.ndarray, n: int, r: float, cx: int) -> tuple[np.ndarray, np.ndarray]:
    head, tail = u[:n], u[n:]
    marg = tail / math.sqrt(r) if r > 0.0 else np.zeros(cx)
    return head, marg


def semi_degenerate_objective(
    dist: JointDistribution, k: int, r: float, joint_dir: np.ndarray, marginal_dir: np.ndarray
) -> float:
    """Value of the degenerate-path semi-supervised form at one direction pair."""
    cdm = true_cdm(dist)
    block, l = cdm.equal_block(k)
    jac = cdm_jacobian(dist)
    base = _base_block_form(cdm, l)
    eff = effective_direction(
        dist, PerturbationDirection(joint=joint_dir, marginal=marginal_dir), r
    )
    j_sup = _degenerate_form(dist, cdm, k, eff, jac, base, block, l)
    mix = mixing_map(dist, r)
    j_bar = mix.T @ j_sup @ mix
    u = np.concatenate([_vec(joint_dir), math.sqrt(r) * np.asarray(marginal_dir)])
    return float(u @ j_bar @ u)


def semi_error_gain_degenerate(
    dist: JointDistribution,
    k: int,
    r: float,
    *,
    eta: float = 0.1,
    tol: float = 1e-12,
    max_iters: int = 1000,
    restarts: int = 5,
    rng: np.random.Generator | None = None,
) -> DegenerateGainResult:
    """Iterative semi-supervised gain solver for the degenerate-spectrum path,
    over the concatenated direction variable."""
    dist.require_strict()
    _check_cap(dist)
    if r < 0.0:
        raise BadRange("r must be >= 0")
    if rng is None:
        rng = stream_rng(0, 0)
    cdm = true_cdm(dist)
    if not 1 <= k < cdm.card_x:
        raise IndexOutOfRange(f"k={k} outside [1, {cdm.card_x - 1}]")
    cx, cy = cdm.card_x, cdm.card_y
    n = cx * cy
    if _zero_cdm(cdm):
        return DegenerateGainResult(0.0, [0.0], np.zeros((cy, cx)), 0, True)
    block, l = cdm.equal_block(k)
    jac = cdm_jacobian(dist)
    base = _base_block_form(cdm, l)
    mix = mixing_map(dist, r)

    best: DegenerateGainResult | None = None
    for _ in range(max(restarts, 1)):
        u = rng.standard_normal(n + cx)
        u /= np.linalg.norm(u)
        trace: list[float] = []
        converged = False
        for _ in range(max_iters):
            head, marg = _split(u, n, r, cx)
            eff = effective_direction(
                dist,
                PerturbationDirection(joint=_unvec(head, cy, cx), marginal=marg),
                r,
            )
            j_sup = _degenerate_form(dist, cdm, k, eff, jac, base, block, l)
            j_bar = mix.T @ j_sup @ mix
            j_bar = (j_bar + j_bar.T) / 2.0
            value = float(u @ j_bar @ u)
            trace.append(value)
            if len(trace) >= 2 and abs(trace[-1] - trace[-2]) < tol:
                converged = True
                break
            w, q = np.linalg.eigh(j_bar)
            top = w[-1]
            sel = w >= top - 1e-9 * abs(top)
            q_top = q[:, sel]
            u = u + eta * (q_top @ (q_top.T @ u))
            u /= np.linalg.norm(u)
        if not converged:
            warnings.warn(
                "semi degenerate gain solver hit max_iters; value is a local estimate",
                RuntimeWarning,
                stacklevel=2,
            )
        head, _ = _split(u, n, r, cx)
        result = DegenerateGainResult(
            gain=trace[-1],
            trace=trace,
            direction=_unvec(head, cy, cx),
            iterations=len(trace),
            converged=converged,
        )
        if best is None or result.gain > best.gain:
            best = result
    return best


def exponent_semi(
    dist: JointDistribution, k: int, r: float, cfg: SolverConfig | None = None
) -> ExponentReport:
    """Semi-supervised error exponent, with the ``(1 + r) * supervised``
    upper-bound check included in the report."""
    cfg = cfg or SolverConfig()
    cdm = true_cdm(dist)
    if not 1 <= k < cdm.card_x:
        raise IndexOutOfRange(f"k={k} outside [1, {cdm.card_x - 1}]")
    gap = cdm.gap(k)
    sup = exponent(dist, k, cfg)
    if _zero_cdm(cdm):
        return ExponentReport(
            k=k, path="spectral", gain=0.0, exponent=math.inf,
            normalized=math.inf, gap=gap, r=r, upper_bound=math.inf,
            bound_ok=True, infinite=True,
        )
    if cfg.force_path == "spectral":
        degenerate = False
    elif cfg.force_path == "iterative":
        degenerate = True
    else:
        degenerate = cdm.degenerate_at(k)
    if degenerate:
        sol = semi_error_gain_degenerate(
            dist, k, r, eta=cfg.eta, tol=cfg.tol, max_iters=cfg.max_iters,
            restarts=cfg.restarts, rng=stream_rng(cfg.seed, 1),
        )
        gain, path = sol.gain, "iterative"
    else:
        _, gain = semi_error_form(dist, k, r, cdm=cdm)
        path = "spectral"
    exp = math.inf if gain <= 0.0 else 1.0 / (2.0 * gain)
    upper = (1.0 + r) * sup.exponent
    return ExponentReport(
        k=k, path=path, gain=gain, exponent=exp,
        normalized=cdm.sum_sq_top(k) * exp, gap=gap, r=r, upper_bound=upper,
        bound_ok=bool(exp <= upper * (1.0 + 1e-9) + 1e-12),
        infinite=not math.isfinite(exp),
    )


def sample_bound_semi(
    gain: float, card_x: int, card_y: int, r: float, eps: float, delta: float
) -> SampleBound:
    """Semi-supervised finite-sample bound on the labeled count: with
    ``t = 4 * gain(r)``, ``(t |X|(1+|Y|) / eps) log(9 t (1+r) |X||Y| / eps)
    + (t / eps) log(1 / delta)``."""
    if not (0.0 < eps < 1.0 and 0.0 < delta < 1.0):
        raise BadRange("eps and delta must lie in (0, 1)")
    if gain <= 0.0:
        raise BadRange("gain must be positive")
    if r < 0.0:
        raise BadRange("r must be >= 0")
    t = 4.0 * gain
    n = (t * card_x * (1 + card_y) / eps) * math.log(
        9.0 * t * (1.0 + r) * card_x * card_y / eps
    ) + (t / eps) * math.log(1.0 / delta)
    return SampleBound(eps=eps, delta=delta, t=t, n_bound=n)


# ---------------------------------------------------------------------------
# Budget-constrained sampling design
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BudgetProblem:
    """Costs per labeled / unlabeled sample, a total budget, the feature
    dimension, and the search cap on the unlabeled-to-labeled ratio."""

    cost_labeled: float
    cost_unlabeled: float
    budget: float
    k: int
    r_max: float = 1e3

    def __post_init__(self):
        if min(self.cost_labeled, self.cost_unlabeled, self.budget) <= 0.0:
            raise BadRange("costs and budget must be positive")
        if self.r_max <= 0.0:
            raise BadRange("r_max must be positive")


@dataclass(frozen=True)
class BudgetPlan:
    r_star: float
    n_labeled: float
    n_unlabeled: float
    n_labeled_int: int
    n_unlabeled_int: int
    leftover: float
    boundary: bool
    objective: float
    gradient: float

    def to_dict(self) -> dict:
        return {
            "r_star": self.r_star,
            "n_labeled": self.n_labeled,
            "n_unlabeled": self.n_unlabeled,
            "n_labeled_int": self.n_labeled_int,
            "n_unlabeled_int": self.n_unlabeled_int,
            "leftover": self.leftover,
            "boundary": self.boundary,
            "objective": self.objective,
            "gradient": self.gradient,
        }


def optimal_ratio(
    bp: BudgetProblem,
    dist: JointDistribution,
    *,
    h: float = 1e-3,
    eta: float = 0.1,
    seed: int = 0,
    grid_points: int = 17,
    max_steps: int = 200,
) -> BudgetPlan:
    """Minimize ``(C_l + r C_u) * gain(r)`` over r in [0, r_max].

    Coarse grid first (ties break toward smaller r), then gradient descent by
    forward numerical differentiation with step ``h * max(r, 1)`` and
    backtracking halving of ``eta`` whenever a step would increase the
    objective.  On the degenerate-spectrum path each gain evaluation is itself
    an iterative solve, so values are cached per r.
    """
    cdm = true_cdm(dist)
    degenerate = cdm.degenerate_at(bp.k)
    cache: dict[float, float] = {}

    def gain_at(r: float) -> float:
        r = float(min(max(r, 0.0), bp.r_max))
        if r not in cache:
            if degenerate:
                sol = semi_error_gain_degenerate(
                    dist, bp.k, r, rng=stream_rng(seed, 2)
                )
                cache[r] = sol.gain
            else:
                _, g = semi_error_form(dist, bp.k, r, cdm=cdm)
                cache[r] = g
        return cache[r]

    def objective(r: float) -> float:
        return (bp.cost_labeled + r * bp.cost_unlabeled) * gain_at(r)

    # coarse grid; numerically tied values break toward smaller r
    grid = [0.0] + list(np.geomspace(1e-2, bp.r_max, grid_points - 1))
    values = {r: objective(r) for r in grid}
    vmin = min(values.values())
    tie = 1e-9 * max(abs(vmin), 1e-300)
    best_r = min(r for r, v in values.items() if v <= vmin + tie)

    # descent with the forward-difference update; the step h shrinks once the
    # iterate stalls, killing the O(h) gradient bias near interior optima
    r = best_r
    grad = 0.0
    for h_cur in (h, h / 10.0, h / 100.0, h / 1000.0):
        step_eta = eta
        for _ in range(max_steps):
            hr = h_cur * max(r, 1.0)
            probe = min(r + hr, bp.r_max)
            if probe <= r:
                probe = max(r - hr, 0.0)
            if probe == r:
                break
            grad = (objective(probe) - objective(r)) / (probe - r)
            r_new = min(max(r - step_eta * grad, 0.0), bp.r_max)
            if abs(r_new - r) < 1e-12:
                break
            noise = 1e-14 * max(1.0, abs(objective(r)))
            if objective(r_new) > objective(r) + noise:
                step_eta /= 2.0
                if step_eta < 1e-10:
                    break
                continue
            r = r_new
            step_eta = min(step_eta * 1.5, 1e4)  # accepted: stretch the step

    if r <= 1e-9 * bp.r_max:
        r = 0.0
    elif r >= bp.r_max * (1.0 - 1e-9):
        r = bp.r_max
    boundary = r <= 0.0 or r >= bp.r_max
    n_lab = bp.budget / (bp.cost_labeled + r * bp.cost_unlabeled)
    n_unl = r * n_lab
    n_lab_int = int(math.floor(n_lab))
    n_unl_int = int(math.floor(n_unl))
    leftover = bp.budget - (
        n_lab_int * bp.cost_labeled + n_unl_int * bp.cost_unlabeled
    )
    return BudgetPlan(
        r_star=float(r),
        n_labeled=n_lab,
        n_unlabeled=n_unl,
        n_labeled_int=n_lab_int,
        n_unlabeled_int=n_unl_int,
        leftover=leftover,
        boundary=boundary,
        objective=objective(r),
        gradient=grad,
    )
