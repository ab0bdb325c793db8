"""Command-line interface.

Subcommands: ``ace``, ``exponent``, ``semi-exponent``, ``budget``,
``simulate``, ``trend``.  Every run writes a manifest next to its first
output recording the resolved configuration, seed, version and wall time;
output files embed the manifest hash so results are traceable.  Given the
same inputs and seed, outputs are byte-identical across reruns and worker
counts.

Exit codes: 0 success, 2 usage error (bad flags, unreadable input), 1
computation error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .ace import AceConfig, ace_fit
from .cdm import cdm_to_dict, empirical_cdm, semi_cdm, true_cdm
from .distributions import (
    JointDistribution,
    diagonal_family,
    load_distribution,
    load_samples,
)
from .errors import HgrError
from .exponent import SolverConfig, exponent, sample_bound, trend_experiment
from .montecarlo import auto_eps_grid, empirical_exponent, run_trials
from .semi import BudgetProblem, exponent_semi, optimal_ratio, sample_bound_semi

_PRESETS = {
    # 4x4 two-level distribution (1/8 diagonal, 1/24 off) at desk scale
    "diag4": {"k": 2, "n": 100_000, "trials": 10_000},
}


class _UsageError(Exception):
    pass


def _env_int(name: str) -> int | None:
    raw = os.environ.get(name)
    if raw is None or raw == "":
        return None
    try:
        return int(raw)
    except ValueError:
        raise _UsageError(f"environment variable {name}={raw!r} is not an integer")


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = _env_int("HGR_SEED")
    return env if env is not None else 0


def _resolve_threads(args) -> int:
    threads = getattr(args, "threads", None)
    if threads is None:
        threads = _env_int("HGR_THREADS")
    if threads is None:
        threads = os.cpu_count() or 1
    if threads < 1:
        raise _UsageError("--threads must be >= 1")
    return threads


def _load_dist(path: str) -> JointDistribution:
    if not os.path.exists(path):
        raise _UsageError(f"no such file: {path}")
    try:
        return load_distribution(path)
    except (OSError, ValueError, KeyError, HgrError) as err:
        raise _UsageError(f"cannot read distribution {path}: {err}")


def _manifest(subcommand: str, config: dict, seed: int) -> tuple[dict, str]:
    core = {
        "subcommand": subcommand,
        "config": config,
        "seed": seed,
        "version": __version__,
    }
    digest = hashlib.sha256(
        json.dumps(core, sort_keys=True).encode()
    ).hexdigest()
    return core, digest


def _write_manifest(core: dict, digest: str, outputs: list[str], wall: float) -> None:
    doc = dict(core)
    doc["manifest_hash"] = digest
    doc["outputs"] = outputs
    doc["wall_time_s"] = wall
    base, _ = os.path.splitext(outputs[0])
    with open(base + ".manifest.json", "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _write_json(path: str, doc: dict) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _write_csv(path: str, digest: str, header: list[str], rows: list[list]) -> None:
    with open(path, "w") as fh:
        fh.write(f"# manifest={digest}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join("" if v is None else repr(v) if isinstance(v, float) else str(v) for v in row) + "\n")


# ---------------------------------------------------------------------------
# Subcommand handlers
# ---------------------------------------------------------------------------


def _cmd_ace(args) -> int:
    seed = _resolve_seed(args)
    if args.input.endswith(".json"):
        data = _load_dist(args.input)
        cards = (data.card_x, data.card_y)
    else:
        if not os.path.exists(args.input):
            raise _UsageError(f"no such file: {args.input}")
        try:
            data = load_samples(args.input, args.card_x, args.card_y)
        except (OSError, ValueError, HgrError) as err:
            raise _UsageError(f"cannot read samples {args.input}: {err}")
        cards = (data.card_x, data.card_y)
    mode = {"sup": "supervised", "semi": "semi"}[args.mode]
    config = {
        "input": os.path.abspath(args.input), "k": args.k, "mode": args.mode,
        "card_x": cards[0], "card_y": cards[1],
    }
    core, digest = _manifest("ace", config, seed)
    start = time.monotonic()
    fm = ace_fit(data, AceConfig(k=args.k, seed=seed), mode=mode)
    doc = {
        "manifest_hash": digest,
        "k": fm.k,
        "mode": args.mode,
        "f": fm.f.tolist(),
        "g": fm.g.tolist(),
        "mu_x": fm.mu_x.tolist(),
        "mu_y": fm.mu_y.tolist(),
        "rho_k": fm.correlation,
        "seed": seed,
    }
    _write_json(args.out, doc)
    _write_manifest(core, digest, [args.out], time.monotonic() - start)
    return 0


def _solver_config(args, seed: int) -> SolverConfig:
    return SolverConfig(
        eta=args.eta, tol=args.tol, max_iters=args.max_iters,
        restarts=args.restarts, seed=seed, force_path=getattr(args, "force_path", None),
    )


def _cmd_exponent(args) -> int:
    seed = _resolve_seed(args)
    dist = _load_dist(args.dist)
    config = {
        "dist": os.path.abspath(args.dist), "k": args.k, "eta": args.eta,
        "tol": args.tol, "max_iters": args.max_iters, "restarts": args.restarts,
        "force_path": args.force_path,
    }
    core, digest = _manifest("exponent", config, seed)
    start = time.monotonic()
    report = exponent(dist, args.k, _solver_config(args, seed))
    doc = {"manifest_hash": digest, "seed": seed, **report.to_dict()}
    if report.gain > 0.0 and args.eps is not None and args.delta is not None:
        doc["sample_bound"] = sample_bound(
            report.gain, dist.card_x, dist.card_y, args.eps, args.delta
        ).to_dict()
    _write_json(args.out, doc)
    outputs = [args.out]
    if args.dump_cdm:
        _write_json(args.dump_cdm, {"manifest_hash": digest, **cdm_to_dict(true_cdm(dist))})
        outputs.append(args.dump_cdm)
    _write_manifest(core, digest, outputs, time.monotonic() - start)
    return 0


def _cmd_semi_exponent(args) -> int:
    seed = _resolve_seed(args)
    dist = _load_dist(args.dist)
    config = {
        "dist": os.path.abspath(args.dist), "k": args.k, "r": args.r,
        "eta": args.eta, "tol": args.tol, "max_iters": args.max_iters,
        "restarts": args.restarts, "force_path": args.force_path,
    }
    core, digest = _manifest("semi-exponent", config, seed)
    start = time.monotonic()
    report = exponent_semi(dist, args.k, args.r, _solver_config(args, seed))
    doc = {"manifest_hash": digest, "seed": seed, **report.to_dict()}
    if report.gain > 0.0 and args.eps is not None and args.delta is not None:
        doc["sample_bound"] = sample_bound_semi(
            report.gain, dist.card_x, dist.card_y, args.r, args.eps, args.delta
        ).to_dict()
    _write_json(args.out, doc)
    outputs = [args.out]
    if args.dump_cdm:
        _write_json(args.dump_cdm, {"manifest_hash": digest, **cdm_to_dict(true_cdm(dist))})
        outputs.append(args.dump_cdm)
    _write_manifest(core, digest, outputs, time.monotonic() - start)
    return 0


def _cmd_budget(args) -> int:
    seed = _resolve_seed(args)
    dist = _load_dist(args.dist)
    config = {
        "dist": os.path.abspath(args.dist), "k": args.k, "cost_l": args.cost_l,
        "cost_u": args.cost_u, "budget": args.budget, "r_max": args.r_max,
    }
    core, digest = _manifest("budget", config, seed)
    start = time.monotonic()
    bp = BudgetProblem(
        cost_labeled=args.cost_l, cost_unlabeled=args.cost_u,
        budget=args.budget, k=args.k, r_max=args.r_max,
    )
    plan = optimal_ratio(bp, dist, seed=seed)
    doc = {"manifest_hash": digest, "seed": seed, **plan.to_dict()}
    _write_json(args.out, doc)
    _write_manifest(core, digest, [args.out], time.monotonic() - start)
    return 0


def _cmd_simulate(args) -> int:
    seed = _resolve_seed(args)
    threads = _resolve_threads(args)
    if args.preset is not None:
        preset = _PRESETS[args.preset]
        dist = diagonal_family(4, 1.0 / 8.0, 1.0 / 24.0)
        k = preset["k"] if args.k is None else args.k
        n = preset["n"] if args.n is None else args.n
        trials = preset["trials"] if args.trials is None else args.trials
        dist_label = f"preset:{args.preset}"
    else:
        if args.dist is None:
            raise _UsageError("either --dist or --preset is required")
        dist = _load_dist(args.dist)
        dist_label = os.path.abspath(args.dist)
        if args.k is None or args.n is None or args.trials is None:
            raise _UsageError("--k, --n and --trials are required without a preset")
        k, n, trials = args.k, args.n, args.trials
    r = args.r
    config = {
        "dist": dist_label, "k": k, "n": n, "trials": trials, "r": r,
    }
    core, digest = _manifest("simulate", config, seed)
    start = time.monotonic()
    batch = run_trials(dist, k, n, r, trials, seed, workers=threads)
    _write_csv(
        args.out, digest, ["trial", "error"],
        [[i, float(e)] for i, e in enumerate(batch.errors)],
    )
    outputs = [args.out]
    if args.exponent_out:
        cfg = SolverConfig(seed=seed)
        theory = (
            exponent_semi(dist, k, r, cfg) if r > 0.0 else exponent(dist, k, cfg)
        ).exponent
        try:
            grid = auto_eps_grid(batch)
        except HgrError:
            grid = None
        rows = []
        if grid is not None:
            emp = empirical_exponent(batch, grid)
            for i in range(grid.size):
                rows.append([
                    float(emp.eps[i]),
                    float(emp.p_hat[i]),
                    None if emp.masked[i] else float(emp.exponent_hat[i]),
                    float(theory),
                    int(emp.masked[i]),
                ])
        _write_csv(
            args.exponent_out, digest,
            ["eps", "p_hat", "exponent_hat", "theory_exponent", "masked"], rows,
        )
        outputs.append(args.exponent_out)
    _write_manifest(core, digest, outputs, time.monotonic() - start)
    return 0


def _cmd_trend(args) -> int:
    seed = _resolve_seed(args)
    threads = _resolve_threads(args)
    config = {
        "card_x": args.card_x, "card_y": args.card_y, "num": args.num,
        "k_max": args.k_max,
    }
    core, digest = _manifest("trend", config, seed)
    start = time.monotonic()
    result = trend_experiment(
        args.card_x, args.card_y, list(range(1, args.k_max + 1)), args.num,
        seed, workers=threads,
    )
    rows = [
        [k, float(v), result.num_dists - result.skipped, result.skipped]
        for k, v in zip(result.k_values, result.mean_normalized)
    ]
    _write_csv(
        args.out, digest,
        ["k", "mean_normalized_exponent", "num_dists", "skipped"], rows,
    )
    _write_manifest(core, digest, [args.out], time.monotonic() - start)
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--eta", type=float, default=0.1, help="projection step of the iterative solver")
    p.add_argument("--tol", type=float, default=1e-12, help="convergence tolerance of the iterative solver")
    p.add_argument("--max-iters", type=int, default=1000, dest="max_iters")
    p.add_argument("--restarts", type=int, default=5)
    p.add_argument("--force-path", choices=["spectral", "iterative"], default=None, dest="force_path")
    p.add_argument("--eps", type=float, default=None, help="also evaluate the sample bound at this accuracy")
    p.add_argument("--delta", type=float, default=None, help="confidence parameter for the sample bound")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hgr",
        description="HGR maximal correlation features, error exponents, and Monte Carlo validation",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("ace", help="estimate maximal correlation functions")
    p.add_argument("--input", required=True, help="samples.csv or dist.json")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--mode", choices=["sup", "semi"], default="sup")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--card-x", type=int, default=None, dest="card_x")
    p.add_argument("--card-y", type=int, default=None, dest="card_y")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_ace)

    p = sub.add_parser("exponent", help="supervised error exponent")
    p.add_argument("--dist", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--seed", type=int, default=None)
    _add_solver_flags(p)
    p.add_argument("--dump-cdm", default=None, dest="dump_cdm")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_exponent)

    p = sub.add_parser("semi-exponent", help="semi-supervised error exponent")
    p.add_argument("--dist", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--r", type=float, required=True, help="unlabeled-to-labeled ratio m/n")
    p.add_argument("--seed", type=int, default=None)
    _add_solver_flags(p)
    p.add_argument("--dump-cdm", default=None, dest="dump_cdm")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_semi_exponent)

    p = sub.add_parser("budget", help="optimal labeled/unlabeled split under a budget")
    p.add_argument("--dist", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--cost-l", type=float, required=True, dest="cost_l")
    p.add_argument("--cost-u", type=float, required=True, dest="cost_u")
    p.add_argument("--budget", type=float, required=True)
    p.add_argument("--r-max", type=float, default=1e3, dest="r_max")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_budget)

    p = sub.add_parser("simulate", help="Monte Carlo learning-error trials")
    p.add_argument("--dist", default=None)
    p.add_argument("--preset", choices=sorted(_PRESETS), default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--r", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--exponent-out", default=None, dest="exponent_out")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("trend", help="normalized exponent vs k over random distributions")
    p.add_argument("--card-x", type=int, required=True, dest="card_x")
    p.add_argument("--card-y", type=int, required=True, dest="card_y")
    p.add_argument("--num", type=int, required=True)
    p.add_argument("--k-max", type=int, required=True, dest="k_max")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_trend)
    return parser


def dispatch(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return 2 if err.code not in (0, None) else 0
    try:
        return args.func(args)
    except _UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except HgrError as err:
        print(f"computation error: {err}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))
