"""Command-line surface.

Subcommands: emd, sinkhorn, bary-fixed, bary-free, cluster, ellipses-demo.
Exit codes: 0 success, 1 input error, 2 capability error (instance too large
for the exact solver), 3 non-convergence or numerical refusal.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exact import InstanceTooLargeError, solve_dual, solve_primal
from .fixed_support import FixedSupportBarycenter
from .free_support import FreeSupportBarycenter
from .io import (
    ParseError,
    format_float,
    load_measure,
    read_measure_csv,
    write_json_report,
    write_measure_csv,
    write_pgm,
    write_trace_jsonl,
)
from .measures import DiscreteMeasure, build_cost_matrix, grid_support, measure_from_image, parse_constraint
from .sinkhorn import NotConvergedError, SinkhornUnderflowError, smoothed_transport
from .synthetic import gaussian_mixture_cloud, nested_ellipses_dataset

__all__ = ["RunConfig", "main", "entry"]

# Exact solves beyond this many plan cells are refused in favor of sinkhorn.
MAX_EXACT_CELLS = 500 * 500

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_CAPABILITY = 2
EXIT_NOT_CONVERGED = 3


@dataclass(frozen=True)
class RunConfig:
    """Resolved options for one CLI invocation."""

    subcommand: str
    inputs: tuple[str, ...]
    lam: str | float
    p: float
    tol: float
    max_iter: int
    constraint: str
    step: str | float
    t0: float
    seed: int
    out_dir: Path
    log_domain: bool
    k: int
    support: str | None
    init: str
    grid: int
    count: int
    synthetic: int | None


class _Parser(argparse.ArgumentParser):
    # Flag misuse is an input error (exit 1), not argparse's default 2.
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_INPUT)


def _add_shared(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--lambda", dest="lam", default="auto",
                        help="smoothing strength, or 'auto' for 60/median(M)")
    parser.add_argument("--p", type=float, default=2.0, help="ground-cost exponent")
    parser.add_argument("--tol", type=float, default=1e-6, help="convergence tolerance")
    parser.add_argument("--max-iter", type=int, default=None, help="iteration budget")
    parser.add_argument("--seed", type=int, default=0, help="random seed")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--constraint", default="simplex",
                        help="weight constraint: simplex | uniform | entropy:<tau>")
    parser.add_argument("--log-domain", action="store_true",
                        help="use the log-domain scaling iteration")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wassbary",
                     description="Wasserstein barycenters via smoothed optimal transport")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p_emd = sub.add_parser("emd", parents=[], help="exact transport cost between two measures")
    p_emd.add_argument("source", help="source measure (.csv or .pgm)")
    p_emd.add_argument("target", help="target measure (.csv or .pgm)")
    _add_shared(p_emd)
    p_emd.set_defaults(func=run_emd)

    p_sink = sub.add_parser("sinkhorn", help="smoothed transport between two measures")
    p_sink.add_argument("source")
    p_sink.add_argument("target")
    _add_shared(p_sink)
    p_sink.set_defaults(func=run_sinkhorn)

    p_fixed = sub.add_parser("bary-fixed", help="barycenter weights on a fixed support")
    p_fixed.add_argument("measures", nargs="+", help="input measures (.csv or .pgm)")
    p_fixed.add_argument("--support", default="grid",
                         help="'grid' (inputs must be same-shape PGMs) or a CSV of points")
    p_fixed.add_argument("--t0", type=float, default=1.0, help="initial mirror step size")
    _add_shared(p_fixed)
    p_fixed.set_defaults(func=run_bary_fixed)

    p_free = sub.add_parser("bary-free", help="barycenter with free atom locations (p=2)")
    p_free.add_argument("measures", nargs="+")
    p_free.add_argument("--k", type=int, required=True, help="atom budget")
    p_free.add_argument("--init", default="random",
                        help="'random' or a CSV of k initial atoms")
    p_free.add_argument("--step", default="line-search",
                        help="'line-search' or a fixed relaxation theta in [0,1]")
    _add_shared(p_free)
    p_free.set_defaults(func=run_bary_free)

    p_cluster = sub.add_parser("cluster",
                               help="free vs uniform-weight clustering comparison")
    p_cluster.add_argument("points", nargs="?", default=None,
                           help="weighted point-cloud CSV (omit with --synthetic)")
    p_cluster.add_argument("--k", type=int, required=True)
    p_cluster.add_argument("--synthetic", type=int, default=None,
                           help="generate a synthetic cloud with this many points")
    _add_shared(p_cluster)
    p_cluster.set_defaults(func=run_cluster)

    p_demo = sub.add_parser("ellipses-demo",
                            help="barycenter of random nested-ellipse images")
    p_demo.add_argument("--grid", type=int, default=20, help="image side length")
    p_demo.add_argument("--count", type=int, default=10, help="number of images")
    _add_shared(p_demo)
    p_demo.set_defaults(func=run_ellipses_demo)

    return parser


def _config(args: argparse.Namespace) -> RunConfig:
    lam = args.lam
    if isinstance(lam, str) and lam != "auto":
        try:
            lam = float(lam)
        except ValueError:
            raise ValueError(f"--lambda must be a number or 'auto', got {lam!r}") from None
        if lam <= 0:
            raise ValueError(f"--lambda must be positive, got {lam}")
    step = getattr(args, "step", "line-search")
    if isinstance(step, str) and step != "line-search":
        try:
            step = float(step)
        except ValueError:
            raise ValueError(f"--step must be a number or 'line-search', got {step!r}") from None
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    inputs = []
    if getattr(args, "source", None) is not None:
        inputs = [args.source, args.target]
    elif getattr(args, "measures", None) is not None:
        inputs = list(args.measures)
    elif getattr(args, "points", None) is not None:
        inputs = [args.points]
    return RunConfig(
        subcommand=args.subcommand,
        inputs=tuple(inputs),
        lam=lam,
        p=args.p,
        tol=args.tol,
        max_iter=args.max_iter,
        constraint=args.constraint,
        step=step,
        t0=getattr(args, "t0", 1.0),
        seed=args.seed,
        out_dir=out_dir,
        log_domain=args.log_domain,
        k=getattr(args, "k", 0),
        support=getattr(args, "support", None),
        init=getattr(args, "init", "random"),
        grid=getattr(args, "grid", 20),
        count=getattr(args, "count", 10),
        synthetic=getattr(args, "synthetic", None),
    )


def _emit(config: RunConfig, name: str, report: dict) -> None:
    write_json_report(config.out_dir / name, report)
    print(json.dumps(report, default=float))


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def run_emd(config: RunConfig) -> int:
    mu = load_measure(config.inputs[0])
    nu = load_measure(config.inputs[1])
    if mu.n_atoms * nu.n_atoms > MAX_EXACT_CELLS:
        raise InstanceTooLargeError(
            f"{mu.n_atoms}x{nu.n_atoms} exceeds the exact solver's "
            f"{MAX_EXACT_CELLS}-cell limit; use the sinkhorn subcommand"
        )
    cost_matrix = build_cost_matrix(mu.support, nu.support, config.p)
    cost, plan = solve_primal(mu.weights, nu.weights, cost_matrix)
    duals = solve_dual(mu.weights, nu.weights, cost_matrix)
    gap = abs(cost - duals.objective(mu.weights, nu.weights))
    report = {
        "cost": cost,
        "plan_nnz": int(np.count_nonzero(plan.matrix > 0)),
        "dual_gap": gap,
    }
    _emit(config, "emd_report.json", report)
    return EXIT_OK


def run_sinkhorn(config: RunConfig) -> int:
    mu = load_measure(config.inputs[0])
    nu = load_measure(config.inputs[1])
    cost_matrix = build_cost_matrix(mu.support, nu.support, config.p)
    lam = config.lam
    if lam == "auto":
        from .sinkhorn import auto_lambda

        lam = auto_lambda(cost_matrix)
    solution = smoothed_transport(
        mu.weights,
        nu.weights,
        cost_matrix,
        lam,
        tol=config.tol,
        max_iter=config.max_iter or 10_000,
        log_domain=config.log_domain,
    )
    report = {
        "transport_cost": solution.transport_cost,
        "regularized_cost": solution.regularized_cost,
        "lambda": lam,
        "iterations": solution.iterations,
        "converged": solution.converged,
    }
    _emit(config, "sinkhorn_report.json", report)
    return EXIT_OK


def _load_measures_and_support(config: RunConfig):
    measures = [load_measure(path) for path in config.inputs]
    if config.support == "grid":
        shapes = set()
        for path in config.inputs:
            if not path.lower().endswith(".pgm"):
                raise ValueError(
                    "--support grid requires PGM inputs; pass a CSV support instead"
                )
            from .io import read_pgm

            shapes.add(read_pgm(path).shape)
        if len(shapes) != 1:
            raise ValueError(f"grid support needs same-shape images, got {sorted(shapes)}")
        shape = shapes.pop()
        return measures, grid_support(*shape), shape
    support = read_measure_csv(config.support).support
    return measures, support, None


def run_bary_fixed(config: RunConfig) -> int:
    measures, support, grid_shape = _load_measures_and_support(config)
    solver = FixedSupportBarycenter(
        support,
        p=config.p,
        constraint=config.constraint,
        lam=config.lam,
        step_size=config.t0,
        max_iter=config.max_iter or 300,
        tol=config.tol,
        log_domain=config.log_domain,
    )
    solver.fit(measures)
    out = config.out_dir
    write_measure_csv(out / "barycenter.csv", DiscreteMeasure(support, solver.weights_))
    if grid_shape is not None:
        image = solver.weights_.reshape(grid_shape)
        peak = image.max()
        write_pgm(out / "barycenter.pgm", image / peak if peak > 0 else image)
    write_trace_jsonl(out / "trace.jsonl", solver.trace_)
    report = {
        "objective": solver.objective_,
        "iterations": solver.n_iter_,
        "lambda": solver.lambda_,
        "converged": bool(solver.converged_),
        "constraint": config.constraint,
    }
    _emit(config, "bary_fixed_report.json", report)
    return EXIT_OK


def run_bary_free(config: RunConfig) -> int:
    measures = [load_measure(path) for path in config.inputs]
    init = config.init
    if isinstance(init, str) and init != "random":
        init = read_measure_csv(init).support
    solver = FreeSupportBarycenter(
        n_atoms=config.k,
        constraint=config.constraint,
        lam=config.lam,
        step=config.step,
        init=init,
        seed=config.seed,
        max_iter=config.max_iter or 100,
        tol=config.tol,
        log_domain=config.log_domain,
    )
    solver.fit(measures)
    out = config.out_dir
    write_measure_csv(
        out / "barycenter.csv", DiscreteMeasure(solver.support_, solver.weights_)
    )
    write_trace_jsonl(out / "trace.jsonl", solver.trace_)
    report = {
        "objective": solver.objective_,
        "iterations": solver.n_iter_,
        "lambda": solver.lambda_,
        "converged": bool(solver.converged_),
        "constraint": config.constraint,
        "k": config.k,
    }
    _emit(config, "bary_free_report.json", report)
    return EXIT_OK


def run_cluster(config: RunConfig) -> int:
    if config.synthetic is not None:
        points, weights = gaussian_mixture_cloud(config.synthetic, seed=config.seed)
        cloud = DiscreteMeasure(points, weights)
    elif config.inputs:
        cloud = read_measure_csv(config.inputs[0])
    else:
        raise ValueError("cluster needs a point-cloud CSV or --synthetic <n>")
    distinct = np.unique(cloud.support.T, axis=0).shape[0]
    if config.k > distinct:
        raise ValueError(f"k={config.k} exceeds the {distinct} distinct input points")

    rng = np.random.default_rng(config.seed)
    idx = rng.choice(cloud.n_atoms, size=config.k, replace=False, p=cloud.weights)
    init = cloud.support[:, idx].copy()

    results = {}
    for name, constraint in (("free", "simplex"), ("uniform", "uniform")):
        # Free weights collapse unused atoms toward the simplex boundary, so
        # the plain kernel iteration would underflow; always run log-domain.
        solver = FreeSupportBarycenter(
            n_atoms=config.k,
            constraint=constraint,
            lam=config.lam,
            step=config.step,
            init=init,
            seed=config.seed,
            max_iter=config.max_iter or 100,
            tol=config.tol,
            log_domain=True,
        )
        tic = time.perf_counter()
        solver.fit([cloud])
        wall = time.perf_counter() - tic
        write_measure_csv(
            config.out_dir / f"centroids_{name}.csv",
            DiscreteMeasure(solver.support_, solver.weights_),
        )
        results[name] = (solver, wall)

    free_obj = results["free"][0].objective_
    uniform_obj = results["uniform"][0].objective_
    report = {
        "free_objective": free_obj,
        "uniform_objective": uniform_obj,
        "free_iterations": results["free"][0].n_iter_,
        "uniform_iterations": results["uniform"][0].n_iter_,
        "free_wall_s": results["free"][1],
        "uniform_wall_s": results["uniform"][1],
        "uniform_geq_free": bool(uniform_obj >= free_obj - 1e-8),
    }
    _emit(config, "cluster_report.json", report)
    if not report["uniform_geq_free"]:
        print(
            "error: uniform-constrained objective fell below the free objective; "
            "inner solves likely did not converge",
            file=sys.stderr,
        )
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def run_ellipses_demo(config: RunConfig) -> int:
    images = nested_ellipses_dataset(config.count, config.grid, config.seed)
    measures = [measure_from_image(img) for img in images]
    support = grid_support(config.grid, config.grid)
    solver = FixedSupportBarycenter(
        support,
        p=2.0,
        constraint=config.constraint,
        lam=config.lam,
        step_size=config.t0 if config.t0 else 1.0,
        max_iter=config.max_iter or 60,
        tol=config.tol,
        log_domain=config.log_domain,
    )
    solver.fit(measures)
    out = config.out_dir
    image = solver.weights_.reshape(config.grid, config.grid)
    peak = image.max()
    write_pgm(out / "barycenter.pgm", image / peak if peak > 0 else image)
    write_trace_jsonl(out / "trace.jsonl", solver.trace_)
    objectives = solver.trace_.objectives
    report = {
        "grid": config.grid,
        "count": config.count,
        "seed": config.seed,
        "lambda": solver.lambda_,
        "iterations": solver.n_iter_,
        "initial_objective": float(objectives[0]),
        "final_objective": float(solver.objective_),
    }
    _emit(config, "ellipses_report.json", report)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        config = _config(args)
        return args.func(config)
    except InstanceTooLargeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAPABILITY
    except (NotConvergedError, SinkhornUnderflowError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except (ParseError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
