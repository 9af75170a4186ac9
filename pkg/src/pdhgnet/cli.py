"""Command-line entry point.

Subcommands: gen, solve, train, predict, warmstart, bench, align-check.

Exit codes are a stable contract: 0 success, 2 usage error, 3 iteration
limit, 4 numerical failure, 5 I/O or file-format error.  All subcommands are
deterministic under a fixed --seed.  Batch commands fan out across a thread
pool capped by the PDHG_THREADS environment variable (default: available
parallelism); each individual run stays single-threaded.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import io as pio
from .errors import NumericalFailureError, PersistError, UsageError
from .generators import PageRankSpec, PerturbSpec, gen_pagerank, gen_perturbed_family, gen_random_solvable
from .model import kkt_residuals, project_box, project_nonneg
from .net import (
    DEFAULT_BOUND_CAP,
    MIN_EXACT_WIDTH,
    build_inputs,
    construct_theta_pdhg,
    forward,
    theta_pdhg_extractors,
)
from .pipeline import (
    RunRecord,
    extrapolation_study,
    records_from_two_stage,
    timing_report,
    two_stage_solve,
)
from .solver import (
    STATUS_ITER_LIMIT,
    STATUS_NUMERICAL_FAILURE,
    STATUS_OPTIMAL,
    RestartPolicy,
    SolverConfig,
    WarmStart,
    iterate_sequence,
    solve,
)
from .train import LabeledInstance, TrainConfig, generate_labels, train

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_ITER_LIMIT = 3
EXIT_NUMERICAL = 4
EXIT_IO = 5


def _thread_cap() -> int:
    env = os.environ.get("PDHG_THREADS")
    if env:
        try:
            cap = int(env)
        except ValueError as exc:
            raise UsageError(f"PDHG_THREADS must be an integer, got {env!r}") from exc
        if cap < 1:
            raise UsageError("PDHG_THREADS must be >= 1")
        return cap
    return os.cpu_count() or 1


def _restart_policy(args) -> RestartPolicy:
    if args.restart == "none":
        return RestartPolicy.none()
    if args.restart == "fixed":
        return RestartPolicy.fixed(args.restart_period)
    return RestartPolicy.adaptive(beta=args.restart_beta)


def _solver_config(args) -> SolverConfig:
    return SolverConfig(tol=args.tol, max_iter=args.max_iter, restart=_restart_policy(args))


def _add_solver_flags(p: argparse.ArgumentParser):
    p.add_argument("--tol", type=float, default=1e-8, help="relative KKT tolerance")
    p.add_argument("--max-iter", type=int, default=200_000)
    p.add_argument("--restart", choices=["none", "adaptive", "fixed"], default="adaptive")
    p.add_argument("--restart-beta", type=float, default=0.5, help="adaptive contraction factor")
    p.add_argument("--restart-period", type=int, default=500, help="period for fixed restarts")


def _bound_cap(args, metadata: dict) -> float:
    if getattr(args, "bound_cap", None) is not None:
        return args.bound_cap
    if "bound_cap" in metadata:
        return float(metadata["bound_cap"])
    return DEFAULT_BOUND_CAP


def _load_labeled(path: str) -> tuple:
    inst, label = pio.read_instance(path)
    if label is None:
        return inst, None
    return inst, LabeledInstance(instance=inst, x_star=label.x, y_star=label.y, label_tol=label.tol)


def _instance_paths(data_dir: str) -> list[str]:
    if not os.path.isdir(data_dir):
        raise UsageError(f"--data {data_dir!r} is not a directory")
    paths = sorted(
        os.path.join(data_dir, f) for f in os.listdir(data_dir) if f.endswith(".inst")
    )
    if not paths:
        raise UsageError(f"no .inst files found in {data_dir!r}")
    return paths


# ---------------------------------------------------------------------------
# gen
# ---------------------------------------------------------------------------


def cmd_gen(args) -> int:
    instances = []
    labels = []  # parallel list of LabelBlock or None
    if args.kind == "pagerank":
        if args.nodes is None:
            raise UsageError("gen pagerank needs --nodes")
        for i in range(args.count):
            spec = PageRankSpec(nodes=args.nodes, attach=args.attach, damping=args.damping, seed=args.seed + i)
            instances.append(gen_pagerank(spec))
            labels.append(None)
    elif args.kind == "perturb":
        if not args.base:
            raise UsageError("gen perturb needs --base")
        base, _ = pio.read_instance(args.base)
        targets = tuple(t.strip() for t in args.targets.split(",") if t.strip())
        spec = PerturbSpec(
            base=base, count=args.count, amplitude=args.amp, targets=targets, seed=args.seed
        )
        instances = gen_perturbed_family(spec)
        labels = [None] * len(instances)
    elif args.kind == "solvable":
        if args.n is None or args.m is None:
            raise UsageError("gen solvable needs --n and --m")
        for i in range(args.count):
            inst, x_star, y_star = gen_random_solvable(args.n, args.m, density=args.density, seed=args.seed + i)
            instances.append(inst)
            labels.append(pio.LabelBlock(x=x_star, y=y_star, tol=1e-9))
    else:  # pragma: no cover - argparse restricts choices
        raise UsageError(f"unknown generator kind {args.kind!r}")

    if args.label_tol is not None:
        cfg = SolverConfig(tol=args.label_tol)
        labeled = generate_labels(instances, cfg)
        instances = [item.instance for item in labeled]
        labels = [pio.LabelBlock(x=item.x_star, y=item.y_star, tol=item.label_tol) for item in labeled]

    for inst, label in zip(instances, labels):
        print(f"{inst.name}: {inst.num_vars} vars, {inst.num_cons} cons, {inst.G.nnz} nnz")
        if args.out:
            os.makedirs(args.out, exist_ok=True)
            pio.write_instance(inst, os.path.join(args.out, f"{inst.name}.inst"), label=label)
    if args.out:
        print(f"wrote {len(instances)} instance file(s) to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------


def cmd_solve(args) -> int:
    inst, labeled = _load_labeled(args.instance)
    warm = None
    if args.warm_from == "label":
        if labeled is None:
            raise UsageError(f"{args.instance} carries no label to warm-start from")
        warm = WarmStart(
            project_box(labeled.x_star, inst.l, inst.u), project_nonneg(labeled.y_star)
        )
    elif args.warm_from:
        x0, y0 = pio.read_start_point(args.warm_from)
        warm = WarmStart(project_box(x0, inst.l, inst.u), project_nonneg(y0))

    res = solve(inst, _solver_config(args), warm=warm)
    kkt = res.final_kkt
    print(
        f"status={res.status} iterations={res.iterations} restarts={res.restarts} "
        f"objective={kkt.objective:.12e} primal={kkt.primal_residual:.3e} "
        f"dual={kkt.dual_residual:.3e} gap={kkt.rel_gap:.3e} seconds={res.solve_seconds:.3f}"
    )
    if args.report:
        mode = "warm" if warm is not None else "cold"
        pio.append_report(
            [
                RunRecord(
                    instance=inst.name,
                    n=inst.num_vars,
                    m=inst.num_cons,
                    mode=mode,
                    iterations=res.iterations,
                    restarts=res.restarts,
                    seconds=res.solve_seconds,
                )
            ],
            args.report,
        )
    if res.status == STATUS_ITER_LIMIT:
        return EXIT_ITER_LIMIT
    if res.status == STATUS_NUMERICAL_FAILURE:
        return EXIT_NUMERICAL
    return EXIT_OK


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def cmd_train(args) -> int:
    paths = _instance_paths(args.data)
    dataset = []
    for path in paths:
        _, labeled = _load_labeled(path)
        if labeled is None:
            raise UsageError(f"{path} has no label; run gen with --label-tol first")
        dataset.append(labeled)

    widths = args.widths if args.widths else [args.width] * args.layers
    if len(widths) != args.layers:
        raise UsageError(f"--widths needs {args.layers} entries, got {len(widths)}")
    cfg = TrainConfig(
        learning_rate=args.lr,
        epochs=args.epochs,
        batch_size=args.batch,
        split_ratio=args.split_ratio,
        seed=args.seed,
        bound_cap=args.bound_cap if args.bound_cap is not None else DEFAULT_BOUND_CAP,
    )
    params, history = train(dataset, depth=args.layers, widths=widths, cfg=cfg)

    digest = f"lr={cfg.learning_rate},epochs={cfg.epochs},batch={cfg.batch_size},split={cfg.split_ratio}"
    pio.write_weights(
        params,
        args.out,
        metadata={"seed": str(cfg.seed), "config": digest, "bound_cap": repr(cfg.bound_cap)},
    )
    print(
        f"trained layers={args.layers} widths={tuple(widths)} epochs={cfg.epochs} "
        f"best_epoch={history.best_epoch} best_val_loss={min(history.val_loss):.6e}"
    )
    print(f"wrote weights to {args.out}")
    if args.history:
        with open(args.history, "w", encoding="utf-8") as fh:
            fh.write("epoch,train_loss,val_loss,val_distance,best\n")
            for e, (tr, vl, vd) in enumerate(
                zip(history.train_loss, history.val_loss, history.val_distance)
            ):
                best = 1 if e == history.best_epoch else 0
                fh.write(f"{e},{tr!r},{vl!r},{vd!r},{best}\n")
        from .figures import save_history_figure

        save_history_figure(history, os.path.splitext(args.history)[0] + ".png")
        print(f"wrote history to {args.history}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# predict / warmstart
# ---------------------------------------------------------------------------


def cmd_predict(args) -> int:
    inst, _ = _load_labeled(args.instance)
    params, metadata = pio.read_weights(args.weights)
    X0, Y0 = build_inputs(inst, _bound_cap(args, metadata))
    x_raw, y_raw, _ = forward(params, inst, X0, Y0)
    x_hat = project_box(x_raw, inst.l, inst.u)
    y_hat = project_nonneg(y_raw)
    kkt = kkt_residuals(inst, x_hat, y_hat)
    print(
        f"instance={inst.name} objective@prediction={kkt.objective:.6e} "
        f"primal={kkt.primal_residual:.3e} dual={kkt.dual_residual:.3e} gap={kkt.rel_gap:.3e}"
    )
    if args.out:
        pio.write_start_point(x_hat, y_hat, args.out)
        print(f"wrote start point to {args.out}")
    return EXIT_OK


def cmd_warmstart(args) -> int:
    inst, _ = _load_labeled(args.instance)
    params, metadata = pio.read_weights(args.weights)
    result = two_stage_solve(
        inst, params, _solver_config(args), compare_cold=args.cold, bound_cap=_bound_cap(args, metadata)
    )
    warm = result.warm_result
    line = (
        f"instance={inst.name} inference_seconds={result.inference_seconds:.4f} "
        f"warm_status={warm.status} warm_iterations={warm.iterations} "
        f"warm_restarts={warm.restarts} warm_seconds={warm.solve_seconds:.3f}"
    )
    if result.cold_result is not None:
        cold = result.cold_result
        line += (
            f" cold_iterations={cold.iterations} cold_restarts={cold.restarts} "
            f"cold_seconds={cold.solve_seconds:.3f} "
            f"improvement_iters={result.improvement_iters:.4f} "
            f"improvement_time={result.improvement_time:.4f}"
        )
    print(line)
    if args.report:
        pio.append_report(records_from_two_stage(result), args.report)
    if warm.status == STATUS_ITER_LIMIT:
        return EXIT_ITER_LIMIT
    if warm.status == STATUS_NUMERICAL_FAILURE:
        return EXIT_NUMERICAL
    return EXIT_OK


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------


def cmd_bench(args) -> int:
    paths = _instance_paths(args.data)
    params, metadata = pio.read_weights(args.weights)
    cap = _bound_cap(args, metadata)
    cfg = _solver_config(args)
    alphas = [float(a) for a in args.alphas.split(",")] if args.alphas else None

    loaded = [_load_labeled(p) for p in paths]
    if alphas is not None and any(labeled is None for _, labeled in loaded):
        raise UsageError("--alphas needs labeled instances (rerun gen with --label-tol)")

    def run_one(pair):
        inst, labeled = pair
        result = two_stage_solve(inst, params, cfg, compare_cold=args.cold, bound_cap=cap)
        rows = None
        if alphas is not None:
            rows = extrapolation_study(
                inst,
                labeled.label,
                (result.prediction_x, result.prediction_y),
                alphas,
                cfg,
            )
        return result, rows

    with ThreadPoolExecutor(max_workers=_thread_cap()) as pool:
        outcomes = list(pool.map(run_one, loaded))

    records = []
    extrap = {}
    for (inst, _), (result, rows) in zip(loaded, outcomes):
        records.extend(records_from_two_stage(result))
        if rows is not None:
            extrap[inst.name] = rows
            for row in rows:
                records.append(
                    RunRecord(
                        instance=inst.name,
                        n=inst.num_vars,
                        m=inst.num_cons,
                        mode=f"alpha={row.alpha:g}",
                        iterations=row.iterations,
                        restarts=0,
                        seconds=row.solve_seconds,
                    )
                )

    results = [result for result, _ in outcomes]
    warm_iters = np.array([r.warm_result.iterations for r in results], dtype=float)
    warm_restarts = np.array([r.warm_result.restarts for r in results], dtype=float)
    print(
        f"instances={len(results)} warm_iterations_mean={warm_iters.mean():.1f} "
        f"warm_restarts_mean={warm_restarts.mean():.2f}"
    )
    if args.cold:
        improvements = np.array([r.improvement_iters for r in results], dtype=float)
        cold_restarts = np.array([r.cold_result.restarts for r in results], dtype=float)
        print(
            f"improvement_iters_mean={improvements.mean():.4f} "
            f"improvement_iters_median={np.median(improvements):.4f} "
            f"cold_restarts_mean={cold_restarts.mean():.2f}"
        )

    if args.report:
        pio.write_report(records, args.report)
        stem = os.path.splitext(args.report)[0]
        from .figures import save_extrapolation_figure, save_improvement_figure, save_timing_figure

        if args.cold:
            save_improvement_figure(results, stem + "-improvement.png")
        if extrap:
            save_extrapolation_figure(extrap, stem + "-extrapolation.png")
        save_timing_figure(timing_report(results), stem + "-timing.png")
        print(f"wrote report to {args.report}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# align-check
# ---------------------------------------------------------------------------


def cmd_align_check(args) -> int:
    if args.width < MIN_EXACT_WIDTH:
        raise UsageError(
            f"--width {args.width} is below the minimum of {MIN_EXACT_WIDTH} required "
            "for exact recovery of the iterate channels"
        )
    K = args.layers
    params = construct_theta_pdhg(K, args.width, args.tau, args.sigma)
    Ex, Ey = theta_pdhg_extractors(K, (args.width,) * K)

    rng = np.random.default_rng(args.seed)
    worst_output = 0.0
    worst_per_layer = np.zeros(K)
    for _ in range(args.trials):
        n = args.n if args.n else int(rng.integers(5, 31))
        m = args.m if args.m else int(rng.integers(5, 31))
        inst, _, _ = gen_random_solvable(n, m, density=0.5, seed=int(rng.integers(0, 2**31)))
        xs, ys, xbars, ybars = iterate_sequence(inst, args.tau, args.sigma, K)
        X0, Y0 = build_inputs(inst)
        x_out, y_out, trace = forward(params, inst, X0, Y0, keep_trace=True)
        worst_output = max(
            worst_output,
            float(np.max(np.abs(x_out - xbars[K]))),
            float(np.max(np.abs(y_out - ybars[K]))),
        )
        for k in range(1, K + 1):
            dev = max(
                float(np.max(np.abs(trace.X[k] @ Ex[k][:, 0] - xbars[k]))),
                float(np.max(np.abs(trace.X[k] @ Ex[k][:, 1] - xs[k]))),
                float(np.max(np.abs(trace.Y[k] @ Ey[k][:, 0] - ybars[k]))),
                float(np.max(np.abs(trace.Y[k] @ Ey[k][:, 1] - ys[k]))),
            )
            worst_per_layer[k - 1] = max(worst_per_layer[k - 1], dev)

    for k in range(K):
        print(f"layer {k + 1}: max channel-recovery deviation {worst_per_layer[k]:.3e}")
    overall = max(worst_output, float(worst_per_layer.max()))
    print(f"output deviation {worst_output:.3e}")
    print(f"overall max deviation {overall:.3e} (tolerance {args.tol:.3e})")
    if overall <= args.tol:
        print("align-check PASS")
        return EXIT_OK
    print("align-check FAIL")
    return 1


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pdhgnet", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate instance files")
    p.add_argument("kind", choices=["pagerank", "perturb", "solvable"])
    p.add_argument("--nodes", type=int, help="pagerank: number of graph nodes")
    p.add_argument("--attach", type=int, default=3, help="pagerank: edges per new node")
    p.add_argument("--damping", type=float, default=0.85)
    p.add_argument("--base", help="perturb: base instance file")
    p.add_argument("--amp", type=float, default=0.05, help="perturb: relative noise amplitude")
    p.add_argument("--targets", default="h,c", help="perturb: comma-separated subset of h,c")
    p.add_argument("--n", type=int, help="solvable: variable count")
    p.add_argument("--m", type=int, help="solvable: constraint count")
    p.add_argument("--density", type=float, default=0.5)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output directory for instance files")
    p.add_argument("--label-tol", type=float, help="solve each instance and embed the label")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("solve", help="solve one instance")
    p.add_argument("--instance", required=True)
    p.add_argument("--warm-from", help="'label' or a start-point file")
    p.add_argument("--report", help="append a CSV report row")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("train", help="train a network on labeled instances")
    p.add_argument("--data", required=True, help="directory of labeled .inst files")
    p.add_argument("--layers", type=int, default=4)
    p.add_argument("--width", type=int, default=16, help="uniform hidden width")
    p.add_argument("--widths", type=int, nargs="+", help="per-layer hidden widths")
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--split-ratio", type=float, default=0.9)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bound-cap", type=float, help="feature clamp for infinite bounds")
    p.add_argument("--out", required=True, help="weight file to write")
    p.add_argument("--history", help="CSV (+PNG) training history path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="run the network on an instance")
    p.add_argument("--instance", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--bound-cap", type=float, help="override the trained feature clamp")
    p.add_argument("--out", help="start-point file to write")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("warmstart", help="two-stage solve of one instance")
    p.add_argument("--instance", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--cold", action="store_true", help="also solve cold and report improvement")
    p.add_argument("--bound-cap", type=float, help="override the trained feature clamp")
    p.add_argument("--report", help="append CSV report rows")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_warmstart)

    p = sub.add_parser("bench", help="two-stage benchmark over a data directory")
    p.add_argument("--data", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--cold", action="store_true")
    p.add_argument("--alphas", help="comma-separated extrapolation grid, e.g. 0,0.5,1")
    p.add_argument("--bound-cap", type=float, help="override the trained feature clamp")
    p.add_argument("--report", help="CSV report path (figures land next to it)")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("align-check", help="verify the exact-recovery construction")
    p.add_argument("--layers", type=int, default=4)
    p.add_argument("--width", type=int, default=10)
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--n", type=int, help="fix the variable count (default: random 5..30)")
    p.add_argument("--m", type=int, help="fix the constraint count (default: random 5..30)")
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--sigma", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_align_check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalFailureError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except PersistError as exc:
        print(f"file error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
