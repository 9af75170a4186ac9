"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the measured
quantities.  Every tolerance is pinned here; nothing is deferred to later
calibration.
"""

import time

import numpy as np
import pytest

from pdhgnet.cli import main as cli_main
from pdhgnet.generators import (
    PageRankSpec,
    PerturbSpec,
    gen_pagerank,
    gen_perturbed_family,
    gen_random_solvable,
)
from pdhgnet.model import LpInstance, pd_gap, project_box, project_nonneg
from pdhgnet.net import (
    backward,
    build_inputs,
    construct_theta_pdhg,
    flatten_params,
    forward,
    instance_loss,
    unflatten_params,
)
from pdhgnet.pipeline import extrapolation_study, two_stage_solve
from pdhgnet.solver import (
    RestartPolicy,
    SolverConfig,
    WarmStart,
    default_step_sizes,
    ergodic_gap_bound,
    solve,
)
from pdhgnet.train import TrainConfig, generate_labels, split, train


def report(num, name, ok, detail):
    print(f"\n[acceptance {num}] {name}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"criterion {num} ({name}): {detail}"


def exact_norm(inst):
    dense = inst.G.to_dense()
    return float(np.sqrt(np.max(np.linalg.eigvalsh(dense.T @ dense))))


def spearman(a, b):
    def ranks(v):
        order = np.argsort(v, kind="stable")
        r = np.empty(len(v))
        r[order] = np.arange(len(v), dtype=float)
        # average ranks over ties
        for val in np.unique(v):
            mask = v == val
            r[mask] = r[mask].mean()
        return r

    ra, rb = ranks(np.asarray(a, dtype=float)), ranks(np.asarray(b, dtype=float))
    ra -= ra.mean()
    rb -= rb.mean()
    den = np.sqrt((ra @ ra) * (rb @ rb))
    return float((ra @ rb) / den) if den > 0 else 0.0


def test_01_alignment_via_cli(capsys):
    """Exact net/solver correspondence at depth 4, width 10, 50 trials."""
    t0 = time.perf_counter()
    code = cli_main(["align-check", "--layers", "4", "--width", "10", "--trials", "50", "--tol", "1e-8"])
    elapsed = time.perf_counter() - t0
    out = capsys.readouterr().out
    deviation = [line for line in out.splitlines() if line.startswith("overall")]
    report(
        1,
        "exact-recovery alignment",
        code == 0 and elapsed < 10.0,
        f"exit={code}, {deviation[0] if deviation else 'no output'}, {elapsed:.1f}s",
    )


def test_02_ergodic_gap_bound():
    """Averaged iterates never beat the closed-form bound by more than 1e-9."""
    t0 = time.perf_counter()
    worst_margin = -np.inf
    checks = 0
    for seed in range(20):
        inst, x_star, y_star = gen_random_solvable(12, 10, density=0.5, seed=60 + seed)
        norm = exact_norm(inst)
        tau = sigma = 0.9 / norm
        cfg = SolverConfig(
            tau=tau, sigma=sigma, tol=1e-300, max_iter=500,
            restart=RestartPolicy.none(), record_history=True,
        )
        res = solve(inst, cfg)
        x0, y0 = np.zeros(inst.num_vars), np.zeros(inst.num_cons)
        for rec in res.history:
            gap = pd_gap(inst, rec.avg_x, rec.avg_y, x_star, y_star)
            bound = ergodic_gap_bound(x_star, y_star, x0, y0, inst, tau, sigma, rec.iteration)
            worst_margin = max(worst_margin, gap - bound)
            checks += 1
    elapsed = time.perf_counter() - t0
    report(
        2,
        "ergodic gap bound",
        worst_margin <= 1e-9 and checks == 20 * 500 and elapsed < 30.0,
        f"worst gap-bound margin {worst_margin:.2e} over {checks} checks, {elapsed:.1f}s",
    )


def test_03_pagerank_sizes():
    t0 = time.perf_counter()
    sizes = {}
    for nodes in (1000, 10000):
        inst = gen_pagerank(PageRankSpec(nodes=nodes, seed=7))
        sizes[nodes] = (inst.num_vars, inst.num_cons, inst.G.nnz)
    elapsed = time.perf_counter() - t0
    ok = sizes[1000] == (1000, 1001, 7982) and sizes[10000] == (10000, 10001, 79982)
    report(3, "pagerank size accounting", ok and elapsed < 5.0, f"{sizes}, {elapsed:.1f}s")


def test_04_pagerank_objective():
    t0 = time.perf_counter()
    inst = gen_pagerank(PageRankSpec(nodes=1000, seed=7))
    res = solve(inst, SolverConfig(tol=1e-8))
    elapsed = time.perf_counter() - t0
    err = abs(res.objective - 1.0)
    report(
        4,
        "pagerank optimal value",
        res.status == "optimal" and err <= 1e-6 and elapsed < 60.0,
        f"|objective-1| = {err:.2e}, {res.iterations} iterations, {elapsed:.1f}s",
    )


def test_05_gradient_finite_differences():
    t0 = time.perf_counter()
    inst, x_star, y_star = gen_random_solvable(6, 5, density=0.6, seed=3)
    from pdhgnet.net import init_params

    params = init_params(2, 10, tau=0.3, sigma=0.3, seed=11)
    X0, Y0 = build_inputs(inst)
    label = (x_star, y_star)
    _, _, trace = forward(params, inst, X0, Y0, keep_trace=True)
    grad = flatten_params(backward(params, inst, trace, label))
    theta = flatten_params(params)

    def loss_at(vec):
        p = unflatten_params(vec, params)
        x_out, y_out, _ = forward(p, inst, X0, Y0)
        return instance_loss(x_out, y_out, label)

    rng = np.random.default_rng(0)
    step = 1e-6
    worst = 0.0
    for i in rng.choice(theta.size, size=20, replace=False):
        plus, minus = theta.copy(), theta.copy()
        plus[i] += step
        minus[i] -= step
        fd = (loss_at(plus) - loss_at(minus)) / (2 * step)
        worst = max(worst, abs(fd - grad[i]) / max(abs(fd), abs(grad[i]), 1e-12))
    elapsed = time.perf_counter() - t0
    report(5, "gradient correctness", worst <= 1e-5 and elapsed < 5.0,
           f"max relative FD error {worst:.2e} over 20 coordinates, {elapsed:.1f}s")


def test_06_oracle_solver_check():
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        n, m = (int(v) for v in rng.integers(10, 41, 2))
        inst, x_star, _ = gen_random_solvable(n, m, density=0.4, seed=1000 + seed)
        res = solve(inst, SolverConfig(tol=1e-8))
        target = inst.objective(x_star)
        rel = abs(res.objective - target) / max(1.0, abs(target))
        worst = max(worst, rel)
    elapsed = time.perf_counter() - t0
    report(6, "known-optimum objective", worst <= 1e-6 and elapsed < 60.0,
           f"worst relative objective error {worst:.2e} over 20 instances, {elapsed:.1f}s")


def test_07_warm_start_correlation():
    """Distance-to-effort correlation along the approach ray (figure surrogate).

    The prediction stand-in is the label shrunk halfway toward the zero
    start; extrapolation runs disable restarts (tol 1e-4) because restarted
    runs converge near-linearly and mask the distance dependence.
    """
    t0 = time.perf_counter()
    alphas = [0.0, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0]
    cfg = SolverConfig(tol=1e-4, restart=RestartPolicy.none())
    rho_min = np.inf
    ordering_ok = True
    details = []
    for seed in range(5):
        inst = gen_pagerank(PageRankSpec(nodes=1000, seed=100 + seed))
        lab = solve(inst, SolverConfig(tol=1e-10))
        zx = project_box(lab.x, inst.l, inst.u)
        zy = project_nonneg(lab.y)
        rows = extrapolation_study(inst, (zx, zy), (0.5 * zx, 0.5 * zy), alphas, cfg)
        cold = solve(inst, cfg)
        iters = [r.iterations for r in rows]
        rho = spearman(alphas, iters)
        rho_min = min(rho_min, rho)
        ordering = iters[0] <= iters[alphas.index(1.0)] <= cold.iterations
        ordering_ok &= ordering
        details.append(f"seed{seed}: rho={rho:.2f} a0={iters[0]} a1={iters[alphas.index(1.0)]} cold={cold.iterations}")
    elapsed = time.perf_counter() - t0
    report(
        7,
        "warm-start distance correlation",
        rho_min >= 0.8 and ordering_ok and elapsed < 300.0,
        f"min Spearman {rho_min:.3f}, ordering holds on all 5; {'; '.join(details)}; {elapsed:.0f}s",
    )


def test_08_training_beats_exact_construction():
    """Trained 4-layer net: lower validation loss than the exact weights of
    equal depth, and positive median two-stage iteration improvement."""
    t0 = time.perf_counter()
    base = gen_pagerank(PageRankSpec(nodes=1000, seed=42))
    family = gen_perturbed_family(
        PerturbSpec(base=base, count=100, amplitude=0.05, targets=("h",), seed=7)
    )
    labeled = generate_labels(family, SolverConfig(tol=1e-8))

    cap = 2.0
    cfg = TrainConfig(learning_rate=1e-4, epochs=60, batch_size=8, seed=0, bound_cap=cap)
    params, history = train(labeled, depth=4, widths=8, cfg=cfg)
    best_val = min(history.val_loss)

    train_set, val_set = split(labeled, cfg.split_ratio, cfg.seed)
    tau, sigma = default_step_sizes(train_set[0].instance)
    theta = construct_theta_pdhg(4, 10, tau, sigma)
    theta_val = float(
        np.mean(
            [
                instance_loss(*forward(theta, it.instance, *build_inputs(it.instance))[:2], it.label)
                for it in val_set
            ]
        )
    )

    improvements = []
    for item in val_set:
        res = two_stage_solve(
            item.instance, params, SolverConfig(tol=1e-8), compare_cold=True, bound_cap=cap
        )
        improvements.append(res.improvement_iters)
    median_improvement = float(np.median(improvements))
    elapsed = time.perf_counter() - t0
    report(
        8,
        "training beats the exact construction",
        best_val < theta_val and median_improvement > 0.0 and elapsed < 1800.0,
        f"best val loss {best_val:.3e} < exact-weights val loss {theta_val:.3e}; "
        f"median iteration improvement {median_improvement:+.3f}; {elapsed:.0f}s",
    )


def test_09_restart_accounting():
    """Warm starts from projected labels restart strictly less than cold."""
    t0 = time.perf_counter()
    cfg = SolverConfig(tol=1e-8, restart=RestartPolicy.adaptive(beta=0.5))
    wins = 0
    for seed in range(20):
        inst = gen_pagerank(PageRankSpec(nodes=1000, seed=200 + seed))
        lab = solve(inst, SolverConfig(tol=1e-10))
        warm = WarmStart(project_box(lab.x, inst.l, inst.u), project_nonneg(lab.y))
        cold_res = solve(inst, cfg)
        warm_res = solve(inst, cfg, warm=warm)
        wins += warm_res.restarts < cold_res.restarts
    elapsed = time.perf_counter() - t0
    report(9, "restart reduction under warm starts", wins >= 16 and elapsed < 600.0,
           f"strictly fewer restarts on {wins}/20 instances, {elapsed:.0f}s")


def test_10_depth_scaling():
    """Width-20 exact nets with K = ceil(C/eps) layers reach an eps gap.

    Instances are scaled small so the per-layer roundoff of the exact
    construction (which grows with depth) stays far below eps.
    """
    t0 = time.perf_counter()
    scale = 0.25
    worst = {}
    ok = True
    for eps in (1e-1, 1e-2):
        worst_gap, max_K = -np.inf, 0
        for seed in range(5):
            raw, x_star, y_star = gen_random_solvable(5, 5, density=0.5, seed=30 + seed)
            inst = LpInstance(
                G=raw.G, c=raw.c * scale, h=raw.h * scale,
                l=raw.l * scale, u=raw.u * scale, name=raw.name,
            )
            x_star, y_star = x_star * scale, y_star * scale
            tau, sigma = default_step_sizes(inst)
            zeros = (np.zeros(5), np.zeros(5))
            C = 2.0 * ergodic_gap_bound(x_star, y_star, zeros[0], zeros[1], inst, tau, sigma, 1)
            K = max(1, int(np.ceil(C / eps)))
            max_K = max(max_K, K)
            params = construct_theta_pdhg(K, 20, tau, sigma)
            X0, Y0 = build_inputs(inst)
            x_out, y_out, _ = forward(params, inst, X0, Y0)
            gap = pd_gap(inst, x_out, y_out, x_star, y_star)
            worst_gap = max(worst_gap, gap)
            ok &= gap <= eps
        worst[eps] = (worst_gap, max_K)
    elapsed = time.perf_counter() - t0
    detail = ", ".join(f"eps={eps:g}: worst gap {g:.2e} (K up to {K})" for eps, (g, K) in worst.items())
    report(10, "depth scaling of the exact net", ok and elapsed < 60.0, f"{detail}, {elapsed:.0f}s")
