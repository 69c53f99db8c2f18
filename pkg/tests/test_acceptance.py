"""End-to-end acceptance gate.

Each test checks one headline property of the laboratory at its stated
tolerance and runtime budget, and records a single PASS/FAIL line in the
terminal summary.  Long-running shared computations (the 16-replica
kappa sweep at t=200) are module-scoped fixtures.
"""

import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LOG, make_trace
from pamlab.blocks import (
    BlockClassifier, BlockId, BlockSpec, JumpPathFamily, RegularityFamily,
    classify_block, count_bad_blocks, regularity_statistic, sup_xi_psi,
    xi_psi_for_path,
)
from pamlab.cli import ExperimentConfig, run
from pamlab.environments import EnvModelSpec, sample_env
from pamlab.feynman_kac import fk_estimate, sample_walk
from pamlab.lattice import FieldSnapshot, LatticeTorus
from pamlab.lyapunov import (
    difference_quotients, kappa_sweep, quenched_samples, sample_replica_envs,
)
from pamlab.percolation import level_set_components, percolation_sweep
from pamlab.solver import compare_solutions, solve_pam
from test_blocks import (
    oracle_classify, oracle_count_bad, oracle_regularity, oracle_sup_xi_psi,
    oracle_xi_psi,
)
from test_percolation import bfs_components

SPEC = EnvModelSpec("iid_markov")  # centered two-state field, values +-1
LAT64 = LatticeTorus(1, 64)
T_LONG = 200.0
N_REP = 16
SWEEP_SEED = 2026
KAPPA_GRID = (0.0, 1e-3, 1e-2, 1e-1, 1.0)


def report(name, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
    ACCEPTANCE_LOG.append(line)
    assert ok, line


@pytest.fixture(scope="module")
def replica_envs():
    started = time.monotonic()
    envs = sample_replica_envs(SPEC, LAT64, T_LONG, N_REP, SWEEP_SEED)
    return envs, time.monotonic() - started


@pytest.fixture(scope="module")
def sweep(replica_envs):
    started = time.monotonic()
    points = kappa_sweep(
        SPEC, LAT64, KAPPA_GRID, (1, 2), T_LONG, N_REP, SWEEP_SEED,
        override_size_guard=True,
    )
    return points, time.monotonic() - started


def quenched_point(points, kappa):
    return next(p for p in points if p.p == 0 and p.kappa == kappa)


def test_kappa_zero_anchor(replica_envs):
    envs, env_elapsed = replica_envs
    started = time.monotonic()
    log_u = quenched_samples(envs, 0.0, [T_LONG])[:, 0]
    elapsed = env_elapsed + time.monotonic() - started
    worst = max(
        abs(log_u[r] - env.occupation_integral(0, 0.0, T_LONG))
        for r, env in enumerate(envs)
    )
    rates = log_u / T_LONG
    mean = float(np.mean(rates))
    se = float(np.std(rates, ddof=1)) / math.sqrt(N_REP)
    ok = worst <= 1e-10 and abs(mean) <= 3 * se and elapsed < 10.0
    report(
        "kappa-zero anchor",
        ok,
        f"max |log u - occupation integral| = {worst:.2e} (tol 1e-10), "
        f"|mean rate| = {abs(mean):.4f} <= 3*SE = {3 * se:.4f} [{elapsed:.1f}s < 10s]",
    )


def test_diffusion_strictly_helps(sweep):
    points, elapsed = sweep
    p0 = quenched_point(points, 0.0)
    p1 = quenched_point(points, 1.0)
    gain = p1.estimate - p0.estimate
    budget = p1.ci_half_width + p0.ci_half_width
    ok = gain > budget and elapsed < 120.0
    report(
        "diffusion gain",
        ok,
        f"lambda(1) - lambda(0) = {gain:.4f} > combined CI {budget:.4f} "
        f"[{elapsed:.1f}s < 120s]",
    )


def test_fk_solver_cross_validation():
    lat = LatticeTorus(1, 8)
    started = time.monotonic()
    hits = 0
    for seed in range(100):
        trace = sample_env(SPEC, lat, 2.0, seed).center_field()
        sol = solve_pam(trace, 1.0, "ones", [2.0]).log_u_origin[0]
        est = fk_estimate(trace, 1.0, "ones", 0, 2.0, 100_000, seed)
        if abs(est.mean - sol) <= 1.96 * est.std_error:
            hits += 1
    elapsed = time.monotonic() - started
    ok = hits >= 93 and elapsed < 300.0
    report(
        "FK/solver cross-validation",
        ok,
        f"{hits}/100 within 1.96*SE (need >= 93) [{elapsed:.1f}s < 300s]",
    )


def test_jensen_chain_exact(sweep):
    points, _ = sweep
    worst = 0.0
    for kappa in KAPPA_GRID:
        by_p = {p.p: p.estimate for p in points if p.kappa == kappa}
        worst = max(worst, by_p[0] - by_p[1], by_p[1] - by_p[2])
    ok = worst <= 1e-12
    report(
        "Jensen chain",
        ok,
        f"max violation of quenched <= annealed(1) <= annealed(2) is {worst:.2e} "
        "(slack 1e-12), all kappa",
    )


def merge_max(tr_a, tr_b):
    """Trace whose field is the pointwise max of the two inputs."""
    events = []
    for tr in (tr_a, tr_b):
        for i in range(tr.n_events):
            t = float(tr.event_times[i])
            s = int(tr.event_sites[i])
            events.append((t, s, max(tr_a.query(s, t), tr_b.query(s, t))))
    return make_trace(
        tr_a.lattice, min(tr_a.horizon, tr_b.horizon),
        np.maximum(tr_a.initial, tr_b.initial), events,
    )


def test_monotone_in_potential():
    lat = LatticeTorus(1, 8)
    started = time.monotonic()
    ordered = 0
    for i in range(50):
        lower = sample_env(SPEC, lat, 1.0, 3000 + i).center_field()
        other = sample_env(SPEC, lat, 1.0, 4000 + i).center_field()
        upper = merge_max(lower, other)
        if compare_solutions(upper, lower, 0.5, "ones", 1.0):
            ordered += 1
    elapsed = time.monotonic() - started
    ok = ordered == 50 and elapsed < 60.0
    report(
        "potential monotonicity",
        ok,
        f"{ordered}/50 ordered potential pairs give pointwise-ordered solutions "
        f"(rel tol 1e-9) [{elapsed:.1f}s < 60s]",
    )


def test_initial_condition_agreement(sweep):
    points, _ = sweep
    delta = quenched_point(points, 1.0)
    ones = kappa_sweep(
        SPEC, LAT64, (1.0,), (), T_LONG, N_REP, SWEEP_SEED,
        u0="ones", override_size_guard=True,
    )[0]
    gap = abs(delta.estimate - ones.estimate)
    budget = delta.ci_half_width + ones.ci_half_width
    ok = gap <= budget
    report(
        "initial-condition agreement",
        ok,
        f"|lambda(delta_0) - lambda(ones)| = {gap:.4f} <= combined CI {budget:.4f} "
        f"at kappa=1, t={T_LONG:.0f}",
    )


def test_continuity_trend_at_zero(sweep):
    points, _ = sweep
    base = quenched_point(points, 0.0)
    gap = {k: quenched_point(points, k).estimate - base.estimate for k in KAPPA_GRID[1:]}
    ci = {k: quenched_point(points, k).ci_half_width + base.ci_half_width
          for k in KAPPA_GRID[1:]}
    # decrease toward 0 as kappa drops, asserted on the small-kappa steps
    # (the curve peaks between 0.1 and 1, so the 1 -> 0.1 step is reported only)
    small_steps_ok = (
        gap[1e-3] <= gap[1e-2] + ci[1e-2]
        and gap[1e-2] <= gap[1e-1] + ci[1e-1]
        and gap[1e-3] >= -ci[1e-3]
    )
    quots = {k: (q, hw) for k, q, hw in difference_quotients(points)}
    q_small, hw_small = quots[1e-3]
    q_big, hw_big = quots[1.0]
    separated = q_small - hw_small > q_big + hw_big
    non_lipschitz = q_small > q_big
    ok = small_steps_ok and (non_lipschitz if separated else True)
    report(
        "continuity trend at zero",
        ok,
        f"gaps {gap[1e-3]:.4f} <= {gap[1e-2]:.4f} <= {gap[1e-1]:.4f} (within CI); "
        f"1->0.1 step reported: gap(1) = {gap[1.0]:.4f}; quotient at 1e-3 = "
        f"{q_small:.1f}+-{hw_small:.1f} vs at 1 = {q_big:.3f}+-{hw_big:.3f} "
        f"({'CIs separate, asserted' if separated else 'CIs overlap, reported only'})",
    )


def _replay_conservation(trace):
    """(conserved, n_events): particle total is constant between jump times."""
    field = trace.initial.copy()
    total0 = field.sum()
    times = trace.event_times
    sites = trace.event_sites
    values = trace.event_values
    n = trace.n_events
    for i in range(n):
        field[sites[i]] = values[i]
        if i + 1 == n or times[i + 1] > times[i]:
            if abs(field.sum() - total0) > 0.0:
                return False, n
    return True, n


def test_particle_conservation():
    started = time.monotonic()
    lat = LatticeTorus(2, 32)
    specs = [
        EnvModelSpec("exclusion", rho=0.5, centering="none"),
        EnvModelSpec("independent_walks", nu=1.0, centering="none"),
        EnvModelSpec("zero_range", rho=1.0, beta=0.5, centering="none"),
    ]
    total_events = 0
    all_ok = True
    binary_ok = True
    for i, spec in enumerate(specs):
        trace = sample_env(spec, lat, 220.0, 60 + i)
        ok, n = _replay_conservation(trace)
        all_ok = all_ok and ok
        total_events += n
        if spec.model == "exclusion":
            binary_ok = (
                bool(np.isin(trace.initial, (0.0, 1.0)).all())
                and bool(np.isin(trace.event_values, (0.0, 1.0)).all())
            )
    elapsed = time.monotonic() - started
    ok = all_ok and binary_ok and total_events >= 1_000_000 and elapsed < 30.0
    report(
        "particle conservation",
        ok,
        f"exact conservation over {total_events} events across three particle "
        f"models, exclusion values binary [{elapsed:.1f}s < 30s]",
    )


def test_block_oracle_equivalence():
    started = time.monotonic()
    lat = LatticeTorus(1, 8)
    n_checked = 0
    for i in range(200):
        rng = np.random.default_rng(10_000 + i)
        horizon = float(rng.choice([4.0, 8.0]))
        spec = BlockSpec(
            A=2.0, R=1, C=float(rng.uniform(0.1, 1.2)), c=int(rng.integers(0, 2)),
        )
        trace = sample_env(
            EnvModelSpec("iid_markov", state_values=(0.0, 1.0)), lat, horizon, i,
        )
        cls = BlockClassifier(trace, spec)
        for k in cls.time_indices(spec.R):
            for x in range(cls.n_block_coords(spec.R)):
                blk = BlockId((x,), k)
                assert classify_block(trace, spec, blk) == \
                    oracle_classify(trace, spec, (x,), k, spec.R)
        assert count_bad_blocks(trace, spec) == oracle_count_bad(trace, spec)

        path = sample_walk(lat, 1.0, (0,), horizon, 100 + i)
        assert xi_psi_for_path(trace, spec, path) == oracle_xi_psi(trace, spec, path)

        t_fam = float(rng.choice([2.0, 4.0]))
        j = int(rng.integers(0, 2 if t_fam == 4.0 else 3))
        family = JumpPathFamily(j=j, t=t_fam)
        got = sup_xi_psi(trace, spec, family)
        assert got[2]  # exhaustive
        assert got[:2] == oracle_sup_xi_psi(trace, spec, family)

        reg = RegularityFamily(n=int(rng.integers(1, 3)), t=2.0, kappa=0.1)
        value, exact = regularity_statistic(trace, reg)
        assert exact
        assert value == pytest.approx(oracle_regularity(trace, reg), abs=1e-12)
        n_checked += 1
    elapsed = time.monotonic() - started
    ok = n_checked == 200 and elapsed < 120.0
    report(
        "block oracle equivalence",
        ok,
        f"classification, counting, crossing counts, path supremum and "
        f"regularity all match brute force on {n_checked} random instances "
        f"[{elapsed:.1f}s < 120s]",
    )


def test_percolation_oracle_and_nestedness():
    started = time.monotonic()
    lat = LatticeTorus(2, 32)
    all_match = True
    all_nested = True
    for seed in range(100):
        rng = np.random.default_rng(seed)
        snap = FieldSnapshot(lat, rng.random(lat.n_sites))
        for alpha in (0.35, 0.55):
            rep = level_set_components(snap, alpha)
            sizes, spanning = bfs_components(snap, alpha)
            all_match = all_match and rep.sizes == sizes and rep.spanning == spanning
        reports, _ = percolation_sweep(snap, np.linspace(0.0, 1.0, 6))
        fracs = [r.largest_fraction for r in reports]
        all_nested = all_nested and fracs == sorted(fracs)
    elapsed = time.monotonic() - started
    ok = all_match and all_nested and elapsed < 30.0
    report(
        "percolation oracle + nestedness",
        ok,
        f"union-find equals BFS on 100 random 32x32 snapshots, largest "
        f"fraction monotone in alpha [{elapsed:.1f}s < 30s]",
    )


def _determinism_configs(root):
    lat8 = LatticeTorus(1, 8)
    env = EnvModelSpec("iid_markov")
    base = dict(lattice=lat8, env=env, horizon=4.0, seed=5)
    return [
        ExperimentConfig(kind="env-sample", out=str(root / "env"), **base),
        ExperimentConfig(kind="solve", kappa=0.5, u0="ones", t_grid=(2.0, 4.0),
                         out=str(root / "solve"), **base),
        ExperimentConfig(kind="fk", kappa=0.5, u0="ones", t_grid=(2.0,),
                         n_samples=500, out=str(root / "fk"), **base),
        ExperimentConfig(kind="lyapunov-sweep", kappa_grid=(0.0, 0.5),
                         p_list=(1,), t_grid=(2.0,), n_replicas=4,
                         override_size_guard=True,
                         out=str(root / "lyap"), **base),
        ExperimentConfig(kind="diagnostics",
                         block=BlockSpec(A=2.0, R=1, C=0.5),
                         n_env=2, blocks_per_env=4,
                         out=str(root / "diag"), **base),
        ExperimentConfig(kind="percolation", T=2.0, alpha_grid=(-1.0, 0.0, 1.0),
                         out=str(root / "perc"), **base),
    ]


def _csv_bodies(out_dir):
    from pathlib import Path
    return {p.name: p.read_bytes() for p in sorted(Path(out_dir).glob("*.csv"))}


def test_determinism_all_subcommands(tmp_path):
    from dataclasses import replace
    mismatches = []
    for cfg in _determinism_configs(tmp_path / "a"):
        run(cfg)
        first = _csv_bodies(cfg.out)
        rerun = replace(cfg, out=str(tmp_path / "b" / cfg.kind))
        run(rerun)
        threaded = replace(cfg, out=str(tmp_path / "c" / cfg.kind), threads=8)
        run(threaded)
        if first != _csv_bodies(rerun.out) or first != _csv_bodies(threaded.out):
            mismatches.append(cfg.kind)
    ok = not mismatches
    report(
        "determinism",
        ok,
        "all six subcommands byte-identical across reruns and threads 1 vs 8"
        if ok else f"mismatch in: {mismatches}",
    )
