import csv

import numpy as np
import pytest

from rtjscc import (
    DiscountedHorizon,
    FiniteHorizon,
    PrimitiveDesign,
    brute_force_optimum,
    evaluate_exact,
    simulate,
    solve_discounted,
    solve_finite,
)
from rtjscc.errors import DimensionMismatch

from helpers import hamming, make_instance, rand_finite_instance

BSC = [[0.9, 0.1], [0.1, 0.9]]


def chain_design():
    return PrimitiveDesign(
        enc=[np.array([0, 1]), np.array([0, 1, 0, 1])],
        memory=[np.zeros((2, 2), dtype=np.int64)],
        decoders=[np.array([[0, 0], [1, 1]]), np.array([[0, 0], [1, 1]])])


def test_lossless_chain_simulates_to_zero():
    inst = make_instance(2, 2, 2, 2,
                         transition=[[0.7, 0.3], [0.3, 0.7]],
                         horizon=FiniteHorizon(2))
    rep = simulate(chain_design(), inst, 5000, seed=1)
    assert rep.mean == 0.0
    assert rep.std_err == 0.0


def test_single_stage_bsc_estimate():
    inst = make_instance(2, 2, 2, 1, channel=BSC, horizon=FiniteHorizon(1))
    d = PrimitiveDesign(enc=[np.array([0, 1])], memory=[],
                        decoders=[np.array([[0], [1]])])
    exact = evaluate_exact(d, inst)
    rep = simulate(d, inst, 100_000, seed=2)
    assert abs(exact - 0.1) <= 1e-15
    assert abs(rep.mean - exact) <= 4 * rep.std_err
    assert len(rep.per_stage_means) == 1


def test_optimal_design_estimate_and_reproducibility():
    inst = make_instance(2, 2, 2, 2,
                         initial=[0.5, 0.5],
                         transition=[[0.7, 0.3], [0.3, 0.7]],
                         channel=BSC,
                         horizon=FiniteHorizon(2))
    res = solve_finite(inst)
    rep1 = simulate(res.stages, inst, 100_000, seed=7)
    rep2 = simulate(res.stages, inst, 100_000, seed=7)
    rep8 = simulate(res.stages, inst, 100_000, seed=7, threads=8)
    assert abs(rep1.mean - res.value) <= 4 * rep1.std_err
    assert rep1 == rep2 == rep8
    assert abs(sum(rep1.per_stage_means) - rep1.mean) <= 1e-12


def test_different_seeds_differ():
    inst = make_instance(2, 2, 2, 1, channel=BSC, horizon=FiniteHorizon(1))
    d = PrimitiveDesign(enc=[np.array([0, 1])], memory=[],
                        decoders=[np.array([[0], [1]])])
    assert simulate(d, inst, 1000, seed=1) != simulate(d, inst, 1000, seed=2)


def test_single_trajectory_flags_degenerate_stderr():
    inst = make_instance(2, 2, 2, 1, channel=BSC, horizon=FiniteHorizon(1))
    d = PrimitiveDesign(enc=[np.array([0, 1])], memory=[],
                        decoders=[np.array([[0], [1]])])
    rep = simulate(d, inst, 1, seed=3)
    assert rep.std_err == 0.0
    assert rep.std_err_degenerate
    assert rep.mean in (0.0, 1.0)


def test_rejects_inconsistent_design():
    inst = make_instance(2, 2, 2, 2, horizon=FiniteHorizon(2))
    bad = PrimitiveDesign(enc=[np.array([0, 1])], memory=[],
                          decoders=[np.array([[0, 0], [1, 1]])])
    with pytest.raises(DimensionMismatch):
        simulate(bad, inst, 10, seed=0)
    with pytest.raises(DimensionMismatch):
        simulate(chain_design(), inst, 0, seed=0)


def test_trajectory_log_replays_memory_rule(tmp_path):
    rng = np.random.default_rng(4)
    inst = rand_finite_instance(rng, 2, 2, 2, 2, T=3)
    value, design = brute_force_optimum(inst)
    log = tmp_path / "trace.csv"
    rep = simulate(design, inst, 500, seed=9, log_path=str(log))
    rows = list(csv.DictReader(open(log)))
    assert len(rows) == 500 * 3
    by_traj = {}
    for row in rows:
        by_traj.setdefault(int(row["trajectory"]), []).append(row)
    for traj, steps in by_traj.items():
        steps.sort(key=lambda r: int(r["t"]))
        assert int(steps[0]["m"]) == inst.m0
        for t in range(1, 3):
            prev = steps[t - 1]
            expected = int(design.memory[t - 1][int(prev["y"]), int(prev["m"])])
            assert int(steps[t]["m"]) == expected
        # decoder replay: xhat = g_t(y, m)
        for t in range(3):
            row = steps[t]
            assert int(row["xhat"]) == int(
                design.decoders[t][int(row["y"]), int(row["m"])])


def test_stationary_design_estimate():
    inst = make_instance(2, 2, 2, 2,
                         initial=[0.4, 0.6],
                         transition=np.eye(2).tolist(),
                         channel=np.eye(2).tolist(),
                         rho=[[0.2, 0.9], [0.7, 0.1]],
                         horizon=DiscountedHorizon(0.8, 0.01))
    res = solve_discounted(inst)
    rep = simulate(res.stationary, inst, 50_000, seed=11)
    assert abs(rep.mean - res.stationary_value) <= 4 * rep.std_err + 0.01
    rep2 = simulate(res.stationary, inst, 50_000, seed=11)
    assert rep == rep2
