"""End-to-end acceptance suite.

Each test prints one ``[PASS]``/``[FAIL]`` line (run with ``pytest -s`` to
see them on success). The randomized batches are seeded, so the suite is
deterministic end to end.
"""

import itertools

import numpy as np
import pytest

from rtjscc import (
    DiscountedHorizon,
    FiniteHorizon,
    apply_encoder,
    brute_force_optimum,
    channel_memory_joint,
    design_count,
    enumerate_enc_assignments,
    evaluate_exact,
    initial_info_state,
    mix_states,
    simulate,
    solve_discounted,
    solve_finite,
    stage_cost,
    updated_memory_belief,
)
from rtjscc.belief import EncoderInfoState, MemoryInfoState, apply_memory_update

from helpers import (
    all_decoder_tables,
    enumerate_trajectory_conditionals,
    hamming,
    lossless_chain_design,
    make_instance,
    rand_finite_instance,
    rand_primitive_design,
    rand_stochastic,
    stationary_dist,
    uninformative_channel_value,
)

ORACLE_BUDGET = 5_000_000
N_RANDOM_INSTANCES = 50


def _criterion(number, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}"
    print(line)
    assert ok, line


def _batch_combos():
    """Size/horizon mix: every alphabet value and horizon is represented,
    subject to the brute-force budget."""
    t1 = list(itertools.product((2, 3), repeat=4))                       # 16
    t2 = [(nx, nz, ny, nm) for nx, nz, ny, nm in itertools.product((2, 3),
                                                                   repeat=4)
          if design_count(make_instance(nx, nz, ny, nm,
                                        horizon=FiniteHorizon(2)))
          <= ORACLE_BUDGET]                                              # 11
    combos = [(nx, nz, ny, nm, 1) for nx, nz, ny, nm in t1]
    combos += [(nx, nz, ny, nm, 2) for nx, nz, ny, nm in t2]
    combos += [(2, 2, 2, 2, 3), (2, 2, 2, 2, 3)]
    cheap_t2 = [c for c in t2
                if design_count(make_instance(*c, horizon=FiniteHorizon(2)))
                <= 100_000]
    i = 0
    while len(combos) < N_RANDOM_INSTANCES:
        combos.append(cheap_t2[i % len(cheap_t2)] + (2,))
        i += 1
    return combos[:N_RANDOM_INSTANCES]


@pytest.fixture(scope="module")
def batch():
    """Solved + brute-forced random instances shared across criteria."""
    rng = np.random.default_rng(20240601)
    records = []
    for combo in _batch_combos():
        nx, nz, ny, nm, T = combo
        inst = rand_finite_instance(rng, nx, nz, ny, nm, T)
        solved = solve_finite(inst)
        oracle_value, oracle_design = brute_force_optimum(inst, cap=10 ** 7)
        records.append({
            "combo": combo,
            "inst": inst,
            "solved": solved,
            "oracle_value": oracle_value,
            "oracle_design": oracle_design,
        })
    return records


def test_criterion_1_oracle_equivalence(batch):
    worst = 0.0
    for rec in batch:
        diff = abs(rec["solved"].value - rec["oracle_value"])
        worst = max(worst, diff)
    _criterion(1, worst <= 1e-9,
               f"solver vs exhaustive search on {len(batch)} instances, "
               f"worst |diff| = {worst:.3e} (tol 1e-9)")


def test_criterion_2_lossless_chain():
    failures = []
    for nx in (2, 3):
        for T in (1, 2, 3, 4, 5):
            inst = make_instance(
                nx, nx, nx, 1,
                initial=[1.0 / nx] * nx,
                transition=(np.full((nx, nx), 1.0 / nx)).tolist(),
                channel=np.eye(nx).tolist(),
                rho=hamming(nx),
                horizon=FiniteHorizon(T))
            if solve_finite(inst).value != 0.0:
                failures.append((nx, T, "solver"))
            if evaluate_exact(lossless_chain_design(inst), inst) != 0.0:
                failures.append((nx, T, "exact evaluation"))
            if design_count(inst) <= ORACLE_BUDGET:
                value, _ = brute_force_optimum(inst)
                if value != 0.0:
                    failures.append((nx, T, "search"))
    _criterion(2, not failures,
               "noiseless identity chain solves to exactly 0 for "
               f"T in 1..5, nx in (2, 3); failures: {failures or 'none'}")


def test_criterion_3_uninformative_channel():
    rng = np.random.default_rng(7)
    combos = [(2, 2, 2, 2, 3), (3, 2, 2, 2, 2), (2, 3, 3, 2, 3),
              (3, 3, 2, 3, 2), (2, 2, 3, 3, 2)]
    worst = 0.0
    for nx, nz, ny, nm, T in combos:
        inst = make_instance(
            nx, nz, ny, nm,
            initial=rand_stochastic(rng, 1, nx)[0].tolist(),
            transition=rand_stochastic(rng, nx, nx).tolist(),
            channel=np.full((nz, ny), 1.0 / ny).tolist(),
            rho=rng.random((nx, nx)).tolist(),
            horizon=FiniteHorizon(T))
        diff = abs(solve_finite(inst).value - uninformative_channel_value(inst))
        worst = max(worst, diff)
    _criterion(3, worst <= 1e-9,
               f"uniform channels match prior-decoding closed form on 5 "
               f"instances, worst |diff| = {worst:.3e}")


def test_criterion_4_belief_recursions_vs_enumeration():
    rng = np.random.default_rng(11)
    combos = [(2, 2, 2, 2, 3), (2, 3, 2, 3, 2), (3, 2, 3, 2, 2),
              (2, 2, 3, 2, 3), (3, 3, 2, 2, 2)]
    worst = 0.0
    pairs = 0
    for combo in combos:
        for _ in range(4):
            nx, nz, ny, nm, T = combo
            inst = rand_finite_instance(rng, nx, nz, ny, nm, T)
            design = rand_primitive_design(rng, inst)
            pairs += 1
            for x_path in itertools.product(range(nx), repeat=T):
                zs, joints, memories = enumerate_trajectory_conditionals(
                    inst, design.enc, design.memory, list(x_path))
                b = np.zeros(nm)
                b[inst.m0] = 1.0
                for t in range(T):
                    q = channel_memory_joint(b, zs[t], inst.channel_at(t))
                    worst = max(worst, float(np.max(np.abs(q - joints[t]))))
                    if t < T - 1:
                        b = updated_memory_belief(
                            q, np.asarray(design.memory[t]))
                        worst = max(worst,
                                    float(np.max(np.abs(b - memories[t]))))
    _criterion(4, worst <= 1e-9,
               f"belief recursions vs trajectory enumeration on {pairs} "
               f"design/instance pairs, every stage and realization, "
               f"worst |diff| = {worst:.3e}")


def test_criterion_5_decoder_optimality(batch):
    checked = 0
    violations = 0
    for rec in batch:
        inst = rec["inst"]
        a = inst.alphabets
        if a.nx ** (a.ny * a.nm) > 10_000:
            continue
        rho = inst.rho_at(0)
        states = [st.phi for st in rec["solved"].stages]
        pi = initial_info_state(inst)
        for row in enumerate_enc_assignments(pi, a.nz):
            states.append(apply_encoder(pi, row, inst.channel_at(0)))
        for t, phi in enumerate(states):
            rho_t = inst.rho_at(min(t, inst.T - 1))
            cost, _ = stage_cost(phi, rho_t)
            J = np.zeros((a.nx, a.ny, a.nm))
            np.add.at(J, phi.xs, phi.joints * phi.weights[:, None, None])
            checked += 1
            for g in all_decoder_tables(a.nx, a.ny, a.nm):
                alt = float(np.einsum("xym,xym->", J, rho_t[:, g]))
                if alt < cost - 1e-12:
                    violations += 1
    _criterion(5, checked > 0 and violations == 0,
               f"no enumerated decoder beats the filtering decoder on "
               f"{checked} reachable states ({violations} violations)")


def test_criterion_6_transform_linearity():
    rng = np.random.default_rng(13)
    worst = 0.0
    for _ in range(100):
        nm = int(rng.integers(2, 4))
        nz = int(rng.integers(2, 4))
        P = rand_stochastic(rng, nz, 2)
        s1 = EncoderInfoState.from_atoms(
            rng.integers(0, 2, 4), rand_stochastic(rng, 4, nm),
            rand_stochastic(rng, 1, 4)[0])
        s2 = EncoderInfoState.from_atoms(
            rng.integers(0, 2, 4), rand_stochastic(rng, 4, nm),
            rand_stochastic(rng, 1, 4)[0])
        alpha = float(rng.random())
        mixed = mix_states(alpha, s1, s2)
        table = {}
        for st in (mixed, s1, s2):
            for i in range(st.n_atoms):
                k = (int(st.xs[i]), tuple(np.round(st.beliefs[i], 9)))
                table.setdefault(k, int(rng.integers(0, nz)))
        def assign(st):
            return [table[(int(st.xs[i]), tuple(np.round(st.beliefs[i], 9)))]
                    for i in range(st.n_atoms)]
        lhs = apply_encoder(mixed, assign(mixed), P)
        rhs = mix_states(alpha, apply_encoder(s1, assign(s1), P),
                         apply_encoder(s2, assign(s2), P))
        worst = max(worst, _state_distance(lhs, rhs))
    for _ in range(100):
        ny, nm = int(rng.integers(2, 4)), int(rng.integers(2, 4))
        A = rand_stochastic(rng, 2, 2)
        rule = rng.integers(0, nm, (ny, nm))
        s1 = MemoryInfoState.from_atoms(
            rng.integers(0, 2, 4),
            rand_stochastic(rng, 4, ny * nm).reshape(4, ny, nm),
            rand_stochastic(rng, 1, 4)[0])
        s2 = MemoryInfoState.from_atoms(
            rng.integers(0, 2, 4),
            rand_stochastic(rng, 4, ny * nm).reshape(4, ny, nm),
            rand_stochastic(rng, 1, 4)[0])
        alpha = float(rng.random())
        lhs = apply_memory_update(mix_states(alpha, s1, s2), rule, A)
        rhs = mix_states(alpha, apply_memory_update(s1, rule, A),
                         apply_memory_update(s2, rule, A))
        worst = max(worst, _state_distance(lhs, rhs))
    _criterion(6, worst <= 1e-9,
               f"mixture identities for both transforms on 100 tuples each, "
               f"worst atom difference = {worst:.3e}")


def _state_distance(a, b):
    if a.n_atoms != b.n_atoms or not np.array_equal(a.xs, b.xs):
        return np.inf
    va = a.beliefs if isinstance(a, EncoderInfoState) else a.joints
    vb = b.beliefs if isinstance(b, EncoderInfoState) else b.joints
    return float(max(np.max(np.abs(va - vb)), np.max(np.abs(a.weights - b.weights))))


def test_criterion_7_discounted_contraction_and_gap():
    rng = np.random.default_rng(17)
    betas = [0.5, 0.8, 0.9, 0.5, 0.8, 0.9, 0.5, 0.8, 0.9, 0.8]
    contraction_ok = True
    gap_failures = []
    for i, beta in enumerate(betas):
        if i < 6:
            # memoryless receiver, source started at its stationary law
            nx, nz, ny = (int(v) for v in rng.integers(2, 4, 3))
            A = rand_stochastic(rng, nx, nx)
            inst = make_instance(
                nx, nz, ny, 1,
                initial=stationary_dist(A).tolist(), transition=A.tolist(),
                channel=rand_stochastic(rng, nz, ny).tolist(),
                rho=rng.random((nx, nx)).tolist(),
                horizon=DiscountedHorizon(beta, 0.01))
        else:
            # frozen source through a deterministic channel, live memory
            perm = rng.permutation(2)
            inst = make_instance(
                2, 2, 2, 2,
                initial=rand_stochastic(rng, 1, 2)[0].tolist(),
                transition=np.eye(2).tolist(),
                channel=np.eye(2)[perm].tolist(),
                rho=rng.random((2, 2)).tolist(),
                horizon=DiscountedHorizon(beta, 0.01))
        res = solve_discounted(inst)
        vals = res.diagnostics["depth_values"]
        for d in range(1, len(vals)):
            if abs(vals[d] - vals[d - 1]) > beta ** d * inst.rho_max + 1e-12:
                contraction_ok = False
        if not (res.gap <= 0.01):
            gap_failures.append((i, beta, res.gap))
    _criterion(7, contraction_ok and not gap_failures,
               f"10 discounted instances: truncation deltas within "
               f"beta**T * rho_max, stationary gaps <= 0.01 "
               f"(exceptions: {gap_failures or 'none'})")


def test_criterion_8_monte_carlo_consistency(batch):
    failures = []
    for rec in batch[:10]:
        inst, solved = rec["inst"], rec["solved"]
        rep1 = simulate(solved.stages, inst, 100_000, seed=2024)
        rep2 = simulate(solved.stages, inst, 100_000, seed=2024)
        rep8 = simulate(solved.stages, inst, 100_000, seed=2024, threads=8)
        if not (rep1 == rep2 == rep8):
            failures.append((rec["combo"], "reports differ"))
        if abs(rep1.mean - solved.value) > 4 * rep1.std_err:
            failures.append((rec["combo"],
                             f"mean {rep1.mean} vs {solved.value}"))
    _criterion(8, not failures,
               "simulated optimal designs within 4 standard errors on 10 "
               f"instances, reports bitwise stable; failures: {failures or 'none'}")


def test_criterion_9_thread_determinism(batch):
    failures = []
    for rec in batch:
        inst = rec["inst"]
        solved8 = solve_finite(inst, threads=8)
        if solved8.value != rec["solved"].value:
            failures.append((rec["combo"], "solver value"))
        for a, b in zip(solved8.stages, rec["solved"].stages):
            if not np.array_equal(a.enc, b.enc):
                failures.append((rec["combo"], "encoder tables"))
            if (a.memory is None) != (b.memory is None) or (
                    a.memory is not None and not np.array_equal(a.memory, b.memory)):
                failures.append((rec["combo"], "memory tables"))
            if not np.array_equal(a.decoder, b.decoder):
                failures.append((rec["combo"], "decoder tables"))
        value8, design8 = brute_force_optimum(inst, cap=10 ** 7, threads=8)
        if value8 != rec["oracle_value"]:
            failures.append((rec["combo"], "oracle value"))
        if any(not np.array_equal(x, y) for x, y in
               zip(design8.enc, rec["oracle_design"].enc)):
            failures.append((rec["combo"], "oracle encoders"))
        if any(not np.array_equal(x, y) for x, y in
               zip(design8.memory, rec["oracle_design"].memory)):
            failures.append((rec["combo"], "oracle memory rules"))
    _criterion(9, not failures,
               f"1-thread and 8-thread runs identical on {len(batch)} "
               f"instances; failures: {failures or 'none'}")
