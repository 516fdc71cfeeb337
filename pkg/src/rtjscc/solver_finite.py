"""Exact finite-horizon solve by nested dynamic programming.

The optimization over encoding rules is a functional one (the rule's
domain includes every possible belief), but the value of a rule depends
only on its images on the finitely many support pairs of the current
state, so each stage reduces to enumerating ``nz ** n_atoms`` assignments.
The recursion alternates: pick an encoding assignment, incur the stage
cost at the resulting memory-update state, pick a memory rule, recurse on
the next encoder state.  States revisited under different rule prefixes
are shared through a memo table keyed on the canonical atom list.

Minima are selected by a rule that is a pure function of the candidate
value array (smallest index within 1e-12 of the minimum), so results are
identical no matter how the candidate loop is scheduled across workers.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._enum import all_index_tables
from .belief import (
    MERGE_TOL,
    EncoderInfoState,
    EncoderTable,
    MemoryInfoState,
    apply_encoder,
    apply_memory_update,
    initial_info_state,
    stage_cost,
    stage_costs_over_assignments,
)
from .errors import UncoveredSupportPair
from .model import validate

DEFAULT_CAP = 10 ** 6
SELECT_TOL = 1e-12

# memory-rule one-hot tensors, keyed by (ny, nm); tiny and reused everywhere
_ONEHOT_CACHE: dict = {}


@dataclass(frozen=True)
class StageRules:
    """Rules chosen at one stage, with the states they were chosen at.

    enc gives one channel symbol per atom of ``pi`` (the canonical state's
    atoms are exactly its distinct support pairs). memory is None at the
    final stage.
    """

    t: int
    enc: np.ndarray
    memory: Optional[np.ndarray]
    decoder: np.ndarray
    pi: EncoderInfoState
    phi: MemoryInfoState
    stage_cost_value: float


@dataclass
class SolveResult:
    value: float
    stages: list
    states_explored: int
    atoms_max: int
    wall_time: float
    memo: dict


def select_min(values: np.ndarray, tol: float = SELECT_TOL) -> int:
    """Smallest index whose value is within tol of the minimum."""
    vmin = values.min()
    return int(np.argmax(values <= vmin + tol))


def enumerate_enc_assignments(state: EncoderInfoState, nz: int,
                              cap: int = DEFAULT_CAP) -> np.ndarray:
    """All encoding assignments on the state's support, lexicographic.

    Returns an (nz ** n_atoms, n_atoms) array; row order follows
    itertools.product with the first support pair most significant.
    """
    return all_index_tables(nz, state.n_atoms, cap, "encoder assignments")


def enumerate_memory_rules(ny: int, nm: int, cap: int = DEFAULT_CAP) -> np.ndarray:
    """All memory-update tables, lexicographic over row-major (y, m) cells.

    Returns an (nm ** (ny*nm), ny, nm) array.
    """
    flat = all_index_tables(nm, ny * nm, cap, "memory rules")
    return flat.reshape(flat.shape[0], ny, nm)


def _rule_onehots(ny: int, nm: int, cap: int):
    """(rules, one-hot push tensors) for all memory tables of a shape."""
    key = (ny, nm)
    if key not in _ONEHOT_CACHE:
        rules = enumerate_memory_rules(ny, nm, cap)
        onehot = (rules.reshape(rules.shape[0], -1, 1)
                  == np.arange(nm)).astype(float)      # (L, ny*nm, nm)
        _ONEHOT_CACHE[key] = (rules, onehot)
    return _ONEHOT_CACHE[key]


def _batch_costs(pi, assignments, channel, rho, threads):
    if threads <= 1 or assignments.shape[0] <= 4096:
        return stage_costs_over_assignments(pi, assignments, channel, rho)
    # fixed 4096-row blocks farmed out to workers; block boundaries do not
    # depend on the worker count, so the assembled array is identical
    blocks = range(0, assignments.shape[0], 4096)
    costs = np.empty(assignments.shape[0])
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futs = {pool.submit(stage_costs_over_assignments, pi,
                            assignments[lo:lo + 4096], channel, rho): lo
                for lo in blocks}
        for fut, lo in futs.items():
            costs[lo:lo + 4096] = fut.result()
    return costs


def _distinct_updates(phi, rules, onehot, transition, merge_tol):
    """Successor states over all memory rules, deduplicated.

    Many rules push a state's joints to identical beliefs; only distinct
    successors are expanded. Returned in order of each group's smallest
    rule index, preserving lexicographic tie-breaking.
    """
    n = phi.n_atoms
    flat = phi.joints.reshape(n, -1)
    pushes = np.einsum("nf,lfm->lnm", flat, onehot)
    keys = np.round(pushes.reshape(pushes.shape[0], -1), 12) + 0.0
    _, inverse = np.unique(keys, axis=0, return_inverse=True)
    n_groups = inverse.max() + 1
    reps = np.full(n_groups, rules.shape[0])
    np.minimum.at(reps, inverse, np.arange(rules.shape[0]))
    out = []
    for li in np.sort(reps):
        child = apply_memory_update(phi, rules[li], transition, merge_tol)
        out.append((int(li), child))
    return out


def solve_finite(inst, cap: int = DEFAULT_CAP, threads: int = 1,
                 merge_tol: float = MERGE_TOL) -> SolveResult:
    """Optimal value and one minimizing rule sequence for a finite horizon.

    Depth-first recursion from the initial state, memoized on
    (stage, canonical state). Ties are broken toward the earlier candidate
    in lexicographic enumeration order (within a 1e-12 value tolerance).
    """
    inst = validate(inst)
    T = inst.T
    a = inst.alphabets
    t0 = time.perf_counter()

    memo: dict = {}
    rules, onehot = _rule_onehots(a.ny, a.nm, cap)

    def value_at(t, pi, allow_threads):
        key = (t, pi.key())
        hit = memo.get(key)
        if hit is not None:
            return hit
        channel, rho = inst.channel_at(t), inst.rho_at(t)
        assignments = enumerate_enc_assignments(pi, a.nz, cap)

        if t == T - 1:
            costs = _batch_costs(pi, assignments, channel, rho,
                                 threads if allow_threads else 1)
            ci = select_min(costs)
            entry = (float(costs[ci]), assignments[ci].copy(), None, pi)
        else:
            transition = inst.transition_at(t)

            def eval_assignment(ci):
                phi = apply_encoder(pi, assignments[ci], channel, merge_tol)
                sc, _ = stage_cost(phi, rho)
                group = _distinct_updates(phi, rules, onehot, transition, merge_tol)
                svals = np.array([value_at(t + 1, child, False)[0]
                                  for _, child in group])
                j = select_min(svals)
                return sc + svals[j], group[j][0]

            C = assignments.shape[0]
            vals = np.empty(C)
            chosen_l = np.empty(C, dtype=np.int64)
            if allow_threads and threads > 1 and C > 1:
                with ThreadPoolExecutor(max_workers=threads) as pool:
                    results = list(pool.map(eval_assignment, range(C)))
                for ci, (v, li) in enumerate(results):
                    vals[ci], chosen_l[ci] = v, li
            else:
                for ci in range(C):
                    vals[ci], chosen_l[ci] = eval_assignment(ci)
            ci = select_min(vals)
            entry = (float(vals[ci]), assignments[ci].copy(),
                     rules[chosen_l[ci]].copy(), pi)
        memo[key] = entry
        return entry

    pi = initial_info_state(inst)
    root = value_at(0, pi, True)

    stages = []
    cur = pi
    for t in range(T):
        value_t, enc, lrule, _ = memo[(t, cur.key())]
        phi = apply_encoder(cur, enc, inst.channel_at(t), merge_tol)
        sc, decoder = stage_cost(phi, inst.rho_at(t))
        stages.append(StageRules(t=t, enc=enc,
                                 memory=(lrule if t < T - 1 else None),
                                 decoder=decoder, pi=cur, phi=phi,
                                 stage_cost_value=sc))
        if t < T - 1:
            cur = apply_memory_update(phi, lrule, inst.transition_at(t), merge_tol)

    atoms_max = max(entry[3].n_atoms for entry in memo.values())
    return SolveResult(value=root[0], stages=stages, states_explored=len(memo),
                       atoms_max=atoms_max,
                       wall_time=time.perf_counter() - t0, memo=memo)


def value_of_design(inst, stages, merge_tol: float = MERGE_TOL) -> float:
    """Expected total distortion of a per-stage rule sequence.

    Forward pass through the information states, accumulating each stage's
    cost (with the optimal decoder for the induced state, which is how the
    per-stage decoder tables in ``stages`` were produced). Encoding rules
    are applied by nearest-belief lookup so that rule tables recorded on
    one support remain total functions on nearby supports.
    """
    inst = validate(inst)
    T = inst.T
    if len(stages) != T:
        raise UncoveredSupportPair(f"need rules for {T} stages, got {len(stages)}")

    tables = []
    for st in stages:
        table = EncoderTable()
        for i in range(st.pi.n_atoms):
            table.add(int(st.pi.xs[i]), st.pi.beliefs[i], int(st.enc[i]))
        tables.append(table)

    pi = initial_info_state(inst)
    total = 0.0
    for t in range(T):
        zs, _ = tables[t].resolve(pi, tol=merge_tol)
        phi = apply_encoder(pi, zs, inst.channel_at(t), merge_tol)
        sc, _ = stage_cost(phi, inst.rho_at(t))
        total += sc
        if t < T - 1:
            pi = apply_memory_update(phi, stages[t].memory,
                                     inst.transition_at(t), merge_tol)
    return total
