"""Exhaustive ground truth on the primitive rule domains.

Here a design is kept in its rawest form: per-stage encoding tables over
entire source histories (c_t indexed by x_1..x_t), memory-update tables,
and decoder tables.  ``evaluate_exact`` sums the joint trajectory
distribution directly - no information states, no sampling - so it is an
independent check on everything the solvers compute.  ``brute_force_optimum``
enumerates every (encoding, memory) design under a hard cap; decoders are
filled in by the per-stage conditional-distribution argmin, which is optimal
for any fixed (c, l) and shrinks the search space accordingly.

Scalability is a non-goal: this module certifies the solver on desk-scale
instances.
"""

from __future__ import annotations

from dataclasses import dataclass
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from ._enum import all_index_tables, table_count
from .errors import DimensionMismatch, SearchSpaceExceeded
from .model import ValidatedInstance, validate

DEFAULT_DESIGN_CAP = 10 ** 7

# fixed chunk for vectorized last-stage scans; results are chunk-invariant
_CHUNK = 8192


@dataclass
class PrimitiveDesign:
    """A design on the primitive domains.

    enc[t] is a flat table over source prefixes x_1..x_{t+1} in
    lexicographic order with x_1 most significant (length nx**(t+1)).
    memory[t] and decoders[t] are ny-by-nm integer tables.
    """

    enc: list
    memory: list
    decoders: list


def _check_design(design: PrimitiveDesign, inst: ValidatedInstance):
    a = inst.alphabets
    T = inst.T
    if len(design.enc) != T or len(design.decoders) != T or len(design.memory) != T - 1:
        raise DimensionMismatch(
            f"design has {len(design.enc)} encoder / {len(design.memory)} memory / "
            f"{len(design.decoders)} decoder stages; horizon is {T}")
    for t in range(T):
        c = np.asarray(design.enc[t])
        if c.shape != (a.nx ** (t + 1),):
            raise DimensionMismatch(f"enc[{t}]: expected length {a.nx ** (t + 1)}")
        g = np.asarray(design.decoders[t])
        if g.shape != (a.ny, a.nm):
            raise DimensionMismatch(f"decoders[{t}]: expected shape {(a.ny, a.nm)}")
    for t in range(T - 1):
        l = np.asarray(design.memory[t])
        if l.shape != (a.ny, a.nm):
            raise DimensionMismatch(f"memory[{t}]: expected shape {(a.ny, a.nm)}")


def _initial_forward(inst):
    """F[prefix, m] = Pr(x_1 = prefix, memory = m); memory starts at m0."""
    a = inst.alphabets
    F = np.zeros((a.nx, a.nm))
    F[:, inst.m0] = inst.initial
    return F


def _stage_cost_given_decoder(F, ctab, P, rho, g, last_x):
    PY = P[ctab]                                  # (npref, ny)
    R = rho[last_x[:, None, None], g[None, :, :]]  # (npref, ny, nm)
    return float(np.einsum("im,iy,iym->", F, PY, R))


def _bayes_joint(F, ctab, P, last_x, nx):
    """J[x, y, m] = Pr(X_t = x, Y_t = y, M_{t-1} = m) under the prefix law F."""
    PY = P[ctab]
    ny, nm = PY.shape[1], F.shape[1]
    J = np.zeros((nx, ny, nm))
    contrib = F[:, None, :] * PY[:, :, None]      # (npref, ny, nm)
    np.add.at(J, last_x, contrib)
    return J


def _bayes_decoder(J, rho):
    D = np.tensordot(rho, J, axes=([0], [0]))     # (nxhat, ny, nm)
    g = np.argmin(D, axis=0).astype(np.int64)
    g[J.sum(axis=0) == 0] = 0
    return g, float(D.min(axis=0).sum())


def _advance_forward(F, ctab, P, ltab, A, last_x, nx):
    """Next-stage prefix law: extend each prefix by x' and update memory."""
    PY = P[ctab]
    nm = F.shape[1]
    onehot = (ltab.reshape(-1, 1) == np.arange(nm)).astype(float)  # (ny*nm, nm)
    mass = F[:, None, :] * PY[:, :, None]          # (npref, ny, nm)
    after = mass.reshape(F.shape[0], -1) @ onehot  # (npref, nm')
    Fn = after[:, None, :] * A[last_x][:, :, None]  # (npref, nx', nm')
    return Fn.reshape(-1, nm)


def _last_symbols(T_stage, nx):
    """last source symbol of each length-(t+1) prefix, lexicographic order."""
    return np.tile(np.arange(nx, dtype=np.int64), nx ** T_stage)


def evaluate_exact(design: PrimitiveDesign, inst) -> float:
    """Expected total distortion of a design, by exact forward summation.

    Sweeps the joint law of (source prefix, memory) one stage at a time,
    marginalizing the channel output within each stage, so memory stays
    O(|X|^t * |M|). Deterministic: repeated calls are bitwise identical.
    """
    inst = validate(inst)
    _check_design(design, inst)
    a = inst.alphabets
    T = inst.T
    F = _initial_forward(inst)
    total = 0.0
    for t in range(T):
        last_x = _last_symbols(t, a.nx)
        ctab = np.asarray(design.enc[t], dtype=np.int64)
        g = np.asarray(design.decoders[t], dtype=np.int64)
        total += _stage_cost_given_decoder(F, ctab, inst.channel_at(t),
                                           inst.rho_at(t), g, last_x)
        if t < T - 1:
            F = _advance_forward(F, ctab, inst.channel_at(t),
                                 np.asarray(design.memory[t], dtype=np.int64),
                                 inst.transition_at(t), last_x, a.nx)
    return total


def bayes_decoders_for(enc, memory, inst) -> list:
    """Optimal decoder tables for fixed encoding/memory rules.

    For each stage the exact joint Pr(X_t, Y_t, M_{t-1}) is computed by the
    forward sweep and each (y, m) cell decodes to the argmin of the expected
    distortion (smallest index on ties; zero-mass cells decode to 0).
    """
    inst = validate(inst)
    a = inst.alphabets
    T = inst.T
    F = _initial_forward(inst)
    decoders = []
    for t in range(T):
        last_x = _last_symbols(t, a.nx)
        ctab = np.asarray(enc[t], dtype=np.int64)
        J = _bayes_joint(F, ctab, inst.channel_at(t), last_x, a.nx)
        g, _ = _bayes_decoder(J, inst.rho_at(t))
        decoders.append(g)
        if t < T - 1:
            F = _advance_forward(F, ctab, inst.channel_at(t),
                                 np.asarray(memory[t], dtype=np.int64),
                                 inst.transition_at(t), last_x, a.nx)
    return decoders


def design_count(inst) -> int:
    """Number of (encoding, memory) designs brute force would enumerate."""
    inst = validate(inst)
    a = inst.alphabets
    T = inst.T
    count = 1
    for t in range(T):
        count *= table_count(a.nz, a.nx ** (t + 1))
    count *= table_count(a.nm, a.ny * a.nm) ** (T - 1)
    return count


def _scan_last_stage(F, ctabs, P, rho, last_x, nx):
    """Bayes-decoder cost for every candidate last-stage encoding table.

    Returns (best cost, index of the first minimizer in ctabs order).
    """
    best_cost, best_idx = np.inf, -1
    ny, nm = P.shape[1], F.shape[1]
    for lo in range(0, ctabs.shape[0], _CHUNK):
        chunk = ctabs[lo:lo + _CHUNK]
        PY = P[chunk]                               # (c, npref, ny)
        contrib = F[None, :, None, :] * PY[:, :, :, None]   # (c, npref, ny, nm)
        J = np.zeros((chunk.shape[0], nx, ny, nm))
        for x in range(nx):
            idx = np.flatnonzero(last_x == x)
            if idx.size:
                J[:, x] = contrib[:, idx].sum(axis=1)
        D = np.einsum("cxym,xk->ckym", J, rho)
        costs = D.min(axis=1).sum(axis=(1, 2))
        i = int(np.argmin(costs))
        if costs[i] < best_cost:
            best_cost, best_idx = float(costs[i]), lo + i
    return best_cost, best_idx


def brute_force_optimum(inst, cap: int = DEFAULT_DESIGN_CAP, threads: int = 1):
    """Globally optimal design by exhaustive enumeration.

    Enumerates stage-major, lexicographic within each stage, and keeps the
    first strict minimizer, so the returned design is reproducible. Raises
    SearchSpaceExceeded (with the computed count) instead of running an
    enumeration larger than the cap.
    """
    inst = validate(inst)
    count = design_count(inst)
    if count > cap:
        raise SearchSpaceExceeded(count, cap, "design enumeration")

    a = inst.alphabets
    T = inst.T
    ctabs = [all_index_tables(a.nz, a.nx ** (t + 1), cap, "encoder tables")
             for t in range(T)]
    ltabs = (all_index_tables(a.nm, a.ny * a.nm, cap, "memory tables")
             if T > 1 else np.zeros((1, 0), dtype=np.int64))
    last_x = [_last_symbols(t, a.nx) for t in range(T)]

    def dfs(t, F, acc):
        """Best (value, [c indices], [l indices]) below this node."""
        if t == T - 1:
            cost, idx = _scan_last_stage(F, ctabs[t], inst.channel_at(t),
                                         inst.rho_at(t), last_x[t], a.nx)
            return acc + cost, [idx], []
        best = (np.inf, None, None)
        for ci in range(ctabs[t].shape[0]):
            ctab = ctabs[t][ci]
            J = _bayes_joint(F, ctab, inst.channel_at(t), last_x[t], a.nx)
            _, sc = _bayes_decoder(J, inst.rho_at(t))
            for li in range(ltabs.shape[0]):
                ltab = ltabs[li].reshape(a.ny, a.nm)
                Fn = _advance_forward(F, ctab, inst.channel_at(t), ltab,
                                      inst.transition_at(t), last_x[t], a.nx)
                v, cs, ls = dfs(t + 1, Fn, acc + sc)
                if v < best[0]:
                    best = (v, [ci] + cs, [li] + ls)
        return best

    F0 = _initial_forward(inst)
    if threads > 1 and T > 1 and ctabs[0].shape[0] > 1:
        # split the top-level encoder candidates; each worker runs the same
        # sequential scan below its candidate, and results merge in index
        # order, so the outcome matches the single-threaded enumeration.
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futs = [pool.submit(_dfs_root_slice, inst, ctabs, ltabs,
                                last_x, F0, ci, a, T)
                    for ci in range(ctabs[0].shape[0])]
            results = [f.result() for f in futs]
        best = (np.inf, None, None)
        for v, cs, ls in results:
            if v < best[0]:
                best = (v, cs, ls)
        value, c_idx, l_idx = best
    else:
        value, c_idx, l_idx = dfs(0, F0, 0.0)

    enc = [np.array(ctabs[t][c_idx[t]]) for t in range(T)]
    memory = [np.array(ltabs[l_idx[t]].reshape(a.ny, a.nm)) for t in range(T - 1)]
    decoders = bayes_decoders_for(enc, memory, inst)
    return float(value), PrimitiveDesign(enc, memory, decoders)


def _dfs_root_slice(inst, ctabs, ltabs, last_x, F0, ci, a, T):
    """One top-level encoder candidate explored to the bottom (thread body)."""
    ctab = ctabs[0][ci]
    J = _bayes_joint(F0, ctab, inst.channel_at(0), last_x[0], a.nx)
    _, sc = _bayes_decoder(J, inst.rho_at(0))

    def dfs(t, F, acc):
        if t == T - 1:
            cost, idx = _scan_last_stage(F, ctabs[t], inst.channel_at(t),
                                         inst.rho_at(t), last_x[t], a.nx)
            return acc + cost, [idx], []
        best = (np.inf, None, None)
        for cj in range(ctabs[t].shape[0]):
            c2 = ctabs[t][cj]
            J2 = _bayes_joint(F, c2, inst.channel_at(t), last_x[t], a.nx)
            _, sc2 = _bayes_decoder(J2, inst.rho_at(t))
            for li in range(ltabs.shape[0]):
                ltab = ltabs[li].reshape(a.ny, a.nm)
                Fn = _advance_forward(F, c2, inst.channel_at(t), ltab,
                                      inst.transition_at(t), last_x[t], a.nx)
                v, cs, ls = dfs(t + 1, Fn, acc + sc2)
                if v < best[0]:
                    best = (v, [cj] + cs, [li] + ls)
        return best

    best = (np.inf, None, None)
    for li in range(ltabs.shape[0]):
        ltab = ltabs[li].reshape(a.ny, a.nm)
        Fn = _advance_forward(F0, ctab, inst.channel_at(0), ltab,
                              inst.transition_at(0), last_x[0], a.nx)
        v, cs, ls = dfs(1, Fn, sc)
        if v < best[0]:
            best = (v, cs, [li] + ls)
    return best[0], [ci] + best[1], best[2]
