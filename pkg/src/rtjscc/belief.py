"""Information-state machinery: encoder beliefs and their transforms.

The encoder never observes the channel output, but because the memory
update rule is deterministic it can track a PMF over the receiver's memory
cell exactly.  Conditioned on the encoder's own history, that belief is a
deterministic function of the realized source path, so the joint law of
(source symbol, belief) is a *finitely supported* measure - a list of
weighted atoms.  This module implements those atom-states and the four
transforms the solvers are built from:

- ``channel_memory_joint``: given a belief b and a transmitted symbol z,
  the predicted joint PMF of (channel output, pre-update memory) is
  q(y, m) = P[z][y] * b(m), since the channel is memoryless and the output
  is conditionally independent of the memory given z.
- ``updated_memory_belief``: pushing q through a memory rule l gives the
  next belief b'(m') = sum of q(y, m) over cells with l(y, m) = m'.
- ``apply_encoder`` / ``apply_memory_update``: the same two maps lifted to
  atom-states (these lifts are linear in the state).
- ``stage_cost``: minimum expected distortion achievable by any decoder at
  a given state, together with the minimizing decoder table - for each
  (y, m) cell the decoder picks the reconstruction minimizing the expected
  distortion under the joint of (source symbol, y, m).

Atom-states are kept canonical: atoms below the weight floor are dropped,
atoms with equal (symbol, vector) merge, and atoms are sorted, so equal
states have bitwise-equal keys and memoization is sound.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import EmptyState, UncoveredSupportPair

MERGE_TOL = 1e-9
WEIGHT_FLOOR = 1e-12
KEY_DECIMALS = 12


def channel_memory_joint(belief: np.ndarray, z: int, channel: np.ndarray) -> np.ndarray:
    """Joint PMF over (channel output, receiver memory) after sending z.

    belief: length-nm PMF over the receiver memory; channel: nz-by-ny
    transition matrix. Returns an ny-by-nm matrix P[z][y] * belief[m].
    """
    return np.outer(channel[z], belief)


def updated_memory_belief(joint: np.ndarray, rule: np.ndarray) -> np.ndarray:
    """Belief over the memory after the receiver applies its update rule.

    joint: ny-by-nm PMF over (output, pre-update memory); rule: ny-by-nm
    integer table of new memory symbols.
    """
    nm = joint.shape[1]
    out = np.zeros(nm)
    np.add.at(out, rule.ravel(), joint.ravel())
    return out


# --- atom-states ----------------------------------------------------------


def _round_keys(vecs: np.ndarray) -> np.ndarray:
    # +0.0 collapses -0.0 so byte keys are canonical
    return np.round(vecs, KEY_DECIMALS) + 0.0


def _canonical_atoms(xs, vecs, weights, merge_tol):
    """Floor, renormalize, merge, sort, and quantize atoms.

    vecs is (n, d) with d the flattened vector length. Merging adds
    weights and takes the weight-average of the vectors. The final atoms
    are quantized to 12 decimals so that a canonical state is bitwise
    identical to every state within quantization distance of it; memoized
    values are then pure functions of the state key no matter which of
    several float-level-distinct ancestors produced the state first.
    """
    xs = np.asarray(xs, dtype=np.int64)
    vecs = np.asarray(vecs, dtype=float)
    weights = np.asarray(weights, dtype=float)

    keep = weights >= WEIGHT_FLOOR
    if not keep.any():
        raise EmptyState("all atoms fell below the weight floor")
    xs, vecs, weights = xs[keep], vecs[keep], weights[keep]
    weights = weights / weights.sum()

    rk = _round_keys(vecs)
    order = np.lexsort(tuple(rk[:, j] for j in range(rk.shape[1] - 1, -1, -1)) + (xs,))
    xs, vecs, weights, rk = xs[order], vecs[order], weights[order], rk[order]

    # single pass over the sorted atoms, merging runs that agree within tol
    out_x, out_v, out_w = [xs[0]], [vecs[0] * weights[0]], [weights[0]]
    ref_v = [vecs[0]]
    for i in range(1, len(xs)):
        same = (xs[i] == out_x[-1]
                and np.max(np.abs(vecs[i] - ref_v[-1])) <= merge_tol)
        if same:
            out_v[-1] = out_v[-1] + vecs[i] * weights[i]
            out_w[-1] += weights[i]
        else:
            out_x.append(xs[i])
            out_v.append(vecs[i] * weights[i])
            out_w.append(weights[i])
            ref_v.append(vecs[i])

    xs = np.array(out_x, dtype=np.int64)
    weights = np.array(out_w)
    vecs = np.array(out_v) / weights[:, None]

    vecs = _round_keys(vecs)
    weights = _round_keys(weights[:, None])[:, 0]

    # merging/quantization may shift sort keys; re-sort for a canonical order
    order = np.lexsort(tuple(vecs[:, j] for j in range(vecs.shape[1] - 1, -1, -1))
                       + (xs,))
    return xs[order], vecs[order], weights[order]


def _freeze(*arrays):
    for a in arrays:
        a.flags.writeable = False


def _atoms_key(xs, vecs, weights) -> bytes:
    # canonical atoms are already quantized, so raw bytes are the key:
    # key equality coincides with bitwise state equality
    return (struct.pack("<qq", len(xs), vecs.shape[1])
            + xs.tobytes() + vecs.tobytes() + weights.tobytes())


@dataclass(frozen=True)
class EncoderInfoState:
    """Finitely supported joint law of (source symbol, encoder belief).

    xs: (n,) source symbols; beliefs: (n, nm) memory PMFs; weights: (n,)
    positive, summing to 1. Canonical: no two atoms share (x, belief).
    """

    xs: np.ndarray
    beliefs: np.ndarray
    weights: np.ndarray

    @classmethod
    def from_atoms(cls, xs, beliefs, weights, merge_tol=MERGE_TOL):
        xs, vecs, w = _canonical_atoms(xs, np.asarray(beliefs, dtype=float), weights,
                                       merge_tol)
        _freeze(xs, vecs, w)
        return cls(xs, vecs, w)

    @property
    def n_atoms(self) -> int:
        return len(self.xs)

    @property
    def nm(self) -> int:
        return self.beliefs.shape[1]

    def key(self) -> bytes:
        return b"E" + _atoms_key(self.xs, self.beliefs, self.weights)


@dataclass(frozen=True)
class MemoryInfoState:
    """Finitely supported joint law of (source symbol, output/memory joint).

    xs: (n,) source symbols; joints: (n, ny, nm); weights: (n,).
    """

    xs: np.ndarray
    joints: np.ndarray
    weights: np.ndarray

    @classmethod
    def from_atoms(cls, xs, joints, weights, merge_tol=MERGE_TOL):
        joints = np.asarray(joints, dtype=float)
        n, ny, nm = joints.shape
        xs, vecs, w = _canonical_atoms(xs, joints.reshape(n, ny * nm), weights,
                                       merge_tol)
        vecs = vecs.reshape(len(xs), ny, nm)
        _freeze(xs, vecs, w)
        return cls(xs, vecs, w)

    @property
    def n_atoms(self) -> int:
        return len(self.xs)

    def key(self) -> bytes:
        n, ny, nm = self.joints.shape
        return (b"M" + struct.pack("<q", ny)
                + _atoms_key(self.xs, self.joints.reshape(n, ny * nm), self.weights))


def canonicalize(state, merge_tol=MERGE_TOL):
    """Re-canonicalize a state (idempotent on already-canonical states)."""
    if isinstance(state, EncoderInfoState):
        return EncoderInfoState.from_atoms(state.xs, state.beliefs, state.weights,
                                           merge_tol)
    if isinstance(state, MemoryInfoState):
        return MemoryInfoState.from_atoms(state.xs, state.joints, state.weights,
                                          merge_tol)
    raise TypeError(f"not an information state: {type(state)!r}")


def mix_states(alpha: float, a, b, merge_tol=MERGE_TOL):
    """Convex combination alpha*a + (1-alpha)*b as measures (atom union)."""
    if type(a) is not type(b):
        raise TypeError("cannot mix states of different kinds")
    xs = np.concatenate([a.xs, b.xs])
    weights = np.concatenate([alpha * a.weights, (1.0 - alpha) * b.weights])
    if isinstance(a, EncoderInfoState):
        vecs = np.concatenate([a.beliefs, b.beliefs])
        return EncoderInfoState.from_atoms(xs, vecs, weights, merge_tol)
    vecs = np.concatenate([a.joints, b.joints])
    return MemoryInfoState.from_atoms(xs, vecs, weights, merge_tol)


def initial_info_state(inst) -> EncoderInfoState:
    """State at the first stage: the memory starts at the known symbol m0,
    so every atom carries the same point-mass belief."""
    a = inst.alphabets
    support = np.flatnonzero(inst.initial > 0)
    beliefs = np.zeros((len(support), a.nm))
    beliefs[:, inst.m0] = 1.0
    return EncoderInfoState.from_atoms(support, beliefs, inst.initial[support])


# --- transforms -----------------------------------------------------------


def apply_encoder(state: EncoderInfoState, assignment, channel: np.ndarray,
                  merge_tol=MERGE_TOL) -> MemoryInfoState:
    """Evolve an encoder state under an encoding assignment.

    ``assignment`` gives one channel symbol per atom (the canonical state
    has one atom per distinct support pair). Linear in the state; the total
    weight is preserved.
    """
    assignment = np.asarray(assignment, dtype=np.int64)
    if assignment.shape != (state.n_atoms,):
        raise UncoveredSupportPair(
            f"assignment covers {assignment.shape} atoms, state has {state.n_atoms}")
    nz = channel.shape[0]
    if assignment.size and (assignment.min() < 0 or assignment.max() >= nz):
        raise UncoveredSupportPair("assignment contains an out-of-range channel symbol")
    joints = channel[assignment][:, :, None] * state.beliefs[:, None, :]
    return MemoryInfoState.from_atoms(state.xs, joints, state.weights, merge_tol)


def apply_memory_update(state: MemoryInfoState, rule: np.ndarray,
                        transition: np.ndarray, merge_tol=MERGE_TOL) -> EncoderInfoState:
    """Evolve a memory-update state into the next encoder state.

    Each atom's joint is pushed through the memory rule, and the source
    symbol branches according to the transition row. Linear in the state.
    """
    n, ny, nm = state.joints.shape
    nx = transition.shape[0]
    onehot = rule.reshape(-1, 1) == np.arange(nm)
    pushed = state.joints.reshape(n, ny * nm) @ onehot.astype(float)

    branch_w = state.weights[:, None] * transition[state.xs]   # (n, nx')
    mask = branch_w.ravel() > 0
    xs_new = np.tile(np.arange(nx, dtype=np.int64), n)[mask]
    beliefs_new = np.repeat(pushed, nx, axis=0)[mask]
    w_new = branch_w.ravel()[mask]
    return EncoderInfoState.from_atoms(xs_new, beliefs_new, w_new, merge_tol)


def stage_cost(state: MemoryInfoState, rho: np.ndarray):
    """Minimum expected distortion at a state and the decoder achieving it.

    Builds the joint J(x, y, m) carried by the state; for every (y, m) the
    best reconstruction is the argmin over xhat of sum_x rho[x][xhat] *
    J(x, y, m) (smallest index on ties), and the cost is the sum of the
    column minima. Cells with zero mass decode to 0 by convention.
    """
    nx = rho.shape[0]
    _, ny, nm = state.joints.shape
    J = np.zeros((nx, ny, nm))
    np.add.at(J, state.xs, state.joints * state.weights[:, None, None])

    D = np.tensordot(rho, J, axes=([0], [0]))          # (nxhat, ny, nm)
    decoder = np.argmin(D, axis=0).astype(np.int64)
    cost = float(D.min(axis=0).sum())
    decoder[J.sum(axis=0) == 0] = 0
    return cost, decoder


def stage_costs_over_assignments(state: EncoderInfoState, assignments: np.ndarray,
                                 channel: np.ndarray, rho: np.ndarray,
                                 chunk: int = 4096) -> np.ndarray:
    """stage_cost of apply_encoder(state, c) for a whole batch of assignments.

    assignments: (C, n_atoms) integer array. Returns the (C,) cost vector.
    Chunked so memory stays bounded; chunk boundaries are fixed, so results
    do not depend on how callers schedule the chunks.
    """
    n = state.n_atoms
    nz, ny = channel.shape
    nm = state.nm
    nx = rho.shape[0]
    # per-atom joint for every possible channel symbol: (n, nz, ny, nm)
    nu_all = channel[None, :, :, None] * state.beliefs[:, None, None, :]
    nu_all = nu_all * state.weights[:, None, None, None]
    by_x = [np.flatnonzero(state.xs == x) for x in range(nx)]

    C = assignments.shape[0]
    costs = np.empty(C)
    rows = np.arange(n)
    for lo in range(0, C, chunk):
        sel = nu_all[rows, assignments[lo:lo + chunk]]     # (c, n, ny, nm)
        J = np.zeros((sel.shape[0], nx, ny, nm))
        for x, idx in enumerate(by_x):
            if idx.size:
                J[:, x] = sel[:, idx].sum(axis=1)
        D = np.einsum("cxym,xk->ckym", J, rho)
        costs[lo:lo + chunk] = D.min(axis=1).sum(axis=(1, 2))
    return costs


# --- encoding rules as reusable tables -------------------------------------


class EncoderTable:
    """Encoding rule stored as (source symbol, belief) -> channel symbol.

    Lookup is by nearest stored belief for the given source symbol
    (infinity norm, first stored entry on ties). A lookup counts as a miss
    when the nearest distance exceeds the tolerance; callers decide whether
    to accept the nearest entry anyway or to extend the table.
    """

    def __init__(self):
        self._by_x: dict[int, list[tuple[np.ndarray, int]]] = {}

    def add(self, x: int, belief: np.ndarray, z: int, tol: float = MERGE_TOL):
        """Store an entry unless an equivalent one (within tol) exists."""
        entries = self._by_x.setdefault(int(x), [])
        for b, _ in entries:
            if np.max(np.abs(b - belief)) <= tol:
                return
        entries.append((np.array(belief, dtype=float), int(z)))

    def lookup(self, x: int, belief: np.ndarray):
        """Return (z, distance) of the nearest entry, or (None, inf)."""
        entries = self._by_x.get(int(x), [])
        best_z, best_d = None, np.inf
        for b, z in entries:
            d = float(np.max(np.abs(b - belief)))
            if d < best_d:
                best_z, best_d = z, d
        return best_z, best_d

    def resolve(self, state: EncoderInfoState, tol: float = MERGE_TOL):
        """Per-atom assignment for a state plus a miss mask (distance > tol).

        Raises UncoveredSupportPair if some atom's source symbol has no
        entry at all (no nearest candidate exists).
        """
        zs = np.empty(state.n_atoms, dtype=np.int64)
        miss = np.zeros(state.n_atoms, dtype=bool)
        for i in range(state.n_atoms):
            z, d = self.lookup(int(state.xs[i]), state.beliefs[i])
            if z is None:
                raise UncoveredSupportPair(
                    f"no encoding entry for source symbol {int(state.xs[i])}")
            zs[i] = z
            miss[i] = d > tol
        return zs, miss

    def entries(self):
        """All stored entries as (x, belief, z) triples, sorted by symbol."""
        out = []
        for x in sorted(self._by_x):
            for b, z in self._by_x[x]:
                out.append((x, b, z))
        return out

    def __len__(self):
        return sum(len(v) for v in self._by_x.values())
