"""Shared builders and independent reference computations for the tests.

The reference computations here deliberately avoid the package's
information-state machinery: conditionals are produced by enumerating
channel-output trajectories, and optima by enumerating rule tables, so
they can certify the fast paths.
"""

import itertools

import numpy as np

from rtjscc import (
    Alphabets,
    ChannelModel,
    DiscountedHorizon,
    DistortionModel,
    FiniteHorizon,
    PrimitiveDesign,
    ProblemInstance,
    SourceModel,
    design_count,
    evaluate_exact,
    validate,
)


def rand_stochastic(rng, rows, cols, floor=1e-3):
    m = rng.random((rows, cols)) + floor
    return m / m.sum(axis=1, keepdims=True)


def hamming(n):
    return (1.0 - np.eye(n)).tolist()


def make_instance(nx=2, nz=2, ny=2, nm=2, initial=None, transition=None,
                  channel=None, rho=None, horizon=None, m0=0):
    initial = [1.0 / nx] * nx if initial is None else initial
    transition = np.eye(nx).tolist() if transition is None else transition
    if channel is None:
        channel = np.eye(ny)[np.arange(nz) % ny].tolist()   # z -> z mod ny
    rho = hamming(nx) if rho is None else rho
    horizon = FiniteHorizon(1) if horizon is None else horizon
    return validate(ProblemInstance(
        alphabets=Alphabets(nx, nz, ny, nm),
        source=SourceModel(initial, transition),
        channel=ChannelModel(channel),
        distortion=DistortionModel(rho),
        horizon=horizon, m0=m0))


def rand_finite_instance(rng, nx, nz, ny, nm, T):
    return make_instance(
        nx, nz, ny, nm,
        initial=rand_stochastic(rng, 1, nx)[0].tolist(),
        transition=rand_stochastic(rng, nx, nx).tolist(),
        channel=rand_stochastic(rng, nz, ny).tolist(),
        rho=rng.random((nx, nx)).tolist(),
        horizon=FiniteHorizon(T))


def stationary_dist(A):
    A = np.asarray(A)
    evals, evecs = np.linalg.eig(A.T)
    i = int(np.argmin(np.abs(evals - 1.0)))
    p = np.real(evecs[:, i])
    p = np.abs(p)
    return p / p.sum()


def feasible_combos(budget, sizes=(2, 3), horizons=(1, 2, 3)):
    """All (nx, nz, ny, nm, T) whose brute-force design count fits the budget."""
    out = []
    for nx, nz, ny, nm in itertools.product(sizes, repeat=4):
        for T in horizons:
            inst = make_instance(nx, nz, ny, nm, horizon=FiniteHorizon(T))
            if design_count(inst) <= budget:
                out.append((nx, nz, ny, nm, T))
    return out


def rand_primitive_design(rng, inst):
    """Uniformly random primitive design (encoders, memory rules, decoders)."""
    a = inst.alphabets
    T = inst.T
    enc = [rng.integers(0, a.nz, size=a.nx ** (t + 1)) for t in range(T)]
    memory = [rng.integers(0, a.nm, size=(a.ny, a.nm)) for _ in range(T - 1)]
    decoders = [rng.integers(0, a.nx, size=(a.ny, a.nm)) for _ in range(T)]
    return PrimitiveDesign(enc, memory, decoders)


def prefix_index(path, nx):
    ix = 0
    for x in path:
        ix = ix * nx + x
    return ix


def enumerate_trajectory_conditionals(inst, enc, memory, x_path):
    """Receiver-side conditionals given a realized source path, by brute force.

    For each stage t (1-based values, 0-based lists) enumerates every
    channel-output history, weighting by the product of channel
    probabilities, and classifies outcomes to produce:

    - joints[t]: Pr(Y_t = y, M_{t-1} = m | source path, sent symbols)
    - memories[t]: Pr(M_t = m | ...) for t < T (after the stage-t update)

    Independent of the package's belief recursions.
    """
    a = inst.alphabets
    T = len(x_path)
    zs = [int(np.asarray(enc[t]).ravel()[prefix_index(x_path[:t + 1], a.nx)])
          for t in range(T)]
    joints = []
    memories = []
    for t in range(T):
        joint = np.zeros((a.ny, a.nm))
        mem = np.zeros(a.nm)
        for ys in itertools.product(range(a.ny), repeat=t + 1):
            w = 1.0
            m = inst.m0
            for s in range(t + 1):
                w *= inst.channel_at(s)[zs[s], ys[s]]
                if s < t:
                    m = int(np.asarray(memory[s])[ys[s], m])
            joint[ys[t], m] += w
            if t < T - 1:
                m_next = int(np.asarray(memory[t])[ys[t], m])
                mem[m_next] += w
        joints.append(joint)
        if t < T - 1:
            memories.append(mem)
    return zs, joints, memories


def all_decoder_tables(nx, ny, nm):
    """Every decoder table, lexicographic over row-major (y, m) cells."""
    for flat in itertools.product(range(nx), repeat=ny * nm):
        yield np.array(flat, dtype=np.int64).reshape(ny, nm)


def brute_force_with_enumerated_decoders(inst):
    """Optimum over (encoders, memory rules, decoders), decoders enumerated
    explicitly rather than derived; exponential, tiny instances only."""
    a = inst.alphabets
    T = inst.T
    best = np.inf
    enc_spaces = [list(itertools.product(range(a.nz), repeat=a.nx ** (t + 1)))
                  for t in range(T)]
    mem_space = list(itertools.product(range(a.nm), repeat=a.ny * a.nm))
    dec_space = list(itertools.product(range(a.nx), repeat=a.ny * a.nm))
    for encs in itertools.product(*enc_spaces):
        for mems in itertools.product(mem_space, repeat=T - 1):
            for decs in itertools.product(dec_space, repeat=T):
                design = PrimitiveDesign(
                    enc=[np.array(e) for e in encs],
                    memory=[np.array(m).reshape(a.ny, a.nm) for m in mems],
                    decoders=[np.array(d).reshape(a.ny, a.nm) for d in decs])
                v = evaluate_exact(design, inst)
                if v < best:
                    best = v
    return best


def lossless_chain_design(inst):
    """Relay the newest source symbol; decode the channel output directly.

    Zero distortion whenever the channel is the identity and the distortion
    table vanishes on the diagonal.
    """
    a = inst.alphabets
    T = inst.T
    enc = [np.arange(a.nx ** (t + 1)) % a.nx for t in range(T)]
    memory = [np.zeros((a.ny, a.nm), dtype=np.int64) for _ in range(T - 1)]
    decoders = [np.tile(np.arange(a.ny)[:, None], (1, a.nm))[:a.ny, :a.nm]
                for _ in range(T)]
    return PrimitiveDesign(enc, memory, decoders)


def uninformative_channel_value(inst):
    """Closed-form optimum when the channel output carries no information:
    at each stage the best decoder acts on the prior source marginal."""
    p = inst.initial.copy()
    total = 0.0
    for t in range(inst.T):
        total += float(np.min(p @ inst.rho_at(t)))
        if t < inst.T - 1:
            p = p @ inst.transition_at(t)
    return total
