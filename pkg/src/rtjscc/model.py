"""Problem instances: alphabets, source statistics, channel, distortion, horizon.

An instance describes a first-order Markov source over a finite alphabet,
a discrete memoryless channel, a per-stage distortion table, the receiver's
memory alphabet, and either a finite horizon or a discounted infinite
horizon.  Instances are loaded from JSON, validated once, and then shared
freely: a ValidatedInstance is immutable (its arrays are write-protected),
so concurrent workers may use it without synchronization.

All symbols are 0-based integer indices.  The receiver memory starts at a
known symbol ``m0`` (default 0).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .errors import (
    BadHorizon,
    DimensionMismatch,
    NegativeEntry,
    NonStochasticRow,
    ParseError,
    UnknownField,
)

STOCHASTIC_TOL = 1e-9


@dataclass(frozen=True)
class Alphabets:
    """Sizes of the source (nx), channel input (nz), channel output (ny)
    and receiver memory (nm) alphabets."""

    nx: int
    nz: int
    ny: int
    nm: int


@dataclass(frozen=True)
class FiniteHorizon:
    T: int


@dataclass(frozen=True)
class DiscountedHorizon:
    beta: float
    epsilon: float


Horizon = Union[FiniteHorizon, DiscountedHorizon]


@dataclass(frozen=True)
class SourceModel:
    """Initial PMF of the source plus its transition matrix.

    ``transition`` is either a single row-stochastic nx*nx matrix
    (time-invariant) or a list of T-1 such matrices, one per step between
    consecutive stages.
    """

    initial: list
    transition: list
    per_stage: bool = False


@dataclass(frozen=True)
class ChannelModel:
    """Channel transition matrix: matrix[z][y] = Pr(Y=y | Z=z).

    Either a single nz*ny matrix or a list of T matrices.
    """

    matrix: list
    per_stage: bool = False


@dataclass(frozen=True)
class DistortionModel:
    """Nonnegative distortion table rho[x][xhat], single or per stage."""

    rho: list
    per_stage: bool = False


@dataclass(frozen=True)
class ProblemInstance:
    """Raw, unvalidated problem description as loaded from a file."""

    alphabets: Alphabets
    source: SourceModel
    channel: ChannelModel
    distortion: DistortionModel
    horizon: Horizon
    m0: int = 0


class ValidatedInstance:
    """Checked, normalized, immutable instance.

    Rows of every probability matrix are renormalized exactly (divided by
    their float sum) after passing the 1e-9 stochasticity check, so
    downstream arithmetic sees rows that sum to 1 up to one rounding.
    """

    def __init__(self, alphabets, initial, transitions, channels, rhos,
                 horizon, m0, source_per_stage, channel_per_stage, rho_per_stage):
        self.alphabets = alphabets
        self.initial = initial
        self._transitions = transitions
        self._channels = channels
        self._rhos = rhos
        self.horizon = horizon
        self.m0 = m0
        self._source_per_stage = source_per_stage
        self._channel_per_stage = channel_per_stage
        self._rho_per_stage = rho_per_stage
        self.rho_max = float(max(r.max() for r in rhos)) if rhos else 0.0
        for arr in (initial, *transitions, *channels, *rhos):
            arr.flags.writeable = False

    @property
    def time_invariant(self) -> bool:
        return not (self._source_per_stage or self._channel_per_stage
                    or self._rho_per_stage)

    @property
    def T(self) -> int:
        if not isinstance(self.horizon, FiniteHorizon):
            raise BadHorizon("finite horizon required")
        return self.horizon.T

    def transition_at(self, t: int) -> np.ndarray:
        """Transition matrix applied between stages t and t+1 (0-based t)."""
        return self._transitions[t] if self._source_per_stage else self._transitions[0]

    def channel_at(self, t: int) -> np.ndarray:
        return self._channels[t] if self._channel_per_stage else self._channels[0]

    def rho_at(self, t: int) -> np.ndarray:
        return self._rhos[t] if self._rho_per_stage else self._rhos[0]


def _as_matrix(raw, name):
    try:
        arr = np.asarray(raw, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{name}: not a numeric array: {exc}") from None
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name}: expected a matrix, got ndim={arr.ndim}")
    return arr.copy()


def _check_shape(arr, shape, name):
    if arr.shape != shape:
        raise DimensionMismatch(f"{name}: expected shape {shape}, got {arr.shape}")


def _check_stochastic(arr, name):
    if np.any(arr < 0):
        bad = np.argwhere(arr < 0)[0]
        raise NegativeEntry(f"{name}: negative entry at {tuple(bad)}")
    sums = arr.sum(axis=1)
    for i, s in enumerate(sums):
        if not abs(s - 1.0) <= STOCHASTIC_TOL:
            raise NonStochasticRow(f"{name}: row {i} sums to {s!r}")
    # exact renormalization so stochasticity drift cannot accumulate over T stages
    arr /= arr.sum(axis=1, keepdims=True)
    return arr


def _matrix_list(raw, per_stage, name):
    if per_stage:
        return [_as_matrix(m, f"{name}[{i}]") for i, m in enumerate(raw)]
    return [_as_matrix(raw, name)]


def validate(inst) -> ValidatedInstance:
    """Check every invariant of an instance and return the normalized form.

    Idempotent: a ValidatedInstance passes through unchanged.
    """
    if isinstance(inst, ValidatedInstance):
        return inst

    a = inst.alphabets
    for field in ("nx", "nz", "ny", "nm"):
        size = getattr(a, field)
        if not isinstance(size, int) or size < 1:
            raise DimensionMismatch(f"alphabets.{field} must be an integer >= 1, got {size!r}")

    horizon = inst.horizon
    if isinstance(horizon, FiniteHorizon):
        if not isinstance(horizon.T, int) or horizon.T < 1:
            raise BadHorizon(f"finite horizon T must be an integer >= 1, got {horizon.T!r}")
        T = horizon.T
    elif isinstance(horizon, DiscountedHorizon):
        if not (0.0 < horizon.beta < 1.0):
            raise BadHorizon(f"discount factor must lie in (0, 1), got {horizon.beta!r}")
        if not horizon.epsilon > 0:
            raise BadHorizon(f"epsilon must be > 0, got {horizon.epsilon!r}")
        if inst.source.per_stage or inst.channel.per_stage or inst.distortion.per_stage:
            raise DimensionMismatch(
                "discounted horizon requires time-invariant source/channel/distortion")
        T = None
    else:
        raise BadHorizon(f"unrecognized horizon {horizon!r}")

    initial = np.asarray(inst.source.initial, dtype=float).copy()
    if initial.shape != (a.nx,):
        raise DimensionMismatch(
            f"source.initial: expected length {a.nx}, got shape {initial.shape}")
    if np.any(initial < 0):
        raise NegativeEntry("source.initial: negative entry")
    s = initial.sum()
    if not abs(s - 1.0) <= STOCHASTIC_TOL:
        raise NonStochasticRow(f"source.initial sums to {s!r}")
    initial /= initial.sum()

    transitions = _matrix_list(inst.source.transition, inst.source.per_stage,
                               "source.transition")
    if inst.source.per_stage and T is not None and len(transitions) != T - 1:
        raise DimensionMismatch(
            f"source.transition: expected {T - 1} per-stage matrices, got {len(transitions)}")
    for i, m in enumerate(transitions):
        _check_shape(m, (a.nx, a.nx), f"source.transition[{i}]")
        _check_stochastic(m, f"source.transition[{i}]")

    channels = _matrix_list(inst.channel.matrix, inst.channel.per_stage, "channel.matrix")
    if inst.channel.per_stage and T is not None and len(channels) != T:
        raise DimensionMismatch(
            f"channel.matrix: expected {T} per-stage matrices, got {len(channels)}")
    for i, m in enumerate(channels):
        _check_shape(m, (a.nz, a.ny), f"channel.matrix[{i}]")
        _check_stochastic(m, f"channel.matrix[{i}]")

    rhos = _matrix_list(inst.distortion.rho, inst.distortion.per_stage, "distortion.rho")
    if inst.distortion.per_stage and T is not None and len(rhos) != T:
        raise DimensionMismatch(
            f"distortion.rho: expected {T} per-stage matrices, got {len(rhos)}")
    for i, m in enumerate(rhos):
        _check_shape(m, (a.nx, a.nx), f"distortion.rho[{i}]")
        if np.any(m < 0) or not np.all(np.isfinite(m)):
            raise NegativeEntry(f"distortion.rho[{i}]: entries must be finite and >= 0")

    if not isinstance(inst.m0, int) or not (0 <= inst.m0 < a.nm):
        raise DimensionMismatch(f"m0 must be an integer in [0, {a.nm}), got {inst.m0!r}")

    return ValidatedInstance(
        a, initial, transitions, channels, rhos, horizon, inst.m0,
        inst.source.per_stage, inst.channel.per_stage, inst.distortion.per_stage)


# --- JSON instance files -------------------------------------------------

_TOP_KEYS = {"alphabets", "source", "channel", "distortion", "horizon", "m0"}


def _require_keys(obj, allowed, required, where):
    if not isinstance(obj, dict):
        raise ParseError(f"{where}: expected an object")
    unknown = set(obj) - allowed
    if unknown:
        raise UnknownField(f"{where}: unknown field(s) {sorted(unknown)}")
    missing = required - set(obj)
    if missing:
        raise ParseError(f"{where}: missing field(s) {sorted(missing)}")


def _nesting_depth(raw):
    depth = 0
    node = raw
    while isinstance(node, list):
        depth += 1
        node = node[0] if node else None
    return depth


def _matrix_or_stages(raw, where):
    """Depth 2 means one matrix, depth 3 a per-stage list of matrices."""
    depth = _nesting_depth(raw)
    if depth == 2:
        return raw, False
    if depth == 3:
        return raw, True
    raise ParseError(f"{where}: expected a matrix or a list of matrices")


def parse_instance(obj: dict) -> ProblemInstance:
    """Build a ProblemInstance from a decoded JSON object (strict schema)."""
    _require_keys(obj, _TOP_KEYS, _TOP_KEYS - {"m0"}, "instance")

    al = obj["alphabets"]
    _require_keys(al, {"nx", "nz", "ny", "nm"}, {"nx", "nz", "ny", "nm"}, "alphabets")
    alphabets = Alphabets(al["nx"], al["nz"], al["ny"], al["nm"])

    src = obj["source"]
    _require_keys(src, {"initial", "transition"}, {"initial", "transition"}, "source")
    trans, trans_ps = _matrix_or_stages(src["transition"], "source.transition")
    source = SourceModel(src["initial"], trans, trans_ps)

    ch = obj["channel"]
    _require_keys(ch, {"matrix"}, {"matrix"}, "channel")
    mat, mat_ps = _matrix_or_stages(ch["matrix"], "channel.matrix")
    channel = ChannelModel(mat, mat_ps)

    di = obj["distortion"]
    _require_keys(di, {"rho"}, {"rho"}, "distortion")
    rho, rho_ps = _matrix_or_stages(di["rho"], "distortion.rho")
    distortion = DistortionModel(rho, rho_ps)

    hz = obj["horizon"]
    if not isinstance(hz, dict) or len(hz) != 1:
        raise ParseError("horizon: expected exactly one of 'finite' or 'discounted'")
    if "finite" in hz:
        horizon: Horizon = FiniteHorizon(hz["finite"])
    elif "discounted" in hz:
        d = hz["discounted"]
        _require_keys(d, {"beta", "epsilon"}, {"beta", "epsilon"}, "horizon.discounted")
        horizon = DiscountedHorizon(d["beta"], d["epsilon"])
    else:
        raise UnknownField(f"horizon: unknown field(s) {sorted(hz)}")

    m0 = obj.get("m0", 0)
    if not isinstance(m0, int):
        raise ParseError(f"m0: expected an integer, got {m0!r}")

    return ProblemInstance(alphabets, source, channel, distortion, horizon, m0)


def load_instance(path) -> ProblemInstance:
    """Load a JSON instance file. Unknown fields are rejected."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return parse_instance(obj)


def serialize(inst: ProblemInstance) -> str:
    """JSON form of an instance; load_instance(serialize(i)) round-trips."""
    a = inst.alphabets
    obj = {
        "alphabets": {"nx": a.nx, "nz": a.nz, "ny": a.ny, "nm": a.nm},
        "source": {"initial": inst.source.initial,
                   "transition": inst.source.transition},
        "channel": {"matrix": inst.channel.matrix},
        "distortion": {"rho": inst.distortion.rho},
        "horizon": ({"finite": inst.horizon.T}
                    if isinstance(inst.horizon, FiniteHorizon)
                    else {"discounted": {"beta": inst.horizon.beta,
                                         "epsilon": inst.horizon.epsilon}}),
        "m0": inst.m0,
    }
    return json.dumps(obj, indent=2)
