"""Jointly optimal real-time encoding, decoding and memory-update design
for Markov sources sent over discrete memoryless channels to finite-memory
receivers, with an exhaustive oracle and a seeded simulator for
verification."""

__version__ = "0.1.0"

from .belief import (
    EncoderInfoState,
    EncoderTable,
    MemoryInfoState,
    apply_encoder,
    apply_memory_update,
    canonicalize,
    channel_memory_joint,
    initial_info_state,
    mix_states,
    stage_cost,
    updated_memory_belief,
)
from .model import (
    Alphabets,
    ChannelModel,
    DiscountedHorizon,
    DistortionModel,
    FiniteHorizon,
    ProblemInstance,
    SourceModel,
    ValidatedInstance,
    load_instance,
    serialize,
    validate,
)
from .oracle import (
    PrimitiveDesign,
    bayes_decoders_for,
    brute_force_optimum,
    design_count,
    evaluate_exact,
)
from .sim import SimReport, simulate
from .solver_finite import (
    SolveResult,
    StageRules,
    enumerate_enc_assignments,
    enumerate_memory_rules,
    solve_finite,
    value_of_design,
)
from .solver_infinite import (
    DiscountedResult,
    StationaryDesign,
    evaluate_stationary,
    solve_discounted,
    truncation_horizon,
)

__all__ = [
    "Alphabets", "ChannelModel", "DiscountedHorizon", "DiscountedResult",
    "DistortionModel", "EncoderInfoState", "EncoderTable", "FiniteHorizon",
    "MemoryInfoState", "PrimitiveDesign", "ProblemInstance", "SimReport",
    "SolveResult", "SourceModel", "StageRules", "StationaryDesign",
    "ValidatedInstance", "apply_encoder", "apply_memory_update",
    "bayes_decoders_for", "brute_force_optimum", "canonicalize",
    "channel_memory_joint", "design_count", "enumerate_enc_assignments",
    "enumerate_memory_rules", "evaluate_exact", "evaluate_stationary",
    "initial_info_state", "load_instance", "mix_states", "serialize",
    "simulate", "solve_discounted", "solve_finite", "stage_cost",
    "truncation_horizon", "updated_memory_belief", "validate",
    "value_of_design",
]
