"""Command-line entry point: validate | solve | oracle | simulate.

Each command prints a single JSON report on stdout (for scripting) and a
one-line human summary on stderr. Exit codes: 0 success, 1 I/O, 2
validation, 3 search-space refusal, 4 internal assertion.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .errors import (
    ClosureCapExceeded,
    InternalError,
    ParseError,
    SearchSpaceExceeded,
    UnknownField,
    ValidationError,
)
from .model import (
    DiscountedHorizon,
    FiniteHorizon,
    load_instance,
    validate,
)
from .oracle import DEFAULT_DESIGN_CAP, PrimitiveDesign, brute_force_optimum
from .sim import simulate
from .solver_finite import DEFAULT_CAP, solve_finite
from .solver_infinite import solve_discounted


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return obj


def _digest(path) -> str:
    with open(path, "rb") as fh:
        return "sha256:" + hashlib.sha256(fh.read()).hexdigest()


def _emit(report, out_path, summary):
    text = json.dumps(_jsonable(report), indent=2)
    print(text)
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    print(summary, file=sys.stderr)


def _report(command, path, results, started):
    return {
        "version": __version__,
        "command": command,
        "instance_digest": _digest(path),
        "results": results,
        "timings": {"total_s": time.perf_counter() - started},
    }


def _default_threads():
    env = os.environ.get("RTJSCC_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def _add_common(p):
    p.add_argument("instance", help="path to a JSON instance file")
    p.add_argument("--threads", type=int, default=_default_threads(),
                   help="worker count (results are thread-count independent)")
    p.add_argument("--out", default=None, help="also write the JSON report here")


def build_parser():
    ap = argparse.ArgumentParser(
        prog="rtjscc",
        description="Jointly optimal real-time coding for Markov sources over "
                    "memoryless channels with finite-memory receivers")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check an instance file")
    p.add_argument("instance")
    p.add_argument("--out", default=None)

    p = sub.add_parser("solve", help="solve an instance (finite or discounted)")
    _add_common(p)
    p.add_argument("--cap", type=int, default=DEFAULT_CAP,
                   help="per-node enumeration cap")
    p.add_argument("--tol", type=float, default=1e-9,
                   help="atom merge tolerance")

    p = sub.add_parser("oracle", help="brute-force optimum on the primitive domains")
    _add_common(p)
    p.add_argument("--cap", type=int, default=DEFAULT_DESIGN_CAP,
                   help="total design-count cap")
    p.add_argument("--cross-check", action="store_true",
                   help="also run the solver and print the difference")

    p = sub.add_parser("simulate", help="Monte Carlo estimate of a design's value")
    _add_common(p)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--from-solve", action="store_true",
                       help="solve first, then simulate the optimal design")
    group.add_argument("--design", default=None,
                       help="path to a JSON design file (primitive rules)")
    p.add_argument("-n", "--trajectories", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--log", default=None, help="write a per-stage trajectory CSV")
    return ap


def load_design(path, inst) -> PrimitiveDesign:
    """Read a primitive design file: flat per-stage encoder tables over
    source prefixes plus (ny x nm) memory and decoder tables."""
    try:
        obj = json.loads(open(path, encoding="utf-8").read())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    if not isinstance(obj, dict) or set(obj) != {"design"}:
        raise UnknownField(f"{path}: expected a single top-level 'design' object")
    d = obj["design"]
    if not isinstance(d, dict) or set(d) - {"enc", "memory", "decoders"}:
        raise UnknownField(f"{path}: design fields are enc, memory, decoders")
    for key in ("enc", "memory", "decoders"):
        if key not in d:
            raise ParseError(f"{path}: design is missing '{key}'")
    return PrimitiveDesign(
        enc=[np.asarray(tab, dtype=np.int64) for tab in d["enc"]],
        memory=[np.asarray(tab, dtype=np.int64) for tab in d["memory"]],
        decoders=[np.asarray(tab, dtype=np.int64) for tab in d["decoders"]])


def _stage_payload(st):
    return {
        "t": st.t,
        "support": [[int(st.pi.xs[i]), st.pi.beliefs[i].tolist()]
                    for i in range(st.pi.n_atoms)],
        "enc": st.enc,
        "memory_rule": st.memory,
        "decoder": st.decoder,
        "stage_cost": st.stage_cost_value,
    }


def cmd_validate(args):
    started = time.perf_counter()
    inst = validate(load_instance(args.instance))
    a = inst.alphabets
    results = {
        "valid": True,
        "alphabets": {"nx": a.nx, "nz": a.nz, "ny": a.ny, "nm": a.nm},
        "horizon": ({"finite": inst.T} if isinstance(inst.horizon, FiniteHorizon)
                    else {"discounted": {"beta": inst.horizon.beta,
                                         "epsilon": inst.horizon.epsilon}}),
        "rho_max": inst.rho_max,
        "time_invariant": inst.time_invariant,
    }
    _emit(_report("validate", args.instance, results, started),
          args.out, f"valid instance ({args.instance})")
    return 0


def cmd_solve(args):
    started = time.perf_counter()
    inst = validate(load_instance(args.instance))
    if isinstance(inst.horizon, DiscountedHorizon):
        res = solve_discounted(inst, cap=args.cap, threads=args.threads,
                               merge_tol=args.tol)
        results = {
            "mode": "discounted",
            "value": res.value,
            "epsilon_bound": res.epsilon_bound,
            "truncation_T": res.truncation_T,
            "stationary": {
                "encoder_entries": [[x, b.tolist(), z]
                                    for x, b, z in res.stationary.encoder.entries()],
                "memory_rule": res.stationary.memory,
            },
            "stationary_value": res.stationary_value,
            "gap": res.gap,
            "gap_within_epsilon": res.gap_within_epsilon,
            "diagnostics": {k: v for k, v in res.diagnostics.items()
                            if k != "wall_time"},
        }
        summary = (f"value {res.value:.9g} (epsilon {res.epsilon_bound}, "
                   f"T {res.truncation_T}, gap {res.gap:.3g})")
    else:
        res = solve_finite(inst, cap=args.cap, threads=args.threads,
                           merge_tol=args.tol)
        results = {
            "mode": "finite",
            "value": res.value,
            "stages": [_stage_payload(st) for st in res.stages],
            "states_explored": res.states_explored,
            "atoms_max": res.atoms_max,
        }
        summary = (f"value {res.value:.9g} over {inst.T} stages "
                   f"({res.states_explored} states)")
    _emit(_report("solve", args.instance, results, started), args.out, summary)
    return 0


def cmd_oracle(args):
    started = time.perf_counter()
    inst = validate(load_instance(args.instance))
    value, design = brute_force_optimum(inst, cap=args.cap, threads=args.threads)
    results = {
        "value": value,
        "design": {
            "enc": [tab for tab in design.enc],
            "memory": [tab for tab in design.memory],
            "decoders": [tab for tab in design.decoders],
        },
    }
    summary = f"brute-force optimum {value:.9g}"
    if args.cross_check:
        solved = solve_finite(inst, threads=args.threads)
        results["cross_check"] = {
            "solver_value": solved.value,
            "abs_diff": abs(solved.value - value),
        }
        summary += f" | solver {solved.value:.9g} | diff {abs(solved.value - value):.3e}"
    _emit(_report("oracle", args.instance, results, started), args.out, summary)
    return 0


def cmd_simulate(args):
    started = time.perf_counter()
    inst = validate(load_instance(args.instance))
    results = {}
    if args.from_solve:
        if isinstance(inst.horizon, DiscountedHorizon):
            solved = solve_discounted(inst, threads=args.threads)
            design = solved.stationary
            results["solver_value"] = solved.value
        else:
            solved = solve_finite(inst, threads=args.threads)
            design = solved.stages
            results["solver_value"] = solved.value
    else:
        design = load_design(args.design, inst)
    report = simulate(design, inst, args.trajectories, args.seed,
                      log_path=args.log, threads=args.threads)
    results.update({
        "n": report.n,
        "mean": report.mean,
        "std_err": report.std_err,
        "seed": report.seed,
        "per_stage_means": report.per_stage_means,
        "std_err_degenerate": report.std_err_degenerate,
    })
    _emit(_report("simulate", args.instance, results, started), args.out,
          f"mean {report.mean:.9g} +/- {report.std_err:.3g} (n={report.n})")
    return 0


_COMMANDS = {
    "validate": cmd_validate,
    "solve": cmd_solve,
    "oracle": cmd_oracle,
    "simulate": cmd_simulate,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (SearchSpaceExceeded, ClosureCapExceeded) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (InternalError, AssertionError) as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 4


def console_main():
    raise SystemExit(main())


if __name__ == "__main__":
    console_main()
