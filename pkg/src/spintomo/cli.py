"""Command-line pipelines over JSON files.

Exit status is 0 on success, 1 for invalid input and 2 for numerical
failures; errors are reported as a JSON object on standard error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import io
from .basis import complete_basis, decompose
from .bipartite import JointRecord, product_settings, reconstruct_bipartite, sample_joint_record, simulate_joint_record
from .decoherence import evolve_numeric, evolve_state
from .errors import NumericalError, SpinTomoError, ValidationError
from .measurement import sample_record, simulate_record
from .spin import SpinLength
from .tomography import (
    PAPER_SPIN1_FIVE,
    build_design_matrix,
    consistency_residuals,
    fibonacci_hemisphere,
    jittered_directions,
    left_null_space,
    match_five_directions,
    observed_moments,
    reconstruct_linear,
)

PRESETS = ("paper-spin1-five", "hemisphere", "jittered:<seed>", "hemisphere:<count>")


def resolve_directions(choice: str | None, l: SpinLength):
    """Preset name or path to a directions file; default depends on the spin."""
    if choice is None:
        choice = "paper-spin1-five" if l.two_l == 2 else "hemisphere"
    if choice == "paper-spin1-five":
        if l.two_l != 2:
            raise ValidationError("preset paper-spin1-five is only defined for spin 1")
        return list(PAPER_SPIN1_FIVE)
    if choice == "hemisphere":
        return fibonacci_hemisphere(2 * l.two_l + 1)
    if choice.startswith("hemisphere:"):
        return fibonacci_hemisphere(int(choice.split(":", 1)[1]))
    if choice.startswith("jittered:"):
        seed = int(choice.split(":", 1)[1])
        return jittered_directions(l, np.random.default_rng(seed))
    path = Path(choice)
    if not path.exists():
        raise ValidationError(f"unknown direction preset or missing file: {choice} (presets: {', '.join(PRESETS)})")
    return io.directions_from_json(io.read_json(path))


def _load(path):
    if path is None:
        return json.load(sys.stdin)
    return io.read_json(path)


def cmd_basis(args) -> dict:
    if args.two_l is None:
        raise ValidationError("basis requires --two-l")
    return io.basis_to_json(complete_basis(SpinLength(args.two_l)))


def cmd_simulate(args) -> dict:
    rho, spins = io.state_from_json(_load(args.input))
    if isinstance(spins, tuple):
        l_a, l_b = spins
        settings = product_settings(resolve_directions(args.directions, l_a),
                                    resolve_directions(args.directions, l_b))
        return io.joint_record_to_json(simulate_joint_record(rho, l_a, l_b, settings))
    _check_two_l(args, spins)
    return io.record_to_json(simulate_record(rho, resolve_directions(args.directions, spins)))


def cmd_sample(args) -> dict:
    record = io.any_record_from_json(_load(args.input))
    if isinstance(record, JointRecord):
        return io.joint_record_to_json(sample_joint_record(record, args.shots, args.seed))
    return io.record_to_json(sample_record(record, args.shots, args.seed))


def _check_two_l(args, l: SpinLength):
    if args.two_l is not None and args.two_l != l.two_l:
        raise ValidationError(f"--two-l {args.two_l} does not match input two_l {l.two_l}")


def cmd_reconstruct(args) -> dict:
    record = io.record_from_json(_load(args.input))
    _check_two_l(args, record.l)
    report = reconstruct_linear(record, weighted=args.weighted)
    return io.report_to_json(report, project_psd=args.project_psd)


def cmd_bipartite(args) -> dict:
    record = io.joint_record_from_json(_load(args.input))
    return io.report_to_json(reconstruct_bipartite(record), project_psd=args.project_psd)


def cmd_evolve(args) -> dict:
    if args.gamma_t is None or args.gamma_t < 0:
        raise ValidationError("evolve requires a non-negative --gamma-t")
    rho, spins = io.state_from_json(_load(args.input))
    if isinstance(spins, tuple):
        raise ValidationError("evolve acts on single-spin states")
    _check_two_l(args, spins)
    basis = complete_basis(spins)
    if args.dt is not None:
        # unit rate: time equals gamma_t
        evolved = evolve_numeric(rho, 1.0, args.gamma_t, args.dt)
        method = "rk4"
    else:
        evolved = evolve_state(rho, args.gamma_t)
        method = "closed-form"
    out = io.state_to_json(evolved, spins)
    out.update({
        "gamma_t": args.gamma_t,
        "method": method,
        "coefficients": io.coefficients_to_json(decompose(evolved, basis)),
    })
    return out


def cmd_check(args) -> dict:
    record = io.record_from_json(_load(args.input))
    _check_two_l(args, record.l)
    l = record.l
    design = build_design_matrix(l, record.directions)
    cond = design.condition_number()
    if l.two_l == 2 and match_five_directions(record) is not None:
        residuals = list(consistency_residuals(record))
        kind = "five-direction"
    else:
        target = observed_moments(record) - design.offsets
        residuals = [float(r) for r in left_null_space(design.rows).T @ target]
        kind = "left-null-space"
    return {
        "two_l": l.two_l,
        "n_directions": len(record),
        "minimum_directions": 2 * l.two_l + 1,
        "rank": design.rank(),
        "columns": l.n_coefficients,
        "condition_number": io._finite(cond),
        "informationally_complete": bool(cond < 1e6) and len(record) >= 2 * l.two_l + 1,
        "consistency_residuals": residuals,
        "residual_kind": kind,
    }


COMMANDS = {
    "basis": cmd_basis,
    "simulate": cmd_simulate,
    "sample": cmd_sample,
    "reconstruct": cmd_reconstruct,
    "evolve": cmd_evolve,
    "bipartite-reconstruct": cmd_bipartite,
    "check": cmd_check,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spintomo", description="Spin-l state tomography toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text, inp=True):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--two-l", type=int, dest="two_l", help="twice the spin quantum number")
        p.add_argument("--out", help="output file (default: stdout)")
        if inp:
            p.add_argument("--in", dest="input", help="input JSON file (default: stdin)")
        return p

    add("basis", "dump the operator basis", inp=False)
    p = add("simulate", "exact outcome probabilities of a state")
    p.add_argument("--directions", help="preset name or directions file")
    p = add("sample", "draw multinomial counts from an exact record")
    p.add_argument("--shots", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    for name, text in (("reconstruct", "linear-inversion tomography"),
                       ("bipartite-reconstruct", "two-spin tomography")):
        p = add(name, text)
        p.add_argument("--project-psd", action="store_true",
                       help="top-level matrix is the PSD-projected state instead of the raw one")
        if name == "reconstruct":
            p.add_argument("--weighted", action="store_true", help="inverse-variance row weights")
    p = add("evolve", "isotropic decoherence")
    p.add_argument("--gamma-t", type=float, dest="gamma_t")
    p.add_argument("--dt", type=float, help="integrate numerically (RK4) with this step")
    add("check", "conditioning and consistency diagnostics")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        result = COMMANDS[args.command](args)
    except NumericalError as exc:
        return _fail(exc, 2)
    except (SpinTomoError, ValueError, KeyError, TypeError, OSError, json.JSONDecodeError) as exc:
        return _fail(exc, 1)
    text = io.write_json(result, args.out)
    if args.out is None:
        sys.stdout.write(text)
    return 0


def _fail(exc: Exception, code: int) -> int:
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}) + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
