"""Command-line front end.

Every run produces a report envelope (tool version, resolved config echo,
timestamp, result sections, a flat table and warnings) serialized as JSON or
CSV.  Exit codes: 0 success, 1 verification failure, 2 invalid
configuration, 3 numerical non-convergence, 4 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from . import __version__, eikonal, geometry, harmonics, sliced, spectral, verify
from .errors import CoulombSphereError, ConvergenceError, ResolutionError
from .geometry import EV_PER_UNIT, EnergyContext

TOOL_NAME = "coulomb-sphere"

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_INVALID = 2
EXIT_NO_CONVERGENCE = 3
EXIT_IO = 4

# output-only options are not part of the reproducibility echo
_NOT_ECHOED = {"output", "config", "handler"}

WARN_MEASURE_FACTOR = ("slice measure factor applied as exp(-epsilon*pE^2/2); "
                       "this sign and weight are the ones that reproduce the n^2 level structure")
WARN_C_TERM = "curvature term enters each slice as exp(-3*c*epsilon*pE^2/2), i.e. n^2 -> n^2 + 3c"
WARN_RADIUS = "orbit radius from momentum uses r = 2*alpha/(p^2 + pE^2) (energy conservation)"
WARN_DENSITY = "measure density uses the cubed denominator 8*pE^3/(p^2 + pE^2)^3"
WARN_NO_FACTOR = "without the measure factor the n=1 level is singular (reported as null)"


@dataclass
class ReportEnvelope:
    version: str
    config: dict
    timestamp: str
    sections: dict = field(default_factory=dict)
    columns: list = field(default_factory=list)
    table: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    status: str = "ok"

    def as_dict(self):
        return {
            "tool": TOOL_NAME,
            "version": self.version,
            "timestamp": self.timestamp,
            "status": self.status,
            "config": self.config,
            "warnings": list(self.warnings),
            "sections": self.sections,
            "columns": list(self.columns),
            "table": [{k: row.get(k) for k in self.columns} for row in self.table],
        }


# --------------------------------------------------------------------------
# serialization

def _plain(obj):
    """Convert numpy scalars/arrays and non-finite floats to JSON-safe values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def _csv_cell(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def serialize_report(envelope: ReportEnvelope, fmt="json") -> bytes:
    """Serialize ``envelope`` as UTF-8 JSON or RFC-4180 CSV bytes.

    JSON keeps the envelope's key order and writes floats with ``repr``
    (shortest round-trip form), so parse-then-dump reproduces the bytes.
    CSV holds only the flat table: one header row plus one row per entry.
    """
    doc = _plain(envelope.as_dict())
    if fmt == "json":
        text = json.dumps(doc, ensure_ascii=False, indent=2, allow_nan=False) + "\n"
        return text.encode("utf-8")
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\r\n", quoting=csv.QUOTE_MINIMAL)
        writer.writerow(doc["columns"])
        for row in doc["table"]:
            writer.writerow([_csv_cell(row[k]) for k in doc["columns"]])
        return buf.getvalue().encode("utf-8")
    raise ValueError(f"unknown format {fmt!r}")


def canonical_json(data: bytes) -> bytes:
    """Parse and re-serialize a JSON report (round-trip oracle)."""
    doc = json.loads(data.decode("utf-8"))
    return (json.dumps(doc, ensure_ascii=False, indent=2, allow_nan=False) + "\n").encode("utf-8")


# --------------------------------------------------------------------------
# argument types

def _positive_float(text):
    try:
        x = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not (math.isfinite(x) and x > 0):
        raise argparse.ArgumentTypeError(f"must be a positive number: {text!r}")
    return x


def _negative_float(text):
    try:
        x = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not (math.isfinite(x) and x < 0):
        raise argparse.ArgumentTypeError(f"energy must be negative: {text!r}")
    return x


def _angle(text):
    try:
        x = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not 0.0 <= x <= math.pi:
        raise argparse.ArgumentTypeError(f"angle must lie in [0, pi]: {text!r}")
    return x


def _positive_int(text):
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if n < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1: {text!r}")
    return n


def _c_value(text):
    try:
        return spectral.parse_c(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"bad c value {text!r}: {exc}")


def _c_list(text):
    items = [s for s in text.split(",") if s.strip()]
    if not items:
        raise argparse.ArgumentTypeError("empty c list")
    return [_c_value(s.strip()) for s in items]


def _float_list(text):
    try:
        vals = [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _positive_list(text):
    vals = _float_list(text)
    if any(not (math.isfinite(v) and v > 0) for v in vals):
        raise argparse.ArgumentTypeError(f"values must be positive: {text!r}")
    return vals


def _vector3(text):
    vals = _float_list(text)
    if len(vals) != 3 or not all(math.isfinite(v) for v in vals):
        raise argparse.ArgumentTypeError(f"expected three finite components: {text!r}")
    return vals


# --------------------------------------------------------------------------
# subcommands; each returns (sections, columns, table, warnings)

def _ev(x, args):
    return None if x is None else x * args.ev_per_unit


def cmd_spectrum(args):
    if args.no_measure_factor:
        if args.n_max < 2:
            raise spectral.InvalidInputError("n_max must be >= 2 without the measure factor")
        entries = spectral.no_measure_factor_spectrum(args.n_max, args.alpha)
        label, warnings = "no-measure-factor", [WARN_NO_FACTOR]
    else:
        entries = spectral.spectrum(args.n_max, spectral.RTermVariant(args.c), args.alpha)
        label, warnings = spectral.RTermVariant(args.c).label, []
    table = [{"n": e.n, "variant": label,
              "energy": None if e.singular else e.energy,
              "energy_eV": None if e.singular else _ev(e.energy, args),
              "singular": e.singular} for e in entries]
    sections = {"spectrum": {"variant": label,
                             "energies": [r["energy"] for r in table]}}
    return sections, ["n", "variant", "energy", "energy_eV", "singular"], table, warnings


def cmd_poles(args):
    variant = spectral.RTermVariant(args.c)
    poles = spectral.find_poles(E_range=args.e_range, variant=variant, alpha=args.alpha,
                                n_expect=args.n_max, probe_angles=tuple(args.probe_angles),
                                points_per_level=args.points_per_level, xtol=args.tol)
    table = []
    for p in poles:
        expected = spectral.pole_energy(p.n, variant.c, args.alpha)
        table.append({"n": p.n, "variant": variant.label, "energy": p.energy,
                      "energy_eV": _ev(p.energy, args), "expected": expected,
                      "abs_error": abs(p.energy - expected), "probe_theta": p.theta})
    sections = {"poles": {"variant": variant.label, "found": [p.n for p in poles],
                          "max_abs_error": max((r["abs_error"] for r in table), default=None)}}
    cols = ["n", "variant", "energy", "energy_eV", "expected", "abs_error", "probe_theta"]
    return sections, cols, table, []


def cmd_amplitude(args):
    ctx = EnergyContext(args.energy, args.alpha)
    row = {"theta": args.theta, "energy": args.energy, "variant": spectral.RTermVariant(args.c).label}
    if args.pseudotime is not None:
        res = spectral.pseudotime_amplitude_cos(math.cos(args.theta), args.pseudotime, ctx,
                                                tol=args.tol)
        kind = "pseudotime"
        row["pseudotime"] = args.pseudotime
    else:
        res = spectral.fixed_energy_amplitude(args.theta, args.energy, args.alpha, args.c,
                                              tol=args.tol)
        kind = "fixed-energy"
        row["pseudotime"] = None
    row.update({"kind": kind, "value": float(res.value), "terms_used": res.terms_used,
                "tail_bound": res.tail_bound, "accelerated": res.accelerated,
                "cesaro_value": None, "cesaro_bound": None})
    if args.cesaro_terms and kind == "fixed-energy":
        ces = spectral.fixed_energy_amplitude_cesaro(args.theta, args.energy, args.alpha,
                                                     args.c, n_terms=args.cesaro_terms)
        row["cesaro_value"], row["cesaro_bound"] = ces.value, ces.tail_bound
    cols = ["kind", "variant", "theta", "energy", "pseudotime", "value", "terms_used",
            "tail_bound", "accelerated", "cesaro_value", "cesaro_bound"]
    return {"amplitude": dict(row)}, cols, [row], []


def cmd_kernel(args):
    ctx = EnergyContext(-0.5, args.alpha)
    on = not args.no_measure_factor
    table, sections = [], {}
    for c in args.c:
        res = sliced.extract_spectrum(tuple(args.epsilons), ctx, S=args.pseudotime,
                                      with_measure_factor=on, c=c, n_modes=args.n_max,
                                      grid_points=args.grid_points)
        label = spectral.RTermVariant(c).label if on else f"{spectral.RTermVariant(c).label}/no-factor"
        for lev in res.levels:
            n = lev.n
            if on:
                analytic = spectral.pole_energy(n, c, args.alpha)
            else:
                shift = n * n - 1 + 3 * c
                analytic = None if shift <= 0 else -args.alpha**2 / (2.0 * shift)
            row = {"n": n, "variant": label, "c": c, "measure_factor": on}
            for i, eps in enumerate(res.epsilons):
                row[f"rate_eps_{eps!r}"] = float(res.rates[i, n - 1])
            row.update({"rate_extrapolated": float(res.extrapolated[n - 1]),
                        "energy": lev.energy, "energy_eV": _ev(lev.energy, args),
                        "analytic": analytic, "singular": lev.singular})
            table.append(row)
        sections[label] = {"c": c, "measure_factor": on,
                           "energies": [lev.energy for lev in res.levels]}
    rate_cols = [f"rate_eps_{float(e)!r}" for e in args.epsilons]
    cols = (["n", "variant", "c", "measure_factor"] + rate_cols
            + ["rate_extrapolated", "energy", "energy_eV", "analytic", "singular"])
    warnings = [WARN_MEASURE_FACTOR] if on else [WARN_NO_FACTOR]
    if any(c != 0 for c in args.c):
        warnings.append(WARN_C_TERM)
    return sections, cols, table, warnings


def cmd_rterm(args):
    variants = [spectral.RTermVariant(c) for c in args.c]
    report = spectral.level_spacing_report(variants, args.n_max, args.alpha,
                                           args.exclusion_threshold)
    table = [{"n": r.n, "variant": r.label, "c": r.c, "energy": r.energy,
              "energy_eV": _ev(r.energy, args), "spacing": r.spacing,
              "spacing_eV": _ev(r.spacing, args), "deviation": r.deviation,
              "excluded": r.excluded} for r in report.rows]
    sections = {"rterm": {"excluded_variants": report.excluded_variants(),
                          "exclusion_threshold": report.exclusion_threshold}}
    warnings = []
    if args.sliced:
        rows = sliced.discrimination_report(tuple(args.c), args.n_max, args.alpha,
                                            grid_points=args.grid_points)
        sections["sliced"] = [{"variant": r.variant, "c": r.c,
                               "measure_factor": r.with_measure_factor, "n": r.n,
                               "extracted": r.extracted, "analytic": r.analytic,
                               "physical": r.physical,
                               "deviation_percent": r.deviation_percent,
                               "note": r.note} for r in rows]
        warnings = [WARN_MEASURE_FACTOR, WARN_C_TERM, WARN_NO_FACTOR]
    cols = ["n", "variant", "c", "energy", "energy_eV", "spacing", "spacing_eV",
            "deviation", "excluded"]
    return sections, cols, table, warnings


def cmd_eikonal(args):
    ctx = EnergyContext(args.energy, args.alpha)
    p_a, p_b = np.asarray(args.pa), np.asarray(args.pb)
    res = eikonal.minimize_eikonal(p_a, p_b, ctx, n_points=args.n_points, tol=args.tol,
                                   max_iter=args.max_iter, seed=args.seed)
    theta = geometry.invariant_angle(p_a, p_b, ctx)
    geo = eikonal.geodesic_action(p_a, p_b, ctx)
    row = {"theta": theta, "action": res.action, "geodesic_action": geo,
           "difference": res.action - geo, "initial_action": res.initial_action,
           "iterations": res.iterations, "grad_norm": res.grad_norm,
           "restarts": res.restarts}
    sections = {"eikonal": dict(row), "path": res.path.points}
    return sections, list(row), [row], []


def cmd_orbit(args):
    ctx = EnergyContext(args.energy, args.alpha)
    L = args.angular_momentum if args.angular_momentum is not None \
        else args.l_fraction * args.alpha / ctx.pE
    T = eikonal.kepler_period(args.energy, args.alpha)
    traj = eikonal.simulate_kepler(args.energy, L, args.periods * T, args.dt_fraction * T,
                                   ctx, method=args.method, sample_every=args.sample_every)
    drift = float(np.max(np.abs(traj.energies() - args.energy)))
    center, radius, resid = eikonal.fit_circle(traj.momenta[:, :2])
    quarter_len = int(round(0.25 * T / (args.dt_fraction * T * args.sample_every)))
    quarter = eikonal.eikonal_along_orbit(traj[: min(len(traj), quarter_len + 1)], ctx)
    row = {"angular_momentum": L, "period": T, "samples": len(traj), "energy_drift": drift,
           "hodograph_center_x": float(center[0]), "hodograph_center_y": float(center[1]),
           "hodograph_radius": radius, "circle_residual": resid,
           "quarter_force_form": quarter.force_form,
           "quarter_metric_form": quarter.metric_form,
           "quarter_relative_difference": quarter.relative_difference}
    return {"orbit": dict(row)}, list(row), [row], [WARN_RADIUS]


def cmd_harmonics_check(args):
    pts, w = harmonics.s3_grid(args.resolution)
    blocks = [harmonics.harmonics_block(n, pts) for n in range(1, args.n_max + 1)]
    Y = np.hstack(blocks)
    gram = (Y.conj().T * w) @ Y
    dev = np.abs(gram - np.eye(len(gram)))
    rng = np.random.default_rng(args.seed)
    pairs = [(geometry.SpherePoint4.from_array(b, normalize=True),
              geometry.SpherePoint4.from_array(a, normalize=True))
             for b, a in rng.standard_normal((args.pairs, 2, 4))]
    table, start = [], 0
    for n in range(1, max(args.n_max, args.n_addition) + 1):
        row = {"n": n, "gram_max_error": None, "addition_max_residual": None}
        if n <= args.n_max:
            size = n * n
            row["gram_max_error"] = float(np.max(dev[start:start + size]))
            start += size
        if n <= args.n_addition:
            row["addition_max_residual"] = max(
                harmonics.addition_theorem_residual(n, b, a) for b, a in pairs)
        table.append(row)
    sections = {"harmonics": {"gram_max_error": float(dev.max()),
                              "addition_max_residual": max(
                                  (r["addition_max_residual"] or 0.0) for r in table),
                              "quadrature_points": len(w)}}
    return sections, ["n", "gram_max_error", "addition_max_residual"], table, []


def cmd_verify_all(args):
    results = verify.run_all()
    table = [{"criterion": r.name, "passed": r.passed, "elapsed_s": r.elapsed}
             for r in results]
    sections = {"criteria": {r.name: {"passed": r.passed, "details": r.details}
                             for r in results},
                "summary": {"passed": sum(r.passed for r in results),
                            "total": len(results),
                            "all_passed": all(r.passed for r in results)}}
    warnings = [WARN_DENSITY, WARN_MEASURE_FACTOR, WARN_C_TERM, WARN_RADIUS]
    return sections, ["criterion", "passed", "elapsed_s"], table, warnings


# --------------------------------------------------------------------------
# parser

class _Parser(argparse.ArgumentParser):
    """Argument parser that raises instead of exiting on errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


class _UsageError(Exception):
    pass


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--alpha", type=_positive_float, default=1.0, help="coupling (default 1)")
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--output", default=None, help="output path (default stdout)")
    common.add_argument("--timestamp", default=None,
                        help="fixed timestamp string (default: current UTC time)")
    common.add_argument("--ev-per-unit", type=_positive_float, default=EV_PER_UNIT,
                        help="energy unit in eV (default 27.21)")
    common.add_argument("--seed", type=int, default=0, help="random seed")

    parser = _Parser(prog=TOOL_NAME, description="Coulomb problem on S^3: spectra, "
                     "amplitudes, sliced propagators and classical eikonals.")
    parser.add_argument("--version", action="version", version=f"{TOOL_NAME} {__version__}")
    parser.add_argument("--config", default=None,
                        help="replay the config echo of an earlier JSON report")
    sub = parser.add_subparsers(dest="subcommand", parser_class=_Parser)

    p = sub.add_parser("spectrum", parents=[common], help="analytic energy levels")
    p.add_argument("--n-max", type=_positive_int, default=6)
    p.add_argument("--c", type=_c_value, default=0.0, help="curvature coefficient, e.g. 1/12")
    p.add_argument("--no-measure-factor", action="store_true")
    p.set_defaults(handler=cmd_spectrum)

    p = sub.add_parser("poles", parents=[common], help="locate poles of the fixed-energy amplitude")
    p.add_argument("--n-max", type=_positive_int, default=6)
    p.add_argument("--c", type=_c_value, default=0.0)
    p.add_argument("--e-range", type=_float_list, default=None, help="lo,hi energy window")
    p.add_argument("--probe-angles", type=_float_list, default=[0.5 * math.pi, 2.0])
    p.add_argument("--points-per-level", type=_positive_int, default=100)
    p.add_argument("--tol", type=_positive_float, default=1e-13, help="bisection tolerance")
    p.set_defaults(handler=cmd_poles)

    p = sub.add_parser("amplitude", parents=[common], help="evaluate a kernel or amplitude")
    p.add_argument("--energy", type=_negative_float, required=True)
    p.add_argument("--theta", type=_angle, required=True, help="opening angle on S^3 (rad)")
    p.add_argument("--c", type=_c_value, default=0.0)
    p.add_argument("--pseudotime", type=_positive_float, default=None,
                   help="evaluate the pseudotime kernel instead of the fixed-energy amplitude")
    p.add_argument("--tol", type=_positive_float, default=1e-12)
    p.add_argument("--cesaro-terms", type=int, default=0,
                   help="also run the direct Cesaro cross-check with this many terms")
    p.set_defaults(handler=cmd_amplitude)

    p = sub.add_parser("kernel", parents=[common], help="sliced propagator spectrum extraction")
    p.add_argument("--c", type=_c_list, default=[0.0], help="comma-separated c values")
    p.add_argument("--epsilons", type=_positive_list, default=[0.04, 0.02, 0.01])
    p.add_argument("--pseudotime", type=_positive_float, default=1.0)
    p.add_argument("--n-max", type=_positive_int, default=3)
    p.add_argument("--grid-points", type=_positive_int, default=512)
    p.add_argument("--no-measure-factor", action="store_true")
    p.set_defaults(handler=cmd_kernel)

    p = sub.add_parser("rterm", parents=[common], help="curvature-term comparison table")
    p.add_argument("--c", type=_c_list, default=[0.0, 1 / 24, 1 / 12, 1 / 8])
    p.add_argument("--n-max", type=_positive_int, default=3)
    p.add_argument("--exclusion-threshold", type=_positive_float, default=1e-3)
    p.add_argument("--sliced", action="store_true", help="add sliced-propagator extraction")
    p.add_argument("--grid-points", type=_positive_int, default=512)
    p.set_defaults(handler=cmd_rterm)

    p = sub.add_parser("eikonal", parents=[common], help="minimize the momentum-space eikonal")
    p.add_argument("--pa", type=_vector3, required=True, help="start momentum x,y,z")
    p.add_argument("--pb", type=_vector3, required=True, help="end momentum x,y,z")
    p.add_argument("--energy", type=_negative_float, default=-0.5)
    p.add_argument("--n-points", type=_positive_int, default=129)
    p.add_argument("--tol", type=_positive_float, default=1e-9)
    p.add_argument("--max-iter", type=_positive_int, default=2000)
    p.set_defaults(handler=cmd_eikonal)

    p = sub.add_parser("orbit", parents=[common], help="Kepler orbit and hodograph checks")
    p.add_argument("--energy", type=_negative_float, default=-0.5)
    p.add_argument("--l-fraction", type=_positive_float, default=0.8,
                   help="angular momentum as a fraction of the circular-orbit value")
    p.add_argument("--angular-momentum", type=_positive_float, default=None)
    p.add_argument("--periods", type=_positive_float, default=1.0)
    p.add_argument("--dt-fraction", type=_positive_float, default=1e-4,
                   help="time step as a fraction of the period")
    p.add_argument("--method", choices=("yoshida4", "leapfrog"), default="yoshida4")
    p.add_argument("--sample-every", type=_positive_int, default=1)
    p.set_defaults(handler=cmd_orbit)

    p = sub.add_parser("harmonics-check", parents=[common],
                       help="orthonormality and addition-theorem checks")
    p.add_argument("--n-max", type=_positive_int, default=4, help="largest n in the Gram matrix")
    p.add_argument("--n-addition", type=_positive_int, default=6)
    p.add_argument("--pairs", type=_positive_int, default=100)
    p.add_argument("--resolution", type=_positive_int, default=64)
    p.set_defaults(handler=cmd_harmonics_check)

    p = sub.add_parser("verify-all", parents=[common], help="run every acceptance check")
    p.set_defaults(handler=cmd_verify_all)
    return parser


def _config_echo(args, parser):
    """Resolved options plus the canonical argv that reproduces them."""
    opts = {k: v for k, v in vars(args).items() if k not in _NOT_ECHOED | {"subcommand"}}
    sub = parser._subparsers._group_actions[0].choices[args.subcommand]
    argv = [args.subcommand]
    for action in sub._actions:
        dest = action.dest
        if dest in _NOT_ECHOED or dest == "help" or not action.option_strings:
            continue
        value = getattr(args, dest)
        flag = action.option_strings[0]
        if isinstance(action, argparse._StoreTrueAction):
            if value:
                argv.append(flag)
        elif value is not None:
            if isinstance(value, list):
                value = ",".join(repr(float(v)) for v in value)
            elif isinstance(value, float):
                value = repr(value)
            value = str(value)
            # "--flag=-0.1,0.2" keeps argparse from reading the value as an option
            argv += [f"{flag}={value}"] if value.startswith("-") else [flag, value]
    return _plain({"subcommand": args.subcommand, "options": opts, "argv": argv})


def _split_config(argv):
    """Pull a leading ``--config PATH`` (or ``--config=PATH``) out of ``argv``."""
    if argv and argv[0].startswith("--config="):
        return argv[0].split("=", 1)[1], argv[1:]
    if argv and argv[0] == "--config":
        if len(argv) < 2:
            raise _UsageError(f"{TOOL_NAME}: error: --config needs a path")
        return argv[1], argv[2:]
    return None, argv


def _load_replay(path):
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    cfg = doc.get("config", doc) if isinstance(doc, dict) else None
    if not isinstance(cfg, dict) or not isinstance(cfg.get("argv"), list):
        raise _UsageError(f"{path}: no replayable config echo found")
    return [str(a) for a in cfg["argv"]]


def _write(payload: bytes, path):
    if path is None:
        out = getattr(sys.stdout, "buffer", None)
        if out is None:
            sys.stdout.write(payload.decode("utf-8"))
        else:
            out.write(payload)
            out.flush()
    else:
        with open(path, "wb") as fh:
            fh.write(payload)


def run(argv=None):
    """Parse ``argv``, run the subcommand, write the report.

    Returns ``(exit_code, payload)``; ``payload`` is the serialized report,
    or ``None`` when nothing was produced (usage errors).
    """
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        config, extra = _split_config(argv)
        if config is not None:
            # options given next to --config are appended to the replayed argv
            args = parser.parse_args(_load_replay(config) + extra)
        else:
            args = parser.parse_args(argv)
        if args.subcommand is None:
            parser.print_usage(sys.stderr)
            raise _UsageError(f"{TOOL_NAME}: error: a subcommand is required")
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0), None
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID, None
    except OSError as exc:
        print(f"{TOOL_NAME}: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO, None
    except json.JSONDecodeError as exc:
        print(f"{TOOL_NAME}: config is not valid JSON: {exc}", file=sys.stderr)
        return EXIT_INVALID, None

    timestamp = args.timestamp or datetime.now(timezone.utc).isoformat(timespec="seconds")
    args.timestamp = timestamp
    env = ReportEnvelope(__version__, _config_echo(args, parser), timestamp)
    code = EXIT_OK
    try:
        sections, columns, table, warnings = args.handler(args)
        env.sections, env.columns, env.table, env.warnings = sections, columns, table, warnings
        if args.subcommand == "verify-all" and not sections["summary"]["all_passed"]:
            env.status, code = "verification-failed", EXIT_VERIFY_FAILED
    except (ConvergenceError, ResolutionError) as exc:
        env.status, code = "non-convergence", EXIT_NO_CONVERGENCE
        env.sections = {"error": {"type": type(exc).__name__, "message": str(exc),
                                  "diagnostics": getattr(exc, "diagnostics", {})}}
        print(f"{TOOL_NAME}: {exc}", file=sys.stderr)
    except (CoulombSphereError, ValueError) as exc:
        print(f"{TOOL_NAME}: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID, None

    payload = serialize_report(env, args.format)
    try:
        _write(payload, args.output)
    except OSError as exc:
        print(f"{TOOL_NAME}: cannot write output: {exc}", file=sys.stderr)
        return EXIT_IO, payload
    return code, payload


def main(argv=None):
    code, _ = run(argv)
    return code


if __name__ == "__main__":
    sys.exit(main())
