"""Command-line interface.

Exit codes
----------
0   success / stable / cross-check within tolerance
1   analyze: steady state linearly unstable; crosscheck: distance > 1e-6
2   parse error in a model or network file
3   model validation error
4   steady state could not be computed
5   simulation diverged
64  usage error (bad arguments, missing files, dt above the stability bound)
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import report as rep
from .network import ModelSpec, ModelValidationError
from .parser import ParseError, format_crn, load_model
from .matrices import m_matrix_failure
from .simulate import (CrossCheckReport, Grid1D, TimestepError, discrete_cross_check,
                       growth_rate, max_stable_dt, perturbed_state, simulate,
                       steady_state_field, trajectory_csv, write_snapshots)
from .spectral import (build_M, critical_alpha, critical_chi, trimolecular_determinant,
                       trimolecular_k0, max_real_part, neumann_eigenvalues, stability_verdict,
                       steady_jacobian, trimolecular_rates)
from .steady import SteadyStateError, extract_linear, find_steady_state

EXIT_OK, EXIT_UNSTABLE, EXIT_PARSE, EXIT_INVALID, EXIT_STEADY, EXIT_DIVERGED = 0, 1, 2, 3, 4, 5
EXIT_USAGE = 64
CROSSCHECK_TOL = 1e-6


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class _Out:
    """Human-readable text goes to stdout, or stderr when stdout carries JSON."""

    def __init__(self, args):
        self.quiet = args.quiet
        self.stream = sys.stderr if args.report_json else sys.stdout

    def __call__(self, *parts):
        if not self.quiet:
            print(*parts, file=self.stream)


def _fmt(x: float) -> str:
    return repr(float(x))


def _species_index(model: ModelSpec, key: str) -> int:
    names = model.network.names
    if key in names:
        return names.index(key)
    try:
        i = int(key)
    except ValueError:
        raise UsageError(f"unknown species {key!r}; species are {names}") from None
    if not 0 <= i < model.N:
        raise UsageError(f"species index {i} outside 0..{model.N - 1}")
    return i


def _assignments(model, items, what):
    out = []
    for item in items or ():
        if "=" not in item:
            raise UsageError(f"{what} must look like NAME=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        try:
            out.append((_species_index(model, key.strip()), float(value)))
        except ValueError:
            raise UsageError(f"{what} value {value!r} is not a number") from None
    return out


def _load(args) -> ModelSpec:
    path = Path(args.model)
    if not path.is_file():
        raise UsageError(f"model file {str(path)!r} not found")
    model = load_model(path)
    changes = {}
    if getattr(args, "chi", None) is not None:
        changes["chi"] = args.chi
    alpha_over = _assignments(model, getattr(args, "alpha", None), "--alpha")
    if alpha_over:
        alpha = np.array(model.alpha)
        for i, a in alpha_over:
            alpha[i] = a
        changes["alpha"] = alpha
    if changes:
        from .network import validate_model
        model = validate_model(model.replace(**changes))
    return model


def _steady(args, model):
    if not args.u_star > 0:
        raise UsageError("--u-star must be positive")
    pins = _assignments(model, args.pin, "--pin")
    return find_steady_state(model, args.u_star, pins=pins)


def _output_path(args, suffix: str) -> Path:
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    return out / f"{Path(args.model).stem}_{suffix}"


def _write(path: Path, text: str):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _emit_json(args, doc):
    if args.report_json:
        sys.stdout.write(rep.dump_json(doc))


def cmd_check(args) -> int:
    say = _Out(args)
    model = _load(args)
    net = model.network
    lin = extract_linear(net)
    kind = "linear" if lin is not None else "nonlinear"
    say(f"{kind}, N={net.N}")
    say(f"species: {', '.join(net.names)}")
    say(f"chemoattractant: {net.names[model.chemoattractant_index]}")
    say(f"reactions ({len(net.reactions)}):")
    for line in format_crn(net).splitlines():
        say(f"  {line}")
    doc = {"linear": lin is not None, "N": net.N, "species": net.names,
           "reactions": len(net.reactions),
           "chemoattractant": net.names[model.chemoattractant_index]}
    if lin is not None:
        failure = m_matrix_failure(lin.A)
        say("A (g(v) = -A v):")
        for row in lin.A:
            say("  [" + ", ".join(_fmt(x) for x in row) + "]")
        say("A is a nonsingular M-matrix" if failure is None
            else f"A is not a nonsingular M-matrix ({failure})")
        doc["A"] = lin.A.tolist()
        doc["m_matrix"] = failure is None
        doc["m_matrix_failure"] = failure
    _emit_json(args, doc)
    return EXIT_OK


def cmd_analyze(args) -> int:
    say = _Out(args)
    model = _load(args)
    ss = _steady(args, model)
    report = stability_verdict(model, ss, args.modes, mean_mode_marginal=args.mean_mode_marginal)
    doc = rep.report_dict(report, model, ss)
    _write(_output_path(args, "modes.csv"), rep.modes_csv(report))
    _write(_output_path(args, "report.yaml"), rep.dump_yaml(doc))

    names = model.network.names
    say("steady state: u* = " + _fmt(ss.u_star) + ", "
        + ", ".join(f"{s} = {_fmt(x)}" for s, x in zip(names, ss.v_star)))
    if not ss.nonnegative:
        say("warning: steady state has negative concentrations")
    say(f"modes analysed: {len(report.per_mode)} ({report.tail_status}, "
        f"cutoff mu = {_fmt(report.tail_cutoff_mu)})")
    say(f"max Re lambda = {_fmt(report.overall_max_re)} at mode {report.dominant_mode}")
    for label, cr in (("suff1", report.suff1), ("suff2", report.suff2)):
        say(f"{label}: {'applicable' if cr.applicable else 'not applicable'}"
            + (f" (i* = {names[cr.i_star]})" if cr.applicable else f" ({cr.reason})"))
    if report.marginal:
        say("marginal: neutral eigenvalue(s) present")
    say("verdict: " + ("UNSTABLE" if report.unstable else "stable"))
    _emit_json(args, doc)
    return EXIT_UNSTABLE if report.unstable else EXIT_OK


def _parse_grid(spec: str) -> np.ndarray:
    try:
        kind, lo, hi, count = spec.split(":")
        lo, hi, count = float(lo), float(hi), int(count)
    except ValueError:
        raise UsageError(f"grid must look like log:LO:HI:COUNT or lin:LO:HI:COUNT, got {spec!r}"
                         ) from None
    if count < 1 or not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
        raise UsageError(f"invalid grid {spec!r}")
    if kind == "log":
        if lo <= 0:
            raise UsageError("log grid needs LO > 0")
        return np.geomspace(lo, hi, count)
    if kind == "lin":
        return np.linspace(lo, hi, count)
    raise UsageError(f"grid kind must be 'log' or 'lin', got {kind!r}")


def cmd_sweep(args) -> int:
    say = _Out(args)
    model = _load(args)
    ss = _steady(args, model)
    grid = _parse_grid(args.grid)
    J = steady_jacobian(model, ss)
    if args.mu is not None:
        if not args.mu < 0:
            raise UsageError("--mu must be negative")
        mus = [args.mu]
    else:
        mus = [float(m) for m in neumann_eigenvalues(model.domain, args.modes).mu[1:]]

    if args.param == "chi":
        label = "chi"

        def matrix(mu, value):
            return build_M(model, ss, mu, J=J, chi=value).M

        def threshold(mu):
            return critical_chi(model, ss, mu)
    elif args.param.startswith("alpha:"):
        idx = _species_index(model, args.param.split(":", 1)[1])
        label = f"alpha_{model.network.names[idx]}"

        def matrix(mu, value):
            alpha = np.array(model.alpha)
            alpha[idx] = value
            return build_M(model, ss, mu, J=J, alpha=alpha).M

        def threshold(mu):
            return critical_alpha(model, ss, mu, idx)
    else:
        raise UsageError(f"--param must be 'chi' or 'alpha:SPECIES', got {args.param!r}")

    found = [t for t in (threshold(mu) for mu in mus) if t is not None]
    best = min(found, key=lambda t: t.value) if found else None

    trimolecular = False
    if args.param == "chi":
        try:
            trimolecular_rates(model)
            trimolecular = True
        except ValueError:
            pass
    mu_det = mus[0]

    header = ["parameter", "value", "max_re", "threshold"]
    if trimolecular:
        header += ["K", "det_M"]
    rows = []
    for value in grid:
        max_re = max(max_real_part(matrix(mu, value)) for mu in mus)
        row = [label, float(value), max_re, best.value if best else None]
        if trimolecular:
            K = -mu_det * value * ss.u_star
            row += [K, trimolecular_determinant(model, ss, mu_det, K)]
        rows.append(row)
    _write(_output_path(args, "sweep.csv"), rep.csv_table(header, rows))

    doc = {"parameter": label, "mu": mus if args.mu is not None else "modes 1..",
           "threshold": None if best is None else best.value,
           "threshold_at_bracket_min": bool(best and best.at_bracket_min)}
    if best is None:
        say(f"no threshold for {label} in [1e-08, 1e+08]")
    elif best.at_bracket_min:
        say(f"unstable at bracket minimum: {label} <= {_fmt(best.value)}")
    else:
        say(f"threshold {label}* = {_fmt(best.value)}")
    if trimolecular:
        k0 = trimolecular_k0(model, ss, mu_det)
        chi0 = k0 / (-mu_det * ss.u_star)
        doc.update({"K0": k0, "K0_mu": mu_det, "K0_chi": chi0})
        say(f"det M(mu={_fmt(mu_det)}) changes sign at K0 = {_fmt(k0)} (chi = {_fmt(chi0)})")
    _emit_json(args, doc)
    return EXIT_OK


def cmd_simulate(args) -> int:
    say = _Out(args)
    model = _load(args)
    ss = _steady(args, model)
    try:
        grid = Grid1D(args.n, model.domain.L)
    except (ValueError, AttributeError) as exc:
        raise UsageError(str(exc)) from None
    bound = max_stable_dt(model, grid)
    dt = args.dt if args.dt is not None else bound
    if args.ic == "steady":
        ic = steady_state_field(ss, grid)
    else:
        ic = perturbed_state(ss, grid, args.amplitude, args.mode)
    try:
        traj = simulate(model, ic, dt, args.t_end, args.sample_every, reference=ss,
                        mode=args.mode, keep_snapshots=args.snapshots)
    except TimestepError as exc:
        raise UsageError(f"{exc}; use --dt <= {exc.bound!r}") from None
    _write(_output_path(args, "trajectory.csv"), trajectory_csv(traj))
    if args.snapshots:
        write_snapshots(_output_path(args, "snapshots.bin"), traj)
    doc = {"n": grid.n, "dt": dt, "dt_bound": bound, "t_end": args.t_end,
           "samples": int(traj.times.size), "diverged_at": traj.diverged_at,
           "mass_drift": float(abs(traj.mass[-1] - traj.mass[0]) / traj.mass[0])}
    say(f"n = {grid.n}, dt = {_fmt(dt)} (bound {_fmt(bound)}), samples = {traj.times.size}")
    say(f"relative mass drift = {_fmt(doc['mass_drift'])}")
    if traj.u_negative:
        say("warning: u became negative during the run")
    if args.window:
        try:
            t0, t1 = (float(x) for x in args.window.split(":"))
        except ValueError:
            raise UsageError("--window must look like T0:T1") from None
        mu = -(args.mode * math.pi / model.domain.L) ** 2
        predicted = max_real_part(build_M(model, ss, mu).M)
        try:
            rate = growth_rate(traj, (t0, t1))
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        doc.update({"growth_rate": rate, "predicted": predicted})
        say(f"growth rate of mode {args.mode} on [{t0}, {t1}] = {_fmt(rate)} "
            f"(predicted max Re lambda = {_fmt(predicted)})")
    _emit_json(args, doc)
    if traj.diverged:
        say(f"diverged at t = {_fmt(traj.diverged_at)}")
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_crosscheck(args) -> int:
    say = _Out(args)
    model = _load(args)
    ss = _steady(args, model)
    try:
        grid = Grid1D(args.n, model.domain.L)
        result: CrossCheckReport = discrete_cross_check(model, ss, grid)
    except (ValueError, AttributeError) as exc:
        raise UsageError(str(exc)) from None
    ok = result.hausdorff <= CROSSCHECK_TOL
    say(f"n = {grid.n}: Hausdorff distance = {_fmt(result.hausdorff)}, "
        f"matched max deviation = {_fmt(result.matching_max)}")
    say("reduction confirmed" if ok else f"distance exceeds {CROSSCHECK_TOL}")
    _emit_json(args, {"n": grid.n, "hausdorff": result.hausdorff,
                      "matching_max": result.matching_max, "tolerance": CROSSCHECK_TOL,
                      "ok": ok})
    return EXIT_OK if ok else EXIT_UNSTABLE


def _common(parser, suppress: bool):
    default = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--output", metavar="DIR", default=default("."),
                        help="directory for data files (default: current directory)")
    parser.add_argument("--report-json", action="store_true", default=default(False),
                        help="print the structured report as JSON on stdout")
    parser.add_argument("--modes", type=int, default=default(64),
                        help="number of Neumann modes (default 64)")
    parser.add_argument("--quiet", action="store_true", default=default(False))


def _steady_args(p):
    p.add_argument("--u-star", type=float, default=1.0, help="species density u* (default 1)")
    p.add_argument("--pin", action="append", metavar="SPECIES=VALUE",
                   help="fix a concentration to select within a degenerate family")
    p.add_argument("--chi", type=float, help="override the chemotactic sensitivity")
    p.add_argument("--alpha", action="append", metavar="SPECIES=VALUE",
                   help="override a production rate")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ksinstab", description=__doc__.split("\n\n")[0],
                     epilog="Exit codes: 0 ok/stable, 1 unstable or cross-check failed, "
                            "2 parse error, 3 validation error, 4 steady state failure, "
                            "5 divergence, 64 usage error.")
    _common(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("check", help="parse and validate a model file")
    p.add_argument("model")
    _common(p, suppress=True)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("analyze", help="steady state and per-mode stability")
    p.add_argument("model")
    _steady_args(p)
    p.add_argument("--mean-mode-marginal", action="store_true",
                   help="report the neutral mean-mode eigenvalue as marginal")
    _common(p, suppress=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("sweep", help="scan chi or a production rate; bisect the threshold")
    p.add_argument("model")
    _steady_args(p)
    p.add_argument("--param", default="chi", help="'chi' or 'alpha:SPECIES'")
    p.add_argument("--grid", required=True, help="log:LO:HI:COUNT or lin:LO:HI:COUNT")
    p.add_argument("--mu", type=float, help="single Laplacian eigenvalue (default: all modes)")
    _common(p, suppress=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("simulate", help="integrate the PDE on the interval")
    p.add_argument("model")
    _steady_args(p)
    p.add_argument("--n", type=int, default=256, help="cells (default 256)")
    p.add_argument("--dt", type=float, help="time step (default: the stability bound)")
    p.add_argument("--t-end", type=float, default=10.0)
    p.add_argument("--sample-every", type=int, default=100)
    p.add_argument("--ic", choices=["perturbed", "steady"], default="perturbed")
    p.add_argument("--amplitude", type=float, help="perturbation amplitude (default 1e-4 u*)")
    p.add_argument("--mode", type=int, default=1, help="cosine mode to seed and track")
    p.add_argument("--window", metavar="T0:T1", help="fit the growth rate on this window")
    p.add_argument("--snapshots", action="store_true", help="also write full fields")
    _common(p, suppress=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("crosscheck", help="discrete operator vs mode-matrix spectra")
    p.add_argument("model")
    _steady_args(p)
    p.add_argument("--n", type=int, default=64, help="cells, at most 128 (default 64)")
    _common(p, suppress=True)
    p.set_defaults(func=cmd_crosscheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.modes < 2:
        parser.error("--modes must be at least 2")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"ksinstab: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ParseError as exc:
        print(f"ksinstab: parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ModelValidationError as exc:
        print(f"ksinstab: invalid model: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SteadyStateError as exc:
        print(f"ksinstab: steady state failure: {exc}", file=sys.stderr)
        return EXIT_STEADY


if __name__ == "__main__":
    sys.exit(main())
