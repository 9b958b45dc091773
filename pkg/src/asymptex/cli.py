"""Command line interface: ``asymptex {expand,verify,residual,info} PROBLEM``.

Exit status is 0 when every check passes, 1 when a check fails and 2 for
malformed input or violated preconditions.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np

from .expansion import ExpansionResult, build_expansion
from .integrate import IntegrationError
from .osc import LatticeError, ResonanceError, TriangularizationError
from .problem_io import ProblemFormatError, load_problem
from .verify import (
    SpectrumError,
    check_mode,
    error_check,
    fit_decay,
    gamma_first_order,
    parameter_count,
    residual,
)

EXIT_PASS, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


def _g(x) -> str:
    """Full double precision, 17 significant digits."""
    return format(float(x), ".17g")


def _frac(x) -> str:
    x = Fraction(x)
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


def _finite(x):
    x = float(x)
    return x if np.isfinite(x) else str(x)


# expansion output ---------------------------------------------------------------------------

def _coefficient_rows(vec):
    for comp, fn in enumerate(vec):
        for key, c in sorted(fn.terms.items()):
            yield comp + 1, list(key), float(c.real), float(c.imag)


def _mono_triples(mono):
    return [[l, r, b] for (l, r), b in mono.table]


def expansion_terms(e: ExpansionResult):
    """``(s, p, rank, monomial, coefficient, certificate)`` in canonical order."""
    yield 0, 0, Fraction(0), None, e.phi0, e.certificates.get("phi0", 0.0)
    for s, level in enumerate(e.levels, start=1):
        for p, (mono, coeff) in enumerate(level, start=1):
            yield s, p, e.rank(s), mono, coeff, e.certificates.get(mono, 0.0)


def expansion_to_dict(e: ExpansionResult) -> dict:
    terms = []
    for s, p, rank, mono, coeff, cert in expansion_terms(e):
        terms.append({
            "s": s,
            "p": p,
            "rank": _frac(rank),
            "monomial": "1" if mono is None else mono.describe(),
            "factors": [] if mono is None else _mono_triples(mono),
            "coefficient": [[c, k, re, im] for c, k, re, im in _coefficient_rows(coeff)],
            "certificate": float(cert),
        })
    return {
        "problem": e.problem.name,
        "k": e.k,
        "ranks": [_frac(r) for r in e.ranks],
        "next_rank": _frac(e.next_rank),
        "kappa": [e.kappa(s) for s in range(1, e.k + 1)],
        "separation_margin": _finite(min(e.separation.values(), default=float("inf"))),
        "terms": terms,
    }


def expansion_to_csv(e: ExpansionResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["s", "p", "rank", "monomial", "component", "key", "re", "im"])
    for s, p, rank, mono, coeff, _ in expansion_terms(e):
        desc = "1" if mono is None else mono.describe()
        for comp, key, re, im in _coefficient_rows(coeff):
            w.writerow([s, p, _frac(rank), desc, comp, " ".join(str(v) for v in key),
                        _g(re), _g(im)])
    return buf.getvalue()


# sample dumps -------------------------------------------------------------------------------------

def samples_csv(t, values, eps1, q, prefix: str) -> str:
    values = np.asarray(values)
    norms = np.linalg.norm(values, axis=1)
    normalized = norms / np.asarray(eps1(t)) ** float(q)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    n = values.shape[1]
    w.writerow(["t"] + [f"{prefix}{j + 1}" for j in range(n)] + ["norm", "normalized"])
    for i in range(t.size):
        w.writerow([_g(t[i])] + [_g(v) for v in values[i]] + [_g(norms[i]), _g(normalized[i])])
    return buf.getvalue()


def _report_dict(rep) -> dict:
    return {k: (_finite(v) if isinstance(v, float) else v) for k, v in rep.summary().items()}


# argument handling -------------------------------------------------------------------------------

def _positive_float(text):
    try:
        x = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not np.isfinite(x) or x <= 0:
        raise argparse.ArgumentTypeError(f"must be a positive number: {text!r}")
    return x


def _nonneg_int(text):
    try:
        x = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if x < 0:
        raise argparse.ArgumentTypeError(f"must be nonnegative: {text!r}")
    return x


def _rational(text):
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a rational number: {text!r}") from None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="asymptex", description="Asymptotic expansions of quasilinear ODEs.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, k_default=1):
        p.add_argument("problem", help="problem document (YAML)")
        p.add_argument("--k", type=_nonneg_int, default=k_default, help="number of rank levels")
        p.add_argument("--t0", type=_positive_float, help="override the starting time")
        p.add_argument("--out", help="output file (expand, info) or directory (verify, residual)")
        p.add_argument("--format", choices=("csv", "structured"), default="structured")

    def checks(p):
        p.add_argument("--t-max", dest="t_max", type=_positive_float, help="end of the sample range")
        p.add_argument("--windows", type=_nonneg_int, default=12, help="number of fit windows")
        p.add_argument("--claim-offset", dest="claim_offset", type=float, default=0.0,
                       help="add this to every claimed exponent (sensitivity check)")
        p.add_argument("--timestamp", action="store_true",
                       help="include a wall-clock header in the summary")

    p = sub.add_parser("expand", help="build the expansion and write its coefficients")
    common(p)
    p = sub.add_parser("info", help="describe the problem and its rank structure")
    common(p)
    p = sub.add_parser("residual", help="check decay of the residual of the truncated sum")
    common(p)
    checks(p)
    p = sub.add_parser("verify", help="residual, error decay and parameter diagnostics")
    common(p)
    checks(p)
    p.add_argument("--mode", choices=("npi", "simple"), help="verification mode (default from file)")
    p.add_argument("--varpi", type=_rational, help="integrability exponent for simple mode")
    p.add_argument("--display-k", dest="display_k", type=_nonneg_int,
                   help="measure the error against this shorter truncation")
    p.add_argument("--rtol", type=_positive_float, help="integrator relative tolerance")
    p.add_argument("--launch", type=_positive_float, action="append",
                   help="launch time (repeatable; default t0)")
    return parser


def _load(args):
    doc = load_problem(args.problem)
    if args.t0 is not None:
        from .problem_io import parse_problem, problem_to_dict
        data = problem_to_dict(doc.problem, doc.options)
        data["options"]["t0"] = args.t0
        if data["options"]["t_max"] <= args.t0:
            data["options"]["t_max"] = args.t0 * 1000
        doc = parse_problem(data, name=doc.problem.name)
    return doc


def _emit(text: str, out: str | None, default_name: str | None = None) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    path = Path(out)
    if default_name is not None and (path.is_dir() or out.endswith("/")):
        path = path / default_name
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _out_dir(out: str | None) -> Path | None:
    if out is None:
        return None
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _summary_text(summary: dict, fmt: str) -> str:
    if fmt == "structured":
        return json.dumps(summary, indent=2) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["check", "q", "slope", "sup", "worst_growth", "passed"])
    for rep in summary["checks"]:
        w.writerow([rep["label"], _g(rep["q"]), _g(rep["slope"]), _g(rep["sup"]),
                    _g(rep["worst_growth"]), int(rep["passed"])])
    return buf.getvalue()


# commands ---------------------------------------------------------------------------------------------

def cmd_expand(args) -> int:
    doc = _load(args)
    e = build_expansion(doc.problem, args.k)
    if args.format == "csv":
        text = expansion_to_csv(e)
    else:
        text = json.dumps(expansion_to_dict(e), indent=2) + "\n"
    _emit(text, args.out, "expansion." + ("csv" if args.format == "csv" else "json"))
    return EXIT_PASS


def cmd_info(args) -> int:
    doc = _load(args)
    p = doc.problem
    e = build_expansion(p, args.k)
    lam = p.eigenvalues()
    info = {
        "problem": p.name,
        "dimension": p.n,
        "parameters": p.m,
        "eigenvalues": [[float(x.real), float(x.imag)] for x in lam],
        "generators": [[float(g.real), float(g.imag)] for g in p.basis.generators],
        "eps": [{"a0": _frac(x.base.a0), "logs": [_frac(c) for c in x.base.logs],
                 "rank": _frac(x.rank), "summable": x.is_summable()} for x in p.eps],
        "ranks": [_frac(r) for r in e.ranks],
        "next_rank": _frac(e.next_rank),
        "kappa": [e.kappa(s) for s in range(1, e.k + 1)],
        "monomials": [[m.describe() for m, _ in level] for level in e.levels],
        "forcing_margin": _finite(doc.separation.min_distance),
        "separation_margin": _finite(min(e.separation.values(), default=float("inf"))),
        "npi_parameter_count": (int(np.sum(lam.real < 0))
                                if np.all(np.abs(lam.real) > 1e-8) else None),
    }
    if args.format == "structured":
        text = json.dumps(info, indent=2) + "\n"
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["field", "value"])
        for key, val in info.items():
            w.writerow([key, json.dumps(val)])
        text = buf.getvalue()
    _emit(text, args.out, "info." + ("csv" if args.format == "csv" else "json"))
    return EXIT_PASS


def _base_summary(args, doc, e) -> dict:
    out = {}
    if args.timestamp:
        out["generated"] = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    out.update({"problem": doc.problem.name, "k": args.k,
                "ranks": [_frac(r) for r in e.ranks], "next_rank": _frac(e.next_rank)})
    return out


def _residual_check(args, doc, e, out_dir):
    p = doc.problem
    t_max = args.t_max or doc.options.t_max
    from .verify import sample_times
    t_lo = max(p.t0, 100.0)
    if t_lo >= t_max:
        raise ValueError(f"sample range [{t_lo:g}, {t_max:g}] is empty")
    t = sample_times(t_lo, t_max, args.windows)
    res = residual(p, e, args.k, t, n_windows=args.windows)
    rep = res.report
    if args.claim_offset:
        rep = fit_decay(res.t, res.g, p.eps[0], rep.q + args.claim_offset, args.windows,
                        label=rep.label)
    if out_dir is not None:
        (out_dir / "residual.csv").write_text(samples_csv(res.t, res.g, p.eps[0], rep.q, "g"),
                                              encoding="utf-8")
    return rep


def cmd_residual(args) -> int:
    doc = _load(args)
    e = build_expansion(doc.problem, args.k)
    out_dir = _out_dir(args.out)
    rep = _residual_check(args, doc, e, out_dir)
    summary = _base_summary(args, doc, e)
    summary["checks"] = [_report_dict(rep)]
    summary["passed"] = bool(rep.passed)
    text = _summary_text(summary, args.format)
    if out_dir is None:
        sys.stdout.write(text)
    else:
        (out_dir / ("summary.json" if args.format == "structured" else "summary.csv")).write_text(
            text, encoding="utf-8")
    return EXIT_PASS if rep.passed else EXIT_FAIL


def cmd_verify(args) -> int:
    doc = _load(args)
    p = doc.problem
    mode = args.mode or doc.options.mode
    varpi = args.varpi if args.varpi is not None else doc.options.varpi
    k = args.k
    e = build_expansion(p, k)
    check_mode(p, mode, e, k, varpi)
    out_dir = _out_dir(args.out)
    rep_res = _residual_check(args, doc, e, out_dir)
    t_max = args.t_max or doc.options.t_max
    rtol = args.rtol or doc.options.rtol
    ec = error_check(p, e, k, mode, varpi, args.display_k, args.launch, t_max, rtol,
                     n_windows=args.windows)
    reports = ec.reports
    if args.claim_offset:
        reports = [fit_decay(tr.t, r, p.eps[0], ec.q + args.claim_offset, args.windows,
                             label=rep.label)
                   for tr, r, rep in zip(ec.trajectories, ec.displays, ec.reports)]
    if out_dir is not None:
        for i, (tr, r) in enumerate(zip(ec.trajectories, ec.displays)):
            (out_dir / f"error_{i}.csv").write_text(
                samples_csv(tr.t, r, p.eps[0], reports[i].q, "r"), encoding="utf-8")
    summary = _base_summary(args, doc, e)
    summary["mode"] = mode
    summary["varpi"] = None if varpi is None else _frac(varpi)
    summary["checks"] = [_report_dict(rep_res)] + [_report_dict(r) for r in reports]
    try:
        diag = gamma_first_order(p, e)
        summary["gamma"] = {str(l): [[float(z.real), float(z.imag)] for z in g]
                            for l, g in sorted(diag.gamma.items())}
    except (SpectrumError, TriangularizationError, ValueError) as exc:
        diag = None
        summary["gamma"] = f"unavailable: {exc}"
    try:
        pc = parameter_count(p, diag, mode, e, k, varpi)
        summary["parameter_count"] = pc.count
        summary["parameter_verdicts"] = pc.verdicts
    except (SpectrumError, TriangularizationError, ValueError) as exc:
        summary["parameter_count"] = f"unavailable: {exc}"
    summary["integration"] = [{"launch": float(tr.t[0]), "accepted": tr.n_accepted,
                               "rejected": tr.n_rejected, "evaluations": tr.n_fev}
                              for tr in ec.trajectories]
    passed = bool(rep_res.passed and all(r.passed for r in reports))
    summary["passed"] = passed
    text = _summary_text(summary, args.format)
    if out_dir is None:
        sys.stdout.write(text)
    else:
        (out_dir / ("summary.json" if args.format == "structured" else "summary.csv")).write_text(
            text, encoding="utf-8")
    return EXIT_PASS if passed else EXIT_FAIL


COMMANDS = {"expand": cmd_expand, "info": cmd_info, "residual": cmd_residual,
            "verify": cmd_verify}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ProblemFormatError, SpectrumError, ResonanceError, TriangularizationError,
            LatticeError, ValueError) as exc:
        print(f"asymptex: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except IntegrationError as exc:
        print(f"asymptex: integration failed: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
