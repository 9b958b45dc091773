"""Problem documents: a YAML schema for the quasilinear system and its options.

A document has the sections ``dimension``, ``matrix``, ``basis``,
``forcing``, ``eps``, ``nonlinearities`` and ``options``.  Lattice points are
always integer vectors; coefficients are ``re``/``im`` pairs; ranks and
power-log exponents may be integers or ``"p/q"`` strings.

Example
-------
.. code-block:: yaml

    dimension: 2
    matrix: [[-1.0, 0.0], [0.0, -2.0]]
    basis:
      generators: [[0.0, 1.0]]
      signed: [true]
    forcing:
    - - {key: [1], re: 0.0, im: -0.5}
      - {key: [-1], re: 0.0, im: 0.5}
    - - {key: [1], re: 0.5, im: 0.0}
      - {key: [-1], re: 0.5, im: 0.0}
    eps:
    - {a0: 1, logs: [], coef: 1.0, rank: 1}
    - {a0: 1, logs: [-1], coef: 1.0, rank: 1}
    nonlinearities:
    - index: 1
      terms:
      - alpha: [1, 0]
        coef:
        - - {key: [0], re: 1.0, im: 0.0}
        - []
    options: {t0: 100.0, a: 1.0}
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from fractions import Fraction
from pathlib import Path

import numpy as np
import yaml

from .expansion import PolyNonlinearity, Problem
from .osc import DELTA_MIN, GeneratorBasis, LatticeError, OscFn, OscVector, separation_check
from .ranks import EpsSpec, PowerLogMonomial

MODES = ("npi", "simple")


class ProblemFormatError(ValueError):
    """A malformed document; ``path`` locates the offending field."""

    def __init__(self, path: str, message: str):
        self.path = path or "<document>"
        self.message = message
        super().__init__(f"{self.path}: {message}")


@dataclass
class Options:
    """Run options stored alongside the problem data."""

    t0: float = 100.0
    a: float = 1.0
    delta_min: float = DELTA_MIN
    mode: str = "npi"
    varpi: Fraction | None = None
    rtol: float = 1e-10
    t_max: float = 1e5


@dataclass
class ProblemDocument:
    problem: Problem
    options: Options = field(default_factory=Options)
    separation: object = None


# readers -------------------------------------------------------------------------------

def _at(path: str, key) -> str:
    if isinstance(key, int):
        return f"{path}[{key}]"
    return f"{path}.{key}" if path else str(key)


def _require(node, key, path):
    if not isinstance(node, dict):
        raise ProblemFormatError(path, "expected a mapping")
    if key not in node:
        raise ProblemFormatError(_at(path, key), "missing required field")
    return node[key]


def _list(node, path, length=None):
    if not isinstance(node, list):
        raise ProblemFormatError(path, "expected a list")
    if length is not None and len(node) != length:
        raise ProblemFormatError(path, f"expected {length} entries, found {len(node)}")
    return node


def _real(node, path) -> float:
    if isinstance(node, bool) or not isinstance(node, (int, float)):
        raise ProblemFormatError(path, "expected a real number")
    x = float(node)
    if not math.isfinite(x):
        raise ProblemFormatError(path, "expected a finite number")
    return x


def _int(node, path) -> int:
    if isinstance(node, bool) or not isinstance(node, int):
        raise ProblemFormatError(path, "expected an integer")
    return int(node)


def _rational(node, path) -> Fraction:
    if isinstance(node, bool):
        raise ProblemFormatError(path, "expected a rational number")
    if isinstance(node, int):
        return Fraction(node)
    if isinstance(node, str):
        try:
            return Fraction(node.strip())
        except (ValueError, ZeroDivisionError):
            raise ProblemFormatError(path, f"cannot read {node!r} as a rational") from None
    if isinstance(node, float) and math.isfinite(node):
        return Fraction(node).limit_denominator(10**9)
    raise ProblemFormatError(path, "expected a rational number")


def _bool(node, path) -> bool:
    if not isinstance(node, bool):
        raise ProblemFormatError(path, "expected true or false")
    return node


def _known_keys(node, allowed, path):
    extra = sorted(set(node) - set(allowed), key=str)
    if extra:
        raise ProblemFormatError(_at(path, extra[0]), "unknown field")


def _read_basis(node, path) -> GeneratorBasis:
    if not isinstance(node, dict):
        raise ProblemFormatError(path, "expected a mapping")
    _known_keys(node, ("generators", "signed"), path)
    gpath = _at(path, "generators")
    gens = []
    for i, g in enumerate(_list(_require(node, "generators", path), gpath)):
        p = _at(gpath, i)
        pair = _list(g, p, 2)
        gens.append(complex(_real(pair[0], _at(p, 0)), _real(pair[1], _at(p, 1))))
    if not gens:
        raise ProblemFormatError(gpath, "at least one generator is required")
    signed = None
    if "signed" in node:
        spath = _at(path, "signed")
        signed = tuple(_bool(s, _at(spath, i))
                       for i, s in enumerate(_list(node["signed"], spath, len(gens))))
    try:
        return GeneratorBasis(tuple(gens), signed)
    except (ValueError, LatticeError) as exc:
        raise ProblemFormatError(path, str(exc)) from None


def _read_fn(node, basis: GeneratorBasis, path) -> OscFn:
    terms: dict = {}
    for i, term in enumerate(_list(node, path)):
        p = _at(path, i)
        if not isinstance(term, dict):
            raise ProblemFormatError(p, "expected a mapping with key, re, im")
        _known_keys(term, ("key", "re", "im"), p)
        kpath = _at(p, "key")
        key = tuple(_int(v, _at(kpath, j))
                    for j, v in enumerate(_list(_require(term, "key", p), kpath, basis.dim)))
        try:
            key = basis.check(key)
        except LatticeError as exc:
            raise ProblemFormatError(kpath, str(exc)) from None
        if key in terms:
            raise ProblemFormatError(kpath, "duplicate lattice point")
        re = _real(term.get("re", 0.0), _at(p, "re"))
        im = _real(term.get("im", 0.0), _at(p, "im"))
        terms[key] = complex(re, im)
    return OscFn(basis, terms)


def _read_vector(node, basis, n, path) -> OscVector:
    comps = _list(node, path, n)
    return OscVector([_read_fn(c, basis, _at(path, j)) for j, c in enumerate(comps)], basis)


def _read_eps(node, path) -> list:
    out = []
    for i, item in enumerate(_list(node, path)):
        p = _at(path, i)
        if not isinstance(item, dict):
            raise ProblemFormatError(p, "expected a mapping")
        _known_keys(item, ("a0", "logs", "coef", "rank"), p)
        a0 = _rational(_require(item, "a0", p), _at(p, "a0"))
        lpath = _at(p, "logs")
        logs = tuple(_rational(v, _at(lpath, j))
                     for j, v in enumerate(_list(item.get("logs", []), lpath)))
        if len(logs) > 2:
            raise ProblemFormatError(lpath, "at most two iterated logarithms are supported")
        coef = _real(item.get("coef", 1.0), _at(p, "coef"))
        if coef <= 0:
            raise ProblemFormatError(_at(p, "coef"), "coefficient must be positive")
        rank = _rational(item["rank"], _at(p, "rank")) if "rank" in item else None
        try:
            out.append(EpsSpec(i + 1, PowerLogMonomial(coef, a0, logs), rank))
        except ValueError as exc:
            raise ProblemFormatError(p, str(exc)) from None
    if not out:
        raise ProblemFormatError(path, "at least one parameter is required")
    for i in range(1, len(out)):
        if out[i].rank < out[i - 1].rank:
            raise ProblemFormatError(
                _at(_at(path, i), "rank"),
                f"ranks must be nondecreasing ({out[i].rank} follows {out[i - 1].rank})")
    return out


def _read_nonlinearities(node, basis, n, m, path) -> list:
    by_index: dict = {}
    for i, item in enumerate(_list(node, path)):
        p = _at(path, i)
        if not isinstance(item, dict):
            raise ProblemFormatError(p, "expected a mapping")
        _known_keys(item, ("index", "terms"), p)
        idx = _int(_require(item, "index", p), _at(p, "index"))
        if not 1 <= idx <= m:
            raise ProblemFormatError(_at(p, "index"), f"index must lie in 1..{m}")
        if idx in by_index:
            raise ProblemFormatError(_at(p, "index"), "duplicate nonlinearity index")
        terms = {}
        tpath = _at(p, "terms")
        for j, term in enumerate(_list(item.get("terms", []), tpath)):
            q = _at(tpath, j)
            if not isinstance(term, dict):
                raise ProblemFormatError(q, "expected a mapping with alpha, coef")
            _known_keys(term, ("alpha", "coef"), q)
            apath = _at(q, "alpha")
            alpha = tuple(_int(v, _at(apath, r))
                          for r, v in enumerate(_list(_require(term, "alpha", q), apath, n)))
            for r, a in enumerate(alpha):
                if a < 0:
                    raise ProblemFormatError(_at(apath, r), "multi-index entries must be nonnegative")
            if alpha in terms:
                raise ProblemFormatError(apath, "duplicate multi-index")
            terms[alpha] = _read_vector(_require(term, "coef", q), basis, n, _at(q, "coef"))
        by_index[idx] = PolyNonlinearity(idx, terms, n, basis)
    return [by_index.get(l, PolyNonlinearity(l, {}, n, basis)) for l in range(1, m + 1)]


def _read_options(node, path) -> Options:
    if node is None:
        return Options()
    if not isinstance(node, dict):
        raise ProblemFormatError(path, "expected a mapping")
    names = [f.name for f in fields(Options)]
    _known_keys(node, names, path)
    opts = Options()
    for name in ("t0", "a", "delta_min", "rtol", "t_max"):
        if name in node:
            setattr(opts, name, _real(node[name], _at(path, name)))
    if "mode" in node:
        if node["mode"] not in MODES:
            raise ProblemFormatError(_at(path, "mode"), f"expected one of {', '.join(MODES)}")
        opts.mode = node["mode"]
    if "varpi" in node and node["varpi"] is not None:
        opts.varpi = _rational(node["varpi"], _at(path, "varpi"))
    for name in ("a", "delta_min", "rtol"):
        if getattr(opts, name) <= 0:
            raise ProblemFormatError(_at(path, name), "must be positive")
    if opts.t_max <= opts.t0:
        raise ProblemFormatError(_at(path, "t_max"), "must exceed t0")
    return opts


def parse_problem(doc, name: str = "") -> ProblemDocument:
    """Build a validated problem from YAML text or an already loaded mapping.

    Raises
    ------
    ProblemFormatError
        For any schema violation, ordering violation, log-domain violation
        or resonance of the forcing with the spectrum.
    """
    if isinstance(doc, (str, bytes)):
        try:
            doc = yaml.safe_load(doc)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else ""
            raise ProblemFormatError(where, f"invalid YAML: {getattr(exc, 'problem', exc)}") from None
    if not isinstance(doc, dict):
        raise ProblemFormatError("", "the document must be a mapping")
    _known_keys(doc, ("dimension", "matrix", "basis", "forcing", "eps", "nonlinearities",
                      "options", "name"), "")
    n = _int(_require(doc, "dimension", ""), "dimension")
    if n < 2:
        raise ProblemFormatError("dimension", "dimension must be at least 2")
    rows = _list(_require(doc, "matrix", ""), "matrix", n)
    A = np.array([[_real(x, _at(_at("matrix", i), j))
                   for j, x in enumerate(_list(row, _at("matrix", i), n))]
                  for i, row in enumerate(rows)])
    basis = _read_basis(_require(doc, "basis", ""), "basis")
    f = _read_vector(_require(doc, "forcing", ""), basis, n, "forcing")
    eps = _read_eps(_require(doc, "eps", ""), "eps")
    nls = _read_nonlinearities(doc.get("nonlinearities") or [], basis, n, len(eps),
                               "nonlinearities")
    opts = _read_options(doc.get("options"), "options")
    if "name" in doc and not isinstance(doc["name"], str):
        raise ProblemFormatError("name", "expected a string")
    try:
        problem = Problem(A, f, eps, nls, a=opts.a, t0=opts.t0, name=doc.get("name", name),
                          delta_min=opts.delta_min)
    except ValueError as exc:
        path = "options.t0" if "t0" in str(exc) else ""
        raise ProblemFormatError(path, str(exc)) from None
    lam = problem.eigenvalues()
    sep = separation_check(f, lam, opts.delta_min)
    if not sep.passed:
        raise ProblemFormatError(
            "forcing", f"exponent {sep.worst_exponent:.6g} (lattice {sep.worst_key}) is "
            f"{sep.min_distance:.3g} from eigenvalue {sep.worst_lambda:.6g}, "
            f"below the margin {opts.delta_min:g}")
    return ProblemDocument(problem, opts, sep)


def load_problem(path) -> ProblemDocument:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ProblemFormatError(str(path), f"cannot read file: {exc.strerror}") from None
    return parse_problem(text, name=path.stem)


# writers ------------------------------------------------------------------------------------

def _num(x: float):
    x = float(x)
    return 0.0 if x == 0 else x


def _rat(x: Fraction):
    x = Fraction(x)
    return x.numerator if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


def _fn_node(fn: OscFn) -> list:
    return [{"key": list(k), "re": _num(c.real), "im": _num(c.imag)}
            for k, c in sorted(fn.terms.items())]


def problem_to_dict(problem: Problem, options: Options | None = None) -> dict:
    """Canonical mapping form (sorted lattice points and multi-indices)."""
    opts = options or Options(t0=problem.t0, a=problem.a, delta_min=problem.delta_min)
    basis = problem.basis
    out = {
        "name": problem.name,
        "dimension": problem.n,
        "matrix": [[_num(x) for x in row] for row in problem.A],
        "basis": {
            "generators": [[_num(g.real), _num(g.imag)] for g in basis.generators],
            "signed": list(basis.signed),
        },
        "forcing": [_fn_node(fn) for fn in problem.f],
        "eps": [{"a0": _rat(e.base.a0), "logs": [_rat(c) for c in e.base.logs],
                 "coef": _num(e.base.coef), "rank": _rat(e.rank)} for e in problem.eps],
        "nonlinearities": [
            {"index": nl.index,
             "terms": [{"alpha": list(alpha), "coef": [_fn_node(fn) for fn in coeff]}
                       for alpha, coeff in sorted(nl.terms.items())]}
            for nl in problem.nonlinearities if nl.terms],
        "options": {
            "t0": _num(opts.t0), "a": _num(opts.a), "delta_min": _num(opts.delta_min),
            "mode": opts.mode, "varpi": None if opts.varpi is None else _rat(opts.varpi),
            "rtol": _num(opts.rtol), "t_max": _num(opts.t_max),
        },
    }
    return out


class _Dumper(yaml.SafeDumper):
    pass


def _flow_leaf_lists(dumper, data):
    flow = all(not isinstance(x, (list, dict)) for x in data)
    return dumper.represent_sequence("tag:yaml.org,2002:seq", data, flow_style=flow)


def _flow_small_maps(dumper, data):
    flow = all(not isinstance(v, dict) and not (isinstance(v, list) and v and
                                                isinstance(v[0], (list, dict)))
               for v in data.values()) and "terms" not in data and "coef" not in data
    return dumper.represent_mapping("tag:yaml.org,2002:map", data.items(), flow_style=flow)


_Dumper.add_representer(list, _flow_leaf_lists)
_Dumper.add_representer(dict, _flow_small_maps)


def dump_yaml(data) -> str:
    return yaml.dump(data, Dumper=_Dumper, sort_keys=False, width=100, allow_unicode=False)


def serialize_problem(problem: Problem, options: Options | None = None) -> str:
    """YAML text that :func:`parse_problem` maps back to an equal problem."""
    return dump_yaml(problem_to_dict(problem, options))


def save_problem(path, problem: Problem, options: Options | None = None) -> None:
    Path(path).write_text(serialize_problem(problem, options), encoding="utf-8")


__all__ = [
    "Options",
    "ProblemDocument",
    "ProblemFormatError",
    "dump_yaml",
    "load_problem",
    "parse_problem",
    "problem_to_dict",
    "save_problem",
    "serialize_problem",
]
