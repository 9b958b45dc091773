import copy
from fractions import Fraction

import numpy as np
import pytest
import yaml
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from asymptex.expansion import build_expansion
from asymptex.fixtures import (
    almost_periodic_example,
    decaying_example,
    linear_example,
    periodic_example,
)
from asymptex.problem_io import (
    Options,
    ProblemFormatError,
    load_problem,
    parse_problem,
    problem_to_dict,
    save_problem,
    serialize_problem,
)

FIXTURES = [periodic_example, decaying_example, almost_periodic_example, linear_example]


@pytest.fixture(scope="module")
def base_doc():
    return problem_to_dict(periodic_example())


@pytest.mark.parametrize("make", FIXTURES)
def test_round_trip_exact(make):
    p = make()
    text = serialize_problem(p)
    q = parse_problem(text).problem
    assert serialize_problem(q) == text
    assert np.array_equal(p.A, q.A)
    t = np.linspace(100, 200, 11)
    assert np.array_equal(p.f(t), q.f(t))


def test_save_and_load(tmp_path):
    path = tmp_path / "ap.yaml"
    opts = Options(mode="simple", varpi=Fraction(11, 10), t_max=1e4)
    save_problem(path, almost_periodic_example(), opts)
    doc = load_problem(path)
    assert doc.problem.name == "almost_periodic"
    assert doc.options.mode == "simple" and doc.options.varpi == Fraction(11, 10)
    assert doc.options.t_max == 1e4
    assert doc.separation.passed


def test_missing_file(tmp_path):
    with pytest.raises(ProblemFormatError):
        load_problem(tmp_path / "nope.yaml")


def test_expansion_from_document(base_doc):
    e = build_expansion(parse_problem(base_doc).problem, 2)
    assert e.kappa(1) == 2 and e.kappa(2) == 5


def test_empty_nonlinearities_give_trivial_terms(base_doc):
    doc = copy.deepcopy(base_doc)
    doc["nonlinearities"] = []
    p = parse_problem(doc).problem
    assert all(not nl.terms for nl in p.nonlinearities)
    e = build_expansion(p, 1)
    assert all(not phi for _, phi in e.levels[0])


def _error(doc):
    with pytest.raises(ProblemFormatError) as info:
        parse_problem(doc)
    return info.value


def test_rank_ordering_violation(base_doc):
    doc = copy.deepcopy(base_doc)
    doc["eps"][0]["rank"] = 1
    doc["eps"][1]["rank"] = "1/2"
    err = _error(doc)
    assert err.path.startswith("eps[1]")


def test_bad_alpha_length(base_doc):
    doc = copy.deepcopy(base_doc)
    doc["nonlinearities"][0]["terms"][0]["alpha"] = [0, 1, 0]
    err = _error(doc)
    assert err.path.startswith("nonlinearities[0].terms[0].alpha")


def test_negative_alpha_entry(base_doc):
    doc = copy.deepcopy(base_doc)
    doc["nonlinearities"][0]["terms"][0]["alpha"] = [0, -1]
    assert _error(doc).path == "nonlinearities[0].terms[0].alpha[1]"


def test_invalid_yaml():
    err = _error("dimension: [1, 2\nmatrix: x")
    assert "line" in err.path


def test_unknown_field(base_doc):
    doc = copy.deepcopy(base_doc)
    doc["colour"] = "blue"
    assert "colour" in str(_error(doc))


def test_t0_below_log_domain(base_doc):
    doc = copy.deepcopy(base_doc)
    doc["eps"][1]["logs"] = [-1, -1]
    doc["options"]["t0"] = 2.0
    assert _error(doc).path == "options.t0"


def test_wrong_matrix_shape(base_doc):
    doc = copy.deepcopy(base_doc)
    doc["matrix"] = [[1.0, 0.0]]
    assert _error(doc).path == "matrix"


def test_forcing_resonance():
    doc = problem_to_dict(linear_example())
    doc["forcing"][0] = [{"key": [0], "re": 1.0, "im": 0.0}]
    doc["matrix"] = [[0.0, 0.0], [0.0, -1.0]]
    assert _error(doc).path == "forcing"


def test_bad_mode(base_doc):
    doc = copy.deepcopy(base_doc)
    doc["options"]["mode"] = "fast"
    assert _error(doc).path == "options.mode"


def _mutations(doc):
    """Paths into a nested document."""
    out = []

    def walk(node, trail):
        out.append(trail)
        if isinstance(node, dict):
            for k, v in node.items():
                walk(v, trail + (k,))
        elif isinstance(node, list):
            for i, v in enumerate(node):
                walk(v, trail + (i,))

    walk(doc, ())
    return out


JUNK = st.one_of(st.none(), st.booleans(), st.integers(-5, 5), st.floats(allow_nan=True),
                 st.text(max_size=4), st.lists(st.integers(-2, 2), max_size=3),
                 st.dictionaries(st.text(max_size=3), st.integers(), max_size=2))


@settings(max_examples=150, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(data=st.data())
def test_fuzz_only_format_errors(base_doc, data):
    doc = copy.deepcopy(base_doc)
    paths = _mutations(doc)
    trail = data.draw(st.sampled_from(paths[1:]))
    node = doc
    for key in trail[:-1]:
        node = node[key]
    node[trail[-1]] = data.draw(JUNK)
    try:
        parse_problem(doc)
    except ProblemFormatError:
        pass


@settings(max_examples=50, deadline=None)
@given(st.text(max_size=60))
def test_fuzz_text(text):
    try:
        parse_problem(text)
    except ProblemFormatError:
        pass
