import json

import numpy as np
import pytest
from conftest import PROBLEMS, downlink_problem

from dpp.convex import ConvexProgram
from dpp.distributed import GraphProblem
from dpp.functions import DiagQuadratic
from dpp.lp import LinearProgram
from dpp.problem_io import SchemaError, parse_problem, parse_problem_file
from dpp.stochastic import StochasticProblem

LP_DOC = {"kind": "lp", "b": [1, 1], "A": [[-1, -1]], "c": [-1], "x_min": [0, 0], "x_max": [1, 1]}


def test_minimal_lp():
    loaded = parse_problem(LP_DOC)
    assert loaded.kind == "lp"
    lp = loaded.problem
    assert isinstance(lp, LinearProgram)
    assert lp.b.tolist() == [1, 1] and lp.A.tolist() == [[-1, -1]] and lp.c.tolist() == [-1]
    assert lp.x_min.tolist() == [0, 0] and lp.x_max.tolist() == [1, 1]


def test_lp_without_constraints():
    lp = parse_problem({"kind": "lp", "b": [1], "A": [], "c": [], "x_min": [0], "x_max": [1]}).problem
    assert lp.K == 0


@pytest.mark.parametrize(
    "patch,match",
    [
        ({"x_min": [0, 2]}, "index 1"),
        ({"A": [[1, 2, 3]]}, "A: expected shape"),
        ({"c": [1, 2]}, "c"),
        ({"b": ["x", 1]}, "b"),
        ({"b": None}, "b"),
    ],
)
def test_lp_errors_name_fields(patch, match):
    doc = {**LP_DOC, **patch}
    if patch.get("b", 0) is None:
        del doc["b"]
    with pytest.raises(SchemaError, match=match):
        parse_problem(doc)


def test_unknown_kind():
    with pytest.raises(SchemaError, match="unknown problem kind"):
        parse_problem({"kind": "qp"})
    with pytest.raises(SchemaError, match="kind"):
        parse_problem({})
    with pytest.raises(SchemaError):
        parse_problem([1, 2])


def test_probabilities_must_sum_to_one():
    doc = {
        "kind": "stochastic",
        "c": [0],
        "events": [
            {"id": "a", "probability": 0.4, "options": [[0, 0]]},
            {"id": "b", "probability": 0.5, "options": [[0, 0]]},
        ],
    }
    with pytest.raises(SchemaError, match="event model"):
        parse_problem(doc)


def test_disconnected_graph():
    doc = json.loads((PROBLEMS / "consensus_line.json").read_text())
    doc["links"] = [[0, 1]]
    with pytest.raises(SchemaError, match="connected"):
        parse_problem(doc)


def test_nonconvex_quadratic_rejected():
    doc = {"kind": "convex", "box": {"lower": [0], "upper": [1]}, "objective": {"q": [-1], "a": [0]}}
    with pytest.raises(SchemaError, match=r"objective\.q"):
        parse_problem(doc)


def test_non_affine_equality_rejected():
    doc = {
        "kind": "convex",
        "box": {"lower": [0], "upper": [1]},
        "objective": {"a": [1]},
        "equalities": [{"function": {"q": [1], "a": [0]}, "d": 0}],
    }
    with pytest.raises(SchemaError, match="affine"):
        parse_problem(doc)


def test_unknown_function_keys():
    doc = {"kind": "convex", "box": {"lower": [0], "upper": [1]}, "objective": {"a": [1], "exp": 2}}
    with pytest.raises(SchemaError, match="unknown keys"):
        parse_problem(doc)


def test_json_syntax_error_has_position(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "kind": "lp",\n  "b": [1,]\n}\n')
    with pytest.raises(SchemaError, match="line 3"):
        parse_problem_file(p)
    with pytest.raises(SchemaError, match="cannot read"):
        parse_problem_file(tmp_path / "missing.json")


def test_inner_block():
    doc = {
        "kind": "convex",
        "box": {"lower": [0], "upper": [1]},
        "objective": {"q": [1], "a": [0]},
        "inner": {"max_iters": 50},
    }
    assert parse_problem(doc).inner.max_iters == 50
    doc["inner"] = {"bogus": 1}
    with pytest.raises(SchemaError, match="inner"):
        parse_problem(doc)


@pytest.mark.parametrize(
    "name,cls",
    [
        ("lp_acceptance.json", LinearProgram),
        ("equality.json", ConvexProgram),
        ("quadratic.json", ConvexProgram),
        ("downlink.json", StochasticProblem),
        ("toy_stochastic.json", StochasticProblem),
        ("consensus_line.json", GraphProblem),
        ("shared_constraint.json", GraphProblem),
    ],
)
def test_corpus_files_parse(name, cls):
    loaded = parse_problem_file(PROBLEMS / name)
    assert isinstance(loaded.problem, cls)


def test_downlink_file_matches_builder():
    from_file = parse_problem_file(PROBLEMS / "downlink.json").problem
    built = downlink_problem()
    assert from_file.events.events == built.events.events
    assert np.allclose(from_file.events.probabilities, built.events.probabilities, atol=1e-15)
    for a, b in zip(from_file.options, built.options):
        assert np.array_equal(a, b)
    assert np.array_equal(from_file.c, built.c)


def test_consensus_file_objectives():
    prob = parse_problem_file(PROBLEMS / "consensus_line.json").problem
    assert prob.topology.links == [(0, 1), (1, 2)]
    assert isinstance(prob.programs[2].f, DiagQuadratic)
    assert prob.programs[2].f(np.array([0.9])) == pytest.approx(0.0, abs=1e-15)
