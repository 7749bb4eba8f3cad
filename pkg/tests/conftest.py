import os
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dpp import Affine, Box, ConvexProgram, DiagQuadratic, LinearProgram
from dpp.distributed import GraphProblem, GraphTopology, NodeProgram
from dpp.problem_io import parse_problem_file
from dpp.stochastic import RandomEventModel, StochasticProblem, build_downlink_problem

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

ROOT = Path(__file__).resolve().parent.parent
PROBLEMS = ROOT / "problems"
GOLDEN = Path(__file__).resolve().parent / "golden"


def acceptance_lp():
    return LinearProgram(b=[1, 1], A=[[-1, -1]], c=[-1], x_min=[0, 0], x_max=[1, 1])


def equality_program():
    return ConvexProgram(f=Affine([-1.0]), feasible_set=Box([0], [1]), w=[Affine([1.0])], d=[0.3])


def downlink_problem():
    # state A = (2, 1): user 1 gets rate 2 at full power, user 2 gets rate 1; B mirrors it
    return build_downlink_problem(
        2,
        arrivals=[[(0, 0.6), (1, 0.4)], [(0, 0.5), (1, 0.5)]],
        channels=[((2, 1), 0.5), ((1, 2), 0.5)],
        power_levels=[0, 1],
        rates=lambda p, s: (s[0] * p[0], s[1] * p[1]),
    )


def toy_stochastic():
    # one event, options (0, 1) and (1, -1), c = 0: optimum 1/2 by mixing
    return StochasticProblem(c=[0.0], events=RandomEventModel(["only"], [1.0]), options=[[[0, 1], [1, -1]]])


def two_event_toy():
    return StochasticProblem(
        c=[0.5],
        events=RandomEventModel(["lo", "hi"], [0.5, 0.5]),
        options=[[[0, 1], [1, 0]], [[0, 2], [2, 0]]],
    )


def line_consensus():
    targets = (0.2, 0.5, 0.9)
    programs = [NodeProgram(f=DiagQuadratic([1.0], [-2 * p], p * p)) for p in targets]
    return GraphProblem(GraphTopology(3, [(0, 1), (1, 2)]), programs, Box([0], [1])), targets


def shared_constraint_nodes():
    f1 = DiagQuadratic([1, 1], [-1.6, -0.6], 0.8**2 + 0.3**2)
    f2 = DiagQuadratic([1, 1], [-1.8, -1.0], 0.9**2 + 0.5**2)
    g = Affine([1.0, 0.0])
    box = Box([0], [1])
    return (
        GraphTopology(2, [(0, 1)]),
        [NodeProgram(f=f1, x_box=box, g=g), NodeProgram(f=f2, x_box=box, g=g)],
        Box([0], [1]),
        1.0,
    )


@pytest.fixture
def lp():
    return acceptance_lp()


@pytest.fixture
def downlink():
    return downlink_problem()


@pytest.fixture
def problems_dir():
    return PROBLEMS


def load(name):
    return parse_problem_file(PROBLEMS / name)


def rng(seed=0):
    return np.random.default_rng(seed)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
