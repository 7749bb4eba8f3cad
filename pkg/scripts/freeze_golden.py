"""Regenerate the frozen traces in tests/golden.

Run only when an intentional engine change alters the traces; the
acceptance suite checks the invariants on these files and that the
engines still reproduce them.
"""

from pathlib import Path

from dpp.convex import run_convex
from dpp.lp import run_lp
from dpp.problem_io import parse_problem_file
from dpp.stochastic import run

ROOT = Path(__file__).resolve().parent.parent
PROBLEMS = ROOT / "problems"
GOLDEN = ROOT / "tests" / "golden"

# (file name, problem file, epsilon, slots, seed)
GOLDEN_RUNS = [
    ("lp_eps0.05.csv", "lp_acceptance.json", 0.05, 1600, None),
    ("lp_eps0.01.csv", "lp_acceptance.json", 0.01, 10000, None),
    ("equality_eps0.1.csv", "equality.json", 0.1, 400, None),
    ("quadratic_eps0.1.csv", "quadratic.json", 0.1, 400, None),
    ("downlink_eps0.05_seed1.csv", "downlink.json", 0.05, 1600, 1),
    ("toy_stochastic_eps0.1_seed7.csv", "toy_stochastic.json", 0.1, 400, 7),
]


def generate(name, problem_file, eps, slots, seed):
    loaded = parse_problem_file(PROBLEMS / problem_file)
    v = 1.0 / eps
    if loaded.kind == "lp":
        return run_lp(loaded.problem, v, slots)
    if loaded.kind == "convex":
        return run_convex(loaded.problem, v, slots, loaded.inner)
    return run(loaded.problem, v, slots, seed)


def main():
    GOLDEN.mkdir(parents=True, exist_ok=True)
    for entry in GOLDEN_RUNS:
        generate(*entry).write_csv(GOLDEN / entry[0])
        print("wrote", entry[0])


if __name__ == "__main__":
    main()
