"""Shared fixtures: the benchmark game on a ring and one converged run of the shipped config."""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from robust_gnep.config import build_game, build_graph, load_shipped
from robust_gnep.graph import make_topology
from robust_gnep.instances import benchmark_game
from robust_gnep.robustify import build_extended_game, to_canonical
from robust_gnep.solver import SolverParams, prepare, run_distributed

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def ring():
    return make_topology("ring", 5)


@pytest.fixture(scope="session")
def game(ring):
    return benchmark_game(ring)


@pytest.fixture(scope="session")
def extended(game):
    return build_extended_game(game)


@pytest.fixture(scope="session")
def canonical(extended, ring):
    return to_canonical(extended, ring)


@pytest.fixture(scope="session")
def op_pc(canonical):
    return prepare(canonical, SolverParams())


@pytest.fixture(scope="session")
def shipped():
    return load_shipped("benchmark")


@pytest.fixture(scope="session")
def shipped_ring(shipped):
    graph = build_graph(shipped, "ring")
    g = build_game(shipped, graph)
    eg = build_extended_game(g)
    return g, eg, to_canonical(eg, graph)


@pytest.fixture(scope="session")
def converged(shipped, shipped_ring):
    """Ripfbf on the shipped ring instance at the shipped tolerance."""
    g, eg, cg = shipped_ring
    params = shipped.solver_params("ripfbf")
    rep = run_distributed(cg, params)
    assert rep.converged
    return g, eg, cg, params, rep


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
