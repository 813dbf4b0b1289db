import numpy as np
import pytest

from robust_gnep.errors import InfeasibleError
from robust_gnep.geometry import worst_case_value
from robust_gnep.graph import CommGraph
from robust_gnep.model import Agent, Polytope, QuadraticCost, UncertainConstraint, UncertainGame, UncertaintySets
from robust_gnep.robustify import build_extended_game, to_canonical
from robust_gnep.solver import SolverParams, initial_point, prepare, run_distributed
from robust_gnep.verify import (best_response, best_response_gap, check_robust_feasibility, kkt_constant,
                                kkt_report, kkt_residual)

# gap of each agent at x = 0, checked by hand: agent i plays min(10 i, 15) per coordinate
GAPS_AT_ORIGIN = [0.0, 100.0, 375.0, 675.0, 975.0]


def test_converged_point_is_robust_feasible(converged):
    g, *_, rep = converged
    report = check_robust_feasibility(g, rep.x)
    assert report.feasible
    c = report.constraints[0]
    assert c.n_vertices == 64 and c.min_rhs == 65.0
    assert c.min_vertex_slack >= -1e-6
    assert c.slack == pytest.approx(c.min_vertex_slack, abs=1e-12)
    assert max(report.omega_violation) <= 1e-8


def test_violation_names_vertex(game):
    x = np.full(10, 15.0)
    report = check_robust_feasibility(game, x)
    assert not report.feasible
    c = report.constraints[0]
    assert c.max_lhs == pytest.approx(300.0) and c.min_rhs == 65.0
    *dl, dg = c.worst_vertex
    assert all(float(d[0]) == 1.0 for d in dl) and float(dg[0]) == -10.0


def test_zero_uncertainty_is_nominal_check(game):
    nom = game.nominal()
    x = np.full(10, 7.4)
    assert check_robust_feasibility(nom, x).feasible
    assert not check_robust_feasibility(nom, np.full(10, 7.6)).feasible
    assert check_robust_feasibility(nom, x).constraints[0].min_rhs == 75.0


def test_feasibility_ignores_solver_duals(game):
    # only x enters; the same x gives the same verdict whatever else is around
    x = np.zeros(10)
    a = check_robust_feasibility(game, x).summary()
    b = check_robust_feasibility(game, list(game.split(x))).summary()
    assert a == b


def test_gaps_at_converged_point(converged):
    g, *_, rep = converged
    gaps = [best_response_gap(g, rep.x, i) for i in range(g.n_agents)]
    assert max(gaps) <= 1e-4 and min(gaps) >= -1e-6


def test_gaps_at_origin(game):
    gaps = [best_response_gap(game, np.zeros(10), i) for i in range(5)]
    np.testing.assert_allclose(gaps, GAPS_AT_ORIGIN, atol=1e-6)
    assert max(gaps) > 0.1


def test_best_response_respects_robust_budget(game):
    x = np.zeros(10)
    xi, _ = best_response(game, x, 4)
    blocks = game.split(x)
    blocks[4] = xi
    lhs, rhs = worst_case_value(game.coupling[0], game.uncertainty, blocks)
    assert lhs <= rhs + 1e-8


def test_single_agent_gap_is_suboptimality():
    t = np.array([2.0, 3.0])
    row = UncertainConstraint([np.ones(2)], [np.zeros((2, 1))], 100.0, [0.0])
    unc = UncertaintySets((Polytope.interval(-1, 1),), Polytope.interval(-1, 1))
    g = UncertainGame((Agent(2, QuadraticCost(np.eye(2), -t), Polytope.box(0, 10, 2)),), (row,), unc)
    assert best_response_gap(g, t, 0) == pytest.approx(0.0, abs=1e-10)
    x = np.array([4.0, 1.0])
    assert best_response_gap(g, x, 0) == pytest.approx(0.5 * np.sum((x - t) ** 2), abs=1e-8)


def test_infeasible_best_response(game):
    with pytest.raises(InfeasibleError):
        best_response(game, np.full(10, 15.0), 0)


def test_kkt_at_converged_point(converged):
    g, eg, cg, params, rep = converged
    op, pc = prepare(cg, params)
    report = kkt_report(op, rep.W)
    assert report.value <= 1e-5
    assert report.value <= kkt_constant(op, pc, rep.W) * rep.final_residual
    assert report.consensus <= 1e-8


def test_kkt_large_at_random_infeasible_point(op_pc, rng):
    op, _ = op_pc
    u = 100 * rng.normal(size=op.layout.size)
    report = kkt_report(op, u)
    assert report.primal > 1.0 and report.value >= report.primal


def test_kkt_zero_at_decoupled_minimizer():
    t = np.array([2.0, 3.0])
    row = UncertainConstraint([np.ones(2)], [np.zeros((2, 1))], 100.0, [0.0])
    unc = UncertaintySets((Polytope.interval(-1, 1),), Polytope.interval(-1, 1))
    g = UncertainGame((Agent(2, QuadraticCost(np.eye(2), -t), Polytope.box(0, 10, 2)),), (row,), unc)
    cg = to_canonical(build_extended_game(g), CommGraph(1, frozenset(), "single"))
    op, _ = prepare(cg, SolverParams())
    W = initial_point(op)
    lay = op.layout
    w = W[lay.part("w", 0)].copy()
    w[cg.x_slices[0]] = t
    W[lay.part("w", 0)] = op.fresh_projectors()[0](w)
    assert kkt_residual(op, W) <= 1e-10


def test_kkt_bound_holds_along_a_run(canonical):
    params = SolverParams(max_iter=400)
    op, pc = prepare(canonical, params)
    rep = run_distributed(canonical, params)
    assert kkt_residual(op, rep.W) <= kkt_constant(op, pc, rep.W) * rep.final_residual
