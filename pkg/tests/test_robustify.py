import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import box_worst_case
from robust_gnep.errors import DimensionError, GraphError, InfeasibleError
from robust_gnep.graph import make_topology
from robust_gnep.model import Agent, Polytope, QuadraticCost, UncertainConstraint, UncertainGame, UncertaintySets
from robust_gnep.robustify import build_extended_game, dual_worst_case, dualize_constraint, to_canonical


def one_agent(P, q=(0.0,), local=(-1, 1)):
    n = len(P)
    row = UncertainConstraint([np.ones(n)], [np.reshape(P, (n, -1))], 10.0, q)
    unc = UncertaintySets((Polytope.interval(*local),), Polytope.interval(-10, 10))
    return UncertainGame((Agent(n, QuadraticCost(np.eye(n), np.zeros(n)), Polytope.box(-5, 5, n)),), (row,), unc)


def test_interval_dual_example():
    g = one_agent([1.0, 1.0])
    blk = dualize_constraint(g.coupling[0], g.uncertainty)
    np.testing.assert_array_equal(blk.cost_y[0], [1.0, 1.0])
    value, ys, z = dual_worst_case(blk, [np.array([3.0, 4.0])])
    assert value == pytest.approx(7.0, abs=1e-9)
    y = ys[0]
    assert y[0] - y[1] == pytest.approx(7.0, abs=1e-9)
    assert np.all(y >= -1e-12) and np.all(z >= -1e-12)


def test_no_uncertainty_on_agent():
    g = one_agent([0.0, 0.0])
    value, ys, _ = dual_worst_case(dualize_constraint(g.coupling[0], g.uncertainty), [np.array([3.0, 4.0])])
    assert value == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(ys[0], 0.0, atol=1e-12)


def test_benchmark_dimensions(extended, canonical):
    assert extended.m == [2] * 5 and extended.l == 2
    assert extended.eta == [6] * 5
    assert canonical.eta == [6] * 5
    assert canonical.c_in == 1 and canonical.c_eq == 10


def test_nominal_recovery(game):
    eg = build_extended_game(game.nominal())
    x = np.linspace(-1, 1, 10)
    value, ys, z = dual_worst_case(eg.duals[0], game.split(x))
    assert value == 0.0
    blocks = [np.concatenate([xi, yi]) for xi, yi in zip(game.split(x), ys)]
    assert eg.coupled_value(blocks, z)[0] == pytest.approx(x.sum(), abs=1e-12)
    assert eg.s[0] == 75.0


def test_two_rows_dualized_separately(game):
    c = game.coupling[0]
    eg = build_extended_game(game.with_coupling([c, UncertainConstraint(c.a0, c.P, 50.0, c.q)]))
    assert len(eg.duals) == 2 and eg.s.tolist() == [75.0, 50.0]
    cg = to_canonical(eg, make_topology("ring", 5))
    assert cg.c_in == 2 and cg.eta == [2 + 4 + 4] * 5 and cg.c_eq == 5 * 4


def test_empty_resource_dual_rejected(game):
    # Delta = {delta <= 1} is unbounded below, so min q delta = -inf and D^T z = -q has no z >= 0
    bad_glob = Polytope([[1.0], [1.0]], [1.0, 2.0])
    c = game.coupling[0]
    g = UncertainGame(game.agents, (UncertainConstraint(c.a0, c.P, c.b0, [1.0]),),
                      UncertaintySets(game.uncertainty.local, bad_glob))
    with pytest.raises(InfeasibleError) as exc:
        build_extended_game(g)
    assert exc.value.certificate is not None


def test_equality_uncertainty_rejected(game):
    eq_set = Polytope([[1.0], [-1.0]], [1.0, 1.0], [[1.0]], [0.0])
    g = UncertainGame(game.agents, game.coupling, UncertaintySets(game.uncertainty.local, eq_set))
    with pytest.raises(DimensionError):
        build_extended_game(g)


def test_canonical_graph_errors(extended):
    with pytest.raises(GraphError):
        to_canonical(extended, make_topology("ring", 4))


def test_dual_matches_vertex_enumeration(game, rng):
    eg_duals = dualize_constraint(game.coupling[0], game.uncertainty)
    c = game.coupling[0]
    for _ in range(100):
        x = rng.uniform(-5, 15, 10)
        blocks = game.split(x)
        value, _, _ = dual_worst_case(eg_duals, blocks)
        lhs, rhs = box_worst_case(c.a0, c.P, c.b0, c.q, [(-1.0, 1.0)] * 5, (-10.0, 10.0), blocks)
        expected = (lhs - sum(a @ xi for a, xi in zip(c.a0, blocks))) + (c.b0 - rhs)
        assert value == pytest.approx(expected, abs=1e-8)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_lowered_equivalence(game, extended, canonical, seed):
    rng = np.random.default_rng(seed)
    blocks = game.split(rng.uniform(-5, 15, 10))
    _, ys, z = dual_worst_case(extended.duals[0], blocks)
    xy = [np.concatenate([x, y]) for x, y in zip(blocks, ys)]
    w = canonical.lift(blocks, ys, z)
    np.testing.assert_allclose(canonical.coupled_value(w), extended.coupled_value(xy, z), atol=1e-9)
    np.testing.assert_allclose(canonical.consensus_value(w), 0.0, atol=1e-12)
    for Wi, Xi, wi, xyi in zip(canonical.W, extended.local_sets, w, xy):
        assert Wi.contains(wi, 1e-7) == (Xi.contains(xyi, 1e-7) and extended.shared_set.contains(z, 1e-7))
    xs, ys2, zbar = canonical.lower(w)
    np.testing.assert_allclose(np.concatenate(xs), np.concatenate(blocks))
    np.testing.assert_allclose(zbar, z)
    # disagreeing copies show up in the consensus rows
    w[0] = w[0].copy()
    w[0][canonical.z_slices[0]] += 1.0
    assert np.linalg.norm(canonical.consensus_value(w)) > 0.5
