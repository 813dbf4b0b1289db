import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import project_enumerate, vertices_enumerate
from robust_gnep.errors import ProjectionError, UnsupportedScaleError
from robust_gnep.geometry import (PolytopeProjector, dykstra, enumerate_vertices, phase1, project_polytope,
                                  project_qp, recession_direction, vertex_slacks, worst_case_value)
from robust_gnep.model import Polytope


def random_polytope(rng, dim=None):
    """Nonempty polytope with at most 8 inequality and 2 equality rows, built around a known point."""
    d = int(rng.integers(1, 6)) if dim is None else dim
    m = int(rng.integers(1, 9))
    k = int(rng.integers(0, min(2, d - 1) + 1))
    c = rng.normal(size=d)
    A = rng.normal(size=(m, d))
    b = A @ c + rng.uniform(0.05, 2.0, m)
    Aeq = rng.normal(size=(k, d))
    return Polytope(A, b, Aeq, Aeq @ c)


def test_box_clamp():
    np.testing.assert_array_equal(project_polytope(Polytope.box(-5, 15, 2), [20, -7]), [15, -5])


def test_orthant():
    np.testing.assert_array_equal(project_polytope(Polytope.orthant(2), [-1, 2]), [0, 2])


def test_simplex():
    simplex = Polytope(-np.eye(2), np.zeros(2), [[1.0, 1.0]], [1.0])
    np.testing.assert_allclose(project_polytope(simplex, [1, 1]), [0.5, 0.5], atol=1e-9)
    np.testing.assert_allclose(project_qp(simplex, np.array([1.0, 1.0]))[0], [0.5, 0.5], atol=1e-12)


def test_vertex_examples():
    assert sorted(float(v[0]) for v in enumerate_vertices(Polytope.interval(-1, 1))) == [-1.0, 1.0]
    assert sorted(float(v[0]) for v in enumerate_vertices(Polytope.interval(-10, 10))) == [-10.0, 10.0]
    tri = Polytope([[-1, 0], [0, -1], [1, 1]], [0, 0, 1])
    got = sorted(tuple(np.round(v, 12)) for v in enumerate_vertices(tri))
    assert got == [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0)]


def test_vertex_scale_limit():
    with pytest.raises(UnsupportedScaleError):
        enumerate_vertices(Polytope.box(-1, 1, 7))


def test_worst_case_value_examples(game):
    c, u = game.coupling[0], game.uncertainty
    assert worst_case_value(c, u, game.split(np.ones(10))) == pytest.approx((20.0, 65.0))
    assert worst_case_value(c, u, game.split(np.zeros(10))) == pytest.approx((0.0, 65.0))
    nom = game.nominal()
    assert worst_case_value(nom.coupling[0], u, game.split(np.ones(10))) == pytest.approx((10.0, 75.0))


def test_vertex_slacks_count(game):
    slacks = list(vertex_slacks(game.coupling[0], game.uncertainty, game.split(np.ones(10))))
    assert len(slacks) == 64
    assert min(s for s, _ in slacks) == pytest.approx(45.0)


def test_dykstra_reports_cap():
    wedge = Polytope([[1.0, -0.01], [-1.0, -0.01]], [0.0, 0.0])
    with pytest.raises(ProjectionError) as exc:
        dykstra(wedge, [5.0, -1.0], max_iter=3)
    assert exc.value.last_iterate.shape == (2,)


def test_phase1_and_recession():
    empty = Polytope([[1.0], [-1.0]], [-1.0, -1.0])
    t, _, cert = phase1(empty)
    assert t > 0.5 and len(cert["ineq"]) == 2
    assert recession_direction(Polytope.box(-1, 1, 3)) is None
    r = recession_direction(Polytope([[1.0, 0.0]], [1.0]))
    assert r is not None and r[0] <= 1e-12


@pytest.mark.parametrize("seed", range(25))
def test_projectors_agree_with_enumeration(seed):
    rng = np.random.default_rng(seed)
    p = random_polytope(rng)
    pt = 3 * rng.normal(size=p.dim)
    ref = project_enumerate(p.A, p.b, p.Aeq, p.beq, pt)
    np.testing.assert_allclose(dykstra(p, pt), ref, atol=1e-7)
    np.testing.assert_allclose(project_qp(p, pt)[0], ref, atol=1e-9)
    np.testing.assert_allclose(PolytopeProjector(p)(pt), ref, atol=1e-9)


@pytest.mark.parametrize("seed", range(10))
def test_enumerate_vertices_matches_oracle(seed):
    rng = np.random.default_rng(100 + seed)
    d = int(rng.integers(1, 4))
    A = np.vstack([np.eye(d), -np.eye(d), rng.normal(size=(3, d))])
    b = np.concatenate([np.ones(2 * d), rng.uniform(0.2, 1.5, 3)])
    ours = sorted(tuple(np.round(v, 8)) for v in enumerate_vertices(Polytope(A, b)))
    ref = sorted(tuple(np.round(v, 8)) for v in vertices_enumerate(A, b))
    assert ours == ref


def test_projector_warm_start_reuse():
    rng = np.random.default_rng(7)
    p = random_polytope(rng, dim=4)
    proj = PolytopeProjector(p)
    for _ in range(30):
        pt = 2 * rng.normal(size=4)
        np.testing.assert_allclose(proj(pt), project_enumerate(p.A, p.b, p.Aeq, p.beq, pt), atol=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_projection_variational_inequality(seed):
    rng = np.random.default_rng(seed)
    p = random_polytope(rng, dim=int(rng.integers(1, 4)))
    pt = 3 * rng.normal(size=p.dim)
    x = PolytopeProjector(p)(pt)
    assert p.contains(x, 1e-9)
    # test against feasible points spread over the set
    probes = [PolytopeProjector(p)(x + 5 * rng.normal(size=p.dim)) for _ in range(10)]
    for y in probes:
        assert (pt - x) @ (y - x) <= 1e-8 * (1 + np.linalg.norm(pt))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_projection_idempotent(seed):
    rng = np.random.default_rng(seed)
    p = random_polytope(rng)
    x = PolytopeProjector(p)(3 * rng.normal(size=p.dim))
    np.testing.assert_allclose(PolytopeProjector(p)(x), x, atol=1e-12)
    np.testing.assert_allclose(dykstra(p, x), x, atol=1e-12)
