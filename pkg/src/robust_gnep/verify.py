"""Independent certification of computed equilibria.

Robust feasibility is checked by enumerating uncertainty vertices and never
uses dual variables from the solver. Best responses are computed on a
separately re-dualized single-agent problem.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleError
from .geometry import PolytopeProjector, enumerate_vertices, phase1, vertex_slacks
from .model import (Agent, Polytope, QuadraticCost, UncertainConstraint, UncertainGame, UncertaintySets,
                    lipschitz_constant)
from .operators import ExtendedOperator, Preconditioner, eval_A
from .robustify import build_extended_game
from .solver import max_pairwise_gap


@dataclass
class ConstraintCheck:
    index: int
    max_lhs: float
    min_rhs: float
    min_vertex_slack: float
    n_vertices: int
    worst_vertex: tuple

    @property
    def slack(self) -> float:
        return self.min_rhs - self.max_lhs


@dataclass
class FeasibilityReport:
    feasible: bool
    constraints: list
    omega_violation: list
    tol: float

    def summary(self) -> dict:
        return {
            "feasible": self.feasible,
            "constraints": [{"max_lhs": c.max_lhs, "min_rhs": c.min_rhs, "slack": c.slack,
                             "min_vertex_slack": c.min_vertex_slack, "vertices": c.n_vertices}
                            for c in self.constraints],
            "omega_violation": self.omega_violation,
        }


def check_robust_feasibility(game: UncertainGame, x, tol: float = 1e-6, box_tol: float = 1e-8) -> FeasibilityReport:
    """Evaluate every robust row at every combination of uncertainty vertices.

    The worst combination is stored on each row, so a violated row names the
    ``delta`` realizations responsible.
    """
    blocks = game.split(x)
    checks = []
    for k, c in enumerate(game.coupling):
        worst, count = None, 0
        for slack, combo in vertex_slacks(c, game.uncertainty, blocks):
            count += 1
            if worst is None or slack < worst[0]:
                worst = (slack, combo)
        # worst-case LHS and RHS split apart at the minimizing combination
        *dl, dg = worst[1]
        lhs = sum(float((a + P @ d) @ xi) for a, P, d, xi in zip(c.a0, c.P, dl, blocks))
        rhs = float(c.b0 + c.q @ dg)
        checks.append(ConstraintCheck(k, lhs, rhs, worst[0], count, tuple(np.asarray(v) for v in worst[1])))
    omega = [a.omega.violation(xi) for a, xi in zip(game.agents, blocks)]
    ok = all(c.min_vertex_slack >= -tol for c in checks) and all(v <= box_tol for v in omega)
    return FeasibilityReport(ok, checks, omega, tol)


def _others_worst(c: UncertainConstraint, u: UncertaintySets, blocks, i: int) -> float:
    """Worst-case LHS contribution of every agent except ``i``."""
    total = 0.0
    for j, (a, P, xj) in enumerate(zip(c.a0, c.P, blocks)):
        if j == i:
            continue
        verts = enumerate_vertices(u.local[j]) if u.local[j].dim else [np.zeros(0)]
        total += max(float((a + P @ v) @ xj) for v in verts)
    return total


def best_response_set(game: UncertainGame, x, i: int) -> tuple[Polytope, int]:
    """Agent ``i``'s robust feasible set with the others fixed, over ``(x_i, y_i, z)``.

    The single-agent robust rows are dualized with the same machinery as the
    full game. Returns the polytope and ``n_i``.
    """
    blocks = game.split(x)
    agent = game.agents[i]
    rows = [UncertainConstraint([c.a0[i]], [c.P[i]], c.b0 - _others_worst(c, game.uncertainty, blocks, i), c.q)
            for c in game.coupling]
    # only the constraint data matter here; the cost is evaluated on the full game
    placeholder = QuadraticCost(np.zeros((agent.n, agent.n)), np.zeros(agent.n))
    single = UncertainGame((Agent(agent.n, placeholder, agent.omega),), tuple(rows),
                           UncertaintySets((game.uncertainty.local[i],), game.uncertainty.glob))
    eg = build_extended_game(single)
    xy, zset = eg.local_sets[0], eg.shared_set
    S = np.hstack([eg.S_local[0], eg.S_shared])
    A = np.vstack([np.hstack([xy.A, np.zeros((xy.n_ineq, zset.dim))]),
                   np.hstack([np.zeros((zset.n_ineq, xy.dim)), zset.A]), S])
    b = np.concatenate([xy.b, zset.b, eg.s])
    Aeq = np.vstack([np.hstack([xy.Aeq, np.zeros((xy.n_eq, zset.dim))]),
                     np.hstack([np.zeros((zset.n_eq, xy.dim)), zset.Aeq])])
    beq = np.concatenate([xy.beq, zset.beq])
    return Polytope(A, b, Aeq, beq), agent.n


def best_response(game: UncertainGame, x, i: int, tol: float = 1e-8, max_iter: int = 200_000):
    """Projected-gradient best response of agent ``i``; returns ``(x_i_best, J_i_best)``."""
    poly, n_i = best_response_set(game, x, i)
    t_viol, _, cert = phase1(poly)
    if t_viol > 1e-9:
        raise InfeasibleError(f"agent {i}: best-response set is empty", cert)
    blocks = [b.copy() for b in game.split(x)]
    cost = game.agents[i].cost
    if hasattr(cost, "Q"):
        ell = float(np.linalg.norm(cost.Q, 2)) or 1.0
    else:
        ell = lipschitz_constant(game)
    step = 1.0 / ell
    proj = PolytopeProjector(poly)
    v = np.zeros(poly.dim)
    v[:n_i] = blocks[i]
    v = proj(v)
    for _ in range(max_iter):
        blocks[i] = v[:n_i]
        g = np.zeros(poly.dim)
        g[:n_i] = cost.gradient(i, blocks)
        v_new = proj(v - step * g)
        done = np.linalg.norm(v_new - v) / step < tol
        v = v_new
        if done:
            break
    blocks[i] = v[:n_i]
    return v[:n_i].copy(), cost.value(i, blocks)


def best_response_gap(game: UncertainGame, x, i: int, tol: float = 1e-8, max_iter: int = 200_000) -> float:
    """``J_i(x) - min J_i(., x_-i)`` over agent ``i``'s robust feasible set."""
    blocks = game.split(x)
    _, best = best_response(game, x, i, tol, max_iter)
    return game.agents[i].cost.value(i, blocks) - best


@dataclass
class KKTReport:
    stationarity: float
    complementarity: float
    primal: float
    consensus: float
    per_agent: list = field(default_factory=list)

    @property
    def value(self) -> float:
        return max(self.stationarity, self.complementarity, self.primal, self.consensus)


def kkt_report(op: ExtendedOperator, W: np.ndarray) -> KKTReport:
    """Violation of the KKT system at a stacked point.

    Stationarity uses a unit-step projected residual
    ``|w_i - P_{W_i}(w_i - (grad + S_i^T lam_i + R_i^T mu_i))|``.
    Complementarity and primal feasibility use the averaged multiplier.
    """
    cg, lay = op.cg, op.layout
    N = cg.n_agents
    A = eval_A(op, W)
    per_agent = []
    projectors = op.fresh_projectors()
    for i in range(N):
        w = W[lay.part("w", i)]
        g = A[lay.part("w", i)]
        per_agent.append(float(np.linalg.norm(w - projectors[i](w - g))))
    ws = [W[lay.part("w", i)] for i in range(N)]
    lam = np.array([W[lay.part("lam", i)] for i in range(N)])
    mu = np.array([W[lay.part("mu", i)] for i in range(N)])
    row = cg.coupled_value(ws) - cg.s
    lam_bar = lam.mean(axis=0)
    primal = max(float(np.max(row, initial=0.0)), float(np.linalg.norm(cg.consensus_value(ws))),
                 float(np.max(-lam, initial=0.0)),
                 max(p.violation(w) for p, w in zip(cg.W, ws)))
    comp = abs(float(lam_bar @ row))
    cons = max(max_pairwise_gap(lam), max_pairwise_gap(mu))
    return KKTReport(max(per_agent), comp, primal, cons, per_agent)


def kkt_residual(op: ExtendedOperator, W: np.ndarray) -> float:
    return kkt_report(op, W).value


def kkt_constant(op: ExtendedOperator, pc: Preconditioner, W: np.ndarray, factor: float = 10.0) -> float:
    """``C`` with ``kkt_residual(W) <= C * natural_residual(W)``.

    Each block of the natural residual is a step times the matching KKT
    quantity, so dividing by the smallest step recovers it. Summing the
    per-agent multiplier rows costs ``sqrt(N)``, complementarity carries the
    multiplier size, and multiplier disagreement is bounded through the
    algebraic connectivity of the graph.
    """
    cg, lay = op.cg, op.layout
    N = cg.n_agents
    lam = np.array([W[lay.part("lam", i)] for i in range(N)])
    inv_step = max(1.0, pc.lambda_max)
    lam_bar = float(np.linalg.norm(lam.mean(axis=0)))
    spread = 2.0 / cg.graph.algebraic_connectivity if N > 1 else 0.0
    return factor * inv_step * max(np.sqrt(N) * (1.0 + lam_bar), spread)


__all__ = ["ConstraintCheck", "FeasibilityReport", "KKTReport", "best_response", "best_response_gap",
           "best_response_set", "check_robust_feasibility", "kkt_constant", "kkt_report", "kkt_residual"]
