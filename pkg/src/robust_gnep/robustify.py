"""Robust counterpart of the coupling constraints and its distributed lowering.

Each robust row is dualized agent by agent. The worst case of the
agent-``i`` term ``max_{D_i delta_i <= d_i} delta_i^T P_i^T x_i`` equals
``min {d_i^T y_i : D_i^T y_i = P_i^T x_i, y_i >= 0}``, and the worst
resource ``min_{D delta <= d} q^T delta`` equals
``max {-d^T z : D^T z = -q, z >= 0}``. Dropping the min/max gives the
deterministic row

    sum_i a0_i^T x_i + sum_i d_i^T y_i + d^T z <= b0

over the enlarged strategies ``(x_i, y_i)`` and a shared ``z``.
:func:`to_canonical` then gives each agent its own copy ``z_i`` and ties
the copies together with Laplacian equalities.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .errors import DimensionError, GraphError, InfeasibleError
from .geometry import phase1
from .graph import CommGraph
from .model import Polytope, UncertainConstraint, UncertainGame, UncertaintySets, block_product


@dataclass(frozen=True, eq=False)
class DualBlocks:
    """Theorem-1 data for one robust row.

    Per agent: equality ``P_i^T x_i - D_i^T y_i = 0`` stored as
    ``(eq_x[i], eq_y[i])`` and the dual cost ``d_i``. Shared part:
    ``D^T z = -q`` with dual cost ``d``.
    """

    a0: tuple
    b0: float
    eq_x: tuple
    eq_y: tuple
    cost_y: tuple
    eq_z: np.ndarray
    rhs_z: np.ndarray
    cost_z: np.ndarray

    @property
    def m(self) -> list[int]:
        return [c.size for c in self.cost_y]

    @property
    def l(self) -> int:
        return self.cost_z.size


def dualize_constraint(c: UncertainConstraint, u: UncertaintySets) -> DualBlocks:
    if len(c.P) != len(u.local):
        raise DimensionError(f"constraint has {len(c.P)} agents, uncertainty has {len(u.local)}")
    for i, (P, D) in enumerate(zip(c.P, u.local)):
        if P.shape[1] != D.dim:
            raise DimensionError(f"P_{i} has {P.shape[1]} columns, Delta_{i} has dim {D.dim}", agent=i)
    if c.q.size != u.glob.dim:
        raise DimensionError(f"q has {c.q.size} entries, Delta has dim {u.glob.dim}")
    return DualBlocks(
        a0=c.a0,
        b0=c.b0,
        eq_x=tuple(P.T for P in c.P),
        eq_y=tuple(-D.A.T for D in u.local),
        cost_y=tuple(D.b.copy() for D in u.local),
        eq_z=u.glob.A.T.copy(),
        rhs_z=-c.q,
        cost_z=u.glob.b.copy(),
    )


def dual_worst_case(blocks: DualBlocks, x_blocks) -> tuple[float, list, np.ndarray]:
    """Solve the dual LPs at fixed ``x``: ``min sum_i d_i^T y_i + d^T z``.

    Returns ``(value, y_list, z)``. The value equals the worst-case increase of
    the LHS plus the worst-case decrease of the RHS.
    """
    total = 0.0
    ys = []
    for i, xi in enumerate(x_blocks):
        d_i = blocks.cost_y[i]
        if d_i.size == 0:
            ys.append(np.zeros(0))
            continue
        res = linprog(d_i, A_eq=-blocks.eq_y[i], b_eq=blocks.eq_x[i] @ xi,
                      bounds=[(0, None)] * d_i.size, method="highs",
                      options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10})
        if res.status != 0:
            raise InfeasibleError(f"agent {i}: dual LP failed ({res.message})")
        ys.append(res.x)
        total += res.fun
    if blocks.l:
        res = linprog(blocks.cost_z, A_eq=blocks.eq_z, b_eq=blocks.rhs_z, bounds=[(0, None)] * blocks.l,
                      method="highs",
                      options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10})
        if res.status != 0:
            raise InfeasibleError(f"resource dual LP failed ({res.message})")
        z = res.x
        total += res.fun
    else:
        z = np.zeros(0)
    return float(total), ys, z


@dataclass(frozen=True, eq=False)
class ExtendedGame:
    """Deterministic game over ``(x_i, y_i)`` per agent and one shared ``z``.

    With ``K`` robust rows, ``y_i = col(y_i1, ..., y_iK)`` and
    ``z = col(z_1, ..., z_K)``.

    Attributes
    ----------
    local_sets : tuple of Polytope
        ``Omega_i x {y_i >= 0}`` intersected with the Theorem-1 equalities.
    shared_set : Polytope
        ``{z >= 0, D^T z_k = -q_k}``.
    S_local : tuple of ndarray
        ``K x (n_i + K m_i)`` coupled-row coefficients on ``(x_i, y_i)``.
    S_shared : ndarray
        ``K x K l`` coefficients on ``z``.
    s : ndarray
        Nominal resources ``b0_k``.
    """

    game: UncertainGame
    duals: tuple
    local_sets: tuple
    shared_set: Polytope
    S_local: tuple
    S_shared: np.ndarray
    s: np.ndarray

    @property
    def n_agents(self) -> int:
        return self.game.n_agents

    @property
    def K(self) -> int:
        return len(self.duals)

    @property
    def m(self) -> list[int]:
        """Dual widths ``m_i``: rows of each ``D_i``."""
        return [p.n_ineq for p in self.game.uncertainty.local]

    @property
    def l(self) -> int:
        return self.game.uncertainty.glob.n_ineq

    @property
    def eta(self) -> list[int]:
        """Per-agent dimension once ``z`` is copied: ``n_i + K (m_i + l)``."""
        return [n + self.K * (m + self.l) for n, m in zip(self.game.dims, self.m)]

    def coupled_value(self, xy_blocks, z) -> np.ndarray:
        """LHS of the coupled rows at local ``(x_i, y_i)`` blocks and shared ``z``."""
        return sum(S @ v for S, v in zip(self.S_local, xy_blocks)) + self.S_shared @ z


def build_extended_game(game: UncertainGame) -> ExtendedGame:
    duals = tuple(dualize_constraint(c, game.uncertainty) for c in game.coupling)
    K = len(duals)
    for k, p in enumerate((*game.uncertainty.local, game.uncertainty.glob)):
        if p.n_eq:
            raise DimensionError("uncertainty sets must be given by inequalities only",
                                 agent=k if k < game.n_agents else None)
    m = [p.n_ineq for p in game.uncertainty.local]
    l = game.uncertainty.glob.n_ineq

    local_sets, S_local = [], []
    for i, agent in enumerate(game.agents):
        n_i, m_i = agent.n, m[i]
        dim = n_i + K * m_i
        ys = Polytope(-np.eye(K * m_i), np.zeros(K * m_i))
        base = block_product(agent.omega, ys) if K * m_i else agent.omega
        eq_rows, eq_rhs = [base.Aeq], [base.beq]
        S = np.zeros((K, dim))
        for k, blk in enumerate(duals):
            p_i = blk.eq_x[i].shape[0]
            row = np.zeros((p_i, dim))
            row[:, :n_i] = blk.eq_x[i]
            row[:, n_i + k * m_i:n_i + (k + 1) * m_i] = blk.eq_y[i]
            eq_rows.append(row)
            eq_rhs.append(np.zeros(p_i))
            S[k, :n_i] = blk.a0[i]
            S[k, n_i + k * m_i:n_i + (k + 1) * m_i] = blk.cost_y[i]
        local_sets.append(Polytope(base.A, base.b, np.vstack(eq_rows), np.concatenate(eq_rhs)))
        S_local.append(S)

    Aeq = np.zeros((K * duals[0].eq_z.shape[0] if K else 0, K * l))
    beq = np.zeros(Aeq.shape[0])
    S_shared = np.zeros((K, K * l))
    for k, blk in enumerate(duals):
        p = blk.eq_z.shape[0]
        Aeq[k * p:(k + 1) * p, k * l:(k + 1) * l] = blk.eq_z
        beq[k * p:(k + 1) * p] = blk.rhs_z
        S_shared[k, k * l:(k + 1) * l] = blk.cost_z
    shared = Polytope(-np.eye(K * l), np.zeros(K * l), Aeq, beq)
    v, _, cert = phase1(shared)
    if v > 1e-9:
        raise InfeasibleError("{z >= 0 : D^T z = -q} is empty; robustification infeasible", cert)
    return ExtendedGame(game, duals, tuple(local_sets), shared, tuple(S_local), S_shared,
                        np.array([blk.b0 for blk in duals]))


@dataclass(frozen=True, eq=False)
class CanonicalGame:
    """Per-agent form ``w_i = col(x_i, y_i, z_i)`` in ``W_i``, coupled by ``sum S_i w_i <= s`` and ``sum R_i w_i = 0``.

    ``R_i w_i = (L[:, i] (x) I_{Kl}) z_i``, so ``sum_i R_i w_i = (L (x) I) z``
    vanishes exactly when the copies agree. ``s_local`` splits ``s``
    uniformly, ``s_i = s / N``.
    """

    extended: ExtendedGame
    graph: CommGraph
    W: tuple
    S: tuple
    s: np.ndarray
    s_local: tuple
    R: tuple
    x_slices: tuple
    y_slices: tuple
    z_slices: tuple

    @property
    def game(self) -> UncertainGame:
        return self.extended.game

    @property
    def n_agents(self) -> int:
        return len(self.W)

    @property
    def eta(self) -> list[int]:
        return [p.dim for p in self.W]

    @property
    def c_in(self) -> int:
        return self.s.size

    @property
    def c_eq(self) -> int:
        return self.R[0].shape[0]

    def lift(self, x_blocks, y_blocks, z) -> list[np.ndarray]:
        """Feasible point of the extended game -> consensus point ``w``."""
        return [np.concatenate([x, y, z]) for x, y in zip(x_blocks, y_blocks)]

    def lower(self, w_blocks):
        """``w`` -> ``(x_blocks, y_blocks, z_mean)``; exact when the copies agree."""
        xs = [w[s] for w, s in zip(w_blocks, self.x_slices)]
        ys = [w[s] for w, s in zip(w_blocks, self.y_slices)]
        z = np.mean([w[s] for w, s in zip(w_blocks, self.z_slices)], axis=0)
        return xs, ys, z

    def coupled_value(self, w_blocks) -> np.ndarray:
        return sum(S @ w for S, w in zip(self.S, w_blocks))

    def consensus_value(self, w_blocks) -> np.ndarray:
        return sum(R @ w for R, w in zip(self.R, w_blocks))


def to_canonical(eg: ExtendedGame, graph: CommGraph) -> CanonicalGame:
    N = eg.n_agents
    if graph.n != N:
        raise GraphError(f"graph has {graph.n} nodes, game has {N} agents")
    if not graph.is_connected():
        raise GraphError("communication graph must be connected")
    K, l = eg.K, eg.l
    kl = K * l
    L = graph.laplacian
    W, S, R, xs, ys, zs = [], [], [], [], [], []
    zset = eg.shared_set
    for i in range(N):
        xy = eg.local_sets[i]
        n_i = eg.game.agents[i].n
        d_xy = xy.dim
        W.append(_product_with_eq(xy, zset))
        Si = np.zeros((K, d_xy + kl))
        Si[:, :d_xy] = eg.S_local[i]
        Si[:, d_xy:] = eg.S_shared / N
        S.append(Si)
        Ri = np.zeros((N * kl, d_xy + kl))
        Ri[:, d_xy:] = np.kron(L[:, [i]], np.eye(kl))
        R.append(Ri)
        xs.append(slice(0, n_i))
        ys.append(slice(n_i, d_xy))
        zs.append(slice(d_xy, d_xy + kl))
    return CanonicalGame(eg, graph, tuple(W), tuple(S), eg.s.copy(), tuple(eg.s / N for _ in range(N)),
                         tuple(R), tuple(xs), tuple(ys), tuple(zs))


def _product_with_eq(a: Polytope, b: Polytope) -> Polytope:
    return block_product(a, b)
