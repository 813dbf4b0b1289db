"""Uncertain generalized Nash games with polyhedral uncertainty.

A game has ``N`` agents. Agent ``i`` picks ``x_i`` in a polytope ``Omega_i``
and minimizes a convex cost ``J_i(x_i, x_-i)``. The agents share linear
coupling constraints whose coefficients and right-hand side move
affinely with uncertain parameters ranging over polytopes::

    sum_i (a_i0 + P_i delta_i)^T x_i <= b0 + q^T delta,
    for all delta_i in Delta_i, delta in Delta.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import DimensionError, GameValidationError, UnsupportedOperationError


def _as_matrix(a, ncols: int | None = None) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a.reshape(1, -1) if a.size else a.reshape(0, ncols or 0)
    if a.ndim != 2:
        raise DimensionError(f"expected a matrix, got shape {a.shape}")
    return a


@dataclass(frozen=True, eq=False)
class Polytope:
    """``{x | A x <= b, Aeq x = beq}``."""

    A: np.ndarray
    b: np.ndarray
    Aeq: np.ndarray | None = None
    beq: np.ndarray | None = None

    def __post_init__(self):
        A = _as_matrix(self.A)
        b = np.asarray(self.b, dtype=float).reshape(-1)
        if A.shape[0] != b.size:
            raise DimensionError(f"A has {A.shape[0]} rows but b has {b.size} entries")
        dim = A.shape[1]
        if self.Aeq is None:
            Aeq, beq = np.zeros((0, dim)), np.zeros(0)
        else:
            Aeq = _as_matrix(self.Aeq, dim)
            beq = np.asarray(self.beq, dtype=float).reshape(-1)
            if Aeq.shape[0] and Aeq.shape[1] != dim:
                raise DimensionError(f"Aeq has {Aeq.shape[1]} columns, expected {dim}")
            if Aeq.shape[0] == 0:
                Aeq = np.zeros((0, dim))
            if Aeq.shape[0] != beq.size:
                raise DimensionError(f"Aeq has {Aeq.shape[0]} rows but beq has {beq.size}")
        for arr in (A, b, Aeq, beq):
            arr.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "Aeq", Aeq)
        object.__setattr__(self, "beq", beq)

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    @property
    def n_ineq(self) -> int:
        return self.A.shape[0]

    @property
    def n_eq(self) -> int:
        return self.Aeq.shape[0]

    @classmethod
    def box(cls, lo, hi, dim: int | None = None) -> "Polytope":
        lo = np.asarray(lo, dtype=float).reshape(-1)
        hi = np.asarray(hi, dtype=float).reshape(-1)
        if dim is not None:
            lo = np.broadcast_to(lo, (dim,)).copy()
            hi = np.broadcast_to(hi, (dim,)).copy()
        eye = np.eye(lo.size)
        return cls(np.vstack([eye, -eye]), np.concatenate([hi, -lo]))

    @classmethod
    def interval(cls, lo: float, hi: float) -> "Polytope":
        """1-D interval written as the two halfspaces ``delta <= hi``, ``-delta <= -lo``."""
        return cls([[1.0], [-1.0]], [hi, -lo])

    @classmethod
    def orthant(cls, dim: int) -> "Polytope":
        return cls(-np.eye(dim), np.zeros(dim))

    def violation(self, x) -> float:
        x = np.asarray(x, dtype=float)
        v = np.max(self.A @ x - self.b, initial=0.0)
        if self.n_eq:
            v = max(v, float(np.max(np.abs(self.Aeq @ x - self.beq))))
        return float(max(v, 0.0))

    def contains(self, x, tol: float = 1e-9) -> bool:
        return self.violation(x) <= tol

    def to_dict(self) -> dict:
        d = {"A": self.A.tolist(), "b": self.b.tolist()}
        if self.n_eq:
            d["Aeq"] = self.Aeq.tolist()
            d["beq"] = self.beq.tolist()
        return d


def block_product(*polys: Polytope) -> Polytope:
    """Cartesian product of polytopes as one polytope in the stacked space."""
    widths = [p.dim for p in polys]
    return Polytope(_stack_blocks([p.A for p in polys], widths), np.concatenate([p.b for p in polys]),
                    _stack_blocks([p.Aeq for p in polys], widths), np.concatenate([p.beq for p in polys]))


def _stack_blocks(mats: Sequence[np.ndarray], widths: Sequence[int]) -> np.ndarray:
    out = np.zeros((sum(m.shape[0] for m in mats), sum(widths)))
    r = c = 0
    for m, w in zip(mats, widths):
        out[r:r + m.shape[0], c:c + w] = m
        r += m.shape[0]
        c += w
    return out


@dataclass(frozen=True, eq=False)
class UncertaintySets:
    """Per-agent sets ``Delta_i = {D_i delta_i <= d_i}`` and the resource set ``Delta = {D delta <= d}``."""

    local: tuple
    glob: Polytope

    def __post_init__(self):
        object.__setattr__(self, "local", tuple(self.local))

    @property
    def local_dims(self) -> list[int]:
        return [p.dim for p in self.local]


@dataclass(frozen=True, eq=False)
class UncertainConstraint:
    """One robust row ``sum_i (a0_i + P_i delta_i)^T x_i <= b0 + q^T delta``."""

    a0: tuple
    P: tuple
    b0: float
    q: np.ndarray

    def __post_init__(self):
        a0 = tuple(np.asarray(a, dtype=float).reshape(-1) for a in self.a0)
        P = tuple(np.asarray(p, dtype=float).reshape(a.size, -1) for p, a in zip(self.P, a0))
        if len(a0) != len(P):
            raise DimensionError(f"{len(a0)} nominal rows but {len(P)} perturbation maps")
        for i, (a, p) in enumerate(zip(a0, P)):
            if p.shape[0] != a.size:
                raise DimensionError(f"P_{i} has {p.shape[0]} rows, a0_{i} has {a.size} entries", agent=i)
        object.__setattr__(self, "a0", a0)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "b0", float(self.b0))
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float).reshape(-1))

    def nominal(self) -> "UncertainConstraint":
        return UncertainConstraint(self.a0, [np.zeros_like(p) for p in self.P], self.b0, np.zeros_like(self.q))


@dataclass(frozen=True, eq=False)
class QuadraticCost:
    """``J_i = 1/2 x_i^T Q x_i + sum_j x_i^T R_ij x_j + c^T x_i``.

    ``cross`` maps another agent's index ``j`` to ``R_ij`` (``n_i x n_j``).
    """

    Q: np.ndarray
    linear: np.ndarray
    cross: Mapping[int, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "Q", np.asarray(self.Q, dtype=float))
        object.__setattr__(self, "linear", np.asarray(self.linear, dtype=float).reshape(-1))
        object.__setattr__(self, "cross", {int(j): np.asarray(r, dtype=float) for j, r in dict(self.cross).items()})

    def gradient(self, i: int, blocks: Sequence[np.ndarray]) -> np.ndarray:
        g = self.Q @ blocks[i] + self.linear
        for j, r in self.cross.items():
            g = g + r @ blocks[j]
        return g

    def value(self, i: int, blocks: Sequence[np.ndarray]) -> float:
        xi = blocks[i]
        v = 0.5 * xi @ self.Q @ xi + self.linear @ xi
        for j, r in self.cross.items():
            v += xi @ r @ blocks[j]
        return float(v)

    def dependencies(self, i: int) -> set[int]:
        return {j for j, r in self.cross.items() if np.any(r)} | {i}


@dataclass(frozen=True, eq=False)
class OracleCost:
    """Cost given only through oracles.

    ``gradient(x_i, blocks)`` returns the partial gradient in ``x_i``; ``blocks``
    is the list of every agent's strategy. ``value`` is optional and is needed
    only by best-response verification.
    """

    gradient_fn: Callable
    value_fn: Callable | None = None

    def gradient(self, i: int, blocks: Sequence[np.ndarray]) -> np.ndarray:
        return np.asarray(self.gradient_fn(blocks[i], blocks), dtype=float)

    def value(self, i: int, blocks: Sequence[np.ndarray]) -> float:
        if self.value_fn is None:
            raise UnsupportedOperationError(f"agent {i}: oracle cost has no value oracle")
        return float(self.value_fn(blocks[i], blocks))

    def dependencies(self, i: int) -> set[int]:
        return set()  # unknown: full decision information


@dataclass(frozen=True, eq=False)
class Agent:
    n: int
    cost: QuadraticCost | OracleCost
    omega: Polytope


@dataclass(frozen=True, eq=False)
class UncertainGame:
    agents: tuple
    coupling: tuple
    uncertainty: UncertaintySets
    lipschitz: float | None = None  # required for oracle costs

    def __post_init__(self):
        agents = tuple(self.agents)
        coupling = tuple(self.coupling)
        object.__setattr__(self, "agents", agents)
        object.__setattr__(self, "coupling", coupling)
        if len(self.uncertainty.local) != len(agents):
            raise DimensionError(f"{len(self.uncertainty.local)} local uncertainty sets for {len(agents)} agents")
        for i, a in enumerate(agents):
            if a.omega.dim != a.n:
                raise DimensionError(f"Omega_{i} has dimension {a.omega.dim}, agent has n_i = {a.n}", agent=i)
            if isinstance(a.cost, QuadraticCost):
                if a.cost.Q.shape != (a.n, a.n) or a.cost.linear.size != a.n:
                    raise DimensionError(f"agent {i}: quadratic cost blocks do not match n_i = {a.n}", agent=i)
                for j, r in a.cost.cross.items():
                    if not (0 <= j < len(agents)) or j == i:
                        raise DimensionError(f"agent {i}: bad cross-term index {j}", agent=i)
                    if r.shape != (a.n, agents[j].n):
                        raise DimensionError(f"agent {i}: R_{i}{j} has shape {r.shape}", agent=i)
        p_loc = self.uncertainty.local_dims
        for k, c in enumerate(coupling):
            if len(c.a0) != len(agents):
                raise DimensionError(f"constraint {k} has {len(c.a0)} agent rows for {len(agents)} agents")
            for i, a in enumerate(agents):
                if c.a0[i].size != a.n or c.P[i].shape != (a.n, p_loc[i]):
                    raise DimensionError(
                        f"constraint {k}, agent {i}: expected a0 of size {a.n} and P of shape "
                        f"{(a.n, p_loc[i])}, got {c.a0[i].size} and {c.P[i].shape}", agent=i)
            if c.q.size != self.uncertainty.glob.dim:
                raise DimensionError(f"constraint {k}: q has {c.q.size} entries, Delta has dim {self.uncertainty.glob.dim}")

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    @property
    def dims(self) -> list[int]:
        return [a.n for a in self.agents]

    @property
    def n(self) -> int:
        return sum(self.dims)

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.dims)])

    @property
    def is_quadratic(self) -> bool:
        return all(isinstance(a.cost, QuadraticCost) for a in self.agents)

    def split(self, x) -> list[np.ndarray]:
        """Per-agent blocks of a collective strategy (flat vector or list of blocks)."""
        if isinstance(x, (list, tuple)) and not all(np.ndim(b) == 0 for b in x):
            if len(x) != self.n_agents:
                raise DimensionError(f"expected {self.n_agents} blocks, got {len(x)}")
            blocks = [np.asarray(b, dtype=float).reshape(-1) for b in x]
            for i, (b, ni) in enumerate(zip(blocks, self.dims)):
                if b.size != ni:
                    raise DimensionError(f"block of agent {i} has size {b.size}, expected {ni}", agent=i)
            return blocks
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.size != self.n:
            # name the first agent whose block would be cut short
            off = self.offsets
            bad = int(np.searchsorted(off[1:], x.size, side="right")) if x.size < self.n else self.n_agents - 1
            raise DimensionError(f"collective vector has size {x.size}, expected {self.n}", agent=min(bad, self.n_agents - 1))
        off = self.offsets
        return [x[off[i]:off[i + 1]] for i in range(self.n_agents)]

    def with_coupling(self, coupling) -> "UncertainGame":
        return UncertainGame(self.agents, tuple(coupling), self.uncertainty, self.lipschitz)

    def nominal(self) -> "UncertainGame":
        """The same game with every perturbation map and resource perturbation zeroed."""
        return self.with_coupling([c.nominal() for c in self.coupling])


def game_matrix(game: UncertainGame) -> tuple[np.ndarray, np.ndarray]:
    """``(M, c)`` with ``F(x) = M x + c`` for a quadratic game."""
    if not game.is_quadratic:
        raise UnsupportedOperationError("game matrix exists only for quadratic costs")
    off = game.offsets
    M = np.zeros((game.n, game.n))
    c = np.zeros(game.n)
    for i, a in enumerate(game.agents):
        si = slice(off[i], off[i + 1])
        M[si, si] = a.cost.Q
        c[si] = a.cost.linear
        for j, r in a.cost.cross.items():
            M[si, off[j]:off[j + 1]] = r
    return M, c


def pseudo_gradient(game: UncertainGame, x) -> np.ndarray:
    """Stacked partial gradients ``col(grad_{x_i} J_i(x_i, x_-i))``."""
    blocks = game.split(x)
    return np.concatenate([a.cost.gradient(i, blocks) for i, a in enumerate(game.agents)])


def cost_eval(game: UncertainGame, i: int, x) -> float:
    if not 0 <= i < game.n_agents:
        raise IndexError(f"agent index {i} out of range")
    return game.agents[i].cost.value(i, game.split(x))


def lipschitz_constant(game: UncertainGame) -> float:
    """``l_F``: spectral norm of the game matrix, or the declared bound for oracle costs."""
    if game.is_quadratic:
        return float(np.linalg.norm(game_matrix(game)[0], 2))
    if game.lipschitz is None:
        raise UnsupportedOperationError("oracle-cost games must declare a Lipschitz bound")
    return float(game.lipschitz)


@dataclass(frozen=True)
class CheckResult:
    passed: bool
    detail: str
    witness: object = None


@dataclass(frozen=True)
class ValidationReport:
    checks: dict

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    def failures(self) -> list[str]:
        return [k for k, c in self.checks.items() if not c.passed]

    def summary(self) -> dict:
        return {k: {"passed": c.passed, "detail": c.detail} for k, c in self.checks.items()}


def robust_vertex_rows(game: UncertainGame):
    """Linear description of the robust feasible set in ``(x, t)`` from uncertainty vertices.

    For each constraint ``k`` and agent ``i`` an epigraph variable ``t_ik``
    bounds ``max_{v in V(Delta_i)} v^T P_i^T x_i``; the coupled row then reads
    ``sum_i a0_i^T x_i + t_ik <= b0 + min_{v in V(Delta)} q^T v``.
    Returns ``(A, b, Aeq, beq, n_t)`` acting on ``col(x, t)``.
    """
    from .geometry import enumerate_vertices

    N, K, n = game.n_agents, len(game.coupling), game.n
    off = game.offsets
    nt = N * K
    rows, rhs = [], []
    eq_rows, eq_rhs = [], []
    for i, a in enumerate(game.agents):
        for r, bi in zip(a.omega.A, a.omega.b):
            row = np.zeros(n + nt)
            row[off[i]:off[i + 1]] = r
            rows.append(row)
            rhs.append(bi)
        for r, bi in zip(a.omega.Aeq, a.omega.beq):
            row = np.zeros(n + nt)
            row[off[i]:off[i + 1]] = r
            eq_rows.append(row)
            eq_rhs.append(bi)
    loc_vertices = [enumerate_vertices(p) if p.dim else [np.zeros(0)] for p in game.uncertainty.local]
    glob_vertices = enumerate_vertices(game.uncertainty.glob) if game.uncertainty.glob.dim else [np.zeros(0)]
    for k, c in enumerate(game.coupling):
        coupled = np.zeros(n + nt)
        for i in range(N):
            t_idx = n + k * N + i
            for v in loc_vertices[i]:
                row = np.zeros(n + nt)
                row[off[i]:off[i + 1]] = c.P[i] @ v
                row[t_idx] = -1.0
                rows.append(row)
                rhs.append(0.0)
            coupled[off[i]:off[i + 1]] = c.a0[i]
            coupled[t_idx] = 1.0
        rows.append(coupled)
        rhs.append(c.b0 + min(float(c.q @ v) for v in glob_vertices))
    A = np.array(rows).reshape(-1, n + nt)
    Aeq = np.array(eq_rows).reshape(-1, n + nt)
    return A, np.array(rhs), Aeq, np.array(eq_rhs), nt


def validate_game(game: UncertainGame, tol: float = 1e-9, samples: int = 200, seed: int = 0) -> ValidationReport:
    """Check the standing assumptions and return one result per assumption.

    Quadratic costs get exact spectral certificates; oracle costs get a
    sampled monotonicity check with a fixed seed so the report is reproducible.
    """
    from .geometry import bounding_box, lp_margin, phase1, recession_direction

    checks: dict[str, CheckResult] = {}

    bad = []
    for i, a in enumerate(game.agents):
        if isinstance(a.cost, QuadraticCost):
            Q = a.cost.Q
            if not np.allclose(Q, Q.T, atol=tol):
                bad.append((i, "Q not symmetric"))
            elif np.linalg.eigvalsh(Q)[0] < -tol:
                bad.append((i, f"min eigenvalue {np.linalg.eigvalsh(Q)[0]:.3g}"))
    checks["convexity"] = CheckResult(not bad, "Q_i symmetric PSD" if not bad else f"non-convex agents {bad}", bad or None)

    bad = []
    for i, a in enumerate(game.agents):
        r = recession_direction(a.omega)
        v, _, cert = phase1(a.omega)
        if v > tol:
            bad.append((i, "empty", cert))
        elif r is not None:
            bad.append((i, "unbounded", r))
    checks["local_sets"] = CheckResult(not bad, "Omega_i nonempty and compact" if not bad else f"bad local sets {[(i, k) for i, k, _ in bad]}", bad or None)

    sets = [(f"Delta_{i}", p) for i, p in enumerate(game.uncertainty.local)] + [("Delta", game.uncertainty.glob)]
    unbounded = {}
    for name, p in sets:
        if p.dim == 0:
            continue
        r = recession_direction(p)
        if r is not None:
            unbounded[name] = r
    checks["uncertainty_bounded"] = CheckResult(
        not unbounded,
        "all uncertainty sets bounded" if not unbounded else f"unbounded: {sorted(unbounded)}",
        unbounded or None)

    not_interior = [name for name, p in sets if p.dim and not np.all(p.b > 0)]
    checks["uncertainty_interior"] = CheckResult(
        not not_interior,
        "origin strictly inside every uncertainty set" if not not_interior else f"d <= 0 in {not_interior}",
        not_interior or None)

    if unbounded:
        checks["feasibility"] = CheckResult(False, "skipped: uncertainty set unbounded")
        checks["slater"] = CheckResult(False, "skipped: uncertainty set unbounded")
    else:
        A, b, Aeq, beq, nt = robust_vertex_rows(game)
        poly = Polytope(A, b, Aeq, beq)
        v, point, cert = phase1(poly)
        if v > tol:
            checks["feasibility"] = CheckResult(False, f"robust feasible set empty (phase-1 violation {v:.3g})", cert)
            checks["slater"] = CheckResult(False, "robust feasible set empty")
        else:
            checks["feasibility"] = CheckResult(True, "robust feasible set nonempty", point[:game.n])
            margin, spoint = lp_margin(poly)
            checks["slater"] = CheckResult(margin > tol, f"strict-feasibility margin {margin:.3g}",
                                           spoint[:game.n] if spoint is not None else None)

    if game.is_quadratic:
        M, _ = game_matrix(game)
        lam = float(np.linalg.eigvalsh(0.5 * (M + M.T))[0])
        checks["monotonicity"] = CheckResult(lam >= -tol, f"min eigenvalue of sym(M) = {lam:.6g}", lam)
    else:
        if game.lipschitz is None:
            checks["monotonicity"] = CheckResult(False, "oracle costs need a declared Lipschitz bound")
        else:
            rng = np.random.default_rng(seed)
            lo, hi = [], []
            for a in game.agents:
                l_i, h_i = bounding_box(a.omega)
                lo.append(l_i)
                hi.append(h_i)
            lo, hi = np.concatenate(lo), np.concatenate(hi)
            worst = np.inf
            for _ in range(samples):
                x, y = rng.uniform(lo, hi), rng.uniform(lo, hi)
                worst = min(worst, float((pseudo_gradient(game, x) - pseudo_gradient(game, y)) @ (x - y)))
            checks["monotonicity"] = CheckResult(worst >= -tol, f"sampled min <F(x)-F(y), x-y> = {worst:.3g}", worst)

    return ValidationReport(checks)


def require_valid(game: UncertainGame, tol: float = 1e-9) -> ValidationReport:
    report = validate_game(game, tol)
    if not report.passed:
        names = report.failures()
        raise GameValidationError(f"game fails checks: {', '.join(names)}", report)
    return report


def network_quadratic_game(graph, Q, linear, omega, coupling, uncertainty, weight: str = "inverse_degree") -> UncertainGame:
    """Quadratic game whose cross terms follow the communication graph.

    Agent ``i`` gets ``R_ij = I / |N_i|`` for each neighbor ``j`` (the
    ``inverse_degree`` weighting), so ``J_i = 1/2 x_i^T Q_i x_i +
    1/|N_i| sum_{j in N_i} x_i^T x_j + c_i^T x_i``.
    """
    if weight != "inverse_degree":
        raise ValueError(f"unknown neighbor weighting {weight!r}")
    nbrs = graph.neighbors
    agents = []
    for i in range(graph.n):
        n_i = len(linear[i])
        cross = {j: np.eye(n_i, len(linear[j])) / len(nbrs[i]) for j in nbrs[i]}
        agents.append(Agent(n_i, QuadraticCost(Q[i], linear[i], cross), omega[i]))
    return UncertainGame(agents, coupling, uncertainty)
