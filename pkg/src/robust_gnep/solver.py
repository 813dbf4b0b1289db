"""Inertial, relaxed forward-backward-forward iteration and reference solvers.

One iteration reads

    Z   = W + sigma_k (W - W_prev)
    Y   = J(Z - Phi^{-1} A Z)
    W+  = (1 - rho_k) Z + rho_k (Y - Phi^{-1} (A Y - A Z))

with ``J`` the resolvent of the normal-cone part. ``sigma_k = 0`` and
``rho_k = 1`` give Tseng's forward-backward-forward method.

:func:`run_distributed` executes the iteration agent by agent in synchronous
rounds. Each agent owns ``(w_i, nu_i, lam_i, chi_i, mu_i)`` and sees other
agents only through a read-only snapshot of the previous stage. The global
functions :func:`step_inertial`, :func:`step_forward_backward` and
:func:`step_relax` are a straight-line reference for the same update.
"""

from __future__ import annotations

import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigurationError
from .geometry import PolytopeProjector
from .model import lipschitz_constant, pseudo_gradient
from .operators import (BLOCKS, ExtendedOperator, Preconditioner, build_operator, build_preconditioner,
                        eval_A, lipschitz_bound, natural_residual, phi_norm_sq, resolvent_B, spectral_norm)
from .robustify import CanonicalGame, ExtendedGame

RHO_VARIANTS = ("conservative", "aggressive")
MODES = ("ripfbf", "tseng")
STEP_PROFILES = ("uniform", "staggered")


@dataclass(frozen=True)
class SolverParams:
    """Iteration parameters.

    ``rho_variant="conservative"`` uses the numerator ``2 (1 - sigma_bar)^2``;
    ``"aggressive"`` uses ``2 (1 - sigma_bar^2)``. ``sigma_schedule`` and
    ``rho_schedule`` (callables of ``k``) override the default rules.
    """

    sigma_bar: float = 0.5
    rho_variant: str = "conservative"
    fraction: float = 0.9
    step_profile: str = "uniform"
    step_overrides: dict | None = None
    max_iter: int = 50_000
    tol: float = 1e-6
    mode: str = "ripfbf"
    sigma_schedule: Callable | None = field(default=None, compare=False)
    rho_schedule: Callable | None = field(default=None, compare=False)
    residual_norm: str = "euclidean"
    audit: bool = False

    def __post_init__(self):
        if not 0.0 <= self.sigma_bar < 1.0:
            raise ConfigurationError(
                f"sigma_bar = {self.sigma_bar} violates the convergence bound 0 <= sigma_bar < 1")
        if self.rho_variant not in RHO_VARIANTS:
            raise ConfigurationError(f"rho_variant must be one of {RHO_VARIANTS}, got {self.rho_variant!r}")
        if self.mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.step_profile not in STEP_PROFILES:
            raise ConfigurationError(f"step_profile must be one of {STEP_PROFILES}, got {self.step_profile!r}")
        if self.residual_norm not in ("euclidean", "phi"):
            raise ConfigurationError(f"unknown residual norm {self.residual_norm!r}")
        if self.max_iter < 0:
            raise ConfigurationError("max_iter must be >= 0")
        if not self.tol > 0:
            raise ConfigurationError("tol must be positive")


def _rho_numerator(params: SolverParams) -> float:
    sb = params.sigma_bar
    return 2.0 * (1.0 - sb) ** 2 if params.rho_variant == "conservative" else 2.0 * (1.0 - sb * sb)


def default_sigma(sigma_bar: float, k: int) -> float:
    return sigma_bar * (1.0 - 1.0 / (k + 1))


def schedule_params(params: SolverParams, ell_phi: float, k: int) -> tuple[float, float]:
    """``(sigma_k, rho_k)`` for iteration ``k`` (counted from 0).

    Raises
    ------
    ConfigurationError
        If ``rho_k`` leaves ``(0, 1]`` or ``sigma_k`` leaves ``[0, sigma_bar]``.
    """
    if params.mode == "tseng":
        return 0.0, 1.0
    if not ell_phi > 0:
        raise ConfigurationError(f"ell_phi must be positive, got {ell_phi}")
    sb = params.sigma_bar
    sigma = float(params.sigma_schedule(k)) if params.sigma_schedule else default_sigma(sb, k)
    if not 0.0 <= sigma <= sb + 1e-15 and params.sigma_schedule is None:
        raise ConfigurationError(f"sigma_{k} = {sigma} outside [0, sigma_bar = {sb}]")
    if not 0.0 <= sigma < 1.0:
        raise ConfigurationError(f"sigma_{k} = {sigma} outside [0, 1)")
    if params.rho_schedule is not None:
        rho = float(params.rho_schedule(k))
    else:
        rho = _rho_numerator(params) / ((1.0 + ell_phi) * (2.0 * sigma * sigma - sigma + 1.0))
    if not 0.0 < rho <= 1.0:
        raise ConfigurationError(
            f"rho_{k} = {rho:.6g} outside (0, 1] (sigma_bar = {sb}, ell_phi = {ell_phi:.6g}, "
            f"variant = {params.rho_variant}); reduce the step fraction or sigma_bar")
    return sigma, rho


def check_schedule(params: SolverParams, ell_phi: float) -> None:
    """Reject default schedules whose ``rho_k`` would exceed 1 at some ``k``."""
    if params.mode == "tseng" or params.rho_schedule is not None or params.sigma_schedule is not None:
        return
    # 2 s^2 - s + 1 is smallest at s = 1/4; sigma_k sweeps [0, sigma_bar)
    worst = min(params.sigma_bar, 0.25)
    rho = _rho_numerator(params) / ((1.0 + ell_phi) * (2.0 * worst * worst - worst + 1.0))
    if rho > 1.0:
        raise ConfigurationError(
            f"rho_k reaches {rho:.6g} > 1 (sigma_bar = {params.sigma_bar}, ell_phi = {ell_phi:.6g}, "
            f"variant = {params.rho_variant}); raise the step fraction or use the conservative variant")


# straight-line reference steps on global vectors

def step_inertial(W: np.ndarray, W_prev: np.ndarray, sigma: float) -> np.ndarray:
    return W + sigma * (W - W_prev)


def step_forward_backward(op: ExtendedOperator, pc: Preconditioner, Z: np.ndarray,
                          projectors: list | None = None) -> np.ndarray:
    d = pc.inverse_diag(op.layout)
    return resolvent_B(op, Z - d * eval_A(op, Z), projectors)


def step_relax(op: ExtendedOperator, pc: Preconditioner, Z: np.ndarray, Y: np.ndarray, rho: float) -> np.ndarray:
    d = pc.inverse_diag(op.layout)
    return (1.0 - rho) * Z + rho * (Y - d * (eval_A(op, Y) - eval_A(op, Z)))


def initial_point(op: ExtendedOperator) -> np.ndarray:
    """Zeros everywhere, with each ``w_i`` projected onto ``W_i``."""
    return resolvent_B(op, np.zeros(op.layout.size), op.fresh_projectors())


def tseng_iterates(op: ExtendedOperator, pc: Preconditioner, n_iter: int, W0: np.ndarray | None = None) -> list:
    """Plain forward-backward-forward on global vectors; returns ``[W_0, ..., W_n]``."""
    projectors = op.fresh_projectors()
    W = initial_point(op) if W0 is None else np.array(W0, dtype=float)
    out = [W]
    d = pc.inverse_diag(op.layout)
    for _ in range(n_iter):
        AW = eval_A(op, W)
        Y = resolvent_B(op, W - d * AW, projectors)
        W = Y - d * (eval_A(op, Y) - AW)
        out.append(W)
    return out


def lyapunov_value(W: np.ndarray, W_prev: np.ndarray, sigma: float, omega: np.ndarray,
                   inv_diag: np.ndarray) -> float:
    """``|W - omega|^2 - sigma |W_prev - omega|^2 + (2 sigma^2 - sigma + 1) |W - W_prev|^2`` in the ``Phi`` norm."""
    return (phi_norm_sq(W - omega, inv_diag) - sigma * phi_norm_sq(W_prev - omega, inv_diag)
            + (2.0 * sigma * sigma - sigma + 1.0) * phi_norm_sq(W - W_prev, inv_diag))


def lyapunov_trace(history: list, sigmas: list, omega: np.ndarray, inv_diag: np.ndarray) -> np.ndarray:
    """``H_k`` for ``k = 1 .. K`` from iterates ``W_0 .. W_K`` and the ``sigma_k`` used at each step."""
    return np.array([lyapunov_value(history[k], history[k - 1], sigmas[k - 1], omega, inv_diag)
                     for k in range(1, len(history))])


# distributed runtime

class Snapshot:
    """Read-only view of every agent's packed vector for one stage of a round.

    Reads go through :meth:`read`, which optionally records
    ``(reader, owner, field)`` for the locality audit.
    """

    def __init__(self, states: list, slices: list, log: Counter | None):
        self._states = [s.copy() for s in states]
        for s in self._states:
            s.setflags(write=False)
        self._slices = slices
        self._log = log

    def read(self, reader: int, owner: int, name: str) -> np.ndarray:
        if self._log is not None:
            self._log[(reader, owner, name)] += 1
        return self._states[owner][self._slices[owner][name]]


@dataclass(eq=False)
class _AgentNode:
    i: int
    neighbors: tuple
    deps: tuple
    cost: object
    S: np.ndarray
    s_loc: np.ndarray
    R: np.ndarray
    x_slice: slice
    n_agents: int
    steps: np.ndarray
    sl: dict
    projector: PolytopeProjector

    def _lap(self, snap: Snapshot, name: str, own: np.ndarray) -> np.ndarray:
        out = len(self.neighbors) * own
        for j in self.neighbors:
            out = out - snap.read(self.i, j, name)
        return out

    def forward(self, snap: Snapshot) -> np.ndarray:
        """Agent ``i``'s rows of ``A`` at the snapshot."""
        i, sl = self.i, self.sl
        w, lam, mu = (snap.read(i, i, b) for b in ("w", "lam", "mu"))
        nu, chi = snap.read(i, i, "nu"), snap.read(i, i, "chi")
        blocks = [None] * self.n_agents
        for j in self.deps:
            blocks[j] = snap.read(i, j, "x")
        out = np.empty(sl["mu"].stop)
        gw = self.S.T @ lam + self.R.T @ mu
        gw[self.x_slice] += self.cost.gradient(i, blocks)
        out[sl["w"]] = gw
        lap_lam = self._lap(snap, "lam", lam)
        lap_mu = self._lap(snap, "mu", mu)
        out[sl["nu"]] = lap_lam
        out[sl["lam"]] = -self.S @ w + self.s_loc + lap_lam - self._lap(snap, "nu", nu)
        out[sl["chi"]] = lap_mu
        out[sl["mu"]] = -self.R @ w + lap_mu - self._lap(snap, "chi", chi)
        return out

    def resolvent(self, v: np.ndarray) -> np.ndarray:
        out = v.copy()
        out[self.sl["w"]] = self.projector(v[self.sl["w"]])
        out[self.sl["lam"]] = np.maximum(out[self.sl["lam"]], 0.0)
        return out


def _make_nodes(op: ExtendedOperator, pc: Preconditioner) -> list:
    cg, lay = op.cg, op.layout
    nbrs = cg.graph.neighbors
    nodes = []
    for i, agent in enumerate(cg.game.agents):
        deps = tuple(sorted(agent.cost.dependencies(i))) or tuple(range(cg.n_agents))
        sl = {b: lay.local(b, i) for b in BLOCKS}
        nodes.append(_AgentNode(i, nbrs[i], deps, agent.cost, cg.S[i], cg.s_local[i], cg.R[i], cg.x_slices[i],
                                cg.n_agents, pc.local_inverse_diag(lay, i), sl, PolytopeProjector(cg.W[i])))
    return nodes


def _snapshot_slices(op: ExtendedOperator) -> list:
    lay, cg = op.layout, op.cg
    out = []
    for i in range(cg.n_agents):
        d = {b: lay.local(b, i) for b in BLOCKS}
        w = d["w"]
        d["x"] = slice(w.start + cg.x_slices[i].start, w.start + cg.x_slices[i].stop)
        out.append(d)
    return out


@dataclass(eq=False)
class RunReport:
    """Outcome of one solver run.

    ``residuals[k]`` and ``lyapunov[k]`` belong to iterate ``W_{k+1}``;
    ``x_trace`` holds the stacked ``x`` of ``W_0 .. W_K``.
    """

    mode: str
    converged: bool
    iterations: int
    residuals: np.ndarray
    lyapunov: np.ndarray
    wall_ms: np.ndarray
    W: np.ndarray
    x: np.ndarray
    x_trace: np.ndarray
    duals: dict
    consensus: dict
    ell_A: float
    ell_phi: float
    sigmas: np.ndarray
    rhos: np.ndarray
    reads: Counter | None = None

    @property
    def final_residual(self) -> float:
        return float(self.residuals[-1]) if len(self.residuals) else float("nan")


def max_pairwise_gap(rows: np.ndarray) -> float:
    """``max_{i,j} |r_i - r_j|`` over the rows of a 2-D array."""
    if rows.shape[1] == 0 or rows.shape[0] < 2:
        return 0.0
    diff = rows[:, None, :] - rows[None, :, :]
    return float(np.max(np.linalg.norm(diff, axis=2)))


def extract(op: ExtendedOperator, W: np.ndarray) -> tuple[np.ndarray, dict, dict]:
    """Stacked ``x``, per-agent duals and consensus gaps from a global point."""
    cg, lay = op.cg, op.layout
    ws = [W[lay.part("w", i)] for i in range(cg.n_agents)]
    x = np.concatenate([w[s] for w, s in zip(ws, cg.x_slices)])
    z = np.array([w[s] for w, s in zip(ws, cg.z_slices)])
    y = [w[s] for w, s in zip(ws, cg.y_slices)]
    lam = np.array([W[lay.part("lam", i)] for i in range(cg.n_agents)])
    mu = np.array([W[lay.part("mu", i)] for i in range(cg.n_agents)])
    duals = {"lambda": lam, "mu": mu, "z": z, "y": y}
    gaps = {"z": max_pairwise_gap(z), "lambda": max_pairwise_gap(lam), "mu": max_pairwise_gap(mu)}
    return x, duals, gaps


def prepare(cg: CanonicalGame, params: SolverParams) -> tuple[ExtendedOperator, Preconditioner]:
    """Operator and preconditioner with the step rule of ``params``."""
    op = build_operator(cg)
    ell_A = lipschitz_bound(cg, op.ell_F)
    pc = build_preconditioner(ell_A, params.fraction, cg.n_agents, params.step_profile, params.step_overrides)
    return op, pc


def run_distributed(cg: CanonicalGame, params: SolverParams | None = None, agent_order=None,
                    W0: np.ndarray | None = None) -> RunReport:
    """Run the iteration in synchronous rounds until the natural residual drops below ``params.tol``.

    ``agent_order`` permutes the per-round update order; every agent reads
    the same snapshot, so the result does not depend on it. Nonconvergence
    is reported through ``RunReport.converged``.
    """
    params = params or SolverParams()
    op, pc = prepare(cg, params)
    check_schedule(params, pc.ell_phi)
    lay = op.layout
    N = cg.n_agents
    order = list(range(N)) if agent_order is None else [int(i) for i in agent_order]
    if sorted(order) != list(range(N)):
        raise ValueError(f"agent_order must be a permutation of 0..{N - 1}")
    nodes = _make_nodes(op, pc)
    slices = _snapshot_slices(op)
    log = Counter() if params.audit else None
    monitor = op.fresh_projectors()
    inv_diag = pc.inverse_diag(lay)

    W_glob = initial_point(op) if W0 is None else np.array(W0, dtype=float)
    W = [lay.gather(W_glob, i) for i in range(N)]
    W_prev = [w.copy() for w in W]
    history = [W_glob]
    residuals, wall, sigmas, rhos = [], [], [], []
    converged = False
    k = 0
    while k < params.max_iter:
        t0 = time.perf_counter()
        sigma, rho = schedule_params(params, pc.ell_phi, k)
        Z = [None] * N
        for i in order:
            Z[i] = W[i] + sigma * (W[i] - W_prev[i])
        snap_z = Snapshot(Z, slices, log)
        AZ, Y = [None] * N, [None] * N
        for i in order:
            AZ[i] = nodes[i].forward(snap_z)
            Y[i] = nodes[i].resolvent(Z[i] - nodes[i].steps * AZ[i])
        snap_y = Snapshot(Y, slices, log)
        W_next = [None] * N
        for i in order:
            AY = nodes[i].forward(snap_y)
            W_next[i] = (1.0 - rho) * Z[i] + rho * (Y[i] - nodes[i].steps * (AY - AZ[i]))
        W_prev, W = W, W_next
        W_glob = lay.scatter(W)
        res = natural_residual(op, pc, W_glob, params.residual_norm, monitor)
        wall.append((time.perf_counter() - t0) * 1e3)
        residuals.append(res)
        sigmas.append(sigma)
        rhos.append(rho)
        history.append(W_glob)
        k += 1
        if res < params.tol:
            converged = True
            break

    lyap = lyapunov_trace(history, sigmas, history[-1], inv_diag)
    x, duals, gaps = extract(op, history[-1])
    x_trace = np.array([extract_x(op, h) for h in history])
    return RunReport(params.mode, converged, k, np.array(residuals), lyap, np.array(wall), history[-1], x,
                     x_trace, duals, gaps, pc.ell_A, pc.ell_phi, np.array(sigmas), np.array(rhos), log)


def extract_x(op: ExtendedOperator, W: np.ndarray) -> np.ndarray:
    cg, lay = op.cg, op.layout
    parts = []
    for i in range(cg.n_agents):
        w = W[lay.part("w", i)]
        parts.append(w[cg.x_slices[i]])
    return np.concatenate(parts)


def locality_violations(cg: CanonicalGame, reads: Counter) -> list:
    """Reads outside the allowed pattern.

    Multiplier and auxiliary blocks may be read only from oneself or a
    neighbor; ``x`` may be read from any agent the cost depends on.
    """
    nbrs = cg.graph.neighbors
    bad = []
    for (reader, owner, name), count in reads.items():
        if reader == owner:
            continue
        if name == "x":
            deps = cg.game.agents[reader].cost.dependencies(reader)
            if deps and owner not in deps:
                bad.append((reader, owner, name, count))
        elif owner not in nbrs[reader]:
            bad.append((reader, owner, name, count))
    return bad


@dataclass(eq=False)
class CentralizedResult:
    """Reference solution of the extended game with a single shared ``z`` and ``lambda``."""

    converged: bool
    iterations: int
    residual: float
    x: np.ndarray
    y: list
    z: np.ndarray
    lam: np.ndarray


def run_centralized(eg: ExtendedGame, tol: float = 1e-10, max_iter: int = 500_000,
                    fraction: float = 0.9) -> CentralizedResult:
    """Tseng's method on the primal-dual operator of the extended game.

    Variables are ``v = (x_1, y_1, ..., x_N, y_N, z)`` and one multiplier
    ``lam`` per coupled row. The operator is
    ``G(v, lam) = (F(v) + S^T lam, s - S v)`` over ``prod sets x R_+``.
    """
    game = eg.game
    sizes = [p.dim for p in eg.local_sets] + [eg.shared_set.dim]
    offs = np.concatenate([[0], np.cumsum(sizes)])
    nv = int(offs[-1])
    K = eg.K
    S = np.hstack(list(eg.S_local) + [eg.S_shared])
    xidx = np.concatenate([np.arange(offs[i], offs[i] + a.n) for i, a in enumerate(game.agents)])
    projectors = [PolytopeProjector(p) for p in (*eg.local_sets, eg.shared_set)]
    ell = lipschitz_constant(game) + spectral_norm(S)
    t = fraction / ell

    def G(u):
        v, lam = u[:nv], u[nv:]
        g = S.T @ lam
        g[xidx] += pseudo_gradient(game, v[xidx])
        return np.concatenate([g, eg.s - S @ v])

    def J(u):
        out = u.copy()
        for b, proj in enumerate(projectors):
            out[offs[b]:offs[b + 1]] = proj(u[offs[b]:offs[b + 1]])
        out[nv:] = np.maximum(out[nv:], 0.0)
        return out

    u = J(np.zeros(nv + K))
    res = float("inf")
    k = 0
    converged = False
    while k < max_iter:
        Gu = G(u)
        y = J(u - t * Gu)
        res = float(np.linalg.norm(u - y)) / t
        if res < tol:
            converged = True
            break
        u = y - t * (G(y) - Gu)
        k += 1
    v = u[:nv]
    ys = [v[offs[i] + a.n:offs[i + 1]] for i, a in enumerate(game.agents)]
    return CentralizedResult(converged, k, res, v[xidx].copy(), ys, v[offs[-2]:].copy(), u[nv:].copy())
