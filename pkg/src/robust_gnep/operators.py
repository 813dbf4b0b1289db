"""Extended operator, resolvent and preconditioner for the distributed iteration.

The stacked state is ``u = col(w, nu, lam, chi, mu)`` with every block itself
stacked over agents. ``nu`` and ``chi`` are auxiliary consensus variables for
the inequality multipliers ``lam`` and the equality multipliers ``mu``.

The single-valued part is

    A(u) = col(F(w) + S^T lam + R^T mu,
               L lam,
               -S w + s_loc + L lam - L nu,
               L mu,
               -R w + L mu - L chi)

where ``S`` and ``R`` are block-diagonal over agents and ``L`` is the
Laplacian inflated to the multiplier width. The set-valued part is the normal
cone of ``prod W_i`` on ``w`` and of the nonnegative orthant on ``lam``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError
from .geometry import PolytopeProjector
from .model import game_matrix, lipschitz_constant, pseudo_gradient
from .robustify import CanonicalGame

BLOCKS = ("w", "nu", "lam", "chi", "mu")
STEP_NAMES = ("alpha", "beta", "gamma", "tau", "theta")  # w, nu, lam, chi, mu


@dataclass(frozen=True)
class Layout:
    """Index bookkeeping between the global ordering and per-agent packed vectors.

    Globally the blocks come in the order ``w, nu, lam, chi, mu``, each stacked
    over agents. Agent ``i`` packs its own pieces as
    ``[w_i, nu_i, lam_i, chi_i, mu_i]``.
    """

    eta: tuple
    c_in: int
    c_eq: int

    def __post_init__(self):
        N = len(self.eta)
        widths = {"w": int(sum(self.eta)), "nu": N * self.c_in, "lam": N * self.c_in,
                  "chi": N * self.c_eq, "mu": N * self.c_eq}
        blocks, parts, local, index = {}, {}, [], []
        start = 0
        for b in BLOCKS:
            blocks[b] = slice(start, start + widths[b])
            start += widths[b]
        w_off = np.concatenate([[0], np.cumsum(self.eta)]).astype(int)
        for i in range(N):
            lw = {"w": self.eta[i], "nu": self.c_in, "lam": self.c_in, "chi": self.c_eq, "mu": self.c_eq}
            loc, pos = {}, 0
            for b in BLOCKS:
                if b == "w":
                    a = blocks["w"].start + w_off[i]
                else:
                    a = blocks[b].start + i * lw[b]
                parts[(b, i)] = slice(int(a), int(a) + lw[b])
                loc[b] = slice(pos, pos + lw[b])
                pos += lw[b]
            local.append(loc)
            index.append(np.concatenate([np.arange(parts[(b, i)].start, parts[(b, i)].stop) for b in BLOCKS]))
        object.__setattr__(self, "_widths", widths)
        object.__setattr__(self, "_blocks", blocks)
        object.__setattr__(self, "_parts", parts)
        object.__setattr__(self, "_local", local)
        object.__setattr__(self, "_index", index)
        object.__setattr__(self, "_size", start)

    @property
    def n_agents(self) -> int:
        return len(self.eta)

    @property
    def widths(self) -> dict:
        return dict(self._widths)

    @property
    def size(self) -> int:
        return self._size

    def block(self, name: str) -> slice:
        return self._blocks[name]

    def part(self, name: str, i: int) -> slice:
        """Global slice of agent ``i``'s piece of block ``name``."""
        return self._parts[(name, i)]

    def local_widths(self, i: int) -> dict:
        return {b: sl.stop - sl.start for b, sl in self._local[i].items()}

    def local(self, name: str, i: int) -> slice:
        """Slice of block ``name`` inside agent ``i``'s packed vector."""
        return self._local[i][name]

    def agent_index(self, i: int) -> np.ndarray:
        """Global indices of agent ``i``'s packed vector, in packed order."""
        return self._index[i]

    def gather(self, u: np.ndarray, i: int) -> np.ndarray:
        return u[self._index[i]]

    def scatter(self, locals_: list) -> np.ndarray:
        u = np.empty(self._size)
        for idx, v in zip(self._index, locals_):
            u[idx] = v
        return u


def _layout(cg: CanonicalGame) -> Layout:
    return Layout(tuple(cg.eta), cg.c_in, cg.c_eq)


@dataclass(eq=False)
class ExtendedOperator:
    """``A`` and the resolvent of ``B`` for a canonical game.

    For quadratic games ``F`` is affine and the whole of ``A`` is held as one
    sparse matrix plus a constant. Otherwise ``F`` is evaluated through the
    cost oracles and only the multiplier coupling is linear.
    """

    cg: CanonicalGame
    layout: Layout
    coupling: sp.csr_matrix          # every linear term except F
    const: np.ndarray
    F_matrix: sp.csr_matrix | None   # w-space matrix of F when affine
    F_const: np.ndarray | None
    ell_F: float
    projectors: list = field(default_factory=list)

    @property
    def linear(self) -> sp.csr_matrix | None:
        if self.F_matrix is None:
            return None
        return self.coupling + self.F_matrix

    def fresh_projectors(self) -> list:
        return [PolytopeProjector(W) for W in self.cg.W]


def _x_selector(cg: CanonicalGame) -> sp.csr_matrix:
    """Sparse map from stacked ``w`` to stacked ``x``."""
    rows, cols = [], []
    r, off = 0, 0
    for n_i, xs in zip(cg.eta, cg.x_slices):
        for k in range(xs.start, xs.stop):
            rows.append(r)
            cols.append(off + k)
            r += 1
        off += n_i
    return sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(r, sum(cg.eta)))


def skew_part(cg: CanonicalGame) -> sp.csr_matrix:
    """Skew-symmetric multiplier coupling (zero on the ``w``-``w`` block)."""
    lay = _layout(cg)
    S = sp.block_diag(cg.S, format="csr")
    R = sp.block_diag(cg.R, format="csr")
    Lin = sp.kron(cg.graph.laplacian, sp.identity(cg.c_in), format="csr")
    Leq = sp.kron(cg.graph.laplacian, sp.identity(cg.c_eq), format="csr")
    n = lay.size
    M = sp.lil_matrix((n, n))
    w, nu, lam, chi, mu = (lay.block(b) for b in BLOCKS)
    M[w, lam] = S.T
    M[lam, w] = -S
    M[w, mu] = R.T
    M[mu, w] = -R
    M[nu, lam] = Lin
    M[lam, nu] = -Lin
    M[chi, mu] = Leq
    M[mu, chi] = -Leq
    return M.tocsr()


def laplacian_part(cg: CanonicalGame) -> sp.csr_matrix:
    """Symmetric PSD term ``L lam`` on the ``lam`` block and ``L mu`` on the ``mu`` block."""
    lay = _layout(cg)
    n = lay.size
    M = sp.lil_matrix((n, n))
    M[lay.block("lam"), lay.block("lam")] = sp.kron(cg.graph.laplacian, sp.identity(cg.c_in))
    M[lay.block("mu"), lay.block("mu")] = sp.kron(cg.graph.laplacian, sp.identity(cg.c_eq))
    return M.tocsr()


def printed_coupling(cg: CanonicalGame) -> sp.csr_matrix:
    """Multiplier coupling written as one matrix, Laplacian diagonal blocks included.

    This matrix is not skew. Its symmetric part is :func:`laplacian_part`, so
    its quadratic form is ``||lam||_L^2 + ||mu||_L^2 >= 0``.
    """
    return (skew_part(cg) + laplacian_part(cg)).tocsr()


def build_operator(cg: CanonicalGame) -> ExtendedOperator:
    lay = _layout(cg)
    coupling = printed_coupling(cg)
    const = np.zeros(lay.size)
    for i in range(cg.n_agents):
        const[lay.part("lam", i)] = cg.s_local[i]
    game = cg.game
    ell_F = lipschitz_constant(game)
    if game.is_quadratic:
        M, c = game_matrix(game)
        P = _x_selector(cg)
        n = lay.size
        Fw = (P.T @ sp.csr_matrix(M) @ P).tocsr()
        F_matrix = sp.lil_matrix((n, n))
        F_matrix[lay.block("w"), lay.block("w")] = Fw
        F_const = np.zeros(n)
        F_const[lay.block("w")] = P.T @ c
        op = ExtendedOperator(cg, lay, coupling, const + F_const, F_matrix.tocsr(), F_const, ell_F)
    else:
        op = ExtendedOperator(cg, lay, coupling, const, None, None, ell_F)
    op.projectors = op.fresh_projectors()
    return op


def eval_F(op: ExtendedOperator, u: np.ndarray) -> np.ndarray:
    """Pseudo-gradient padded with zeros outside the ``x`` coordinates."""
    cg, lay = op.cg, op.layout
    ws = [u[lay.part("w", i)] for i in range(cg.n_agents)]
    x = np.concatenate([w[s] for w, s in zip(ws, cg.x_slices)])
    g = cg.game.split(pseudo_gradient(cg.game, x))
    out = np.zeros(lay.size)
    for i in range(cg.n_agents):
        part = lay.part("w", i)
        xs = cg.x_slices[i]
        out[part.start + xs.start:part.start + xs.stop] = g[i]
    return out


def eval_A(op: ExtendedOperator, u: np.ndarray) -> np.ndarray:
    if op.F_matrix is not None:
        return op.coupling @ u + op.F_matrix @ u + op.const
    return op.coupling @ u + op.const + eval_F(op, u)


def resolvent_B(op: ExtendedOperator, u: np.ndarray, projectors: list | None = None) -> np.ndarray:
    """Project each ``w_i`` on ``W_i`` and clip ``lam`` at zero; identity elsewhere."""
    projectors = op.projectors if projectors is None else projectors
    out = u.copy()
    lay = op.layout
    for i, proj in enumerate(projectors):
        sl = lay.part("w", i)
        out[sl] = proj(u[sl])
    lam = lay.block("lam")
    out[lam] = np.maximum(out[lam], 0.0)
    return out


def lipschitz_bound(cg: CanonicalGame, ell_F: float) -> float:
    """``ell_F + 4 kappa + ||blkdiag S_i|| + ||blkdiag R_i||``."""
    return float(ell_F + 4.0 * cg.graph.kappa + max(map(spectral_norm, cg.S)) + max(map(spectral_norm, cg.R)))


def spectral_norm(M: np.ndarray) -> float:
    return float(np.linalg.norm(M, 2)) if M.size else 0.0


@dataclass(frozen=True, eq=False)
class Preconditioner:
    """Diagonal metric ``Phi`` given by per-agent step sizes.

    Each of ``alpha, beta, gamma, tau, theta`` holds one step per agent for the
    ``w, nu, lam, chi, mu`` blocks. ``Phi^{-1}`` multiplies a block by its step.
    """

    ell_A: float
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    tau: np.ndarray
    theta: np.ndarray

    def steps(self, name: str) -> np.ndarray:
        return getattr(self, STEP_NAMES[BLOCKS.index(name)])

    @property
    def max_step(self) -> float:
        return float(max(np.max(getattr(self, s)) for s in STEP_NAMES))

    @property
    def min_step(self) -> float:
        return float(min(np.min(getattr(self, s)) for s in STEP_NAMES))

    @property
    def lambda_max(self) -> float:
        """Largest eigenvalue of ``Phi``."""
        return 1.0 / self.min_step

    @property
    def lambda_min(self) -> float:
        """Smallest eigenvalue of ``Phi``."""
        return 1.0 / self.max_step

    @property
    def ell_phi(self) -> float:
        """Lipschitz constant of ``Phi^{-1} A`` in the ``Phi`` norm bound, ``ell_A / lambda_min``."""
        return self.ell_A / self.lambda_min

    def inverse_diag(self, layout: Layout) -> np.ndarray:
        cache = self.__dict__.setdefault("_diag_cache", {})
        if layout not in cache:
            cache[layout] = self._inverse_diag(layout)
            cache[layout].setflags(write=False)
        return cache[layout]

    def _inverse_diag(self, layout: Layout) -> np.ndarray:
        d = np.empty(layout.size)
        for name in BLOCKS:
            st = self.steps(name)
            for i in range(layout.n_agents):
                d[layout.part(name, i)] = st[i]
        return d

    def local_inverse_diag(self, layout: Layout, i: int) -> np.ndarray:
        return np.concatenate([np.full(layout.local_widths(i)[b], self.steps(b)[i]) for b in BLOCKS])


def build_preconditioner(ell_A: float, fraction: float = 0.9, n_agents: int = 1, profile: str = "uniform",
                         overrides: dict | None = None) -> Preconditioner:
    """Steps ``fraction / ell_A`` per agent, optionally staggered or overridden.

    ``profile="staggered"`` gives agent ``i`` the fraction
    ``fraction * (1 - i / N)``, so agent 0 takes the largest steps.
    ``overrides`` maps step names to scalars or per-agent arrays.

    Raises
    ------
    ConfigurationError
        If ``fraction`` is outside ``(0, 1)``, a step is not positive, or the
        final steps break ``ell_A * max_step < 1``.
    """
    if not ell_A > 0:
        raise ConfigurationError(f"ell_A must be positive, got {ell_A}")
    if not 0.0 < fraction < 1.0:
        raise ConfigurationError(f"step fraction must lie in (0, 1), got {fraction}")
    if profile == "uniform":
        fr = np.full(n_agents, fraction)
    elif profile == "staggered":
        fr = fraction * (1.0 - np.arange(n_agents) / n_agents)
    else:
        raise ConfigurationError(f"unknown step profile {profile!r}")
    base = fr / ell_A
    steps = {s: base.copy() for s in STEP_NAMES}
    for k, v in (overrides or {}).items():
        if k not in steps:
            raise ConfigurationError(f"unknown step name {k!r}")
        steps[k] = np.broadcast_to(np.asarray(v, dtype=float), (n_agents,)).copy()
    for k, v in steps.items():
        if np.any(~np.isfinite(v)) or np.any(v <= 0):
            raise ConfigurationError(f"step {k} must be positive, got {v}")
    pc = Preconditioner(ell_A, **steps)
    if not pc.ell_phi < 1.0:
        raise ConfigurationError(
            f"ell_A / lambda_min(Phi) = {pc.ell_phi:.6g} must be < 1; shrink the steps below {1 / ell_A:.6g}")
    return pc


def natural_residual(op: ExtendedOperator, pc: Preconditioner, u: np.ndarray, norm: str = "euclidean",
                     projectors: list | None = None) -> float:
    """``|| u - J(u - Phi^{-1} A u) ||`` in the Euclidean or ``Phi`` norm."""
    d = pc.inverse_diag(op.layout)
    r = u - resolvent_B(op, u - d * eval_A(op, u), projectors)
    if norm == "euclidean":
        return float(np.linalg.norm(r))
    if norm == "phi":
        return float(np.sqrt(np.sum(r * r / d)))
    raise ValueError(f"unknown residual norm {norm!r}")


def phi_norm_sq(v: np.ndarray, inv_diag: np.ndarray) -> float:
    return float(np.sum(v * v / inv_diag))
