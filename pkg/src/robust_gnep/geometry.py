"""Projections, vertex enumeration and small LPs over polytopes."""

from __future__ import annotations

from itertools import combinations, product

import numpy as np
from scipy.optimize import linprog

from .errors import InfeasibleError, ProjectionError, UnsupportedScaleError
from .model import Polytope, UncertainConstraint, UncertaintySets

DEDUP_TOL = 1e-9


def box_bounds(target: Polytope):
    """``(lo, hi)`` if ``target`` is an axis-aligned box (possibly with infinite sides), else ``None``."""
    if target.n_eq:
        return None
    A = target.A
    nnz = np.count_nonzero(A, axis=1)
    if np.any(nnz != 1):
        return None
    lo = np.full(target.dim, -np.inf)
    hi = np.full(target.dim, np.inf)
    for row, bi in zip(A, target.b):
        j = int(np.flatnonzero(row)[0])
        v = bi / row[j]
        if row[j] > 0:
            hi[j] = min(hi[j], v)
        else:
            lo[j] = max(lo[j], v)
    if np.any(lo > hi):
        raise InfeasibleError("box with crossing bounds is empty")
    return lo, hi


def _project_affine(E: np.ndarray, f: np.ndarray, p: np.ndarray) -> np.ndarray:
    y = p + np.linalg.lstsq(E, f - E @ p, rcond=None)[0]
    if np.linalg.norm(E @ y - f) > 1e-9 * (1.0 + np.linalg.norm(f)):
        raise InfeasibleError("affine set is empty")
    return y


def dykstra(target: Polytope, point, tol: float = 1e-10, max_iter: int = 100_000) -> np.ndarray:
    """Dykstra's alternating projections over the halfspaces and the affine part of ``target``.

    Stops when a full sweep moves both the iterate and the correction terms
    by less than ``tol / 10``.
    """
    x = np.array(point, dtype=float)
    rows = [(a, bi, a @ a) for a, bi in zip(target.A, target.b) if a @ a > 0]
    has_affine = target.n_eq > 0
    if has_affine:
        E, f = target.Aeq, target.beq
        E_pinv = np.linalg.pinv(E)
    n_sets = len(rows) + int(has_affine)
    incr = np.zeros((n_sets, x.size))
    change = np.inf
    for _ in range(max_iter):
        x_start = x.copy()
        incr_start = incr.copy()
        for k, (a, bi, aa) in enumerate(rows):
            z = x + incr[k]
            excess = a @ z - bi
            x = z - (excess / aa) * a if excess > 0 else z
            incr[k] = z - x
        if has_affine:
            z = x + incr[-1]
            x = z + E_pinv @ (f - E @ z)
            incr[-1] = z - x
        change = np.linalg.norm(x - x_start) + np.linalg.norm(incr - incr_start)
        if change < tol / 10:
            return x
    raise ProjectionError(f"Dykstra did not converge in {max_iter} sweeps", last_iterate=x, residual=float(change))


def project_qp(target: Polytope, point, start=None, working=()) -> tuple[np.ndarray, tuple]:
    """Exact projection by a primal active-set method; returns ``(y, active_rows)``.

    ``start`` must be feasible; without it a phase-1 LP supplies one. Each
    step solves the equality-constrained projection on the working set, moves
    until a blocking row, and drops the most negative multiplier at a
    stationary point. Unlike least-distance reformulations this stays
    accurate on sets with empty interior.
    """
    p = np.asarray(point, dtype=float)
    A, b = target.A, target.b
    scale = 1.0 + np.abs(b)
    eq_keep = _independent_rows(target.Aeq, range(target.n_eq)) if target.n_eq else []
    E, f = target.Aeq[eq_keep], target.beq[eq_keep]
    if start is None:
        t, start, cert = phase1(target)
        if t > 1e-9:
            raise InfeasibleError("projection target is empty", cert)
    x = np.array(start, dtype=float)
    if E.shape[0]:
        x = x + np.linalg.lstsq(E, f - E @ x, rcond=None)[0]
    tight = [k for k in working if b[k] - A[k] @ x <= 1e-9 * scale[k]]
    work = _independent_rows(A, tight, E)
    n_e = E.shape[0]
    for _ in range(50 * (A.shape[0] + p.size) + 100):
        C = np.vstack([E, A[work]])
        if C.shape[0]:
            mult = np.linalg.lstsq(C @ C.T, C @ (p - x), rcond=None)[0]
            d = (p - x) - C.T @ mult
        else:
            mult, d = np.zeros(0), p - x
        if np.linalg.norm(d) <= 1e-11 * (1.0 + np.linalg.norm(x) + np.linalg.norm(p)):
            lam = mult[n_e:]
            if lam.size == 0 or lam.min() >= -1e-12:
                return x, tuple(sorted(work))
            work.pop(int(np.argmin(lam)))
            continue
        Ad = A @ d
        alpha, block = 1.0, None
        for k in np.flatnonzero(Ad > 1e-14):
            if k in work:
                continue
            step = max(b[k] - A[k] @ x, 0.0) / Ad[k]
            if step < alpha:
                alpha, block = step, int(k)
        x = x + alpha * d
        if block is not None:
            work.append(block)
    raise ProjectionError("active-set projection did not terminate", last_iterate=x)


def project_polytope(target: Polytope, point, tol: float = 1e-10, max_iter: int = 100_000) -> np.ndarray:
    """Euclidean projection of ``point`` onto ``target``.

    Boxes and orthants are clamped, pure affine sets solved by least squares,
    and everything else goes through :func:`dykstra`.
    """
    p = np.asarray(point, dtype=float)
    bounds = box_bounds(target)
    if bounds is not None:
        return np.clip(p, *bounds)
    if target.n_ineq == 0:
        return _project_affine(target.Aeq, target.beq, p) if target.n_eq else p.copy()
    return dykstra(target, p, tol=tol, max_iter=max_iter)


def _independent_rows(M: np.ndarray, candidates, base: np.ndarray | None = None, tol: float = 1e-10):
    chosen = []
    cur = base if base is not None and base.shape[0] else np.zeros((0, M.shape[1]))
    rank = np.linalg.matrix_rank(cur, tol) if cur.shape[0] else 0
    for k in candidates:
        trial = np.vstack([cur, M[k]])
        r = np.linalg.matrix_rank(trial, tol)
        if r > rank:
            chosen.append(k)
            cur, rank = trial, r
    return chosen


class PolytopeProjector:
    """Exact, warm-started projector onto a fixed polytope.

    Each call first guesses that the previous active set is still optimal and
    checks the guess with a single linear solve (primal feasibility and
    nonnegative multipliers). On a miss it falls back to :func:`project_qp`
    and records the new active set. Nonemptiness is certified once at
    construction.
    """

    def __init__(self, target: Polytope, tol: float = 1e-11):
        self.target = target
        self.tol = tol
        self.bounds = box_bounds(target)
        v, start, cert = phase1(target)
        if v > 1e-9:
            raise InfeasibleError("projection target is empty", cert)
        self._last = start
        eq_keep = _independent_rows(target.Aeq, range(target.n_eq)) if target.n_eq else []
        self._E = target.Aeq[eq_keep]
        self._f = target.beq[eq_keep]
        self._scale = 1.0 + np.abs(target.b)
        self._cache: dict[tuple, tuple] = {}
        self._active: tuple = ()
        self.fallbacks = 0

    def _factor(self, active: tuple):
        entry = self._cache.get(active)
        if entry is None:
            C = np.vstack([self._E, self.target.A[list(active)]])
            g = np.concatenate([self._f, self.target.b[list(active)]])
            K = np.linalg.pinv(C @ C.T) if C.shape[0] else np.zeros((0, 0))
            entry = self._cache[active] = (C, g, K)
        return entry

    def _try(self, active: tuple, p: np.ndarray):
        C, g, K = self._factor(active)
        if C.shape[0] == 0:
            y, mult = p.copy(), np.zeros(0)
        else:
            mult = K @ (C @ p - g)
            y = p - C.T @ mult
        ok = (np.all(self.target.A @ y - self.target.b <= self.tol * self._scale)
              and np.all(mult[self._E.shape[0]:] >= -self.tol))
        return y, ok

    def __call__(self, point) -> np.ndarray:
        p = np.asarray(point, dtype=float)
        if self.bounds is not None:
            return np.clip(p, *self.bounds)
        y, ok = self._try(self._active, p)
        if ok:
            self._last = y
            return y
        self.fallbacks += 1
        y, active = project_qp(self.target, p, self._last, self._active)
        self._active = active
        self._last = y
        return y


def enumerate_vertices(poly: Polytope, max_dim: int = 6, max_rows: int = 16) -> list[np.ndarray]:
    """All basic feasible solutions of a small polytope, deduplicated within 1e-9."""
    d = poly.dim
    if d > max_dim or poly.n_ineq + poly.n_eq > max_rows:
        raise UnsupportedScaleError(
            f"vertex enumeration limited to dim <= {max_dim} and <= {max_rows} rows "
            f"(got dim {d}, {poly.n_ineq + poly.n_eq} rows)")
    eq_keep = _independent_rows(poly.Aeq, range(poly.n_eq)) if poly.n_eq else []
    E, f = poly.Aeq[eq_keep], poly.beq[eq_keep]
    k = d - len(eq_keep)
    out: list[np.ndarray] = []
    for S in combinations(range(poly.n_ineq), k):
        M = np.vstack([E, poly.A[list(S)]])
        if np.linalg.matrix_rank(M) < d:
            continue
        x = np.linalg.solve(M, np.concatenate([f, poly.b[list(S)]]))
        if not poly.contains(x, DEDUP_TOL * (1 + np.abs(x).max(initial=0))):
            continue
        if not any(np.max(np.abs(x - v)) <= DEDUP_TOL for v in out):
            out.append(x)
    return out


def _vertices_or_origin(p: Polytope) -> list[np.ndarray]:
    return enumerate_vertices(p) if p.dim else [np.zeros(0)]


def worst_case_realization(c: UncertainConstraint, u: UncertaintySets, blocks):
    """Maximizing ``delta_i`` per agent and minimizing ``delta`` for the resource term."""
    deltas = []
    for i, xi in enumerate(blocks):
        verts = _vertices_or_origin(u.local[i])
        deltas.append(max(verts, key=lambda v: float((c.P[i] @ v) @ xi)))
    gverts = _vertices_or_origin(u.glob)
    return deltas, min(gverts, key=lambda v: float(c.q @ v))


def worst_case_value(c: UncertainConstraint, u: UncertaintySets, blocks) -> tuple[float, float]:
    """``(max over Delta_i of the LHS, min over Delta of the RHS)`` at the strategy ``blocks``."""
    deltas, dg = worst_case_realization(c, u, blocks)
    lhs = sum(float((a + P @ di) @ xi) for a, P, di, xi in zip(c.a0, c.P, deltas, blocks))
    return lhs, float(c.b0 + c.q @ dg)


def vertex_slacks(c: UncertainConstraint, u: UncertaintySets, blocks):
    """Slack ``b(delta) - A(delta) x`` at every combination of uncertainty vertices.

    Yields ``(slack, (delta_1, ..., delta_N, delta))``.
    """
    loc = [_vertices_or_origin(p) for p in u.local]
    glob = _vertices_or_origin(u.glob)
    for combo in product(*loc, glob):
        *dl, dg = combo
        lhs = sum(float((a + P @ di) @ xi) for a, P, di, xi in zip(c.a0, c.P, dl, blocks))
        yield float(c.b0 + c.q @ dg) - lhs, combo


def _linprog(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, bounds=None):
    return linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs")


def phase1(poly: Polytope):
    """Minimal uniform violation ``t`` of the rows of ``poly``.

    Returns ``(t, point, certificate)``; ``t <= 0`` up to round-off means the
    polytope is nonempty. The certificate holds the LP multipliers, which
    give a Farkas combination proving emptiness when ``t > 0``.
    """
    d, m, k = poly.dim, poly.n_ineq, poly.n_eq
    if m == 0 and k == 0:
        return 0.0, np.zeros(d), None
    nv = d + 1 + 2 * k
    cost = np.zeros(nv)
    cost[d:] = 1.0
    A_ub = np.hstack([poly.A, -np.ones((m, 1)), np.zeros((m, 2 * k))]) if m else None
    A_eq = np.hstack([poly.Aeq, np.zeros((k, 1)), np.eye(k), -np.eye(k)]) if k else None
    bounds = [(None, None)] * d + [(0, None)] * (1 + 2 * k)
    res = _linprog(cost, A_ub, poly.b if m else None, A_eq, poly.beq if k else None, bounds)
    if res.status != 0:
        raise RuntimeError(f"phase-1 LP failed: {res.message}")
    cert = {
        "ineq": (-res.ineqlin.marginals).tolist() if m else [],
        "eq": (-res.eqlin.marginals).tolist() if k else [],
    }
    return float(res.fun), res.x[:d], cert


def lp_margin(poly: Polytope, cap: float = 1.0):
    """Largest ``s <= cap`` with ``a_k x + s ||a_k|| <= b_k`` for all inequality rows."""
    d, m = poly.dim, poly.n_ineq
    norms = np.linalg.norm(poly.A, axis=1)
    cost = np.zeros(d + 1)
    cost[-1] = -1.0
    A_ub = np.hstack([poly.A, norms[:, None]]) if m else None
    A_eq = np.hstack([poly.Aeq, np.zeros((poly.n_eq, 1))]) if poly.n_eq else None
    res = _linprog(cost, A_ub, poly.b if m else None, A_eq, poly.beq if poly.n_eq else None,
                   [(None, None)] * d + [(None, cap)])
    if res.status != 0:
        return -np.inf, None
    return float(res.x[-1]), res.x[:d]


def recession_direction(poly: Polytope, tol: float = 1e-9):
    """A nonzero ``r`` with ``A r <= 0`` and ``Aeq r = 0`` if one exists (the set is then unbounded)."""
    d = poly.dim
    A_ub = poly.A if poly.n_ineq else None
    b_ub = np.zeros(poly.n_ineq) if poly.n_ineq else None
    A_eq = poly.Aeq if poly.n_eq else None
    b_eq = np.zeros(poly.n_eq) if poly.n_eq else None
    for j in range(d):
        for sign in (1.0, -1.0):
            cost = np.zeros(d)
            cost[j] = -sign
            res = _linprog(cost, A_ub, b_ub, A_eq, b_eq, [(-1, 1)] * d)
            if res.status == 0 and -res.fun > tol:
                return res.x / np.linalg.norm(res.x)
    return None


def bounding_box(poly: Polytope) -> tuple[np.ndarray, np.ndarray]:
    d = poly.dim
    lo, hi = np.empty(d), np.empty(d)
    for j in range(d):
        for sign, out in ((1.0, lo), (-1.0, hi)):
            cost = np.zeros(d)
            cost[j] = sign
            res = _linprog(cost, poly.A if poly.n_ineq else None, poly.b if poly.n_ineq else None,
                           poly.Aeq if poly.n_eq else None, poly.beq if poly.n_eq else None,
                           [(None, None)] * d)
            out[j] = res.x[j] if res.status == 0 else sign * -np.inf
    return lo, hi
