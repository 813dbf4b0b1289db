"""Reference computations that share no code with the package.

Each oracle is deliberately brute force: it is slow but obviously correct at
the small sizes used in the tests.
"""

from __future__ import annotations

import itertools

import numpy as np


def affine_projection(M: np.ndarray, r: np.ndarray, p: np.ndarray):
    """Projection of ``p`` onto ``{x | M x = r}``; ``None`` if the system is inconsistent."""
    if M.shape[0] == 0:
        return p.copy()
    # x = p - M^T nu with M M^T nu = M p - r (least squares handles rank loss)
    nu, *_ = np.linalg.lstsq(M @ M.T, M @ p - r, rcond=None)
    x = p - M.T @ nu
    if np.linalg.norm(M @ x - r) > 1e-9 * (1.0 + np.linalg.norm(r)):
        return None
    return x


def project_enumerate(A, b, Aeq, beq, p, feas_tol: float = 1e-9) -> np.ndarray:
    """Euclidean projection onto ``{A x <= b, Aeq x = beq}`` by active-set enumeration.

    The projection lies on the affine hull of its active rows and is the
    orthogonal projection of ``p`` onto that hull, so the nearest feasible
    candidate over every subset of inequality rows is the answer.
    """
    A, b = np.asarray(A, float), np.asarray(b, float)
    Aeq, beq = np.asarray(Aeq, float).reshape(-1, A.shape[1]), np.asarray(beq, float)
    p = np.asarray(p, float)
    best, best_d = None, np.inf
    m = A.shape[0]
    for k in range(m + 1):
        for S in itertools.combinations(range(m), k):
            M = np.vstack([Aeq, A[list(S)]])
            r = np.concatenate([beq, b[list(S)]])
            x = affine_projection(M, r, p)
            if x is None:
                continue
            scale = 1.0 + np.abs(b).max(initial=0.0)
            if np.all(A @ x <= b + feas_tol * scale) and np.allclose(Aeq @ x, beq, atol=feas_tol * scale):
                d = float(np.linalg.norm(x - p))
                if d < best_d:
                    best, best_d = x, d
    if best is None:
        raise ValueError("empty polytope")
    return best


def vertices_enumerate(A, b, tol: float = 1e-9) -> list:
    """Vertices of a bounded ``{A x <= b}`` by solving every square subsystem."""
    A, b = np.asarray(A, float), np.asarray(b, float)
    n = A.shape[1]
    out = []
    for S in itertools.combinations(range(A.shape[0]), n):
        M = A[list(S)]
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        v = np.linalg.solve(M, b[list(S)])
        if np.all(A @ v <= b + tol) and not any(np.allclose(v, u, atol=1e-9) for u in out):
            out.append(v)
    return out


def finite_difference_gradient(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences of a scalar function."""
    g = np.zeros_like(x, dtype=float)
    for k in range(x.size):
        e = np.zeros_like(x, dtype=float)
        e[k] = h
        g[k] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def box_worst_case(a0, P, b0, q, local_bounds, glob_bounds, blocks):
    """``max LHS`` and ``min RHS`` of one robust row over interval uncertainty.

    ``local_bounds[i]`` and ``glob_bounds`` are ``(lo, hi)`` arrays; every
    corner of every box is tried.
    """
    lhs = 0.0
    for a, Pi, (lo, hi), x in zip(a0, P, local_bounds, blocks):
        corners = itertools.product(*zip(np.atleast_1d(lo), np.atleast_1d(hi)))
        lhs += max(float((a + Pi @ np.array(c)) @ x) for c in corners)
    lo, hi = glob_bounds
    corners = itertools.product(*zip(np.atleast_1d(lo), np.atleast_1d(hi)))
    rhs = min(float(b0 + np.asarray(q) @ np.array(c)) for c in corners)
    return lhs, rhs


def benchmark_pseudo_gradient(graph_nbrs, x_blocks, target_step: float = 10.0):
    """Hand-written pseudo-gradient of the networked benchmark game."""
    out = []
    for i, xi in enumerate(x_blocks):
        nb = graph_nbrs[i]
        avg = sum(x_blocks[j] for j in nb) / len(nb)
        out.append(xi + avg - target_step * i * np.ones_like(xi))
    return out


def benchmark_cost(graph_nbrs, x_blocks, i: int, target_step: float = 10.0) -> float:
    """Hand-written cost of agent ``i`` in the networked benchmark game."""
    xi = x_blocks[i]
    nb = graph_nbrs[i]
    avg = sum(x_blocks[j] for j in nb) / len(nb)
    return float(0.5 * xi @ xi + xi @ avg - target_step * i * xi.sum())
