"""Ready-made benchmark games."""

from __future__ import annotations

import numpy as np

from .graph import CommGraph
from .model import Polytope, UncertainConstraint, UncertaintySets, UncertainGame, network_quadratic_game


def benchmark_game(graph: CommGraph, n_i: int = 2, lo: float = -5.0, hi: float = 15.0, b0: float = 75.0,
                   local_radius: float = 1.0, global_radius: float = 10.0, target_step: float = 10.0) -> UncertainGame:
    """Networked quadratic game with one robust budget row.

    Agent ``i`` (0-based) minimizes ``1/2 |x_i|^2 + 1/|N_i| sum_j x_i^T x_j -
    target_step * i * 1^T x_i`` over the box ``[lo, hi]^n_i``, subject to
    ``sum_i (1 + delta_i) 1^T x_i <= b0 + delta`` with
    ``|delta_i| <= local_radius`` and ``|delta| <= global_radius``.
    """
    N = graph.n
    ones = np.ones(n_i)
    Q = [np.eye(n_i)] * N
    linear = [-target_step * i * ones for i in range(N)]
    omega = [Polytope.box(lo, hi, n_i)] * N
    row = UncertainConstraint([ones] * N, [ones.reshape(-1, 1)] * N, b0, [1.0])
    unc = UncertaintySets(tuple(Polytope.interval(-local_radius, local_radius) for _ in range(N)),
                          Polytope.interval(-global_radius, global_radius))
    return network_quadratic_game(graph, Q, linear, omega, (row,), unc)
