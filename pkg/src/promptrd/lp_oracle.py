"""Brute-force primal LP oracle.

Solves the compression LP directly on its explicit constraint matrix:

    min  sum_x D_x . z_x
    s.t. sum_x R_x . z_x + s = R,   1 . z_x = 1 for every x,   z, s >= 0

with a textbook dense two-phase simplex. It knows nothing about envelopes or
breakpoints, so agreement with the dual algorithm is independent evidence.

Arithmetic is double precision. Pivoting uses Bland's rule (lowest-index
entering column, lowest-index leaving basic variable among ratio ties) so the
method cannot cycle. Feasibility and optimality tolerances are 1e-9 absolute;
all instances here are tiny with data in [0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from promptrd.core import Infeasible, InfiniteDistortionError, PromptRDError

TOL = 1e-9
MAX_VARIABLES = 10_000


class OracleSizeError(PromptRDError):
    pass


class SimplexInfeasible(PromptRDError):
    pass


def _pivot(T: np.ndarray, basis: list[int], row: int, col: int) -> None:
    T[row] /= T[row, col]
    for i in range(T.shape[0]):
        if i != row and T[i, col] != 0.0:
            T[i] -= T[i, col] * T[row]
    basis[row] = col


def _run(T: np.ndarray, basis: list[int], n_cols: int, max_iter: int) -> None:
    """Minimize the objective in the last row of ``T`` over the first ``n_cols`` columns."""
    m = T.shape[0] - 1
    for _ in range(max_iter):
        reduced = T[m, :n_cols]
        entering = next((j for j in range(n_cols) if reduced[j] < -TOL), None)
        if entering is None:
            return
        col = T[:m, entering]
        rows = [i for i in range(m) if col[i] > TOL]
        if not rows:
            raise PromptRDError("LP is unbounded")
        ratios = [T[i, -1] / col[i] for i in rows]
        best = min(ratios)
        ties = [i for i, r in zip(rows, ratios) if r <= best + TOL]
        leaving = min(ties, key=lambda i: basis[i])
        _pivot(T, basis, leaving, entering)
    raise PromptRDError("simplex iteration limit reached")


def simplex(c, A_eq, b_eq, max_iter: int = 50_000) -> tuple[np.ndarray, float]:
    """Minimize ``c @ x`` subject to ``A_eq @ x == b_eq`` and ``x >= 0``."""
    c = np.asarray(c, dtype=float)
    A = np.array(A_eq, dtype=float)
    b = np.array(b_eq, dtype=float)
    m, n = A.shape
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1

    # phase 1: artificials n..n+m-1, minimize their sum
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = b
    T[m, :n] = -A.sum(axis=0)
    T[m, -1] = -b.sum()
    basis = list(range(n, n + m))
    _run(T, basis, n + m, max_iter)
    if -T[m, -1] > TOL * max(1.0, b.sum()):
        raise SimplexInfeasible("LP is infeasible")

    # drive remaining (zero-valued) artificials out of the basis; drop redundant rows
    keep = []
    for i in range(m):
        if basis[i] >= n:
            cols = [j for j in range(n) if abs(T[i, j]) > TOL]
            if not cols:
                continue
            _pivot(T, basis, i, cols[0])
        keep.append(i)
    T2 = np.zeros((len(keep) + 1, n + 1))
    T2[:-1, :n] = T[keep, :n]
    T2[:-1, -1] = T[keep, -1]
    basis = [basis[i] for i in keep]

    # phase 2 objective row, priced out against the current basis
    T2[-1, :n] = c
    for i, bj in enumerate(basis):
        T2[-1] -= c[bj] * T2[i]
    _run(T2, basis, n, max_iter)

    x = np.zeros(n)
    for i, bj in enumerate(basis):
        x[bj] = T2[i, -1]
    return x, float(c @ x)


@dataclass(frozen=True)
class PrimalSolution:
    objective: float
    z: dict  # group key -> {label: mass} over nonzero masses
    slack: float

    def randomized_groups(self, tol: float = 1e-9) -> list:
        return [k for k, zk in self.z.items() if sum(1 for v in zk.values() if v > tol) > 1]


def solve_primal(source, R: float):
    """Exact optimum of the primal LP at rate ``R`` for a table or ``{key: points}``."""
    from promptrd.constants import ConstantsTable

    point_sets = source.point_sets() if isinstance(source, ConstantsTable) else source
    keys = sorted(point_sets, key=repr)
    columns = []  # (group index, label, R, D)
    for gi, key in enumerate(keys):
        finite = [p for p in point_sets[key] if not math.isinf(float(p[2]))]
        if not finite:
            raise InfiniteDistortionError(key)
        columns.extend((gi, p[0], float(p[1]), float(p[2])) for p in finite)
    n = len(columns) + 1
    if n > MAX_VARIABLES:
        raise OracleSizeError(f"{n} variables exceed the oracle guard of {MAX_VARIABLES}")

    A = np.zeros((len(keys) + 1, n))
    c = np.zeros(n)
    for j, (gi, _, r, d) in enumerate(columns):
        A[0, j] = r
        A[gi + 1, j] = 1.0
        c[j] = d
    A[0, -1] = 1.0  # slack of the rate constraint
    b = np.concatenate([[float(R)], np.ones(len(keys))])

    r_min = math.fsum(min(col[2] for col in columns if col[0] == gi) for gi in range(len(keys)))
    try:
        x, obj = simplex(c, A, b)
    except SimplexInfeasible:
        return Infeasible(r_min)

    z: dict = {key: {} for key in keys}
    for j, (gi, label, _, _) in enumerate(columns):
        if x[j] > TOL:
            z[keys[gi]][label] = float(x[j])
    return PrimalSolution(obj, z, float(x[-1]))
