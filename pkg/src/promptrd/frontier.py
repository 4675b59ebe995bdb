"""Optimal distortion-rate functions through the dual of the compression LP.

For every group the optimal compressed prompts at multiplier ``lam`` are the
vertices of the lower-left convex boundary of its (rate, distortion) points.
Merging the slope breakpoints of all groups gives, per breakpoint interval,
one minimizer per group; the distortion-rate function at ``R`` is then

    max_j  -lam_j R + sum_x (D_{x, m_j(x)} + lam_j R_{x, m_j(x)})

with ``lam_j`` the interval endpoint on the correct side of ``R``. The
breakpoint state is built once and evaluated at any number of rates.

All arithmetic is generic: ``Fraction`` inputs stay exact end to end, which
lets decimal fixtures be checked for exact equality.
"""

from __future__ import annotations

import bisect
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from fractions import Fraction

from promptrd.core import Infeasible, InfiniteDistortionError, PromptRDError

INF = math.inf
REL_TOL = 1e-12


def _close(a, b) -> bool:
    return abs(a - b) <= REL_TOL * max(abs(a), abs(b))


def _sorted_keys(keys):
    try:
        return sorted(keys)
    except TypeError:
        return sorted(keys, key=repr)


@dataclass(frozen=True)
class Envelope:
    """Lower-left boundary of one group.

    ``points[i] = (label, R, D)`` with R strictly increasing and D strictly
    decreasing; ``lambdas = (inf, lam_1, ..., lam_{k-1}, 0)`` where
    ``lam_i`` is the slope magnitude between points ``i`` and ``i + 1``.
    """

    points: tuple
    lambdas: tuple

    def __len__(self):
        return len(self.points)

    def minimizer(self, lam):
        """Index of the point minimizing ``D + lam * R`` (the left one on ties)."""
        for i in range(1, len(self.lambdas)):
            if lam >= self.lambdas[i]:
                return i - 1
        return len(self.points) - 1


def lower_left_envelope(points: Sequence[tuple], key=None) -> Envelope:
    """Extreme points of the decreasing part of the lower convex hull.

    Infinite-distortion points are dropped; a group with nothing finite
    raises ``InfiniteDistortionError``. Collinear interior points are dropped.
    """
    if not points:
        raise ValueError("lower_left_envelope needs at least one point")
    finite = [p for p in points if p[2] != INF]
    if not finite:
        raise InfiniteDistortionError(key)

    best_per_rate = {}
    for p in sorted(finite, key=lambda p: (p[1], p[2], str(p[0]))):
        best_per_rate.setdefault(p[1], p)
    # only points strictly below everything to their left can be on the boundary
    staircase = []
    for r in sorted(best_per_rate):
        p = best_per_rate[r]
        if not staircase or p[2] < staircase[-1][2]:
            staircase.append(p)

    hull: list = []
    for p in staircase:
        while len(hull) >= 2:
            o, a = hull[-2], hull[-1]
            u = (a[1] - o[1]) * (p[2] - o[2])
            v = (a[2] - o[2]) * (p[1] - o[1])
            if u - v > REL_TOL * (abs(u) + abs(v)):
                break
            hull.pop()
        hull.append(p)

    lambdas = [INF]
    for a, b in zip(hull, hull[1:]):
        lambdas.append((a[2] - b[2]) / (b[1] - a[1]))
    lambdas.append(0)
    return Envelope(tuple(hull), tuple(lambdas))


@dataclass(frozen=True)
class MergedBreakpoints:
    """Union of all groups' breakpoints with each group's minimizer per interval.

    ``lambdas = (inf, lt_1, ..., lt_k = 0)``; interval ``j`` (1-based) is
    ``[lt_j, lt_{j-1})``. ``spans[key][i] = (first_j, last_j)`` is the range of
    intervals on which envelope point ``i`` of that group is the minimizer.
    ``agg_rate[j-1]`` and ``agg_distortion[j-1]`` are the totals over groups of
    the assigned points.
    """

    lambdas: tuple
    keys: tuple
    envelopes: Mapping
    spans: Mapping
    agg_rate: tuple
    agg_distortion: tuple

    @property
    def k(self) -> int:
        return len(self.lambdas) - 1

    @property
    def r_min(self):
        return self.agg_rate[0]

    def assigned_index(self, key, j: int) -> int:
        for i, (lo, hi) in enumerate(self.spans[key]):
            if lo <= j <= hi:
                return i
        raise IndexError(f"interval {j} out of range 1..{self.k}")

    def assigned(self, key, j: int) -> tuple:
        return self.envelopes[key].points[self.assigned_index(key, j)]

    def assignment_table(self) -> list[dict]:
        """Rows ``{"j", "lambda", key: label, ...}`` for every interval."""
        rows = []
        for j in range(1, self.k + 1):
            row = {"j": j, "lambda": self.lambdas[j]}
            for key in self.keys:
                row[key] = self.assigned(key, j)[0]
            rows.append(row)
        return rows


def merge_breakpoints(envelopes: Mapping) -> MergedBreakpoints:
    if not envelopes:
        raise ValueError("merge_breakpoints needs at least one group")
    keys = tuple(_sorted_keys(envelopes))

    finite = sorted({lam for e in envelopes.values() for lam in e.lambdas[1:-1]}, reverse=True)
    merged = [INF]
    index = {}
    for lam in finite:
        if len(merged) > 1 and _close(lam, merged[-1]):
            index[lam] = len(merged) - 1
            continue
        merged.append(lam)
        index[lam] = len(merged) - 1
    merged.append(0)
    k = len(merged) - 1

    exact = all(isinstance(v, (Fraction, int)) for e in envelopes.values()
                for p in e.points for v in p[1:])
    diff_r = [Fraction(0)] * (k + 2)
    diff_d = [Fraction(0)] * (k + 2)
    spans = {}
    for key in keys:
        env = envelopes[key]
        group_spans = []
        start = 1
        for i, (_, r, d) in enumerate(env.points):
            end = k if i == len(env.points) - 1 else index[env.lambdas[i + 1]]
            group_spans.append((start, end))
            if start <= end:
                diff_r[start] += Fraction(r)
                diff_r[end + 1] -= Fraction(r)
                diff_d[start] += Fraction(d)
                diff_d[end + 1] -= Fraction(d)
            start = end + 1
        spans[key] = tuple(group_spans)

    agg_r, agg_d = [], []
    run_r = run_d = Fraction(0)
    for j in range(1, k + 1):
        run_r += diff_r[j]
        run_d += diff_d[j]
        agg_r.append(run_r if exact else float(run_r))
        agg_d.append(run_d if exact else float(run_d))
    return MergedBreakpoints(tuple(merged), keys, dict(envelopes), spans, tuple(agg_r), tuple(agg_d))


def _feasible_rate(R, r_min):
    """``R`` clamped up to ``r_min`` when within rounding of it, or ``None`` if infeasible."""
    if R >= r_min:
        return R
    if r_min - R <= REL_TOL * max(1, abs(r_min)):
        return r_min
    return None


def dual_value(R, merged: MergedBreakpoints):
    """Optimal distortion at rate ``R``, or ``Infeasible`` below the minimum rate."""
    R_eff = _feasible_rate(R, merged.r_min)
    if R_eff is None:
        return Infeasible(merged.r_min)
    lt = merged.lambdas
    best = -INF
    for j in range(1, merged.k + 1):
        sr, sd = merged.agg_rate[j - 1], merged.agg_distortion[j - 1]
        lam = lt[j - 1] if sr > R_eff else lt[j]
        if lam == INF:
            return Infeasible(merged.r_min)
        value = sd + lam * (sr - R_eff)
        if value > best:
            best = value
    return best


@dataclass(frozen=True)
class Frontier:
    """Piecewise-linear distortion-rate function given by its vertices."""

    vertices: tuple
    merged: MergedBreakpoints | None = field(default=None, compare=False, repr=False)

    @property
    def r_min(self):
        return self.vertices[0][0]

    @property
    def rates(self):
        return [v[0] for v in self.vertices]

    @property
    def distortions(self):
        return [v[1] for v in self.vertices]

    def __call__(self, R):
        return self.evaluate(R)

    def evaluate(self, R):
        R_eff = _feasible_rate(R, self.r_min)
        if R_eff is None:
            return Infeasible(self.r_min)
        rates = self.rates
        if R_eff >= rates[-1]:
            return self.vertices[-1][1]
        i = bisect.bisect_right(rates, R_eff) - 1
        (r0, d0), (r1, d1) = self.vertices[i], self.vertices[i + 1]
        return d0 + (d1 - d0) * ((R_eff - r0) / (r1 - r0))


def frontier_from_merged(merged: MergedBreakpoints) -> Frontier:
    vertices = []
    for r, d in zip(merged.agg_rate, merged.agg_distortion):
        if vertices and vertices[-1] == (r, d):
            continue
        vertices.append((r, d))
    return Frontier(tuple(vertices), merged)


def envelopes_for(point_sets: Mapping) -> dict:
    return {key: lower_left_envelope(pts, key) for key, pts in point_sets.items()}


def breakpoints_for(source) -> MergedBreakpoints:
    """Build the merged breakpoint state from a ``ConstantsTable`` or ``{key: points}``."""
    from promptrd.constants import ConstantsTable, TableMode

    if isinstance(source, ConstantsTable):
        if source.mode is TableMode.CONDITIONAL and len(source.query_ids) > 1:
            raise PromptRDError("conditional table spans several queries; split it by query first")
        point_sets = source.point_sets()
    else:
        point_sets = source
    if not point_sets:
        raise PromptRDError("empty constants table")
    return merge_breakpoints(envelopes_for(point_sets))


def frontier_curve(source) -> Frontier:
    return frontier_from_merged(breakpoints_for(source))


def expected_conditional(frontiers: Mapping, weights: Mapping, R):
    """``sum_q P(q) D*_q(R)``; infeasible if any query is."""
    total = 0.0
    r_min = 0.0
    bad = False
    for q, f in frontiers.items():
        r_min = max(r_min, f.r_min)
        v = f(R)
        if isinstance(v, Infeasible):
            bad = True
            continue
        total += weights[q] * v
    return Infeasible(r_min) if bad else total


def parse_grid(spec: str) -> list[float]:
    """``start:stop:step`` with both endpoints included (stop within 1e-12)."""
    from decimal import Decimal, InvalidOperation

    try:
        start, stop, step = (Decimal(s) for s in spec.split(":"))
    except (ValueError, InvalidOperation):
        raise ValueError(f"grid must be start:stop:step, got {spec!r}") from None
    if step <= 0 or stop < start:
        raise ValueError(f"grid needs step > 0 and stop >= start, got {spec!r}")
    out = []
    v = start
    while v <= stop + Decimal("1e-12"):
        out.append(float(v))
        v += step
    return out
