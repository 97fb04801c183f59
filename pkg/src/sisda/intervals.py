"""Quadratic inequalities in a scalar and their solution sets as interval unions.

Every truncation-region computation in this package reduces to a conjunction
of scalar inequalities of the form ``w + r*z + o*z**2 {<=,>=} 0``.  This
module provides an exact analytic solver for such systems, plus the interval
set algebra (intersection, union, membership) used downstream.

All roots are found analytically; coefficient magnitudes below ``COEF_TOL``
are snapped to zero and a discriminant in ``(-COEF_TOL, 0]`` is treated as a
double root, so degenerate inequalities resolve deterministically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Coefficients below this magnitude are treated as exactly zero.
COEF_TOL = 1e-12
# Adjacent intervals closer than this are merged.
MERGE_TOL = 1e-10

INF = math.inf

# An interval set is a sorted list of disjoint (lo, hi) pairs, lo <= hi,
# possibly +-inf.  The empty list is the empty set.
IntervalSet = list[tuple[float, float]]


@dataclass(frozen=True)
class QuadIneq:
    """One scalar inequality ``w + r*z + o*z**2 <= 0`` (or ``>= 0``)."""

    w: float
    r: float
    o: float
    leq: bool = True

    def as_leq(self) -> "QuadIneq":
        """Return the equivalent <=0 form (negating coefficients if >=0)."""
        if self.leq:
            return self
        return QuadIneq(-self.w, -self.r, -self.o, leq=True)

    def __call__(self, z: float) -> float:
        return self.w + self.r * z + self.o * z * z


def whole_line() -> IntervalSet:
    return [(-INF, INF)]


def merge_intervals(intervals: IntervalSet, tol: float = MERGE_TOL) -> IntervalSet:
    """Sort, drop empties, and merge intervals that touch within tol."""
    ivs = sorted((lo, hi) for lo, hi in intervals if hi >= lo)
    out: IntervalSet = []
    for lo, hi in ivs:
        if out and lo <= out[-1][1] + tol:
            out[-1] = (out[-1][0], max(out[-1][1], hi))
        else:
            out.append((lo, hi))
    return out


def intersect_sets(a: IntervalSet, b: IntervalSet) -> IntervalSet:
    """Intersection of two interval sets (both assumed sorted/disjoint)."""
    out: IntervalSet = []
    i = j = 0
    while i < len(a) and j < len(b):
        lo = max(a[i][0], b[j][0])
        hi = min(a[i][1], b[j][1])
        if lo <= hi:
            out.append((lo, hi))
        if a[i][1] < b[j][1]:
            i += 1
        else:
            j += 1
    return out


def union_sets(a: IntervalSet, b: IntervalSet) -> IntervalSet:
    return merge_intervals(a + b)


def set_contains(intervals: IntervalSet, z: float, tol: float = 0.0) -> bool:
    return any(lo - tol <= z <= hi + tol for lo, hi in intervals)


def total_length(intervals: IntervalSet) -> float:
    return sum(hi - lo for lo, hi in intervals)


def _solve_one(q: QuadIneq, tol: float) -> IntervalSet:
    """Solution set of a single inequality in <=0 form."""
    q = q.as_leq()
    w, r, o = q.w, q.r, q.o
    if abs(o) < tol:
        if abs(r) < tol:
            # Constant inequality: sign of w decides.
            return whole_line() if w <= tol else []
        root = -w / r
        return [(-INF, root)] if r > 0 else [(root, INF)]
    disc = r * r - 4.0 * o * w
    if disc <= 0.0:
        if disc > -tol:
            # Double root: a single point where the parabola touches zero.
            root = -r / (2.0 * o)
            return [(root, root)] if o > 0 else whole_line()
        return [] if o > 0 else whole_line()
    sq = math.sqrt(disc)
    # Numerically stable root pair.
    qq = -0.5 * (r + math.copysign(sq, r))
    r1 = qq / o
    r2 = w / qq if abs(qq) > 0 else -r / (2.0 * o)
    lo, hi = (r1, r2) if r1 <= r2 else (r2, r1)
    if o > 0:
        return [(lo, hi)]
    return [(-INF, lo), (hi, INF)]


def solve_quad_system(
    system: list[QuadIneq], tol: float = COEF_TOL
) -> IntervalSet:
    """Exact solution set of a conjunction of quadratic inequalities.

    Returns a sorted union of disjoint intervals; the empty list is a legal
    result.  Raises ValueError on an empty system.
    """
    if not system:
        raise ValueError("empty quadratic system")
    sol = whole_line()
    for q in system:
        sol = intersect_sets(sol, _solve_one(q, tol))
        if not sol:
            return []
    return merge_intervals(sol)


def contained_interval(
    w: np.ndarray,
    r: np.ndarray,
    o: np.ndarray,
    z0: float,
    tol: float = COEF_TOL,
) -> tuple[float, float]:
    """Widest interval around ``z0`` on which every ``w+r z+o z^2 <= 0`` holds.

    Vectorized over the inequality arrays; every inequality is assumed to be
    satisfied at ``z0`` (up to roundoff; the result is clamped to contain
    ``z0``).  This is the hot path of the divide-and-conquer scan, where only
    the feasible interval containing the current pivot is needed.
    """
    w = np.asarray(w, dtype=float)
    r = np.asarray(r, dtype=float)
    o = np.asarray(o, dtype=float)
    lo = -INF
    hi = INF

    lin = np.abs(o) < tol
    # Pure linear pieces: r z <= -w.
    rl = r[lin]
    wl = w[lin]
    pos = rl > tol
    neg = rl < -tol
    if pos.any():
        hi = min(hi, float(np.min(-wl[pos] / rl[pos])))
    if neg.any():
        lo = max(lo, float(np.max(-wl[neg] / rl[neg])))

    quad = ~lin
    if quad.any():
        wq, rq, oq = w[quad], r[quad], o[quad]
        disc = rq * rq - 4.0 * oq * wq
        sq = np.sqrt(np.maximum(disc, 0.0))
        qq = -0.5 * (rq + np.sign(rq) * sq + np.where(rq == 0.0, sq, 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            r1 = np.where(qq != 0.0, qq / oq, -rq / (2.0 * oq))
            r2 = np.where(qq != 0.0, wq / qq, -rq / (2.0 * oq))
        rlo = np.minimum(r1, r2)
        rhi = np.maximum(r1, r2)

        up = oq > 0
        feas = disc >= -tol
        # Opens upward: feasible between the roots.
        m = up & feas
        if m.any():
            lo = max(lo, float(np.max(rlo[m])))
            hi = min(hi, float(np.min(rhi[m])))
        # Opens downward with real roots: feasible on the ray containing z0.
        m = (~up) & (disc > tol)
        if m.any():
            mid = 0.5 * (rlo[m] + rhi[m])
            left = z0 <= mid
            if left.any():
                hi = min(hi, float(np.min(rlo[m][left])))
            if (~left).any():
                lo = max(lo, float(np.max(rhi[m][~left])))
        # Opens downward, no real roots: always feasible; opens upward with
        # disc < -tol should not occur for a system satisfied at z0.

    # Roundoff can push a root marginally across the pivot; the interval must
    # contain the point that generated the system.
    return min(lo, z0), max(hi, z0)
