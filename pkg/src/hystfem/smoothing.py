"""Arc-based C1 smoothing of piecewise-C2 scalar nonlinearities.

Near each derivative discontinuity the function is replaced, inside a small
window, by its two endpoint tangent lines joined by a circular arc tangent
to both.  The window half-widths live on a per-kink ladder of strictly
decreasing values (each found by backtracking until the tangent lines
intersect inside the window); a requested smoothing parameter snaps down to
the largest ladder rung below it.  The construction is C1, preserves
monotonicity, stays within O(eps) of the original function, and its
derivative interpolates the neighboring slopes, which is exactly what the
damped Newton solver needs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .hysteresis import ScalarPiecewiseC2

#: relative tolerance of the secant test
TANGENT_TOL = 1e-14
#: slope jumps below this (relative) are treated as spurious kinks
SPURIOUS_JUMP_TOL = 1e-13
#: backtracking iteration cap before declaring the piece pathological
DETECT_CAP = 10_000


def float_resolution(x: float) -> float:
    """Smallest window scale that float64 arithmetic can resolve around x.

    Below this, secants are cancellation noise and arguments closer to a
    kink are indistinguishable from sitting on it.
    """
    return 1024.0 * np.finfo(float).eps * (1.0 + abs(x))


class PathologicalPieceError(RuntimeError):
    """Window detection failed; the base function violates its contract."""


def tangent_extendable(f_left, f_right, a: float, b: float) -> bool:
    """Secant test: do the endpoint tangents meet inside [a, b]?

    ``f_left``/``f_right`` are the smooth pieces adjoining the kink;
    equivalent to min{f'_+(a), f'_-(b)} <= (f(b)-f(a))/(b-a) <= max{...}
    with a 1e-14 relative tolerance.
    """
    fa = float(f_left.value(a))
    fb = float(f_right.value(b))
    sa = float(f_left.deriv(a))
    sb = float(f_right.deriv(b))
    secant = (fb - fa) / (b - a)
    pad = TANGENT_TOL * max(abs(sa), abs(sb), abs(secant), 1.0)
    return min(sa, sb) - pad <= secant <= max(sa, sb) + pad


def detect_window(phi: ScalarPiecewiseC2, kink_index: int, delta0: float,
                  contraction: float) -> float:
    """First half-width delta0 * contraction^n passing the secant test.

    delta0 is pre-shrunk to half the distance to the neighboring kinks so
    windows of adjacent kinks never overlap.
    """
    if not 0.0 < contraction < 1.0:
        raise ValueError("contraction must lie in (0, 1)")
    gap_l, gap_r = phi.neighbor_gaps(kink_index)
    local = _LocalKink.from_scalar(phi, kink_index)
    return _detect_window_local(local, min(delta0, 0.5 * gap_l, 0.5 * gap_r), contraction)


@dataclass(frozen=True)
class _LocalKink:
    """Just enough of a function around one kink to smooth it."""

    x: float
    value: Callable[[float], float]
    deriv_minus: Callable[[float], float]
    deriv_plus: Callable[[float], float]

    @staticmethod
    def from_scalar(phi: ScalarPiecewiseC2, j: int) -> "_LocalKink":
        return _LocalKink(float(phi.kinks[j]), phi.value, phi.deriv_minus, phi.deriv_plus)


def _detect_window_local(local: _LocalKink, delta0: float, contraction: float) -> float:
    if not delta0 > 0:
        raise ValueError("initial window width must be positive")
    k = local.x
    delta = delta0
    for _ in range(DETECT_CAP):
        fa, fb = local.value(k - delta), local.value(k + delta)
        sa, sb = local.deriv_plus(k - delta), local.deriv_minus(k + delta)
        secant = (fb - fa) / (2.0 * delta)
        pad = TANGENT_TOL * max(abs(sa), abs(sb), abs(secant), 1.0)
        # below float resolution the secant carries pure cancellation noise
        pad += np.finfo(float).eps * (abs(fa) + abs(fb)) / (2.0 * delta)
        if min(sa, sb) - pad <= secant <= max(sa, sb) + pad:
            return delta
        delta *= contraction
        if delta < 1e-3 * float_resolution(k):
            break
    raise PathologicalPieceError(
        f"no tangent-extendable window at kink x={k} after backtracking to {delta:.3g}; "
        "the function is not piecewise C2 there"
    )


@dataclass(frozen=True)
class TangentExtension:
    """Endpoint tangents of a window and their intersection point."""

    a: float
    b: float
    ya: float
    yb: float
    sa: float
    sb: float
    x0: float
    y0: float

    def line_left(self, x):
        return self.ya + self.sa * (x - self.a)

    def line_right(self, x):
        return self.yb + self.sb * (x - self.b)


def _tangent_extension(local: _LocalKink, delta: float) -> TangentExtension:
    k = local.x
    a, b = k - delta, k + delta
    ya, yb = local.value(a), local.value(b)
    sa, sb = local.deriv_plus(a), local.deriv_minus(b)
    if sa == sb:
        x0 = k  # coinciding tangents: any interior intersection point serves
    else:
        x0 = 0.5 * (a + b) + (yb - ya - 0.5 * (b - a) * (sa + sb)) / (sa - sb)
        x0 = min(max(x0, a), b)
    y0 = ya + sa * (x0 - a)
    return TangentExtension(a, b, ya, yb, sa, sb, x0, y0)


@dataclass(frozen=True)
class Arc:
    """Circular arc tangent to the two window lines; the corner rounder."""

    x_c: float
    y_c: float
    radius: float
    sign: float

    def value(self, x):
        t = np.maximum(self.radius**2 - (np.asarray(x, float) - self.x_c) ** 2, 0.0)
        return self.y_c + self.sign * np.sqrt(t)

    def deriv(self, x):
        x = np.asarray(x, float)
        t = np.maximum(self.radius**2 - (x - self.x_c) ** 2, 1e-300)
        return -self.sign * (x - self.x_c) / np.sqrt(t)


def build_arc(ext: TangentExtension, x1: float, x2: float) -> Arc:
    """Arc tangent to the left line at x1 and to the right line at x2.

    Requires distinct slopes; equal slopes mean the kink needs no smoothing.
    The center sits on the normal at the tangency point, at the radius given
    by the tangent-length relation radius = chord / |tan(turn / 2)| with the
    turning angle between the two line directions; this stays well
    conditioned even for nearly parallel tangents, where solving the
    two-line tangency system directly would cancel catastrophically.
    """
    s1, s2 = ext.sa, ext.sb
    if s1 == s2:
        raise ValueError("equal tangent slopes: kink is spurious, no smoothing needed")
    y1 = ext.line_left(x1)
    # turning angle of the tangent direction across the corner, in (-pi, pi)
    turn = math.atan2(s2 - s1, 1.0 + s1 * s2)
    sigma = 1.0 if turn > 0 else -1.0
    chord = math.hypot(x1 - ext.x0, y1 - ext.y0)
    radius = abs(chord / math.tan(0.5 * turn))
    q1 = math.hypot(1.0, s1)
    x_c = x1 - sigma * radius * s1 / q1
    y_c = y1 + sigma * radius / q1
    return Arc(x_c, y_c, radius, -sigma)


@dataclass(frozen=True)
class KinkGeometry:
    """One ladder rung: window, tangent extension, tangency points, arc."""

    half_width: float
    ext: TangentExtension
    x1: float
    x2: float
    arc: Arc

    def contains(self, x: float) -> bool:
        return self.ext.a < x < self.ext.b

    def value_deriv(self, x: float) -> tuple[float, float]:
        if x <= self.x1:
            return self.ext.line_left(x), self.ext.sa
        if x >= self.x2:
            return self.ext.line_right(x), self.ext.sb
        return float(self.arc.value(x)), float(self.arc.deriv(x))


def _build_geometry(local: _LocalKink, delta: float) -> KinkGeometry:
    ext = _tangent_extension(local, delta)
    # equal chord lengths along both tangents, as large as the window allows
    d_left = (ext.x0 - ext.a) * math.hypot(1.0, ext.sa)
    d_right = (ext.b - ext.x0) * math.hypot(1.0, ext.sb)
    chord = min(d_left, d_right)
    x1 = ext.x0 - chord / math.hypot(1.0, ext.sa)
    x2 = ext.x0 + chord / math.hypot(1.0, ext.sb)
    arc = build_arc(ext, x1, x2)
    return KinkGeometry(delta, ext, x1, x2, arc)


class KinkLadder:
    """Strictly decreasing window half-widths at one kink, built on demand.

    Each new rung comes from restarting the backtracking search below the
    previous one (jumping straight to the queried depth), so the sequence
    is strictly decreasing and the snap-to-rung rule terminates for every
    positive smoothing parameter above the float resolution.
    """

    def __init__(self, local: _LocalKink, delta0: float, contraction: float = 0.5):
        self.local = local
        self.contraction = contraction
        self.delta0 = delta0
        jump = local.deriv_plus(local.x) - local.deriv_minus(local.x)
        scale = max(abs(local.deriv_plus(local.x)), abs(local.deriv_minus(local.x)), 1.0)
        self.spurious = abs(jump) <= SPURIOUS_JUMP_TOL * scale
        self.rungs: list[KinkGeometry] = []

    def geometry_for(self, eps: float) -> KinkGeometry | None:
        """Largest-rung geometry with half-width <= eps (None if spurious).

        Rungs stop at the float resolution around the kink: narrower windows
        are not representable, so the smallest resolvable rung serves every
        smaller eps (arguments that close to the kink sit on it numerically).
        """
        if self.spurious or not eps > 0:
            return None
        floor = float_resolution(self.local.x)
        if not self.rungs:
            delta = _detect_window_local(self.local, self.delta0, self.contraction)
            self.rungs.append(_build_geometry(self.local, delta))
        if eps >= self.rungs[0].half_width:
            return self.rungs[0]
        if self.rungs[-1].half_width > max(eps, floor):
            # jump straight to the queried depth; the backtracking search
            # still validates (and if needed shrinks) the candidate
            last = self.rungs[-1].half_width
            target = max(eps, floor)
            steps = max(1, math.ceil(math.log(last / target) / -math.log(self.contraction)))
            nxt = _detect_window_local(self.local, last * self.contraction**steps,
                                       self.contraction)
            self.rungs.append(_build_geometry(self.local, nxt))
        for g in self.rungs:
            if g.half_width <= eps:
                return g
        return self.rungs[-1]


class SmoothedNonlinearity:
    """A ScalarPiecewiseC2 with its kinks rounded at smoothing level eps.

    Exposes the per-kink window ladders and arc data; evaluation dispatches
    between the base function, the tangent lines, and the arcs.  Ladders are
    shared mutable caches, so re-smoothing the same base at a smaller eps is
    cheap.
    """

    def __init__(self, base: ScalarPiecewiseC2, eps: float,
                 ladders: Sequence[KinkLadder], delta0: float):
        self.base = base
        self.eps = float(eps)
        self.ladders = list(ladders)
        self.delta0 = delta0

    def with_eps(self, eps: float) -> "SmoothedNonlinearity":
        return SmoothedNonlinearity(self.base, eps, self.ladders, self.delta0)

    def _active_geometry(self, x: float) -> KinkGeometry | None:
        kinks = self.base.kinks
        if kinks.size == 0:
            return None
        j = int(np.searchsorted(kinks, x))
        for cand in (j - 1, j):
            if 0 <= cand < kinks.size:
                g = self.ladders[cand].geometry_for(self.eps)
                if g is not None and g.contains(x):
                    return g
        return None

    def value_deriv(self, x: float) -> tuple[float, float]:
        g = self._active_geometry(x)
        if g is not None:
            return g.value_deriv(x)
        return self.base.value(x), self.base.deriv_plus(x)

    def value(self, x: float) -> float:
        return self.value_deriv(x)[0]

    def deriv(self, x: float) -> float:
        return self.value_deriv(x)[1]

    def hull_distance(self, x: float) -> float:
        """Distance of the smoothed slope at x to the base slope hull at x.

        The hull is widened by the float resolution around x, so arguments
        numerically indistinguishable from a kink get the kink's hull.
        """
        _, d = self.value_deriv(x)
        eta = float_resolution(x)
        dm = self.base.deriv_minus(x - eta)
        dp = self.base.deriv_plus(x + eta)
        lo, hi = min(dm, dp), max(dm, dp)
        return max(0.0, lo - d, d - hi)

    def max_window(self) -> float:
        """Largest active window half-width at the current eps."""
        out = 0.0
        for lad in self.ladders:
            g = lad.geometry_for(self.eps)
            if g is not None:
                out = max(out, g.half_width)
        return out


def smooth_nonlinearity(phi: ScalarPiecewiseC2, eps: float,
                        initial_width: float = 1.0,
                        contraction: float = 0.5) -> SmoothedNonlinearity:
    """Smooth every kink of phi at level eps.

    ``initial_width`` caps the first ladder rung where the kink has no
    finite neighbors; interior kinks are additionally capped by half the
    neighbor gap so windows stay disjoint.
    """
    if not eps > 0:
        raise ValueError("smoothing parameter must be positive")
    ladders = []
    for j in range(phi.n_kinks):
        gap_l, gap_r = phi.neighbor_gaps(j)
        delta0 = min(initial_width, 0.5 * gap_l, 0.5 * gap_r)
        ladders.append(KinkLadder(_LocalKink.from_scalar(phi, j), delta0, contraction))
    return SmoothedNonlinearity(phi, eps, ladders, initial_width)


def eval_smoothed(s: SmoothedNonlinearity, x: float) -> tuple[float, float]:
    """Value and derivative of the smoothed function at x."""
    return s.value_deriv(x)


def cdist(smoothed: Sequence[SmoothedNonlinearity], x: np.ndarray) -> float:
    """Distance of the smoothed diagonal Jacobian to the generalized one.

    Euclidean norm over per-node distances of the smoothed slope to the
    convex hull of the one-sided base slopes (the Frobenius distance of the
    diagonal perturbation, an upper bound for the spectral distance).
    """
    x = np.asarray(x, dtype=float)
    parts = np.array([s.hull_distance(float(xi)) for s, xi in zip(smoothed, x)])
    return float(np.linalg.norm(parts))


def approximation_constant(lipschitz: float, curvature: float, first_rung: float,
                           n_kinks: int = 1) -> float:
    """Deviation constant: |smoothed - base| <= mu * eps with this mu.

    Per kink, the arc stays within 2*(M*w + sqrt(1+L^2))*eps of the base
    where w is the first ladder rung; disjoint windows mean at most one
    kink contributes at any x, but the stacked n_kinks factor is kept as a
    conservative global bound.
    """
    return 2.0 * max(1, n_kinks) * (curvature * first_rung + math.hypot(1.0, lipschitz))
