"""Per-node scalar nonlinearities evaluated over whole nodal vectors.

The nonlinear term of a discrete time step is diagonal: component i only
sees x_i, through the level function of node i's hysteresis memory.  These
classes hold the memories of all nodes stacked into arrays so residuals,
one-sided slopes, and smoothed evaluations run as numpy expressions instead
of per-node Python loops.  Every implementation can still materialize the
scalar function of a single node for inspection and testing.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from . import smoothing
from .hysteresis import (
    PlayParams,
    PreisachMemory,
    PreisachParams,
    ScalarPiecewiseC2,
    merge_kinks,
    play_level_function,
    preisach_level_function,
)


class NodewiseNonlinearity:
    """Diagonal map x -> (phi_0(x_0), ..., phi_{n-1}(x_{n-1}))."""

    n: int

    def value(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def deriv_sides(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """One-sided slopes (left, right) of every component at x."""
        raise NotImplementedError

    def scalar(self, i: int) -> ScalarPiecewiseC2:
        raise NotImplementedError

    def scalars(self) -> list[ScalarPiecewiseC2]:
        return [self.scalar(i) for i in range(self.n)]

    def smoother(self, initial_width: float = 1.0) -> "NodewiseSmoother":
        return GenericSmoother(self, initial_width)

    def lipschitz_per_node(self) -> np.ndarray:
        raise NotImplementedError

    def curvature_per_node(self) -> np.ndarray:
        raise NotImplementedError

    def max_kinks_per_node(self) -> int:
        raise NotImplementedError

    # hooks for the generic smoother ------------------------------------
    def nearest_kink_distance(self, x: np.ndarray) -> np.ndarray:
        """Distance from x_i to the closest kink of phi_i (inf if none)."""
        raise NotImplementedError

    def node_kinks(self, i: int) -> np.ndarray:
        raise NotImplementedError

    def local_kink(self, i: int, kink: float) -> smoothing._LocalKink:
        phi = self.scalar(i)
        j = int(np.argmin(np.abs(phi.kinks - kink)))
        return smoothing._LocalKink.from_scalar(phi, j)


class NodewiseSmoother:
    """Smoothed view of a NodewiseNonlinearity at caller-chosen eps."""

    def value_deriv(self, x: np.ndarray, eps: float) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def hull_distance(self, x: np.ndarray, eps: float) -> np.ndarray:
        """Per-node distance of the smoothed slope to the base slope hull."""
        raise NotImplementedError


def mu_estimate(F: NodewiseNonlinearity, initial_width: float = 1.0) -> float:
    """Deviation constant with ||F_smoothed(x, eps) - F(x)|| <= mu * eps.

    Per-node constants combine the Lipschitz bound, a curvature bound, and
    the largest possible first window; aggregation is Euclidean so the bound
    holds in the vector 2-norm.
    """
    L = F.lipschitz_per_node()
    M = F.curvature_per_node()
    m = F.max_kinks_per_node()
    mu = np.array([
        smoothing.approximation_constant(float(li), float(mi), initial_width, m)
        for li, mi in zip(L, M)
    ])
    return float(np.linalg.norm(mu))


# --------------------------------------------------------------------------
# stacked play nonlinearity (closed-form smoothing)
# --------------------------------------------------------------------------

class PlayNodewise(NodewiseNonlinearity):
    """phi_i(x) = scale_i * play_clamp(history_i, x) + offset_i.

    Piecewise affine with per-node kinks history_i/c + a and history_i/c + b
    and slopes (scale_i*c, 0, scale_i*c); everything, including the arc
    smoothing, has a closed form that vectorizes over nodes.
    """

    def __init__(self, params: PlayParams, history, scale, offset=None):
        self.params = params
        self.history = np.asarray(history, dtype=float)
        self.n = self.history.size
        self.scale = np.broadcast_to(np.asarray(scale, dtype=float), (self.n,)).copy()
        if np.any(self.scale < 0):
            raise ValueError("play level scales must be nonnegative")
        self.offset = (
            np.zeros(self.n) if offset is None
            else np.broadcast_to(np.asarray(offset, dtype=float), (self.n,)).copy()
        )
        self.k1 = self.history / params.c + params.a
        self.k2 = self.history / params.c + params.b
        self.s = self.scale * params.c
        self.plateau = self.scale * self.history + self.offset

    def value(self, x):
        p = self.params
        clamped = np.maximum(p.c * (x - p.b), np.minimum(p.c * (x - p.a), self.history))
        return self.offset + self.scale * clamped

    def deriv_sides(self, x):
        dm = self.s * ((x <= self.k1) | (x > self.k2))
        dp = self.s * ((x < self.k1) | (x >= self.k2))
        return dm, dp

    def scalar(self, i):
        return play_level_function(
            self.history[i], self.params, self.scale[i], self.offset[i]
        )

    def lipschitz_per_node(self):
        return self.s.copy()

    def curvature_per_node(self):
        return np.zeros(self.n)

    def max_kinks_per_node(self):
        return 2

    def nearest_kink_distance(self, x):
        return np.minimum(np.abs(x - self.k1), np.abs(x - self.k2))

    def node_kinks(self, i):
        return np.array([self.k1[i], self.k2[i]])

    def smoother(self, initial_width: float = 1.0):
        return PlaySmoother(self, initial_width)


class PlaySmoother(NodewiseSmoother):
    """Closed-form arc smoothing of a stacked play nonlinearity.

    Affine pieces make every backtracking search succeed at the first try,
    so the ladder at both kinks is exactly w0, w0/2, w0/4, ... with
    w0 = min(initial_width, (b - a)/2), shared by all nodes.
    """

    def __init__(self, field: PlayNodewise, initial_width: float = 1.0):
        self.field = field
        p = field.params
        self.w0 = min(initial_width, 0.5 * (p.b - p.a))
        self._geo_cache: dict[float, tuple] = {}

    def rung(self, eps: float) -> float:
        if eps >= self.w0:
            return self.w0
        return self.w0 * 0.5 ** math.ceil(math.log2(self.w0 / eps))

    def max_window(self, eps: float) -> float:
        return self.rung(eps)

    def _geometry(self, w: float):
        # Arc data for both kink families at rung w; nodes vary only through
        # the outer slope s_i and the kink/plateau positions.
        if w in self._geo_cache:
            return self._geo_cache[w]
        f = self.field
        s = np.where(f.s > 0, f.s, 1.0)  # placeholder slope for flat nodes
        q = w / np.sqrt(1.0 + s * s)
        # rising -> flat corner at k1: tangency points (k1-q, P-s*q) and (k1+w, P)
        x1_lo = f.k1 - q
        xc_1 = f.k1 + w
        yc_1 = (f.plateau - s * q) + (x1_lo - xc_1) / s
        r_1 = np.abs(f.plateau - yc_1)
        # flat -> rising corner at k2: tangency points (k2-w, P) and (k2+q, P+s*q)
        x2_hi = f.k2 + q
        xc_2 = f.k2 - w
        yc_2 = (f.plateau + s * q) + (x2_hi - xc_2) / s
        r_2 = np.abs(f.plateau - yc_2)
        geo = (x1_lo, xc_1, yc_1, r_1, x2_hi, xc_2, yc_2, r_2)
        self._geo_cache[w] = geo
        return geo

    def value_deriv(self, x, eps):
        f = self.field
        v = f.value(x)
        d = f.s * ((x < f.k1) | (x > f.k2))
        w = self.rung(eps)
        x1_lo, xc_1, yc_1, r_1, x2_hi, xc_2, yc_2, r_2 = self._geometry(w)
        active = f.s > 0
        in1 = active & (x > x1_lo) & (x < f.k1 + w)
        in2 = active & (x > f.k2 - w) & (x < x2_hi)
        if np.any(in1):
            t = np.sqrt(np.maximum(r_1[in1] ** 2 - (x[in1] - xc_1[in1]) ** 2, 1e-300))
            v[in1] = yc_1[in1] + t
            d[in1] = -(x[in1] - xc_1[in1]) / t
        if np.any(in2):
            t = np.sqrt(np.maximum(r_2[in2] ** 2 - (x[in2] - xc_2[in2]) ** 2, 1e-300))
            v[in2] = yc_2[in2] - t
            d[in2] = (x[in2] - xc_2[in2]) / t
        return v, d

    def hull_distance(self, x, eps):
        # hull widened by the float resolution around x: arguments that
        # close to a kink are numerically on it and get the kink's hull
        _, d = self.value_deriv(x, eps)
        eta = 1024.0 * np.finfo(float).eps * (1.0 + np.abs(x))
        dm = self.field.deriv_sides(x - eta)[0]
        dp = self.field.deriv_sides(x + eta)[1]
        lo = np.minimum(dm, dp)
        hi = np.maximum(dm, dp)
        return np.maximum(0.0, np.maximum(lo - d, d - hi))


# --------------------------------------------------------------------------
# stacked Preisach nonlinearity (lazy per-node smoothing caches)
# --------------------------------------------------------------------------

class PreisachNodewise(NodewiseNonlinearity):
    """phi_i(x) = offset_i + 2*scale_i * sum_j wt_j * Omega(r_j, clamp_ij(x)).

    plays is (n, n_r): the frozen memory of every node.  Kinks of node i are
    the clamp switch points plays[i, j] -/+ r_j.
    """

    def __init__(self, params: PreisachParams, plays, scale, offset=None):
        self.params = params
        self.plays = np.asarray(plays, dtype=float)
        if self.plays.ndim != 2 or self.plays.shape[1] != params.n_r:
            raise ValueError("plays must have shape (n_nodes, n_r)")
        self.n = self.plays.shape[0]
        self.scale = np.broadcast_to(np.asarray(scale, dtype=float), (self.n,)).copy()
        if np.any(self.scale < 0):
            raise ValueError("level scales must be nonnegative")
        self.offset = (
            np.zeros(self.n) if offset is None
            else np.broadcast_to(np.asarray(offset, dtype=float), (self.n,)).copy()
        )
        self.lo = self.plays - params.r_nodes
        self.hi = self.plays + params.r_nodes
        self._kink_cache: dict[int, np.ndarray] = {}

    def _sigma(self, x):
        return np.maximum(
            x[:, None] - self.params.r_nodes,
            np.minimum(x[:, None] + self.params.r_nodes, self.plays),
        )

    def value(self, x):
        x = np.asarray(x, dtype=float)
        om = self.params.omega_value(self._sigma(x))
        return self.offset + 2.0 * self.scale * (om @ self.params.r_weights)

    def deriv_sides(self, x):
        x = np.asarray(x, dtype=float)
        xcol = x[:, None]
        sigma = self._sigma(x)
        dens = self.params.omega_deriv(sigma) * self.params.r_weights
        act_m = (xcol <= self.lo) | (xcol > self.hi)
        act_p = (xcol < self.lo) | (xcol >= self.hi)
        dm = 2.0 * self.scale * np.sum(dens * act_m, axis=1)
        dp = 2.0 * self.scale * np.sum(dens * act_p, axis=1)
        return dm, dp

    def scalar(self, i):
        return preisach_level_function(
            PreisachMemory(self.plays[i]), self.params, self.scale[i], self.offset[i]
        )

    def lipschitz_per_node(self):
        return self.scale * self.params.lipschitz_bound()

    def curvature_per_node(self):
        p = self.params
        probes = np.linspace(-2.0 * float(p.r_nodes.max()), 2.0 * float(p.r_nodes.max()), 129)
        sup = np.zeros(p.n_r)
        for s in probes:
            sup = np.maximum(sup, np.abs(p.omega_deriv2(np.full(p.n_r, s))))
        return self.scale * 2.0 * float(np.sum(p.r_weights * sup))

    def max_kinks_per_node(self):
        return 2 * self.params.n_r

    def nearest_kink_distance(self, x):
        xcol = np.asarray(x, dtype=float)[:, None]
        return np.minimum(
            np.abs(xcol - self.lo).min(axis=1), np.abs(xcol - self.hi).min(axis=1)
        )

    def node_kinks(self, i):
        ks = self._kink_cache.get(i)
        if ks is None:
            ks = merge_kinks(np.concatenate([self.lo[i], self.hi[i]]))
            self._kink_cache[i] = ks
        return ks

    # lean scalar evaluation of one node, for the smoothing caches ------
    def _node_value(self, i, x):
        p = self.params
        sig = np.maximum(x - p.r_nodes, np.minimum(x + p.r_nodes, self.plays[i]))
        return self.offset[i] + 2.0 * self.scale[i] * float(
            np.sum(p.r_weights * p.omega_value(sig))
        )

    def _node_deriv(self, i, x, side):
        p = self.params
        lo, hi = self.lo[i], self.hi[i]
        if side < 0:
            act = (x <= lo) | (x > hi)
        else:
            act = (x < lo) | (x >= hi)
        sig = np.where(x < lo, x + p.r_nodes, x - p.r_nodes)
        dens = p.omega_deriv(sig)
        return 2.0 * self.scale[i] * float(np.sum(p.r_weights * dens * act))

    def local_kink(self, i, kink):
        return smoothing._LocalKink(
            float(kink),
            lambda x: self._node_value(i, x),
            lambda x: self._node_deriv(i, x, -1),
            lambda x: self._node_deriv(i, x, +1),
        )


class GenericSmoother(NodewiseSmoother):
    """Vectorized base evaluation plus lazy per-node window ladders.

    Only nodes whose argument lies close to one of their kinks ever touch
    the scalar machinery; ladders and arc geometry are cached per (node,
    kink) across evaluations, so repeated solves on the same memory state
    amortize the construction.
    """

    def __init__(self, field: NodewiseNonlinearity, initial_width: float = 1.0):
        self.field = field
        self.initial_width = initial_width
        self._ladders: dict[tuple[int, int], smoothing.KinkLadder] = {}

    def _ladder(self, i: int, kinks: np.ndarray, j: int) -> smoothing.KinkLadder:
        key = (i, j)
        lad = self._ladders.get(key)
        if lad is None:
            gap_l = kinks[j] - kinks[j - 1] if j > 0 else math.inf
            gap_r = kinks[j + 1] - kinks[j] if j + 1 < kinks.size else math.inf
            delta0 = min(self.initial_width, 0.5 * gap_l, 0.5 * gap_r)
            lad = smoothing.KinkLadder(self.field.local_kink(i, kinks[j]), delta0)
            self._ladders[key] = lad
        return lad

    def _overrides(self, x, eps):
        # active windows never exceed max(eps, float floor), so only nodes
        # that close to one of their kinks can need the scalar machinery
        floor = 2048.0 * np.finfo(float).eps * (1.0 + np.abs(x))
        trigger = np.minimum(np.maximum(eps, floor), self.initial_width)
        near = self.field.nearest_kink_distance(x) < trigger
        out = []
        for i in np.nonzero(near)[0]:
            kinks = self.field.node_kinks(int(i))
            if kinks.size == 0:
                continue
            j = int(np.argmin(np.abs(kinks - x[i])))
            geo = self._ladder(int(i), kinks, j).geometry_for(eps)
            if geo is not None and geo.contains(float(x[i])):
                out.append((int(i), geo))
        return out

    def value_deriv(self, x, eps):
        x = np.asarray(x, dtype=float)
        v = np.array(self.field.value(x), dtype=float, copy=True)
        _, d = self.field.deriv_sides(x)
        d = np.array(d, dtype=float, copy=True)
        for i, geo in self._overrides(x, eps):
            v[i], d[i] = geo.value_deriv(float(x[i]))
        return v, d

    def hull_distance(self, x, eps):
        # hull widened by the float resolution around x: arguments that
        # close to a kink are numerically on it and get the kink's hull
        _, d = self.value_deriv(x, eps)
        eta = 1024.0 * np.finfo(float).eps * (1.0 + np.abs(x))
        dm = self.field.deriv_sides(x - eta)[0]
        dp = self.field.deriv_sides(x + eta)[1]
        lo = np.minimum(dm, dp)
        hi = np.maximum(dm, dp)
        return np.maximum(0.0, np.maximum(lo - d, d - hi))


# --------------------------------------------------------------------------
# arbitrary scalar functions (tests, small systems)
# --------------------------------------------------------------------------

class ScalarSeqNodewise(NodewiseNonlinearity):
    """Wrap an explicit list of ScalarPiecewiseC2 components."""

    def __init__(self, phis: Sequence[ScalarPiecewiseC2]):
        self.phis = list(phis)
        self.n = len(self.phis)

    def value(self, x):
        return np.array([p.value(float(xi)) for p, xi in zip(self.phis, x)])

    def deriv_sides(self, x):
        dm = np.array([p.deriv_minus(float(xi)) for p, xi in zip(self.phis, x)])
        dp = np.array([p.deriv_plus(float(xi)) for p, xi in zip(self.phis, x)])
        return dm, dp

    def scalar(self, i):
        return self.phis[i]

    def lipschitz_per_node(self):
        return np.array([p.lipschitz_bound for p in self.phis])

    def curvature_per_node(self):
        out = np.zeros(self.n)
        for i, p in enumerate(self.phis):
            if p.n_kinks == 0:
                lo, hi = -1.0, 1.0
            else:
                lo, hi = p.kinks[0] - 1.0, p.kinks[-1] + 1.0
            xs = np.linspace(lo, hi, 101)
            out[i] = max(
                abs(float(p.pieces[p.piece_index(xx)].deriv2(xx))) for xx in xs
            )
        return out

    def max_kinks_per_node(self):
        return max((p.n_kinks for p in self.phis), default=0)

    def nearest_kink_distance(self, x):
        out = np.full(self.n, np.inf)
        for i, p in enumerate(self.phis):
            if p.n_kinks:
                out[i] = np.abs(p.kinks - x[i]).min()
        return out

    def node_kinks(self, i):
        return self.phis[i].kinks

    def smoother(self, initial_width: float = 1.0):
        return ScalarSeqSmoother(self, initial_width)


class ScalarSeqSmoother(NodewiseSmoother):
    """Per-node SmoothedNonlinearity objects with shared ladder caches."""

    def __init__(self, field: ScalarSeqNodewise, initial_width: float = 1.0):
        self.smoothed = [
            smoothing.smooth_nonlinearity(p, 1.0, initial_width) for p in field.phis
        ]

    def at_eps(self, eps: float) -> list[smoothing.SmoothedNonlinearity]:
        return [s.with_eps(eps) for s in self.smoothed]

    def value_deriv(self, x, eps):
        pairs = [s.with_eps(eps).value_deriv(float(xi)) for s, xi in zip(self.smoothed, x)]
        v, d = zip(*pairs)
        return np.array(v), np.array(d)

    def hull_distance(self, x, eps):
        return np.array([
            s.with_eps(eps).hull_distance(float(xi)) for s, xi in zip(self.smoothed, x)
        ])
