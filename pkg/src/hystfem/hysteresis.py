"""Scalar rate-independent hysteresis operators on piecewise-affine inputs.

The two operator families implemented here are the linear play (a dead band
of width ``b - a`` with slope ``c`` outside the band) and the Preisach
operator (a weighted superposition of unit plays over a half-width grid).
Both admit a sufficient-statistic memory: a single output value for the
play, one play value per half-width node for Preisach.  Updates are exact
per monotone affine input segment, which is all a time-stepping scheme ever
feeds them.

A frozen memory turns the last input value into a scalar nonlinearity (the
"level function"), which is nondecreasing and piecewise C2.  Level functions
are what the per-node nonlinear systems of the transient solver are made of.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import CubicSpline


# --------------------------------------------------------------------------
# linear play
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PlayParams:
    """Linear play with dead band [a, b] and outer slope c > 0.

    The output tracks ``c*(u - b)`` when pushed from below, ``c*(u - a)``
    when pushed from above, and freezes inside the band.
    """

    a: float
    b: float
    c: float

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError(f"play band requires a < b, got a={self.a}, b={self.b}")
        if not self.c > 0:
            raise ValueError(f"play slope must be positive, got c={self.c}")


@dataclass(frozen=True)
class PlayState:
    """Current output of a play operator."""

    w: float


def play_clamp(w, u, p: PlayParams):
    """Project a previous output onto the admissible band at input u.

    Works elementwise on arrays; this single formula is both the
    initialization and the exact single-segment update of the play.
    """
    return np.maximum(p.c * (u - p.b), np.minimum(p.c * (u - p.a), w))


def play_init(u0: float, w0: float, p: PlayParams) -> PlayState:
    """Initial play output: w0 clamped into [c*(u0-b), c*(u0-a)]."""
    return PlayState(float(play_clamp(w0, u0, p)))


def play_update(s: PlayState, u_new: float, p: PlayParams) -> PlayState:
    """Advance the play by one monotone affine input segment ending at u_new.

    Rate independence makes the endpoint clamp exact for any monotone
    segment, so no sub-stepping is ever required.
    """
    return PlayState(float(play_clamp(s.w, u_new, p)))


@dataclass(frozen=True)
class GeneralizedPlayParams:
    """Generalized play with nondecreasing Lipschitz boundary curves.

    ``gamma_r(u) <= gamma_l(u)`` must hold on the working range; the linear
    play is the special case gamma_l = c*(u-a), gamma_r = c*(u-b).
    """

    gamma_l: Callable[[float], float]
    gamma_r: Callable[[float], float]


def generalized_play_update(w_prev: float, u_new: float, p: GeneralizedPlayParams) -> float:
    """One monotone-segment update of the generalized play."""
    lo = p.gamma_r(u_new)
    hi = p.gamma_l(u_new)
    if lo > hi:
        raise ValueError(
            f"invalid generalized play params: gamma_r(u)={lo} > gamma_l(u)={hi} at u={u_new}"
        )
    return float(max(lo, min(hi, w_prev)))


# --------------------------------------------------------------------------
# Preisach operator
# --------------------------------------------------------------------------

class _AntiderivativeTable:
    """Memoized sigma-antiderivative of a Preisach density on an r-grid.

    Holds, for every half-width node r_j, a cubic interpolant of
    ``Omega(r_j, sigma) = int_0^sigma density(r_j, s) ds`` on a shared
    sigma grid.  Values beyond the grid continue linearly with the end
    slope; negative sigma uses the odd extension Omega(-s) = -Omega(s),
    which is exact for densities even in sigma.

    All evaluators accept arrays of shape (..., n_r) whose last axis is
    aligned with the r-grid, so a whole mesh of play states can be pushed
    through at once.
    """

    def __init__(self, r_nodes, density, sigma_max, knot_spacing, quad_tol=1e-12):
        self.r = np.asarray(r_nodes, dtype=float)
        n_knots = max(8, int(math.ceil(sigma_max / knot_spacing)) + 1)
        self.grid = np.linspace(0.0, sigma_max, n_knots)
        vals = _cumulative_panels(density, self.r, self.grid, quad_tol)
        spline = CubicSpline(self.grid, vals, axis=0)
        # coefficient layout (n_seg, n_r, 4): highest degree first
        self._coef = np.moveaxis(spline.c, 0, -1)
        self._end_slope = density(self.r, np.full_like(self.r, sigma_max))
        self._end_value = vals[-1]

    def _locate(self, sigma):
        s = np.abs(sigma)
        sign = np.sign(sigma)
        idx = np.clip(np.searchsorted(self.grid, s, side="right") - 1, 0, len(self.grid) - 2)
        t = s - self.grid[idx]
        cols = np.arange(self.r.size)
        coef = self._coef[idx, cols, :]
        beyond = s > self.grid[-1]
        return s, sign, t, coef, beyond

    def value(self, sigma):
        s, sign, t, c, beyond = self._locate(sigma)
        v = ((c[..., 0] * t + c[..., 1]) * t + c[..., 2]) * t + c[..., 3]
        if np.any(beyond):
            lin = self._end_value + self._end_slope * (s - self.grid[-1])
            v = np.where(beyond, lin, v)
        return sign * v

    def deriv(self, sigma):
        s, sign, t, c, beyond = self._locate(sigma)
        d = (3.0 * c[..., 0] * t + 2.0 * c[..., 1]) * t + c[..., 2]
        if np.any(beyond):
            d = np.where(beyond, self._end_slope, d)
        return d  # even in sigma

    def deriv2(self, sigma):
        s, sign, t, c, beyond = self._locate(sigma)
        d2 = 6.0 * c[..., 0] * t + 2.0 * c[..., 1]
        if np.any(beyond):
            d2 = np.where(beyond, 0.0, d2)
        return sign * d2  # odd in sigma


def _cumulative_panels(density, r, grid, tol):
    """Cumulative integral of density(r, .) over the grid, per r node.

    Each knot interval is integrated by a 15-point Gauss rule checked
    against the 7-point rule; intervals whose estimates disagree beyond
    tol are bisected (adaptive Gauss-Kronrod-style control, shared across
    the r axis since the densities are smooth).
    """
    x7, w7 = np.polynomial.legendre.leggauss(7)
    x15, w15 = np.polynomial.legendre.leggauss(15)

    def panel(a, b, depth=0):
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        f15 = density(r[None, :], (mid + half * x15)[:, None])
        i15 = half * (w15[:, None] * f15).sum(axis=0)
        f7 = density(r[None, :], (mid + half * x7)[:, None])
        i7 = half * (w7[:, None] * f7).sum(axis=0)
        if depth >= 30 or np.max(np.abs(i15 - i7)) <= tol:
            return i15
        m = 0.5 * (a + b)
        return panel(a, m, depth + 1) + panel(m, b, depth + 1)

    out = np.zeros((len(grid), r.size))
    for k in range(1, len(grid)):
        out[k] = out[k - 1] + panel(grid[k - 1], grid[k])
    return out


@dataclass(frozen=True)
class PreisachParams:
    """Quadrature discretization of a Preisach operator.

    The output is ``2 * sum_j r_weights[j] * Omega(r_j, play_j)`` where
    play_j is the unit play with half-width r_j and Omega is the sigma
    antiderivative of the density.  ``density`` must be even in sigma and
    nonnegative; Omega is extended to negative arguments by oddness.
    """

    r_nodes: np.ndarray
    r_weights: np.ndarray
    density: Callable
    sigma_antiderivative: Callable
    table: _AntiderivativeTable | None = field(default=None, repr=False)

    def __post_init__(self):
        r = np.asarray(self.r_nodes, dtype=float)
        w = np.asarray(self.r_weights, dtype=float)
        if r.ndim != 1 or w.shape != r.shape:
            raise ValueError("r_nodes and r_weights must be 1-d arrays of equal length")
        if not np.all(r > 0):
            raise ValueError("all r_nodes must be positive")
        if len(np.unique(r)) != len(r):
            raise ValueError("r_nodes must be distinct")
        if not np.all(w >= 0):
            raise ValueError("r_weights must be nonnegative")
        object.__setattr__(self, "r_nodes", r)
        object.__setattr__(self, "r_weights", w)

    @property
    def n_r(self) -> int:
        return self.r_nodes.size

    # Batched Omega evaluators over arrays shaped (..., n_r).
    def omega_value(self, sigma):
        if self.table is not None:
            return self.table.value(sigma)
        return _batch_call(self.sigma_antiderivative, self.r_nodes, sigma)

    def omega_deriv(self, sigma):
        if self.table is not None:
            return self.table.deriv(sigma)
        return _batch_call(self.density, self.r_nodes, np.abs(sigma))

    def omega_deriv2(self, sigma):
        if self.table is not None:
            return self.table.deriv2(sigma)
        eps = 1e-7
        return (self.omega_deriv(sigma + eps) - self.omega_deriv(sigma - eps)) / (2 * eps)

    def lipschitz_bound(self) -> float:
        """Output Lipschitz constant 2 * sum(weights * sup_sigma density)."""
        sup = self.omega_deriv(np.zeros(self.n_r))
        # the density may peak off sigma=0; sample a spread of sigmas
        probes = np.linspace(0.0, 2.0 * float(self.r_nodes.max()), 65)
        for s in probes:
            sup = np.maximum(sup, self.omega_deriv(np.full(self.n_r, s)))
        return float(2.0 * np.sum(self.r_weights * sup))


def _batch_call(fn, r, sigma):
    sigma = np.asarray(sigma, dtype=float)
    out = np.empty_like(sigma)
    flat = out.reshape(-1, r.size)
    sflat = sigma.reshape(-1, r.size)
    for i in range(flat.shape[0]):
        for j in range(r.size):
            flat[i, j] = fn(r[j], sflat[i, j])
    return out


@dataclass(frozen=True)
class PreisachMemory:
    """Play outputs, one per half-width node (unit plays, a=-r, b=r, c=1)."""

    plays: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "plays", np.asarray(self.plays, dtype=float))


def unit_play_clamp(w, u, r):
    """Clamp of the unit play with half-width r; elementwise on arrays."""
    return np.maximum(u - r, np.minimum(u + r, w))


# Initialization policies -------------------------------------------------

@dataclass(frozen=True)
class DrivenInit:
    """Start every play on its lower branch at inputs[0], then walk the list.

    inputs[0] should sit at (or below) negative saturation so the memory is
    well defined; the last entry must equal the nominal initial input u0.
    """

    inputs: Sequence[float]


@dataclass(frozen=True)
class ExplicitInit:
    """Prescribe the play values directly; they must be admissible at u0."""

    values: np.ndarray


def preisach_init(u0: float, policy, p: PreisachParams) -> PreisachMemory:
    """Build an initial Preisach memory consistent with input value u0."""
    r = p.r_nodes
    if isinstance(policy, DrivenInit):
        inputs = list(policy.inputs)
        if not inputs:
            raise ValueError("driven init needs at least one input value")
        if abs(inputs[-1] - u0) > 1e-12 * (1.0 + abs(u0)):
            raise ValueError(
                f"driven init must end at u0={u0}, drive list ends at {inputs[-1]}"
            )
        w = inputs[0] - r  # lower branch everywhere
        for u in inputs[1:]:
            w = unit_play_clamp(w, u, r)
        return PreisachMemory(w)
    if isinstance(policy, ExplicitInit):
        w = np.asarray(policy.values, dtype=float)
        if w.shape != r.shape:
            raise ValueError("explicit init values must match the r grid")
        lo, hi = u0 - r, u0 + r
        bad = (w < lo - 1e-12) | (w > hi + 1e-12)
        if np.any(bad):
            raise ValueError(
                f"explicit play values violate the band constraint at u0={u0} "
                f"for {int(bad.sum())} node(s)"
            )
        return PreisachMemory(w)
    raise TypeError(f"unknown init policy: {policy!r}")


def preisach_update(m: PreisachMemory, u_new: float, p: PreisachParams) -> PreisachMemory:
    """Advance every play by one monotone segment ending at u_new."""
    return PreisachMemory(unit_play_clamp(m.plays, u_new, p.r_nodes))


def preisach_output(m: PreisachMemory, p: PreisachParams) -> float:
    """Quadrature output 2 * sum_j weight_j * Omega(r_j, play_j)."""
    return float(2.0 * np.sum(p.r_weights * p.omega_value(m.plays)))


# --------------------------------------------------------------------------
# factorized Lorentzian density
# --------------------------------------------------------------------------

def lorentzian_density(amplitude: float, gamma: float, mu: float) -> Callable:
    """Product of two Lorentzians in (sigma + r) and (sigma - r).

    Even in sigma and strictly positive, with scale gamma*mu and peak near
    r = mu, sigma = 0.
    """
    s = gamma * mu

    def density(r, sigma):
        t1 = (sigma + r - mu) / s
        t2 = (sigma - r + mu) / s
        return 0.5 * amplitude / ((1.0 + t1 * t1) * (1.0 + t2 * t2))

    return density


def _sup_tail_r_max(density, fraction, scale):
    """Smallest R with int_R^inf sup_sigma density dr < fraction * total."""
    r_grid = np.concatenate([
        np.linspace(1e-3, 50 * scale, 2000),
        np.geomspace(50 * scale, 1e9 * scale, 2000),
    ])
    sup = np.empty_like(r_grid)
    for i, r in enumerate(r_grid):
        cand = np.linspace(0.0, r + 10 * scale, 513)
        sup[i] = density(np.full_like(cand, r), cand).max()
    mass = np.concatenate([[0.0], np.cumsum(0.5 * (sup[1:] + sup[:-1]) * np.diff(r_grid))])
    total = mass[-1]
    tail = total - mass
    below = tail < fraction * total
    idx = int(np.argmax(below)) if below.any() else len(r_grid) - 1
    return float(r_grid[idx])


def lorentzian_preisach_params(
    n_r: int = 100,
    r_max: float | None = None,
    sigma_max: float | None = None,
    amplitude: float = 0.080422,
    gamma: float = 0.27382,
    mu: float = 91.24317,
    tail_fraction: float = 1e-6,
    knots_per_width: int = 8,
) -> PreisachParams:
    """Composite-midpoint Preisach discretization of the Lorentzian density.

    With ``r_max=None`` the grid extent comes from the sup-density tail rule
    (tail mass below ``tail_fraction`` of the total).  For this density the
    sup decays only like 1/r^2, which pushes the literal rule out by orders
    of magnitude; pass an explicit ``r_max`` near the working input range to
    keep the bulk resolved (a warning is emitted otherwise).
    """
    density = lorentzian_density(amplitude, gamma, mu)
    width = gamma * mu
    if r_max is None:
        r_max = _sup_tail_r_max(density, tail_fraction, width)
        if r_max / n_r > width:
            warnings.warn(
                f"tail rule gives r_max={r_max:.3g}; a {n_r}-node uniform grid "
                "under-resolves the density bulk. Pass r_max explicitly.",
                stacklevel=2,
            )
    step = r_max / n_r
    r_nodes = (np.arange(n_r) + 0.5) * step
    r_weights = np.full(n_r, step)
    if sigma_max is None:
        sigma_max = r_max + 10.0 * width
    table = _AntiderivativeTable(r_nodes, density, sigma_max, width / knots_per_width)

    def antideriv(r, sigma):
        j = int(np.argmin(np.abs(r_nodes - r)))
        if abs(r_nodes[j] - r) > 1e-9 * (1 + abs(r)):
            raise ValueError("antiderivative is tabulated on the r grid only")
        full = np.zeros(n_r)
        full[j] = sigma
        return float(table.value(full)[j])

    return PreisachParams(r_nodes, r_weights, density, antideriv, table)


# --------------------------------------------------------------------------
# piecewise-C2 scalar functions and level functions
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class AffinePiece:
    """y = y0 + slope * (x - x0), naturally extended to all of R."""

    slope: float
    x0: float
    y0: float

    def value(self, x):
        return self.y0 + self.slope * (x - self.x0)

    def deriv(self, x):
        return self.slope if np.isscalar(x) else np.full_like(np.asarray(x, float), self.slope)

    def deriv2(self, x):
        return 0.0 if np.isscalar(x) else np.zeros_like(np.asarray(x, float))


@dataclass(frozen=True)
class PreisachPiece:
    """One smooth branch of a Preisach level function.

    Within a piece every play keeps a fixed branch: -1 lower (sigma = x + r),
    0 frozen (sigma = play value), +1 upper (sigma = x - r).  Evaluating the
    fixed-branch formula anywhere yields the natural C2 extension.
    """

    params: PreisachParams
    branch: np.ndarray        # per r node, in {-1, 0, +1}
    frozen: np.ndarray        # play values where branch == 0
    scale: float
    offset: float

    def _sigma(self, x):
        r = self.params.r_nodes
        return np.where(
            self.branch < 0, x + r, np.where(self.branch > 0, x - r, self.frozen)
        )

    def value(self, x):
        w = self.params.r_weights
        return self.offset + 2.0 * self.scale * float(
            np.sum(w * self.params.omega_value(self._sigma(x)))
        )

    def deriv(self, x):
        w = self.params.r_weights
        moving = self.branch != 0
        return 2.0 * self.scale * float(
            np.sum(w[moving] * self.params.omega_deriv(self._sigma(x))[moving])
        )

    def deriv2(self, x):
        w = self.params.r_weights
        moving = self.branch != 0
        return 2.0 * self.scale * float(
            np.sum(w[moving] * self.params.omega_deriv2(self._sigma(x))[moving])
        )


class ScalarPiecewiseC2:
    """Nondecreasing scalar function with C2 pieces between sorted kinks.

    ``pieces[i]`` covers the interval (kinks[i-1], kinks[i]); there is one
    more piece than kinks.  Pieces evaluate their natural smooth extension,
    so one-sided derivatives at a kink are the adjacent pieces' derivatives.
    """

    def __init__(self, kinks, pieces, lipschitz_bound):
        self.kinks = np.asarray(kinks, dtype=float)
        self.pieces = tuple(pieces)
        self.lipschitz_bound = float(lipschitz_bound)
        if len(self.pieces) != len(self.kinks) + 1:
            raise ValueError("need exactly one more piece than kinks")
        if np.any(np.diff(self.kinks) <= 0):
            raise ValueError("kinks must be strictly increasing")

    @property
    def n_kinks(self) -> int:
        return len(self.kinks)

    def piece_index(self, x: float, side: int = 1) -> int:
        """Piece evaluating at x; at a kink, side=-1 picks the left piece."""
        if side >= 0:
            return int(np.searchsorted(self.kinks, x, side="right"))
        return int(np.searchsorted(self.kinks, x, side="left"))

    def value(self, x: float) -> float:
        return float(self.pieces[self.piece_index(x)].value(x))

    def deriv_minus(self, x: float) -> float:
        return float(self.pieces[self.piece_index(x, side=-1)].deriv(x))

    def deriv_plus(self, x: float) -> float:
        return float(self.pieces[self.piece_index(x, side=1)].deriv(x))

    def value_many(self, xs) -> np.ndarray:
        return np.array([self.value(float(x)) for x in np.asarray(xs).ravel()])

    def continuity_residuals(self) -> np.ndarray:
        """Value jumps across the declared kinks (should be ~0)."""
        out = np.empty(self.n_kinks)
        for j, k in enumerate(self.kinks):
            out[j] = self.pieces[j + 1].value(k) - self.pieces[j].value(k)
        return out

    def neighbor_gaps(self, j: int) -> tuple[float, float]:
        """Distances from kink j to its neighbors (inf at the ends)."""
        left = self.kinks[j] - self.kinks[j - 1] if j > 0 else math.inf
        right = self.kinks[j + 1] - self.kinks[j] if j + 1 < self.n_kinks else math.inf
        return left, right


def merge_kinks(kinks: np.ndarray, tol_rel: float = 1e-12) -> np.ndarray:
    """Sort and merge kinks closer than 1e-12 * (1 + |x|) to avoid zero-width pieces."""
    ks = np.sort(np.asarray(kinks, dtype=float))
    if ks.size == 0:
        return ks
    kept = [ks[0]]
    for k in ks[1:]:
        if k - kept[-1] > tol_rel * (1.0 + abs(k)):
            kept.append(k)
    return np.array(kept)


def play_level_function(history_output: float, p: PlayParams, scale: float,
                        offset: float = 0.0) -> ScalarPiecewiseC2:
    """Frozen-history play response x -> scale * clamp(history, x) + offset.

    Piecewise affine with kinks at history/c + a and history/c + b and
    slopes (scale*c, 0, scale*c).
    """
    w = float(history_output)
    k1 = w / p.c + p.a
    k2 = w / p.c + p.b
    s = scale * p.c
    plateau = scale * w + offset
    pieces = (
        AffinePiece(s, k1, plateau),
        AffinePiece(0.0, k1, plateau),
        AffinePiece(s, k2, plateau),
    )
    return ScalarPiecewiseC2([k1, k2], pieces, abs(s))


def preisach_level_function(m: PreisachMemory, p: PreisachParams, scale: float,
                            offset: float = 0.0) -> ScalarPiecewiseC2:
    """Frozen-history Preisach response as a piecewise-C2 scalar function.

    Kinks are the clamp switch points {play_j -/+ r_j} of every play seen as
    a function of the new input; between consecutive kinks each play keeps a
    fixed branch so the pieces inherit the smoothness of Omega.
    """
    r, w = p.r_nodes, m.plays
    lo, hi = w - r, w + r
    kinks = merge_kinks(np.concatenate([lo, hi]))
    bounds = np.concatenate([[-np.inf], kinks, [np.inf]])
    pieces = []
    for i in range(len(bounds) - 1):
        a, b = bounds[i], bounds[i + 1]
        mid = _interval_probe(a, b)
        branch = np.where(mid < lo, -1, np.where(mid > hi, 1, 0))
        pieces.append(PreisachPiece(p, branch, w.copy(), scale, offset))
    lip = abs(scale) * p.lipschitz_bound()
    return ScalarPiecewiseC2(kinks, pieces, lip)


def _interval_probe(a: float, b: float) -> float:
    if math.isinf(a) and math.isinf(b):
        return 0.0
    if math.isinf(a):
        return b - 1.0
    if math.isinf(b):
        return a + 1.0
    return 0.5 * (a + b)
