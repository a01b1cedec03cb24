"""
Warped Geometry Module

Warped metrics dt² + φ(t)²g^{S²} on ℝ³: profile synthesis for the slow
curvature decay example and the non-net example, scalar curvature, decay
verification, contractibility radius, the multiplicity-4 cover and net checks.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Tuple, Optional, Any, Sequence

import numpy as np
import pandas as pd
from scipy import sparse
from scipy.sparse import csgraph
from scipy.spatial import cKDTree

from modules.control_calculus import (
    ControlFunction, Linear, Max, MonotoneTable, GeneralizedInverse, PairingConstants,
    evaluate, evaluate_grid, decay_G, decay_F, proportional_decay_fit
)
from modules.covers import SampledSpace, Cover, r_multiplicity_witness
from utils.validation import PreconditionError


logger = logging.getLogger(__name__)

CONTINUITY_TOL = 1e-8
PHI_SLOPE_CAP = 2.0 / 3.0
DEFAULT_STEP = 1.0 / 64.0


class WarpedGeometryError(Exception):
    """Base exception for warped geometry."""
    pass


class WarpedDomainError(WarpedGeometryError, PreconditionError):
    """Raised outside the domain of a profile or where φ ≤ 0."""
    pass


class NotApplicableError(WarpedGeometryError, PreconditionError):
    """Raised when a construction needs a property the profile lacks."""
    pass


class ProfileVerificationError(WarpedGeometryError):
    """Raised when a synthesized profile violates a named property."""

    def __init__(self, prop: str, message: str):
        super().__init__(f"[{prop}] {message}")
        self.prop = prop


class ConnectorError(WarpedGeometryError, PreconditionError):
    """Raised when no concave connector matches the boundary data."""
    pass


class CoverVerificationError(WarpedGeometryError):
    """Raised when a built cover fails its multiplicity or diameter check."""

    def __init__(self, message: str, witness: Dict[str, Any]):
        super().__init__(message)
        self.witness = witness


# ---------------------------------------------------------------------------
# Profiles
# ---------------------------------------------------------------------------

def _eval_sin(params, t):
    return np.sin(t), np.cos(t), -np.sin(t)


def _eval_linear(params, t):
    return t.copy(), np.ones_like(t), np.zeros_like(t)


def _eval_logwarp(params, t):
    a, b, t0, phi0 = params['a'], params['b'], params['t0'], params['phi0']
    s_k = np.asarray(params['anchors'])
    c_k = np.asarray(params['slopes'])
    lam_k = np.asarray(params['values'])
    s = np.log((t + b) / (t0 + b))
    k = np.clip(np.searchsorted(s_k, s, side='right') - 1, 0, len(s_k) - 1)
    u = s - s_k[k]
    last = k == len(s_k) - 1
    nxt = np.minimum(k + 1, len(s_k) - 1)
    H = np.where(last, 1.0, s_k[nxt] - s_k[k])
    dc = np.where(last, 0.0, c_k[nxt] - c_k[k])
    lam = lam_k[k] + c_k[k] * u + dc * u ** 2 / (2 * H)
    dlam = c_k[k] + dc * u / H
    d2lam = dc / H
    w = t + b
    return phi0 + a * lam, a * dlam / w, a * (d2lam - dlam) / w ** 2


def _eval_bump(params, t):
    a_n, n = params['center'], params['n']
    u = (t - a_n) / (10.0 * n)
    return 2.0 - np.cos(u), np.sin(u) / (10.0 * n), np.cos(u) / (100.0 * n * n)


def _eval_spline(params, t):
    x = np.asarray(params['knots'])
    y = np.asarray(params['d2'])
    s = np.asarray(params['d1'])
    v = np.asarray(params['d0'])
    k = np.clip(np.searchsorted(x, t, side='right') - 1, 0, len(x) - 2)
    h = t - x[k]
    H = x[k + 1] - x[k]
    dy = y[k + 1] - y[k]
    d2 = y[k] + dy * h / H
    d1 = s[k] + y[k] * h + dy * h ** 2 / (2 * H)
    d0 = v[k] + s[k] * h + y[k] * h ** 2 / 2 + dy * h ** 3 / (6 * H)
    return d0, d1, d2


def _eval_logtail(params, t):
    t0, v0, s0, tau = params['t0'], params['v0'], params['s0'], params['tau']
    u = 1.0 + (t - t0) / tau
    return v0 + s0 * tau * np.log(u), s0 / u, -s0 / (tau * u ** 2)


_EVALUATORS = {
    'sin': _eval_sin,
    'linear': _eval_linear,
    'logwarp': _eval_logwarp,
    'bump': _eval_bump,
    'spline': _eval_spline,
    'logtail': _eval_logtail,
}


@dataclass
class ProfilePiece:
    """Closed-form piece of a profile on [start, end)."""
    start: float
    end: float
    tag: str
    params: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.tag not in _EVALUATORS:
            raise WarpedGeometryError(f"Unknown profile piece {self.tag!r}")
        if not self.end > self.start:
            raise WarpedGeometryError(f"Empty profile piece [{self.start}, {self.end})")

    def evaluate(self, t: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return _EVALUATORS[self.tag](self.params, t)

    def to_dict(self) -> Dict[str, Any]:
        params = {k: (list(map(float, v)) if isinstance(v, (list, tuple, np.ndarray)) else v)
                  for k, v in self.params.items()}
        end = None if math.isinf(self.end) else self.end
        return {'start': self.start, 'end': end, 'tag': self.tag, 'params': params}


class WarpedProfile:
    """Warping function φ of dt² + φ(t)²g^{S²} as consecutive closed-form pieces.

    Attributes:
        pieces: ProfilePiece list covering [0, end)
        name: Label used in result files
        anchors: Bump centres a_n (non-net profiles only)
    """

    def __init__(self, pieces: Sequence[ProfilePiece], name: str = "profile",
                 anchors: Optional[Sequence[float]] = None):
        if not pieces:
            raise WarpedGeometryError("A profile needs at least one piece")
        for left, right in zip(pieces, pieces[1:]):
            if abs(left.end - right.start) > 1e-12:
                raise WarpedGeometryError(f"Pieces do not abut at t={left.end}")
        if pieces[0].start != 0.0:
            raise WarpedGeometryError("A profile starts at t = 0")
        self.pieces = list(pieces)
        self.name = name
        self.anchors = [] if anchors is None else [float(a) for a in anchors]
        self._starts = np.array([p.start for p in self.pieces])

    @classmethod
    def round_sphere(cls) -> 'WarpedProfile':
        return cls([ProfilePiece(0.0, math.pi, 'sin')], name='round')

    @classmethod
    def flat(cls) -> 'WarpedProfile':
        return cls([ProfilePiece(0.0, math.inf, 'linear')], name='flat')

    @property
    def end(self) -> float:
        return self.pieces[-1].end

    @property
    def breakpoints(self) -> List[float]:
        return [p.start for p in self.pieces[1:]]

    def derivatives(self, t) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(φ, φ′, φ″) at t (scalar or array)."""
        arr = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(arr < 0) or np.any(arr >= self.end) or not np.all(np.isfinite(arr)):
            raise WarpedDomainError(f"t outside the profile domain [0, {self.end})")
        which = np.searchsorted(self._starts, arr, side='right') - 1
        out = [np.empty_like(arr) for _ in range(3)]
        for k in np.unique(which):
            mask = which == k
            values = self.pieces[k].evaluate(arr[mask])
            for slot, value in zip(out, values):
                slot[mask] = value
        return tuple(out)

    def phi(self, t):
        return self.derivatives(t)[0]

    def continuity_defect(self) -> float:
        """Largest jump of φ or φ′ across a breakpoint."""
        worst = 0.0
        for left, right in zip(self.pieces, self.pieces[1:]):
            t = np.array([right.start])
            a = left.evaluate(t)
            b = right.evaluate(t)
            worst = max(worst, float(abs(a[0] - b[0])[0]), float(abs(a[1] - b[1])[0]))
        return worst

    def to_dict(self) -> Dict[str, Any]:
        return {
            'name': self.name,
            'breakpoints': self.breakpoints,
            'pieces': [p.to_dict() for p in self.pieces],
            'anchors': self.anchors,
        }


# ---------------------------------------------------------------------------
# Curvature
# ---------------------------------------------------------------------------

def scalar_curvature(phi: WarpedProfile, t):
    """
    Scalar curvature k = (2 − 2φ′² − 4φφ″)/φ² of the warped metric.

    Raises:
        WarpedDomainError: If φ(t) ≤ 0 or t lies outside the profile
    """
    scalar = np.ndim(t) == 0
    p, dp, d2p = phi.derivatives(t)
    if np.any(p <= 0):
        raise WarpedDomainError("φ(t) ≤ 0; the warped metric degenerates there")
    k = (2.0 - 2.0 * dp ** 2 - 4.0 * p * d2p) / p ** 2
    return float(k[0]) if scalar else k


def curvature_sweep(phi: WarpedProfile, grid: Sequence[float]) -> pd.DataFrame:
    """Table (t, φ, φ′, φ″, k) on a grid of positive t."""
    t = np.asarray(grid, dtype=float)
    p, dp, d2p = phi.derivatives(t)
    return pd.DataFrame({
        't': t,
        'phi': p,
        'dphi': dp,
        'd2phi': d2p,
        'k': scalar_curvature(phi, t),
    })


def _dyadic_grid(r: float, step: float) -> np.ndarray:
    grid = np.arange(1, int(math.floor(r / step)) + 1) * step
    if grid.size == 0 or grid[-1] < r:
        grid = np.append(grid, r)
    return grid


def k_inf_details(phi: WarpedProfile, r: float, step: float = DEFAULT_STEP,
                  refine: int = 2) -> Dict[str, float]:
    """
    Infimum of k over the geodesic ball 0 < t ≤ r.

    The scan uses the fixed grid step·ℕ up to r plus r itself, so enlarging
    r only adds points.  Interior grid minima are refined by tripling the
    resolution `refine` times.

    Returns:
        Dictionary with 'value', 'spacing' and 'uncertainty' (spacing × |k′|)
    """
    if not r > 0:
        raise WarpedDomainError(f"Ball radius must be positive, got {r}")
    t = _dyadic_grid(r, step)
    k = scalar_curvature(phi, t)
    best = int(np.argmin(k))
    value = float(k[best])
    spacing = step
    interior = np.where((k[1:-1] <= k[:-2]) & (k[1:-1] <= k[2:]))[0] + 1
    for idx in interior:
        for level in range(1, refine + 1):
            fine = np.linspace(t[idx - 1], t[idx + 1], 2 * 3 ** level + 1)
            value = min(value, float(scalar_curvature(phi, fine).min()))
            spacing = min(spacing, (t[idx + 1] - t[idx - 1]) / (2 * 3 ** level))
    slope = float(np.abs(np.gradient(k, t)).max()) if len(t) > 1 else 0.0
    return {'value': value, 'spacing': spacing, 'uncertainty': spacing * slope}


def k_inf(phi: WarpedProfile, r: float, step: float = DEFAULT_STEP) -> float:
    return k_inf_details(phi, r, step)['value']


def product_extend(k_values, m: int) -> np.ndarray:
    """Scalar curvature of g^φ + g^{ℝ^{m−3}}: the flat factor adds nothing."""
    if isinstance(m, bool) or int(m) != m or m < 3:
        raise WarpedDomainError(f"Product extension needs m ≥ 3, got {m!r}")
    return np.array(k_values, dtype=float, copy=True)


# ---------------------------------------------------------------------------
# Slow decay profile
# ---------------------------------------------------------------------------

@dataclass
class DecaySpec:
    """Prescribed slow function G with the grid it is verified on."""
    G: ControlFunction
    grid: Tuple[float, ...] = tuple(np.geomspace(1.0, 1e6, 61))

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0) or grid[0] <= 0:
            raise WarpedDomainError("DecaySpec grid must be increasing and positive")
        values = evaluate_grid(self.G, grid)
        if np.any(np.diff(values) < 0):
            raise WarpedDomainError("G must be non-decreasing on the grid")
        if not values[-1] > 10.0 * values[0]:
            raise WarpedDomainError("G does not diverge on the grid (right end ≤ 10× left end)")
        self.grid = tuple(float(g) for g in grid)


SLOW_A = 1.0 / (2.0 * math.sqrt(3.0))
SLOW_B = 1.0 / math.sqrt(3.0) - math.pi / 3.0


def construct_phi_slow(spec: DecaySpec, anchor_step: float = 1.0) -> WarpedProfile:
    """
    Profile with positive scalar curvature whose decay beats G.

    φ = sin t on [0, π/3], then φ = √3/2 + a·Λ(s) with
    s = log((t + b)/(π/3 + b)).  Λ′ is piecewise linear, starts at 1 and is
    non-increasing, so φ′ > 0 and φ″ < 0.  At every anchor s_k the slope is
    lowered towards the target φ(t_k) = √(G(t_k)/(k+1)) but never faster than
    the harmonic floor c_{k+1} ≥ c_k(k+1)/(k+2), which keeps φ unbounded.

    Raises:
        ProfileVerificationError: If the dense-grid verification fails
    """
    t0 = math.pi / 3.0
    phi0 = math.sqrt(3.0) / 2.0
    a, b = SLOW_A, SLOW_B
    horizon = spec.grid[-1]
    s_max = math.log((horizon + b) / (t0 + b))
    n_anchors = max(2, int(math.ceil(s_max / anchor_step)) + 1)
    anchors = [k * anchor_step for k in range(n_anchors)]
    slopes, values = [1.0], [0.0]
    for k in range(n_anchors - 1):
        s_next = anchors[k + 1]
        t_next = (t0 + b) * math.exp(s_next) - b
        target_phi = math.sqrt(max(evaluate(spec.G, t_next), 0.0) / (k + 2))
        target = (target_phi - phi0) / a
        needed = 2.0 * (target - values[k]) / anchor_step - slopes[k]
        floor = slopes[k] * (k + 1) / (k + 2)
        c_next = min(max(needed, floor), slopes[k])
        slopes.append(c_next)
        values.append(values[k] + anchor_step * (slopes[k] + c_next) / 2.0)
        logger.debug("slow profile anchor %d: target Λ=%.4g, slope %.4g", k + 1, target, c_next)

    pieces = [
        ProfilePiece(0.0, t0, 'sin'),
        ProfilePiece(t0, math.inf, 'logwarp',
                     {'a': a, 'b': b, 't0': t0, 'phi0': phi0,
                      'anchors': anchors, 'slopes': slopes, 'values': values}),
    ]
    profile = WarpedProfile(pieces, name='slow')
    verify_slow_profile(profile, spec)
    logger.info("Slow profile built with %d anchors up to t=%.4g", n_anchors, horizon)
    return profile


def _verification_grid(horizon: float, n: int = 4000) -> np.ndarray:
    return np.unique(np.concatenate([
        np.linspace(1e-3, math.pi / 3.0, 200),
        np.geomspace(math.pi / 3.0, horizon, n),
    ]))


def verify_slow_profile(profile: WarpedProfile, spec: DecaySpec) -> Dict[str, Any]:
    """Check the five profile properties on a dense grid; raise naming the first violated one."""
    t = _verification_grid(spec.grid[-1])
    p, dp, d2p = profile.derivatives(t)
    if np.any(np.diff(p) <= 0) or p[-1] <= p[np.searchsorted(t, math.pi / 3.0)]:
        raise ProfileVerificationError('unbounded', "φ is not increasing towards infinity")
    head = t <= math.pi / 3.0
    if np.abs(p[head] - np.sin(t[head])).max() > 1e-12:
        raise ProfileVerificationError('round-start', "φ differs from sin t on [0, π/3]")
    if np.any(dp <= 0) or np.any(d2p >= 0):
        raise ProfileVerificationError('monotone-concave', "φ′ > 0 and φ″ < 0 fail somewhere")
    if np.any(dp[t >= math.pi / 3.0] > PHI_SLOPE_CAP + 1e-12):
        raise ProfileVerificationError('slope-cap', "φ′ exceeds 2/3 beyond π/3")
    defect = profile.continuity_defect()
    if defect > CONTINUITY_TOL:
        raise ProfileVerificationError('C1', f"φ or φ′ jumps by {defect:.3g} at a breakpoint")
    k = (2.0 - 2.0 * dp ** 2 - 4.0 * p * d2p) / p ** 2
    if np.any(k <= 0):
        raise ProfileVerificationError('positive-curvature', "k ≤ 0 on the grid")
    tail = t >= max(math.pi / 3.0, spec.grid[0])
    ratio = evaluate_grid(spec.G, t[tail]) / p[tail] ** 2
    half = len(ratio) // 2
    if not (ratio[-1] > ratio[0] and np.all(np.diff(ratio[half:]) >= -1e-9 * ratio[half:-1])):
        raise ProfileVerificationError('G-dominates', "G/φ² does not grow on the grid tail")
    return {'ratio_growth': float(ratio[-1] / ratio[0]), 'min_k': float(k.min()), 'continuity': defect}


# ---------------------------------------------------------------------------
# Non-net profile
# ---------------------------------------------------------------------------

def concave_connector(t_start: float, t_end: float, v0: float, s0: float,
                      v1: float, s1: float, floor_share: float = 0.1) -> ProfilePiece:
    """
    φ″-first concave piece matching value and slope at both ends.

    φ″ = −Δs·w with w a probability density on [0, L]: a uniform floor of
    weight floor_share plus a symmetric triangle.  The mean of w is fixed by
    the value condition, so the triangle centre is determined; φ″ < 0 on
    the whole piece.

    Raises:
        ConnectorError: If the slopes do not decrease or the mean falls outside (0, L)
    """
    L = t_end - t_start
    drop = s0 - s1
    if not (L > 0 and drop > 0):
        raise ConnectorError("A concave connector needs L > 0 and a decreasing slope")
    mean = L - (s0 * L - (v1 - v0)) / drop
    centre = (mean - floor_share * L / 2.0) / (1.0 - floor_share)
    if not (0.0 < centre < L):
        raise ConnectorError(f"Connector on [{t_start:.4g}, {t_end:.4g}] is infeasible "
                             f"(triangle centre {centre:.4g} outside (0, {L:.4g}))")
    half = 0.5 * min(centre, L - centre)
    xs = [0.0, centre - half, centre, centre + half, L]
    base = -drop * floor_share / L
    peak = base - drop * (1.0 - floor_share) / half
    ys = [base, base, peak, base, base]
    d1, d0 = [s0], [v0]
    for k in range(4):
        H = xs[k + 1] - xs[k]
        dy = ys[k + 1] - ys[k]
        d0.append(d0[k] + d1[k] * H + ys[k] * H ** 2 / 2 + dy * H ** 2 / 6)
        d1.append(d1[k] + ys[k] * H + dy * H / 2)
    knots = [t_start + x for x in xs]
    knots[-1] = t_end
    return ProfilePiece(t_start, t_end, 'spline', {'knots': knots, 'd2': ys, 'd1': d1, 'd0': d0})


def nonnet_anchors(n_bumps: int) -> List[float]:
    """a_n = a_{n−1} + 100πn² with a_0 = 0."""
    anchors, a = [], 0.0
    for n in range(1, n_bumps + 1):
        a += 100.0 * math.pi * n * n
        anchors.append(a)
    return anchors


def construct_phi_nonnet(n_bumps: int = 4) -> Tuple[WarpedProfile, List[float]]:
    """
    Profile with positive scalar curvature whose low-curvature set is not a net.

    Bumps φ = 2 − cos((t − a_n)/(10n)) on |t − a_n| ≤ 5nπ (where φ″ ≥ 0),
    concave connectors between them, sin t on [0, π/3] and a concave
    logarithmic tail after the last bump.
    """
    if n_bumps < 1:
        raise WarpedDomainError("construct_phi_nonnet needs at least one bump")
    anchors = nonnet_anchors(n_bumps)
    t0 = math.pi / 3.0
    pieces = [ProfilePiece(0.0, t0, 'sin')]
    v, s, t = math.sqrt(3.0) / 2.0, 0.5, t0
    for n, a_n in enumerate(anchors, start=1):
        left, right = a_n - 5.0 * n * math.pi, a_n + 5.0 * n * math.pi
        pieces.append(concave_connector(t, left, v, s, 2.0, -1.0 / (10.0 * n)))
        pieces.append(ProfilePiece(left, right, 'bump', {'center': a_n, 'n': n}))
        v, s, t = 2.0, 1.0 / (10.0 * n), right
    pieces.append(ProfilePiece(t, math.inf, 'logtail', {'t0': t, 'v0': v, 's0': s, 'tau': 1.0}))
    profile = WarpedProfile(pieces, name='nonnet', anchors=anchors)
    verify_nonnet_profile(profile)
    logger.info("Non-net profile built with bumps at %s", [round(a, 3) for a in anchors])
    return profile, anchors


def verify_nonnet_profile(profile: WarpedProfile) -> Dict[str, Any]:
    """Check the non-net profile properties on a dense grid."""
    anchors = profile.anchors
    horizon = anchors[-1] + 10.0 * len(anchors) * math.pi
    t = np.unique(np.concatenate([np.linspace(1e-3, horizon, 200000), anchors]))
    p, dp, d2p = profile.derivatives(t)
    head = t <= math.pi / 3.0
    if np.abs(p[head] - np.sin(t[head])).max() > 1e-12:
        raise ProfileVerificationError('round-start', "φ differs from sin t on [0, π/3]")
    if np.any(np.abs(dp[~head]) > PHI_SLOPE_CAP + 1e-12):
        raise ProfileVerificationError('slope-cap', "|φ′| exceeds 2/3 beyond π/3")
    in_bump = np.zeros_like(t, dtype=bool)
    for n, a_n in enumerate(anchors, start=1):
        in_bump |= np.abs(t - a_n) <= 5.0 * n * math.pi + 1e-9
    if np.any(d2p[~in_bump & (t > 0)] >= 0):
        raise ProfileVerificationError('concave-outside-bumps', "φ″ ≥ 0 outside the bump zones")
    if any(abs(float(profile.phi(a_n)[0]) - 1.0) > 1e-12 for a_n in anchors):
        raise ProfileVerificationError('bump-centre', "φ(a_n) ≠ 1")
    defect = profile.continuity_defect()
    if defect > CONTINUITY_TOL:
        raise ProfileVerificationError('C1', f"φ or φ′ jumps by {defect:.3g} at a breakpoint")
    k = (2.0 - 2.0 * dp ** 2 - 4.0 * p * d2p) / p ** 2
    if np.any(k <= 0):
        raise ProfileVerificationError('positive-curvature', "k ≤ 0 on the grid")
    mids = [0.5 * (x + y) for x, y in zip(anchors, anchors[1:])]
    heights = [float(profile.phi(m)[0]) for m in mids]
    if any(b <= a for a, b in zip(heights, heights[1:])):
        raise ProfileVerificationError('midpoint-growth', "φ((a_n + a_{n+1})/2) does not grow")
    return {'min_k': float(k.min()), 'midpoint_heights': heights, 'continuity': defect}


# ---------------------------------------------------------------------------
# Contractibility, nets
# ---------------------------------------------------------------------------

def contractibility_radius(phi: WarpedProfile, horizon: float = 1e4, n_table: int = 4001) -> ControlFunction:
    """
    ℜ(r) = max{r, φ⁻¹(r)} as a control function built from a table of φ.

    Raises:
        NotApplicableError: If φ is not strictly increasing on the table
    """
    end = min(horizon, phi.end * (1 - 1e-9))
    t = np.concatenate([[0.0], np.geomspace(1e-4, end, n_table - 1)])
    values = phi.phi(t)
    if np.any(np.diff(values) <= 0):
        raise NotApplicableError(f"Profile {phi.name!r} is not strictly increasing; ℜ = φ⁻¹ does not apply")
    table = MonotoneTable(tuple(t), tuple(values))
    return Max((GeneralizedInverse(table), Linear(1.0)))


def net_check(phi: WarpedProfile, eps: float, C: float, horizon: float,
              step: float = DEFAULT_STEP) -> Dict[str, Any]:
    """
    Is {x : k(x) < ε} a C-net up to the horizon?

    k depends on t only and radial geodesics realise |Δt|, so the distance
    from a point at t to the low-curvature set is the distance from t to the
    low set of the t-grid.  The gap beyond the last low point is truncated by
    the horizon and is not counted.

    Returns:
        Dictionary with 'verdict', 'max_distance' (the C needed), 'largest_gap',
        'witness' interval and the list of interior 'gaps'
    """
    if not (eps > 0 and C > 0 and horizon > 0):
        raise WarpedDomainError("net_check needs ε, C and the horizon positive")
    t = _dyadic_grid(min(horizon, phi.end * (1 - 1e-9)), step)
    low = scalar_curvature(phi, t) < eps
    if low.all():
        return {'verdict': 'PASS', 'max_distance': 0.0, 'largest_gap': 0.0,
                'witness': None, 'gaps': [], 'eps': eps, 'C': C}
    if not low.any():
        return {'verdict': 'FAIL', 'max_distance': math.inf, 'largest_gap': float(t[-1]),
                'witness': [0.0, float(t[-1])], 'gaps': [], 'eps': eps, 'C': C}
    idx = np.where(low)[0]
    gaps = []
    for i, j in zip(idx, idx[1:]):
        if j > i + 1:
            gaps.append((float(t[i]), float(t[j])))
    lengths = [b - a for a, b in gaps]
    start_gap = float(t[idx[0]])
    max_distance = max([start_gap] + [g / 2.0 for g in lengths])
    if lengths and max(lengths) >= start_gap:
        witness = list(gaps[int(np.argmax(lengths))])
    else:
        witness = [0.0, start_gap]
    return {
        'verdict': 'PASS' if max_distance <= C else 'FAIL',
        'max_distance': max_distance,
        'largest_gap': witness[1] - witness[0],
        'witness': witness,
        'gaps': [[a, b] for a, b in gaps],
        'eps': eps,
        'C': C,
    }


# ---------------------------------------------------------------------------
# Covers
# ---------------------------------------------------------------------------

def fibonacci_sphere(n: int) -> np.ndarray:
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    rho = np.sqrt(1.0 - z ** 2)
    psi = math.pi * (1.0 + math.sqrt(5.0)) * i
    return np.column_stack([rho * np.cos(psi), rho * np.sin(psi), z])


@dataclass
class WarpedSample:
    """Product sample of the warped space with graph distances.

    Point 0 is the origin; point 1 + i·n_sphere + j sits at (t_i, u_j).
    """
    profile: WarpedProfile
    t: np.ndarray
    sphere: np.ndarray
    space: SampledSpace

    @property
    def point_t(self) -> np.ndarray:
        return np.concatenate([[0.0], np.repeat(self.t, len(self.sphere))])

    @property
    def point_dir(self) -> np.ndarray:
        return np.vstack([np.zeros((1, 3)), np.tile(self.sphere, (len(self.t), 1))])


def warped_sample(phi: WarpedProfile, horizon: float, dt: float, n_sphere: int = 32,
                  neighbours: int = 6) -> WarpedSample:
    """
    Sample (0, dt, 2dt, ...] × Fibonacci sphere with shortest-path distances.

    Edges join radial neighbours (weight Δt), sphere neighbours on one shell
    (φ·angle) and sphere neighbours on consecutive shells
    √(Δt² + (φ̄·angle)²) with φ̄ the midpoint value.
    """
    if not (horizon > dt > 0):
        raise WarpedDomainError("warped_sample needs 0 < dt < horizon")
    t = np.arange(1, int(math.floor(horizon / dt)) + 1) * dt
    u = fibonacci_sphere(n_sphere)
    k = min(neighbours, n_sphere - 1)
    _, nbr = cKDTree(u).query(u, k=k + 1)
    nbr = nbr[:, 1:]
    angle = np.arccos(np.clip(np.einsum('ij,ikj->ik', u, u[nbr]), -1.0, 1.0))
    phi_t = phi.phi(t)
    phi_mid = phi.phi(t - dt / 2.0)
    n_s = n_sphere
    rows, cols, weights = [], [], []

    def node(i, j):
        return 1 + i * n_s + j

    for j in range(n_s):
        rows.append(0)
        cols.append(node(0, j))
        weights.append(t[0])
    for i in range(len(t)):
        for j in range(n_s):
            for kk in range(k):
                rows.append(node(i, j))
                cols.append(node(i, nbr[j, kk]))
                weights.append(phi_t[i] * angle[j, kk])
            if i + 1 < len(t):
                rows.append(node(i, j))
                cols.append(node(i + 1, j))
                weights.append(dt)
                for kk in range(k):
                    rows.append(node(i, j))
                    cols.append(node(i + 1, nbr[j, kk]))
                    weights.append(math.hypot(dt, phi_mid[i + 1] * angle[j, kk]))
    n = 1 + len(t) * n_s
    graph = sparse.coo_matrix((weights, (rows, cols)), shape=(n, n)).tocsr()
    D = csgraph.shortest_path(graph, directed=False)
    D = 0.5 * (D + D.T)
    coords = np.column_stack([np.concatenate([[0.0], np.repeat(t, n_s)]),
                              np.vstack([np.zeros((1, 3)), np.tile(u, (len(t), 1))])])
    return WarpedSample(phi, t, u, SampledSpace(D, points=coords, check_triangle=0))


def shell_boundaries(phi: WarpedProfile, r: float, horizon: float, grid_step: float) -> List[float]:
    """s_0 = 0, s_n = first grid t with φ(t) ≥ 10·2ⁿr, truncated at the horizon."""
    t = np.arange(0, int(math.floor(horizon / grid_step)) + 1) * grid_step
    values = phi.phi(t)
    bounds = [0.0]
    n = 1
    while True:
        hit = np.where(values >= 10.0 * 2 ** n * r)[0]
        if hit.size == 0:
            break
        bounds.append(float(t[hit[0]]))
        n += 1
    bounds.append(float(horizon))
    return bounds


def slab_partition(start: float, end: float, r: float) -> List[float]:
    """Split [start, end] into ⌈L/4r⌉ equal slabs, thickness in [2r, 4r] when L ≥ 2r."""
    L = end - start
    count = max(1, int(math.ceil(L / (4.0 * r) - 1e-12)))
    return list(np.linspace(start, end, count + 1))


def _patch_keys(u: np.ndarray, beta: float, shifted: bool) -> List[Tuple[int, int]]:
    theta = np.arccos(np.clip(u[:, 2], -1.0, 1.0))
    psi = np.mod(np.arctan2(u[:, 1], u[:, 0]), 2 * math.pi)
    n_bands = int(round(math.pi / beta))
    edges = (np.arange(n_bands) + 0.5) * beta if shifted else np.arange(1, n_bands) * beta
    edges = edges[(edges > 0) & (edges < math.pi)]
    bounds = np.concatenate([[0.0], edges, [math.pi]])
    band = np.searchsorted(edges, theta, side='right')
    last = len(bounds) - 2
    keys = []
    for th, ps, bd in zip(theta, psi, band):
        if bd == 0 or bd == last:
            keys.append((int(bd), 0))
            continue
        widest = max(math.sin(bounds[bd]), math.sin(bounds[bd + 1]))
        cells = max(1, int(math.ceil(2 * math.pi * widest / beta)))
        width = 2 * math.pi / cells
        offset = width / 2.0 if shifted else 0.0
        keys.append((int(bd), int(math.floor(np.mod(ps - offset, 2 * math.pi) / width)) % cells))
    return keys


@dataclass
class WarpedCover:
    """Verified cover of a warped sample with its shell and slab layout."""
    cover: Cover
    sample: WarpedSample
    shells: List[float]
    slabs: List[Tuple[float, float, int]]
    multiplicity: int
    max_diameter: float
    beta: Optional[float]

    def report(self) -> Dict[str, Any]:
        return {
            'shells': self.shells,
            'slabs': [list(s) for s in self.slabs],
            'members': len(self.cover),
            'multiplicity': self.multiplicity,
            'max_diameter': self.max_diameter,
            'patch_angle': self.beta,
        }


def build_cover(phi: WarpedProfile, r: float, horizon: float, dt: Optional[float] = None,
                n_sphere: int = 32, sample: Optional[WarpedSample] = None) -> WarpedCover:
    """
    Cover of the sampled warped space with r-multiplicity ≤ 4 and diameters ≤ 100r.

    Shell 0 ([0, s_1]) is cut into whole-sphere slabs; later shells cut slabs
    into latitude/longitude bricks, alternating between the pattern and its
    half-cell shift from slab to slab, with polar caps closing each pattern.
    The brick angle is chosen so that bricks on the outermost sampled
    sphere stay below 30r.

    Raises:
        WarpedDomainError: If r < 10
        CoverVerificationError: If the multiplicity or diameter check fails
    """
    if r < 10:
        raise WarpedDomainError(f"build_cover works in the regime r ≥ 10, got {r}")
    if sample is None:
        sample = warped_sample(phi, horizon, dt if dt is not None else r / 2.0, n_sphere)
    shells = shell_boundaries(phi, r, float(sample.t[-1]), min(r / 10.0, 1.0))
    # a shell thinner than 2r is merged into its neighbour
    merged = [shells[0]]
    for s in shells[1:-1]:
        if s - merged[-1] >= 2.0 * r:
            merged.append(s)
    if shells[-1] - merged[-1] < 2.0 * r and len(merged) > 1:
        merged.pop()
    merged.append(shells[-1])

    phi_out = float(phi.phi(sample.t[-1])[0])
    n_bands = max(1, int(math.ceil(math.pi * phi_out / (30.0 * r))))
    beta = math.pi / n_bands
    keys_plain = _patch_keys(sample.sphere, beta, False)
    keys_shift = _patch_keys(sample.sphere, beta, True)

    pt = sample.point_t
    slabs: List[Tuple[float, float, int]] = []
    members: List[List[int]] = []
    parity = 0
    for n, (lo, hi) in enumerate(zip(merged, merged[1:])):
        cuts = slab_partition(lo, hi, r)
        for a, b in zip(cuts, cuts[1:]):
            last = b >= merged[-1] - 1e-12
            mask = (pt >= a) & ((pt <= b) if last else (pt < b))
            idx = np.where(mask)[0]
            if idx.size == 0:
                continue
            slabs.append((float(a), float(b), n))
            if n == 0:
                members.append(idx.tolist())
                continue
            keys = keys_shift if parity else keys_plain
            parity ^= 1
            groups: Dict[Tuple[int, int], List[int]] = {}
            for p in idx:
                groups.setdefault(keys[(p - 1) % len(sample.sphere)], []).append(int(p))
            members.extend(groups[k] for k in sorted(groups))

    cover = Cover(sample.space, members)
    witness = r_multiplicity_witness(cover, r)
    diameters = [sample.space.diameter(m) for m in cover.members]
    worst = int(np.argmax(diameters))
    if witness['multiplicity'] > 4:
        raise CoverVerificationError(
            f"r-multiplicity {witness['multiplicity']} > 4 at sample point {witness['center']}", witness)
    if diameters[worst] > 100.0 * r:
        raise CoverVerificationError(
            f"Member {worst} has diameter {diameters[worst]:.4g} > 100r",
            {'member': worst, 'diameter': diameters[worst]})
    logger.info("Warped cover: %d members, multiplicity %d, max diameter %.4g",
                len(cover), witness['multiplicity'], diameters[worst])
    return WarpedCover(cover, sample, merged, slabs, witness['multiplicity'],
                       float(diameters[worst]), beta if len(merged) > 2 else None)


# ---------------------------------------------------------------------------
# Decay pipeline
# ---------------------------------------------------------------------------

def quadratic_decay_profile(m: int = 3, diameter_factor: float = 100.0,
                            constants: Optional[PairingConstants] = None,
                            grid: Optional[Sequence[float]] = None) -> Dict[str, Any]:
    """
    Decay function for proportional 𝔇(r) = 100r and ℜ(r) = r (flat ℝ³ scale).

    Returns:
        Dictionary with the controls 'R', 'D', 'G', 'F' and the quadratic fit
    """
    pc = constants if constants is not None else PairingConstants(1.0, 1.0, 1.0, 1.0, 1.0)
    R = Linear(1.0)
    D = Linear(diameter_factor)
    G = decay_G(R, D, m, pc)
    F = decay_F(G)
    r = np.geomspace(1e2, 1e6, 41) if grid is None else np.asarray(grid, dtype=float)
    fit = proportional_decay_fit(F, r)
    return {'R': R, 'D': D, 'G': G, 'F': F, 'fit': fit, 'grid': r}
