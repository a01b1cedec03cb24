"""
Lipschitz Representative Module

Extension operators that make restriction maps on simplicial complexes
controlled surjections, the deformation retractions of the X₁/X₂
decomposition, the skeleton bi-Lipschitz comparison, and a representative
improvement pipeline producing low-level projections in a fixed K₀ class.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Tuple, Optional, Any, Sequence, Callable

import numpy as np
from scipy.spatial import cKDTree

from modules.simplicial import (
    SimplicialComplex, SimplicialPoint, RegionSpec,
    barycentric_subdivision, distance, distance_matrix, region_membership,
    random_point, _compositions
)
from modules.covers import SampledSpace
from modules.matrix_ktheory import FilteredMatrixMap, SpectralGapError, lipschitz_level, bott_values
from modules.lipschitz_homotopy import (
    close_projection_homotopy, conjugating_unitary, _theta_stack, _stack,
    CLOSE_PROJECTION_GAP
)
from utils.validation import PreconditionError, check_measured_bound


logger = logging.getLogger(__name__)

TOL = 1e-12
DEFAULT_MESH = 0.25


class LipschitzRepError(Exception):
    """Base exception for Lipschitz representative constructions."""
    pass


class GeometryError(LipschitzRepError, PreconditionError):
    """Raised when a sample point cannot be placed in the required region."""
    pass


class SimplicialFunction:
    """Matrix-valued function on a simplicial complex.

    Attributes:
        complex: SimplicialComplex the function lives on
        size: Matrix size n
        points: Sample points used for measurement
        plus_part: Value at infinity
        declared_level: Known Lipschitz constant, if any
    """

    def __init__(self, complex_: SimplicialComplex, func: Callable[[SimplicialPoint], np.ndarray],
                 size: int, points: Sequence[SimplicialPoint] = (),
                 plus_part: Optional[np.ndarray] = None, declared_level: Optional[float] = None):
        self.complex = complex_
        self._func = func
        self.size = size
        self.points = list(points)
        self.plus_part = (np.zeros((size, size), dtype=complex) if plus_part is None
                          else np.asarray(plus_part, dtype=complex))
        self.declared_level = declared_level

    @classmethod
    def from_samples(cls, complex_: SimplicialComplex, points: Sequence[SimplicialPoint],
                     values: np.ndarray, **kwargs) -> 'SimplicialFunction':
        """Function known only at sample points."""
        values = np.asarray(values, dtype=complex)
        table = {p: v for p, v in zip(points, values)}

        def lookup(x: SimplicialPoint) -> np.ndarray:
            if x not in table:
                raise GeometryError(f"{x} is not a sample point of this function")
            return table[x]

        return cls(complex_, lookup, values.shape[-1], points, **kwargs)

    def evaluate(self, x: SimplicialPoint) -> np.ndarray:
        value = np.asarray(self._func(x), dtype=complex)
        if value.shape != (self.size, self.size) or not np.all(np.isfinite(value)):
            raise LipschitzRepError(f"Function value at {x} is malformed")
        return value

    __call__ = evaluate

    def values(self, points: Optional[Sequence[SimplicialPoint]] = None) -> np.ndarray:
        pts = self.points if points is None else points
        return np.array([self.evaluate(p) for p in pts])

    def sup_norm(self, points: Optional[Sequence[SimplicialPoint]] = None) -> float:
        vals = self.values(points)
        return float(np.linalg.norm(vals, ord=2, axis=(1, 2)).max()) if len(vals) else 0.0

    def to_filtered_map(self, points: Optional[Sequence[SimplicialPoint]] = None,
                        eps: float = DEFAULT_MESH) -> FilteredMatrixMap:
        pts = self.points if points is None else list(points)
        D = distance_matrix(self.complex, pts, eps)
        return FilteredMatrixMap(SampledSpace(D, check_triangle=0), self.values(pts), self.plus_part)

    def measured_level(self, points: Optional[Sequence[SimplicialPoint]] = None,
                       eps: float = DEFAULT_MESH) -> float:
        return lipschitz_level(self.to_filtered_map(points, eps))

    def restrict(self, points: Sequence[SimplicialPoint]) -> 'SimplicialFunction':
        return SimplicialFunction.from_samples(self.complex, points, self.values(points),
                                               plus_part=self.plus_part)


# ---------------------------------------------------------------------------
# Region sampling
# ---------------------------------------------------------------------------

def sample_region(X: SimplicialComplex, region: RegionSpec, count: int,
                  rng: np.random.Generator, max_tries: int = 100000) -> List[SimplicialPoint]:
    """Random points of top simplices lying in a region (rejection sampling)."""
    tops = X.top_simplices()
    if not tops:
        raise GeometryError("Complex has no top-dimensional simplices")
    out = []
    for _ in range(max_tries):
        if len(out) >= count:
            break
        x = random_point(tops[int(rng.integers(len(tops)))], rng)
        if region_membership(x, region):
            out.append(x)
    if len(out) < count:
        raise GeometryError(f"Could not sample {count} points of region {region.kind}")
    return out


def lattice_sample(X: SimplicialComplex, resolution: int) -> List[SimplicialPoint]:
    """Barycentric lattice points of spacing 1/resolution in every maximal simplex, deduplicated."""
    seen = {}
    for simplex in X.maximal_simplices:
        for comp in _compositions(resolution, len(simplex)):
            p = SimplicialPoint({v: c for v, c in zip(simplex, comp) if c > 0})
            seen.setdefault(p, p)
    return list(seen.values())


# ---------------------------------------------------------------------------
# Extension over X₂
# ---------------------------------------------------------------------------

def collar_parameters(y: SimplicialPoint, m: int) -> Tuple[str, Optional[float], Optional[SimplicialPoint]]:
    """
    Classify a point of X₂ and invert the collar.

    Returns:
        ('inner', None, None) on X₁∩X₂, ('collar', λ, x) when y = H(x, λ)
        with x ∈ S_{1/3}, or ('outside', None, None) beyond S_{1/2}

    Raises:
        GeometryError: If y is not in X₂ of a top simplex
    """
    if len(y.support) != m + 1:
        raise GeometryError(f"{y} does not lie in the interior of an {m}-simplex")
    mu = min(y.weights.values())
    lo, mid, hi = 1.0 / (4 * (m + 1)), 1.0 / (3 * (m + 1)), 1.0 / (2 * (m + 1))
    if mu < lo - TOL:
        raise GeometryError(f"{y} has minimal coordinate {mu:.6g} < 1/(4(m+1)); not in X₂")
    if mu <= mid + TOL:
        return 'inner', None, None
    if mu >= hi - TOL:
        return 'outside', None, None
    lam = 6.0 * (m + 1) * mu - 2.0
    b = 1.0 / (m + 1)
    scale = 1.0 - lam / 4.0
    x = SimplicialPoint({v: b + (w - b) / scale for v, w in y.weights.items()})
    return 'collar', lam, x


def extend_over_X2(f: SimplicialFunction, m: int,
                   points: Sequence[SimplicialPoint] = ()) -> SimplicialFunction:
    """
    Extend f from X₁∩X₂ to X₂: g = f on X₁∩X₂, g(H(x, λ)) = (1 − λ)f(x) on the
    collar, 0 beyond S_{1/2}.  The control is F(L) = 9m(m+1)L + 12(m+1).
    """
    zero = np.zeros((f.size, f.size), dtype=complex)

    def g(y: SimplicialPoint) -> np.ndarray:
        kind, lam, x = collar_parameters(y, m)
        if kind == 'inner':
            return f.evaluate(y)
        if kind == 'collar':
            return (1.0 - lam) * f.evaluate(x)
        return zero

    declared = None if f.declared_level is None else x2_control(m, f.declared_level)
    return SimplicialFunction(f.complex, g, f.size, points, f.plus_part, declared)


def x2_control(m: int, level: float) -> float:
    return 9.0 * m * (m + 1) * level + 12.0 * (m + 1)


# ---------------------------------------------------------------------------
# Barycentric extension
# ---------------------------------------------------------------------------

@dataclass
class BarycentricPair:
    """Subdivision X₁ of X with the subcomplex Y₁ generated by Y and its complement Z₁."""
    X: SimplicialComplex
    Y: SimplicialComplex
    subdivision: SimplicialComplex
    faces: List[frozenset]
    y_vertices: frozenset
    z_vertices: frozenset

    @classmethod
    def build(cls, X: SimplicialComplex, Y: SimplicialComplex) -> 'BarycentricPair':
        X1, faces = barycentric_subdivision(X)
        y_vertices = frozenset(i for i, face in enumerate(faces) if Y.contains_face(face))
        z_vertices = frozenset(range(len(faces))) - y_vertices
        if not z_vertices:
            raise GeometryError("Y covers X; the complementary subcomplex Z₁ is empty")
        return cls(X, Y, X1, faces, y_vertices, z_vertices)

    def decompose(self, x: SimplicialPoint) -> Tuple[float, Optional[SimplicialPoint], Optional[SimplicialPoint]]:
        """x = λy + (1 − λ)z with y ∈ Y₁, z ∈ Z₁."""
        if not self.subdivision.contains_face(x.support):
            raise GeometryError(f"{x} is not a point of the subdivision")
        y_part = {v: w for v, w in x.weights.items() if v in self.y_vertices}
        z_part = {v: w for v, w in x.weights.items() if v in self.z_vertices}
        lam = sum(y_part.values())
        y = SimplicialPoint(y_part) if lam > TOL else None
        z = SimplicialPoint(z_part) if lam < 1.0 - TOL else None
        return lam, y, z

    def in_Y1(self, x: SimplicialPoint) -> bool:
        return x.support <= self.y_vertices


def extend_barycentric(f: SimplicialFunction, pair: BarycentricPair, m: int,
                       points: Sequence[SimplicialPoint] = ()) -> SimplicialFunction:
    """
    Extend f from Y₁ to the subdivision: g(x) = (2λ − 1)f(y) for
    x = λy + (1 − λ)z with λ ≥ 1/2, and 0 otherwise.  The control is
    F(L) = 6(m+1)L + 2.
    """
    zero = np.zeros((f.size, f.size), dtype=complex)

    def g(x: SimplicialPoint) -> np.ndarray:
        lam, y, _ = pair.decompose(x)
        if y is None or lam < 0.5:
            return zero
        if lam >= 1.0 - TOL:
            return f.evaluate(y)
        return (2.0 * lam - 1.0) * f.evaluate(y)

    declared = None if f.declared_level is None else barycentric_control(m, f.declared_level)
    return SimplicialFunction(pair.subdivision, g, f.size, points, f.plus_part, declared)


def barycentric_control(m: int, level: float) -> float:
    return 6.0 * (m + 1) * level + 2.0


def extension_report(g: SimplicialFunction, f_level: float, f_norm: float, control: str, m: int,
                     points: Sequence[SimplicialPoint], eps: float = DEFAULT_MESH) -> Dict[str, Any]:
    """Measured level of an extension against its control at the input level, slack 5ε."""
    if control == 'x2':
        bound = 9.0 * m * (m + 1) * f_level + 12.0 * (m + 1) * f_norm
    elif control == 'barycentric':
        bound = 6.0 * (m + 1) * f_level + 2.0 * f_norm
    else:
        raise LipschitzRepError(f"Unknown control {control!r}")
    return check_measured_bound(f'extension_{control}', g.measured_level(points, eps), bound, 5 * eps)


# ---------------------------------------------------------------------------
# Retractions
# ---------------------------------------------------------------------------

@dataclass
class RegionRetraction:
    """Radial deformation retraction of a region of an m-dimensional complex.

    kind 'X2' retracts X₂ onto the barycenters S₁, 'X12' retracts X₁∩X₂ onto
    S_{1/3}, and 'X1' retracts X₁ onto the (m−1)-skeleton.
    """
    X: SimplicialComplex
    kind: str
    m: int

    def __post_init__(self):
        if self.kind not in ('X1', 'X2', 'X12'):
            raise LipschitzRepError(f"Unknown retraction {self.kind!r}")

    @property
    def declared_constant(self) -> Optional[float]:
        if self.kind == 'X2':
            return 1.0 + 1.0 / (3 * (self.m + 1))
        return None

    def _check(self, x: SimplicialPoint) -> None:
        if self.kind == 'X1':
            region = RegionSpec('X1', self.m)
        else:
            region = RegionSpec('X2', self.m)
        if not region_membership(x, region):
            raise GeometryError(f"{x} is not in the source region of the {self.kind} retraction")
        if self.kind == 'X12' and not region_membership(x, RegionSpec('X1', self.m)):
            raise GeometryError(f"{x} is not in X₁∩X₂")

    def _factor(self, x: SimplicialPoint) -> float:
        b = 1.0 / (self.m + 1)
        mu = min(x.weights.values())
        if self.kind == 'X2':
            return 0.0
        target = 1.0 / (3 * (self.m + 1)) if self.kind == 'X12' else 0.0
        return (b - target) / (b - mu)

    def homotopy(self, x: SimplicialPoint, s: float) -> SimplicialPoint:
        """H(x, s) = b + (1 + s(c − 1))(x − b) with c the final radial factor."""
        self._check(x)
        if not (0.0 <= s <= 1.0):
            raise LipschitzRepError(f"Homotopy parameter must lie in [0, 1], got {s}")
        if self.kind == 'X1' and len(x.support) < self.m + 1:
            return x
        b = 1.0 / (self.m + 1)
        c = 1.0 + s * (self._factor(x) - 1.0)
        return SimplicialPoint({v: max(b + c * (w - b), 0.0) for v, w in x.weights.items()})

    def __call__(self, x: SimplicialPoint) -> SimplicialPoint:
        return self.homotopy(x, 1.0)

    def measure(self, points: Sequence[SimplicialPoint], s_grid: Sequence[float] = (0.25, 0.5, 0.75, 1.0),
                eps: float = DEFAULT_MESH) -> Dict[str, Any]:
        """Largest d(H(x,s), H(x',s))/d(x, x') over sampled pairs and s."""
        base = distance_matrix(self.X, points, eps)
        worst = 0.0
        for s in s_grid:
            moved = [self.homotopy(x, s) for x in points]
            D = distance_matrix(self.X, moved, eps)
            mask = (base > 0) & np.isfinite(base) & np.isfinite(D)
            if mask.any():
                worst = max(worst, float((D[mask] / base[mask]).max()))
        declared = self.declared_constant
        return {
            'kind': self.kind,
            'measured': worst,
            'declared': declared,
            'verdict': 'N/A' if declared is None else ('PASS' if worst <= declared + 5 * eps else 'FAIL'),
        }


def retract_regions(X: SimplicialComplex, which: str, m: Optional[int] = None) -> RegionRetraction:
    """Retraction for 'X1' (onto the skeleton), 'X2' (onto barycenters) or 'X12' (onto S_{1/3})."""
    return RegionRetraction(X, which, X.dimension if m is None else m)


def skeleton_bilipschitz_constants(X: SimplicialComplex, rng: np.random.Generator,
                                   n_pairs: int = 20, eps: float = 0.1) -> Dict[str, Any]:
    """
    Compare d_X with the intrinsic metric of the (m−1)-skeleton on pairs
    lying in one m-simplex but different (m−1)-faces.

    Returns:
        Dictionary with measured 'c1' (min ratio), 'c2' (max ratio) and the
        declared constants 1 and 3/2
    """
    m = X.dimension
    if m < 1:
        raise GeometryError("Skeleton comparison needs dimension ≥ 1")
    skeleton = X.skeleton(m - 1)
    tops = X.top_simplices()
    ratios = []
    for _ in range(n_pairs):
        simplex = tops[int(rng.integers(len(tops)))]
        drop_a, drop_b = rng.choice(len(simplex), size=2, replace=False)
        face_a = [v for i, v in enumerate(simplex) if i != drop_a]
        face_b = [v for i, v in enumerate(simplex) if i != drop_b]
        x, y = random_point(face_a, rng), random_point(face_b, rng)
        d_x = distance(X, x, y, eps)
        if d_x <= 0:
            continue
        ratios.append(distance(skeleton, x, y, eps) / d_x)
    if not ratios:
        raise GeometryError("No usable skeleton pairs were sampled")
    return {
        'c1': float(min(ratios)),
        'c2': float(max(ratios)),
        'declared_c1': 1.0,
        'declared_c2': 1.5,
        'pairs': len(ratios),
    }


# ---------------------------------------------------------------------------
# Sphere models
# ---------------------------------------------------------------------------

def octahedron_sphere() -> SimplicialComplex:
    """Boundary of the octahedron, vertices ±e₁ = 0/1, ±e₂ = 2/3, ±e₃ = 4/5."""
    triangles = [[a, b, c] for a in (0, 1) for b in (2, 3) for c in (4, 5)]
    return SimplicialComplex(6, triangles)


def midpoint_subdivision(X: SimplicialComplex) -> SimplicialComplex:
    """Split every triangle into four through its edge midpoints."""
    if X.dimension != 2:
        raise GeometryError("Midpoint subdivision is defined for 2-dimensional complexes")
    index = {}
    next_vertex = X.n_vertices

    def mid(a: int, b: int) -> int:
        nonlocal next_vertex
        key = frozenset((a, b))
        if key not in index:
            index[key] = next_vertex
            next_vertex += 1
        return index[key]

    triangles = []
    for a, b, c in X.maximal_simplices:
        ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
        triangles.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]])
    return SimplicialComplex(next_vertex, triangles)


def _link_cycle(X: SimplicialComplex, vertex: int) -> List[int]:
    edges = [tuple(v for v in t if v != vertex) for t in X.maximal_simplices if vertex in t]
    if not edges:
        raise GeometryError(f"Vertex {vertex} has an empty star")
    adjacency: Dict[int, List[int]] = {}
    for a, b in edges:
        adjacency.setdefault(a, []).append(b)
        adjacency.setdefault(b, []).append(a)
    if any(len(v) != 2 for v in adjacency.values()):
        raise GeometryError(f"Link of vertex {vertex} is not a cycle")
    start = min(adjacency)
    cycle, prev = [start], None
    while True:
        nxt = [w for w in adjacency[cycle[-1]] if w != prev]
        step = min(nxt) if prev is None else nxt[0]
        if step == start:
            break
        prev = cycle[-1]
        cycle.append(step)
    return cycle


def star_bott_projection(X: SimplicialComplex, vertex: int = 0) -> SimplicialFunction:
    """
    Bott-type projection supported in the closed star of a vertex of a surface.

    θ = π(1 − t_v) from the vertex coordinate and φ from the position along
    the link cycle; p = ½(1 + n·σ) and p = e₂₂ outside the open star.
    """
    cycle = _link_cycle(X, vertex)
    k = len(cycle)
    pos = {w: i for i, w in enumerate(cycle)}
    e22 = np.diag([0.0, 1.0]).astype(complex)

    def p(x: SimplicialPoint) -> np.ndarray:
        t_v = x.coordinate(vertex)
        if t_v <= 0.0:
            return e22
        rest = {w: c for w, c in x.weights.items() if w != vertex}
        total = sum(rest.values())
        if total <= TOL:
            phi = 0.0
        else:
            ordered = sorted(rest, key=lambda w: pos[w])
            if len(ordered) == 1:
                phi = 2 * math.pi * pos[ordered[0]] / k
            else:
                a, b = ordered
                if (pos[a] + 1) % k != pos[b]:
                    a, b = b, a
                phi = 2 * math.pi * (pos[a] + rest[b] / total) / k
        # Euclidean Bott formula at polar radius 1 − t_v, so θ = π(1 − t_v)
        r = 1.0 - t_v
        return bott_values(np.array([[r * math.cos(phi), r * math.sin(phi)]]), 1.0)[0]

    return SimplicialFunction(X, p, 2, plus_part=e22)


# ---------------------------------------------------------------------------
# Representative improvement
# ---------------------------------------------------------------------------

OCTAHEDRON_VERTICES = np.array([[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 1.0, 0.0],
                                [0.0, -1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, -1.0]])
ROUND_KINDS = ('smoothing', 'retraction', 'collar')
CERTIFICATE_TOL = 1e-8


def sphere_chern_number(f: SimplicialFunction, resolution: int) -> float:
    """
    Chern number of a projection field on the octahedral sphere.

    Every face is cut into resolution² triangles of its barycentric lattice,
    each oriented by the outward normal of the octahedron in ℝ³. The phases
    of the overlap-determinant products around the triangles add up to 2π·c.
    """
    X = f.complex
    if X.n_vertices != 6 or len(X.maximal_simplices) != 8 or X.dimension != 2:
        raise GeometryError("sphere_chern_number needs the octahedral sphere")
    if resolution < 1:
        raise GeometryError(f"Resolution must be positive, got {resolution}")
    k = resolution
    bases: Dict[SimplicialPoint, np.ndarray] = {}

    def basis(x: SimplicialPoint) -> np.ndarray:
        if x not in bases:
            w, V = np.linalg.eigh(f.evaluate(x))
            bases[x] = V[:, w > 0.5]
        return bases[x]

    up = [((i, j), (i + 1, j), (i, j + 1)) for i in range(k) for j in range(k - i)]
    down = [((i + 1, j), (i + 1, j + 1), (i, j + 1)) for i in range(k - 1) for j in range(k - 1 - i)]
    total = 0.0
    for face in X.maximal_simplices:
        corners = OCTAHEDRON_VERTICES[list(face)]
        for triangle in up + down:
            comps = [(a, b, k - a - b) for a, b in triangle]
            points = [SimplicialPoint({v: c for v, c in zip(face, comp) if c > 0}) for comp in comps]
            xyz = np.array(comps, dtype=float) @ corners / k
            if np.cross(xyz[1] - xyz[0], xyz[2] - xyz[0]) @ xyz.mean(axis=0) < 0:
                points = points[::-1]
            B = [basis(x) for x in points]
            loop = (np.linalg.det(B[0].conj().T @ B[1]) * np.linalg.det(B[1].conj().T @ B[2])
                    * np.linalg.det(B[2].conj().T @ B[0]))
            total += float(np.angle(loop))
    return total / (2.0 * math.pi)


def _nearest_sample(pts: Sequence[SimplicialPoint]) -> Callable[[SimplicialPoint], int]:
    """Index of the sample nearest to a point in barycentric coordinates."""
    vertices = sorted({v for x in pts for v in x.support})
    column = {v: i for i, v in enumerate(vertices)}

    def embed(x: SimplicialPoint) -> np.ndarray:
        row = np.zeros(len(vertices))
        for v, w in x.weights.items():
            if v in column:
                row[column[v]] = w
        return row

    tree = cKDTree(np.array([embed(x) for x in pts]))
    return lambda x: int(tree.query(embed(x))[1])


def improve_representative(p: SimplicialFunction, budget: int = 8, radius: float = 1.0,
                           eps: float = DEFAULT_MESH,
                           points: Optional[Sequence[SimplicialPoint]] = None) -> Dict[str, Any]:
    """
    Lower the measured Lipschitz level of a projection without leaving its K₀ class.

    Attempts cycle through three kinds of round, each spending one unit of
    budget and carrying its own weight α:

    - smoothing averages p over sample neighbourhoods of the given radius;
    - retraction pulls p back along the radial retraction of X₂ run to time α;
    - collar replaces p on X₂ by the collar extension of p − p(∞) from
      X₁∩X₂.

    The proposal is mixed into p with weight α and projected back with Θ.  A
    round is kept when the new projection is within 1/12 of the old one, has a
    smaller level, and conjugating_unitary along close_projection_homotopy
    certifies p_new = u p u* to CERTIFICATE_TOL.  α of a kind halves when its
    round is rejected.

    Returns:
        Dictionary with 'projection', 'improved', 'level_before', 'level_after',
        'rank', 'certificates', 'rounds' and the per-attempt 'history'
    """
    pts = list(p.points if points is None else points)
    if not pts:
        raise LipschitzRepError("improve_representative needs sample points")
    current = p.to_filtered_map(pts, eps)
    stack = _stack(current)
    if float(np.abs(stack @ stack - stack).max()) > 1e-8:
        raise LipschitzRepError("Input is not a projection at the sample points")
    weights = np.maximum(0.0, 1.0 - current.base.dist / radius)
    weights /= weights.sum(axis=1, keepdims=True)
    m = p.complex.dimension
    x2 = [i for i, x in enumerate(pts)
          if len(x.support) == m + 1 and region_membership(x, RegionSpec('X2', m))]
    nearest = _nearest_sample(pts)
    retraction = retract_regions(p.complex, 'X2', m)
    plus = current.plus_part

    def smoothing(values: np.ndarray, alpha: float) -> np.ndarray:
        return (1.0 - alpha) * values + alpha * np.einsum('xy,yij->xij', weights, values)

    def pullback(values: np.ndarray, alpha: float) -> np.ndarray:
        out = values.copy()
        for i in x2:
            out[i] = values[nearest(retraction.homotopy(pts[i], alpha))]
        return out

    def collar(values: np.ndarray, alpha: float) -> np.ndarray:
        relative = SimplicialFunction(p.complex, lambda x: values[nearest(x)] - plus, p.size)
        extended = extend_over_X2(relative, m)
        out = values.copy()
        for i in x2:
            out[i] = plus + extended.evaluate(pts[i])
        return (1.0 - alpha) * values + alpha * out

    proposals = {'smoothing': smoothing, 'retraction': pullback, 'collar': collar}
    rank = int(round(float(np.trace(current.values[0]).real)))
    level_before = lipschitz_level(current)
    level = level_before
    alphas = {kind: 1.0 for kind in ROUND_KINDS}
    certificates, history = [], []
    rounds = 0

    for attempt in range(budget):
        kind = ROUND_KINDS[attempt % len(ROUND_KINDS)]
        alpha = alphas[kind]
        entry = {'kind': kind, 'alpha': alpha, 'accepted': False}
        history.append(entry)
        if kind != 'smoothing' and not x2:
            entry['reason'] = 'empty_region'
            continue
        proposal = proposals[kind](current.values, alpha)
        try:
            projected = _theta_stack(np.concatenate([proposal, plus[None]]))
        except SpectralGapError:
            entry['reason'] = 'spectral_gap'
            alphas[kind] *= 0.5
            continue
        candidate = FilteredMatrixMap(current.base, projected[:-1], projected[-1])
        gap = float(np.linalg.norm(candidate.values - current.values, ord=2, axis=(1, 2)).max())
        new_level = lipschitz_level(candidate)
        if gap > CLOSE_PROJECTION_GAP:
            entry['reason'] = 'gap'
        elif new_level >= level - 1e-12:
            entry['reason'] = 'level'
        else:
            cert = conjugating_unitary(close_projection_homotopy(current, candidate, steps=11))
            entry['certificate'] = float(cert['residual'])
            if cert['residual'] > CERTIFICATE_TOL:
                entry['reason'] = 'certificate'
                logger.warning("improve_representative: %s round rejected, residual %.3g",
                               kind, cert['residual'])
        if 'reason' in entry:
            alphas[kind] *= 0.5
            continue
        entry['accepted'] = True
        certificates.append(entry['certificate'])
        current, level = candidate, new_level
        rounds += 1

    improved = rounds > 0
    if not improved:
        logger.info("improve_representative: no improvement within budget %d", budget)
        return {'projection': p, 'improved': False, 'level_before': level_before,
                'level_after': level_before, 'rank': rank, 'certificates': [], 'rounds': 0,
                'history': history}
    out = SimplicialFunction.from_samples(p.complex, pts, current.values, plus_part=current.plus_part)
    traces = np.trace(current.values, axis1=1, axis2=2).real
    logger.info("improve_representative: level %.4g -> %.4g in %d rounds", level_before, level, rounds)
    return {
        'projection': out,
        'improved': True,
        'level_before': level_before,
        'level_after': level,
        'rank': int(round(float(traces.mean()))),
        'certificates': certificates,
        'rounds': rounds,
        'history': history,
    }
