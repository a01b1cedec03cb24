"""
Simplicial Complex Module

Finite abstract simplicial complexes carrying the standard simplicial metric
(ℓ¹ inside simplices, shortest paths across them, infinity between
components), barycentric subdivisions, skeleta, the X₁/X₂ region tests and
the collar homotopy S_{1/3} → S_{1/2}.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Tuple, Optional, Any, Iterable, Sequence, FrozenSet

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import dijkstra

from utils.validation import PreconditionError, ValidationError


logger = logging.getLogger(__name__)

INFINITY = math.inf
WEIGHT_TOL = 1e-12
MAX_MESH_NODES = 2_000_000


class SimplicialError(Exception):
    """Base exception for simplicial module errors."""
    pass


class SimplicialDomainError(SimplicialError, PreconditionError):
    """Raised when points or arguments fall outside an operation's domain."""
    pass


class ComplexFormatError(SimplicialError, ValidationError):
    """Raised when a complex or point document is malformed."""
    pass


class SimplicialComplex:
    """Finite abstract simplicial complex given by its maximal simplices.

    Attributes:
        n_vertices: Number of vertices (indexed 0..n-1)
        maximal_simplices: Sorted tuples of vertex indices, none contained in another
        dimension: max |σ| − 1
    """

    def __init__(self, n_vertices: int, maximal_simplices: Iterable[Iterable[int]]):
        if isinstance(n_vertices, bool) or int(n_vertices) != n_vertices or n_vertices < 0:
            raise ComplexFormatError(f"Vertex count must be a non-negative integer, got {n_vertices!r}")
        self.n_vertices = int(n_vertices)

        simplices = []
        seen = set()
        for raw in maximal_simplices:
            raw = [int(v) for v in raw]
            s = frozenset(raw)
            if len(s) == 0:
                raise ComplexFormatError("Empty simplex in maximal list")
            if len(s) != len(raw):
                raise ComplexFormatError(f"Repeated vertex in simplex {raw}")
            if min(s) < 0 or max(s) >= self.n_vertices:
                raise ComplexFormatError(f"Simplex {sorted(s)} uses a vertex outside 0..{self.n_vertices - 1}")
            if s in seen:
                raise ComplexFormatError(f"Duplicate maximal simplex {sorted(s)}")
            seen.add(s)
            simplices.append(s)

        # faces of other listed simplices are implied
        maximal = [s for s in simplices if not any(s < t for t in simplices)]
        covered = set().union(*maximal) if maximal else set()
        for v in range(self.n_vertices):
            if v not in covered:
                maximal.append(frozenset({v}))
        self._maximal = sorted(maximal, key=lambda s: (len(s), sorted(s)))
        self.maximal_simplices = [tuple(sorted(s)) for s in self._maximal]
        self.dimension = max((len(s) - 1 for s in self._maximal), default=-1)

    def __repr__(self) -> str:
        return f"SimplicialComplex(n_vertices={self.n_vertices}, dim={self.dimension}, maximal={len(self._maximal)})"

    def faces(self) -> List[FrozenSet[int]]:
        """All nonempty faces, ordered by dimension then lexicographically."""
        result = set()
        for s in self._maximal:
            members = sorted(s)
            for k in range(1, len(members) + 1):
                for combo in itertools.combinations(members, k):
                    result.add(frozenset(combo))
        return sorted(result, key=lambda f: (len(f), sorted(f)))

    def contains_face(self, support: Iterable[int]) -> bool:
        s = frozenset(support)
        return any(s <= t for t in self._maximal)

    def carriers(self, support: Iterable[int]) -> List[Tuple[int, ...]]:
        """Maximal simplices containing the given vertex set."""
        s = frozenset(support)
        return [tuple(sorted(t)) for t in self._maximal if s <= t]

    def top_simplices(self) -> List[Tuple[int, ...]]:
        return [tuple(sorted(t)) for t in self._maximal if len(t) == self.dimension + 1]

    def skeleton(self, k: int) -> 'SimplicialComplex':
        """The k-skeleton."""
        if k < 0:
            raise SimplicialDomainError("Skeleton dimension must be non-negative")
        faces = [f for f in self.faces() if len(f) <= k + 1]
        return SimplicialComplex(self.n_vertices, [sorted(f) for f in faces])

    def to_dict(self) -> Dict[str, Any]:
        return {'vertices': self.n_vertices, 'maximal': [list(s) for s in self.maximal_simplices]}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'SimplicialComplex':
        if not isinstance(data, dict) or 'vertices' not in data or 'maximal' not in data:
            raise ComplexFormatError("Complex JSON needs 'vertices' and 'maximal'")
        return cls(data['vertices'], data['maximal'])


class SimplicialPoint:
    """Point of a complex as a convex combination of vertices.

    Weights are renormalised on construction; zero weights are dropped.
    """

    def __init__(self, weights: Dict[int, float]):
        cleaned = {}
        for v, w in weights.items():
            w = float(w)
            if not math.isfinite(w) or w < -WEIGHT_TOL:
                raise SimplicialDomainError(f"Weight {w} at vertex {v} is not a valid barycentric weight")
            if w > WEIGHT_TOL:
                cleaned[int(v)] = w
        total = sum(cleaned.values())
        if total <= 0:
            raise SimplicialDomainError("A simplicial point needs positive total weight")
        if abs(total - 1.0) > 1e-6:
            logger.debug("Renormalising point weights with total %.12g", total)
        self.weights = {v: w / total for v, w in sorted(cleaned.items())}
        self.support = frozenset(self.weights)

    @classmethod
    def vertex(cls, v: int) -> 'SimplicialPoint':
        return cls({v: 1.0})

    @classmethod
    def barycenter(cls, simplex: Sequence[int]) -> 'SimplicialPoint':
        return cls({v: 1.0 for v in simplex})

    def coordinate(self, v: int) -> float:
        return self.weights.get(v, 0.0)

    def min_coefficient(self, simplex: Sequence[int]) -> float:
        """Smallest barycentric coordinate over the vertices of a carrying simplex."""
        return min(self.coordinate(v) for v in simplex)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SimplicialPoint):
            return NotImplemented
        keys = self.support | other.support
        return all(abs(self.coordinate(v) - other.coordinate(v)) <= 1e-12 for v in keys)

    def __hash__(self) -> int:
        return hash(tuple(sorted((v, round(w, 12)) for v, w in self.weights.items())))

    def __repr__(self) -> str:
        inner = ", ".join(f"{v}: {w:.6g}" for v, w in self.weights.items())
        return f"SimplicialPoint({{{inner}}})"

    def to_dict(self) -> Dict[str, float]:
        return {str(v): w for v, w in self.weights.items()}

    @classmethod
    def from_dict(cls, data: Dict[Any, float]) -> 'SimplicialPoint':
        try:
            return cls({int(k): float(v) for k, v in data.items()})
        except (TypeError, ValueError, AttributeError) as e:
            raise ComplexFormatError(f"Malformed point JSON: {e}")


@dataclass(frozen=True)
class RegionSpec:
    """Region of a complex defined by the minimal barycentric coordinate.

    kind is 'X1', 'X2' or 'S_alpha'; alpha is used only by 'S_alpha'.
    """
    kind: str
    m: int
    alpha: float = 0.0

    def __post_init__(self):
        if self.kind not in ('X1', 'X2', 'S_alpha'):
            raise SimplicialDomainError(f"Unknown region kind {self.kind!r}")
        if self.m < 0:
            raise SimplicialDomainError("Region dimension must be non-negative")

    @property
    def threshold(self) -> float:
        if self.kind == 'X1':
            return 1.0 / (3 * (self.m + 1))
        if self.kind == 'X2':
            return 1.0 / (4 * (self.m + 1))
        return self.alpha / (self.m + 1)


def l1_distance_same_simplex(x: SimplicialPoint, y: SimplicialPoint,
                             complex_: Optional[SimplicialComplex] = None) -> float:
    """
    Standard simplicial metric inside one simplex: Σ_j |t_j − t'_j|.

    Args:
        x, y: Points whose supports lie in a common simplex
        complex_: When given, the common simplex is checked

    Raises:
        SimplicialDomainError: If no simplex of complex_ carries both points
    """
    if complex_ is not None and not complex_.contains_face(x.support | y.support):
        raise SimplicialDomainError(f"{x} and {y} do not lie in a common simplex")
    keys = x.support | y.support
    return float(sum(abs(x.coordinate(v) - y.coordinate(v)) for v in keys))


def _compositions(total: int, parts: int):
    """All tuples of `parts` non-negative integers summing to `total`."""
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


class _MeshGraph:
    """Barycentric lattice of every maximal simplex, glued along shared faces."""

    def __init__(self, X: SimplicialComplex, eps: float):
        self.n = max(1, int(math.ceil(2.0 / eps)))
        self.index: Dict[Tuple[Tuple[int, int], ...], int] = {}
        self.rows: List[int] = []
        self.cols: List[int] = []
        self.vals: List[float] = []
        step = 2.0 / self.n

        estimate = sum(math.comb(self.n + len(s) - 1, len(s) - 1) for s in X.maximal_simplices)
        if estimate > MAX_MESH_NODES:
            raise SimplicialDomainError(
                f"Mesh ε={eps} needs about {estimate} nodes; use a coarser mesh")

        for simplex in X.maximal_simplices:
            k = len(simplex)
            for comp in _compositions(self.n, k):
                a = self._node(simplex, comp)
                # lattice neighbours: move one unit of mass from vertex i to vertex j
                for i in range(k):
                    if comp[i] == 0:
                        continue
                    for j in range(k):
                        if j == i:
                            continue
                        moved = list(comp)
                        moved[i] -= 1
                        moved[j] += 1
                        b = self._node(simplex, moved)
                        if a < b:
                            self._edge(a, b, step)

    def _key(self, simplex, comp):
        return tuple((v, c) for v, c in zip(simplex, comp) if c > 0)

    def _node(self, simplex, comp) -> int:
        key = self._key(simplex, comp)
        if key not in self.index:
            self.index[key] = len(self.index)
        return self.index[key]

    def _edge(self, a: int, b: int, w: float) -> None:
        self.rows.append(a)
        self.cols.append(b)
        self.vals.append(w)

    def lattice_points(self, simplex: Sequence[int]):
        for comp in _compositions(self.n, len(simplex)):
            point = SimplicialPoint({v: c / self.n for v, c in zip(simplex, comp) if c > 0})
            yield self.index[self._key(simplex, comp)], point

    def add_point(self, X: SimplicialComplex, x: SimplicialPoint) -> int:
        node = len(self.index)
        self.index[(('point', node),)] = node
        for simplex in X.carriers(x.support):
            for other, point in self.lattice_points(simplex):
                self._edge(node, other, l1_distance_same_simplex(x, point))
        return node

    def matrix(self) -> sparse.csr_matrix:
        size = len(self.index)
        return sparse.coo_matrix((self.vals, (self.rows, self.cols)), shape=(size, size)).tocsr()


def distance(X: SimplicialComplex, x: SimplicialPoint, y: SimplicialPoint,
             eps: float) -> float:
    """
    Approximate standard simplicial distance by shortest paths on a mesh graph.

    Nodes are the barycentric lattice of mesh ε in every maximal simplex plus
    x and y; edges join lattice neighbours, and x, y to every lattice point of
    their carriers, weighted by the ℓ¹ distance. When x and y share a simplex
    the direct edge is included, so the result is exact there.

    Args:
        X: Complex
        x, y: Points of X
        eps: Mesh size (ℓ¹ distance between lattice neighbours is ≤ ε)

    Returns:
        Distance, or INFINITY for points in different components

    Raises:
        SimplicialDomainError: If eps ≤ 0 or a point is not carried by X
    """
    if not (eps > 0):
        raise SimplicialDomainError(f"Mesh ε must be positive, got {eps}")
    for p in (x, y):
        if not X.contains_face(p.support):
            raise SimplicialDomainError(f"{p} is not a point of the complex")
    if x == y:
        return 0.0

    graph = _MeshGraph(X, eps)
    a = graph.add_point(X, x)
    b = graph.add_point(X, y)
    if X.contains_face(x.support | y.support):
        graph._edge(a, b, l1_distance_same_simplex(x, y))
    dist = dijkstra(graph.matrix(), directed=False, indices=a)
    value = float(dist[b])
    logger.debug("distance on %d mesh nodes: %.6g", len(graph.index), value)
    return INFINITY if math.isinf(value) else value


def distance_matrix(X: SimplicialComplex, points: Sequence[SimplicialPoint],
                    eps: float) -> np.ndarray:
    """Pairwise approximate distances, one Dijkstra run per point on a shared mesh."""
    if not (eps > 0):
        raise SimplicialDomainError(f"Mesh ε must be positive, got {eps}")
    graph = _MeshGraph(X, eps)
    nodes = [graph.add_point(X, p) for p in points]
    for i, j in itertools.combinations(range(len(points)), 2):
        if X.contains_face(points[i].support | points[j].support):
            graph._edge(nodes[i], nodes[j], l1_distance_same_simplex(points[i], points[j]))
    dist = dijkstra(graph.matrix(), directed=False, indices=nodes)
    result = dist[:, nodes]
    np.fill_diagonal(result, 0.0)
    return np.minimum(result, result.T)


def barycentric_subdivision(X: SimplicialComplex) -> Tuple[SimplicialComplex, List[FrozenSet[int]]]:
    """
    First barycentric subdivision.

    Returns:
        (subdivided complex, faces) where vertex i of the subdivision is the
        barycenter of faces[i]
    """
    faces = X.faces()
    position = {f: i for i, f in enumerate(faces)}
    maximal = []
    for simplex in X.maximal_simplices:
        for order in itertools.permutations(simplex):
            chain = [position[frozenset(order[:k + 1])] for k in range(len(order))]
            maximal.append(chain)
    return SimplicialComplex(len(faces), maximal), faces


def to_subdivision(x: SimplicialPoint, faces: List[FrozenSet[int]]) -> SimplicialPoint:
    """Coordinates of a point of X in its barycentric subdivision."""
    position = {f: i for i, f in enumerate(faces)}
    ordered = sorted(x.weights.items(), key=lambda item: (-item[1], item[0]))
    weights: Dict[int, float] = {}
    for k in range(len(ordered)):
        gap = ordered[k][1] - (ordered[k + 1][1] if k + 1 < len(ordered) else 0.0)
        if gap > WEIGHT_TOL:
            face = frozenset(v for v, _ in ordered[:k + 1])
            weights[position[face]] = gap * (k + 1)
    return SimplicialPoint(weights)


def from_subdivision(z: SimplicialPoint, faces: List[FrozenSet[int]]) -> SimplicialPoint:
    """Point of X represented by a point of its barycentric subdivision."""
    weights: Dict[int, float] = {}
    for idx, w in z.weights.items():
        face = faces[idx]
        for v in face:
            weights[v] = weights.get(v, 0.0) + w / len(face)
    return SimplicialPoint(weights)


def region_min_coefficient(x: SimplicialPoint, m: int) -> float:
    """Minimal coordinate in a carrying m-simplex; missing coordinates count as 0."""
    if len(x.support) < m + 1:
        return 0.0
    return min(x.weights.values())


def region_membership(x: SimplicialPoint, region: RegionSpec) -> bool:
    """
    Evaluate the min-coefficient predicate of X₁, X₂ or S_α.

    X₁: min ≤ 1/(3(m+1)); X₂: min ≥ 1/(4(m+1)); S_α: min = α/(m+1) (to 1e-9).
    """
    if len(x.support) > region.m + 1:
        raise SimplicialDomainError(f"{x} is not carried by an {region.m}-simplex")
    t = region_min_coefficient(x, region.m)
    if region.kind == 'X1':
        return t <= region.threshold + 1e-12
    if region.kind == 'X2':
        return t >= region.threshold - 1e-12
    return abs(t - region.threshold) <= 1e-9


def collar_homotopy(x: SimplicialPoint, lam: float, m: int) -> SimplicialPoint:
    """
    Deform S_{1/3} onto S_{1/2}: H(x, λ) = b + (1 − λ/4)(x − b), b the barycenter.

    Args:
        x: Point on S_{1/3} of its carrying m-simplex
        lam: λ ∈ [0, 1]
        m: Dimension of the carrying simplex

    Raises:
        SimplicialDomainError: If x is not on S_{1/3} or λ ∉ [0, 1]
    """
    if not (0.0 <= lam <= 1.0):
        raise SimplicialDomainError(f"λ must lie in [0, 1], got {lam}")
    if len(x.support) != m + 1 or abs(min(x.weights.values()) - 1.0 / (3 * (m + 1))) > 1e-9:
        raise SimplicialDomainError(f"{x} is not on S_1/3 of an {m}-simplex")
    b = 1.0 / (m + 1)
    factor = 1.0 - lam / 4.0
    return SimplicialPoint({v: b + factor * (w - b) for v, w in x.weights.items()})


def random_pure_complex(m: int, n_simplices: int, rng: np.random.Generator) -> SimplicialComplex:
    """
    Random connected pure m-dimensional complex grown by gluing simplices
    along random faces of already placed ones.
    """
    if m < 0 or n_simplices < 1:
        raise SimplicialDomainError("random_pure_complex needs m ≥ 0 and n_simplices ≥ 1")
    simplices = [list(range(m + 1))]
    n_vertices = m + 1
    for _ in range(n_simplices - 1):
        base = simplices[int(rng.integers(len(simplices)))]
        shared = int(rng.integers(1, m + 1)) if m > 0 else 0
        kept = sorted(rng.choice(base, size=shared, replace=False).tolist()) if shared else []
        new = list(range(n_vertices, n_vertices + (m + 1 - shared)))
        n_vertices += len(new)
        simplices.append(kept + new)
    return SimplicialComplex(n_vertices, simplices)


def random_point(simplex: Sequence[int], rng: np.random.Generator) -> SimplicialPoint:
    """Uniform random point of a simplex (Dirichlet(1, ..., 1))."""
    w = rng.dirichlet(np.ones(len(simplex)))
    return SimplicialPoint({v: float(t) for v, t in zip(simplex, w)})
