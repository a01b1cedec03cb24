"""
Covers Module

Covers of finite sampled metric spaces: r-enlargements, r-multiplicity,
nerve complexes and the partition-of-unity map f_r into the nerve, with
measured Lipschitz and coboundedness diagnostics.
"""

import logging
import math
from typing import Dict, List, Tuple, Optional, Any, Sequence, FrozenSet

import numpy as np
import pandas as pd
from scipy.spatial.distance import cdist

from modules.simplicial import SimplicialComplex, SimplicialPoint, distance_matrix
from utils.validation import PreconditionError, ValidationError, check_measured_bound


logger = logging.getLogger(__name__)


class CoversError(Exception):
    """Base exception for cover errors."""
    pass


class SampleError(CoversError, ValidationError):
    """Raised when a sample or distance matrix is malformed."""
    pass


class CoverError(CoversError, PreconditionError):
    """Raised when a cover does not cover the sample or has empty members."""
    pass


class LebesgueError(CoversError, PreconditionError):
    """Raised when f_r is undefined because no member contains a point deeply enough."""
    pass


class SampledSpace:
    """Finite metric space given by points and/or a distance matrix.

    Points in different components sit at distance +inf.

    Attributes:
        points: Optional (n, k) coordinate array
        dist: (n, n) symmetric distance matrix
    """

    def __init__(self, dist: np.ndarray, points: Optional[np.ndarray] = None,
                 check_triangle: int = 200, seed: int = 0):
        D = np.asarray(dist, dtype=float)
        if D.ndim != 2 or D.shape[0] != D.shape[1]:
            raise SampleError(f"Distance matrix must be square, got shape {D.shape}")
        if np.any(np.isnan(D)) or np.any(D < 0):
            raise SampleError("Distances must be non-negative numbers")
        if not np.allclose(np.diag(D), 0.0, atol=1e-12):
            raise SampleError("Distance matrix must vanish on the diagonal")
        if not np.allclose(D, D.T, atol=1e-12):
            raise SampleError("Distance matrix must be symmetric")
        self.dist = D
        self.points = None if points is None else np.asarray(points, dtype=float)
        self.n = D.shape[0]
        if check_triangle and self.n >= 3:
            self._spot_check_triangle(check_triangle, seed)

    @classmethod
    def from_points(cls, points: np.ndarray, **kwargs) -> 'SampledSpace':
        """Euclidean sample."""
        P = np.asarray(points, dtype=float)
        if P.ndim == 1:
            P = P.reshape(-1, 1)
        return cls(cdist(P, P), points=P, **kwargs)

    @classmethod
    def from_csv(cls, path: str, distance_matrix_csv: bool = False) -> 'SampledSpace':
        """One point per row, or a precomputed distance matrix."""
        frame = pd.read_csv(path, header=None)
        values = frame.to_numpy(dtype=float)
        if distance_matrix_csv:
            return cls(values)
        return cls.from_points(values)

    def _spot_check_triangle(self, trials: int, seed: int) -> None:
        rng = np.random.default_rng(seed)
        idx = rng.integers(0, self.n, size=(trials, 3))
        i, j, k = idx[:, 0], idx[:, 1], idx[:, 2]
        with np.errstate(invalid='ignore'):
            excess = np.nan_to_num(self.dist[i, k] - self.dist[i, j] - self.dist[j, k],
                                   nan=0.0, posinf=np.inf, neginf=0.0)
        worst = int(np.argmax(excess))
        scale = float(self.dist[np.isfinite(self.dist)].max())
        if excess[worst] > 1e-9 * max(1.0, scale):
            logger.warning("Triangle inequality fails on sampled triple %s by %.3g",
                           tuple(int(v) for v in idx[worst]), excess[worst])

    def ball(self, p: int, r: float, closed: bool = True) -> np.ndarray:
        row = self.dist[p]
        return np.where(row <= r if closed else row < r)[0]

    def diameter(self, subset: Sequence[int]) -> float:
        idx = np.asarray(sorted(subset), dtype=int)
        if idx.size == 0:
            return 0.0
        return float(self.dist[np.ix_(idx, idx)].max())


class Cover:
    """Indexed family of nonempty point sets covering a sample.

    Attributes:
        space: The sampled space
        members: List of frozensets of point indices
        enlarged_by: Enlargement radius (0 for a raw cover)
        base_members: Members before enlargement, when known
    """

    def __init__(self, space: SampledSpace, members: Sequence[Sequence[int]],
                 enlarged_by: float = 0.0,
                 base_members: Optional[Sequence[Sequence[int]]] = None):
        self.space = space
        self.members: List[FrozenSet[int]] = [frozenset(int(i) for i in m) for m in members]
        self.enlarged_by = float(enlarged_by)
        self.base_members = None if base_members is None else [frozenset(m) for m in base_members]
        for k, m in enumerate(self.members):
            if not m:
                raise CoverError(f"Cover member {k} is empty")
            if min(m) < 0 or max(m) >= space.n:
                raise CoverError(f"Cover member {k} uses an index outside the sample")
        covered = set().union(*self.members) if self.members else set()
        missing = sorted(set(range(space.n)) - covered)
        if missing:
            raise CoverError(f"Points {missing[:10]} are not covered")

    def __len__(self) -> int:
        return len(self.members)

    def membership_matrix(self) -> np.ndarray:
        """Boolean (members × points) incidence."""
        M = np.zeros((len(self.members), self.space.n), dtype=bool)
        for k, m in enumerate(self.members):
            M[k, sorted(m)] = True
        return M

    def distance_to_members(self) -> np.ndarray:
        """(members × points) array of d(p, U_k)."""
        out = np.empty((len(self.members), self.space.n))
        for k, m in enumerate(self.members):
            out[k] = self.space.dist[sorted(m)].min(axis=0)
        return out

    def max_member_diameter(self, base: bool = True) -> float:
        members = self.base_members if (base and self.base_members is not None) else self.members
        return max(self.space.diameter(m) for m in members)

    def to_dict(self) -> Dict[str, Any]:
        return {'members': [sorted(m) for m in self.members], 'enlarged_by': self.enlarged_by}

    @classmethod
    def from_dict(cls, space: SampledSpace, data: Dict[str, Any]) -> 'Cover':
        if 'members' not in data:
            raise SampleError("Cover JSON needs 'members'")
        return cls(space, data['members'], data.get('enlarged_by', 0.0))


def enlarge(c: Cover, r: float) -> Cover:
    """
    Replace every member by its open r-neighbourhood B(U, r) within the sample.

    Args:
        c: Cover
        r: Radius (> 0)

    Returns:
        Enlarged cover remembering the members it was built from
    """
    if not (r > 0):
        raise CoverError(f"Enlargement radius must be positive, got {r}")
    near = c.distance_to_members() < r
    members = [np.where(row)[0].tolist() for row in near]
    base = c.base_members if c.base_members is not None else c.members
    return Cover(c.space, members, enlarged_by=c.enlarged_by + r, base_members=base)


def r_multiplicity(c: Cover, r: float) -> int:
    """
    Largest number of members meeting a closed ball B(p, r), p a sample point.

    Balls are centred at sample points only, so this is a lower bound for
    the multiplicity over the underlying space.
    """
    if r < 0:
        raise CoverError(f"Multiplicity radius must be non-negative, got {r}")
    meets = c.distance_to_members() <= r
    return int(meets.sum(axis=0).max())


def r_multiplicity_witness(c: Cover, r: float) -> Dict[str, Any]:
    """Multiplicity together with a centre attaining it and the members met."""
    meets = c.distance_to_members() <= r
    counts = meets.sum(axis=0)
    p = int(np.argmax(counts))
    return {'multiplicity': int(counts[p]), 'center': p,
            'members': np.where(meets[:, p])[0].tolist()}


def nerve(c: Cover) -> SimplicialComplex:
    """
    Nerve: one vertex per member, a simplex for every set of members with a
    common sample point.
    """
    incidence = c.membership_matrix()
    simplices = {tuple(np.where(incidence[:, p])[0].tolist()) for p in range(c.space.n)}
    return SimplicialComplex(len(c.members), sorted(simplices))


def _complement_distances(c: Cover) -> np.ndarray:
    """
    (members × points) array of d(p, X − U_k).

    A member covering the whole sample has an empty complement; it gets the
    enlargement radius when there is one and otherwise the sample diameter,
    which every finite d(p, X − U) is bounded by. A one-point sample has
    diameter 0 and gets 1, where only the normalised weights of f_r matter.
    """
    incidence = c.membership_matrix()
    out = np.zeros(incidence.shape)
    finite = c.space.dist[np.isfinite(c.space.dist)]
    diameter = float(finite.max()) if finite.size else 0.0
    whole = c.enlarged_by if c.enlarged_by > 0 else (diameter if diameter > 0 else 1.0)
    for k in range(len(c.members)):
        outside = np.where(~incidence[k])[0]
        if outside.size == 0:
            out[k] = whole
        else:
            out[k] = c.space.dist[outside].min(axis=0)
    return out


def lebesgue_number(c: Cover) -> float:
    """min over points of max over members of d(p, X − U)."""
    return float(_complement_distances(c).max(axis=0).min())


def f_r(c: Cover, x: int, weights: Optional[np.ndarray] = None) -> SimplicialPoint:
    """
    Partition-of-unity map into the nerve: weights d(x, X − U_i) normalised.

    Args:
        c: Cover with Lebesgue number at least the working radius
        x: Sample point index
        weights: Precomputed complement-distance array (members × points)

    Returns:
        Point of nerve(c) supported on the members containing x

    Raises:
        LebesgueError: If every weight vanishes at x
    """
    W = _complement_distances(c) if weights is None else weights
    column = W[:, x]
    total = float(column.sum())
    if total <= 0:
        raise LebesgueError(f"Point {x} has zero distance to every complement")
    return SimplicialPoint({k: float(w) for k, w in enumerate(column) if w > 0})


def f_r_images(c: Cover) -> List[SimplicialPoint]:
    W = _complement_distances(c)
    return [f_r(c, x, W) for x in range(c.space.n)]


def _sample_indices(n: int, max_points: Optional[int], seed: int) -> np.ndarray:
    if max_points is None or n <= max_points:
        return np.arange(n)
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(n, size=max_points, replace=False))


def lipschitz_report(c: Cover, r: float, eps: float = 0.05,
                     max_points: Optional[int] = 150, seed: int = 0) -> Dict[str, Any]:
    """
    Measure the Lipschitz constant of f_r against the (m+1)²/r bound.

    Nerve distances come from the mesh graph, which overestimates by at most
    2ε per simplex crossed; the corrected ratio subtracts a 2ε slack.

    Returns:
        Check record with 'measured', 'bound', 'slack', 'verdict' plus pair count
    """
    N = nerve(c)
    m = N.dimension
    idx = _sample_indices(c.space.n, max_points, seed)
    images = f_r_images(c)
    chosen = [images[i] for i in idx]
    D_N = distance_matrix(N, chosen, eps)
    D_X = c.space.dist[np.ix_(idx, idx)]
    mask = np.triu(D_X > 0, k=1)
    slack = 2.0 * eps
    raw = D_N[mask] / D_X[mask]
    corrected = np.maximum(D_N[mask] - slack, 0.0) / D_X[mask]
    bound = (m + 1) ** 2 / r
    measured = float(corrected.max()) if corrected.size else 0.0
    record = check_measured_bound('f_r_lipschitz', measured, bound)
    record.update({'raw_max_ratio': float(raw.max()) if raw.size else 0.0,
                   'mesh_slack': slack, 'pairs': int(mask.sum()), 'nerve_dimension': m})
    logger.info("f_r Lipschitz: measured %.4g vs bound %.4g over %d pairs",
                measured, bound, record['pairs'])
    return record


def cobounded_report(c: Cover, r: float, eps: float = 0.05,
                     max_points: Optional[int] = 150, seed: int = 0) -> Dict[str, Any]:
    """
    Check d_X(x, y) ≤ R·d_N(f_r(x), f_r(y)) + 2(R + 2r) on sampled pairs,
    R the largest diameter of the unenlarged members.
    """
    N = nerve(c)
    idx = _sample_indices(c.space.n, max_points, seed)
    images = f_r_images(c)
    D_N = distance_matrix(N, [images[i] for i in idx], eps)
    D_X = c.space.dist[np.ix_(idx, idx)]
    R = c.max_member_diameter(base=True)
    finite = np.isfinite(D_N)
    excess = np.where(finite, D_X - (R * D_N + 2 * (R + 2 * r)), -np.inf)
    worst = np.unravel_index(int(np.argmax(excess)), excess.shape)
    record = check_measured_bound('f_r_cobounded', float(excess[worst]), 0.0)
    record.update({'R': R, 'witness_pair': [int(idx[worst[0]]), int(idx[worst[1]])]})
    return record


def grid_cover(space: SampledSpace, cell: float) -> Cover:
    """Partition a Euclidean sample into axis-aligned cells of side `cell`."""
    if space.points is None:
        raise SampleError("grid_cover needs point coordinates")
    if not (cell > 0):
        raise CoverError("Cell size must be positive")
    keys = np.floor(space.points / cell).astype(int)
    groups: Dict[Tuple[int, ...], List[int]] = {}
    for i, key in enumerate(map(tuple, keys)):
        groups.setdefault(key, []).append(i)
    return Cover(space, [groups[k] for k in sorted(groups)])


def interval_cover(space: SampledSpace, length: float, step: float) -> Cover:
    """Members {p : a ≤ x_p ≤ a + length} for a = x_min, x_min + step, ... on a 1-D sample."""
    if space.points is None or space.points.shape[1] != 1:
        raise SampleError("interval_cover needs a one-dimensional sample")
    if not (0 < step <= length):
        raise CoverError("interval_cover needs 0 < step ≤ length")
    x = space.points[:, 0]
    lo, hi = float(x.min()), float(x.max())
    members = []
    n_steps = max(1, int(math.ceil((hi - lo - length) / step)) + 1) if hi - lo > length else 1
    for k in range(n_steps):
        a = lo + k * step
        member = np.where((x >= a - 1e-12) & (x <= a + length + 1e-12))[0].tolist()
        if member:
            members.append(member)
    return Cover(space, members)
