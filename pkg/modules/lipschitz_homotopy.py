"""
Lipschitz Homotopy Module

Constructive matrix algorithms for Lipschitz-controlled K-theory: homotopies
between close projections and unitaries, stabilized homotopies along a coarse
chain, conjugating unitaries, unitary lifts through a controlled surjection
and the boundary map.  Every construction is returned together with the
measured constants that the corresponding estimate bounds.

Inputs are plain matrices or FilteredMatrixMap instances sharing one base;
the latter are processed pointwise with the plus part carried as an extra
point, and only they get filtration levels measured.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Tuple, Optional, Any, Sequence, Callable, Union

import numpy as np
from scipy import linalg

from modules.control_calculus import ControlFunction, Linear
from modules.covers import SampledSpace
from modules.matrix_ktheory import (
    FilteredMatrixMap, SpectralGapError, lipschitz_level, lattice_chern_number,
    DEFAULT_CONTOUR_NODES
)
from utils.validation import PreconditionError, check_measured_bound


logger = logging.getLogger(__name__)

Matrix = Union[np.ndarray, FilteredMatrixMap]

CLOSE_PROJECTION_GAP = 1.0 / 12.0
CLOSE_UNITARY_GAP = 1.0 / 6.0
CONJUGATION_SAMPLES = 191
CONJUGATION_GAP = 1.0 / 10.0
LIFT_SAMPLES = 56
LIFT_GAP = 1.0 / 5.0

PROJECTION_RATIO = 3.0
UNITARY_RATIO = 1.0
STABILIZED_PROJECTION_RATIO = 19.0
STABILIZED_UNITARY_RATIO = 11.0

LEVEL_FACTORS = {
    'close_projection': 3.0,
    'close_unitary': 3.0,
    'stabilized_projection': 3.0,
    'stabilized_unitary': 4.0,
    'conjugating_unitary': 1635.0,
    'identity_homotopy': 2087.0,
    'lift': 14.0,
    'boundary': 126.0,
}


class LipschitzHomotopyError(Exception):
    """Base exception for homotopy constructions."""
    pass


class HomotopyPreconditionError(LipschitzHomotopyError, PreconditionError):
    """Raised when inputs are too far apart or fail their class predicate."""
    pass


class LiftError(LipschitzHomotopyError, PreconditionError):
    """Raised when the surjection oracle cannot lift, or a lift path is too coarse."""
    pass


# ---------------------------------------------------------------------------
# Stacked representation
# ---------------------------------------------------------------------------

def _stack(x: Matrix) -> np.ndarray:
    if isinstance(x, FilteredMatrixMap):
        return np.concatenate([x.values, x.plus_part[None]], axis=0)
    arr = np.asarray(x, dtype=complex)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise HomotopyPreconditionError(f"Expected a square matrix, got shape {arr.shape}")
    return arr[None]


def _unstack(arr: np.ndarray, like: Matrix) -> Matrix:
    if isinstance(like, FilteredMatrixMap):
        return FilteredMatrixMap(like.base, arr[:-1], arr[-1])
    return arr[0]


def _norm(arr: np.ndarray) -> float:
    return float(np.linalg.norm(arr, ord=2, axis=(-2, -1)).max())


def _adjoint(arr: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(arr, -1, -2))


def _eye_like(arr: np.ndarray) -> np.ndarray:
    return np.broadcast_to(np.eye(arr.shape[-1], dtype=complex), arr.shape).copy()


def projection_defect(arr: np.ndarray) -> float:
    return _norm(arr @ arr - arr)


def unitary_defect(arr: np.ndarray) -> float:
    return _norm(_adjoint(arr) @ arr - _eye_like(arr))


def _theta_stack(A: np.ndarray, M: int = DEFAULT_CONTOUR_NODES) -> np.ndarray:
    defect = projection_defect(A)
    if defect >= 0.25:
        raise SpectralGapError(f"Idempotency defect {defect:.4g} ≥ 1/4 along the path")
    eye = _eye_like(A)
    result = np.zeros_like(A)
    for k in range(M):
        w = np.exp(2j * math.pi * k / M)
        result += 0.5 * w * np.linalg.solve((1.0 + 0.5 * w) * eye - A, eye)
    return result / M


def _log_near_one(w: np.ndarray, tol: float = 1e-16, max_terms: int = 400) -> np.ndarray:
    """Principal logarithm by the series of log(1 + y) for ‖y‖ < 1."""
    y = w - _eye_like(w)
    ny = _norm(y)
    if ny >= 1:
        raise HomotopyPreconditionError(f"Logarithm series needs ‖w − 1‖ < 1, got {ny:.4g}")
    result = np.zeros_like(w)
    power = np.array(y)
    for k in range(1, max_terms + 1):
        result += ((-1) ** (k + 1) / k) * power
        if ny ** (k + 1) / (k + 1) < tol:
            break
        power = power @ y
    return result


def _skew(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a - _adjoint(a))


def _expm(a: np.ndarray) -> np.ndarray:
    return linalg.expm(a)


def _inverse_sqrt(B: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(0.5 * (B + _adjoint(B)))
    if np.any(w <= 0):
        raise HomotopyPreconditionError("Inverse square root of a non-positive matrix")
    return (V * (w ** -0.5)[..., None, :]) @ _adjoint(V)


def _block_diag(blocks: Sequence[np.ndarray]) -> np.ndarray:
    """Block-diagonal stack from a list of (P, b, b) stacks."""
    P = blocks[0].shape[0]
    N = sum(b.shape[-1] for b in blocks)
    out = np.zeros((P, N, N), dtype=complex)
    offset = 0
    for b in blocks:
        size = b.shape[-1]
        out[:, offset:offset + size, offset:offset + size] = b
        offset += size
    return out


def _constant(matrix: np.ndarray, P: int) -> np.ndarray:
    return np.broadcast_to(np.asarray(matrix, dtype=complex), (P,) + matrix.shape).copy()


# ---------------------------------------------------------------------------
# Paths
# ---------------------------------------------------------------------------

def _concatenate(stages: Sequence[Tuple[Callable[[float], np.ndarray], float]]) -> Callable[[float], np.ndarray]:
    """Concatenate stage functions on [0, 1] with durations proportional to their weights."""
    weights = np.array([w for _, w in stages], dtype=float)
    bounds = np.concatenate([[0.0], np.cumsum(weights) / weights.sum()])

    def path(t: float) -> np.ndarray:
        t = min(max(float(t), 0.0), 1.0)
        k = int(np.searchsorted(bounds, t, side='right') - 1)
        k = min(k, len(stages) - 1)
        width = bounds[k + 1] - bounds[k]
        local = 0.0 if width == 0 else (t - bounds[k]) / width
        return stages[k][0](min(local, 1.0))

    return path


class FilteredPath:
    """Sampled homotopy of projections or unitaries.

    Attributes:
        kind: 'projection' or 'unitary'
        declared_ratio: Lipschitz constant in t promised by the construction
        declared_level: Filtration level promised for the samples (or None)
        padding: (k, l) sizes appended by stabilization
    """

    def __init__(self, func: Callable[[float], np.ndarray], like: Matrix, kind: str,
                 declared_ratio: Optional[float] = None, declared_level: Optional[float] = None,
                 n_samples: int = 201, padding: Tuple[int, int] = (0, 0)):
        if kind not in ('projection', 'unitary'):
            raise LipschitzHomotopyError(f"Unknown path kind {kind!r}")
        self._func = func
        self._like = like
        self.kind = kind
        self.declared_ratio = declared_ratio
        self.declared_level = declared_level
        self.n_samples = n_samples
        self.padding = padding
        self._cache: Optional[List[Tuple[float, np.ndarray]]] = None

    @classmethod
    def from_function(cls, func: Callable[[float], Matrix], kind: str, **kwargs) -> 'FilteredPath':
        """Wrap a user callable t ↦ matrix (or FilteredMatrixMap)."""
        like = func(0.0)
        return cls(lambda t: _stack(func(t)), like, kind, **kwargs)

    def stack_at(self, t: float) -> np.ndarray:
        return self._func(t)

    def __call__(self, t: float) -> Matrix:
        return _unstack(self._func(t), self._like)

    def _stacks(self) -> List[Tuple[float, np.ndarray]]:
        if self._cache is None:
            ts = np.linspace(0.0, 1.0, self.n_samples)
            self._cache = [(float(t), self._func(t)) for t in ts]
        return self._cache

    @property
    def samples(self) -> List[Tuple[float, Matrix]]:
        return [(t, _unstack(arr, self._like)) for t, arr in self._stacks()]

    @property
    def measured_lipschitz_in_t(self) -> float:
        stacks = self._stacks()
        ratios = [_norm(b - a) / (t1 - t0) for (t0, a), (t1, b) in zip(stacks, stacks[1:])]
        return float(max(ratios)) if ratios else 0.0

    def class_defect(self) -> float:
        defect = projection_defect if self.kind == 'projection' else unitary_defect
        return max(defect(arr) for _, arr in self._stacks())

    @property
    def is_filtered(self) -> bool:
        return isinstance(self._like, FilteredMatrixMap)

    def report(self) -> Dict[str, Any]:
        level = filtration_level_of_path(self)
        return {
            'kind': self.kind,
            'n_samples': self.n_samples,
            'padding': list(self.padding),
            'class_defect': self.class_defect(),
            'declared_ratio': self.declared_ratio,
            'measured_ratio': self.measured_lipschitz_in_t,
            'declared_level': self.declared_level,
            'measured_level': level if level is not None else 'N/A',
        }


def filtration_level_of_path(path: FilteredPath, every: int = 1) -> Optional[float]:
    """Largest Lipschitz level over the samples; None for plain matrices."""
    if not path.is_filtered:
        return None
    return max(lipschitz_level(value) for _, value in path.samples[::every])


def _level_of(*items: Matrix) -> Optional[float]:
    filtered = [x for x in items if isinstance(x, FilteredMatrixMap)]
    if not filtered:
        return None
    return max(lipschitz_level(x) for x in filtered)


def _scaled_level(factor: float, level: Optional[float]) -> Optional[float]:
    return None if level is None else factor * level


# ---------------------------------------------------------------------------
# Close homotopies
# ---------------------------------------------------------------------------

def close_projection_homotopy(p: Matrix, q: Matrix, steps: int = 101) -> FilteredPath:
    """
    h(t) = Θ((1 − t)p + tq) for projections with ‖p − q‖ ≤ 1/12.

    Raises:
        HomotopyPreconditionError: If the projections are too far apart
    """
    P, Q = _stack(p), _stack(q)
    if P.shape != Q.shape:
        raise HomotopyPreconditionError("Projections must have the same shape")
    gap = _norm(P - Q)
    if gap > CLOSE_PROJECTION_GAP + 1e-12:
        raise HomotopyPreconditionError(f"‖p − q‖ = {gap:.4g} exceeds 1/12")

    def h(t: float) -> np.ndarray:
        if t <= 0.0:
            return P.copy()
        if t >= 1.0:
            return Q.copy()
        return _theta_stack((1.0 - t) * P + t * Q)

    return FilteredPath(h, p, 'projection', PROJECTION_RATIO,
                        _scaled_level(LEVEL_FACTORS['close_projection'], _level_of(p, q)), steps)


def close_unitary_homotopy(u: Matrix, v: Matrix, steps: int = 101) -> FilteredPath:
    """
    h(t) = exp(t·log(vu*))·u for unitaries with ‖u − v‖ ≤ 1/6.
    """
    U, V = _stack(u), _stack(v)
    gap = _norm(U - V)
    if gap > CLOSE_UNITARY_GAP + 1e-12:
        raise HomotopyPreconditionError(f"‖u − v‖ = {gap:.4g} exceeds 1/6")
    a = _skew(_log_near_one(V @ _adjoint(U)))

    def h(t: float) -> np.ndarray:
        if t >= 1.0:
            return V.copy()
        return _expm(t * a) @ U

    return FilteredPath(h, u, 'unitary', UNITARY_RATIO,
                        _scaled_level(LEVEL_FACTORS['close_unitary'], _level_of(u, v)), steps)


# ---------------------------------------------------------------------------
# Stabilized homotopies
# ---------------------------------------------------------------------------

def _conjugation_stage(X: np.ndarray, G: np.ndarray) -> Callable[[float], np.ndarray]:
    """s ↦ W X W* with W = exp((π/2)s·G), G skew-Hermitian."""
    def stage(s: float) -> np.ndarray:
        W = _expm((0.5 * math.pi * s) * G)
        return W @ X @ _adjoint(W)
    return stage


def _pair_generator(P: int, N: int, block: int,
                    pairs: Sequence[Tuple[int, int, np.ndarray]]) -> np.ndarray:
    """G with G[a, b] = −M, G[b, a] = M for each (a, b, M) of block positions."""
    G = np.zeros((P, N, N), dtype=complex)
    for a, b, M in pairs:
        sa = slice(a * block, (a + 1) * block)
        sb = slice(b * block, (b + 1) * block)
        G[:, sa, sb] = -M
        G[:, sb, sa] = M
    return G


def _diagonal_swap_generator(P: int, N: int, source: Sequence[int], target: Sequence[int]) -> np.ndarray:
    """Rotation generator moving unit diagonal entries from `source` to `target` coordinates."""
    src, tgt = set(source), set(target)
    leaving = sorted(src - tgt)
    arriving = sorted(tgt - src)
    if len(leaving) != len(arriving):
        raise LipschitzHomotopyError("Diagonal patterns differ in rank")
    G = np.zeros((P, N, N), dtype=complex)
    for a, b in zip(leaving, arriving):
        G[:, b, a] = 1.0
        G[:, a, b] = -1.0
    return G


def _check_chain(chain: Sequence[np.ndarray], limit: float, label: str) -> None:
    for i, (a, b) in enumerate(zip(chain, chain[1:])):
        gap = _norm(a - b)
        if gap > limit + 1e-12:
            raise HomotopyPreconditionError(
                f"{label} chain gap at index {i}: ‖x_{i} − x_{i + 1}‖ = {gap:.4g} > {limit:.4g}")


def _pad(P: np.ndarray, size: int) -> np.ndarray:
    out = np.zeros(P.shape[:-2] + (size, size), dtype=complex)
    n = P.shape[-1]
    out[..., :n, :n] = P
    return out


def stabilized_projection_homotopy(p: Matrix, q: Matrix,
                                   chain: Optional[Sequence[Matrix]] = None,
                                   n_samples: int = 601) -> FilteredPath:
    """
    Homotopy from p ⊕ I_k ⊕ 0_l to q ⊕ I_k ⊕ 0_l built from a coarse chain.

    The chain p₀, …, p_m of j × j projections starts at p ⊕ 0 and ends at
    q ⊕ 0 with consecutive gaps ≤ 1/12.  With k = 2mj and l = 2mj + j − n the
    homotopy concatenates six stages:

        p ⊕ I_k ⊕ 0_l → p₀ ⊕ (I ⊕ 0)^{2m}                (coordinate rotation)
        → p₀ ⊕ (I − p₁) ⊕ p₁ ⊕ … ⊕ (I − p_m) ⊕ p_m ⊕ …   (rotation by p_i)
        → p₀ ⊕ (I − p₀) ⊕ p₁ ⊕ … ⊕ (I − p_{m−1}) ⊕ p_m   (Θ of close blocks)
        → I ⊕ 0 ⊕ … ⊕ I ⊕ 0 ⊕ p_m                       (rotation by I − p_i)
        → p_m ⊕ 0 ⊕ I ⊕ … ⊕ 0 ⊕ I                       (swap first and last)
        → q ⊕ I_k ⊕ 0_l                                  (coordinate rotation)

    Stage durations are proportional to their constants (π for rotations, 3
    for the Θ stage), so the measured t-ratio stays below 5π + 3 < 19.

    Raises:
        HomotopyPreconditionError: Naming the chain index whose gap is too large
    """
    Pp, Pq = _stack(p), _stack(q)
    n = Pp.shape[-1]
    if chain is None:
        chain = [p, q]
    stacks = [_stack(c) for c in chain]
    j = stacks[0].shape[-1]
    if j < n or any(s.shape != stacks[0].shape for s in stacks):
        raise HomotopyPreconditionError("Chain matrices must share a size at least that of p")
    if _norm(stacks[0] - _pad(Pp, j)) > 1e-10 or _norm(stacks[-1] - _pad(Pq, j)) > 1e-10:
        raise HomotopyPreconditionError("Chain must start at p ⊕ 0 and end at q ⊕ 0")
    if len(stacks) == 2 and _norm(stacks[0] - stacks[1]) <= 1e-12:
        stacks = stacks[:1]
    _check_chain(stacks, CLOSE_PROJECTION_GAP, 'projection')

    m = len(stacks) - 1
    k = 2 * m * j
    l = 2 * m * j + j - n
    N = n + k + l
    npts = Pp.shape[0]
    eye_j = _constant(np.eye(j), npts)
    zero_j = np.zeros((npts, j, j), dtype=complex)
    level = _level_of(p, q, *chain)
    declared_level = _scaled_level(LEVEL_FACTORS['stabilized_projection'], level)

    def padded(X: np.ndarray) -> np.ndarray:
        out = np.zeros((npts, N, N), dtype=complex)
        out[:, :n, :n] = X
        out[:, n:n + k, n:n + k] = np.eye(k)
        return out

    start, end = padded(Pp), padded(Pq)
    if m == 0:
        return FilteredPath(lambda t: start.copy(), p, 'projection', STABILIZED_PROJECTION_RATIO,
                            declared_level, n_samples, (k, l))

    def pairs_layout(first: np.ndarray, pairs: Sequence[Tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
        blocks = [first]
        for a, b in pairs:
            blocks.extend([a, b])
        return _block_diag(blocks)

    ones_padded = list(range(n, n + k))
    ones_layout = [c for i in range(1, 2 * m + 1) for c in range((2 * i - 1) * j, 2 * i * j)]
    X1 = pairs_layout(stacks[0], [(eye_j, zero_j)] * (2 * m))
    stage1 = _conjugation_stage(start, _diagonal_swap_generator(npts, N, ones_padded, ones_layout))

    G2 = _pair_generator(npts, N, j, [(2 * i - 1, 2 * i, stacks[i]) for i in range(1, m + 1)])
    stage2 = _conjugation_stage(X1, G2)
    X2 = pairs_layout(stacks[0], [(eye_j - stacks[i], stacks[i]) for i in range(1, m + 1)]
                      + [(eye_j, zero_j)] * m)

    X3 = pairs_layout(stacks[0], [(eye_j - stacks[i - 1], stacks[i]) for i in range(1, m + 1)]
                      + [(eye_j, zero_j)] * m)

    def stage3(s: float) -> np.ndarray:
        if s <= 0.0:
            return X2.copy()
        if s >= 1.0:
            return X3.copy()
        return _theta_stack((1.0 - s) * X2 + s * X3)

    G4 = -_pair_generator(npts, N, j, [(2 * i, 2 * i + 1, eye_j - stacks[i]) for i in range(m)])
    stage4 = _conjugation_stage(X3, G4)
    X4 = _block_diag([eye_j, zero_j] * m + [stacks[m]] + [eye_j, zero_j] * m)

    G5 = _pair_generator(npts, N, j, [(0, 2 * m, eye_j)])
    stage5 = _conjugation_stage(X4, G5)
    X5 = _block_diag([stacks[m]] + [zero_j, eye_j] * m + [eye_j, zero_j] * m)

    ones_after = [c for i in range(1, m + 1) for c in range(2 * i * j, (2 * i + 1) * j)]
    ones_after += [c for i in range(m + 1, 2 * m + 1) for c in range((2 * i - 1) * j, 2 * i * j)]
    stage6 = _conjugation_stage(X5, _diagonal_swap_generator(npts, N, ones_after, ones_padded))

    rot = math.pi
    func = _concatenate([(stage1, rot), (stage2, rot), (stage3, PROJECTION_RATIO),
                         (stage4, rot), (stage5, rot), (stage6, rot)])

    def path(t: float) -> np.ndarray:
        if t <= 0.0:
            return start.copy()
        if t >= 1.0:
            return end.copy()
        return func(t)

    like = p if not isinstance(p, FilteredMatrixMap) else FilteredMatrixMap(
        p.base, start[:-1], start[-1])
    logger.info("stabilized projection homotopy: chain length %d, padding (%d, %d)", m, k, l)
    return FilteredPath(path, like, 'projection', STABILIZED_PROJECTION_RATIO,
                        declared_level, n_samples, (k, l))


def _rotation(npts: int, N: int, block: int, a: int, b: int, theta: float) -> np.ndarray:
    G = _pair_generator(npts, N, block, [(a, b, np.eye(block))])
    return _expm(theta * G)


def stabilized_unitary_homotopy(u: Matrix, v: Matrix,
                                chain: Optional[Sequence[Matrix]] = None,
                                n_samples: int = 601) -> FilteredPath:
    """
    Homotopy from u ⊕ I_{2mn} to v ⊕ I_{2mn} through a chain u₀, …, u_m with
    gaps ≤ 1/6, concatenating

        u₀ ⊕ I → u₀ ⊕ u₁* ⊕ u₁ ⊕ … ⊕ u_m* ⊕ u_m         (rotations, π)
        → u₀ ⊕ u₀* ⊕ u₁ ⊕ u₁* ⊕ … ⊕ u_{m−1}* ⊕ u_m      (close homotopies, 1)
        → I ⊕ u_m                                       (rotations, π)
        → u_m ⊕ I                                       (swap, π)
    """
    if chain is None:
        chain = [u, v]
    stacks = [_stack(c) for c in chain]
    Pu, Pv = _stack(u), _stack(v)
    if _norm(stacks[0] - Pu) > 1e-10 or _norm(stacks[-1] - Pv) > 1e-10:
        raise HomotopyPreconditionError("Chain must start at u and end at v")
    if len(stacks) == 2 and _norm(stacks[0] - stacks[1]) <= 1e-12:
        stacks = stacks[:1]
    _check_chain(stacks, CLOSE_UNITARY_GAP, 'unitary')

    m = len(stacks) - 1
    n = Pu.shape[-1]
    npts = Pu.shape[0]
    N = n * (2 * m + 1)
    eye = _constant(np.eye(n), npts)
    level = _level_of(u, v, *chain)
    declared_level = _scaled_level(LEVEL_FACTORS['stabilized_unitary'], level)
    start = _block_diag([stacks[0]] + [eye] * (2 * m))
    end = _block_diag([stacks[m]] + [eye] * (2 * m))
    if m == 0:
        return FilteredPath(lambda t: start.copy(), u, 'unitary', STABILIZED_UNITARY_RATIO,
                            declared_level, n_samples, (2 * m * n, 0))

    def whitehead(w: np.ndarray, theta: float) -> np.ndarray:
        """diag(w*, 1) R(θ) diag(w, 1) R(θ)*: I at θ = 0, w* ⊕ w at θ = π/2."""
        R = _rotation(npts, 2 * n, n, 0, 1, theta)
        left = _block_diag([_adjoint(w), eye])
        right = _block_diag([w, eye])
        return left @ R @ right @ _adjoint(R)

    def stage1(s: float) -> np.ndarray:
        theta = 0.5 * math.pi * s
        return _block_diag([stacks[0]] + [whitehead(stacks[i], theta) for i in range(1, m + 1)])

    closes = [close_unitary_homotopy(_unstack(_adjoint(stacks[i]), u), _unstack(_adjoint(stacks[i - 1]), u))
              for i in range(1, m + 1)]

    def stage2(s: float) -> np.ndarray:
        blocks = [stacks[0]]
        for i in range(1, m + 1):
            blocks.extend([closes[i - 1].stack_at(s), stacks[i]])
        return _block_diag(blocks)

    def stage3(s: float) -> np.ndarray:
        theta = 0.5 * math.pi * (1.0 - s)
        blocks = [whitehead(_adjoint(stacks[i]), theta) for i in range(m)]
        return _block_diag(blocks + [stacks[m]])

    X3 = _block_diag([eye] * (2 * m) + [stacks[m]])

    def stage4(s: float) -> np.ndarray:
        R = _rotation(npts, N, n, 0, 2 * m, 0.5 * math.pi * s)
        return R @ X3 @ _adjoint(R)

    rot = math.pi
    func = _concatenate([(stage1, rot), (stage2, UNITARY_RATIO), (stage3, rot), (stage4, rot)])

    def path(t: float) -> np.ndarray:
        if t <= 0.0:
            return start.copy()
        if t >= 1.0:
            return end.copy()
        return func(t)

    like = u if not isinstance(u, FilteredMatrixMap) else FilteredMatrixMap(u.base, start[:-1], start[-1])
    return FilteredPath(path, like, 'unitary', STABILIZED_UNITARY_RATIO,
                        declared_level, n_samples, (2 * m * n, 0))


# ---------------------------------------------------------------------------
# Conjugating unitaries
# ---------------------------------------------------------------------------

def conjugating_unitary(path: FilteredPath, base_level: Optional[float] = None) -> Dict[str, Any]:
    """
    Unitary u with h(1) = u h(0) u* from a projection path sampled at 191 points.

    With p_j = h(j/190), z_j = 1 + (p_{j+1} − p_j)(2p_j − 1) and
    u_j = z_j (z_j* z_j)^{−1/2}, each u_j conjugates p_j to p_{j+1};
    u = u₁₈₉ ⋯ u₀.  The identity path t ↦ ∏ exp(t·log u_j) is returned too.

    Returns:
        Dictionary with 'u', 'factors', 'residual', 'level', 'declared_level',
        'identity_path'
    """
    if path.kind != 'projection':
        raise HomotopyPreconditionError("conjugating_unitary needs a projection path")
    samples = [path.stack_at(j / (CONJUGATION_SAMPLES - 1)) for j in range(CONJUGATION_SAMPLES)]
    _check_chain(samples, CONJUGATION_GAP, 'sampled projection')
    eye = _eye_like(samples[0])
    factors = []
    for p_j, p_next in zip(samples, samples[1:]):
        z = eye + (p_next - p_j) @ (2.0 * p_j - eye)
        factors.append(z @ _inverse_sqrt(_adjoint(z) @ z))
    u = eye.copy()
    for f in factors:
        u = f @ u
    residual = _norm(samples[-1] - u @ samples[0] @ _adjoint(u))
    logs = [_skew(_log_near_one(f)) for f in factors]

    def identity_path(t: float) -> np.ndarray:
        w = eye.copy()
        for a in logs:
            w = _expm(t * a) @ w
        return w

    like = path(0.0)
    u_out = _unstack(u, like)
    level = lipschitz_level(u_out) if isinstance(u_out, FilteredMatrixMap) else None
    logger.info("conjugating unitary: residual %.3g", residual)
    return {
        'u': u_out,
        'factors': [_unstack(f, like) for f in factors],
        'residual': residual,
        'level': level,
        'declared_level': _scaled_level(LEVEL_FACTORS['conjugating_unitary'], base_level),
        'identity_path': FilteredPath(identity_path, like, 'unitary', None,
                                      _scaled_level(LEVEL_FACTORS['identity_homotopy'], base_level),
                                      n_samples=41),
    }


# ---------------------------------------------------------------------------
# Controlled surjections and lifts
# ---------------------------------------------------------------------------

class ControlledSurjectionOracle:
    """Restriction of matrix functions on a sample to a subset, with a controlled lift.

    Attributes:
        space: Sample carrying A
        quotient_indices: Points of the subset carrying Q
        quotient_space: Sample of those points
        control: Declared F_l, with level(lift g) ≤ F_l(L(g)/‖g‖)·‖g‖
    """

    norm_factor = 2.0

    def __init__(self, space: SampledSpace, quotient_indices: Sequence[int],
                 control: ControlFunction):
        self.space = space
        self.quotient_indices = np.asarray(quotient_indices, dtype=int)
        if self.quotient_indices.size == 0:
            raise LiftError("Quotient subset is empty")
        sub = self.quotient_indices
        pts = None if space.points is None else space.points[sub]
        self.quotient_space = SampledSpace(space.dist[np.ix_(sub, sub)], points=pts, check_triangle=0)
        self.control = control

    def restrict(self, f: FilteredMatrixMap) -> FilteredMatrixMap:
        return FilteredMatrixMap(self.quotient_space, f.values[self.quotient_indices], f.plus_part)

    def _extend(self, values: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def lift(self, g: FilteredMatrixMap) -> FilteredMatrixMap:
        if g.base.n != self.quotient_space.n:
            raise LiftError("Map does not live on the quotient sample")
        lifted = FilteredMatrixMap(self.space, self._extend(g.values), g.plus_part)
        residual = float(np.abs(lifted.values[self.quotient_indices] - g.values).max())
        if residual > 1e-10:
            raise LiftError(f"Lift does not restrict to its input (residual {residual:.3g})")
        return lifted

    def check_lift(self, g: FilteredMatrixMap) -> Dict[str, Any]:
        """Measured norm factor and level of a lift against the declared bounds."""
        lifted = self.lift(g)
        norm_g = g.sup_norm()
        level_g = lipschitz_level(g)
        bound = self.control(level_g / norm_g) * norm_g if norm_g > 0 else 0.0
        return {
            'norm': check_measured_bound('lift_norm', lifted.sup_norm(), self.norm_factor * norm_g, 1e-12),
            'level': check_measured_bound('lift_level', lipschitz_level(lifted), bound, 1e-9),
        }

    def class_index(self, projection: FilteredMatrixMap, rank: int) -> Optional[int]:
        return None


class PointRestrictionOracle(ControlledSurjectionOracle):
    """Restriction to a single point with the constant extension."""

    def __init__(self, space: SampledSpace, point: int = 0):
        super().__init__(space, [point], Linear(1.0, 0.0))

    def _extend(self, values: np.ndarray) -> np.ndarray:
        return np.repeat(values[:1], self.space.n, axis=0)


def square_lattice(K: int, h: float = 1.0) -> Tuple[SampledSpace, np.ndarray]:
    """Sites of [−K..K]² with spacing h and the boundary sites in counter-clockwise order."""
    side = 2 * K + 1
    coords = (np.arange(side) - K) * h
    X, Y = np.meshgrid(coords, coords, indexing='ij')
    pts = np.column_stack([X.ravel(), Y.ravel()])
    R = K * h
    on_boundary = np.where(np.isclose(np.abs(pts).max(axis=1), R))[0]
    tau = np.array([_perimeter_position(pts[i], R) for i in on_boundary])
    order = on_boundary[np.argsort(tau, kind='stable')]
    return SampledSpace.from_points(pts, check_triangle=0), order


def _perimeter_position(point: np.ndarray, R: float) -> float:
    """Counter-clockwise arc length on the square of half-width R, starting at (R, −R)."""
    x, y = float(point[0]), float(point[1])
    if np.isclose(x, R) and not np.isclose(y, -R):
        return y + R
    if np.isclose(y, R):
        return 2 * R + (R - x)
    if np.isclose(x, -R):
        return 4 * R + (R - y)
    return (6 * R + (x + R)) % (8 * R)


class SquareBoundaryOracle(ControlledSurjectionOracle):
    """Restriction from the square lattice to its boundary loop, lifted by radial extension.

    A boundary function g extends to g̃(x) = ρ(x)·g(s(x)), where s(x) is the
    radial projection of x onto the boundary (interpolated along the loop)
    and ρ(x) = |x|_∞/R.
    """

    def __init__(self, K: int, h: float = 1.0):
        space, order = square_lattice(K, h)
        self.K, self.h, self.R = K, h, K * h
        self.side = 2 * K + 1
        super().__init__(space, order, Linear(4.0, 1.0 / self.R))
        self._weights = self._interpolation_weights()

    def _interpolation_weights(self) -> np.ndarray:
        pts = self.space.points
        B = self.quotient_indices.size
        W = np.zeros((self.space.n, B))
        for i, x in enumerate(pts):
            r = float(np.abs(x).max())
            if r == 0.0:
                continue
            s = x * (self.R / r)
            tau = _perimeter_position(s, self.R) / self.h
            k = int(math.floor(tau + 1e-12)) % B
            frac = tau - math.floor(tau + 1e-12)
            frac = 0.0 if frac < 1e-12 else frac
            rho = r / self.R
            W[i, k] += rho * (1.0 - frac)
            W[i, (k + 1) % B] += rho * frac
        return W

    def _extend(self, values: np.ndarray) -> np.ndarray:
        return np.einsum('pb,bij->pij', self._weights, values)

    def class_index(self, projection: FilteredMatrixMap, rank: int) -> int:
        return int(round(lattice_chern_number(projection.values, self.side)))


def winding_number(loop: Union[Sequence[complex], np.ndarray]) -> int:
    """Winding number of a closed loop of nonzero scalars (or unitaries, via det)."""
    arr = np.asarray(loop)
    if arr.ndim == 3:
        arr = np.linalg.det(arr)
    z = arr.astype(complex).ravel()
    if np.any(np.abs(z) < 1e-14):
        raise LipschitzHomotopyError("Loop passes through zero")
    steps = np.angle(np.roll(z, -1) / z)
    return int(round(float(steps.sum()) / (2 * math.pi)))


def lift_unitary(oracle: ControlledSurjectionOracle, path: FilteredPath) -> Dict[str, Any]:
    """
    Lift the endpoint of a unitary path from 1 in the quotient.

    With v_j = h(j/55), the logs log(v_{j+1}v_j*) are lifted through the
    oracle, skew-symmetrized, and u = exp(a₅₄)⋯exp(a₀).

    Raises:
        LiftError: If the path does not start at 1 or a step exceeds 1/5
    """
    if path.kind != 'unitary':
        raise LiftError("lift_unitary needs a unitary path")
    vs = [path(j / (LIFT_SAMPLES - 1)) for j in range(LIFT_SAMPLES)]
    if not all(isinstance(v, FilteredMatrixMap) for v in vs):
        raise LiftError("Lifting needs FilteredMatrixMap samples on the quotient")
    v0 = _stack(vs[0])
    if _norm(v0 - _eye_like(v0)) > 1e-10:
        raise LiftError("Path must start at the identity")
    logs = []
    for j, (a, b) in enumerate(zip(vs, vs[1:])):
        step = _stack(b) @ _adjoint(_stack(a))
        gap = _norm(step - _eye_like(step))
        if gap > LIFT_GAP + 1e-12:
            raise LiftError(f"Step {j} of the lift path has ‖v_(j+1)v_j* − 1‖ = {gap:.4g} > 1/5")
        log_q = _skew(_log_near_one(step))
        lifted = _stack(oracle.lift(_unstack(log_q, a)))
        logs.append(_skew(lifted))
    u = _eye_like(logs[0])
    for a in logs:
        u = _expm(a) @ u
    like = FilteredMatrixMap(oracle.space, u[:-1], u[-1])
    residual = _norm(_stack(oracle.restrict(like)) - _stack(vs[-1]))
    level_q = max(lipschitz_level(v) for v in vs)
    return {
        'u': like,
        'residual': residual,
        'unitary_defect': unitary_defect(u),
        'level': lipschitz_level(like),
        'declared_level': LEVEL_FACTORS['lift'] * oracle.control(level_q),
        'quotient_level': level_q,
    }


def boundary_map(oracle: ControlledSurjectionOracle, u: FilteredMatrixMap) -> Dict[str, Any]:
    """
    ∂[u] = [w(I_n ⊕ 0_n)w*, n] with w a lift of u ⊕ u*.

    u ⊕ u* is joined to 1 in the quotient by
    s ↦ diag(u, 1) R(s) diag(u*, 1) R(s)*, which is lifted with lift_unitary.

    Returns:
        Dictionary with 'projection', 'rank', 'w', 'index' (when the oracle
        can compute a class invariant) and the lift diagnostics
    """
    if u.base.n != oracle.quotient_space.n:
        raise LiftError("Unitary must live on the quotient sample")
    n = u.n
    # the quotient is compact, so the unitisation point carries 1
    U = np.concatenate([u.values, np.eye(n, dtype=complex)[None]], axis=0)
    npts = U.shape[0]
    eye = _constant(np.eye(n), npts)

    def rotation_path(s: float) -> np.ndarray:
        R = _rotation(npts, 2 * n, n, 0, 1, 0.5 * math.pi * s)
        return _block_diag([U, eye]) @ R @ _block_diag([_adjoint(U), eye]) @ _adjoint(R)

    like = FilteredMatrixMap(u.base, np.zeros((u.base.n, 2 * n, 2 * n)), np.eye(2 * n))
    path = FilteredPath(rotation_path, like, 'unitary', math.pi)
    lifted = lift_unitary(oracle, path)
    W = _stack(lifted['u'])
    e = _constant(np.diag([1.0] * n + [0.0] * n), W.shape[0])
    projection_stack = W @ e @ _adjoint(W)
    projection = FilteredMatrixMap(oracle.space, projection_stack[:-1], projection_stack[-1])
    level_u = lipschitz_level(u)
    result = {
        'projection': projection,
        'rank': n,
        'w': lifted['u'],
        'lift_residual': lifted['residual'],
        'projection_defect': projection_defect(projection_stack),
        'level': lipschitz_level(projection),
        'declared_level': LEVEL_FACTORS['boundary'] * oracle.control(3.0 * level_u),
        'index': oracle.class_index(projection, n),
    }
    logger.info("boundary map: rank marker %d, index %s", n, result['index'])
    return result


def phase_loop(oracle: SquareBoundaryOracle, winding: int,
               perturbation: Optional[np.ndarray] = None) -> FilteredMatrixMap:
    """Scalar unitary exp(i(kθ + δ(θ))) on the boundary loop of a square oracle."""
    pts = oracle.quotient_space.points
    angles = np.arctan2(pts[:, 1], pts[:, 0])
    phase = winding * angles
    if perturbation is not None:
        phase = phase + np.asarray(perturbation, dtype=float)
    values = np.exp(1j * phase)[:, None, None]
    return FilteredMatrixMap(oracle.quotient_space, values, np.eye(1))
