"""
Matrix K-Theory Module

Finite-dimensional realisation of the index-pairing machinery: the
normalising function χ, the idempotent P_{t,D}, the difference construction,
contour-integral spectral projections, Wilson lattice Dirac models, the
d_{t,p,q} pipeline, lattice index pairing with a plaquette Chern oracle,
Lipschitz filtration levels of matrix-valued functions and CAT(0) rescaling.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Tuple, Optional, Any, Sequence, Callable

import numpy as np
from scipy import integrate, linalg, sparse
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, svds
from scipy.spatial import cKDTree

from modules.covers import SampledSpace
from modules.control_calculus import PairingConstants
from utils.validation import PreconditionError, NotConvergedError, check_measured_bound, summarize_checks


logger = logging.getLogger(__name__)

SERIES_CUTOFF = 1e-3
TAIL_SPLIT = 50.0
HERMITIAN_TOL = 1e-10
DEFAULT_CONTOUR_NODES = 64
RANK_THRESHOLD = 0.5
RANK_GAP = (0.3, 0.7)

SIGMA_0 = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)


class MatrixKTheoryError(Exception):
    """Base exception for matrix K-theory errors."""
    pass


class MatrixDomainError(MatrixKTheoryError, PreconditionError):
    """Raised for non-Hermitian, ungraded or malformed matrix input."""
    pass


class DefectTooLargeError(MatrixKTheoryError, PreconditionError):
    """Raised when an input that must be idempotent is not."""
    pass


class SpectralGapError(MatrixKTheoryError, NotConvergedError):
    """Raised when an almost idempotent is too far from idempotent for Θ."""
    pass


class IndexNotConvergedError(MatrixKTheoryError, NotConvergedError):
    """Raised when rank counting finds eigenvalues inside the forbidden band."""
    pass


def op_norm(A: np.ndarray) -> float:
    """Operator norm (largest singular value)."""
    if A.size == 0:
        return 0.0
    return float(np.linalg.norm(A, 2))


# ---------------------------------------------------------------------------
# Normalising function
# ---------------------------------------------------------------------------

def _chi_integrand(y: float) -> float:
    half = 0.5 * y
    return 0.5 * (math.sin(half) / half) ** 2 if y != 0 else 0.5


def chi(x: float) -> float:
    """
    χ(x) = (2/π)∫₀ˣ (1 − cos y)/y² dy, odd, with limits ±1.

    A Taylor series is used for |x| ≤ 1e-3; beyond 50 the oscillatory tail
    ∫ (1 − cos y)/y² is split into 1/y² (closed form) and a cosine-weighted
    quadrature.
    """
    x = float(x)
    if not math.isfinite(x):
        if math.isnan(x):
            raise MatrixDomainError("χ is undefined at NaN")
        return math.copysign(1.0, x)
    a = abs(x)
    if a <= SERIES_CUTOFF:
        value = a / 2.0 - a ** 3 / 72.0 + a ** 5 / 3600.0
    elif a <= TAIL_SPLIT:
        value, _ = integrate.quad(_chi_integrand, 0.0, a, epsabs=1e-13, epsrel=1e-12, limit=200)
    else:
        head, _ = integrate.quad(_chi_integrand, 0.0, TAIL_SPLIT, epsabs=1e-13, epsrel=1e-12, limit=200)
        inverse_square = 1.0 / TAIL_SPLIT - 1.0 / a
        cosine, _ = integrate.quad(lambda y: 1.0 / y ** 2, TAIL_SPLIT, a, weight='cos', wvar=1.0,
                                   epsabs=1e-13, limit=400)
        value = head + inverse_square - cosine
    return math.copysign(2.0 / math.pi * value, x)


def chi_array(values: np.ndarray) -> np.ndarray:
    """χ applied entrywise."""
    values = np.asarray(values, dtype=float)
    return np.array([chi(v) for v in values.ravel()]).reshape(values.shape)


def chi_derivative(x: np.ndarray) -> np.ndarray:
    """χ′(x) = (2/π)(1 − cos x)/x²."""
    x = np.asarray(x, dtype=float)
    half = 0.5 * x
    safe = np.where(half == 0, 1.0, half)
    sinc_sq = np.where(half == 0, 1.0, (np.sin(safe) / safe) ** 2)
    return sinc_sq / math.pi


def chi_spectral_support_error(n_samples: int = 2 ** 14, dx: float = 0.5,
                               n_freq: int = 81) -> float:
    """
    Max deviation of the normalised Fourier transform of χ′ from the triangle
    max{1 − |ξ|, 0} on ξ ∈ [−2, 2].
    """
    x = (np.arange(n_samples) - n_samples // 2) * dx
    g = chi_derivative(x)
    xi = np.linspace(-2.0, 2.0, n_freq)
    transform = dx * (np.cos(np.outer(xi, x)) @ g) / 2.0
    triangle = np.maximum(1.0 - np.abs(xi), 0.0)
    return float(np.max(np.abs(transform - triangle)))


def _check_hermitian(D: np.ndarray, name: str = "D") -> np.ndarray:
    D = np.asarray(D)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise MatrixDomainError(f"{name} must be a square matrix, got shape {D.shape}")
    scale = max(1.0, float(np.abs(D).max()) if D.size else 1.0)
    if np.abs(D - D.conj().T).max(initial=0.0) > HERMITIAN_TOL * scale:
        raise MatrixDomainError(f"{name} is not Hermitian")
    return D


def chi_of(D: np.ndarray, t: float) -> np.ndarray:
    """
    χ(t⁻¹D) by eigendecomposition.

    Args:
        D: Hermitian matrix
        t: Positive scale

    Returns:
        Hermitian matrix with norm ≤ 1
    """
    if not (t > 0):
        raise MatrixDomainError(f"t must be positive, got {t}")
    D = _check_hermitian(D)
    w, V = np.linalg.eigh(0.5 * (D + D.conj().T))
    return (V * chi_array(w / t)) @ V.conj().T


# ---------------------------------------------------------------------------
# P_{t,D}
# ---------------------------------------------------------------------------

def _grading_indices(grading: np.ndarray, size: int) -> Tuple[np.ndarray, np.ndarray]:
    grading = np.asarray(grading)
    if grading.shape != (size,) or not np.all(np.isin(grading, (-1, 1))):
        raise MatrixDomainError("Grading must be a ±1 vector matching the matrix size")
    return np.where(grading > 0)[0], np.where(grading < 0)[0]


def check_odd(D: np.ndarray, grading: np.ndarray, tol: float = 1e-10) -> float:
    """Norm of the even part of D (zero for an odd operator)."""
    plus, minus = _grading_indices(grading, D.shape[0])
    even = np.zeros_like(D)
    even[np.ix_(plus, plus)] = D[np.ix_(plus, plus)]
    even[np.ix_(minus, minus)] = D[np.ix_(minus, minus)]
    return op_norm(even)


def p_tD(D: np.ndarray, grading: np.ndarray, t: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    The idempotent P_{t,D} and the reference e₁₁.

    With U, V the off-diagonal blocks of χ(D/t) (H₋ → H₊ and H₊ → H₋) and
    S₀ = 1 − UV, S₁ = 1 − VU:

        P = [[1 − S₀², (1 + S₀) U S₁], [V S₀, S₁²]]

    which is W e₁₁ W⁻¹ written out, so P² = P exactly.

    Returns:
        (P, e11) with e11 the projection onto H₊
    """
    if t < 1:
        raise MatrixDomainError(f"P_tD needs t ≥ 1, got {t}")
    D = _check_hermitian(D)
    plus, minus = _grading_indices(grading, D.shape[0])
    if check_odd(D, grading) > 1e-10 * max(1.0, op_norm(D)):
        raise MatrixDomainError("D is not odd with respect to the grading")
    F = chi_of(D, t)
    U = F[np.ix_(plus, minus)]
    V = F[np.ix_(minus, plus)]
    S0 = np.eye(len(plus)) - U @ V
    S1 = np.eye(len(minus)) - V @ U

    P = np.zeros(D.shape, dtype=complex)
    P[np.ix_(plus, plus)] = np.eye(len(plus)) - S0 @ S0
    P[np.ix_(plus, minus)] = (np.eye(len(plus)) + S0) @ U @ S1
    P[np.ix_(minus, plus)] = V @ S0
    P[np.ix_(minus, minus)] = S1 @ S1
    e11 = np.zeros(D.shape, dtype=complex)
    e11[plus, plus] = 1.0
    return P, e11


def random_graded_dirac(n: int, rng: np.random.Generator,
                        gap: Optional[float] = None, scale: float = 1.0) -> Tuple[np.ndarray, np.ndarray]:
    """
    Random odd Hermitian D = [[0, A], [A*, 0]] on ℂⁿ ⊕ ℂⁿ.

    With `gap`, the singular values of A are drawn from [gap, 2·gap], so the
    spectrum of D avoids (−gap, gap).
    """
    G = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    if gap is None:
        A = scale * G / math.sqrt(2 * n)
    else:
        Q1, _ = np.linalg.qr(G)
        Q2, _ = np.linalg.qr(rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))
        A = Q1 @ np.diag(rng.uniform(gap, 2 * gap, size=n)) @ Q2
    D = np.zeros((2 * n, 2 * n), dtype=complex)
    D[:n, n:] = A
    D[n:, :n] = A.conj().T
    grading = np.concatenate([np.ones(n, dtype=int), -np.ones(n, dtype=int)])
    return D, grading


def line_dirac(n_points: int, h: float = 1.0) -> Tuple[np.ndarray, np.ndarray, SampledSpace]:
    """
    Odd Dirac-type operator [[0, ∂*], [∂, 0]] on a line of n points with
    spacing h, ∂ the forward difference.
    """
    forward = (np.eye(n_points, k=1) - np.eye(n_points)) / h
    D = np.zeros((2 * n_points, 2 * n_points), dtype=complex)
    D[:n_points, n_points:] = forward.conj().T
    D[n_points:, :n_points] = forward
    grading = np.concatenate([np.ones(n_points, dtype=int), -np.ones(n_points, dtype=int)])
    space = SampledSpace.from_points(np.arange(n_points) * h)
    return D, grading, space


def commutator_norm(P: np.ndarray, f: np.ndarray) -> float:
    """‖[P, f]‖ for a matrix P and a diagonal multiplication operator with entries f."""
    f = np.asarray(f)
    return op_norm(P * f[np.newaxis, :] - f[:, np.newaxis] * P)


# ---------------------------------------------------------------------------
# Propagation
# ---------------------------------------------------------------------------

def block_magnitudes(T: np.ndarray, block: int) -> np.ndarray:
    """(points × points) array of the largest entry modulus of each block."""
    n = T.shape[0] // block
    if n * block != T.shape[0]:
        raise MatrixDomainError(f"Matrix size {T.shape[0]} is not a multiple of block {block}")
    return np.abs(T).reshape(n, block, n, block).max(axis=(1, 3))


def propagation(T: np.ndarray, space: SampledSpace, tol: float, block: int = 1) -> float:
    """
    prop(T): largest d(x, y) over blocks (x, y) with an entry above tol.

    Args:
        T: Matrix whose basis is grouped into `block`-sized blocks per point
        space: Sample carrying the points
        tol: Entry threshold (> 0)
        block: Number of basis vectors per point
    """
    if not (tol > 0):
        raise MatrixDomainError(f"Propagation tolerance must be positive, got {tol}")
    mags = block_magnitudes(T, block)
    if mags.shape[0] != space.n:
        raise MatrixDomainError("Matrix blocks do not match the sample size")
    mask = mags > tol
    return float(space.dist[mask].max()) if mask.any() else 0.0


def tail_decay_fit(T: np.ndarray, space: SampledSpace, cutoff: float,
                   block: int = 1, bins: int = 20) -> Dict[str, float]:
    """
    Fit log(max block entry) ≈ log C − c·d beyond a cutoff distance.

    Returns:
        Dictionary with 'rate' c, 'prefactor' C, and the number of bins used
    """
    mags = block_magnitudes(T, block)
    d = space.dist
    far = d > cutoff
    if not far.any():
        return {'rate': float('inf'), 'prefactor': 0.0, 'bins': 0}
    edges = np.linspace(cutoff, float(d.max()), bins + 1)
    centers, peaks = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        sel = (d > lo) & (d <= hi)
        if sel.any():
            peak = float(mags[sel].max())
            if peak > 1e-300:
                centers.append(0.5 * (lo + hi))
                peaks.append(peak)
    if len(centers) < 2:
        return {'rate': float('inf'), 'prefactor': 0.0, 'bins': len(centers)}
    slope, intercept = np.polyfit(centers, np.log(peaks), 1)
    return {'rate': float(-slope), 'prefactor': float(math.exp(intercept)), 'bins': len(centers)}


# ---------------------------------------------------------------------------
# Difference construction and Θ
# ---------------------------------------------------------------------------

def idempotent_defect(e: np.ndarray) -> float:
    return op_norm(e @ e - e)


@dataclass
class AlmostIdempotent:
    """Matrix with its measured defect ‖e² − e‖ and norm."""
    matrix: np.ndarray
    defect: float = field(init=False)
    norm: float = field(init=False)

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=complex)
        self.defect = idempotent_defect(self.matrix)
        self.norm = op_norm(self.matrix)


def z_matrices(beta: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Z(β) and its printed inverse, as 4×4 block matrices."""
    n = beta.shape[0]
    one = np.eye(n, dtype=complex)
    zero = np.zeros((n, n), dtype=complex)
    b, c = beta, one - beta
    Z = np.block([[b, zero, c, zero],
                  [c, zero, zero, b],
                  [zero, zero, b, c],
                  [zero, one, zero, zero]])
    Z_inv = np.block([[b, c, zero, zero],
                      [zero, zero, zero, one],
                      [c, zero, b, zero],
                      [zero, b, c, zero]])
    return Z, Z_inv


def _difference(alpha: np.ndarray, beta: np.ndarray) -> np.ndarray:
    n = beta.shape[0]
    Z, Z_inv = z_matrices(beta)
    zero = np.zeros((n, n), dtype=complex)
    middle = linalg.block_diag(alpha, np.eye(n) - beta, zero, zero)
    return Z_inv @ middle @ Z


def difference_idempotent(alpha: np.ndarray, beta: np.ndarray,
                          tol: float = 1e-9) -> np.ndarray:
    """
    d(α, β) = Z(β)⁻¹ diag(α, 1 − β, 0, 0) Z(β).

    Args:
        alpha, beta: Idempotents of equal size
        tol: Allowed idempotency defect of the inputs

    Returns:
        4n × 4n idempotent

    Raises:
        DefectTooLargeError: If α or β is not idempotent within tol
    """
    alpha = np.asarray(alpha, dtype=complex)
    beta = np.asarray(beta, dtype=complex)
    if alpha.shape != beta.shape or alpha.ndim != 2 or alpha.shape[0] != alpha.shape[1]:
        raise MatrixDomainError("α and β must be square matrices of equal size")
    for name, e in (('alpha', alpha), ('beta', beta)):
        defect = idempotent_defect(e)
        if defect > tol:
            raise DefectTooLargeError(f"{name} has idempotency defect {defect:.3g} > {tol:g}")
    Z, Z_inv = z_matrices(beta)
    residual = op_norm(Z @ Z_inv - np.eye(Z.shape[0]))
    if residual > 1e-10:
        raise MatrixKTheoryError(f"Z(β)Z(β)⁻¹ deviates from I by {residual:.3g}")
    return _difference(alpha, beta)


def e13(n: int) -> np.ndarray:
    """diag(1_n, 0, 0, 0)."""
    e = np.zeros((4 * n, 4 * n), dtype=complex)
    e[:n, :n] = np.eye(n)
    return e


def theta(e: Any, M: int = DEFAULT_CONTOUR_NODES) -> np.ndarray:
    """
    Riesz projection (1/2πi)∮ (ξ − e)⁻¹ dξ over |ξ − 1| = 1/2 by the M-node
    trapezoidal rule.

    Raises:
        SpectralGapError: If the idempotency defect is ≥ 1/4
    """
    ai = e if isinstance(e, AlmostIdempotent) else AlmostIdempotent(e)
    if ai.defect >= 0.25:
        raise SpectralGapError(f"Idempotency defect {ai.defect:.4g} ≥ 1/4; Θ is not defined")
    if M < 4:
        raise MatrixDomainError("Contour quadrature needs at least 4 nodes")
    A = ai.matrix
    n = A.shape[0]
    I = np.eye(n, dtype=complex)
    result = np.zeros((n, n), dtype=complex)
    for k in range(M):
        w = np.exp(2j * math.pi * k / M)
        xi = 1.0 + 0.5 * w
        result += 0.5 * w * np.linalg.solve(xi * I - A, I)
    return result / M


def theta_scalar(values: np.ndarray, M: int = DEFAULT_CONTOUR_NODES) -> np.ndarray:
    """
    Action of the M-node rule in theta on an eigenvalue λ:

        λ ↦ 1 / (1 − (2(λ − 1))^M)

    so theta(A, M) = V·diag(theta_scalar(λ))·V⁻¹ for diagonalisable A.
    """
    if M < 4:
        raise MatrixDomainError("Contour quadrature needs at least 4 nodes")
    z = 2.0 * (np.asarray(values, dtype=complex) - 1.0)
    with np.errstate(over='ignore', invalid='ignore', divide='ignore'):
        out = 1.0 / (1.0 - z ** M)
    return np.where(np.isfinite(out), out, 0.0)


def spectral_projection_schur(e: np.ndarray) -> np.ndarray:
    """Riesz projection for the eigenvalues in |λ − 1| < 1/2 via Schur and Sylvester."""
    A = np.asarray(e, dtype=complex)
    T, Z, k = linalg.schur(A, output='complex', sort=lambda lam: abs(lam - 1.0) < 0.5)
    n = A.shape[0]
    P = np.zeros((n, n), dtype=complex)
    if k == 0:
        return P
    P[:k, :k] = np.eye(k)
    if k < n:
        X = linalg.solve_sylvester(T[:k, :k], -T[k:, k:], T[:k, k:])
        P[:k, k:] = X
    return Z @ P @ Z.conj().T


def rank_by_count(e: np.ndarray) -> int:
    """Rank of an (almost) idempotent by counting eigenvalues with real part above 1/2."""
    eig = np.linalg.eigvals(e)
    near = np.abs(eig.real - RANK_THRESHOLD) < 0.2
    if near.any():
        raise IndexNotConvergedError("Eigenvalues within 0.2 of the rank threshold")
    return int(np.sum(eig.real > RANK_THRESHOLD))


# ---------------------------------------------------------------------------
# Filtered matrix maps
# ---------------------------------------------------------------------------

class FilteredMatrixMap:
    """Matrix-valued function on a finite metric space.

    Attributes:
        base: SampledSpace
        values: (points, n, n) complex array
        plus_part: Value at infinity (unitisation scalar part)
    """

    def __init__(self, base: SampledSpace, values: np.ndarray,
                 plus_part: Optional[np.ndarray] = None):
        values = np.asarray(values, dtype=complex)
        if values.ndim != 3 or values.shape[0] != base.n or values.shape[1] != values.shape[2]:
            raise MatrixDomainError(f"Values must have shape (points, n, n), got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise MatrixDomainError("Matrix values must be finite")
        self.base = base
        self.values = values
        self.n = values.shape[1]
        self.plus_part = (np.zeros((self.n, self.n), dtype=complex) if plus_part is None
                          else np.asarray(plus_part, dtype=complex))

    def sup_norm(self) -> float:
        return float(np.linalg.norm(self.values, ord=2, axis=(1, 2)).max())

    def multiplication_operator(self, inner: int = 1) -> np.ndarray:
        """Block-diagonal operator ⊕_x (I_inner ⊗ f(x)) on points ⊗ ℂ^inner ⊗ ℂⁿ."""
        eye = np.eye(inner)
        return linalg.block_diag(*[np.kron(eye, v) for v in self.values])

    def map(self, func: Callable[[np.ndarray], np.ndarray]) -> 'FilteredMatrixMap':
        return FilteredMatrixMap(self.base, np.array([func(v) for v in self.values]),
                                 func(self.plus_part))

    def __add__(self, other: 'FilteredMatrixMap') -> 'FilteredMatrixMap':
        return FilteredMatrixMap(self.base, self.values + other.values, self.plus_part + other.plus_part)

    def __sub__(self, other: 'FilteredMatrixMap') -> 'FilteredMatrixMap':
        return FilteredMatrixMap(self.base, self.values - other.values, self.plus_part - other.plus_part)

    def __matmul__(self, other: 'FilteredMatrixMap') -> 'FilteredMatrixMap':
        return FilteredMatrixMap(self.base, self.values @ other.values, self.plus_part @ other.plus_part)

    def scaled(self, c: complex) -> 'FilteredMatrixMap':
        return FilteredMatrixMap(self.base, c * self.values, c * self.plus_part)

    def support(self, reference: Optional['FilteredMatrixMap'] = None, tol: float = 1e-12) -> np.ndarray:
        """Indices where the map differs from the reference (or from zero)."""
        diff = self.values if reference is None else self.values - reference.values
        return np.where(np.abs(diff).max(axis=(1, 2)) > tol)[0]


def lipschitz_level(f: FilteredMatrixMap, chunk: int = 256) -> float:
    """L(f) = max over pairs of ‖f(x) − f(y)‖ / d(x, y)."""
    values = f.values
    D = f.base.dist
    best = 0.0
    for start in range(0, f.base.n, chunk):
        stop = min(start + chunk, f.base.n)
        diff = values[start:stop, None, :, :] - values[None, :, :, :]
        norms = np.linalg.norm(diff, ord=2, axis=(2, 3))
        dist = D[start:stop]
        mask = dist > 0
        if mask.any():
            best = max(best, float((norms[mask] / dist[mask]).max()))
    return best


def check_filtration_axioms(f: FilteredMatrixMap, g: FilteredMatrixMap,
                            scalar: complex = 2.5 - 1j) -> Dict[str, Any]:
    """
    Measured checks of the Lipschitz filtration axioms: scaling, sums,
    products L(fg) ≤ ‖f‖L(g) + ‖g‖L(f), and resolvents
    L((f − λ)⁻¹) ≤ ‖(f − λ)⁻¹‖² L(f).
    """
    Lf, Lg = lipschitz_level(f), lipschitz_level(g)
    nf, ng = f.sup_norm(), g.sup_norm()
    slack = 1e-9 * (1.0 + Lf + Lg)
    checks = [
        check_measured_bound('scaling', lipschitz_level(f.scaled(scalar)), abs(scalar) * Lf, slack),
        check_measured_bound('sum', lipschitz_level(f + g), Lf + Lg, slack),
        check_measured_bound('product', lipschitz_level(f @ g), nf * Lg + ng * Lf, slack),
    ]
    lam = nf + 1.0
    eye = np.eye(f.n)
    resolvent = f.map(lambda v: np.linalg.inv(v - lam * eye))
    checks.append(check_measured_bound('resolvent', lipschitz_level(resolvent),
                                       resolvent.sup_norm() ** 2 * Lf, slack))
    return summarize_checks(checks)


def power_series_level_bound(coeffs: Sequence[float], norm: float) -> float:
    """Derivative-type majorant Σ_k |c_k| k ‖a‖^{k−1} of a power series."""
    return float(sum(abs(c) * k * norm ** (k - 1) for k, c in enumerate(coeffs) if k > 0))


def power_series_level_check(a: FilteredMatrixMap, kind: str = 'exp',
                             terms: int = 40) -> Dict[str, Any]:
    """
    Compare the measured level of exp(a) or log(1 − a) with the majorant
    bound times L(a).
    """
    if kind == 'exp':
        coeffs = [1.0 / math.factorial(k) for k in range(terms)]
        image = a.map(linalg.expm)
    elif kind == 'log1m':
        if a.sup_norm() >= 1:
            raise MatrixDomainError("log(1 − a) needs ‖a‖ < 1")
        coeffs = [0.0] + [-1.0 / k for k in range(1, terms)]
        image = a.map(lambda v: -sum(np.linalg.matrix_power(v, k) / k for k in range(1, terms)))
    else:
        raise MatrixDomainError(f"Unknown power series {kind!r}")
    bound = power_series_level_bound(coeffs, a.sup_norm()) * lipschitz_level(a)
    return check_measured_bound(f'power_series_{kind}', lipschitz_level(image), bound, 1e-9)


# ---------------------------------------------------------------------------
# Lattice models
# ---------------------------------------------------------------------------

@dataclass
class LatticeDirac:
    """Wilson-regularised Dirac model on [−N..N]² with spacing h.

    Attributes:
        N, h: Lattice half-width (in sites) and spacing
        wilson_mass: Dimensionless mass m·h; negative is the topological phase
        r_wilson: Wilson parameter
        D: Hamiltonian σₓSₓ + σᵧSᵧ + σ_z(m + Wilson term), Hermitian, nearest-neighbour
        odd_dirac: σₓSₓ + σᵧSᵧ, odd for the σ_z grading
        grading: ±1 per basis vector (site-major, spinor-minor)
        space: Sample of lattice sites
    """
    N: int
    h: float
    wilson_mass: float = -1.0
    r_wilson: float = 1.0
    D: np.ndarray = field(init=False, repr=False)
    odd_dirac: np.ndarray = field(init=False, repr=False)
    grading: np.ndarray = field(init=False, repr=False)
    space: SampledSpace = field(init=False, repr=False)

    def __post_init__(self):
        if self.N < 1 or not (self.h > 0):
            raise MatrixDomainError("LatticeDirac needs N ≥ 1 and h > 0")
        side = 2 * self.N + 1
        coords = (np.arange(side) - self.N) * self.h
        X, Y = np.meshgrid(coords, coords, indexing='ij')
        self.coords = np.column_stack([X.ravel(), Y.ravel()])
        self.space = SampledSpace.from_points(self.coords, check_triangle=0)

        shift = sparse.eye(side, k=1, format='csr')
        eye = sparse.identity(side, format='csr')
        Tx = sparse.kron(shift, eye, format='csr')
        Ty = sparse.kron(eye, shift, format='csr')
        Sx = (Tx - Tx.T) / (2j * self.h)
        Sy = (Ty - Ty.T) / (2j * self.h)
        n_sites = side * side
        Isites = sparse.identity(n_sites, format='csr')
        wilson = (self.r_wilson / (2 * self.h)) * (4 * Isites - Tx - Tx.T - Ty - Ty.T)
        mass = (self.wilson_mass / self.h) * Isites + wilson

        odd = sparse.kron(Sx, SIGMA_X) + sparse.kron(Sy, SIGMA_Y)
        self.odd_dirac = odd.toarray()
        self.D = (odd + sparse.kron(mass, SIGMA_Z)).toarray()
        self.grading = np.tile(np.array([1, -1]), n_sites)
        logger.debug("LatticeDirac N=%d h=%.3g: %d sites", self.N, self.h, n_sites)

    @property
    def n_sites(self) -> int:
        return self.coords.shape[0]

    def positive_projection_basis(self) -> np.ndarray:
        """Orthonormal eigenvectors of D with positive energy."""
        w, V = np.linalg.eigh(self.D)
        if np.min(np.abs(w)) < 1e-8:
            raise IndexNotConvergedError("Lattice Hamiltonian has a zero mode")
        return V[:, w > 0]


def bott_projection(N: int, h: float, radius: float = 7.5,
                    reflect: bool = False) -> FilteredMatrixMap:
    """
    p(x) = ½(1 + n(x)·σ), n(x) = (sin θ cos φ, sin θ sin φ, cos θ) with
    θ = π·min(|x|/R, 1); p equals e₂₂ outside the ball of radius R.
    """
    side = 2 * N + 1
    coords = (np.arange(side) - N) * h
    X, Y = np.meshgrid(coords, coords, indexing='ij')
    pts = np.column_stack([X.ravel(), Y.ravel()])
    space = SampledSpace.from_points(pts, check_triangle=0)
    values = bott_values(pts, radius, reflect)
    e22 = np.diag([0.0, 1.0]).astype(complex)
    return FilteredMatrixMap(space, values, e22)


def bott_values(points: np.ndarray, radius: float, reflect: bool = False) -> np.ndarray:
    x, y = points[:, 0], points[:, 1]
    if reflect:
        y = -y
    r = np.hypot(x, y)
    theta_ = math.pi * np.minimum(r / radius, 1.0)
    phi = np.arctan2(y, x)
    n = np.stack([np.sin(theta_) * np.cos(phi), np.sin(theta_) * np.sin(phi), np.cos(theta_)], axis=1)
    return 0.5 * (SIGMA_0[None] + n[:, 0, None, None] * SIGMA_X[None]
                  + n[:, 1, None, None] * SIGMA_Y[None] + n[:, 2, None, None] * SIGMA_Z[None])


def constant_projection(space: SampledSpace, matrix: np.ndarray) -> FilteredMatrixMap:
    matrix = np.asarray(matrix, dtype=complex)
    return FilteredMatrixMap(space, np.repeat(matrix[None], space.n, axis=0), matrix)


def lattice_chern_number(values: np.ndarray, side: int) -> float:
    """
    Plaquette Chern number of a projection field on a side × side grid.

    For every counter-clockwise plaquette the product of overlap
    determinants of the range bases is formed; the sum of its phases over 2π
    is the Chern number (1/2πi)∫tr(p[∂ₓp, ∂ᵧp]).
    """
    field_ = np.asarray(values, dtype=complex).reshape(side, side, values.shape[-2], values.shape[-1])
    rank = int(round(float(np.trace(field_[0, 0]).real)))
    if rank == 0:
        return 0.0
    bases = np.empty((side, side, field_.shape[-1], rank), dtype=complex)
    for i in range(side):
        for j in range(side):
            w, V = np.linalg.eigh(0.5 * (field_[i, j] + field_[i, j].conj().T))
            bases[i, j] = V[:, -rank:]

    def link(a, b):
        return np.linalg.det(a.conj().T @ b)

    total = 0.0
    for i in range(side - 1):
        for j in range(side - 1):
            corners = (bases[i, j], bases[i + 1, j], bases[i + 1, j + 1], bases[i, j + 1])
            loop = 1.0 + 0j
            for a, b in zip(corners, corners[1:] + corners[:1]):
                loop *= link(a, b)
            total += float(np.angle(loop))
    return total / (2 * math.pi)


def _check_projection_field(f: FilteredMatrixMap, name: str, tol: float = 1e-9) -> None:
    defect = float(np.abs(f.values @ f.values - f.values).max(initial=0.0))
    if defect > tol:
        raise DefectTooLargeError(f"{name} has pointwise idempotency defect {defect:.3g} > {tol:g}")


def _multiply_blocks(blocks: np.ndarray, X: np.ndarray) -> np.ndarray:
    return np.einsum('kij,kj->ki', blocks, X)


def twisted_defect(P: np.ndarray, f: FilteredMatrixMap, dense_limit: int = 1024) -> float:
    """
    ‖(P̃f)² − P̃f‖ for P̃ = P ⊗ Iₙ and f acting as ⊕_x (I ⊗ f(x)).

    Small products are formed densely. Larger ones are never formed: the top
    singular value comes from ARPACK on a matrix-free operator.
    """
    P = np.asarray(P, dtype=complex)
    inner = P.shape[0] // f.base.n
    if inner * f.base.n != P.shape[0]:
        raise MatrixDomainError(f"A {P.shape[0]}-dimensional idempotent does not act on {f.base.n} points")
    n = f.n
    size = P.shape[0] * n
    if size <= dense_limit:
        X = np.kron(P, np.eye(n)) @ f.multiplication_operator(inner=inner)
        return op_norm(X @ X - X)

    blocks = np.repeat(f.values, inner, axis=0)
    blocks_h = blocks.conj().transpose(0, 2, 1)
    P_h = P.conj().T

    def forward(x):
        return (P @ _multiply_blocks(blocks, x.reshape(-1, n))).ravel()

    def backward(x):
        return _multiply_blocks(blocks_h, P_h @ x.reshape(-1, n)).ravel()

    def matvec(x):
        y = forward(np.asarray(x, dtype=complex).ravel())
        return forward(y) - y

    def rmatvec(x):
        y = backward(np.asarray(x, dtype=complex).ravel())
        return backward(y) - y

    op = LinearOperator((size, size), matvec=matvec, rmatvec=rmatvec, dtype=complex)
    v0 = np.full(size, 1.0 / math.sqrt(size), dtype=complex)
    try:
        s = svds(op, k=1, v0=v0, tol=1e-8, return_singular_vectors=False)
    except ArpackNoConvergence:
        logger.warning("ARPACK did not converge on a %d-dimensional defect; forming it densely", size)
        X = np.kron(P, np.eye(n)) @ f.multiplication_operator(inner=inner)
        return op_norm(X @ X - X)
    return float(s[0])


def _twisted_rank(V: np.ndarray, f: FilteredMatrixMap, M: int) -> Tuple[int, float]:
    """
    rank Θ_M(P̃f) for P̃ = VV* ⊗ Iₙ, with the distance of the spectrum to 1/2.

    The non-zero eigenvalues of P̃f are those of the Hermitian compression
    (V ⊗ Iₙ)* f (V ⊗ Iₙ); Θ_M acts on each through theta_scalar.
    """
    n = f.n
    k = V.shape[1]
    inner = V.shape[0] // f.base.n
    A = np.zeros((k * n, k * n), dtype=complex)
    for i in range(n):
        for j in range(n):
            diag = np.repeat(f.values[:, i, j], inner)
            A[i::n, j::n] = V.conj().T @ (diag[:, None] * V)
    w = np.linalg.eigvalsh(0.5 * (A + A.conj().T))
    rank = int(np.sum(theta_scalar(w, M).real > RANK_THRESHOLD))
    return rank, float(np.min(np.abs(w - RANK_THRESHOLD), initial=np.inf))


def reference_rank(f: FilteredMatrixMap) -> int:
    """rank(e₁₁ ⊗ f) = Σ_x rank f(x) for a field of projections."""
    return int(round(float(np.trace(f.values, axis1=1, axis2=2).real.sum())))


def pairing_record(lattice: LatticeDirac, p: FilteredMatrixMap, q: FilteredMatrixMap,
                   t: float, M: int = DEFAULT_CONTOUR_NODES) -> Dict[str, Any]:
    """
    Index pairing of the lattice Dirac class with [p] − [q], with its certificate.

    The integer is rank Θ(d) − rank(e) for d = d(a, b), a = d(P_W p, P_W q)
    and b = d(e₁₁p, e₁₁q), where P_W is the positive spectral projection of
    the Wilson Hamiltonian. The odd part alone pairs to zero on a lattice
    (its doublers cancel), so P_W stands in for P_t. For a constant q every
    input but P_W p is an exact idempotent, Z(b) and Z(P_W q) are genuine
    similarities and the count splits as

        rank Θ(d) − rank e = rank Θ(P_W p) − rank(P_W q) − (rank e₁₁p − rank e₁₁q).

    Θ's precondition is checked at t: the twisted idempotents P_t p, P_t q
    of the scale-t idempotent P_t = P_{t,D} of the odd part must have defect
    below 1/4. For P_W p and P_W q the spectrum itself must stay out of
    (0.3, 0.7), which keeps it off Re λ = 1/2.

    Raises:
        MatrixDomainError: If t < 1, M < 4 or the fields live elsewhere
        DefectTooLargeError: If p or q is not a field of projections
        SpectralGapError: If a scale-t twisted defect reaches 1/4
        IndexNotConvergedError: If a compressed eigenvalue lies in (0.3, 0.7)
    """
    if not (t >= 1):
        raise MatrixDomainError(f"The pairing needs t ≥ 1, got {t}")
    if M < 4:
        raise MatrixDomainError("Contour quadrature needs at least 4 nodes")
    if p.base.n != lattice.n_sites or q.base.n != lattice.n_sites or p.n != q.n:
        raise MatrixDomainError("p and q must be fields of equal size on the lattice sites")
    _check_projection_field(p, 'p')
    _check_projection_field(q, 'q')
    record = {'t': float(t), 'M': int(M)}
    if np.allclose(p.values, q.values, atol=1e-14):
        record.update(index=0, defect_scale_t=0.0, rank_gap=None)
        return record

    P_t, _ = p_tD(lattice.odd_dirac, lattice.grading, t)
    defect_t = max(twisted_defect(P_t, p), twisted_defect(P_t, q))
    if defect_t >= 0.25:
        raise SpectralGapError(
            f"‖(P_t p)² − P_t p‖ = {defect_t:.4g} ≥ 1/4 at t = {t:g}; t is too small for this level")

    V = lattice.positive_projection_basis()
    rank_p, gap_p = _twisted_rank(V, p, M)
    rank_q, gap_q = _twisted_rank(V, q, M)
    band = 0.5 * (RANK_GAP[1] - RANK_GAP[0])
    if min(gap_p, gap_q) < band:
        raise IndexNotConvergedError(
            f"Compressed spectrum meets ({RANK_GAP[0]}, {RANK_GAP[1]}); refine the lattice")
    reference = reference_rank(p) - reference_rank(q)
    index = (rank_p - rank_q) - reference
    record.update(index=int(index), rank_p=rank_p, rank_q=rank_q, reference_rank_difference=reference,
                  defect_scale_t=float(defect_t), rank_gap=float(min(gap_p, gap_q)))
    logger.info("index pairing t=%g M=%d: %d (scale-t defect %.3g)", t, M, index, defect_t)
    return record


def index_pairing(lattice: LatticeDirac, p: FilteredMatrixMap, q: FilteredMatrixMap,
                  t: float, M: int = DEFAULT_CONTOUR_NODES) -> int:
    """Index pairing of the lattice Dirac class with [p] − [q]; see pairing_record."""
    return pairing_record(lattice, p, q, t, M)['index']


# ---------------------------------------------------------------------------
# d_{t,p,q} pipeline
# ---------------------------------------------------------------------------

def pairing_pipeline(lattice: LatticeDirac, p: FilteredMatrixMap, q: FilteredMatrixMap,
                     t: float, M: int = DEFAULT_CONTOUR_NODES) -> Dict[str, Any]:
    """
    Build a_{t,p,q} = d(P_t·p, P_t·q), b_{p,q} = d(e₁₁⊗p, e₁₁⊗q) and
    d_{t,p,q} = d(a, b) with P_t = P_{t,D} for the odd lattice Dirac operator.

    Returns:
        Record with 'd_tpq', 'defect', 'dist_to_e', 'norm', 'level', 'lambda2'
        and, when the defect allows it, the Θ-projection's distance to e
    """
    if p.n != q.n:
        raise MatrixDomainError("p and q must have the same matrix size")
    P, e11 = p_tD(lattice.odd_dirac, lattice.grading, t)
    n = p.n
    Pn = np.kron(P, np.eye(n))
    e11n = np.kron(e11, np.eye(n))
    p_op = p.multiplication_operator(inner=2)
    q_op = q.multiplication_operator(inner=2)

    a = _difference(Pn @ p_op, Pn @ q_op)
    b = _difference(e11n @ p_op, e11n @ q_op)
    d = _difference(a, b)
    e = e13(a.shape[0])
    ai = AlmostIdempotent(d)
    level = max(lipschitz_level(p), lipschitz_level(q))
    record = {
        't': float(t),
        'd_tpq': d,
        'defect': ai.defect,
        'norm': ai.norm,
        'dist_to_e': op_norm(d - e),
        'level': level,
        'lambda2': ai.defect * t / level if level > 0 else 0.0,
    }
    if ai.defect < 0.25:
        record['theta_dist_to_e'] = op_norm(theta(ai, M) - e)
    logger.info("pipeline t=%g: defect %.4g, ‖d−e‖ %.4g", t, ai.defect, record['dist_to_e'])
    return record


def pipeline_trend(lattice: LatticeDirac, p: FilteredMatrixMap, q: FilteredMatrixMap,
                   t_schedule: Sequence[float]) -> Dict[str, Any]:
    """Run the pipeline over a t-schedule and fit λ₂ from defect·t/L."""
    rows = []
    for t in t_schedule:
        rec = pairing_pipeline(lattice, p, q, t)
        rows.append({k: v for k, v in rec.items() if k != 'd_tpq'})
    scaled = np.array([r['defect'] * r['t'] for r in rows])
    positive = scaled[scaled > 0]
    return {
        'rows': rows,
        'lambda1': max(r['norm'] for r in rows),
        'lambda2': max(r['lambda2'] for r in rows),
        'lambda3': max(r['dist_to_e'] for r in rows),
        'defect_times_t_ratio': float(positive.max() / positive.min()) if positive.size else 1.0,
    }


def scalar_bound_constants(lambda2: float, lambda3: float, lambda4: float) -> Tuple[float, float]:
    """C₁ = λ₄/(4λ₂), C₂ = 256λ₂²λ₃²."""
    for name, value in (('lambda2', lambda2), ('lambda3', lambda3), ('lambda4', lambda4)):
        if not (value > 0):
            raise MatrixDomainError(f"{name} must be positive, got {value}")
    return lambda4 / (4.0 * lambda2), 256.0 * lambda2 ** 2 * lambda3 ** 2


def measured_pairing_constants(trend: Dict[str, Any], lambda4: float = 1.0,
                               Lm: float = 1.0) -> PairingConstants:
    """PairingConstants from a measured pipeline trend."""
    return PairingConstants(max(trend['lambda1'], 1e-12), max(trend['lambda2'], 1e-12),
                            max(trend['lambda3'], 1e-12), lambda4, Lm)


# ---------------------------------------------------------------------------
# CAT(0) rescaling
# ---------------------------------------------------------------------------

def cat0_rescale(p: FilteredMatrixMap, x0: Sequence[float], s: float,
                 target: Optional[SampledSpace] = None) -> FilteredMatrixMap:
    """
    p_s(x) = p(x₀ + (x − x₀)/s) by nearest-sample evaluation.

    Args:
        p: Map on a Euclidean sample
        x0: Base point
        s: Scale ≥ 1
        target: Sample on which p_s is evaluated (defaults to p's sample)
    """
    if s < 1:
        raise MatrixDomainError(f"Rescaling needs s ≥ 1, got {s}")
    if p.base.points is None:
        raise MatrixDomainError("cat0_rescale needs a Euclidean sample")
    out_space = target if target is not None else p.base
    if out_space.points is None:
        raise MatrixDomainError("Target sample needs coordinates")
    x0 = np.asarray(x0, dtype=float)
    pulled = x0 + (out_space.points - x0) / s
    _, idx = cKDTree(p.base.points).query(pulled)
    return FilteredMatrixMap(out_space, p.values[idx], p.plus_part)
