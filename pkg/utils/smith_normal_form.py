"""
Smith normal form of integer matrices and finitely presented abelian groups.

Input integer matrix A (m×n) is transformed to a diagonal integer matrix D by
unimodular integer matrices P (m×m) and Q (n×n):

    D = P A Q

with the diagonal entries d_1 | d_2 | ... | d_r non-negative. Arithmetic is
done with Python integers (object arrays) so no entry can overflow.
"""

import logging
import numpy as np
from typing import Optional, Tuple, List


logger = logging.getLogger(__name__)


class SmithNormalFormError(Exception):
    """Raised when an integer matrix is malformed."""
    pass


def _as_integer_matrix(A) -> np.ndarray:
    """Convert input to a 2-D object array of Python ints (1-D input becomes a column)."""
    arr = np.array(A, dtype=object)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise SmithNormalFormError(f"Expected a 2-D integer matrix, got shape {arr.shape}")
    out = np.empty(arr.shape, dtype=object)
    for idx, value in np.ndenumerate(arr):
        if isinstance(value, (float, np.floating)) and not float(value).is_integer():
            raise SmithNormalFormError(f"Non-integer entry {value} at {idx}")
        out[idx] = int(value)
    return out


def _identity(n: int) -> np.ndarray:
    eye = np.zeros((n, n), dtype=object)
    for i in range(n):
        eye[i, i] = 1
    return eye


class SNF:
    """Smith normal form D = P A Q of an integer matrix.

    Usage
    -----
    snf = SNF(int_mat)
    snf.run()

    Attributes
    ----------
    D, P, Q : object ndarrays of Python ints
    """

    def __init__(self, A):
        self._A_orig = _as_integer_matrix(A)
        self._A = self._A_orig.copy()
        m, n = self._A.shape
        self._P = _identity(m)
        self._Q = _identity(n)
        self._done = False

    @property
    def D(self) -> np.ndarray:
        return self._A

    @property
    def P(self) -> np.ndarray:
        return self._P

    @property
    def Q(self) -> np.ndarray:
        return self._Q

    @property
    def diagonal(self) -> List[int]:
        m, n = self._A.shape
        return [int(self._A[i, i]) for i in range(min(m, n))]

    @property
    def rank(self) -> int:
        return sum(1 for d in self.diagonal if d != 0)

    def run(self) -> 'SNF':
        """Calculate SNF."""
        if self._done:
            return self
        m, n = self._A.shape
        for t in range(min(m, n)):
            if not self._place_pivot(t):
                break
            while True:
                self._clear_row_and_column(t)
                if self._fix_divisibility(t):
                    continue
                break
            if self._A[t, t] < 0:
                self._A[t, :] = -self._A[t, :]
                self._P[t, :] = -self._P[t, :]
        self._done = True

        check = _matmul(_matmul(self._P, self._A_orig), self._Q)
        if not (check == self._A).all():
            raise SmithNormalFormError("Factorisation check D = P A Q failed")
        logger.debug("SNF of %s matrix: diagonal %s", self._A.shape, self.diagonal)
        return self

    def _swap_rows(self, i: int, j: int) -> None:
        if i != j:
            self._A[[i, j], :] = self._A[[j, i], :]
            self._P[[i, j], :] = self._P[[j, i], :]

    def _swap_cols(self, i: int, j: int) -> None:
        if i != j:
            self._A[:, [i, j]] = self._A[:, [j, i]]
            self._Q[:, [i, j]] = self._Q[:, [j, i]]

    def _place_pivot(self, t: int) -> bool:
        """Move the smallest non-zero entry of the trailing block to (t, t)."""
        sub = self._A[t:, t:]
        best = None
        for (i, j), value in np.ndenumerate(sub):
            if value != 0 and (best is None or abs(value) < best[0]):
                best = (abs(value), i + t, j + t)
        if best is None:
            return False
        self._swap_rows(t, best[1])
        self._swap_cols(t, best[2])
        return True

    def _clear_row_and_column(self, t: int) -> None:
        A = self._A
        m, n = A.shape
        while True:
            changed = False
            for i in range(t + 1, m):
                if A[i, t] != 0:
                    q = A[i, t] // A[t, t]
                    A[i, :] = A[i, :] - q * A[t, :]
                    self._P[i, :] = self._P[i, :] - q * self._P[t, :]
                    if A[i, t] != 0:
                        # remainder smaller than the pivot becomes the new pivot
                        self._swap_rows(t, i)
                        changed = True
            for j in range(t + 1, n):
                if A[t, j] != 0:
                    q = A[t, j] // A[t, t]
                    A[:, j] = A[:, j] - q * A[:, t]
                    self._Q[:, j] = self._Q[:, j] - q * self._Q[:, t]
                    if A[t, j] != 0:
                        self._swap_cols(t, j)
                        changed = True
            if not changed:
                break

    def _fix_divisibility(self, t: int) -> bool:
        """Ensure the pivot divides every entry of the trailing block."""
        A = self._A
        m, n = A.shape
        pivot = A[t, t]
        for i in range(t + 1, m):
            for j in range(t + 1, n):
                if A[i, j] % pivot != 0:
                    A[t, :] = A[t, :] + A[i, :]
                    self._P[t, :] = self._P[t, :] + self._P[i, :]
                    return True
        return False


def _matmul(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Exact product of object integer matrices (handles empty shapes)."""
    m, k = X.shape
    k2, n = Y.shape
    if k != k2:
        raise SmithNormalFormError(f"Shape mismatch {X.shape} x {Y.shape}")
    out = np.empty((m, n), dtype=object)
    for i in range(m):
        for j in range(n):
            out[i, j] = sum((int(X[i, l]) * int(Y[l, j]) for l in range(k)), 0)
    return out


def smith_normal_form(A) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Return (D, P, Q) with D = P A Q.

    Args:
        A: Integer matrix (array-like, m×n)

    Returns:
        Tuple of object arrays (D, P, Q)
    """
    snf = SNF(A).run()
    return snf.D, snf.P, snf.Q


def integer_kernel(A) -> np.ndarray:
    """
    Basis of the integer kernel {x ∈ ℤⁿ : A x = 0}.

    Args:
        A: Integer matrix (m×n)

    Returns:
        n×k object matrix whose columns generate the kernel lattice
    """
    snf = SNF(A).run()
    n = snf.Q.shape[0]
    r = snf.rank
    return snf.Q[:, r:n].copy()


def solve_in_image(A, v) -> Optional[np.ndarray]:
    """
    Find an integer x with A x = v, or None if v ∉ A ℤⁿ.

    Args:
        A: Integer matrix (m×n)
        v: Integer vector of length m

    Returns:
        Object vector x (length n) or None
    """
    A_int = _as_integer_matrix(A)
    m, n = A_int.shape
    v_int = _as_integer_matrix(np.asarray(v, dtype=object).reshape(-1, 1))
    if v_int.shape[0] != m:
        raise SmithNormalFormError(f"Vector length {v_int.shape[0]} does not match {m} rows")
    if n == 0:
        return np.zeros(0, dtype=object) if all(int(x) == 0 for x in v_int[:, 0]) else None

    snf = SNF(A_int).run()
    w = _matmul(snf.P, v_int)[:, 0]
    diag = snf.diagonal
    y = np.zeros(n, dtype=object)
    for i in range(m):
        d = diag[i] if i < len(diag) else 0
        if d == 0:
            if w[i] != 0:
                return None
        else:
            if w[i] % d != 0:
                return None
            y[i] = w[i] // d
    for i in range(n):
        y[i] = int(y[i])
    return _matmul(snf.Q, y.reshape(-1, 1))[:, 0]


def in_image(A, v) -> bool:
    """Return True when v lies in the integer column span of A."""
    return solve_in_image(A, v) is not None


class AbelianGroup:
    """Finitely generated abelian group ℤⁿ / im(R).

    Attributes
    ----------
    rank : int
        Number of generators n.
    relations : object ndarray
        n×k relation matrix R (columns are relations).
    """

    def __init__(self, rank: int, relations=None):
        if rank < 0:
            raise SmithNormalFormError("Group rank must be non-negative")
        self.rank = int(rank)
        if relations is None or np.size(relations) == 0:
            self.relations = np.zeros((self.rank, 0), dtype=object)
        else:
            rel = _as_integer_matrix(relations)
            if rel.shape[0] != self.rank:
                raise SmithNormalFormError(
                    f"Relation matrix has {rel.shape[0]} rows, expected {self.rank}")
            self.relations = rel

    def invariant_factors(self) -> List[int]:
        """Invariant factors; 0 entries denote free ℤ summands, 1s are dropped."""
        if self.rank == 0:
            return []
        if self.relations.shape[1] == 0:
            return [0] * self.rank
        snf = SNF(self.relations).run()
        diag = snf.diagonal + [0] * (self.rank - len(snf.diagonal))
        return [int(d) for d in diag if d != 1]

    def is_trivial(self) -> bool:
        return len(self.invariant_factors()) == 0

    def is_zero(self, v) -> bool:
        """True when the class of v in ℤⁿ/im(R) vanishes."""
        if self.rank == 0:
            return True
        if self.relations.shape[1] == 0:
            return all(int(x) == 0 for x in np.asarray(v, dtype=object).ravel())
        return in_image(self.relations, v)

    def describe(self) -> str:
        factors = self.invariant_factors()
        if not factors:
            return "0"
        parts = ["Z" if d == 0 else f"Z/{d}" for d in factors]
        return " + ".join(parts)

    def to_dict(self) -> dict:
        return {'rank': self.rank,
                'relations': [[int(x) for x in row] for row in self.relations]}
