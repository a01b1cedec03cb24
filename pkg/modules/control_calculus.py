"""
Control Function Calculus Module

Monotone control functions as serialisable expression trees, the decay
functions of the positive-scalar-curvature decay theorem, the exactness
constants of the controlled six-term sequence, and a five-lemma constant chase
verified against synthetic inductive systems with exact integer algebra.
"""

import logging
import math
import os
from dataclasses import dataclass, field
from typing import Dict, List, Tuple, Optional, Any, Sequence, Union

import numpy as np

from utils.smith_normal_form import AbelianGroup, integer_kernel, in_image, _as_integer_matrix, _matmul
from utils.validation import PreconditionError, ValidationError


logger = logging.getLogger(__name__)

INFINITY = math.inf
DEFAULT_Y_MAX = 1e12
BISECTION_TOL = 1e-9
YMAX_ENV_VAR = "CURVDECAY_YMAX"


class ControlCalculusError(Exception):
    """Base exception for control calculus errors."""
    pass


class ControlDomainError(ControlCalculusError, PreconditionError):
    """Raised for NaN or negative arguments and malformed constructors."""
    pass


class OverflowControlError(ControlCalculusError, PreconditionError):
    """Raised when a threshold is unreachable below Y_MAX."""
    pass


class ControlSchemaError(ControlCalculusError, ValidationError):
    """Raised when a control-function JSON document is malformed."""
    pass


class InductiveSystemError(ControlCalculusError, PreconditionError):
    """Raised when a synthetic inductive system is not coherent."""
    pass


def y_max() -> float:
    """Evaluation ceiling, overridable through the CURVDECAY_YMAX variable."""
    raw = os.environ.get(YMAX_ENV_VAR)
    if raw is None or raw == "":
        return DEFAULT_Y_MAX
    try:
        value = float(raw)
    except ValueError:
        raise ControlSchemaError(f"{YMAX_ENV_VAR}={raw!r} is not a number")
    if not value > 0 or math.isinf(value):
        raise ControlSchemaError(f"{YMAX_ENV_VAR} must be a positive finite number, got {raw}")
    return value


# ---------------------------------------------------------------------------
# Expression tree
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ControlFunction:
    """Monotone function [0, ∞) → [0, ∞] represented as an expression tree."""

    kind = "abstract"

    def __call__(self, x: float) -> float:
        return evaluate(self, x)

    def _eval(self, x: float, cap: float) -> float:
        raise NotImplementedError

    def children(self) -> Tuple['ControlFunction', ...]:
        return ()

    def to_dict(self) -> Dict[str, Any]:
        raise NotImplementedError

    def __add__(self, other: 'ControlFunction') -> 'ControlFunction':
        if not isinstance(other, ControlFunction):
            return NotImplemented
        return Sum((self, other))

    def __rmul__(self, factor: float) -> 'ControlFunction':
        if not isinstance(factor, (int, float)):
            return NotImplemented
        return Scale(float(factor), self)

    def after(self, inner: 'ControlFunction') -> 'ControlFunction':
        """Return self ∘ inner."""
        return Compose(self, inner)


@dataclass(frozen=True)
class Const(ControlFunction):
    c: float
    kind = "const"

    def __post_init__(self):
        if not (self.c >= 0):
            raise ControlDomainError(f"Const requires c >= 0, got {self.c}")

    def _eval(self, x, cap):
        return float(self.c)

    def to_dict(self):
        return {"kind": self.kind, "c": self.c}


@dataclass(frozen=True)
class Linear(ControlFunction):
    """x ↦ a·x + b with a, b ≥ 0."""
    a: float
    b: float = 0.0
    kind = "linear"

    def __post_init__(self):
        if not (self.a >= 0 and self.b >= 0):
            raise ControlDomainError(f"Linear requires a, b >= 0, got a={self.a}, b={self.b}")

    def _eval(self, x, cap):
        if self.a == 0:
            return float(self.b)
        return self.a * x + self.b

    def to_dict(self):
        return {"kind": self.kind, "a": self.a, "b": self.b}


@dataclass(frozen=True)
class Power(ControlFunction):
    """x ↦ x^p; p < 1 is allowed so square roots stay exact."""
    p: float
    kind = "power"

    def __post_init__(self):
        if not (self.p > 0):
            raise ControlDomainError(f"Power requires p > 0, got {self.p}")

    def _eval(self, x, cap):
        return x ** self.p

    def to_dict(self):
        return {"kind": self.kind, "p": self.p}


@dataclass(frozen=True)
class Sum(ControlFunction):
    terms: Tuple[ControlFunction, ...]
    kind = "sum"

    def __post_init__(self):
        if len(self.terms) == 0:
            raise ControlDomainError("Sum needs at least one term")

    def children(self):
        return tuple(self.terms)

    def _eval(self, x, cap):
        return float(sum(t._eval(x, cap) for t in self.terms))

    def to_dict(self):
        return {"kind": self.kind, "children": [t.to_dict() for t in self.terms]}


@dataclass(frozen=True)
class Scale(ControlFunction):
    factor: float
    child: ControlFunction
    kind = "scale"

    def __post_init__(self):
        if not (self.factor >= 0):
            raise ControlDomainError(f"Scale requires factor >= 0, got {self.factor}")

    def children(self):
        return (self.child,)

    def _eval(self, x, cap):
        if self.factor == 0:
            return 0.0
        return self.factor * self.child._eval(x, cap)

    def to_dict(self):
        return {"kind": self.kind, "factor": self.factor, "child": self.child.to_dict()}


@dataclass(frozen=True)
class Max(ControlFunction):
    terms: Tuple[ControlFunction, ...]
    kind = "max"

    def __post_init__(self):
        if len(self.terms) == 0:
            raise ControlDomainError("Max needs at least one term")

    def children(self):
        return tuple(self.terms)

    def _eval(self, x, cap):
        return max(t._eval(x, cap) for t in self.terms)

    def to_dict(self):
        return {"kind": self.kind, "children": [t.to_dict() for t in self.terms]}


@dataclass(frozen=True)
class Compose(ControlFunction):
    """outer ∘ inner."""
    outer: ControlFunction
    inner: ControlFunction
    kind = "compose"

    def children(self):
        return (self.outer, self.inner)

    def _eval(self, x, cap):
        return self.outer._eval(self.inner._eval(x, cap), cap)

    def to_dict(self):
        return {"kind": self.kind, "outer": self.outer.to_dict(), "inner": self.inner.to_dict()}


@dataclass(frozen=True)
class MonotoneTable(ControlFunction):
    """Piecewise-linear interpolation of sorted (x, y) pairs.

    Left of the first knot the table is clamped; right of the last knot it is
    extended with the slope of the last segment.
    """
    xs: Tuple[float, ...]
    ys: Tuple[float, ...]
    kind = "table"

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=float)
        ys = np.asarray(self.ys, dtype=float)
        if xs.ndim != 1 or xs.shape != ys.shape or xs.size == 0:
            raise ControlDomainError("MonotoneTable needs equally long non-empty x and y lists")
        if not (np.isfinite(xs).all() and np.isfinite(ys).all()):
            raise ControlDomainError("MonotoneTable entries must be finite")
        if np.any(np.diff(xs) <= 0):
            raise ControlDomainError("MonotoneTable x values must be strictly increasing")
        if np.any(np.diff(ys) < 0):
            raise ControlDomainError("MonotoneTable y values must be non-decreasing")
        if ys[0] < 0:
            raise ControlDomainError("MonotoneTable y values must be non-negative")
        object.__setattr__(self, 'xs', tuple(float(v) for v in xs))
        object.__setattr__(self, 'ys', tuple(float(v) for v in ys))

    def _eval(self, x, cap):
        xs, ys = self.xs, self.ys
        if x <= xs[0]:
            return ys[0]
        if x <= xs[-1]:
            return float(np.interp(x, xs, ys))
        if len(xs) == 1:
            return ys[-1]
        slope = (ys[-1] - ys[-2]) / (xs[-1] - xs[-2])
        if slope == 0:
            return ys[-1]
        return ys[-1] + slope * (x - xs[-1])

    def to_dict(self):
        return {"kind": self.kind, "x": list(self.xs), "y": list(self.ys)}


@dataclass(frozen=True)
class GeneralizedInverse(ControlFunction):
    """x ↦ sup{y ≤ Y_MAX : G(y) ≤ x} with sup ∅ = 0."""
    child: ControlFunction
    kind = "geninv"

    def children(self):
        return (self.child,)

    def _eval(self, x, cap):
        G = self.child
        if G._eval(0.0, cap) > x:
            return 0.0
        if G._eval(cap, cap) <= x:
            return cap
        lo, hi = 0.0, 1.0
        while hi < cap and G._eval(hi, cap) <= x:
            lo, hi = hi, min(2.0 * hi, cap)
        # invariant: G(lo) <= x < G(hi)
        while hi - lo > BISECTION_TOL * max(1.0, hi):
            mid = 0.5 * (lo + hi)
            if G._eval(mid, cap) <= x:
                lo = mid
            else:
                hi = mid
        return lo

    def to_dict(self):
        return {"kind": self.kind, "child": self.child.to_dict()}


@dataclass(frozen=True)
class ThresholdInverse(ControlFunction):
    """c ↦ inf{t ≥ floor : F(t) ≥ c} + 1, computed by bisection."""
    child: ControlFunction
    floor: float = 0.0
    label: str = ""
    kind = "thresh"

    def children(self):
        return (self.child,)

    def _eval(self, c, cap):
        return _threshold_inverse(self.child, c, self.floor, cap, self.label)

    def to_dict(self):
        return {"kind": self.kind, "child": self.child.to_dict(),
                "floor": self.floor, "label": self.label}


def _threshold_inverse(F: ControlFunction, c: float, floor: float, cap: float,
                       label: str) -> float:
    if F._eval(floor, cap) >= c:
        return floor + 1.0
    if math.isinf(c) or F._eval(cap, cap) < c:
        raise OverflowControlError(
            f"threshold {c:.6g} unreachable below Y_MAX={cap:.3g}"
            + (f" in step '{label}'" if label else ""))
    lo, hi = floor, max(2.0 * floor, floor + 1.0)
    while F._eval(hi, cap) < c:
        lo, hi = hi, min(2.0 * hi, cap)
    # invariant: F(lo) < c <= F(hi)
    while hi - lo > BISECTION_TOL * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if F._eval(mid, cap) >= c:
            hi = mid
        else:
            lo = mid
    return hi + 1.0


def identity() -> ControlFunction:
    """The identity control function."""
    return Linear(1.0, 0.0)


def compose(*functions: ControlFunction) -> ControlFunction:
    """compose(f, g, h) = f ∘ g ∘ h."""
    if not functions:
        return identity()
    result = functions[-1]
    for outer in reversed(functions[:-1]):
        result = Compose(outer, result)
    return result


def evaluate(cf: ControlFunction, x: float) -> float:
    """
    Evaluate a control function.

    Args:
        cf: Control function expression tree
        x: Non-negative argument (INFINITY allowed)

    Returns:
        Non-negative value or INFINITY

    Raises:
        ControlDomainError: If x is NaN or negative
    """
    x = float(x)
    if math.isnan(x):
        raise ControlDomainError("Control functions are undefined at NaN")
    if x < 0:
        raise ControlDomainError(f"Control functions take x >= 0, got {x}")
    return cf._eval(x, y_max())


def evaluate_grid(cf: ControlFunction, xs: Sequence[float]) -> np.ndarray:
    """Evaluate on a grid in the given order."""
    cap = y_max()
    out = np.empty(len(xs), dtype=float)
    for i, x in enumerate(xs):
        x = float(x)
        if math.isnan(x) or x < 0:
            raise ControlDomainError(f"Invalid grid point {x}")
        out[i] = cf._eval(x, cap)
    return out


def check_monotone(cf: ControlFunction, xs: Sequence[float],
                   tol: float = 0.0) -> Dict[str, Any]:
    """
    Check that cf is non-decreasing on a grid.

    Returns:
        Dictionary with 'is_monotone' and the first 'violation' (x, x', F(x), F(x'))
    """
    xs = np.sort(np.asarray(xs, dtype=float))
    values = evaluate_grid(cf, xs)
    drops = np.where(np.diff(values) < -tol)[0]
    if drops.size == 0:
        return {'is_monotone': True, 'violation': None}
    i = int(drops[0])
    return {'is_monotone': False,
            'violation': (float(xs[i]), float(xs[i + 1]), float(values[i]), float(values[i + 1]))}


# ---------------------------------------------------------------------------
# JSON schema
# ---------------------------------------------------------------------------

def control_function_from_dict(data: Dict[str, Any], path: str = "$") -> ControlFunction:
    """
    Parse the control-function JSON schema.

    Args:
        data: Mapping with a 'kind' key and kind-specific fields
        path: JSON path used in error messages

    Returns:
        ControlFunction

    Raises:
        ControlSchemaError: If the document is malformed
    """
    if not isinstance(data, dict):
        raise ControlSchemaError(f"{path}: expected an object, got {type(data).__name__}")
    kind = data.get("kind")

    def need(key):
        if key not in data:
            raise ControlSchemaError(f"{path}: '{kind}' node missing field '{key}'")
        return data[key]

    def number(key, default=None):
        value = data.get(key, default) if default is not None else need(key)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ControlSchemaError(f"{path}.{key}: expected a number, got {value!r}")
        return float(value)

    def child_list():
        kids = need("children")
        if not isinstance(kids, list) or not kids:
            raise ControlSchemaError(f"{path}.children: expected a non-empty list")
        return tuple(control_function_from_dict(k, f"{path}.children[{i}]") for i, k in enumerate(kids))

    try:
        if kind == "const":
            return Const(number("c"))
        if kind == "linear":
            return Linear(number("a"), number("b", 0.0))
        if kind == "power":
            return Power(number("p"))
        if kind == "sum":
            return Sum(child_list())
        if kind == "max":
            return Max(child_list())
        if kind == "scale":
            return Scale(number("factor"), control_function_from_dict(need("child"), f"{path}.child"))
        if kind == "compose":
            return Compose(control_function_from_dict(need("outer"), f"{path}.outer"),
                           control_function_from_dict(need("inner"), f"{path}.inner"))
        if kind == "table":
            xs, ys = need("x"), need("y")
            if not isinstance(xs, list) or not isinstance(ys, list):
                raise ControlSchemaError(f"{path}: table x/y must be lists")
            return MonotoneTable(tuple(xs), tuple(ys))
        if kind == "geninv":
            return GeneralizedInverse(control_function_from_dict(need("child"), f"{path}.child"))
        if kind == "thresh":
            return ThresholdInverse(control_function_from_dict(need("child"), f"{path}.child"),
                                    number("floor", 0.0), str(data.get("label", "")))
    except ControlDomainError as e:
        raise ControlSchemaError(f"{path}: {e}")
    raise ControlSchemaError(f"{path}: unknown kind {kind!r}")


# ---------------------------------------------------------------------------
# Decay functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PairingConstants:
    """Constants of the index-pairing estimate; C1 and C2 are derived."""
    lambda1: float
    lambda2: float
    lambda3: float
    lambda4: float
    Lm: float = 1.0
    C1: float = field(init=False)
    C2: float = field(init=False)

    def __post_init__(self):
        for name in ('lambda1', 'lambda2', 'lambda3', 'lambda4', 'Lm'):
            value = getattr(self, name)
            if not (value > 0) or math.isinf(value):
                raise ControlDomainError(f"PairingConstants.{name} must be positive and finite, got {value}")
        object.__setattr__(self, 'C1', self.lambda4 / (4.0 * self.lambda2))
        object.__setattr__(self, 'C2', 256.0 * self.lambda2 ** 2 * self.lambda3 ** 2)

    @classmethod
    def from_C(cls, C1: float, C2: float, Lm: float = 1.0) -> 'PairingConstants':
        """Pick λ's reproducing given (C1, C2) with λ1 = λ2 = 1."""
        if not (C1 > 0 and C2 > 0):
            raise ControlDomainError("C1 and C2 must be positive")
        return cls(1.0, 1.0, math.sqrt(C2 / 256.0), 4.0 * C1, Lm)

    def to_dict(self) -> Dict[str, float]:
        return {'lambda1': self.lambda1, 'lambda2': self.lambda2, 'lambda3': self.lambda3,
                'lambda4': self.lambda4, 'Lm': self.Lm, 'C1': self.C1, 'C2': self.C2}


def _warn_if_not_dominating(name: str, cf: ControlFunction) -> None:
    grid = np.concatenate([[0.0], np.logspace(-3, 3, 61)])
    values = evaluate_grid(cf, grid)
    bad = np.where(values < grid * (1 - 1e-9))[0]
    if bad.size:
        logger.warning("%s(x) >= x fails at x=%.4g (value %.4g)", name, grid[bad[0]], values[bad[0]])


def fk_sequence(R: ControlFunction, D: ControlFunction, m: int) -> List[ControlFunction]:
    """
    Build F_1..F_m with F_1(r) = R(D(r)+r), F_k(r) = R(F_{k-1}(r)+D(r)+2r).

    Args:
        R: Contractibility radius control
        D: Diameter control
        m: Asymptotic dimension (positive integer)

    Returns:
        List [F_1, ..., F_m] of control functions of r
    """
    if isinstance(m, bool) or not isinstance(m, (int, np.integer)) or m < 1:
        raise ControlDomainError(f"fk_sequence needs a positive integer m, got {m!r}")
    _warn_if_not_dominating("R", R)
    _warn_if_not_dominating("D", D)

    sequence = [Compose(R, Sum((D, identity())))]
    for _ in range(1, int(m)):
        sequence.append(Compose(R, Sum((sequence[-1], D, Linear(2.0)))))
    return sequence


def decay_G(R: ControlFunction, D: ControlFunction, m: int,
            pc: PairingConstants) -> ControlFunction:
    """
    The function G of the decay theorem.

    G(r) = 2F_m(s) + 2D(s) + C1(m+1)√r / (L_m√(C2 L_m)), s = √r / ((m+1)√(C2 L_m)).
    """
    F_m = fk_sequence(R, D, m)[-1]
    root = math.sqrt(pc.C2 * pc.Lm)
    s = Scale(1.0 / ((m + 1) * root), Power(0.5))
    tail = Scale(pc.C1 * (m + 1) / (pc.Lm * root), Power(0.5))
    return Sum((Scale(2.0, Compose(F_m, s)), Scale(2.0, Compose(D, s)), tail))


def decay_F(G: ControlFunction) -> ControlFunction:
    """F(x) = sup{y : G(y) ≤ x}."""
    return GeneralizedInverse(G)


def proportional_decay_fit(F: ControlFunction, grid: Sequence[float]) -> Dict[str, float]:
    """
    Fit the quadratic-decay shape of F on a grid.

    Returns:
        Dictionary with the log-log 'slope' on the upper half of the grid and
        (A, B) such that √F(r) ≥ A·r − B on every grid point.
    """
    r = np.asarray(grid, dtype=float)
    values = evaluate_grid(F, r)
    tail = slice(len(r) // 2, len(r))
    mask = values[tail] > 0
    slope = float(np.polyfit(np.log(r[tail][mask]), np.log(values[tail][mask]), 1)[0])
    root = np.sqrt(values)
    A = float(np.polyfit(r, root, 1)[0])
    B = float(np.max(A * r - root))
    return {'slope': slope, 'A': A, 'B': max(B, 0.0)}


# ---------------------------------------------------------------------------
# Exactness constants
# ---------------------------------------------------------------------------

def exactness_controls(Fl: ControlFunction) -> Dict[str, ControlFunction]:
    """
    Control functions of the controlled six-term sequence of a controlled
    surjection with lift control Fl.

    Returns:
        Mapping name → ControlFunction (four exactness controls, the boundary
        level and the composition-vanishing control)
    """
    return {
        'exact_K0A': Sum((Scale(28.0, Compose(Fl, Linear(4174.0))), identity())),
        'exact_K1A': Sum((Scale(14.0, Fl), identity())),
        'exact_K0J': Linear(4367.0),
        'exact_K1Q': Scale(412034.0, Compose(Fl, Linear(3.0))),
        'boundary_level': Scale(126.0, Compose(Fl, Linear(3.0))),
        'composition_zero': identity(),
    }


def six_term_controls(Fl: ControlFunction, outer: float = 412034.0,
                      inner: float = 4174.0) -> Dict[str, ControlFunction]:
    """
    Uniform F1∘Fl∘F2 (+ id) controls for the six positions of the long exact
    sequence; the linear coefficients are parameters.
    """
    if outer <= 0 or inner <= 0:
        raise ControlDomainError("six_term_controls needs positive coefficients")
    shape = Sum((Scale(outer, Compose(Fl, Linear(inner))), identity()))
    return {name: shape for name in ('K1J', 'K1A', 'K1Q', 'K0J', 'K0A', 'K0Q')}


def controlled_equivalence_level(F: ControlFunction, G: ControlFunction) -> ControlFunction:
    """Smallest admissible H ≥ F, G for a controlled equivalence."""
    return Max((F, G))


# ---------------------------------------------------------------------------
# Inductive systems and the five lemma
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class UniformControlPair:
    L0: float
    F: ControlFunction

    def __post_init__(self):
        if not (self.L0 >= 0):
            raise ControlDomainError(f"L0 must be non-negative, got {self.L0}")

    def to_dict(self) -> Dict[str, Any]:
        return {'L0': self.L0, 'F': self.F.to_dict()}


class SyntheticInductiveSystem:
    """Finite inductive system of groups ℤⁿ/im(R) over a sorted level grid.

    Attributes:
        levels: Sorted level values L_0 < ... < L_K
        groups: AbelianGroup per level
        maps: Integer matrices i_{L_k, L_{k+1}} (n_{k+1} × n_k)
    """

    def __init__(self, levels: Sequence[float], groups: Sequence[AbelianGroup],
                 maps: Sequence[Any]):
        self.levels = [float(L) for L in levels]
        self.groups = list(groups)
        if len(self.levels) == 0:
            raise InductiveSystemError("An inductive system needs at least one level")
        if any(b <= a for a, b in zip(self.levels, self.levels[1:])):
            raise InductiveSystemError("Levels must be strictly increasing")
        if len(self.groups) != len(self.levels):
            raise InductiveSystemError("One group per level is required")
        if len(maps) != len(self.levels) - 1:
            raise InductiveSystemError("One map per consecutive level pair is required")
        self.maps = []
        for k, M in enumerate(maps):
            rows, cols = self.groups[k + 1].rank, self.groups[k].rank
            M_int = _as_integer_matrix(M) if np.size(M) else np.zeros((rows, cols), dtype=object)
            if M_int.shape != (rows, cols):
                raise InductiveSystemError(
                    f"Map {k}->{k + 1} has shape {M_int.shape}, expected {(rows, cols)}")
            self.maps.append(M_int)
        self._check_well_defined()

    def _check_well_defined(self) -> None:
        for k, M in enumerate(self.maps):
            rel = self.groups[k].relations
            if rel.shape[1] == 0:
                continue
            image = _matmul(M, rel)
            for j in range(image.shape[1]):
                if not self.groups[k + 1].is_zero(image[:, j]):
                    raise InductiveSystemError(
                        f"Map {k}->{k + 1} does not send relation {j} to zero")

    def composite(self, k: int, j: int) -> np.ndarray:
        """Integer matrix of i_{L_k, L_j} for k ≤ j."""
        if j < k:
            raise InductiveSystemError(f"composite({k}, {j}) needs k <= j")
        n = self.groups[k].rank
        result = np.zeros((n, n), dtype=object)
        for i in range(n):
            result[i, i] = 1
        for step in range(k, j):
            result = _matmul(self.maps[step], result)
        return result

    def check_coherence(self) -> bool:
        """i_{L,L''} = i_{L',L''} ∘ i_{L,L'} on every triple."""
        K = len(self.levels)
        for a in range(K):
            for b in range(a, K):
                for c in range(b, K):
                    lhs = self.composite(a, c)
                    rhs = _matmul(self.composite(b, c), self.composite(a, b))
                    if not (lhs == rhs).all():
                        return False
        return True

    def level_index_at_least(self, L: float) -> int:
        """Index of the smallest level ≥ L (the top level when L exceeds it)."""
        for k, level in enumerate(self.levels):
            if level >= L - 1e-12:
                return k
        return len(self.levels) - 1

    def to_dict(self) -> Dict[str, Any]:
        return {'levels': self.levels,
                'groups': [g.to_dict() for g in self.groups],
                'maps': [[[int(x) for x in row] for row in M] for M in self.maps]}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'SyntheticInductiveSystem':
        try:
            groups = [AbelianGroup(g['rank'], g.get('relations')) for g in data['groups']]
            return cls(data['levels'], groups, data['maps'])
        except (KeyError, TypeError) as e:
            raise ControlSchemaError(f"Malformed inductive system: {e}")


def _kernel_to_top(system: SyntheticInductiveSystem, k: int) -> List[np.ndarray]:
    """Generators (in ℤ^{n_k}) of the kernel of M_k → colimit."""
    top = len(system.levels) - 1
    n_k = system.groups[k].rank
    if n_k == 0:
        return []
    C = system.composite(k, top)
    R_top = system.groups[top].relations
    stacked = np.concatenate([C, R_top], axis=1) if R_top.shape[1] else C
    if stacked.shape[0] == 0:
        kernel = np.zeros((n_k, n_k), dtype=object)
        for i in range(n_k):
            kernel[i, i] = 1
    else:
        kernel = integer_kernel(stacked)[:n_k, :]
    gens = []
    for j in range(kernel.shape[1]):
        x = kernel[:, j]
        if not system.groups[k].is_zero(x):
            gens.append(x)
    return gens


def _surjective_to_top(system: SyntheticInductiveSystem, k: int) -> Optional[int]:
    """None when M_k → colimit is onto, else the index of a missed generator."""
    top = len(system.levels) - 1
    n_top = system.groups[top].rank
    if n_top == 0:
        return None
    C = system.composite(k, top)
    R_top = system.groups[top].relations
    stacked = np.concatenate([C, R_top], axis=1) if R_top.shape[1] else C
    for i in range(n_top):
        e = [0] * n_top
        e[i] = 1
        if stacked.shape[1] == 0 or not in_image(stacked, e):
            return i
    return None


def verify_uniform_control(system: SyntheticInductiveSystem,
                           pair: UniformControlPair) -> Dict[str, Any]:
    """
    Check that (L0, F) uniformly controls a finite inductive system.

    The colimit over a finite grid is the top group. Surjectivity is checked
    for every level ≥ L0; kernel vanishing is checked at the smallest level
    ≥ F(L) for every level L.

    Returns:
        Dictionary with 'verdict' ('PASS'/'FAIL'), 'counterexample' and per-level details
    """
    if not system.check_coherence():
        raise InductiveSystemError("System is not coherent")

    details = []
    for k, L in enumerate(system.levels):
        entry = {'level': L, 'surjective': None, 'kernel_generators': 0}
        if L >= pair.L0:
            missed = _surjective_to_top(system, k)
            entry['surjective'] = missed is None
            if missed is not None:
                witness = [0] * system.groups[-1].rank
                witness[missed] = 1
                return {'verdict': 'FAIL', 'details': details + [entry],
                        'counterexample': {'type': 'surjectivity', 'level': L,
                                           'top_element': witness}}
        target_value = evaluate(pair.F, L)
        j = max(k, system.level_index_at_least(target_value))
        gens = _kernel_to_top(system, k)
        entry['kernel_generators'] = len(gens)
        entry['kernel_target_level'] = system.levels[j]
        C = system.composite(k, j)
        for x in gens:
            image = _matmul(C, np.asarray(x, dtype=object).reshape(-1, 1))[:, 0]
            if not system.groups[j].is_zero(image):
                return {'verdict': 'FAIL', 'details': details + [entry],
                        'counterexample': {'type': 'kernel', 'level': L,
                                           'element': [int(v) for v in x],
                                           'target_level': system.levels[j]}}
        details.append(entry)

    return {'verdict': 'PASS', 'details': details, 'counterexample': None}


def measure_uniform_control(system: SyntheticInductiveSystem) -> Dict[str, float]:
    """
    Tightest pair on the grid: the least surjectivity level and the largest
    level delay after which kernel elements die.
    """
    K = len(system.levels)
    L0 = system.levels[-1]
    for k in range(K - 1, -1, -1):
        if _surjective_to_top(system, k) is None:
            L0 = system.levels[k]
        else:
            break
    delay = 0.0
    for k in range(K):
        gens = _kernel_to_top(system, k)
        for j in range(k, K):
            C = system.composite(k, j)
            dead = all(system.groups[j].is_zero(
                _matmul(C, np.asarray(x, dtype=object).reshape(-1, 1))[:, 0]) for x in gens)
            if dead:
                delay = max(delay, system.levels[j] - system.levels[k])
                break
    return {'L0': L0, 'delay': delay}


FIVE_LEMMA_CONTROLS = ('F1', 'F2', 'F3', 'F4', 'Z21', 'E23', 'E34')


def threshold_inverse(F: ControlFunction, c: float, floor: float = 0.0,
                      label: str = "") -> float:
    """inf{t ≥ floor : F(t) ≥ c} + 1."""
    return _threshold_inverse(F, float(c), float(floor), y_max(), label)


def five_lemma_pair(controls: Dict[str, ControlFunction],
                    pairs: Dict[int, UniformControlPair]) -> UniformControlPair:
    """
    Uniform control pair of the middle system of an asymptotically exact
    five-term sequence.

    Args:
        controls: 'F1'..'F4' (controlled homomorphisms), 'Z21' (ξ²ξ¹ ∼ 0),
                  'E23', 'E34' (exactness at M² and M⁴ feeding M³)
        pairs: Uniform control pairs of M¹, M², M⁴, M⁵ keyed by 1, 2, 4, 5

    Returns:
        UniformControlPair (L3, F3) of M³

    Raises:
        OverflowControlError: If a threshold step is unreachable below Y_MAX
    """
    missing = [name for name in FIVE_LEMMA_CONTROLS if name not in controls]
    if missing:
        raise ControlDomainError(f"five_lemma_pair missing controls {missing}")
    missing_pairs = [j for j in (1, 2, 4, 5) if j not in pairs]
    if missing_pairs:
        raise ControlDomainError(f"five_lemma_pair missing pairs {missing_pairs}")

    F1, F2, F3, F4 = (controls[k] for k in ('F1', 'F2', 'F3', 'F4'))
    Z21, E23, E34 = controls['Z21'], controls['E23'], controls['E34']
    L1, L2, L4 = pairs[1].L0, pairs[2].L0, pairs[4].L0
    U2, U4, U5 = pairs[2].F, pairs[4].F, pairs[5].F

    # surjectivity side
    L4_plus = threshold_inverse(F4, evaluate(U5, evaluate(F4, L4)), label="L4+")
    L3 = max(evaluate(F2, L2), evaluate(E34, L4_plus))
    logger.debug("five lemma: L4+=%.6g, L3=%.6g", L4_plus, L3)

    # kernel side: L+ = thr_{F3}(U4(F3(L))), L++ = thr_{F1, floor L1}(E23(L+)).
    # ξ¹(w) and the lift y agree in M² only after U2, so
    # F3_out(L) = max(Z21(L++), F2(U2(F1(L++)))).
    L_plus = ThresholdInverse(F3, 0.0, "L+")
    L_plus_plus = ThresholdInverse(F1, float(L1), "L++")
    chase = compose(L_plus_plus, E23, L_plus, U4, F3)
    F3_out = Max((compose(Z21, chase), compose(F2, U2, F1, chase)))
    return UniformControlPair(L0=float(L3), F=F3_out)


def random_inductive_system(rng: np.random.Generator, max_levels: int = 4,
                            max_rank: int = 3,
                            levels: Optional[Sequence[float]] = None) -> SyntheticInductiveSystem:
    """
    Random coherent system over an integer level grid.

    Each group's relations contain the image of the previous group's
    relations, so every map is well defined; extra torsion relations are
    added at random so kernels can die along the way. A given level grid is
    used as is.
    """
    if levels is None:
        K = int(rng.integers(1, max_levels + 1))
        levels = (np.cumsum(rng.integers(1, 4, size=K)) - 1).tolist()
    K = len(levels)
    ranks = [int(r) for r in rng.integers(1, max_rank + 1, size=K)]

    def torsion(n: int) -> np.ndarray:
        cols = [np.eye(n, dtype=int)[:, i] * int(rng.choice([2, 3]))
                for i in range(n) if rng.random() < 0.3]
        return np.column_stack(cols) if cols else np.zeros((n, 0), dtype=int)

    relations = [torsion(ranks[0])]
    maps = []
    for k in range(1, K):
        M = rng.integers(-2, 3, size=(ranks[k], ranks[k - 1]))
        pushed = M @ relations[-1] if relations[-1].shape[1] else np.zeros((ranks[k], 0), dtype=int)
        relations.append(np.concatenate([pushed, torsion(ranks[k])], axis=1))
        maps.append(M)
    groups = [AbelianGroup(n, R) for n, R in zip(ranks, relations)]
    return SyntheticInductiveSystem(list(levels), groups, maps)


def _block_diagonal(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    out = np.zeros((A.shape[0] + B.shape[0], A.shape[1] + B.shape[1]), dtype=object)
    out[:A.shape[0], :A.shape[1]] = A
    out[A.shape[0]:, A.shape[1]:] = B
    return out


def _unit_matrix(n: int) -> np.ndarray:
    out = np.zeros((n, n), dtype=object)
    for i in range(n):
        out[i, i] = 1
    return out


def direct_sum(first: SyntheticInductiveSystem,
               second: SyntheticInductiveSystem) -> SyntheticInductiveSystem:
    """Levelwise direct sum of two systems on the same level grid."""
    if first.levels != second.levels:
        raise InductiveSystemError("Direct sum needs a common level grid")
    groups = [AbelianGroup(a.rank + b.rank, _block_diagonal(a.relations, b.relations))
              for a, b in zip(first.groups, second.groups)]
    maps = [_block_diagonal(A, B) for A, B in zip(first.maps, second.maps)]
    return SyntheticInductiveSystem(first.levels, groups, maps)


def _exact_at(src: AbelianGroup, f: np.ndarray, mid: AbelianGroup,
              g: np.ndarray, dst: AbelianGroup) -> bool:
    """g∘f = 0 and ker g ⊆ im f for src → mid → dst."""
    composite = _matmul(g, f)
    if not all(dst.is_zero(composite[:, i]) for i in range(composite.shape[1])):
        return False
    if mid.rank == 0:
        return True
    if dst.rank == 0:
        kernel = _unit_matrix(mid.rank)
    else:
        kernel = integer_kernel(np.concatenate([g, dst.relations], axis=1))[:mid.rank, :]
    image = np.concatenate([f, mid.relations], axis=1)
    for i in range(kernel.shape[1]):
        y = kernel[:, i]
        if mid.is_zero(y):
            continue
        if image.shape[1] == 0 or not in_image(image, y):
            return False
    return True


@dataclass
class FiveTermSequence:
    """M¹ → M² → M³ → M⁴ → M⁵ on a common level grid.

    Attributes:
        systems: Inductive systems keyed 1..5
        maps: maps[j][k] is ξʲ at the k-th level (level-preserving)
    """
    systems: Dict[int, SyntheticInductiveSystem]
    maps: Dict[int, List[np.ndarray]]

    def check_homomorphisms(self) -> bool:
        """ξʲ commutes with the structure maps."""
        for j in (1, 2, 3, 4):
            src, dst = self.systems[j], self.systems[j + 1]
            for k, (A, B) in enumerate(zip(src.maps, dst.maps)):
                lhs = _matmul(self.maps[j][k + 1], A)
                rhs = _matmul(B, self.maps[j][k])
                diff = lhs - rhs
                if not all(dst.groups[k + 1].is_zero(diff[:, i]) for i in range(diff.shape[1])):
                    return False
        return True

    def check_exact(self) -> bool:
        """Exactness at M², M³ and M⁴ on every level."""
        for k in range(len(self.systems[3].levels)):
            for j in (1, 2, 3):
                if not _exact_at(self.systems[j].groups[k], self.maps[j][k],
                                 self.systems[j + 1].groups[k], self.maps[j + 1][k],
                                 self.systems[j + 2].groups[k]):
                    return False
        return True


def split_exact_sequence(rng: np.random.Generator, max_levels: int = 4,
                         max_rank: int = 3) -> FiveTermSequence:
    """
    Random exact sequence C → A → A⊕B → B → D with inclusion and projection
    in the middle and zero outer maps; all four outer systems are random.
    """
    K = int(rng.integers(1, max_levels + 1))
    levels = (np.cumsum(rng.integers(1, 4, size=K)) - 1).tolist()
    C, A, B, D = (random_inductive_system(rng, max_levels, max_rank, levels) for _ in range(4))
    middle = direct_sum(A, B)
    maps: Dict[int, List[np.ndarray]] = {1: [], 2: [], 3: [], 4: []}
    for k in range(K):
        a, b = A.groups[k].rank, B.groups[k].rank
        maps[1].append(np.zeros((a, C.groups[k].rank), dtype=object))
        maps[2].append(np.concatenate([_unit_matrix(a), np.zeros((b, a), dtype=object)], axis=0))
        maps[3].append(np.concatenate([np.zeros((b, a), dtype=object), _unit_matrix(b)], axis=1))
        maps[4].append(np.zeros((D.groups[k].rank, b), dtype=object))
    return FiveTermSequence({1: C, 2: A, 3: middle, 4: B, 5: D}, maps)


def measured_pair(system: SyntheticInductiveSystem) -> UniformControlPair:
    """(L0, L ↦ L + delay) from measure_uniform_control."""
    measured = measure_uniform_control(system)
    return UniformControlPair(measured['L0'], Linear(1.0, measured['delay']))


def five_lemma_brute_force(controls: Dict[str, ControlFunction], n_systems: int,
                           seed: int = 0, max_levels: int = 4,
                           max_rank: int = 3) -> Dict[str, Any]:
    """
    Check five_lemma_pair against random split exact sequences.

    Each sequence C → A → A⊕B → B → D is level-preserving and exact on every
    level, so it realises any controls with F1..F4 the identity and Z21, E23,
    E34 ≥ id. The measured pairs of C, A, B, D are fed in and the chased pair
    must control A⊕B.

    Returns:
        Dictionary with 'verdict', 'systems' checked and the first failure
    """
    rng = np.random.default_rng(seed)
    failures = []
    for i in range(n_systems):
        sequence = split_exact_sequence(rng, max_levels, max_rank)
        if not (sequence.check_homomorphisms() and sequence.check_exact()):
            raise InductiveSystemError(f"Generated sequence {i} is not exact")
        pairs = {j: measured_pair(sequence.systems[j]) for j in (1, 2, 4, 5)}
        chased = five_lemma_pair(controls, pairs)
        middle = sequence.systems[3]
        verdict = verify_uniform_control(middle, chased)
        if verdict['verdict'] != 'PASS':
            failures.append({'index': i, 'system': middle.to_dict(),
                             'pairs': {j: pair.to_dict() for j, pair in pairs.items()},
                             'counterexample': verdict['counterexample']})
    logger.info("five lemma brute force: %d sequences, %d failures", n_systems, len(failures))
    return {
        'verdict': 'PASS' if not failures else 'FAIL',
        'systems': n_systems,
        'failures': len(failures),
        'first_failure': failures[0] if failures else None,
    }
