"""Anisotropic scaling arithmetic and the graded algebra of a regularity structure.

Homogeneities are kept as :class:`fractions.Fraction` so that the excluded set
``A + N`` can be tested exactly.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

Rational = Union[int, str, float, Fraction]


class GradingError(ValueError):
    """Raised on malformed scalings, index sets or structure data."""


def as_fraction(value: Rational) -> Fraction:
    """Convert ``value`` to an exact rational.

    Floats are converted through ``limit_denominator`` so ``0.75`` becomes
    ``3/4`` rather than its binary expansion.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        if not math.isfinite(value):
            raise GradingError(f"homogeneity must be finite, got {value}")
        return Fraction(value).limit_denominator(10**6)
    return Fraction(value)


@dataclass(frozen=True)
class ScalingVector:
    """Per-axis integer scaling exponents ``s``."""

    s: Tuple[int, ...]

    def __post_init__(self):
        s = tuple(int(v) for v in self.s)
        if len(s) < 1:
            raise GradingError("scaling vector needs at least one entry")
        if any(v < 1 for v in s):
            raise GradingError(f"scaling entries must be >= 1, got {s}")
        object.__setattr__(self, "s", s)

    @property
    def d(self) -> int:
        return len(self.s)

    @property
    def total(self) -> int:
        """``|s|``, the sum of the entries."""
        return sum(self.s)

    def __iter__(self):
        return iter(self.s)

    def __len__(self):
        return len(self.s)

    def __getitem__(self, i):
        return self.s[i]

    def matrix_power(self, a: float) -> np.ndarray:
        """Diagonal of ``a^s``."""
        return np.array([float(a) ** si for si in self.s])

    def to_list(self) -> List[int]:
        return list(self.s)


def _scaling(s) -> ScalingVector:
    return s if isinstance(s, ScalingVector) else ScalingVector(tuple(s))


def wrap_displacement(x, period: float = 1.0) -> np.ndarray:
    """Reduce each coordinate to the representative of smallest magnitude."""
    x = np.asarray(x, dtype=float)
    return x - period * np.round(x / period)


def aniso_norm(x, s, wrap: Optional[float] = None) -> Union[float, np.ndarray]:
    """Scaled "norm" ``sum_i |x_i|^(1/s_i)``.

    ``x`` may be a single point of shape ``(d,)`` or a stack ``(..., d)``.
    With ``wrap`` set to a period, coordinates are first reduced to their
    minimal-magnitude representative.
    """
    s = _scaling(s)
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (s.d,):
        raise GradingError(f"point of dimension {x.shape[-1:]} does not match scaling of dimension {s.d}")
    if wrap is not None:
        x = wrap_displacement(x, wrap)
    inv = 1.0 / np.asarray(s.s, dtype=float)
    out = np.sum(np.abs(x) ** inv, axis=-1)
    return float(out) if out.ndim == 0 else out


MultiIndex = Tuple[int, ...]


def multiindex_weight(k: Sequence[int], s) -> int:
    """``|k|_s = sum_i k_i s_i``."""
    s = _scaling(s)
    if len(k) != s.d:
        raise GradingError(f"multi-index {tuple(k)} does not match scaling of dimension {s.d}")
    if any(ki < 0 for ki in k):
        raise GradingError(f"multi-index entries must be nonnegative, got {tuple(k)}")
    return sum(int(ki) * si for ki, si in zip(k, s.s))


def factorial(k: Sequence[int]) -> int:
    return math.prod(math.factorial(int(ki)) for ki in k)


def first_nonzero(k: Sequence[int]) -> int:
    """``m(k)``: index of the first nonzero entry (0-based)."""
    for i, ki in enumerate(k):
        if ki != 0:
            return i
    raise GradingError("m(k) is undefined for k = 0")


def unit(i: int, d: int) -> MultiIndex:
    return tuple(1 if j == i else 0 for j in range(d))


def graded_lex_key(k: Sequence[int], s) -> Tuple:
    """Sort key: scaled weight, then total degree, then reverse-lex entries."""
    return (multiindex_weight(k, s), sum(k), tuple(-ki for ki in k))


def _indices_with_weight_below(bound: float, s: ScalingVector, inclusive: bool) -> List[MultiIndex]:
    if bound < 0 or (bound == 0 and not inclusive):
        return []
    ranges = [range(int(math.floor(bound / si)) + 1) for si in s.s]
    out = []
    for k in itertools.product(*ranges):
        w = multiindex_weight(k, s)
        if w < bound or (inclusive and w == bound):
            out.append(tuple(k))
    return out


def index_set_below(gamma: Rational, s) -> List[MultiIndex]:
    """All ``k`` with ``|k|_s < gamma`` in graded-lex order."""
    s = _scaling(s)
    g = float(gamma)
    if not math.isfinite(g):
        raise GradingError("gamma must be finite")
    ks = _indices_with_weight_below(g, s, inclusive=False)
    return sorted(ks, key=lambda k: graded_lex_key(k, s))


def index_set_boundary(gamma: Rational, s) -> List[MultiIndex]:
    """The discrete boundary: ``|k|_s > gamma`` and ``|k - e_m(k)|_s < gamma``."""
    s = _scaling(s)
    g = as_fraction(gamma)
    if g <= 0:
        raise GradingError("boundary index set needs gamma > 0")
    if g.denominator == 1:
        raise GradingError(f"boundary index set is degenerate for integer gamma = {g}")
    gf = float(g)
    # |k|_s - s_m(k) < gamma bounds |k|_s by gamma + max(s)
    candidates = _indices_with_weight_below(gf + max(s.s), s, inclusive=True)
    out = []
    for k in candidates:
        if not any(k):
            continue
        m = first_nonzero(k)
        lower = list(k)
        lower[m] -= 1
        if multiindex_weight(k, s) > gf and multiindex_weight(lower, s) < gf:
            out.append(k)
    return sorted(out, key=lambda k: graded_lex_key(k, s))


def monomial(h: np.ndarray, k: Sequence[int]) -> np.ndarray:
    """``h^k`` for a stack of displacements ``h`` of shape ``(..., d)``."""
    h = np.asarray(h, dtype=float)
    out = np.ones(h.shape[:-1])
    for i, ki in enumerate(k):
        if ki:
            out = out * h[..., i] ** ki
    return out


@dataclass(frozen=True)
class HomogeneitySet:
    """Finite index set ``A`` below a ceiling ``gamma``."""

    A: Tuple[Fraction, ...]
    gamma: Fraction

    def __post_init__(self):
        A = tuple(sorted({as_fraction(a) for a in self.A}))
        gamma = as_fraction(self.gamma)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "gamma", gamma)
        if Fraction(0) not in A:
            raise GradingError("the index set must contain 0")
        above = [a for a in A if a >= gamma]
        if above:
            raise GradingError(f"homogeneities {[str(a) for a in above]} are not below gamma = {gamma}")
        hit = in_shifted_set(gamma, A)
        if hit is not None:
            raise GradingError(
                f"gamma = {gamma} lies in A + N (gamma - {hit} is a natural number); "
                "the equivalence D^gamma = B^gamma is only asserted for gamma outside A + N"
            )


def in_shifted_set(gamma: Rational, A: Iterable[Rational]) -> Optional[Fraction]:
    """Return the ``alpha`` in ``A`` with ``gamma - alpha`` in N, else None."""
    g = as_fraction(gamma)
    for a in A:
        diff = g - as_fraction(a)
        if diff >= 0 and diff.denominator == 1:
            return as_fraction(a)
    return None


class ModelSpace:
    """Graded model space with finite-dimensional sectors and l1 sector norms.

    Vectors are plain numpy arrays indexed by ``self.symbols``; a leading
    symbol axis lets the same layout hold grid-valued coefficient fields.
    """

    UNIT = "1"

    def __init__(self, sectors: Mapping[Rational, Sequence[str]]):
        normalized: Dict[Fraction, List[str]] = {}
        for alpha, names in sectors.items():
            a = as_fraction(alpha)
            normalized.setdefault(a, []).extend(names)
        if Fraction(0) not in normalized or normalized[Fraction(0)] != [self.UNIT]:
            raise GradingError("sector 0 must be one-dimensional and spanned by '1'")
        self.sectors: Dict[Fraction, Tuple[str, ...]] = {
            a: tuple(normalized[a]) for a in sorted(normalized)
        }
        symbols: List[str] = []
        for a in self.sectors:
            symbols.extend(self.sectors[a])
        if len(set(symbols)) != len(symbols):
            raise GradingError("every symbol must belong to exactly one sector")
        self.symbols: Tuple[str, ...] = tuple(symbols)
        self.index: Dict[str, int] = {name: i for i, name in enumerate(symbols)}
        self.homogeneity: Dict[str, Fraction] = {
            name: a for a, names in self.sectors.items() for name in names
        }

    @property
    def dim(self) -> int:
        return len(self.symbols)

    @property
    def homogeneities(self) -> Tuple[Fraction, ...]:
        return tuple(self.sectors)

    def sector_slice(self, alpha: Rational) -> List[int]:
        a = as_fraction(alpha)
        if a not in self.sectors:
            raise GradingError(f"{a} is not a homogeneity of this model space")
        return [self.index[name] for name in self.sectors[a]]

    def vector(self, coeffs: Mapping[str, float]) -> np.ndarray:
        v = np.zeros(self.dim)
        for name, c in coeffs.items():
            if name not in self.index:
                raise GradingError(f"unknown symbol {name!r}")
            v[self.index[name]] = c
        return v

    def project(self, tau: np.ndarray, alpha: Rational) -> np.ndarray:
        """``tau^alpha`` as a full-length vector (other sectors zeroed)."""
        idx = self.sector_slice(alpha)
        out = np.zeros_like(tau)
        out[idx] = tau[idx]
        return out

    def sector_norm(self, tau: np.ndarray, alpha: Rational) -> Union[float, np.ndarray]:
        """l1 norm of the coefficients of ``tau^alpha``; leading axis is the symbol axis."""
        idx = self.sector_slice(alpha)
        tau = np.asarray(tau)
        if tau.shape[0] != self.dim:
            raise GradingError(f"vector has {tau.shape[0]} coefficients, model space has {self.dim}")
        out = np.sum(np.abs(tau[idx]), axis=0)
        return float(out) if np.ndim(out) == 0 else out

    def __eq__(self, other):
        return isinstance(other, ModelSpace) and self.sectors == other.sectors

    def __repr__(self):
        body = ", ".join(f"{a}: {list(n)}" for a, n in self.sectors.items())
        return f"ModelSpace({{{body}}})"


def sector_norm(tau: np.ndarray, alpha: Rational, space: ModelSpace) -> float:
    return space.sector_norm(tau, alpha)


class StructureElement:
    """A linear map on a model space, stored as ``matrix[target, source]``.

    Construction enforces triangularity: ``(Gamma - Id)`` maps each sector
    strictly into lower sectors.
    """

    def __init__(self, space: ModelSpace, matrix: np.ndarray, *, check: bool = True):
        matrix = np.array(matrix, dtype=float)
        if matrix.shape != (space.dim, space.dim):
            raise GradingError(f"structure element must be {space.dim}x{space.dim}")
        self.space = space
        self.matrix = matrix
        self.matrix.setflags(write=False)
        if check:
            bad = triangularity_violations(space, matrix)
            if bad:
                raise GradingError(f"structure element is not triangular: {bad[:3]}")

    @classmethod
    def identity(cls, space: ModelSpace) -> "StructureElement":
        return cls(space, np.eye(space.dim))

    def apply(self, tau: np.ndarray) -> np.ndarray:
        return gamma_apply(self, tau)

    def __matmul__(self, other: "StructureElement") -> "StructureElement":
        if other.space != self.space:
            raise GradingError("cannot compose structure elements over different model spaces")
        return StructureElement(self.space, self.matrix @ other.matrix)

    def component(self, tau: np.ndarray, alpha: Rational) -> np.ndarray:
        """``Gamma^alpha tau``."""
        return self.space.project(self.apply(tau), alpha)


def triangularity_violations(space: ModelSpace, matrix: np.ndarray, tol: float = 0.0) -> List[Tuple[str, str]]:
    """Pairs (target, source) where ``Gamma - Id`` fails to lower homogeneity."""
    diff = np.asarray(matrix) - np.eye(space.dim)
    bad = []
    for src in space.symbols:
        for tgt in space.symbols:
            if space.homogeneity[tgt] >= space.homogeneity[src]:
                if abs(diff[space.index[tgt], space.index[src]]) > tol:
                    bad.append((tgt, src))
    return bad


def gamma_apply(gamma: StructureElement, tau: np.ndarray) -> np.ndarray:
    """Apply a structure element to a model-space vector."""
    tau = np.asarray(tau, dtype=float)
    if tau.shape[0] != gamma.space.dim:
        raise GradingError(
            f"vector has {tau.shape[0]} coefficients, structure element acts on {gamma.space.dim}"
        )
    return np.tensordot(gamma.matrix, tau, axes=(1, 0))


def poly_symbol(k: Sequence[int]) -> str:
    """Canonical symbol name for ``X^k``; ``X^0`` is the unit."""
    if not any(k):
        return ModelSpace.UNIT
    return "X^(" + ",".join(str(int(v)) for v in k) + ")"


def parse_poly_symbol(name: str) -> Optional[MultiIndex]:
    if name.startswith("X^(") and name.endswith(")"):
        return tuple(int(v) for v in name[3:-1].split(","))
    return None
