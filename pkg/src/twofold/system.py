"""Piecewise-polynomial planar Filippov systems split by the line y = 0.

The switching line is hard-coded to y = 0; systems with a different switching
manifold must be transformed by the caller before construction.  Both
half-plane fields are bivariate polynomials held as exact coefficient tables,
so x-derivatives (needed for fold classification) are exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

TOL_TAN = 1e-9

Term = tuple[int, int, float]


class DenominatorUnderflow(ArithmeticError):
    """Sliding-field denominator Yh - Xh vanished; caller must not slide here."""


def _normalize_terms(terms, name: str) -> tuple[Term, ...]:
    out = []
    seen = set()
    for t in terms:
        i, j, c = t
        if not isinstance(i, int) or not isinstance(j, int) or i < 0 or j < 0:
            raise ValueError(f"{name}: exponents must be non-negative integers, got ({i!r}, {j!r})")
        if (i, j) in seen:
            raise ValueError(f"{name}: duplicate exponent pair ({i}, {j})")
        seen.add((i, j))
        out.append((i, j, float(c)))
    return tuple(out)


def _poly_eval(terms: tuple[Term, ...], x: float, y: float) -> float:
    s = 0.0
    for i, j, c in terms:
        s += c * x**i * y**j
    return s


def _poly_dx(terms: tuple[Term, ...]) -> tuple[Term, ...]:
    return tuple((i - 1, j, c * i) for i, j, c in terms if i > 0)


def _binom(n: int, k: int) -> int:
    r = 1
    for m in range(1, k + 1):
        r = r * (n - m + 1) // m
    return r


def _poly_translate_x(terms: tuple[Term, ...], d: float) -> tuple[Term, ...]:
    # substitute x -> x + d, exact binomial expansion
    acc: dict[tuple[int, int], float] = {}
    for i, j, c in terms:
        for k in range(i + 1):
            acc[(k, j)] = acc.get((k, j), 0.0) + c * _binom(i, k) * d ** (i - k)
    return tuple((i, j, c) for (i, j), c in sorted(acc.items()) if c != 0.0)


@dataclass(frozen=True)
class PolyField:
    """Planar polynomial field; each component is a tuple of (i, j, c) monomials c*x^i*y^j."""

    dx: tuple[Term, ...]
    dy: tuple[Term, ...]

    def __post_init__(self):
        object.__setattr__(self, "dx", _normalize_terms(self.dx, "dx"))
        object.__setattr__(self, "dy", _normalize_terms(self.dy, "dy"))

    def eval(self, x: float, y: float) -> tuple[float, float]:
        return _poly_eval(self.dx, x, y), _poly_eval(self.dy, x, y)

    def horizontal_on_sigma(self, x: float) -> float:
        """First component at (x, 0)."""
        return _poly_eval(self.dx, x, 0.0)

    def normal_on_sigma(self, x: float) -> float:
        """Second component at (x, 0); equals F.grad(h) for h(x, y) = y."""
        return _poly_eval(self.dy, x, 0.0)

    def d_normal_on_sigma(self, x: float) -> float:
        """x-derivative of the second component at (x, 0), exact."""
        return _poly_eval(_poly_dx(self.dy), x, 0.0)

    def translate_x(self, d: float) -> "PolyField":
        """Field in coordinates shifted so the new origin sits at old x = d."""
        return PolyField(_poly_translate_x(self.dx, d), _poly_translate_x(self.dy, d))


def eval_field(field: PolyField, p: tuple[float, float]) -> tuple[float, float]:
    return field.eval(p[0], p[1])


@dataclass(frozen=True)
class FilippovSystem:
    """Pair of polynomial fields: `upper` acts on y > 0, `lower` on y < 0."""

    upper: PolyField
    lower: PolyField

    def translated(self, d: float) -> "FilippovSystem":
        return FilippovSystem(self.upper.translate_x(d), self.lower.translate_x(d))

    def to_dict(self) -> dict:
        def enc(f: PolyField) -> dict:
            return {"dx": [[i, j, c] for i, j, c in f.dx],
                    "dy": [[i, j, c] for i, j, c in f.dy]}
        return {"upper": enc(self.upper), "lower": enc(self.lower)}

    @classmethod
    def from_dict(cls, d: dict) -> "FilippovSystem":
        def dec(fd: dict) -> PolyField:
            return PolyField(tuple((int(i), int(j), float(c)) for i, j, c in fd["dx"]),
                             tuple((int(i), int(j), float(c)) for i, j, c in fd["dy"]))
        return cls(dec(d["upper"]), dec(d["lower"]))

    def save_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load_json(cls, path: str | Path) -> "FilippovSystem":
        return cls.from_dict(json.loads(Path(path).read_text()))


class SigmaKind(Enum):
    CROSSING = "crossing"
    SLIDING = "sliding"
    ESCAPING = "escaping"
    TANGENCY = "tangency"


class FoldKind(Enum):
    VISIBLE_FOLD = "visible"
    INVISIBLE_FOLD = "invisible"
    REGULAR = "regular"
    DEGENERATE = "degenerate"


@dataclass(frozen=True)
class TangencyClass:
    """Per-field tangency type at a point of the switching line."""

    upper: FoldKind
    lower: FoldKind

    @property
    def is_two_fold(self) -> bool:
        folds = (FoldKind.VISIBLE_FOLD, FoldKind.INVISIBLE_FOLD)
        return self.upper in folds and self.lower in folds

    @property
    def is_regular_fold(self) -> bool:
        folds = (FoldKind.VISIBLE_FOLD, FoldKind.INVISIBLE_FOLD)
        return (self.upper in folds) != (self.lower in folds)

    @property
    def is_degenerate(self) -> bool:
        return FoldKind.DEGENERATE in (self.upper, self.lower)


@dataclass(frozen=True)
class SigmaClass:
    kind: SigmaKind
    tangency: TangencyClass | None = None


def _fold_kind(field: PolyField, x: float, is_upper: bool, tol: float) -> FoldKind:
    if abs(field.normal_on_sigma(x)) > tol:
        return FoldKind.REGULAR
    # second Lie derivative of h along the field, on the tangency set
    d = field.horizontal_on_sigma(x) * field.d_normal_on_sigma(x)
    if abs(d) < tol:
        return FoldKind.DEGENERATE
    if is_upper:
        return FoldKind.VISIBLE_FOLD if d > 0 else FoldKind.INVISIBLE_FOLD
    return FoldKind.VISIBLE_FOLD if d < 0 else FoldKind.INVISIBLE_FOLD


def classify_tangency(Z: FilippovSystem, x: float, tol: float = TOL_TAN) -> TangencyClass:
    """Per-field fold visibility at (x, 0); valid where at least one field is tangent."""
    return TangencyClass(_fold_kind(Z.upper, x, True, tol),
                         _fold_kind(Z.lower, x, False, tol))


def classify_sigma_point(Z: FilippovSystem, x: float, tol: float = TOL_TAN) -> SigmaClass:
    """Crossing / sliding / escaping / tangency type of the point (x, 0)."""
    xn = Z.upper.normal_on_sigma(x)
    yn = Z.lower.normal_on_sigma(x)
    if abs(xn) <= tol or abs(yn) <= tol:
        return SigmaClass(SigmaKind.TANGENCY, classify_tangency(Z, x, tol))
    if xn * yn > 0.0:
        return SigmaClass(SigmaKind.CROSSING)
    if xn < 0.0 < yn:
        return SigmaClass(SigmaKind.SLIDING)
    return SigmaClass(SigmaKind.ESCAPING)


def sliding_field(Z: FilippovSystem, x: float, tol: float = TOL_TAN) -> tuple[float, float]:
    """Filippov convex-combination field at (x, 0); second component vanishes."""
    x1, x2 = Z.upper.eval(x, 0.0)
    y1, y2 = Z.lower.eval(x, 0.0)
    den = y2 - x2
    if abs(den) < tol:
        raise DenominatorUnderflow(f"Yh - Xh = {den:.3e} at x = {x}")
    return (y2 * x1 - x2 * y1) / den, (y2 * x2 - x2 * y2) / den


def normalized_sliding_field(Z: FilippovSystem, x: float) -> float:
    """X1*Y2 - Y1*X2 at (x, 0): same zeros as the sliding field, defined on all of y = 0."""
    x1, x2 = Z.upper.eval(x, 0.0)
    y1, y2 = Z.lower.eval(x, 0.0)
    return x1 * y2 - y1 * x2
