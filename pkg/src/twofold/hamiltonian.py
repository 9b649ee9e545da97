"""Built-in piecewise-Hamiltonian benchmark family with closed-form return maps.

Two cubic-Hamiltonian half-plane fields glued along y = 0.  At (a, b) = (0, 0)
the system has a visible two-fold at the origin whose cycle closes exactly, and
the two half-return maps have closed forms.  Everything here is independent of
the numerical integrator, which makes the family the ground-truth oracle for
the rest of the package.
"""

from __future__ import annotations

import math

from .system import FilippovSystem, PolyField

FAMILY_ID = "hamiltonian7"

PARAM_LIMIT = 0.2


class DomainError(ValueError):
    """Closed-form map evaluated outside its radicand domain."""


def _check_params(a: float, b: float) -> None:
    if abs(a) > PARAM_LIMIT or abs(b) > PARAM_LIMIT:
        raise ValueError(f"parameters out of range: |a|, |b| must be <= {PARAM_LIMIT}")


def make_system(a: float, b: float) -> FilippovSystem:
    """Family member at (a, b).

    Upper field (1 - y, x - 8x^3); lower field (-1 - y, (x - a)(1 + a - 2b - 3x))
    with the second component expanded to exact monomial coefficients.
    """
    _check_params(a, b)
    upper = PolyField(
        dx=((0, 0, 1.0), (0, 1, -1.0)),
        dy=((1, 0, 1.0), (3, 0, -8.0)),
    )
    lower = PolyField(
        dx=((0, 0, -1.0), (0, 1, -1.0)),
        dy=((2, 0, -3.0), (1, 0, 1.0 + 4.0 * a - 2.0 * b), (0, 0, -a * (1.0 + a - 2.0 * b))),
    )
    return FilippovSystem(upper, lower)


def hamiltonian_value(side: str, a: float, b: float, p: tuple[float, float]) -> float:
    """Conserved quantity of the upper or lower field at a point.

    side is "upper" or "lower".  Exact polynomial arithmetic; conserved along
    the matching field's orbits.
    """
    x, y = p
    if side == "upper":
        return 2.0 * x**4 - x * x / 2.0 + y - y * y / 2.0
    if side == "lower":
        return (x**3 - (1.0 + 4.0 * a - 2.0 * b) * x * x / 2.0
                + a * (1.0 + a - 2.0 * b) * x - y * y / 2.0 - y)
    raise ValueError(f"side must be 'upper' or 'lower', got {side!r}")


def upper_return_exact(x0: float) -> float:
    """First forward intersection with y = 0 of the upper orbit through (x0, 0).

    Closed form sqrt(1 - 4 x0^2) / 2, independent of (a, b).  The landing is
    transversal for 0 <= x0 < 1/(2 sqrt 2).
    """
    r = 1.0 - 4.0 * x0 * x0
    if r < 0.0:
        raise DomainError(f"radicand negative at x0 = {x0}")
    return math.sqrt(r) / 2.0


def lower_return_exact(a: float, b: float, x0: float) -> float:
    """First backward intersection with y = 0 of the lower orbit through (x0, 0).

    Valid on x0 >= a; satisfies lower_return_exact(a, b, a) = 1/2 - b identically.
    """
    r = (1.0 - 8.0 * a - 2.0 * b + 6.0 * x0) * (1.0 - 2.0 * b - 2.0 * x0)
    if r < 0.0:
        raise DomainError(f"radicand negative at (a, b, x0) = ({a}, {b}, {x0})")
    return (1.0 + 4.0 * a - 2.0 * b - 2.0 * x0 + math.sqrt(r)) / 4.0


def displacement_exact(a: float, b: float, x0: float) -> float:
    """Closed-form displacement: upper return minus backward lower return."""
    return upper_return_exact(x0) - lower_return_exact(a, b, x0)


def beta2_exact(alpha: float) -> float:
    """Unstable critical-crossing curve, by algebraic elimination: (1 - sqrt(1 - 4 a^2)) / 2."""
    return (1.0 - math.sqrt(1.0 - 4.0 * alpha * alpha)) / 2.0


def beta3_exact(a: float) -> float:
    """Stable critical-crossing curve, by radical elimination: -2 a^2 / (1 - 4a)."""
    return -2.0 * a * a / (1.0 - 4.0 * a)
