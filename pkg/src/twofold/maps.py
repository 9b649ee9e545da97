"""Folds, the two unfolding parameters, and the displacement function on the half-open window.

The displacement at x is the forward upper half-return minus the backward
lower half-return; its zeros are crossing cycles (interior) and critical
crossing cycles (window boundary).  The quadratic coefficients of the two
half maps and of the displacement itself are recovered by a Richardson-style
fit over geometrically spaced abscissae.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .flow import DEFAULT_OPTS, IntegratorOptions, half_map_down_backward, half_map_up
from .system import FilippovSystem, FoldKind, classify_tangency

LAMBDA_DEFAULT = 0.25
FOLD_TOL = 1e-12


class FoldError(RuntimeError):
    pass


class NoFold(FoldError):
    pass


class MultipleFolds(FoldError):
    pass


class OutOfDomain(ValueError):
    pass


class FitIllConditioned(RuntimeError):
    pass


@dataclass(frozen=True)
class FoldPair:
    """Visible fold abscissae of the upper and lower fields with visibility certificates."""

    p_x: float
    p_y: float
    upper_cert: float  # X1 * dX2/dx at (p_x, 0), positive for a visible upper fold
    lower_cert: float  # Y1 * dY2/dx at (p_y, 0), negative for a visible lower fold


def _bracketed_newton(f, df, lo, hi, tol=FOLD_TOL, max_iter=100):
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if flo * fhi > 0.0:
        raise ValueError("no sign change in bracket")
    x = 0.5 * (lo + hi)
    for _ in range(max_iter):
        fx = f(x)
        if fx == 0.0:
            return x
        if flo * fx < 0.0:
            hi = x
        else:
            lo, flo = x, fx
        d = df(x)
        step_ok = d != 0.0
        if step_ok:
            xn = x - fx / d
            step_ok = lo < xn < hi
        x = xn if step_ok else 0.5 * (lo + hi)
        if hi - lo < tol:
            return x
    return x


def _qualifying_roots(field, bracket, is_upper: bool) -> list[float]:
    """Zeros of the normal component on the bracket with positive slope."""
    lo, hi = bracket
    n = 512
    xs = np.linspace(lo, hi, n + 1)
    vals = [field.normal_on_sigma(float(x)) for x in xs]
    roots = []
    for i in range(n):
        a, b = vals[i], vals[i + 1]
        if a == 0.0 and field.d_normal_on_sigma(float(xs[i])) > 0.0:
            roots.append(float(xs[i]))
        elif a * b < 0.0:
            r = _bracketed_newton(field.normal_on_sigma, field.d_normal_on_sigma,
                                  float(xs[i]), float(xs[i + 1]))
            if field.d_normal_on_sigma(r) > 0.0:
                roots.append(r)
    return roots


def find_folds(Z: FilippovSystem, bracket: tuple[float, float] = (-0.3, 0.3)) -> FoldPair:
    """Locate the visible folds of both fields inside the bracket.

    Requires exactly one positive-slope zero of each field's normal component;
    visibility is certified through the exact tangency classification.
    """
    ux = _qualifying_roots(Z.upper, bracket, True)
    lx = _qualifying_roots(Z.lower, bracket, False)
    if not ux or not lx:
        raise NoFold(f"qualifying roots found: upper {len(ux)}, lower {len(lx)}")
    if len(ux) > 1 or len(lx) > 1:
        raise MultipleFolds(f"qualifying roots found: upper {len(ux)}, lower {len(lx)}")
    p_x, p_y = ux[0], lx[0]
    tc_x = classify_tangency(Z, p_x)
    if tc_x.upper is not FoldKind.VISIBLE_FOLD:
        raise NoFold(f"upper tangency at {p_x} is {tc_x.upper.value}, not a visible fold")
    tc_y = classify_tangency(Z, p_y)
    if tc_y.lower is not FoldKind.VISIBLE_FOLD:
        raise NoFold(f"lower tangency at {p_y} is {tc_y.lower.value}, not a visible fold")
    u_cert = Z.upper.horizontal_on_sigma(p_x) * Z.upper.d_normal_on_sigma(p_x)
    l_cert = Z.lower.horizontal_on_sigma(p_y) * Z.lower.d_normal_on_sigma(p_y)
    return FoldPair(p_x, p_y, u_cert, l_cert)


@dataclass(frozen=True)
class Unfolding:
    """Fold separation and landing mismatch in fold-anchored coordinates.

    `system` is the input translated so the upper fold sits at x = 0; `shift`
    records the translation applied to abscissae (new x = old x - shift).
    """

    alpha: float
    beta: float
    q_up: float
    q_down: float
    shift: float
    system: FilippovSystem

    @property
    def a_alpha(self) -> float:
        return max(0.0, self.alpha)


def unfolding(Z: FilippovSystem, opts: IntegratorOptions = DEFAULT_OPTS,
              bracket: tuple[float, float] = (-0.3, 0.3)) -> Unfolding:
    """Compute (alpha, beta) = (fold separation, landing mismatch) for Z."""
    folds = find_folds(Z, bracket)
    Zt = Z.translated(folds.p_x)
    alpha = folds.p_y - folds.p_x
    q_up = half_map_up(Zt, 0.0, opts)
    q_down = half_map_down_backward(Zt, alpha, opts)
    return Unfolding(alpha, q_up - q_down, q_up, q_down, folds.p_x, Zt)


def displacement(Z: FilippovSystem, x: float, *, u: Unfolding | None = None,
                 lam: float = LAMBDA_DEFAULT, opts: IntegratorOptions = DEFAULT_OPTS) -> float:
    """Displacement at abscissa x of the fold-anchored window [A_alpha, A_alpha + lam)."""
    if u is None:
        u = unfolding(Z, opts)
    a = u.a_alpha
    if not (a - 1e-12 <= x < a + lam):
        raise OutOfDomain(f"x = {x} outside [{a}, {a + lam})")
    return half_map_up(u.system, x, opts) - half_map_down_backward(u.system, x, opts)


def _leading_quadratic(us: np.ndarray, ys: np.ndarray) -> tuple[float, float]:
    """Quadratic coefficient of ys ~ c*us^2 by extrapolating ys/us^2 to 0.

    Fits ys/us^2 on the basis [1, u, u^2]; returns (coefficient, relative rms
    residual of the fit).
    """
    ratio = ys / (us * us)
    A = np.vstack([np.ones_like(us), us, us * us]).T
    coef, _, _, _ = np.linalg.lstsq(A, ratio, rcond=None)
    resid = ratio - A @ coef
    c0 = float(coef[0])
    rel = float(np.sqrt(np.mean(resid**2)) / max(abs(c0), 1e-300))
    return c0, rel


_N_FIT = 12
_FIT_SPAN = 0.02  # smallest fit abscissa relative to the largest


def _fit_abscissae(scale: float) -> np.ndarray:
    ratio = _FIT_SPAN ** (1.0 / (_N_FIT - 1))
    return scale * ratio ** np.arange(_N_FIT)


@dataclass
class DisplacementProfile:
    alpha: float
    beta: float
    a_alpha: float
    lam: float
    samples: list[tuple[float, float, float, float]]  # (x, f, up landing, down landing)
    ell: float
    k: float
    L: float
    M: float | None
    residuals: dict[str, float]
    shift: float


def displacement_profile(Z: FilippovSystem, n: int = 24, lam: float = LAMBDA_DEFAULT,
                         opts: IntegratorOptions = DEFAULT_OPTS,
                         u: Unfolding | None = None) -> DisplacementProfile:
    """Sample the displacement over its window and fit the quadratic coefficients.

    `ell` is the quadratic coefficient of the upper half map at its fold, `k`
    the one of the backward lower half map at its fold, L = ell - k, and M the
    displacement coefficient (only fitted at the organizing point where both
    unfolding parameters vanish).
    """
    if n < 8:
        raise ValueError("need at least 8 samples")
    if u is None:
        u = unfolding(Z, opts)
    Zt = u.system
    alpha = u.alpha
    a = u.a_alpha

    xs_up = _fit_abscissae(0.3 * lam)
    ys_up = np.array([half_map_up(Zt, float(x), opts) - u.q_up for x in xs_up])
    ell, r_ell = _leading_quadratic(xs_up, ys_up)

    us_down = _fit_abscissae(0.3 * lam)
    ys_down = np.array([half_map_down_backward(Zt, float(alpha + du), opts) - u.q_down
                        for du in us_down])
    k, r_k = _leading_quadratic(us_down, ys_down)

    residuals = {"ell": r_ell, "k": r_k}
    if max(r_ell, r_k) > 0.10:
        raise FitIllConditioned(f"fit residuals {residuals} exceed 10% of the leading term")

    M = None
    if abs(alpha) + abs(u.beta) < 1e-10:
        xs_m = _fit_abscissae(0.3 * lam)
        ys_m = np.array([half_map_up(Zt, float(x), opts)
                         - half_map_down_backward(Zt, float(x), opts) for x in xs_m])
        M, r_m = _leading_quadratic(xs_m, ys_m)
        residuals["M"] = r_m
        if r_m > 0.10:
            raise FitIllConditioned(f"M fit residual {r_m} exceeds 10% of the leading term")

    samples = []
    for x in np.linspace(a, a + lam, n, endpoint=False):
        up = half_map_up(Zt, float(x), opts)
        down = half_map_down_backward(Zt, float(x), opts)
        samples.append((float(x), up - down, up, down))

    return DisplacementProfile(alpha=alpha, beta=u.beta, a_alpha=a, lam=lam,
                               samples=samples, ell=ell, k=k, L=ell - k, M=M,
                               residuals=residuals, shift=u.shift)


def profile_to_csv(profile: DisplacementProfile, path: str | Path) -> None:
    lines = ["x,f,xi_plus,xi_minus"]
    for x, f, up, down in profile.samples:
        lines.append(f"{x!r},{f!r},{up!r},{down!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def profile_metadata(profile: DisplacementProfile) -> dict:
    return {
        "alpha": profile.alpha,
        "beta": profile.beta,
        "a_alpha": profile.a_alpha,
        "lambda": profile.lam,
        "ell": profile.ell,
        "k": profile.k,
        "L": profile.L,
        "M": profile.M,
        "residuals": profile.residuals,
        "shift": profile.shift,
    }


def profile_metadata_json(profile: DisplacementProfile, path: str | Path) -> None:
    Path(path).write_text(json.dumps(profile_metadata(profile), indent=1) + "\n")
