"""Event-located integration of the smooth half-plane fields and Filippov orbits.

The integrator is an embedded Dormand-Prince 5(4) pair over plain scalars with
cubic-Hermite dense output.  The only event is the crossing of y = 0, located
by sign bracketing plus bisection on the dense output; a departure from the
line (including the quadratic tangent departure from a visible fold) must
clear `arm_threshold` before the detector activates.  Grazing arrivals are
resolved at the dense-output extremum of y when the extremal |y| falls below
`event_tol`.

The stepper core is compiled with numba when available; the identical code
runs in pure Python otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import lru_cache

import numpy as np

from .system import (
    TOL_TAN,
    DenominatorUnderflow,
    FilippovSystem,
    PolyField,
    SigmaKind,
    classify_sigma_point,
    classify_tangency,
    normalized_sliding_field,
    sliding_field,
)

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a hard dependency, kept importable without it
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def deco(fn):
            return fn

        return deco


@dataclass(frozen=True)
class IntegratorOptions:
    rel_tol: float = 1e-12
    abs_tol: float = 1e-14
    max_step: float = 0.05
    max_steps: int = 500_000
    event_tol: float = 1e-10
    arm_threshold: float = 1e-6
    box: float = 1.5
    t_max: float = 50.0

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol", "max_step", "event_tol", "arm_threshold", "box", "t_max"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be strictly positive")
        if self.max_steps <= 0:
            raise ValueError("max_steps must be strictly positive")
        if self.event_tol < self.abs_tol:
            raise ValueError("event_tol must be >= abs_tol")


DEFAULT_OPTS = IntegratorOptions()


class Side(Enum):
    UPPER = "upper"
    LOWER = "lower"


class FieldTag(Enum):
    UPPER = "upper"
    LOWER = "lower"
    SLIDING = "sliding"


class Termination(Enum):
    TIME_EXHAUSTED = "TimeExhausted"
    REACHED_SIGMA = "ReachedSigma"
    PSEUDO_EQUILIBRIUM = "PseudoEquilibrium"
    ESCAPING_AMBIGUITY = "EscapingAmbiguity"
    LEFT_DOMAIN = "LeftDomain"
    STEP_LIMIT = "StepLimit"


class FlowError(RuntimeError):
    pass


class StepLimitError(FlowError):
    pass


class LeftDomainError(FlowError):
    pass


class NoReturnError(FlowError):
    pass


@dataclass
class Arc:
    tag: FieldTag
    t0: float
    t1: float
    samples: list[tuple[float, float, float]]  # (t, x, y), strictly time-ordered


@dataclass
class Trajectory:
    arcs: list[Arc]
    termination: Termination

    def upward_crossings(self) -> list[tuple[float, float]]:
        """(t, x) events where the orbit meets y = 0 moving from below to above."""
        out = []
        for prev, nxt in zip(self.arcs, self.arcs[1:]):
            if prev.tag is FieldTag.LOWER and nxt.tag is FieldTag.UPPER:
                t, x, _ = prev.samples[-1]
                out.append((t, x))
        if self.arcs and self.arcs[0].tag is FieldTag.UPPER:
            t, x, y = self.arcs[0].samples[0]
            if abs(y) <= DEFAULT_OPTS.event_tol:
                out.insert(0, (t, x))
        return out


# Dormand-Prince 5(4) tableau
_A21 = 1.0 / 5.0
_A31, _A32 = 3.0 / 40.0, 9.0 / 40.0
_A41, _A42, _A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
_A51, _A52, _A53, _A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
_A61, _A62, _A63, _A64, _A65 = (9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0,
                                49.0 / 176.0, -5103.0 / 18656.0)
_B1, _B3, _B4, _B5, _B6 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0
_E1, _E3, _E4, _E5, _E6, _E7 = (71.0 / 57600.0, -71.0 / 16695.0, 71.0 / 1920.0,
                                -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0)

# status codes returned by the kernel
HIT = 0
GRAZE = 1
TIME_OUT = 2
STEP_OUT = 3
BOX_OUT = 4


@njit(cache=True)
def _poly(ti, tj, tc, x, y):
    s = 0.0
    for k in range(tc.shape[0]):
        s += tc[k] * x ** ti[k] * y ** tj[k]
    return s


@njit(cache=True)
def _hermite(th, h, v0, f0, v1, f1):
    t2 = th * th
    t3 = t2 * th
    return ((2.0 * t3 - 3.0 * t2 + 1.0) * v0 + (t3 - 2.0 * t2 + th) * h * f0
            + (-2.0 * t3 + 3.0 * t2) * v1 + (t3 - t2) * h * f1)


@njit(cache=True)
def _run_to_sigma(dxi, dxj, dxc, dyi, dyj, dyc, sgn,
                  x0, y0, side, rtol, atol, hmax, max_steps,
                  event_tol, arm_thr, box, tmax, rec, out):
    """March the (possibly negated) field from (x0, y0) until y = 0 fires.

    Returns (status, x_end, y_end, tau_end, nrec).  side is +1 for arcs in
    y >= 0 and -1 for arcs in y <= 0; the event condition is side*y <= 0 after
    arming.
    """
    t = 0.0
    x = x0
    y = y0
    f0x = sgn * _poly(dxi, dxj, dxc, x, y)
    f0y = sgn * _poly(dyi, dyj, dyc, x, y)
    armed = abs(y0) > arm_thr
    h = hmax if hmax < 0.01 else 0.01
    nrec = 0
    cap = out.shape[0]
    if rec == 1 and nrec < cap:
        out[nrec, 0] = t
        out[nrec, 1] = x
        out[nrec, 2] = y
        nrec += 1
    steps = 0
    while True:
        if steps >= max_steps:
            return STEP_OUT, x, y, t, nrec
        if t >= tmax:
            return TIME_OUT, x, y, t, nrec
        if h > tmax - t:
            h = tmax - t
        k1x = f0x
        k1y = f0y
        xx = x + h * (_A21 * k1x)
        yy = y + h * (_A21 * k1y)
        k2x = sgn * _poly(dxi, dxj, dxc, xx, yy)
        k2y = sgn * _poly(dyi, dyj, dyc, xx, yy)
        xx = x + h * (_A31 * k1x + _A32 * k2x)
        yy = y + h * (_A31 * k1y + _A32 * k2y)
        k3x = sgn * _poly(dxi, dxj, dxc, xx, yy)
        k3y = sgn * _poly(dyi, dyj, dyc, xx, yy)
        xx = x + h * (_A41 * k1x + _A42 * k2x + _A43 * k3x)
        yy = y + h * (_A41 * k1y + _A42 * k2y + _A43 * k3y)
        k4x = sgn * _poly(dxi, dxj, dxc, xx, yy)
        k4y = sgn * _poly(dyi, dyj, dyc, xx, yy)
        xx = x + h * (_A51 * k1x + _A52 * k2x + _A53 * k3x + _A54 * k4x)
        yy = y + h * (_A51 * k1y + _A52 * k2y + _A53 * k3y + _A54 * k4y)
        k5x = sgn * _poly(dxi, dxj, dxc, xx, yy)
        k5y = sgn * _poly(dyi, dyj, dyc, xx, yy)
        xx = x + h * (_A61 * k1x + _A62 * k2x + _A63 * k3x + _A64 * k4x + _A65 * k5x)
        yy = y + h * (_A61 * k1y + _A62 * k2y + _A63 * k3y + _A64 * k4y + _A65 * k5y)
        k6x = sgn * _poly(dxi, dxj, dxc, xx, yy)
        k6y = sgn * _poly(dyi, dyj, dyc, xx, yy)
        x1 = x + h * (_B1 * k1x + _B3 * k3x + _B4 * k4x + _B5 * k5x + _B6 * k6x)
        y1 = y + h * (_B1 * k1y + _B3 * k3y + _B4 * k4y + _B5 * k5y + _B6 * k6y)
        k7x = sgn * _poly(dxi, dxj, dxc, x1, y1)
        k7y = sgn * _poly(dyi, dyj, dyc, x1, y1)
        ex = h * (_E1 * k1x + _E3 * k3x + _E4 * k4x + _E5 * k5x + _E6 * k6x + _E7 * k7x)
        ey = h * (_E1 * k1y + _E3 * k3y + _E4 * k4y + _E5 * k5y + _E6 * k6y + _E7 * k7y)
        ax = abs(x) if abs(x) > abs(x1) else abs(x1)
        ay = abs(y) if abs(y) > abs(y1) else abs(y1)
        rx = ex / (atol + rtol * ax)
        ry = ey / (atol + rtol * ay)
        err = math.sqrt(0.5 * (rx * rx + ry * ry))
        steps += 1
        if err > 1.0:
            fac = 0.9 * err ** -0.2
            if fac < 0.2:
                fac = 0.2
            h *= fac
            continue
        t1 = t + h
        if armed:
            if side * y1 <= 0.0:
                # bracket the first root among 32 dense-output slices,
                # then bisect inside it
                th_lo = 0.0
                th_hi = 1.0
                for m in range(1, 33):
                    th = m / 32.0
                    yv = _hermite(th, h, y, f0y, y1, k7y)
                    if side * yv <= 0.0:
                        th_hi = th
                        break
                    th_lo = th
                for _ in range(80):
                    tm = 0.5 * (th_lo + th_hi)
                    if side * _hermite(tm, h, y, f0y, y1, k7y) <= 0.0:
                        th_hi = tm
                    else:
                        th_lo = tm
                the = 0.5 * (th_lo + th_hi)
                xe = _hermite(the, h, x, f0x, x1, k7x)
                ye = _hermite(the, h, y, f0y, y1, k7y)
                te = t + the * h
                if rec == 1 and nrec < cap:
                    out[nrec, 0] = te
                    out[nrec, 1] = xe
                    out[nrec, 2] = ye
                    nrec += 1
                return HIT, xe, ye, te, nrec
            # grazing: extremum of the dense output within the step
            qa = 6.0 * (y - y1) + 3.0 * h * (f0y + k7y)
            qb = -6.0 * (y - y1) - 4.0 * h * f0y - 2.0 * h * k7y
            qc = h * f0y
            th1 = -1.0
            th2 = -1.0
            if abs(qa) > 1e-300:
                disc = qb * qb - 4.0 * qa * qc
                if disc >= 0.0:
                    sq = math.sqrt(disc)
                    th1 = (-qb - sq) / (2.0 * qa)
                    th2 = (-qb + sq) / (2.0 * qa)
            elif abs(qb) > 1e-300:
                th1 = -qc / qb
            for cand in (th1, th2):
                if 0.0 < cand < 1.0:
                    yv = _hermite(cand, h, y, f0y, y1, k7y)
                    if abs(yv) <= event_tol:
                        xe = _hermite(cand, h, x, f0x, x1, k7x)
                        te = t + cand * h
                        if rec == 1 and nrec < cap:
                            out[nrec, 0] = te
                            out[nrec, 1] = xe
                            out[nrec, 2] = yv
                            nrec += 1
                        return GRAZE, xe, yv, te, nrec
        else:
            if abs(y1) > arm_thr:
                armed = True
        if x1 > box or x1 < -box or y1 > box or y1 < -box:
            return BOX_OUT, x1, y1, t1, nrec
        t = t1
        x = x1
        y = y1
        f0x = k7x
        f0y = k7y
        if rec == 1 and nrec < cap:
            out[nrec, 0] = t
            out[nrec, 1] = x
            out[nrec, 2] = y
            nrec += 1
        if err == 0.0:
            fac = 5.0
        else:
            fac = 0.9 * err ** -0.2
            if fac > 5.0:
                fac = 5.0
            elif fac < 0.2:
                fac = 0.2
        h *= fac
        if h > hmax:
            h = hmax


@lru_cache(maxsize=512)
def _term_arrays(field: PolyField):
    dxi = np.array([i for i, _, _ in field.dx], dtype=np.int64)
    dxj = np.array([j for _, j, _ in field.dx], dtype=np.int64)
    dxc = np.array([c for _, _, c in field.dx], dtype=np.float64)
    dyi = np.array([i for i, _, _ in field.dy], dtype=np.int64)
    dyj = np.array([j for _, j, _ in field.dy], dtype=np.int64)
    dyc = np.array([c for _, _, c in field.dy], dtype=np.float64)
    return dxi, dxj, dxc, dyi, dyj, dyc


_EMPTY = np.empty((1, 3), dtype=np.float64)
_REC_CAP = 65536


def _shoot(Z: FilippovSystem, side: Side, x0: float, y0: float, forward: bool,
           opts: IntegratorOptions, record: bool = False):
    """Raw first-hit integration; returns (status, x, y, tau, samples or None)."""
    fld = Z.upper if side is Side.UPPER else Z.lower
    arrs = _term_arrays(fld)
    sgn = 1.0 if forward else -1.0
    s = 1.0 if side is Side.UPPER else -1.0
    buf = np.empty((_REC_CAP, 3), dtype=np.float64) if record else _EMPTY
    status, xe, ye, tau, nrec = _run_to_sigma(
        *arrs, sgn, float(x0), float(y0), s,
        opts.rel_tol, opts.abs_tol, opts.max_step, opts.max_steps,
        opts.event_tol, opts.arm_threshold, opts.box, opts.t_max,
        1 if record else 0, buf)
    samples = buf[:nrec].copy() if record else None
    return status, xe, ye, tau, samples


def _raise_for(status: int, context: str):
    if status == STEP_OUT:
        raise StepLimitError(f"step limit exceeded during {context}")
    if status == BOX_OUT:
        raise LeftDomainError(f"orbit left the bounding box during {context}")
    if status == TIME_OUT:
        raise NoReturnError(f"no switching-line hit within t_max during {context}")
    raise FlowError(f"unexpected integrator status {status} during {context}")


def integrate_to_sigma(Z: FilippovSystem, side: Side, start: tuple[float, float],
                       direction: str = "forward",
                       opts: IntegratorOptions = DEFAULT_OPTS) -> tuple[float, float, Arc]:
    """First y = 0 hit of the chosen half-plane field from `start`.

    direction is "forward" or "backward".  Returns (landing abscissa, signed
    elapsed time, Arc); for backward runs the elapsed time is negative and the
    arc samples are reported in ascending physical time.
    """
    forward = direction == "forward"
    if not forward and direction != "backward":
        raise ValueError(f"direction must be 'forward' or 'backward', got {direction!r}")
    status, xe, ye, tau, samples = _shoot(Z, side, start[0], start[1], forward, opts, record=True)
    if status not in (HIT, GRAZE):
        _raise_for(status, f"{side.value} {direction} run from {start}")
    tag = FieldTag.UPPER if side is Side.UPPER else FieldTag.LOWER
    elapsed = tau if forward else -tau
    pts = [(t if forward else -t, x, y) for t, x, y in samples]
    if not forward:
        pts.reverse()
    arc = Arc(tag, pts[0][0], pts[-1][0], pts)
    return xe, elapsed, arc


def half_map_up(Z: FilippovSystem, x: float, opts: IntegratorOptions = DEFAULT_OPTS) -> float:
    """Forward half-return through y > 0 of the upper field from (x, 0)."""
    if Z.upper.normal_on_sigma(x) < -TOL_TAN:
        raise ValueError(f"upper field does not depart into y > 0 at x = {x}")
    status, xe, _, _, _ = _shoot(Z, Side.UPPER, x, 0.0, True, opts)
    if status not in (HIT, GRAZE):
        _raise_for(status, f"upper half map at x = {x}")
    return xe


def half_map_down_backward(Z: FilippovSystem, x: float,
                           opts: IntegratorOptions = DEFAULT_OPTS) -> float:
    """Backward half-return through y < 0 of the lower field from (x, 0)."""
    if Z.lower.normal_on_sigma(x) < -TOL_TAN:
        raise ValueError(f"lower field does not enter y < 0 backward at x = {x}")
    status, xe, _, _, _ = _shoot(Z, Side.LOWER, x, 0.0, False, opts)
    if status not in (HIT, GRAZE):
        _raise_for(status, f"backward lower half map at x = {x}")
    return xe


def half_map_down_forward(Z: FilippovSystem, x: float,
                          opts: IntegratorOptions = DEFAULT_OPTS) -> float:
    """Forward landing through y < 0 of the lower field from (x, 0)."""
    if Z.lower.normal_on_sigma(x) > TOL_TAN:
        raise ValueError(f"lower field does not depart into y < 0 at x = {x}")
    status, xe, _, _, _ = _shoot(Z, Side.LOWER, x, 0.0, True, opts)
    if status not in (HIT, GRAZE):
        _raise_for(status, f"forward lower half map at x = {x}")
    return xe


def _slide(Z: FilippovSystem, x0: float, t0: float, t_budget: float,
           opts: IntegratorOptions):
    """Integrate the sliding field along y = 0 from x0.

    Returns (samples, end_reason, x_end, t_end) with end_reason in
    {"fold", "pseudo", "time"}.
    """
    def speed(x):
        return sliding_field(Z, x)[0]

    v = speed(x0)
    samples = [(t0, x0, 0.0)]
    if abs(v) < opts.abs_tol:
        return samples, "pseudo", x0, t0
    direction = 1.0 if v > 0.0 else -1.0
    # nearest tangency abscissa in the direction of motion bounds the segment
    stop = None
    for fld in (Z.upper, Z.lower):
        coeffs = np.zeros(8)
        for i, j, c in fld.dy:
            if j == 0:
                coeffs[i] += c
        deg = max((i for i in range(8) if coeffs[i] != 0.0), default=0)
        if deg == 0:
            continue
        roots = np.roots(coeffs[deg::-1])
        for r in roots:
            if abs(r.imag) > 1e-12:
                continue
            xr = float(r.real)
            if direction * (xr - x0) > TOL_TAN and abs(xr) <= opts.box:
                if stop is None or direction * (xr - stop) < 0.0:
                    stop = xr
    t = t0
    x = x0
    while t - t0 < t_budget:
        v = speed(x)
        if abs(v) < opts.abs_tol:
            return samples, "pseudo", x, t
        if stop is not None and abs(stop - x) < 1e-12:
            return samples, "fold", stop, t
        h = 0.02
        if stop is not None:
            h = min(h, 0.5 * abs(stop - x) / max(abs(v), 1e-9))
        h = min(h, t_budget - (t - t0))
        if h <= 0.0:
            break
        # classical RK4 on dx/dt = sliding speed
        k1 = v
        k2 = speed(x + 0.5 * h * k1)
        k3 = speed(x + 0.5 * h * k2)
        k4 = speed(x + h * k3)
        xn = x + h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
        if stop is not None and direction * (xn - stop) >= 0.0:
            frac = (stop - x) / (xn - x) if xn != x else 1.0
            t += h * frac
            x = stop
            samples.append((t, x, 0.0))
            return samples, "fold", stop, t
        t += h
        x = xn
        samples.append((t, x, 0.0))
    return samples, "time", x, t


def filippov_orbit(Z: FilippovSystem, start: tuple[float, float], t_max: float,
                   opts: IntegratorOptions = DEFAULT_OPTS,
                   branch: Side | None = None) -> Trajectory:
    """Global forward orbit composed under the Filippov convention.

    Crossing points switch the active field; sliding segments follow the
    convex-combination field until a fold endpoint or a pseudo-equilibrium;
    a forward arrival in an escaping region stops with EscapingAmbiguity
    unless `branch` selects a continuation field.
    """
    arcs: list[Arc] = []
    if t_max <= 0.0:
        return Trajectory([Arc(FieldTag.UPPER if start[1] >= 0.0 else FieldTag.LOWER,
                               0.0, 0.0, [(0.0, start[0], start[1])])],
                          Termination.TIME_EXHAUSTED)
    if abs(start[0]) > opts.box or abs(start[1]) > opts.box:
        return Trajectory([Arc(FieldTag.UPPER if start[1] >= 0.0 else FieldTag.LOWER,
                               0.0, 0.0, [(0.0, start[0], start[1])])],
                          Termination.LEFT_DOMAIN)

    t = 0.0
    x, y = float(start[0]), float(start[1])
    side: Side | None = None
    if abs(y) > opts.event_tol:
        side = Side.UPPER if y > 0.0 else Side.LOWER

    while t < t_max:
        remaining = t_max - t
        if side is not None:
            run_opts = replace(opts, t_max=remaining)
            status, xe, ye, tau, samples = _shoot(Z, side, x, y, True, run_opts, record=True)
            tag = FieldTag.UPPER if side is Side.UPPER else FieldTag.LOWER
            pts = [(t + ts, xs, ys) for ts, xs, ys in samples]
            arcs.append(Arc(tag, pts[0][0], pts[-1][0], pts))
            t += tau
            x, y = xe, ye
            if status == TIME_OUT:
                return Trajectory(arcs, Termination.TIME_EXHAUSTED)
            if status == BOX_OUT:
                return Trajectory(arcs, Termination.LEFT_DOMAIN)
            if status == STEP_OUT:
                return Trajectory(arcs, Termination.STEP_LIMIT)
            y = 0.0
            side = None
            continue
        # on the switching line: decide the continuation
        sc = classify_sigma_point(Z, x)
        if sc.kind is SigmaKind.CROSSING:
            side = Side.UPPER if Z.upper.normal_on_sigma(x) > 0.0 else Side.LOWER
            continue
        if sc.kind is SigmaKind.ESCAPING:
            if branch is None:
                return Trajectory(arcs, Termination.ESCAPING_AMBIGUITY)
            side = branch
            continue
        if sc.kind is SigmaKind.SLIDING:
            samples, reason, xe, te = _slide(Z, x, t, t_max - t, opts)
            arcs.append(Arc(FieldTag.SLIDING, samples[0][0], samples[-1][0], samples))
            x = xe
            t = te
            if reason == "pseudo":
                return Trajectory(arcs, Termination.PSEUDO_EQUILIBRIUM)
            if reason == "time":
                return Trajectory(arcs, Termination.TIME_EXHAUSTED)
            # fold endpoint reached: depart with the field tangent there
            tc = classify_tangency(Z, x)
            if abs(Z.upper.normal_on_sigma(x)) <= TOL_TAN and not tc.is_degenerate:
                side = Side.UPPER
            elif abs(Z.lower.normal_on_sigma(x)) <= TOL_TAN and not tc.is_degenerate:
                side = Side.LOWER
            else:
                return Trajectory(arcs, Termination.REACHED_SIGMA)
            continue
        # tangency: depart with the tangent field (visible-fold geometry);
        # at a visible two-fold take the upper branch, matching the cycle
        tc = sc.tangency
        if tc is None or tc.is_degenerate:
            return Trajectory(arcs, Termination.REACHED_SIGMA)
        if abs(Z.upper.normal_on_sigma(x)) <= TOL_TAN:
            side = Side.UPPER
        else:
            side = Side.LOWER
    return Trajectory(arcs, Termination.TIME_EXHAUSTED)


def trajectory_to_csv(traj: Trajectory, path) -> None:
    """Write the orbit as CSV with columns t, x, y, arc_index, field_tag."""
    lines = ["t,x,y,arc_index,field_tag"]
    for idx, arc in enumerate(traj.arcs):
        for t, x, y in arc.samples:
            lines.append(f"{t!r},{x!r},{y!r},{idx},{arc.tag.value}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
