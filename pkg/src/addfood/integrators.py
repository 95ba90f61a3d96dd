"""Deterministic ODE integration for the model dynamics.

Provides a classic fixed-step fourth-order Runge-Kutta scheme, an embedded
Dormand-Prince 5(4) adaptive scheme, piecewise-constant-control simulators
whose step grids align with the control breakpoints, and the map that
re-expresses a rescaled-domain trajectory in original time by accumulating
the clock rate.  All routines are pure and bit-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .models import ControlSpec, Params, affine_field, clock_field, time_field

__all__ = [
    "NonFiniteError",
    "MaxStepsExceededError",
    "IntegratorOptions",
    "Trajectory",
    "PiecewiseControl",
    "integrate_fixed",
    "integrate_adaptive",
    "simulate_scaled",
    "simulate_time",
    "reparametrize_to_time",
    "pull_back_control",
]


class NonFiniteError(RuntimeError):
    """A derivative or state evaluated to NaN or infinity."""


class MaxStepsExceededError(RuntimeError):
    """The adaptive integrator hit its step budget before the span end."""


@dataclass(frozen=True)
class IntegratorOptions:
    abs_tol: float = 1e-9
    rel_tol: float = 1e-7
    h: float = 1e-3
    max_steps: int = 1_000_000

    def __post_init__(self) -> None:
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("tolerances must be > 0")
        if self.h <= 0:
            raise ValueError("fixed step h must be > 0")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")


@dataclass
class Trajectory:
    """Sampled solution: ``grid`` holds the independent variable (strictly
    increasing), ``states`` the matching rows.  Costates, per-sample controls
    and scalar diagnostic channels are attached where available."""

    grid: np.ndarray
    states: np.ndarray
    domain: str = "time"          # "time" or "scaled"
    costates: np.ndarray | None = None
    controls: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.grid = np.asarray(self.grid, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        if self.grid.ndim != 1 or self.states.shape[0] != self.grid.size:
            raise ValueError("grid and states must have matching leading length")
        if self.grid.size > 1 and not np.all(np.diff(self.grid) > 0):
            raise ValueError("grid must be strictly increasing")

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    @property
    def span(self) -> float:
        return float(self.grid[-1] - self.grid[0])


@dataclass(frozen=True)
class PiecewiseControl:
    """Piecewise-constant control: ``values[i]`` applies on
    [breakpoints[i], breakpoints[i+1])."""

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "breakpoints", np.asarray(self.breakpoints, dtype=float))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.breakpoints.ndim != 1 or self.values.ndim != 1:
            raise ValueError("breakpoints and values must be 1-d")
        if self.values.size != self.breakpoints.size - 1:
            raise ValueError("need exactly one value per interval")
        if not np.all(np.diff(self.breakpoints) > 0):
            raise ValueError("breakpoints must be strictly increasing")

    @property
    def span(self) -> float:
        return float(self.breakpoints[-1] - self.breakpoints[0])

    def interval_index(self, s: float) -> int:
        i = int(np.searchsorted(self.breakpoints, s, side="right") - 1)
        return min(max(i, 0), self.values.size - 1)

    def value_at(self, s: float) -> float:
        return float(self.values[self.interval_index(s)])

    @staticmethod
    def constant(u: float, span: float, start: float = 0.0) -> "PiecewiseControl":
        return PiecewiseControl(np.array([start, start + span]), np.array([float(u)]))


def _check_finite(vec: np.ndarray, where: str) -> None:
    if not np.all(np.isfinite(vec)):
        raise NonFiniteError(f"non-finite value during {where}")


def integrate_fixed(f: Callable[[float, np.ndarray], np.ndarray], state0,
                    grid: Sequence[float], domain: str = "time") -> Trajectory:
    """Fourth-order Runge-Kutta with one step per grid interval, sampling at
    exactly the grid points."""
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2 or not np.all(np.diff(grid) > 0):
        raise ValueError("grid must be strictly increasing with at least two points")
    y = np.asarray(state0, dtype=float).copy()
    out = np.empty((grid.size, y.size))
    out[0] = y
    for i in range(grid.size - 1):
        t, h = grid[i], grid[i + 1] - grid[i]
        k1 = np.asarray(f(t, y))
        k2 = np.asarray(f(t + 0.5 * h, y + 0.5 * h * k1))
        k3 = np.asarray(f(t + 0.5 * h, y + 0.5 * h * k2))
        k4 = np.asarray(f(t + h, y + h * k3))
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        _check_finite(y, "fixed-step integration")
        out[i + 1] = y
    return Trajectory(grid=grid.copy(), states=out, domain=domain)


# Dormand-Prince 5(4) tableau (FSAL).
_DP_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_DP_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_DP_ERR = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)


def integrate_adaptive(f: Callable[[float, np.ndarray], np.ndarray], state0,
                       span: tuple[float, float],
                       opts: IntegratorOptions | None = None,
                       domain: str = "time") -> Trajectory:
    """Embedded Dormand-Prince 5(4) pair with proportional step control.

    Every accepted step keeps the local error estimate below
    abs_tol + rel_tol*|state| componentwise (in the RMS sense).
    """
    opts = opts or IntegratorOptions()
    t0, t1 = float(span[0]), float(span[1])
    if not t1 > t0:
        raise ValueError("span must have positive length")
    y = np.asarray(state0, dtype=float).copy()
    ts = [t0]
    ys = [y.copy()]
    t = t0
    k = [np.zeros_like(y) for _ in range(7)]
    k[0] = np.asarray(f(t, y), dtype=float)
    _check_finite(k[0], "adaptive integration")
    scale0 = opts.abs_tol + opts.rel_tol * np.abs(y)
    d0 = math.sqrt(float(np.mean((y / scale0) ** 2)))
    d1 = math.sqrt(float(np.mean((k[0] / scale0) ** 2)))
    h = min(t1 - t0, 0.01 * d0 / d1 if d1 > 1e-10 else (t1 - t0) / 100.0)
    h = max(h, 1e-12)
    nsteps = 0
    while t < t1:
        if nsteps >= opts.max_steps:
            raise MaxStepsExceededError(
                f"exceeded {opts.max_steps} steps at t={t} (span end {t1})")
        nsteps += 1
        h = min(h, t1 - t)
        for i in range(1, 7):
            yi = y.copy()
            for j, a in enumerate(_DP_A[i]):
                if a != 0.0:
                    yi += (h * a) * k[j]
            k[i] = np.asarray(f(t + _DP_C[i] * h, yi), dtype=float)
            _check_finite(k[i], "adaptive integration")
        y_new = yi  # seventh stage point equals the fifth-order solution (FSAL)
        err = np.zeros_like(y)
        for j, e in enumerate(_DP_ERR):
            if e != 0.0:
                err += (h * e) * k[j]
        scale = opts.abs_tol + opts.rel_tol * np.maximum(np.abs(y), np.abs(y_new))
        enorm = math.sqrt(float(np.mean((err / scale) ** 2)))
        if enorm <= 1.0:
            t += h
            y = y_new
            k[0] = k[6]  # FSAL reuse
            ts.append(t)
            ys.append(y.copy())
        factor = 0.9 * (enorm ** -0.2) if enorm > 0 else 5.0
        h *= min(5.0, max(0.2, factor))
        if h <= 1e-14 * max(1.0, abs(t)):
            raise NonFiniteError(f"step size underflow at t={t}")
    return Trajectory(grid=np.array(ts), states=np.array(ys), domain=domain)


# ---------------------------------------------------------------------------
# Piecewise-constant-control simulation, step grids aligned to breakpoints.
# ---------------------------------------------------------------------------

def _rk4_piecewise(fxy: Callable, control: PiecewiseControl, state0,
                   substeps: int, domain: str) -> Trajectory:
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    x, y = float(state0[0]), float(state0[1])
    bp, vals = control.breakpoints, control.values
    grid = [bp[0]]
    states = [(x, y)]
    us = [vals[0]]
    for i in range(vals.size):
        u = float(vals[i])
        h = (bp[i + 1] - bp[i]) / substeps
        s = bp[i]
        for j in range(substeps):
            k1x, k1y = fxy(x, y, u)
            k2x, k2y = fxy(x + 0.5 * h * k1x, y + 0.5 * h * k1y, u)
            k3x, k3y = fxy(x + 0.5 * h * k2x, y + 0.5 * h * k2y, u)
            k4x, k4y = fxy(x + h * k3x, y + h * k3y, u)
            x += (h / 6.0) * (k1x + 2.0 * (k2x + k3x) + k4x)
            y += (h / 6.0) * (k1y + 2.0 * (k2y + k3y) + k4y)
            if not (math.isfinite(x) and math.isfinite(y)):
                raise NonFiniteError(f"non-finite state near s={s}")
            s = bp[i] + (j + 1) * h if j + 1 < substeps else bp[i + 1]
            grid.append(s)
            states.append((x, y))
            us.append(u)
    return Trajectory(grid=np.array(grid), states=np.array(states), domain=domain,
                      controls=np.array(us))


def simulate_scaled(params: Params, spec: ControlSpec, control: PiecewiseControl,
                    state0, substeps: int = 16) -> Trajectory:
    """Integrate the rescaled dynamics under a piecewise-constant control with
    RK4, ``substeps`` steps per control interval."""
    aff = affine_field(params, spec)

    def fxy(x: float, y: float, u: float):
        f0x, f0y, f1x, f1y = aff(x, y)
        return f0x + u * f1x, f0y + u * f1y

    return _rk4_piecewise(fxy, control, state0, substeps, domain="scaled")


def simulate_time(params: Params, spec: ControlSpec, control: PiecewiseControl,
                  state0, substeps: int = 16) -> Trajectory:
    """Integrate the original-time dynamics under a piecewise-constant control
    (breakpoints in time units)."""
    aff = affine_field(params, spec)
    clk = clock_field(params, spec)

    def fxy(x: float, y: float, u: float):
        f0x, f0y, f1x, f1y = aff(x, y)
        c = clk(x, u)
        return (f0x + u * f1x) / c, (f0y + u * f1y) / c

    return _rk4_piecewise(fxy, control, state0, substeps, domain="time")


def reparametrize_to_time(traj: Trajectory, params: Params, spec: ControlSpec,
                          control: PiecewiseControl) -> Trajectory:
    """Map a rescaled-domain trajectory to original time.

    The elapsed time is the running trapezoidal accumulation of the clock
    rate over the trajectory samples; states are carried over unchanged.
    Control discontinuities are respected by evaluating the clock with the
    control value of the interval each sample pair lies in, which assumes the
    sample grid is aligned to the control breakpoints.
    """
    if traj.domain != "scaled":
        raise ValueError("expected a scaled-domain trajectory")
    clk = clock_field(params, spec)
    s = traj.grid
    xs = traj.states[:, 0]
    t = np.empty_like(s)
    t[0] = 0.0
    for i in range(s.size - 1):
        u = control.value_at(0.5 * (s[i] + s[i + 1]))
        ci = clk(float(xs[i]), u)
        cj = clk(float(xs[i + 1]), u)
        t[i + 1] = t[i] + 0.5 * (ci + cj) * (s[i + 1] - s[i])
    return Trajectory(grid=t, states=traj.states.copy(), domain="time",
                      costates=None if traj.costates is None else traj.costates.copy(),
                      controls=None if traj.controls is None else traj.controls.copy(),
                      diagnostics=dict(traj.diagnostics))


def pull_back_control(traj: Trajectory, traj_t: Trajectory,
                      control: PiecewiseControl) -> PiecewiseControl:
    """Express a rescaled-domain control in original time using the sample
    map s -> t of a reparametrized trajectory pair."""
    t_of_s = np.interp(control.breakpoints, traj.grid, traj_t.grid)
    return PiecewiseControl(breakpoints=t_of_s, values=control.values.copy())
