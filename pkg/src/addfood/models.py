"""Prey-predator models with predator intra-specific competition and an
additional food supply for the predator.

Two families are provided: a sigmoidal (type-III) consumption model and a
group-defence (type-IV) consumption model.  Each family exists in a
dimensional form and a reduced nondimensional form; the nondimensional form
is the one every numerical routine works with.  The quality ``alpha`` and
quantity ``xi`` of the additional food act as bifurcation parameters in
simulation and as the control variable in the minimum-time problems, where
a rescaled independent variable makes the dynamics affine in the control.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, NamedTuple, Union

import numpy as np

__all__ = [
    "ControlVariable",
    "ControlSpec",
    "DimensionalParamsH3",
    "DimensionalParamsH4",
    "ParamsH3",
    "ParamsH4",
    "Params",
    "SimState",
    "BoundConstants",
    "nondimensionalize_h3",
    "nondimensionalize_h4",
    "with_control",
    "validate_state",
    "rhs_time",
    "clock_rate",
    "affine_parts",
    "rhs_scaled",
    "scaled_jacobian",
    "bound_constants",
    "lyapunov_weight",
    "time_field",
    "affine_field",
    "affine_jacobian_field",
    "clock_field",
]


class ControlVariable(str, Enum):
    """Which food attribute is steered: quality ``alpha`` or quantity ``xi``."""

    QUALITY = "quality"
    QUANTITY = "quantity"


class SimState(NamedTuple):
    """Scaled prey/predator densities (x, y)."""

    x: float
    y: float


def validate_state(state) -> SimState:
    """Check that a state pair is finite and nonnegative, returning it as SimState."""
    x, y = float(state[0]), float(state[1])
    if not (math.isfinite(x) and math.isfinite(y)):
        raise ValueError(f"state must be finite, got ({x}, {y})")
    if x < 0 or y < 0:
        raise ValueError(f"state must be nonnegative, got ({x}, {y})")
    return SimState(x, y)


def _require_positive(obj, *names: str) -> None:
    for n in names:
        if not getattr(obj, n) > 0:
            raise ValueError(f"{type(obj).__name__}.{n} must be > 0, got {getattr(obj, n)}")


def _require_nonnegative(obj, *names: str) -> None:
    for n in names:
        if getattr(obj, n) < 0:
            raise ValueError(f"{type(obj).__name__}.{n} must be >= 0, got {getattr(obj, n)}")


@dataclass(frozen=True)
class DimensionalParamsH3:
    """Dimensional parameters of the type-III model (biomass/time units)."""

    r: float          # prey intrinsic growth rate
    K: float          # prey carrying capacity
    c: float          # rate of predation
    a: float          # half-saturation value
    g: float          # conversion efficiency
    m: float          # predator death rate
    d: float          # predator intra-specific competition
    alpha: float = 0.0     # food quality
    eta_food: float = 0.0  # food conversion factor
    A: float = 0.0         # additional food biomass

    def __post_init__(self) -> None:
        _require_positive(self, "r", "K", "c", "a", "g", "m", "d")
        _require_nonnegative(self, "alpha", "eta_food", "A")


@dataclass(frozen=True)
class DimensionalParamsH4:
    """Dimensional parameters of the type-IV (group defence) model."""

    r: float
    K: float
    c: float
    a: float
    e: float          # maximum predator growth rate
    m1: float         # predator mortality
    delta: float      # intra-specific competition death rate
    b: float          # group defence strength
    alpha: float = 0.0
    eta_food: float = 0.0
    A: float = 0.0

    def __post_init__(self) -> None:
        _require_positive(self, "r", "K", "c", "a", "e", "m1", "delta", "b")
        _require_nonnegative(self, "alpha", "eta_food", "A")


@dataclass(frozen=True)
class ParamsH3:
    """Nondimensional type-III model parameters.

    ``gamma`` is the scaled carrying capacity, ``delta_c`` the scaled
    competition, ``xi`` the scaled food quantity and ``alpha`` the food
    quality.  The predator functional response is x^2/(1 + x^2 + alpha*xi).
    """

    r: float
    gamma: float
    g: float
    m: float
    delta_c: float
    xi: float = 0.0
    alpha: float = 0.0

    def __post_init__(self) -> None:
        _require_positive(self, "r", "gamma", "g", "m")
        _require_nonnegative(self, "delta_c", "xi", "alpha")


@dataclass(frozen=True)
class ParamsH4:
    """Nondimensional type-IV model parameters.

    ``omega`` is the scaled group-defence strength; the functional response
    x/((1 + alpha*xi)(omega x^2 + 1) + x) declines at high prey density.
    """

    r: float
    gamma: float
    e_g: float
    m1: float
    m2: float
    omega: float
    xi: float = 0.0
    alpha: float = 0.0

    def __post_init__(self) -> None:
        _require_positive(self, "r", "gamma", "e_g", "m1")
        _require_nonnegative(self, "m2", "omega", "xi", "alpha")


Params = Union[ParamsH3, ParamsH4]


@dataclass(frozen=True)
class ControlSpec:
    """Designates the controlled food attribute, the frozen partner value and
    the box bounds on the control."""

    variable: ControlVariable
    fixed_value: float
    u_min: float
    u_max: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "variable", ControlVariable(self.variable))
        if self.fixed_value < 0:
            raise ValueError(f"ControlSpec.fixed_value must be >= 0, got {self.fixed_value}")
        if not 0 <= self.u_min < self.u_max:
            raise ValueError(
                f"ControlSpec bounds must satisfy 0 <= u_min < u_max, got [{self.u_min}, {self.u_max}]")

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.u_min + self.u_max)


@dataclass(frozen=True)
class BoundConstants:
    """Constants of the dissipativity bound: the auxiliary rate ``eta_small``,
    the intermediate bound ``m_prime`` and the asymptotic cap
    ``m_cap = m_prime / eta_small``."""

    eta_small: float
    m_prime: float
    m_cap: float


def nondimensionalize_h3(p: DimensionalParamsH3) -> ParamsH3:
    """Reduce the dimensional type-III model via N = a*x, P = a*y/c."""
    return ParamsH3(
        r=p.r,
        gamma=p.K / p.a,
        g=p.g,
        m=p.m,
        delta_c=p.d * p.a / p.c,
        xi=p.eta_food * (p.A / p.a) ** 2,
        alpha=p.alpha,
    )


def nondimensionalize_h4(p: DimensionalParamsH4) -> ParamsH4:
    """Reduce the dimensional type-IV model via N = a*x, P = a*y/c."""
    return ParamsH4(
        r=p.r,
        gamma=p.K / p.a,
        e_g=p.e,
        m1=p.m1,
        m2=p.c / (p.a * p.delta),
        omega=p.b * p.a ** 2,
        xi=p.eta_food * p.A / p.a,
        alpha=p.alpha,
    )


def with_control(params: Params, spec: ControlSpec, u: float) -> Params:
    """Substitute the control value and its frozen partner into the parameter set."""
    if spec.variable is ControlVariable.QUALITY:
        return replace(params, alpha=u, xi=spec.fixed_value)
    return replace(params, xi=u, alpha=spec.fixed_value)


# ---------------------------------------------------------------------------
# Right-hand sides.  The *_field factories return plain-float closures with the
# parameter values captured once; repeated evaluation inside integrators and
# the shooting solver stays off numpy's scalar overhead.
# ---------------------------------------------------------------------------

def time_field(params: Params) -> Callable[[float, float], tuple]:
    """Return f(x, y) -> (dx/dt, dy/dt) for the original-time dynamics."""
    if isinstance(params, ParamsH3):
        r, gam, g, m, dl = params.r, params.gamma, params.g, params.m, params.delta_c
        axi = params.alpha * params.xi
        xi = params.xi

        def f3(x: float, y: float):
            den = 1.0 + x * x + axi
            return (r * x * (1.0 - x / gam) - x * x * y / den,
                    g * y * (x * x + xi) / den - m * y - dl * y * y)

        return f3

    r, gam, e, m1, m2, om = (params.r, params.gamma, params.e_g,
                             params.m1, params.m2, params.omega)
    axi1 = 1.0 + params.alpha * params.xi
    xi = params.xi

    def f4(x: float, y: float):
        w = om * x * x + 1.0
        den = axi1 * w + x
        return (r * x * (1.0 - x / gam) - x * y / den,
                e * (x + xi * w) / den * y - m1 * y - m2 * y * y)

    return f4


def clock_field(params: Params, spec: ControlSpec) -> Callable[[float, float], tuple]:
    """Return c(x, u) -> dt/ds, the rescaling clock, affine in the control."""
    if isinstance(params, ParamsH3):
        # clock = 1 + alpha*xi + x^2
        if spec.variable is ControlVariable.QUALITY:
            xi = spec.fixed_value

            def c3q(x: float, u: float) -> float:
                return 1.0 + x * x + u * xi

            return c3q
        al = spec.fixed_value

        def c3x(x: float, u: float) -> float:
            return 1.0 + x * x + al * u

        return c3x

    # clock = (1 + alpha*xi)(omega x^2 + 1) + x
    om = params.omega
    if spec.variable is ControlVariable.QUALITY:
        xi = spec.fixed_value

        def c4q(x: float, u: float) -> float:
            return (1.0 + u * xi) * (om * x * x + 1.0) + x

        return c4q
    al = spec.fixed_value

    def c4x(x: float, u: float) -> float:
        return (1.0 + al * u) * (om * x * x + 1.0) + x

    return c4x


def affine_field(params: Params, spec: ControlSpec) -> Callable[[float, float], tuple]:
    """Return g(x, y) -> (f0x, f0y, f1x, f1y) with rescaled dynamics f0 + u*f1."""
    if isinstance(params, ParamsH3):
        r, gam, g, m, dl = params.r, params.gamma, params.g, params.m, params.delta_c
        if spec.variable is ControlVariable.QUALITY:
            xi = spec.fixed_value

            def a3q(x: float, y: float):
                grow = r * x * (1.0 - x / gam)
                mort = m * y + dl * y * y
                base = 1.0 + x * x
                return (grow * base - x * x * y,
                        g * (x * x + xi) * y - base * mort,
                        grow * xi,
                        -xi * mort)

            return a3q
        al = spec.fixed_value

        def a3x(x: float, y: float):
            grow = r * x * (1.0 - x / gam)
            mort = m * y + dl * y * y
            base = 1.0 + x * x
            return (grow * base - x * x * y,
                    g * x * x * y - base * mort,
                    al * grow,
                    g * y - al * mort)

        return a3x

    r, gam, e, m1, m2, om = (params.r, params.gamma, params.e_g,
                             params.m1, params.m2, params.omega)
    if spec.variable is ControlVariable.QUALITY:
        xi = spec.fixed_value

        def a4q(x: float, y: float):
            w = om * x * x + 1.0
            grow = r * x * (1.0 - x / gam)
            mort = m1 * y + m2 * y * y
            base = w + x
            return (grow * base - x * y,
                    e * (x + xi * w) * y - base * mort,
                    grow * xi * w,
                    -xi * w * mort)

        return a4q
    al = spec.fixed_value

    def a4x(x: float, y: float):
        w = om * x * x + 1.0
        grow = r * x * (1.0 - x / gam)
        mort = m1 * y + m2 * y * y
        base = w + x
        return (grow * base - x * y,
                e * x * y - base * mort,
                al * grow * w,
                w * (e * y - al * mort))

    return a4x


def affine_jacobian_field(params: Params, spec: ControlSpec) -> Callable[[float, float], tuple]:
    """Return j(x, y) -> (J0, J1), each a row-major 4-tuple of state partials
    of the affine pieces, so that d(rescaled rhs)/d(x,y) = J0 + u*J1."""
    if isinstance(params, ParamsH3):
        r, gam, g, m, dl = params.r, params.gamma, params.g, params.m, params.delta_c
        if spec.variable is ControlVariable.QUALITY:
            xi = spec.fixed_value

            def j3q(x: float, y: float):
                grow = r * x * (1.0 - x / gam)
                dgrow = r * (1.0 - 2.0 * x / gam)
                mort = m * y + dl * y * y
                dmort = m + 2.0 * dl * y
                base = 1.0 + x * x
                j0 = (dgrow * base + 2.0 * x * grow - 2.0 * x * y,
                      -x * x,
                      2.0 * g * x * y - 2.0 * x * mort,
                      g * (x * x + xi) - base * dmort)
                j1 = (dgrow * xi, 0.0, 0.0, -xi * dmort)
                return j0, j1

            return j3q
        al = spec.fixed_value

        def j3x(x: float, y: float):
            grow = r * x * (1.0 - x / gam)
            dgrow = r * (1.0 - 2.0 * x / gam)
            mort = m * y + dl * y * y
            dmort = m + 2.0 * dl * y
            base = 1.0 + x * x
            j0 = (dgrow * base + 2.0 * x * grow - 2.0 * x * y,
                  -x * x,
                  2.0 * g * x * y - 2.0 * x * mort,
                  g * x * x - base * dmort)
            j1 = (al * dgrow, 0.0, 0.0, g - al * dmort)
            return j0, j1

        return j3x

    r, gam, e, m1, m2, om = (params.r, params.gamma, params.e_g,
                             params.m1, params.m2, params.omega)
    if spec.variable is ControlVariable.QUALITY:
        xi = spec.fixed_value

        def j4q(x: float, y: float):
            w = om * x * x + 1.0
            dw = 2.0 * om * x
            grow = r * x * (1.0 - x / gam)
            dgrow = r * (1.0 - 2.0 * x / gam)
            mort = m1 * y + m2 * y * y
            dmort = m1 + 2.0 * m2 * y
            base = w + x
            j0 = (dgrow * base + grow * (dw + 1.0) - y,
                  -x,
                  e * (1.0 + xi * dw) * y - (dw + 1.0) * mort,
                  e * (x + xi * w) - base * dmort)
            j1 = (xi * (dgrow * w + grow * dw),
                  0.0,
                  -xi * dw * mort,
                  -xi * w * dmort)
            return j0, j1

        return j4q
    al = spec.fixed_value

    def j4x(x: float, y: float):
        w = om * x * x + 1.0
        dw = 2.0 * om * x
        grow = r * x * (1.0 - x / gam)
        dgrow = r * (1.0 - 2.0 * x / gam)
        mort = m1 * y + m2 * y * y
        dmort = m1 + 2.0 * m2 * y
        base = w + x
        j0 = (dgrow * base + grow * (dw + 1.0) - y,
              -x,
              e * y - (dw + 1.0) * mort,
              e * x - base * dmort)
        j1 = (al * (dgrow * w + grow * dw),
              0.0,
              dw * (e * y - al * mort),
              w * (e - al * dmort))
        return j0, j1

    return j4x


# ---------------------------------------------------------------------------
# Array-facing wrappers.
# ---------------------------------------------------------------------------

def rhs_time(params: Params, state, spec: ControlSpec | None = None,
             u: float | None = None) -> np.ndarray:
    """Original-time derivative (dx/dt, dy/dt).

    With ``spec`` and ``u`` given, the control value is substituted for the
    steered food attribute; otherwise the values stored in ``params`` apply.
    """
    if spec is not None:
        if u is None:
            raise ValueError("u is required when a ControlSpec is given")
        params = with_control(params, spec, u)
    x, y = float(state[0]), float(state[1])
    return np.array(time_field(params)(x, y))


def clock_rate(params: Params, state, spec: ControlSpec | None = None,
               u: float | None = None) -> float:
    """Clock dt/ds of the control-linearizing rescaling; always >= 1."""
    if spec is not None:
        if u is None:
            raise ValueError("u is required when a ControlSpec is given")
        params = with_control(params, spec, u)
    x = float(state[0])
    if isinstance(params, ParamsH3):
        return 1.0 + params.alpha * params.xi + x * x
    return (1.0 + params.alpha * params.xi) * (params.omega * x * x + 1.0) + x


def affine_parts(params: Params, spec: ControlSpec, state) -> tuple[np.ndarray, np.ndarray]:
    """Control-affine split of the rescaled dynamics: rhs_scaled = f0 + u*f1."""
    x, y = float(state[0]), float(state[1])
    f0x, f0y, f1x, f1y = affine_field(params, spec)(x, y)
    return np.array((f0x, f0y)), np.array((f1x, f1y))


def rhs_scaled(params: Params, spec: ControlSpec, state, u: float) -> np.ndarray:
    """Rescaled-domain derivative (dx/ds, dy/ds), affine in the control."""
    x, y = float(state[0]), float(state[1])
    f0x, f0y, f1x, f1y = affine_field(params, spec)(x, y)
    return np.array((f0x + u * f1x, f0y + u * f1y))


def scaled_jacobian(params: Params, spec: ControlSpec, state, u: float) -> np.ndarray:
    """State Jacobian of the rescaled dynamics at (state, u), shape (2, 2)."""
    x, y = float(state[0]), float(state[1])
    j0, j1 = affine_jacobian_field(params, spec)(x, y)
    return np.array([[j0[0] + u * j1[0], j0[1] + u * j1[1]],
                     [j0[2] + u * j1[2], j0[3] + u * j1[3]]])


def lyapunov_weight(params: Params) -> float:
    """Weight beta of the dissipativity function V = x + y/beta."""
    return params.g if isinstance(params, ParamsH3) else params.e_g


def bound_constants(params: Params, eta_small: float) -> BoundConstants:
    """Constants of the asymptotic bound on V = x + y/beta.

    ``m_prime`` bounds dV/dt + eta_small*V along trajectories and the cap
    ``m_cap = m_prime/eta_small`` absorbs every trajectory with positive
    initial data.  ``eta_small`` must be small against the competition
    coefficient for the bound to be meaningful; a warning is issued otherwise.
    """
    if eta_small <= 0:
        raise ValueError(f"eta_small must be > 0, got {eta_small}")
    eta = float(eta_small)
    food = params.xi / (1.0 + params.alpha * params.xi) if params.xi > 0 else 0.0
    if isinstance(params, ParamsH3):
        comp, beta, death = params.delta_c, params.g, params.m
    else:
        comp, beta, death = params.m2, params.e_g, params.m1
    if eta >= comp:
        warnings.warn(
            f"eta_small={eta} is not small against the competition coefficient {comp}; "
            "the asymptotic cap may be meaningless", stacklevel=2)
    crowd = params.gamma * (params.r + eta) ** 2 / (4.0 * params.r)
    gain = food + (eta - death) / beta
    if comp > 0:
        m_prime = crowd + beta * gain * gain / (4.0 * comp)
    else:
        m_prime = math.inf
    return BoundConstants(eta_small=eta, m_prime=m_prime, m_cap=m_prime / eta)
