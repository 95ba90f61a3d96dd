"""Pontryagin quantities for the four minimum-time problems
(model family x controlled food attribute).

Because the rescaled dynamics are affine in the control, the Hamiltonian is
affine too; its slope in the control is the switching function whose sign
drives the bang-bang law.  On candidate singular arcs the switching function
and its flow derivative both vanish, each forcing a costate ratio p/q; their
equality defines a state-space locus whose zeros are the candidate switching
points, located here by scan-and-bisect root finding.
"""

from __future__ import annotations

import math
from typing import Callable, NamedTuple

import numpy as np

from .models import (
    ControlSpec,
    ControlVariable,
    Params,
    ParamsH3,
    affine_field,
    affine_jacobian_field,
    rhs_scaled,
)

__all__ = [
    "Costate",
    "DegeneratePointError",
    "hamiltonian",
    "adjoint_rhs",
    "switching_function",
    "bang_bang_law",
    "switching_rate_coefficients",
    "singular_ratio_sigma0",
    "singular_ratio_dsigma0",
    "singular_locus",
    "singular_locus_roots",
]

SIGMA_TOL = 1e-10


class Costate(NamedTuple):
    """Multipliers (p, q) adjoint to the prey/predator states."""

    p: float
    q: float


class DegeneratePointError(ValueError):
    """A costate-ratio or locus expression is undefined at the queried state."""


def hamiltonian(params: Params, spec: ControlSpec, state, costate, u: float) -> float:
    """H = p*dx/ds + q*dy/ds with the rescaled dynamics; affine in u."""
    fx, fy = rhs_scaled(params, spec, state, u)
    return float(costate[0]) * fx + float(costate[1]) * fy


def adjoint_rhs(params: Params, spec: ControlSpec, state, costate, u: float) -> np.ndarray:
    """Costate derivative (dp/ds, dq/ds) = -(state Jacobian)^T (p, q)."""
    x, y = float(state[0]), float(state[1])
    p, q = float(costate[0]), float(costate[1])
    j0, j1 = affine_jacobian_field(params, spec)(x, y)
    jxx, jxy, jyx, jyy = (j0[0] + u * j1[0], j0[1] + u * j1[1],
                          j0[2] + u * j1[2], j0[3] + u * j1[3])
    return np.array((-(p * jxx + q * jyx), -(p * jxy + q * jyy)))


def switching_function(params: Params, spec: ControlSpec, state, costate) -> float:
    """sigma = dH/du = p*f1_x + q*f1_y, the costate component along the
    control direction field."""
    x, y = float(state[0]), float(state[1])
    _, _, f1x, f1y = affine_field(params, spec)(x, y)
    return float(costate[0]) * f1x + float(costate[1]) * f1y


def bang_bang_law(sigma: float, spec: ControlSpec, previous_u: float,
                  sigma_tol: float = SIGMA_TOL) -> float:
    """Minimizing control for a Hamiltonian with slope ``sigma``: the upper
    bound when sigma < 0, the lower bound when sigma > 0.  Within
    ``sigma_tol`` of zero the previous value is kept so roundoff cannot
    chatter the control."""
    if sigma < -sigma_tol:
        return spec.u_max
    if sigma > sigma_tol:
        return spec.u_min
    return previous_u


def switching_rate_coefficients(params: Params, spec: ControlSpec, state) -> tuple[float, float]:
    """Coefficients (A, B) with d(sigma)/ds = A*p + B*q along the joint
    state/costate flow.

    The rate of the switching function is linear in the costate and, the
    dynamics being control-affine, independent of the control value; it is
    assembled here by the chain rule with unit costates.
    """
    x, y = float(state[0]), float(state[1])
    aff = affine_field(params, spec)
    jac = affine_jacobian_field(params, spec)
    u = spec.midpoint  # any value gives the same result
    f0x, f0y, f1x, f1y = aff(x, y)
    fx, fy = f0x + u * f1x, f0y + u * f1y
    j0, j1 = jac(x, y)
    jxx, jxy, jyx, jyy = (j0[0] + u * j1[0], j0[1] + u * j1[1],
                          j0[2] + u * j1[2], j0[3] + u * j1[3])
    # flow derivative of the control direction field: d(f1)/ds = J_{f1} (fx, fy)
    df1x = j1[0] * fx + j1[1] * fy
    df1y = j1[2] * fx + j1[3] * fy
    # unit costate (1, 0): pdot = -jxx, qdot = -jxy
    A = -jxx * f1x - jxy * f1y + df1x
    # unit costate (0, 1): pdot = -jyx, qdot = -jyy
    B = -jyx * f1x - jyy * f1y + df1y
    return A, B


def singular_ratio_sigma0(params: Params, spec: ControlSpec, state) -> float:
    """Costate ratio p/q forced by sigma = 0, i.e. -f1_y/f1_x."""
    x, y = float(state[0]), float(state[1])
    _, _, f1x, f1y = affine_field(params, spec)(x, y)
    if f1x == 0.0 or x == 0.0 or x == params.gamma:
        raise DegeneratePointError(
            f"sigma = 0 does not determine p/q at x={x} (control direction "
            "field has no prey component there)")
    return -f1y / f1x


def singular_ratio_dsigma0(params: Params, spec: ControlSpec, state) -> float:
    """Costate ratio p/q forced by d(sigma)/ds = 0."""
    A, B = switching_rate_coefficients(params, spec, state)
    if A == 0.0:
        raise DegeneratePointError(
            f"d(sigma)/ds = 0 does not determine p/q at state {tuple(state)}")
    return -B / A


def _locus_h3_quality(params: ParamsH3, spec: ControlSpec, x: float, y: float) -> float:
    # cubic in y whose zeros equate the two costate ratios
    r, gam, g, m, dl = params.r, params.gamma, params.g, params.m, params.delta_c
    xi = spec.fixed_value
    return (gam * gam * x * y * (m + dl * y) * (m - r + dl * y)
            + g * r * (gam - x) * (2.0 * r * (gam - x) * x * x
                                   + dl * gam * (x * x + xi) * y))


def _locus_h3_quantity(params: ParamsH3, spec: ControlSpec, x: float, y: float) -> float:
    # rational combination of the two costate ratios; poles at x = gamma and
    # where the rate-ratio denominator vanishes
    r, gam, g, m, dl = params.r, params.gamma, params.g, params.m, params.delta_c
    al = spec.fixed_value
    if x == gam:
        raise DegeneratePointError("locus undefined at x = gamma")
    den2 = (2.0 * al * r * r * (gam - x) ** 2 * x
            - gam * gam * (g + al * (r - m)) * y + al * dl * gam * gam * y * y)
    if den2 == 0.0:
        raise DegeneratePointError(f"locus denominator vanishes at ({x}, {y})")
    term1 = x * y * (-g + al * (m + dl * y)) / (al * r * (gam - x))
    term2 = y * (-dl * g * gam * (1.0 + x * x) * y
                 + al * x * x * (-2.0 * r * (gam - x) * (m + dl * y)
                                 + g * (2.0 * gam * r - 2.0 * r * x + dl * gam * y))) / den2
    return term1 + term2


def singular_locus(params: Params, spec: ControlSpec, state) -> float:
    """Residual whose zero set holds the candidate singular/switching states.

    It expresses equality of the two costate ratios.  The type-III forms are
    kept in their familiar shapes (a cubic for quality control, a rational
    combination for quantity control); the type-IV forms are the
    cross-multiplied ratio equality f1_y*A - f1_x*B assembled from the same
    analytic pieces as every other quantity here.
    """
    x, y = float(state[0]), float(state[1])
    if isinstance(params, ParamsH3):
        if spec.variable is ControlVariable.QUALITY:
            return _locus_h3_quality(params, spec, x, y)
        return _locus_h3_quantity(params, spec, x, y)
    _, _, f1x, f1y = affine_field(params, spec)(x, y)
    A, B = switching_rate_coefficients(params, spec, state)
    return f1y * A - f1x * B


def singular_locus_roots(params: Params, spec: ControlSpec, fixed_var: str,
                         fixed_value: float, interval: tuple[float, float],
                         n_scan: int = 2000) -> np.ndarray:
    """All zeros of the locus residual along one state-space slice.

    The free coordinate is scanned on ``n_scan`` uniform nodes; every sign
    change is refined by bisection to a bracket width of 1e-12 and a residual
    at most 1e-10 of the scan scale, then polished by one guarded Newton step
    when the local slope is well conditioned.  Roots return in ascending
    order; none is not an error.
    """
    if fixed_var not in ("x", "y"):
        raise ValueError("fixed_var must be 'x' or 'y'")
    lo, hi = float(interval[0]), float(interval[1])
    if not hi > lo:
        raise ValueError("interval must be nonempty")
    if n_scan < 2:
        raise ValueError("n_scan must be >= 2")

    if fixed_var == "x":
        def f(v: float) -> float:
            return singular_locus(params, spec, (fixed_value, v))
    else:
        def f(v: float) -> float:
            return singular_locus(params, spec, (v, fixed_value))

    nodes = np.linspace(lo, hi, n_scan)
    vals = np.array([f(v) for v in nodes])
    scale = 1.0 + float(np.max(np.abs(vals)))
    roots = []
    for i in range(n_scan - 1):
        a, b = float(nodes[i]), float(nodes[i + 1])
        fa, fb = float(vals[i]), float(vals[i + 1])
        if fa == 0.0:
            roots.append(a)
            continue
        if fa * fb >= 0.0:
            continue
        while b - a > 1e-12:
            mid = 0.5 * (a + b)
            fm = f(mid)
            if fm == 0.0:
                a = b = mid
                break
            if fa * fm < 0.0:
                b, fb = mid, fm
            else:
                a, fa = mid, fm
        root = 0.5 * (a + b)
        # guarded Newton polish with a centered slope estimate
        step = max(1e-7, 1e-9 * abs(root))
        slope = (f(root + step) - f(root - step)) / (2.0 * step)
        if math.isfinite(slope) and abs(slope) > 1e-8 * scale:
            cand = root - f(root) / slope
            if a - 1e-9 <= cand <= b + 1e-9 and abs(f(cand)) <= abs(f(root)):
                root = cand
        if abs(f(root)) <= 1e-10 * scale:
            roots.append(root)
    if vals[-1] == 0.0:
        roots.append(float(nodes[-1]))
    return np.array(sorted(roots))
