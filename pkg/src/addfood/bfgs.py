"""Dense quasi-Newton minimization with a strong-Wolfe line search, plus the
smooth box reparametrization that keeps bound-constrained controls inside an
unconstrained decision space."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import expit

__all__ = [
    "LineSearchError",
    "OptimizerOptions",
    "BFGSResult",
    "bfgs_minimize",
    "box_reparam",
]

Objective = Callable[[np.ndarray], tuple[float, np.ndarray]]


class LineSearchError(RuntimeError):
    """The strong-Wolfe search could not produce an acceptable step."""


@dataclass(frozen=True)
class OptimizerOptions:
    grad_tol: float = 1e-8
    max_iters: int = 500
    wolfe_c1: float = 1e-4
    wolfe_c2: float = 0.9
    initial_step: float = 1.0
    keep_vectors: bool = False

    def __post_init__(self) -> None:
        if not 0.0 < self.wolfe_c1 < self.wolfe_c2 < 1.0:
            raise ValueError("need 0 < c1 < c2 < 1")
        if self.grad_tol <= 0 or self.max_iters < 1 or self.initial_step <= 0:
            raise ValueError("invalid optimizer options")


@dataclass
class BFGSResult:
    x: np.ndarray
    value: float
    gradient: np.ndarray
    iterations: int
    converged: bool
    status: str
    n_evals: int
    history: list = field(default_factory=list)


def _cubic_min(a, fa, dfa, b, fb, dfb):
    """Minimizer of the cubic through (a, fa, dfa), (b, fb, dfb); None when
    degenerate."""
    d1 = dfa + dfb - 3.0 * (fa - fb) / (a - b)
    disc = d1 * d1 - dfa * dfb
    if disc < 0.0:
        return None
    d2 = math.copysign(math.sqrt(disc), b - a)
    denom = dfb - dfa + 2.0 * d2
    if denom == 0.0:
        return None
    t = b - (b - a) * (dfb + d2 - d1) / denom
    return t if math.isfinite(t) else None


def _zoom(phi, a_lo, a_hi, f_lo, df_lo, f_hi, df_hi, f0, df0, c1, c2, max_iter=30):
    for _ in range(max_iter):
        a = _cubic_min(a_lo, f_lo, df_lo, a_hi, f_hi, df_hi)
        width = abs(a_hi - a_lo)
        lo, hi = min(a_lo, a_hi), max(a_lo, a_hi)
        if a is None or not (lo + 0.05 * width <= a <= hi - 0.05 * width):
            a = 0.5 * (a_lo + a_hi)
        fa, dfa = phi(a)
        if fa > f0 + c1 * a * df0 or fa >= f_lo:
            a_hi, f_hi, df_hi = a, fa, dfa
        else:
            if abs(dfa) <= -c2 * df0:
                return a, fa, dfa
            if dfa * (a_hi - a_lo) >= 0.0:
                a_hi, f_hi, df_hi = a_lo, f_lo, df_lo
            a_lo, f_lo, df_lo = a, fa, dfa
        if abs(a_hi - a_lo) < 1e-14 * max(1.0, abs(a_lo)):
            break
    raise LineSearchError("zoom bracket collapsed without a strong-Wolfe point")


def _wolfe_search(phi, f0, df0, alpha0, c1, c2, max_iter=25):
    """Strong-Wolfe search on phi(alpha); returns (alpha, f, df)."""
    if df0 >= 0.0:
        raise LineSearchError("search direction is not a descent direction")
    a_prev, f_prev, df_prev = 0.0, f0, df0
    a = alpha0
    for i in range(max_iter):
        fa, dfa = phi(a)
        if fa > f0 + c1 * a * df0 or (i > 0 and fa >= f_prev):
            return _zoom(phi, a_prev, a, f_prev, df_prev, fa, dfa, f0, df0, c1, c2)
        if abs(dfa) <= -c2 * df0:
            return a, fa, dfa
        if dfa >= 0.0:
            return _zoom(phi, a, a_prev, fa, dfa, f_prev, df_prev, f0, df0, c1, c2)
        a_prev, f_prev, df_prev = a, fa, dfa
        a = min(2.5 * a, 1e10)
    raise LineSearchError("no strong-Wolfe step within the expansion budget")


def bfgs_minimize(objective: Objective, x0, opts: OptimizerOptions | None = None) -> BFGSResult:
    """Minimize a smooth objective returning (value, gradient) pairs.

    The inverse Hessian approximation is updated by the standard rank-two
    formula; updates are skipped when the curvature s'y is not safely
    positive.  Convergence is declared on the max-norm of the gradient.  A
    failed line search or an exhausted iteration budget returns the best
    iterate found with ``converged=False``.
    """
    opts = opts or OptimizerOptions()
    x = np.asarray(x0, dtype=float).copy()
    n = x.size
    f, grad = objective(x)
    n_evals = 1
    H = np.eye(n)
    history: list[dict] = []
    status = "max_iterations"
    converged = False
    it = 0
    first = True
    for it in range(1, opts.max_iters + 1):
        gnorm = float(np.max(np.abs(grad)))
        if gnorm <= opts.grad_tol:
            status, converged = "converged", True
            it -= 1
            break
        direction = -H @ grad
        df0 = float(direction @ grad)
        if df0 >= 0.0:  # numerical loss of positive definiteness
            H = np.eye(n)
            direction = -grad
            df0 = float(direction @ grad)

        cache: dict[float, tuple[float, np.ndarray]] = {}

        def phi(alpha: float):
            nonlocal n_evals
            if alpha not in cache:
                fv, gv = objective(x + alpha * direction)
                n_evals += 1
                cache[alpha] = (fv, gv)
            fv, gv = cache[alpha]
            return fv, float(gv @ direction)

        alpha0 = opts.initial_step if not first else min(
            opts.initial_step, 2.0 * max(abs(f), 1.0) / max(-df0, 1e-12))
        try:
            alpha, f_new, _ = _wolfe_search(phi, f, df0, alpha0,
                                            opts.wolfe_c1, opts.wolfe_c2)
        except LineSearchError:
            status = "line_search_failed"
            break
        grad_new = cache[alpha][1]
        s = alpha * direction
        yvec = grad_new - grad
        if opts.keep_vectors:
            history.append({"f": f, "gnorm": gnorm, "alpha": alpha,
                            "x": x.copy(), "direction": direction.copy(),
                            "df0": df0, "f_new": f_new,
                            "df_new": float(grad_new @ direction)})
        else:
            history.append({"f": f, "gnorm": gnorm, "alpha": alpha})
        x = x + s
        f = f_new
        grad = grad_new
        sy = float(s @ yvec)
        if sy > 1e-12 * float(np.linalg.norm(s)) * float(np.linalg.norm(yvec)):
            if first:
                H = (sy / float(yvec @ yvec)) * np.eye(n)
                first = False
            rho = 1.0 / sy
            Hy = H @ yvec
            # H <- (I - rho s y')H(I - rho y s') + rho s s'
            H = H - rho * (np.outer(s, Hy) + np.outer(Hy, s)) \
                + (rho * rho * float(yvec @ Hy) + rho) * np.outer(s, s)
    else:
        it = opts.max_iters
    if not converged and float(np.max(np.abs(grad))) <= opts.grad_tol:
        status, converged = "converged", True
    history.append({"f": f, "gnorm": float(np.max(np.abs(grad)))})
    return BFGSResult(x=x, value=f, gradient=grad, iterations=it,
                      converged=converged, status=status, n_evals=n_evals,
                      history=history)


def box_reparam(z, u_min: float, u_max: float) -> tuple[np.ndarray, np.ndarray]:
    """Map unconstrained values to the open box (u_min, u_max) through the
    logistic function; also return du/dz for gradient chaining."""
    if not u_max > u_min:
        raise ValueError("need u_max > u_min")
    z = np.asarray(z, dtype=float)
    sig = expit(z)
    width = u_max - u_min
    return u_min + width * sig, width * sig * (1.0 - sig)
