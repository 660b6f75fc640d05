"""Quadrature, root-finding and scalar minimization kernels.

All integrands are expected to be vectorized: they receive numpy arrays of
abscissae and return arrays of the same leading shape.  The adaptive
Gauss-Kronrod machinery is delegated to :func:`scipy.integrate.cubature`;
this module adds the variable maps, evaluation accounting and the
error contract used by the rest of the package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate as _integrate
from scipy import optimize as _optimize

from .errors import InvalidBracket, InvalidParameter, NonConvergence, NonFiniteIntegrand

__all__ = [
    "Tolerances",
    "QuadratureResult",
    "DEFAULT_TOLERANCES",
    "integrate_semi_infinite",
    "integrate_interval",
    "integrate_rect_2d",
    "find_root_bracketed",
    "find_root_safeguarded",
    "minimize_scalar",
]

_GK21_NODES = 21


@dataclass(frozen=True)
class Tolerances:
    """Accuracy targets and evaluation budget for a numerical kernel."""

    abs_tol: float = 1e-12
    rel_tol: float = 1e-10
    max_evaluations: int = 1_000_000

    def __post_init__(self):
        if self.abs_tol < 0 or self.rel_tol < 0:
            raise InvalidParameter("tolerances must be non-negative")
        if not (self.abs_tol > 0 or self.rel_tol > 0):
            raise InvalidParameter("abs_tol > 0 or rel_tol > 0 is required")
        if self.max_evaluations < 100:
            raise InvalidParameter("max_evaluations must be at least 100")

    def bound(self, value) -> np.ndarray:
        """Acceptance threshold ``max(abs_tol, rel_tol*|value|)``."""
        return np.maximum(self.abs_tol, self.rel_tol * np.abs(value))


DEFAULT_TOLERANCES = Tolerances()


@dataclass(frozen=True)
class QuadratureResult:
    """Integral estimate.

    ``value`` and ``error_estimate`` are floats for scalar integrands and
    arrays for vector-valued ones.
    """

    value: float | np.ndarray
    error_estimate: float | np.ndarray
    evaluations: int
    converged: bool = True


class _CountingIntegrand:
    def __init__(self, func):
        self.func = func
        self.evaluations = 0

    def __call__(self, values):
        self.evaluations += values.shape[0]
        return self.func(values)


def _check_finite(out, where):
    if not np.all(np.isfinite(out)):
        raise NonFiniteIntegrand(f"integrand returned a non-finite value on {where}")
    return out


def _run_cubature(func, lo, hi, tol: Tolerances, nodes_per_region, where):
    counted = _CountingIntegrand(func)
    # cubature stops on err < atol + rtol*|est|; halving both keeps
    # err <= max(abs_tol, rel_tol*|est|).
    max_sub = max(1, tol.max_evaluations // (2 * nodes_per_region))
    res = _integrate.cubature(
        counted,
        np.atleast_1d(lo),
        np.atleast_1d(hi),
        rule="gk21",
        atol=tol.abs_tol / 2,
        rtol=tol.rel_tol / 2,
        max_subdivisions=max_sub,
    )
    est = res.estimate
    err = res.error
    if np.ndim(est) == 0:
        est, err = float(est), float(err)
    converged = res.status == "converged" and counted.evaluations <= tol.max_evaluations
    out = QuadratureResult(est, err, counted.evaluations, converged)
    if not converged:
        raise NonConvergence(
            f"quadrature on {where} did not converge after "
            f"{counted.evaluations} evaluations (error {np.max(err):.3e})",
            partial=out,
        )
    return out


def _combine(parts: Sequence[QuadratureResult]) -> QuadratureResult:
    value = sum(p.value for p in parts)
    error = sum(p.error_estimate for p in parts)
    return QuadratureResult(value, error, sum(p.evaluations for p in parts), True)


def integrate_interval(
    f: Callable[[np.ndarray], np.ndarray],
    lo: float,
    hi: float,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> QuadratureResult:
    """Adaptive Gauss-Kronrod quadrature of ``f`` over a finite interval."""

    def wrapped(x):
        return _check_finite(f(x[:, 0]), f"[{lo}, {hi}]")

    return _run_cubature(wrapped, lo, hi, tol, _GK21_NODES, f"[{lo}, {hi}]")


def integrate_semi_infinite(
    f: Callable[[np.ndarray], np.ndarray],
    decay_scale: float,
    tol: Tolerances = DEFAULT_TOLERANCES,
    breakpoints: Sequence[float] = (),
) -> QuadratureResult:
    """Integrate ``f`` over ``(0, inf)``.

    The half line is mapped onto ``(0, 1)`` with ``t = a*s/(1-s)``, where
    ``a = decay_scale`` is the expected e-folding length of ``f``.  Optional
    ``breakpoints`` (in ``t``) split the mapped interval into panels that
    are refined independently, which helps when ``f`` has structure on a
    scale much shorter than ``decay_scale``.

    ``f`` may return shape ``(n,)`` or ``(n, k)``; in the latter case
    the result fields are length-``k`` arrays.

    Raises
    ------
    NonConvergence
        If the evaluation budget is exhausted.
    NonFiniteIntegrand
        If ``f`` produces NaN or infinity.
    """
    if not decay_scale > 0:
        raise InvalidParameter("decay_scale must be positive")
    a = float(decay_scale)

    def mapped(s):
        s = s[:, 0]
        om = 1.0 - s
        live = om > 0
        t = np.where(live, a * s / np.where(live, om, 1.0), 0.0)
        vals = np.asarray(f(t), dtype=float)
        _check_finite(vals, "(0, inf)")
        jac = np.where(live, a / np.where(live, om, 1.0) ** 2, 0.0)
        if vals.ndim == 2:
            jac = jac[:, None]
            live = live[:, None]
        return np.where(live, vals * jac, 0.0)

    cuts = sorted({b / (a + b) for b in breakpoints if b > 0 and math.isfinite(b)})
    edges = [0.0, *cuts, 1.0]
    if len(edges) == 2:
        return _run_cubature(mapped, 0.0, 1.0, tol, _GK21_NODES, "(0, inf)")
    share = Tolerances(
        tol.abs_tol / (len(edges) - 1), tol.rel_tol, tol.max_evaluations
    )
    parts = [
        _run_cubature(mapped, lo, hi, share, _GK21_NODES, "(0, inf)")
        for lo, hi in zip(edges[:-1], edges[1:])
    ]
    return _combine(parts)


def integrate_rect_2d(
    f: Callable[[np.ndarray, np.ndarray], np.ndarray],
    bounds: tuple[tuple[float, float], tuple[float, float]],
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> QuadratureResult:
    """Adaptive tensor-product Gauss-Kronrod cubature over a rectangle.

    ``bounds`` is ``((x_lo, x_hi), (y_lo, y_hi))`` and ``f(x, y)`` is
    called with equal-length 1-D arrays.
    """
    (x_lo, x_hi), (y_lo, y_hi) = bounds

    def wrapped(p):
        return _check_finite(np.asarray(f(p[:, 0], p[:, 1]), dtype=float), "rectangle")

    return _run_cubature(
        wrapped, [x_lo, y_lo], [x_hi, y_hi], tol, _GK21_NODES**2, "rectangle"
    )


def find_root_bracketed(
    g: Callable[[float], float],
    lo: float,
    hi: float,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> float:
    """Brent's method on a sign-changing bracket ``[lo, hi]``.

    The returned root ``u`` satisfies ``|u - u*| <= abs_tol + rel_tol*|u|``
    (``rel_tol`` is floored at ``4*eps`` as Brent's method requires).
    """
    g_lo, g_hi = g(lo), g(hi)
    if g_lo == 0.0:
        return float(lo)
    if g_hi == 0.0:
        return float(hi)
    if not (np.isfinite(g_lo) and np.isfinite(g_hi)) or g_lo * g_hi > 0:
        raise InvalidBracket(f"g({lo})={g_lo!r} and g({hi})={g_hi!r} do not bracket a root")
    xtol = max(tol.abs_tol, 1e-300)
    rtol = max(tol.rel_tol, 4 * np.finfo(float).eps)
    maxiter = max(100, min(tol.max_evaluations, 10_000))
    root, info = _optimize.brentq(
        g, lo, hi, xtol=xtol, rtol=rtol, maxiter=maxiter, full_output=True, disp=False
    )
    if not info.converged:
        raise NonConvergence(f"brentq stopped: {info.flag}", partial=root)
    return float(root)


def find_root_safeguarded(
    fdf: Callable[[float], tuple[float, float]],
    lo: float,
    hi: float,
    x0: float,
    tol: Tolerances = DEFAULT_TOLERANCES,
    max_iter: int = 100,
) -> float:
    """Newton iteration kept inside ``[lo, hi]`` by bisection.

    ``fdf(x)`` returns ``(f(x), f'(x))``.  ``f`` must be increasing with
    ``f(lo) < 0 < f(hi)``; the endpoints are not evaluated, so callers
    supply a bracket known analytically and verify the root afterwards.
    Iteration stops when the step falls below ``abs_tol + rel_tol*|x|``.
    """
    if not hi > lo:
        raise InvalidParameter("find_root_safeguarded requires lo < hi")
    a, b = float(lo), float(hi)
    x = min(max(float(x0), a), b)
    for _ in range(max_iter):
        f, df = fdf(x)
        if not math.isfinite(f):
            raise NonFiniteIntegrand(f"root function returned {f!r} at {x!r}")
        if f == 0.0:
            return x
        if f < 0:
            a = x
        else:
            b = x
        xn = x - f / df if df > 0 else math.nan
        if not a < xn < b:
            xn = 0.5 * (a + b)
        if abs(xn - x) <= tol.abs_tol + tol.rel_tol * abs(xn):
            return xn
        x = xn
    raise NonConvergence(f"safeguarded Newton did not converge in {max_iter} steps", partial=x)


def minimize_scalar(
    h: Callable[[float], float],
    lo: float,
    hi: float,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> tuple[float, float]:
    """Bounded Brent minimization on ``[lo, hi]``.

    For a unimodal ``h`` the global minimizer is returned to within
    ``abs_tol + sqrt(eps)*|x|`` on the argument (a smooth minimum cannot be
    located more finely from function values).  Otherwise some local minimizer is
    returned; callers that need the global one should pre-bracket on a
    coarse grid.
    """
    if not hi > lo:
        raise InvalidParameter("minimize_scalar requires lo < hi")
    maxiter = max(100, min(tol.max_evaluations, 10_000))
    res = _optimize.minimize_scalar(
        h,
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": max(tol.abs_tol, 1e-300), "maxiter": maxiter},
    )
    if not res.success:
        raise NonConvergence(f"bounded minimization failed: {res.message}", partial=res.x)
    return float(res.x), float(res.fun)
