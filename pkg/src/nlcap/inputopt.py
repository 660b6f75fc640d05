"""Optimal input distribution: leading order (lambda0, N0) and its O(Q) correction.

The leading-order density is

    P0[X] = N0 exp(-lambda0 |X|^2) / sqrt(1 + mu^2/3),   mu = gamma L |X|^2,

and everything is expressed through the dimensionless pair
``u = lambda0 P`` and ``v = pi N0 P``, which depend on ``gamma_tilde`` only.
With ``t = |X|^2/P`` the two constraints read ``v I0 = 1`` and ``v I1 = 1``
where ``I_k = int_0^inf t^k exp(-u t) / sqrt(1 + gamma_tilde^2 t^2) dt``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import ChannelParams
from .errors import (
    DegenerateDenominator,
    DomainTooSmall,
    InvalidParameter,
    NegativeGammaTilde,
    NonConvergence,
)
from .numerics import Tolerances, find_root_safeguarded, integrate_semi_infinite
from .outpdf import RadialDensity

__all__ = [
    "OptimalInputSolution",
    "OptimalInputCorrection",
    "LeadingOptimalDensity",
    "EULER_GAMMA",
    "ASYMPTOTIC_C",
    "SERIES_THRESHOLD",
    "solve_leading",
    "asymptotic_large",
    "p_opt_leading",
    "delta_lambdas",
    "p_opt_correction",
    "radial_breakpoints",
    "constraint_integrals",
]

EULER_GAMMA = 0.57721566490153286061
ASYMPTOTIC_C = 2.0 * math.exp(-EULER_GAMMA)

# Below this gamma_tilde (u, v) come from their Taylor series.
SERIES_THRESHOLD = 1e-3
# Above this gamma_tilde the roots are found from I0 - I1 directly; below it
# the subtracted integrals J_k = I_k - k!/u^(k+1) keep du, dv accurate.
_DIRECT_THRESHOLD = 1.0
_ASYMPTOTIC_MIN = 10.0

# Exact Taylor coefficients in gamma_tilde^2 (obtained symbolically from the
# constraint pair).  Only the first terms, u = 1 - 2 g^2 and v = 1 - g^2, are
# standard; higher ones are an implementation device for the series branch.
_SERIES_DU = (-2.0, 26.0, -946.0)
_SERIES_DV = (-1.0, 20.0, -808.0)

_INTEGRAL_TOL = Tolerances(abs_tol=1e-300, rel_tol=2e-13)
_ROOT_TOL = Tolerances(abs_tol=1e-300, rel_tol=4 * np.finfo(float).eps)


@dataclass(frozen=True)
class OptimalInputSolution:
    """Leading-order optimal input, dimensionless.

    ``du = u - 1`` and ``dv = v - 1`` are carried separately because the
    capacity correction and ``delta_lambdas`` need ``u - v`` to full
    relative precision when ``gamma_tilde`` is small.  ``branch`` is one of
    ``"linear"``, ``"series"``, ``"subtracted"`` or ``"direct"``.
    """

    u: float
    v: float
    gamma_tilde: float
    du: float
    dv: float
    residuals: tuple[float, float]
    branch: str

    @property
    def u_minus_v(self) -> float:
        return self.du - self.dv


@dataclass(frozen=True)
class OptimalInputCorrection:
    """O(Q) shifts of the Lagrange multipliers.

    ``dl1`` is dimensionless, ``dl2`` is in 1/mW.  The residuals are the two
    moments of P_opt^(1), normalized by QL/P and QL respectively.
    """

    dl1: float
    dl2: float
    moment0_residual: float
    moment2_residual: float


def radial_breakpoints(gamma_tilde: float, u: float) -> tuple[float, ...]:
    """Panel edges in ``t`` at decades of ``1/gamma_tilde`` up to ``1/u``."""
    if gamma_tilde <= 10.0:
        return ()
    pts = []
    t = 1.0 / gamma_tilde
    while t < 1.0 / u:
        pts.append(t)
        t *= 10.0
    return tuple(pts)


def _sqrt_factor(g, t):
    return np.sqrt(1.0 + (g * t) ** 2)


def constraint_integrals(u: float, gamma_tilde: float, tol: Tolerances = _INTEGRAL_TOL):
    """``(I0, I1)`` at the given ``u``."""
    g = gamma_tilde

    def f(t):
        w = np.exp(-u * t) / _sqrt_factor(g, t)
        return np.stack([w, t * w], axis=-1)

    res = integrate_semi_infinite(f, 1.0 / u, tol, radial_breakpoints(g, u))
    return float(res.value[0]), float(res.value[1])


def _subtracted_integrals(u: float, g: float, tol: Tolerances = _INTEGRAL_TOL):
    """``J_k = I_k - k!/u^(k+1)`` for k = 0, 1, 2 without cancellation."""

    def f(t):
        s = _sqrt_factor(g, t)
        w = -np.exp(-u * t) * (g * t) ** 2 / (s * (1.0 + s))
        return np.stack([w, t * w, t * t * w], axis=-1)

    res = integrate_semi_infinite(f, 1.0 / u, tol)
    return tuple(float(x) for x in res.value)


def _moment_integrals(u: float, g: float, tol: Tolerances = _INTEGRAL_TOL):
    """``(I0, I1, I2)`` at the given ``u``."""

    def f(t):
        w = np.exp(-u * t) / _sqrt_factor(g, t)
        return np.stack([w, t * w, t * t * w], axis=-1)

    res = integrate_semi_infinite(f, 1.0 / u, tol, radial_breakpoints(g, u))
    return tuple(float(x) for x in res.value)


def _series(g: float):
    g2 = g * g
    du = g2 * (_SERIES_DU[0] + g2 * (_SERIES_DU[1] + g2 * _SERIES_DU[2]))
    dv = g2 * (_SERIES_DV[0] + g2 * (_SERIES_DV[1] + g2 * _SERIES_DV[2]))
    return du, dv


def _solve_subtracted(g: float):
    # G(delta) = I0 - I1 at u = 1 + delta, increasing in delta, G(0) > 0;
    # u(gamma_tilde = 1) = 0.6288..., so [-0.5, 0] brackets the root.
    def fdf(delta):
        u = 1.0 + delta
        j0, j1, j2 = _subtracted_integrals(u, g)
        return delta / u**2 + j0 - j1, (1.0 - delta) / u**3 - j1 + j2

    guess = _series(g)[0] if g < 0.2 else -0.37 * g**2
    du = find_root_safeguarded(fdf, -0.5, 0.0, guess, _ROOT_TOL)
    u = 1.0 + du
    j0 = _subtracted_integrals(u, g)[0]
    i0 = 1.0 / u + j0
    dv = (du / u - j0) / i0
    return du, dv


def _solve_direct(g: float):
    # F(u) = (I0 - I1)/I0, increasing in u, negative as u -> 0.
    def fdf(u):
        i0, i1, i2 = _moment_integrals(u, g)
        # dI_k/du = -I_(k+1)
        return (i0 - i1) / i0, (i2 - i1) / i0 + (i0 - i1) * i1 / i0**2

    if g >= _ASYMPTOTIC_MIN:
        guess = asymptotic_large(g)[0]
        lo = 0.25 * guess
    else:
        guess = 0.629 * g**-0.39
        lo = 0.1
    u = find_root_safeguarded(fdf, lo, 0.63, guess, _ROOT_TOL)
    v = 1.0 / _moment_integrals(u, g)[0]
    return u - 1.0, v - 1.0


def solve_leading(gamma_tilde: float, tol: Tolerances | None = None) -> OptimalInputSolution:
    """Solve the two normalization constraints for ``(u, v)``.

    The pair is reduced to the scalar root of ``I0(u) = I1(u)`` followed by
    ``v = 1/I0``.  ``tol`` controls the accuracy of the residual check
    (default: residuals below 1e-10).

    Raises
    ------
    NegativeGammaTilde
        If ``gamma_tilde < 0``.
    NonConvergence
        If the residual check fails.
    """
    g = float(gamma_tilde)
    if g < 0 or not math.isfinite(g):
        raise NegativeGammaTilde(f"gamma_tilde must be finite and >= 0, got {gamma_tilde!r}")
    tol = tol or Tolerances(abs_tol=1e-10, rel_tol=0.0)
    if g == 0.0:
        return OptimalInputSolution(1.0, 1.0, 0.0, 0.0, 0.0, (0.0, 0.0), "linear")
    if g < SERIES_THRESHOLD:
        du, dv = _series(g)
        branch = "series"
    elif g <= _DIRECT_THRESHOLD:
        du, dv = _solve_subtracted(g)
        branch = "subtracted"
    else:
        du, dv = _solve_direct(g)
        branch = "direct"
    u, v = 1.0 + du, 1.0 + dv
    i0, i1 = constraint_integrals(u, g)
    residuals = (v * i0 - 1.0, v * i1 - 1.0)
    sol = OptimalInputSolution(u, v, g, du, dv, residuals, branch)
    if max(abs(r) for r in residuals) > tol.abs_tol:
        raise NonConvergence(
            f"optimal-input residuals {residuals} exceed {tol.abs_tol}", partial=sol
        )
    return sol


def asymptotic_large(gamma_tilde: float) -> tuple[float, float]:
    """Large-``gamma_tilde`` forms of ``(u, v)``, accurate to O(1/log^2).

    Raises
    ------
    DomainTooSmall
        For ``gamma_tilde < 10``.
    """
    g = float(gamma_tilde)
    if not g >= _ASYMPTOTIC_MIN:
        raise DomainTooSmall(f"asymptotic form needs gamma_tilde >= {_ASYMPTOTIC_MIN}")
    ell = math.log(ASYMPTOTIC_C * g)
    u = (1.0 - math.log(ell) / ell) / ell
    v = g / math.log(ASYMPTOTIC_C * g / u)
    return u, v


def _check_consistent(P: float, params: ChannelParams, sol: OptimalInputSolution):
    if P <= 0:
        raise InvalidParameter("power must be > 0")
    g = params.gamma_tilde(P)
    if not math.isclose(g, sol.gamma_tilde, rel_tol=1e-12, abs_tol=1e-300):
        raise InvalidParameter(
            f"solution was computed for gamma_tilde={sol.gamma_tilde!r}, "
            f"but P, params give {g!r}"
        )


def p_opt_leading(rho, P: float, params: ChannelParams, sol: OptimalInputSolution):
    """Leading-order optimal density at amplitude ``rho``, 1/mW."""
    _check_consistent(P, params, sol)
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0):
        raise InvalidParameter("rho must be >= 0")
    mu = params.gamma * params.length_L * rho**2
    out = sol.v / (math.pi * P) * np.exp(-sol.u * rho**2 / P) / np.sqrt(1.0 + mu**2 / 3.0)
    return out[()]


class LeadingOptimalDensity(RadialDensity):
    """:class:`RadialDensity` view of the leading-order optimal input."""

    def __init__(self, P: float, params: ChannelParams, sol: OptimalInputSolution):
        _check_consistent(P, params, sol)
        self.P = float(P)
        self.params = params
        self.sol = sol
        self.lam = sol.u / P
        self.norm = sol.v / (math.pi * P)
        self.b = (params.gamma * params.length_L) ** 2 / 3.0
        self.scale = math.sqrt(P)

    @property
    def intensity_decay(self) -> float:
        return self.P / self.sol.u

    def radial_derivatives(self, r):
        r = np.asarray(r, dtype=float)
        lam, b = self.lam, self.b
        q = 1.0 + b * r**4
        f = self.norm * np.exp(-lam * r**2) / np.sqrt(q)
        dlog = -2 * lam * r - 2 * b * r**3 / q
        ddlog = -2 * lam - (6 * b * r**2 - 2 * b * b * r**6) / q**2
        return f, f * dlog, f * (dlog * dlog + ddlog)

    def log_value(self, y1, y2):
        r2 = y1 * y1 + y2 * y2
        return math.log(self.norm) - self.lam * r2 - 0.5 * np.log1p(self.b * r2 * r2)


# Bracket polynomials of the multiplier shifts as {(i, j): c} for c u^i v^j.
_DL1_G4 = {(1, 0): -1370, (2, 0): 1379, (0, 1): -428}
_DL1_G2 = {(2, 0): 685, (4, 0): 16, (3, 0): -64, (2, 1): 48, (1, 1): -257, (0, 2): -428}
_DL2_G2 = {(0, 0): 685, (1, 0): -347, (2, 0): -347, (0, 1): 428}
_DL2_G0 = {(1, 1): 315, (2, 0): -299, (2, 1): -16}


def _shifted_poly(coeffs, log_u, log_v):
    """``sum c u^i v^j`` as ``sum c + sum c (u^i v^j - 1)`` for u, v near 1."""
    const = float(sum(coeffs.values()))
    rest = sum(c * math.expm1(i * log_u + j * log_v) for (i, j), c in coeffs.items())
    return const + rest


def _bracket_values(sol: OptimalInputSolution):
    """Dimensionless ``(P/QL) dl1`` and ``(P^2/QL) dl2``."""
    g2 = sol.gamma_tilde**2
    u, du, dv = sol.u, sol.du, sol.dv
    if g2 < 1e-150:
        return 2.0, -u * (1.0 + g2 / 3.0)
    denom = g2 * du + du - dv
    if abs(denom) < 1e-12 * (g2 * abs(du) + abs(du) + abs(dv)):
        raise DegenerateDenominator("delta_lambda denominator vanishes")
    lu, lv = math.log1p(du), math.log1p(dv)
    n1 = (
        16.0 * u * u * sol.u_minus_v**2
        + g2 * g2 * _shifted_poly(_DL1_G4, lu, lv)
        + g2 * _shifted_poly(_DL1_G2, lu, lv)
    )
    n2 = g2 * _shifted_poly(_DL2_G2, lu, lv) + _shifted_poly(_DL2_G0, lu, lv)
    return n1 / (750.0 * g2 * denom), u * n2 / (750.0 * denom)


def _correction_shape(t, sol: OptimalInputSolution, params_gl_sq_P2: float):
    """Bracket of P_opt^(1)/P0 in units of QL/P, as a function of t = rho^2/P."""
    u = sol.u
    m2 = 3.0 * sol.gamma_tilde**2 * t * t  # mu^2
    q = 1.0 + m2 / 3.0
    # mu^2/|X|^2 = (gamma L)^2 P t, times P gives params_gl_sq_P2 * t
    return (
        -u * u * t
        + 2.0 * u / q
        + params_gl_sq_P2 * t * (-137.0 * m2 * m2 + 1095.0 * m2 + 4950.0) / (4050.0 * q**3)
    )


def delta_lambdas(
    P: float, params: ChannelParams, sol: OptimalInputSolution, check_moments: bool = True
) -> OptimalInputCorrection:
    """Multiplier shifts ``dl1``, ``dl2`` and the moment residuals of P_opt^(1).

    Raises
    ------
    DegenerateDenominator
        If the common denominator vanishes to relative precision 1e-12.
    """
    _check_consistent(P, params, sol)
    QL = params.noise_power
    a1, a2 = _bracket_values(sol)
    dl1 = QL / P * a1
    dl2 = QL / P**2 * a2
    m0 = m2 = 0.0
    if check_moments:
        gl2p2 = (params.gamma * params.length_L * P) ** 2
        u, v, g = sol.u, sol.v, sol.gamma_tilde

        def f(t):
            w = v * np.exp(-u * t) / _sqrt_factor(g, t)
            shape = _correction_shape(t, sol, gl2p2) - (a1 + a2 * t)
            return np.stack([shape * w, t * shape * w], axis=-1)

        res = integrate_semi_infinite(
            f, 1.0 / u, Tolerances(1e-15, 1e-12), radial_breakpoints(g, u)
        )
        # int DX P1 = (QL/P) * value[0], int DX |X|^2 P1 = QL * value[1]
        m0, m2 = float(res.value[0]), float(res.value[1])
    return OptimalInputCorrection(dl1, dl2, m0, m2)


def p_opt_correction(
    rho, P: float, params: ChannelParams, sol: OptimalInputSolution, corr: OptimalInputCorrection
):
    """First correction P_opt^(1) at amplitude ``rho``, 1/mW.

    The ``mu^2/|X|^2`` term is evaluated as ``(gamma L)^2 |X|^2``, so
    ``rho = 0`` is regular.
    """
    rho = np.asarray(rho, dtype=float)
    p0 = p_opt_leading(rho, P, params, sol)
    QL = params.noise_power
    lam = sol.u / P
    gl = params.gamma * params.length_L
    r2 = rho**2
    m2 = (gl * r2) ** 2
    q = 1.0 + m2 / 3.0
    bracket = (
        -lam * lam * r2
        + 2.0 * lam / q
        + gl * gl * r2 * (-137.0 * m2 * m2 + 1095.0 * m2 + 4950.0) / (4050.0 * q**3)
    )
    out = (QL * bracket - (corr.dl1 + corr.dl2 * r2)) * p0
    return out[()]
