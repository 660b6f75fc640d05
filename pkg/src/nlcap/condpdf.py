"""Conditional output density P[Y|X] to next-to-leading order in 1/SNR.

The density is the leading Gaussian ``p0`` in the fluctuation frame plus
the corrections ``dp1 = O(SNR^-1/2)`` and ``dp2 = O(SNR^-1)`` built from
the action pieces S1, S2, S3 and the normalization factors Lt1, Lt2.
Every function here is vectorized over array-valued coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import coefficients as cf
from .channel import ChannelParams, FluctuationCoords, to_fluctuation_coords
from .errors import ZeroInputSignal
from .numerics import Tolerances, integrate_rect_2d

__all__ = [
    "ActionExpansion",
    "NormalizationExpansion",
    "CondPdfValue",
    "action_terms",
    "normalization_terms",
    "cond_pdf",
    "cond_pdf_from_coords",
    "cond_pdf_moments_leading",
    "mean_shift_first_order",
    "cond_entropy_pointwise",
    "cond_entropy_pointwise_quadrature",
]

# Diagnostic thresholds for the perturbative regime.
VALIDITY_RADIUS_SIGMAS = 5.0
VALIDITY_CORRECTION_RATIO = 0.5


@dataclass(frozen=True)
class ActionExpansion:
    s1: float | np.ndarray
    s2: float | np.ndarray
    s3: float | np.ndarray


@dataclass(frozen=True)
class NormalizationExpansion:
    prefactor: float | np.ndarray
    lt1: float | np.ndarray
    lt2: float | np.ndarray


@dataclass(frozen=True)
class CondPdfValue:
    """Conditional density split by order; ``flag`` marks samples outside
    the perturbative regime (a diagnostic, not an error)."""

    p0: float | np.ndarray
    dp1: float | np.ndarray
    dp2: float | np.ndarray
    total: float | np.ndarray
    flag: bool | np.ndarray


def _require_rho(c: FluctuationCoords):
    if np.any(np.asarray(c.rho) <= 0):
        raise ZeroInputSignal("the NLO expansion needs |X| > 0")


def leading_quadratic_form(x0, y0, mu, length_L):
    """S1, the positive-definite quadratic action in (x0, y0)."""
    return ((1 + 4 * mu**2 / 3) * x0**2 - 2 * mu * x0 * y0 + y0**2) / (
        length_L * (1 + mu**2 / 3)
    )


def action_terms(c: FluctuationCoords, params: ChannelParams) -> ActionExpansion:
    _require_rho(c)
    mu, rho, L = c.mu, c.rho, params.length_L
    x0, y0 = c.x0, c.y0
    s1 = leading_quadratic_form(x0, y0, mu, L)
    s2 = (mu / rho) / (cf.S2_DENOMINATOR * L * (1 + mu**2 / 3) ** 3) * cf.eval_table(
        cf.S2_TABLE, mu, x0, y0
    )
    s3 = mu**2 / (cf.S3_DENOMINATOR * L * (mu**2 + 3) ** 5 * rho**2) * cf.eval_table(
        cf.S3_TABLE, mu, x0, y0
    )
    return ActionExpansion(s1, s2, s3)


def normalization_terms(c: FluctuationCoords, params: ChannelParams) -> NormalizationExpansion:
    _require_rho(c)
    mu, rho = c.mu, c.rho
    QL = params.noise_power
    prefactor = 1.0 / (np.pi * QL * np.sqrt(1 + mu**2 / 3))
    lt1 = -3 * mu / (5 * rho * (3 + mu**2) ** 2) * cf.eval_table(cf.LT1_TABLE, mu, c.x0, c.y0)
    mult, coeffs = cf.LT2_CONSTANT
    lt2_const = (
        mult * mu**2 * cf.poly_mu(coeffs, mu) * QL
        / (cf.LT2_CONSTANT_DENOMINATOR * (mu**2 + 3) ** 3 * rho**2)
    )
    lt2_quad = mu**2 / (cf.LT2_QUADRATIC_DENOMINATOR * (3 + mu**2) ** 4 * rho**2) * cf.eval_table(
        cf.LT2_QUADRATIC_TABLE, mu, c.x0, c.y0
    )
    return NormalizationExpansion(prefactor, lt1, lt2_const + lt2_quad)


def cond_pdf_from_coords(c: FluctuationCoords, params: ChannelParams) -> CondPdfValue:
    """Conditional density at given fluctuation coordinates.

    The Jacobian between ``Y`` and ``(x0, y0)`` is one, so the value is a
    density with respect to ``d Re(Y) d Im(Y)``.
    """
    Q = params.noise_density_Q
    act = action_terms(c, params)
    norm = normalization_terms(c, params)
    p0 = norm.prefactor * np.exp(-act.s1 / Q)
    first = norm.lt1 - act.s2 / Q
    second = act.s2**2 / (2 * Q**2) - (act.s3 + act.s2 * norm.lt1) / Q + norm.lt2
    dp1 = p0 * first
    dp2 = p0 * second
    radius = np.hypot(c.x0, c.y0)
    flag = (radius > VALIDITY_RADIUS_SIGMAS * np.sqrt(params.noise_power)) | (
        np.abs(first) + np.abs(second) > VALIDITY_CORRECTION_RATIO
    )
    return CondPdfValue(p0, dp1, dp2, p0 + dp1 + dp2, flag)


def cond_pdf(X, Y, params: ChannelParams) -> CondPdfValue:
    """NLO conditional density of output ``Y`` given input ``X`` (|X| > 0)."""
    return cond_pdf_from_coords(to_fluctuation_coords(X, Y, params), params)


def cond_pdf_moments_leading(mu, params: ChannelParams) -> np.ndarray:
    """Covariance of ``(x0, y0)`` under the leading Gaussian ``p0``.

    ``p0 ~ exp(-v^T M v)`` with ``M = [[1 + 4 mu^2/3, -mu], [-mu, 1]] /
    (QL (1 + mu^2/3))``, so the covariance is ``inv(M)/2``; in closed form
    ``(QL/2) [[1, mu], [mu, 1 + 4 mu^2/3]]``.
    """
    QL = params.noise_power
    return 0.5 * QL * np.array([[1.0, mu], [mu, 1.0 + 4.0 * mu**2 / 3.0]])


def _gaussian_moments(cov):
    """Isserlis moments of a centred bivariate Gaussian, keyed by (i, j)."""
    a, b, c = cov[0, 0], cov[0, 1], cov[1, 1]
    return {
        (2, 0): a, (1, 1): b, (0, 2): c,
        (4, 0): 3 * a * a, (3, 1): 3 * a * b, (2, 2): a * c + 2 * b * b,
        (1, 3): 3 * c * b, (0, 4): 3 * c * c,
    }


def mean_shift_first_order(rho: float, params: ChannelParams) -> tuple[float, float]:
    """O(Q) mean of ``(x0, y0)`` generated by ``dp1``.

    ``E[x0] = E0[x0 (Lt1 - S2/Q)]`` with ``E0`` the expectation under
    ``p0``; only second and fourth Gaussian moments appear.
    """
    if rho <= 0:
        raise ZeroInputSignal("mean shift needs |X| > 0")
    mu = params.gamma * params.length_L * rho**2
    Q, L = params.noise_density_Q, params.length_L
    mom = _gaussian_moments(cond_pdf_moments_leading(mu, params))
    lt1_pref = -3 * mu / (5 * rho * (3 + mu**2) ** 2)
    s2_pref = (mu / rho) / (cf.S2_DENOMINATOR * L * (1 + mu**2 / 3) ** 3)
    shifts = []
    for di, dj in ((1, 0), (0, 1)):
        acc = 0.0
        for (i, j), (mult, coeffs) in cf.LT1_TABLE.items():
            acc += lt1_pref * float(mult) * cf.poly_mu(coeffs, mu) * mom[(i + di, j + dj)]
        for (i, j), (mult, coeffs) in cf.S2_TABLE.items():
            acc -= s2_pref * float(mult) * cf.poly_mu(coeffs, mu) * mom[(i + di, j + dj)] / Q
        shifts.append(float(acc))
    return shifts[0], shifts[1]


def cond_entropy_pointwise(rho, params: ChannelParams):
    """Closed-form conditional entropy ``H0 + dH`` for a single input amplitude.

    The correction integrand ``mu^2/|X|^2`` is evaluated as
    ``(gamma L)^2 |X|^2`` so ``rho = 0`` is regular.
    """
    rho = np.asarray(rho, dtype=float)
    gL = params.gamma * params.length_L
    QL = params.noise_power
    mu = gL * rho**2
    h0 = 1 + np.log(np.pi * QL) + 0.5 * np.log1p(mu**2 / 3)
    dh = QL * gL**2 * rho**2 * cf.poly_mu(cf.COND_ENTROPY_NUMERATOR, mu) / (
        cf.COND_ENTROPY_DENOMINATOR * (3 + mu**2) ** 3
    )
    return h0[()], dh[()]


def cond_entropy_pointwise_quadrature(
    rho: float, params: ChannelParams, box_sigmas: float = 10.0, tol: Tolerances | None = None
) -> float:
    """Conditional entropy for one input by 2-D quadrature over ``(x0, y0)``.

    Uses the order-consistent integrand ``-(log p0 * P + dp1^2/(2 p0))``,
    which agrees with ``-P log P`` through O(1/SNR) and stays defined where
    the truncated ``P`` is not positive.
    """
    mu = params.gamma * params.length_L * rho**2
    cov = cond_pdf_moments_leading(mu, params)
    hx = box_sigmas * np.sqrt(cov[0, 0])
    hy = box_sigmas * np.sqrt(cov[1, 1])
    Q = params.noise_density_Q
    QL = params.noise_power
    log_pref = -np.log(np.pi * QL * np.sqrt(1 + mu**2 / 3))

    def integrand(x0, y0):
        c = FluctuationCoords(x0, y0, mu, rho)
        v = cond_pdf_from_coords(c, params)
        log_p0 = log_pref - leading_quadratic_form(x0, y0, mu, params.length_L) / Q
        return -(log_p0 * v.total + 0.5 * v.dp1 * v.dp1 / np.where(v.p0 > 0, v.p0, 1.0))

    tol = tol or Tolerances(abs_tol=1e-12, rel_tol=1e-12)
    return integrate_rect_2d(integrand, ((-hx, hx), (-hy, hy)), tol).value
