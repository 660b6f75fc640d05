"""Entropies, mutual information and the capacity to next-to-leading order.

All entropies are in nats.  Radial integrals use ``t = |X|^2/P`` so that
``DX = pi P dt`` and ``mu = sqrt(3) gamma_tilde t``.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import coefficients as cf
from .channel import ChannelParams, tilde_coords
from .errors import DomainTooSmall, InvalidParameter, NlcapError
from .inputopt import (
    ASYMPTOTIC_C,
    EULER_GAMMA,
    SERIES_THRESHOLD,
    LeadingOptimalDensity,
    OptimalInputSolution,
    delta_lambdas,
    p_opt_correction,
    radial_breakpoints,
    solve_leading,
)
from .numerics import Tolerances, integrate_rect_2d, integrate_semi_infinite, minimize_scalar
from .outpdf import SmoothDensity, delta_pout_cartesian

__all__ = [
    "EntropyBreakdown",
    "CapacityReport",
    "SweepResult",
    "Extremum",
    "h_cond",
    "h_out",
    "entropy_breakdown_nlo",
    "capacity_leading",
    "capacity_correction",
    "capacity_correction_prime",
    "capacity_large_asymptotic",
    "lower_bound_reference",
    "capacity_report",
    "sweep",
    "plateau_mean",
]

_ENTROPY_TOL = Tolerances(abs_tol=1e-14, rel_tol=1e-12)

# Exact small-gamma_tilde series of SNR * dC in powers of gamma_tilde^2.
_DC_SERIES = (1.0, -1.0 / 3.0, 23.0 / 5.0)


@dataclass(frozen=True)
class EntropyBreakdown:
    h_cond_leading: float
    h_cond_corr: float
    h_out: float
    mutual_info: float


@dataclass(frozen=True)
class CapacityReport:
    """One row of a power sweep; capacities in nat per symbol."""

    power_P: float
    snr: float
    gamma_tilde: float
    c0: float
    dC: float
    dC_prime: float
    c_total: float
    lower_bound: float
    u: float
    v: float
    solver_diag: dict = field(default_factory=dict)

    @property
    def flags(self) -> tuple[str, ...]:
        return tuple(self.solver_diag.get("flags", ()))


def _radial_setup(d: SmoothDensity, P: float, params: ChannelParams):
    if not d.radial:
        raise InvalidParameter("radial density required")
    decay = d.intensity_decay / P
    breaks = radial_breakpoints(params.gamma_tilde(P), 1.0 / decay)
    return decay, breaks


def h_cond(d: SmoothDensity, P: float, params: ChannelParams, tol: Tolerances = _ENTROPY_TOL):
    """Leading conditional entropy and its O(QL) correction for a radial input.

    Returns ``(h0, dh)`` in nats.
    """
    QL = params.noise_power
    gL = params.gamma * params.length_L
    decay, breaks = _radial_setup(d, P, params)

    def f(t):
        rho = np.sqrt(P * t)
        w = np.pi * P * d.radial_derivatives(rho)[0]
        mu = gL * P * t
        corr = QL * gL**2 * P * t * cf.poly_mu(cf.COND_ENTROPY_NUMERATOR, mu) / (
            cf.COND_ENTROPY_DENOMINATOR * (3.0 + mu**2) ** 3
        )
        return np.stack([w * np.log1p(mu**2 / 3.0), w * corr], axis=-1)

    res = integrate_semi_infinite(f, decay, tol, breaks)
    h0 = 1.0 + math.log(math.pi * QL) + 0.5 * float(res.value[0])
    return h0, float(res.value[1])


def h_out(
    d: SmoothDensity,
    P: float,
    params: ChannelParams,
    tol: Tolerances = _ENTROPY_TOL,
    extent: float | None = None,
) -> float:
    """Output entropy ``-int DY (d log d + dP_out log d)`` at ``Y~``.

    Radial densities use a 1-D integral with ``dP_out = (QL/4) Lap d``;
    others are integrated over the square ``|y1|, |y2| <= extent``
    (default ``12 * d.scale``) in the back-rotated frame, which has unit
    Jacobian.
    """
    QL = params.noise_power
    if d.radial:
        decay, breaks = _radial_setup(d, P, params)

        def f(t):
            r = np.sqrt(P * t)
            val, d_r, d_rr = d.radial_derivatives(r)
            safe = np.where(r > 0, r, 1.0)
            lap = np.where(r > 0, d_rr + d_r / safe, 2.0 * d_rr)
            logd = d.log_value(r, np.zeros_like(r))
            return -np.pi * P * (val * logd + 0.25 * QL * lap * logd)

        return float(integrate_semi_infinite(f, decay, tol, breaks).value)

    ext = extent or 12.0 * d.scale

    def g(y1, y2):
        yt = y1 + 1j * y2
        Y = yt * np.exp(1j * params.gamma * params.length_L * np.abs(yt) ** 2)
        logd = d.log_value(y1, y2)
        return -(d.value(y1, y2) + delta_pout_cartesian(d, Y, params)) * logd

    return float(integrate_rect_2d(g, ((-ext, ext), (-ext, ext)), tol).value)


def entropy_breakdown_nlo(
    P: float, params: ChannelParams, sol: OptimalInputSolution | None = None
) -> EntropyBreakdown:
    """Mutual information at the NLO optimal input ``P0 + P1``, to first order in QL.

    The ``P1`` terms enter the entropies linearly; O(QL^2) products such as
    ``dP_out[P1]`` and ``P1 * dh`` are dropped, so the result is the same
    order as ``C0 + dC``.
    """
    sol = sol or solve_leading(params.gamma_tilde(P))
    d0 = LeadingOptimalDensity(P, params, sol)
    corr = delta_lambdas(P, params, sol, check_moments=False)
    h0_lead, dh = h_cond(d0, P, params)
    hy_lead = h_out(d0, P, params)
    decay, breaks = _radial_setup(d0, P, params)
    gL = params.gamma * params.length_L

    def f(t):
        rho = np.sqrt(P * t)
        p1 = p_opt_correction(rho, P, params, sol, corr)
        logd = d0.log_value(rho, np.zeros_like(rho))
        mu = gL * P * t
        w = np.pi * P * p1
        return np.stack([-w * (logd + 1.0), w * np.log1p(mu**2 / 3.0)], axis=-1)

    res = integrate_semi_infinite(f, decay, _ENTROPY_TOL, breaks)
    hy = hy_lead + float(res.value[0])
    h0 = h0_lead + 0.5 * float(res.value[1])
    return EntropyBreakdown(h0, dh, hy, hy - h0 - dh)


def _solution(gamma_tilde: float, sol: OptimalInputSolution | None):
    if sol is None:
        return solve_leading(gamma_tilde)
    if not math.isclose(sol.gamma_tilde, gamma_tilde, rel_tol=1e-12, abs_tol=1e-300):
        raise InvalidParameter("solution does not match gamma_tilde")
    return sol


def _check_snr(snr: float):
    if not snr > 0:
        raise InvalidParameter("snr must be > 0")


def capacity_leading(
    gamma_tilde: float, snr: float, sol: OptimalInputSolution | None = None
) -> float:
    """``C0 = log(snr) + u - log(v) - 1``, nat per symbol."""
    _check_snr(snr)
    sol = _solution(gamma_tilde, sol)
    return math.log(snr) + sol.du - math.log1p(sol.dv)


def capacity_correction(
    gamma_tilde: float,
    snr: float,
    sol: OptimalInputSolution | None = None,
    method: str = "auto",
) -> float:
    """Next-to-leading capacity correction ``dC``, nat per symbol.

    ``method="auto"`` uses the exact Taylor series of ``snr * dC`` for
    ``gamma_tilde < 1e-3`` and the closed form otherwise; ``"general"`` and
    ``"series"`` force one path.  The closed form groups the
    ``(u/gamma_tilde)^2`` terms as ``(8/375)(u/gamma_tilde)^2 (u - v)``.
    """
    _check_snr(snr)
    g = float(gamma_tilde)
    if method not in ("auto", "general", "series"):
        raise InvalidParameter(f"unknown method {method!r}")
    if method == "series" or (method == "auto" and g < SERIES_THRESHOLD):
        g2 = g * g
        return (_DC_SERIES[0] + g2 * (_DC_SERIES[1] + g2 * _DC_SERIES[2])) / snr
    sol = _solution(g, sol)
    u, v = sol.u, sol.v
    if g == 0.0:
        grouped = 8.0 / 375.0 * -1.0  # (u - v)/g^2 -> -1
    else:
        grouped = 8.0 / 375.0 * (u / g) ** 2 * sol.u_minus_v
    braces = 214.0 / 375.0 * v + 137.0 / 150.0 * u - 347.0 / 750.0 * u * u + grouped
    return braces / snr


def capacity_correction_prime(
    gamma_tilde: float, snr: float, sol: OptimalInputSolution | None = None
) -> float:
    """``dC - 1/snr``: the correction with the linear-channel term removed."""
    return capacity_correction(gamma_tilde, snr, sol) - 1.0 / snr


def capacity_large_asymptotic(P: float, params: ChannelParams) -> float:
    """Closed-form ``dC`` for ``log(gamma L P) >> 1``.

    Raises
    ------
    DomainTooSmall
        If ``gamma L P < 10``, where the nested logarithms are not
        meaningful.
    """
    if not params.gamma * params.length_L * P >= 10.0:
        raise DomainTooSmall("large-power asymptote needs gamma*L*P >= 10")
    g = params.gamma_tilde(P)
    ell = math.log(ASYMPTOTIC_C * g)
    denom = math.log(ASYMPTOTIC_C * g * ell) + math.log(ell) / ell
    gamma, Q, L = params.gamma, params.noise_density_Q, params.length_L
    return gamma * L**2 * Q / math.sqrt(3.0) * (214.0 / 375.0) / denom


def lower_bound_reference(snr: float) -> float:
    """Large-SNR lower bound ``log(snr)/2 + (1 + gamma_E - log 4 pi)/2``."""
    if not snr > math.e:
        raise InvalidParameter("lower bound is quoted for snr > e")
    return 0.5 * math.log(snr) + 0.5 * (1.0 + EULER_GAMMA - math.log(4.0 * math.pi))


def _region_flags(P: float, params: ChannelParams) -> list[str]:
    lo, hi = params.intermediate_region()
    flags = []
    if P < 10.0 * lo or P > 0.1 * hi:
        flags.append("out_of_region")
    return flags


def capacity_report(P: float, params: ChannelParams) -> CapacityReport:
    """Evaluate every capacity quantity at one power.  Never raises on
    numerical failure; the row is returned with NaNs and a ``failed`` flag."""
    snr = params.snr(P)
    g = params.gamma_tilde(P)
    flags = _region_flags(P, params)
    lb = lower_bound_reference(snr) if snr > math.e else math.nan
    if math.isnan(lb):
        flags.append("lower_bound_undefined")
    try:
        sol = solve_leading(g)
        c0 = capacity_leading(g, snr, sol)
        dc = capacity_correction(g, snr, sol)
    except NlcapError as exc:
        flags.append(f"failed:{type(exc).__name__}")
        nan = math.nan
        diag = {"flags": flags, "error": str(exc)}
        return CapacityReport(P, snr, g, nan, nan, nan, nan, lb, nan, nan, diag)
    if g < SERIES_THRESHOLD:
        flags.append("series")
    diag = {"flags": flags, "residuals": sol.residuals, "branch": sol.branch}
    return CapacityReport(P, snr, g, c0, dc, dc - 1.0 / snr, c0 + dc, lb, sol.u, sol.v, diag)


@dataclass(frozen=True)
class Extremum:
    power_P: float
    gamma_tilde: float
    dC_prime: float


@dataclass(frozen=True)
class SweepResult:
    reports: list[CapacityReport]
    minimum: Extremum | None
    maximum: Extremum | None

    @property
    def failed(self) -> bool:
        return any(any(f.startswith("failed") for f in r.flags) for r in self.reports)


def _thread_count() -> int:
    raw = os.environ.get("NLCAP_THREADS", "")
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError as exc:
        raise InvalidParameter("NLCAP_THREADS must be a positive integer") from exc
    if n < 1:
        raise InvalidParameter("NLCAP_THREADS must be a positive integer")
    return n


def _refine(params: ChannelParams, powers, values, sign: float, tol_mw: float) -> Extremum | None:
    finite = np.isfinite(values)
    if not finite.any():
        return None
    idx = int(np.nanargmin(sign * values))
    if idx in (0, len(powers) - 1):
        # Extremum at the grid edge: nothing to bracket.
        return Extremum(powers[idx], params.gamma_tilde(powers[idx]), float(values[idx]))
    lo, hi = powers[idx - 1], powers[idx + 1]

    def h(P):
        g = params.gamma_tilde(P)
        return sign * capacity_correction_prime(g, params.snr(P))

    try:
        p_star, h_star = minimize_scalar(h, lo, hi, Tolerances(abs_tol=tol_mw, rel_tol=0.0))
    except NlcapError:
        # Refinement hit a failing solve; report the unrefined grid point.
        return Extremum(powers[idx], params.gamma_tilde(powers[idx]), float(values[idx]))
    return Extremum(p_star, params.gamma_tilde(p_star), sign * h_star)


def sweep(
    params: ChannelParams,
    p_min: float,
    p_max: float,
    points: int,
    spacing: str = "log",
    allow_out_of_region: bool = False,
    refine: bool = True,
    extremum_tol_mw: float = 1e-3,
) -> SweepResult:
    """Capacity reports on a power grid, sorted ascending in P.

    The grid must lie in ``[10 QL, 0.1/(gamma^2 Q L^3)]`` unless
    ``allow_out_of_region`` is set, in which case rows outside are tagged
    ``out_of_region``.  Extrema of ``dC'`` are refined between the
    neighbours of the grid extremum.  ``NLCAP_THREADS`` sets the number of
    worker threads; row order and values do not depend on it.
    """
    if points < 1:
        raise InvalidParameter("points must be >= 1")
    if not 0 < p_min <= p_max:
        raise InvalidParameter("need 0 < p_min <= p_max")
    if spacing == "log":
        powers = np.geomspace(p_min, p_max, points)
    elif spacing == "lin":
        powers = np.linspace(p_min, p_max, points)
    else:
        raise InvalidParameter(f"spacing must be 'log' or 'lin', got {spacing!r}")
    lo, hi = params.intermediate_region()
    if not allow_out_of_region and (p_min < 10.0 * lo or p_max > 0.1 * hi):
        raise InvalidParameter(
            f"power grid [{p_min}, {p_max}] mW leaves the intermediate region "
            f"[{10 * lo:.6g}, {0.1 * hi:.6g}] mW"
        )
    powers = [float(p) for p in powers]
    threads = _thread_count()
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            reports = list(pool.map(lambda p: capacity_report(p, params), powers))
    else:
        reports = [capacity_report(p, params) for p in powers]
    minimum = maximum = None
    if refine and len(powers) >= 3 and params.gamma > 0:
        values = np.array([r.dC_prime for r in reports])
        minimum = _refine(params, powers, values, 1.0, extremum_tol_mw)
        maximum = _refine(params, powers, values, -1.0, extremum_tol_mw)
    return SweepResult(reports, minimum, maximum)


def plateau_mean(
    params: ChannelParams, p_lo: float = 5.0, p_hi: float = 1e3, points: int = 60
) -> float:
    """Mean of ``dC'`` over a log-spaced grid on ``[p_lo, p_hi]`` mW."""
    vals = [
        capacity_correction_prime(params.gamma_tilde(p), params.snr(p))
        for p in np.geomspace(p_lo, p_hi, points)
    ]
    return float(np.mean(vals))
