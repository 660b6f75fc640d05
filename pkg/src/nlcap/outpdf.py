"""Output density P_out[Y] = P_X[Y~] + dP_out[Y~] for smooth input densities.

Densities implement :class:`SmoothDensity`: values and Cartesian
derivatives with respect to ``(y1, y2) = (Re, Im)``, plus optional polar
derivatives.  Radial densities subclass :class:`RadialDensity` and only
supply ``f(r)``, ``f'(r)``, ``f''(r)``.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .channel import ChannelParams, tilde_coords
from .errors import InvalidParameter, MissingPolarDerivatives, ZeroOutputSignal
from .numerics import Tolerances, integrate_rect_2d

__all__ = [
    "SmoothDensity",
    "RadialDensity",
    "PolarDerivatives",
    "GaussianDensity",
    "IsotropicGaussian",
    "FiniteDifferenceDensity",
    "OutputPdfValue",
    "delta_pout_cartesian",
    "delta_pout_polar",
    "pout",
    "check_density",
]

# |Y| below SMALL_Y_FRACTION * density.scale is evaluated via the Y -> 0 limit.
SMALL_Y_FRACTION = 1e-6


@dataclass(frozen=True)
class PolarDerivatives:
    value: np.ndarray
    d_r: np.ndarray
    d_phi: np.ndarray
    d_rr: np.ndarray
    d_rphi: np.ndarray
    d_phiphi: np.ndarray


class SmoothDensity(ABC):
    """Twice-differentiable density on the complex plane.

    Implementations must be immutable after construction.  ``scale`` is the
    typical amplitude (sqrt(mW)) over which the density varies.
    """

    radial: bool = False
    scale: float = 1.0

    @abstractmethod
    def value(self, y1, y2): ...

    @abstractmethod
    def gradient(self, y1, y2): ...

    @abstractmethod
    def hessian(self, y1, y2):
        """Return ``(d11, d22, d12)``."""

    def log_value(self, y1, y2):
        with np.errstate(divide="ignore"):
            return np.log(self.value(y1, y2))

    def laplacian(self, y1, y2):
        d11, d22, _ = self.hessian(y1, y2)
        return d11 + d22

    def polar_derivatives(self, r, phi) -> PolarDerivatives:
        raise MissingPolarDerivatives(f"{type(self).__name__} has no polar derivatives")

    def __call__(self, X):
        X = np.asarray(X, dtype=complex)
        return self.value(X.real, X.imag)


class RadialDensity(SmoothDensity):
    """Density depending on ``|X|`` only; Cartesian derivatives by chain rule."""

    radial = True

    @abstractmethod
    def radial_derivatives(self, r):
        """Return ``(f, f_r, f_rr)`` at radius ``r``."""

    @property
    def intensity_decay(self) -> float:
        """e-folding length of the density in ``|X|^2``, mW."""
        return self.scale**2

    def value(self, y1, y2):
        return self.radial_derivatives(np.hypot(y1, y2))[0]

    def gradient(self, y1, y2):
        r = np.hypot(y1, y2)
        _, f_r, _ = self.radial_derivatives(r)
        safe = np.where(r > 0, r, 1.0)
        w = np.where(r > 0, f_r / safe, 0.0)
        return w * y1, w * y2

    def hessian(self, y1, y2):
        y1 = np.asarray(y1, dtype=float)
        y2 = np.asarray(y2, dtype=float)
        r = np.hypot(y1, y2)
        _, f_r, f_rr = self.radial_derivatives(r)
        pos = r > 0
        safe = np.where(pos, r, 1.0)
        c1, c2 = y1 / safe, y2 / safe
        g = np.where(pos, f_r / safe, f_rr)  # f'(r)/r -> f''(0) at the origin
        d11 = np.where(pos, f_rr * c1 * c1 + g * c2 * c2, f_rr)
        d22 = np.where(pos, f_rr * c2 * c2 + g * c1 * c1, f_rr)
        d12 = np.where(pos, (f_rr - g) * c1 * c2, 0.0)
        return d11, d22, d12

    def laplacian(self, y1, y2):
        r = np.hypot(y1, y2)
        _, f_r, f_rr = self.radial_derivatives(r)
        safe = np.where(r > 0, r, 1.0)
        return np.where(r > 0, f_rr + f_r / safe, 2 * f_rr)

    def polar_derivatives(self, r, phi) -> PolarDerivatives:
        f, f_r, f_rr = self.radial_derivatives(np.asarray(r, dtype=float))
        zero = np.zeros_like(f)
        return PolarDerivatives(f, f_r, zero, f_rr, zero, zero)


class IsotropicGaussian(RadialDensity):
    """``exp(-|X|^2/power)/(pi*power)``: circular complex Gaussian."""

    def __init__(self, power: float):
        if power <= 0:
            raise InvalidParameter("power must be > 0")
        self.power = float(power)
        self.scale = float(np.sqrt(power))

    @property
    def intensity_decay(self) -> float:
        return self.power

    def radial_derivatives(self, r):
        s = self.power
        f = np.exp(-(r**2) / s) / (np.pi * s)
        return f, -2 * r / s * f, (4 * r**2 / s**2 - 2 / s) * f

    def log_value(self, y1, y2):
        return -(y1**2 + y2**2) / self.power - np.log(np.pi * self.power)


class GaussianDensity(SmoothDensity):
    """Bivariate Gaussian in ``(Re X, Im X)`` with arbitrary mean and covariance."""

    def __init__(self, cov, mean=(0.0, 0.0)):
        cov = np.asarray(cov, dtype=float)
        if cov.shape != (2, 2) or not np.allclose(cov, cov.T):
            raise InvalidParameter("cov must be a symmetric 2x2 matrix")
        if np.any(np.linalg.eigvalsh(cov) <= 0):
            raise InvalidParameter("cov must be positive definite")
        self.cov = cov
        self.mean = np.asarray(mean, dtype=float)
        self.precision = np.linalg.inv(cov)
        self.norm = 1.0 / (2 * np.pi * np.sqrt(np.linalg.det(cov)))
        self.scale = float(np.sqrt(np.trace(cov)))

    def _parts(self, y1, y2):
        a, b, c = self.precision[0, 0], self.precision[0, 1], self.precision[1, 1]
        e1 = np.asarray(y1, dtype=float) - self.mean[0]
        e2 = np.asarray(y2, dtype=float) - self.mean[1]
        f = self.norm * np.exp(-0.5 * (a * e1 * e1 + 2 * b * e1 * e2 + c * e2 * e2))
        g1 = -(a * e1 + b * e2)
        g2 = -(b * e1 + c * e2)
        return f, g1, g2, (a, b, c)

    def value(self, y1, y2):
        return self._parts(y1, y2)[0]

    def log_value(self, y1, y2):
        a, b, c = self.precision[0, 0], self.precision[0, 1], self.precision[1, 1]
        e1 = np.asarray(y1, dtype=float) - self.mean[0]
        e2 = np.asarray(y2, dtype=float) - self.mean[1]
        return np.log(self.norm) - 0.5 * (a * e1 * e1 + 2 * b * e1 * e2 + c * e2 * e2)

    def gradient(self, y1, y2):
        f, g1, g2, _ = self._parts(y1, y2)
        return f * g1, f * g2

    def hessian(self, y1, y2):
        f, g1, g2, (a, b, c) = self._parts(y1, y2)
        return f * (g1 * g1 - a), f * (g2 * g2 - c), f * (g1 * g2 - b)

    def polar_derivatives(self, r, phi) -> PolarDerivatives:
        r = np.asarray(r, dtype=float)
        cs, sn = np.cos(phi), np.sin(phi)
        y1, y2 = r * cs, r * sn
        f = self.value(y1, y2)
        d1, d2 = self.gradient(y1, y2)
        d11, d22, d12 = self.hessian(y1, y2)
        d_r = cs * d1 + sn * d2
        d_phi = -y2 * d1 + y1 * d2
        d_rr = cs * cs * d11 + 2 * cs * sn * d12 + sn * sn * d22
        d_rphi = -sn * d1 + cs * d2 + r * (cs * sn * (d22 - d11) + (cs * cs - sn * sn) * d12)
        d_phiphi = y2 * y2 * d11 - 2 * y1 * y2 * d12 + y1 * y1 * d22 - (y1 * d1 + y2 * d2)
        return PolarDerivatives(f, d_r, d_phi, d_rr, d_rphi, d_phiphi)


class FiniteDifferenceDensity(SmoothDensity):
    """Adapter giving derivatives of a plain callable by central differences.

    First derivatives use step ``eps**(1/3) * scale`` and second derivatives
    ``eps**(1/4) * scale``.
    """

    def __init__(self, func: Callable, scale: float, radial: bool = False):
        if scale <= 0:
            raise InvalidParameter("scale must be > 0")
        self.func = func
        self.scale = float(scale)
        self.radial = radial
        eps = np.finfo(float).eps
        self.h1 = eps ** (1 / 3) * scale
        self.h2 = eps ** (1 / 4) * scale

    def value(self, y1, y2):
        return self.func(np.asarray(y1) + 1j * np.asarray(y2))

    def gradient(self, y1, y2):
        h = self.h1
        f = self.func
        z = np.asarray(y1) + 1j * np.asarray(y2)
        return (f(z + h) - f(z - h)) / (2 * h), (f(z + 1j * h) - f(z - 1j * h)) / (2 * h)

    def hessian(self, y1, y2):
        h = self.h2
        f = self.func
        z = np.asarray(y1) + 1j * np.asarray(y2)
        f0 = f(z)
        d11 = (f(z + h) - 2 * f0 + f(z - h)) / h**2
        d22 = (f(z + 1j * h) - 2 * f0 + f(z - 1j * h)) / h**2
        d12 = (f(z + h + 1j * h) - f(z + h - 1j * h) - f(z - h + 1j * h) + f(z - h - 1j * h)) / (
            4 * h**2
        )
        return d11, d22, d12


@dataclass(frozen=True)
class OutputPdfValue:
    leading: float | np.ndarray
    correction: float | np.ndarray
    total: float | np.ndarray


def _small_y_mask(d: SmoothDensity, Y, polar: bool):
    small = np.abs(Y) < SMALL_Y_FRACTION * d.scale
    if polar and np.any(small) and not d.radial:
        raise ZeroOutputSignal("polar derivatives of a non-radial density are undefined at Y = 0")
    return small


def delta_pout_cartesian(d: SmoothDensity, Y, params: ChannelParams):
    """Output-PDF correction from Cartesian derivatives of ``d`` at ``Y~``.

    Since ``mu~ = gamma L |Y|^2`` the ``1/|Y|^2`` bracket is regular, and
    below ``SMALL_Y_FRACTION * d.scale`` its limit ``(QL/4) Lap d`` is used.
    """
    Y = np.asarray(Y, dtype=complex)
    small = _small_y_mask(d, Y, polar=False)
    gamma, Q, L = params.gamma, params.noise_density_Q, params.length_L
    QL = Q * L
    yt = tilde_coords(Y, params)
    t1, t2 = np.real(yt), np.imag(yt)
    y_sq = np.abs(Y) ** 2
    mt = gamma * L * y_sq
    d1, d2 = d.gradient(t1, t2)
    d11, d22, d12 = d.hessian(t1, t2)
    phase_part = gamma * Q * L**2 / 3 * (
        (3 * t2 - mt * t1) * d1
        - (3 * t1 + mt * t2) * d2
        - 0.5 * (3 * (t1**2 - t2**2) + 4 * mt * t1 * t2) * d12
    )
    safe = np.where(small, 1.0, y_sq)
    diffusion = QL / (12 * safe) * (
        (3 * y_sq + 6 * mt * t1 * t2 + 4 * mt**2 * t2**2) * d11
        + (3 * y_sq - 6 * mt * t1 * t2 + 4 * mt**2 * t1**2) * d22
    )
    out = np.where(small, QL / 4 * (d11 + d22), phase_part + diffusion)
    return out[()] if out.ndim == 0 else out


def delta_pout_polar(d: SmoothDensity, Y, params: ChannelParams):
    """Output-PDF correction from polar derivatives of ``d`` at ``Y~``.

    ``-(gamma Q L^2/2) d_phi (1 + r d_r - (2/3) mu~ d_phi) d + (QL/4) Lap d``.
    """
    Y = np.asarray(Y, dtype=complex)
    small = _small_y_mask(d, Y, polar=True)
    gamma, QL, L = params.gamma, params.noise_power, params.length_L
    yt = tilde_coords(Y, params)
    r = np.abs(yt)
    phi = np.angle(yt)
    mt = gamma * L * r**2
    pd = d.polar_derivatives(r, phi)
    safe = np.where(small, 1.0, r)
    lap = pd.d_rr + pd.d_r / safe + pd.d_phiphi / safe**2
    rotation = -gamma * QL * L / 2 * (pd.d_phi + r * pd.d_rphi - 2.0 / 3.0 * mt * pd.d_phiphi)
    out = np.where(small, QL / 4 * 2 * pd.d_rr, rotation + QL / 4 * lap)
    return out[()] if out.ndim == 0 else out


def pout(d: SmoothDensity, Y, params: ChannelParams) -> OutputPdfValue:
    yt = tilde_coords(Y, params)
    lead = d.value(np.real(yt), np.imag(yt))
    corr = delta_pout_cartesian(d, Y, params)
    return OutputPdfValue(lead, corr, lead + corr)


def check_density(
    d: SmoothDensity,
    extent: float | None = None,
    tol: float = 1e-6,
    rng: np.random.Generator | None = None,
) -> float:
    """Validate a density: normalization over ``[-extent, extent]^2`` and,
    for radial densities, phase independence at random points.

    Returns the computed normalization; raises :class:`InvalidParameter`
    on failure.
    """
    extent = extent or 12.0 * d.scale
    norm = integrate_rect_2d(
        d.value, ((-extent, extent), (-extent, extent)), Tolerances(1e-12, 1e-9)
    ).value
    if abs(norm - 1.0) > tol:
        raise InvalidParameter(f"density integrates to {norm!r}, not 1")
    if d.radial:
        rng = rng or np.random.default_rng(0)
        r = rng.uniform(0.0, 3.0 * d.scale, 16)
        a, b = rng.uniform(0, 2 * np.pi, (2, 16))
        va = d.value(r * np.cos(a), r * np.sin(a))
        vb = d.value(r * np.cos(b), r * np.sin(b))
        if not np.allclose(va, vb, rtol=1e-10, atol=0):
            raise InvalidParameter("radial density depends on phase")
    if np.any(d.value(*np.zeros((2, 1))) < 0):
        raise InvalidParameter("density is negative")
    return float(norm)
