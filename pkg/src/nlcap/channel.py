"""Channel constants and the coordinate frames used by the analytic formulas.

Units are fixed throughout: power in mW, length in km, the Kerr coefficient
in 1/(mW km) and the noise spectral density in mW/km.  Complex signal
samples are plain Python/numpy complex numbers in sqrt(mW).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameter, ZeroInputSignal

__all__ = [
    "ChannelParams",
    "PowerPoint",
    "FluctuationCoords",
    "REFERENCE_PARAMS",
    "noiseless_output",
    "to_fluctuation_coords",
    "from_fluctuation_coords",
    "tilde_coords",
]

SQRT3 = math.sqrt(3.0)


@dataclass(frozen=True)
class ChannelParams:
    """Zero-dispersion fiber with additive noise.

    Parameters
    ----------
    gamma : float
        Kerr nonlinearity, 1/(mW km).
    noise_density_Q : float
        Noise power per unit length, mW/km.
    length_L : float
        Span length, km.
    """

    gamma: float
    noise_density_Q: float
    length_L: float

    def __post_init__(self):
        for name in ("gamma", "noise_density_Q", "length_L"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidParameter(f"{name} must be finite")
        if self.gamma < 0:
            raise InvalidParameter("gamma must be >= 0")
        if self.noise_density_Q <= 0:
            raise InvalidParameter("noise_density_Q must be > 0")
        if self.length_L <= 0:
            raise InvalidParameter("length_L must be > 0")

    @property
    def noise_power(self) -> float:
        """Accumulated noise power QL, mW."""
        return self.noise_density_Q * self.length_L

    def snr(self, power: float) -> float:
        return power / (self.noise_density_Q * self.length_L)

    def gamma_tilde(self, power: float) -> float:
        return self.gamma * self.length_L * power / SQRT3

    def power_for_gamma_tilde(self, gamma_tilde: float) -> float:
        if self.gamma == 0:
            raise InvalidParameter("gamma_tilde is identically zero for a linear channel")
        return gamma_tilde * SQRT3 / (self.gamma * self.length_L)

    def point(self, power: float) -> "PowerPoint":
        return PowerPoint(power, self.snr(power), self.gamma_tilde(power))

    def intermediate_region(self) -> tuple[float, float]:
        """Bounds ``(QL, 1/(gamma^2 Q L^3))`` of the intermediate power region, mW."""
        upper = math.inf
        if self.gamma > 0:
            upper = 1.0 / (self.gamma**2 * self.noise_density_Q * self.length_L**3)
        return self.noise_power, upper


REFERENCE_PARAMS = ChannelParams(gamma=1.3e-3, noise_density_Q=1.5e-7, length_L=1000.0)


@dataclass(frozen=True)
class PowerPoint:
    power_P: float
    snr: float
    gamma_tilde: float


@dataclass(frozen=True)
class FluctuationCoords:
    """Output offset from the noiseless trajectory, in the rotating frame.

    ``x0 + 1j*y0 = Y*exp(-1j*(phi_X + mu)) - rho`` with ``rho = |X|`` and
    ``mu = gamma*L*rho**2``.  Fields may be scalars or numpy arrays of a
    common shape.
    """

    x0: float | np.ndarray
    y0: float | np.ndarray
    mu: float | np.ndarray
    rho: float | np.ndarray


def noiseless_output(X, params: ChannelParams):
    """Kerr-rotated input ``X*exp(1j*gamma*L*|X|^2)``."""
    X = np.asarray(X, dtype=complex)
    out = X * np.exp(1j * params.gamma * params.length_L * np.abs(X) ** 2)
    return out[()] if out.ndim == 0 else out


def to_fluctuation_coords(X, Y, params: ChannelParams) -> FluctuationCoords:
    X = np.asarray(X, dtype=complex)
    Y = np.asarray(Y, dtype=complex)
    rho = np.abs(X)
    if np.any(rho == 0):
        raise ZeroInputSignal("fluctuation coordinates need |X| > 0")
    mu = params.gamma * params.length_L * rho**2
    kappa = Y * np.exp(-1j * (np.angle(X) + mu)) - rho
    return FluctuationCoords(
        kappa.real[()], kappa.imag[()], mu[()], rho[()]
    )


def from_fluctuation_coords(c: FluctuationCoords, phi_x):
    """Rebuild ``Y`` from fluctuation coordinates and the input phase."""
    Y = (c.rho + c.x0 + 1j * np.asarray(c.y0)) * np.exp(1j * (np.asarray(phi_x) + c.mu))
    return Y[()] if np.ndim(Y) == 0 else Y


def tilde_coords(Y, params: ChannelParams):
    """Back-rotated output ``Y*exp(-1j*gamma*L*|Y|^2)``."""
    Y = np.asarray(Y, dtype=complex)
    out = Y * np.exp(-1j * params.gamma * params.length_L * np.abs(Y) ** 2)
    return out[()] if out.ndim == 0 else out
