import math

import numpy as np
import pytest
from scipy.integrate import cubature

from nlcap.channel import ChannelParams, tilde_coords
from nlcap.condpdf import cond_pdf
from nlcap.errors import InvalidParameter, MissingPolarDerivatives, ZeroOutputSignal
from nlcap.inputopt import LeadingOptimalDensity, solve_leading
from nlcap.outpdf import (
    FiniteDifferenceDensity,
    GaussianDensity,
    IsotropicGaussian,
    SmoothDensity,
    check_density,
    delta_pout_cartesian,
    delta_pout_polar,
    pout,
)

PARAMS = ChannelParams(0.5, 2e-3, 1.0)
ANISO = GaussianDensity(np.array([[0.6, 0.15], [0.15, 0.35]]), mean=(0.2, -0.1))


def _grid(n=9, extent=2.0):
    a = np.linspace(-extent, extent, n)
    y = (a[:, None] + 1j * a[None, :]).ravel()
    return y[np.abs(y) > 1e-3]


class TestLinearGaussian:
    def test_laplacian_closed_form(self):
        s2 = 0.8
        d = IsotropicGaussian(s2)
        p = ChannelParams(0.0, 1e-2, 1.0)
        Y = _grid()
        val = d.value(Y.real, Y.imag)
        expected = p.noise_power / 4 * val * (4 / s2) * (np.abs(Y) ** 2 / s2 - 1)
        assert np.allclose(delta_pout_cartesian(d, Y, p), expected, rtol=1e-13, atol=1e-16)


class TestRadialIdentity:
    @pytest.mark.parametrize("gt", [0.1, 1.0, 10.0])
    def test_optimal_density(self, gt):
        p = ChannelParams(1.3e-3, 1.5e-7, 1000.0)
        P = p.power_for_gamma_tilde(gt)
        d = LeadingOptimalDensity(P, p, solve_leading(gt))
        Y = _grid(extent=2.5 * math.sqrt(P))
        yt = tilde_coords(Y, p)
        expected = p.noise_power / 4 * d.laplacian(yt.real, yt.imag)
        got = delta_pout_cartesian(d, Y, p)
        assert np.max(np.abs(got - expected)) <= 1e-12 * np.max(np.abs(expected))

    def test_polar_rotation_group_vanishes(self):
        d = IsotropicGaussian(1.0)
        Y = _grid()
        yt = tilde_coords(Y, PARAMS)
        expected = PARAMS.noise_power / 4 * d.laplacian(yt.real, yt.imag)
        assert np.allclose(delta_pout_polar(d, Y, PARAMS), expected, rtol=1e-13, atol=1e-18)

    def test_origin_guard(self):
        d = IsotropicGaussian(1.0)
        v = delta_pout_cartesian(d, 0j, PARAMS)
        assert v == pytest.approx(PARAMS.noise_power / 4 * d.laplacian(0.0, 0.0), rel=1e-14)
        assert math.isfinite(delta_pout_polar(d, 0j, PARAMS))


def test_cartesian_equals_polar():
    Y = _grid(n=13, extent=2.2)
    a = delta_pout_cartesian(ANISO, Y, PARAMS)
    b = delta_pout_polar(ANISO, Y, PARAMS)
    assert np.max(np.abs(a - b)) <= 1e-10 * np.max(np.abs(a))


def test_constant_density_gives_zero():
    class Flat(SmoothDensity):
        def value(self, y1, y2):
            return np.full(np.shape(y1), 0.1)

        def gradient(self, y1, y2):
            z = np.zeros(np.shape(y1))
            return z, z

        def hessian(self, y1, y2):
            z = np.zeros(np.shape(y1))
            return z, z, z

    Y = _grid()
    assert np.all(delta_pout_cartesian(Flat(), Y, PARAMS) == 0)
    with pytest.raises(MissingPolarDerivatives):
        delta_pout_polar(Flat(), Y, PARAMS)


def test_non_radial_small_y():
    near = delta_pout_cartesian(ANISO, 1e-4 + 1e-4j, PARAMS)
    at = delta_pout_cartesian(ANISO, 0j, PARAMS)
    assert at == pytest.approx(PARAMS.noise_power / 4 * ANISO.laplacian(0.0, 0.0), rel=1e-14)
    assert near == pytest.approx(at, rel=1e-3)
    with pytest.raises(ZeroOutputSignal):
        delta_pout_polar(ANISO, 0j, PARAMS)


@pytest.mark.parametrize("d", [IsotropicGaussian(0.7), ANISO])
def test_correction_integrates_to_zero(d):
    """int DY dP_out = 0, integrated in the back-rotated frame (unit Jacobian)."""
    ext = 9.0

    def f(q):
        yt = q[:, 0] + 1j * q[:, 1]
        Y = yt * np.exp(1j * PARAMS.gamma * PARAMS.length_L * np.abs(yt) ** 2)
        return np.stack([pout(d, Y, PARAMS).total, delta_pout_cartesian(d, Y, PARAMS)], -1)

    r = cubature(f, [-ext, -ext], [ext, ext], atol=1e-11, rtol=1e-10)
    assert r.estimate[0] == pytest.approx(1.0, abs=1e-6)
    assert abs(r.estimate[1]) < 1e-6


def test_matches_convolution_oracle():
    """Brute-force int DX P[Y|X] d(X) - d(Y~) agrees with dP_out up to O(Q^2)."""
    Y = 0.9 + 0.4j
    qls = [4e-3, 2e-3, 1e-3]
    errs = []
    for QL in qls:
        p = ChannelParams(0.5, QL, 1.0)
        yt = tilde_coords(Y, p)
        mu = p.gamma * abs(Y) ** 2
        h = 12 * math.sqrt(QL) * math.sqrt(1 + 4 * mu**2 / 3)

        def f(q):
            X = yt + q[:, 0] + 1j * q[:, 1]
            return cond_pdf(X, np.full(X.shape, Y), p).total * ANISO.value(X.real, X.imag)

        conv = cubature(f, [-h, -h], [h, h], atol=1e-13, rtol=1e-12).estimate
        conv -= ANISO.value(yt.real, yt.imag)
        dp = delta_pout_cartesian(ANISO, Y, p)
        assert abs(dp) > 1e2 * abs(conv - dp)
        errs.append(abs(conv - dp))
    slopes = np.diff(np.log(errs)) / np.diff(np.log(qls))
    assert np.all(np.abs(slopes - 2.0) < 0.1), slopes


class TestOrderAudit:
    def test_correction_linear_in_q(self):
        Y = _grid(n=7)
        vals = [delta_pout_cartesian(ANISO, Y, ChannelParams(0.5, q, 1.0)) for q in (2e-3, 1e-3)]
        # back-rotation does not depend on Q, so the correction is exactly linear
        assert np.allclose(vals[0], 2 * vals[1], rtol=1e-12, atol=1e-18)

    def test_zero_noise_limit(self):
        d = IsotropicGaussian(1.0)
        p = ChannelParams(0.0, 1e-12, 1.0)
        v = pout(d, 0.3 + 0.2j, p)
        assert v.total == pytest.approx(d.value(0.3, 0.2), rel=1e-11)
        assert v.total == v.leading + v.correction


class TestFiniteDifferenceAdapter:
    def test_matches_analytic(self):
        def f(z):
            return ANISO.value(np.real(z), np.imag(z))

        fd = FiniteDifferenceDensity(f, scale=1.0)
        Y = _grid(n=7, extent=1.5)
        a = delta_pout_cartesian(ANISO, Y, PARAMS)
        b = delta_pout_cartesian(fd, Y, PARAMS)
        assert np.max(np.abs(a - b)) <= 1e-6 * np.max(np.abs(a))

    def test_rejects_bad_scale(self):
        with pytest.raises(InvalidParameter):
            FiniteDifferenceDensity(lambda z: z, scale=0.0)


class TestCheckDensity:
    def test_accepts_normalized(self):
        assert check_density(ANISO) == pytest.approx(1.0, abs=1e-8)
        assert check_density(IsotropicGaussian(2.0)) == pytest.approx(1.0, abs=1e-8)

    def test_rejects_unnormalized(self):
        fd = FiniteDifferenceDensity(lambda z: 2 * ANISO.value(np.real(z), np.imag(z)), 1.0)
        with pytest.raises(InvalidParameter):
            check_density(fd)

    def test_rejects_fake_radial(self):
        fd = FiniteDifferenceDensity(lambda z: ANISO.value(np.real(z), np.imag(z)), 1.0, radial=True)
        with pytest.raises(InvalidParameter):
            check_density(fd)
