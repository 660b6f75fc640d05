"""Independent reference computations shared by the test modules.

Nothing here calls into the package's solvers: each oracle re-derives its
quantity by a different route (shooting ODE, arbitrary precision, brute
force) so a shared bug cannot make both sides agree.
"""

from __future__ import annotations

import math

import mpmath as mp
import numpy as np
from scipy.integrate import solve_ivp


def _euler_lagrange(z, s, g):
    # s = (Re psi, Im psi, Re w, Im w, action) with w = psi' - i g |psi|^2 psi
    psi = s[0] + 1j * s[1]
    w = s[2] + 1j * s[3]
    a = psi.real**2 + psi.imag**2
    dpsi = w + 1j * g * a * psi
    dw = 2j * g * a * w - 1j * g * psi * psi * np.conj(w)
    return [dpsi.real, dpsi.imag, dw.real, dw.imag, w.real**2 + w.imag**2]


def classical_action(X: complex, Y: complex, gamma: float, L: float) -> float:
    """Action of the noise-free-boundary classical path from ``X`` to ``Y``.

    Shoots on the initial noise amplitude ``w(0)`` with a 2-D Newton
    iteration (central-difference Jacobian) until ``psi(L) = Y``.
    """

    def run(w0):
        sol = solve_ivp(
            _euler_lagrange,
            (0.0, L),
            [X.real, X.imag, w0[0], w0[1], 0.0],
            args=(gamma,),
            method="DOP853",
            rtol=1e-13,
            atol=1e-16,
        )
        return sol.y[:, -1]

    def miss(w0):
        end = run(w0)
        return np.array([end[0] - Y.real, end[1] - Y.imag])

    guess = (Y - X * np.exp(1j * gamma * abs(X) ** 2 * L)) / L
    w0 = np.array([guess.real, guess.imag])
    h = 1e-7
    for _ in range(30):
        f = miss(w0)
        if np.max(np.abs(f)) < 1e-15:
            break
        jac = np.column_stack(
            [(miss(w0 + h * e) - miss(w0 - h * e)) / (2 * h) for e in np.eye(2)]
        )
        w0 = w0 - np.linalg.solve(jac, f)
    else:
        raise RuntimeError("shooting did not converge")
    return float(run(w0)[4])


def moment_integral_mp(k: int, u, g, dps: int = 30):
    """``int_0^inf t^k exp(-u t)/sqrt(1 + g^2 t^2) dt`` in arbitrary precision."""
    with mp.workdps(dps):
        u, g = mp.mpf(u), mp.mpf(g)
        f = lambda t: t**k * mp.exp(-u * t) / mp.sqrt(1 + (g * t) ** 2)
        pts = [0, 1 / g, mp.inf] if g > 1 else [0, mp.inf]
        return mp.quad(f, pts)


def damped_newton_uv(g: float, u0=1.0, v0=1.0, tol=1e-14, dps=30):
    """Solve ``v I0(u) = 1, v I1(u) = 1`` as a raw 2-D system."""
    u, v = mp.mpf(u0), mp.mpf(v0)
    with mp.workdps(dps):
        for _ in range(100):
            i0, i1, i2 = (moment_integral_mp(k, u, g, dps) for k in range(3))
            F = mp.matrix([v * i0 - 1, v * i1 - 1])
            if max(abs(F[0]), abs(F[1])) < tol:
                return float(u), float(v)
            J = mp.matrix([[-v * i1, i0], [-v * i2, i1]])
            step = mp.lu_solve(J, F)
            lam = mp.mpf(1)
            norm0 = mp.norm(F)
            while lam > 1e-6:
                un, vn = u - lam * step[0], v - lam * step[1]
                if un > 0 and vn > 0:
                    Fn = mp.matrix(
                        [
                            vn * moment_integral_mp(0, un, g, dps) - 1,
                            vn * moment_integral_mp(1, un, g, dps) - 1,
                        ]
                    )
                    if mp.norm(Fn) < norm0:
                        break
                lam /= 2
            u, v = un, vn
    raise RuntimeError("damped Newton did not converge")


def printed_delta_lambdas(u, v, g, dps: int = 50):
    """Literal transcription of the multiplier shifts, in units of
    ``QL/P`` and ``QL/P^2`` respectively (``u = lambda0 P``,
    ``v = pi N0 P``)."""
    with mp.workdps(dps):
        u, v, g = mp.mpf(u), mp.mpf(v), mp.mpf(g)
        g2 = g * g
        denom = g2 * (u - 1) + u - v
        curly1 = (
            16 * u**2 * (u - v) ** 2
            + g2**2 * (u * (-1370 + 1379 * u) - 428 * v)
            + g2 * (u**2 * (685 + 16 * u * (u - 4)) + v * u * (48 * u - 257) - 428 * v**2)
        )
        curly2 = g2 * (685 - 347 * u * (1 + u) + 428 * v) + u * (315 * v - u * (299 + 16 * v))
        return curly1 / (750 * g2 * denom), u * curly2 / (750 * denom)


def delta_lambdas_from_moments(u, v, g, gl2p2, dps: int = 30):
    """Multiplier shifts re-derived by imposing both vanishing moments.

    With ``w(t) = v exp(-u t)/sqrt(1+g^2 t^2)`` and the O(QL) bracket
    ``b(t)``, the two conditions ``int w (b - a1 - a2 t) t^k dt = 0``
    (k = 0, 1) form a 2x2 linear system for ``(a1, a2)``.
    """
    with mp.workdps(dps):
        u, v, g = mp.mpf(u), mp.mpf(v), mp.mpf(g)

        def bracket(t):
            m2 = 3 * g * g * t * t
            q = 1 + m2 / 3
            return (
                -u * u * t
                + 2 * u / q
                + gl2p2 * t * (-137 * m2 * m2 + 1095 * m2 + 4950) / (4050 * q**3)
            )

        pts = [0, 1 / g, mp.inf] if g > 1 else [0, mp.inf]

        def mom(fn):
            return mp.quad(lambda t: fn(t) * v * mp.exp(-u * t) / mp.sqrt(1 + (g * t) ** 2), pts)

        w0, w1, w2 = (mom(lambda t, k=k: t**k) for k in range(3))
        b0 = mom(bracket)
        b1 = mom(lambda t: t * bracket(t))
        a = mp.lu_solve(mp.matrix([[w0, w1], [w1, w2]]), mp.matrix([b0, b1]))
        return float(a[0]), float(a[1])


def gaussian_entropy_with_noise(sigma2: float, QL: float) -> tuple[float, float]:
    """Entropy of an isotropic complex Gaussian (variance ``sigma2``) before
    and after adding independent noise of power ``QL``."""
    return 1 + math.log(math.pi * sigma2), 1 + math.log(math.pi * (sigma2 + QL))
