"""Exact coefficient table for the cubic/quartic action pieces and the
normalization corrections of the conditional PDF.

Each polynomial in the two fluctuation coordinates is stored as a mapping
``(i, j) -> (multiplier, mu_coeffs)`` meaning

    multiplier * (sum_k mu_coeffs[k] * mu**k) * x0**i * y0**j

with ``mu_coeffs`` in ascending powers of ``mu``.  Keeping the multiplier
separate mirrors the factored printed form, e.g. ``-12*mu*(901*mu^6 + ...)``
is ``(-12, (0, -139860, 0, 84105, 0, 9990, 0, 901))``.  Entries are exact
integers or :class:`fractions.Fraction`; evaluation happens in float64.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

__all__ = [
    "S2_TABLE",
    "S3_TABLE",
    "LT1_TABLE",
    "LT2_QUADRATIC_TABLE",
    "LT2_CONSTANT",
    "COND_ENTROPY_NUMERATOR",
    "poly_mu",
    "eval_table",
]

# Cubic action piece.
#   S2 = (mu/rho) / (135 L (1 + mu^2/3)^3) * {...}
S2_DENOMINATOR = 135
S2_TABLE = {
    (3, 0): (1, (0, 225, 0, 15, 0, 4)),  # mu (4 mu^4 + 15 mu^2 + 225)
    (2, 1): (1, (-90, 0, 255, 0, 23)),  # 23 mu^4 + 255 mu^2 - 90
    (1, 2): (1, (0, -45, 0, 117, 0, 20)),  # mu (20 mu^4 + 117 mu^2 - 45)
    (0, 3): (-3, (30, 0, 33, 0, 5)),  # -3 (5 mu^4 + 33 mu^2 + 30)
}

# Quartic action piece.
#   S3 = mu^2 / (2100 L (mu^2 + 3)^5 rho^2) * [...]
S3_DENOMINATOR = 2100
S3_TABLE = {
    # 148 mu^8 - 12345 mu^6 - 24570 mu^4 - 806085 mu^2 + 396900
    (4, 0): (1, (396900, 0, -806085, 0, -24570, 0, -12345, 0, 148)),
    # -12 mu (901 mu^6 + 9990 mu^4 + 84105 mu^2 - 139860)
    (3, 1): (-12, (0, -139860, 0, 84105, 0, 9990, 0, 901)),
    # -6 (980 mu^8 + 11857 mu^6 + 24210 mu^4 - 350595 mu^2 - 49140)
    (2, 2): (-6, (-49140, 0, -350595, 0, 24210, 0, 11857, 0, 980)),
    # 36 mu (385 mu^6 + 6198 mu^4 + 30165 mu^2 + 8820)
    (1, 3): (36, (0, 8820, 0, 30165, 0, 6198, 0, 385)),
    # 3 (700 mu^8 + 8365 mu^6 + 23826 mu^4 - 32535 mu^2 - 34020)
    (0, 4): (3, (-34020, 0, -32535, 0, 23826, 0, 8365, 0, 700)),
}

# First normalization correction.
#   Lt1 = -3 mu / (5 rho (3 + mu^2)^2) * (...)
LT1_TABLE = {
    (1, 0): (1, (0, 15, 0, 1)),  # mu (15 + mu^2)
    (0, 1): (-2, (5, 0, Fraction(-1, 3))),  # -2 (5 - mu^2/3)
}

# Second normalization correction, constant part:
#   mu^2 (11 mu^4 + 201 mu^2 - 504) QL / (140 (mu^2 + 3)^3 rho^2)
LT2_CONSTANT = (1, (-504, 0, 201, 0, 11))
LT2_CONSTANT_DENOMINATOR = 140

# ... and quadratic part:
#   mu^2 / (70 (3 + mu^2)^4 rho^2) * (...)
LT2_QUADRATIC_DENOMINATOR = 70
LT2_QUADRATIC_TABLE = {
    (2, 0): (1, (-6237, 0, 8064, 0, 453, 0, 32)),  # 32 mu^6 + 453 mu^4 + 8064 mu^2 - 6237
    (1, 1): (12, (0, -1323, 0, 75, 0, 4)),  # 12 mu (4 mu^4 + 75 mu^2 - 1323)
    (0, 2): (-3, (-567, 0, 1179, 0, 141, 0, 7)),  # -3 (7 mu^6 + 141 mu^4 + 1179 mu^2 - 567)
}

# Pointwise conditional-entropy correction numerator: -13 mu^4 + 255 mu^2 + 450
COND_ENTROPY_NUMERATOR = (450, 0, 255, 0, -13)
COND_ENTROPY_DENOMINATOR = 150


def poly_mu(coeffs, mu):
    """Evaluate ``sum coeffs[k] * mu**k`` by Horner's rule."""
    acc = np.zeros_like(np.asarray(mu, dtype=float))
    for c in reversed(coeffs):
        acc = acc * mu + float(c)
    return acc


def eval_table(table, mu, x0, y0):
    """Evaluate one of the ``(i, j) -> (multiplier, mu_coeffs)`` tables."""
    total = 0.0
    for (i, j), (mult, coeffs) in table.items():
        total = total + float(mult) * poly_mu(coeffs, mu) * x0**i * y0**j
    return total


def eval_table_exact(table, mu, x0, y0):
    """Exact rational evaluation at rational arguments (transcription tests)."""
    total = Fraction(0)
    for (i, j), (mult, coeffs) in table.items():
        p = sum(Fraction(c) * Fraction(mu) ** k for k, c in enumerate(coeffs))
        total += Fraction(mult) * p * Fraction(x0) ** i * Fraction(y0) ** j
    return total
