"""
Legendre polynomials and complex orthonormal spherical harmonics.

Harmonics use the Condon-Shortley phase, so that
``Y_{l,-m} = (-1)^m conj(Y_{lm})``. Associated Legendre values are produced
by the fully normalised three-term recurrence in :mod:`spherefield.kernels`,
which stays finite up to very high degree.
"""
import math

import numpy as np

from . import kernels
from .geometry import SpherePoint


def legendre_p(ell, x):
    """
    Legendre polynomial P_ell(x) by the three-term recurrence.

    Parameters
    ----------
    ell : int
        Degree, ``ell >= 0``.
    x : float or array_like
        Abscissa in [-1, 1].
    """
    ell = int(ell)
    if ell < 0:
        raise ValueError("degree must be non-negative")
    xa = np.asarray(x, dtype=float)
    if np.any(np.abs(xa) > 1.0):
        raise ValueError("legendre_p needs |x| <= 1")
    coef = np.zeros(ell + 1)
    coef[ell] = 1.0
    out = kernels.legendre_series(coef, xa)
    return float(out) if np.ndim(x) == 0 else out


def legendre_table(l_max, x):
    """P_0..P_l_max at a scalar x, shape (l_max + 1,)."""
    x = float(x)
    if abs(x) > 1.0:
        raise ValueError("legendre_table needs |x| <= 1")
    out = np.empty(int(l_max) + 1)
    out[0] = 1.0
    if l_max >= 1:
        out[1] = x
    for ell in range(2, int(l_max) + 1):
        out[ell] = ((2 * ell - 1) * x * out[ell - 1] - (ell - 1) * out[ell - 2]) / ell
    return out


def spherical_harmonic(ell, m, p: SpherePoint) -> complex:
    """Orthonormal complex harmonic Y_{ell m} at point ``p``."""
    ell, m = int(ell), int(m)
    if ell < 0 or abs(m) > ell:
        raise ValueError(f"need |m| <= ell, got ell={ell}, m={m}")
    return complex(harmonic_row(ell, p.colatitude, p.longitude)[m + ell])


def harmonic_row(ell, theta, phi) -> np.ndarray:
    """Y_{ell,m}(theta, phi) for m = -ell..ell, shape (2 ell + 1,)."""
    ell = int(ell)
    alm = np.zeros((ell + 1, ell + 1), dtype=complex)
    alm[ell, :] = 1.0
    lam = kernels.alm_rows(alm, ell, ell, np.array([float(theta)]))[0].real
    ms = np.arange(ell + 1)
    pos = lam * np.exp(1j * ms * float(phi))
    neg = ((-1.0) ** ms[1:]) * np.conj(pos[1:])
    return np.concatenate([neg[::-1], pos])


def addition_theorem_check(ell, p: SpherePoint, q: SpherePoint) -> float:
    """
    Residual of sum_m Y_lm(p) conj(Y_lm(q)) against (2l+1)/(4pi) P_l(<p,q>).
    """
    yp = harmonic_row(ell, p.colatitude, p.longitude)
    yq = harmonic_row(ell, q.colatitude, q.longitude)
    lhs = np.sum(yp * np.conj(yq))
    cosang = float(np.clip(np.dot(p.xyz, q.xyz), -1.0, 1.0))
    rhs = (2 * ell + 1) / (4.0 * math.pi) * legendre_p(ell, cosang)
    return float(abs(lhs - rhs))
