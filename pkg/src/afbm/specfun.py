"""Closed-form kernels, covariances and branch conventions for the analytic fBm.

Every complex power uses the principal logarithm (cut along the negative
reals).  Functions broadcast over numpy arrays.
"""

from __future__ import annotations

import numpy as np
from scipy.special import gamma, gammaln


class DomainError(ValueError):
    """Argument lies on a branch cut or outside the closed upper half-plane."""


class SingularParameterError(ValueError):
    """Parameter sits on a removable singularity of a closed form."""


SINGULAR_ALPHA_TOL = 1e-4


def check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha < 0.5:
        raise ValueError(f"Hurst index must lie in (0, 1/2), got {alpha}")
    return alpha


def kernel_constant(alpha: float) -> float:
    """Prefactor alpha(1-2alpha)/(2 cos(pi alpha)) of the derivative covariance."""
    alpha = check_alpha(alpha)
    return alpha * (1.0 - 2.0 * alpha) / (2.0 * np.cos(np.pi * alpha))


def principal_power(z, p):
    """exp(p log z) on the principal branch; raises on the closed negative axis."""
    z = np.asarray(z, dtype=complex)
    on_cut = (z.imag == 0) & (z.real <= 0)
    if np.any(on_cut):
        raise DomainError("complex power evaluated on the branch cut (real z <= 0)")
    return np.exp(p * np.log(z))


def _power_vanishing_at_zero(z, p):
    # z**p with 0**p = 0 for p > 0; used where the closed forms hit the origin
    z = np.asarray(z, dtype=complex)
    zero = z == 0
    safe = np.where(zero, 1.0, z)
    if np.any((safe.imag == 0) & (safe.real < 0)):
        raise DomainError("complex power evaluated on the branch cut (real z < 0)")
    return np.where(zero, 0.0, np.exp(p * np.log(safe)))


def _check_upper(*points):
    for pt in points:
        if np.any(np.asarray(pt, dtype=complex).imag < 0):
            raise DomainError("point below the real axis")


def covariance_kernel(z, w, alpha: float):
    """Covariance E[G'(z) conj(G'(w))] of the derivative process.

    Equal to c_alpha * (-i(z - conj w))**(2 alpha - 2); Hermitian in (z, w).
    """
    _check_upper(z, w)
    arg = -1j * (np.asarray(z, dtype=complex) - np.conj(np.asarray(w, dtype=complex)))
    return kernel_constant(alpha) * principal_power(arg, 2.0 * alpha - 2.0)


def series_ratio(z):
    """Moebius factor (z - i)/(z + i); modulus < 1 in the open upper half-plane."""
    z = np.asarray(z, dtype=complex)
    return (z - 1j) / (z + 1j)


def series_coefficient(k, z, alpha: float):
    """Coefficient functions of the random series for the derivative process.

    Broadcasts ``k`` (non-negative integers) against ``z`` (open half-plane).
    Summing f_k(z) conj(f_k(w)) over k reproduces :func:`covariance_kernel`.
    """
    alpha = check_alpha(alpha)
    k = np.asarray(k)
    if np.any(k < 0):
        raise ValueError("series index must be non-negative")
    z = np.asarray(z, dtype=complex)
    if np.any(z.imag <= 0):
        raise DomainError("series coefficients need Im z > 0")
    a = 2.0 - 2.0 * alpha
    log_poch = gammaln(a + k) - gammaln(a) - gammaln(k + 1.0)
    amp = 2.0 ** (alpha - 1.0) * np.sqrt(
        alpha * (1.0 - 2.0 * alpha) / (2.0 * np.cos(np.pi * alpha)) * np.exp(log_poch)
    )
    base = principal_power((z + 1j) / 2j, 2.0 * alpha - 2.0)
    q = series_ratio(z)
    # q**k with 0**0 = 1
    qk = np.where(k == 0, 1.0 + 0j, np.power(q, np.maximum(k, 1)))
    return amp * base * qk


def series_tail_bound(z, K: int, alpha: float):
    """Upper bound of sum_{k>=K} |f_k(z)|^2 relative to the kernel diagonal.

    Consecutive terms have ratio x (k + 2 - 2alpha)/(k + 1), x = |q|^2, which
    decreases in k, so the tail is dominated by a geometric series.
    """
    alpha = check_alpha(alpha)
    z = np.asarray(z, dtype=complex)
    x = np.abs(series_ratio(z)) ** 2
    r = x * (K + 2.0 - 2.0 * alpha) / (K + 1.0)
    term = np.abs(series_coefficient(K, z, alpha)) ** 2
    diag = np.real(covariance_kernel(z, z, alpha))
    with np.errstate(divide="ignore"):
        bound = np.where(r < 1.0, term / np.where(r < 1.0, 1.0 - r, 1.0), np.inf)
    return bound / diag


def truncation_for(z, alpha: float, tol: float = 1e-8, k_max: int = 1_000_000) -> int:
    """Smallest K whose relative tail bound is below ``tol`` at every point of ``z``."""
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    worst = z[np.argmax(np.abs(series_ratio(z)))]
    lo, hi = 1, 1
    while series_tail_bound(worst, hi, alpha) >= tol:
        lo, hi = hi, 2 * hi
        if hi > k_max:
            raise ValueError(f"series truncation exceeds {k_max} terms at z={worst}")
    while lo < hi:
        mid = (lo + hi) // 2
        if series_tail_bound(worst, mid, alpha) < tol:
            hi = mid
        else:
            lo = mid + 1
    return hi


def halfplane_covariance(z, w, alpha: float):
    """E[G_z conj(G_w)] for the process pinned at the origin, z, w in the closed half-plane.

    Integrating the derivative kernel along paths from 0 gives
    -[(-i(z - conj w))**(2a) - (-iz)**(2a) - (i conj w)**(2a)] / (4 cos pi a).
    """
    alpha = check_alpha(alpha)
    _check_upper(z, w)
    z = np.asarray(z, dtype=complex)
    wb = np.conj(np.asarray(w, dtype=complex))
    p = 2.0 * alpha
    val = (
        _power_vanishing_at_zero(-1j * (z - wb), p)
        - _power_vanishing_at_zero(-1j * z, p)
        - _power_vanishing_at_zero(1j * wb, p)
    )
    return -val / (4.0 * np.cos(np.pi * alpha))


def boundary_covariance(s, t, alpha: float):
    """Return (E[G_s G_t], E[G_s conj(G_t)]) for real times s, t.

    The pseudo-covariance vanishes identically.  sgn(0) is taken as 0.
    """
    alpha = check_alpha(alpha)
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    p = 2.0 * alpha
    cov = (
        np.exp(-1j * np.pi * alpha * np.sign(s)) * np.abs(s) ** p
        + np.exp(1j * np.pi * alpha * np.sign(t)) * np.abs(t) ** p
        - np.exp(1j * np.pi * alpha * np.sign(t - s)) * np.abs(t - s) ** p
    ) / (4.0 * np.cos(np.pi * alpha))
    return np.zeros_like(cov), cov


def re_im_cross_covariance(s, t, alpha: float):
    """E[Re G_s Im G_t] for real s, t."""
    alpha = check_alpha(alpha)
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    p = 2.0 * alpha
    bracket = (
        -np.sign(s) * np.abs(s) ** p
        + np.sign(t) * np.abs(t) ** p
        - np.sign(t - s) * np.abs(t - s) ** p
    )
    return -np.tan(np.pi * alpha) / 8.0 * bracket


def levy_variance_limit(alpha: float, dist: float = 1.0) -> float:
    """Small-height limit of twice the second moment of the analytic Levy area.

    Closed form in Gamma functions times dist**(4 alpha).  Refuses alpha within
    1e-4 of the removable singularities at 1/4 and 1/2.
    """
    alpha = check_alpha(alpha)
    if dist <= 0:
        raise ValueError("dist must be positive")
    for bad in (0.25, 0.5):
        if abs(alpha - bad) < SINGULAR_ALPHA_TOL:
            raise SingularParameterError(f"alpha={alpha} too close to {bad}")
    a = alpha
    pref = a * (2 * a - 1) / (4 * np.cos(np.pi * a) ** 2)
    bracket = 2 * gamma(2 * a - 1) * gamma(2 * a + 1) / gamma(4 * a + 1) + np.cos(
        2 * np.pi * a
    ) / ((2 * a - 1) * (4 * a - 1))
    return float(pref * bracket * dist ** (4 * a))
