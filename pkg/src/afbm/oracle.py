"""Deterministic quadrature of the covariance and variance integrals.

All integrals involve the shifted kernel F_c(z, wb) = (-i(z - wb) + c)**(2a - 2)
integrated over z on a contour and wb on its complex conjugate.  Because F is
analytic in each argument on the closed upper (resp. lower) half-plane, the
real segment [s, t] can be replaced by a contour that climbs away from the
real axis, where the kernel is smooth.  Simplex integrals are evaluated by
nested cumulative Gauss-Legendre matrices on graded panels.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations

import numpy as np

from .quadrature import (
    QuadratureError,
    adaptive_rectangle,
    cumulative_matrix,
    gauss_legendre,
    geometric_breaks,
    graded_breaks,
    panel_nodes,
)
from .specfun import DomainError, _power_vanishing_at_zero, check_alpha, kernel_constant

__all__ = [
    "Contour",
    "shifted_kernel",
    "kernel_difference",
    "segment_pair_exact",
    "path_double_integral",
    "path_double_integral_exact",
    "simplex_pair_integral",
    "analytic_area_variance",
    "analytic_area_variance_twofold",
    "mixed_area_variance",
    "extrapolate_to_zero",
    "analytic_area_variance_limit",
    "kernel_difference_integral",
    "iterated_variance_oracle",
    "vertical_increment_variance",
]


@dataclass(frozen=True)
class Contour:
    """Polygonal path in the closed upper half-plane given by its vertices."""

    vertices: tuple

    def __post_init__(self):
        v = tuple(complex(z) for z in self.vertices)
        if len(v) < 2:
            raise ValueError("a contour needs at least two vertices")
        if any(z.imag < 0 for z in v):
            raise DomainError("contour leaves the closed upper half-plane")
        object.__setattr__(self, "vertices", v)

    @classmethod
    def straight(cls, a, b):
        return cls((a, b))

    @classmethod
    def deformed(cls, s, t, height=None):
        """Three-sided detour s -> s + iL -> t + iL -> t with L = |t - s| by default."""
        s, t = complex(s), complex(t)
        L = abs(t - s) if height is None else float(height)
        if L == 0:
            return cls((s, t))
        return cls((s, s + 1j * L, t + 1j * L, t))

    @property
    def segments(self):
        return list(zip(self.vertices[:-1], self.vertices[1:]))

    @property
    def start(self):
        return self.vertices[0]

    @property
    def end(self):
        return self.vertices[-1]

    def panels(self, levels: int = 20, ratio: float = 0.2, mid_panels: int = 4):
        """Per-segment panels as (offset, width, from_end) triples.

        Segments are graded geometrically toward vertices on the real axis.  A
        panel with ``from_end`` set is measured backwards from the segment's
        final vertex, so nodes a tiny distance from it stay exact.
        """
        out = []
        g = geometric_breaks(levels, ratio)
        for a, b in self.segments:
            left, right = a.imag == 0, b.imag == 0
            if left and right:
                fwd, bwd = 0.5 * g, 0.5 * g
            elif left:
                fwd, bwd = g, None
            elif right:
                fwd, bwd = None, g
            else:
                fwd, bwd = np.linspace(0.0, 1.0, mid_panels + 1), None
            segs = []
            if fwd is not None:
                segs += [(lo, hi - lo, False) for lo, hi in zip(fwd[:-1], fwd[1:])]
            if bwd is not None:
                segs += [(lo, hi - lo, True) for lo, hi in zip(bwd[::-1][1:], bwd[::-1][:-1])]
            out.append(segs)
        return out


def shifted_kernel(c: float, alpha: float):
    """F_c(z, wb) = (-i(z - wb) + c)**(2 alpha - 2), principal branch."""
    q = 2.0 * alpha - 2.0

    def F(z, wb):
        return np.exp(q * np.log(-1j * (z - wb) + c))

    return F


def kernel_difference(c1: float, c2: float, alpha: float):
    """F_{c1} - F_{c2} evaluated without cancellation when c1 is close to c2."""
    q = 2.0 * alpha - 2.0

    def D(z, wb):
        u = -1j * (z - wb) + c2
        return np.exp(q * np.log(u)) * np.expm1(q * np.log1p((c1 - c2) / u))

    return D


def _antiderivative(c: float, alpha: float):
    p = 2.0 * alpha

    def G(u):
        return _power_vanishing_at_zero(-1j * np.asarray(u, dtype=complex) + c, p)

    return G


def segment_pair_exact(a, b, c, d, eps_total: float, alpha: float):
    """int_a^b dz int_{conj c}^{conj d} dwb F(z, wb) in closed form (path independent)."""
    alpha = check_alpha(alpha)
    G = _antiderivative(eps_total, alpha)
    cb, db = np.conj(c), np.conj(d)
    return (G(b - db) - G(b - cb) - G(a - db) + G(a - cb)) / (2 * alpha * (2 * alpha - 1))


def path_double_integral_exact(contour: Contour, eps_total: float, alpha: float) -> complex:
    """Closed form of :func:`path_double_integral`; depends only on the endpoints."""
    s, t = contour.start, contour.end
    return complex(segment_pair_exact(s, t, s, t, eps_total, alpha))


def _singular_corners(a0, da, b0, db, eps_total):
    if eps_total > 0:
        return []
    out = []
    for cu in (0, 1):
        for cv in (0, 1):
            z = a0 + da * cu
            w = b0 + db * cv
            if abs(z - w) == 0 and z.imag == 0:
                out.append((cu, cv))
    return out


def path_double_integral(contour: Contour, eps_total: float, alpha: float,
                         rtol: float = 1e-8, p: int = 8) -> complex:
    """int_contour dz int_conj(contour) dwb (-i(z - wb) + eps_total)**(2a - 2).

    Tensor adaptive Gauss-Legendre per segment pair.  A corner where both
    arguments meet on the real axis is integrable but singular; the integrand
    is then homogeneous of degree 2a - 2 about that corner, so the corner cell
    [0, 1/2]^2 carries exactly 2**(-2a) of the whole square, and the square is
    recovered from the remaining three cells.
    """
    alpha = check_alpha(alpha)
    if eps_total < 0:
        raise ValueError("eps_total must be non-negative")
    F = shifted_kernel(eps_total, alpha)
    total = 0.0 + 0.0j
    for a, b in contour.segments:
        for c, d in contour.segments:
            da, db = b - a, d - c
            if da == 0 or db == 0:
                continue
            if eps_total == 0 and a.imag == b.imag == c.imag == d.imag == 0:
                lo = max(min(a.real, b.real), min(c.real, d.real))
                hi = min(max(a.real, b.real), max(c.real, d.real))
                if hi > lo:
                    raise DomainError("real segments overlap: the double integral diverges")
            corners = _singular_corners(a, da, c, db, eps_total)
            if len(corners) > 1:
                raise DomainError("more than one singular corner in a segment pair")
            fu = (0, 1) if not corners else corners[0]

            def f(u, v, a=a, da=da, c=c, db=db, fu=fu):
                uu = u if fu[0] == 0 else 1.0 - u
                vv = v if fu[1] == 0 else 1.0 - v
                return F(a + da * uu, np.conj(c + db * vv))

            scale = da * np.conj(db)
            if corners:
                rest = sum(
                    adaptive_rectangle(f, box, rtol=rtol, p=p)[0]
                    for box in ((0.5, 1, 0, 0.5), (0, 0.5, 0.5, 1), (0.5, 1, 0.5, 1))
                )
                val = rest / (1.0 - 0.5 ** (2 * alpha))
            else:
                val = adaptive_rectangle(f, rtol=rtol, p=p)[0]
            total += scale * val
    return complex(total)


def vertical_increment_variance(t: float, eps: float, eta: float, alpha: float) -> float:
    """E|G_{t+i eps} - G_{t+i eta}|^2 in closed form."""
    alpha = check_alpha(alpha)
    p = 2 * alpha
    val = ((2 * eps) ** p - 2 * (eps + eta) ** p + (2 * eta) ** p) / (p * (p - 1))
    return float(kernel_constant(alpha) * val)


# nested simplex quadrature ---------------------------------------------------

@dataclass
class _ContourRule:
    z: np.ndarray  # nodes
    w: np.ndarray  # complex weights dz
    C: np.ndarray  # cumulative matrix: (C f)_i ~ int_start^{z_i} f dz


def _contour_rule(contour: Contour, p: int, levels: int, ratio: float) -> _ContourRule:
    Q = cumulative_matrix(p)
    xs, ws = gauss_legendre(p)
    zs, wts, blocks = [], [], []
    for (a, b), panels in zip(contour.segments, contour.panels(levels, ratio)):
        d = b - a
        for off, h, from_end in panels:
            if from_end:
                zs.append(b - d * (off + h * (1.0 - xs)))
            else:
                zs.append(a + d * (off + h * xs))
            wts.append(d * h * ws)
            blocks.append(d * h * Q)
    z = np.concatenate(zs)
    w = np.concatenate(wts)
    n = len(z)
    C = np.zeros((n, n), dtype=complex)
    off = 0
    for blk, wt in zip(blocks, wts):
        m = len(wt)
        C[off:off + m, :off] = w[:off]
        C[off:off + m, off:off + m] = blk
        off += m
    return _ContourRule(z, w, C)


def auto_levels(shift: float, length: float, alpha: float, ratio: float = 0.2,
                rtol: float = 1e-10, max_levels: int = 40) -> int:
    """Grading depth toward the real-axis corners.

    With a positive kernel shift the integrand is smooth below that scale; at
    zero shift the uncovered corner carries a fraction ~ h**(2 alpha).
    """
    length = max(abs(length), 1e-300)
    if shift > 0:
        depth = np.log(min(shift * 1e-3 / length, 1.0)) / np.log(ratio)
    else:
        depth = np.log(rtol) / (2 * alpha * np.log(ratio))
    return int(min(max(np.ceil(depth) + 1, 4), max_levels))


def _rule_for(s, t, p, levels, ratio, deform):
    contour = Contour.deformed(s, t) if deform else Contour.straight(s, t)
    return _contour_rule(contour, p, levels, ratio)


def simplex_pair_integral(kernels, s, t, perm=None, p: int = 12, levels: int = 24,
                          ratio: float = 0.2, deform: bool = True) -> complex:
    """Integral over x_1 > ... > x_n and y_1 > ... > y_n (ordered from s along the contour)
    of prod_j K_j(x_j, conj y_{perm(j)}).

    ``kernels[j]`` pairs x_j with y_{perm[j]}; the identity pairing uses a chain
    of matrix products, other pairings (n <= 3) a tensor contraction.
    """
    n = len(kernels)
    if n == 0:
        raise ValueError("need at least one kernel")
    perm = tuple(range(n)) if perm is None else tuple(perm)
    if sorted(perm) != list(range(n)):
        raise ValueError("perm must be a permutation of range(n)")
    rule = _rule_for(s, t, p, levels, ratio, deform)
    z, w, C = rule.z, rule.w, rule.C
    zb = np.conj(z)
    Cy = np.conj(C)
    wy = np.conj(w)
    K = [k(z[:, None], zb[None, :]) for k in kernels]
    if perm == tuple(range(n)):
        h = np.ones_like(K[0])
        for Kj in K[:0:-1]:
            h = C @ (Kj * h) @ Cy.T
        return complex(w @ (K[0] * h) @ wy)
    if n > 3:
        raise ValueError("non-identity pairings are supported for n <= 3 only")
    letters_x = "abc"[:n]
    letters_y = "def"[:n]
    # simplex weight tensors: w_{x1} C[x1, x2] C[x2, x3]
    ops, subs = [w, wy], [letters_x[0], letters_y[0]]
    for j in range(1, n):
        ops += [C, Cy]
        subs += [letters_x[j - 1] + letters_x[j], letters_y[j - 1] + letters_y[j]]
    for j in range(n):
        ops.append(K[j])
        subs.append(letters_x[j] + letters_y[perm[j]])
    expr = ",".join(subs) + "->"
    return complex(np.einsum(expr, *ops, optimize="optimal"))


def analytic_area_variance(s, t, eps: float, alpha: float, p: int = 12, levels=None,
                           deform: bool = True) -> float:
    """Twice E|A|^2 for the level-two iterated integral A of two independent
    components of the process regularized at height eps, over [s, t].

    Four-fold simplex-pair integral of c_alpha^2 F_{2eps} F_{2eps} on the
    deformed contour.  eps = 0 is allowed: the contour keeps the kernel
    singular only at the two corners s and t.
    """
    alpha = check_alpha(alpha)
    if eps < 0:
        raise ValueError("eps must be non-negative")
    F = shifted_kernel(2 * eps, alpha)
    if levels is None:
        levels = auto_levels(2 * eps, abs(complex(t) - complex(s)), alpha)
    val = simplex_pair_integral([F, F], s, t, p=p, levels=levels, deform=deform)
    val *= 2 * kernel_constant(alpha) ** 2
    if abs(val.imag) > 1e-8 * max(abs(val.real), 1e-300):
        raise QuadratureError(f"variance has imaginary residue {val.imag:.3e}")
    return float(val.real)


def _real_axis_twofold(s, t, eps, alpha, conjugate, p=16, depth=1e-3):
    # int_s^t int_s^t F(x1, y1) * H(x1, y1) dx1 dy1 with H the closed-form inner
    # double integral, optionally conjugated.  Coordinates (u = x - y, y), graded
    # toward u = 0 and toward the ends of the y range.
    c = 2 * eps
    G = _antiderivative(c, alpha)
    F = shifted_kernel(c, alpha)
    L = t - s
    scale = max(eps * depth, L * 1e-14)
    half = graded_breaks(L, scale, ends=(True, False))
    ubr = np.unique(np.concatenate([-half[::-1], half]))
    u, wu = panel_nodes(ubr, p)
    total = 0.0 + 0.0j
    for uu, ww in zip(u, wu):
        lo, hi = max(s, s - uu), min(t, t - uu)
        if hi <= lo:
            continue
        ybr = lo + graded_breaks(hi - lo, scale)
        y, wy = panel_nodes(ybr, p)
        x = y + uu
        H = (G(x - y) - G(x - s) - G(s - y) + G(0.0)) / (2 * alpha * (2 * alpha - 1))
        if conjugate:
            H = np.conj(H)
        total += ww * np.sum(wy * F(x, y) * H)
    return total


def analytic_area_variance_twofold(s: float, t: float, eps: float, alpha: float,
                                   p: int = 16) -> float:
    """Same quantity as :func:`analytic_area_variance` for real s < t and eps > 0,
    reduced to a two-fold real-axis integral by integrating the inner pair in
    closed form.  Independent of the contour machinery."""
    alpha = check_alpha(alpha)
    if not eps > 0:
        raise ValueError("eps must be positive on the real axis")
    val = 2 * kernel_constant(alpha) ** 2 * _real_axis_twofold(s, t, eps, alpha, False, p)
    return float(val.real)


def mixed_area_variance(s: float, t: float, eps: float, alpha: float, p: int = 16) -> float:
    """Twice E|B|^2 where B integrates one component against the conjugate of another,
    both regularized at height eps, over real [s, t].

    Adding this to :func:`analytic_area_variance` gives the second moment of the
    Levy area of the real path 2 Re G.  No contour deformation applies since
    the integrand mixes both half-planes; the real axis is integrated directly
    with panels graded toward the diagonal ridge at scale eps.
    """
    alpha = check_alpha(alpha)
    if not eps > 0:
        raise ValueError("eps must be positive")
    val = 2 * kernel_constant(alpha) ** 2 * _real_axis_twofold(s, t, eps, alpha, True, p)
    return float(val.real)


def extrapolate_to_zero(eps, values, exponents):
    """Least-squares fit values ~ v0 + sum_k c_k eps**exponents[k]; returns (v0, coeffs, rms)."""
    eps = np.asarray(eps, dtype=float)
    values = np.asarray(values, dtype=float)
    exponents = list(exponents)
    if len(eps) < len(exponents) + 1:
        raise ValueError("need more ladder rungs than fitted exponents")
    A = np.column_stack([np.ones_like(eps)] + [eps**e for e in exponents])
    coef, *_ = np.linalg.lstsq(A, values, rcond=None)
    rms = float(np.sqrt(np.mean((A @ coef - values) ** 2)))
    return float(coef[0]), coef[1:], rms


def default_ladder():
    return 2.0 ** -np.arange(4, 10)


def correction_exponents(alpha: float):
    """Powers of eps in the small-height expansion of the analytic area variance."""
    return (2 * alpha, 4 * alpha, 1.0, 1.0 + 2 * alpha)


def analytic_area_variance_limit(alpha: float, s: float = 0.0, t: float = 1.0, ladder=None,
                                 exponents=None, p: int = 12):
    """Extrapolate :func:`analytic_area_variance` to eps -> 0 along a height ladder.

    Returns a dict with the ladder, the values, the extrapolated limit and the fit residual.
    """
    ladder = default_ladder() if ladder is None else np.asarray(ladder, dtype=float)
    exponents = correction_exponents(alpha) if exponents is None else exponents
    vals = np.array([analytic_area_variance(s, t, e, alpha, p=p) for e in ladder])
    v0, coef, rms = extrapolate_to_zero(ladder, vals, exponents)
    return {"ladder": ladder, "values": vals, "limit": v0, "coefficients": coef, "rms": rms}


def kernel_difference_integral(phi, eps: float, eta: float, s, t, alpha: float,
                               p: int = 12, levels=None) -> complex:
    """int_[s,t] dz int_[conj s, conj t] dwb [F_{2eps} - F_{eps+eta}](z, wb) phi(z, wb).

    ``phi`` must be analytic on the box above [s, t] (in z) and its mirror image
    (in wb); the segment is replaced by the three-sided detour.
    """
    alpha = check_alpha(alpha)
    if levels is None:
        levels = auto_levels(min(2 * eps, eps + eta), abs(complex(t) - complex(s)), alpha)
    rule = _rule_for(s, t, p, levels, 0.2, True)
    z, w = rule.z, rule.w
    Z, WB = z[:, None], np.conj(z)[None, :]
    D = kernel_difference(2 * eps, eps + eta, alpha)(Z, WB)
    vals = D * phi(Z, WB)
    return complex(w @ vals @ np.conj(w))


def _index_pairings(indices):
    n = len(indices)
    return [sg for sg in permutations(range(n)) if all(indices[sg[j]] == indices[j] for j in range(n))]


def iterated_variance_oracle(n: int, eps: float, eta: float, s, t, alpha: float,
                             indices=None, method: str = "telescoping",
                             p: int = 12, levels=None) -> float:
    """E|X^{n,eps}_{ts}(i) - X^{n,eta}_{ts}(i)|^2 for the level-n iterated integral
    of the process regularized at two heights with shared noise.

    ``indices`` defaults to distinct components (1, ..., n).  Repeated indices
    sum over the pairings that preserve the index labels.  ``method`` selects the
    stable telescoping decomposition (one kernel difference per term) or the
    raw three-product form, which loses digits when eps is close to eta.
    """
    alpha = check_alpha(alpha)
    if n not in (1, 2, 3):
        raise ValueError("n must be 1, 2 or 3")
    if eps <= 0 or eta <= 0:
        raise ValueError("heights must be positive")
    indices = tuple(range(n)) if indices is None else tuple(indices)
    if len(indices) != n:
        raise ValueError("need one index per level")
    pairings = _index_pairings(indices)
    if levels is None:
        levels = auto_levels(2 * min(eps, eta), abs(complex(t) - complex(s)), alpha)
    Fee = shifted_kernel(2 * eps, alpha)
    Fhh = shifted_kernel(2 * eta, alpha)
    Feh = shifted_kernel(eps + eta, alpha)

    def integral(ks, perm):
        return simplex_pair_integral(ks, s, t, perm=perm, p=p, levels=levels)

    total = 0.0 + 0.0j
    for perm in pairings:
        if method == "telescoping":
            for a, b in ((eps, eta), (eta, eps)):
                Faa = shifted_kernel(2 * a, alpha)
                Fab = shifted_kernel(a + b, alpha)
                Dab = kernel_difference(2 * a, a + b, alpha)
                for j in range(n):
                    ks = [Faa] * j + [Dab] + [Fab] * (n - j - 1)
                    total += integral(ks, perm)
        elif method == "direct":
            total += integral([Fee] * n, perm) + integral([Fhh] * n, perm)
            total -= 2 * integral([Feh] * n, perm)
        else:
            raise ValueError(f"unknown method {method!r}")
    val = kernel_constant(alpha) ** n * total
    if abs(val.imag) > 1e-6 * max(abs(val.real), 1e-300):
        raise QuadratureError(f"variance has imaginary residue {val.imag:.3e}")
    return float(val.real)

