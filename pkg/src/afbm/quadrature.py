"""Gauss-Legendre building blocks: adaptive 1-d and 2-d rules, graded panels,
and cumulative (indefinite) integration matrices."""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre


class QuadratureError(RuntimeError):
    """Adaptive subdivision did not converge within the depth limit."""


MAX_DEPTH = 40


@lru_cache(maxsize=None)
def gauss_legendre(p: int):
    """Nodes and weights on [0, 1]."""
    x, w = legendre.leggauss(p)
    return (x + 1.0) / 2.0, w / 2.0


@lru_cache(maxsize=None)
def cumulative_matrix(p: int):
    """Matrix Q with (Q f)_i ~ int_0^{x_i} f on [0, 1], exact for degree < p."""
    x, _ = gauss_legendre(p)
    t = 2.0 * x - 1.0
    V = legendre.legvander(t, p - 1)
    Vint = np.empty_like(V)
    for j in range(p):
        c = np.zeros(p)
        c[j] = 1.0
        ci = legendre.legint(c, lbnd=-1.0)
        Vint[:, j] = legendre.legval(t, ci)
    return Vint @ np.linalg.inv(V) / 2.0


def geometric_breaks(n_levels: int, ratio: float) -> np.ndarray:
    """Breakpoints in [0, 1] clustered geometrically toward 0."""
    inner = [ratio**k for k in range(n_levels, 0, -1)]
    return np.array([0.0, *inner, 1.0])


def graded_breaks(length: float, scale: float, ratio: float = 0.2, ends=(True, True),
                  max_levels: int = MAX_DEPTH) -> np.ndarray:
    """Breakpoints of [0, length] graded geometrically down to ``scale`` at chosen ends."""
    if length <= 0:
        return np.array([0.0, max(length, 0.0)])
    levels = 0
    if scale < length:
        levels = int(np.ceil(np.log(scale / length) / np.log(ratio))) + 1
    levels = min(max(levels, 1), max_levels)
    left, right = ends
    if left and right:
        half = 0.5 * geometric_breaks(levels, ratio)
        fr = np.concatenate([half, 1.0 - half[::-1]])
    elif left:
        fr = geometric_breaks(levels, ratio)
    elif right:
        fr = 1.0 - geometric_breaks(levels, ratio)[::-1]
    else:
        fr = np.array([0.0, 1.0])
    return length * np.unique(fr)


def panel_nodes(breaks: np.ndarray, p: int):
    """Composite Gauss-Legendre nodes and weights on the panels given by ``breaks``."""
    x, w = gauss_legendre(p)
    h = np.diff(breaks)
    return (breaks[:-1, None] + h[:, None] * x).ravel(), (h[:, None] * w).ravel()


def adaptive_segment(f, a: complex, b: complex, rtol: float = 1e-9, atol: float = 0.0,
                     p: int = 10, max_depth: int = MAX_DEPTH):
    """Integrate ``f`` along the straight segment from ``a`` to ``b``.

    ``f`` maps a 1-d array of complex points to an array whose last axis runs
    over the points.  Intervals are bisected until the p-point rule on the
    parent and on its two halves agree to ``max(rtol*|I|, atol)`` in max norm.
    Returns ``(integral, error_estimate)``.
    """
    x, w = gauss_legendre(p)
    a = complex(a)
    d = complex(b) - a
    lo = np.array([0.0])
    hi = np.array([1.0])
    total = None
    err_total = 0.0
    depth = 0
    while lo.size:
        mid = 0.5 * (lo + hi)
        starts = np.stack([lo, lo, mid])
        widths = np.stack([hi - lo, mid - lo, hi - mid])
        u = starts[..., None] + widths[..., None] * x
        vals = f(a + d * u.ravel())
        vals = vals.reshape(vals.shape[:-1] + u.shape)
        q = d * np.sum(vals * (widths[..., None] * w), axis=-1)
        coarse = q[..., 0, :]
        fine = q[..., 1, :] + q[..., 2, :]
        err = np.abs(fine - coarse)
        if err.ndim > 1:
            err = err.reshape(-1, err.shape[-1]).max(axis=0)
        scale = np.abs(fine).reshape(-1, fine.shape[-1]).max(axis=0) if fine.ndim > 1 else np.abs(fine)
        if total is None:
            total = np.zeros(fine.shape[:-1], dtype=complex)
            ref = scale.max()
        ref = max(ref, float(np.abs(total).max()) if total.size else 0.0)
        ok = err <= np.maximum(rtol * max(ref, scale.max()) * (hi - lo), atol * (hi - lo))
        if depth >= 3:
            total = total + fine[..., ok].sum(axis=-1)
            err_total += float(err[ok].sum())
        else:
            ok[:] = False
        lo = np.concatenate([lo[~ok], mid[~ok]])
        hi = np.concatenate([mid[~ok], hi[~ok]])
        depth += 1
        if lo.size and depth > max_depth:
            raise QuadratureError(f"segment quadrature exceeded depth {max_depth}")
    return total, err_total


def adaptive_rectangle(f, box=(0.0, 1.0, 0.0, 1.0), rtol: float = 1e-9, atol: float = 0.0,
                       p: int = 8, max_depth: int = MAX_DEPTH):
    """Adaptive tensor Gauss-Legendre quadrature of scalar ``f(u, v)`` over a box.

    Cells are quartered until the parent rule and the sum over its children
    agree to a tolerance proportional to the cell area.  Returns
    ``(integral, error_estimate)``.
    """
    x, w = gauss_legendre(p)
    u0, u1, v0, v1 = box
    area0 = (u1 - u0) * (v1 - v0)
    cells = np.array([[u0, u1, v0, v1]], dtype=float)
    total = 0.0 + 0.0j
    err_total = 0.0
    ref = None
    depth = 0

    def rule(c):
        du = c[:, 1] - c[:, 0]
        dv = c[:, 3] - c[:, 2]
        uu = c[:, 0, None] + du[:, None] * x
        vv = c[:, 2, None] + dv[:, None] * x
        U = np.broadcast_to(uu[:, :, None], (len(c), p, p))
        V = np.broadcast_to(vv[:, None, :], (len(c), p, p))
        vals = f(U, V)
        return np.einsum("cij,i,j->c", vals, w, w) * du * dv

    while len(cells):
        um = 0.5 * (cells[:, 0] + cells[:, 1])
        vm = 0.5 * (cells[:, 2] + cells[:, 3])
        kids = np.concatenate([
            np.stack([cells[:, 0], um, cells[:, 2], vm], 1),
            np.stack([um, cells[:, 1], cells[:, 2], vm], 1),
            np.stack([cells[:, 0], um, vm, cells[:, 3]], 1),
            np.stack([um, cells[:, 1], vm, cells[:, 3]], 1),
        ])
        coarse = rule(cells)
        fine_k = rule(kids).reshape(4, len(cells))
        fine = fine_k.sum(axis=0)
        err = np.abs(fine - coarse)
        if ref is None:
            ref = float(np.abs(fine).sum())
        ref = max(ref, abs(total))
        area = (cells[:, 1] - cells[:, 0]) * (cells[:, 3] - cells[:, 2]) / area0
        ok = err <= np.maximum(rtol * ref, atol) * area
        if depth < 2:
            ok[:] = False
        total += fine[ok].sum()
        err_total += float(err[ok].sum())
        cells = kids.reshape(4, len(cells), 4)[:, ~ok].reshape(-1, 4)
        depth += 1
        if len(cells) and depth > max_depth:
            raise QuadratureError(f"rectangle quadrature exceeded depth {max_depth}")
    return total, err_total
