"""Increments on grids, the coboundary operator, Hoelder-type norms and the sewing map.

An increment of order k is a function of k grid indices with values in a
vector space.  Orders 1 and 2 are stored densely, with shapes (n, *V) and
(n, n, *V), indexed [t, s].  Order 3 and higher are evaluated lazily from index
arrays, so nothing of size n**3 is ever allocated.

Sign conventions: (delta g)_{ts} = g_t - g_s and
(delta h)_{tus} = h_{ts} - h_{tu} - h_{us}; the sewing map satisfies
delta(sew(h)) = h for closed h.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np


class NotClosedError(ValueError):
    """A 3-increment fails the cocycle test, so it has no preimage under delta."""


class SewingResolutionWarning(UserWarning):
    """The dyadic tail estimate is above tolerance."""


@dataclass(frozen=True)
class Increment:
    """A k-increment on a grid, dense (``values``) or lazy (``func`` of k index arrays)."""

    points: np.ndarray
    order: int
    values: np.ndarray | None = None
    func: Callable | None = None

    def __post_init__(self):
        if (self.values is None) == (self.func is None):
            raise ValueError("give exactly one of values or func")
        object.__setattr__(self, "points", np.asarray(self.points, dtype=complex))

    @property
    def n(self) -> int:
        return len(self.points)

    def __call__(self, *idx):
        if len(idx) != self.order:
            raise IndexError(f"{self.order}-increment needs {self.order} indices")
        if self.values is not None:
            return self.values[tuple(np.asarray(i) for i in idx)]
        return self.func(*(np.asarray(i) for i in idx))

    def dense(self) -> np.ndarray:
        if self.values is not None:
            return self.values
        grids = np.meshgrid(*([np.arange(self.n)] * self.order), indexing="ij")
        return self(*grids)

    def scale(self, c) -> "Increment":
        if self.values is not None:
            return Increment(self.points, self.order, values=c * self.values)
        return Increment(self.points, self.order, func=lambda *i: c * self.func(*i))

    def __add__(self, other: "Increment") -> "Increment":
        if self.order != other.order:
            raise ValueError("orders differ")
        if self.values is not None and other.values is not None:
            return Increment(self.points, self.order, values=self.values + other.values)
        return Increment(self.points, self.order, func=lambda *i: self(*i) + other(*i))

    def __sub__(self, other: "Increment") -> "Increment":
        return self + other.scale(-1.0)

    def to_csv(self, path) -> None:
        """Write one row per (grid indices, value component): i0..ik-1, component, re, im."""
        arr = np.asarray(self.dense())
        lead = arr.shape[:self.order]
        flat = arr.reshape(lead + (-1,))
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"i{k}" for k in range(self.order)] + ["component", "re", "im"])
            for idx in np.ndindex(*flat.shape):
                v = complex(flat[idx])
                w.writerow(list(idx) + [repr(v.real), repr(v.imag)])


def increment1(points, values) -> Increment:
    return Increment(points, 1, values=np.asarray(values))


def increment2(points, values) -> Increment:
    return Increment(points, 2, values=np.asarray(values))


def delta1(g: Increment) -> Increment:
    """(delta g)_{ts} = g_t - g_s, dense."""
    if g.order != 1:
        raise ValueError("delta1 takes a 1-increment")
    v = g.dense()
    return Increment(g.points, 2, values=v[:, None] - v[None, :])


def delta2(h: Increment) -> Increment:
    """(delta h)_{tus} = h_{ts} - h_{tu} - h_{us}, lazy."""
    if h.order != 2:
        raise ValueError("delta2 takes a 2-increment")
    return Increment(h.points, 3, func=lambda t, u, s: h(t, s) - h(t, u) - h(u, s))


def delta3(h: Increment) -> Increment:
    """(delta h)_{tuvs} = -h_{uvs} + h_{tvs} - h_{tus} + h_{tuv}, lazy."""
    if h.order != 3:
        raise ValueError("delta3 takes a 3-increment")
    return Increment(
        h.points, 4,
        func=lambda t, u, v, s: -h(u, v, s) + h(t, v, s) - h(t, u, s) + h(t, u, v),
    )


def delta(h: Increment) -> Increment:
    return {1: delta1, 2: delta2, 3: delta3}[h.order](h)


def product(g: Increment, h: Increment, op=np.multiply) -> Increment:
    """(gh)_{t_1..t_{m+n-1}} = op(g_{t_1..t_m}, h_{t_m..t_{m+n-1}}), sharing the middle index."""
    k = g.order + h.order - 1

    def f(*idx):
        return op(g(*idx[:g.order]), h(*idx[g.order - 1:]))

    return Increment(g.points, k, func=f)


# norms ------------------------------------------------------------------------

@dataclass(frozen=True)
class HolderReport:
    mu: float
    norm: float
    split: tuple | None = None
    beta: float | None = None
    note: str = ""


def _vnorm(v: np.ndarray, order: int) -> np.ndarray:
    v = np.abs(v)
    extra = tuple(range(order, v.ndim))
    return v.max(axis=extra) if extra else v


def holder_norm_C2(h: Increment, mu: float) -> HolderReport:
    """max over distinct grid pairs of |h_ts| / |t - s|**mu (a lower bound of the sup)."""
    if mu <= 0:
        raise ValueError("mu must be positive")
    pts = h.points
    t, s = np.triu_indices(h.n, 1)
    t, s = np.concatenate([t, s]), np.concatenate([s, t])
    vals = _vnorm(h(t, s), 1)
    dist = np.abs(pts[t] - pts[s])
    norm = float(np.max(vals / dist**mu)) if len(t) else 0.0
    return HolderReport(mu, norm)


def holder_norm_C3(h: Increment, mu: float, split=None, max_triples: int = 2_000_000,
                   rng: np.random.Generator | None = None) -> HolderReport:
    """Single-split surrogate max |h_tus| / (|t-u|**g |u-s|**r), g + r = mu (default g = r).

    This upper-bounds the infimum over splittings that defines the true norm.
    Grids with more than ``max_triples`` ordered triples are subsampled.
    """
    g, r = (mu / 2, mu / 2) if split is None else split
    n = h.n
    pts = h.points
    total = n * (n - 1) * (n - 2)
    if total <= max_triples:
        T, U, S = np.meshgrid(np.arange(n), np.arange(n), np.arange(n), indexing="ij")
        keep = (T != U) & (U != S) & (T != S)
        t, u, s = T[keep], U[keep], S[keep]
        note = "all triples"
    else:
        rng = np.random.default_rng(0) if rng is None else rng
        t, u, s = rng.integers(0, n, size=(3, max_triples))
        keep = (t != u) & (u != s) & (t != s)
        t, u, s = t[keep], u[keep], s[keep]
        note = "random triples"
    if not len(t):
        return HolderReport(mu, 0.0, (g, r), note=note)
    vals = _vnorm(h(t, u, s), 1)
    den = np.abs(pts[t] - pts[u]) ** g * np.abs(pts[u] - pts[s]) ** r
    return HolderReport(mu, float(np.max(vals / den)), (g, r), note=note)


def garsia_functional(h: Increment, kappa: float, p: float) -> float:
    """Discrete (sum |R_wv|^{2p} / |w - v|^{2 kappa p + 4} dv dw)^{1/(2p)} over off-diagonal grid pairs.

    Node weights are trapezoid cell lengths along the grid polyline.
    """
    if kappa <= 0 or p < 1:
        raise ValueError("need kappa > 0 and p >= 1")
    pts = h.points
    seg = np.abs(np.diff(pts))
    w = np.zeros(len(pts))
    w[:-1] += seg / 2
    w[1:] += seg / 2
    t, s = np.nonzero(~np.eye(len(pts), dtype=bool))
    vals = _vnorm(h(t, s), 1)
    dist = np.abs(pts[t] - pts[s])
    integrand = vals ** (2 * p) / dist ** (2 * kappa * p + 4)
    return float(np.sum(integrand * w[t] * w[s]) ** (1 / (2 * p)))


def multiparam_norm(incs, heights, beta: float) -> float:
    """max over tuples and positive heights of |h^{eps} - h^{0}| / eps**beta.

    ``incs[0]`` is the increment at height 0, ``incs[k]`` at ``heights[k]``;
    all must share the same grid indexing.
    """
    base = incs[0].dense()
    best = 0.0
    for inc, eps in zip(incs[1:], heights[1:]):
        if eps <= 0:
            raise ValueError("heights beyond the first must be positive")
        diff = np.abs(inc.dense() - base)
        best = max(best, float(diff.max()) / eps**beta)
    return best


# sewing -----------------------------------------------------------------------

def cocycle_residual(h: Increment, n_samples: int = 20000, rng=None) -> float:
    """Relative size of delta h on random quadruples; zero for closed h."""
    rng = np.random.default_rng(12345) if rng is None else rng
    n = h.n
    idx = rng.integers(0, n, size=(4, n_samples))
    res = np.abs(delta3(h)(*idx))
    scale = max(float(np.abs(h(idx[0], idx[1], idx[3])).max()), 1e-300)
    return float(res.max()) / scale


def sewing(h: Increment, nu: float = 1.0, cocycle_tol: float = 1e-8, tail_tol: float = 1e-10,
           check: bool = True) -> Increment:
    """Grid sewing map: the 2-increment L with delta L = h and L = 0 on consecutive cells.

    Built by bisection: L_{ba} = h_{bca} + L_{bc} + L_{ca} with c the midpoint
    index of [a, b].  On a 2**L + 1 point grid this is exactly the dyadic
    telescoping sum truncated at grid resolution; other pairs use the nearest
    index split, which plays the role of the endpoint correction.  Pairs with
    t < s are filled from L_{st} = -L_{ts} - h_{sts}.

    A tail warning is issued when halving the resolution changes the
    full-interval value by more than ``tail_tol`` relative (``None`` skips it).
    """
    if h.order != 3:
        raise ValueError("sewing takes a 3-increment")
    if check:
        res = cocycle_residual(h)
        if res > cocycle_tol:
            raise NotClosedError(f"cocycle residual {res:.2e} exceeds {cocycle_tol:.1e}")
    n = h.n
    probe = h(np.array([0]), np.array([0]), np.array([0]))
    L = np.zeros((n, n) + probe.shape[1:], dtype=np.result_type(probe, complex))
    for span in range(2, n):
        a = np.arange(0, n - span)
        b = a + span
        c = a + span // 2
        L[b, a] = h(b, c, a) + L[b, c] + L[c, a]
    t, s = np.tril_indices(n, -1)
    L[s, t] = -L[t, s] - h(s, t, s)
    if tail_tol is not None and n >= 5 and (n - 1) % 2 == 0:
        coarse = _coarse_full_interval(h, n)
        ref = max(float(np.abs(L[n - 1, 0]).max()), 1e-300)
        tail = float(np.abs(L[n - 1, 0] - coarse).max()) / ref
        if tail > tail_tol:
            warnings.warn(f"sewing tail estimate {tail:.2e} above {tail_tol:.1e}",
                          SewingResolutionWarning, stacklevel=2)
    return Increment(h.points, 2, values=L)


def _coarse_full_interval(h: Increment, n: int):
    # same bisection on every other grid point, full interval only
    def rec(a, b):
        if b - a <= 2:
            return 0.0
        c = a + 2 * ((b - a) // 4)
        return h(np.array(b), np.array(c), np.array(a)) + rec(c, b) + rec(a, c)

    return rec(0, n - 1)


def integrate_germ(g: Increment, **kw) -> Increment:
    """(Id - sew . delta) g: on a grid this is the Riemann sum of g over consecutive cells."""
    return g - sewing(delta2(g), **kw)


def sew_function(h: Callable, s: float, t: float, levels: int = 12, extrapolate: int = 4,
                 tail_tol: float = 1e-10):
    """Sewing map of a 3-increment given as a function of continuous arguments.

    ``h(t, u, s)`` must accept arrays.  Dyadic partial sums
    sum_m sum_j h(r_{2j+2}, r_{2j+1}, r_{2j}) are computed to depth ``levels``;
    their error has an expansion in powers of 2**(-level), which Richardson
    extrapolation over the last ``extrapolate`` + 1 depths removes.  Returns
    ``(value, tail_estimate)``.
    """
    partial = []
    acc = 0.0
    for m in range(levels):
        r = s + (t - s) * np.arange(2 ** (m + 1) + 1) / 2 ** (m + 1)
        acc = acc + np.sum(h(r[2::2], r[1::2], r[:-1:2]), axis=0)
        partial.append(acc)
    T = [np.asarray(p, dtype=complex) for p in partial[-(extrapolate + 1):]]
    for k in range(1, extrapolate + 1):
        T = [(2**k * T[i + 1] - T[i]) / (2**k - 1) for i in range(len(T) - 1)]
        if len(T) == 1:
            break
    value = T[-1]
    # compare with one order less
    T2 = [np.asarray(p, dtype=complex) for p in partial[-extrapolate:]]
    for k in range(1, extrapolate):
        T2 = [(2**k * T2[i + 1] - T2[i]) / (2**k - 1) for i in range(len(T2) - 1)]
    tail = float(np.max(np.abs(value - T2[-1])))
    scale = max(float(np.max(np.abs(value))), 1e-300)
    if tail / scale > tail_tol and tail > 1e-14:
        warnings.warn(f"sewing tail estimate {tail / scale:.2e} above {tail_tol:.1e}",
                      SewingResolutionWarning, stacklevel=2)
    return value, tail


def integrate_germ_function(g: Callable, s: float, t: float, **kw):
    """(Id - sew . delta) g at the pair (t, s) for a germ g(t, s) of continuous arguments."""

    def dg(t_, u, s_):
        return g(t_, s_) - g(t_, u) - g(u, s_)

    lam, tail = sew_function(dg, s, t, **kw)
    return g(np.asarray(t), np.asarray(s)) - lam, tail
