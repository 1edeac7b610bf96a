"""Controlled paths, rough integrals and the corrected Euler solver for dy = dX sigma(y).

Index conventions (frozen, and tested on non-symmetric fields):

* the driver has d components, the solution k components;
* ``sigma(y)`` has shape (d, k) and the equation reads dy(i) = dX(j) sigma(y)(j, i);
* level 2 is X2[j, l] = int dX(j) (X(l) - X(l)_s), the later increment first;
* the corrected Euler step over a cell is
  y + dX(j) sigma(j, i) + X2(j, l) sigma(l, m) d_m sigma(j, i).

All of ``sigma``, ``jacobian`` and ``drift`` must accept a batch of states of
shape (..., k).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .algebra import Increment, holder_norm_C2, integrate_germ
from .signature import RoughPath


class BallExitError(RuntimeError):
    """A state left the ball on which the vector field is declared analytic."""


class DivergenceError(RuntimeError):
    """Picard iteration failed to contract even after shrinking the window."""


# vector fields ----------------------------------------------------------------

def directional_derivative(f: Callable, y, v, points: int = 16, step: float = 0.1):
    """Derivative of analytic ``f`` at ``y`` along ``v`` by the Cauchy integral on a small circle.

    ``y`` and ``v`` have shape (..., k); ``f`` maps (..., k) to (..., *W) and
    the result has shape (..., *W).  The circle has radius ``step`` in state
    units, so the error is of order (step / distance to the nearest singularity)**points.
    """
    y = np.asarray(y, dtype=complex)
    v = np.asarray(v, dtype=complex)
    size = np.linalg.norm(v, axis=-1)
    unit = np.where(size[..., None] > 0, v / np.where(size > 0, size, 1.0)[..., None], 0.0)
    roots = np.exp(2j * np.pi * np.arange(points) / points)
    shifted = y[None] + step * roots.reshape((-1,) + (1,) * y.ndim) * unit[None]
    vals = np.asarray(f(shifted))
    extra = vals.ndim - y.ndim  # dimensions of W
    w = (np.conj(roots) / (points * step)).reshape((-1,) + (1,) * (vals.ndim - 1))
    out = np.sum(w * vals, axis=0)
    return out * size.reshape(size.shape + (1,) * extra)


@dataclass
class VectorField:
    """sigma: C^k -> C^{d x k}, optionally with its Jacobian and a drift b: C^k -> C^k.

    ``jacobian(y)[..., j, i, m]`` is d_m sigma(y)[j, i].  Without it, derivatives
    come from Cauchy integrals, which is exact up to rounding for polynomial fields
    of low degree.  ``radius`` bounds the states the solver accepts.
    """

    sigma: Callable
    d: int
    k: int
    jacobian: Callable | None = None
    drift: Callable | None = None
    radius: float = np.inf
    cauchy_points: int = 16
    cauchy_step: float = 0.1

    def __call__(self, y):
        return np.asarray(self.sigma(np.asarray(y, dtype=complex)), dtype=complex)

    def jac(self, y):
        y = np.asarray(y, dtype=complex)
        if self.jacobian is not None:
            return np.asarray(self.jacobian(y), dtype=complex)
        eye = np.eye(self.k, dtype=complex)
        cols = [directional_derivative(self, y, np.broadcast_to(eye[m], y.shape),
                                       self.cauchy_points, self.cauchy_step)
                for m in range(self.k)]
        return np.stack(cols, axis=-1)

    def correction(self, y):
        """mu[..., l, j, i] = sigma(y)[l, m] d_m sigma(y)[j, i]."""
        return np.einsum("...lm,...jim->...lji", self(y), self.jac(y))

    def word_coefficient(self, word: tuple, y):
        """Coefficient V_{w_n} ... V_{w_2} sigma_{w_1}(y) with V_j = sigma(j, m) d_m, shape (..., k)."""
        y = np.asarray(y, dtype=complex)
        if len(word) == 1:
            return self(y)[..., word[0], :]
        if len(word) == 2:
            return self.correction(y)[..., word[1], word[0], :]
        inner = word[:-1]
        return directional_derivative(lambda x: self.word_coefficient(inner, x), y,
                                      self(y)[..., word[-1], :], self.cauchy_points,
                                      self.cauchy_step)

    def check_ball(self, y):
        if np.any(~np.isfinite(y)) or np.any(np.linalg.norm(np.atleast_1d(y), axis=-1) > self.radius):
            raise BallExitError(f"state left the ball of radius {self.radius}")


# driver data on a window ---------------------------------------------------------

def driver_pairs(rp: RoughPath, lo: int = 0, hi: int | None = None):
    """Level 1 and 2 of the driver on all index pairs of grid points lo..hi.

    Returns arrays of shapes (m, m, d) and (m, m, d, d).  Pairs with t < s are
    filled by the inverse element: X1_st = -X1_ts, X2_st = -X2_ts + X1_ts X1_ts.
    """
    if rp.batch_shape:
        raise ValueError("the solver takes a single driver realization")
    hi = rp.n_points - 1 if hi is None else hi
    d = rp.d
    if rp.N >= 2:
        cells = [c[lo:hi] for c in rp.cells[:2]]
    else:
        c1 = rp.cells[0][lo:hi]
        cells = [c1, 0.5 * (c1[:, :, None] * c1[:, None, :]).reshape(len(c1), d * d)]
    sub = RoughPath(rp.points[lo:hi + 1], cells, d, 2)
    p1, p2 = sub.all_pairs()
    m = hi - lo + 1
    X1 = p1.reshape(m, m, d)
    X2 = p2.reshape(m, m, d, d)
    t, s = np.tril_indices(m, -1)
    X1[s, t] = -X1[t, s]
    X2[s, t] = -X2[t, s] + X1[t, s][:, :, None] * X1[t, s][:, None, :]
    return X1, X2


# controlled paths ---------------------------------------------------------------

@dataclass
class ControlledPath:
    """Path z (n, *V) with Gubinelli derivative zeta (n, d, *V) against a driver path (n, d).

    The remainder r_ts = dz_ts - dX_ts(j) zeta_s(j, ...) is defined as the residual,
    so the decomposition holds on the grid by construction.  ``X2`` holds the
    driver's level 2 on all pairs (n, n, d, d) when rough integration needs it.
    """

    points: np.ndarray
    z: np.ndarray
    zeta: np.ndarray
    driver: np.ndarray
    X2: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.points)

    def increment(self) -> Increment:
        return Increment(self.points, 2, func=lambda t, s: self.z[t] - self.z[s])

    def x1(self, t, s):
        return self.driver[t] - self.driver[s]

    def remainder(self) -> Increment:
        return Increment(self.points, 2, func=lambda t, s: self.z[t] - self.z[s]
                         - _contract_first(self.x1(t, s), self.zeta[s]))

    def decomposition_residual(self) -> float:
        """Relative max of |dz - X1 zeta - r|, zero by construction up to rounding."""
        t, s = np.meshgrid(np.arange(self.n), np.arange(self.n), indexing="ij")
        dz = self.z[t] - self.z[s]
        lhs = _contract_first(self.x1(t, s), self.zeta[s]) + self.remainder()(t, s)
        scale = max(float(np.abs(dz).max()), 1e-300)
        return float(np.abs(dz - lhs).max()) / scale

    def holder_report(self, kappa: float) -> dict:
        return {"kappa": kappa,
                "z": holder_norm_C2(self.increment(), kappa).norm,
                "remainder": holder_norm_C2(self.remainder(), 2 * kappa).norm}


def _contract_first(x1, zeta):
    """x1[..., j] zeta[..., j, *V] summed over j."""
    extra = zeta.ndim - x1.ndim
    return np.sum(x1.reshape(x1.shape + (1,) * extra) * zeta, axis=x1.ndim - 1)


def driver_as_controlled(rp: RoughPath, lo: int = 0, hi: int | None = None) -> ControlledPath:
    """The driver itself: z = X, zeta = identity, r = 0."""
    X1, X2 = driver_pairs(rp, lo, hi)
    z = X1[:, 0]
    m, d = z.shape
    zeta = np.broadcast_to(np.eye(d, dtype=complex), (m, d, d)).copy()
    return ControlledPath(rp.points[lo:lo + m], z, zeta, z, X2)


def compose_map(cp: ControlledPath, phi: Callable, jacobian: Callable, radius: float = np.inf,
                ) -> ControlledPath:
    """phi(z) as a controlled path: value phi(z), derivative zeta(j, m) d_m phi(z).

    ``phi`` maps (..., k) to (..., *W) and ``jacobian`` to (..., *W, k).
    The new remainder is the residual, which equals r . grad phi plus the
    second-order Taylor term of phi.
    """
    z = cp.z
    if np.any(np.linalg.norm(z.reshape(len(z), -1), axis=-1) > radius):
        raise BallExitError(f"controlled path leaves the ball of radius {radius}")
    val = np.asarray(phi(z), dtype=complex)
    J = np.asarray(jacobian(z), dtype=complex)  # (n, *W, k)
    zeta = np.einsum("njm,n...m->nj...", cp.zeta, J)
    return ControlledPath(cp.points, val, zeta, cp.driver, cp.X2, dict(cp.meta))


def compose_field(cp: ControlledPath, field: VectorField) -> ControlledPath:
    """sigma(z) as a controlled path with derivative zeta(l, m) d_m sigma(z)(j, i)."""
    return compose_map(cp, field, field.jac, field.radius)


def integrand_germ(m: ControlledPath) -> Increment:
    """g_ts(i) = X1_ts(j) m_s(j, i) + X2_ts(j, l) mu_s(l, j, i) for m of shape (n, d, k)."""
    if m.X2 is None:
        raise ValueError("rough integration needs level 2 of the driver")

    def g(t, s):
        first = np.einsum("...j,...ji->...i", m.x1(t, s), m.z[s])
        second = np.einsum("...jl,...lji->...i", m.X2[t, s], m.zeta[s])
        return first + second

    return Increment(m.points, 2, func=g)


def rough_integral(m: ControlledPath, start=None, method: str = "sewing") -> ControlledPath:
    """The controlled path int dX m, started at ``start`` (default 0), with derivative m.

    ``method="sewing"`` applies (Id - sew . delta) to the germ through the grid
    sewing map; ``"riemann"`` sums the germ over consecutive cells, which is
    the same number on a grid and much cheaper.
    """
    g = integrand_germ(m)
    n = m.n
    if method == "sewing":
        I = integrate_germ(g, tail_tol=None, check=False)
        vals = I(np.arange(n), np.zeros(n, dtype=int))
    elif method == "riemann":
        k = np.arange(n - 1)
        cells = g(k + 1, k)
        vals = np.concatenate([np.zeros((1,) + cells.shape[1:], dtype=complex),
                               np.cumsum(cells, axis=0)])
    else:
        raise ValueError(f"unknown method {method!r}")
    if start is not None:
        vals = vals + np.asarray(start, dtype=complex)
    return ControlledPath(m.points, vals, m.z.copy(), m.driver, m.X2, {"method": method})


# solver -------------------------------------------------------------------------

def euler_step(y, field: VectorField, x1, x2):
    """One corrected Euler step over a cell with driver increments x1 (d,) and x2 (d, d)."""
    return (y + np.einsum("j,ji->i", x1, field(y))
            + np.einsum("jl,lji->i", x2, field.correction(y)))


def rough_step_orderN(y, field: VectorField, levels, N: int | None = None):
    """y + sum over words w of length <= N of X^n(w) V_{w_n} ... V_{w_2} sigma_{w_1}(y).

    ``levels[n-1]`` is the level-n cell element, flat (d**n,) or shaped (d,)*n.
    """
    N = len(levels) if N is None else N
    d, k = field.d, field.k
    y = np.asarray(y, dtype=complex)
    if y.shape != (k,):
        raise ValueError(f"state must have shape ({k},)")
    if N > 4 or d > 3 or len(levels) < N:
        raise ValueError("need N <= 4, d <= 3 and levels for every order")
    out = y.copy()
    for n in range(1, N + 1):
        lev = np.asarray(levels[n - 1]).reshape(-1)
        if lev.size != d**n:
            raise ValueError(f"level {n} has {lev.size} entries, expected {d**n}")
        if n == 1:
            out = out + lev @ field(y)
        elif n == 2:
            out = out + np.einsum("jl,lji->i", lev.reshape(d, d), field.correction(y))
        else:
            for flat, word in enumerate(itertools.product(range(d), repeat=n)):
                if lev[flat] != 0:
                    out = out + lev[flat] * field.word_coefficient(word, y)
    return out


@dataclass
class SolveReport:
    mode: str
    tau: float | None = None
    halvings: int = 0
    windows: int = 0
    iterations: list = field(default_factory=list)
    residuals: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"mode": self.mode, "tau": self.tau, "halvings": self.halvings,
                "windows": self.windows, "iterations": self.iterations,
                "final_residuals": self.residuals}


def _drift_trapezoid(field: VectorField, points, z):
    if field.drift is None:
        return np.zeros_like(z)
    b = np.asarray(field.drift(z), dtype=complex)
    h = np.diff(points)[:, None]
    cells = 0.5 * h * (b[1:] + b[:-1])
    return np.concatenate([np.zeros((1,) + b.shape[1:], dtype=complex), np.cumsum(cells, axis=0)])


def solve_rde(a, field: VectorField, rp: RoughPath, mode: str = "one-step", tau: float | None = None,
              tol: float = 1e-10, max_iter: int = 50, max_halvings: int = 8,
              integral_method: str = "sewing"):
    """Solve dy = dX sigma(y) + b(y) dt, y_0 = a, on the grid of ``rp``.

    ``mode="one-step"`` runs the corrected Euler recursion cell by cell (drift by
    Heun's trapezoid).  ``mode="picard"`` iterates (z, zeta) -> (a + int dX sigma(z)
    + int b(z) dt, sigma(z)) to a fixed point on windows of length <= ``tau``,
    halving ``tau`` when a window fails to contract.  Returns
    ``(ControlledPath, SolveReport)``.
    """
    a = np.atleast_1d(np.asarray(a, dtype=complex))
    if a.shape != (field.k,) or rp.d != field.d:
        raise ValueError("dimension mismatch between state, field and driver")
    if mode == "one-step":
        return _solve_one_step(a, field, rp)
    if mode == "picard":
        span = float(np.abs(rp.points[-1] - rp.points[0]))
        tau = span if tau is None else tau
        for halving in range(max_halvings + 1):
            try:
                cp, rep = _solve_picard(a, field, rp, tau, tol, max_iter, integral_method)
                rep.halvings = halving
                return cp, rep
            except (DivergenceError, BallExitError, FloatingPointError):
                tau /= 2
        raise DivergenceError(f"Picard iteration did not contract after {max_halvings} halvings")
    raise ValueError(f"unknown mode {mode!r}")


def driver_path(rp: RoughPath):
    """Driver values relative to the first grid point, shape (n, d)."""
    c1 = rp.cells[0]
    return np.concatenate([np.zeros((1, rp.d), dtype=complex), np.cumsum(c1, axis=0)])


def _cell_level2(rp: RoughPath):
    if rp.N >= 2:
        return rp.cells[1].reshape(-1, rp.d, rp.d)
    c1 = rp.cells[0]
    return 0.5 * c1[:, :, None] * c1[:, None, :]


def _solve_one_step(a, field, rp):
    if rp.batch_shape:
        raise ValueError("the solver takes a single driver realization")
    x1s = rp.cells[0]
    x2s = _cell_level2(rp)
    n = rp.n_points
    y = np.empty((n, field.k), dtype=complex)
    y[0] = a
    pts = rp.points
    for j in range(n - 1):
        nxt = euler_step(y[j], field, x1s[j], x2s[j])
        if field.drift is not None:
            h = pts[j + 1] - pts[j]
            b0 = field.drift(y[j])
            pred = nxt + h * b0
            nxt = nxt + 0.5 * h * (b0 + field.drift(pred))
        field.check_ball(nxt)
        y[j + 1] = nxt
    cp = ControlledPath(rp.points, y, field(y), driver_path(rp))
    return cp, SolveReport("one-step")


def _windows(points, tau):
    bounds = [0]
    n = len(points)
    while bounds[-1] < n - 1:
        lo = bounds[-1]
        hi = lo + 1
        while hi + 1 < n and abs(points[hi + 1] - points[lo]) <= tau:
            hi += 1
        bounds.append(hi)
    return list(zip(bounds[:-1], bounds[1:]))


def _solve_picard(a, field, rp, tau, tol, max_iter, integral_method):
    rep = SolveReport("picard", tau)
    n = rp.n_points
    y = np.empty((n, field.k), dtype=complex)
    zeta = np.empty((n, field.d, field.k), dtype=complex)
    y[0] = a
    for lo, hi in _windows(rp.points, tau):
        X1, X2 = driver_pairs(rp, lo, hi)
        pts = rp.points[lo:hi + 1]
        m = hi - lo + 1
        z = np.broadcast_to(y[lo], (m, field.k)).copy()
        cp = ControlledPath(pts, z, field(z), X1[:, 0], X2)
        change = np.inf
        for it in range(1, max_iter + 1):
            with np.errstate(over="raise", invalid="raise"):
                integrand = compose_field(cp, field)
                new = rough_integral(integrand, start=y[lo], method=integral_method)
                new.z = new.z + _drift_trapezoid(field, pts, cp.z)
            field.check_ball(new.z)
            scale = max(float(np.abs(new.z).max()), 1e-300)
            change = float(np.abs(new.z - cp.z).max()) / scale
            cp = new
            if change < tol:
                break
        else:
            raise DivergenceError(f"no contraction on window [{lo}, {hi}]: change {change:.2e}")
        y[lo:hi + 1] = cp.z
        zeta[lo:hi + 1] = cp.zeta
        rep.iterations.append(it)
        rep.residuals.append(change)
    rep.windows = len(rep.iterations)
    return ControlledPath(rp.points, y, zeta, driver_path(rp)), rep
