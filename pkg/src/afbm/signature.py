"""Truncated iterated integrals of sampled paths and the Chen / shuffle audits.

Index convention: the level-2 entry (i, j) over [s, t] is
int_s^t dX(i)_u (X(j)_u - X(j)_s), so the later increment carries the first
index.  Accordingly the element over [s, t] equals (element over [u, t])
tensor (element over [s, u]).

Levels are stored flattened with shape (*batch, d**n); ``level(n)`` style
accessors reshape to (*batch, d, ..., d).
"""

from __future__ import annotations

import itertools
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .quadrature import cumulative_matrix, gauss_legendre
from .sampler import SamplePath

MAX_DIM = 3
MAX_LEVEL = 4


class RefinementWarning(UserWarning):
    """Level-2 cell values moved more than the quadrature tolerance when substeps doubled."""


def _check_size(d: int, N: int):
    if d > MAX_DIM or N > MAX_LEVEL:
        raise ValueError(f"dense storage supports d <= {MAX_DIM} and N <= {MAX_LEVEL}")
    if d < 1 or N < 1:
        raise ValueError("need d >= 1 and N >= 1")


def _outer(a, b):
    prod = a[..., :, None] * b[..., None, :]
    return prod.reshape(prod.shape[:-2] + (a.shape[-1] * b.shape[-1],))


def tensor_mul(a, b):
    """Product of truncated group-like elements given by their levels 1..N (level 0 is 1)."""
    N = len(a)
    out = []
    for n in range(1, N + 1):
        v = a[n - 1] + b[n - 1]
        for j in range(1, n):
            v = v + _outer(a[j - 1], b[n - j - 1])
        out.append(v)
    return out


def _step_levels(levels, inc):
    # in-place (1 + inc) tensor S, inc carrying the later index
    N = len(levels)
    for n in range(N, 1, -1):
        levels[n - 1] = levels[n - 1] + _outer(inc, levels[n - 2])
    levels[0] = levels[0] + inc


def linear_cell_levels(delta, N: int, M: int | None):
    """Left-point iterated sums of a linear segment split into M equal substeps.

    Level n equals C(M, n) / M**n * delta^{(x)n}; ``M=None`` gives the exact
    signature delta^{(x)n} / n! of the straight segment.
    """
    out = []
    power = delta
    for n in range(1, N + 1):
        if n > 1:
            power = _outer(delta, power)
        coef = 1.0 / math.factorial(n) if M is None else math.comb(M, n) / M**n
        out.append(coef * power)
    return out


def fine_cell_levels(fine_increments, N: int):
    """Left-point iterated sums from substep increments of shape (..., M, d)."""
    inc = np.moveaxis(fine_increments, -2, 0)
    d = inc.shape[-1]
    shape = inc.shape[1:-1]
    levels = [np.zeros(shape + (d**n,), dtype=complex) for n in range(1, N + 1)]
    for k in range(inc.shape[0]):
        _step_levels(levels, inc[k])
    return levels


@dataclass
class RoughPath:
    """Cell-level iterated integrals on a grid, composed by Chen on demand.

    ``cells[n-1]`` has shape (*batch, n_cells, d**n).
    """

    points: np.ndarray
    cells: list
    d: int
    N: int
    alpha: float | None = None
    epsilon: float | None = None
    M: int | None = None
    method: str = "linear"
    meta: dict = field(default_factory=dict)

    @property
    def n_points(self) -> int:
        return len(self.points)

    @property
    def batch_shape(self):
        return self.cells[0].shape[:-2]

    def cell(self, k: int):
        return [c[..., k, :] for c in self.cells]

    def segment(self, t: int, s: int):
        """Levels 1..N over grid indices s <= t (zeros when t == s)."""
        if t < s:
            raise ValueError("segment needs t >= s")
        if t == s:
            return [np.zeros(self.batch_shape + (self.d**n,), dtype=complex)
                    for n in range(1, self.N + 1)]
        S = self.cell(s)
        for k in range(s + 1, t):
            S = tensor_mul(self.cell(k), S)
        return S

    def level(self, n: int, t: int, s: int):
        v = self.segment(t, s)[n - 1]
        return v.reshape(v.shape[:-1] + (self.d,) * n)

    def all_pairs(self):
        """Levels for every pair, shape (*batch, n, n, d**n), filled for t >= s."""
        n = self.n_points
        out = [np.zeros(self.batch_shape + (n, n, self.d**k), dtype=complex)
               for k in range(1, self.N + 1)]
        # S[t, s] for all s < t, advanced one cell at a time
        for t in range(1, n):
            cell = [c[..., t - 1, None, :] for c in self.cells]
            prev = [o[..., t - 1, :t, :] for o in out]
            new = tensor_mul(cell, prev)
            for k in range(self.N):
                out[k][..., t, :t, :] = new[k]
        return out

    def to_json(self) -> str:
        if self.batch_shape:
            raise ValueError("JSON export expects a single replica")
        pairs = self.all_pairs()
        levels = []
        for n in range(1, self.N + 1):
            entries = []
            arr = pairs[n - 1]
            for t in range(self.n_points):
                for s in range(t):
                    for flat, tup in enumerate(itertools.product(range(1, self.d + 1), repeat=n)):
                        v = arr[t, s, flat]
                        entries.append([t, s, list(tup), float(v.real), float(v.imag)])
            levels.append({"n": n, "entries": entries})
        return json.dumps({
            "alpha": self.alpha, "epsilon": self.epsilon, "d": self.d, "N": self.N,
            "grid": [[float(z.real), float(z.imag)] for z in self.points],
            "levels": levels,
        })


def default_level(alpha: float) -> int:
    return int(math.floor(1.0 / alpha))


def build_signature(path: SamplePath, N: int | None = None, M: int | None = 32,
                    sampled_substeps: bool = False, quad_tol: float = 1e-2,
                    warn: bool = True) -> RoughPath:
    """Iterated integrals of a sampled path up to level N.

    With ``sampled_substeps`` the path lives on a grid refined M times and the
    coarse grid is every M-th point; cell integrals are left-point sums over the
    sampled substeps.  Otherwise each cell is linearly interpolated with M
    substeps (``M=None``: exact straight-segment signature).  Cells are
    combined by Chen's rule, so multiplicativity holds to rounding.
    """
    vals = np.asarray(path.values)
    d = vals.shape[-2]
    N = default_level(path.alpha) if N is None else N
    _check_size(d, N)
    x = np.moveaxis(vals, -2, -1)  # (*batch, n, d)
    if sampled_substeps:
        if M is None or M < 1 or (x.shape[-2] - 1) % M:
            raise ValueError("sampled substeps need (n_fine - 1) divisible by M")
        fine = np.diff(x, axis=-2)
        n_cells = fine.shape[-2] // M
        fine = fine.reshape(fine.shape[:-2] + (n_cells, M, d))
        cells = fine_cell_levels(fine, N)
        points = path.grid.points[::M]
        if warn and M >= 2 and M % 2 == 0 and N >= 2:
            merged = fine.reshape(fine.shape[:-3] + (n_cells, M // 2, 2, d)).sum(axis=-2)
            coarse2 = fine_cell_levels(merged, 2)[1]
            _refinement_check(cells[1], coarse2, quad_tol)
    else:
        delta = np.diff(x, axis=-2)
        cells = linear_cell_levels(delta, N, M)
        points = path.grid.points
        if warn and M is not None and N >= 2:
            _refinement_check(cells[1], linear_cell_levels(delta, 2, 2 * M)[1], quad_tol)
    return RoughPath(np.asarray(points), cells, d, N, path.alpha, path.grid.base_height,
                     M, "sampled" if sampled_substeps else "linear")


def _refinement_check(a, b, tol):
    scale = max(float(np.abs(a).max()), 1e-300)
    change = float(np.abs(a - b).max()) / scale
    if change > tol:
        warnings.warn(f"level-2 cell values move by {change:.2e} (relative) under substep "
                      f"refinement; tolerance {tol:.1e}", RefinementWarning, stacklevel=3)


def smooth_signature(derivative, points, N: int, p: int = 16, alpha=None) -> RoughPath:
    """Iterated integrals of a smooth deterministic path from its derivative.

    ``derivative(x)`` returns shape (len(x), d).  Each cell uses nested
    Gauss-Legendre cumulative matrices, exact for polynomial paths of degree
    up to p.
    """
    pts = np.asarray(points, dtype=complex)
    Q = cumulative_matrix(p)
    xs, ws = gauss_legendre(p)
    h = np.diff(pts)
    nodes = pts[:-1, None] + h[:, None] * xs  # (cells, p)
    dX = np.asarray(derivative(nodes.ravel()), dtype=complex).reshape(len(h), p, -1)
    d = dX.shape[-1]
    _check_size(d, N)
    dX = dX * h[:, None, None]  # d/dx over unit parameter
    cells = []
    prev = None  # running integral at nodes, (cells, p, d**(n-1))
    for n in range(1, N + 1):
        integrand = dX if prev is None else _outer(dX, prev)
        cells.append(np.einsum("j,cjk->ck", ws, integrand))
        prev = np.einsum("ij,cjk->cik", Q, integrand)
    return RoughPath(pts, cells, d, N, alpha, float(pts.imag.min()), None, "smooth")


# relations ---------------------------------------------------------------------

@dataclass(frozen=True)
class RelationReport:
    name: str
    max_residual: float
    tolerance: float
    passed: bool
    detail: dict = field(default_factory=dict)


def check_chen(rp: RoughPath, tol: float = 1e-12) -> RelationReport:
    """max relative |X^n_ts - X^n_tu - X^n_us - sum_j X^j_tu X^(n-j)_us| over t > u > s."""
    pairs = rp.all_pairs()
    n = rp.n_points
    worst = 0.0
    per_level = {}
    for lev in range(1, rp.N + 1):
        X = pairs[lev - 1]
        scale = max(float(np.abs(X).max()), 1e-300)
        res_max = 0.0
        for t in range(2, n):
            for u in range(1, t):
                s = np.arange(u)
                res = X[..., t, s, :] - X[..., t, u, None, :] - X[..., u, s, :]
                for j in range(1, lev):
                    res = res - _outer(pairs[j - 1][..., t, u, None, :],
                                       pairs[lev - j - 1][..., u, s, :])
                res_max = max(res_max, float(np.abs(res).max()))
        per_level[lev] = res_max / scale
        worst = max(worst, per_level[lev])
    return RelationReport("chen", worst, tol, worst < tol, {"per_level": per_level})


def shuffles(I: tuple, J: tuple):
    """All interleavings of two words keeping each word's internal order (with multiplicity)."""
    n, m = len(I), len(J)
    for pos in itertools.combinations(range(n + m), n):
        word, a, b = [], 0, 0
        ps = set(pos)
        for k in range(n + m):
            if k in ps:
                word.append(I[a])
                a += 1
            else:
                word.append(J[b])
                b += 1
        yield tuple(word)


def _flat_index(word, d):
    k = 0
    for i in word:
        k = k * d + i
    return k


def shuffle_residual(levels, d: int, N: int):
    """max |X(I) X(J) - sum_shuffles X(I sh J)| over words with |I| + |J| <= N, per level sum."""
    worst = 0.0
    by_order = {}
    for n in range(1, N):
        for m in range(1, N - n + 1):
            if m < n:
                continue
            for I in itertools.product(range(d), repeat=n):
                for J in itertools.product(range(d), repeat=m):
                    lhs = levels[n - 1][..., _flat_index(I, d)] * levels[m - 1][..., _flat_index(J, d)]
                    rhs = sum(levels[n + m - 1][..., _flat_index(w, d)] for w in shuffles(I, J))
                    r = float(np.abs(lhs - rhs).max())
                    by_order[(n, m)] = max(by_order.get((n, m), 0.0), r)
                    worst = max(worst, r)
    return worst, by_order


def check_shuffle(rp: RoughPath, tol: float | None = None, t: int | None = None,
                  s: int = 0) -> RelationReport:
    """Shuffle residual of the element over [s, t] (default the whole grid).

    The default tolerance is c / M with c = 2 * sum over cells of |cell increment|^2,
    the size of the left-point error; exact signatures get 1e-12 times the
    squared increment scale.
    """
    t = rp.n_points - 1 if t is None else t
    levels = rp.segment(t, s)
    worst, by_order = shuffle_residual(levels, rp.d, rp.N)
    c = 2.0 * float(np.max(np.sum(np.abs(rp.cells[0][..., s:t, :]) ** 2, axis=(-1, -2))))
    if tol is None:
        tol = c / rp.M if rp.M else 1e-12 * max(c, 1.0)
    return RelationReport("shuffle", worst, tol, worst <= tol,
                          {"by_order": {f"{a}+{b}": v for (a, b), v in by_order.items()}})


def check_symmetric_part(rp: RoughPath, t: int | None = None, s: int = 0) -> RelationReport:
    """max |X2(i,j) + X2(j,i) - dX(i) dX(j)| over [s, t]."""
    t = rp.n_points - 1 if t is None else t
    lv = rp.segment(t, s)
    d = rp.d
    x1 = lv[0]
    x2 = lv[1].reshape(lv[1].shape[:-1] + (d, d))
    res = x2 + np.swapaxes(x2, -1, -2) - x1[..., :, None] * x1[..., None, :]
    r = float(np.abs(res).max())
    return RelationReport("symmetric-part", r, np.nan, True)


def coupled_signature_difference(rp_a: RoughPath, rp_b: RoughPath, n: int, t: int, s: int):
    """Level-n difference over [s, t] between two rough paths built from shared noise."""
    if rp_a.n_points != rp_b.n_points:
        raise ValueError("grids differ")
    return rp_a.level(n, t, s) - rp_b.level(n, t, s)
