"""Seeded sample paths of the analytic fBm on grids in the closed upper half-plane.

Two independent mechanisms:

* truncated random series for the derivative, integrated along the grid polyline
  (open half-plane only);
* Cholesky factorization of the closed-form covariance of the real vector
  (Re G, Im G), which also covers grid points on the real axis.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .quadrature import adaptive_segment
from .specfun import (
    boundary_covariance,
    check_alpha,
    halfplane_covariance,
    series_coefficient,
    series_tail_bound,
    truncation_for,
)

BLOCK = 1024  # replicas per noise block; fixed so that extra replicas never shift earlier ones
MAX_FACTORIZED = 4096
JITTERS = (0.0, 1e-14, 1e-12, 1e-10, 1e-8)


class TruncationError(RuntimeError):
    """Series tail above tolerance at some grid point."""


class NonPSDError(RuntimeError):
    """Covariance not factorizable even after maximal jitter."""


# noise ---------------------------------------------------------------------

def _path_key(path: tuple) -> list[int]:
    digest = hashlib.sha256("/".join(map(str, path)).encode()).digest()
    return [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]


@dataclass(frozen=True)
class NoiseStream:
    """Counter-based complex Gaussian noise: E xi = 0, E xi^2 = 0, E|xi|^2 = 1.

    A stream is identified by a root seed and a name path; ``child`` derives
    independent sub-streams and ``advance`` moves the counter.  Identical
    (seed, path, counter) always produce identical draws.
    """

    seed: int
    path: tuple = ()
    counter: int = 0

    def child(self, *names) -> "NoiseStream":
        return NoiseStream(self.seed, self.path + tuple(str(n) for n in names), 0)

    def advance(self, steps: int = 1) -> "NoiseStream":
        return NoiseStream(self.seed, self.path, self.counter + steps)

    def generator(self, block: int = 0) -> np.random.Generator:
        ss = np.random.SeedSequence(
            entropy=int(self.seed), spawn_key=(*_path_key(self.path), self.counter, block)
        )
        return np.random.Generator(np.random.Philox(ss))

    def real_normal(self, shape, block: int = 0) -> np.ndarray:
        return self.generator(block).standard_normal(shape)

    def complex_normal(self, shape, block: int = 0) -> np.ndarray:
        g = self.generator(block)
        shape = tuple(np.atleast_1d(shape))
        z = g.standard_normal(shape + (2,))
        return (z[..., 0] + 1j * z[..., 1]) / np.sqrt(2.0)

    def replica_block(self, start: int, stop: int, dim: int, kind: str = "real") -> np.ndarray:
        """Rows ``start:stop`` of an unbounded replica-major matrix with ``dim`` columns."""
        draw = self.real_normal if kind == "real" else self.complex_normal
        out = []
        b0, b1 = start // BLOCK, (stop - 1) // BLOCK
        for b in range(b0, b1 + 1):
            rows = draw((BLOCK, dim), block=b)
            lo = max(start - b * BLOCK, 0)
            hi = min(stop - b * BLOCK, BLOCK)
            out.append(rows[lo:hi])
        if not out:
            return np.empty((0, dim))
        return np.concatenate(out, axis=0)


# grids ---------------------------------------------------------------------

@dataclass(frozen=True)
class Grid:
    """Ordered, distinct points in the closed upper half-plane."""

    points: np.ndarray
    base_height: float = 0.0
    uniform_step: float | None = None
    radius: float | None = None

    def __post_init__(self):
        pts = np.atleast_1d(np.asarray(self.points, dtype=complex)).copy()
        pts.setflags(write=False)
        if np.any(pts.imag < 0):
            raise ValueError("grid points must satisfy Im >= 0")
        if len(np.unique(pts)) != len(pts):
            raise ValueError("grid points must be distinct")
        if self.radius is not None and np.any(np.abs(pts) > self.radius):
            raise ValueError("grid leaves the working ball")
        object.__setattr__(self, "points", pts)

    @classmethod
    def uniform(cls, a: float, b: float, n: int, height: float = 0.0, radius=None):
        pts = np.linspace(a, b, n) + 1j * height
        step = (b - a) / (n - 1) if n > 1 else None
        return cls(pts, float(height), step, radius)

    @classmethod
    def dyadic(cls, a: float, b: float, level: int, height: float = 0.0):
        return cls.uniform(a, b, 2**level + 1, height)

    def __len__(self):
        return len(self.points)

    @property
    def anchor_index(self) -> int:
        return int(np.argmin(np.abs(self.points)))

    def refine(self, M: int) -> "Grid":
        """Insert M - 1 equally spaced points inside each consecutive cell."""
        if M < 1:
            raise ValueError("M must be >= 1")
        p = self.points
        frac = np.arange(M) / M
        fine = (p[:-1, None] + (p[1:] - p[:-1])[:, None] * frac).ravel()
        fine = np.append(fine, p[-1])
        step = self.uniform_step / M if self.uniform_step else None
        return Grid(fine, self.base_height, step, self.radius)


def regularize(grid: Grid, epsilon: float) -> Grid:
    """Shift a grid up by i*epsilon; sampling there realizes the regularized process."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    return Grid(grid.points + 1j * epsilon, grid.base_height + epsilon, grid.uniform_step,
                None if grid.radius is None else grid.radius + epsilon)


# sample paths --------------------------------------------------------------

@dataclass(frozen=True)
class SamplePath:
    """Sampled values of ``d`` components; ``values`` has shape (..., d, n_points)."""

    grid: Grid
    values: np.ndarray
    alpha: float
    seed: int
    method: str
    K: int | None = None
    meta: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.values.shape[-2]

    def to_csv(self, path) -> None:
        if self.values.ndim != 2:
            raise ValueError("CSV export expects a single replica")
        lines = [f"# alpha={self.alpha} seed={self.seed} method={self.method} K={self.K}",
                 "component,re_t,im_t,re_value,im_value"]
        for c in range(self.d):
            for z, v in zip(self.grid.points, self.values[c]):
                lines.append(f"{c + 1},{z.real!r},{z.imag!r},{v.real!r},{v.imag!r}")
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


def covariance_matrix(points, alpha: float, anchor=0.0):
    """E[(G_z - G_a) conj(G_w - G_a)] over a point set, with anchor a."""
    z = np.asarray(points, dtype=complex)
    if np.all(z.imag == 0) and complex(anchor) == 0:
        return boundary_covariance(z.real[:, None], z.real[None, :], alpha)[1]
    R = halfplane_covariance(z[:, None], z[None, :], alpha)
    if complex(anchor) != 0:
        a = np.array([complex(anchor)])
        ra = halfplane_covariance(z, a, alpha)
        R = R - ra[:, None] - np.conj(ra)[None, :] + halfplane_covariance(a, a, alpha)[0]
    return R


def real_covariance(R: np.ndarray) -> np.ndarray:
    """Covariance of (Re G, Im G) from a Hermitian covariance with vanishing pseudo-covariance."""
    top = np.hstack([R.real, -R.imag])
    bot = np.hstack([R.imag, R.real])
    return 0.5 * np.vstack([top, bot])


def jittered_cholesky(S: np.ndarray):
    """Lower Cholesky factor with diagonal jitter escalation; returns (L, jitter used)."""
    scale = float(np.mean(np.diag(S))) or 1.0
    for j in JITTERS:
        try:
            L = linalg.cholesky(S + j * scale * np.eye(len(S)), lower=True)
            return L, j
        except linalg.LinAlgError:
            continue
    raise NonPSDError("covariance not positive definite after jitter 1e-8")


class FactorizedSampler:
    """Exact Gaussian draws on a fixed grid via the Cholesky factor of the (Re, Im) covariance."""

    def __init__(self, grid: Grid, alpha: float, anchor: str | complex = "origin"):
        if len(grid) > MAX_FACTORIZED:
            raise ValueError(f"factorized sampling is limited to {MAX_FACTORIZED} points")
        self.grid = grid
        self.alpha = check_alpha(alpha)
        pts = grid.points
        if anchor == "origin":
            a = 0.0
        elif anchor == "nearest":
            a = pts[grid.anchor_index]
        else:
            a = complex(anchor)
        self.anchor = complex(a)
        R = covariance_matrix(pts, alpha, self.anchor)
        var = np.real(np.diag(R))
        self.free = var > 1e-300  # the anchor itself is pinned to zero
        S = real_covariance(R[np.ix_(self.free, self.free)])
        self.m = int(self.free.sum())
        if self.m:
            self.factor, self.jitter = jittered_cholesky(S)
        else:
            self.factor, self.jitter = np.zeros((0, 0)), 0.0

    def draw(self, noise: NoiseStream, d: int = 1, start: int = 0, stop: int | None = None):
        """Values of shape (replicas, d, n); a single replica when ``stop`` is None."""
        single = stop is None
        stop = start + 1 if single else stop
        n = len(self.grid)
        out = np.zeros((stop - start, d, n), dtype=complex)
        for c in range(d):
            if not self.m:
                continue
            Z = noise.child("component", c).replica_block(start, stop, 2 * self.m)
            X = Z @ self.factor.T
            out[:, c, self.free] = X[:, :self.m] + 1j * X[:, self.m:]
        return out[0] if single else out


def sample_factorized(grid: Grid, alpha: float, d: int, noise: NoiseStream,
                      anchor: str | complex = "origin") -> SamplePath:
    """One correlated Gaussian draw of ``d`` independent components on ``grid``."""
    fs = FactorizedSampler(grid, alpha, anchor)
    vals = fs.draw(noise, d)
    return SamplePath(grid, vals, alpha, noise.seed, "factorization", None,
                      {"jitter": fs.jitter, "anchor": fs.anchor})


class SeriesSampler:
    """Truncated-series sampler.

    Segment integrals of every coefficient function f_k along the grid polyline
    are computed once by adaptive Gauss-Legendre; each replica is then a matrix
    product with the noise vector.  Paths vanish at the grid point nearest 0.
    """

    def __init__(self, grid: Grid, alpha: float, K: int | None = None, tail_tol: float = 1e-8,
                 rtol: float = 1e-9):
        self.grid = grid
        self.alpha = check_alpha(alpha)
        pts = grid.points
        if np.any(pts.imag <= 0):
            raise ValueError("series sampling needs Im z > 0 at every grid point")
        self.K = truncation_for(pts, alpha, tail_tol) if K is None else int(K)
        if self.K < 1:
            raise ValueError("K must be >= 1")
        tails = series_tail_bound(pts, self.K, alpha)
        if np.any(tails > tail_tol):
            raise TruncationError(
                f"series tail {tails.max():.2e} exceeds {tail_tol:.1e} with K={self.K}")
        self.tail = float(tails.max())
        self.rtol = rtol
        ks = np.arange(self.K)
        segs = np.zeros((self.K, max(len(pts) - 1, 0)), dtype=complex)
        for j in range(len(pts) - 1):
            segs[:, j] = adaptive_segment(
                lambda z: series_coefficient(ks[:, None], z[None, :], alpha),
                pts[j], pts[j + 1], rtol=rtol)[0]
        cum = np.concatenate([np.zeros((self.K, 1)), np.cumsum(segs, axis=1)], axis=1)
        a = grid.anchor_index
        self.weights = cum - cum[:, a:a + 1]  # (K, n): path integral from the anchor

    def draw(self, noise: NoiseStream, d: int = 1, start: int = 0, stop: int | None = None):
        single = stop is None
        stop = start + 1 if single else stop
        out = np.empty((stop - start, d, len(self.grid)), dtype=complex)
        for c in range(d):
            xi = noise.child("component", c).replica_block(start, stop, self.K, kind="complex")
            out[:, c, :] = xi @ self.weights
        return out[0] if single else out

    def derivative_weights(self, points) -> np.ndarray:
        return series_coefficient(np.arange(self.K)[:, None], np.asarray(points)[None, :], self.alpha)


def sample_series(grid: Grid, alpha: float, d: int, K: int | None, noise: NoiseStream,
                  tail_tol: float = 1e-8) -> SamplePath:
    """One draw of ``d`` components from the truncated series."""
    if len(grid) == 1:
        return SamplePath(grid, np.zeros((d, 1), dtype=complex), alpha, noise.seed, "series", K)
    ss = SeriesSampler(grid, alpha, K, tail_tol)
    return SamplePath(grid, ss.draw(noise, d), alpha, noise.seed, "series", ss.K,
                      {"tail": ss.tail, "rtol": ss.rtol})


def empirical_moments(values: np.ndarray):
    """Sample estimates with standard errors for E[X conj Y] and E[X Y] over the replica axis 0."""
    R = values.shape[0]
    prod = values[:, :, None] * np.conj(values[:, None, :])
    pseudo = values[:, :, None] * values[:, None, :]
    out = {}
    for name, arr in (("cov", prod), ("pseudo", pseudo)):
        m = arr.mean(axis=0)
        se = (arr.real.std(axis=0, ddof=1) + 1j * arr.imag.std(axis=0, ddof=1)) / np.sqrt(R)
        out[name] = (m, se)
    return out
