"""Command-line experiments with flat key=value configs and deterministic JSON reports.

Precedence, lowest first: command defaults, ``--config`` file, ``--set key=value``,
dedicated flags (``--alpha``, ``--seed``, ``--replicas``, ``--workers``).

Reports contain no timing so that a fixed (config, seed) gives a byte-identical
file; wall time goes to ``timing.json`` next to the report and to stderr.
"""

from __future__ import annotations

import argparse
import ast
import csv
import json
import math
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import __version__
from .algebra import Increment, integrate_germ, integrate_germ_function, sew_function
from .oracle import (
    analytic_area_variance,
    analytic_area_variance_limit,
    iterated_variance_oracle,
    mixed_area_variance,
    vertical_increment_variance,
)
from .rde import VectorField, solve_rde
from .sampler import FactorizedSampler, Grid, NoiseStream, SamplePath, SeriesSampler
from .signature import build_signature, check_chen, check_shuffle, smooth_signature
from .specfun import (
    boundary_covariance,
    covariance_kernel,
    levy_variance_limit,
    re_im_cross_covariance,
    series_coefficient,
    series_tail_bound,
)

CHUNK = 4096

COMMON = {"seed": 1, "workers": 1, "out": None}

DEFAULTS = {
    "kernel-check": {"alphas": "0.1,0.3,0.45", "K": 200, "n_grid": 10, "re_min": -1.0,
                     "re_max": 1.0, "im_min": 0.2, "im_max": 2.0, "normalization": "unit",
                     "threshold": 1e-6},
    "cov-check": {"alpha": 0.3, "replicas": 100_000, "n_points": 16, "t_min": -1.0,
                  "t_max": 1.0, "n_se": 3.0},
    "rate": {"study": "increment", "alphas": "0.15,0.3", "t": 0.5, "eps_max": 0.2,
             "eps_min": 0.02, "rungs": 5, "eta_ratio": 0.5, "replicas": 100_000, "n_se": 3.0,
             "slope_tol": 0.1, "tail_tol": 1e-8,
             # iterated study
             "alpha": 0.3, "level": 3, "eps": 0.25, "eta": 0.125, "s": 0.0, "t_end": 1.0,
             "cells": 128},
    "levy-variance": {"alphas": "0.15,0.3,0.4", "rel_tol": 0.005, "mc": True,
                      "mc_eps": 2.0**-8, "cells": 256, "replicas": 100_000, "n_se": 3.0},
    "divergence": {"alphas": "0.15,0.35", "eps_max_exp": 4, "eps_min_exp": 9, "slope_tol": 0.05,
                   "bound_ratio": 1.5, "last_rungs": 3},
    "signature": {"alphas": "0.3,0.22", "d": 2, "chen_points": 33, "eps": 2.0**-6,
                  "chen_tol": 1e-12, "shuffle_alpha": 0.3, "shuffle_cells": 16,
                  "substeps": "8,16,32,64,128", "ratio_tol": 0.2},
    "sew-check": {"grid_level": 10, "euler_tol": 1e-10, "poly_tol": 1e-9},
    "solve": {"alpha": 0.4, "levels": "5,8,11", "smooth_steps": "16,32,64,128",
              "ratio_target": 4.0, "ratio_tol": 0.5, "picard_level": 8, "tau": 0.25,
              "picard_tol": 1e-10, "a": 1.0},
    "emit": {"report": None},
}


# config -----------------------------------------------------------------------

def parse_value(text: str):
    text = text.strip()
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    if text.lower() in ("none", "null"):
        return None
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def read_config(path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key = value")
        key, value = line.split("=", 1)
        out[key.strip()] = parse_value(value)
    return out


def build_config(command: str, file_cfg=None, overrides=None, flags=None) -> dict:
    cfg = dict(COMMON)
    cfg.update(DEFAULTS[command])
    for layer in (file_cfg or {}, overrides or {}, flags or {}):
        for k, v in layer.items():
            if v is None:
                continue
            if k not in cfg:
                raise ValueError(f"unknown key {k!r} for command {command}")
            cfg[k] = v
    validate(command, cfg)
    return cfg


def floats(value) -> list:
    if isinstance(value, (int, float)):
        return [float(value)]
    if isinstance(value, (list, tuple)):
        return [float(v) for v in value]
    return [float(v) for v in str(value).split(",") if v.strip()]


def ints(value) -> list:
    return [int(v) for v in floats(value)]


def validate(command: str, cfg: dict):
    for key in ("alpha", "shuffle_alpha"):
        if key in cfg and not 0 < float(cfg[key]) < 0.5:
            raise ValueError(f"{key} must lie in (0, 1/2)")
    if "alphas" in cfg:
        if any(not 0 < a < 0.5 for a in floats(cfg["alphas"])):
            raise ValueError("alphas must lie in (0, 1/2)")
    if "replicas" in cfg and int(cfg["replicas"]) < 2:
        raise ValueError("replicas must be at least 2")
    if int(cfg["workers"]) < 1:
        raise ValueError("workers must be positive")
    if command == "emit" and not cfg.get("report"):
        raise ValueError("emit needs report=<path to report JSON>")


# reports ----------------------------------------------------------------------

def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


def check(name, estimate, threshold, passed, reference=None, std_error=None, residual=None,
          **extra):
    out = {"name": name, "estimate": estimate, "reference": reference, "std_error": std_error,
           "residual": residual, "threshold": threshold, "pass": bool(passed)}
    out.update(extra)
    return out


def make_report(command, cfg, checks, sweeps=None, notes=None):
    # output location is not an input; keeping it out makes reports byte-identical across dirs
    config = {k: v for k, v in cfg.items() if k != "out"}
    rep = {"command": command, "version": __version__, "config": config, "checks": checks,
           "sweeps": sweeps or {}, "pass": all(c["pass"] for c in checks)}
    if notes:
        rep["notes"] = notes
    return _plain(rep)


def dump_report(report) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def sweep(columns, rows):
    return {"columns": list(columns), "rows": [list(r) for r in rows]}


def write_sweep_csv(sw, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(sw["columns"])
        for row in sw["rows"]:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def read_sweep_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return sweep(rows[0], [[parse_value(v) for v in r] for r in rows[1:]])


# replica-parallel Monte Carlo -------------------------------------------------

def map_chunks(func, args, replicas: int, workers: int = 1):
    """Run ``func(args, start, stop)`` over fixed replica chunks; results in chunk order.

    Chunk boundaries do not depend on ``workers``, so the merged result is identical
    for any worker count.
    """
    bounds = [(a, min(a + CHUNK, replicas)) for a in range(0, replicas, CHUNK)]
    if workers == 1:
        return [func(args, a, b) for a, b in bounds]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futs = [pool.submit(func, args, a, b) for a, b in bounds]
        return [f.result() for f in futs]


class Moments:
    """Running sums for means and standard errors of real arrays."""

    def __init__(self):
        self.n = 0
        self.s1 = 0.0
        self.s2 = 0.0

    def add(self, samples):
        self.n += samples.shape[0]
        self.s1 = self.s1 + samples.sum(axis=0)
        self.s2 = self.s2 + (samples**2).sum(axis=0)

    @classmethod
    def merge(cls, parts):
        m = cls()
        for p in parts:
            m.n += p[0]
            m.s1 = m.s1 + p[1]
            m.s2 = m.s2 + p[2]
        return m

    def state(self):
        return self.n, self.s1, self.s2

    @property
    def mean(self):
        return self.s1 / self.n

    @property
    def se(self):
        var = (self.s2 - self.n * self.mean**2) / (self.n - 1)
        return np.sqrt(np.maximum(var, 0.0) / self.n)


def _moments_of(samples):
    m = Moments()
    m.add(samples)
    return m.state()


def _stream(cfg, *names):
    return NoiseStream(int(cfg["seed"])).child(*names)


# kernel-check -----------------------------------------------------------------

def cmd_kernel_check(cfg):
    re = np.linspace(cfg["re_min"], cfg["re_max"], cfg["n_grid"])
    im = np.linspace(cfg["im_min"], cfg["im_max"], cfg["n_grid"])
    pts = (re[:, None] + 1j * im[None, :]).ravel()
    K = int(cfg["K"])
    scale = 2.0 if cfg["normalization"] == "wrong" else 1.0
    checks, rows = [], []
    for a in floats(cfg["alphas"]):
        f = series_coefficient(np.arange(K)[:, None], pts[None, :], a)
        series = scale * (f.T @ np.conj(f))
        exact = covariance_kernel(pts[:, None], pts[None, :], a)
        dev = float(np.abs(series - exact).max())
        factor = float(np.median(np.abs(series) / np.abs(exact)))
        bound = float(series_tail_bound(pts, K, a).max())
        checks.append(check(f"series identity alpha={a}", dev, cfg["threshold"],
                            dev < cfg["threshold"], residual=dev, tail_bound=bound,
                            normalization_factor=factor))
        rows.append([a, dev, factor])
        f0 = series_coefficient(0, 1j, a)
        one = scale * abs(f0) ** 2
        ref = float(covariance_kernel(1j, 1j, a).real)
        checks.append(check(f"single term at z=w=i alpha={a}", one, 1e-14,
                            abs(one - ref) <= 1e-14 * abs(ref), reference=ref,
                            residual=abs(one - ref)))
    return make_report("kernel-check", cfg, checks,
                       {"deviation": sweep(["alpha", "max_deviation", "normalization_factor"], rows)})


# cov-check --------------------------------------------------------------------

def _cov_grid(cfg):
    return Grid(np.linspace(cfg["t_min"], cfg["t_max"], int(cfg["n_points"])).astype(complex))


@lru_cache(maxsize=8)
def _factorized(points: tuple, alpha: float):
    return FactorizedSampler(Grid(np.array(points)), alpha)


def _cov_chunk(cfg, start, stop):
    g = _cov_grid(cfg)
    fs = _factorized(tuple(g.points), float(cfg["alpha"]))
    v = fs.draw(_stream(cfg, "cov-check"), 1, start, stop)[:, 0]
    cov = v[:, :, None] * np.conj(v[:, None, :])
    pseudo = v[:, :, None] * v[:, None, :]
    cross = v.real[:, :, None] * v.imag[:, None, :]
    samples = np.stack([cov.real, cov.imag, pseudo.real, pseudo.imag, cross], axis=1)
    return _moments_of(samples)


def cmd_cov_check(cfg):
    a = float(cfg["alpha"])
    g = _cov_grid(cfg)
    t = g.points.real
    m = Moments.merge(map_chunks(_cov_chunk, cfg, int(cfg["replicas"]), int(cfg["workers"])))
    pseudo_ref, cov_ref = boundary_covariance(t[:, None], t[None, :], a)
    cross_ref = re_im_cross_covariance(t[:, None], t[None, :], a)
    refs = np.stack([cov_ref.real, cov_ref.imag, pseudo_ref.real, pseudo_ref.imag, cross_ref])
    z = (m.mean - refs) / np.where(m.se > 0, m.se, np.inf)
    n = len(t)
    upper = np.triu(np.ones((n, n), bool))
    strict = np.triu(np.ones((n, n), bool), 1)
    # distinct entries only: Hermitian covariance, symmetric pseudo-covariance
    masks = [upper, strict, upper, upper, np.ones((n, n), bool)]
    names = ["E[G_s conj G_t] real", "E[G_s conj G_t] imag", "E[G_s G_t] real",
             "E[G_s G_t] imag", "E[Re G_s Im G_t]"]
    checks, rows = [], []
    k = float(cfg["n_se"])
    total = 0
    for i, (name, mask) in enumerate(zip(names, masks)):
        zz = np.abs(z[i][mask])
        exceed = int(np.sum(zz > k))
        total += mask.sum()
        checks.append(check(f"{name} within {k:g} SE entrywise", float(zz.max()), k, exceed == 0,
                            comparisons=int(mask.sum()), exceedances=exceed))
        for (p, q) in zip(*np.nonzero(mask)):
            rows.append([name, t[p], t[q], m.mean[i][p, q], refs[i][p, q], m.se[i][p, q]])
    notes = {"comparisons": int(total),
             "expected_exceedances_if_independent": float(total * math.erfc(k / math.sqrt(2)))}
    return make_report("cov-check", cfg, checks,
                       {"entries": sweep(["moment", "s", "t", "estimate", "reference", "stderr"],
                                         rows)}, notes)


# rate -------------------------------------------------------------------------

def _rate_ladder(cfg):
    eps = np.geomspace(cfg["eps_max"], cfg["eps_min"], int(cfg["rungs"]))
    return eps, eps * float(cfg["eta_ratio"])


@lru_cache(maxsize=32)
def _series(points: tuple, alpha: float, tail_tol: float):
    return SeriesSampler(Grid(np.array(points)), alpha, tail_tol=tail_tol)


def _rate_chunk(args, start, stop):
    cfg, a = args
    eps, eta = _rate_ladder(cfg)
    t = float(cfg["t"])
    out = []
    for e, h in zip(eps, eta):
        ss = _series((t + 1j * h, t + 1j * e), a, float(cfg["tail_tol"]))
        v = ss.draw(_stream(cfg, "rate", a), 1, start, stop)[:, 0]
        out.append(np.abs(v[:, 1] - v[:, 0]) ** 2)
    return _moments_of(np.stack(out, axis=1))


def _slope(x, y):
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def _rate_increment(cfg):
    eps, eta = _rate_ladder(cfg)
    gap = eps - eta
    checks, rows = [], []
    k = float(cfg["n_se"])
    for a in floats(cfg["alphas"]):
        m = Moments.merge(map_chunks(_rate_chunk, (cfg, a), int(cfg["replicas"]),
                                     int(cfg["workers"])))
        ref = np.array([vertical_increment_variance(cfg["t"], e, h, a) for e, h in zip(eps, eta)])
        z = np.abs(m.mean - ref) / m.se
        checks.append(check(f"coupled variance vs closed form alpha={a}", float(z.max()), k,
                            bool(np.all(z < k)), exceedances=int(np.sum(z >= k)),
                            comparisons=len(z)))
        slope = _slope(gap, m.mean)
        checks.append(check(f"log-log slope alpha={a}", slope, cfg["slope_tol"],
                            abs(slope - 2 * a) <= cfg["slope_tol"], reference=2 * a,
                            residual=abs(slope - 2 * a), closed_form_slope=_slope(gap, ref)))
        rows += [[a, g, y, s, r] for g, y, s, r in zip(gap, m.mean, m.se, ref)]
    sw = {"rate": sweep(["alpha", "x", "y", "stderr", "reference"], rows)}
    return make_report("rate", cfg, checks, sw)


def _iterated_points(cfg):
    x = np.linspace(cfg["s"], cfg["t_end"], int(cfg["cells"]) + 1)
    return x + 1j * cfg["eps"], x + 1j * cfg["eta"]


def _iterated_chunk(cfg, start, stop):
    top, low = _iterated_points(cfg)
    pts = np.concatenate([top, low])
    a = float(cfg["alpha"])
    n = int(cfg["level"])
    fs = _factorized(tuple(pts), a)
    v = fs.draw(_stream(cfg, "rate", "iterated"), n, start, stop)
    m = len(top)
    word = sum(j * n ** (n - 1 - j) for j in range(n))  # components (1, ..., n)
    vals = []
    for part in (slice(0, m), slice(m, 2 * m)):
        sp = SamplePath(Grid(pts[part]), v[..., part], a, int(cfg["seed"]), "factorization")
        rp = build_signature(sp, N=n, M=None, warn=False)
        vals.append(rp.segment(m - 1, 0)[n - 1][..., word])
    return _moments_of((np.abs(vals[0] - vals[1]) ** 2)[:, None])


def _rate_iterated(cfg):
    a, n = float(cfg["alpha"]), int(cfg["level"])
    if n > 3:
        raise ValueError("the iterated oracle covers levels 1 to 3")
    m = Moments.merge(map_chunks(_iterated_chunk, cfg, int(cfg["replicas"]), int(cfg["workers"])))
    ref = iterated_variance_oracle(n, cfg["eps"], cfg["eta"], cfg["s"], cfg["t_end"], a)
    est, se = float(m.mean[0]), float(m.se[0])
    k = float(cfg["n_se"])
    z = abs(est - ref) / se
    checks = [check(f"level-{n} coupled difference vs oracle", est, k, z < k, reference=ref,
                    std_error=se, residual=z)]
    return make_report("rate", cfg, checks)


def cmd_rate(cfg):
    if cfg["study"] == "increment":
        return _rate_increment(cfg)
    if cfg["study"] == "iterated":
        return _rate_iterated(cfg)
    raise ValueError("study must be 'increment' or 'iterated'")


# levy-variance ----------------------------------------------------------------

def _levy_chunk(args, start, stop):
    cfg, a = args
    pts = np.linspace(0.0, 1.0, int(cfg["cells"]) + 1) + 1j * float(cfg["mc_eps"])
    fs = _factorized(tuple(pts), a)
    v = fs.draw(_stream(cfg, "levy-variance", a), 2, start, stop)
    rp = build_signature(SamplePath(Grid(pts), v, a, int(cfg["seed"]), "factorization"),
                         N=2, M=None, warn=False)
    area = rp.segment(len(pts) - 1, 0)[1][..., 1]  # level 2, components (1, 2)
    return _moments_of((2 * np.abs(area) ** 2)[:, None])


def cmd_levy_variance(cfg):
    checks, rows = [], []
    k = float(cfg["n_se"])
    for a in floats(cfg["alphas"]):
        fit = analytic_area_variance_limit(a)
        closed = levy_variance_limit(a)
        rel = abs(fit["limit"] - closed) / abs(closed)
        checks.append(check(f"extrapolated limit alpha={a}", fit["limit"], cfg["rel_tol"],
                            rel < cfg["rel_tol"], reference=closed, residual=rel,
                            fit_rms=fit["rms"]))
        rows += [[a, e, v] for e, v in zip(fit["ladder"], fit["values"])]
        if cfg["mc"]:
            oracle = analytic_area_variance(0.0, 1.0, float(cfg["mc_eps"]), a)
            m = Moments.merge(map_chunks(_levy_chunk, (cfg, a), int(cfg["replicas"]),
                                         int(cfg["workers"])))
            est, se = float(m.mean[0]), float(m.se[0])
            z = abs(est - oracle) / se
            checks.append(check(f"Monte Carlo vs oracle alpha={a}", est, k, z < k,
                                reference=oracle, std_error=se, residual=z))
    return make_report("levy-variance", cfg, checks,
                       {"ladder": sweep(["alpha", "x", "y"], rows)})


# divergence -------------------------------------------------------------------

def cmd_divergence(cfg):
    ladder = 2.0 ** -np.arange(int(cfg["eps_max_exp"]), int(cfg["eps_min_exp"]) + 1)
    checks, rows = [], []
    for a in floats(cfg["alphas"]):
        vals = np.array([mixed_area_variance(0.0, 1.0, e, a) for e in ladder])
        rows += [[a, e, v] for e, v in zip(ladder, vals)]
        local = np.diff(np.log(vals)) / np.diff(np.log(1 / ladder))
        if 4 * a < 1:
            slope = _slope(1 / ladder, vals)
            expect = 1 - 4 * a
            checks.append(check(f"divergence slope alpha={a}", slope, cfg["slope_tol"],
                                abs(slope - expect) <= cfg["slope_tol"], reference=expect,
                                residual=abs(slope - expect), local_slopes=local))
        else:
            tail = vals[-int(cfg["last_rungs"]):]
            ratio = float(tail.max() / tail.min())
            checks.append(check(f"bounded ladder alpha={a}", ratio, cfg["bound_ratio"],
                                ratio < cfg["bound_ratio"], local_slopes=local))
    return make_report("divergence", cfg, checks, {"ladder": sweep(["alpha", "x", "y"], rows)})


# signature --------------------------------------------------------------------

def cmd_signature(cfg):
    checks, rows = [], []
    d = int(cfg["d"])
    eps = float(cfg["eps"])
    for a in floats(cfg["alphas"]):
        g = Grid.uniform(0.0, 1.0, int(cfg["chen_points"]), height=eps)
        fs = _factorized(tuple(g.points), a)
        sp = SamplePath(g, fs.draw(_stream(cfg, "signature", "chen", a), d), a,
                        int(cfg["seed"]), "factorization")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            rp = build_signature(sp)
        rep = check_chen(rp, cfg["chen_tol"])
        checks.append(check(f"Chen audit alpha={a} N={rp.N}", rep.max_residual, rep.tolerance,
                            rep.passed, residual=rep.max_residual,
                            per_level=rep.detail["per_level"]))
    a = float(cfg["shuffle_alpha"])
    Ms = ints(cfg["substeps"])
    Mmax = max(Ms)
    cells = int(cfg["shuffle_cells"])
    g = Grid.uniform(0.0, 1.0, cells * Mmax + 1, height=eps)
    fs = _factorized(tuple(g.points), a)
    vals = fs.draw(_stream(cfg, "signature", "shuffle"), d)
    res = []
    for M in Ms:
        st = Mmax // M
        sub = SamplePath(Grid(g.points[::st]), vals[:, ::st], a, int(cfg["seed"]), "factorization")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            rp = build_signature(sub, M=M, sampled_substeps=True)
        rep = check_shuffle(rp)
        res.append(rep.max_residual)
        rows.append([M, rep.max_residual, rep.tolerance])
    ratios = [res[i] / res[i + 1] for i in range(len(res) - 1)]
    tol = float(cfg["ratio_tol"])
    ok = all(abs(r - 2.0) <= 2.0 * tol for r in ratios)
    checks.append(check(f"shuffle residual halves under substep doubling alpha={a}", ratios,
                        tol, ok, reference=2.0))
    return make_report("signature", cfg, checks,
                       {"shuffle": sweep(["x", "y", "tolerance"], rows)})


# sew-check --------------------------------------------------------------------

def cmd_sew_check(cfg):
    checks = []
    # Euler germ of X_t = t: g_ts = s (t - s); its sewn coboundary is -(t - s)^2 / 2
    s0, t0 = 0.2, 0.9
    def germ(t, s):
        return s * (t - s)

    lam, tail = sew_function(lambda t, u, s: germ(t, s) - germ(t, u) - germ(u, s), s0, t0)
    exact = -((t0 - s0) ** 2) / 2
    err = abs(lam - exact)
    checks.append(check("sewing of the Euler germ of X_t = t", float(np.real(lam)), cfg["euler_tol"],
                        err < cfg["euler_tol"], reference=exact, residual=float(err), tail=tail))
    polys = {1: lambda x: 0.5 + 2 * x, 2: lambda x: 1 - x + 3 * x**2,
             3: lambda x: 0.3 + x - 2 * x**2 + 1.5 * x**3}
    for deg, X in polys.items():
        val, tail = integrate_germ_function(lambda t_, s_: X(s_) * (X(t_) - X(s_)), 0.1, 0.8)
        exact = (X(0.8) ** 2 - X(0.1) ** 2) / 2
        err = abs(val - exact)
        checks.append(check(f"integral of X dX, degree {deg}", float(np.real(val)),
                            cfg["poly_tol"], err < cfg["poly_tol"], reference=exact,
                            residual=float(err), tail=tail))
    # on a dyadic grid, (Id - sew delta) g is the Riemann sum of the germ
    n = 2 ** int(cfg["grid_level"]) + 1
    pts = np.linspace(0.0, 1.0, n)
    g = Increment(pts, 2, func=lambda t, s: pts[s] * (pts[t] - pts[s]))
    riem = integrate_germ(g, tail_tol=None)(n - 1, 0)
    cells = float(np.sum(pts[:-1] * np.diff(pts)))
    checks.append(check("grid integration equals the cell sum", float(riem.real), 1e-12,
                        abs(riem - cells) < 1e-12, reference=cells,
                        residual=float(abs(riem - cells))))
    return make_report("sew-check", cfg, checks)


# solve ------------------------------------------------------------------------

def _exp_field():
    return VectorField(lambda y: y[..., None, :], 1, 1,
                       jacobian=lambda y: np.ones(y.shape[:-1] + (1, 1, 1), dtype=complex))


def _smooth_rp(steps):
    pts = np.linspace(0.0, 1.0, steps + 1)
    return smooth_signature(lambda x: np.ones((len(x), 1)), pts, 2)


def cmd_solve(cfg):
    checks, sweeps = [], {}
    f = _exp_field()
    a0 = complex(cfg["a"])
    # smooth driver X_t = t
    steps = ints(cfg["smooth_steps"])
    errs = [abs(solve_rde([a0], f, _smooth_rp(n))[0].z[-1, 0] - a0 * np.e) for n in steps]
    ratios = [errs[i] / errs[i + 1] for i in range(len(errs) - 1)]
    target, tol = float(cfg["ratio_target"]), float(cfg["ratio_tol"])
    checks.append(check("smooth driver global order-2 ratio", ratios, tol,
                        all(abs(r - target) <= tol for r in ratios), reference=target))
    sweeps["smooth"] = sweep(["x", "y"], zip(steps, errs))
    # rough driver, d = 1: y = a exp(X - X_0)
    alpha = float(cfg["alpha"])
    levels = ints(cfg["levels"])
    finest = max(levels)
    g = Grid.dyadic(0.0, 1.0, finest)
    fs = _factorized(tuple(g.points), alpha)
    path = fs.draw(_stream(cfg, "solve", "driver"), 1)
    sup, rows = [], []
    for lev in levels:
        st = 2 ** (finest - lev)
        sub = SamplePath(Grid(g.points[::st]), path[:, ::st], alpha, int(cfg["seed"]),
                         "factorization")
        rp = build_signature(sub, N=2, M=None, warn=False)
        cp, _ = solve_rde([a0], f, rp)
        exact = a0 * np.exp(path[0, ::st] - path[0, 0])
        e = float(np.abs(cp.z[:, 0] - exact).max())
        sup.append(e)
        rows.append([2**lev, e])
    mono = all(sup[i + 1] < sup[i] for i in range(len(sup) - 1))
    checks.append(check(f"rough driver exponential identity alpha={alpha}", sup, None, mono,
                        note="sup error must decrease at every refinement"))
    sweeps["rough"] = sweep(["x", "y"], rows)
    # Picard against one-step on the rough driver
    st = 2 ** (finest - int(cfg["picard_level"]))
    sub = SamplePath(Grid(g.points[::st]), path[:, ::st], alpha, int(cfg["seed"]), "factorization")
    rp = build_signature(sub, N=2, M=None, warn=False)
    one, _ = solve_rde([a0], f, rp)
    pic, rep = solve_rde([a0], f, rp, mode="picard", tau=float(cfg["tau"]),
                         tol=float(cfg["picard_tol"]))
    scale = float(np.abs(one.z).max())
    diff = float(np.abs(one.z - pic.z).max()) / scale
    combined = float(cfg["picard_tol"]) * (rep.windows + 1) + 1e-12
    checks.append(check("Picard mode agrees with one-step mode", diff, combined, diff <= combined,
                        residual=diff, picard=rep.as_dict()))
    if cfg["out"]:
        Path(cfg["out"]).mkdir(parents=True, exist_ok=True)
        with open(Path(cfg["out"]) / "solution.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t_index", "component", "re", "im"])
            for i, v in enumerate(one.z[:, 0]):
                w.writerow([i, 1, repr(float(v.real)), repr(float(v.imag))])
    return make_report("solve", cfg, checks, sweeps)


# emit -------------------------------------------------------------------------

def cmd_emit(cfg):
    report = json.loads(Path(cfg["report"]).read_text())
    out = Path(cfg["out"] or ".")
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, sw in sorted(report.get("sweeps", {}).items()):
        p = out / f"{report['command']}-{name}.csv"
        write_sweep_csv(sw, p)
        written.append(str(p))
    checks = [check("emitted sweeps", len(written), None, True, files=written)]
    return make_report("emit", cfg, checks)


COMMANDS = {
    "kernel-check": cmd_kernel_check,
    "cov-check": cmd_cov_check,
    "rate": cmd_rate,
    "levy-variance": cmd_levy_variance,
    "divergence": cmd_divergence,
    "signature": cmd_signature,
    "sew-check": cmd_sew_check,
    "solve": cmd_solve,
    "emit": cmd_emit,
}


def run(command: str, cfg: dict) -> dict:
    return COMMANDS[command](cfg)


def build_parser():
    p = argparse.ArgumentParser(prog="afbm", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="flat key = value file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config key (repeatable)")
    p.add_argument("--alpha", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--replicas", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out", help="output directory for report.json and CSV files")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    file_cfg = read_config(args.config) if args.config else {}
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise SystemExit(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip()] = parse_value(v)
    flags = {"alpha": args.alpha, "seed": args.seed, "replicas": args.replicas,
             "workers": args.workers, "out": args.out}
    if args.alpha is not None and "alpha" not in DEFAULTS[args.command]:
        flags["alphas"] = str(args.alpha)
        flags["alpha"] = None
    try:
        cfg = build_config(args.command, file_cfg, overrides, flags)
    except ValueError as exc:
        raise SystemExit(f"config error: {exc}")
    t0 = time.perf_counter()
    report = run(args.command, cfg)
    wall = time.perf_counter() - t0
    text = dump_report(report)
    if cfg["out"]:
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(text)
        (out / "timing.json").write_text(json.dumps({"command": args.command,
                                                     "wall_time_s": wall}) + "\n")
        for name, sw in report["sweeps"].items():
            write_sweep_csv(sw, out / f"{name}.csv")
    else:
        sys.stdout.write(text)
    print(f"{args.command}: {'PASS' if report['pass'] else 'FAIL'} in {wall:.1f} s",
          file=sys.stderr)
    return 0 if report["pass"] else 1


if __name__ == "__main__":
    sys.exit(main())
