"""Acceptance criteria 1-10 with pinned thresholds; each test prints one PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v`` or ``python tests/test_acceptance.py``.
"""

import time

from afbm import cli

SEED = 1  # fixed before any run; never tuned


def _run(command, **overrides):
    cfg = cli.build_config(command, overrides={"seed": SEED, **overrides})
    t0 = time.perf_counter()
    rep = cli.run(command, cfg)
    return rep, time.perf_counter() - t0


def _line(number, title, ok, runtime, limit, detail):
    status = "PASS" if ok and runtime < limit else "FAIL"
    return f"criterion {number:2d} {status}  {title}: {detail}; runtime {runtime:.1f} s (< {limit:g} s)"


def _emit(record, number, title, ok, runtime, limit, detail):
    line = _line(number, title, ok, runtime, limit, detail)
    record(line)
    assert ok, line
    assert runtime < limit, line


def test_criterion_01_series_identity(record_criterion):
    rep, rt = _run("kernel-check", alphas="0.1,0.3,0.45", K=200, n_grid=10, im_min=0.2,
                   threshold=1e-6)
    series = [c for c in rep["checks"] if c["name"].startswith("series identity")]
    worst = max(c["estimate"] for c in series)
    _emit(record_criterion, 1, "series vs kernel, K=200, 10x10 grid",
          all(c["pass"] for c in series), rt, 1.0, f"max deviation {worst:.2e} (< 1e-6)")


def test_criterion_02_boundary_covariance(record_criterion):
    rep, rt = _run("cov-check", alpha=0.3, replicas=100_000, n_points=16, n_se=3.0)
    n_cmp = sum(c["comparisons"] for c in rep["checks"])
    n_exc = sum(c["exceedances"] for c in rep["checks"])
    worst = max(c["estimate"] for c in rep["checks"])
    _emit(record_criterion, 2, "boundary covariance, 1e5 samples, 16 points", rep["pass"], rt,
          60.0, f"{n_exc} of {n_cmp} entries beyond 3 SE, max |z| {worst:.2f}")


def test_criterion_03_regularization_rate(record_criterion):
    rep, rt = _run("rate", study="increment", alphas="0.15,0.3", replicas=100_000,
                   n_se=3.0, slope_tol=0.1)
    slopes = [c for c in rep["checks"] if "slope" in c["name"]]
    detail = ", ".join(f"{c['name'].split()[-1]} slope {c['estimate']:.3f} vs {c['reference']:.2f}"
                       for c in slopes)
    zs = max(c["estimate"] for c in rep["checks"] if "coupled" in c["name"])
    _emit(record_criterion, 3, "coupled height differences", rep["pass"], rt, 120.0,
          f"{detail}; max |z| vs closed form {zs:.2f}")


def test_criterion_04_levy_area_variance(record_criterion):
    rep, rt = _run("levy-variance", alphas="0.15,0.3,0.4", rel_tol=0.005, mc=True,
                   mc_eps=2.0**-8, replicas=100_000, n_se=3.0)
    parts = []
    for c in rep["checks"]:
        if c["name"].startswith("extrapolated"):
            parts.append(f"{c['name'].split()[-1]} limit rel err {c['residual']:.1e}")
        else:
            parts.append(f"{c['name'].split()[-1]} MC |z| {c['residual']:.2f}")
    _emit(record_criterion, 4, "analytic Levy area variance", rep["pass"], rt, 600.0,
          ", ".join(parts))


def test_criterion_05_real_part_divergence(record_criterion):
    rep, rt = _run("divergence", alphas="0.15,0.35", eps_max_exp=4, eps_min_exp=9,
                   slope_tol=0.05, bound_ratio=1.5, last_rungs=3)
    div, bnd = rep["checks"]
    detail = (f"alpha=0.15 slope {div['estimate']:.3f} (target 0.40 +- 0.05"
              f"{'' if div['pass'] else ', FAIL'}; local slopes "
              + " ".join(f"{s:.3f}" for s in div["local_slopes"])
              + f"); alpha=0.35 max/min {bnd['estimate']:.3f} (< 1.5)")
    _emit(record_criterion, 5, "mixed-conjugation area divergence", rep["pass"], rt, 300.0,
          detail)


def test_criterion_06_chen(record_criterion):
    rep, rt = _run("signature", alphas="0.3,0.22", d=2, chen_tol=1e-12)
    chen = [c for c in rep["checks"] if c["name"].startswith("Chen")]
    _emit(record_criterion, 6, "Chen relation, d=2, N=floor(1/alpha)",
          all(c["pass"] for c in chen), rt, 30.0,
          ", ".join(f"{c['name'][11:]} residual {c['estimate']:.1e}" for c in chen))


def test_criterion_07_shuffle(record_criterion):
    rep, rt = _run("signature", alphas="0.3", shuffle_alpha=0.3, eps=2.0**-6, ratio_tol=0.2)
    sh = [c for c in rep["checks"] if c["name"].startswith("shuffle")][0]
    _emit(record_criterion, 7, "shuffle residual under substep doubling", sh["pass"], rt, 60.0,
          "ratios " + " ".join(f"{r:.3f}" for r in sh["estimate"]) + " (2 +- 20%)")


def test_criterion_08_sewing(record_criterion):
    rep, rt = _run("sew-check", euler_tol=1e-10, poly_tol=1e-9)
    worst_poly = max(c["residual"] for c in rep["checks"] if "degree" in c["name"])
    _emit(record_criterion, 8, "sewing map", rep["pass"], rt, 5.0,
          f"Euler germ error {rep['checks'][0]['residual']:.1e} (< 1e-10), "
          f"polynomial integrals max error {worst_poly:.1e} (< 1e-9)")


def test_criterion_09_rde(record_criterion):
    rep, rt = _run("solve", alpha=0.4, levels="5,8,11", ratio_target=4.0, ratio_tol=0.5)
    smooth, rough, picard = rep["checks"]
    detail = ("smooth ratios " + " ".join(f"{r:.3f}" for r in smooth["estimate"])
              + "; rough sup errors " + " ".join(f"{e:.2e}" for e in rough["estimate"])
              + f"; Picard vs one-step {picard['estimate']:.1e} (<= {picard['threshold']:.1e})")
    _emit(record_criterion, 9, "rough differential equation solver", rep["pass"], rt, 120.0,
          detail)


def test_criterion_10_iterated_variance(record_criterion):
    rep, rt = _run("rate", study="iterated", alpha=0.3, level=3, eps=0.25, eta=0.125, s=0.0,
                   t_end=1.0, replicas=100_000, n_se=3.0)
    c = rep["checks"][0]
    _emit(record_criterion, 10, "level-3 coupled difference vs oracle", c["pass"], rt, 600.0,
          f"MC {c['estimate']:.5e} +- {c['std_error']:.1e}, oracle {c['reference']:.5e}, "
          f"|z| {c['residual']:.2f}")


if __name__ == "__main__":
    import sys

    failures = 0
    for name, fn in sorted(globals().items()):
        if name.startswith("test_criterion_"):
            try:
                fn(lambda line: print(line, flush=True))
            except AssertionError:
                failures += 1
    sys.exit(1 if failures else 0)
