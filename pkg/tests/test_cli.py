import json

import pytest

from afbm import cli


def test_config_precedence(tmp_path):
    f = tmp_path / "cfg.txt"
    f.write_text("# comment\nK = 50\nthreshold = 1e-3\n")
    cfg = cli.build_config("kernel-check", cli.read_config(f), {"K": 60}, {"seed": 9})
    assert cfg["K"] == 60 and cfg["threshold"] == 1e-3 and cfg["seed"] == 9


def test_config_validation():
    with pytest.raises(ValueError):
        cli.build_config("cov-check", overrides={"alpha": 0.7})
    with pytest.raises(ValueError):
        cli.build_config("cov-check", overrides={"nonsense": 1})


def test_kernel_check_wrong_normalization():
    cfg = cli.build_config("kernel-check", overrides={"normalization": "wrong", "alphas": "0.3"})
    rep = cli.run("kernel-check", cfg)
    assert not rep["pass"]
    assert rep["checks"][0]["normalization_factor"] == pytest.approx(2.0)


def test_report_is_deterministic(tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"r{k}"
        assert cli.main(["signature", "--out", str(out), "--set", "substeps=8,16"]) == 0
        outs.append((out / "report.json").read_bytes())
    assert outs[0] == outs[1]


def test_worker_count_does_not_change_results():
    base = {"replicas": 5000, "n_points": 4}
    a = cli.run("cov-check", cli.build_config("cov-check", overrides=base))
    b = cli.run("cov-check", cli.build_config("cov-check", overrides={**base, "workers": 2}))
    assert cli.dump_report({**a, "config": None}) == cli.dump_report({**b, "config": None})


def test_emit_round_trip(tmp_path):
    out = tmp_path / "div"
    cli.main(["divergence", "--out", str(out), "--set", "alphas=0.35"])
    emit_dir = tmp_path / "csv"
    assert cli.main(["emit", "--set", f"report={out / 'report.json'}", "--out", str(emit_dir)]) == 0
    report = json.loads((out / "report.json").read_text())
    back = cli.read_sweep_csv(emit_dir / "divergence-ladder.csv")
    assert back == report["sweeps"]["ladder"]


def test_empty_sweep_gives_header_only(tmp_path):
    p = tmp_path / "e.csv"
    cli.write_sweep_csv(cli.sweep(["x", "y", "stderr"], []), p)
    assert p.read_text().strip() == "x,y,stderr"


def test_sew_check_command():
    assert cli.run("sew-check", cli.build_config("sew-check"))["pass"]
