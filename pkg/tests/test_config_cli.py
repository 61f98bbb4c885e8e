import json
import os

import numpy as np
import pytest

from shelab import cli
from shelab.config import PROFILES, RunConfig, dump_config, load_config, parse_config_text
from shelab.ensemble import run_ensemble


@pytest.fixture(autouse=True)
def _isolated(tmp_path, monkeypatch):
    monkeypatch.setenv("SHELAB_CACHE_DIR", str(tmp_path / "cache"))
    monkeypatch.setenv("SHELAB_OUTPUT_ROOT", str(tmp_path / "runs"))


def small(**kw):
    base = dict(case="flat", preset="two-plus-sine", r_ladder=(1, 2, 4), t_end=0.25, dx=0.1,
                replicas=24, block=10)
    base.update(kw)
    return RunConfig(**base).validate()


def test_parse_config_text():
    v = parse_config_text("""
        # comment
        case = pam
        r_ladder = 8, 16 32   # trailing
        tangents = false
        h_f = 0.1
        spline_knots = 0 1 2
    """)
    assert v == {"case": "pam", "r_ladder": (8, 16, 32), "tangents": False, "h_f": 0.1,
                 "spline_knots": (0.0, 1.0, 2.0)}
    with pytest.raises(ValueError, match="unknown key"):
        parse_config_text("colour = red")
    with pytest.raises(ValueError, match="boolean"):
        parse_config_text("tangents = maybe")


def test_precedence_and_dump_roundtrip(tmp_path):
    p = tmp_path / "c.txt"
    p.write_text("replicas = 77\nseed = 5\n")
    cfg = load_config(str(p), "flat-identity", {"seed": 9, "out": None})
    assert cfg.preset == "identity" and cfg.replicas == 77 and cfg.seed == 9
    q = tmp_path / "d.txt"
    q.write_text(dump_config(cfg))
    assert load_config(str(q)) == cfg
    for name in PROFILES:
        load_config(profile=name)
    with pytest.raises(ValueError):
        load_config(profile="nope")


def test_hash_ignores_execution_fields():
    a = small()
    assert a.config_hash() == small(workers=4, out="elsewhere", block=3).config_hash()
    assert a.config_hash() != small(seed=1).config_hash()
    assert a.config_hash() != small(replicas=25).config_hash()
    assert a.config_hash() != small(r_ladder=(1, 2)).config_hash()
    # integer and float ladders name the same run
    assert a.config_hash() == small(r_ladder=(1.0, 2.0, 4.0)).config_hash()
    # h_f is irrelevant to the flat case, dx and preset to the pam case
    assert a.config_hash() == small(h_f=0.05).config_hash()
    p = RunConfig(case="pam", r_ladder=(8,))
    assert p.config_hash() == RunConfig(case="pam", r_ladder=(8,), dx=0.3, preset="identity").config_hash()


def test_validation_errors():
    with pytest.raises(ValueError, match="quadrature"):
        small(normalizer="quadrature")
    small(normalizer="quadrature", preset="constant-1")
    with pytest.raises(ValueError, match="custom"):
        small(preset="custom", spline_knots=(0.0, 1.0), spline_values=(1.0, 2.0))
    with pytest.raises(ValueError):
        small(case="curved")


def test_custom_spline_run():
    k = tuple(np.linspace(-3, 3, 9))
    cfg = small(preset="custom", spline_knots=k, spline_values=tuple(2 + np.sin(k)), replicas=4)
    assert cfg.config_hash() != small(replicas=4).config_hash()
    res = run_ensemble(cfg, use_cache=False)
    assert np.all(np.isfinite(res.A))


def test_ensemble_independent_of_block_and_workers():
    a = run_ensemble(small(), use_cache=False)
    b = run_ensemble(small(block=7), use_cache=False)
    c = run_ensemble(small(block=5, workers=2), use_cache=False)
    for r in (b, c):
        assert np.array_equal(a.A, r.A) and np.array_equal(a.T1, r.T1) and np.array_equal(a.T3, r.T3)


def test_cache_roundtrip(tmp_path):
    cfg = small()
    a = run_ensemble(cfg)
    assert os.path.exists(tmp_path / "cache" / f"{cfg.config_hash()}.npz")
    b = run_ensemble(cfg)
    assert np.array_equal(a.A, b.A) and np.array_equal(a.T3, b.T3)


def test_cli_simulate_density_stein_rates(tmp_path, capsys):
    argv = ["--case", "flat", "--preset", "two-plus-sine", "--r-ladder", "1,2,4", "--t", "0.25",
            "--replicas", "24", "--seed", "3"]
    assert cli.main(["stein"] + argv) == 0
    cfg = load_config(overrides=dict(case="flat", preset="two-plus-sine", r_ladder=(1, 2, 4),
                                     t_end=0.25, replicas=24, seed=3))
    run = tmp_path / "runs" / cfg.config_hash()
    for name in ("results.csv", "stein.csv", "manifest.json", "config.txt"):
        assert (run / name).exists()
    for name in ("results.csv", "stein.csv"):
        assert (run / name).read_text().startswith(f"# config_hash={cfg.config_hash()}\n")
    rows = cli.read_csv(run / "results.csv")
    assert [r["R"] for r in rows] == ["1", "2", "4"]
    assert list(rows[0]) == cli.RESULTS_COLUMNS
    stein = cli.read_csv(run / "stein.csv")
    assert list(stein[0]) == cli.STEIN_COLUMNS and len(stein) == 3
    man = json.loads((run / "manifest.json").read_text())
    assert man["status"] == "ok" and man["config_hash"] == cfg.config_hash()
    assert man["aborted_replicas"] == 0

    before = (run / "results.csv").read_bytes()
    assert cli.main(["simulate"] + argv) == 0
    assert (run / "results.csv").read_bytes() == before

    assert cli.main(["rates"] + argv) == 0
    assert (run / "rates.csv").exists()


def test_density_writes_curves_and_fit(tmp_path):
    cfg = small(preset="constant-1", normalizer="quadrature", replicas=1000, tangents=False,
                block=500)
    cli.cmd_simulate(cfg, density=True)
    run = tmp_path / "runs" / cfg.config_hash()
    for R in cfg.r_ladder:
        d = cli.read_csv(run / f"density_R{R}.csv")
        x = np.array([float(r["x"]) for r in d])
        f = np.array([float(r["density"]) for r in d])
        assert np.trapezoid(f, x) == pytest.approx(1.0, abs=0.02)
    rates = cli.read_csv(run / "rates.csv")
    assert {r["metric"] for r in rates} == {"sup_dist", "tv_dist"}


def test_cli_verify_exit_codes(tmp_path, capsys):
    # one check fails on the shipped grid, so verify reports failure
    assert cli.main(["verify"]) == 1
    out = capsys.readouterr().out
    assert "lem1: FAIL" in out and "kphi: pass" in out
    files = sorted(os.listdir(tmp_path / "runs" / "verify"))
    assert files == sorted(["identity.csv", "kphi.csv", "l1phi.csv", "phivarphi.csv", "xi.csv",
                            "lem1.csv"])


def test_verify_fault_injection_fails_kphi():
    from shelab.appendix import SweepGrid
    cfg = RunConfig()
    reports = {r.name: r for r in cli.cmd_verify(cfg, phi_scale=1e-3, sweep=SweepGrid(count=128))}
    assert not reports["kphi"].passed
