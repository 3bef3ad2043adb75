import math
from pathlib import Path

import numpy as np
import pytest

from rwsbi import cli
from rwsbi import experiments as X


def test_aggregate_examples():
    agg = X.aggregate_replicas([1.0, 2.0, 3.0])
    assert agg["mean"] == 2.0 and agg["variance"] == 1.0
    assert agg["se"] == pytest.approx(math.sqrt(1.0 / 3.0))
    one = X.aggregate_replicas([5.0])
    assert one["mean"] == 5.0 and one["variance"] is None and one["se"] is None
    a = X.aggregate_replicas([3.0, 1.0, 2.0])
    assert a == agg  # permutation invariant
    with pytest.raises(X.EmptyInput):
        X.aggregate_replicas([])


def test_config_file_and_overrides(tmp_path):
    p = tmp_path / "cfg.txt"
    p.write_text("# experiment\nsuite = smoke\ngamma = 2.0\nreplicas = 7\nkernel = ssrw\n")
    cfg = X.ExperimentConfig.from_file(p)
    assert cfg.gamma == 2.0 and cfg.replicas == 7 and cfg.suite == "smoke"
    cfg.set_option("gamma", "3.5")
    assert cfg.gamma == 3.5
    with pytest.raises(X.ConfigError):
        cfg.set_option("nonsense", "1")
    bad = tmp_path / "bad.txt"
    bad.write_text("gamma\n")
    with pytest.raises(X.ConfigError):
        X.ExperimentConfig.from_file(bad)


def test_unknown_suite_lists_available():
    cfg = X.ExperimentConfig(suite="not-a-suite")
    with pytest.raises(X.ConfigError, match="smoke"):
        X.run_suite(cfg)


def test_smoke_suite_passes_and_csv_schema(tmp_path):
    cfg = X.ExperimentConfig(suite="smoke", seed=5)
    records = X.run_suite(cfg)
    assert records and all(r.passed for r in records)
    path = X.write_records_csv(records, tmp_path / "r.csv", cfg)
    lines = Path(path).read_text().splitlines()
    header = [ln for ln in lines if not ln.startswith("#")][0]
    assert header == "suite,check,passed,value,expected,wall_clock_s"
    assert any(ln.startswith("# seed = 5") for ln in lines)


def test_records_aggregate_recomputable():
    rec = X.ResultRecord("s", "c", True, 1.0, "x",
                         replica_values=np.array([1.0, 2.0, 3.0]))
    assert rec.aggregate["mean"] == 2.0
    assert rec.aggregate["variance"] == 1.0


def test_cli_verify_smoke_deterministic(tmp_path, capsys):
    out1 = tmp_path / "a"
    out2 = tmp_path / "b"
    assert cli.main(["verify", "--suite", "smoke", "--seed", "11",
                     "--out-dir", str(out1)]) == 0
    assert cli.main(["verify", "--suite", "smoke", "--seed", "11",
                     "--out-dir", str(out2)]) == 0
    a = (out1 / "verify_smoke.csv").read_text()
    b = (out2 / "verify_smoke.csv").read_text()
    # identical except for the out_dir echo and wall-clock columns
    strip = lambda s: [",".join(ln.split(",")[:4]) for ln in s.splitlines()
                       if not ln.startswith("# out_dir")]
    assert strip(a) == strip(b)
    captured = capsys.readouterr()
    assert "[PASS]" in captured.out


def test_cli_verify_unknown_suite_fails(tmp_path):
    assert cli.main(["verify", "--suite", "nope", "--out-dir", str(tmp_path)]) == 2


def test_cli_solve_rho_schema(tmp_path):
    out = tmp_path / "s.csv"
    assert cli.main(["solve-rho", "--t-max", "50", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    header = [ln for ln in lines if not ln.startswith("#")][0]
    assert header == "t,rho0,R_sum,R_integral,asym_rho0,asym_R"
    last = lines[-1].split(",")
    assert float(last[0]) == 50.0
    assert float(last[2]) == pytest.approx(float(last[3]), abs=1e-6)


def test_cli_simulate_schema_and_profile(tmp_path):
    out = tmp_path / "sim.csv"
    prof = tmp_path / "prof.csv"
    rc = cli.main(["simulate", "rwsbi", "--t-max", "30", "--replicas", "2",
                   "--snapshots", "15,30", "--seed", "3",
                   "--out", str(out), "--profile-out", str(prof)])
    assert rc == 0
    lines = [ln for ln in out.read_text().splitlines() if not ln.startswith("#")]
    assert lines[0] == "replica,t,total_count,origin_count,vacant_time_0_t"
    assert len(lines) == 1 + 2 * 2
    plines = [ln for ln in prof.read_text().splitlines() if not ln.startswith("#")]
    assert plines[0] == "replica,t,x,count"


def test_cli_simulate_poisson(tmp_path):
    out = tmp_path / "p.csv"
    rc = cli.main(["simulate", "poisson", "--t-max", "20", "--replicas", "2",
                   "--sign", "-", "--epsilon", "0.5", "--out", str(out)])
    assert rc == 0
    lines = [ln for ln in out.read_text().splitlines() if not ln.startswith("#")]
    assert len(lines) == 3


def test_cli_couple_lower_schema(tmp_path):
    out = tmp_path / "low.csv"
    rc = cli.main(["couple", "lower", "--n-max", "60", "--out", str(out)])
    assert rc == 0
    lines = [ln for ln in out.read_text().splitlines() if not ln.startswith("#")]
    assert lines[0] == "n,t_hat_finite,t_tilde_finite,e_n,m_tilde_n,cum_e"
    assert len(lines) == 61


def test_cli_couple_upper_schema(tmp_path):
    out = tmp_path / "up.csv"
    rc = cli.main(["couple", "upper", "--t-max", "40", "--replicas", "3",
                   "--out", str(out)])
    assert rc == 0
    lines = [ln for ln in out.read_text().splitlines() if not ln.startswith("#")]
    assert lines[0].startswith("replica,t,eta_total,tilde_total,hat_total")
    assert len(lines) == 4


def test_cli_correlate(tmp_path, capsys):
    spec = tmp_path / "spec.txt"
    spec.write_text("I:1 = 1.0\nI:2 = 1.0\nI:1,2 = 0.5\n")
    assert cli.main(["correlate", "--spec", str(spec), "--mode", "exact"]) == 0
    out = capsys.readouterr().out
    assert "0.0877948769" in out
    assert cli.main(["correlate", "--spec", str(spec), "--mode", "series",
                     "--M", "8"]) == 0
    assert cli.main(["correlate", "--spec", str(spec), "--mode", "mc",
                     "--replicas", "20000"]) == 0


def test_cli_plot_renders_figures(tmp_path):
    out = tmp_path / "s.csv"
    assert cli.main(["solve-rho", "--t-max", "30", "--out", str(out), "--plot"]) == 0
    assert (tmp_path / "s.png").exists()
    assert cli.main(["verify", "--suite", "smoke", "--out-dir", str(tmp_path),
                     "--plot"]) == 0
    assert (tmp_path / "verify_smoke.png").exists()


def test_cli_env_out_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("RWSBI_OUT_DIR", str(tmp_path / "env_out"))
    assert cli.main(["verify", "--suite", "smoke"]) == 0
    assert (tmp_path / "env_out" / "verify_smoke.csv").exists()


def test_cli_kernel_file(tmp_path):
    kf = tmp_path / "k.txt"
    kf.write_text("-1 0.5\n1 0.5\n")
    out = tmp_path / "sim.csv"
    assert cli.main(["simulate", "rwsbi", "--t-max", "10", "--kernel", str(kf),
                     "--out", str(out)]) == 0
