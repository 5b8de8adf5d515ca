import json
import math

import pytest

from motorsim.cli import main
from motorsim.config import DEFAULT_CONFIG, parse_config
from motorsim.errors import ConfigError
from motorsim.io import read_csv


def write_config(tmp_path, name="cfg.json", **blocks):
    data = {**DEFAULT_CONFIG, **blocks}
    path = tmp_path / name
    path.write_text(json.dumps(data, indent=1))
    return path


def run(*argv):
    return main([str(a) for a in argv])


def summary(out):
    return json.loads((out / "summary.json").read_text())


SIM = {"motors": 101, "t_end": 200.0, "record_events": True}


def test_simulate_minimal_config(tmp_path):
    cfg = write_config(tmp_path, sim=SIM)
    assert run("simulate", "--config", cfg, "--out", tmp_path / "a", "--quiet") == 0
    s = summary(tmp_path / "a")
    assert {"N_hat", "v_hat", "se_N", "se_v"} <= set(s)
    assert s["N_bar_pred"] == 0.5
    assert s["v_bar_pred"] == pytest.approx(-1 / 3)
    assert s["provenance"]["seed"] == 7
    header, rows = read_csv(tmp_path / "a" / "trajectory.csv")
    assert header == ["t", "N", "v", "xbar"] and len(rows) > 100
    header, rows = read_csv(tmp_path / "a" / "events.csv")
    assert header == ["t", "kind", "motor", "x"]
    assert all(r[3] == "" for r in rows if r[1] == "U")


def test_simulate_is_byte_reproducible(tmp_path):
    cfg = write_config(tmp_path, sim=SIM)
    for d in ("a", "b"):
        assert run("simulate", "--config", cfg, "--out", tmp_path / d, "--quiet") == 0
    for f in ("trajectory.csv", "events.csv", "summary.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    assert run("simulate", "--config", cfg, "--out", tmp_path / "c", "--seed", "8", "--quiet") == 0
    assert (tmp_path / "a" / "events.csv").read_bytes() != (tmp_path / "c" / "events.csv").read_bytes()


def test_replicas_in_parallel(tmp_path):
    cfg = write_config(tmp_path, sim={"motors": 51, "t_end": 40.0, "burn_in": 5.0, "replicas": 3})
    assert run("simulate", "--config", cfg, "--out", tmp_path / "a", "--jobs", 3, "--quiet") == 0
    assert run("simulate", "--config", cfg, "--out", tmp_path / "b", "--quiet") == 0
    for f in ("trajectory.csv", "trajectory_r1.csv", "trajectory_r2.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_invalid_rate_exits_2(tmp_path, capsys):
    cfg = write_config(tmp_path, c_b=0.0, sim=SIM)
    assert run("simulate", "--config", cfg, "--out", tmp_path / "o") == 2
    assert "c_b" in capsys.readouterr().err


@pytest.mark.parametrize("blocks, needle", [
    ({"sim": {**SIM, "motor": 3}}, "sim.motor"),
    ({"sim": SIM, "colour": "red"}, "colour"),
    ({"ode": {}}, "sim"),
    ({"sim": SIM, "ode": {}}, "sim"),
    ({"sim": {"motors": "many"}}, "sim.motors"),
])
def test_schema_errors_exit_2(tmp_path, capsys, blocks, needle):
    cfg = write_config(tmp_path, **blocks)
    assert run("simulate", "--config", cfg, "--out", tmp_path / "o") == 2
    assert needle in capsys.readouterr().err


def test_error_names_line(tmp_path):
    text = json.dumps({**DEFAULT_CONFIG, "sim": {"motors": 101, "bogus": 1}}, indent=1)
    with pytest.raises(ConfigError) as info:
        parse_config(json.loads(text), text, mode="sim")
    line = next(i for i, ln in enumerate(text.splitlines(), 1) if "bogus" in ln)
    assert f"line {line}" in str(info.value)


def test_broken_json_and_missing_file(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"c_b": 1,\n "c_u": }')
    assert run("meanfield", "--config", bad) == 2
    assert "line 2" in capsys.readouterr().err
    assert run("meanfield", "--config", tmp_path / "missing.json") == 2


def test_output_dir_precedence(tmp_path, monkeypatch):
    monkeypatch.setenv("MOTORSIM_OUT", str(tmp_path / "env"))
    cfg = write_config(tmp_path, ode={})
    assert run("meanfield", "--config", cfg, "--quiet") == 0
    assert (tmp_path / "env" / "trajectory.csv").exists()
    cfg2 = write_config(tmp_path, "cfg2.json", ode={}, output_dir=str(tmp_path / "fromcfg"))
    assert run("meanfield", "--config", cfg2, "--quiet") == 0
    assert (tmp_path / "fromcfg" / "summary.json").exists()
    assert run("meanfield", "--config", cfg2, "--out", tmp_path / "flag", "--quiet") == 0
    assert (tmp_path / "flag" / "summary.json").exists()


def test_meanfield_no_force_regime(tmp_path):
    cfg = write_config(tmp_path, c_b=4.0, kappa=9.0, ode={"t_end": 20.0})
    assert run("meanfield", "--config", cfg, "--out", tmp_path / "o", "--quiet") == 0
    s = summary(tmp_path / "o")
    assert s["regime"]["regime"] == "no_force"
    assert s["regime"]["c_u_opt"] == pytest.approx(6.0)
    assert s["regime"]["speed_discrepancy"]["ratio"] == pytest.approx(9.0)
    header, rows = read_csv(tmp_path / "o" / "trajectory.csv")
    assert header == ["t", "N", "v"]


def test_pde_reports_stationary_distance(tmp_path):
    cfg = write_config(tmp_path, pde={"J": 1000, "t_end": 30.0, "snapshots": [1.0, 30.0]})
    assert run("pde", "--config", cfg, "--out", tmp_path / "o", "--quiet") == 0
    s = summary(tmp_path / "o")
    assert s["stationary"]["l1_distance"] < 2e-2
    assert (tmp_path / "o" / "snapshot_t1.csv").exists()
    assert read_csv(tmp_path / "o" / "series.csv")[0] == ["t", "N", "v"]
    assert read_csv(tmp_path / "o" / "snapshot_t30.csv")[0] == ["x", "n"]


def test_pde_single_motor(tmp_path):
    cfg = write_config(tmp_path, pde={"J": 300, "t_end": 8.0, "single_motor": True})
    assert run("pde", "--config", cfg, "--out", tmp_path / "o", "--quiet") == 0
    assert summary(tmp_path / "o")["max_mass_error"] < 1e-3


def test_nonlinear_trivial_point(tmp_path):
    cfg = write_config(tmp_path, binding_density={"family": "gaussian", "mu": math.pi, "sigma": 0.3},
                       nl={"family": "sine", "alpha": 1.0, "t_end": 20.0, "cycle_t_max": 100.0})
    assert run("nonlinear", "--config", cfg, "--out", tmp_path / "o", "--quiet") == 0
    s = summary(tmp_path / "o")
    w0 = 0.5 * math.exp(-0.5 * 0.09) * math.cos(math.pi) / 1.0
    assert any(abs(p["v"]) < 1e-10 and abs(p["w"] - w0) < 1e-10 for p in s["stationary_points"])
    assert s["cycle"]["status"] in ("converged", "cycle", "inconclusive")
    header, rows = read_csv(tmp_path / "o" / "stationary_points.csv")
    assert header == ["v", "w", "residual", "stability"] and len(rows) == len(s["stationary_points"])
    assert read_csv(tmp_path / "o" / "trajectory.csv")[0] == ["t", "N", "v", "w"]


def sweep_rows(out):
    header, rows = read_csv(out / "sweep.csv")
    return header, [dict(zip(header, r)) for r in rows]


def test_sweep_minimum_at_optimal_rate(tmp_path):
    cfg = write_config(tmp_path, c_b=1.0, kappa=4.0,
                       sweep={"param": "c_u", "lo": 0.1, "hi": 40.0, "count": 31, "scale": "log"})
    assert run("sweep", "--config", cfg, "--out", tmp_path / "o", "--jobs", 2, "--quiet") == 0
    _, rows = sweep_rows(tmp_path / "o")
    assert [int(r["index"]) for r in rows] == list(range(31))
    vals = [float(r["c_u"]) for r in rows]
    vbar = [float(r["v_bar"]) for r in rows]
    best = min(range(31), key=lambda i: vbar[i])
    nearest = min(range(31), key=lambda i: abs(math.log(vals[i] / 2.0)))
    assert best == nearest


def test_sweep_sign_change_at_threshold(tmp_path):
    cfg = write_config(tmp_path, kappa=2.0, F=1.0,
                       sweep={"param": "c_u", "values": [0.25, 0.5, 0.8, 1.25, 2.0, 4.0]})
    assert run("sweep", "--config", cfg, "--out", tmp_path / "o", "--quiet") == 0
    _, rows = sweep_rows(tmp_path / "o")
    signs = [float(r["v_bar"]) > 0 for r in rows]
    assert signs == [False, False, False, True, True, True]


def test_sweep_force_above_crossing(tmp_path):
    cfg = write_config(tmp_path, sweep={"param": "F", "lo": 0.0, "hi": 2.0, "count": 9})
    assert run("sweep", "--config", cfg, "--out", tmp_path / "o", "--quiet") == 0
    _, rows = sweep_rows(tmp_path / "o")
    strong = [r for r in rows if float(r["F"]) > 1.0]
    assert strong and all(float(r["v_bar"]) > 0 for r in strong)
    assert all(r["regime"] == "strong_force" for r in strong)


def test_sweep_records_point_errors(tmp_path):
    cfg = write_config(tmp_path, sweep={"param": "c_u", "values": [0.0, 1.0, -1.0]})
    assert run("sweep", "--config", cfg, "--out", tmp_path / "o", "--quiet") == 0
    _, rows = sweep_rows(tmp_path / "o")
    assert rows[0]["errors"] and not rows[1]["errors"] and "c_u" in rows[2]["errors"]
    cfg = write_config(tmp_path, "allbad.json", sweep={"param": "c_b", "values": [0.0, -1.0]})
    assert run("sweep", "--config", cfg, "--out", tmp_path / "p", "--quiet") == 1


def test_sweep_order_independent_of_jobs(tmp_path):
    sweep = {"param": "alpha", "mode": "nonlinear", "values": [0.5, 1.0, 2.0, 3.0],
             "nl": {"cycle_t_max": 60.0}}
    cfg = write_config(tmp_path, sweep=sweep)
    assert run("sweep", "--config", cfg, "--out", tmp_path / "a", "--jobs", 4, "--quiet") == 0
    assert run("sweep", "--config", cfg, "--out", tmp_path / "b", "--quiet") == 0
    assert (tmp_path / "a" / "sweep.csv").read_bytes() == (tmp_path / "b" / "sweep.csv").read_bytes()
    header, rows = sweep_rows(tmp_path / "a")
    assert "n_stationary" in header and all(int(r["n_stationary"]) >= 1 for r in rows)


def test_sweep_schema(tmp_path):
    cfg = write_config(tmp_path, sweep={"param": "mu", "values": [1.0, 2.0]})
    assert run("sweep", "--config", cfg) == 2
    cfg = write_config(tmp_path, sweep={"param": "c_u", "lo": 1.0, "hi": 2.0, "count": 1})
    assert run("sweep", "--config", cfg) == 2
    cfg = write_config(tmp_path, sweep={"param": "c_u", "values": [1.0, 2.0], "pde": {}})
    assert run("sweep", "--config", cfg) == 2


def test_every_output_carries_provenance(tmp_path):
    cfg = write_config(tmp_path, sim={"motors": 11, "t_end": 20.0, "burn_in": 2.0, "record_events": True})
    assert run("simulate", "--config", cfg, "--out", tmp_path / "o", "--quiet") == 0
    for f in (tmp_path / "o").glob("*.csv"):
        first = f.read_text().splitlines()[0]
        assert first.startswith("# motorsim ") and "config_hash=" in first and "seed=7" in first
    assert "config_hash" in summary(tmp_path / "o")["provenance"]


def test_validate_default_and_mutation(capsys):
    assert run("validate", "--jobs", 4) == 0
    out = capsys.readouterr().out
    assert "ratio 4.000000" in out and "FAIL" not in out
    assert run("validate", "--jobs", 4, "--flip-force-sign") == 1
    out = capsys.readouterr().out
    assert "FAIL velocity under load" in out
