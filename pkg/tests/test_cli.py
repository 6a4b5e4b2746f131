import json

from partdiss.checker import StructureReport
from partdiss.cli import config_hash, dispatch
from partdiss.traces import DecayTrace


def test_unknown_subcommand_exits_2(capsys):
    assert dispatch(["frobnicate"]) == 2
    assert "usage" in capsys.readouterr().err.lower()


def test_check_pass_and_artifact(tmp_path, capsys):
    out = tmp_path / "check.json"
    code = dispatch(["check", "--system", "damped_euler", "--d", "2",
                     "--gamma", "2", "--out", str(out)])
    captured = capsys.readouterr().out
    assert code == 0
    assert "overall: PASS" in captured
    report = StructureReport.load(out)
    assert report.all_pass
    manifest = json.loads((tmp_path / "check.json.manifest.json").read_text())
    assert manifest["subcommand"] == "check"
    assert manifest["outputs"] == [str(out)]
    assert len(manifest["config_hash"]) == 64


def test_check_undamped_fails(capsys):
    code = dispatch(["check", "--d", "2", "--damping", "0"])
    assert code == 1
    assert "overall: FAIL" in capsys.readouterr().out


def test_coords_report(tmp_path, capsys):
    out = tmp_path / "chart.json"
    code = dispatch(["coords", "--d", "2", "--samples", "200",
                     "--out", str(out)])
    assert code == 0
    payload = json.loads(out.read_text())
    assert payload["passed"]
    assert payload["jacobian_identity_residual"] < 1e-9
    assert payload["round_trip_residual"] < 1e-10
    assert payload["first_column_coupling_residual"] < 1e-7
    assert payload["n_samples"] >= 200


def _write_sim_config(tmp_path, out_dir, eps=1e-3):
    cfg = tmp_path / "sim.yaml"
    cfg.write_text("""\
system:
  name: damped_euler
  d: 1
grid:
  N: 64
  L: 5.0
sim:
  t_end: 2.0
  snapshot_dt: 0.5
  eps: %g
  width: 1.0
  group: all
  fit_window: [0.5, 2.0]
output_dir: %s
""" % (eps, out_dir))
    return cfg


def test_simulate_deterministic_bytes(tmp_path):
    cfg = _write_sim_config(tmp_path, tmp_path / "out_a")
    assert dispatch(["simulate", "--config", str(cfg)]) == 0
    assert dispatch(["simulate", "--config", str(cfg),
                     "--out-dir", str(tmp_path / "out_b")]) == 0
    a = (tmp_path / "out_a" / "trace.csv").read_bytes()
    b = (tmp_path / "out_b" / "trace.csv").read_bytes()
    assert a == b
    ma = json.loads((tmp_path / "out_a" / "manifest.json").read_text())
    mb = json.loads((tmp_path / "out_b" / "manifest.json").read_text())
    assert ma["config_hash"] == mb["config_hash"]

    trace = DecayTrace.from_csv(tmp_path / "out_a" / "trace.csv")
    assert len(trace.t) == 5
    assert ("C", 0.0) in trace.norms


def test_simulate_rejects_large_amplitude(tmp_path, capsys):
    cfg = _write_sim_config(tmp_path, tmp_path / "out_big", eps=0.5)
    code = dispatch(["simulate", "--config", str(cfg)])
    assert code == 1
    assert "amplitude outside chart domain" in capsys.readouterr().err


def test_report_missing_inputs(tmp_path, capsys):
    code = dispatch(["report", "--check", str(tmp_path / "absent.json")])
    err = capsys.readouterr().err
    assert code == 1
    assert "absent.json" in err
    assert "--nonlinear" in err


def test_report_merges_artifacts(tmp_path, capsys):
    check_path = tmp_path / "check.json"
    assert dispatch(["check", "--d", "2", "--out", str(check_path)]) == 0

    lin_cfg = tmp_path / "lin.yaml"
    lin_cfg.write_text("lindecay:\n  shells: 64\n  angles: 8\n")
    lin_path = tmp_path / "lin.csv"
    assert dispatch(["lindecay", "--config", str(lin_cfg), "--d", "2",
                     "--p", "1", "--out", str(lin_path)]) == 0

    sim_cfg = _write_sim_config(tmp_path, tmp_path / "simout")
    assert dispatch(["simulate", "--config", str(sim_cfg)]) == 0

    from partdiss import builtin_damped_euler, normalize_equilibrium
    from partdiss.coords import build_chart, preprocess_linear, transform_system
    from partdiss.dissipation import CompensatorK

    sys2 = preprocess_linear(normalize_equilibrium(builtin_damped_euler(d=2)))
    tsys = transform_system(sys2, build_chart(sys2))
    comp_path = tmp_path / "comp.json"
    CompensatorK.build(tsys, n_directions=4, restarts=2).save(comp_path)

    capsys.readouterr()
    out_path = tmp_path / "report.md"
    code = dispatch(["report", "--check", str(check_path),
                     "--compensator", str(comp_path),
                     "--linear", str(lin_path),
                     "--nonlinear", str(tmp_path / "simout" / "trace.csv"),
                     "--out", str(out_path)])
    assert code == 0
    text = out_path.read_text()
    for section in ("condition checks", "compensator", "linear decay",
                    "nonlinear decay"):
        assert "## " + section in text
    assert "entropy non-increasing: yes" in text


def test_config_hash_stable_and_sensitive():
    base = {"system": {"name": "damped_euler", "d": 2}, "sim": {"eps": 1e-3}}
    same = {"sim": {"eps": 1e-3}, "system": {"d": 2, "name": "damped_euler"}}
    other = {"system": {"name": "damped_euler", "d": 2}, "sim": {"eps": 2e-3}}
    assert config_hash(base) == config_hash(same)
    assert config_hash(base) != config_hash(other)
