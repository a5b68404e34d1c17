import json
import os

import pytest
import yaml

from frictionest import cli

TINY = {
    "seed": 0,
    "model": {"kind": "one_dof", "qd_min": -1.0, "qd_max": 1.0},
    "excitation": {"harmonics": 3, "base_frequency": 0.5, "offset": 0.5, "regressor": "friction",
                   "max_iter": 15, "grid_dt": 0.02},
    "gains": {"gamma_f": "auto"},
    "estimation": {"models": ["stribeck", "simplified"], "duration": 1.0},
    "evaluation": {"seeds": 1, "trajectories": {"count": 1, "duration": 0.5}},
}

TINY_2DOF = {
    "model": {"kind": "two_link"},
    "circle": {"laps": 0.25, "period": 2.0},
}


def write_config(tmp_path, data, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data))
    return str(path)


def run(*args):
    return cli.main(list(args))


def manifest(out, command):
    with open(os.path.join(out, cli.manifest_name(command))) as fh:
        return json.load(fh)


@pytest.fixture(scope="module")
def pipeline_dir(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli")
    cfg = write_config(tmp, TINY)
    out = str(tmp / "out")
    assert run("excite", "--config", cfg, "--out", out) == cli.EXIT_OK
    assert run("estimate", "--config", cfg, "--out", out, "--trajectory",
               os.path.join(out, "trajectory.json")) == cli.EXIT_OK
    assert run("evaluate", "--config", cfg, "--out", out, "--params",
               os.path.join(out, "params.json")) == cli.EXIT_OK
    return cfg, out


def test_pipeline_outputs(pipeline_dir):
    cfg, out = pipeline_dir
    files = set(os.listdir(out))
    assert {"trajectory.json", "excitation_report.json", "cond_history.svg", "params.json",
            "estimation_report.json", "lyapunov.svg", "summary.json", "summary.csv",
            "errors_full.svg", "errors_low_velocity.svg"} <= files
    assert {"manifest_excite.json", "manifest_estimate.json", "manifest_evaluate.json",
            "timing_evaluate.json"} <= files
    params = json.load(open(os.path.join(out, "params.json")))
    assert set(params["models"]) == {"stribeck", "simplified"}
    reports = sorted(os.listdir(os.path.join(out, "reports")))
    assert reports == ["report_pd-friction_traj0_s0.json", "report_pd_traj0_s0.json"]
    summary = json.load(open(os.path.join(out, "summary.json")))
    assert "pd+friction vs pd" in summary["comparisons"]
    assert set(summary["controllers"]) == {"pd", "pd+friction"}


def test_manifest_hashes_match_files(pipeline_dir):
    from frictionest.fileio import sha256_file
    _, out = pipeline_dir
    m = manifest(out, "estimate")
    assert m["files"]
    for name, digest in m["files"].items():
        assert sha256_file(os.path.join(out, name)) == digest
    assert not any(n.startswith("timing") for n in m["files"])


def test_rerun_is_byte_identical(pipeline_dir, tmp_path):
    cfg, out = pipeline_dir
    again = str(tmp_path / "again")
    run("excite", "--config", cfg, "--out", again)
    run("estimate", "--config", cfg, "--out", again, "--trajectory", os.path.join(again, "trajectory.json"))
    for command in ("excite", "estimate"):
        assert manifest(out, command) == manifest(again, command)


def test_seed_flag_changes_outputs(pipeline_dir, tmp_path):
    cfg, out = pipeline_dir
    other = str(tmp_path / "other")
    assert run("excite", "--config", cfg, "--out", other, "--seed", "3") == cli.EXIT_OK
    assert manifest(out, "excite")["files"] != manifest(other, "excite")["files"]


def test_malformed_config_writes_nothing(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("model: {kind: one_dof, wheels: 3}\n")
    out = tmp_path / "out"
    assert run("excite", "--config", str(bad), "--out", str(out)) == cli.EXIT_CONFIG
    assert not out.exists()
    bad.write_text("model: [\n")
    assert run("excite", "--config", str(bad), "--out", str(out)) == cli.EXIT_CONFIG
    assert not out.exists()


def test_missing_files(tmp_path):
    cfg = write_config(tmp_path, TINY)
    out = tmp_path / "out"
    assert run("estimate", "--config", cfg, "--out", str(out), "--trajectory",
               str(tmp_path / "none.json")) == cli.EXIT_FILE
    assert run("evaluate", "--config", cfg, "--out", str(out)) == cli.EXIT_FILE
    assert run("excite", "--config", str(tmp_path / "none.yaml"), "--out", str(out)) == cli.EXIT_FILE
    assert not out.exists()


def test_trajectory_model_mismatch(tmp_path, pipeline_dir):
    _, out = pipeline_dir
    cfg = write_config(tmp_path, dict(TINY, model={"kind": "two_link"}, excitation={"offset": [0.3, 0.5]}))
    code = run("estimate", "--config", cfg, "--out", str(tmp_path / "o"), "--trajectory",
               os.path.join(out, "trajectory.json"))
    assert code == cli.EXIT_CONFIG


def test_infeasible_exit_code(tmp_path):
    cfg = write_config(tmp_path, {"model": {"kind": "one_dof", "qd_min": 0.1, "qd_max": 1.0}})
    out = tmp_path / "out"
    assert run("excite", "--config", cfg, "--out", str(out)) == cli.EXIT_INFEASIBLE
    assert not out.exists()


def test_output_directory_precedence(tmp_path, monkeypatch):
    data = dict(TINY, output_dir=str(tmp_path / "from_config"))
    cfg = write_config(tmp_path, data)
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "from_env"))
    assert run("excite", "--config", cfg) == cli.EXIT_OK
    assert (tmp_path / "from_env" / "trajectory.json").exists()
    assert run("excite", "--config", cfg, "--out", str(tmp_path / "from_flag")) == cli.EXIT_OK
    assert (tmp_path / "from_flag" / "trajectory.json").exists()
    monkeypatch.delenv(cli.OUT_ENV)
    assert run("excite", "--config", cfg) == cli.EXIT_OK
    assert (tmp_path / "from_config" / "trajectory.json").exists()


def test_demo_circle(tmp_path):
    cfg = write_config(tmp_path, TINY_2DOF)
    out = str(tmp_path / "circle")
    assert run("demo-circle", "--config", cfg, "--out", out) == cli.EXIT_OK
    report = json.load(open(os.path.join(out, "circle_report.json")))
    assert set(report["controllers"]) == {"pd", "pd+friction"}
    assert report["friction_source"] == "truth"
    assert "cartesian_path.svg" in os.listdir(out)
    no_circle = write_config(tmp_path, TINY, "nc.yaml")
    assert run("demo-circle", "--config", no_circle, "--out", out) == cli.EXIT_CONFIG


def test_parallel_workers_match_serial(pipeline_dir, tmp_path):
    cfg, out = pipeline_dir
    par = str(tmp_path / "par")
    assert run("evaluate", "--config", cfg, "--out", par, "--workers", "2", "--params",
               os.path.join(out, "params.json")) == cli.EXIT_OK
    assert manifest(par, "evaluate")["files"] == manifest(out, "evaluate")["files"]
    assert run("evaluate", "--config", cfg, "--out", par, "--workers", "0") == cli.EXIT_CONFIG


def test_help_lists_subcommands(capsys):
    with pytest.raises(SystemExit):
        run("--help")
    text = capsys.readouterr().out
    for name in ("excite", "estimate", "evaluate", "demo-circle"):
        assert name in text
