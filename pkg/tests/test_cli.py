import json
import os

import pytest

from levysot.cli import OUTPUT_DIR_ENV, main

FIXTURES = os.path.join(os.path.dirname(__file__), "..", "fixtures")


def fixture(name: str) -> str:
    return os.path.join(FIXTURES, name)


def run(*argv) -> int:
    return main(list(argv))


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def test_check_theta_writes_report(tmp_path):
    out = str(tmp_path)
    code = run("check-theta", "--input", fixture("pure_jump_family.json"),
               "--out", out, "--seed", "5")
    assert code == 0
    doc = read_json(os.path.join(out, "check_theta.json"))
    assert doc["seed"] == 5
    assert doc["condition_b"]["finite"]
    assert doc["condition_j"]["verdict"] == "fails"
    assert doc["box_independence"] is True


def test_check_theta_pinned_variance_matches_expectations(tmp_path):
    out = str(tmp_path)
    assert run("check-theta", "--input", fixture("pinned_variance_family.json"),
               "--out", out) == 0
    doc = read_json(os.path.join(out, "check_theta.json"))
    assert doc["condition_j"]["verdict"] == "fails"
    assert doc["box_independence"] is False


def test_limit_analyze_outputs(tmp_path):
    out = str(tmp_path)
    assert run("limit-analyze", "--input", fixture("shrinking_jump_sequence.json"),
               "--out", out) == 0
    doc = read_json(os.path.join(out, "limit_report.json"))
    assert doc["verdict"] == "diffusion-created"
    assert abs(doc["diffusion_increment"] - 1.0) < 1e-6
    assert doc["closedness"]["limit_in_set"] == "no"
    with open(os.path.join(out, "exponent_profile.csv")) as fh:
        assert fh.readline().strip() == "u,n,re_psi,im_psi"
    with open(os.path.join(out, "small_jump_profile.csv")) as fh:
        assert fh.readline().strip() == "delta,n,small_jump_mass"


def test_simulate_outputs(tmp_path):
    out = str(tmp_path)
    doc = tmp_path / "in.json"
    doc.write_text(json.dumps({
        "triplet": {"b": [0.0], "c": [[1.0]]},
        "config": {"n_paths": 500, "n_steps": 2},
    }))
    assert run("simulate", "--input", str(doc), "--out", out, "--seed", "11") == 0
    rep = read_json(os.path.join(out, "simulate_report.json"))
    assert rep["seed"] == 11
    assert "ks" in rep["terminal"]
    with open(os.path.join(out, "paths.csv")) as fh:
        assert fh.readline().strip() == "path_id,t,value"
        assert sum(1 for _ in fh) == 500 * 3


def test_solve_transport_with_overrides(tmp_path):
    out = str(tmp_path)
    code = run(
        "solve-transport", "--input", fixture("trivial_instance.json"),
        "--out", out, "--seed", "0",
        "--set", "solver.dual.n_x=60", "--set", "solver.dual.n_t=30",
        "--set", "solver.mc.n_paths=1000",
    )
    assert code == 0
    rep = read_json(os.path.join(out, "duality_report.json"))
    assert abs(rep["primal_value"]) < 1e-9
    assert abs(rep["dual_value"]) < 1e-6
    for name in ("schedule.csv", "dual_potential.csv", "value_surface.csv"):
        assert os.path.exists(os.path.join(out, name))


def test_exit_code_validation_errors(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run("check-theta", "--input", str(bad), "--out", str(tmp_path)) == 1
    assert "line 1" in capsys.readouterr().err

    assert run("check-theta", "--input", fixture("pure_jump_family.json"),
               "--out", str(tmp_path), "--set", "bogus=1") == 1
    assert "valid keys" in capsys.readouterr().err

    assert run("check-theta", "--input", str(tmp_path / "missing.json"),
               "--out", str(tmp_path)) == 1


def test_exit_code_numerical_error(tmp_path):
    doc = tmp_path / "in.json"
    doc.write_text(json.dumps({
        "triplet": {"b": [0.0], "c": [[0.0]],
                    "F": {"atoms": [{"x": [0.1], "w": 1e9}]}},
        "config": {"n_paths": 2},
    }))
    assert run("simulate", "--input", str(doc), "--out", str(tmp_path)) == 2


def test_idempotent_outputs(tmp_path):
    a, b = str(tmp_path / "a"), str(tmp_path / "b")
    for out in (a, b):
        assert run("check-theta", "--input", fixture("pure_jump_family.json"),
                   "--out", out, "--seed", "2") == 0
    with open(os.path.join(a, "check_theta.json"), "rb") as fa, \
         open(os.path.join(b, "check_theta.json"), "rb") as fb:
        assert fa.read() == fb.read()


def test_env_var_default_output_dir(tmp_path, monkeypatch):
    target = tmp_path / "envout"
    monkeypatch.setenv(OUTPUT_DIR_ENV, str(target))
    assert run("check-theta", "--input", fixture("pure_jump_family.json")) == 0
    assert (target / "check_theta.json").exists()


def test_inputs_not_mutated(tmp_path):
    src = fixture("pure_jump_family.json")
    with open(src, "rb") as fh:
        before = fh.read()
    assert run("check-theta", "--input", src, "--out", str(tmp_path),
               "--set", "resolution=3") == 0
    with open(src, "rb") as fh:
        assert fh.read() == before
