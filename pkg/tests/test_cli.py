from __future__ import annotations

import json
import os
import subprocess
import sys

import pytest

CONFIG = """\
schema_version = 1
seed = 31

[[experiment]]
id = "fig1-small"
template = "fig1"
n = [20]
B = [15]
replications = 40

[[experiment]]
id = "coeffs"
template = "fig7"
n = [12]
k = [4]
d_max = 3
"""


def run(*args, cwd=None, env=None):
    full_env = {**os.environ, **(env or {})}
    return subprocess.run([sys.executable, "-m", "ijvar", *args], capture_output=True, text=True, cwd=cwd, env=full_env)


@pytest.fixture
def sample_file(tmp_path):
    p = tmp_path / "sample.txt"
    p.write_text("# observations\n1.0\n2.5\n\n3.0\n4.0\n0.5\n")
    return p


def test_exact_csv(sample_file):
    r = run("exact", str(sample_file), "--stat", "mean")
    assert r.returncode == 0, r.stderr
    head, *lines = r.stdout.splitlines()
    meta = json.loads(head[2:])
    assert meta["n"] == 5 and meta["max_gap"] < 1e-12
    assert lines[0] == "j,x,e,cov" and len(lines) == 6


def test_exact_json_to_directory(sample_file, tmp_path):
    out = tmp_path / "out"
    r = run("--format", "json", "exact", str(sample_file), "--stat", "max", "--out", str(out))
    assert r.returncode == 0, r.stderr
    doc = json.loads((out / "exact.json").read_text())
    assert doc["metadata"]["statistic"] == "max" and len(doc["rows"]) == 5


def test_coeffs():
    r = run("coeffs", "--n", "20", "--k", "10", "--dmax", "4")
    assert r.returncode == 0, r.stderr
    lines = r.stdout.splitlines()
    assert lines[1] == "j,r_ij,r_ps,r_d1,r_d2,r_d3,r_d4" and len(lines) == 12


def test_ustat_complete_and_incomplete(sample_file, tmp_path):
    r = run("ustat", str(sample_file), "--kernel", "mean", "--k", "2", "--ci", "0.9")
    assert r.returncode == 0, r.stderr
    assert "lower" in r.stdout.splitlines()[1]
    big = tmp_path / "big.txt"
    big.write_text("\n".join(str(0.01 * i) for i in range(120)))
    r = run("ustat", str(big), "--kernel", "mean", "--k", "8")
    assert r.returncode == 3 and "--N" in r.stderr
    r = run("--seed", "5", "ustat", str(big), "--kernel", "mean", "--k", "8", "--N", "2000", "--ci", "0.95")
    assert r.returncode == 0, r.stderr
    assert json.loads(r.stdout.splitlines()[0][2:])["seed"] == 5


@pytest.mark.parametrize(
    "args,code",
    [
        (["exact", "missing.txt", "--stat", "mean"], 2),
        (["coeffs", "--n", "5", "--k", "7"], 2),
        (["exact", "SAMPLE", "--stat", "nope"], 2),
        (["bogus"], 2),
        (["ustat", "SAMPLE", "--kernel", "mean", "--k", "2", "--ci", "1.5"], 2),
    ],
)
def test_exit_codes(args, code, sample_file):
    args = [str(sample_file) if a == "SAMPLE" else a for a in args]
    r = run(*args)
    assert r.returncode == code, r.stderr


def test_capacity_exit_code(tmp_path):
    p = tmp_path / "nine.txt"
    p.write_text("\n".join(str(i) for i in range(9)))
    assert run("exact", str(p), "--stat", "mean").returncode == 3


def test_simulate_byte_identical_across_workers(tmp_path):
    cfg = tmp_path / "cfg.toml"
    cfg.write_text(CONFIG)
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("simulate", str(cfg), "--out", str(a), "--workers", "1").returncode == 0
    assert run("simulate", str(cfg), "--out", str(b), "--workers", "3").returncode == 0
    names = sorted(p.name for p in a.iterdir())
    assert names == ["coeffs.csv", "fig1-small.csv", "manifest.json"]
    for name in names:
        assert (a / name).read_bytes() == (b / name).read_bytes()
    # replaying the manifest reproduces the result files
    c = tmp_path / "c"
    assert run("simulate", str(a / "manifest.json"), "--out", str(c), "--workers", "2").returncode == 0
    for name in ("coeffs.csv", "fig1-small.csv"):
        assert (a / name).read_bytes() == (c / name).read_bytes()


def test_simulate_output_env_and_reference(tmp_path):
    cfg = tmp_path / "cfg.toml"
    cfg.write_text(CONFIG)
    out = tmp_path / "env-out"
    r = run("--format", "json", "simulate", str(cfg), env={"IJVAR_OUT": str(out)})
    assert r.returncode == 0, r.stderr
    doc = json.loads((out / "fig1-small.json").read_text())
    refs = [row for row in doc["rows"] if row["kind"] == "reference"]
    assert refs[0]["estimator"] == "var_smoothed" and refs[0]["value"] == pytest.approx(0.05)
    assert doc["metadata"]["experiment"]["seed"] == 31


def test_simulate_validation_is_batched(tmp_path):
    cfg = tmp_path / "bad.toml"
    cfg.write_text(
        'schema_version = 1\n\n[[experiment]]\nid = "a"\ntemplate = "fig1"\nn = [0]\n\n'
        '[[experiment]]\nid = "a"\ntemplate = "nope"\n'
    )
    r = run("simulate", str(cfg), "--out", str(tmp_path / "o"))
    assert r.returncode == 2
    assert "bad.toml:3" in r.stderr and "bad.toml:8" in r.stderr
    assert "'n'" in r.stderr and "unknown template" in r.stderr
    assert not (tmp_path / "o").exists()


def test_simulate_bad_toml_and_schema(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text("schema_version = 1\n[[experiment]\n")
    assert run("simulate", str(cfg)).returncode == 2
    cfg.write_text('schema_version = 2\n[[experiment]]\nid = "a"\ntemplate = "fig7"\n')
    r = run("simulate", str(cfg))
    assert r.returncode == 2 and "schema_version" in r.stderr


def test_simulate_partial_failure(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text(CONFIG + '\n[[experiment]]\nid = "rho"\ntemplate = "rho-diagnostic"\nn = [12]\nreplications = 100\n')
    out = tmp_path / "o"
    r = run("simulate", str(cfg), "--out", str(out))
    assert r.returncode == 3
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["errors"][0]["id"] == "rho"
    assert set(manifest["outputs"]) == {"fig1-small", "coeffs"}
