"""Command-line behavior: exit codes, determinism, formats."""

import json
import subprocess
import sys

import pytest

from conftest import EX1_TEXT


def run_cli(*args, expect=None):
    proc = subprocess.run([sys.executable, "-m", "hornexplain.cli", *args],
                          capture_output=True, text=True)
    if expect is not None:
        assert proc.returncode == expect, (proc.returncode, proc.stderr)
    return proc


@pytest.fixture()
def ex1_file(tmp_path):
    path = tmp_path / "ex1.kb"
    path.write_text(EX1_TEXT)
    return str(path)


def test_answer_yes_with_assignment(ex1_file):
    proc = run_cli("answer", ex1_file, expect=0)
    assert proc.stdout.strip() == "yes, depth 2, xp -> a, y -> f_0(a)"


def test_answer_no_and_unknown(tmp_path):
    no_file = tmp_path / "no.kb"
    no_file.write_text("fact: A(a)\nquery: B(a)\n")
    assert run_cli("answer", str(no_file)).returncode == 1

    unknown_file = tmp_path / "unknown.kb"
    unknown_file.write_text(
        "rule: A(x) -> exists y. r(x,y), A(y)\nfact: A(a)\nquery: B(a)\n")
    proc = run_cli("answer", str(unknown_file), "--depth-ceiling", "2")
    assert proc.returncode == 2
    assert proc.stdout.strip() == "unknown"


def test_answer_json_format(ex1_file):
    proc = run_cli("answer", ex1_file, "--format", "json", expect=0)
    doc = json.loads(proc.stdout)
    assert doc == {"schema_version": 1, "verdict": "yes", "depth": 2,
                   "assignment": {"xp": "a", "y": "f_0(a)"}}


def test_gen_json_format():
    proc = run_cli("gen", "el-abox", "1", "--format", "json", expect=0)
    doc = json.loads(proc.stdout)
    assert doc["family"] == "el-abox" and "fact: A(a_0)" in doc["kb"]


def test_explain_domain_measure(ex1_file):
    proc = run_cli("explain", ex1_file, "--measure", "domain", expect=0)
    assert proc.stdout.startswith("domain = 3")


def test_explain_bound_below_optimum_exits_one(ex1_file):
    proc = run_cli("explain", ex1_file, "--measure", "domain",
                   "--bound", "2")
    assert proc.returncode == 1
    assert proc.stdout.strip() == "none"


def test_explain_poly_fallback_warns(ex1_file):
    proc = run_cli("explain", ex1_file, "--measure", "tree",
                   "--algo", "poly", expect=0)
    assert "falling back" in proc.stderr


def test_explain_json_is_byte_identical(ex1_file):
    a = run_cli("explain", ex1_file, "--measure", "size", "--format", "json",
                expect=0)
    b = run_cli("explain", ex1_file, "--measure", "size", "--format", "json",
                expect=0)
    assert a.stdout == b.stdout
    doc = json.loads(a.stdout)
    assert doc["schema_version"] == 1
    assert doc["value"] == 12


def test_explain_dot_format(ex1_file):
    proc = run_cli("explain", ex1_file, "--measure", "size", "--format",
                   "dot", expect=0)
    assert proc.stdout.startswith("digraph proof {")
    assert "(MP)" in proc.stdout and "(G)" in proc.stdout


def test_chase_and_dot(ex1_file):
    proc = run_cli("chase", ex1_file, "--depth", "2", expect=0)
    assert "E(f_0(a))" in proc.stdout
    assert "# saturated: false" in proc.stdout
    dot = run_cli("chase", ex1_file, "--depth", "1", "--format", "dot",
                  expect=0)
    assert dot.stdout.startswith("digraph model {")


def test_gen_emits_kb_and_sidecar(tmp_path):
    out = tmp_path / "inst.kb"
    run_cli("gen", "el-abox", "2", "-o", str(out), expect=0)
    text = out.read_text()
    assert "query:" in text
    sidecar = json.loads((tmp_path / "inst.kb.predicted.json").read_text())
    assert sidecar["family"] == "el-abox"
    assert sidecar["bounds"]["size"] == 14


def test_gen_sat_needs_clauses():
    proc = run_cli("gen", "sat")
    assert proc.returncode == 65


def test_gen_unknown_family_fails():
    assert run_cli("gen", "made-up-family").returncode == 65


def test_usage_error_exit_code():
    proc = run_cli("explain")  # missing the kb argument
    assert proc.returncode == 64


def test_convert_and_export_round_trip(ex1_file, tmp_path):
    proof = tmp_path / "p.json"
    run_cli("explain", ex1_file, "--measure", "size", "--format", "json",
            "-o", str(proof), expect=0)
    converted = tmp_path / "p_cq.json"
    run_cli("convert", str(proof), "--kb", ex1_file, "--to", "cq",
            "-o", str(converted), expect=0)
    doc = json.loads(converted.read_text())
    assert doc["deriver"] == "cq"
    assert any(e["schema"] == "MPe" for e in doc["edges"])
    dot = run_cli("export", str(converted), expect=0)
    assert "(MPe)" in dot.stdout
    back = run_cli("convert", str(converted), "--kb", ex1_file, "--to", "sk")
    assert back.returncode == 0


def test_export_empty_file_fails(tmp_path):
    empty = tmp_path / "empty.json"
    empty.write_text("")
    assert run_cli("export", str(empty)).returncode == 65


def test_normalize_subcommand(tmp_path):
    path = tmp_path / "wide.kb"
    path.write_text("rule: A(x) -> B(x), C(x)\nfact: A(a)\n")
    proc = run_cli("normalize", str(path), expect=0)
    assert "rule: A(x) -> B(x)" in proc.stdout
    assert "rule: A(x) -> C(x)" in proc.stdout


def test_bench_csv(tmp_path):
    proc = run_cli("bench", "--families", "dllite-chain", "--params", "1,2",
                   "--measure", "tree", expect=0)
    lines = proc.stdout.strip().splitlines()
    assert lines[0] == "family,parameter,measure,optimum,search_nodes,wall_ms"
    assert len(lines) == 3
    assert lines[1].startswith("dllite-chain,1,tree,17,")


def test_bench_jobs_flag(tmp_path):
    proc = run_cli("bench", "--families", "el-abox", "--params", "1,2",
                   "--jobs", "2", expect=0)
    assert len(proc.stdout.strip().splitlines()) == 3
