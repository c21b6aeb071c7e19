import io
import json
from pathlib import Path

import numpy as np
import pytest

from spttn.cli import EXIT_OK, EXIT_RESOURCE, EXIT_USAGE, EXIT_VERIFY, main
from spttn.report import RunReport
from spttn.tns import parse_tns, shape_comment

GOLDEN = Path(__file__).parent / "golden"
FIXTURE_TEXT = "1 1 1 1.0\n1 2 3 2.0\n2 1 1 3.0\n"


def call(*argv):
    out = io.StringIO()
    code = main(list(argv), out)
    return code, out.getvalue()


@pytest.fixture
def fixture_tns(tmp_path):
    f = tmp_path / "t.tns"
    f.write_text(FIXTURE_TEXT)
    return str(f)


def test_verify_mttkrp_fixture(fixture_tns):
    code, text = call("verify", "--kernel", "mttkrp", "--tns", fixture_tns, "--dims", "a=8", "--format", "json")
    assert code == EXIT_OK
    rep = json.loads(text)
    assert rep["verification"]["passed"]
    assert rep["dims"] == dict(i=2, j=2, k=3, a=8)
    assert rep["stats"]["ops"] == rep["flops_estimate"]


@pytest.mark.parametrize("name", ["mttkrp", "ttmc", "tttp", "ttmc4", "tttc4"])
def test_verify_generated(name):
    code, text = call("verify", "--kernel", name, "--dims", "i=3,j=3,k=3,l=2,a=2,b=2,c=2,r=2,s=2,t=2", "--seed", "5", "--density", "0.3")
    assert code == EXIT_OK, text


def test_verify_failure_exit_code(tmp_path, fixture_tns):
    code, _ = call("verify", "--kernel", "mttkrp", "--tns", fixture_tns, "--dims", "a=2", "--tol", "-1")
    assert code == EXIT_VERIFY


def test_explain_golden():
    code, text = call("explain", "--kernel", "ttmc", "--dims", "i=4,j=4,k=4,r=2,s=2", "--path", "(T*V)*U", "--order", "scalar-opt")
    assert code == EXIT_OK
    assert text == (GOLDEN / "explain_ttmc_scalar.txt").read_text()


def test_explain_hooks_golden():
    code, text = call(
        "explain", "--kernel", "ttmc4", "--dims", "i=2,j=2,k=2,l=2,r=2,s=2,t=2", "--path", "((T*W)*V)*U",
        "--order", "i,j,k,l,t;i,j,k,s,t;i,j,r,s,t", "--hooks",
    )
    assert code == EXIT_OK
    assert text == (GOLDEN / "explain_ttmc4_hooks.txt").read_text()


def test_optimize_reports_zero_buffer():
    code, text = call("optimize", "--kernel", "ttmc", "--dims", "i=4,j=4,k=4,r=2,s=2", "--format", "json")
    assert code == EXIT_OK
    rep = json.loads(text)
    assert rep["cost"] == 0
    assert rep["cost_model"] == "max-buf-dim"
    assert {c["model"] for c in rep["costs"]} >= {"max-buf-dim", "max-buf-size"}


def test_run_output_reads_back(tmp_path):
    out = tmp_path / "out.tns"
    code, text = call("run", "--kernel", "ttmc", "--dims", "i=3,j=3,k=3,r=2,s=2", "--seed", "1", "--out", str(out), "--format", "json")
    assert code == EXIT_OK
    content = out.read_text()
    back = parse_tns(content, ("i", "r", "s"), shape_comment(content))
    assert back.shape == (3, 2, 2)
    code2, _ = call("run", "--kernel", "ttmc", "--dims", "i=3,j=3,k=3,r=2,s=2", "--seed", "1", "--out", str(tmp_path / "b.tns"))
    assert (tmp_path / "b.tns").read_text() == content


def test_report_formats_agree(tmp_path):
    argv = ["verify", "--kernel", "tttp", "--dims", "i=3,j=3,k=3,r=2", "--seed", "2"]
    _, js = call(*argv, "--format", "json")
    _, tx = call(*argv, "--format", "text", "--report", str(tmp_path / "r.txt"))
    a, b = RunReport.from_json(js), RunReport.from_text(tx)
    for rep in (a, b):
        rep.stats["wall_time"] = rep.search["wall_time"] = 0
    assert a == b
    assert (tmp_path / "r.txt").read_text() == tx
    assert RunReport.from_text(b.to_text()) == b


def test_factor_files(tmp_path, fixture_tns):
    B = tmp_path / "B.npy"
    np.save(B, np.ones((2, 3)))
    code, text = call("verify", "--kernel", "mttkrp", "--tns", fixture_tns, "--dims", "a=3", "--factor", f"B={B}", "--format", "json")
    assert code == EXIT_OK
    np.save(B, np.ones((5, 3)))
    code, _ = call("verify", "--kernel", "mttkrp", "--tns", fixture_tns, "--dims", "a=3", "--factor", f"B={B}")
    assert code == EXIT_USAGE


def test_bench_reports_times():
    code, text = call(
        "bench", "--kernel", "ttmc", "--dims", "i=4,j=4,k=4,r=2,s=2", "--top-k", "2", "--path", "(T*V)*U",
        "--include", "scalar-opt", "--include", "i,j,k,s;i,j,s,r", "--format", "json",
    )
    assert code == EXIT_OK
    rep = json.loads(text)
    assert len(rep["bench"]) == 4
    assert all(r["wall_time"] > 0 for r in rep["bench"])
    assert "ranking_inversions" in rep["search"]


def test_gen(tmp_path):
    out = tmp_path / "g.tns"
    code, text = call("gen", "--dims", "8,8,8", "--density", "0.1", "--seed", "42", "--out", str(out))
    assert code == EXIT_OK
    assert "52" in text
    first = out.read_text()
    call("gen", "--dims", "8,8,8", "--density", "0.1", "--seed", "42", "--out", str(out))
    assert out.read_text() == first


@pytest.mark.parametrize(
    "argv",
    [
        ["optimize", "--kernel", "T[i,j]*U[j,r]"],
        ["optimize", "--kernel", "ttmc", "--dims", "i=2"],
        ["optimize", "--kernel", "ttmc", "--dims", "i=2,j=2,k=2,r=2,s=2", "--cost", "fast"],
        ["explain", "--kernel", "ttmc", "--dims", "i=2,j=2,k=2,r=2,s=2", "--path", "(T*V)*U", "--order", "i,j;k"],
        ["gen", "--dims", "a,b", "--density", "0.1", "--out", "/dev/null"],
        ["run", "--kernel", "ttmc", "--tns", "/nonexistent.tns", "--dims", "r=2,s=2"],
    ],
)
def test_usage_errors(argv):
    assert call(*argv)[0] == EXIT_USAGE


def test_argparse_errors_exit_with_usage_code():
    with pytest.raises(SystemExit) as e:
        main(["optimize"])
    assert e.value.code == EXIT_USAGE


def test_buffer_limit_exit_code():
    code, _ = call("run", "--kernel", "ttmc", "--dims", "i=3,j=3,k=3,r=2,s=2", "--path", "(T*V)*U",
                   "--order", "i,j,k,s;i,j,s,r", "--buffer-limit-bytes", "0")
    assert code == EXIT_RESOURCE
