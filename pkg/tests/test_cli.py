import io
import json
import math
import subprocess
import sys

import pytest

from conftest import pm_j, product2
from mechlab import cli
from mechlab.errors import LpNumericalFailure
from mechlab.mrf import dumps_instance, joint_distribution
from mechlab.revenue import brev


def run(argv):
    out, err = io.StringIO(), io.StringIO()
    code = cli.run(argv, out, err)
    return code, out.getvalue(), err.getvalue()


def report(argv):
    code, out, err = run(argv)
    assert code == 0, err
    return json.loads(out)


@pytest.fixture
def files(tmp_path):
    paths = {}
    for name, inst in {"product2": product2(), "pmj": pm_j(0.5),
                       "ud": pm_j(0.4, values=(1.0, 3.0), kind="unit_demand")}.items():
        p = tmp_path / f"{name}.json"
        p.write_text(dumps_instance(inst))
        paths[name] = str(p)
    paths["dir"] = tmp_path
    return paths


def test_params_product(files):
    res = report(["params", files["product2"]])["result"]
    assert res["delta"] == 0 and res["alpha"] == 0
    assert res["gamma"] == pytest.approx(0.5)


def test_revenue_selection(files):
    res = report(["revenue", files["pmj"], "--which", "srev,brev"])["result"]
    assert set(res) >= {"srev", "brev"} and "opt" not in res
    d = joint_distribution(pm_j(0.5))
    assert res["brev"]["revenue"] == pytest.approx(brev(pm_j(0.5), d)[1])


def test_copies_example(files):
    out = str(files["dir"] / "c.json")
    assert run(["gen", "copies", "--n", "1", "--beta", "0.5", "--k", "8", "--out", out])[0] == 0
    res = report(["revenue", out, "--which", "ronen,srev,brev"])["result"]
    assert res["ronen"]["revenue"] >= 0.5 * 8 / (1 + 7 * math.exp(-1)) - 1e-9
    assert res["srev"]["revenue"] < 2 and res["brev"]["revenue"] < 2


def test_benchmark_with_mechanism_file(files):
    mech = str(files["dir"] / "m.json")
    report(["revenue", files["pmj"], "--which", "opt", "--mechanism-out", mech])
    from_file = report(["benchmark", files["pmj"], "--mechanism", mech])["result"]
    direct = report(["benchmark", files["pmj"]])["result"]
    assert from_file["mechanism"] == "file"
    assert from_file["revenue"] == pytest.approx(direct["revenue"], abs=1e-12)
    assert from_file["ic_violation"] <= 1e-9


def test_verify_glauber_tree(files):
    assert report(["verify", files["ud"]])["result"]["passed"]
    g = report(["glauber", files["pmj"], "--horizon", "5"])["result"]
    assert len(g["tv_curve"]) == 6 and g["states"] == 4
    k = report(["tree-kstar", files["pmj"], "--eps", "1e-6"])["result"]
    assert k["kstar"] == pytest.approx(math.tanh(0.5), abs=2e-6)


def test_gen_variants(files):
    mixed = report(["gen", "mix", "--base", files["pmj"], "--weight", "0.25"])["result"]
    assert mixed["instance"]["provenance"]["generator"] == "mix"
    sh = report(["gen", "shells", "--m", "3"])["result"]
    assert len(sh["sequence"]["probs"]) == 3
    tw = report(["gen", "3wise", "--base", files["pmj"], "--beta-cap", "0.25"])["result"]
    assert len(tw["instance"]["items"]) == 4


def test_report_is_deterministic(files):
    a = run(["verify", files["pmj"]])
    b = run(["verify", files["pmj"]])
    assert a == b
    out = str(files["dir"] / "r.json")
    assert run(["params", files["pmj"], "--out", out])[1] == ""
    assert json.loads(open(out).read()) == report(["params", files["pmj"]])


def test_human_output(files):
    code, out, _ = run(["params", files["product2"], "--human"])
    assert code == 0 and "delta" in out and not out.lstrip().startswith("{")


def test_suite_small():
    res = report(["suite", "--seed", "7", "--count", "6"])["result"]
    assert res["count"] == 6 and res["failed"] == 0


def test_console_script(files):
    proc = subprocess.run([sys.executable, "-m", "mechlab", "params", files["product2"]],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and json.loads(proc.stdout)["result"]["delta"] == 0


# ---------------------------------------------------------- exit codes

@pytest.mark.parametrize("argv", [[], ["nope"], ["revenue", "x.json", "--which", "bogus"],
                                  ["gen", "mix"], ["tree-kstar", "x.json", "--eps", "0"],
                                  ["suite", "--count", "-1"]])
def test_usage_errors_exit_2(argv, files):
    argv = [files["pmj"] if a == "x.json" else a for a in argv]
    code, out, err = run(argv)
    assert code == 2 and out == "" and err


def test_validation_errors_exit_3(files):
    bad = files["dir"] / "bad.json"
    bad.write_text('{"items": [{"name": "a", "alphabet": [1, 1], "node_potential": [0, 0]}],'
                   ' "edges": [], "valuation": {"kind": "additive"}}')
    code, _, err = run(["params", str(bad)])
    assert code == 3 and "ValidationError" in err
    assert run(["params", str(files["dir"] / "missing.json")])[0] == 3
    garbage = files["dir"] / "garbage.json"
    garbage.write_text("{not json")
    assert run(["params", str(garbage)])[0] == 3
    assert run(["gen", "copies", "--eps-scale", "5"])[0] == 3


def test_numerical_failure_exits_4(files, monkeypatch):
    def broken(*args, **kwargs):
        raise LpNumericalFailure("forced")
    monkeypatch.setattr("mechlab.revenue.opt_revenue_lp", broken)
    code, out, err = run(["revenue", files["pmj"], "--which", "opt"])
    assert code == 4 and "LpNumericalFailure" in err and out == ""


def test_failed_inequalities_exit_1(files, monkeypatch):
    from mechlab import report as rp
    from mechlab.benchmark import verify_theorems as real

    def failing(inst, analysis=None):
        rep = real(inst, analysis=analysis)
        rep.rows.append(rp.leq("forced_row", 2.0, 1.0))
        return rep
    monkeypatch.setattr("mechlab.benchmark.verify_theorems", failing)
    code, out, err = run(["verify", files["pmj"]])
    assert code == 1 and "FAIL" in err and "forced_row" in err
    code, _, err = run(["suite", "--seed", "1", "--count", "2"])
    assert code == 1 and "FAIL" in err
