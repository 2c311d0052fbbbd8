import csv
import io
import json

import pytest

from nuco.cli import run


@pytest.fixture
def files(tmp_path):
    def write(name, obj):
        p = tmp_path / name
        p.write_text(json.dumps(obj))
        return str(p)
    return {
        "rot": write("rot.json", {"n": 2, "m": 1, "p": 1, "A": [["0", "1"], ["-1", "0"]],
                                  "B": [["0"], ["1"]], "C": [["1", "0"]]}),
        "uco": write("uco.json", {"n": 1, "A": [["-1"]], "B": [["1"]], "C": [["1"]]}),
        "decay": write("decay.json", {"n": 1, "A": [["0"]], "B": [["1"]], "C": [["exp(-0.3*t)"]]}),
        "bad": write("bad.json", {"n": 1, "A": [["2 *"]]}),
        "F": write("F.json", {"F": [["exp(0.1*t)"]]}),
        "L": write("L.json", {"L": [["exp(0.5*t)"]]}),
        "dir": tmp_path,
    }


def call(*argv):
    out = io.StringIO()
    code = run([str(a) for a in argv], stdout=out)
    text = out.getvalue()
    return code, (json.loads(text) if text else None)


def test_transition(files):
    code, rep = call("transition", "--system", files["rot"], "--t", "1.5707963267948966", "--tau", "0")
    assert code == 0 and rep["schema"] == 1 and rep["exit_code"] == 0
    assert rep["result"]["matrix"][0][1] == pytest.approx(1.0)
    assert len(rep["config_hash"]) == 64


def test_transition_dual(files):
    code, rep = call("transition", "--system", files["uco"], "--t", "0", "--tau", "1", "--dual")
    assert code == 0 and rep["result"]["matrix"][0][0] == pytest.approx(0.36787944, rel=1e-7)


def test_gramian(files):
    code, rep = call("gramian", "--system", files["uco"], "--kind", "K", "--t", "0", "--sigma", "1")
    assert code == 0 and rep["result"]["matrix"][0][0] == pytest.approx(0.43233236, rel=1e-6)


def test_criteria_auto_picks_kalman(files):
    code, rep = call("criteria", "--system", files["rot"])
    assert code == 0 and rep["result"]["test"] == "lti" and rep["result"]["observable"]
    code, rep = call("criteria", "--system", files["decay"])
    assert rep["result"]["test"] == "ltv"


def test_certify_with_csv(files):
    csv_path = files["dir"] / "cert.csv"
    code, rep = call("certify", "--system", files["uco"], "--mode", "uco", "--t-grid", "0:5:6",
                     "--sigma-grid", "0.5:2:4", "--emit-csv", csv_path)
    assert code == 0 and rep["result"]["verdict"] == "CertifiedOnGrid" and rep["result"]["uco"]
    rows = list(csv.reader(open(csv_path)))
    assert rows[0] == ["t", "sigma", "lambda_min", "lambda_max"] and len(rows) == 1 + 6 * 4


def test_certify_other_modes(files):
    grids = ("--t-grid", "0:4:5", "--sigma-grid", "0.5:2:4")
    assert call("certify", "--system", files["uco"], "--mode", "nucc", *grids)[0] == 0
    code, rep = call("certify", "--system", files["uco"], "--mode", "envelope", *grids)
    assert code == 0 and rep["result"]["kalman"]["covered"]
    code, rep = call("certify", "--system", files["uco"], "--mode", "two-third", *grids)
    assert code == 0 and rep["result"]["findings"] == []


def test_dual(files):
    code, rep = call("dual", "--system", files["rot"], "--t-grid", "0:4:5", "--sigma-grid", "1:4:4")
    assert code == 0 and rep["result"]["identity"]["passed"] and rep["result"]["equivalence"]["equivalent"]


def test_feedback_output(files):
    code, rep = call("feedback", "--system", files["decay"], "--gain", files["F"],
                     "--constants", "a=0.000001", "--t-grid", "0:6:7", "--sigma-grid", "0.5:3:6")
    assert code == 0, rep
    assert rep["result"]["contained"] and rep["result"]["growth"]["passed"]


def test_feedback_hypothesis_exit_code(files, capsys):
    code, rep = call("feedback", "--mode", "input", "--system", files["decay"], "--gain", files["L"],
                     "--t-grid", "0:6:7", "--sigma-grid", "0.5:3:6")
    assert code == 2
    assert rep["error"]["type"] == "HypothesisUnmet"
    assert "beta" in capsys.readouterr().err


def test_input_errors_exit_1(files, capsys):
    assert call("transition", "--system", files["bad"], "--t", "1", "--tau", "0")[0] == 1
    assert call("transition", "--system", files["dir"] / "missing.json", "--t", "1", "--tau", "0")[0] == 1
    assert call("certify", "--system", files["rot"], "--t-grid", "5:1:3")[0] == 1
    assert call("frobnicate")[0] == 1
    assert call("feedback", "--system", files["decay"], "--gain", files["F"], "--constants", "oops")[0] == 1
    assert "error" in capsys.readouterr().err


def test_unobservable_exit_3(files, tmp_path):
    p = tmp_path / "blind.json"
    p.write_text(json.dumps({"n": 2, "A": [["0", "0"], ["0", "0"]], "C": [["1", "0"]]}))
    code, rep = call("certify", "--system", p, "--t-grid", "0:3:4", "--sigma-grid", "1:2:2")
    assert code == 3 and rep["error"]["type"] == "NotObservableOnGrid"


def test_out_file(files):
    out = files["dir"] / "r.json"
    code, rep = call("gramian", "--system", files["uco"], "--kind", "M", "--t", "0", "--sigma", "1", "--out", out)
    assert code == 0 and rep is None
    assert json.loads(out.read_text())["result"]["kind"] == "M"


def test_timing_flag_only_when_requested(files):
    _, rep = call("transition", "--system", files["uco"], "--t", "1", "--tau", "0")
    assert "wall_time_s" not in rep
    _, rep = call("transition", "--system", files["uco"], "--t", "1", "--tau", "0", "--timing")
    assert rep["wall_time_s"] >= 0


def test_scenario_list_and_unknown():
    code, rep = call("scenario", "--list")
    assert code == 0 and len(rep["result"]["scenarios"]) >= 10
    assert call("scenario", "--name", "nope")[0] == 1


def test_dual_config_round_trips(files, tmp_path):
    from nuco.tvmat import load_system
    code, rep = call("dual", "--system", files["rot"], "--check", "none")
    assert code == 0
    p = tmp_path / "dual.json"
    p.write_text(json.dumps(rep["result"]["dual_system"]))
    d = load_system(p)
    assert d.A.to_rows() == [["-0", "1"], ["-1", "-0"]] and d.B.to_rows() == [["1"], ["0"]]


def test_zero_output_map_exit_3(tmp_path):
    p = tmp_path / "zero.json"
    p.write_text(json.dumps({"n": 1, "A": [["-1"]], "C": [["0"]]}))
    code, rep = call("certify", "--system", p, "--t-grid", "0:3:4", "--sigma-grid", "1:2:2")
    assert code == 3 and rep["error"]["type"] == "NotObservableOnGrid"


def test_scenario_squeeze_certify():
    code, rep = call("scenario", "--name", "squeeze", "--run", "certify")
    assert code == 0
    pb = rep["result"]["runs"]["certify"]["explicit_bounds"]
    assert rep["result"]["runs"]["certify"]["nuco"]["nu0"] <= pb["nu0_limit"]
