import json
import shutil
import subprocess
from pathlib import Path

import pytest

from wiredsys.cli import main
from wiredsys.report import render_report, trajectory_csv
from wiredsys.behavior import simulate
from wiredsys.scenarios import toggle

MODELS = Path(__file__).resolve().parent.parent / "models"
UAV = str(MODELS / "uav.model")
SEC = str(MODELS / "security.model")


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def run_json(capsys, *argv):
    code, out, err = run(capsys, "--json", *argv)
    return code, json.loads(out)


@pytest.mark.parametrize("path", sorted(MODELS.glob("*.model")), ids=lambda p: p.name)
def test_check_valid(capsys, path):
    code, out, _ = run(capsys, "check", str(path))
    assert code == 0 and out.strip().endswith("ok")


@pytest.mark.parametrize("path", sorted((MODELS / "broken").glob("*.model")), ids=lambda p: p.name)
def test_check_invalid(capsys, path):
    code, out, err = run(capsys, "check", str(path))
    assert code == 2 and "error" in err


def test_check_json_either_side_of_command(capsys):
    code, data = run_json(capsys, "check", UAV)
    assert code == 0 and data["valid"] is True and data["diagnostics"] == []
    code, out, _ = run(capsys, "check", "--json", UAV)
    assert json.loads(out)["valid"] is True


def test_missing_file_is_usage_error(capsys, tmp_path):
    code, _, err = run(capsys, "check", str(tmp_path / "nope.model"))
    assert code == 1 and "error" in err


def test_unknown_command_is_usage_error(capsys):
    assert run(capsys, "frobnicate", UAV)[0] == 1


def test_compose_uav_readout(capsys):
    code, data = run_json(capsys, "compose", UAV, "--wiring", "uav", "--behaviors", "sensor,control,dynamics")
    assert code == 0
    assert data["C"] == [[0, 0, 0, 0, 0, 0, 1]]
    assert data["kind"] == "lti" and data["n"] == 7


def test_compose_wrong_count(capsys):
    code, _, err = run(capsys, "compose", UAV, "--wiring", "uav", "--behaviors", "sensor")
    assert code == 1 and "inner boxes" in err


def test_output_is_deterministic(capsys):
    argv = ["--json", "compose", UAV, "--wiring", "uav", "--behaviors", "sensor,control,dynamics"]
    first = run(capsys, *argv)[1]
    assert run(capsys, *argv)[1] == first


def test_flatten_security_sensor(capsys):
    code, out, _ = run(capsys, "flatten", SEC, "--wiring", "uav")
    assert code == 0
    assert out.startswith("wiring uav_flat : [I1: IMU, I2: IMU, G: GPS, P: Proc3, C, D] -> UAV {")
    code, data = run_json(capsys, "flatten", SEC, "--wiring", "uav", "--depth", "0")
    assert data["boxes"] == ["L", "C", "D"]


def test_contract_compatible_and_not(capsys):
    code, data = run_json(capsys, "contract", UAV, "--wiring", "uav", "--contracts", "cL,cC,cD")
    assert code == 0 and data["compatible"] is True
    assert data["in"] == [[[[0, 100]]], [[[-20, 20]]]]
    assert data["out"] == [[[[-35, 35]]]]
    code, data = run_json(capsys, "contract", UAV, "--wiring", "uav", "--contracts", "cL,cC_narrow,cD_narrow")
    assert code == 2 and data["compatible"] is False


def test_simulate_and_satisfies(capsys, tmp_path):
    inputs = tmp_path / "in.csv"
    inputs.write_text("x0,x1\n1,0.5\n1,0.5\n0,0\n", encoding="utf-8")
    code, out, _ = run(capsys, "simulate", UAV, "--system", "plane", "--init", "0,0,0,0,0,0,0",
                       "--inputs", str(inputs), "--steps", "3")
    assert code == 0
    lines = out.strip().split("\n")
    assert lines[0] == "t,s0,s1,s2,s3,s4,s5,s6,x0,x1,y0"
    assert len(lines) == 5 and lines[-1].split(",")[8:10] == ["", ""]

    traj = tmp_path / "traj.csv"
    traj.write_text("t,x0,y0\n0,2,10\n1,2.5,11\n2,2.7,11\n3,3,11\n", encoding="utf-8")
    code, out, _ = run(capsys, "satisfies", str(MODELS / "time.model"), "--trajectory", str(traj),
                       "--contract", "band")
    assert code == 0
    traj.write_text("t,x0,y0\n0,2,10\n1,2.5,11\n2,2.7,9.5\n3,3,11\n", encoding="utf-8")
    code, data = run_json(capsys, "satisfies", str(MODELS / "time.model"), "--trajectory", str(traj),
                          "--contract", "band")
    assert code == 2 and data == {"contract": "band", "holds": False, "step": 2}


def test_satisfies_time_contract(capsys, tmp_path):
    traj = tmp_path / "alarm.csv"
    rows = ["t,x0,y0"] + [f"{i},{a},1" for i, a in enumerate([1, 1, 0, 0, 0, 0, 0, 0])]
    traj.write_text("\n".join(rows) + "\n", encoding="utf-8")
    code, data = run_json(capsys, "satisfies", str(MODELS / "time.model"), "--trajectory", str(traj),
                          "--contract", "cooldown")
    assert code == 2 and data["holds"] is False


def test_probe(capsys):
    code, data = run_json(capsys, "probe", SEC, "--target", "target", "--kb", "known", "--tests", "anything")
    assert code == 0 and len(data["candidates"]) == 5
    code, data = run_json(capsys, "probe", SEC, "--target", "target", "--kb", "known",
                          "--tests", "anything,table6")
    assert data["candidates"] == ["believed"]
    assert data["equivalence"] == {"believed": True}


def test_probe_not_machine(capsys):
    code, data = run_json(capsys, "probe", str(MODELS / "not.model"), "--target", "negate",
                          "--kb", "nots", "--tests", "blink")
    assert code == 0 and data["candidates"] == ["negate_split"]


def test_probe_empty(capsys):
    code, out, _ = run(capsys, "--json", "probe", str(MODELS / "not.model"), "--target", "negate",
                       "--kb", "strangers", "--tests", "table4")
    assert code == 0 and out.strip() == '{"candidates": []}'


def test_empty_candidates_render():
    assert render_report({"candidates": []}, "json") == '{"candidates": []}'


def test_attack_verify(capsys):
    code, data = run_json(capsys, "attack", SEC, "--plan", "hijack", "--verify-equiv")
    assert code == 0
    assert data["equivalent"] is False
    assert data["rewritten"] == ["G"]
    assert data["diff"]["before"] != data["diff"]["after"]


def test_trajectory_csv_header():
    t = simulate(toggle(), 0, [(1,), (0,)])
    assert trajectory_csv(t).split("\n")[0] == "t,s0,x0,y0"


@pytest.mark.skipif(shutil.which("wiredsys") is None, reason="console script not installed")
def test_console_script_exit_codes():
    ok = subprocess.run(["wiredsys", "check", UAV], capture_output=True)
    bad = subprocess.run(["wiredsys", "check", str(MODELS / "broken" / "syntax_error.model")], capture_output=True)
    assert ok.returncode == 0 and bad.returncode == 2
