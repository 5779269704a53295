import hashlib
import json
import math

import pytest

import fracp
from fracp.experiments import (
    ExperimentError,
    load_scenario,
    run_exponent_table,
    run_riesz_example,
    run_scenario,
    run_solver_study,
    validate_scenario,
    write_outputs,
)
from fracp.params import Params


def test_exponent_table_default_run():
    rep = run_exponent_table()
    assert rep["passed"]
    assert rep["n_rows"] == 3 * 5 * 4 * 4
    names = [c["name"] for c in rep["checks"]]
    assert "pinned saturated instance" in names
    assert "pinned almost-sharp instance" in names
    assert all(c["passed"] for c in rep["checks"])


def test_exponent_table_is_deterministic():
    a = run_exponent_table()["artifacts"]["theta_table.csv"]
    b = run_exponent_table()["artifacts"]["theta_table.csv"]
    assert a == b


def test_exponent_table_marks_inadmissible_rows():
    rep = run_exponent_table(N_values=(3,), s_values=(0.25,), p_values=(2.0,),
                             q_values=(2.0, math.inf))
    lines = rep["artifacts"]["theta_table.csv"].strip().splitlines()
    assert lines[0] == "N,s,p,q,theta,theta_homogeneous,regime"
    # q = 2 < N/(sp) = 6: no exponent, marked inadmissible
    row_q2 = next(l for l in lines[1:] if ",2.0," in l and not l.endswith("capped"))
    assert row_q2.split(",")[4] == ""
    assert row_q2.endswith("inadmissible")


def test_validate_scenario_rejects_bad_configs():
    with pytest.raises(ValueError, match="scenario kind"):
        validate_scenario({"kind": "mystery"})
    with pytest.raises(ValueError, match="unknown expression id"):
        validate_scenario({
            "kind": "solver_study",
            "problem": {"g": {"expr": "mystery:2.0"}},
        })
    with pytest.raises(ValueError, match="tolerance must be a positive number"):
        validate_scenario({"kind": "solver_study", "problem": {}, "tol": -1.0})
    with pytest.raises(ValueError, match="dyadic"):
        validate_scenario({"kind": "riesz", "d_ladder": [0.1, 0.03]})
    with pytest.raises(ValueError, match="unknown expression id"):
        validate_scenario({"kind": "solver_study",
                           "problem": {"f": {"id": "mystery", "value": 1.0}}})


def test_load_scenario_validates(tmp_path):
    path = tmp_path / "scn.json"
    path.write_text(json.dumps({"kind": "bogus"}))
    with pytest.raises(ValueError, match="scenario kind"):
        load_scenario(path)


def test_run_scenario_writes_artifacts(tmp_path):
    cfg = {"kind": "exponent_table", "name": "thetas",
           "N_values": [1, 2], "s_values": [0.5], "p_values": [2.0, 3.0],
           "q_values": [4.0, "inf"]}
    rep = run_scenario(cfg, out_dir=tmp_path)
    assert rep["scenario"] == "thetas"
    assert rep["passed"]
    csv_path = tmp_path / "thetas_theta_table.csv"
    report_path = tmp_path / "thetas_report.json"
    assert csv_path.exists() and report_path.exists()
    assert rep["report_path"] == str(report_path)
    disk = json.loads(report_path.read_text())
    entry = disk["artifacts"]["theta_table.csv"]
    digest = hashlib.sha256(csv_path.read_bytes()).hexdigest()
    assert entry["sha256"] == digest
    assert rep["artifacts"]["theta_table.csv"] == csv_path.read_text()


def test_riesz_example_reduced_probes():
    rep = run_riesz_example(probes=[0.0, 10.0], d_ladder=[0.1, 0.05, 0.025])
    assert rep["passed"]
    center = next(c for c in rep["checks"] if c["name"] == "potential at the center")
    assert center["measured"] == pytest.approx(4.0 * math.pi, rel=0.005)
    ladder = rep["ladder"]
    quot = [r["quotient"] for r in ladder]
    assert quot == sorted(quot)
    assert "radius,value,error" in rep["artifacts"]["probes.csv"]


def test_sharpness_rejects_out_of_range_eps():
    from fracp.experiments import run_sharpness_example

    # eps must stay below N/(q(p-1)) = 0.25 for this instance
    with pytest.raises(ExperimentError, match="^constraints:"):
        run_sharpness_example(Params(2, 0.25, 3.0, 4.0), 0.3)
    with pytest.raises(ExperimentError, match="^constraints:"):
        run_sharpness_example(Params(2, 0.7, 3.0, 4.0), 0.05)  # s > (p-1)/p


def _study_cfg():
    return {
        "kind": "solver_study",
        "name": "study_small",
        "problem": {
            "params": {"N": 1, "s": 0.6, "p": 2.0, "q": 3.0},
            "grid": {"lo": [-1.0], "hi": [1.0], "nodes_per_axis": 65},
            "interior": {"kind": "ball", "center": [0.0], "radius": 0.6},
            "g": {"far": "zero"},
            "f": 1.0,
            "tol": 1e-10,
        },
        "study": {
            "replacement": {"radius": 0.4},
            "comparison": {"m": 4.0, "amplitudes": [0.5, 1.0, 2.0], "slope_tol": 0.1},
            "regularity": {"floor_factor": 0.9,
                           "radii": [0.4, 0.2, 0.1, 0.05]},
            "ladder": {"levels": 3, "window_radius": 0.3},
        },
    }


def test_solver_study_end_to_end():
    rep = run_solver_study(_study_cfg())
    names = [c["name"] for c in rep["checks"]]
    assert names == [
        "solver converged",
        "energy trace monotone",
        "replacement converged",
        "replacement minimal in the ball",
        "comparison scaling slope",
        "measured exponent above the guaranteed floor",
        "ladder identities exact",
        "ladder quotients finite and stable",
    ]
    assert rep["passed"], [c for c in rep["checks"] if not c["passed"]]
    slope_check = next(c for c in rep["checks"] if c["name"] == "comparison scaling slope")
    assert slope_check["target"] == 2.0  # p' for the linear case
    assert "solution.csv" in rep["artifacts"]
    assert "regularity.csv" in rep["artifacts"]
    assert rep["ladder"]["rungs"][0]["identity_ok"]


def test_solver_study_expected_exponent_branch():
    cfg = _study_cfg()
    cfg["study"].pop("comparison")
    cfg["study"].pop("ladder")
    cfg["study"]["regularity"] = {"expect_exponent": 2.0, "exponent_tol": 0.2,
                                  "radii": [0.4, 0.2, 0.1, 0.05]}
    rep = run_solver_study(cfg)
    check = next(c for c in rep["checks"] if c["name"] == "measured holder exponent")
    # the solution is even and smooth at the center, so the oscillation
    # decays quadratically there
    assert check["passed"], check


def test_solver_study_stage_tagging():
    cfg = _study_cfg()
    cfg["study"] = {"comparison": {"m": 4.0}}
    with pytest.raises(ExperimentError, match="^comparison: needs a replacement"):
        run_solver_study(cfg)
    cfg = _study_cfg()
    cfg["problem"]["g"] = {"far": "bogus"}
    with pytest.raises(ExperimentError, match="^problem:"):
        run_solver_study(cfg)


def test_report_envelope_tool_info():
    rep = run_exponent_table(N_values=(1,), s_values=(0.5,), p_values=(2.0,),
                             q_values=(math.inf,))
    assert rep["tool"]["name"] == "fracp"
    assert rep["tool"]["version"] == fracp.__version__
    assert rep["config"]["q_values"] == ["inf"]
