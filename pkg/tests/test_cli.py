import json

import pytest

from src.cli import build_parser, main
from src.errors import UsageError


def _run(tmp_path, *args: str) -> int:
    return main([*args, "--output", str(tmp_path)])


def _error(capsys) -> dict:
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_bbm_at_time_zero(tmp_path):
    assert _run(tmp_path, "bbm", "--dim", "2", "--t", "0", "--seed", "1") == 0
    lines = (tmp_path / "tree.csv").read_text(encoding="utf-8").splitlines()
    assert lines == ["replica,id,parent_id,birth_time,final_time,x1,x2", "0,0,,0.0,0.0,0.0,0.0"]
    manifest = json.loads((tmp_path / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["config"]["horizon"] == 0.0
    assert {a["file"] for a in manifest["artifacts"]} == {"tree.csv", "extremal.csv"}


def test_rho_is_byte_identical(tmp_path):
    args = ["rho", "--s-max", "4", "--s-steps", "64", "--replicas", "100", "--seed", "1"]
    assert _run(tmp_path / "a", *args) == 0
    assert _run(tmp_path / "b", *args) == 0
    for name in ("rho.csv", "rho_surface.csv", "manifest.json"):
        first = (tmp_path / "a" / name).read_bytes()
        second = (tmp_path / "b" / name).read_bytes()
        if name == "manifest.json":
            first, second = first.replace(str(tmp_path / "a").encode(), b""), second.replace(str(tmp_path / "b").encode(), b"")
        assert first == second


def test_front_and_landscape(tmp_path):
    assert _run(tmp_path, "front", "--dim", "3", "--t", "4", "--theta-steps", "4", "--replicas", "2") == 0
    header = (tmp_path / "front.csv").read_text(encoding="utf-8").splitlines()[0]
    assert header == "replica,s,theta_index,theta_1,theta_2,height"
    assert _run(tmp_path, "landscape", "--t", "4", "--ell", "1", "--format", "json") == 0
    entries = json.loads((tmp_path / "landscape.json").read_text(encoding="utf-8"))
    assert entries and entries[0]["replica"] == 0


def test_cluster(tmp_path):
    assert _run(tmp_path, "cluster", "--t", "1", "--L", "1", "--s-max", "0.25", "--s-steps", "4") == 0
    rows = (tmp_path / "cluster.csv").read_text(encoding="utf-8").splitlines()
    assert rows[0] == "replica,point_index,x1,x2,source,branch_time"
    assert rows[1].startswith("0,0,0.0,0.0,origin,")
    assert (tmp_path / "xl.csv").exists()


def test_invalid_epsilon(tmp_path, capsys):
    assert _run(tmp_path, "front", "--epsilon", "1.5") == 2
    error = _error(capsys)
    assert error["error"] == "UsageError"
    assert "epsilon ∈ (0,1)" in error["message"]


def test_front_in_one_dimension(tmp_path, capsys):
    assert _run(tmp_path, "front", "--dim", "1") == 2
    assert "d ≥ 2" in _error(capsys)["message"]


def test_unknown_flag(tmp_path, capsys):
    assert _run(tmp_path, "bbm", "--colour", "blue") == 2
    assert _error(capsys)["exit_code"] == 2


def test_capacity_exit_code(tmp_path, capsys):
    assert _run(tmp_path, "bbm", "--t", "20", "--particle-cap", "11") == 3
    error = _error(capsys)
    assert error["error"] == "CapacityError"
    assert 0 < error["time"] < 20
    assert (tmp_path / "manifest.json").exists()


def test_verify_report(tmp_path):
    assert _run(tmp_path, "verify", "--suite", "rho-convexity", "--replicas", "3", "--seed", "7") == 0
    report = json.loads((tmp_path / "report.json").read_text(encoding="utf-8"))
    assert report["seed"] == 7
    assert [c["check_id"] for c in report["checks"]] == ["rho_convexity", "rho_monotone", "rho_positive"]
    assert all(set(c) == {"check_id", "statistic", "threshold", "pass", "n", "seed"} for c in report["checks"])


def test_parser_raises_usage_error():
    with pytest.raises(UsageError):
        build_parser().parse_args(["nope"])


@pytest.mark.slow
def test_verify_rho_scaling(tmp_path):
    assert _run(tmp_path, "verify", "--suite", "rho-scaling", "--replicas", "2000", "--seed", "7") == 0
    report = json.loads((tmp_path / "report.json").read_text(encoding="utf-8"))
    checks = {c["check_id"]: c for c in report["checks"]}
    assert checks["rho_scaling_s2"]["pass"]
