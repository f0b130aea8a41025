import json
import math
from functools import partial

import numpy as np
import pytest

from src.bbm import max_norm_particle, simulate_bbm
from src.ensemble import replica_streams, run_ensemble
from src.errors import ArtifactError
from src.export import ArtifactWriter, extremal_rows, rho_rows, tree_rows
from src.paths import RngStream, TimeGrid, sample_brownian_path
from src.rho import SigmaGridSpec, sample_rho
from src.utils import Formats, sha256_file


def test_replica_streams():
    streams = replica_streams(7, 3, namespace=(2,))
    assert [s.stream_path for s in streams] == [(2, 0), (2, 1), (2, 2)]
    assert all(s.root_seed == 7 for s in streams)


def test_ensemble_independent_of_workers():
    task = partial(sample_brownian_path, 2, TimeGrid.uniform(1.0, 10))
    serial = run_ensemble(task, 11, 4, workers=1)
    parallel = run_ensemble(task, 11, 4, workers=2)
    for a, b in zip(serial, parallel):
        assert np.array_equal(a.values, b.values)
    assert not np.array_equal(serial[0].values, serial[1].values)


def test_tree_rows_at_horizon_zero(rng):
    header, rows = tree_rows([simulate_bbm(2, 0.0, rng)])
    assert header == ["replica", "id", "parent_id", "birth_time", "final_time", "x1", "x2"]
    assert rows == [[0, 0, "", 0.0, 0.0, 0.0, 0.0]]


def test_extremal_rows_without_direction(rng):
    header, rows = extremal_rows([max_norm_particle(simulate_bbm(2, 0.0, rng))])
    assert header[-2:] == ["dir_1", "dir_2"]
    assert rows[0][-2:] == ["", ""]


def test_csv_table_and_manifest(tmp_path, rng):
    writer = ArtifactWriter(str(tmp_path), Formats.CSV)
    sample = sample_rho([0.0, 1.0], None, SigmaGridSpec(points=128, refine_points=4), rng)
    path = writer.write_table("rho", *rho_rows([sample]))
    writer.write_table("nan", ["a", "b"], [[1, math.nan]])
    manifest_path = writer.write_manifest({"command": "rho", "seed": 1})

    with open(path, encoding="utf-8") as f:
        lines = f.read().splitlines()
    assert lines[0] == "replica,s,rho,argmax_sigma"
    assert lines[1].startswith("0,0.0,0.0,")
    assert len(lines) == 3
    with open(tmp_path / "nan.csv", encoding="utf-8") as f:
        assert f.read().splitlines()[1] == "1,"

    with open(manifest_path, encoding="utf-8") as f:
        manifest = json.load(f)
    assert manifest["config"] == {"command": "rho", "seed": 1}
    assert [a["file"] for a in manifest["artifacts"]] == ["rho.csv", "nan.csv"]
    assert manifest["artifacts"][0]["sha256"] == sha256_file(path)
    assert set(manifest["versions"]) == {"python", "numpy", "scipy"}


def test_json_table(tmp_path):
    writer = ArtifactWriter(str(tmp_path), Formats.JSON)
    path = writer.write_table("table", ["a", "b"], [[np.int64(1), np.float64("nan")], [2, 0.5]])
    with open(path, encoding="utf-8") as f:
        assert json.load(f) == [{"a": 1, "b": None}, {"a": 2, "b": 0.5}]


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(ArtifactError):
        ArtifactWriter(str(blocker / "sub"))
