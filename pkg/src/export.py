"""CSV / JSON artifacts of a run and the manifest listing them with checksums."""

from __future__ import annotations

import csv
import json
import math
import os
import platform
from typing import Iterable, Sequence

import numpy as np
import scipy

from src.bbm import BbmTree, ExtremalRecord
from src.cluster import GrTable
from src.errors import ArtifactError
from src.front import FrontSurface, LandscapeEntry, PointCloud
from src.globals import MANIFEST_JSON
from src.logger import Logger
from src.rho import RhoSample
from src.utils import Formats, coordinate_columns, fmt_float, make_dirs, sha256_file

logger = Logger(__name__)

Row = list


def _cell(value) -> str | int:
    if isinstance(value, (float, np.floating)):
        return "" if math.isnan(value) else fmt_float(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    return value


def tree_rows(trees: Sequence[BbmTree]) -> tuple[list[str], list[Row]]:
    """Rows replica,id,parent_id,birth_time,final_time,x1..xd (final positions).

    Args:
        trees (Sequence[BbmTree]): Trees in replica order.

    Returns:
        tuple[list[str], list[Row]]: Header and rows.
    """
    dim = trees[0].dim if trees else 1
    header = ["replica", "id", "parent_id", "birth_time", "final_time"] + coordinate_columns("x", dim)
    rows = []
    for replica, tree in enumerate(trees):
        for node in range(tree.size):
            parent = int(tree.parent[node])
            rows.append(
                [replica, node, "" if parent < 0 else parent, tree.birth_time[node], tree.final_time[node]]
                + list(tree.final_position[node])
            )
    return header, rows


def extremal_rows(records: Sequence[ExtremalRecord]) -> tuple[list[str], list[Row]]:
    """Rows replica,particle_id,max_norm,recentered,dir_1..dir_d; the direction is empty
    when the leaf sits at the origin.

    Args:
        records (Sequence[ExtremalRecord]): Maximal-norm records in replica order.

    Returns:
        tuple[list[str], list[Row]]: Header and rows.
    """
    dim = next((len(r.direction) for r in records if r.direction_defined), 2)
    header = ["replica", "particle_id", "max_norm", "recentered"] + coordinate_columns("dir_", dim)
    rows = [
        [replica, r.particle_id, r.max_norm, r.recentered]
        + (list(r.direction) if r.direction_defined else [""] * dim)
        for replica, r in enumerate(records)
    ]
    return header, rows


def front_rows(surfaces: Sequence[FrontSurface]) -> tuple[list[str], list[Row]]:
    """Rows replica,s,theta_index,theta_1..theta_{d-1},height.

    Args:
        surfaces (Sequence[FrontSurface]): Surfaces in replica order.

    Returns:
        tuple[list[str], list[Row]]: Header and rows.
    """
    width = surfaces[0].theta_set.shape[1] if surfaces else 1
    header = ["replica", "s", "theta_index"] + coordinate_columns("theta_", width) + ["height"]
    rows = []
    for replica, surface in enumerate(surfaces):
        for i, s in enumerate(surface.s_grid):
            for j, theta in enumerate(surface.theta_set):
                rows.append([replica, s, j] + list(theta) + [surface.heights[i, j]])
    return header, rows


def landscape_rows(landscapes: Sequence[Sequence[LandscapeEntry]]) -> tuple[list[str], list[Row]]:
    """Rows replica,entry_index,particle_id,recentered_norm,dir_1..dir_d.

    Args:
        landscapes (Sequence[Sequence[LandscapeEntry]]): Landscapes in replica order.

    Returns:
        tuple[list[str], list[Row]]: Header and rows.
    """
    dim = next((len(e.direction) for entries in landscapes for e in entries), 2)
    header = ["replica", "entry_index", "particle_id", "recentered_norm"] + coordinate_columns("dir_", dim)
    rows = [
        [replica, k, entry.particle_id, entry.recentered_norm] + list(entry.direction)
        for replica, entries in enumerate(landscapes)
        for k, entry in enumerate(entries)
    ]
    return header, rows


def landscape_cluster_rows(landscapes: Sequence[Sequence[LandscapeEntry]]) -> tuple[list[str], list[Row]]:
    """Rows replica,entry_index,point_index,x1..xd of the cluster seen from each entry.

    Args:
        landscapes (Sequence[Sequence[LandscapeEntry]]): Landscapes in replica order.

    Returns:
        tuple[list[str], list[Row]]: Header and rows.
    """
    dim = next((e.cluster.dim for entries in landscapes for e in entries), 2)
    header = ["replica", "entry_index", "point_index"] + coordinate_columns("x", dim)
    rows = [
        [replica, k, p] + list(point)
        for replica, entries in enumerate(landscapes)
        for k, entry in enumerate(entries)
        for p, point in enumerate(entry.cluster.coords)
    ]
    return header, rows


def cluster_rows(clusters: Sequence[PointCloud]) -> tuple[list[str], list[Row]]:
    """Rows replica,point_index,x1..xd,source,branch_time; branch_time is empty for the origin.

    Args:
        clusters (Sequence[PointCloud]): Assembled clusters in replica order.

    Returns:
        tuple[list[str], list[Row]]: Header and rows.
    """
    dim = clusters[0].dim if clusters else 2
    header = ["replica", "point_index"] + coordinate_columns("x", dim) + ["source", "branch_time"]
    rows = []
    for replica, cluster in enumerate(clusters):
        for p, (point, tag, time) in enumerate(zip(cluster.coords, cluster.tags, cluster.times)):
            rows.append([replica, p] + list(point) + [tag, time])
    return header, rows


def rho_rows(samples: Sequence[RhoSample]) -> tuple[list[str], list[Row]]:
    """Rows replica,s,rho,argmax_sigma.

    Args:
        samples (Sequence[RhoSample]): Samples in replica order.

    Returns:
        tuple[list[str], list[Row]]: Header and rows.
    """
    header = ["replica", "s", "rho", "argmax_sigma"]
    rows = [
        [replica, s, r, a]
        for replica, sample in enumerate(samples)
        for s, r, a in zip(sample.s_grid, sample.rho, sample.argmax_sigma)
    ]
    return header, rows


class ArtifactWriter:
    """Writes the artifacts of one run into the output directory and keeps
    the list needed for the manifest.

    Args:
        output_dir (str): Output directory, created if missing.
        fmt (str, optional): csv or json. Defaults to csv.
    """

    def __init__(self, output_dir: str, fmt: str = Formats.CSV):
        self._output_dir = output_dir
        self._fmt = fmt
        self._artifacts: list[str] = []
        try:
            make_dirs([output_dir])
        except OSError as e:
            raise ArtifactError(f"Failed to create output directory {output_dir}: {e}")

    @property
    def output_dir(self) -> str:
        return self._output_dir

    @property
    def artifacts(self) -> list[str]:
        return list(self._artifacts)

    def path(self, file_name: str) -> str:
        return os.path.join(self._output_dir, file_name)

    def write_table(self, name: str, header: list[str], rows: Iterable[Row]) -> str:
        """Writes a table as `<name>.csv` or as a JSON list of records `<name>.json`.

        Args:
            name (str): Artifact name without extension.
            header (list[str]): Column names.
            rows (Iterable[Row]): Rows.

        Returns:
            str: Path of the written file.
        """
        file_name = f"{name}.{self._fmt}"
        save_path = self.path(file_name)
        try:
            with open(save_path, "w", newline="", encoding="utf-8") as f:
                if self._fmt == Formats.JSON:
                    records = [dict(zip(header, (_json_value(v) for v in row))) for row in rows]
                    json.dump(records, f, indent=1)
                else:
                    writer = csv.writer(f, lineterminator="\n")
                    writer.writerow(header)
                    writer.writerows([_cell(v) for v in row] for row in rows)
        except OSError as e:
            raise ArtifactError(f"Failed to write {save_path}: {e}")
        self._register(file_name)
        return save_path

    def write_json(self, name: str, data: dict) -> str:
        """Writes a JSON document `<name>.json`.

        Args:
            name (str): Artifact name without extension.
            data (dict): Document.

        Returns:
            str: Path of the written file.
        """
        file_name = f"{name}.json"
        save_path = self.path(file_name)
        try:
            with open(save_path, "w", encoding="utf-8") as f:
                json.dump(data, f, indent=2, sort_keys=True)
        except OSError as e:
            raise ArtifactError(f"Failed to write {save_path}: {e}")
        self._register(file_name)
        return save_path

    def write_gr_table(self, table: GrTable, file_name: str = "gr_table.csv") -> str:
        save_path = self.path(file_name)
        table.to_csv(save_path)
        self._register(file_name)
        return save_path

    def _register(self, file_name: str) -> None:
        if file_name not in self._artifacts:
            self._artifacts.append(file_name)
        logger.info(f"Artifact saved to {self.path(file_name)}")

    def write_manifest(self, config: dict) -> str:
        """Writes manifest.json with the resolved config, every artifact with its SHA-256
        checksum, and library versions.

        Args:
            config (dict): Resolved run configuration.

        Returns:
            str: Path of the manifest.
        """
        manifest = {
            "config": config,
            "artifacts": [
                {"file": name, "sha256": sha256_file(self.path(name)), "bytes": os.path.getsize(self.path(name))}
                for name in self._artifacts
            ],
            "versions": {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__},
        }
        save_path = self.path(MANIFEST_JSON)
        try:
            with open(save_path, "w", encoding="utf-8") as f:
                json.dump(manifest, f, indent=2, sort_keys=True)
        except OSError as e:
            raise ArtifactError(f"Failed to write manifest {save_path}: {e}")
        logger.info(f"Manifest saved to {save_path}")
        return save_path


def _json_value(value):
    if isinstance(value, (float, np.floating)):
        return None if math.isnan(value) else float(value)
    if isinstance(value, np.integer):
        return int(value)
    return value
