import numpy as np
import pytest

import src.globals as g
from src.bbm import BbmTree
from src.paths import RngStream


@pytest.fixture(autouse=True)
def production_mode(monkeypatch):
    """Errors are reported, not re-raised, whatever ENV the test runner has."""
    monkeypatch.setattr(g, "is_development", False)


@pytest.fixture
def rng() -> RngStream:
    return RngStream(20240611)


def make_tree(
    parent: list[int],
    birth_time: list[float],
    final_time: list[float],
    final_position: list[list[float]],
    horizon: float,
) -> BbmTree:
    """Hand-built tree; birth positions are the parents' final positions."""
    final = np.array(final_position, dtype=float)
    birth = np.array([final[p] if p >= 0 else np.zeros(final.shape[1]) for p in parent])
    leaves = [i for i, t in enumerate(final_time) if t == horizon]
    return BbmTree(
        dim=final.shape[1],
        horizon=horizon,
        parent=np.array(parent, dtype=np.int64),
        birth_time=np.array(birth_time, dtype=float),
        final_time=np.array(final_time, dtype=float),
        birth_position=birth,
        final_position=final,
        leaf_ids=np.array(leaves, dtype=np.int64),
    )


@pytest.fixture
def cherry() -> BbmTree:
    """Root branching at 0.5 into two leaves at (1, 0) and (0, 2) at horizon 1."""
    return make_tree(
        parent=[-1, 0, 0],
        birth_time=[0.0, 0.5, 0.5],
        final_time=[0.5, 1.0, 1.0],
        final_position=[[0.2, 0.1], [1.0, 0.0], [0.0, 2.0]],
        horizon=1.0,
    )
