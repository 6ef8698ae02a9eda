from __future__ import annotations

import pytest

from lorafl.config import ScenarioConfig


def small_config(**overrides) -> ScenarioConfig:
    """A blob-data scenario that runs in well under a second per replication."""
    base = {
        "data.kind": "blobs",
        "data.n_train": 400,
        "data.n_test": 200,
        "data.n_features": 16,
        "data.separation": 1.0,
        "train.layers": [16, 8, 10],
        "schedule.rounds": 4,
    }
    base.update(overrides)
    return ScenarioConfig().replace(**base)


@pytest.fixture
def small():
    return small_config
