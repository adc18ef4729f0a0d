from __future__ import annotations

from pathlib import Path

import pytest

from aisd.scenarios import BUNDLED_PROFILES, synthesize_scenario
from aisd.trace_model import ReplayLog, write_replay_log


@pytest.fixture(scope="session")
def bundled_logs() -> dict[str, ReplayLog]:
    return {name: synthesize_scenario(p) for name, p in BUNDLED_PROFILES.items()}


@pytest.fixture(scope="session")
def bundled_files(bundled_logs, tmp_path_factory) -> dict[str, Path]:
    root = tmp_path_factory.mktemp("scenarios")
    paths = {}
    for name, log in bundled_logs.items():
        paths[name] = root / f"{name}.tcr"
        write_replay_log(log, paths[name])
    return paths
