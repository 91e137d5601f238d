from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from rewardevo import envs, problems  # noqa: E402

GOLDEN_DIR = Path(__file__).parent / "golden"


@pytest.fixture(scope="session")
def suite_d5():
    return problems.make_suite(dimension=5, seed=3)


@pytest.fixture(scope="session")
def suite_d2():
    return problems.make_suite(dimension=2, seed=3)


@pytest.fixture(scope="session")
def tasks_d5(suite_d5):
    return {
        tid: envs.make_task(tid, suite_d5, max_fes=2000) for tid in envs.TASK_IDS
    }


@pytest.fixture(scope="session")
def golden_dir():
    GOLDEN_DIR.mkdir(exist_ok=True)
    return GOLDEN_DIR


def golden_check(path: Path, actual: str, regen: bool) -> None:
    """Compare against a committed golden file; regenerate when asked."""
    if regen or not path.exists():
        path.write_text(actual, encoding="utf-8")
        if not regen:
            pytest.skip(f"golden file {path.name} created; rerun to compare")
    expected = path.read_text(encoding="utf-8")
    assert actual == expected, (
        f"{path.name} drifted; set REWARDEVO_REGEN_GOLDEN=1 to regenerate "
        f"deliberately"
    )


@pytest.fixture(scope="session")
def regen_golden():
    import os

    return os.environ.get("REWARDEVO_REGEN_GOLDEN") == "1"
