from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "suite",
    deadline=None,
    max_examples=50,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture(scope="session")
def notebooks_dir() -> Path:
    return FIXTURES / "notebooks"


@pytest.fixture(scope="session")
def notebooks(notebooks_dir):
    from entplan.datastore import load_dataset

    return load_dataset(notebooks_dir)
