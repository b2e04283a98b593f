from pathlib import Path

import pytest

from cyber0.federation import ExperimentConfig, mnist_available

PROFILE_DIR = Path(__file__).resolve().parent.parent / "profiles"

_MNIST_SKIP = (
    "MNIST IDX files not found (set CYBER0_MNIST_DIR or run "
    "scripts/fetch_mnist.py on a machine with network access)"
)


def mnist_present() -> bool:
    return mnist_available(ExperimentConfig(model="logreg", data="mnist"))


def pytest_collection_modifyitems(config, items):
    if mnist_present():
        return
    skip = pytest.mark.skip(reason=_MNIST_SKIP)
    for item in items:
        if "mnist" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(scope="session")
def profile_dir() -> Path:
    return PROFILE_DIR
