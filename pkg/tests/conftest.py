from pathlib import Path

import pytest
from hypothesis import settings

from uav_iab.dataset import load_dataset

settings.register_profile("repo", deadline=None, max_examples=60)
settings.load_profile("repo")

ROOT = Path(__file__).resolve().parents[1]
DATA = ROOT / "data"


@pytest.fixture(scope="session")
def light_dataset():
    return load_dataset(DATA / "light.csv")


@pytest.fixture(scope="session")
def heavy_dataset():
    return load_dataset(DATA / "heavy.csv")
