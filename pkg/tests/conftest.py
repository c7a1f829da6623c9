from pathlib import Path

import pytest

from scenefactor import datasets as ds

DATA = Path(__file__).resolve().parents[1] / "data"


@pytest.fixture(scope="session")
def data_dir():
    return DATA


@pytest.fixture(scope="session")
def mnist_images():
    return ds.load_idx(DATA / "mnist" / "mnist5k-images-idx3-ubyte.gz")
