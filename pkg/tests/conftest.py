import os
from pathlib import Path

import pytest


def dataset_dir() -> Path:
    env = os.environ.get("GTVR_DATA_DIR")
    if env:
        return Path(env)
    return Path(__file__).resolve().parent.parent / "data"


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return dataset_dir()


def require_dataset(name: str) -> Path:
    path = dataset_dir() / name
    if not path.is_file():
        pytest.skip(
            f"dataset {name} not present at {path}; drop the LIBSVM file there "
            "(or set GTVR_DATA_DIR) to run this check"
        )
    return path
