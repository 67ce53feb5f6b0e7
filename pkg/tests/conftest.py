import os
from pathlib import Path

import pytest

REPO_DATA = Path(__file__).resolve().parent.parent / "data" / "mnist"


def find_mnist_dir():
    for cand in (os.environ.get("SLSTM_DATA_DIR"), REPO_DATA):
        if not cand:
            continue
        if any((Path(cand) / f"train-images-idx3-ubyte{ext}").exists() for ext in ("", ".gz")):
            return str(cand)
    return None


@pytest.fixture(scope="session")
def mnist_dir():
    path = find_mnist_dir()
    if path is None:
        pytest.skip("MNIST IDX files not found; set SLSTM_DATA_DIR")
    return path


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
