import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def mnist_raw():
    """The 5000-image MNIST subset bundled with mlxtend, as a RawDataset."""
    from mlxtend.data import mnist_data

    from qensemble.data import RawDataset

    x, y = mnist_data()
    return RawDataset(x.astype(np.float64) / 255.0, y.astype(np.int64))


@pytest.fixture(scope="session")
def mnist_idx_dir(tmp_path_factory, mnist_raw):
    """The same subset written as gzipped IDX files."""
    from qensemble.data import write_idx

    out = tmp_path_factory.mktemp("mnist")
    images = np.rint(mnist_raw.images * 255).astype(np.uint8).reshape(-1, 28, 28)
    write_idx(out / "train-images-idx3-ubyte.gz", out / "train-labels-idx1-ubyte.gz",
              images, mnist_raw.labels)
    return out


_ACCEPTANCE = []


@pytest.fixture(scope="session")
def acceptance_report():
    """Record one PASS/FAIL line per acceptance criterion; returns the verdict."""

    def record(label: str, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'}  criterion {label}: {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
