import numpy as np
import pytest

from reram_guard.model_io import load_mnist_split, save_model
from reram_guard.nn import train_reference_mlp

# filled by tests/test_acceptance.py, printed at the end of the run
ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture(scope="session")
def mnist_test():
    return load_mnist_split(split="test")


@pytest.fixture(scope="session")
def mnist_train():
    return load_mnist_split(split="train")


@pytest.fixture(scope="session")
def reference_mlp(mnist_train):
    return train_reference_mlp(mnist_train.images, mnist_train.labels, hidden=64, seed=0, epochs=5)


@pytest.fixture(scope="session")
def reference_model_dir(reference_mlp, tmp_path_factory):
    return save_model(reference_mlp, tmp_path_factory.mktemp("models") / "reference_mlp")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
