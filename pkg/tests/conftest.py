import numpy as np
import pytest
import torch

from scaffusion.data import generate_dataset


@pytest.fixture(autouse=True)
def _default_dtype():
    torch.manual_seed(0)
    yield


@pytest.fixture(scope="session")
def tiny_room(tmp_path_factory):
    """Two short room sequences at 64x64 (divisible by the network stride)."""
    root = tmp_path_factory.mktemp("room")
    generate_dataset(root, seed=3, layout="room", frames=5, sequences=2, width=64, height=64)
    return root


@pytest.fixture(scope="session")
def tiny_corridor(tmp_path_factory):
    root = tmp_path_factory.mktemp("corridor")
    generate_dataset(root, seed=4, layout="corridor", frames=5, sequences=2, width=64, height=64)
    return root


def rand(*shape, seed=0, lo=0.0, hi=1.0):
    return np.random.default_rng(seed).uniform(lo, hi, size=shape)


_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def criterion(pytestconfig):
    """``criterion(n, ok, detail)`` prints and records one acceptance line."""
    def record(n, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
        print(line)
        pytestconfig.stash[_ACCEPTANCE].append((n, line))
        return ok
    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
