import numpy as np
import pytest

from lava.store import ActivationDataset, LayerActivations


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def make_dataset(rng, n=12, widths=(4, 3), names=None):
    names = names or [f"l{i}" for i in range(len(widths))]
    layers = tuple(LayerActivations(nm, rng.normal(size=(n, w))) for nm, w in zip(names, widths))
    labels = np.arange(n) % 2
    return ActivationDataset(layers, labels, tuple(f"s{i}" for i in range(n)))


ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def record():
    """Store one acceptance verdict; the terminal summary prints them all."""
    def put(number: int, ok: bool, detail: str):
        ACCEPTANCE[number] = (bool(ok), detail)
        print(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
    return put


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
