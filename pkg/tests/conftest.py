import numpy as np
import pytest

from readflow.model_io import ActivationBatch, ArrayConfig, QuantizedTensor

# 4x4 worked example: columns {0, 2} and {1, 3} share sign patterns
WORKED_W = np.array(
    [
        [4, -5, 5, -1],
        [-10, 3, -2, 2],
        [9, -2, 3, -1],
        [-2, 3, -6, 3],
    ],
    dtype=np.int8,
)


@pytest.fixture
def worked_w():
    return QuantizedTensor(WORKED_W)


@pytest.fixture
def ones4():
    return ActivationBatch(np.ones((1, 4), dtype=np.uint8))


@pytest.fixture
def cfg2():
    return ArrayConfig(array_rows=16, array_cols=2)


@pytest.fixture
def rng():
    return np.random.default_rng(20241016)


# acceptance verdicts, printed as one line per criterion at the end of the run
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
