import numpy as np
import pytest

from svspipe.classifier import split_dataset, svm_train, synth_dataset
from svspipe.core import COLS, ROWS, MotionBitmap


@pytest.fixture(scope="session")
def dataset():
    return synth_dataset(132, seed=0)


@pytest.fixture(scope="session")
def split(dataset):
    return split_dataset(dataset, 0.7, seed=0)


@pytest.fixture(scope="session")
def model(split):
    return svm_train(split[0], seed=0)


def rect_bitmap(*rects, rows=ROWS, cols=COLS):
    """Bitmap with solid rectangles given as inclusive (x0, y0, x1, y1)."""
    bits = np.zeros((rows, cols), dtype=np.uint8)
    for x0, y0, x1, y1 in rects:
        bits[y0 : y1 + 1, x0 : x1 + 1] = 1
    return MotionBitmap.with_dims(bits)


# ---------------------------------------------------------------- acceptance reporting

_ACCEPTANCE: dict[int, tuple[str, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): numbered end-to-end exit criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call" and not (rep.when == "setup" and rep.failed):
        return
    n, title = mark.args
    detail = getattr(item, "criterion_detail", "")
    _ACCEPTANCE[n] = (title, "PASS" if rep.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        title, status, detail = _ACCEPTANCE[n]
        line = f"criterion {n:2d} {status}: {title}"
        terminalreporter.write_line(line + (f" ({detail})" if detail else ""))
