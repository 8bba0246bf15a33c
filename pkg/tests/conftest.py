import math

import pytest

from scalematch.dataset import BoxRecord, DatasetAnnotations, ImageRecord

_acceptance_lines: list[str] = []


@pytest.fixture
def report_criterion():
    """Record one PASS/FAIL line per acceptance criterion (shown in the terminal summary)."""

    def record(label: str, passed: bool | None, detail: str) -> bool | None:
        status = "SKIP" if passed is None else "PASS" if passed else "FAIL"
        line = f"[{status}] {label}: {detail}"
        _acceptance_lines.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)


def make_dataset(sizes_per_image, width=1000.0, height=1000.0, name="t"):
    """Square person boxes of the given absolute sizes, one list per image."""
    images, boxes = [], []
    bid = 1
    for i, sizes in enumerate(sizes_per_image, start=1):
        images.append(ImageRecord(i, width, height, f"{i}.png"))
        for j, s in enumerate(sizes):
            boxes.append(BoxRecord(bid, i, 10.0 + j, 10.0 + j, float(s), float(s)))
            bid += 1
    return DatasetAnnotations(tuple(images), tuple(boxes), name)


@pytest.fixture
def tiny_dataset():
    return make_dataset([[4, 9], [16], []], name="tiny")


def isclose_or_nan(a, b, **kw):
    if isinstance(a, float) and isinstance(b, float) and math.isnan(a) and math.isnan(b):
        return True
    return math.isclose(a, b, **kw)
