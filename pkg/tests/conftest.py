import os

import numpy as np
import pytest

from ncskorohod import Ball, Box, BoxMinusBall, HalfSpace, SphericalShell, level_set_catalog

PROBLEMS = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "problems")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def shell():
    return SphericalShell([0.0, 0.0], 1.0, 2.0)


@pytest.fixture
def halfline():
    return HalfSpace([-1.0], 0.0)


def builtin_domains():
    """One instance of every built-in domain kind."""
    return {
        "halfspace": HalfSpace([0.0, 1.0], 0.0),
        "box": Box([0.0, 0.0], [1.0, 2.0]),
        "ball": Ball([0.0, 0.0], 1.0),
        "ball3": Ball([0.0, 0.0, 0.0], 2.0),
        "shell": SphericalShell([0.0, 0.0], 1.0, 2.0),
        "shell3": SphericalShell([0.0, 0.0, 0.0], 1.0, 2.0),
        "box_minus_ball": BoxMinusBall([-2.0, -2.0], [2.0, 2.0], [0.0, 0.0], 0.5),
        "smoothed_disk": level_set_catalog("smoothed_disk"),
        "smoothed_annulus": level_set_catalog("smoothed_annulus"),
        "smoothed_box": level_set_catalog("smoothed_box"),
    }


def problem_path(name):
    return os.path.join(PROBLEMS, name)


# one line per acceptance criterion, printed after the run
ACCEPTANCE = {}


def record_acceptance(number, passed, detail):
    ACCEPTANCE[number] = (bool(passed), detail)
    print(f"criterion {number}: {'PASS' if passed else 'FAIL'} {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
