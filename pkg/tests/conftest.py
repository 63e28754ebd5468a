"""Shared fixtures and the acceptance summary printed at the end of a run."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from tamed_mhd import Grid
from tamed_mhd.spectral import SpectralState, random_solenoidal

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"

_ACCEPTANCE: dict[str, tuple[str, str, str]] = {}


def pytest_configure(config: pytest.Config) -> None:
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion this test decides")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item: pytest.Item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call":
        return
    number, title = marker.args
    detail = "; ".join(f"{k} {v}" for k, v in item.user_properties)
    _ACCEPTANCE[f"{number:02d}"] = (title, "PASS" if report.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter) -> None:
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_ACCEPTANCE):
        title, status, detail = _ACCEPTANCE[key]
        line = f"[{status}] {key} {title}"
        if detail:
            line += f": {detail}"
        terminalreporter.write_line(line)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def grid8() -> Grid:
    return Grid(8)


@pytest.fixture(scope="session")
def grid16() -> Grid:
    return Grid(16)


def random_state(grid: Grid, rng: np.random.Generator, amplitude: float = 1.0, k_max: float = 3) -> SpectralState:
    return SpectralState(grid, random_solenoidal(grid, rng, k_max, amplitude))
