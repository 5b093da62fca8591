"""Shared fixtures for the test suite."""

from __future__ import annotations

from dataclasses import dataclass

import pytest

from coassembly.catalog import Catalog, default_catalog
from coassembly.detection import ImageSpec, DEFAULT_SCENE_IMAGES


@dataclass
class SceneStub:
    """Minimal stand-in for a workcell scene snapshot."""

    view: frozenset[int] = frozenset()
    clock: float = 0.0
    images: tuple[ImageSpec, ...] = DEFAULT_SCENE_IMAGES


@pytest.fixture(scope="session")
def catalog() -> Catalog:
    return default_catalog()


@pytest.fixture()
def scene_factory():
    def build(view, clock: float = 0.0) -> SceneStub:
        return SceneStub(view=frozenset(view), clock=clock)

    return build


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion at the end of the run."""
    rows = []
    for outcome in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(outcome, []):
            if "test_acceptance" in getattr(report, "nodeid", ""):
                rows.append((report.nodeid.split("::")[-1], outcome == "passed"))
    if not rows:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name, passed in sorted(rows):
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} {name}")
