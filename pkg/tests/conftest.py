from __future__ import annotations

import os
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from tamplan.missiongame import solve_game  # noqa: E402
from tamplan.scenario import bundled, load_scenario  # noqa: E402

JOBS = max(1, min(8, os.cpu_count() or 1))


@pytest.fixture(scope="session")
def warehouse():
    return load_scenario(bundled())


@pytest.fixture(scope="session")
def warehouse_graph(warehouse):
    return warehouse.synth_graph(jobs=JOBS)


@pytest.fixture(scope="session")
def warehouse_strategy(warehouse, warehouse_graph):
    st = solve_game(warehouse_graph, warehouse.condition)
    assert st is not None
    return st


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, 10):
        if n not in results:
            terminalreporter.write_line(f"criterion {n}: NOT RUN")
            continue
        ok, title, detail = results[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {title}: {detail}")
