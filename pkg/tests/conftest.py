"""Shared fixtures: bundled cases and cached solves."""

from __future__ import annotations

import functools
from importlib.resources import files

import pytest

from accep.caseio import load_case
from accep.reinforce import reinforce, screen_snapshots
from accep.scp import run_scp

FIXTURE_NAMES = ("case3", "case5", "case24", "weak3", "weak3_two", "blocking", "lowload")
KINDS = ("dc", "dc-lossy", "lpac", "decoupled")


def data_path(name: str):
    return files("accep") / "data" / f"{name}.json"


@functools.lru_cache(maxsize=None)
def case_of(name: str):
    return load_case(data_path(name))


@functools.lru_cache(maxsize=None)
def plan_of(name: str, kind: str):
    case, series = case_of(name)
    return run_scp(case, series, kind)


@functools.lru_cache(maxsize=None)
def failing_of(name: str, kind: str):
    case, series = case_of(name)
    return tuple(screen_snapshots(case, series, plan_of(name, kind)))


@functools.lru_cache(maxsize=None)
def reinforced_of(name: str, kind: str):
    case, series = case_of(name)
    return reinforce(case, series, plan_of(name, kind))


# -- acceptance summary --------------------------------------------------------

_CRITERIA: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    """Record the outcome of an acceptance criterion for the final summary."""

    class _Recorder:
        def __call__(self, number: int, passed: bool, detail: str) -> None:
            _CRITERIA[number] = (bool(passed), detail)
            print(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")

    return _Recorder()


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        ok, detail = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
