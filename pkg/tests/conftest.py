import os
import sys
from dataclasses import replace

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from bundle_spectra.bundle import flat_bundle_from_representation, landau_line_bundle  # noqa: E402
from bundle_spectra.geometry import build_circle, build_flat_torus  # noqa: E402
from bundle_spectra.harness import compare_prepared, prepare  # noqa: E402

from oracles import rotation  # noqa: E402

# Landau and flat-torus family: L = 1.375 keeps the 10 eps frame balls from wrapping
LANDAU_L = 1.375
LANDAU_N = 88
LANDAU_EPS = 1 / 16
CIRCLE_PHIS = tuple(np.round(np.linspace(0.1, 3.0, 10), 10))

_OUTCOMES: dict = {}


def pytest_runtest_logreport(report):
    marks = getattr(report, "_criteria", None)
    if not marks:
        return
    for key in marks:
        ok = _OUTCOMES.setdefault(key, {"passed": 0, "failed": 0, "xfail": 0, "skipped": 0})
        if report.when == "call":
            if hasattr(report, "wasxfail"):
                ok["xfail"] += 1
            elif report.passed:
                ok["passed"] += 1
            elif report.failed:
                ok["failed"] += 1
            elif report.skipped:
                ok["skipped"] += 1
        elif report.failed:
            ok["failed"] += 1


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    keys = [str(m.args[0]) for m in item.iter_markers("criterion")]
    if item.get_closest_marker("stretch"):
        keys.append("sphere (non-blocking)")
    rep._criteria = keys


def _sort_key(k):
    return (0, int(k)) if k.isdigit() else (1, k)


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for key in sorted(_OUTCOMES, key=_sort_key):
        o = _OUTCOMES[key]
        if o["failed"]:
            status = "FAIL"
        elif o["xfail"] and not o["passed"]:
            status = "MISS (xfail)"
        elif o["passed"]:
            status = "PASS"
        else:
            status = "SKIPPED"
        label = f"criterion {key}" if key.isdigit() else key
        tr.write_line(f"{label}: {status} ({o['passed']} passed, {o['failed']} failed)")


def _slim(report):
    return replace(report, conn=None, potential=None)


@pytest.fixture(scope="session")
def landau_mesh():
    return build_flat_torus(LANDAU_L, LANDAU_L, LANDAU_N, LANDAU_N)


@pytest.fixture(scope="session")
def landau_prep(landau_mesh):
    b = landau_line_bundle(landau_mesh, 1)
    return prepare(landau_mesh, b, LANDAU_EPS, seed=0, enforce_hypotheses=False)


@pytest.fixture(scope="session")
def landau_reports(landau_prep):
    """Seed-0 Landau q = 1 reports with constants, keyed by mode."""
    return {mode: compare_prepared(landau_prep, mode, constants=True) for mode in ("harmonic", "rank_one")}


@pytest.fixture(scope="session")
def flat_torus_prep(landau_mesh):
    b = flat_bundle_from_representation(landau_mesh, [rotation(0.3), rotation(0.7)])
    return prepare(landau_mesh, b, LANDAU_EPS, seed=0, enforce_hypotheses=False)


@pytest.fixture(scope="session")
def flat_torus_report(flat_torus_prep):
    return compare_prepared(flat_torus_prep, "harmonic", constants=True)


@pytest.fixture(scope="session")
def circle_mesh():
    return build_circle(1.0, 400)


@pytest.fixture(scope="session")
def circle_preps(circle_mesh):
    out = {}
    for phi in CIRCLE_PHIS:
        b = flat_bundle_from_representation(circle_mesh, [rotation(phi)])
        out[phi] = prepare(circle_mesh, b, 0.05, K=10)
    return out


@pytest.fixture(scope="session")
def circle_reports(circle_preps):
    return {phi: compare_prepared(p, "harmonic", constants=True) for phi, p in circle_preps.items()}
