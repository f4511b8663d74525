"""Shared fixtures and the acceptance summary printed after the run."""

from collections import OrderedDict

import numpy as np
import pytest

from invmeshless.exact_solutions import PRESETS
from invmeshless.geometry import build_perturbed_grid

# criterion id -> list of (check, passed, detail)
_ACCEPTANCE = OrderedDict()


class AcceptanceLog:
    def record(self, criterion, check, passed, detail=""):
        _ACCEPTANCE.setdefault(criterion, []).append((check, bool(passed), detail))
        line = f"[acceptance {criterion}] {'PASS' if passed else 'FAIL'} {check}"
        print(line + (f": {detail}" if detail else ""))
        return passed


@pytest.fixture(scope="session")
def acceptance():
    return AcceptanceLog()


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for crit, checks in _ACCEPTANCE.items():
        ok = all(p for _, p, _ in checks)
        tr.write_line(f"criterion {crit}: {'PASS' if ok else 'FAIL'}")
        for check, passed, detail in checks:
            tr.write_line(f"    {'ok  ' if passed else 'FAIL'} {check}" + (f" ({detail})" if detail else ""))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def default_nodes():
    return build_perturbed_grid(1.0, 2.0, 40, 0.1, seed=3)


@pytest.fixture(params=sorted(PRESETS))
def preset_solution(request):
    return PRESETS[request.param]
