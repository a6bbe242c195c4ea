import re

import pytest
import torch


@pytest.fixture(autouse=True)
def _single_thread():
    # keeps float reductions deterministic across machines with different core counts
    old = torch.get_num_threads()
    torch.set_num_threads(1)
    yield
    torch.set_num_threads(old)


@pytest.fixture
def fd_gradient():
    """Central finite differences of a scalar function, elementwise over x (float64)."""

    def _fd(f, x: torch.Tensor, eps: float = 1e-5) -> torch.Tensor:
        grad = torch.zeros_like(x)
        flat = x.reshape(-1)
        with torch.no_grad():
            for i in range(flat.numel()):
                orig = float(flat[i])
                flat[i] = orig + eps
                hi = float(f(x))
                flat[i] = orig - eps
                lo = float(f(x))
                flat[i] = orig
                grad.reshape(-1)[i] = (hi - lo) / (2 * eps)
        return grad

    return _fd


def relative_grad_error(g_ref: torch.Tensor, g_test: torch.Tensor) -> float:
    num = float(torch.linalg.vector_norm(g_ref - g_test))
    den = max(float(torch.linalg.vector_norm(g_ref)), float(torch.linalg.vector_norm(g_test)), 1e-12)
    return num / den


_CRITERION = re.compile(r"test_c(\d+)_(\w+)")

# informational findings recorded by acceptance tests, printed after the run
ACCEPTANCE_NOTES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion at the end of the run."""
    lines = {}
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py" not in nodeid:
                continue
            m = _CRITERION.search(nodeid)
            if not m:
                continue
            word = "PASS" if outcome == "passed" else "FAIL"
            lines[int(m.group(1))] = f"criterion {int(m.group(1)):02d} [{m.group(2)}]: {word}"
    if lines:
        terminalreporter.write_sep("-", "acceptance criteria")
        for num in sorted(lines):
            terminalreporter.write_line(lines[num])
        for note in ACCEPTANCE_NOTES:
            terminalreporter.write_line(note)
