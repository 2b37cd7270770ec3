import pytest
import torch

# gradient and oracle tolerances assume double precision
torch.set_default_dtype(torch.float64)


@pytest.fixture
def gen():
    return torch.Generator().manual_seed(0)


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion, in criterion order."""
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            props = dict(getattr(rep, "user_properties", ()))
            if "criterion" in props and rep.when in ("call", "setup"):
                lines.append((props["criterion"], "PASS" if rep.passed else "FAIL"))
    if lines:
        terminalreporter.section("acceptance criteria")
        for text, status in sorted(lines):
            terminalreporter.write_line(f"[{status}] criterion {text}")
