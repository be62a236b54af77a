import numpy as np
import pytest

from powerpool.matcore import rng_stream

# acceptance tests append (number, label, status, detail) here; the
# terminal-summary hook prints one line per criterion at the end of a run
ACCEPTANCE_RESULTS = []


def record_criterion(number, label, ok, detail=""):
    status = "PASS" if ok else "FAIL"
    ACCEPTANCE_RESULTS.append((number, label, status, detail))
    assert ok, f"criterion {number} ({label}): {detail}"


def record_warn(number, label, detail):
    ACCEPTANCE_RESULTS.append((number, label, "WARN", detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for number, label, status, detail in sorted(ACCEPTANCE_RESULTS):
        line = f"[{status}] criterion {number}: {label}"
        if detail:
            line += f" ({detail})"
        terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return rng_stream(0)


def spd(d, seed, normalize=True):
    """Random SPD test matrix from feature products; comfortably conditioned."""
    r = rng_stream(seed)
    phi = r.standard_normal((d, 3 * d))
    m = phi @ phi.T / (3 * d) + 0.05 * np.eye(d)
    if normalize:
        m = m / np.trace(m)
    return 0.5 * (m + m.T)
