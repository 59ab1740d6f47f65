import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from exactbpdn import DesignMatrix

settings.register_profile(
    "repo", deadline=None, derandomize=True, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")

I2 = np.eye(2)


def random_design(rng, m, n, unit=True):
    A = rng.standard_normal((m, n))
    if unit:
        A /= np.linalg.norm(A, axis=0)
    return DesignMatrix(A)


def random_instance(seed, m_range=(2, 8), extra=(0, 12), sparse_b=True):
    """Small random instance with ``b`` in the range of ``A``."""
    rng = np.random.default_rng(seed)
    m = int(rng.integers(m_range[0], m_range[1] + 1))
    n = m + int(rng.integers(extra[0], extra[1] + 1))
    A = random_design(rng, m, n)
    if sparse_b:
        k = int(rng.integers(1, m + 1))
        x = np.zeros(n)
        x[rng.choice(n, k, replace=False)] = rng.standard_normal(k) * 3
        b = A.matvec(x)
    else:
        b = rng.standard_normal(m)
    if not b.any():
        b[0] = 1.0
    return A, b


def soft_threshold_oracle(z, t):
    return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)


def kkt_ok(rep, b, tol=1e-9, tol_dual=1e-12):
    return rep.passes(b, tol=tol, tol_dual=tol_dual)


# ---------------------------------------------------------------- acceptance reporting

ACCEPTANCE_LINES = {}


@pytest.fixture
def record_criterion():
    def _record(number, ok, detail):
        ACCEPTANCE_LINES[number] = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
