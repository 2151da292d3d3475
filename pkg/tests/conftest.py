import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("thorough", max_examples=500, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# criterion number -> (passed, one-line detail); filled by test_acceptance.py
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_q_points(rng, n, interior=True):
    """Uniform samples of Q by rejection from its bounding box."""
    out = []
    from mosaic_evo.stats import q_margins

    while len(out) < n:
        x, y = rng.uniform(1 / 6, 1 / 2), rng.uniform(1 / 6, 1 / 3)
        m = q_margins(x, y)
        if min(m) > (1e-9 if interior else -1e-15):
            out.append((x, y))
    return np.array(out)
