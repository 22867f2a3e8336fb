import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("fixed", derandomize=True, max_examples=25, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("fixed")


def random_stable(rng, nx, nu, ny, margin=0.1, strictly_proper=True):
    """Random stable realization with every pole left of ``-margin``."""
    from sadmjitter.lti import ss

    A = rng.standard_normal((nx, nx))
    A -= (np.linalg.eigvals(A).real.max() + margin + rng.uniform(0, 1)) * np.eye(nx)
    B = rng.standard_normal((nx, nu))
    C = rng.standard_normal((ny, nx))
    D = np.zeros((ny, nu)) if strictly_proper else rng.standard_normal((ny, nu))
    return ss(A, B, C, D)


@pytest.fixture(scope="session")
def params():
    from sadmjitter.assembly import SpacecraftParams

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return SpacecraftParams.from_config()


@pytest.fixture(scope="session")
def catalog():
    from sadmjitter.assembly import default_catalog

    return default_catalog()


ACCEPTANCE: dict[int, str] = {}


def record_acceptance(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} | {detail}"
    ACCEPTANCE[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
