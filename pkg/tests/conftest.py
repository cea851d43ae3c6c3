import os

import pytest
from hypothesis import HealthCheck, settings

from switchcert.config import bundled_config

settings.register_profile(
    "ci", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "ci"))

ACCEPTANCE: dict[str, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def cfg():
    return {name: bundled_config(name) for name in ("sec4", "ex31", "ex32", "ex33")}


@pytest.fixture(scope="session")
def sec4(cfg):
    c = cfg["sec4"]
    return c.build_model(), c.build_budget()


@pytest.fixture(scope="session")
def ex31(cfg):
    c = cfg["ex31"]
    return c.build_model(), c.build_budget()


@pytest.fixture(scope="session")
def ex32(cfg):
    c = cfg["ex32"]
    return c.build_model(), c.build_budget()


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k.split()[0])):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
