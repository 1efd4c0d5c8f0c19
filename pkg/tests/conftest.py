import os

import pytest
from hypothesis import HealthCheck, settings

from scatterlab import config as cfgmod
from scatterlab.harness import run

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

_RUNS = {}


def preset_config(name, **overrides):
    d = {"preset": name}
    d.update(overrides)
    return cfgmod.from_dict(d)


@pytest.fixture(scope="session")
def preset_run(tmp_path_factory):
    """Run a named preset once per session and hand back ``(report, pass_result, out_dir)``."""

    def get(name):
        if name not in _RUNS:
            out = tmp_path_factory.mktemp(name)
            report, res = run(preset_config(name), "verify", out_dir=out)
            _RUNS[name] = (report, res, out)
        return _RUNS[name]

    return get


def rows_named(report, name, **match):
    rows = [r for r in report.rows if r.estimator == name]
    for k, v in match.items():
        rows = [r for r in rows if getattr(r, k) == v]
    return rows


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
