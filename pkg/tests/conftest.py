import pytest

from morphquad.config import build_scenario, parse_config_text

BASE = """\
scenario.name={name}
seed=7
vehicle.mass_kg=0.980
vehicle.inertia_kgm2=0.008,0.008,0.014
vehicle.max_thrust_n=6.0
gust.std_mps={std}
gust.tau_s=2.0
"""


def make_config(phases: str, name: str = "custom", std: float = 0.0, extra: str = "", seed=None):
    text = BASE.format(name=name, std=std) + extra + phases
    return build_scenario(parse_config_text(text), seed=seed)


@pytest.fixture
def short_hover():
    phases = """\
phase.1.mode=HOLD
phase.1.duration_s=2
phase.1.position_m=0,0,1
phase.2.mode=HOLD
phase.2.duration_s=2
phase.2.position_m=0,0,1
"""
    return make_config(phases, name="hover", std=1.5)


# -- acceptance summary: one pass/fail line per criterion --------------------------

_criteria: dict[int, tuple[str, str, float]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n, title = mark.args
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        status = "PASS" if rep.outcome == "passed" else "FAIL"
        _criteria[n] = (title, status, rep.duration)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        title, status, duration = _criteria[n]
        terminalreporter.write_line(f"criterion {n}: {status}  {title}  ({duration:.2f} s)")
