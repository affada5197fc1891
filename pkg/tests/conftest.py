import os

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", deadline=None, max_examples=500)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def synth():
    """A 2,000-change planted-signal corpus after preprocessing, plus its feature table."""
    from revue.features import extract_all
    from revue.history import build_index
    from revue.synthetic import SyntheticConfig, synthetic_corpus

    changes, accounts, report = synthetic_corpus(SyntheticConfig(seed=1))
    table = extract_all(changes, build_index(changes), accounts)
    return changes, accounts, table


_criteria: dict[str, list[str]] = {}
_measured: dict[str, list[str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion checked by this test")


def pytest_runtest_logreport(report):
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        props = report.user_properties
        for name, args in props:
            if name == "criterion":
                _criteria.setdefault(args, []).append(report.outcome)
                _measured.setdefault(args, []).extend(v for k, v in props if k == "measured")


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark:
            item.user_properties.append(("criterion", mark.args[0]))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcomes in _criteria.items():
        verdict = "PASS" if all(o == "passed" for o in outcomes) else "FAIL"
        terminalreporter.write_line(f"{verdict}  {name}")
        for value in _measured.get(name, []):
            terminalreporter.write_line(f"      {value}")
