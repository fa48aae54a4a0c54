import pytest

_RESULTS: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    num, title = mark.args
    if rep.when == "setup":
        # session fixtures are timed with the first criterion that uses them
        _RESULTS[num] = (title, "PASS" if rep.passed else ("SKIP" if rep.skipped else "FAIL"), rep.duration)
    elif rep.when == "call":
        _RESULTS[num] = (title, "PASS" if rep.passed else ("SKIP" if rep.skipped else "FAIL"),
                         _RESULTS[num][2] + rep.duration)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_RESULTS):
        title, verdict, dur = _RESULTS[num]
        terminalreporter.write_line(f"criterion {num:2d}  {verdict}  {title}  ({dur:.1f} s)")


@pytest.fixture(scope="session")
def default_run():
    """The ratio experiment over the default corpus, computed once, with its
    wall time in seconds."""
    import time

    from steinx.harness.config import ExperimentConfig
    from steinx.harness.experiment import run_ratio_experiment

    t = time.perf_counter()
    report = run_ratio_experiment(ExperimentConfig())
    return report, time.perf_counter() - t
