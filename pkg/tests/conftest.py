import pytest

_LOG = pytest.StashKey[dict]()


@pytest.fixture
def acceptance_log(request):
    return request.config.stash.setdefault(_LOG, {})


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    log = config.stash.get(_LOG, None)
    if not log:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(log):
        terminalreporter.write_line(log[k])
