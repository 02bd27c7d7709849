import pytest

_VERDICTS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion reported in the summary")


class Verdict:
    def __init__(self, number, title):
        self.number = number
        self.title = title
        self.details = []
        self.ok = None

    def note(self, text):
        self.details.append(text)

    def check(self, ok, text):
        """Record one sub-check; the criterion passes only if every sub-check does."""
        self.details.append(f"{text} [{'ok' if ok else 'FAILED'}]")
        self.ok = bool(ok) if self.ok is None else self.ok and bool(ok)
        return ok

    def line(self):
        status = "PASS" if self.ok else "FAIL"
        return f"criterion {self.number} {status}: {self.title}; " + "; ".join(self.details)


@pytest.fixture
def verdict(request):
    mark = request.node.get_closest_marker("criterion")
    v = Verdict(*mark.args)
    yield v
    rep = getattr(request.node, "rep_call", None)
    if v.ok is None or rep is None or rep.failed:
        v.ok = False
        if rep is not None and rep.failed:
            v.note("test raised: " + rep.longrepr.reprcrash.message.splitlines()[0]
                   if hasattr(rep.longrepr, "reprcrash") else "test raised")
        else:
            v.note("did not complete")
    _VERDICTS[v.number] = v


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_VERDICTS):
        terminalreporter.write_line(_VERDICTS[n].line())
