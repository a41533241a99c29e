ACCEPTANCE_MODULE = "test_acceptance.py"


def _acceptance_reports(terminalreporter):
    seen = {}
    for reports in terminalreporter.stats.values():
        for rep in reports:
            # stats also holds deselected items and warnings, which have no phase
            when = getattr(rep, "when", None)
            nodeid = getattr(rep, "nodeid", "")
            if when is None or ACCEPTANCE_MODULE not in nodeid:
                continue
            if when == "call" or rep.outcome in ("skipped", "failed") and when == "setup":
                seen[nodeid] = rep
    return [seen[k] for k in sorted(seen)]


def pytest_terminal_summary(terminalreporter):
    reports = _acceptance_reports(terminalreporter)
    if not reports:
        return
    terminalreporter.section("acceptance")
    for rep in reports:
        name = rep.nodeid.split("::")[-1]
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[rep.outcome]
        detail = dict(rep.user_properties).get("detail", "")
        if rep.outcome == "skipped" and isinstance(rep.longrepr, tuple):
            detail = rep.longrepr[2]
        terminalreporter.write_line(f"{status}  {name}  {detail}".rstrip())
