"""Collects acceptance-criterion outcomes and prints one PASS/FAIL line per criterion."""

_CRITERIA: dict[int, dict] = {}


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            number, title = mark.args
            _CRITERIA.setdefault(number, {"title": title, "ok": True, "ran": False, "detail": []})
            item.user_properties.append(("criterion", number))


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    number = props.get("criterion")
    if number is None:
        return
    entry = _CRITERIA[number]
    if report.when == "call":
        entry["ran"] = True
        entry["detail"] += [v for k, v in report.user_properties if k == "detail"]
    if report.failed:
        entry["ok"] = False


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        e = _CRITERIA[number]
        status = "PASS" if e["ok"] and e["ran"] else ("FAIL" if e["ran"] or not e["ok"] else "NOT RUN")
        line = f"[{status}] {number:2d}. {e['title']}"
        if e["detail"]:
            line += "  (" + "; ".join(e["detail"]) + ")"
        terminalreporter.write_line(line)
