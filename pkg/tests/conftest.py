from tests import acceptance_log


def pytest_terminal_summary(terminalreporter):
    if not acceptance_log.EXPECTED:
        return
    tr = terminalreporter
    tr.section(f"acceptance criteria ({acceptance_log.tier()} tier)")
    for crit, title in acceptance_log.EXPECTED.items():
        if crit in acceptance_log.RESULTS:
            ok, detail = acceptance_log.RESULTS[crit]
            tr.write_line(f"{'PASS' if ok else 'FAIL'} criterion {crit} {title}: {detail}")
        else:
            tr.write_line(f"NOT RUN criterion {crit} {title}: deselected or errored before a verdict")
