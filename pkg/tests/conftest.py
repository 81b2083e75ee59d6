from collections import OrderedDict

# criterion number -> (passed, detail); filled by test_acceptance
VERDICTS: "OrderedDict[int, tuple[bool, str]]" = OrderedDict()


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance")
    for n in sorted(VERDICTS):
        ok, detail = VERDICTS[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
