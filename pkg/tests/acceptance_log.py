"""Verdicts collected by the acceptance tests and printed at the end of the run."""
import os

EXPECTED = {}
RESULTS = {}


def tier() -> str:
    return "full" if os.environ.get("SNCURE_FULL") == "1" else "ci"


def pick(ci, full):
    return full if tier() == "full" else ci


def record(crit: int, ok: bool, detail: str):
    RESULTS[crit] = (bool(ok), detail)
    assert ok, f"criterion {crit}: {detail}"
