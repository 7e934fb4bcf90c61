import re
from pathlib import Path

import pytest

from padst.lexicon import default_lexicon
from padst.metrics import read_table

DATA = Path(__file__).parent / "data"


def filter_cases():
    cases = []
    for line in (DATA / "filter_cases.tsv").read_text(encoding="utf-8").splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        expected, score, text = line.split("\t")
        cases.append((expected, float(score), text))
    return cases


def reference_table():
    return read_table(DATA / "reference_results.tsv")


def denoising_rows():
    """The 22 noise-model rows of the transcribed table."""
    return [r for r in reference_table() if re.fullmatch(r"W[GP\d]*-A[GP\d]*-[DM]", r.name)]


@pytest.fixture(scope="session")
def lexicon():
    return default_lexicon()


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion that ran."""
    outcomes = {}
    for key in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(key, []):
            m = re.search(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)", getattr(rep, "nodeid", ""))
            if m:
                num = int(m.group(1))
                ok = outcomes.get(num, (True, ""))[0] and key == "passed"
                outcomes[num] = (ok, m.group(2).replace("_", " "))
    if not outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(outcomes):
        ok, name = outcomes[num]
        terminalreporter.write_line(f"criterion {num} ({name}): {'PASS' if ok else 'FAIL'}")
