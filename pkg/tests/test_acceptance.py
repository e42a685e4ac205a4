"""
The ten acceptance criteria at full scale.

Each test prints one PASS/FAIL line with the measured values; the lines are
repeated in the terminal summary. Run directly with ``python
tests/test_acceptance.py`` to get only the lines.
"""
import json
import sys

import pytest

from spherefield.verification import CRITERIA

LINES = []


def _report(r):
    line = f"{r.line()} measured={json.dumps(r.measured, default=str)}"
    LINES.append(line)
    print(line)
    return line


@pytest.mark.acceptance
@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number):
    r = CRITERIA[number](scale="full")
    line = _report(r)
    assert r.passed, line


if __name__ == "__main__":
    failed = 0
    for n in sorted(CRITERIA):
        res = CRITERIA[n](scale="full")
        print(res.line(), flush=True)
        failed += not res.passed
    sys.exit(1 if failed else 0)
