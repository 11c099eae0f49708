"""The twelve acceptance criteria, each at its stated tolerance and time budget.

Every test records a one-line PASS/FAIL summary that is printed at the end of
the run.  Criterion 9 is asserted as stated and is expected to fail on the
stated t-grid (see the small-grid diagnostic below).
"""
import pytest

from eqindex import acceptance as A

BY_NUMBER = {entry[0]: entry for entry in A.CRITERIA}


def _run(number, log):
    result = A.run_criterion(BY_NUMBER[number])
    line = result.line()
    log.append(line)
    print(line)
    return result


@pytest.mark.parametrize("number", [n for n in sorted(BY_NUMBER) if n != 9])
def test_criterion(number, acceptance_log):
    result = _run(number, acceptance_log)
    assert result.passed, result.line()


@pytest.mark.xfail(strict=True, reason="period-1 torus: t in {0.4..0.05} is outside the asymptotic regime")
def test_criterion_9_jlo_limit_stated_grid(acceptance_log):
    result = _run(9, acceptance_log)
    assert result.passed, result.line()


def test_jlo_limit_small_t_diagnostic():
    target = A.jlo_limit_value()
    _, ext = A._jlo_series(90, A.JLO_SMALL_GRID, 200)
    assert abs(ext - target) < 1e-4


def test_sign_flip_breaks_criterion_1(flipped_clifford_sign):
    ok, measured, *_ = A.criterion_1()
    assert not ok, measured


def test_criterion_lines_format():
    r = A.CriterionResult(3, "x", True, "m", "t", 0.5)
    assert r.line().startswith("[PASS] criterion  3 x")
    assert r.as_dict()["pass"] is True
