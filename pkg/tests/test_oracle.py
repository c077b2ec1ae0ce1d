import pytest

from si_lab.analyzer import check_deployment
from si_lab.axioms import Model, check_model
from si_lab.errors import OracleSizeError
from si_lab.oracle import brute_force_satisfies

from .helpers import history, txn


def test_single_session_read_your_writes():
    h = history(txn(1, 1, "W(x,1)"), txn(2, 1, "R(x,1)"))
    result = brute_force_satisfies(h, Model.SESSION_SI)
    assert result.satisfied
    assert result.ar == [0, 1, 2]
    assert result.vis.contains(1, 2)


def test_witness_passes_the_checker():
    h = history(txn(1, 1, "W(x,1)"), txn(2, 2, "R(x,1) W(y,2)"), txn(3, 3, "R(y,2) R(x,1)"))
    result = brute_force_satisfies(h, Model.SI)
    assert result
    assert check_model(result.execution(h), Model.SI).verdict


def test_stale_session_read_is_not_session_si():
    h = history(txn(1, 1, "W(x,1)"), txn(2, 1, "R(x,0)"))
    assert brute_force_satisfies(h, Model.SI)
    assert not brute_force_satisfies(h, Model.SESSION_SI)


def test_lost_update_is_not_si():
    h = history(txn(1, 1, "R(x,0) W(x,1)"), txn(2, 2, "R(x,0) W(x,2)"))
    assert not brute_force_satisfies(h, Model.SI)


def test_write_skew_is_si():
    h = history(txn(1, 1, "R(x,0) R(y,0) W(x,1)"), txn(2, 2, "R(x,0) R(y,0) W(y,1)"))
    assert brute_force_satisfies(h, Model.SI)


def test_long_fork_is_not_si():
    h = history(txn(1, 1, "W(x,1)"), txn(2, 2, "W(y,1)"),
                txn(3, 3, "R(x,1) R(y,0)"), txn(4, 4, "R(x,0) R(y,1)"))
    assert not brute_force_satisfies(h, Model.SI)


def test_int_failure_short_circuits():
    result = brute_force_satisfies(history(txn(1, 1, "W(x,1) R(x,2)")), Model.SI)
    assert not result.satisfied
    assert result.orders_explored == 0
    assert "INT" in result.notes[0]


def test_no_witness_for_unsatisfied_result():
    h = history(txn(1, 1, "W(x,1)"), txn(2, 1, "R(x,0)"))
    result = brute_force_satisfies(h, Model.SESSION_SI)
    with pytest.raises(ValueError):
        result.execution(h)


def test_real_time_models():
    # T1 returns before T2 starts, yet T2 misses its write
    h = history(txn(1, 1, "W(x,1)", start=1, commit=10), txn(2, 2, "R(x,0)", start=20, commit=30))
    assert brute_force_satisfies(h, Model.SI)
    assert not brute_force_satisfies(h, Model.REALTIME_SI)
    overlapping = history(txn(1, 1, "W(x,1)", start=1, commit=25), txn(2, 2, "R(x,1)", start=20, commit=30))
    assert not brute_force_satisfies(overlapping, Model.GSI)
    assert brute_force_satisfies(overlapping, Model.REALTIME_SI)


def test_cap():
    h = history(*(txn(i, i, f"W(k{i},1)") for i in range(1, 5)))
    with pytest.raises(OracleSizeError):
        brute_force_satisfies(h, Model.SI, cap=3)
    assert brute_force_satisfies(h, Model.SI, cap=4)


def test_aborted_transactions_are_ignored():
    h = history(txn(1, 1, "W(x,1)"), txn(2, 2, "W(x,5)", aborted=True), txn(3, 3, "R(x,1)"))
    assert brute_force_satisfies(h, Model.SI, cap=2)


def test_si_but_not_session_si_fixture(si_not_session_si):
    assert brute_force_satisfies(si_not_session_si, Model.SI)
    assert not brute_force_satisfies(si_not_session_si, Model.SESSION_SI)


def test_realtime_but_not_strong_si_fixture(realtime_not_strong_si):
    assert brute_force_satisfies(realtime_not_strong_si, Model.REALTIME_SI)
    assert not brute_force_satisfies(realtime_not_strong_si, Model.STRONG_SI)


def test_oracle_agrees_with_the_white_box_check(wt_history):
    h = wt_history.truncated(5)
    assert check_deployment(h).verdict
    assert brute_force_satisfies(h, Model.STRONG_SI)
