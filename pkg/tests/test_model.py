import pytest

from si_lab.errors import MalformedHistoryError
from si_lab.hlc import MIN_TS
from si_lab.model import (INITIAL_TXN_ID, commits_before, conflict, external_reads, final_writes, returns_before,
                          shard_for_key, txn_first_read, txn_last_write)

from .helpers import events, history, prefix_execution, txn


def test_last_write_per_key():
    assert txn_last_write(txn(1, 1, "W(x,1) W(x,2)"), "x") == 2
    assert txn_last_write(txn(1, 1, "R(x,0)"), "x") is None
    assert txn_last_write(txn(1, 1, "W(y,3) R(x,0) W(x,5)"), "x") == 5


def test_first_read_only_counts_reads_before_any_write():
    assert txn_first_read(txn(1, 1, "R(x,7) W(x,9)"), "x") == 7
    assert txn_first_read(txn(1, 1, "W(x,9) R(x,9)"), "x") is None
    assert txn_first_read(txn(1, 1, "R(y,1) R(x,2) R(x,3)"), "x") == 2


def test_external_reads_and_final_writes():
    t = txn(1, 1, "R(x,7) W(x,9) R(x,9) W(y,1) W(y,2) R(z,4)")
    assert external_reads(t) == {"x": 7, "z": 4}
    assert final_writes(t) == {"x": 9, "y": 2}


def test_conflict_is_a_shared_write_key():
    assert conflict(txn(1, 1, "W(x,1)"), txn(2, 2, "W(x,2)"))
    assert not conflict(txn(1, 1, "W(x,1)"), txn(2, 2, "R(x,1)"))
    assert conflict(txn(1, 1, "W(x,1) W(y,1)"), txn(2, 2, "W(y,2)"))


def test_initial_transaction_writes_every_key():
    h = history(txn(1, 1, "W(x,1)"), txn(2, 2, "R(y,0)"))
    t0 = h.initial
    assert t0.txn_id == INITIAL_TXN_ID
    assert final_writes(t0) == {"x": 0, "y": 0}
    assert t0.start_nanos == -1 and t0.commit_nanos == 0
    assert t0.commit_ts == MIN_TS
    assert [t.txn_id for t in h.committed()] == [0, 1, 2]


def test_history_rejects_malformed_transactions():
    with pytest.raises(MalformedHistoryError):
        history(txn(1, 1, "W(x,1)"), txn(1, 2, "W(x,2)"))
    with pytest.raises(MalformedHistoryError):
        history(txn(0, 1, "W(x,1)"))
    with pytest.raises(MalformedHistoryError):
        history(txn(1, 1, ""))
    with pytest.raises(MalformedHistoryError):
        history(txn(1, 1, "W(x,1)"), deployment="cassandra")


def test_aborted_transactions_stay_out_of_sessions():
    h = history(txn(1, 1, "W(x,1)"), txn(2, 1, "W(x,2)", aborted=True), txn(3, 1, "R(x,1)"))
    assert [t.txn_id for t in h.sessions()[1]] == [1, 3]
    assert [t.txn_id for t in h.aborted()] == [2]
    assert set(h.session_order().pairs()) == {(1, 3)}


def test_returns_before():
    h = history(txn(1, 1, "W(x,1)", start=1, commit=10), txn(2, 2, "R(x,1)", start=20, commit=30),
                txn(3, 3, "R(x,0)", start=5, commit=25))
    rb = returns_before(h)
    assert rb.contains(1, 2)
    assert not rb.contains(1, 3)
    assert not rb.contains(3, 2)
    assert rb.contains(0, 1) and rb.contains(0, 3)


def test_returns_before_is_transitive_on_a_chain():
    h = history(*(txn(i, i, f"W(x,{i})", start=i * 10, commit=i * 10 + 5) for i in range(1, 4)))
    assert set(returns_before(h).restrict([1, 2, 3]).pairs()) == {(1, 2), (2, 3), (1, 3)}


def test_returns_before_needs_instants():
    with pytest.raises(MalformedHistoryError):
        returns_before(history(txn(1, 1, "W(x,1)", start=1)))
    with pytest.raises(MalformedHistoryError):
        returns_before(history(txn(1, 1, "W(x,1)", start=9, commit=9)))


def test_commits_before():
    h = history(txn(1, 1, "W(x,1)", start=1, commit=10), txn(2, 2, "W(x,2)", start=2, commit=20))
    assert commits_before(h).contains(1, 2)
    assert not commits_before(h).contains(2, 1)


def test_replace_txn_and_truncate():
    h = history(txn(1, 1, "W(x,1)", start=1, commit=30), txn(2, 2, "W(y,1)", start=2, commit=20))
    edited = h.replace_txn(h.txn(1).replace(ops=events("W(x,5)")))
    assert final_writes(edited.txn(1)) == {"x": 5}
    assert final_writes(h.txn(1)) == {"x": 1}
    assert [t.txn_id for t in h.truncated(1).transactions] == [2]


def test_shard_routing_is_stable():
    assert shard_for_key("k0", 1) == 0
    assert shard_for_key("k7", 3) == shard_for_key("k7", 3)
    assert {shard_for_key(f"k{i}", 2) for i in range(20)} == {0, 1}


def test_prefix_execution_is_well_formed():
    h = history(txn(1, 1, "W(x,1)"), txn(2, 2, "R(x,1)"))
    assert prefix_execution(h, [1, 2]).is_well_formed()
