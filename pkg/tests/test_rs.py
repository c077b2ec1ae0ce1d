import pytest

from si_lab.errors import ProtocolError
from si_lab.harness import Simulation
from si_lab.hlc import MIN_TS, Timestamp, predecessor
from si_lab.rs import (EntryKind, OplogEntry, PullOplog, PushOplog, ReplicationDriver, RsPrimary, RsSecondary,
                       majority_frontier)
from si_lab.scheduler import Scheduler
from si_lab.wt import TID_ABORTED, UpdateResult

from .helpers import small_config


def finish(gen):
    """Run a handler that must not block"""
    try:
        command = next(gen)
    except StopIteration as stop:
        return stop.value
    raise AssertionError(f"handler blocked on {command!r}")


def _ts(physical):
    return Timestamp(physical, 0)


def test_majority_frontier():
    assert majority_frontier([_ts(12), _ts(10)], 3) == _ts(10)
    assert majority_frontier([_ts(12), _ts(10), _ts(8), _ts(6), _ts(4)], 5) == _ts(8)
    assert majority_frontier([], 3) == MIN_TS
    assert majority_frontier([_ts(12)], 3) == MIN_TS
    assert majority_frontier([_ts(12)], 1) == _ts(12)


@pytest.fixture
def scheduler():
    return Scheduler()


@pytest.fixture
def replica_set(scheduler):
    primary = RsPrimary(0, lambda: scheduler.now, 3)
    secondaries = [RsSecondary("s1"), RsSecondary("s2")]
    driver = ReplicationDriver(scheduler, primary, secondaries, "manual", lambda: 1, lambda: 1)
    return primary, secondaries, driver


def test_read_timestamp_is_the_gap_free_frontier():
    primary = RsPrimary(0, lambda: 100)
    primary.open_wt_session(1)
    primary.commit_ts_step(1)
    primary.commit_local_step(1)
    primary.open_wt_session(2)
    assert primary.meta[2].read_ts == primary.wt.all_committed() == primary.newest_ts()
    # second operation of the same transaction keeps the session
    wt_sid = primary.rs_wt_conns[2]
    primary.open_wt_session(2)
    assert primary.rs_wt_conns[2] == wt_sid


def test_back_to_back_transactions_get_fresh_storage_sessions():
    primary = RsPrimary(0, lambda: 100)
    primary.open_wt_session(1)
    first = primary.rs_wt_conns[1]
    primary.commit_ts_step(1)
    primary.commit_local_step(1)
    primary.open_wt_session(1)
    assert primary.rs_wt_conns[1] != first


def test_commit_gap_pins_the_frontier():
    primary = RsPrimary(0, lambda: 100)
    finish(primary.rs_update(1, "x", 1))
    cts = primary.commit_ts_step(1)
    assert primary.wt.all_committed() == predecessor(cts)
    primary.open_wt_session(2)
    assert primary.meta[2].read_ts < cts
    assert finish(primary.rs_read(2, "x")) == 0
    primary.commit_local_step(1)
    assert primary.wt.all_committed() == cts


def test_commit_appends_one_entry_per_transaction():
    primary = RsPrimary(0, lambda: 100)
    finish(primary.rs_update(1, "x", 1))
    finish(primary.rs_update(1, "x", 2))
    first = primary.commit_ts_step(1)
    primary.commit_local_step(1)
    primary.open_wt_session(2)
    second = primary.commit_ts_step(2)
    primary.commit_local_step(2)
    assert [e.kind for e in primary.oplog] == [EntryKind.OPS, EntryKind.NOOP]
    assert primary.oplog[0].ops == (("x", 1), ("x", 2))
    assert primary.oplog[0].ts == first < second


def test_update_conflict_rolls_back_and_forgets_the_transaction():
    primary = RsPrimary(0, lambda: 100)
    finish(primary.rs_update(1, "x", 1))
    finish(primary.rs_update(2, "y", 1))
    assert finish(primary.rs_update(2, "x", 2)) is UpdateResult.ROLLBACK
    assert not primary.has_txn(2)
    assert primary.txn_ops[1] == [("x", 1)]


def test_rollback_appends_nothing():
    primary = RsPrimary(0, lambda: 100)
    finish(primary.rs_update(1, "x", 1))
    finish(primary.rs_update(1, "y", 1))
    primary.rs_rollback(1)
    assert primary.oplog == []
    assert all(e.tid == TID_ABORTED for key in ("x", "y") for e in primary.wt.store[key])
    primary.open_wt_session(1)
    assert primary.txn_ops[1] == []
    assert primary.rs_rollback(5).tid == 0


def test_out_of_order_oplog_append_is_a_protocol_error():
    primary = RsPrimary(0, lambda: 100)
    primary.append(OplogEntry(_ts(5), EntryKind.NOOP))
    with pytest.raises(ProtocolError):
        primary.append(OplogEntry(_ts(5), EntryKind.NOOP))


def test_pull_is_a_gap_free_prefix_and_idempotent():
    primary = RsPrimary(0, lambda: 100)
    for session in (1, 2):
        primary.open_wt_session(session)
        primary.commit_ts_step(session)
        primary.commit_local_step(session)
    secondary = RsSecondary("s1")
    ack = secondary.apply(primary.handle_pull(PullOplog("s1", secondary.last_pulled)))
    assert [e.ts for e in secondary.oplog] == [e.ts for e in primary.oplog]
    assert ack.last_pulled == primary.newest_ts()
    again = primary.handle_pull(PullOplog("s1", secondary.last_pulled))
    assert again.entries == ()
    assert secondary.apply(again).last_pulled == ack.last_pulled


def test_pull_stops_below_a_pinned_commit():
    primary = RsPrimary(0, lambda: 100)
    primary.open_wt_session(1)
    primary.commit_ts_step(1)
    push = primary.handle_pull(PullOplog("s1", MIN_TS))
    assert push.entries == ()
    assert push.ct < primary.newest_ts()


def test_secondary_rejects_out_of_order_entries():
    secondary = RsSecondary("s1")
    push = PushOplog((OplogEntry(_ts(5), EntryKind.NOOP), OplogEntry(_ts(3), EntryKind.NOOP)), _ts(5))
    with pytest.raises(ProtocolError):
        secondary.apply(push)


def test_commit_waits_for_a_majority(scheduler, replica_set):
    primary, secondaries, driver = replica_set

    def client():
        yield from primary.rs_update(1, "x", 1)
        meta = yield from primary.rs_commit(1)
        return meta

    proc = scheduler.spawn(client(), "client")
    assert len(scheduler.run_until_quiescent()) == 1
    assert not proc.done
    driver.replicate("s1")
    scheduler.run()
    assert proc.done
    assert proc.result.commit_ts == primary.oplog[-1].ts
    assert primary.majority_committed(proc.result.commit_ts)
    assert secondaries[1].oplog == []


def test_read_only_commit_still_waits(scheduler, replica_set):
    primary, _, driver = replica_set

    def client():
        yield from primary.rs_read(1, "x")
        meta = yield from primary.rs_commit(1)
        return meta

    proc = scheduler.spawn(client(), "client")
    scheduler.run_until_quiescent()
    assert primary.oplog[-1].kind is EntryKind.NOOP
    assert not proc.done
    driver.replicate("s2")
    scheduler.run()
    assert proc.done


def test_single_member_set_commits_alone(scheduler):
    primary = RsPrimary(0, lambda: scheduler.now, replica_count=1)

    def client():
        yield from primary.rs_update(1, "x", 1)
        meta = yield from primary.rs_commit(1, commit_gap=5)
        return meta

    proc = scheduler.spawn(client(), "client")
    scheduler.run()
    assert proc.done


def test_eager_replication_commits_without_help(scheduler):
    primary = RsPrimary(0, lambda: scheduler.now, 3)
    ReplicationDriver(scheduler, primary, [RsSecondary("s1"), RsSecondary("s2")], "eager", lambda: 1, lambda: 1)

    def client(session, key):
        yield from primary.rs_update(session, key, 1)
        meta = yield from primary.rs_commit(session)
        return meta

    procs = [scheduler.spawn(client(s, f"k{s}"), f"client{s}") for s in (1, 2, 3)]
    scheduler.run()
    assert all(p.done for p in procs)
    assert primary.majority_trace == sorted(primary.majority_trace)


def test_unknown_replication_mode_and_secondary(scheduler):
    primary = RsPrimary(0, lambda: scheduler.now)
    with pytest.raises(ValueError):
        ReplicationDriver(scheduler, primary, [], "lazy", lambda: 1, lambda: 1)
    driver = ReplicationDriver(scheduler, primary, [RsSecondary("s1")], "manual", lambda: 1, lambda: 1)
    with pytest.raises(KeyError):
        driver.replicate("s9")


def test_frontier_trace_of_a_randomized_run():
    sim = Simulation(small_config("rs", seed=3, replication_mode="randomized"))
    history = sim.run()
    trace = sim.primaries[0].majority_trace
    assert trace == sorted(trace)
    assert len(set(trace)) == len(trace)
    committed = [t for t in history.committed() if t.txn_id != 0]
    assert committed
    for t in committed:
        if not t.is_read_only:
            assert t.read_ts < t.commit_ts
    commit_ts = [t.commit_ts for t in committed]
    assert len(set(commit_ts)) == len(commit_ts)
