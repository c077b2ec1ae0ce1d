import pytest

from si_lab.harness import Simulation, history_frame, history_stats, overlap_ratio, run, session_table
from si_lab.parser import dumps_history

from .helpers import history, small_config, txn


@pytest.mark.parametrize("deployment", ["wt", "rs", "sc"])
def test_same_seed_same_history(deployment):
    cfg = small_config(deployment, seed=4, txn_num=40)
    assert dumps_history(run(cfg)) == dumps_history(run(cfg))


def test_different_seeds_differ():
    first = run(small_config("rs", seed=1, txn_num=40))
    second = run(small_config("rs", seed=2, txn_num=40))
    assert dumps_history(first) != dumps_history(second)


def test_every_issued_transaction_is_recorded(engine_histories):
    for h in engine_histories.values():
        assert len(h.committed()) - 1 + len(h.aborted()) == 120
        assert [t.txn_id for t in h.transactions] == list(range(1, 121))


def test_single_client_standalone_never_aborts():
    h = run(small_config("wt", concurrency=1, txn_num=60))
    assert h.aborted() == []


def test_histories_carry_their_header(engine_histories):
    for deployment, h in engine_histories.items():
        assert h.deployment == deployment
        assert h.header["tool"] == "si-lab"
        assert h.header["seed"] == 1
    assert engine_histories["sc"].header["shardCount"] == 2


def test_standalone_metadata(wt_history):
    for t in wt_history.committed()[1:]:
        assert t.start_nanos is not None and t.commit_nanos is not None
        assert t.start_nanos <= t.commit_nanos
        assert t.wt_tid is not None
        if not t.is_read_only:
            assert t.wt_tid > 0


@pytest.mark.parametrize("deployment", ["rs", "sc"])
def test_timestamped_metadata(engine_histories, deployment):
    for t in engine_histories[deployment].committed()[1:]:
        assert t.read_ts is not None and t.commit_ts is not None
        assert t.read_ts <= t.commit_ts
        assert t.lamport is not None


def test_sharded_writers_record_their_shards(sc_history):
    writers = [t for t in sc_history.committed()[1:] if not t.is_read_only]
    assert writers
    assert all(t.shard_tids and set(t.shard_tids) <= {0, 1} for t in writers)


def test_sessions_run_one_transaction_at_a_time(engine_histories):
    for h in engine_histories.values():
        for chain in h.sessions().values():
            for earlier, later in zip(chain, chain[1:]):
                assert earlier.commit_nanos <= later.start_nanos


def test_sessions_spread_over_routers():
    sim = Simulation(small_config("sc", mongos_count=2))
    assert sim.session(1).mongos is sim.mongos[0]
    assert sim.session(2).mongos is sim.mongos[1]
    assert sim.session(3).mongos is sim.mongos[0]


def test_history_stats():
    h = history(txn(1, 1, "W(x,1)", 0, 10), txn(2, 2, "R(x,1) W(y,1)", 5, 20),
                txn(3, 1, "W(x,2)", 30, 40), txn(4, 2, "W(z,1)", 25, aborted=True), deployment="wt")
    stats = history_stats(h)
    assert stats["transactions"] == 4
    assert stats["committed"] == 3 and stats["aborted"] == 1
    assert stats["sessions"] == 2
    assert (stats["reads"], stats["writes"]) == (1, 3)
    assert stats["overlap_ratio"] == pytest.approx(2 / 3, abs=1e-4)
    assert list(history_frame(h).columns)[:3] == ["txn_id", "session", "status"]


def test_overlap_ratio_of_a_sequential_history():
    h = history(txn(1, 1, "W(x,1)", 0, 10), txn(2, 1, "W(x,2)", 20, 30))
    assert overlap_ratio(h) == 0.0
    assert overlap_ratio(history()) == 0.0


def test_session_table():
    h = history(txn(1, 1, "W(x,1)", 0, 10), txn(2, 1, "W(x,2)", 20, aborted=True), txn(3, 2, "R(x,1)", 15, 25))
    table = session_table(h).set_index("session")
    assert table.loc[1, "committed"] == 1 and table.loc[1, "aborted"] == 1
    assert table.loc[2, "committed"] == 1 and table.loc[2, "aborted"] == 0
    assert list(session_table(history()).columns) == ["session", "committed", "aborted"]
