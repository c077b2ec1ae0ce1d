# si_lab/harness.py
"""
Deployment wiring and simulated clients.

``Simulation`` builds a standalone engine, a replica set or a sharded cluster
on one scheduler, and ``ClientSession`` subclasses drive one session's
transactions against it, recording what the client observed together with the
protocol metadata the white-box checker needs. ``run(cfg)`` spawns
``concurrency`` clients that share one transaction counter.
"""
import itertools
import logging
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from .hlc import ClusterTime, Timestamp
from .model import History, Op, OpKind, Transaction, TxnStatus
from .parser import make_header
from .rs import ReplicationDriver, RsPrimary, RsSecondary
from .sc import Mongos, ShardPrimary
from .scheduler import Delay, Scheduler
from .workload import PlannedOp, SimConfig, WorkloadGenerator
from .wt import UpdateResult, WtEngine

logger = logging.getLogger(__name__)


class Simulation:
    """
    One deployment on one scheduler

    Args:
        cfg: Run parameters
        replication_mode: Overrides cfg.replication_mode ("manual" for directed scripts)
        fixed_delays: Use 1ns for every network hop, service time and commit gap (directed scripts)
    """

    def __init__(self, cfg: SimConfig, replication_mode: Optional[str] = None, fixed_delays: bool = False):
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed)
        self.scheduler = Scheduler()
        self.fixed_delays = fixed_delays
        self.replication_mode = replication_mode or cfg.replication_mode
        self.transactions: List[Transaction] = []
        self._txn_ids = itertools.count(1)
        self.issued = 0
        self.engine: Optional[WtEngine] = None
        self.primaries: List[RsPrimary] = []
        self.drivers: List[ReplicationDriver] = []
        self.mongos: List[Mongos] = []
        self._build()

    # randomness

    def draw(self, bounds) -> int:
        if self.fixed_delays:
            return 1
        lo, hi = bounds
        return int(self.rng.integers(lo, hi + 1))

    def network(self) -> int:
        return self.draw(self.cfg.network_delay_ns)

    def service(self) -> int:
        return self.draw(self.cfg.service_time_ns)

    def think(self) -> int:
        return 0 if self.fixed_delays else self.draw(self.cfg.think_time_ns)

    def commit_gap(self) -> int:
        return 0 if self.fixed_delays else self.draw(self.cfg.commit_gap_ns)

    def _wall(self):
        skew = 0 if self.fixed_delays else int(self.rng.integers(0, self.cfg.clock_skew_ns + 1))
        return lambda: self.scheduler.now + skew

    # wiring

    def _replica_set(self, primary: RsPrimary, prefix: str) -> None:
        secondaries = [RsSecondary(f"{prefix}s{i}") for i in range(1, self.cfg.replica_count)]
        driver = ReplicationDriver(self.scheduler, primary, secondaries, self.replication_mode,
                                   self.network, lambda: self.draw(self.cfg.replication_delay_ns))
        self.primaries.append(primary)
        self.drivers.append(driver)

    def _build(self) -> None:
        deployment = self.cfg.deployment
        if deployment == "wt":
            self.engine = WtEngine("wt")
        elif deployment == "rs":
            self._replica_set(RsPrimary(0, self._wall(), self.cfg.replica_count, name="rs"), "")
        else:
            for shard in range(self.cfg.shard_count):
                primary = ShardPrimary(shard, self.scheduler, self.network, shard, self._wall(),
                                       self.cfg.replica_count)
                self._replica_set(primary, f"shard{shard}/")
            self.mongos = [Mongos(i, self.scheduler, self.primaries, self.network, self.commit_gap)
                           for i in range(self.cfg.mongos_count)]
        logger.debug("built %s deployment (%s replication)", deployment, self.replication_mode)

    def session(self, session_id: int) -> "ClientSession":
        cls = {"wt": WtClientSession, "rs": RsClientSession, "sc": ScClientSession}[self.cfg.deployment]
        return cls(self, session_id)

    # transactions

    def next_txn_id(self) -> int:
        self.issued += 1
        return next(self._txn_ids)

    def record(self, txn: Transaction) -> None:
        self.transactions.append(txn)
        if not txn.committed:
            logger.debug("T%d aborted", txn.txn_id)

    def history(self) -> History:
        extra: Dict[str, Any] = {}
        if self.cfg.deployment == "sc":
            extra["shardCount"] = self.cfg.shard_count
        header = make_header(self.cfg.deployment, self.cfg.seed, self.cfg.to_dict(), **extra)
        ordered = sorted(self.transactions, key=lambda t: t.txn_id)
        return History(ordered, deployment=self.cfg.deployment, header=header)

    # running

    def _client(self, session: "ClientSession"):
        while self.issued < self.cfg.txn_num:
            txn_id = self.next_txn_id()
            planned = self.workload.generate_txn()
            yield Delay(self.think())
            yield from session.execute(txn_id, planned)

    def run(self) -> History:
        self.workload = WorkloadGenerator(self.rng, self.cfg)
        for session_id in range(1, self.cfg.concurrency + 1):
            self.scheduler.spawn(self._client(self.session(session_id)), f"client{session_id}")
        self.scheduler.run()
        history = self.history()
        logger.info("%s run seed=%d: %d committed, %d aborted", self.cfg.deployment, self.cfg.seed,
                    len(history.committed()) - 1, len(history.aborted()))
        return history


class ClientSession:
    """One client session; at most one transaction in flight"""

    def __init__(self, sim: Simulation, session_id: int):
        self.sim = sim
        self.session_id = session_id
        self.txn_id: Optional[int] = None
        self.ops: List[Op] = []
        self.start_nanos: Optional[int] = None

    @property
    def scheduler(self) -> Scheduler:
        return self.sim.scheduler

    @property
    def active(self) -> bool:
        return self.txn_id is not None

    def begin(self, txn_id: int) -> None:
        self.txn_id = txn_id
        self.ops = []
        self.start_nanos = None

    def _finish(self, status: TxnStatus, **fields) -> Transaction:
        txn = Transaction(txn_id=self.txn_id, session_id=self.session_id, ops=tuple(self.ops),
                          status=status, start_nanos=self.start_nanos, **fields)
        self.sim.record(txn)
        self.txn_id = None
        return txn

    def abort_record(self) -> Transaction:
        return self._finish(TxnStatus.ABORTED)

    def execute(self, txn_id: int, planned: List[PlannedOp]):
        """Run one planned transaction to commit or abort"""
        self.begin(txn_id)
        for op in planned:
            if op.kind is OpKind.READ:
                yield from self.read(op.key)
            else:
                ok = yield from self.update(op.key, op.value)
                if not ok:
                    return self.abort_record()
        txn = yield from self.commit()
        return txn

    def read(self, key: str):
        raise NotImplementedError

    def update(self, key: str, value: int):
        raise NotImplementedError

    def commit(self):
        raise NotImplementedError

    def rollback(self):
        raise NotImplementedError


class WtClientSession(ClientSession):
    """Client embedded next to the engine: each call costs one service time"""

    def __init__(self, sim: Simulation, session_id: int):
        super().__init__(sim, session_id)
        self.engine = sim.engine
        self.wt_sid = self.engine.open_session()

    def _touch(self) -> None:
        if self.start_nanos is None:
            self.engine.start(self.wt_sid)
            self.start_nanos = self.scheduler.now

    def read(self, key: str):
        yield Delay(self.sim.service())
        self._touch()
        value, _ = self.engine.read(self.wt_sid, key)
        self.ops.append(Op.read(key, value))
        return value

    def update(self, key: str, value: int):
        yield Delay(self.sim.service())
        self._touch()
        if self.engine.update(self.wt_sid, key, value) is UpdateResult.ROLLBACK:
            return False
        self.ops.append(Op.write(key, value))
        return True

    def commit(self):
        yield Delay(self.sim.service())
        tid = self.engine.txn(self.wt_sid).tid
        self.engine.commit(self.wt_sid)
        commit_nanos = self.scheduler.now
        yield Delay(self.sim.service())
        return self._finish(TxnStatus.COMMITTED, commit_nanos=commit_nanos, wt_tid=tid,
                            lamport=self.scheduler.seq)

    def rollback(self):
        yield Delay(self.sim.service())
        if self.engine.is_active(self.wt_sid):
            self.engine.rollback(self.wt_sid)
        return self.abort_record()


class RsClientSession(ClientSession):
    """Client of the replica-set primary; every request and reply crosses the network"""

    def __init__(self, sim: Simulation, session_id: int):
        super().__init__(sim, session_id)
        self.primary = sim.primaries[0]
        self.commit_ts: Optional[Timestamp] = None
        self.local_meta = None

    def begin(self, txn_id: int) -> None:
        super().begin(txn_id)
        self.commit_ts = None
        self.local_meta = None

    def _touch(self) -> None:
        if self.start_nanos is None:
            self.start_nanos = self.scheduler.now

    def read(self, key: str):
        self._touch()
        yield Delay(self.sim.network())
        value = yield from self.primary.rs_read(self.session_id, key)
        yield Delay(self.sim.network())
        self.ops.append(Op.read(key, value))
        return value

    def update(self, key: str, value: int):
        self._touch()
        yield Delay(self.sim.network())
        result = yield from self.primary.rs_update(self.session_id, key, value)
        yield Delay(self.sim.network())
        if result is UpdateResult.ROLLBACK:
            return False
        self.ops.append(Op.write(key, value))
        return True

    def commit(self):
        yield Delay(self.sim.network())
        meta = yield from self.primary.rs_commit(self.session_id, self.sim.commit_gap())
        commit_nanos, lamport = self.scheduler.now, self.scheduler.seq
        yield Delay(self.sim.network())
        return self._committed(meta, commit_nanos, lamport)

    def _committed(self, meta, commit_nanos: int, lamport: int) -> Transaction:
        # commit instant is where the primary acknowledges, before the reply crosses the network
        return self._finish(TxnStatus.COMMITTED, commit_nanos=commit_nanos, read_ts=meta.read_ts,
                            commit_ts=meta.commit_ts, wt_tid=meta.tid, lamport=lamport)

    # commit split into its steps, for directed scripts

    def commit_ts_step(self):
        yield Delay(self.sim.network())
        self.commit_ts = self.primary.commit_ts_step(self.session_id)

    def commit_local_step(self):
        yield Delay(self.sim.network())
        self.local_meta = self.primary.commit_local_step(self.session_id)

    def commit_wait_step(self):
        yield Delay(self.sim.network())
        yield from self.primary.wait_majority(self.commit_ts, f"commit of session {self.session_id}")
        commit_nanos, lamport = self.scheduler.now, self.scheduler.seq
        yield Delay(self.sim.network())
        return self._committed(self.local_meta, commit_nanos, lamport)

    def rollback(self):
        yield Delay(self.sim.network())
        self.primary.rs_rollback(self.session_id)
        yield Delay(self.sim.network())
        return self.abort_record()


class ScClientSession(ClientSession):
    """Client of a mongos router; carries its own cluster time across transactions"""

    def __init__(self, sim: Simulation, session_id: int):
        super().__init__(sim, session_id)
        self.mongos = sim.mongos[(session_id - 1) % len(sim.mongos)]
        self.clock = ClusterTime()
        self.read_ts: Optional[Timestamp] = None

    def _request(self):
        if self.start_nanos is None:
            self.start_nanos = self.scheduler.now
            yield Delay(self.sim.network())
            self.read_ts = self.mongos.begin(self.session_id, self.clock.ct)
        else:
            yield Delay(self.sim.network())

    def _reply(self):
        yield Delay(self.sim.network())
        self.clock.merge(self.mongos.ct)

    def read(self, key: str):
        yield from self._request()
        value = yield from self.mongos.read(self.session_id, key)
        yield from self._reply()
        self.ops.append(Op.read(key, value))
        return value

    def update(self, key: str, value: int):
        yield from self._request()
        result = yield from self.mongos.update(self.session_id, key, value)
        yield from self._reply()
        if result is UpdateResult.ROLLBACK:
            return False
        self.ops.append(Op.write(key, value))
        return True

    def commit(self):
        yield from self._request()
        result = yield from self.mongos.commit(self.session_id)
        yield from self._reply()
        lamport = result.lamport if result.lamport is not None else self.scheduler.seq
        return self._finish(TxnStatus.COMMITTED, commit_nanos=self.scheduler.now, read_ts=result.read_ts,
                            commit_ts=result.commit_ts, lamport=lamport, shard_tids=result.shard_tids)

    def rollback(self):
        yield from self._request()
        yield from self.mongos.rollback(self.session_id)
        yield from self._reply()
        return self.abort_record()


def run(cfg: SimConfig) -> History:
    """Simulate cfg.txn_num transactions on the configured deployment"""
    return Simulation(cfg).run()


# statistics

def history_frame(h: History) -> pd.DataFrame:
    rows = []
    for txn in h.transactions:
        rows.append({
            "txn_id": txn.txn_id,
            "session": txn.session_id,
            "status": txn.status.value,
            "reads": sum(1 for op in txn.ops if op.is_read),
            "writes": sum(1 for op in txn.ops if op.is_write),
            "start": txn.start_nanos,
            "commit": txn.commit_nanos,
        })
    return pd.DataFrame(rows, columns=["txn_id", "session", "status", "reads", "writes", "start", "commit"])


def overlap_ratio(h: History) -> float:
    """Fraction of committed transactions whose real-time interval overlaps another's"""
    df = history_frame(h)
    df = df[df["status"] == "committed"].dropna(subset=["start", "commit"])
    if len(df) < 2:
        return 0.0
    df = df.sort_values("start").reset_index(drop=True)
    earlier_commit = df["commit"].cummax().shift(1)
    next_start = df["start"].shift(-1)
    overlapping = (earlier_commit > df["start"]) | (next_start < df["commit"])
    return float(overlapping.mean())


def history_stats(h: History) -> Dict[str, Any]:
    df = history_frame(h)
    committed = df[df["status"] == "committed"]
    return {
        "deployment": h.deployment,
        "transactions": int(len(df)),
        "committed": int(len(committed)),
        "aborted": int((df["status"] == "aborted").sum()),
        "sessions": int(df["session"].nunique()),
        "reads": int(committed["reads"].sum()),
        "writes": int(committed["writes"].sum()),
        "overlap_ratio": round(overlap_ratio(h), 4),
    }


def session_table(h: History) -> pd.DataFrame:
    """Committed/aborted counts per session"""
    df = history_frame(h)
    if df.empty:
        return pd.DataFrame(columns=["session", "committed", "aborted"])
    table = pd.crosstab(df["session"], df["status"])
    for column in ("committed", "aborted"):
        if column not in table:
            table[column] = 0
    return table[["committed", "aborted"]].reset_index()
