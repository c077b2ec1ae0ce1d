# si_lab/sc.py
"""
Sharded-cluster protocol.

Mongos routers assign each transaction its read timestamp from their cluster
time and route every operation to the shard owning the key. Shard primaries
are replica-set primaries that also handle the two-phase commit messages; the
shard receiving a transaction's first operation coordinates its commit. The
commit protocol always commits once entered: the commit timestamp is the
largest prepare timestamp.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

from .errors import ActiveTransactionError, NoActiveTransactionError, ProtocolError
from .hlc import MIN_TS, ClusterTime, Timestamp
from .model import shard_for_key
from .rs import EntryKind, OplogEntry, RsPrimary
from .scheduler import Delay, Scheduler, WaitUntil, join_all
from .wt import UpdateResult

logger = logging.getLogger(__name__)


# two-phase commit messages

@dataclass(frozen=True)
class Prepare:
    sc_sid: int
    ct: Timestamp


@dataclass(frozen=True)
class PrepareAck:
    shard: int
    prepare_ts: Timestamp
    event_seq: int
    tid: int


@dataclass(frozen=True)
class Commit:
    sc_sid: int
    commit_ts: Timestamp
    ct: Timestamp


@dataclass(frozen=True)
class Abort:
    sc_sid: int
    ct: Timestamp


@dataclass(frozen=True)
class DecAck:
    shard: int
    sc_sid: int


@dataclass(frozen=True)
class TwoPcAck:
    sc_sid: int
    commit_ts: Timestamp
    lamport: int
    ct: Timestamp
    shard_tids: Dict[int, int] = field(default_factory=dict, hash=False)


class ShardPrimary(RsPrimary):
    """
    Primary of one shard's replica set, with the commit-protocol handlers

    Args:
        shard: Shard index
        scheduler: Event loop, for parallel message fan-out and event sequence numbers
        network: One-way message delay in nanoseconds
        node_index, wall, replica_count, initial_value: as for RsPrimary
    """

    def __init__(self, shard: int, scheduler: Scheduler, network: Callable[[], int],
                 node_index: int, wall: Callable[[], int], replica_count: int = 3, initial_value: int = 0):
        super().__init__(node_index, wall, replica_count, name=f"shard{shard}", sc_mode=True,
                         initial_value=initial_value)
        self.shard = shard
        self.scheduler = scheduler
        self.network = network
        self.coordinations = 0

    # snapshot availability

    def sc_start_on_shard(self, sc_sid: int, read_ts: Timestamp, msg_ct: Optional[Timestamp]):
        """Make the snapshot at read_ts available here, then open the storage transaction"""
        newest = max(self.newest_ts(), self.wt.max_commit_ts or MIN_TS)
        if newest < read_ts:
            # clock behind the router: a noop at read_ts closes the gap
            self.clock.merge(read_ts)
            self.append(OplogEntry(read_ts, EntryKind.NOOP, note=f"read timestamp of session {sc_sid}"))
            self.changed()
        self.clock.merge(msg_ct)
        if self.wt.all_committed() < read_ts:
            yield WaitUntil(lambda: self.wt.all_committed() >= read_ts,
                            f"{self.name} session {sc_sid} waits for a gap-free oplog at {read_ts}")
        self.open_wt_session(sc_sid, read_ts)

    def sc_read(self, sc_sid: int, key: str, read_ts: Timestamp, msg_ct: Optional[Timestamp]):
        if not self.has_txn(sc_sid):
            yield from self.sc_start_on_shard(sc_sid, read_ts, msg_ct)
        else:
            self.clock.merge(msg_ct)
        value = yield from self.rs_read(sc_sid, key)
        return value

    def sc_update(self, sc_sid: int, key: str, value: int, read_ts: Timestamp, msg_ct: Optional[Timestamp]):
        if not self.has_txn(sc_sid):
            yield from self.sc_start_on_shard(sc_sid, read_ts, msg_ct)
        else:
            self.clock.merge(msg_ct)
        result = yield from self.rs_update(sc_sid, key, value)
        return result

    # participant handlers

    def handle_prepare(self, msg: Prepare):
        self.clock.merge(msg.ct)
        wt_sid = self._wt_session(msg.sc_sid)
        pts = self.tick()
        seq = self.scheduler.seq
        self.wt.prepare(wt_sid, pts)
        ops = tuple(self.txn_ops[msg.sc_sid])
        self.append(OplogEntry(pts, EntryKind.OPS if ops else EntryKind.NOOP, ops))
        meta = self.meta[msg.sc_sid]
        meta.prepare_ts = pts
        self.changed()
        yield from self.wait_majority(pts, f"prepare of session {msg.sc_sid}")
        return PrepareAck(self.shard, pts, seq, meta.tid)

    def handle_commit(self, msg: Commit):
        self.clock.merge(msg.ct)
        wt_sid = self._wt_session(msg.sc_sid)
        ct = self.tick()
        self.wt.commit_prepare_ts(wt_sid, msg.commit_ts)
        self.wt.commit_prepare(wt_sid)
        self.append(OplogEntry(ct, EntryKind.COMMIT_MARKER, commit_ts=msg.commit_ts))
        self._forget(msg.sc_sid)
        self.changed()
        yield from self.wait_majority(ct, f"commit of session {msg.sc_sid}")
        return DecAck(self.shard, msg.sc_sid)

    def handle_abort(self, msg: Abort):
        self.clock.merge(msg.ct)
        if not self.has_txn(msg.sc_sid):
            return DecAck(self.shard, msg.sc_sid)
        if self.wt.txn(self.rs_wt_conns[msg.sc_sid]).prepared:
            raise ProtocolError(f"{self.name}: abort of prepared session {msg.sc_sid}")
        self.rs_rollback(msg.sc_sid)
        yield from self.wait_majority(self.newest_ts(), f"abort of session {msg.sc_sid}")
        return DecAck(self.shard, msg.sc_sid)

    def handle_local_commit(self, sc_sid: int, msg_ct: Timestamp, commit_gap: int = 0):
        """Read-only transactions commit directly on every participant"""
        self.clock.merge(msg_ct)
        meta = yield from self.rs_commit(sc_sid, commit_gap)
        return meta

    # coordinator

    def _persist(self, note: str):
        ct = self.tick()
        self.append(OplogEntry(ct, EntryKind.COORDINATOR, note=note))
        self.changed()
        yield from self.wait_majority(ct, note)

    def _send(self, shard: "ShardPrimary", handler):
        yield Delay(self.network())
        reply = yield from handler
        yield Delay(self.network())
        self.clock.merge(shard.ct)
        return reply

    def coordinate(self, sc_sid: int, participants: List["ShardPrimary"]):
        """
        Run two-phase commit for sc_sid over the participant shards

        Returns:
            TwoPcAck with the commit timestamp (max prepare timestamp) and the
            event sequence number of the prepare step that produced it
        """
        self.coordinations += 1
        names = ",".join(str(p.shard) for p in participants)
        yield from self._persist(f"session {sc_sid} participants {names}")

        prepares = [self.scheduler.spawn(self._send(p, p.handle_prepare(Prepare(sc_sid, self.ct))),
                                         f"prepare {sc_sid} on shard{p.shard}")
                    for p in participants]
        acks: List[PrepareAck] = yield from join_all(prepares)
        winner = max(acks, key=lambda a: (a.prepare_ts, a.event_seq))
        commit_ts = winner.prepare_ts
        logger.debug("%s session %d commit timestamp %s from shard%d", self.name, sc_sid, commit_ts, winner.shard)

        yield from self._persist(f"session {sc_sid} commit at {commit_ts}")
        commits = [self.scheduler.spawn(self._send(p, p.handle_commit(Commit(sc_sid, commit_ts, self.ct))),
                                        f"commit {sc_sid} on shard{p.shard}")
                   for p in participants]
        yield from join_all(commits)
        shard_tids = {a.shard: a.tid for a in acks if a.tid > 0}
        return TwoPcAck(sc_sid, commit_ts, winner.event_seq, self.ct, shard_tids)


@dataclass
class ScTxnState:
    read_ts: Timestamp
    participants: List[int] = field(default_factory=list)
    writers: List[int] = field(default_factory=list)
    coordinator: Optional[int] = None


@dataclass
class ScCommitResult:
    read_ts: Timestamp
    commit_ts: Timestamp
    lamport: Optional[int]
    shard_tids: Dict[int, int]
    read_only: bool


class Mongos:
    """Router: read timestamps, key routing, commit dispatch"""

    def __init__(self, index: int, scheduler: Scheduler, shards: List[ShardPrimary],
                 network: Callable[[], int], commit_gap: Callable[[], int] = lambda: 0):
        self.index = index
        self.name = f"mongos{index}"
        self.scheduler = scheduler
        self.shards = shards
        self.network = network
        self.commit_gap = commit_gap
        self.clock = ClusterTime()
        self.txns: Dict[int, ScTxnState] = {}

    @property
    def ct(self) -> Timestamp:
        return self.clock.ct

    def route(self, key: str) -> ShardPrimary:
        return self.shards[shard_for_key(key, len(self.shards))]

    def begin(self, sc_sid: int, client_ct: Optional[Timestamp] = None) -> Timestamp:
        if sc_sid in self.txns:
            raise ActiveTransactionError(f"{self.name}: session {sc_sid} already has an active transaction")
        read_ts = self.clock.merge(client_ct)
        self.txns[sc_sid] = ScTxnState(read_ts=read_ts)
        logger.debug("%s begin session %d read_ts=%s", self.name, sc_sid, read_ts)
        return read_ts

    def _state(self, sc_sid: int) -> ScTxnState:
        try:
            return self.txns[sc_sid]
        except KeyError:
            raise NoActiveTransactionError(f"{self.name}: no active transaction on session {sc_sid}") from None

    def _join(self, state: ScTxnState, shard: ShardPrimary) -> None:
        if shard.shard not in state.participants:
            state.participants.append(shard.shard)
        if state.coordinator is None:
            state.coordinator = shard.shard

    def read(self, sc_sid: int, key: str):
        state = self._state(sc_sid)
        shard = self.route(key)
        self._join(state, shard)
        yield Delay(self.network())
        value = yield from shard.sc_read(sc_sid, key, state.read_ts, self.ct)
        yield Delay(self.network())
        self.clock.merge(shard.ct)
        return value

    def update(self, sc_sid: int, key: str, value: int):
        state = self._state(sc_sid)
        shard = self.route(key)
        self._join(state, shard)
        yield Delay(self.network())
        result = yield from shard.sc_update(sc_sid, key, value, state.read_ts, self.ct)
        yield Delay(self.network())
        self.clock.merge(shard.ct)
        if result is UpdateResult.ROLLBACK:
            state.participants.remove(shard.shard)
            yield from self._abort_participants(sc_sid, state)
            return result
        if shard.shard not in state.writers:
            state.writers.append(shard.shard)
        return result

    def _abort_participants(self, sc_sid: int, state: ScTxnState):
        """Abort fan-out to the remaining participants, without entering two-phase commit"""
        procs = []
        for index in state.participants:
            shard = self.shards[index]
            procs.append(self.scheduler.spawn(self._call(shard, shard.handle_abort(Abort(sc_sid, self.ct))),
                                              f"abort {sc_sid} on {shard.name}"))
        if procs:
            yield from join_all(procs)
        del self.txns[sc_sid]
        logger.debug("%s session %d aborted", self.name, sc_sid)

    def rollback(self, sc_sid: int):
        state = self._state(sc_sid)
        yield from self._abort_participants(sc_sid, state)

    def _call(self, shard: ShardPrimary, handler):
        yield Delay(self.network())
        reply = yield from handler
        yield Delay(self.network())
        self.clock.merge(shard.ct)
        return reply

    def commit(self, sc_sid: int):
        """
        Commit a transaction

        Returns:
            ScCommitResult; read-only transactions take their read timestamp as commit timestamp
            and leave the Lamport clock to the caller
        """
        state = self._state(sc_sid)
        if not state.writers:
            procs = [self.scheduler.spawn(
                self._call(self.shards[i], self.shards[i].handle_local_commit(sc_sid, self.ct, self.commit_gap())),
                f"local commit {sc_sid} on shard{i}") for i in state.participants]
            if procs:
                yield from join_all(procs)
            del self.txns[sc_sid]
            return ScCommitResult(state.read_ts, state.read_ts, None, {}, True)

        coordinator = self.shards[state.coordinator]
        participants = [self.shards[i] for i in state.participants]
        yield Delay(self.network())
        ack = yield from coordinator.coordinate(sc_sid, participants)
        yield Delay(self.network())
        self.clock.merge(ack.ct)
        del self.txns[sc_sid]
        return ScCommitResult(state.read_ts, ack.commit_ts, ack.lamport, dict(ack.shard_tids), False)
