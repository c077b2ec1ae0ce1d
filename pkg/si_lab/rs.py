# si_lab/rs.py
"""
Replica-set protocol: a primary running transactions over its storage engine,
an oplog of commit-timestamped entries, and secondaries that pull the oplog
and acknowledge what they hold.

Handlers that can block (reads of prepared versions, majority waits) are
generator methods meant to be driven with ``yield from`` inside a scheduler
process; everything else runs atomically within the calling event.
"""
import logging
from bisect import bisect_right
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, List, Optional, Tuple

from .errors import NoActiveTransactionError, ProtocolError
from .hlc import MIN_TS, HybridClock, Timestamp
from .scheduler import Delay, Scheduler, WaitUntil
from .wt import Phase, UpdateResult, WtEngine

logger = logging.getLogger(__name__)

REPLICATION_MODES = ("eager", "randomized", "manual")


class EntryKind(str, Enum):
    OPS = "ops"
    NOOP = "noop"
    COMMIT_MARKER = "commit"
    COORDINATOR = "coordinator"


@dataclass(frozen=True)
class OplogEntry:
    ts: Timestamp
    kind: EntryKind
    ops: Tuple[Tuple[str, int], ...] = ()
    commit_ts: Optional[Timestamp] = None
    note: str = ""


# replication messages

@dataclass(frozen=True)
class PullOplog:
    secondary: str
    last_pulled: Timestamp


@dataclass(frozen=True)
class PushOplog:
    entries: Tuple[OplogEntry, ...]
    ct: Timestamp


@dataclass(frozen=True)
class ReplicateAck:
    secondary: str
    last_pulled: Timestamp


@dataclass
class RsTxnMeta:
    """Protocol metadata of one transaction, as the checker needs it"""
    read_ts: Optional[Timestamp] = None
    commit_ts: Optional[Timestamp] = None
    tid: int = 0
    prepare_ts: Optional[Timestamp] = None


def majority_frontier(acks: List[Timestamp], replica_count: int) -> Timestamp:
    """The (n // 2)-th largest ack, counting missing replicas as the minimum timestamp"""
    padded = sorted(acks + [MIN_TS] * (replica_count - len(acks)), reverse=True)
    return padded[replica_count // 2]


class RsPrimary:
    """
    Primary of one replica set

    Args:
        node_index: Slot of this node's clock (distinct across the deployment)
        wall: Physical clock reading in nanoseconds
        replica_count: Replica-set size, primary included
        name: Label for trace records
        sc_mode: Pre-read keys before updating (sharded deployments)
    """

    def __init__(self, node_index: int, wall: Callable[[], int], replica_count: int = 3,
                 name: str = "rs", sc_mode: bool = False, initial_value: int = 0):
        self.name = name
        self.replica_count = replica_count
        self.sc_mode = sc_mode
        self.clock = HybridClock(node_index, wall)
        self.wt = WtEngine(name, initial_value)
        self.oplog: List[OplogEntry] = []
        self._oplog_ts: List[Timestamp] = []
        self.rs_wt_conns: Dict[int, int] = {}
        self.txn_ops: Dict[int, List[Tuple[str, int]]] = {}
        self.meta: Dict[int, RsTxnMeta] = {}
        self.last_pulled_acks: Dict[str, Timestamp] = {}
        self.last_majority_committed = MIN_TS
        self.majority_trace: List[Timestamp] = []
        self._listeners: List[Callable[[], None]] = []

    @property
    def ct(self) -> Timestamp:
        return self.clock.ct

    def tick(self) -> Timestamp:
        return self.clock.tick()

    def subscribe(self, listener: Callable[[], None]) -> None:
        self._listeners.append(listener)

    def changed(self) -> None:
        """Refresh the majority frontier and wake replication"""
        self.refresh_majority()
        for listener in self._listeners:
            listener()

    # oplog

    def newest_ts(self) -> Timestamp:
        return self._oplog_ts[-1] if self._oplog_ts else MIN_TS

    def append(self, entry: OplogEntry) -> None:
        if self._oplog_ts and not entry.ts > self._oplog_ts[-1]:
            raise ProtocolError(f"{self.name}: oplog entry {entry.ts} not after {self._oplog_ts[-1]}")
        self.oplog.append(entry)
        self._oplog_ts.append(entry.ts)
        self.wt.advance_max_commit_ts(entry.ts)
        logger.debug("%s oplog append %s %s", self.name, entry.ts, entry.kind.value)

    def visible_frontier(self) -> Timestamp:
        """Gap-free point of the oplog, bounded by the node's cluster time"""
        return min(self.wt.all_committed(), self.clock.ct)

    # transactions

    def _wt_session(self, rs_sid: int) -> int:
        try:
            return self.rs_wt_conns[rs_sid]
        except KeyError:
            raise NoActiveTransactionError(f"{self.name}: no transaction bound to session {rs_sid}") from None

    def has_txn(self, rs_sid: int) -> bool:
        return rs_sid in self.rs_wt_conns

    def open_wt_session(self, rs_sid: int, read_ts: Optional[Timestamp] = None) -> None:
        """
        Bind a fresh storage session on the first operation of a transaction

        Args:
            rs_sid: Client session
            read_ts: Snapshot point; the gap-free frontier when omitted
        """
        if rs_sid in self.rs_wt_conns:
            return
        wt_sid = self.wt.open_session()
        self.wt.start(wt_sid)
        if read_ts is None:
            read_ts = self.wt.all_committed()
        self.wt.set_read_ts(wt_sid, read_ts)
        self.rs_wt_conns[rs_sid] = wt_sid
        self.txn_ops[rs_sid] = []
        self.meta[rs_sid] = RsTxnMeta(read_ts=read_ts)
        logger.debug("%s open rs=%d wt=%d read_ts=%s", self.name, rs_sid, wt_sid, read_ts)

    def _resolved(self, wt_sid: int, key: str) -> bool:
        return self.wt.read(wt_sid, key)[1] is not Phase.PREPARE_IN_PROGRESS

    def rs_read(self, rs_sid: int, key: str):
        """Read, waiting out versions whose writer is prepared but not yet resolved"""
        self.open_wt_session(rs_sid)
        wt_sid = self.rs_wt_conns[rs_sid]
        while True:
            value, phase = self.wt.read(wt_sid, key)
            if phase is not Phase.PREPARE_IN_PROGRESS:
                return value
            logger.debug("%s rs=%d read %s blocked on prepared writer", self.name, rs_sid, key)
            yield WaitUntil(lambda: self._resolved(wt_sid, key),
                            f"{self.name} session {rs_sid} read {key} waits for a prepared writer")

    def rs_update(self, rs_sid: int, key: str, value: int):
        self.open_wt_session(rs_sid)
        if self.sc_mode:
            yield from self.rs_read(rs_sid, key)
        wt_sid = self.rs_wt_conns[rs_sid]
        result = self.wt.update(wt_sid, key, value)
        if result is UpdateResult.ROLLBACK:
            self._forget(rs_sid)
            self.changed()
            return result
        self.meta[rs_sid].tid = self.wt.txn(wt_sid).tid
        self.txn_ops[rs_sid].append((key, value))
        return result

    def _forget(self, rs_sid: int) -> RsTxnMeta:
        wt_sid = self.rs_wt_conns.pop(rs_sid, None)
        if wt_sid is not None and not self.wt.is_active(wt_sid):
            self.wt.close_session(wt_sid)
        self.txn_ops.pop(rs_sid, None)
        return self.meta.pop(rs_sid, RsTxnMeta())

    def commit_ts_step(self, rs_sid: int) -> Timestamp:
        """Atomic part of commit: tick, commit timestamp, oplog entry"""
        wt_sid = self._wt_session(rs_sid)
        ct = self.tick()
        self.wt.set_commit_ts(wt_sid, ct)
        ops = tuple(self.txn_ops[rs_sid])
        self.append(OplogEntry(ct, EntryKind.OPS if ops else EntryKind.NOOP, ops))
        self.meta[rs_sid].commit_ts = ct
        self.changed()
        return ct

    def commit_local_step(self, rs_sid: int) -> RsTxnMeta:
        """Storage-engine commit, schedulable separately from commit_ts_step"""
        wt_sid = self._wt_session(rs_sid)
        self.wt.commit(wt_sid)
        meta = self._forget(rs_sid)
        self.changed()
        return meta

    def majority_committed(self, ts: Timestamp) -> bool:
        return self.last_majority_committed >= ts

    def wait_majority(self, ts: Timestamp, label: str):
        if not self.majority_committed(ts):
            yield WaitUntil(lambda: self.majority_committed(ts), f"{self.name} {label}: majority commit of {ts}",
                            rank=ts)

    def rs_commit(self, rs_sid: int, commit_gap: int = 0):
        """
        Commit: atomic timestamp + oplog append, local commit after commit_gap,
        then wait until the entry is majority committed

        Returns:
            RsTxnMeta of the committed transaction
        """
        ct = self.commit_ts_step(rs_sid)
        if commit_gap > 0:
            yield Delay(commit_gap)
        meta = self.commit_local_step(rs_sid)
        yield from self.wait_majority(ct, f"commit of session {rs_sid}")
        return meta

    def rs_rollback(self, rs_sid: int) -> RsTxnMeta:
        if rs_sid not in self.rs_wt_conns:
            return RsTxnMeta()
        self.wt.rollback(self.rs_wt_conns[rs_sid])
        meta = self._forget(rs_sid)
        self.changed()
        return meta

    # replication

    def handle_pull(self, msg: PullOplog) -> PushOplog:
        frontier = max(self.visible_frontier(), msg.last_pulled)
        lo = bisect_right(self._oplog_ts, msg.last_pulled)
        hi = bisect_right(self._oplog_ts, frontier)
        return PushOplog(tuple(self.oplog[lo:hi]), frontier)

    def handle_ack(self, msg: ReplicateAck) -> None:
        previous = self.last_pulled_acks.get(msg.secondary, MIN_TS)
        self.last_pulled_acks[msg.secondary] = max(previous, msg.last_pulled)
        self.refresh_majority()

    def refresh_majority(self) -> None:
        acks = [self.visible_frontier()] + list(self.last_pulled_acks.values())
        candidate = majority_frontier(acks, self.replica_count)
        if candidate > self.last_majority_committed:
            self.last_majority_committed = candidate
            self.majority_trace.append(candidate)
            logger.debug("%s majority frontier -> %s", self.name, candidate)


class RsSecondary:
    def __init__(self, name: str):
        self.name = name
        self.oplog: List[OplogEntry] = []
        self.last_pulled = MIN_TS

    def apply(self, push: PushOplog) -> ReplicateAck:
        for entry in push.entries:
            if self.oplog and not entry.ts > self.oplog[-1].ts:
                raise ProtocolError(f"{self.name}: pulled entry {entry.ts} out of order")
            self.oplog.append(entry)
        self.last_pulled = max(self.last_pulled, push.ct)
        return ReplicateAck(self.name, self.last_pulled)

    def replicate_step(self, primary: RsPrimary, network: Callable[[], int]):
        """One pull round: PullOplog, PushOplog, ReplicateAck, each crossing the network"""
        yield Delay(network())
        push = primary.handle_pull(PullOplog(self.name, self.last_pulled))
        yield Delay(network())
        ack = self.apply(push)
        yield Delay(network())
        primary.handle_ack(ack)


@dataclass
class _RoundState:
    running: bool = False
    dirty: bool = False


class ReplicationDriver:
    """
    Runs pull rounds for every secondary of one replica set

    Rounds are coalesced per secondary: a change while a round is in flight
    schedules exactly one follow-up round. Manual mode only runs rounds on request.
    """

    def __init__(self, scheduler: Scheduler, primary: RsPrimary, secondaries: List[RsSecondary],
                 mode: str, network: Callable[[], int], round_delay: Callable[[], int]):
        if mode not in REPLICATION_MODES:
            raise ValueError(f"unknown replication mode {mode!r}")
        self.scheduler = scheduler
        self.primary = primary
        self.secondaries = {s.name: s for s in secondaries}
        self.mode = mode
        self.network = network
        self.round_delay = round_delay
        self._state = {name: _RoundState() for name in self.secondaries}
        if mode != "manual":
            primary.subscribe(self.on_change)

    def on_change(self) -> None:
        for name, state in self._state.items():
            if state.running:
                state.dirty = True
            else:
                self._start(name, 1 if self.mode == "eager" else self.round_delay())

    def _start(self, name: str, delay: int):
        state = self._state[name]
        state.running = True
        state.dirty = False
        return self.scheduler.spawn(self._round(name), f"replicate {self.primary.name}/{name}", delay)

    def _round(self, name: str):
        secondary = self.secondaries[name]
        yield from secondary.replicate_step(self.primary, self.network)
        state = self._state[name]
        state.running = False
        if state.dirty and self.mode != "manual":
            self._start(name, 1 if self.mode == "eager" else self.round_delay())

    def replicate(self, name: str):
        """Start one round for a secondary now (manual mode and scripts)"""
        if name not in self.secondaries:
            raise KeyError(name)
        return self._start(name, 0)
