# si_lab/wt.py
"""
Storage-engine MVCC protocol.

Transactions run on sessions. A transaction's snapshot is fixed at start by
``concur`` (tids of transactions in flight) and ``upper_limit`` (the next tid
to be handed out). Every handler runs atomically; the owning node serializes
calls.

Two modes share one engine: plain mode (no read timestamp) and timestamped
mode, used by the replica-set and sharded layers, where a version must also
carry a timestamp at or below the reader's read timestamp.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

from .errors import (ActiveTransactionError, CommitTimestampError, NoActiveTransactionError,
                     NotPreparedError, ProtocolError)
from .hlc import MIN_TS, Timestamp, predecessor

logger = logging.getLogger(__name__)

TID_ABORTED = -1
TID_UNASSIGNED = 0
FIRST_TID = 1


class Phase(str, Enum):
    PREPARE_IN_PROGRESS = "prepare-in-progress"
    RESOLVED = "prepare-resolved"


class UpdateResult(str, Enum):
    OK = "ok"
    ROLLBACK = "rollback"


@dataclass
class VersionEntry:
    tid: int
    value: int
    ts: Optional[Timestamp] = None
    phase: Phase = Phase.RESOLVED


@dataclass
class WtTxn:
    tid: int
    upper_limit: int
    concur: frozenset
    mods: List[Tuple[str, int]] = field(default_factory=list)
    read_ts: Optional[Timestamp] = None
    commit_ts: Optional[Timestamp] = None
    prepare_ts: Optional[Timestamp] = None
    prepared: bool = False
    touched: bool = False

    @property
    def timestamped(self) -> bool:
        return self.read_ts is not None


class WtEngine:
    """
    One node's storage engine

    Args:
        name: Label used in trace records (e.g. "rs0", "shard1")
        initial_value: Value of every key before any write
    """

    def __init__(self, name: str = "wt", initial_value: int = 0):
        self.name = name
        self.initial_value = initial_value
        self.current_tid = FIRST_TID
        self.sessions: Dict[int, WtTxn] = {}
        self.txn_global: Dict[int, Tuple[Optional[int], Optional[Timestamp]]] = {}
        self.store: Dict[str, List[VersionEntry]] = {}
        self.max_commit_ts: Optional[Timestamp] = None
        self._next_session = 1

    # sessions

    def open_session(self) -> int:
        sid = self._next_session
        self._next_session += 1
        self.txn_global[sid] = (None, None)
        return sid

    def close_session(self, s: int) -> None:
        if s in self.sessions:
            raise ActiveTransactionError(f"{self.name}: session {s} still has an active transaction")
        self.txn_global.pop(s, None)

    def _active(self, s: int) -> WtTxn:
        txn = self.sessions.get(s)
        if txn is None:
            raise NoActiveTransactionError(f"{self.name}: no active transaction on session {s}")
        return txn

    def is_active(self, s: int) -> bool:
        return s in self.sessions

    def txn(self, s: int) -> WtTxn:
        return self._active(s)

    def _end(self, s: int) -> None:
        del self.sessions[s]
        self.txn_global[s] = (None, None)

    # transaction lifecycle

    def start(self, s: int) -> WtTxn:
        if s in self.sessions:
            raise ActiveTransactionError(f"{self.name}: session {s} already has an active transaction")
        concur = frozenset(tid for tid, _ in self.txn_global.values() if tid is not None and tid > 0)
        txn = WtTxn(tid=TID_UNASSIGNED, upper_limit=self.current_tid, concur=concur)
        self.sessions[s] = txn
        self.txn_global.setdefault(s, (None, None))
        logger.debug("%s start s=%d concur=%s upper=%d", self.name, s, sorted(concur), txn.upper_limit)
        return txn

    def txn_visible(self, t: WtTxn, tid: int, ts: Optional[Timestamp]) -> bool:
        if tid == TID_ABORTED:
            return False
        own = tid == t.tid and t.tid != TID_UNASSIGNED
        if own:
            return True
        if tid in t.concur or tid >= t.upper_limit:
            return False
        if t.timestamped:
            return ts is not None and ts <= t.read_ts
        return True

    def read(self, s: int, key: str) -> Tuple[int, Phase]:
        t = self._active(s)
        t.touched = True
        for entry in self.store.get(key, ()):
            if self.txn_visible(t, entry.tid, entry.ts):
                return entry.value, entry.phase
        return self.initial_value, Phase.RESOLVED

    def update(self, s: int, key: str, value: int) -> UpdateResult:
        t = self._active(s)
        t.touched = True
        for entry in self.store.get(key, ()):
            if entry.tid != TID_ABORTED and not self.txn_visible(t, entry.tid, entry.ts):
                logger.debug("%s update s=%d %s conflicts with tid %d, rolling back",
                             self.name, s, key, entry.tid)
                self.rollback(s)
                return UpdateResult.ROLLBACK
        if t.tid == TID_UNASSIGNED:
            t.tid = self.current_tid
            self.current_tid += 1
            self.txn_global[s] = (t.tid, None)
            logger.debug("%s s=%d assigned tid %d", self.name, s, t.tid)
        t.mods.append((key, value))
        self.store.setdefault(key, []).insert(0, VersionEntry(t.tid, value))
        return UpdateResult.OK

    def _own_entries(self, t: WtTxn):
        for key in dict.fromkeys(k for k, _ in t.mods):
            for entry in self.store.get(key, ()):
                if entry.tid == t.tid:
                    yield entry

    def commit(self, s: int) -> None:
        t = self._active(s)
        if t.prepared:
            raise ProtocolError(f"{self.name}: prepared transaction on session {s} must commit through commit_prepare")
        for entry in self._own_entries(t):
            entry.ts = t.commit_ts
        self._end(s)
        logger.debug("%s commit s=%d tid=%d ts=%s", self.name, s, t.tid, t.commit_ts)

    def rollback(self, s: int) -> None:
        t = self._active(s)
        if t.prepared:
            raise ProtocolError(f"{self.name}: cannot roll back prepared transaction on session {s}")
        for entry in self._own_entries(t):
            entry.tid = TID_ABORTED
        self._end(s)
        logger.debug("%s rollback s=%d tid=%d", self.name, s, t.tid)

    # timestamps

    def set_read_ts(self, s: int, read_ts: Optional[Timestamp]) -> None:
        t = self._active(s)
        if t.touched:
            raise ProtocolError(f"{self.name}: read timestamp must be set before the first operation")
        t.read_ts = read_ts

    def set_commit_ts(self, s: int, commit_ts: Timestamp) -> None:
        t = self._active(s)
        t.commit_ts = commit_ts
        self.advance_max_commit_ts(commit_ts)
        self.txn_global[s] = (t.tid, commit_ts)
        logger.debug("%s set_commit_ts s=%d tid=%d ts=%s", self.name, s, t.tid, commit_ts)

    def advance_max_commit_ts(self, ts: Timestamp) -> None:
        if self.max_commit_ts is None or ts > self.max_commit_ts:
            self.max_commit_ts = ts

    def all_committed(self) -> Timestamp:
        """Largest timestamp at or below maxCommitTs and below every pinned commit timestamp"""
        if self.max_commit_ts is None:
            return MIN_TS
        frontier = self.max_commit_ts
        pinned = [ts for _, ts in self.txn_global.values() if ts is not None]
        if pinned:
            frontier = min(frontier, predecessor(min(pinned)))
        return frontier

    # prepared transactions

    def prepare(self, s: int, prepare_ts: Timestamp) -> None:
        t = self._active(s)
        if t.prepared:
            raise ProtocolError(f"{self.name}: transaction on session {s} is already prepared")
        t.prepare_ts = prepare_ts
        t.prepared = True
        for entry in self._own_entries(t):
            entry.ts = prepare_ts
            entry.phase = Phase.PREPARE_IN_PROGRESS
        self.txn_global[s] = (None, None)
        logger.debug("%s prepare s=%d tid=%d pts=%s", self.name, s, t.tid, prepare_ts)

    def commit_prepare_ts(self, s: int, commit_ts: Timestamp) -> None:
        t = self._active(s)
        if not t.prepared:
            raise NotPreparedError(f"{self.name}: transaction on session {s} is not prepared")
        if commit_ts < t.prepare_ts:
            raise CommitTimestampError(
                f"{self.name}: commit timestamp {commit_ts} below prepare timestamp {t.prepare_ts}")
        t.commit_ts = commit_ts
        self.txn_global[s] = (t.tid, commit_ts)

    def commit_prepare(self, s: int) -> None:
        t = self._active(s)
        if not t.prepared:
            raise NotPreparedError(f"{self.name}: transaction on session {s} is not prepared")
        if t.commit_ts is None:
            raise CommitTimestampError(f"{self.name}: prepared transaction on session {s} has no commit timestamp")
        for entry in self._own_entries(t):
            entry.ts = t.commit_ts
            entry.phase = Phase.RESOLVED
        self._end(s)
        self.advance_max_commit_ts(t.commit_ts)
        logger.debug("%s commit_prepare s=%d tid=%d cts=%s", self.name, s, t.tid, t.commit_ts)
