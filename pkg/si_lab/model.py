# si_lab/model.py
"""
Histories, transactions and abstract executions.

Every history carries a distinguished initial transaction T0 (txnId 0) that
writes the initial value of every key and precedes all other transactions in
real time. It is never stored in files; ``History.initial`` materializes it.
"""
import dataclasses
import zlib
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Iterator, List, Optional, Tuple

from .errors import MalformedHistoryError
from .hlc import MIN_TS, Timestamp
from .relations import BaseRelation, KeyedRelation, Relation

INITIAL_TXN_ID = 0
INITIAL_SESSION_ID = 0
DEPLOYMENTS = ("wt", "rs", "sc")


class OpKind(str, Enum):
    READ = "r"
    WRITE = "w"


@dataclass(frozen=True)
class Op:
    kind: OpKind
    key: str
    value: int

    @classmethod
    def read(cls, key: str, value: int) -> "Op":
        return cls(OpKind.READ, key, value)

    @classmethod
    def write(cls, key: str, value: int) -> "Op":
        return cls(OpKind.WRITE, key, value)

    @property
    def is_read(self) -> bool:
        return self.kind is OpKind.READ

    @property
    def is_write(self) -> bool:
        return self.kind is OpKind.WRITE

    def __str__(self):
        return f"{'R' if self.is_read else 'W'}({self.key},{self.value})"


class TxnStatus(str, Enum):
    COMMITTED = "committed"
    ABORTED = "aborted"


@dataclass(frozen=True)
class Transaction:
    """One client transaction: ops in program order plus protocol metadata"""
    txn_id: int
    session_id: int
    ops: Tuple[Op, ...]
    status: TxnStatus = TxnStatus.COMMITTED
    start_nanos: Optional[int] = None
    commit_nanos: Optional[int] = None
    read_ts: Optional[Timestamp] = None
    commit_ts: Optional[Timestamp] = None
    wt_tid: Optional[int] = None
    lamport: Optional[int] = None
    shard_tids: Optional[Dict[int, int]] = field(default=None, hash=False)

    @property
    def committed(self) -> bool:
        return self.status is TxnStatus.COMMITTED

    @property
    def write_keys(self) -> frozenset:
        return frozenset(op.key for op in self.ops if op.is_write)

    @property
    def keys(self) -> frozenset:
        return frozenset(op.key for op in self.ops)

    @property
    def is_read_only(self) -> bool:
        return not any(op.is_write for op in self.ops)

    def events(self) -> Iterator[Tuple[str, Op]]:
        """(eventId, op) pairs in program order; eventIds are unique within a history"""
        for index, op in enumerate(self.ops):
            yield f"{self.txn_id}.{index}", op

    def replace(self, **changes) -> "Transaction":
        return dataclasses.replace(self, **changes)

    def __str__(self):
        return f"T{self.txn_id}[{' '.join(str(op) for op in self.ops)}]"


def txn_last_write(t: Transaction, key: str) -> Optional[int]:
    """Value of the last write to key in program order, None if t never writes key"""
    for op in reversed(t.ops):
        if op.is_write and op.key == key:
            return op.value
    return None


def txn_first_read(t: Transaction, key: str) -> Optional[int]:
    """Value of the first read of key if it precedes every write to key in t"""
    for op in t.ops:
        if op.key != key:
            continue
        return op.value if op.is_read else None
    return None


def external_reads(t: Transaction) -> Dict[str, int]:
    """Keys whose first event in t is a read, with the value read"""
    found: Dict[str, int] = {}
    touched = set()
    for op in t.ops:
        if op.key in touched:
            continue
        touched.add(op.key)
        if op.is_read:
            found[op.key] = op.value
    return found


def final_writes(t: Transaction) -> Dict[str, int]:
    found: Dict[str, int] = {}
    for op in t.ops:
        if op.is_write:
            found[op.key] = op.value
    return found


def conflict(s: Transaction, t: Transaction) -> bool:
    return bool(s.write_keys & t.write_keys)


def shard_for_key(key: str, shard_count: int) -> int:
    """Static hash routing of keys to shards"""
    return zlib.crc32(key.encode("utf-8")) % shard_count


@dataclass
class History:
    """
    A set of transactions grouped into sessions

    Args:
        transactions: Recorded transactions (committed and aborted), T0 excluded,
            listed in issue order within every session
        deployment: "wt", "rs" or "sc" for engine histories, None for hand-built ones
        header: Provenance record (tool version, config, seed)
        initial_value: Value T0 writes to every key
    """
    transactions: List[Transaction]
    deployment: Optional[str] = None
    header: Dict[str, Any] = field(default_factory=dict)
    initial_value: int = 0

    def __post_init__(self):
        self.transactions = list(self.transactions)
        self._by_id: Dict[int, Transaction] = {}
        for txn in self.transactions:
            if txn.txn_id == INITIAL_TXN_ID:
                raise MalformedHistoryError(f"txnId {INITIAL_TXN_ID} is reserved for the initial transaction")
            if txn.txn_id in self._by_id:
                raise MalformedHistoryError(f"duplicate txnId {txn.txn_id}")
            if txn.committed and not txn.ops:
                raise MalformedHistoryError(f"committed transaction {txn.txn_id} has no events")
            self._by_id[txn.txn_id] = txn
        if self.deployment is not None and self.deployment not in DEPLOYMENTS:
            raise MalformedHistoryError(f"unknown deployment {self.deployment!r}")
        self._initial: Optional[Transaction] = None

    @property
    def initial(self) -> Transaction:
        if self._initial is None:
            ops = tuple(Op.write(k, self.initial_value) for k in sorted(self.keys()))
            self._initial = Transaction(
                txn_id=INITIAL_TXN_ID, session_id=INITIAL_SESSION_ID, ops=ops,
                start_nanos=-1, commit_nanos=0, read_ts=MIN_TS, commit_ts=MIN_TS,
                wt_tid=0, lamport=0,
            )
        return self._initial

    def keys(self) -> List[str]:
        return sorted({op.key for txn in self.transactions for op in txn.ops})

    def committed(self) -> List[Transaction]:
        """T0 followed by every committed transaction"""
        return [self.initial] + [t for t in self.transactions if t.committed]

    def aborted(self) -> List[Transaction]:
        return [t for t in self.transactions if not t.committed]

    def txn(self, txn_id: int) -> Transaction:
        if txn_id == INITIAL_TXN_ID:
            return self.initial
        try:
            return self._by_id[txn_id]
        except KeyError:
            raise MalformedHistoryError(f"unknown txnId {txn_id}") from None

    def sessions(self) -> Dict[int, List[Transaction]]:
        """Committed transactions of every session in session order"""
        chains: Dict[int, List[Transaction]] = {}
        for txn in self.transactions:
            if txn.committed:
                chains.setdefault(txn.session_id, []).append(txn)
        return chains

    def session_order(self) -> Relation:
        so = Relation()
        for chain in self.sessions().values():
            for i, earlier in enumerate(chain):
                for later in chain[i + 1:]:
                    so.add(earlier.txn_id, later.txn_id)
        return so

    def replace_txn(self, txn: Transaction) -> "History":
        """Copy of this history with one transaction swapped for an edited version"""
        updated = [txn if t.txn_id == txn.txn_id else t for t in self.transactions]
        return History(updated, self.deployment, dict(self.header), self.initial_value)

    def truncated(self, count: int) -> "History":
        """Copy keeping the first count committed transactions by commit instant"""
        committed = [t for t in self.transactions if t.committed]
        if all(t.commit_nanos is not None for t in committed):
            committed.sort(key=lambda t: t.commit_nanos)
        keep = {t.txn_id for t in committed[:count]}
        return History([t for t in self.transactions if t.txn_id in keep],
                       self.deployment, dict(self.header), self.initial_value)

    def __len__(self):
        return len(self.transactions)


def _stamps(h: History, attr: str) -> Dict[int, int]:
    found = {}
    for txn in h.committed():
        value = getattr(txn, attr)
        if value is None:
            raise MalformedHistoryError(f"transaction {txn.txn_id} has no {attr}")
        found[txn.txn_id] = value
    return found


def returns_before(h: History, slack_nanos: int = 0) -> KeyedRelation:
    """
    S rb T iff commit(S) + slack < start(T), over committed transactions

    A positive slack drops pairs closer than the slack, a negative one adds them.
    """
    commits = _stamps(h, "commit_nanos")
    starts = _stamps(h, "start_nanos")
    for txn_id, start in starts.items():
        if txn_id != INITIAL_TXN_ID and not start < commits[txn_id]:
            raise MalformedHistoryError(f"transaction {txn_id} does not start before it commits")
    if slack_nanos:
        commits = {txn_id: c + slack_nanos if txn_id != INITIAL_TXN_ID else c
                   for txn_id, c in commits.items()}
    return KeyedRelation(commits, starts)


def commits_before(h: History) -> KeyedRelation:
    return KeyedRelation(_stamps(h, "commit_nanos"))


@dataclass
class AbstractExecution:
    """A history with visibility and arbitration over its committed transactions"""
    history: History
    vis: BaseRelation
    ar: BaseRelation

    def txn_ids(self) -> List[int]:
        return [t.txn_id for t in self.history.committed()]

    def ar_order(self) -> List[int]:
        return self.ar.linear_order(self.txn_ids())

    def is_well_formed(self) -> bool:
        """vis strict partial order, ar strict total order, vis ⊆ ar"""
        nodes = self.txn_ids()
        vis = self.vis.restrict(nodes)
        return (vis.is_irreflexive() and vis.is_acyclic()
                and vis.transitive_closure().is_subset_of(vis)
                and self.ar.restrict(nodes).is_strict_total_order(nodes)
                and vis.is_subset_of(self.ar))
