import re
from typing import Iterable, List, Optional, Sequence, Tuple

from si_lab.hlc import Timestamp
from si_lab.model import AbstractExecution, History, Op, Transaction, TxnStatus
from si_lab.relations import KeyedRelation, Relation
from si_lab.workload import SimConfig

_EVENT = re.compile(r"([RW])\((\w+),(-?\d+)\)")


def events(text: str) -> Tuple[Op, ...]:
    """'W(x,1) R(y,0)' -> ops"""
    found = []
    for kind, key, value in _EVENT.findall(text):
        found.append(Op.read(key, int(value)) if kind == "R" else Op.write(key, int(value)))
    return tuple(found)


def txn(txn_id: int, session_id: int, text: str, start: Optional[int] = None, commit: Optional[int] = None,
        aborted: bool = False, **fields) -> Transaction:
    for name in ("read_ts", "commit_ts"):
        if isinstance(fields.get(name), tuple):
            fields[name] = Timestamp(*fields[name])
    return Transaction(txn_id=txn_id, session_id=session_id, ops=events(text),
                       status=TxnStatus.ABORTED if aborted else TxnStatus.COMMITTED,
                       start_nanos=start, commit_nanos=commit, **fields)


def history(*txns: Transaction, deployment: Optional[str] = None, **header) -> History:
    return History(list(txns), deployment=deployment, header=dict(header))


def execution(h: History, vis: Iterable[Tuple[int, int]], ar: Sequence[int]) -> AbstractExecution:
    """Execution with explicit vis pairs and ar given as a txn id list (T0 prepended when missing)"""
    order: List[int] = list(ar)
    if not order or order[0] != 0:
        order = [0] + order
    pairs = set(vis) | {(0, t) for t in order[1:]}
    return AbstractExecution(h, Relation(pairs), KeyedRelation({t: i for i, t in enumerate(order)}))


def prefix_execution(h: History, ar: Sequence[int]) -> AbstractExecution:
    """vis = ar: every transaction sees all of its ar-predecessors"""
    order = [0] + [t for t in ar if t != 0]
    pairs = [(a, b) for i, a in enumerate(order) for b in order[i + 1:]]
    return AbstractExecution(h, Relation(pairs), KeyedRelation({t: i for i, t in enumerate(order)}))


def small_config(deployment: str, seed: int = 1, **overrides) -> SimConfig:
    values = dict(deployment=deployment, seed=seed, txn_num=120, concurrency=4, max_txn_len=5,
                  key_count=4, max_writes_per_key=40)
    values.update(overrides)
    return SimConfig(**values)
