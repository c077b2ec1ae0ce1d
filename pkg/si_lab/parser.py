# si_lab/parser.py
"""
History files: newline-delimited JSON.

The first line is a header record ``{"type": "header", ...}`` with provenance
(tool, version, deployment, seed, config, initialValue, shardCount). Every
following line is one transaction:

    {"txnId": 3, "sessionId": 1, "status": "committed",
     "ops": [{"t": "r", "k": "k0", "v": 0}, {"t": "w", "k": "k0", "v": 4}],
     "startNanos": 120, "commitNanos": 480, "readTs": [100, 2], "commitTs": [130, 0],
     "wtTid": 7, "lamport": 19, "deployment": "rs"}

sc records add ``shardTids`` ({shard index: tid}) with ``wtTid`` null.
A header is optional for hand-written histories.
"""
import json
import logging
from typing import Any, Dict, List, Optional

from . import __version__
from .errors import ConfigError, MalformedHistoryError
from .hlc import ts_from_json, ts_to_json
from .model import DEPLOYMENTS, History, Op, OpKind, Transaction, TxnStatus

logger = logging.getLogger(__name__)

TOOL_NAME = "si-lab"
HEADER_TYPE = "header"


def _int_or_none(record: Dict[str, Any], name: str, line_no: int) -> Optional[int]:
    value = record.get(name)
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, int):
        raise MalformedHistoryError(f"line {line_no}: {name} must be an integer, got {value!r}")
    return value


def _ts_or_none(record: Dict[str, Any], name: str, line_no: int):
    raw = record.get(name)
    if raw is None:
        return None
    if (not isinstance(raw, list) or len(raw) != 2
            or not all(isinstance(x, int) and not isinstance(x, bool) for x in raw)):
        raise MalformedHistoryError(f"line {line_no}: {name} must be a two-integer timestamp, got {raw!r}")
    return ts_from_json(raw)


def parse_op(raw: Any, line_no: int) -> Op:
    if not isinstance(raw, dict) or set(raw) != {"t", "k", "v"}:
        raise MalformedHistoryError(f"line {line_no}: malformed op {raw!r}")
    try:
        kind = OpKind(raw["t"])
    except ValueError:
        raise MalformedHistoryError(f"line {line_no}: op type must be 'r' or 'w', got {raw['t']!r}") from None
    value = raw["v"]
    if isinstance(value, bool) or not isinstance(value, int):
        raise MalformedHistoryError(f"line {line_no}: op value must be an integer, got {value!r}")
    return Op(kind, str(raw["k"]), value)


def parse_transaction(record: Dict[str, Any], line_no: int) -> Transaction:
    """
    Build a transaction from one decoded record

    Args:
        record: Decoded JSON object
        line_no: 1-based line number, for error messages

    Returns:
        The transaction
    """
    for name in ("txnId", "sessionId", "status", "ops"):
        if name not in record:
            raise MalformedHistoryError(f"line {line_no}: missing field {name!r}")
    try:
        status = TxnStatus(record["status"])
    except ValueError:
        raise MalformedHistoryError(f"line {line_no}: unknown status {record['status']!r}") from None
    if not isinstance(record["ops"], list):
        raise MalformedHistoryError(f"line {line_no}: ops must be a list")

    shard_tids = record.get("shardTids")
    if shard_tids is not None:
        try:
            shard_tids = {int(shard): int(tid) for shard, tid in shard_tids.items()}
        except (AttributeError, TypeError, ValueError):
            raise MalformedHistoryError(f"line {line_no}: malformed shardTids {shard_tids!r}") from None

    txn = Transaction(
        txn_id=_int_or_none(record, "txnId", line_no),
        session_id=_int_or_none(record, "sessionId", line_no),
        ops=tuple(parse_op(raw, line_no) for raw in record["ops"]),
        status=status,
        start_nanos=_int_or_none(record, "startNanos", line_no),
        commit_nanos=_int_or_none(record, "commitNanos", line_no),
        read_ts=_ts_or_none(record, "readTs", line_no),
        commit_ts=_ts_or_none(record, "commitTs", line_no),
        wt_tid=_int_or_none(record, "wtTid", line_no),
        lamport=_int_or_none(record, "lamport", line_no),
        shard_tids=shard_tids,
    )
    if txn.txn_id is None or txn.session_id is None:
        raise MalformedHistoryError(f"line {line_no}: txnId and sessionId must be integers")
    if (txn.committed and txn.start_nanos is not None and txn.commit_nanos is not None
            and not txn.start_nanos < txn.commit_nanos):
        raise MalformedHistoryError(f"line {line_no}: startNanos must precede commitNanos")
    return txn


def loads_history(text: str) -> History:
    """Parse the contents of a history file"""
    header: Dict[str, Any] = {}
    transactions: List[Transaction] = []
    deployment = None

    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except ValueError as e:
            raise MalformedHistoryError(f"line {line_no}: invalid JSON ({e})") from e
        if not isinstance(record, dict):
            raise MalformedHistoryError(f"line {line_no}: expected a JSON object")

        if record.get("type") == HEADER_TYPE:
            if header or transactions:
                raise MalformedHistoryError(f"line {line_no}: header must be the first record")
            header = record
            deployment = record.get("deployment")
            continue

        txn = parse_transaction(record, line_no)
        record_deployment = record.get("deployment")
        if record_deployment is not None:
            if deployment is None:
                deployment = record_deployment
            elif record_deployment != deployment:
                raise MalformedHistoryError(
                    f"line {line_no}: deployment {record_deployment!r} differs from {deployment!r}")
        transactions.append(txn)

    if deployment is not None and deployment not in DEPLOYMENTS:
        raise MalformedHistoryError(f"unknown deployment {deployment!r}")
    initial_value = header.get("initialValue", 0)
    if isinstance(initial_value, bool) or not isinstance(initial_value, int):
        raise MalformedHistoryError(f"initialValue must be an integer, got {initial_value!r}")
    return History(transactions, deployment=deployment, header=header, initial_value=initial_value)


def load_history(path: str) -> History:
    """
    Read a history file

    Args:
        path: Path to the .jsonl history

    Returns:
        The parsed history (T0 is materialized on demand)
    """
    try:
        with open(path, 'r', encoding='utf-8') as f:
            text = f.read()
    except OSError as e:
        raise MalformedHistoryError(f"cannot read history {path}: {e}") from e
    history = loads_history(text)
    logger.info("loaded %d transactions from %s", len(history), path)
    return history


def transaction_record(txn: Transaction, deployment: Optional[str]) -> Dict[str, Any]:
    record: Dict[str, Any] = {
        "txnId": txn.txn_id,
        "sessionId": txn.session_id,
        "status": txn.status.value,
        "ops": [{"t": op.kind.value, "k": op.key, "v": op.value} for op in txn.ops],
        "startNanos": txn.start_nanos,
        "commitNanos": txn.commit_nanos,
        "readTs": ts_to_json(txn.read_ts),
        "commitTs": ts_to_json(txn.commit_ts),
        "wtTid": txn.wt_tid,
        "lamport": txn.lamport,
        "deployment": deployment,
    }
    if txn.shard_tids is not None:
        record["shardTids"] = {str(shard): tid for shard, tid in sorted(txn.shard_tids.items())}
    return record


def make_header(deployment: Optional[str], seed: Optional[int] = None,
                config: Optional[Dict[str, Any]] = None, **extra) -> Dict[str, Any]:
    header = {"type": HEADER_TYPE, "tool": TOOL_NAME, "version": __version__,
              "deployment": deployment, "seed": seed, "config": config or {}, "initialValue": 0}
    header.update(extra)
    return header


def dumps_history(history: History) -> str:
    header = dict(history.header) if history.header else make_header(history.deployment)
    header["type"] = HEADER_TYPE
    header["deployment"] = history.deployment
    header["initialValue"] = history.initial_value
    lines = [json.dumps(header, separators=(",", ":"))]
    for txn in history.transactions:
        lines.append(json.dumps(transaction_record(txn, history.deployment), separators=(",", ":")))
    return "\n".join(lines) + "\n"


def dump_history(history: History, path: str) -> None:
    try:
        with open(path, "w", encoding="utf-8") as f:
            f.write(dumps_history(history))
    except OSError as e:
        raise ConfigError(f"cannot write history {path}: {e}") from e
    logger.info("wrote %d transactions to %s", len(history), path)
