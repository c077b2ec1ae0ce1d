# si_lab/analyzer.py
"""
White-box checking of engine histories.

Every deployment records enough protocol metadata to rebuild the visibility
and arbitration relations its protocol induces:

- wt: vis is returns-before, ar is commits-before (real-time instants)
- rs: S vis T iff commitTs(S) <= readTs(T), ar by commitTs
- sc: as rs with a strict bound, ties broken by the Lamport clock

The rebuilt execution is then checked against the deployment's target model.
"""
import logging
import time
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .axioms import TARGET_MODELS, CheckReport, Model, Violation, check_model
from .errors import MalformedHistoryError
from .model import (AbstractExecution, History, Transaction, commits_before, external_reads,
                    returns_before, shard_for_key)
from .relations import KeyedRelation

logger = logging.getLogger(__name__)


class CrossCheck(str, Enum):
    TID_ORDER = "TID-ORDER"


@dataclass
class ExtractedExecution:
    ae: AbstractExecution
    deployment: str
    real_time_error_nanos: int = 0

    @property
    def target(self) -> Model:
        return TARGET_MODELS[self.deployment]


def _require(h: History, deployment: str) -> None:
    if h.deployment != deployment:
        raise MalformedHistoryError(f"expected a {deployment} history, got {h.deployment!r}")


def _unique(keys: Dict[int, object], what: str) -> None:
    seen: Dict[object, int] = {}
    for txn_id, key in keys.items():
        if key in seen:
            raise MalformedHistoryError(f"T{seen[key]} and T{txn_id} share {what} {key}")
        seen[key] = txn_id


def extract_wt(h: History) -> ExtractedExecution:
    _require(h, "wt")
    ar = commits_before(h)
    _unique(ar.out_key, "commit instant")
    return ExtractedExecution(AbstractExecution(h, returns_before(h), ar), "wt", real_time_error(h))


def _timestamps(h: History) -> Tuple[Dict[int, object], Dict[int, object]]:
    reads, commits = {}, {}
    for txn in h.committed():
        if txn.read_ts is None:
            raise MalformedHistoryError(f"transaction {txn.txn_id} has no readTs")
        commit_ts = txn.commit_ts
        if commit_ts is None:
            if not txn.is_read_only:
                raise MalformedHistoryError(f"transaction {txn.txn_id} has no commitTs")
            commit_ts = txn.read_ts
        reads[txn.txn_id] = txn.read_ts
        commits[txn.txn_id] = commit_ts
    return reads, commits


def extract_rs(h: History) -> ExtractedExecution:
    _require(h, "rs")
    reads, commits = _timestamps(h)
    _unique(commits, "commitTs")
    # (cts, 0) < (rts, 1) iff cts <= rts
    vis = KeyedRelation({t: (ts, 0) for t, ts in commits.items()}, {t: (ts, 1) for t, ts in reads.items()})
    ar = KeyedRelation(commits)
    return ExtractedExecution(AbstractExecution(h, vis, ar), "rs")


def extract_sc(h: History) -> ExtractedExecution:
    _require(h, "sc")
    reads, commits = _timestamps(h)
    clocks = {}
    for txn in h.committed():
        if txn.lamport is None:
            raise MalformedHistoryError(f"transaction {txn.txn_id} has no lamport clock")
        clocks[txn.txn_id] = txn.lamport
    out_key = {t: (ts, clocks[t]) for t, ts in commits.items()}
    _unique(out_key, "(commitTs, lamport)")
    vis = KeyedRelation(out_key, {t: (ts, clocks[t]) for t, ts in reads.items()})
    ar = KeyedRelation(out_key)
    return ExtractedExecution(AbstractExecution(h, vis, ar), "sc")


EXTRACTORS = {"wt": extract_wt, "rs": extract_rs, "sc": extract_sc}


def extract(h: History) -> ExtractedExecution:
    if h.deployment not in EXTRACTORS:
        raise MalformedHistoryError("history has no deployment tag; use the brute-force oracle instead")
    return EXTRACTORS[h.deployment](h)


def reads_from(h: History) -> Dict[Tuple[str, int], int]:
    """(key, value) -> id of the committed transaction that wrote it (T0 for initial values)"""
    writers: Dict[Tuple[str, int], int] = {}
    for txn in h.committed():
        for key, value in dict.fromkeys((op.key, op.value) for op in txn.ops if op.is_write):
            owner = writers.get((key, value))
            if owner is not None and owner != txn.txn_id:
                raise MalformedHistoryError(
                    f"T{owner} and T{txn.txn_id} both write {key}={value}; reads-from is ambiguous")
            writers[(key, value)] = txn.txn_id
    return writers


def real_time_error(h: History) -> int:
    """
    Largest amount by which a reader started before the writer it read from committed

    Returns:
        Nanoseconds, 0 when every read is of an earlier-committed writer
    """
    writers = reads_from(h)
    worst = 0
    for txn in h.committed():
        if txn.start_nanos is None:
            raise MalformedHistoryError(f"transaction {txn.txn_id} has no startNanos")
        for key, value in external_reads(txn).items():
            writer_id = writers.get((key, value))
            if writer_id is None or writer_id == txn.txn_id:
                continue
            writer = h.txn(writer_id)
            if writer.commit_nanos is None:
                raise MalformedHistoryError(f"transaction {writer_id} has no commitNanos")
            if txn.start_nanos < writer.commit_nanos:
                worst = max(worst, writer.commit_nanos - txn.start_nanos)
    return worst


def _writer_tids(h: History, txn: Transaction) -> Dict[str, int]:
    """key -> tid of the storage engine that applied txn's write of key"""
    if txn.is_read_only:
        return {}
    if h.deployment == "sc":
        shard_count = h.header.get("shardCount")
        if not txn.shard_tids or not shard_count:
            raise MalformedHistoryError(f"transaction {txn.txn_id} has no shard tids")
        tids = {}
        for key in txn.write_keys:
            shard = shard_for_key(key, shard_count)
            if shard not in txn.shard_tids:
                raise MalformedHistoryError(f"transaction {txn.txn_id} has no tid on shard {shard}")
            tids[key] = txn.shard_tids[shard]
        return tids
    if txn.wt_tid is None or txn.wt_tid <= 0:
        raise MalformedHistoryError(f"updater {txn.txn_id} has no wtTid")
    return {key: txn.wt_tid for key in txn.write_keys}


def tid_cross_check(h: History, ar_order: Optional[Sequence[int]] = None) -> List[Violation]:
    """
    Conflicting committed writers must be ar-ordered as their storage-engine tids

    On sharded histories tids are only comparable within one shard, which is
    where two writers of the same key meet.
    """
    if ar_order is None:
        ar_order = extract(h).ae.ar_order()
    by_key: Dict[str, List[Tuple[int, int]]] = {}
    for txn_id in ar_order:
        if txn_id == 0:
            continue
        txn = h.txn(txn_id)
        for key, tid in _writer_tids(h, txn).items():
            by_key.setdefault(key, []).append((txn_id, tid))

    found: List[Violation] = []
    for key in sorted(by_key):
        writers = by_key[key]
        for (s, s_tid), (t, t_tid) in zip(writers, writers[1:]):
            if not s_tid < t_tid:
                found.append(Violation(
                    CrossCheck.TID_ORDER, (s, t),
                    f"T{s} precedes T{t} in ar on {key} but its tid {s_tid} is not below {t_tid}"))
    if found:
        logger.warning("tid order disagrees with ar on %d writer pairs", len(found))
    return found


def check_deployment(h: History, model: Optional[Model] = None, all_violations: bool = False,
                     tolerance_nanos: int = 0) -> CheckReport:
    """
    White-box check of an engine history

    Args:
        h: History tagged with its deployment
        model: Model to check; the deployment's target model when omitted
        all_violations: Report every witness instead of the first per axiom
        tolerance_nanos: Real-time tolerance for RB/INRB

    Returns:
        CheckReport with the real-time error (wt) and the tid cross-check attached
    """
    started = time.perf_counter_ns()
    extracted = extract(h)
    target = model or extracted.target
    report = check_model(extracted.ae, target, all_violations, tolerance_nanos)
    if extracted.deployment == "wt":
        report.real_time_error_nanos = extracted.real_time_error_nanos
    report.cross_checks = tid_cross_check(h, extracted.ae.ar_order())
    report.stats["deployment"] = extracted.deployment
    report.stats["elapsed_nanos"] = time.perf_counter_ns() - started
    logger.info("%s history, %s: %s", extracted.deployment, target.display_name,
                "pass" if report.verdict else f"{len(report.violations)} violations")
    return report


def cost_exponent(sizes: Sequence[int], seconds: Sequence[float]) -> float:
    """Slope of log(time) against log(size); about 1 for linear cost, 2 for quadratic"""
    if len(sizes) != len(seconds) or len(sizes) < 2:
        raise ValueError("need at least two (size, time) samples")
    slope, _ = np.polyfit(np.log(np.asarray(sizes, dtype=float)), np.log(np.asarray(seconds, dtype=float)), 1)
    return float(slope)
