# si_lab/axioms.py
"""
Consistency axioms over abstract executions and the snapshot-isolation models
built from them.

Each ``check_*`` function returns a list of ``Violation``; by default it stops
at the first witness found in deterministic iteration order, and with
``all_violations=True`` it keeps going.
"""
import logging
import time
from bisect import bisect_left
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

from .errors import MalformedHistoryError
from .model import (AbstractExecution, History, commits_before, external_reads, final_writes,
                    returns_before)
from .relations import KeyedRelation, prefix_top_two, subset_violations

logger = logging.getLogger(__name__)


class Axiom(str, Enum):
    INT = "INT"
    EXT = "EXT"
    SESSION = "SESSION"
    PREFIX = "PREFIX"
    NOCONFLICT = "NOCONFLICT"
    RB = "RB"
    INRB = "INRB"
    REALTIMESNAPSHOT = "REALTIMESNAPSHOT"
    CB = "CB"


class Model(str, Enum):
    SI = "si"
    SESSION_SI = "session-si"
    REALTIME_SI = "realtime-si"
    STRONG_SI = "strong-si"
    GSI = "gsi"

    @property
    def axioms(self) -> Tuple[Axiom, ...]:
        return MODEL_AXIOMS[self]

    @property
    def display_name(self) -> str:
        return DISPLAY_NAMES[self]

    @classmethod
    def parse(cls, name: str) -> "Model":
        """Accepts CLI names (session-si) and display names (SessionSI)"""
        wanted = name.strip().lower().replace("_", "-")
        for model in cls:
            if wanted in (model.value, model.display_name.lower()):
                return model
        raise ValueError(f"unknown model {name!r}")


_SI = (Axiom.INT, Axiom.EXT, Axiom.PREFIX, Axiom.NOCONFLICT)

MODEL_AXIOMS: Dict[Model, Tuple[Axiom, ...]] = {
    Model.SI: _SI,
    Model.SESSION_SI: _SI + (Axiom.SESSION,),
    Model.REALTIME_SI: _SI + (Axiom.RB, Axiom.CB),
    Model.STRONG_SI: _SI + (Axiom.REALTIMESNAPSHOT, Axiom.CB),
    Model.GSI: _SI + (Axiom.INRB, Axiom.CB),
}

DISPLAY_NAMES = {
    Model.SI: "SI",
    Model.SESSION_SI: "SessionSI",
    Model.REALTIME_SI: "RealtimeSI",
    Model.STRONG_SI: "StrongSI",
    Model.GSI: "GSI",
}

# Target model of each deployment's white-box check.
TARGET_MODELS = {
    "wt": Model.STRONG_SI,
    "rs": Model.REALTIME_SI,
    "sc": Model.SESSION_SI,
}

REAL_TIME_AXIOMS = (Axiom.RB, Axiom.INRB, Axiom.REALTIMESNAPSHOT, Axiom.CB)


@dataclass(frozen=True)
class Violation:
    axiom: Axiom
    witness: Tuple[int, ...]
    message: str

    def to_dict(self) -> Dict[str, Any]:
        return {"axiom": self.axiom.value, "witness": list(self.witness), "message": self.message}


@dataclass
class CheckReport:
    """Outcome of checking one execution against one model"""
    model: Model
    violations: List[Violation] = field(default_factory=list)
    axiom_verdicts: Dict[Axiom, bool] = field(default_factory=dict)
    stats: Dict[str, Any] = field(default_factory=dict)
    real_time_error_nanos: Optional[int] = None
    cross_checks: List[Violation] = field(default_factory=list)

    @property
    def verdict(self) -> bool:
        return not self.violations

    def failed_axioms(self) -> List[Axiom]:
        return [axiom for axiom, ok in self.axiom_verdicts.items() if not ok]


def _done(found: List[Violation], all_violations: bool) -> bool:
    return bool(found) and not all_violations


def check_int(h: History, all_violations: bool = False) -> List[Violation]:
    """Every read preceded by a same-key event returns the value of the latest such event"""
    found: List[Violation] = []
    for txn in h.committed():
        last: Dict[str, int] = {}
        for event_id, op in txn.events():
            if op.is_read and op.key in last and op.value != last[op.key]:
                found.append(Violation(
                    Axiom.INT, (txn.txn_id,),
                    f"event {event_id} of T{txn.txn_id} reads {op.key}={op.value}, "
                    f"but the preceding event on {op.key} has value {last[op.key]}"))
                if _done(found, all_violations):
                    return found
            last[op.key] = op.value
    return found


def _writers_by_key(ae: AbstractExecution, ar_order: Sequence[int]) -> Dict[str, List[Tuple[int, int]]]:
    """key -> [(writer id, value written)] in ar order"""
    writers: Dict[str, List[Tuple[int, int]]] = {}
    for txn_id in ar_order:
        for key, value in final_writes(ae.history.txn(txn_id)).items():
            writers.setdefault(key, []).append((txn_id, value))
    return writers


def check_ext(ae: AbstractExecution, all_violations: bool = False,
              ar_order: Optional[Sequence[int]] = None) -> List[Violation]:
    """External reads return the value of the ar-last visible writer"""
    h = ae.history
    order = list(ar_order) if ar_order is not None else ae.ar_order()
    writers = _writers_by_key(ae, order)
    found: List[Violation] = []
    for txn in h.committed():
        for key, value in external_reads(txn).items():
            visible = None
            for writer_id, written in reversed(writers.get(key, [])):
                if ae.vis.contains(writer_id, txn.txn_id):
                    visible = (writer_id, written)
                    break
            if visible is None:
                if value != h.initial_value:
                    found.append(Violation(
                        Axiom.EXT, (txn.txn_id,),
                        f"T{txn.txn_id} reads {key}={value} with no visible writer "
                        f"(initial value {h.initial_value})"))
            elif visible[1] != value:
                found.append(Violation(
                    Axiom.EXT, (visible[0], txn.txn_id),
                    f"T{txn.txn_id} reads {key}={value}, but the last visible writer "
                    f"T{visible[0]} wrote {visible[1]}"))
            if _done(found, all_violations):
                return found
    return found


def check_session(ae: AbstractExecution, all_violations: bool = False) -> List[Violation]:
    """so ⊆ vis"""
    found: List[Violation] = []
    vis = ae.vis
    for session_id, chain in sorted(ae.history.sessions().items()):
        ids = [t.txn_id for t in chain]
        if isinstance(vis, KeyedRelation):
            tops = prefix_top_two(ids, vis.out_key)
            for i in range(1, len(ids)):
                best, best_node, _, _ = tops[i - 1]
                later = ids[i]
                if not best < vis.in_key[later]:
                    found.append(Violation(
                        Axiom.SESSION, (best_node, later),
                        f"T{best_node} precedes T{later} in session {session_id} but is not visible to it"))
                    if _done(found, all_violations):
                        return found
            continue
        for i, earlier in enumerate(ids):
            for later in ids[i + 1:]:
                if not vis.contains(earlier, later):
                    found.append(Violation(
                        Axiom.SESSION, (earlier, later),
                        f"T{earlier} precedes T{later} in session {session_id} but is not visible to it"))
                    if _done(found, all_violations):
                        return found
    return found


def check_prefix(ae: AbstractExecution, all_violations: bool = False,
                 ar_order: Optional[Sequence[int]] = None) -> List[Violation]:
    """ar ∘ vis ⊆ vis: the transactions visible to C form a prefix of ar"""
    order = list(ar_order) if ar_order is not None else ae.ar_order()
    rank = {txn_id: i for i, txn_id in enumerate(order)}
    vis = ae.vis
    found: List[Violation] = []

    def witness(top_rank: int, c: int):
        # first ar-earlier transaction missing from C's visible set
        for a in order[:top_rank]:
            if not vis.contains(a, c):
                b = order[top_rank]
                found.append(Violation(
                    Axiom.PREFIX, (a, b, c),
                    f"T{a} ar T{b} and T{b} vis T{c}, but T{a} is not visible to T{c}"))
                return

    if isinstance(vis, KeyedRelation):
        by_out = [n for n in vis.order() if n in rank]
        out_sorted = [vis.out_key[n] for n in by_out]
        tops = prefix_top_two(by_out, rank)
        for c in order:
            m = bisect_left(out_sorted, vis.in_key[c])
            if m == 0:
                continue
            best, best_node, second, second_node = tops[m - 1]
            size = m
            if vis.out_key[c] < vis.in_key[c]:
                size -= 1
                if best_node == c:
                    best = second
            if size and best != size - 1:
                witness(best, c)
                if _done(found, all_violations):
                    return found
        return found

    for c in order:
        preds = [p for p in vis.predecessors(c) if p in rank]
        if not preds:
            continue
        top = max(rank[p] for p in preds)
        if top != len(preds) - 1:
            witness(top, c)
            if _done(found, all_violations):
                return found
    return found


def check_noconflict(ae: AbstractExecution, all_violations: bool = False,
                     ar_order: Optional[Sequence[int]] = None) -> List[Violation]:
    """Transactions writing a common key are vis-ordered one way or the other"""
    order = list(ar_order) if ar_order is not None else ae.ar_order()
    writers = _writers_by_key(ae, order)
    found: List[Violation] = []
    seen = set()
    vis = ae.vis
    for key in sorted(writers):
        ids = [writer_id for writer_id, _ in writers[key]]
        for i, s in enumerate(ids):
            for t in ids[i + 1:]:
                if (s, t) in seen:
                    continue
                if not (vis.contains(s, t) or vis.contains(t, s)):
                    seen.add((s, t))
                    found.append(Violation(
                        Axiom.NOCONFLICT, (s, t),
                        f"T{s} and T{t} both write {key} but neither is visible to the other"))
                    if _done(found, all_violations):
                        return found
    return found


def check_rt_axiom(ae: AbstractExecution, which: Axiom, all_violations: bool = False,
                   tolerance_nanos: int = 0) -> List[Violation]:
    """
    Real-time axioms: RB (rb ⊆ vis), INRB (vis ⊆ rb), REALTIMESNAPSHOT (both), CB (cb ⊆ ar)

    Args:
        ae: Execution whose history carries start/commit instants
        which: One of RB, INRB, REALTIMESNAPSHOT, CB
        all_violations: Report every witness instead of the first
        tolerance_nanos: Clock uncertainty; pairs closer than this are not held against RB or INRB

    Returns:
        Violations labelled RB or INRB (REALTIMESNAPSHOT reports both halves) or CB
    """
    if which not in REAL_TIME_AXIOMS:
        raise ValueError(f"{which} is not a real-time axiom")
    nodes = ae.txn_ids()
    first_only = not all_violations
    found: List[Violation] = []

    if which in (Axiom.RB, Axiom.REALTIMESNAPSHOT):
        rb = returns_before(ae.history, slack_nanos=tolerance_nanos)
        for s, t in subset_violations(rb, ae.vis, nodes, first_only):
            found.append(Violation(Axiom.RB, (s, t), f"T{s} returns before T{t} starts but is not visible to it"))
    if which in (Axiom.INRB, Axiom.REALTIMESNAPSHOT):
        rb = returns_before(ae.history, slack_nanos=-tolerance_nanos)
        for s, t in subset_violations(ae.vis, rb, nodes, first_only):
            found.append(Violation(Axiom.INRB, (s, t), f"T{s} is visible to T{t} but does not return before it starts"))
    if which is Axiom.CB:
        cb = commits_before(ae.history)
        for s, t in subset_violations(cb, ae.ar, nodes, first_only):
            found.append(Violation(Axiom.CB, (s, t), f"T{s} commits before T{t} but is not ordered before it in ar"))
    return found


def check_model(ae: AbstractExecution, model: Model, all_violations: bool = False,
                tolerance_nanos: int = 0) -> CheckReport:
    """
    Run exactly the axioms of a model

    Args:
        ae: Execution to check
        model: Target model
        all_violations: Report every witness instead of the first per axiom
        tolerance_nanos: Real-time tolerance for RB/INRB

    Returns:
        CheckReport with per-axiom verdicts; REALTIMESNAPSHOT also gets RB and INRB entries
    """
    report = CheckReport(model=model)
    committed = ae.history.committed()
    report.stats["committed"] = len(committed) - 1
    report.stats["aborted"] = len(ae.history.aborted())
    timings: Dict[str, int] = {}
    total_start = time.perf_counter_ns()

    ar_order = None
    if any(a in model.axioms for a in (Axiom.EXT, Axiom.PREFIX, Axiom.NOCONFLICT)):
        ar_order = ae.ar_order()
        if len(ar_order) != len(committed):
            raise MalformedHistoryError("ar does not order every committed transaction")

    for axiom in Axiom:
        if axiom not in model.axioms:
            continue
        started = time.perf_counter_ns()
        if axiom is Axiom.INT:
            found = check_int(ae.history, all_violations)
        elif axiom is Axiom.EXT:
            found = check_ext(ae, all_violations, ar_order)
        elif axiom is Axiom.SESSION:
            found = check_session(ae, all_violations)
        elif axiom is Axiom.PREFIX:
            found = check_prefix(ae, all_violations, ar_order)
        elif axiom is Axiom.NOCONFLICT:
            found = check_noconflict(ae, all_violations, ar_order)
        else:
            found = check_rt_axiom(ae, axiom, all_violations, tolerance_nanos)
        timings[axiom.value] = time.perf_counter_ns() - started

        if axiom is Axiom.REALTIMESNAPSHOT:
            report.axiom_verdicts[Axiom.RB] = not any(v.axiom is Axiom.RB for v in found)
            report.axiom_verdicts[Axiom.INRB] = not any(v.axiom is Axiom.INRB for v in found)
        report.axiom_verdicts[axiom] = not found
        report.violations.extend(found)
        logger.debug("%s: %s (%d violations)", axiom.value, "ok" if not found else "FAILED", len(found))

    report.stats["elapsed_nanos"] = time.perf_counter_ns() - total_start
    report.stats["axiom_nanos"] = timings
    return report
