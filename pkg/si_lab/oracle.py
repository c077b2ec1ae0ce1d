# si_lab/oracle.py
"""
Black-box membership oracle for small histories.

Searches every arbitration order of the committed transactions (T0 fixed
first). Under PREFIX, which every model includes, the transactions visible to
C are an ar-prefix, so visibility is one cutoff per transaction, and the
remaining axioms constrain each cutoff independently. The search is exact.
"""
import logging
from dataclasses import dataclass, field
from itertools import permutations
from typing import Dict, List, Optional, Sequence

from .axioms import Axiom, Model, check_int
from .errors import OracleSizeError
from .model import (INITIAL_TXN_ID, AbstractExecution, History, Transaction, external_reads,
                    final_writes, returns_before)
from .relations import KeyedRelation, Relation

logger = logging.getLogger(__name__)

DEFAULT_CAP = 6


@dataclass
class OracleResult:
    satisfied: bool
    ar: Optional[List[int]] = None
    vis: Optional[Relation] = None
    orders_explored: int = 0
    notes: List[str] = field(default_factory=list)

    def __bool__(self):
        return self.satisfied

    def execution(self, h: History) -> AbstractExecution:
        """The witness as an abstract execution over h"""
        if not self.satisfied:
            raise ValueError("no witness for an unsatisfied history")
        return AbstractExecution(h, self.vis, KeyedRelation({t: i for i, t in enumerate(self.ar)}))


def _cutoff(c: Transaction, position: int, order: Sequence[Transaction], h: History,
            needs: Dict[Axiom, bool], rb_preds: Optional[set], so_preds: set) -> Optional[int]:
    """Smallest admissible number of ar-predecessors visible to c, None if there is none"""
    lower = 1
    for i in range(1, position):
        earlier = order[i]
        required = (
            (needs[Axiom.NOCONFLICT] and final_writes(earlier).keys() & final_writes(c).keys())
            or (needs[Axiom.SESSION] and earlier.txn_id in so_preds)
            or (needs[Axiom.RB] and earlier.txn_id in rb_preds)
        )
        if required:
            lower = i + 1
    if needs[Axiom.SESSION] and any(order[i].txn_id in so_preds for i in range(position + 1, len(order))):
        return None
    if needs[Axiom.RB] and any(order[i].txn_id in rb_preds for i in range(position + 1, len(order))):
        return None

    upper = position
    if needs[Axiom.INRB]:
        upper = 1
        while upper < position and order[upper].txn_id in rb_preds:
            upper += 1

    reads = external_reads(c)
    for q in range(lower, upper + 1):
        ok = True
        for key, value in reads.items():
            seen = h.initial_value
            for earlier in order[:q]:
                written = final_writes(earlier).get(key)
                if written is not None:
                    seen = written
            if seen != value:
                ok = False
                break
        if ok:
            return q
    return None


def brute_force_satisfies(h: History, model: Model, cap: int = DEFAULT_CAP) -> OracleResult:
    """
    Decide whether some (vis, ar) makes h satisfy model

    Args:
        h: History; only committed transactions are considered
        model: Model whose axioms must all hold
        cap: Largest number of committed transactions (T0 excluded) accepted

    Returns:
        OracleResult with a witness (ar as a txn id list starting with T0, vis as pairs) when satisfied
    """
    committed = [t for t in h.committed() if t.txn_id != INITIAL_TXN_ID]
    if len(committed) > cap:
        raise OracleSizeError(f"{len(committed)} committed transactions exceed the oracle cap of {cap}")

    axioms = set(model.axioms)
    if Axiom.REALTIMESNAPSHOT in axioms:
        axioms.update((Axiom.RB, Axiom.INRB))
    needs = {axiom: axiom in axioms for axiom in Axiom}

    if check_int(h):
        return OracleResult(False, notes=["INT fails independently of vis and ar"])

    real_time = needs[Axiom.RB] or needs[Axiom.INRB] or needs[Axiom.CB]
    if real_time:
        rb = returns_before(h)
        rb_preds = {t.txn_id: rb.predecessors(t.txn_id) for t in h.committed()}
    else:
        rb_preds = {t.txn_id: set() for t in h.committed()}
    so = h.session_order()
    so_preds = {t.txn_id: so.predecessors(t.txn_id) for t in h.committed()}

    initial = h.initial
    explored = 0
    for perm in permutations(committed):
        if needs[Axiom.CB] and any(
                later.commit_nanos < earlier.commit_nanos
                for i, earlier in enumerate(perm) for later in perm[i + 1:]):
            continue
        explored += 1
        order = [initial] + list(perm)
        cutoffs = {}
        for position in range(1, len(order)):
            c = order[position]
            q = _cutoff(c, position, order, h, needs, rb_preds[c.txn_id], so_preds[c.txn_id])
            if q is None:
                break
            cutoffs[c.txn_id] = q
        else:
            vis = Relation()
            for c in order:
                for earlier in order[:cutoffs.get(c.txn_id, 0)]:
                    vis.add(earlier.txn_id, c.txn_id)
            ar = [t.txn_id for t in order]
            logger.debug("%s satisfied with ar %s after %d orders", model.display_name, ar, explored)
            return OracleResult(True, ar=ar, vis=vis, orders_explored=explored)

    logger.debug("%s unsatisfiable after %d orders", model.display_name, explored)
    return OracleResult(False, orders_explored=explored)
