# si_lab/mutate.py
"""
Mutation operators for checker soundness tests.

Each operator takes a history that passes its deployment's check and makes
the smallest edit that breaks one axiom under the same extraction. The
candidate is the first one found, or one drawn from ``rng`` when given.

INT, EXT and NOCONFLICT edits change the data, so no execution at all
explains the result. SESSION, CB, RB and INRB edits only move timestamps,
so the mutated history may still satisfy SI.
"""
import logging
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from .analyzer import extract
from .axioms import MODEL_AXIOMS, TARGET_MODELS, Axiom, Model
from .errors import MutationNotApplicable
from .hlc import predecessor
from .model import INITIAL_TXN_ID, History, Op, Transaction, external_reads, final_writes

logger = logging.getLogger(__name__)

MUTATION_AXIOMS = (Axiom.INT, Axiom.EXT, Axiom.SESSION, Axiom.NOCONFLICT, Axiom.CB, Axiom.RB, Axiom.INRB)

# operators that leave every op alone
TIMESTAMP_MUTATIONS = (Axiom.SESSION, Axiom.CB, Axiom.RB, Axiom.INRB)

# wt extraction takes vis from returns-before and ar from commits-before
NOT_APPLICABLE = {
    "wt": (Axiom.SESSION, Axiom.RB, Axiom.INRB, Axiom.CB),
    "rs": (),
    "sc": (),
}


def parse_axiom(name: Union[str, Axiom]) -> Axiom:
    if isinstance(name, Axiom):
        return name
    try:
        return Axiom(name.strip().upper())
    except ValueError:
        raise MutationNotApplicable(f"unknown axiom {name!r}") from None


def mutation_model(deployment: str, axiom: Axiom) -> Model:
    """Model whose check covers the mutated axiom: the deployment's target when it includes it"""
    target = TARGET_MODELS[deployment]
    if axiom in target.axioms:
        return target
    for model in (Model.SESSION_SI, Model.REALTIME_SI, Model.GSI):
        if axiom in MODEL_AXIOMS[model]:
            return model
    raise MutationNotApplicable(f"no model checks {axiom.value}")


def _pick(candidates: List, rng: Optional[np.random.Generator], axiom: Axiom):
    if not candidates:
        raise MutationNotApplicable(f"no {axiom.value} mutation candidate in this history")
    if rng is None:
        return candidates[0]
    return candidates[int(rng.integers(len(candidates)))]


def _fresh_value(h: History, key: str) -> int:
    values = [op.value for txn in h.transactions for op in txn.ops if op.key == key]
    return max(values + [h.initial_value]) + 1


def _user_txns(h: History) -> List[Transaction]:
    return [t for t in h.committed() if t.txn_id != INITIAL_TXN_ID]


def _mutate_int(h, ae, rng):
    flips: List[Tuple[Transaction, int]] = []
    appends: List[Tuple[Transaction, str]] = []
    for txn in _user_txns(h):
        seen = set()
        for index, op in enumerate(txn.ops):
            if op.is_read and op.key in seen:
                flips.append((txn, index))
            seen.add(op.key)
        for key in sorted(txn.write_keys):
            appends.append((txn, key))
    if flips:
        txn, index = _pick(flips, rng, Axiom.INT)
        op = txn.ops[index]
        ops = list(txn.ops)
        ops[index] = Op.read(op.key, _fresh_value(h, op.key))
        return txn.replace(ops=tuple(ops))
    # no internal read: add one after the transaction's last write
    txn, key = _pick(appends, rng, Axiom.INT)
    return txn.replace(ops=txn.ops + (Op.read(key, _fresh_value(h, key)),))


def _external_read_as(txn: Transaction, key: str, value: int) -> Tuple[Op, ...]:
    """ops of txn with its snapshot read of key returning value, a read inserted when key is written first"""
    ops: List[Op] = []
    snapshot, read = True, False
    for op in txn.ops:
        if snapshot and op.key == key:
            if op.is_read:
                ops.append(Op.read(key, value))
                read = True
                continue
            if not read:
                ops.append(Op.read(key, value))
            snapshot = False
        ops.append(op)
    return tuple(ops)


def _mutate_ext(h, ae, rng):
    """
    Make one external read return a value nobody wrote

    Returns:
        The edited reader; no choice of vis and ar explains the read
    """
    candidates = [(txn, key) for txn in _user_txns(h) for key in sorted(external_reads(txn))]
    txn, key = _pick(candidates, rng, Axiom.EXT)
    return txn.replace(ops=_external_read_as(txn, key, _fresh_value(h, key)))


def _mutate_session(h, ae, rng):
    candidates = []
    for chain in h.sessions().values():
        for earlier, later in zip(chain, chain[1:]):
            if earlier.commit_ts is not None and later.read_ts is not None:
                candidates.append((earlier, later))
    earlier, later = _pick(candidates, rng, Axiom.SESSION)
    return later.replace(read_ts=predecessor(earlier.commit_ts))


def _conflicting_pairs(h: History, ae) -> List[Tuple[str, int, Transaction, Transaction]]:
    """(key, value the earlier writer overwrote, earlier, later) for ar-consecutive writers of key"""
    writers: Dict[str, List[Transaction]] = {}
    for txn_id in ae.ar_order():
        if txn_id == INITIAL_TXN_ID:
            continue
        txn = h.txn(txn_id)
        for key in sorted(txn.write_keys):
            writers.setdefault(key, []).append(txn)
    pairs = []
    for key in sorted(writers):
        chain = writers[key]
        overwritten = [h.initial_value] + [final_writes(w)[key] for w in chain]
        pairs.extend((key, overwritten[i], s, t) for i, (s, t) in enumerate(zip(chain, chain[1:])))
    return pairs


def _mutate_noconflict(h, ae, rng):
    """
    Turn two ar-consecutive writers of a key into a lost update

    Both writers read the value the earlier one overwrote, and the later one's
    snapshot is moved below the earlier one's commit.

    Returns:
        [earlier, later] edited; no choice of vis and ar explains both reads
    """
    key, overwritten, earlier, later = _pick(_conflicting_pairs(h, ae), rng, Axiom.NOCONFLICT)
    earlier = earlier.replace(ops=_external_read_as(earlier, key, overwritten))
    later = later.replace(ops=_external_read_as(later, key, overwritten))
    if h.deployment == "wt":
        # overlap the later writer's lifetime with the earlier one's commit
        return [earlier, later.replace(start_nanos=earlier.commit_nanos - 1)]
    return [earlier, later.replace(read_ts=predecessor(earlier.commit_ts))]


def _mutate_cb(h, ae, rng):
    rank = {txn_id: i for i, txn_id in enumerate(ae.ar_order())}
    by_commit = sorted(_user_txns(h), key=lambda t: t.commit_nanos)
    candidates = [(s, t) for s, t in zip(by_commit, by_commit[1:])
                  if rank[s.txn_id] < rank[t.txn_id] and t.start_nanos < s.commit_nanos]
    s, t = _pick(candidates, rng, Axiom.CB)
    return [s.replace(commit_nanos=t.commit_nanos), t.replace(commit_nanos=s.commit_nanos)]


def _mutate_rb(h, ae, rng):
    txns = _user_txns(h)
    candidates = []
    for t in txns:
        hidden = [s for s in txns if s.txn_id != t.txn_id and not ae.vis.contains(s.txn_id, t.txn_id)
                  and s.commit_nanos + 1 < t.commit_nanos]
        if hidden:
            candidates.append((max(hidden, key=lambda s: s.commit_nanos), t))
    s, t = _pick(candidates, rng, Axiom.RB)
    return t.replace(start_nanos=s.commit_nanos + 1)


def _mutate_inrb(h, ae, rng):
    candidates = [(h.txn(s), t) for t in _user_txns(h) for s in sorted(ae.vis.predecessors(t.txn_id))
                  if s != INITIAL_TXN_ID and h.txn(s).commit_nanos - 1 < t.commit_nanos]
    s, t = _pick(candidates, rng, Axiom.INRB)
    return t.replace(start_nanos=s.commit_nanos - 1)


OPERATORS = {
    Axiom.INT: _mutate_int,
    Axiom.EXT: _mutate_ext,
    Axiom.SESSION: _mutate_session,
    Axiom.NOCONFLICT: _mutate_noconflict,
    Axiom.CB: _mutate_cb,
    Axiom.RB: _mutate_rb,
    Axiom.INRB: _mutate_inrb,
}


def mutate(h: History, axiom: Union[str, Axiom], rng: Optional[np.random.Generator] = None) -> History:
    """
    Perturb a passing history so that it violates one axiom

    Args:
        h: Engine history that passes its deployment check
        axiom: INT, EXT, SESSION, NOCONFLICT, CB, RB or INRB
        rng: Draws the mutated candidate; the first candidate when omitted

    Returns:
        A new history; check it with mutation_model(h.deployment, axiom)

    Raises:
        MutationNotApplicable: the axiom holds by construction for this deployment or nothing qualifies
    """
    axiom = parse_axiom(axiom)
    if axiom not in OPERATORS:
        raise MutationNotApplicable(f"no mutation operator for {axiom.value}")
    if h.deployment is None:
        raise MutationNotApplicable("mutations need a deployment-tagged history")
    if axiom in NOT_APPLICABLE[h.deployment]:
        raise MutationNotApplicable(f"{axiom.value} holds by construction on {h.deployment} histories")

    edited = OPERATORS[axiom](h, extract(h).ae, rng)
    mutated = h
    for txn in edited if isinstance(edited, list) else [edited]:
        mutated = mutated.replace_txn(txn)
    mutated.header["mutation"] = axiom.value
    logger.info("%s mutation applied to %s", axiom.value,
                ", ".join(f"T{t.txn_id}" for t in (edited if isinstance(edited, list) else [edited])))
    return mutated
