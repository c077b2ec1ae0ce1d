# si_lab/relations.py
"""
Binary relations over transaction ids.

Two representations share one interface:

* ``Relation`` stores explicit pairs as adjacency sets.
* ``KeyedRelation`` is the relation ``a -> b iff a != b and out_key[a] < in_key[b]``.
  Every relation extracted from protocol metadata (rb, cb, vis/ar of all three
  deployments) has this shape, and the axiom checkers use it to avoid
  materializing quadratic pair sets.
"""
from bisect import bisect_left, bisect_right
from collections import defaultdict
from typing import Any, Dict, Hashable, Iterable, Iterator, List, Optional, Set, Tuple

Pair = Tuple[Hashable, Hashable]


class BaseRelation:
    """Operations shared by both representations"""

    def contains(self, a, b) -> bool:
        raise NotImplementedError

    def predecessors(self, b) -> Set:
        raise NotImplementedError

    def successors(self, a) -> Set:
        raise NotImplementedError

    def pairs(self) -> Iterator[Pair]:
        raise NotImplementedError

    def nodes(self) -> Set:
        raise NotImplementedError

    def __contains__(self, pair: Pair) -> bool:
        a, b = pair
        return self.contains(a, b)

    def __iter__(self):
        return self.pairs()

    def __len__(self):
        return sum(1 for _ in self.pairs())

    def __eq__(self, other):
        if not isinstance(other, BaseRelation):
            return NotImplemented
        return set(self.pairs()) == set(other.pairs())

    def __hash__(self):
        return id(self)

    def to_relation(self) -> "Relation":
        return Relation(self.pairs())

    def compose(self, other: "BaseRelation") -> "Relation":
        """self ∘ other: a -> c iff a self b and b other c"""
        result = Relation()
        for a, b in self.pairs():
            for c in other.successors(b):
                result.add(a, c)
        return result

    def inverse(self) -> "Relation":
        return Relation((b, a) for a, b in self.pairs())

    def restrict(self, nodes: Iterable) -> "Relation":
        keep = set(nodes)
        return Relation((a, b) for a, b in self.pairs() if a in keep and b in keep)

    def union(self, other: "BaseRelation") -> "Relation":
        result = Relation(self.pairs())
        for a, b in other.pairs():
            result.add(a, b)
        return result

    def is_subset_of(self, other: "BaseRelation") -> bool:
        return all(other.contains(a, b) for a, b in self.pairs())

    def transitive_closure(self) -> "Relation":
        closure = Relation()
        for start in sorted(self.nodes(), key=repr):
            stack = list(self.successors(start))
            seen: Set = set()
            while stack:
                node = stack.pop()
                if node in seen:
                    continue
                seen.add(node)
                closure.add(start, node)
                stack.extend(self.successors(node))
        return closure

    def is_irreflexive(self) -> bool:
        return all(a != b for a, b in self.pairs())

    def is_acyclic(self) -> bool:
        # Kahn's algorithm on the explicit graph
        indegree: Dict = defaultdict(int)
        nodes = self.nodes()
        for a, b in self.pairs():
            indegree[b] += 1
        ready = [n for n in nodes if indegree[n] == 0]
        visited = 0
        while ready:
            node = ready.pop()
            visited += 1
            for succ in self.successors(node):
                indegree[succ] -= 1
                if indegree[succ] == 0:
                    ready.append(succ)
        return visited == len(nodes)

    def is_total(self, nodes: Iterable) -> bool:
        """Every two distinct nodes are related in some direction"""
        items = list(nodes)
        for i, a in enumerate(items):
            for b in items[i + 1:]:
                if not (self.contains(a, b) or self.contains(b, a)):
                    return False
        return True

    def is_strict_total_order(self, nodes: Iterable) -> bool:
        items = list(nodes)
        return (self.is_irreflexive() and self.is_acyclic()
                and self.transitive_closure().is_subset_of(self) and self.is_total(items))

    def linear_order(self, nodes: Iterable) -> List:
        """Nodes listed in the order of this (strict total) relation"""
        items = list(nodes)
        keep = set(items)
        return sorted(items, key=lambda n: (len(self.predecessors(n) & keep), repr(n)))


class Relation(BaseRelation):
    """Explicit pairs stored as adjacency sets keyed by txn id"""

    def __init__(self, pairs: Iterable[Pair] = ()):
        self._succ: Dict[Hashable, Set] = defaultdict(set)
        self._pred: Dict[Hashable, Set] = defaultdict(set)
        self._size = 0
        for a, b in pairs:
            self.add(a, b)

    def add(self, a, b) -> None:
        if b not in self._succ[a]:
            self._succ[a].add(b)
            self._pred[b].add(a)
            self._size += 1

    def discard(self, a, b) -> None:
        if b in self._succ.get(a, ()):
            self._succ[a].discard(b)
            self._pred[b].discard(a)
            self._size -= 1

    def contains(self, a, b) -> bool:
        return b in self._succ.get(a, ())

    def predecessors(self, b) -> Set:
        return set(self._pred.get(b, ()))

    def successors(self, a) -> Set:
        return set(self._succ.get(a, ()))

    def pairs(self) -> Iterator[Pair]:
        for a in sorted(self._succ, key=repr):
            for b in sorted(self._succ[a], key=repr):
                yield (a, b)

    def nodes(self) -> Set:
        found = {a for a, succ in self._succ.items() if succ}
        found.update(b for b, pred in self._pred.items() if pred)
        return found

    def __len__(self):
        return self._size

    def __repr__(self):
        return f"Relation({list(self.pairs())!r})"


class KeyedRelation(BaseRelation):
    """
    Relation defined by comparing keys: a -> b iff a != b and out_key[a] < in_key[b]

    With in_key omitted the relation is the strict order of out_key, which is a
    strict total order when keys are distinct.
    """

    def __init__(self, out_key: Dict[Hashable, Any], in_key: Optional[Dict[Hashable, Any]] = None):
        self.out_key = dict(out_key)
        self.in_key = dict(in_key) if in_key is not None else self.out_key
        self._by_out = sorted(self.out_key, key=lambda n: (self.out_key[n], repr(n)))
        self._out_sorted = [self.out_key[n] for n in self._by_out]
        self._by_in = sorted(self.in_key, key=lambda n: (self.in_key[n], repr(n)))
        self._in_sorted = [self.in_key[n] for n in self._by_in]

    def contains(self, a, b) -> bool:
        if a == b or a not in self.out_key or b not in self.in_key:
            return False
        return self.out_key[a] < self.in_key[b]

    def prefix_length(self, b) -> int:
        """Number of nodes whose out key is below in_key[b] (b itself included if it qualifies)"""
        return bisect_left(self._out_sorted, self.in_key[b])

    def predecessors(self, b) -> Set:
        if b not in self.in_key:
            return set()
        found = set(self._by_out[:self.prefix_length(b)])
        found.discard(b)
        return found

    def successors(self, a) -> Set:
        if a not in self.out_key:
            return set()
        start = bisect_right(self._in_sorted, self.out_key[a])
        found = set(self._by_in[start:])
        found.discard(a)
        return found

    def pairs(self) -> Iterator[Pair]:
        for b in self._by_in:
            for a in self._by_out[:self.prefix_length(b)]:
                if a != b:
                    yield (a, b)

    def nodes(self) -> Set:
        return set(self.out_key) | set(self.in_key)

    def order(self) -> List:
        """Nodes sorted by out key (the order itself when in_key is omitted)"""
        return list(self._by_out)

    def linear_order(self, nodes: Iterable) -> List:
        keep = set(nodes)
        return [n for n in self._by_out if n in keep]

    def __len__(self):
        return sum(1 for _ in self.pairs())

    def __repr__(self):
        return f"KeyedRelation({len(self.out_key)} nodes)"


def prefix_top_two(order: List, value: Dict) -> List[Tuple[Any, Any, Any, Any]]:
    """For each prefix of order: (max value, its node, runner-up value, its node)"""
    tops = []
    best = second = None
    best_node = second_node = None
    for node in order:
        v = value[node]
        if best is None or v > best:
            second, second_node = best, best_node
            best, best_node = v, node
        elif second is None or v > second:
            second, second_node = v, node
        tops.append((best, best_node, second, second_node))
    return tops


def subset_violations(sub: BaseRelation, sup: BaseRelation, nodes: Iterable,
                      first_only: bool = True) -> List[Pair]:
    """
    Pairs of sub (restricted to nodes) that are missing from sup

    Args:
        sub: Relation expected to be contained in sup
        sup: Containing relation
        nodes: Node set the check is restricted to
        first_only: Stop at the first missing pair

    Returns:
        Missing pairs; with two keyed relations at most one pair per target node
    """
    items = list(nodes)
    missing: List[Pair] = []
    if isinstance(sub, KeyedRelation) and isinstance(sup, KeyedRelation):
        keep = set(items)
        order = [n for n in sub.order() if n in keep]
        out_sorted = [sub.out_key[n] for n in order]
        tops = prefix_top_two(order, sup.out_key)
        for b in sorted(items, key=lambda n: (sub.in_key[n], repr(n))):
            m = bisect_left(out_sorted, sub.in_key[b])
            if m == 0:
                continue
            best, best_node, second, second_node = tops[m - 1]
            if best_node == b:
                best, best_node = second, second_node
            if best_node is None:
                continue
            if not best < sup.in_key[b]:
                missing.append((best_node, b))
                if first_only:
                    return missing
        return missing

    keep = set(items)
    for a, b in sub.pairs():
        if a in keep and b in keep and not sup.contains(a, b):
            missing.append((a, b))
            if first_only:
                return missing
    return missing
