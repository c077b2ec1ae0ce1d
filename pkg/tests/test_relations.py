import itertools

from si_lab.relations import KeyedRelation, Relation, prefix_top_two, subset_violations


def test_relation_pairs_are_sets():
    rel = Relation([(1, 2), (1, 2), (2, 3)])
    assert len(rel) == 2
    assert (1, 2) in rel
    assert (2, 1) not in rel
    rel.discard(1, 2)
    assert len(rel) == 1
    assert rel.nodes() == {2, 3}


def test_closure_and_cycles():
    chain = Relation([(1, 2), (2, 3)])
    closure = chain.transitive_closure()
    assert set(closure.pairs()) == {(1, 2), (2, 3), (1, 3)}
    assert chain.is_acyclic()
    assert not Relation([(1, 2), (2, 3), (3, 1)]).is_acyclic()


def test_strict_total_order():
    order = Relation([(1, 2), (2, 3), (1, 3)])
    assert order.is_strict_total_order([1, 2, 3])
    assert not Relation([(1, 2), (2, 3)]).is_strict_total_order([1, 2, 3])
    assert order.linear_order([3, 1, 2]) == [1, 2, 3]


def test_compose():
    left = Relation([(1, 2)])
    right = Relation([(2, 3), (2, 4)])
    assert set(left.compose(right).pairs()) == {(1, 3), (1, 4)}


def _brute(out_key, in_key):
    return {(a, b) for a in out_key for b in in_key if a != b and out_key[a] < in_key[b]}


def test_keyed_relation_matches_pairwise_comparison():
    out_key = {1: 10, 2: 20, 3: 30, 4: 15}
    in_key = {1: 5, 2: 25, 3: 40, 4: 12}
    rel = KeyedRelation(out_key, in_key)
    expected = _brute(out_key, in_key)
    assert set(rel.pairs()) == expected
    assert len(rel) == len(expected)
    for node in out_key:
        assert rel.predecessors(node) == {a for a, b in expected if b == node}
        assert rel.successors(node) == {b for a, b in expected if a == node}


def test_keyed_relation_without_in_key_is_a_total_order():
    rel = KeyedRelation({"a": 3, "b": 1, "c": 2})
    assert rel.order() == ["b", "c", "a"]
    assert rel.is_strict_total_order(["a", "b", "c"])
    assert rel.linear_order(["a", "c"]) == ["c", "a"]


def test_prefix_top_two():
    tops = prefix_top_two(["a", "b", "c"], {"a": 5, "b": 9, "c": 7})
    assert tops[0] == (5, "a", None, None)
    assert tops[1] == (9, "b", 5, "a")
    assert tops[2] == (9, "b", 7, "c")


def test_subset_violations_keyed_fast_path_agrees_with_explicit_pairs():
    sub_out = {0: 0, 1: 10, 2: 20, 3: 30}
    sub_in = {0: -1, 1: 5, 2: 25, 3: 35}
    sup_out = {0: 0, 1: 1, 2: 3, 3: 2}
    sub = KeyedRelation(sub_out, sub_in)
    sup = KeyedRelation(sup_out)
    nodes = [0, 1, 2, 3]
    fast = subset_violations(sub, sup, nodes, first_only=False)
    slow = subset_violations(sub.to_relation(), sup, nodes, first_only=False)
    assert bool(fast) == bool(slow)
    assert set(fast) <= set(slow)
    assert (2, 3) in slow


def test_subset_violations_empty_when_contained():
    order = KeyedRelation({n: n for n in range(5)})
    for a, b in itertools.combinations(range(5), 2):
        assert order.contains(a, b)
    assert subset_violations(order, order, range(5), first_only=False) == []
