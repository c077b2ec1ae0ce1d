import pytest

from si_lab.axioms import (TARGET_MODELS, Axiom, Model, check_ext, check_int, check_model, check_noconflict,
                           check_prefix, check_rt_axiom, check_session)
from si_lab.model import AbstractExecution, commits_before, returns_before
from si_lab.relations import KeyedRelation

from .helpers import execution, history, prefix_execution, txn


def test_model_axiom_sets():
    si = {Axiom.INT, Axiom.EXT, Axiom.PREFIX, Axiom.NOCONFLICT}
    assert set(Model.SI.axioms) == si
    assert set(Model.SESSION_SI.axioms) == si | {Axiom.SESSION}
    assert set(Model.REALTIME_SI.axioms) == si | {Axiom.RB, Axiom.CB}
    assert set(Model.STRONG_SI.axioms) == si | {Axiom.REALTIMESNAPSHOT, Axiom.CB}
    assert set(Model.GSI.axioms) == si | {Axiom.INRB, Axiom.CB}
    assert TARGET_MODELS == {"wt": Model.STRONG_SI, "rs": Model.REALTIME_SI, "sc": Model.SESSION_SI}


def test_model_names_parse():
    assert Model.parse("session-si") is Model.SESSION_SI
    assert Model.parse("StrongSI") is Model.STRONG_SI
    assert Model.parse("realtime_si") is Model.REALTIME_SI
    with pytest.raises(ValueError):
        Model.parse("serializable")


def test_int():
    assert check_int(history(txn(1, 1, "W(x,1) R(x,1)"))) == []
    assert check_int(history(txn(1, 1, "R(x,5) R(x,5)"))) == []
    found = check_int(history(txn(1, 1, "W(x,1) R(x,2)")))
    assert [v.axiom for v in found] == [Axiom.INT]
    assert found[0].witness == (1,)
    assert "1.1" in found[0].message


def test_ext_reads_the_last_visible_writer():
    h = history(txn(1, 1, "W(x,1)"), txn(2, 2, "W(x,2)"), txn(3, 3, "R(x,2)"))
    ae = execution(h, [(1, 2), (1, 3), (2, 3)], [1, 2, 3])
    assert check_ext(ae) == []
    stale = history(txn(1, 1, "W(x,1)"), txn(2, 2, "W(x,2)"), txn(3, 3, "R(x,1)"))
    found = check_ext(execution(stale, [(1, 2), (1, 3), (2, 3)], [1, 2, 3]))
    assert found[0].witness == (2, 3)


def test_ext_initial_value_and_internal_reads():
    h = history(txn(1, 1, "R(x,0)"), txn(2, 2, "W(y,4) R(y,4)"))
    assert check_ext(execution(h, [], [1, 2])) == []
    found = check_ext(execution(history(txn(1, 1, "R(x,3)")), [], [1]))
    assert found[0].axiom is Axiom.EXT


def test_session():
    h = history(txn(1, 1, "W(x,1)"), txn(2, 1, "R(x,1)"), txn(3, 1, "R(x,1)"))
    assert check_session(execution(h, [(1, 2), (1, 3), (2, 3)], [1, 2, 3])) == []
    found = check_session(execution(h, [(1, 2), (2, 3)], [1, 2, 3]))
    assert found[0].witness == (1, 3)
    assert check_session(execution(history(txn(1, 1, "W(x,1)"), txn(2, 2, "W(y,1)")), [], [1, 2])) == []


def test_session_on_keyed_visibility():
    h = history(txn(1, 1, "W(x,1)"), txn(2, 1, "R(x,1)"))
    vis = KeyedRelation({0: (0, 0), 1: (5, 0), 2: (9, 0)}, {0: (-1, 1), 1: (0, 1), 2: (4, 1)})
    ae = AbstractExecution(h, vis, KeyedRelation({0: 0, 1: 1, 2: 2}))
    assert check_session(ae)[0].witness == (1, 2)


def test_prefix():
    h = history(txn(1, 1, "W(x,1)"), txn(2, 2, "W(y,1)"), txn(3, 3, "R(y,1)"))
    assert check_prefix(prefix_execution(h, [1, 2, 3])) == []
    found = check_prefix(execution(h, [(2, 3)], [1, 2, 3]))
    assert found[0].witness == (1, 2, 3)


def test_prefix_holds_for_timestamp_thresholds():
    h = history(*(txn(i, i, f"W(k{i},1)") for i in range(1, 7)))
    commits = {0: 0, 1: 10, 2: 20, 3: 30, 4: 40, 5: 50, 6: 60}
    reads = {0: -1, 1: 5, 2: 12, 3: 12, 4: 35, 5: 45, 6: 45}
    vis = KeyedRelation({t: (c, 0) for t, c in commits.items()}, {t: (r, 1) for t, r in reads.items()})
    assert check_prefix(AbstractExecution(h, vis, KeyedRelation(commits))) == []


def test_noconflict():
    h = history(txn(1, 1, "W(x,1)"), txn(2, 2, "W(x,2)"))
    assert check_noconflict(execution(h, [(1, 2)], [1, 2])) == []
    found = check_noconflict(execution(h, [], [1, 2]))
    assert found[0].witness == (1, 2)
    disjoint = history(txn(1, 1, "W(x,1)"), txn(2, 2, "W(y,2)"))
    assert check_noconflict(execution(disjoint, [], [1, 2])) == []


def _timed():
    return history(txn(1, 1, "W(x,1)", start=1, commit=10), txn(2, 2, "R(x,1)", start=20, commit=30),
                   txn(3, 3, "R(x,0)", start=5, commit=25))


def test_real_time_axioms_with_vis_as_rb():
    h = _timed()
    ae = AbstractExecution(h, returns_before(h), commits_before(h))
    for which in (Axiom.RB, Axiom.INRB, Axiom.REALTIMESNAPSHOT, Axiom.CB):
        assert check_rt_axiom(ae, which) == []


def test_inrb_flags_visibility_between_overlapping_transactions():
    h = _timed()
    vis = returns_before(h).to_relation()
    vis.add(1, 3)
    ae = AbstractExecution(h, vis, commits_before(h))
    found = check_rt_axiom(ae, Axiom.INRB)
    assert [(v.axiom, v.witness) for v in found] == [(Axiom.INRB, (1, 3))]
    both = check_rt_axiom(ae, Axiom.REALTIMESNAPSHOT)
    assert {v.axiom for v in both} == {Axiom.INRB}


def test_rb_and_cb_violations():
    h = _timed()
    ae = execution(h, [], [3, 2, 1])
    assert check_rt_axiom(ae, Axiom.RB)[0].witness == (1, 2)
    assert check_rt_axiom(ae, Axiom.CB)[0].axiom is Axiom.CB


def test_tolerance_forgives_close_pairs():
    h = history(txn(1, 1, "W(x,1)", start=1, commit=10), txn(2, 2, "R(x,0)", start=12, commit=30))
    ae = execution(h, [], [1, 2])
    assert check_rt_axiom(ae, Axiom.RB)
    assert check_rt_axiom(ae, Axiom.RB, tolerance_nanos=5) == []


def test_rt_axiom_rejects_other_axioms():
    h = _timed()
    with pytest.raises(ValueError):
        check_rt_axiom(prefix_execution(h, [1, 3, 2]), Axiom.EXT)


def test_check_model_reports_per_axiom_verdicts():
    h = _timed()
    ae = AbstractExecution(h, returns_before(h), commits_before(h))
    report = check_model(ae, Model.STRONG_SI)
    assert report.verdict
    assert report.axiom_verdicts[Axiom.RB] and report.axiom_verdicts[Axiom.INRB]
    assert report.stats["committed"] == 3
    assert set(report.stats["axiom_nanos"]) == {a.value for a in Model.STRONG_SI.axioms}


def test_check_model_collects_all_violations_on_request():
    h = history(txn(1, 1, "W(x,1) R(x,2)"), txn(2, 2, "W(y,1) R(y,3)"))
    ae = prefix_execution(h, [1, 2])
    assert len(check_model(ae, Model.SI).violations) == 1
    report = check_model(ae, Model.SI, all_violations=True)
    assert len(report.violations) == 2
    assert report.failed_axioms() == [Axiom.INT]


def test_empty_history_passes_every_model():
    h = history()
    ae = prefix_execution(h, [])
    for model in Model:
        assert check_model(ae, model).verdict
