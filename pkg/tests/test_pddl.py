import itertools

import pytest
from hypothesis import given, settings, strategies as st

from nsplan.pddl import (Atom, Domain, OperatorSchema, PDDLError, PredicateSchema, ground,
                         parse_domain, parse_problem, serialize_domain, serialize_problem)
from nsplan.world import HanoiState, hanoi_domain, hanoi_domain_text, to_pddl

MINI = """
(define (domain mini)
  (:requirements :strips :typing)
  (:types block)
  (:predicates (clear ?x - block) (holding ?x - block) (handempty))
  (:action pick
    :parameters (?b - block)
    :precondition (and (clear ?b) (handempty))
    :effect (and (holding ?b) (not (handempty)))))
"""

PAIR = """
(define (domain pair)
  (:requirements :strips :typing)
  (:types block)
  (:predicates (on ?x - block ?y - block))
  (:action place
    :parameters (?b - block ?t - block)
    :precondition (and)
    :effect (and (on ?b ?t))))
"""


def _problem(domain_name, objects, init="", goal=""):
    return (f"(define (problem p) (:domain {domain_name}) (:objects {objects})"
            f" (:init {init}) (:goal (and {goal})))")


def test_minimal_domain_one_param():
    d = parse_domain(MINI)
    op = d.operator("pick")
    assert op.params == (("?b", "block"),)
    assert Atom("holding", ("?b",)) in op.add


def test_hanoi_fixture_has_pick_and_place():
    d = hanoi_domain()
    assert {o.name for o in d.operators} == {"pick", "place"}
    assert d.is_subtype("block", "support") and d.is_subtype("area", "support")


def test_arity_mismatch_reports_position():
    bad = MINI.replace("(clear ?b) (handempty)", "(clear ?b ?b) (handempty)")
    with pytest.raises(PDDLError) as info:
        parse_domain(bad)
    err = info.value
    assert err.line == 8 and err.col is not None
    assert "clear" in str(err)


@pytest.mark.parametrize("mutation, fragment", [
    (("(:requirements :strips :typing)", "(:requirements :strips :fluents)"), "requirement"),
    (("(holding ?b)", "(holds ?b)"), "holds"),
    (("(clear ?b) (handempty)", "(clear ?c) (handempty)"), "?c"),
    (("(:types block)", "(:types block"), ""),
    (("(:types block)", "(:types block - item item - block)"), "cyclic"),
])
def test_domain_errors(mutation, fragment):
    with pytest.raises(PDDLError) as info:
        parse_domain(MINI.replace(*mutation))
    assert fragment in str(info.value)


def test_problem_empty_goal_trivially_satisfied():
    d = parse_domain(MINI)
    t = parse_problem(_problem("mini", "a b - block"), d)
    assert t.goal == frozenset()


def test_hanoi_problem_entities():
    _, text = to_pddl(HanoiState.tower(3, 0), HanoiState.tower(3, 2))
    t = parse_problem(text, hanoi_domain())
    assert len(t.objects_of_type("block")) == 3
    assert len(t.objects_of_type("area")) == 3


def test_undeclared_object_in_init():
    d = parse_domain(MINI)
    with pytest.raises(PDDLError, match="ghost"):
        parse_problem(_problem("mini", "a - block", "(clear ghost)"), d)


def test_grounding_counts():
    d = parse_domain(MINI)
    t = parse_problem(_problem("mini", "a b c - block"), d)
    assert len(ground(t)) == 3
    d2 = parse_domain(PAIR)
    t2 = parse_problem(_problem("pair", "a b c - block"), d2)
    assert len(ground(t2)) == 6
    assert len(ground(t2, allow_self_binding=True)) == 9
    t3 = parse_problem(_problem("pair", ""), d2)
    assert ground(t3) == []


def test_grounding_matches_brute_force_on_hanoi():
    _, text = to_pddl(HanoiState(((3, 2), (1,), ())), HanoiState.tower(3, 2))
    task = parse_problem(text, hanoi_domain())
    types = dict(task.objects)
    dom = task.domain
    expected = set()
    for op in dom.operators:
        for combo in itertools.product([o for o, _ in task.objects], repeat=len(op.params)):
            if len(set(combo)) < len(combo):
                continue
            if all(dom.is_subtype(types[o], t) for o, (_, t) in zip(combo, op.params)):
                expected.add((op.name, combo))
    got = {(g.name, g.args) for g in ground(task)}
    assert got == expected
    for g in ground(task):
        for atom in g.pre | g.add | g.delete:
            schema = dom.predicate(atom.predicate)
            assert all(dom.is_subtype(types[o], t) for o, t in zip(atom.args, schema.param_types))


def test_static_pruning_only_drops_unsatisfiable():
    _, text = to_pddl(HanoiState.tower(3, 0), HanoiState.tower(3, 2))
    task = parse_problem(text, hanoi_domain())
    full = ground(task)
    pruned = ground(task, prune_static=True)
    assert set(pruned) <= set(full) and len(pruned) < len(full)
    # a pruned operator needs a static fact that is false
    statics = task.domain.static_predicates()
    assert statics
    for g in set(full) - set(pruned):
        assert any(a.predicate in statics and a not in task.init for a in g.pre)


def test_round_trip_fixture_and_canonical_text():
    d = hanoi_domain()
    text = serialize_domain(d)
    assert parse_domain(text) == d
    assert serialize_domain(parse_domain(text)) == text
    # canonical: operators sorted by name
    assert text.index("(:action pick") < text.index("(:action place")
    assert parse_domain(hanoi_domain_text()) == d


def test_empty_domain_round_trip():
    d = Domain("empty", (), (), ())
    assert parse_domain(serialize_domain(d)) == d


def test_problem_round_trip():
    _, text = to_pddl(HanoiState(((3,), (2, 1), ())), HanoiState.tower(3, 2))
    d = hanoi_domain()
    t = parse_problem(text, d)
    assert parse_problem(serialize_problem(t), d) == t


names = st.sampled_from(["p", "q", "r", "s"])
types_ = st.sampled_from(["object", "block"])


@st.composite
def domains(draw):
    preds = {}
    for name in draw(st.lists(names, min_size=1, max_size=4, unique=True)):
        preds[name] = tuple(draw(st.lists(types_, max_size=2)))
    ops = []
    for k in range(draw(st.integers(0, 3))):
        params = tuple((f"?v{i}", draw(types_)) for i in range(draw(st.integers(0, 2))))
        vars_ = [v for v, _ in params]

        def atoms():
            out = set()
            for pname, ptypes in preds.items():
                fits = len(ptypes) <= len(vars_) and all(
                    pt == "object" or vt == "block" for (_, vt), pt in zip(params, ptypes))
                if fits and draw(st.booleans()):
                    out.add(Atom(pname, tuple(vars_[:len(ptypes)])))
            return frozenset(out)
        pre, add = atoms(), atoms()
        delete = atoms() - add
        ops.append(OperatorSchema(f"op{k}", params, pre, add, delete))
    return Domain("gen", (("block", "object"),),
                  tuple(PredicateSchema(n, t) for n, t in sorted(preds.items())), tuple(ops),
                  (":strips", ":typing"))


@settings(max_examples=60, deadline=None)
@given(domains())
def test_round_trip_property(d):
    back = parse_domain(serialize_domain(d))
    assert serialize_domain(back) == serialize_domain(d)
    assert {o.name: (o.params, o.pre, o.add, o.delete) for o in back.operators} == \
        {o.name: (o.params, o.pre, o.add, o.delete) for o in d.operators}
