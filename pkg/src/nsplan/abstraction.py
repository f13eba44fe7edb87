"""Symbolic abstraction from demonstrations: labeled transition graph,
minimal bisimulation quotient, and lifted STRIPS operator induction."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import NamedTuple

from .pddl import Atom, Domain, OperatorSchema, PredicateSchema, ROOT_TYPE, ground_operator
from .world import AREAS, DEFAULT_SCENE, SceneConfig, hanoi_domain


class GraphError(ValueError):
    """Inconsistent demonstration annotations."""


class InductionFailure(ValueError):
    def __init__(self, label, message, witness=()):
        self.label = label
        self.witness = tuple(witness)
        super().__init__(f"label {label!r}: {message}")


class NodeTransition(NamedTuple):
    source: frozenset
    label: str
    target: frozenset


def skill_of(label: str) -> str:
    """Skill name of a transition label such as ``"place blue middle"``."""
    return label.split()[0]


def descriptor_key(desc) -> tuple:
    return tuple(sorted(str(a) for a in desc))


@dataclass(frozen=True)
class Vocabulary:
    """Feature vocabulary: typed predicates plus the entity universe."""

    types: tuple
    predicates: tuple
    entities: tuple  # sorted (entity, type) pairs
    domain_name: str = "learned"

    def domain(self, operators=()) -> Domain:
        return Domain(self.domain_name, self.types, self.predicates, tuple(operators))


def hanoi_vocabulary(scene: SceneConfig = DEFAULT_SCENE) -> Vocabulary:
    dom = hanoi_domain()
    ents = [(b.color, "block") for b in scene.blocks] + [(a, "area") for a in AREAS]
    return Vocabulary(dom.types, dom.predicates, tuple(sorted(ents)), "hanoi-learned")


# ---------------------------------------------------------------------------
# graph


@dataclass(frozen=True)
class DemoGraph:
    """Nodes are integer ids; ``features`` maps id to its descriptor."""

    nodes: tuple
    edges: frozenset
    features: dict = field(default_factory=dict, compare=False, hash=False)

    @property
    def labels(self) -> frozenset:
        return frozenset(l for _, l, _ in self.edges)

    def successors(self) -> dict:
        succ = {v: set() for v in self.nodes}
        for u, l, w in self.edges:
            succ[u].add((l, w))
        return succ

    def to_json(self) -> str:
        return json.dumps({
            "nodes": [{"id": v, "features": list(descriptor_key(self.features.get(v, ())))}
                      for v in self.nodes],
            "edges": [{"src": u, "label": l, "dst": w} for u, l, w in sorted(self.edges)],
        }, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "DemoGraph":
        data = json.loads(text)
        feats = {n["id"]: frozenset(parse_atom(a) for a in n["features"]) for n in data["nodes"]}
        edges = frozenset((e["src"], e["label"], e["dst"]) for e in data["edges"])
        return cls(tuple(sorted(feats)), edges, feats)


def parse_atom(text: str) -> Atom:
    parts = text.strip().strip("()").split()
    return Atom(parts[0], tuple(parts[1:]))


def build_graph(demos, allow_self_loops: bool = False) -> DemoGraph:
    """Merge per-demo transition lists into one graph.

    Nodes are identified by descriptor equality; ids follow the sorted
    descriptor order so the result is independent of demo order.
    """
    transitions = set()
    for demo in demos:
        for tr in demo:
            src, label, dst = frozenset(tr[0]), tr[1], frozenset(tr[2])
            if not label:
                raise GraphError("empty transition label")
            if src == dst and not allow_self_loops:
                raise GraphError(f"self-loop transition labeled {label!r}")
            transitions.add(NodeTransition(src, label, dst))
    descs = sorted({t.source for t in transitions} | {t.target for t in transitions},
                   key=descriptor_key)
    ids = {d: i for i, d in enumerate(descs)}
    seen = {}
    for t in sorted(transitions, key=lambda t: (descriptor_key(t.source), t.label,
                                                descriptor_key(t.target))):
        key = (t.source, t.label)
        if key in seen and seen[key] != t.target:
            raise GraphError(
                f"label {t.label!r} leads from one node to two targets: "
                f"{descriptor_key(seen[key])} vs {descriptor_key(t.target)}")
        seen[key] = t.target
    edges = frozenset((ids[t.source], t.label, ids[t.target]) for t in transitions)
    return DemoGraph(tuple(range(len(descs))), edges, {i: d for d, i in ids.items()})


# ---------------------------------------------------------------------------
# bisimulation


@dataclass(frozen=True)
class QuotientGraph:
    graph: DemoGraph
    classes: tuple      # tuple of frozensets of node ids, ordered by smallest member
    class_of: dict = field(compare=False, hash=False)
    edges: frozenset = frozenset()

    def class_rep(self, c: int) -> int:
        return min(self.classes[c])

    def as_graph(self) -> DemoGraph:
        feats = {i: self.graph.features.get(self.class_rep(i), frozenset())
                 for i in range(len(self.classes))}
        return DemoGraph(tuple(range(len(self.classes))), self.edges, feats)

    def witnesses(self, skill: str) -> list:
        """Original transitions behind the quotient edges of one skill."""
        return [NodeTransition(self.graph.features[u], l, self.graph.features[w])
                for u, l, w in sorted(self.graph.edges) if skill_of(l) == skill]


def bisimulation_minimize(graph: DemoGraph, respect_features: bool = False) -> QuotientGraph:
    """Coarsest stable partition by iterated signature refinement.

    With ``respect_features`` the initial partition separates nodes with
    different descriptors; by default only labeled structure counts.
    """
    succ = graph.successors()
    if respect_features:
        keys = sorted({descriptor_key(graph.features.get(v, ())) for v in graph.nodes})
        index = {k: i for i, k in enumerate(keys)}
        block = {v: index[descriptor_key(graph.features.get(v, ()))] for v in graph.nodes}
    else:
        block = {v: 0 for v in graph.nodes}
    n_blocks = len(set(block.values()))
    while True:
        sig = {v: (block[v], tuple(sorted({(l, block[w]) for l, w in succ[v]})))
               for v in graph.nodes}
        order = {}
        for v in graph.nodes:
            order.setdefault(sig[v], len(order))
        block = {v: order[sig[v]] for v in graph.nodes}
        if len(order) == n_blocks:
            break
        n_blocks = len(order)
    members = {}
    for v in graph.nodes:
        members.setdefault(block[v], set()).add(v)
    classes = sorted((frozenset(m) for m in members.values()), key=min)
    class_of = {v: i for i, c in enumerate(classes) for v in c}
    edges = frozenset((class_of[u], l, class_of[w]) for u, l, w in graph.edges)
    return QuotientGraph(graph, tuple(classes), class_of, edges)


# ---------------------------------------------------------------------------
# operator induction


def _effect_order(add, delete):
    """Effects listed highest arity first, then predicate, adds before deletes."""
    items = [(a, 0) for a in add] + [(a, 1) for a in delete]
    items.sort(key=lambda x: (-len(x[0].args), x[0].predicate, x[1], x[0].args))
    return items


def _first_occurrence(items) -> list:
    objs = []
    for atom, _ in items:
        for o in atom.args:
            if o not in objs:
                objs.append(o)
    return objs


def _lift(atoms, binding) -> frozenset:
    return frozenset(a.substitute(binding) for a in atoms if all(o in binding for o in a.args))


class _Vocab:
    def __init__(self, vocab: Vocabulary):
        self.vocab = vocab
        self.dom = vocab.domain()
        self.etype = dict(vocab.entities)

    def type_of(self, e):
        if e not in self.etype:
            raise KeyError(f"entity {e!r} is not in the vocabulary")
        return self.etype[e]

    def ancestors(self, t):
        chain = [t]
        parent = self.dom.parent
        while chain[-1] != ROOT_TYPE:
            chain.append(parent.get(chain[-1], ROOT_TYPE))
        return chain

    def common_type(self, types):
        types = list(types)
        chain = self.ancestors(types[0])
        for t in types[1:]:
            anc = set(self.ancestors(t))
            chain = [c for c in chain if c in anc]
        return chain[0]


def _var_names(types) -> list:
    counts = {}
    for t in types:
        counts[t] = counts.get(t, 0) + 1
    seen = {}
    names = []
    for t in types:
        if counts[t] == 1:
            names.append(f"?{t}")
        else:
            seen[t] = seen.get(t, 0) + 1
            names.append(f"?{t}{seen[t]}")
    return names


def induce_operators(quotient: QuotientGraph, vocab: Vocabulary, k: int = 4) -> Domain:
    """One lifted schema per skill that replays every observed transition."""
    v = _Vocab(vocab)
    states = [quotient.graph.features[n] for n in quotient.graph.nodes]
    skills = sorted({skill_of(l) for _, l, _ in quotient.edges})
    ops = [_induce_label(sk, quotient.witnesses(sk), states, v, k) for sk in skills]
    return vocab.domain(ops)


def _induce_label(label, transitions, states, v: _Vocab, k: int) -> OperatorSchema:
    ref = transitions[0]
    ref_items = _effect_order(ref.target - ref.source, ref.source - ref.target)
    ref_objs = _first_occurrence(ref_items)
    placeholders = [f"?_{i}" for i in range(len(ref_objs))]
    ref_bind = dict(zip(ref_objs, placeholders))
    ref_add = _lift(ref.target - ref.source, ref_bind)
    ref_del = _lift(ref.source - ref.target, ref_bind)
    if not ref_add and not ref_del:
        raise InductionFailure(label, "transition has no effect", (ref,))

    bindings = []
    for t in transitions:
        add, delete = t.target - t.source, t.source - t.target
        objs = _first_occurrence(_effect_order(add, delete))
        found = None
        if len(objs) == len(ref_objs):
            for perm in itertools.permutations(placeholders):
                b = dict(zip(objs, perm))
                if _lift(add, b) == ref_add and _lift(delete, b) == ref_del \
                        and len(_lift(add, b)) == len(add) and len(_lift(delete, b)) == len(delete):
                    found = b
                    break
        if found is None:
            raise InductionFailure(label, "transitions have incompatible effects", (ref, t))
        bindings.append(found)

    ptypes = []
    for i, ph in enumerate(placeholders):
        ents = {o for b in bindings for o, p in b.items() if p == ph}
        ptypes.append(v.common_type(sorted(v.type_of(e) for e in ents)))
    names = _var_names(ptypes)
    rename = dict(zip(placeholders, names))

    candidate = None
    for t, b in zip(transitions, bindings):
        lifted = _lift(t.source, b)
        candidate = lifted if candidate is None else candidate & lifted
    candidate = sorted(candidate, key=lambda a: (a.predicate, a.args))

    pre = _minimal_precondition(candidate, placeholders, ptypes, states, v, k, label)

    def fin(atoms):
        return frozenset(a.substitute(rename) for a in atoms)

    schema = OperatorSchema(label, tuple(zip(names, ptypes)), fin(pre), fin(ref_add), fin(ref_del))
    for t, b in zip(transitions, bindings):
        args = [None] * len(placeholders)
        for o, ph in b.items():
            args[placeholders.index(ph)] = o
        g = ground_operator(schema, args)
        if not g.pre <= t.source or (t.source - g.delete) | g.add != t.target:
            raise InductionFailure(label, "induced schema does not replay a transition", (t,))
    return schema


def _minimal_precondition(candidate, placeholders, ptypes, states, v: _Vocab, k, label):
    """Smallest subset of ``candidate`` that agrees with it on every observed
    state and binding; ties go to the lexicographically first subset."""
    pools = [[e for e, t in v.vocab.entities if v.dom.is_subtype(t, pt)] for pt in ptypes]
    rows = []
    for state in states:
        for combo in itertools.product(*pools):
            if len(set(combo)) != len(combo):
                continue
            b = dict(zip(placeholders, combo))
            rows.append(tuple(a.substitute(b) in state for a in candidate))
    full = [all(r) for r in rows]
    for size in range(0, min(k, len(candidate)) + 1):
        for subset in itertools.combinations(range(len(candidate)), size):
            if all(all(r[i] for i in subset) == f for r, f in zip(rows, full)):
                return [candidate[i] for i in subset]
    raise InductionFailure(
        label, f"no precondition of at most {k} atoms is consistent with the data",
        tuple(candidate))


def learn_domain(demos, vocab: Vocabulary, k: int = 4):
    """Full pipeline; returns (domain, graph, quotient)."""
    graph = build_graph(demos)
    quotient = bisimulation_minimize(graph)
    return induce_operators(quotient, vocab, k), graph, quotient
