"""Typed STRIPS domains and problems: data model, PDDL subset parser,
grounding and canonical serialization."""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple

SUPPORTED_REQUIREMENTS = frozenset({":strips", ":typing"})
ROOT_TYPE = "object"


class PDDLError(ValueError):
    """Raised for malformed or inconsistent PDDL input."""

    def __init__(self, message, line=None, col=None, snippet=None):
        self.message = message
        self.line = line
        self.col = col
        self.snippet = snippet
        where = f" at line {line}, column {col}" if line is not None else ""
        text = f"{message}{where}"
        if snippet:
            text += f": {snippet}"
        super().__init__(text)


class Atom(NamedTuple):
    """A predicate applied to entities (ground) or variables (lifted)."""

    predicate: str
    args: tuple = ()

    def __str__(self):
        if not self.args:
            return f"({self.predicate})"
        return f"({self.predicate} {' '.join(self.args)})"

    def substitute(self, binding: Mapping[str, str]) -> "Atom":
        return Atom(self.predicate, tuple(binding.get(a, a) for a in self.args))


def is_variable(term: str) -> bool:
    return term.startswith("?")


@dataclass(frozen=True)
class PredicateSchema:
    name: str
    param_types: tuple = ()

    @property
    def arity(self) -> int:
        return len(self.param_types)


@dataclass(frozen=True)
class OperatorSchema:
    """Lifted STRIPS operator; ``params`` is a tuple of (variable, type)."""

    name: str
    params: tuple
    pre: frozenset
    add: frozenset
    delete: frozenset

    def __post_init__(self):
        clash = self.add & self.delete
        if clash:
            raise PDDLError(f"operator {self.name!r} both adds and deletes "
                            f"{sorted(map(str, clash))}")
        declared = {v for v, _ in self.params}
        for atom in itertools.chain(self.pre, self.add, self.delete):
            for arg in atom.args:
                if is_variable(arg) and arg not in declared:
                    raise PDDLError(f"variable {arg} in operator {self.name!r} "
                                    f"is not a parameter")

    @property
    def param_names(self) -> tuple:
        return tuple(v for v, _ in self.params)


@dataclass(frozen=True)
class Domain:
    """Types, predicates and operator schemas.

    ``types`` maps each declared type to its parent as a sorted tuple of
    ``(type, parent)`` pairs; ``object`` is the implicit root.
    """

    name: str
    types: tuple = ()
    predicates: tuple = ()
    operators: tuple = ()
    requirements: tuple = (":strips", ":typing")

    def __post_init__(self):
        object.__setattr__(self, "types", tuple(sorted(self.types)))
        object.__setattr__(self, "predicates",
                           tuple(sorted(self.predicates, key=lambda p: p.name)))
        object.__setattr__(self, "operators",
                           tuple(sorted(self.operators, key=lambda o: o.name)))
        object.__setattr__(self, "requirements", tuple(sorted(set(self.requirements))))
        names = [p.name for p in self.predicates]
        if len(names) != len(set(names)):
            raise PDDLError("duplicate predicate names")
        ops = [o.name for o in self.operators]
        if len(ops) != len(set(ops)):
            raise PDDLError("duplicate operator names")

    @property
    def parent(self) -> dict:
        return dict(self.types)

    def predicate(self, name: str) -> PredicateSchema:
        for p in self.predicates:
            if p.name == name:
                return p
        raise KeyError(name)

    def operator(self, name: str) -> OperatorSchema:
        for o in self.operators:
            if o.name == name:
                return o
        raise KeyError(name)

    def type_names(self) -> set:
        return {ROOT_TYPE} | {t for t, _ in self.types} | {p for _, p in self.types}

    def is_subtype(self, child: str, ancestor: str) -> bool:
        parent = self.parent
        seen = set()
        t = child
        while t not in seen:
            if t == ancestor:
                return True
            seen.add(t)
            if t == ROOT_TYPE:
                return ancestor == ROOT_TYPE
            t = parent.get(t, ROOT_TYPE)
        return False

    def static_predicates(self) -> set:
        changed = {a.predicate for o in self.operators for a in o.add | o.delete}
        return {p.name for p in self.predicates} - changed


@dataclass(frozen=True)
class GroundedOperator:
    name: str
    args: tuple
    pre: frozenset
    add: frozenset
    delete: frozenset

    def __str__(self):
        return f"({self.name}{''.join(' ' + a for a in self.args)})"

    @property
    def sort_key(self):
        return (self.name, self.args)


@dataclass(frozen=True)
class PlanningTask:
    domain: Domain
    objects: tuple  # sorted (name, type) pairs
    init: frozenset
    goal: frozenset
    name: str = "task"

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(sorted(self.objects)))

    @property
    def object_types(self) -> dict:
        return dict(self.objects)

    def objects_of_type(self, type_name: str) -> list:
        return [o for o, t in self.objects if self.domain.is_subtype(t, type_name)]


@dataclass(frozen=True)
class Plan:
    steps: tuple = field(default_factory=tuple)

    def __len__(self):
        return len(self.steps)

    def __iter__(self):
        return iter(self.steps)


# ---------------------------------------------------------------------------
# S-expression reader


class _Tok(NamedTuple):
    text: str
    line: int
    col: int


_TOKEN_RE = re.compile(r"\(|\)|[^\s()]+")


def _tokenize(text: str) -> list:
    toks = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split(";", 1)[0]
        for m in _TOKEN_RE.finditer(line):
            toks.append(_Tok(m.group().lower(), lineno, m.start() + 1))
    return toks


class _SExpr(list):
    """List node that remembers where it opened."""

    line = 0
    col = 0


def _read_sexpr(text: str):
    lines = text.splitlines()

    def err(msg, tok):
        snippet = lines[tok.line - 1].strip() if 0 < tok.line <= len(lines) else None
        return PDDLError(msg, tok.line, tok.col, snippet)

    toks = _tokenize(text)
    if not toks:
        raise PDDLError("empty input", 1, 1)
    stack = []
    root = None
    for tok in toks:
        if tok.text == "(":
            node = _SExpr()
            node.line, node.col = tok.line, tok.col
            if stack:
                stack[-1].append(node)
            elif root is not None:
                raise err("unexpected content after top-level expression", tok)
            else:
                root = node
            stack.append(node)
        elif tok.text == ")":
            if not stack:
                raise err("unbalanced ')'", tok)
            stack.pop()
        else:
            if not stack:
                raise err(f"unexpected token {tok.text!r} outside expression", tok)
            stack[-1].append(tok)
    if stack:
        raise err("unclosed '('", _Tok("(", stack[-1].line, stack[-1].col))
    return root, err


def _name(node, err, what="identifier"):
    if not isinstance(node, _Tok):
        raise err(f"expected {what}", _Tok("", node.line, node.col))
    return node.text


def _typed_list(nodes, err) -> list:
    out = []
    pending = []
    i = 0
    while i < len(nodes):
        tok = nodes[i]
        name = _name(tok, err)
        if name == "-":
            if i + 1 >= len(nodes) or not pending:
                raise err("dangling '-' in typed list", tok)
            t = _name(nodes[i + 1], err, "type name")
            out.extend((p, t, ptok) for p, ptok in pending)
            pending = []
            i += 2
            continue
        pending.append((name, tok))
        i += 1
    out.extend((p, ROOT_TYPE, ptok) for p, ptok in pending)
    return out


def _where(node):
    if isinstance(node, _Tok):
        return node
    return _Tok("", node.line, node.col)


def _conjunction(node, err) -> list:
    """Flatten ``(and ...)`` or a single literal into a list of literal nodes."""
    if isinstance(node, _Tok):
        raise err("expected a condition", node)
    if node and isinstance(node[0], _Tok) and node[0].text == "and":
        return list(node[1:])
    return [node]


def parse_domain(text: str) -> Domain:
    root, err = _read_sexpr(text)
    if len(root) < 2 or _name(root[0], err) != "define":
        raise err("expected (define (domain ...) ...)", _where(root))
    header = root[1]
    if isinstance(header, _Tok) or len(header) != 2 or _name(header[0], err) != "domain":
        raise err("expected (domain <name>)", _where(header))
    dname = _name(header[1], err)

    requirements = []
    types = {}
    predicates = {}
    operators = []
    for section in root[2:]:
        if isinstance(section, _Tok) or not section:
            raise err("expected a domain section", _where(section))
        key = _name(section[0], err)
        if key == ":requirements":
            for tok in section[1:]:
                flag = _name(tok, err)
                if flag not in SUPPORTED_REQUIREMENTS:
                    raise err(f"unsupported requirement {flag}", tok)
                requirements.append(flag)
        elif key == ":types":
            for t, parent, tok in _typed_list(section[1:], err):
                if t == ROOT_TYPE:
                    continue
                types[t] = parent
                seen, cur = {t}, parent
                while cur in types:
                    if cur in seen:
                        raise err(f"cyclic type hierarchy through {t!r}", tok)
                    seen.add(cur)
                    cur = types[cur]
        elif key == ":predicates":
            declared = set(types) | set(types.values()) | {ROOT_TYPE}
            for pnode in section[1:]:
                if isinstance(pnode, _Tok) or not pnode:
                    raise err("expected predicate declaration", _where(pnode))
                pname = _name(pnode[0], err)
                ptypes = []
                for var, t, tok in _typed_list(pnode[1:], err):
                    if not is_variable(var):
                        raise err(f"predicate parameter {var!r} must be a variable", tok)
                    if t not in declared:
                        raise err(f"undeclared type {t!r}", tok)
                    ptypes.append(t)
                if pname in predicates:
                    raise err(f"duplicate predicate {pname!r}", pnode[0])
                predicates[pname] = PredicateSchema(pname, tuple(ptypes))
        elif key == ":action":
            operators.append((section, None))
        else:
            raise err(f"unsupported domain section {key}", section[0])

    for parent in set(types.values()) - set(types) - {ROOT_TYPE}:
        types[parent] = ROOT_TYPE
    dom = Domain(dname, tuple(types.items()), tuple(predicates.values()), (),
                 tuple(requirements))
    ops = [_parse_action(node, dom, err) for node, _ in operators]
    return Domain(dname, dom.types, dom.predicates, tuple(ops), dom.requirements)


def _parse_atom(node, dom: Domain, err, var_types=None, obj_types=None) -> Atom:
    if isinstance(node, _Tok) or not node:
        raise err("expected an atom", _where(node))
    pname = _name(node[0], err)
    try:
        schema = dom.predicate(pname)
    except KeyError:
        raise err(f"undeclared predicate {pname!r}", node[0]) from None
    args = []
    for tok in node[1:]:
        args.append(_name(tok, err, "argument"))
    if len(args) != schema.arity:
        raise err(f"arity mismatch for {pname!r}: expected {schema.arity}, "
                  f"got {len(args)}", node[0])
    for arg, tok, ptype in zip(args, node[1:], schema.param_types):
        if is_variable(arg):
            if var_types is None or arg not in var_types:
                raise err(f"variable {arg} is not a parameter", tok)
            t = var_types[arg]
        else:
            if obj_types is None or arg not in obj_types:
                raise err(f"undeclared object {arg!r}", tok)
            t = obj_types[arg]
        if not dom.is_subtype(t, ptype):
            raise err(f"type mismatch: {arg} is {t}, {pname} expects {ptype}", tok)
    return Atom(pname, tuple(args))


def _parse_action(node, dom: Domain, err) -> OperatorSchema:
    if len(node) < 2:
        raise err("action needs a name", _where(node))
    aname = _name(node[1], err)
    params = []
    pre, add, delete = set(), set(), set()
    declared = dom.type_names()
    i = 2
    parts = {}
    while i < len(node):
        key = _name(node[i], err)
        if i + 1 >= len(node):
            raise err(f"missing value for {key}", node[i])
        parts[key] = node[i + 1]
        i += 2
    for key in parts:
        if key not in (":parameters", ":precondition", ":effect"):
            raise err(f"unsupported action field {key}", _where(parts[key]))
    pnode = parts.get(":parameters", _SExpr())
    if isinstance(pnode, _Tok):
        raise err("expected parameter list", pnode)
    for var, t, tok in _typed_list(list(pnode), err):
        if not is_variable(var):
            raise err(f"parameter {var!r} must be a variable", tok)
        if t not in declared:
            raise err(f"undeclared type {t!r}", tok)
        params.append((var, t))
    var_types = dict(params)
    if ":precondition" in parts:
        for lit in _conjunction(parts[":precondition"], err):
            if isinstance(lit, _SExpr) and lit and _name(lit[0], err) == "not":
                raise err("negative preconditions are not supported", lit[0])
            pre.add(_parse_atom(lit, dom, err, var_types))
    if ":effect" in parts:
        for lit in _conjunction(parts[":effect"], err):
            if isinstance(lit, _SExpr) and lit and isinstance(lit[0], _Tok) \
                    and lit[0].text == "not":
                if len(lit) != 2:
                    raise err("malformed negative effect", lit[0])
                delete.add(_parse_atom(lit[1], dom, err, var_types))
            else:
                add.add(_parse_atom(lit, dom, err, var_types))
    try:
        return OperatorSchema(aname, tuple(params), frozenset(pre), frozenset(add),
                              frozenset(delete))
    except PDDLError as exc:
        raise err(exc.message, node[1]) from None


def parse_problem(text: str, domain: Domain) -> PlanningTask:
    root, err = _read_sexpr(text)
    if len(root) < 2 or _name(root[0], err) != "define":
        raise err("expected (define (problem ...) ...)", _where(root))
    header = root[1]
    if isinstance(header, _Tok) or len(header) != 2 or _name(header[0], err) != "problem":
        raise err("expected (problem <name>)", _where(header))
    pname = _name(header[1], err)
    objects = {}
    init, goal = set(), set()
    sections = {}
    declared = domain.type_names()
    for section in root[2:]:
        if isinstance(section, _Tok) or not section:
            raise err("expected a problem section", _where(section))
        key = _name(section[0], err)
        if key not in (":domain", ":objects", ":init", ":goal"):
            raise err(f"unsupported problem section {key}", section[0])
        sections[key] = section
    if ":domain" in sections:
        dref = _name(sections[":domain"][1], err)
        if dref != domain.name:
            raise err(f"problem is for domain {dref!r}, not {domain.name!r}",
                      sections[":domain"][1])
    if ":objects" in sections:
        for obj, t, tok in _typed_list(sections[":objects"][1:], err):
            if t not in declared:
                raise err(f"undeclared type {t!r}", tok)
            if obj in objects:
                raise err(f"duplicate object {obj!r}", tok)
            objects[obj] = t
    if ":init" in sections:
        for lit in sections[":init"][1:]:
            init.add(_parse_atom(lit, domain, err, obj_types=objects))
    if ":goal" in sections:
        gnode = sections[":goal"]
        if len(gnode) > 1:
            for lit in _conjunction(gnode[1], err):
                goal.add(_parse_atom(lit, domain, err, obj_types=objects))
    return PlanningTask(domain, tuple(objects.items()), frozenset(init),
                        frozenset(goal), pname)


# ---------------------------------------------------------------------------
# grounding


def ground_operator(schema: OperatorSchema, args: Iterable[str]) -> GroundedOperator:
    args = tuple(args)
    if len(args) != len(schema.params):
        raise ValueError(f"{schema.name} takes {len(schema.params)} arguments, "
                         f"got {len(args)}")
    binding = dict(zip(schema.param_names, args))
    return GroundedOperator(
        schema.name, args,
        frozenset(a.substitute(binding) for a in schema.pre),
        frozenset(a.substitute(binding) for a in schema.add),
        frozenset(a.substitute(binding) for a in schema.delete),
    )


def ground(task: PlanningTask, allow_self_binding: bool = False,
           prune_static: bool = False) -> list:
    """Enumerate every type-consistent grounding, sorted by (name, args).

    Distinct parameters bind distinct objects unless ``allow_self_binding``.
    ``prune_static`` drops groundings whose static preconditions are false
    in the initial state.
    """
    statics = task.domain.static_predicates() if prune_static else set()
    out = []
    for schema in task.domain.operators:
        pools = [task.objects_of_type(t) for _, t in schema.params]
        for combo in itertools.product(*pools):
            if not allow_self_binding and len(set(combo)) != len(combo):
                continue
            op = ground_operator(schema, combo)
            if statics and any(a.predicate in statics and a not in task.init
                               for a in op.pre):
                continue
            out.append(op)
    out.sort(key=lambda o: o.sort_key)
    return out


# ---------------------------------------------------------------------------
# serialization


def _typed_names(pairs) -> str:
    """Render (name, type) pairs grouping consecutive names of equal type."""
    chunks = []
    for t, group in itertools.groupby(pairs, key=lambda p: p[1]):
        names = " ".join(n for n, _ in group)
        chunks.append(f"{names} - {t}")
    return " ".join(chunks)


def _atoms(atoms) -> list:
    return sorted(str(a) for a in atoms)


def _conj(atoms, negate=()) -> str:
    parts = _atoms(atoms) + [f"(not {a})" for a in _atoms(negate)]
    return "(and" + "".join(" " + p for p in parts) + ")"


def serialize_domain(domain: Domain) -> str:
    lines = [f"(define (domain {domain.name})"]
    lines.append("  (:requirements " + " ".join(domain.requirements) + ")"
                 if domain.requirements else "  (:requirements)")
    if domain.types:
        by_parent = {}
        for t, parent in domain.types:
            by_parent.setdefault(parent, []).append(t)
        chunks = [" ".join(sorted(ts)) + f" - {p}" for p, ts in sorted(by_parent.items())]
        lines.append("  (:types " + " ".join(chunks) + ")")
    if domain.predicates:
        lines.append("  (:predicates")
        for p in domain.predicates:
            params = [(f"?x{i}", t) for i, t in enumerate(p.param_types)]
            body = (" " + _typed_names(params)) if params else ""
            lines.append(f"    ({p.name}{body})")
        lines.append("  )")
    for op in domain.operators:
        lines.append(f"  (:action {op.name}")
        lines.append(f"    :parameters ({_typed_names(op.params)})")
        lines.append(f"    :precondition {_conj(op.pre)}")
        lines.append(f"    :effect {_conj(op.add, op.delete)})")
    lines.append(")")
    return "\n".join(lines) + "\n"


def serialize_problem(task: PlanningTask) -> str:
    by_type = sorted(task.objects, key=lambda p: (p[1], p[0]))
    lines = [f"(define (problem {task.name})",
             f"  (:domain {task.domain.name})",
             f"  (:objects {_typed_names(by_type)})" if by_type else "  (:objects)",
             "  (:init"]
    lines.extend(f"    {a}" for a in _atoms(task.init))
    lines.append("  )")
    lines.append(f"  (:goal {_conj(task.goal)})")
    lines.append(")")
    return "\n".join(lines) + "\n"
