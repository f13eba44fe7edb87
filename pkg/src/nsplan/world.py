"""Discrete Towers-of-Hanoi world: scene configuration, rule semantics,
BFS oracle and the bridge to PDDL planning tasks."""

from __future__ import annotations

import itertools
import json
from collections import deque
from dataclasses import dataclass
from importlib import resources
from typing import Optional

import numpy as np

from .pddl import (Atom, Domain, PlanningTask, parse_domain, parse_problem, serialize_domain,
                   serialize_problem)

AREAS = ("left", "middle", "right")


@dataclass(frozen=True)
class Block:
    id: int
    color: str
    half_extent: float


@dataclass(frozen=True)
class SceneConfig:
    """Geometry and block catalogue. Block ids rank size, larger id = larger block."""

    blocks: tuple = (
        Block(1, "blue", 0.015),
        Block(2, "green", 0.020),
        Block(3, "red", 0.025),
        Block(4, "yellow", 0.030),
    )
    area_x: tuple = (-0.12, 0.0, 0.12)
    area_y: float = 0.0
    area_half_width: float = 0.05
    table_z: float = 0.0
    placement_noise_std: float = 0.0
    perception_noise_std: float = 0.0

    def __post_init__(self):
        ids = [b.id for b in self.blocks]
        sizes = [b.half_extent for b in sorted(self.blocks, key=lambda b: b.id)]
        if sorted(ids) != ids or len(set(ids)) != len(ids):
            raise ValueError("block ids must be unique and sorted")
        if any(a >= b for a, b in zip(sizes, sizes[1:])):
            raise ValueError("block size must increase strictly with id")
        if len({b.color for b in self.blocks}) != len(self.blocks):
            raise ValueError("block colors must be unique")

    def block(self, bid: int) -> Block:
        for b in self.blocks:
            if b.id == bid:
                return b
        raise KeyError(bid)

    def color(self, bid: int) -> str:
        return self.block(bid).color

    def block_id(self, color: str) -> int:
        for b in self.blocks:
            if b.color == color:
                return b.id
        raise KeyError(color)

    def area_center(self, area: int) -> np.ndarray:
        return np.array([self.area_x[area], self.area_y, self.table_z])

    @classmethod
    def from_dict(cls, data: dict) -> "SceneConfig":
        data = dict(data)
        if "blocks" in data:
            data["blocks"] = tuple(Block(**b) for b in data["blocks"])
        if "area_x" in data:
            data["area_x"] = tuple(data["area_x"])
        return cls(**data)

    def to_dict(self) -> dict:
        return {
            "blocks": [vars(b) for b in self.blocks],
            "area_x": list(self.area_x),
            "area_y": self.area_y,
            "area_half_width": self.area_half_width,
            "table_z": self.table_z,
            "placement_noise_std": self.placement_noise_std,
            "perception_noise_std": self.perception_noise_std,
        }

    @classmethod
    def load(cls, path) -> "SceneConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


DEFAULT_SCENE = SceneConfig()


class IllegalMove(ValueError):
    pass


@dataclass(frozen=True)
class HanoiState:
    """Three stacks listed bottom-to-top plus an optional held block."""

    stacks: tuple = ((), (), ())
    holding: Optional[int] = None

    def __post_init__(self):
        stacks = tuple(tuple(s) for s in self.stacks)
        object.__setattr__(self, "stacks", stacks)
        if len(stacks) != 3:
            raise ValueError("expected three stacks")
        for s in stacks:
            if any(a <= b for a, b in zip(s, s[1:])):
                raise ValueError(f"stack {s} violates size ordering")
        seen = [b for s in stacks for b in s]
        if self.holding is not None:
            seen.append(self.holding)
        if len(seen) != len(set(seen)):
            raise ValueError("a block appears more than once")

    @property
    def blocks(self) -> tuple:
        held = () if self.holding is None else (self.holding,)
        return tuple(sorted(itertools.chain(held, *self.stacks)))

    def area_of(self, bid: int) -> Optional[int]:
        for i, s in enumerate(self.stacks):
            if bid in s:
                return i
        return None

    def below(self, bid: int):
        """Block id under ``bid`` or ``('area', i)`` when it rests on an area."""
        i = self.area_of(bid)
        s = self.stacks[i]
        k = s.index(bid)
        return s[k - 1] if k else ("area", i)

    @classmethod
    def tower(cls, n: int, area: int = 0) -> "HanoiState":
        stacks = [(), (), ()]
        stacks[area] = tuple(range(n, 0, -1))
        return cls(tuple(stacks))


def legal_moves(state: HanoiState) -> list:
    """(block, target area) pairs; areas scanned left to right for both ends."""
    if state.holding is not None:
        raise ValueError("discrete moves require an empty hand")
    moves = []
    for src, s in enumerate(state.stacks):
        if not s:
            continue
        top = s[-1]
        for dst, t in enumerate(state.stacks):
            if dst != src and (not t or t[-1] > top):
                moves.append((top, dst))
    return moves


def apply_move(state: HanoiState, move) -> HanoiState:
    block, dst = move
    src = state.area_of(block)
    if src is None or state.stacks[src][-1] != block:
        raise IllegalMove(f"block {block} is not on top of a stack")
    if dst == src:
        raise IllegalMove("source and target area coincide")
    target = state.stacks[dst]
    if target and target[-1] < block:
        raise IllegalMove(f"block {block} cannot go on smaller block {target[-1]}")
    stacks = list(state.stacks)
    stacks[src] = stacks[src][:-1]
    stacks[dst] = target + (block,)
    return HanoiState(tuple(stacks))


def oracle_optimal(state: HanoiState, goal: HanoiState):
    """Shortest move list by BFS over the discrete configuration graph."""
    if state.blocks != goal.blocks:
        raise ValueError("state and goal hold different blocks")
    if state == goal:
        return 0, []
    parent = {state: None}
    frontier = deque([state])
    while frontier:
        s = frontier.popleft()
        for m in legal_moves(s):
            nxt = apply_move(s, m)
            if nxt in parent:
                continue
            parent[nxt] = (s, m)
            if nxt == goal:
                moves = []
                cur = nxt
                while parent[cur] is not None:
                    cur, mv = parent[cur]
                    moves.append(mv)
                moves.reverse()
                return len(moves), moves
            frontier.append(nxt)
    raise RuntimeError("goal unreachable")  # the configuration graph is connected


def all_configs(n: int) -> list:
    """Every valid configuration of blocks 1..n, in a fixed order."""
    out = []
    for assign in itertools.product(range(3), repeat=n):
        stacks = [[], [], []]
        for bid in range(n, 0, -1):
            stacks[assign[bid - 1]].append(bid)
        out.append(HanoiState(tuple(tuple(s) for s in stacks)))
    return out


def random_valid_config(n_blocks: int, seed=None, block_ids=None) -> HanoiState:
    """Uniform over the 3**n configurations; ``seed`` may be a Generator."""
    if not 1 <= n_blocks <= 4:
        raise ValueError("n_blocks must be in 1..4")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    ids = sorted(block_ids) if block_ids is not None else list(range(1, n_blocks + 1))
    assign = rng.integers(0, 3, size=len(ids))
    stacks = [[], [], []]
    for bid, area in sorted(zip(ids, assign), reverse=True):
        stacks[area].append(bid)
    return HanoiState(tuple(tuple(s) for s in stacks))


# ---------------------------------------------------------------------------
# PDDL bridge


def hanoi_domain_text() -> str:
    return resources.files("nsplan").joinpath("data/hanoi.pddl").read_text()


def hanoi_domain() -> Domain:
    return parse_domain(hanoi_domain_text())


def support_name(support, scene: SceneConfig = DEFAULT_SCENE) -> str:
    if isinstance(support, tuple):
        return AREAS[support[1]]
    return scene.color(support)


def state_atoms(state: HanoiState, scene: SceneConfig = DEFAULT_SCENE,
                statics: bool = True) -> frozenset:
    atoms = set()
    for i, s in enumerate(state.stacks):
        if not s:
            atoms.add(Atom("clear", (AREAS[i],)))
        for k, bid in enumerate(s):
            under = AREAS[i] if k == 0 else scene.color(s[k - 1])
            atoms.add(Atom("on", (scene.color(bid), under)))
        if s:
            atoms.add(Atom("clear", (scene.color(s[-1]),)))
    if state.holding is None:
        atoms.add(Atom("handempty"))
    else:
        atoms.add(Atom("holding", (scene.color(state.holding),)))
    if statics:
        atoms |= static_atoms(state.blocks, scene)
    return frozenset(atoms)


def static_atoms(block_ids, scene: SceneConfig = DEFAULT_SCENE) -> frozenset:
    atoms = set()
    for b in block_ids:
        for a in AREAS:
            atoms.add(Atom("smaller", (scene.color(b), a)))
        for c in block_ids:
            if b < c:
                atoms.add(Atom("smaller", (scene.color(b), scene.color(c))))
    return frozenset(atoms)


def state_from_atoms(atoms, scene: SceneConfig = DEFAULT_SCENE) -> HanoiState:
    """Inverse of :func:`state_atoms` for atom sets describing a valid state."""
    on = {a.args[0]: a.args[1] for a in atoms if a.predicate == "on"}
    holding = [a.args[0] for a in atoms if a.predicate == "holding"]
    stacks = [[], [], []]
    for i, area in enumerate(AREAS):
        cur = area
        while True:
            above = [b for b, s in on.items() if s == cur]
            if not above:
                break
            if len(above) > 1:
                raise ValueError(f"two blocks on {cur}")
            cur = above[0]
            stacks[i].append(scene.block_id(cur))
    held = scene.block_id(holding[0]) if holding else None
    return HanoiState(tuple(tuple(s) for s in stacks), held)


def to_pddl(state: HanoiState, goal: HanoiState, scene: SceneConfig = DEFAULT_SCENE,
            name: str = "hanoi-task", domain: Domain = None):
    """Return (domain text, problem text) for moving ``state`` to ``goal``.

    The bundled domain is used unless ``domain`` (e.g. a learned one with
    the same vocabulary) is given.
    """
    objects = [(scene.color(b), "block") for b in state.blocks] + [(a, "area") for a in AREAS]
    goal_atoms = frozenset(a for a in state_atoms(goal, scene, statics=False)
                           if a.predicate == "on")
    dom = hanoi_domain() if domain is None else domain
    task = PlanningTask(dom, tuple(objects), state_atoms(state, scene), goal_atoms, name)
    dtext = hanoi_domain_text() if domain is None else serialize_domain(domain)
    return dtext, serialize_problem(task)


def hanoi_task(state: HanoiState, goal: HanoiState, domain: Domain = None,
               scene: SceneConfig = DEFAULT_SCENE, name: str = "hanoi-task") -> PlanningTask:
    dom = hanoi_domain() if domain is None else domain
    _, text = to_pddl(state, goal, scene, name, dom)
    return parse_problem(text, dom)


def replay_ops(state: HanoiState, ops, scene: SceneConfig = DEFAULT_SCENE):
    """Replay (name, args) pick/place steps under the discrete rules.

    Returns the list of discrete moves; raises IllegalMove on any rule
    violation or malformed pairing.
    """
    moves = []
    cur = state
    ops = list(ops)
    if len(ops) % 2:
        raise IllegalMove("unpaired pick/place sequence")
    for (pname, pargs), (qname, qargs) in zip(ops[::2], ops[1::2]):
        if pname != "pick" or qname != "place":
            raise IllegalMove(f"expected pick/place pair, got {pname}/{qname}")
        block = scene.block_id(pargs[0])
        if cur.area_of(block) is None or support_name(cur.below(block), scene) != pargs[1]:
            raise IllegalMove(f"block {pargs[0]} is not on {pargs[1]}")
        if qargs[0] != pargs[0]:
            raise IllegalMove("placed block differs from picked block")
        target = qargs[1]
        if target in AREAS:
            dst = AREAS.index(target)
            if cur.stacks[dst]:
                raise IllegalMove(f"area {target} is not empty")
        else:
            tb = scene.block_id(target)
            dst = cur.area_of(tb)
            if dst is None or cur.stacks[dst][-1] != tb:
                raise IllegalMove(f"block {target} is not clear")
        cur = apply_move(cur, (block, dst))
        moves.append((block, dst))
    return moves, cur
