"""Scripted stacking demonstrations.

The first demo starts from a random legal configuration; each later demo
starts where the previous one ended (blocks re-placed with fresh noise) and
performs one random legal move as a pick followed by a place. The chaining
links the demos into one connected transition graph. A demo file is JSONL: a header
record with the symbolic transitions seen at operator boundaries, then one
record per control step.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .commands import command_text, subtask_for_op
from .kinematics import (DEFAULT_KIN, InfeasibleSubTask, KinematicConfig, detector,
                         initial_state, project, run_scripted_op)
from .world import DEFAULT_SCENE, SceneConfig, apply_move, legal_moves, random_valid_config, state_atoms
from .kinematics import op_for_move


@dataclass
class Demo:
    transitions: list   # (source atoms, label, target atoms)
    steps: list         # per-step records


def transition_label(op: str, args) -> str:
    # the pick label names only the block: the support is read off the state
    return f"pick {args[0]}" if op == "pick" else f"{op} {' '.join(args)}"


def record_demo(hstate, ops, scene: SceneConfig = DEFAULT_SCENE,
                kin: KinematicConfig = DEFAULT_KIN, rng=None, noise_std=None) -> Demo:
    ks = initial_state(hstate, scene, kin, rng, noise_std)
    steps, transitions = [], []
    for op, args in ops:
        sub = subtask_for_op(op, args)
        text = command_text(sub)
        before = project(ks, scene)

        def on_step(s, a, phase, op=op, args=args, text=text):
            steps.append({
                "image_omitted": True,
                "state": s.proprio().tolist(),
                "action": a.tolist(),
                "subtask": text,
                "op": op,
                "args": list(args),
                "phase": phase,
                "object_poses": {scene.color(b): p.tolist() for b, p in sorted(s.block_poses.items())},
            })

        ks = run_scripted_op(ks, op, args, scene, kin, on_step=on_step)
        after = project(ks, scene)
        if not detector(ks, sub, scene, kin) or before is None or after is None:
            raise InfeasibleSubTask(f"scripted {text!r} did not complete")
        transitions.append((state_atoms(before, scene), transition_label(op, args),
                            state_atoms(after, scene)))
    return Demo(transitions, steps)


def generate_demos(n: int, blocks: int = 4, seed: int = 0, noise_std: float = 0.0,
                   scene: SceneConfig = DEFAULT_SCENE, kin: KinematicConfig = DEFAULT_KIN) -> list:
    rng = np.random.default_rng(seed)
    out = []
    hs = random_valid_config(blocks, rng) if n else None
    for _ in range(n):
        moves = legal_moves(hs)
        move = moves[int(rng.integers(len(moves)))]
        out.append(record_demo(hs, op_for_move(hs, move, scene), scene, kin, rng, noise_std))
        hs = apply_move(hs, move)
    return out


def _atoms_list(atoms):
    return sorted(str(a) for a in atoms)


def dumps_demo(demo: Demo) -> str:
    head = {"header": True,
            "transitions": [{"source": _atoms_list(s), "label": l, "target": _atoms_list(t)}
                            for s, l, t in demo.transitions]}
    lines = [json.dumps(head, sort_keys=True)]
    lines += [json.dumps(s, sort_keys=True) for s in demo.steps]
    return "\n".join(lines) + "\n"


def loads_demo(text: str) -> Demo:
    from .abstraction import parse_atom
    records = [json.loads(ln) for ln in text.splitlines() if ln.strip()]
    if not records or not records[0].get("header"):
        raise ValueError("demo file must start with a header record")
    trs = [(frozenset(parse_atom(a) for a in t["source"]), t["label"],
            frozenset(parse_atom(a) for a in t["target"])) for t in records[0]["transitions"]]
    return Demo(trs, records[1:])
