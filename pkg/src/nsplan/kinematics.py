"""Simplified kinematic tabletop: end-effector integration, rigid grasping,
snap-to-support release, progress detectors and scripted demonstrations.

Coordinates are meters in the world frame; the end effector points down
and may only yaw.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .commands import Pick, PlaceInArea, PlaceOnBlock, command_text, subtask_for_op
from .world import AREAS, DEFAULT_SCENE, HanoiState, SceneConfig, support_name

PHASES = ("approach", "descend", "actuate", "retract")
# operator parameter whose pose anchors each phase
REFERENCE = {"pick": (0, 0, 0, 1), "place": (1, 1, 1, 0)}
# gripper command per phase (+1 close, -1 open)
GRIPPER = {"pick": (-1.0, -1.0, 1.0, 1.0), "place": (1.0, 1.0, -1.0, -1.0)}


@dataclass(frozen=True)
class KinematicConfig:
    control_rate: float = 20.0
    max_step: float = 0.02
    max_yaw_step: float = 0.1
    grasp_tolerance: float = 0.015
    finger_open: float = 0.04
    finger_speed: float = 0.01
    lift_threshold: float = 0.01
    gain: float = 0.5
    hover: float = 0.06
    carry: float = 0.10
    release_clearance: float = 0.004
    tolerance: float = 0.005
    max_phase_steps: int = 200
    home: tuple = (0.0, 0.0, 0.20)


DEFAULT_KIN = KinematicConfig()


@dataclass(frozen=True, eq=False)
class KinematicState:
    ee_position: np.ndarray
    ee_yaw: float
    fingers: np.ndarray
    block_poses: dict            # block id -> array (x, y, z, yaw)
    attached: Optional[int] = None
    grasp_offset: np.ndarray = field(default_factory=lambda: np.zeros(3))
    events: tuple = ()

    @property
    def ee_orientation(self) -> np.ndarray:
        """Axis-angle of the top-down gripper yawed by ``ee_yaw``."""
        h = 0.5 * self.ee_yaw
        return np.pi * np.array([np.cos(h), np.sin(h), 0.0])

    @property
    def rotation(self) -> np.ndarray:
        c, s = np.cos(self.ee_yaw), np.sin(self.ee_yaw)
        return np.array([[c, s, 0.0], [s, -c, 0.0], [0.0, 0.0, -1.0]])

    @property
    def aperture(self) -> float:
        return float(self.fingers.sum())

    def proprio(self) -> np.ndarray:
        return np.concatenate([self.ee_position, self.ee_orientation, self.fingers])

    def digest(self) -> str:
        h = hashlib.sha1()
        h.update(np.round(self.proprio(), 12).tobytes())
        for bid in sorted(self.block_poses):
            h.update(bytes([bid]))
            h.update(np.round(self.block_poses[bid], 12).tobytes())
        h.update(repr((self.attached, self.events)).encode())
        return h.hexdigest()[:16]

    def __eq__(self, other):
        if not isinstance(other, KinematicState):
            return NotImplemented
        return (np.array_equal(self.ee_position, other.ee_position)
                and self.ee_yaw == other.ee_yaw
                and np.array_equal(self.fingers, other.fingers)
                and self.block_poses.keys() == other.block_poses.keys()
                and all(np.array_equal(self.block_poses[k], other.block_poses[k])
                        for k in self.block_poses)
                and self.attached == other.attached
                and np.array_equal(self.grasp_offset, other.grasp_offset)
                and self.events == other.events)

    __hash__ = None


def initial_state(hstate: HanoiState, scene: SceneConfig = DEFAULT_SCENE,
                  kin: KinematicConfig = DEFAULT_KIN, rng=None,
                  noise_std: Optional[float] = None) -> KinematicState:
    """Lay blocks out per ``hstate`` with Gaussian x,y placement noise."""
    if hstate.holding is not None:
        raise ValueError("initial scenes start with an empty hand")
    std = scene.placement_noise_std if noise_std is None else noise_std
    if rng is None:
        rng = np.random.default_rng(0)
    poses = {}
    for i, stack in enumerate(hstate.stacks):
        z = scene.table_z
        for bid in stack:
            h = scene.block(bid).half_extent
            dxy = rng.normal(0.0, std, size=2) if std > 0 else np.zeros(2)
            dxy = np.clip(dxy, -3 * std, 3 * std)
            poses[bid] = np.array([scene.area_x[i] + dxy[0], scene.area_y + dxy[1], z + h, 0.0])
            z += 2 * h
    return KinematicState(np.array(kin.home, dtype=float), 0.0,
                          np.full(2, kin.finger_open), poses)


# ---------------------------------------------------------------------------
# geometry


def area_index(xy, scene: SceneConfig = DEFAULT_SCENE) -> Optional[int]:
    for i, ax in enumerate(scene.area_x):
        if abs(xy[0] - ax) <= scene.area_half_width and abs(xy[1] - scene.area_y) <= scene.area_half_width:
            return i
    return None


def _resting_stacks(ks: KinematicState, scene: SceneConfig):
    """Per area, resting block ids sorted bottom-up; blocks off every area
    are returned separately."""
    stacks = [[], [], []]
    off = []
    for bid, pose in ks.block_poses.items():
        if bid == ks.attached:
            continue
        i = area_index(pose[:2], scene)
        (off if i is None else stacks[i]).append(bid)
    for s in stacks:
        s.sort(key=lambda b: ks.block_poses[b][2])
    return stacks, off


def project(ks: KinematicState, scene: SceneConfig = DEFAULT_SCENE) -> Optional[HanoiState]:
    """Discrete configuration seen in the scene, or None if it is not a
    legal Hanoi configuration (blocks off the platforms, bad ordering)."""
    stacks, off = _resting_stacks(ks, scene)
    if off:
        return None
    try:
        return HanoiState(tuple(tuple(s) for s in stacks), ks.attached)
    except ValueError:
        return None


def _top_z(stack, ks, scene):
    if not stack:
        return scene.table_z
    b = stack[-1]
    return ks.block_poses[b][2] + scene.block(b).half_extent


def step_kinematic(ks: KinematicState, action, dt: float = None,
                   scene: SceneConfig = DEFAULT_SCENE,
                   kin: KinematicConfig = DEFAULT_KIN) -> KinematicState:
    """Advance one control step. Translation deltas are per-step displacements,
    roll and pitch are ignored; gripper > 0 closes, < 0 opens, 0 holds."""
    a = np.asarray(action, dtype=float)
    if a.shape != (7,):
        raise ValueError("actions are 7-vectors")
    dpos = np.clip(a[:3], -kin.max_step, kin.max_step)
    dyaw = float(np.clip(a[5], -kin.max_yaw_step, kin.max_yaw_step))
    if not dpos.any() and dyaw == 0.0:
        ee = ks.ee_position
    else:
        ee = ks.ee_position + dpos
    yaw = ks.ee_yaw + dyaw
    poses = ks.block_poses
    attached, offset, events = ks.attached, ks.grasp_offset, ks.events
    fingers = ks.fingers
    if a[6] > 0:
        if attached is None:
            stacks, _ = _resting_stacks(ks, scene)
            tops = {s[-1] for s in stacks if s}
            best, best_d = None, kin.grasp_tolerance
            for bid, pose in poses.items():
                d = float(np.linalg.norm(pose[:3] - ee))
                h = scene.block(bid).half_extent
                if d <= best_d and fingers.min() >= h and (bid in tops or area_index(pose[:2], scene) is None):
                    best, best_d = bid, d
            if best is not None:
                attached = best
                offset = poses[best][:3] - ee
        stop = 0.0 if attached is None else scene.block(attached).half_extent
        fingers = np.maximum(fingers - kin.finger_speed, stop)
    elif a[6] < 0:
        fingers = np.minimum(fingers + kin.finger_speed, kin.finger_open)
        if attached is not None:
            poses, events = _release(ks, attached, ee + offset, poses, events, scene)
            attached, offset = None, np.zeros(3)

    if attached is not None:
        poses = dict(poses)
        p = poses[attached].copy()
        p[:3] = ee + offset
        p[3] = poses[attached][3] + dyaw
        poses[attached] = p
    if (attached == ks.attached and poses is ks.block_poses and ee is ks.ee_position
            and yaw == ks.ee_yaw and np.array_equal(fingers, ks.fingers)):
        return ks
    return KinematicState(ee, yaw, fingers, poses, attached, offset, events)


def _release(ks, bid, center, poses, events, scene):
    poses = dict(poses)
    h = scene.block(bid).half_extent
    i = area_index(center[:2], scene)
    tmp = replace(ks, attached=bid)
    stacks, _ = _resting_stacks(tmp, scene)
    p = poses[bid].copy()
    if i is None:
        p[:3] = (center[0], center[1], scene.table_z + h)
        events = events + (f"dropped:{bid}",)
    else:
        stack = stacks[i]
        if stack and stack[-1] < bid:
            p[:3] = (center[0], scene.area_y + 3 * scene.area_half_width, scene.table_z + h)
            events = events + (f"violation:{bid}:{stack[-1]}",)
        else:
            p[:3] = (center[0], center[1], _top_z(stack, ks, scene) + h)
    poses[bid] = p
    return poses, events


# ---------------------------------------------------------------------------
# detectors


def support_of(ks: KinematicState, bid: int, scene: SceneConfig = DEFAULT_SCENE):
    """What a resting block sits on: block id, ``('area', i)``, or None."""
    if bid == ks.attached:
        return None
    stacks, _ = _resting_stacks(ks, scene)
    for i, s in enumerate(stacks):
        if bid in s:
            k = s.index(bid)
            return s[k - 1] if k else ("area", i)
    return None


def detector(ks: KinematicState, subtask, scene: SceneConfig = DEFAULT_SCENE,
             kin: KinematicConfig = DEFAULT_KIN) -> bool:
    if isinstance(subtask, Pick):
        bid = scene.block_id(subtask.block)
        if ks.attached != bid:
            return False
        bottom = ks.block_poses[bid][2] - scene.block(bid).half_extent
        stacks, _ = _resting_stacks(ks, scene)
        i = area_index(ks.block_poses[bid][:2], scene)
        floor = scene.table_z if i is None else _top_z(stacks[i], ks, scene)
        return bottom > floor + kin.lift_threshold
    bid = scene.block_id(subtask.block)
    if bid not in ks.block_poses:
        return False
    sup = support_of(ks, bid, scene)
    if sup is None:
        return False
    if isinstance(subtask, PlaceInArea):
        return sup == ("area", AREAS.index(subtask.area))
    target = scene.block_id(subtask.target)
    return sup == target and target > bid


# ---------------------------------------------------------------------------
# scripted primitives


class InfeasibleSubTask(ValueError):
    pass


def entity_position(ks: KinematicState, name: str, scene: SceneConfig = DEFAULT_SCENE):
    if name in AREAS:
        return scene.area_center(AREAS.index(name))
    bid = scene.block_id(name)
    if bid not in ks.block_poses:
        raise InfeasibleSubTask(f"no {name} block in the scene")
    return ks.block_poses[bid][:3].copy()


def phase_target(ks, op: str, args, phase: int, scene=DEFAULT_SCENE, kin=DEFAULT_KIN,
                 perceive=None):
    """World-frame end-effector goal of a scripted motion phase."""
    pos = perceive or (lambda name: entity_position(ks, name, scene))
    ref = pos(args[REFERENCE[op][phase]])

    def half(name):
        return 0.0 if name in AREAS else scene.block(scene.block_id(name)).half_extent

    if op == "pick":
        dz = {0: kin.hover, 1: 0.0, 3: kin.carry}[phase]
    else:
        dz = {0: kin.carry, 1: half(args[1]) + half(args[0]) + kin.release_clearance,
              3: kin.hover}[phase]
    return ref + np.array([0.0, 0.0, dz])


def expert_action(ks, target, gripper, kin=DEFAULT_KIN) -> np.ndarray:
    a = np.zeros(7)
    if target is not None:
        a[:3] = np.clip(kin.gain * (target - ks.ee_position), -kin.max_step, kin.max_step)
    a[6] = gripper
    return a


def run_scripted_op(ks, op: str, args, scene=DEFAULT_SCENE, kin=DEFAULT_KIN,
                    perceive=None, on_step=None) -> KinematicState:
    """Execute one pick/place with the scripted four-phase controller.

    ``on_step(ks, action, phase)`` sees every (pre-step state, action) pair.
    """
    if op not in REFERENCE:
        raise InfeasibleSubTask(f"no scripted primitive for {op!r}")
    for name in args:
        if name not in AREAS:
            try:
                bid = scene.block_id(name)
            except KeyError:
                raise InfeasibleSubTask(f"unknown block {name!r}") from None
            if bid not in ks.block_poses:
                raise InfeasibleSubTask(f"no {name} block in the scene")
    for phase in range(4):
        grip = GRIPPER[op][phase]
        if PHASES[phase] == "actuate":
            prev = None
            for _ in range(kin.max_phase_steps):
                a = expert_action(ks, None, grip, kin)
                if on_step:
                    on_step(ks, a, phase)
                ks = step_kinematic(ks, a, scene=scene, kin=kin)
                if prev is not None and ks.aperture == prev:
                    break
                prev = ks.aperture
            continue
        target = phase_target(ks, op, args, phase, scene, kin, perceive)
        for _ in range(kin.max_phase_steps):
            if np.linalg.norm(target - ks.ee_position) < kin.tolerance:
                break
            a = expert_action(ks, target, grip, kin)
            if on_step:
                on_step(ks, a, phase)
            ks = step_kinematic(ks, a, scene=scene, kin=kin)
    return ks


def op_for_move(hstate: HanoiState, move, scene=DEFAULT_SCENE):
    """The (pick, place) operator pair realizing a discrete move."""
    block, dst = move
    color = scene.color(block)
    src = support_name(hstate.below(block), scene)
    target = hstate.stacks[dst]
    dest = AREAS[dst] if not target else scene.color(target[-1])
    return ("pick", (color, src)), ("place", (color, dest))


def scripted_demo(hstate: HanoiState, ops, scene: SceneConfig = DEFAULT_SCENE,
                  kin: KinematicConfig = DEFAULT_KIN, rng=None,
                  noise_std: Optional[float] = None):
    """Run scripted pick/place ops from a freshly laid-out scene.

    Returns (steps, final state) where each step is a dict with the
    proprioceptive state, action, command text, operator and phase.
    """
    ks = initial_state(hstate, scene, kin, rng, noise_std)
    steps = []
    for op, args in ops:
        sub = subtask_for_op(op, args)
        text = command_text(sub)

        def record(s, a, phase, op=op, args=args, text=text):
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

        ks = run_scripted_op(ks, op, args, scene, kin, on_step=record)
        if not detector(ks, sub, scene, kin):
            raise InfeasibleSubTask(f"scripted {text!r} did not complete")
    return steps, ks


def dumps_steps(steps) -> str:
    return "".join(json.dumps(s, sort_keys=True) + "\n" for s in steps)
