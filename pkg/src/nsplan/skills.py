"""Imitation-learned skills and the hierarchical episode runner.

Each operator is refined into four sub-policies (approach, descend,
actuate, retract). A sub-policy is a linear map from end-effector-relative
features to a 7-dim action, fitted by least squares on demonstration
segments, plus a termination test.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .commands import command_text, subtask_for_op
from .kinematics import (DEFAULT_KIN, PHASES, KinematicConfig, KinematicState,
                         detector, entity_position, initial_state, project,
                         run_scripted_op, step_kinematic)
from .pddl import Domain, ground_operator
from .planner import SearchConfig, Strategy, plan as search_plan
from .world import (AREAS, DEFAULT_SCENE, HanoiState, SceneConfig, apply_move, hanoi_task,
                    legal_moves, oracle_optimal, random_valid_config, state_atoms)

SKILL_SCHEMA_VERSION = 1


class DegenerateData(ValueError):
    pass


class SubPolicyStall(RuntimeError):
    def __init__(self, message, outcome=None):
        self.outcome = outcome
        super().__init__(message)


class PreconditionViolated(ValueError):
    pass


# ---------------------------------------------------------------------------
# features and least squares


def half_height(name: str, scene: SceneConfig = DEFAULT_SCENE) -> float:
    return 0.0 if name in AREAS else scene.block(scene.block_id(name)).half_extent


def select_features(ks: KinematicState, entities, scene: SceneConfig = DEFAULT_SCENE,
                    perceive=None) -> np.ndarray:
    """Per bound entity: its position in the end-effector frame and its half
    height; then the gripper aperture. ``perceive(ks, name)`` overrides the
    true positions."""
    rot_t = ks.rotation.T
    parts = []
    for name in entities:
        p = entity_position(ks, name, scene) if perceive is None else perceive(ks, name)
        parts.append(rot_t @ (np.asarray(p, dtype=float) - ks.ee_position))
        parts.append([half_height(name, scene)])
    parts.append([ks.aperture])
    return np.concatenate(parts)


def _design(X):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return np.hstack([X, np.ones((X.shape[0], 1))])


def policy_loss(W, X, Y) -> float:
    """Mean over samples of the squared action error."""
    R = _design(X) @ W - np.atleast_2d(np.asarray(Y, dtype=float))
    return float(np.mean(np.sum(R * R, axis=1)))


def fit_policy(X, Y, mask=None) -> np.ndarray:
    """Least-squares weights (features + bias) -> actions.

    ``mask[i, j]`` false drops sample i from the fit of action dimension j.
    Returns the (d + 1, m) matrix minimizing :func:`policy_loss`; rank
    deficiency yields the minimum-norm minimizer.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if X.shape[0] != Y.shape[0]:
        raise ValueError("feature and action counts differ")
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(Y)):
        raise DegenerateData("non-finite training data")
    n, d = X.shape
    if n < d + 1:
        raise DegenerateData(f"need at least {d + 1} samples, got {n}")
    if np.all(X == X[0]) and not np.all(Y == Y[0]):
        raise DegenerateData("identical features map to different actions")
    A = _design(X)
    if mask is None:
        return np.linalg.lstsq(A, Y, rcond=None)[0]
    mask = np.asarray(mask, dtype=bool)
    W = np.zeros((d + 1, Y.shape[1]))
    for j in range(Y.shape[1]):
        rows = mask[:, j]
        if rows.sum() < d + 1:
            rows = np.ones(n, dtype=bool)
        W[:, j] = np.linalg.lstsq(A[rows], Y[rows, j], rcond=None)[0]
    return W


# ---------------------------------------------------------------------------
# skills


@dataclass
class SubPolicy:
    weights: np.ndarray
    kind: str                     # "motion" or "gripper"
    epsilon: float = 0.0025       # termination threshold on the commanded step
    max_steps: int = 200
    max_step: float = 0.02

    def raw(self, f) -> np.ndarray:
        return np.append(f, 1.0) @ self.weights

    def act(self, f) -> np.ndarray:
        a = self.raw(f)
        a[:3] = np.clip(a[:3], -self.max_step, self.max_step)
        a[3:6] = np.clip(a[3:6], -0.1, 0.1)
        a[6] = np.clip(a[6], -1.0, 1.0)
        return a

    def done(self, f, prev_aperture=None) -> bool:
        """Motion phases end once the commanded step (proportional to the
        distance left to the policy's fixed point) drops below epsilon;
        gripper phases end when the aperture stops changing."""
        if self.kind == "gripper":
            return prev_aperture is not None and f[-1] == prev_aperture
        return float(np.linalg.norm(self.raw(f)[:3])) < self.epsilon

    def to_dict(self) -> dict:
        return {"kind": self.kind, "shape": list(self.weights.shape),
                "weights": self.weights.ravel().tolist(), "epsilon": self.epsilon,
                "max_steps": self.max_steps, "max_step": self.max_step}

    @classmethod
    def from_dict(cls, d) -> "SubPolicy":
        W = np.asarray(d["weights"], dtype=float).reshape(d["shape"])
        return cls(W, d["kind"], d["epsilon"], d["max_steps"], d["max_step"])


@dataclass
class Skill:
    operator: str
    subpolicies: list

    def to_dict(self):
        return {"operator": self.operator, "subpolicies": [p.to_dict() for p in self.subpolicies]}

    @classmethod
    def from_dict(cls, d):
        return cls(d["operator"], [SubPolicy.from_dict(p) for p in d["subpolicies"]])


def save_skills(skills: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump({"version": SKILL_SCHEMA_VERSION,
                   "skills": {k: s.to_dict() for k, s in sorted(skills.items())}}, fh)


def load_skills(path) -> dict:
    with open(path) as fh:
        data = json.load(fh)
    if data.get("version") != SKILL_SCHEMA_VERSION:
        raise ValueError(f"unsupported skill file version {data.get('version')!r}")
    return {k: Skill.from_dict(v) for k, v in data["skills"].items()}


def _record_state(rec, scene: SceneConfig) -> KinematicState:
    s = np.asarray(rec["state"], dtype=float)
    yaw = 2.0 * np.arctan2(s[4], s[3])
    poses = {scene.block_id(c): np.asarray(p, dtype=float) for c, p in rec["object_poses"].items()}
    return KinematicState(s[:3], float(yaw), s[6:8], poses)


def train_skills(demos, scene: SceneConfig = DEFAULT_SCENE,
                 kin: KinematicConfig = DEFAULT_KIN) -> dict:
    """Fit one skill per operator from demonstration step records.

    Translation samples clipped at the step limit carry only the sign of
    the expert command, so they are excluded from that dimension's fit.
    """
    segments = {}
    for steps in demos:
        cur_key, seg = None, None
        for rec in steps:
            key = (rec["op"], tuple(rec["args"]), rec["phase"])
            if key != cur_key:
                seg = []
                segments.setdefault((rec["op"], rec["phase"]), []).append((rec["args"], seg))
                cur_key = key
            seg.append(rec)
    skills = {}
    for op in sorted({op for op, _ in segments}):
        subs = []
        for phase in range(len(PHASES)):
            segs = segments.get((op, phase))
            if not segs:
                raise DegenerateData(f"no demonstration segments for {op} phase {phase}")
            X, Y = [], []
            for args, seg in segs:
                for rec in seg:
                    X.append(select_features(_record_state(rec, scene), args, scene))
                    Y.append(rec["action"])
            X, Y = np.array(X), np.array(Y)
            mask = np.ones_like(Y, dtype=bool)
            mask[:, :3] = np.abs(Y[:, :3]) < kin.max_step - 1e-12
            W = fit_policy(X, Y, mask)
            kind = "gripper" if PHASES[phase] == "actuate" else "motion"
            subs.append(SubPolicy(W, kind, kin.gain * kin.tolerance, kin.max_phase_steps, kin.max_step))
        skills[op] = Skill(op, subs)
    return skills


# ---------------------------------------------------------------------------
# execution


@dataclass
class SkillOutcome:
    state: KinematicState
    steps: list                 # (pre-step state digest, action) pairs
    n_steps: int
    fired_at: Optional[int]     # steps taken when the sub-task detector first fired
    stalled: bool = False
    injected_failure: bool = False

    @property
    def success(self) -> bool:
        return self.fired_at is not None and not self.stalled


def _perceiver(args, scene, rng, noise_std, offset_for):
    """Live entity positions plus a per-skill constant perception bias."""
    bias = {}
    for name in args:
        b = np.zeros(3)
        if noise_std > 0 and rng is not None:
            b = b + rng.normal(0.0, noise_std, size=3)
        bias[name] = b + offset_for.get(name, 0.0)

    def pos(ks, name):
        return entity_position(ks, name, scene) + bias[name]

    return pos


def _failure_offsets(op, args, scene, kin):
    """Perception error that makes a skill miss: the grasp lands beside the
    block, or the release happens off the platforms."""
    if op == "pick":
        return {args[0]: np.array([3 * kin.grasp_tolerance, 0.0, 0.0])}
    return {args[1]: np.array([0.0, 3 * scene.area_half_width, 0.0])}


def execute_skill(ks: KinematicState, skill: Skill, args, operator=None,
                  scene: SceneConfig = DEFAULT_SCENE, kin: KinematicConfig = DEFAULT_KIN,
                  rng=None, success_prob: float = 1.0, perception_noise: float = 0.0,
                  record: bool = True, fail: Optional[bool] = None) -> SkillOutcome:
    """Run a skill's sub-policies in order until each terminates.

    ``operator`` (an OperatorSchema) enables the precondition check on the
    discrete projection. ``fail`` forces or suppresses the injected failure;
    by default it is drawn with probability ``1 - success_prob``.
    """
    if operator is not None:
        hs = project(ks, scene)
        if hs is None or not ground_operator(operator, args).pre <= state_atoms(hs, scene):
            raise PreconditionViolated(f"{skill.operator}{tuple(args)} precondition does not hold")
    if fail is None:
        fail = success_prob < 1.0 and rng is not None and rng.random() >= success_prob
    offsets = _failure_offsets(skill.operator, args, scene, kin) if fail else {}
    sub = subtask_for_op(skill.operator, args)
    pos = _perceiver(args, scene, rng, perception_noise, offsets)
    steps = []
    n = 0
    fired = None
    for j, policy in enumerate(skill.subpolicies):
        prev_ap = None
        for k in range(policy.max_steps + 1):
            f = select_features(ks, args, scene, pos)
            if policy.done(f, prev_ap):
                break
            if k == policy.max_steps:
                raise SubPolicyStall(
                    f"{skill.operator} sub-policy {PHASES[j]} did not terminate in {policy.max_steps} steps",
                    SkillOutcome(ks, steps, n, fired, stalled=True, injected_failure=fail))
            prev_ap = f[-1]
            a = policy.act(f)
            if record:
                steps.append((ks.digest(), a))
            ks = step_kinematic(ks, a, scene=scene, kin=kin)
            n += 1
            if fired is None and detector(ks, sub, scene, kin):
                fired = n
    if fired is not None and not detector(ks, sub, scene, kin):
        fired = None
    return SkillOutcome(ks, steps, n, fired, injected_failure=fail)


def execute_scripted(ks, op, args, scene=DEFAULT_SCENE, kin=DEFAULT_KIN, rng=None,
                     success_prob=1.0, perception_noise=0.0, record=True, fail=None) -> SkillOutcome:
    """Same contract as :func:`execute_skill`, driven by the scripted expert."""
    if fail is None:
        fail = success_prob < 1.0 and rng is not None and rng.random() >= success_prob
    offsets = _failure_offsets(op, args, scene, kin) if fail else {}
    pos = _perceiver(args, scene, rng, perception_noise, offsets)
    start = ks
    sub = subtask_for_op(op, args)
    steps = []
    seen = {"n": 0, "fired": None}

    def on_step(s, a, phase):
        if seen["fired"] is None and seen["n"] > 0 and detector(s, sub, scene, kin):
            seen["fired"] = seen["n"]
        if record:
            steps.append((s.digest(), a))
        seen["n"] += 1

    ks = run_scripted_op(ks, op, args, scene, kin, perceive=lambda name: pos(start, name),
                         on_step=on_step)
    fired = seen["fired"]
    done = detector(ks, sub, scene, kin)
    if fired is None and done:
        fired = seen["n"]
    if not done:
        fired = None
    return SkillOutcome(ks, steps, seen["n"], fired, injected_failure=fail)


# ---------------------------------------------------------------------------
# episodes


class Outcome(str, enum.Enum):
    SUCCESS = "Success"
    TIMEOUT = "Timeout"
    RULE_VIOLATION = "RuleViolation"
    FAILURE = "Failure"


@dataclass
class EpisodeTrace:
    outcome: Outcome
    step_count: int
    subtask_events: list          # (t, command text) in completion order
    total_subtasks: int
    control_rate: float = 20.0
    steps: list = field(default_factory=list)   # (t, state digest, action, command text)
    plan_length: int = 0
    seed: Optional[int] = None
    meta: dict = field(default_factory=dict)    # e.g. agent and task names

    @property
    def duration_s(self) -> float:
        return self.step_count / self.control_rate

    @property
    def completed(self) -> int:
        return len(self.subtask_events)

    def footer(self) -> dict:
        return {"footer": True, "outcome": self.outcome.value, "step_count": self.step_count,
                "duration_s": self.duration_s, "control_rate": self.control_rate,
                "total_subtasks": self.total_subtasks, "plan_length": self.plan_length,
                "seed": self.seed, "meta": self.meta,
                "events": [{"t": t, "subtask": s} for t, s in self.subtask_events]}

    def to_jsonl(self) -> str:
        lines = [json.dumps({"t": t, "state": d, "action": [round(x, 12) for x in a], "subtask": s})
                 for t, d, a, s in self.steps]
        lines.append(json.dumps(self.footer()))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "EpisodeTrace":
        steps, foot = [], None
        for line in text.splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            if rec.get("footer"):
                foot = rec
            else:
                try:
                    steps.append((rec["t"], rec["state"], rec["action"], rec["subtask"]))
                except KeyError as exc:
                    raise ValueError(f"trace step record lacks {exc}") from None
        if foot is None:
            raise ValueError("trace has no footer record")
        return cls(Outcome(foot["outcome"]), foot["step_count"],
                   [(e["t"], e["subtask"]) for e in foot["events"]], foot["total_subtasks"],
                   foot["control_rate"], steps, foot.get("plan_length", 0), foot.get("seed"),
                   foot.get("meta", {}))


def advancement(trace_or_completed, total_subtasks: Optional[int] = None) -> float:
    """Percentage of the task's sub-tasks completed."""
    if isinstance(trace_or_completed, EpisodeTrace):
        completed = trace_or_completed.completed
        total = trace_or_completed.total_subtasks if total_subtasks is None else total_subtasks
    else:
        completed, total = trace_or_completed, total_subtasks
    if total is None or total <= 0:
        if total == 0 and completed == 0:
            return 100.0
        raise ValueError("total_subtasks must be positive")
    return 100.0 * min(completed, total) / total


@dataclass
class EpisodeTask:
    initial: HanoiState
    goal: HanoiState
    name: str = "hanoi"


class Agent:
    """Planner plus skill executor with memoized deterministic rollouts."""

    def __init__(self, domain: Domain, skills: Optional[dict] = None,
                 strategy: Strategy = Strategy.GBFS_HFF, scene: SceneConfig = DEFAULT_SCENE,
                 kin: KinematicConfig = DEFAULT_KIN, name: str = "nsm"):
        self.domain = domain
        self.skills = skills
        self.cfg = SearchConfig(strategy)
        self.scene = scene
        self.kin = kin
        self.name = name
        self._plans = {}
        self._rollouts = {}

    def make_plan(self, state: HanoiState, goal: HanoiState):
        key = (state, goal)
        if key not in self._plans:
            task = hanoi_task(state, goal, self.domain, self.scene)
            self._plans[key] = [(op.name, op.args) for op in search_plan(task, self.cfg)]
        return self._plans[key]

    def execute(self, ks, op, args, fail, record, perception_noise=0.0, rng=None) -> SkillOutcome:
        key = None
        if perception_noise == 0.0:
            key = (ks.digest(), op, tuple(args), bool(fail), record)
            hit = self._rollouts.get(key)
            if hit is not None:
                return hit
        if self.skills is None:
            out = execute_scripted(ks, op, args, self.scene, self.kin, rng=rng,
                                   perception_noise=perception_noise, record=record, fail=fail)
        else:
            try:
                out = execute_skill(ks, self.skills[op], args, self.domain.operator(op), self.scene,
                                    self.kin, rng=rng, perception_noise=perception_noise,
                                    record=record, fail=fail)
            except SubPolicyStall as exc:
                out = exc.outcome
        if key is not None:
            if len(self._rollouts) > 50_000:
                self._rollouts.clear()
            self._rollouts[key] = out
        return out


def run_episode(agent: Agent, task: EpisodeTask, timeout_steps: int = 750, seed=None,
                success_prob: float = 1.0, retry: bool = False, replan: bool = False,
                placement_noise: float = 0.0, perception_noise: float = 0.0,
                record_steps: bool = True) -> EpisodeTrace:
    """Plan from the perceived configuration and execute operator by operator.

    A sub-task whose detector does not fire aborts the episode unless a
    retry or replan flag applies. The whole episode is capped at
    ``timeout_steps`` control steps.
    """
    rng = np.random.default_rng(seed)
    scene, kin = agent.scene, agent.kin
    ks = initial_state(task.initial, scene, kin, rng, placement_noise)
    optimal = 2 * oracle_optimal(task.initial, task.goal)[0]
    t = 0
    events, steps = [], []
    hs = project(ks, scene)
    plan_ops = list(agent.make_plan(hs, task.goal))
    plan_length = len(plan_ops)
    retries_left = 1 if retry else 0
    replans_left = 3 if replan else 0
    outcome = None
    i = 0
    while i < len(plan_ops):
        op, args = plan_ops[i]
        text = command_text(subtask_for_op(op, args))
        if t >= timeout_steps:
            outcome = Outcome.TIMEOUT
            break
        fail = success_prob < 1.0 and rng.random() >= success_prob
        try:
            out = agent.execute(ks, op, args, fail, record_steps, perception_noise, rng)
        except PreconditionViolated:
            outcome = Outcome.FAILURE
            break
        budget = timeout_steps - t
        if out.n_steps > budget:
            if record_steps:
                steps.extend((t + k, d, a.tolist(), text) for k, (d, a) in enumerate(out.steps[:budget]))
            if out.fired_at is not None and out.fired_at <= budget:
                events.append((t + out.fired_at, text))
            t = timeout_steps
            outcome = Outcome.TIMEOUT
            break
        if record_steps:
            steps.extend((t + k, d, a.tolist(), text) for k, (d, a) in enumerate(out.steps))
        if out.success:
            events.append((t + out.fired_at, text))
        t += out.n_steps
        ks = out.state
        if any(e.startswith("violation") for e in ks.events):
            outcome = Outcome.RULE_VIOLATION
            break
        if out.success:
            i += 1
            continue
        hs = project(ks, scene)
        if retries_left and hs is not None and op == "pick":
            retries_left -= 1
            continue
        if replans_left and hs is not None:
            replans_left -= 1
            plan_ops = list(agent.make_plan(hs, task.goal))
            i = 0
            continue
        outcome = Outcome.FAILURE
        break
    if outcome is None:
        outcome = Outcome.SUCCESS if project(ks, scene) == task.goal else Outcome.FAILURE
    return EpisodeTrace(outcome, t, events, optimal, kin.control_rate, steps, plan_length, seed,
                        {"agent": agent.name, "task": task.name})


TASK_KINDS = ("hanoi3", "hanoi4", "move")


def make_task(kind: str, seed=None) -> EpisodeTask:
    """Evaluation task: a tower moved from the left to the right area, or a
    single random legal move on a random 4-block configuration."""
    if kind in ("hanoi3", "hanoi4"):
        n = int(kind[-1])
        return EpisodeTask(HanoiState.tower(n, 0), HanoiState.tower(n, 2), kind)
    if kind == "move":
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        while True:
            s = random_valid_config(4, rng)
            moves = legal_moves(s)
            if moves:
                return EpisodeTask(s, apply_move(s, moves[int(rng.integers(len(moves)))]), kind)
    raise ValueError(f"unknown task kind {kind!r}")
