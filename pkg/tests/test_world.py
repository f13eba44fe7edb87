import collections

import numpy as np
import pytest

from nsplan.commands import Pick, PlaceInArea, PlaceOnBlock
from nsplan.kinematics import (DEFAULT_KIN, InfeasibleSubTask, detector, initial_state,
                               op_for_move, project, run_scripted_op, scripted_demo,
                               step_kinematic, dumps_steps)
from nsplan.planner import SearchConfig, Strategy, plan
from nsplan.world import (DEFAULT_SCENE, HanoiState, IllegalMove, SceneConfig, all_configs,
                          apply_move, hanoi_task, legal_moves, oracle_optimal,
                          random_valid_config, replay_ops, state_atoms, state_from_atoms)

from oracles import closed_form_tower, hanoi_apply, hanoi_distance, hanoi_moves


def test_state_invariants():
    with pytest.raises(ValueError):
        HanoiState(((1, 2), (), ()))
    with pytest.raises(ValueError):
        HanoiState(((2,), (2,), ()))
    with pytest.raises(ValueError):
        HanoiState(((2,), (), ()), holding=2)


def test_legal_move_examples():
    assert len(legal_moves(HanoiState(((1,), (), ())))) == 2
    assert legal_moves(HanoiState.tower(3, 0)) == [(1, 1), (1, 2)]
    assert len(legal_moves(HanoiState(((3,), (2,), (1,))))) == 3


def test_legal_moves_match_brute_force_everywhere():
    for n in (1, 2, 3, 4):
        for c in all_configs(n):
            mine = {(c.area_of(b), dst) for b, dst in legal_moves(c)}
            assert mine == set(hanoi_moves(c.stacks))


def test_random_walks_preserve_ordering():
    rng = np.random.default_rng(0)
    for _ in range(10_000 // 50):
        s = random_valid_config(4, rng)
        for _ in range(50):
            moves = legal_moves(s)
            s = apply_move(s, moves[int(rng.integers(len(moves)))])
            for stack in s.stacks:
                assert list(stack) == sorted(stack, reverse=True)


def test_illegal_move_rejected():
    with pytest.raises(IllegalMove):
        apply_move(HanoiState(((2,), (1,), ())), (2, 1))


def test_oracle_examples_and_closed_form():
    s = HanoiState.tower(3, 0)
    assert oracle_optimal(s, s) == (0, [])
    n3, moves3 = oracle_optimal(HanoiState.tower(3, 0), HanoiState.tower(3, 2))
    assert n3 == 7
    n4, moves4 = oracle_optimal(HanoiState.tower(4, 0), HanoiState.tower(4, 2))
    assert n4 == 15 and moves4[0] == (1, 1)
    for n in (1, 2, 3, 4):
        assert oracle_optimal(HanoiState.tower(n, 0), HanoiState.tower(n, 2))[0] == closed_form_tower(n)


def test_oracle_matches_independent_bfs():
    goal = HanoiState.tower(3, 2)
    for c in all_configs(3):
        count, moves = oracle_optimal(c, goal)
        assert count == hanoi_distance(c.stacks, goal.stacks) == len(moves)
        s = c.stacks
        for b, dst in moves:
            src = next(i for i, st in enumerate(s) if st and st[-1] == b)
            s = hanoi_apply(s, (src, dst))
        assert s == goal.stacks


def test_pddl_bridge_plan_lengths():
    for c in all_configs(3)[:9]:
        goal = HanoiState.tower(3, 2)
        p = plan(hanoi_task(c, goal), SearchConfig(Strategy.BFS_EXACT))
        assert len(p) == 2 * oracle_optimal(c, goal)[0]
        moves, end = replay_ops(c, [(o.name, o.args) for o in p])
        assert end == goal


def test_atoms_round_trip():
    for c in all_configs(3):
        assert state_from_atoms(state_atoms(c)) == c
    held = HanoiState(((3,), (2,), ()), holding=1)
    assert state_from_atoms(state_atoms(held)) == held


def test_random_config_uniform():
    rng = np.random.default_rng(123)
    n = 100_000
    counts = collections.Counter(random_valid_config(3, rng) for _ in range(n))
    assert len(counts) == 27
    p = 1 / 27
    sd = (n * p * (1 - p)) ** 0.5
    assert all(abs(c - n * p) <= 4 * sd for c in counts.values())
    chi2 = sum((c - n * p) ** 2 / (n * p) for c in counts.values())
    assert chi2 < 54.1  # 0.999 quantile, 26 degrees of freedom
    assert random_valid_config(3, 5) == random_valid_config(3, 5)
    assert random_valid_config(1, 0) in set(all_configs(1))


# --- kinematic layer ---------------------------------------------------------


def _scene(state, seed=0, noise=0.0):
    return initial_state(state, DEFAULT_SCENE, DEFAULT_KIN, np.random.default_rng(seed), noise)


def test_proprio_and_zero_action():
    ks = _scene(HanoiState.tower(3, 0))
    assert ks.proprio().shape == (8,)
    assert step_kinematic(ks, np.zeros(7)) == ks


def test_translation_clamped():
    ks = _scene(HanoiState.tower(3, 0))
    nxt = step_kinematic(ks, np.array([1.0, -1.0, 0.005, 0, 0, 0, 0]))
    assert np.allclose(nxt.ee_position - ks.ee_position, [0.02, -0.02, 0.005])


def test_scripted_pick_attaches_and_fires():
    s = HanoiState.tower(3, 0)
    ks = _scene(s)
    sub = Pick("blue")
    assert not detector(ks, sub)
    ks = run_scripted_op(ks, "pick", ("blue", "green"))
    assert ks.attached == 1 and detector(ks, sub)


def test_fresh_scene_place_detectors_false():
    ks = _scene(HanoiState.tower(3, 0))
    for sub in (PlaceInArea("blue", "middle"), PlaceInArea("green", "right"), PlaceOnBlock("blue", "red")):
        assert not detector(ks, sub)
    # the detector reads the physical state: an already-satisfied place holds
    assert detector(ks, PlaceOnBlock("green", "red"))


def test_release_larger_on_smaller_is_violation():
    s = HanoiState(((3,), (1,), ()))
    ks = _scene(s)
    ks = run_scripted_op(ks, "pick", ("red", "left"))
    ks = run_scripted_op(ks, "place", ("red", "blue"))
    assert any(e.startswith("violation") for e in ks.events)
    assert not detector(ks, PlaceOnBlock("red", "blue"))
    assert project(ks) is None  # the block rests beside the platforms


def test_release_in_transit_over_middle_counts():
    ks = _scene(HanoiState.tower(3, 0))
    ks = run_scripted_op(ks, "pick", ("blue", "green"))
    # carry toward the right area and let go while above the middle one
    while ks.ee_position[0] < 0.0:
        ks = step_kinematic(ks, np.array([0.02, 0, 0, 0, 0, 0, 0]))
    ks = step_kinematic(ks, np.array([0, 0, 0, 0, 0, 0, -1.0]))
    assert detector(ks, PlaceInArea("blue", "middle"))


def test_projection_matches_discrete_move():
    rng = np.random.default_rng(4)
    for _ in range(30):
        s = random_valid_config(4, rng)
        moves = legal_moves(s)
        mv = moves[int(rng.integers(len(moves)))]
        steps, ks = scripted_demo(s, op_for_move(s, mv), rng=rng, noise_std=0.01)
        assert project(ks) == apply_move(s, mv)
        assert not ks.events


def test_demo_steps_and_determinism():
    s = HanoiState.tower(3, 0)
    ops = list(op_for_move(s, (1, 2)))
    steps, _ = scripted_demo(s, ops, rng=np.random.default_rng(1), noise_std=0.0)
    again, _ = scripted_demo(s, ops, rng=np.random.default_rng(1), noise_std=0.0)
    assert dumps_steps(steps) == dumps_steps(again)
    rec = steps[0]
    assert rec["image_omitted"] is True
    assert len(rec["state"]) == 8 and len(rec["action"]) == 7
    assert rec["subtask"] == "Pick the blue block."
    assert all(abs(x) <= DEFAULT_KIN.max_step + 1e-12 for r in steps for x in r["action"][:3])


def test_absent_block_is_infeasible():
    s = HanoiState.tower(2, 0)
    with pytest.raises(InfeasibleSubTask):
        scripted_demo(s, [("pick", ("yellow", "left"))])


def test_placement_noise_scale():
    xs = []
    rng = np.random.default_rng(9)
    for _ in range(400):
        ks = initial_state(HanoiState(((1,), (), ())), rng=rng, noise_std=0.01)
        xs.append(ks.block_poses[1][0] - DEFAULT_SCENE.area_x[0])
    assert 0.008 < np.std(xs) < 0.012


def test_scene_config_round_trip(tmp_path):
    cfg = SceneConfig(placement_noise_std=0.01)
    path = tmp_path / "scene.json"
    path.write_text(__import__("json").dumps(cfg.to_dict()))
    assert SceneConfig.load(str(path)) == cfg
    with pytest.raises(ValueError):
        SceneConfig(blocks=DEFAULT_SCENE.blocks[::-1])


def test_detectors_fire_once_in_order():
    from nsplan.commands import subtask_for_op
    s = HanoiState.tower(3, 0)
    _, moves = oracle_optimal(s, HanoiState.tower(3, 2))
    ops, cur = [], s
    for mv in moves:
        ops += list(op_for_move(cur, mv))
        cur = apply_move(cur, mv)
    subs = [subtask_for_op(o, a) for o, a in ops]
    fired = []
    ks = _scene(s)
    current = {"i": 0}

    def watch(state, action, phase):
        i = current["i"]
        nxt = step_kinematic(state, action)
        if not detector(state, subs[i]) and detector(nxt, subs[i]):
            fired.append(i)

    for i, (op, args) in enumerate(ops):
        current["i"] = i
        ks = run_scripted_op(ks, op, args, on_step=watch)
    assert fired == list(range(len(ops)))
    assert project(ks) == HanoiState.tower(3, 2)
