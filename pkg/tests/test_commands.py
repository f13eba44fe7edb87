import collections
import os

import pytest
from hypothesis import given, settings, strategies as st

from nsplan.commands import (COLORS, InvalidPlanText, Pick, PlaceInArea, PlaceOnBlock,
                             UnparseableCommand, command_text, commands_to_plan, parse_command,
                             plan_to_commands, split_lines)
from nsplan.grading import grade_directory, grade_text
from nsplan.pddl import Plan
from nsplan.planner import PlanClass, SearchConfig, Strategy, plan, resolve_step
from nsplan.world import AREAS, HanoiState, all_configs, hanoi_task

from conftest import FIXTURES

GOAL3 = HanoiState.tower(3, 2)


def test_paper_formats():
    assert parse_command("Pick the blue block.") == Pick("blue")
    assert parse_command("Place the red block in the middle area.") == PlaceInArea("red", "middle")
    assert parse_command("Place the green block on the yellow block.") == PlaceOnBlock("green", "yellow")


@pytest.mark.parametrize("text", [
    "  pick THE Blue block  ", "Pick the blue block", "Pick  the blue\tblock.",
])
def test_case_whitespace_and_period(text):
    assert parse_command(text) == Pick("blue")


@pytest.mark.parametrize("text", [
    "Move the blue block somewhere", "Pick blue block.", "Pick the purple block.",
    "Place the red block in the top area.", "", "Pick the blue block..",
])
def test_out_of_grammar(text):
    with pytest.raises(UnparseableCommand) as info:
        parse_command(text)
    assert info.value.text == text


def test_loose_flag_drops_article():
    with pytest.raises(UnparseableCommand):
        parse_command("Pick blue block.")
    assert parse_command("Pick blue block.", loose=True) == Pick("blue")
    assert parse_command("place red block in middle area", loose=True) == PlaceInArea("red", "middle")


def test_command_text_round_trip():
    subs = [Pick(c) for c in COLORS] + [PlaceInArea(c, a) for c in COLORS for a in AREAS] + \
        [PlaceOnBlock(c, d) for c in COLORS for d in COLORS if c != d]
    for s in subs:
        assert parse_command(command_text(s)) == s


def test_empty_plan():
    t = hanoi_task(GOAL3, GOAL3)
    assert plan_to_commands(Plan(())) == []
    assert commands_to_plan([], t) == Plan(())


def test_optimal_plan_alternates():
    t = hanoi_task(HanoiState.tower(3, 0), GOAL3)
    lines = plan_to_commands(plan(t, SearchConfig(Strategy.BFS_EXACT)))
    assert len(lines) == 14
    assert all(l.startswith("Pick") == (i % 2 == 0) for i, l in enumerate(lines))
    assert "Place the blue block on the green block." in lines


def test_round_trip_on_all_plans():
    for c in all_configs(3):
        for goal in (GOAL3, HanoiState.tower(3, 0)):
            t = hanoi_task(c, goal)
            p = plan(t, SearchConfig(Strategy.GBFS_HFF))
            assert commands_to_plan(plan_to_commands(p), t) == p


def test_round_trip_on_invalid_plan():
    t = hanoi_task(HanoiState.tower(3, 0), GOAL3)
    p = Plan((resolve_step(t, "pick", ("blue", "green")),
              resolve_step(t, "place", ("blue", "middle")),
              resolve_step(t, "pick", ("green", "red")),
              resolve_step(t, "place", ("green", "blue"))))
    assert commands_to_plan(plan_to_commands(p), t) == p


def test_crlf_and_blank_lines():
    text = "Pick the blue block.\r\n\r\nPlace the blue block in the right area.\r\n"
    assert split_lines(text) == ["Pick the blue block.", "Place the blue block in the right area."]


def test_bad_line_reports_position():
    t = hanoi_task(HanoiState.tower(3, 0), GOAL3)
    with pytest.raises(InvalidPlanText) as info:
        commands_to_plan(["Pick the blue block.", "Then the rest."], t)
    assert info.value.line_no == 2


@settings(max_examples=300, deadline=None)
@given(st.binary(max_size=80))
def test_parse_is_total_on_bytes(data):
    try:
        sub = parse_command(data)
    except UnparseableCommand:
        return
    assert isinstance(sub, (Pick, PlaceInArea, PlaceOnBlock))


@settings(max_examples=200, deadline=None)
@given(st.text(max_size=200))
def test_grading_total_on_text(text):
    g = grade_text(text, HanoiState.tower(3, 0), GOAL3)
    assert g.grade in set(PlanClass)


def test_grade_text_classes():
    init = HanoiState.tower(3, 0)
    t = hanoi_task(init, GOAL3)
    opt = "\n".join(plan_to_commands(plan(t, SearchConfig(Strategy.BFS_EXACT))))
    assert grade_text(opt, init, GOAL3).grade == PlanClass.OPTIMAL
    longer = "Pick the blue block.\nPlace the blue block on the green block.\n" + opt
    assert grade_text(longer, init, GOAL3).grade == PlanClass.SUBOPTIMAL
    assert grade_text("nonsense\nmore nonsense", init, GOAL3).grade == PlanClass.INVALID
    truncated = "\n".join(opt.splitlines()[:-2])
    assert grade_text(truncated, init, GOAL3).grade == PlanClass.INVALID


def test_fixture_directories():
    strong = collections.Counter(g.grade for g in grade_directory(os.path.join(FIXTURES, "plans", "strong")))
    assert strong == {PlanClass.OPTIMAL: 42, PlanClass.INVALID: 8}
    weak = collections.Counter(g.grade for g in grade_directory(os.path.join(FIXTURES, "plans", "weak")))
    assert weak == {PlanClass.INVALID: 50}
