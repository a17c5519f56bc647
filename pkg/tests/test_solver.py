import json
import math

import pytest

from congra.cqi import GraspObject, MoveToPose, Release, Simulator
from congra.errors import PlanError, ProtocolError
from congra.solver import (AWAITING, CapabilityRegistry, DialogState,
                           SolverOutcome, answer_query, apply_assertion,
                           evaluate_condition, ground, handle_ntuple,
                           make_clarification, plan_action, refine_descriptor)
from congra.specializer import NTuple, ReferentDescriptor as RD
from congra.world import load_world


def caps():
    return CapabilityRegistry.default()


def command(action, acted=None, goal=None, source=None, protagonist=""):
    return NTuple(kind="command", protagonist=protagonist, action=action,
                  acted_upon=acted, goal=goal, source=source)


# ---- ground -------------------------------------------------------------------


def test_ground_definite_ambiguous(lab):
    g = ground(RD("marker", "definite", {},
                  [("under", RD("table", "definite"))]),
               DialogState.idle(), lab)
    assert g.kind == "ambiguous"
    assert g.candidates == frozenset({"marker_red", "marker_blue"})


def test_ground_indefinite_picks_nearest(kitchen):
    g = ground(RD("soda_can", "indefinite"), DialogState.idle(), kitchen)
    assert g.kind == "unique"
    # robot at (2,2): fridge can (1.1,4.6) closer than counter can (4.6,1.2)
    d1 = math.hypot(1.1 - 2, 4.6 - 2)
    d2 = math.hypot(4.6 - 2, 1.2 - 2)
    assert (g.obj == "soda_can_2") == (d1 < d2)


def test_ground_unique_in_fridge(kitchen):
    g = ground(RD("soda_can", "indefinite", {},
                  [("in", RD("fridge", "definite"))]),
               DialogState.idle(), kitchen)
    assert g == ground(g and RD("soda_can", "indefinite", {},
                                [("in", RD("fridge", "definite"))]),
                       DialogState.idle(), kitchen)
    assert g.kind == "unique" and g.obj == "soda_can_2"


def test_ground_empty(lab):
    assert ground(RD("cup", "definite"), DialogState.idle(), lab).kind == "empty"


# ---- clarification -------------------------------------------------------------


def test_first_question_is_which_one(lab):
    q, attr = make_clarification({"marker_red", "marker_blue"}, None, lab)
    assert q == "Which one?"
    assert attr == "color"


def test_second_question_names_size(lab_two_blue):
    q, attr = make_clarification({"marker_blue_big", "marker_blue_small"},
                                 "color", lab_two_blue)
    assert q == "Which size?"
    assert attr == "size"


def test_no_discriminating_attribute_lists_candidates(grammar):
    world = load_world(json.dumps({
        "regions": [{"name": "r", "footprint": [0, 0, 2, 2],
                     "surface_height": 0}],
        "objects": [
            {"id": "m1", "type": "marker", "properties": {"color": "blue"},
             "x": 0.5, "y": 0.5, "level": "floor"},
            {"id": "m2", "type": "marker", "properties": {"color": "blue"},
             "x": 0.6, "y": 0.6, "level": "floor"}],
        "robot": {"id": "bot", "x": 1, "y": 1, "theta": 0},
        "speaker_region": "r"}), grammar)
    q, attr = make_clarification({"m1", "m2"}, "color", world)
    assert q == "Which one? Candidates: m1, m2."
    assert attr == "location"


def test_make_clarification_requires_two(lab):
    with pytest.raises(ProtocolError):
        make_clarification({"marker_red"}, None, lab)


def test_refine_descriptor_merges(lab):
    pending = RD("marker", "definite", {},
                 [("under", RD("table", "definite"))])
    answer = RD("entity", "definite", {"color": "blue"})
    merged = refine_descriptor(pending, answer, lab.types)
    assert merged.onto_type == "marker"
    assert merged.properties == {"color": "blue"}
    assert merged.relations == pending.relations


def test_refine_descriptor_idempotent(lab):
    pending = RD("marker", "definite", {"color": "blue"})
    answer = RD("entity", "definite", {"color": "blue"})
    merged = refine_descriptor(pending, answer, lab.types)
    assert merged.onto_type == pending.onto_type
    assert merged.properties == pending.properties
    assert merged.relations == pending.relations


# ---- conditions ------------------------------------------------------------------


def exists(desc):
    return NTuple(kind="query", query_type="exists", subject=desc)


def test_condition_true_binds_witness(kitchen):
    cond = exists(RD("soda_can", "indefinite", {},
                     [("on", RD("kitchen_counter", "definite"))]))
    assert evaluate_condition(cond, kitchen) is True
    assert cond.subject.referent_id == "soda_can_1"


def test_condition_false_on_empty_counter(kitchen_empty):
    cond = exists(RD("soda_can", "indefinite", {},
                     [("on", RD("kitchen_counter", "definite"))]))
    assert evaluate_condition(cond, kitchen_empty) is False


def test_condition_vacuous_false(grammar):
    empty = load_world(json.dumps({
        "regions": [{"name": "r", "footprint": [0, 0, 1, 1],
                     "surface_height": 0}],
        "objects": [],
        "robot": {"id": "bot", "x": 0.5, "y": 0.5, "theta": 0},
        "speaker_region": "r"}), grammar)
    assert evaluate_condition(exists(RD("entity", "indefinite")), empty) is False


# ---- planning ---------------------------------------------------------------------


def test_plan_bring_is_move_grasp_move_release(kitchen):
    goal = kitchen.regions["dining_table"].center
    cmds = plan_action("bring", kitchen, obj_id="soda_can_1", goal_point=goal)
    assert [type(c) for c in cmds] == [MoveToPose, GraspObject, MoveToPose,
                                       Release]
    approach = cmds[0]
    can = kitchen.objects["soda_can_1"]
    assert math.isclose(math.hypot(approach.x - can.x, approach.y - can.y),
                        0.5, abs_tol=1e-9)
    # heading faces the can
    assert math.isclose(approach.theta,
                        math.atan2(can.y - approach.y, can.x - approach.x),
                        abs_tol=1e-9)


def test_plan_pick_up_two_commands(lab):
    cmds = plan_action("pick_up", lab, obj_id="marker_blue")
    assert [type(c) for c in cmds] == [MoveToPose, GraspObject]


def test_plan_while_holding_rejected(kitchen):
    m = kitchen.copy()
    m.robot.holding = "soda_can_1"
    m.objects["soda_can_1"].level = "held:pr2"
    with pytest.raises(PlanError):
        plan_action("bring", m, obj_id="soda_can_2",
                    goal_point=m.regions["user"].center)


def test_plan_target_out_of_bounds(kitchen):
    with pytest.raises(PlanError):
        plan_action("move_self", kitchen, goal_point=(500.0, 500.0))


def test_plans_satisfy_grasp_preconditions_by_construction(kitchen, lab):
    for m, obj, goal in ((kitchen, "soda_can_1",
                          kitchen.regions["dining_table"].center),
                         (lab, "marker_blue", lab.regions["user"].center)):
        cmds = plan_action("bring", m, obj_id=obj, goal_point=goal)
        sim = Simulator(m)
        for cmd in cmds:
            sim.apply_command(cmd)
            ticks = 0
            while not sim.idle():
                sim.step()
                ticks += 1
                assert ticks < 10000
        assert sim.held is None
        # object was actually grasped and carried to the goal
        moved = sim.world.objects[obj]
        assert math.hypot(moved.x - goal[0], moved.y - goal[1]) < 0.6


# ---- queries and assertions ----------------------------------------------------------


def test_answer_which_names_blue_marker(lab):
    q = NTuple(kind="query", query_type="which",
               subject=RD("marker", "indefinite"),
               prop_name="color", prop_value="blue")
    assert answer_query(q, lab, caps()) == "The blue marker is marker_blue."


def test_answer_which_none(lab):
    q = NTuple(kind="query", query_type="which",
               subject=RD("cup", "indefinite"),
               prop_name="color", prop_value="blue")
    assert answer_query(q, lab, caps()) == "None."


def test_answer_ability(lab):
    no = NTuple(kind="query", query_type="ability", subject="order_pizza")
    assert answer_query(no, lab, caps()) == "No, I cannot order pizza."
    yes = NTuple(kind="query", query_type="ability", subject="bring_marker")
    assert answer_query(yes, lab, caps()) == "Yes, I can bring marker."


def test_apply_assertion_relocates(grammar, lab):
    solo = load_world(json.dumps({
        "regions": [{"name": "table", "footprint": [2, 2, 3.4, 3.2],
                     "surface_height": 0.75},
                    {"name": "user", "footprint": [0, 0, 0.8, 0.8],
                     "surface_height": 0}],
        "objects": [{"id": "marker_1", "type": "marker",
                     "properties": {"color": "red"}, "x": 0.2, "y": 0.2,
                     "level": "floor"}],
        "robot": {"id": "darwin", "x": 0.4, "y": 0.4, "theta": 0},
        "speaker_region": "user"}), grammar)
    a = NTuple(kind="assertion", subject=RD("marker", "definite"),
               relation="under", rel_object=RD("table", "definite"))
    out = apply_assertion(a, solo)
    obj = out.objects["marker_1"]
    assert (obj.x, obj.y) == solo.regions["table"].center
    assert obj.level == "floor"
    assert out.validate() == []


def test_apply_assertion_property_idempotent(lab):
    a = NTuple(kind="assertion", subject=RD("marker", "definite",
                                            {"color": "blue"}),
               prop_name="color", prop_value="blue")
    out = apply_assertion(a, lab)
    assert out.snapshot() == lab.snapshot()


# ---- handle_ntuple ----------------------------------------------------------------


def test_scenario2_turn_flow(lab):
    pick = command("pick_up", RD("marker", "definite", {},
                                 [("under", RD("table", "definite"))]),
                   protagonist="darwin")
    out = handle_ntuple(pick, DialogState.idle(), lab, caps())
    assert out.reply == "Which one?"
    assert out.commands == []
    assert out.state.mode == AWAITING
    assert out.state.candidates == frozenset({"marker_red", "marker_blue"})

    frag = NTuple(kind="fragment",
                  descriptor=RD("entity", "definite", {"color": "blue"}))
    out2 = handle_ntuple(frag, out.state, out.model, caps())
    assert out2.state.mode == "idle"
    assert [type(c) for c in out2.commands] == [MoveToPose, GraspObject]
    assert out2.commands[1].object_label == "marker_blue"


def test_clarification_candidates_shrink(lab_two_blue):
    pick = command("pick_up", RD("marker", "definite"))
    out = handle_ntuple(pick, DialogState.idle(), lab_two_blue, caps())
    assert out.reply == "Which one?"
    frag = NTuple(kind="fragment",
                  descriptor=RD("entity", "definite", {"color": "blue"}))
    out2 = handle_ntuple(frag, out.state, out.model, caps())
    assert out2.reply == "Which size?"
    assert out2.state.candidates < out.state.candidates
    frag2 = NTuple(kind="fragment",
                   descriptor=RD("entity", "definite", {"size": "big"}))
    out3 = handle_ntuple(frag2, out2.state, out2.model, caps())
    assert out3.state.mode == "idle"
    assert out3.commands[1].object_label == "marker_blue_big"


def test_uninformative_answer_reasks_same_question(lab):
    pick = command("pick_up", RD("marker", "definite"))
    out = handle_ntuple(pick, DialogState.idle(), lab, caps())
    frag = NTuple(kind="fragment", descriptor=RD("entity", "definite"))
    out2 = handle_ntuple(frag, out.state, out.model, caps())
    assert out2.reply == "Which one?"
    assert out2.state.candidates == out.state.candidates
    assert out2.commands == []


def test_fresh_utterance_aborts_clarification(lab):
    pick = command("pick_up", RD("marker", "definite"))
    out = handle_ntuple(pick, DialogState.idle(), lab, caps())
    move = command("move_self", goal="table")
    out2 = handle_ntuple(move, out.state, out.model, caps())
    assert out2.reply.startswith("Abandoning previous request.")
    assert out2.state.mode == "idle"
    assert out2.commands


def test_conditional_then_branch(kitchen):
    subject = RD("soda_can", "indefinite", {},
                 [("on", RD("kitchen_counter", "definite"))])
    nt = NTuple(kind="conditional", protagonist="pr2",
                condition=exists(subject),
                then=command("bring", subject, goal="dining_table",
                             protagonist="pr2"),
                otherwise=command("get", RD("soda_can", "indefinite"),
                                  source="fridge", protagonist="pr2"))
    out = handle_ntuple(nt, DialogState.idle(), kitchen, caps())
    assert len(out.commands) == 4
    assert out.commands[1].object_label == "soda_can_1"


def test_conditional_else_branch(kitchen_empty):
    subject = RD("soda_can", "indefinite", {},
                 [("on", RD("kitchen_counter", "definite"))])
    nt = NTuple(kind="conditional", protagonist="pr2",
                condition=exists(subject),
                then=command("bring", subject, goal="dining_table"),
                otherwise=command("get", RD("soda_can", "indefinite"),
                                  source="fridge"))
    out = handle_ntuple(nt, DialogState.idle(), kitchen_empty, caps())
    assert out.commands[1].object_label == "soda_can_2"
    # exactly one branch contributed commands: 4 from the get plan
    assert len(out.commands) == 4


def test_conditional_false_without_else(lab):
    nt = NTuple(kind="conditional",
                condition=exists(RD("cup", "indefinite")),
                then=command("pick_up", RD("cup", "definite")))
    out = handle_ntuple(nt, DialogState.idle(), lab, caps())
    assert out.commands == []
    assert out.reply == "OK. Nothing to do."


def test_unsupported_action_reply(lab):
    nt = command("move_object", RD("table", "definite"))
    out = handle_ntuple(nt, DialogState.idle(), lab, caps())
    assert out.reply == "Sorry, I cannot move object."
    assert out.commands == []


def test_grounding_empty_reply_names_descriptor(lab):
    nt = command("pick_up", RD("cup", "definite", {"color": "blue"}))
    out = handle_ntuple(nt, DialogState.idle(), lab, caps())
    assert out.reply == "No matching object: blue cup."
    assert out.commands == []


def test_assertion_ambiguous_subject_clarifies(lab):
    nt = NTuple(kind="assertion", subject=RD("marker", "definite"),
                prop_name="color", prop_value="green")
    out = handle_ntuple(nt, DialogState.idle(), lab, caps())
    assert out.state.mode == AWAITING
    assert out.reply == "Which one?"
    frag = NTuple(kind="fragment",
                  descriptor=RD("entity", "definite", {"color": "red"}))
    out2 = handle_ntuple(frag, out.state, out.model, caps())
    assert out2.model.objects["marker_red"].properties["color"] == "green"


def test_no_commands_while_awaiting_enforced(lab):
    with pytest.raises(ProtocolError):
        SolverOutcome("?", [MoveToPose(0, 0, 0)],
                      DialogState(mode=AWAITING,
                                  candidates=frozenset({"a", "b"})), lab)


def test_fragment_when_idle(lab):
    frag = NTuple(kind="fragment", descriptor=RD("entity", "definite"))
    out = handle_ntuple(frag, DialogState.idle(), lab, caps())
    assert out.reply == "Nothing to clarify."


def test_handle_ntuple_deterministic(lab):
    pick = command("pick_up", RD("marker", "definite"))
    a = handle_ntuple(pick, DialogState.idle(), lab, caps())
    b = handle_ntuple(command("pick_up", RD("marker", "definite")),
                      DialogState.idle(), lab, caps())
    assert a.reply == b.reply
    assert a.commands == b.commands
    assert a.state == b.state
