"""Problem solver: dispatch n-tuples, ground referents, clarify, plan.

The solver never talks to the robot directly; it returns the commands to
emit.  No command is ever emitted while a clarification is pending (enforced
by SolverOutcome).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .cqi import GraspObject, MoveToPose, Release
from .errors import (ContradictionError, NestedAmbiguityError, PlanError,
                     ProtocolError)
from .specializer import (ASSERTION, COMMAND, CONDITIONAL, FRAGMENT, QUERY,
                          NTuple, ReferentDescriptor, SPEAKER_GOAL)
from .world import SituationModel, objects_matching, resolve_relation_target

IDLE = "idle"
AWAITING = "awaiting_clarification"

APPROACH_STANDOFF = 0.5  # m; < grasp radius, so plans grasp by construction
WORLD_MARGIN = 2.0       # m beyond the fixtures' bounding box

CLARIFICATION_ATTRIBUTES = ("color", "size", "location")


@dataclass(frozen=True)
class DialogState:
    mode: str = IDLE
    pending: NTuple | None = None
    unresolved: ReferentDescriptor | None = None
    candidates: frozenset = frozenset()
    asked_attribute: str | None = None

    @classmethod
    def idle(cls):
        return cls()

    def awaiting(self):
        return self.mode == AWAITING


@dataclass
class SolverOutcome:
    reply: str | None
    commands: list
    state: DialogState
    model: SituationModel

    def __post_init__(self):
        if self.commands and self.state.mode != IDLE:
            raise ProtocolError(
                "commands must not be emitted while clarification is pending")


@dataclass
class CapabilityRegistry:
    supported: dict = field(default_factory=dict)

    @classmethod
    def default(cls):
        return cls({"bring": True, "pick_up": True, "get": True,
                    "move_self": True})

    def available(self, action: str) -> bool:
        return bool(self.supported.get(action, False))

    def covers(self, name: str) -> bool:
        """True if name equals, or is derived from, an available action."""
        if self.available(name):
            return True
        return any(name.startswith(a + "_") and ok
                   for a, ok in self.supported.items())


@dataclass(frozen=True)
class Grounding:
    kind: str  # "unique" | "ambiguous" | "empty"
    obj: str | None = None
    candidates: frozenset = frozenset()


def human(name: str) -> str:
    return name.replace("_", " ")


# ---------------------------------------------------------------------------
# Grounding


def ground(d: ReferentDescriptor, st: DialogState,
           m: SituationModel) -> Grounding:
    """Wrap objects_matching; indefinites pick the nearest candidate."""
    matches = sorted(objects_matching(m, d))
    if not matches:
        return Grounding("empty")
    if len(matches) == 1:
        return Grounding("unique", matches[0])
    if d.determiner != "definite":
        rx, ry = m.robot.pose.x, m.robot.pose.y
        best = min(matches, key=lambda oid: (
            math.hypot(m.objects[oid].x - rx, m.objects[oid].y - ry), oid))
        return Grounding("unique", best)
    return Grounding("ambiguous", candidates=frozenset(matches))


def _location_value(m: SituationModel, oid: str) -> str:
    obj = m.objects[oid]
    if obj.level.startswith("surface:"):
        return obj.level.split(":", 1)[1]
    for name in sorted(m.regions):
        if m.regions[name].contains(obj.x, obj.y):
            return name
    return "floor"


def _attribute_values(m, candidates, attr):
    out = set()
    for oid in candidates:
        if attr == "location":
            out.add(_location_value(m, oid))
        else:
            out.add(m.objects[oid].properties.get(attr))
    return out


def make_clarification(candidates, asked, m: SituationModel):
    """Question text plus the attribute it stands for.

    The opening question is always the literal "Which one?"; follow-ups name
    the next attribute, in the fixed order color -> size -> location, that
    actually discriminates between the remaining candidates.
    """
    if len(candidates) < 2:
        raise ProtocolError("clarification requires at least two candidates")
    if asked is None:
        return "Which one?", CLARIFICATION_ATTRIBUTES[0]
    start = CLARIFICATION_ATTRIBUTES.index(asked) + 1
    for attr in CLARIFICATION_ATTRIBUTES[start:]:
        if len(_attribute_values(m, candidates, attr)) > 1:
            return f"Which {attr}?", attr
    listing = ", ".join(sorted(candidates))
    return f"Which one? Candidates: {listing}.", CLARIFICATION_ATTRIBUTES[-1]


def _question_for(asked, candidates):
    if asked == CLARIFICATION_ATTRIBUTES[0]:
        return "Which one?"
    return f"Which {asked}?"


def refine_descriptor(pending: ReferentDescriptor,
                      answer: ReferentDescriptor,
                      types) -> ReferentDescriptor:
    """Merged descriptor: pending constraints plus the answer's."""
    if types.subtype_of(answer.onto_type, pending.onto_type):
        onto = answer.onto_type
    elif types.subtype_of(pending.onto_type, answer.onto_type):
        onto = pending.onto_type
    else:
        raise ContradictionError(
            f"{human(answer.onto_type)} does not refine "
            f"{human(pending.onto_type)}")
    properties = dict(pending.properties)
    for k, v in answer.properties.items():
        if k in properties and properties[k] != v:
            raise ContradictionError(
                f"conflicting {k}: {properties[k]} vs {v}")
        properties[k] = v
    relations = list(pending.relations)
    for rel in answer.relations:
        if rel not in relations:
            relations.append(rel)
    return ReferentDescriptor(onto, pending.determiner, properties, relations,
                              pending.referent_id)


# ---------------------------------------------------------------------------
# Conditions, queries, assertions


def evaluate_condition(cond: NTuple, m: SituationModel) -> bool:
    """Closed-world existence test; binds the witness into the descriptor."""
    matches = sorted(objects_matching(m, cond.subject))
    if not matches:
        return False
    cond.subject.referent_id = matches[0]
    return True


def answer_query(q: NTuple, m: SituationModel,
                 caps: CapabilityRegistry) -> str:
    if q.query_type == "ability":
        name = q.subject
        if caps.covers(name):
            return f"Yes, I can {human(name)}."
        return f"No, I cannot {human(name)}."
    if q.query_type == "which":
        matches = sorted(objects_matching(m, q.subject))
        if q.prop_name is not None:
            matches = [oid for oid in matches
                       if m.objects[oid].properties.get(q.prop_name)
                       == q.prop_value]
        if not matches:
            return "None."
        noun = human(q.subject.onto_type)
        value = q.prop_value if q.prop_value is not None else ""
        lead = f"The {value} {noun}".replace("  ", " ").strip()
        if len(matches) == 1:
            return f"{lead} is {matches[0]}."
        return f"{lead}s are {', '.join(matches)}."
    if q.query_type == "exists":
        return "Yes." if evaluate_condition(q, m) else "No."
    return f"I cannot answer a {q.query_type} query."


def _placement_for(m: SituationModel, relation: str, target_desc):
    """Position and level satisfying a relational assertion."""
    targets, is_region = resolve_relation_target(m, target_desc)
    if not targets:
        raise ContradictionError(
            f"no such landmark: {target_desc.phrase()}")
    target = targets[0]
    if is_region or target in m.regions:
        region = m.regions[target]
        cx, cy = region.center
        if relation == "on":
            return cx, cy, f"surface:{region.name}"
        if relation == "under":
            return cx, cy, "floor"
        if relation in ("in", "at"):
            level = (f"surface:{region.name}" if region.surface_height > 0
                     else "floor")
            return cx, cy, level
        if relation == "left_of":
            return region.x_min - 0.2, cy, "floor"
        if relation == "right_of":
            return region.x_max + 0.2, cy, "floor"
    else:
        obj = m.objects[target]
        if relation == "under":
            return obj.x, obj.y, "floor"
        if relation == "left_of":
            return obj.x - 0.2, obj.y, "floor"
        if relation == "right_of":
            return obj.x + 0.2, obj.y, "floor"
    raise ContradictionError(
        f"cannot realize relation {relation!r} on {target!r}")


def apply_assertion(a: NTuple, m: SituationModel) -> SituationModel:
    """Assertions are assumed correct; geometry is updated to satisfy them."""
    oid = a.subject.referent_id
    if oid is None:
        matches = sorted(objects_matching(m, a.subject))
        if len(matches) != 1:
            raise ContradictionError(
                f"assertion subject must ground uniquely: {a.subject.phrase()}")
        oid = matches[0]
    out = m.copy()
    obj = out.objects[oid]
    if a.prop_name is not None:
        obj.properties[a.prop_name] = a.prop_value
    if a.relation is not None:
        x, y, level = _placement_for(out, a.relation, a.rel_object)
        obj.x, obj.y, obj.level = x, y, level
        if out.robot.holding == oid:
            out.robot.holding = None
    return out


# ---------------------------------------------------------------------------
# Planning


def _bounds(m: SituationModel):
    xs, ys = [m.robot.pose.x], [m.robot.pose.y]
    for r in m.regions.values():
        xs += [r.x_min, r.x_max]
        ys += [r.y_min, r.y_max]
    for o in m.objects.values():
        xs.append(o.x)
        ys.append(o.y)
    return (min(xs) - WORLD_MARGIN, min(ys) - WORLD_MARGIN,
            max(xs) + WORLD_MARGIN, max(ys) + WORLD_MARGIN)


def _approach(from_xy, point):
    """Standoff pose 0.5 m short of the target, facing it."""
    dx, dy = from_xy[0] - point[0], from_xy[1] - point[1]
    dist = math.hypot(dx, dy)
    if dist < 1e-9:
        px, py = point[0] - APPROACH_STANDOFF, point[1]
    else:
        px = point[0] + APPROACH_STANDOFF * dx / dist
        py = point[1] + APPROACH_STANDOFF * dy / dist
    theta = math.atan2(point[1] - py, point[0] - px)
    return MoveToPose(px, py, theta)


def plan_action(action: str, m: SituationModel, obj_id=None, goal_point=None):
    """Fixed command templates per action; validity by construction."""
    if action in ("bring", "pick_up", "get") and m.robot.holding is not None:
        raise PlanError(f"already holding {m.robot.holding}")
    pos = (m.robot.pose.x, m.robot.pose.y)
    commands = []
    if action in ("bring", "pick_up", "get"):
        obj = m.objects[obj_id]
        move = _approach(pos, (obj.x, obj.y))
        commands.append(move)
        commands.append(GraspObject(obj_id))
        pos = (move.x, move.y)
    if action in ("bring", "get", "move_self"):
        if goal_point is None:
            raise PlanError(f"{action}: no destination")
        move = _approach(pos, goal_point)
        commands.append(move)
        if action != "move_self":
            commands.append(Release())
    x_min, y_min, x_max, y_max = _bounds(m)
    for c in commands:
        if isinstance(c, MoveToPose):
            if not (x_min <= c.x <= x_max and y_min <= c.y <= y_max):
                raise PlanError(f"target ({c.x:.2f},{c.y:.2f}) outside world")
    return commands


# ---------------------------------------------------------------------------
# Top-level dispatch


def handle_ntuple(n: NTuple, st: DialogState, m: SituationModel,
                  caps: CapabilityRegistry) -> SolverOutcome:
    try:
        return _handle(n, st, m, caps)
    except (PlanError, ContradictionError, NestedAmbiguityError) as e:
        return SolverOutcome(f"I cannot do that ({e}).", [],
                             DialogState.idle(), m)


def _handle(n: NTuple, st: DialogState, m: SituationModel,
            caps: CapabilityRegistry) -> SolverOutcome:
    if st.awaiting():
        if n.kind == FRAGMENT:
            return _refine_turn(n.descriptor, st, m, caps)
        if (n.kind == ASSERTION and n.prop_name is not None
                and isinstance(n.subject, ReferentDescriptor)
                and _refines_pending(n.subject, st, m)):
            frag = ReferentDescriptor(
                onto_type=n.subject.onto_type,
                determiner=n.subject.determiner,
                properties={n.prop_name: n.prop_value})
            return _refine_turn(frag, st, m, caps)
        out = _dispatch(n, DialogState.idle(), m, caps)
        notice = "Abandoning previous request."
        out.reply = f"{notice} {out.reply}" if out.reply else notice
        return out
    if n.kind == FRAGMENT:
        return SolverOutcome("Nothing to clarify.", [], DialogState.idle(), m)
    return _dispatch(n, st, m, caps)


def _refines_pending(subject, st, m):
    types = m.types
    return (types.subtype_of(subject.onto_type, st.unresolved.onto_type)
            or types.subtype_of(st.unresolved.onto_type, subject.onto_type)
            or subject.onto_type == "entity")


def _dispatch(n, st, m, caps):
    if n.kind == COMMAND:
        return _run_command(n, m, caps)
    if n.kind == QUERY:
        return SolverOutcome(answer_query(n, m, caps), [], DialogState.idle(), m)
    if n.kind == ASSERTION:
        return _run_assertion(n, m, caps)
    if n.kind == CONDITIONAL:
        chosen = n.then if evaluate_condition(n.condition, m) else n.otherwise
        if chosen is None:
            return SolverOutcome("OK. Nothing to do.", [],
                                 DialogState.idle(), m)
        return _dispatch(chosen, DialogState.idle(), m, caps)
    return SolverOutcome(f"I do not understand a {n.kind} request.", [],
                         DialogState.idle(), m)


def _resolve_place(m: SituationModel, place):
    """Goal/source -> (x, y) point plus a printable label."""
    if place is None:
        return None, None
    if place == SPEAKER_GOAL:
        region = m.regions[m.speaker_region]
        return region.center, m.speaker_region
    if isinstance(place, str):
        region = m.regions.get(place)
        if region is not None:
            return region.center, place
        place = ReferentDescriptor(onto_type=place, determiner="definite")
    matches = sorted(objects_matching(m, place))
    if not matches:
        raise PlanError(f"no matching destination: {place.phrase()}")
    obj = m.objects[matches[0]]
    return (obj.x, obj.y), matches[0]


def _run_command(n: NTuple, m: SituationModel,
                 caps: CapabilityRegistry) -> SolverOutcome:
    action = n.action
    if not caps.available(action):
        return SolverOutcome(f"Sorry, I cannot {human(action)}.", [],
                             DialogState.idle(), m)
    if action == "move_self":
        goal_point, label = _resolve_place(m, n.goal)
        if goal_point is None:
            return SolverOutcome("Where should I move?", [],
                                 DialogState.idle(), m)
        commands = plan_action(action, m, goal_point=goal_point)
        return SolverOutcome(f"OK, moving to {label}.", commands,
                             DialogState.idle(), m)

    d = n.acted_upon
    if d.referent_id is not None:
        obj_id = d.referent_id
    else:
        probe = d
        if n.source is not None:
            source_desc = (n.source if isinstance(n.source, ReferentDescriptor)
                           else ReferentDescriptor(onto_type=n.source,
                                                   determiner="definite"))
            probe = ReferentDescriptor(d.onto_type, d.determiner,
                                       dict(d.properties),
                                       list(d.relations) + [("in", source_desc)])
        g = ground(probe, DialogState.idle(), m)
        if g.kind == "empty":
            return SolverOutcome(f"No matching object: {probe.phrase()}.", [],
                                 DialogState.idle(), m)
        if g.kind == "ambiguous":
            question, next_attr = make_clarification(g.candidates, None, m)
            state = DialogState(AWAITING, n, d, g.candidates, next_attr)
            return SolverOutcome(question, [], state, m)
        obj_id = g.obj
        d.referent_id = obj_id

    goal = n.goal
    if action in ("bring", "get") and goal is None:
        goal = SPEAKER_GOAL
    goal_point, goal_label = _resolve_place(m, goal)
    commands = plan_action(action, m, obj_id=obj_id, goal_point=goal_point)
    if action == "pick_up":
        reply = f"OK, picking up {obj_id}."
    elif action == "get":
        reply = f"OK, getting {obj_id}."
    else:
        reply = f"OK, {human(action)}ing {obj_id} to {goal_label}."
    return SolverOutcome(reply, commands, DialogState.idle(), m)


def _run_assertion(n: NTuple, m: SituationModel,
                   caps: CapabilityRegistry) -> SolverOutcome:
    subject = n.subject
    if subject.referent_id is None:
        g = ground(subject, DialogState.idle(), m)
        if g.kind == "empty":
            return SolverOutcome(f"No matching object: {subject.phrase()}.",
                                 [], DialogState.idle(), m)
        if g.kind == "ambiguous":
            question, next_attr = make_clarification(g.candidates, None, m)
            state = DialogState(AWAITING, n, subject, g.candidates, next_attr)
            return SolverOutcome(question, [], state, m)
        subject.referent_id = g.obj
    model = apply_assertion(n, m)
    return SolverOutcome("OK.", [], DialogState.idle(), model)


def _refine_turn(frag: ReferentDescriptor, st: DialogState,
                 m: SituationModel, caps: CapabilityRegistry) -> SolverOutcome:
    try:
        merged = refine_descriptor(st.unresolved, frag, m.types)
    except ContradictionError as e:
        question = _question_for(st.asked_attribute, st.candidates)
        return SolverOutcome(f"That does not fit ({e}). {question}", [], st, m)
    # fold the refinement into the shared descriptor so the pending n-tuple
    # sees it too
    target = st.unresolved
    target.onto_type = merged.onto_type
    target.properties = merged.properties
    target.relations = merged.relations
    new_cands = frozenset(objects_matching(m, target)) & st.candidates
    if not new_cands:
        return SolverOutcome(f"No matching object: {target.phrase()}.", [],
                             DialogState.idle(), m)
    if len(new_cands) == 1:
        (obj_id,) = new_cands
        target.referent_id = obj_id
        return _dispatch(st.pending, DialogState.idle(), m, caps)
    if new_cands == st.candidates:
        question = _question_for(st.asked_attribute, new_cands)
        return SolverOutcome(question, [], st, m)
    question, next_attr = make_clarification(new_cands, st.asked_attribute, m)
    state = replace(st, candidates=new_cands, asked_attribute=next_attr)
    return SolverOutcome(question, [], state, m)
