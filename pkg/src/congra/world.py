"""Situation model: objects, regions, robot state; grounding and data updates.

Geometry is the single source of truth: spatial relations are derived from
poses and region footprints, never stored.  Relations not derivable are false
(closed world).
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field

from .errors import NestedAmbiguityError, UnknownNameError, WorldFormatError
from .specializer import ReferentDescriptor

LEVEL_FLOOR = "floor"

# world-frame margin for left_of / right_of
SIDE_MARGIN = 0.05
# half-extent of the box used when judging "under" a physical object
UNDER_HALF_EXTENT = 0.5

# the relations grounding can decide; anything else fails closed
GROUNDABLE_RELATIONS = frozenset(
    {"on", "under", "in", "left_of", "right_of", "at"})


def norm_angle(theta: float) -> float:
    """Normalize to (-pi, pi]."""
    out = math.fmod(theta, 2.0 * math.pi)
    if out <= -math.pi:
        out += 2.0 * math.pi
    elif out > math.pi:
        out -= 2.0 * math.pi
    return out


@dataclass
class Pose:
    x: float
    y: float
    theta: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.theta)):
            raise WorldFormatError("pose coordinates must be finite")
        self.theta = norm_angle(self.theta)


@dataclass
class Region:
    name: str
    x_min: float
    y_min: float
    x_max: float
    y_max: float
    surface_height: float = 0.0

    def contains(self, x, y):
        return self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max

    @property
    def center(self):
        return ((self.x_min + self.x_max) / 2.0,
                (self.y_min + self.y_max) / 2.0)


@dataclass
class WorldObject:
    id: str
    onto_type: str
    properties: dict = field(default_factory=dict)
    x: float = 0.0
    y: float = 0.0
    level: str = LEVEL_FLOOR  # "floor" | "surface:REGION" | "held:ROBOT"


@dataclass
class RobotState:
    id: str
    pose: Pose
    holding: str | None = None


class TypeLattice:
    """Minimal ontology view the model needs for grounding."""

    def __init__(self, parents: dict):
        self.parents = dict(parents)

    @classmethod
    def from_grammar(cls, grammar):
        return cls(grammar.ontology)

    def subtype_of(self, child, parent):
        cur = child
        while cur is not None:
            if cur == parent:
                return True
            cur = self.parents.get(cur)
        return False

    def knows(self, name):
        return name in self.parents


@dataclass
class SituationModel:
    objects: dict
    regions: dict
    robot: RobotState
    speaker_region: str
    types: TypeLattice

    def copy(self) -> "SituationModel":
        return SituationModel(
            objects=copy.deepcopy(self.objects),
            regions=self.regions,  # immutable in practice
            robot=copy.deepcopy(self.robot),
            speaker_region=self.speaker_region,
            types=self.types,
        )

    def same_state(self, other: "SituationModel") -> bool:
        return (self.snapshot() == other.snapshot())

    def snapshot(self) -> dict:
        return {
            "regions": [
                {"name": r.name,
                 "footprint": [r.x_min, r.y_min, r.x_max, r.y_max],
                 "surface_height": r.surface_height}
                for r in sorted(self.regions.values(), key=lambda r: r.name)],
            "objects": [
                {"id": o.id, "type": o.onto_type,
                 "properties": dict(sorted(o.properties.items())),
                 "x": o.x, "y": o.y, "level": o.level}
                for o in sorted(self.objects.values(), key=lambda o: o.id)],
            "robot": {"id": self.robot.id, "x": self.robot.pose.x,
                      "y": self.robot.pose.y, "theta": self.robot.pose.theta,
                      "holding": self.robot.holding},
            "speaker_region": self.speaker_region,
        }

    def validate(self) -> list[str]:
        problems = []
        for o in self.objects.values():
            if self.types.parents and not self.types.knows(o.onto_type):
                problems.append(f"object {o.id}: unknown type {o.onto_type!r}")
            if o.level.startswith("surface:"):
                rname = o.level.split(":", 1)[1]
                region = self.regions.get(rname)
                if region is None:
                    problems.append(f"object {o.id}: unknown region {rname!r}")
                elif not region.contains(o.x, o.y):
                    problems.append(
                        f"object {o.id}: outside footprint of {rname}")
            elif o.level.startswith("held:"):
                holder = o.level.split(":", 1)[1]
                if holder != self.robot.id:
                    problems.append(f"object {o.id}: held by unknown {holder}")
                elif self.robot.holding != o.id:
                    problems.append(
                        f"object {o.id}: level says held but robot holds "
                        f"{self.robot.holding!r}")
            elif o.level != LEVEL_FLOOR:
                problems.append(f"object {o.id}: bad level {o.level!r}")
        if self.robot.holding is not None:
            held = self.objects.get(self.robot.holding)
            if held is None:
                problems.append(f"robot holds unknown {self.robot.holding!r}")
            elif held.level != f"held:{self.robot.id}":
                problems.append("held object level out of sync")
        if self.speaker_region not in self.regions:
            problems.append(f"unknown speaker region {self.speaker_region!r}")
        return problems


def load_world(text: str, grammar=None) -> SituationModel:
    """Parse and validate a world file (JSON)."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise WorldFormatError(f"world file is not valid JSON: {e}") from e
    try:
        regions = {}
        for r in data["regions"]:
            fp = r["footprint"]
            region = Region(r["name"], float(fp[0]), float(fp[1]),
                            float(fp[2]), float(fp[3]),
                            float(r.get("surface_height", 0.0)))
            if region.x_min >= region.x_max or region.y_min >= region.y_max:
                raise WorldFormatError(
                    f"region {region.name}: degenerate footprint")
            if region.name in regions:
                raise WorldFormatError(f"duplicate region {region.name!r}")
            regions[region.name] = region
        objects = {}
        for o in data.get("objects", []):
            obj = WorldObject(o["id"], o["type"],
                              dict(o.get("properties", {})),
                              float(o["x"]), float(o["y"]),
                              o.get("level", LEVEL_FLOOR))
            if obj.id in objects:
                raise WorldFormatError(f"duplicate object {obj.id!r}")
            objects[obj.id] = obj
        rb = data["robot"]
        robot = RobotState(rb["id"],
                           Pose(float(rb["x"]), float(rb["y"]),
                                float(rb.get("theta", 0.0))),
                           rb.get("holding"))
        speaker = data["speaker_region"]
    except KeyError as e:
        raise WorldFormatError(f"world file missing key {e}") from e
    types = (TypeLattice.from_grammar(grammar) if grammar is not None
             else TypeLattice({}))
    model = SituationModel(objects, regions, robot, speaker, types)
    problems = model.validate()
    if problems:
        raise WorldFormatError("; ".join(problems))
    return model


# ---------------------------------------------------------------------------
# Spatial relations (closed world)


def relation_holds(m: SituationModel, rel: str, a: str, b: str) -> bool:
    """b may name a region or an object."""
    obj = m.objects.get(a)
    if obj is None:
        raise UnknownNameError(f"unknown object {a!r}")
    region = m.regions.get(b)
    other = m.objects.get(b)
    if region is None and other is None:
        raise UnknownNameError(f"unknown region or object {b!r}")

    if rel == "on":
        return region is not None and obj.level == f"surface:{b}"
    if rel == "under":
        if region is not None:
            return (obj.level == LEVEL_FLOOR
                    and region.contains(obj.x, obj.y))
        return (obj.level == LEVEL_FLOOR
                and max(abs(obj.x - other.x),
                        abs(obj.y - other.y)) <= UNDER_HALF_EXTENT)
    if rel in ("in", "at"):
        if region is not None:
            return region.contains(obj.x, obj.y)
        return False
    if rel == "left_of":
        bx = other.x if other is not None else region.center[0]
        return obj.x < bx - SIDE_MARGIN
    if rel == "right_of":
        bx = other.x if other is not None else region.center[0]
        return obj.x > bx + SIDE_MARGIN
    raise UnknownNameError(f"unknown relation {rel!r}")


def resolve_relation_target(m: SituationModel, d: ReferentDescriptor):
    """Ground a nested descriptor to a region name or a list of object ids."""
    if d.determiner == "speaker":
        return [m.speaker_region], True
    if d.is_bare() and d.onto_type in m.regions:
        return [d.onto_type], True
    matches = sorted(objects_matching(m, d))
    if len(matches) > 1 and d.determiner == "definite":
        raise NestedAmbiguityError(
            f"ambiguous inner referent: {d.phrase()}", d)
    return matches, False


def objects_matching(m: SituationModel, d: ReferentDescriptor) -> set:
    """Exactly the objects whose type, properties, and relations all match."""
    out = set()
    for o in sorted(m.objects.values(), key=lambda o: o.id):
        if not m.types.subtype_of(o.onto_type, d.onto_type):
            continue
        if any(o.properties.get(k) != v for k, v in d.properties.items()):
            continue
        ok = True
        for rel, nested in d.relations:
            if rel not in GROUNDABLE_RELATIONS:
                ok = False  # closed world: underivable relations are false
                break
            targets, _is_region = resolve_relation_target(m, nested)
            if not any(relation_holds(m, rel, o.id, t) for t in targets):
                ok = False
                break
        if ok:
            out.add(o.id)
    return out


def region_level_at(m: SituationModel, x: float, y: float) -> str:
    """Level for an object released at (x, y): first covering raised region."""
    for name in sorted(m.regions):
        region = m.regions[name]
        if region.surface_height > 0 and region.contains(x, y):
            return f"surface:{name}"
    return LEVEL_FLOOR


def apply_data(m: SituationModel, d) -> SituationModel:
    """Fold one CQI data message into a new model."""
    from .cqi import AtPose, HasProperty, Holding

    out = m.copy()
    if isinstance(d, AtPose):
        out.robot.pose = Pose(d.x, d.y, d.theta)
        if out.robot.holding:
            held = out.objects[out.robot.holding]
            held.x, held.y = d.x, d.y
    elif isinstance(d, Holding):
        if d.object == "none":
            prev = out.robot.holding
            if prev is not None:
                obj = out.objects[prev]
                obj.x, obj.y = out.robot.pose.x, out.robot.pose.y
                obj.level = region_level_at(out, obj.x, obj.y)
            out.robot.holding = None
        else:
            obj = out.objects.get(d.object)
            if obj is None:
                raise UnknownNameError(f"holding unknown object {d.object!r}")
            out.robot.holding = d.object
            obj.level = f"held:{out.robot.id}"
            obj.x, obj.y = out.robot.pose.x, out.robot.pose.y
    elif isinstance(d, HasProperty):
        obj = out.objects.get(d.object)
        if obj is None:
            raise UnknownNameError(
                f"has_property for unknown object {d.object!r}")
        obj.properties[d.property] = d.value
    else:
        raise UnknownNameError(f"not a data message: {d!r}")
    return out
