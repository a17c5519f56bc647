"""Crawl a resolved SemSpec into an n-tuple for the problem solver.

N-tuples are nested key-value messages.  The root schema of the SemSpec
selects a template; co-indexed referents become one shared descriptor object,
so grounding one occurrence grounds them all.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import NTupleFormatError, SpecializeError
from .semspec import SemSpec

COMMAND = "command"
QUERY = "query"
ASSERTION = "assertion"
CONDITIONAL = "conditional"
FRAGMENT = "fragment"

KINDS = (COMMAND, QUERY, ASSERTION, CONDITIONAL, FRAGMENT)

SPEAKER_GOAL = "speaker"


@dataclass
class ReferentDescriptor:
    onto_type: str = "entity"
    determiner: str = "indefinite"  # definite|indefinite|pronoun-resolved|speaker
    properties: dict = field(default_factory=dict)
    relations: list = field(default_factory=list)  # [(relation, descriptor)]
    referent_id: str | None = None

    def is_bare(self):
        return not self.properties and not self.relations

    def phrase(self):
        bits = []
        for k in sorted(self.properties):
            bits.append(f"{self.properties[k]}")
        bits.append(self.onto_type.replace("_", " "))
        for rel, d in self.relations:
            bits.append(f"{rel.replace('_', ' ')} {d.phrase()}")
        return " ".join(bits)


@dataclass
class NTuple:
    kind: str
    protagonist: str = ""
    action: str | None = None
    acted_upon: ReferentDescriptor | None = None
    goal: object = None    # ReferentDescriptor | region name | "speaker"
    source: object = None  # ReferentDescriptor | region name
    query_type: str | None = None
    subject: object = None  # ReferentDescriptor | action name
    prop_name: str | None = None
    prop_value: object = None
    relation: str | None = None
    rel_object: ReferentDescriptor | None = None
    condition: "NTuple | None" = None
    then: "NTuple | None" = None
    otherwise: "NTuple | None" = None
    descriptor: ReferentDescriptor | None = None

    def validate(self):
        problems = []
        if self.kind not in KINDS:
            problems.append(f"unknown kind {self.kind!r}")
            return problems
        if self.kind == COMMAND and not self.action:
            problems.append("command without action")
        if self.kind == QUERY and self.query_type not in ("which", "ability",
                                                          "exists"):
            problems.append(f"bad query_type {self.query_type!r}")
        if self.kind == ASSERTION:
            if self.subject is None:
                problems.append("assertion without subject")
            if not (self.relation or self.prop_name):
                problems.append("assertion without relation or property")
        if self.kind == CONDITIONAL:
            if self.condition is None or self.then is None:
                problems.append("conditional needs condition and then")
            for branch in (self.then, self.otherwise):
                if branch is not None and branch.kind == CONDITIONAL:
                    problems.append("conditionals must not nest in branches")
        if self.kind == FRAGMENT and self.descriptor is None:
            problems.append("fragment without descriptor")
        return problems


# ---------------------------------------------------------------------------
# SemSpec -> NTuple


def specialize(g, sem: SemSpec) -> NTuple:
    """Template-driven extraction keyed on the root schema."""
    ex = _Extractor(g, sem)
    root = sem.instances[sem.root]
    protagonist = sem.atom_of(sem.root, "addressee") or ""
    sub = g.subtype_of
    if sub(root.schema, "ConditionalAct"):
        nt = ex.conditional(sem.root, protagonist)
    elif sub(root.schema, "CommandAct"):
        nt = ex.command_act(sem.root, protagonist)
    elif sub(root.schema, "QueryAct"):
        nt = ex.query(sem.root, protagonist)
    elif sub(root.schema, "AssertionAct"):
        nt = ex.assertion(sem.root, protagonist)
    elif sub(root.schema, "FragmentAct"):
        nt = ex.fragment(sem.root, protagonist)
    else:
        raise SpecializeError(
            f"no n-tuple template for root schema {root.schema}")
    problems = nt.validate()
    if problems:
        raise SpecializeError("; ".join(problems))
    return nt


_DETERMINER = {
    "definite": "definite",
    "indefinite": "indefinite",
    "pronoun": "pronoun-resolved",
    "speaker": "speaker",
    None: "indefinite",
}


class _Extractor:
    def __init__(self, g, sem: SemSpec):
        self.g = g
        self.sem = sem
        self.memo: dict[int, ReferentDescriptor] = {}

    def descriptor(self, inst_id) -> ReferentDescriptor:
        if inst_id in self.memo:
            return self.memo[inst_id]
        sem = self.sem
        d = ReferentDescriptor()
        self.memo[inst_id] = d
        onto = sem.atom_of(inst_id, "ontoType")
        if onto is None:
            from .semspec import effective_type
            onto = effective_type(self.g, sem, inst_id)
        d.onto_type = onto
        d.determiner = _DETERMINER.get(sem.atom_of(inst_id, "givenness"),
                                       "indefinite")
        prop = sem.ref_of(inst_id, "prop")
        if prop is not None:
            attr = sem.atom_of(prop, "attribute")
            value = sem.atom_of(prop, "value")
            if attr is not None and value is not None:
                d.properties[attr] = value
        quantity = sem.ref_of(inst_id, "quantity")
        if quantity is not None:
            amount = sem.atom_of(quantity, "amount")
            unit = sem.atom_of(quantity, "unit")
            if amount is not None:
                d.properties["amount"] = amount
            if unit is not None:
                d.properties["unit"] = unit
        mod = sem.ref_of(inst_id, "mod")
        if mod is not None:
            rel = sem.atom_of(mod, "relation")
            landmark = sem.ref_of(mod, "landmark")
            if rel is not None and landmark is not None:
                d.relations.append((rel, self.descriptor(landmark)))
        return d

    def place(self, inst_id):
        """Goal/source landmarks: speaker deixis, region names, descriptors."""
        if inst_id is None:
            return None
        d = self.descriptor(inst_id)
        if d.determiner == "speaker":
            return SPEAKER_GOAL
        if d.determiner == "definite" and d.is_bare():
            return d.onto_type
        return d

    def command_process(self, proc_id, protagonist) -> NTuple:
        sem = self.sem
        action = sem.atom_of(proc_id, "action")
        if action is None:
            raise SpecializeError("command process without action")
        nt = NTuple(kind=COMMAND, protagonist=protagonist, action=action)
        if self.g.subtype_of(sem.instances[proc_id].schema, "CauseEffect"):
            acted = sem.ref_of(proc_id, "actedUpon")
            if acted is None:
                raise SpecializeError(f"{action}: no object to act upon")
            nt.acted_upon = self.descriptor(acted)
            motion = sem.ref_of(proc_id, "affectedProcess")
            if motion is not None:
                spg = sem.ref_of(motion, "spg")
                if spg is not None:
                    nt.goal = self.place(sem.ref_of(spg, "goal"))
                    nt.source = self.place(sem.ref_of(spg, "source"))
        elif self.g.subtype_of(sem.instances[proc_id].schema, "MotionPath"):
            spg = sem.ref_of(proc_id, "spg")
            if spg is not None:
                nt.goal = self.place(sem.ref_of(spg, "goal"))
        else:
            acted = sem.ref_of(proc_id, "actedUpon")
            if acted is not None:
                nt.acted_upon = self.descriptor(acted)
        return nt

    def command_act(self, act_id, protagonist) -> NTuple:
        proc = self.sem.ref_of(act_id, "process")
        if proc is None:
            raise SpecializeError("imperative without a process")
        return self.command_process(proc, protagonist)

    def query(self, act_id, protagonist) -> NTuple:
        sem = self.sem
        qt = sem.atom_of(act_id, "queryType")
        nt = NTuple(kind=QUERY, protagonist=protagonist, query_type=qt)
        if qt == "which":
            subject = sem.ref_of(act_id, "subject")
            if subject is None:
                raise SpecializeError("which-query without subject")
            nt.subject = self.descriptor(subject)
            prop = sem.ref_of(act_id, "prop")
            if prop is not None:
                nt.prop_name = sem.atom_of(prop, "attribute")
                nt.prop_value = sem.atom_of(prop, "value")
        elif qt == "ability":
            proc = sem.ref_of(act_id, "process")
            if proc is None:
                raise SpecializeError("ability query without a process")
            action = sem.atom_of(proc, "action")
            if action is None:
                raise SpecializeError("ability query without an action")
            acted = sem.ref_of(proc, "actedUpon")
            name = action
            if acted is not None:
                name = f"{action}_{self.descriptor(acted).onto_type}"
            nt.subject = name
        else:
            raise SpecializeError(f"unsupported query type {qt!r}")
        return nt

    def assertion(self, act_id, protagonist) -> NTuple:
        sem = self.sem
        subject = sem.ref_of(act_id, "subject")
        if subject is None:
            raise SpecializeError("assertion without subject")
        nt = NTuple(kind=ASSERTION, protagonist=protagonist,
                    subject=self.descriptor(subject))
        locrel = sem.ref_of(act_id, "locrel")
        if locrel is not None:
            nt.relation = sem.atom_of(locrel, "relation")
            landmark = sem.ref_of(locrel, "landmark")
            if landmark is not None:
                nt.rel_object = self.descriptor(landmark)
        prop = sem.ref_of(act_id, "prop")
        if prop is not None:
            nt.prop_name = sem.atom_of(prop, "attribute")
            nt.prop_value = sem.atom_of(prop, "value")
        return nt

    def conditional(self, act_id, protagonist) -> NTuple:
        sem = self.sem
        cond = sem.ref_of(act_id, "cond")
        if cond is None:
            raise SpecializeError("conditional without condition")
        item = sem.ref_of(cond, "item")
        if item is None:
            raise SpecializeError("condition without an existence subject")
        condition = NTuple(kind=QUERY, protagonist=protagonist,
                           query_type="exists",
                           subject=self.descriptor(item))
        then_act = sem.ref_of(act_id, "thenAct")
        if then_act is None:
            raise SpecializeError("conditional without then-branch")
        nt = NTuple(kind=CONDITIONAL, protagonist=protagonist,
                    condition=condition,
                    then=self.command_act(then_act, protagonist))
        else_act = sem.ref_of(act_id, "elseAct")
        if else_act is not None:
            nt.otherwise = self.command_act(else_act, protagonist)
        return nt

    def fragment(self, act_id, protagonist) -> NTuple:
        item = self.sem.ref_of(act_id, "item")
        if item is None:
            raise SpecializeError("fragment without a referent")
        return NTuple(kind=FRAGMENT, protagonist=protagonist,
                      descriptor=self.descriptor(item))


# ---------------------------------------------------------------------------
# Canonical text form (key-sorted nested key-value; round-trips)


def ntuple_to_canonical_text(nt: NTuple) -> str:
    ids: dict[int, str] = {}
    seen: set[int] = set()

    def assign(d: ReferentDescriptor):
        if id(d) not in ids:
            ids[id(d)] = f"d{len(ids)}"
            for _, nested in d.relations:
                assign(nested)

    def scalar(v):
        return v if isinstance(v, str) else repr(v)

    def desc_lines(d: ReferentDescriptor, indent):
        pad = "  " * indent
        if id(d) in seen:
            return [f"{pad}ref: {ids[id(d)]}"]
        assign(d)
        seen.add(id(d))
        lines = [f"{pad}descriptor: {ids[id(d)]}",
                 f"{pad}determiner: {d.determiner}",
                 f"{pad}onto_type: {d.onto_type}"]
        if d.properties:
            lines.append(f"{pad}properties:")
            for k in sorted(d.properties):
                lines.append(f"{pad}  {k}: {scalar(d.properties[k])}")
        if d.referent_id:
            lines.append(f"{pad}referent_id: {d.referent_id}")
        if d.relations:
            lines.append(f"{pad}relations:")
            used = {}
            for rel, nested in sorted(d.relations, key=lambda rd: rd[0]):
                key = rel if rel not in used else f"{rel}#{used[rel]}"
                used[rel] = used.get(rel, 0) + 1
                lines.append(f"{pad}  {key}:")
                lines.extend(desc_lines(nested, indent + 2))
        return lines

    def value_lines(key, v, indent):
        pad = "  " * indent
        if v is None:
            return []
        if isinstance(v, ReferentDescriptor):
            return [f"{pad}{key}:"] + desc_lines(v, indent + 1)
        if isinstance(v, NTuple):
            return [f"{pad}{key}:"] + nt_lines(v, indent + 1)
        return [f"{pad}{key}: {scalar(v)}"]

    def nt_lines(n: NTuple, indent):
        pad = "  " * indent
        fields = {
            "actedUpon": n.acted_upon,
            "action": n.action,
            "condition": n.condition,
            "else": n.otherwise,
            "descriptor_field": None,  # placeholder, handled below
            "goal": n.goal,
            "object": n.rel_object,
            "property": n.prop_name,
            "query_type": n.query_type,
            "relation": n.relation,
            "source": n.source,
            "subject": n.subject,
            "then": n.then,
            "value": n.prop_value,
        }
        del fields["descriptor_field"]
        if n.kind == FRAGMENT:
            fields["item"] = n.descriptor
        lines = [f"{pad}kind: {n.kind}"]
        if n.protagonist:
            lines.append(f"{pad}protagonist: {n.protagonist}")
        for key in sorted(fields):
            lines.extend(value_lines(key, fields[key], indent))
        return lines

    return "\n".join(nt_lines(nt, 0)) + "\n"


def parse_canonical_ntuple(text: str) -> NTuple:
    """Inverse of ntuple_to_canonical_text (structure- and sharing-preserving)."""
    rows = []
    for raw in text.splitlines():
        if not raw.strip():
            continue
        stripped = raw.lstrip(" ")
        depth = (len(raw) - len(stripped))
        if depth % 2:
            raise NTupleFormatError(f"bad indentation: {raw!r}")
        key, _, value = stripped.partition(":")
        rows.append((depth // 2, key.strip(), value.strip()))

    def block(i, depth):
        """Parse rows at `depth` starting at i; returns (mapping, next_i).
        Mapping values are strings or nested mappings (ordered)."""
        out = []
        while i < len(rows) and rows[i][0] == depth:
            d, key, value = rows[i]
            i += 1
            if value:
                out.append((key, value))
            else:
                sub, i = block(i, depth + 1)
                out.append((key, sub))
        return out, i

    tree, _ = block(0, 0)
    registry: dict[str, ReferentDescriptor] = {}

    def to_scalar(v):
        try:
            return int(v)
        except ValueError:
            try:
                return float(v)
            except ValueError:
                return v

    def to_descriptor(items):
        mapping = dict(items)
        if "ref" in mapping:
            return registry[mapping["ref"]]
        d = ReferentDescriptor()
        registry[mapping["descriptor"]] = d
        d.determiner = mapping.get("determiner", "indefinite")
        d.onto_type = mapping.get("onto_type", "entity")
        d.referent_id = mapping.get("referent_id")
        for key, value in items:
            if key == "properties":
                d.properties = {k: to_scalar(v) for k, v in value}
            elif key == "relations":
                for rel, sub in value:
                    d.relations.append((rel.split("#")[0], to_descriptor(sub)))
        return d

    def to_place(v):
        return to_descriptor(v) if isinstance(v, list) else v

    def to_ntuple(items) -> NTuple:
        mapping = dict(items)
        if "kind" not in mapping:
            raise NTupleFormatError("n-tuple block without kind")
        nt = NTuple(kind=mapping["kind"])
        nt.protagonist = mapping.get("protagonist", "")
        for key, value in items:
            if key in ("kind", "protagonist"):
                continue
            if key == "actedUpon":
                nt.acted_upon = to_descriptor(value)
            elif key == "action":
                nt.action = value
            elif key == "condition":
                nt.condition = to_ntuple(value)
            elif key == "then":
                nt.then = to_ntuple(value)
            elif key == "else":
                nt.otherwise = to_ntuple(value)
            elif key == "goal":
                nt.goal = to_place(value)
            elif key == "source":
                nt.source = to_place(value)
            elif key == "subject":
                nt.subject = to_place(value)
            elif key == "object":
                nt.rel_object = to_descriptor(value)
            elif key == "relation":
                nt.relation = value
            elif key == "property":
                nt.prop_name = value
            elif key == "value":
                nt.prop_value = to_scalar(value)
            elif key == "query_type":
                nt.query_type = value
            elif key == "item":
                nt.descriptor = to_descriptor(value)
            else:
                raise NTupleFormatError(f"unknown n-tuple key {key!r}")
        return nt

    return to_ntuple(tree)
