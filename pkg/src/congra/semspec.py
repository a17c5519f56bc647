"""Semantic specifications: co-indexed schema instances over a shared slot table.

Co-indexing is realized by slot identity: two roles that denote the same
entity point at the same slot.  ``MeaningWorkspace`` is the mutable builder
used during analysis; ``SemSpec`` is the frozen, canonically numbered result.
"""

from __future__ import annotations

from dataclasses import dataclass

class UnifyFailure(Exception):
    """Internal: a unification step failed; the enclosing combination dies."""


UNFILLED = "unfilled"
ATOM = "atom"
REF = "ref"


@dataclass(frozen=True)
class SemSlot:
    kind: str  # unfilled | atom | ref
    atom: object = None
    ref: int | None = None
    constraints: tuple[str, ...] = ()


@dataclass(frozen=True)
class SemInstance:
    schema: str
    roles: tuple[tuple[str, int], ...]
    prov: tuple[int, int]  # token span [start, end)

    def role_slot(self, name):
        for r, s in self.roles:
            if r == name:
                return s
        return None


@dataclass(frozen=True)
class SemSpec:
    instances: tuple[SemInstance, ...]
    slots: tuple[SemSlot, ...]
    root: int
    text: str

    @property
    def instance_count(self):
        return len(self.instances)

    @property
    def unfilled_count(self):
        return sum(1 for s in self.slots if s.kind == UNFILLED)

    def slot_of(self, inst_id, role):
        return self.instances[inst_id].role_slot(role)

    def value_of(self, inst_id, role):
        s = self.slot_of(inst_id, role)
        return None if s is None else self.slots[s]

    def atom_of(self, inst_id, role):
        v = self.value_of(inst_id, role)
        return v.atom if v is not None and v.kind == ATOM else None

    def ref_of(self, inst_id, role):
        v = self.value_of(inst_id, role)
        return v.ref if v is not None and v.kind == REF else None


class _Inst:
    __slots__ = ("schema", "roles", "anchor", "prov", "alive")

    def __init__(self, schema, roles, anchor, prov):
        self.schema = schema
        self.roles = roles  # dict role -> slot id
        self.anchor = anchor
        self.prov = prov
        self.alive = True


class MeaningWorkspace:
    """Mutable slot/instance arena with union-find unification."""

    def __init__(self, grammar):
        self.g = grammar
        self._sparent: list[int] = []
        self._svalue: list[tuple] = []  # (kind, payload)
        self._sconstraints: list[set] = []
        self._iparent: list[int] = []
        self._inst: list[_Inst] = []

    # -- union-find ----------------------------------------------------------

    def find_slot(self, s):
        root = s
        while self._sparent[root] != root:
            root = self._sparent[root]
        while self._sparent[s] != root:
            self._sparent[s], s = root, self._sparent[s]
        return root

    def find_inst(self, i):
        root = i
        while self._iparent[root] != root:
            root = self._iparent[root]
        while self._iparent[i] != root:
            self._iparent[i], i = root, self._iparent[i]
        return root

    # -- construction ----------------------------------------------------------

    def new_slot(self, constraints=()):
        sid = len(self._sparent)
        self._sparent.append(sid)
        self._svalue.append((UNFILLED, None))
        self._sconstraints.append(set(constraints))
        return sid

    def new_instance(self, schema_name, prov):
        roles = {}
        iid = len(self._inst)
        self._iparent.append(iid)
        rec = _Inst(schema_name, roles, -1, prov)
        self._inst.append(rec)
        for rname, rdef in self.g.schema_roles(schema_name).items():
            roles[rname] = self.new_slot({rdef.type_name})
        anchor = self.new_slot()
        self._svalue[anchor] = (REF, iid)
        rec.anchor = anchor
        for left, right in self.g.schema_constraints(schema_name):
            a = self.resolve(iid, left)
            b = self.resolve(iid, right)
            self.unify_slots(a, b)
        return iid

    def inst(self, i) -> _Inst:
        return self._inst[self.find_inst(i)]

    def value(self, s):
        return self._svalue[self.find_slot(s)]

    def constraints(self, s):
        return self._sconstraints[self.find_slot(s)]

    # -- path resolution ---------------------------------------------------------

    def resolve(self, inst_id, parts):
        """Resolve a role path to a slot, instantiating schema-typed roles on
        demand.  Empty path -> the instance's anchor slot."""
        cur = self.find_inst(inst_id)
        if not parts:
            return self.find_slot(self._inst[cur].anchor)
        for i, part in enumerate(parts):
            rec = self._inst[cur]
            if part not in rec.roles:
                raise UnifyFailure(f"no role {part!r} on {rec.schema}")
            slot = self.find_slot(rec.roles[part])
            if i == len(parts) - 1:
                return slot
            kind, payload = self._svalue[slot]
            if kind == REF:
                cur = self.find_inst(payload)
            elif kind == UNFILLED:
                rdef = self.g.schema_roles(rec.schema)[part]
                if rdef.type_name not in self.g.schemas:
                    raise UnifyFailure(
                        f"cannot descend through non-schema role {part!r}")
                sub = self.new_instance(rdef.type_name, rec.prov)
                self.unify_slots(slot, self._inst[sub].anchor)
                cur = self.find_inst(sub)
            else:
                raise UnifyFailure(f"cannot descend through atom at {part!r}")
        raise AssertionError("unreachable")

    # -- unification ----------------------------------------------------------

    def _atom_ok(self, atom, constraint):
        if constraint in self.g.schemas:
            return False
        if isinstance(atom, (int, float)) and not isinstance(atom, bool):
            return self.g.comparable("number", constraint)
        if not isinstance(atom, str) or atom not in self.g.ontology:
            return False
        return self.g.comparable(atom, constraint)

    def _ref_ok(self, inst_id, constraint):
        rec = self.inst(inst_id)
        if constraint in self.g.schemas:
            return (self.g.subtype_of(rec.schema, constraint)
                    or self.g.subtype_of(constraint, rec.schema))
        # ontology constraint: judged by the instance's ontoType, if any
        if "ontoType" not in rec.roles:
            return False
        kind, payload = self.value(rec.roles["ontoType"])
        if kind == UNFILLED:
            return True
        if kind == ATOM and isinstance(payload, str):
            return self.g.comparable(payload, constraint)
        return False

    def _check_value(self, value, constraints):
        kind, payload = value
        if kind == UNFILLED:
            return
        for c in constraints:
            ok = (self._atom_ok(payload, c) if kind == ATOM
                  else self._ref_ok(payload, c))
            if not ok:
                shown = payload if kind == ATOM else self.inst(payload).schema
                raise UnifyFailure(f"value {shown!r} violates type {c!r}")

    def fill_atom(self, slot, atom):
        slot = self.find_slot(slot)
        kind, payload = self._svalue[slot]
        if kind == ATOM:
            if payload != atom:
                raise UnifyFailure(f"atom conflict {payload!r} vs {atom!r}")
            return
        if kind == REF:
            raise UnifyFailure(f"cannot fill instance slot with atom {atom!r}")
        value = (ATOM, atom)
        self._check_value(value, self._sconstraints[slot])
        self._svalue[slot] = value

    def unify_slots(self, a, b):
        a, b = self.find_slot(a), self.find_slot(b)
        if a == b:
            return a
        va, vb = self._svalue[a], self._svalue[b]
        merged_constraints = self._sconstraints[a] | self._sconstraints[b]
        # union now so recursive instance unification sees one class
        self._sparent[b] = a
        self._sconstraints[a] = merged_constraints
        if va[0] == UNFILLED:
            value = vb
        elif vb[0] == UNFILLED:
            value = va
        elif va[0] == ATOM and vb[0] == ATOM:
            if va[1] != vb[1]:
                raise UnifyFailure(f"atom conflict {va[1]!r} vs {vb[1]!r}")
            value = va
        elif va[0] == REF and vb[0] == REF:
            merged = self.unify_instances(va[1], vb[1])
            value = (REF, merged)
        else:
            raise UnifyFailure("cannot unify atom with instance")
        self._check_value(value, merged_constraints)
        self._svalue[a] = value
        return a

    def unify_instances(self, i, j):
        i, j = self.find_inst(i), self.find_inst(j)
        if i == j:
            return i
        ri, rj = self._inst[i], self._inst[j]
        if self.g.subtype_of(ri.schema, rj.schema):
            keep, drop = i, j
        elif self.g.subtype_of(rj.schema, ri.schema):
            keep, drop = j, i
        else:
            raise UnifyFailure(
                f"cannot unify {ri.schema} with {rj.schema}")
        rk, rd = self._inst[keep], self._inst[drop]
        self._iparent[drop] = keep
        rd.alive = False
        rk.prov = (min(rk.prov[0], rd.prov[0]), max(rk.prov[1], rd.prov[1]))
        for rname, slot in rd.roles.items():
            if rname in rk.roles:
                self.unify_slots(rk.roles[rname], slot)
            else:
                rk.roles[rname] = slot
        # collapse anchors; value stays a ref to the surviving instance
        ak, ad = self.find_slot(rk.anchor), self.find_slot(rd.anchor)
        if ak != ad:
            self._sparent[ad] = ak
            self._sconstraints[ak] |= self._sconstraints[ad]
        self._svalue[ak] = (REF, keep)
        self._check_value((REF, keep), self._sconstraints[ak])
        return keep

    # -- import / freeze ---------------------------------------------------------

    def import_semspec(self, sem: SemSpec):
        """Copy a frozen SemSpec into this workspace; returns inst id map."""
        slot_map = {}
        for sid, slot in enumerate(sem.slots):
            slot_map[sid] = self.new_slot(slot.constraints)
        inst_map = {}
        base = len(self._inst)
        for iid, inst in enumerate(sem.instances):
            new_id = len(self._inst)
            self._iparent.append(new_id)
            rec = _Inst(inst.schema,
                        {r: slot_map[s] for r, s in inst.roles},
                        -1, inst.prov)
            anchor = self.new_slot()
            self._svalue[anchor] = (REF, new_id)
            rec.anchor = anchor
            self._inst.append(rec)
            inst_map[iid] = new_id
        for sid, slot in enumerate(sem.slots):
            if slot.kind == ATOM:
                self._svalue[slot_map[sid]] = (ATOM, slot.atom)
            elif slot.kind == REF:
                self._svalue[slot_map[sid]] = (REF, inst_map[slot.ref])
                # keep anchor classes intact: every slot holding a ref is
                # co-indexed with the instance's anchor
                self._sparent[self.find_slot(slot_map[sid])] = self.find_slot(
                    self._inst[inst_map[slot.ref]].anchor)
                self._sconstraints[self.find_slot(slot_map[sid])] |= set(
                    slot.constraints)
        _ = base
        return inst_map

    def freeze(self, root_inst) -> SemSpec:
        """Canonicalize reachable structure into a frozen SemSpec.

        Instances are numbered depth-first from the root in role-declaration
        order; slots are numbered in first-encounter order.  Unreachable
        instances (function-word meanings, detached pronouns) are dropped.
        """
        root = self.find_inst(root_inst)
        inst_order: list[int] = []
        inst_num: dict[int, int] = {}
        slot_num: dict[int, int] = {}
        slot_order: list[int] = []

        def number_slot(s):
            s = self.find_slot(s)
            if s not in slot_num:
                slot_num[s] = len(slot_order)
                slot_order.append(s)
            return slot_num[s]

        def visit(i):
            i = self.find_inst(i)
            if i in inst_num:
                return
            inst_num[i] = len(inst_order)
            inst_order.append(i)
            rec = self._inst[i]
            for rname in self.g.schema_roles(rec.schema):
                slot = rec.roles[rname]
                number_slot(slot)
                kind, payload = self.value(slot)
                if kind == REF:
                    visit(payload)

        visit(root)

        instances = []
        for i in inst_order:
            rec = self._inst[i]
            roles = tuple((rname, number_slot(rec.roles[rname]))
                          for rname in self.g.schema_roles(rec.schema))
            instances.append(SemInstance(rec.schema, roles, rec.prov))
        slots = []
        for s in slot_order:
            kind, payload = self.value(s)
            if kind == REF:
                target = self.find_inst(payload)
                if target not in inst_num:
                    kind, payload = UNFILLED, None
                else:
                    payload = inst_num[target]
            slots.append(SemSlot(
                kind,
                atom=payload if kind == ATOM else None,
                ref=payload if kind == REF else None,
                constraints=tuple(sorted(self.constraints(s)))))
        spec = SemSpec(tuple(instances), tuple(slots), inst_num[root], "")
        object.__setattr__(spec, "text", render_semspec(spec))
        return spec


def render_semspec(sem: SemSpec) -> str:
    """Deterministic indented tree; slot ids printed as ``#n``."""
    lines = []
    printed = set()

    def label(i):
        return f"i{i}"

    def visit(i, indent):
        printed.add(i)
        inst = sem.instances[i]
        pad = "  " * indent
        for rname, sid in inst.roles:
            slot = sem.slots[sid]
            if slot.kind == UNFILLED:
                lines.append(f"{pad}{rname}: #{sid}")
            elif slot.kind == ATOM:
                lines.append(f"{pad}{rname}: #{sid} = {slot.atom}")
            else:
                tgt = slot.ref
                if tgt in printed:
                    lines.append(f"{pad}{rname}: #{sid} -> {label(tgt)}")
                else:
                    lines.append(
                        f"{pad}{rname}: #{sid} = "
                        f"{sem.instances[tgt].schema} {label(tgt)}")
                    visit(tgt, indent + 1)

    root = sem.instances[sem.root]
    lines.append(f"{root.schema} {label(sem.root)}")
    visit(sem.root, 1)
    return "\n".join(lines) + "\n"


def validate_semspec(g, sem: SemSpec) -> list[str]:
    """Check the SemSpec type invariants; returns problem strings."""
    problems = []
    for iid, inst in enumerate(sem.instances):
        if inst.schema not in g.schemas:
            problems.append(f"instance {iid}: unknown schema {inst.schema}")
            continue
        declared = g.schema_roles(inst.schema)
        names = [r for r, _ in inst.roles]
        if set(names) != set(declared):
            problems.append(
                f"instance {iid} ({inst.schema}): roles {names} != declared")
        for rname, sid in inst.roles:
            if not 0 <= sid < len(sem.slots):
                problems.append(f"instance {iid}: slot #{sid} out of range")
                continue
            slot = sem.slots[sid]
            rdef = declared.get(rname)
            if rdef is None:
                continue
            if slot.kind == ATOM:
                atom = slot.atom
                if isinstance(atom, (int, float)) and not isinstance(atom, bool):
                    ok = g.comparable("number", rdef.type_name)
                else:
                    ok = (isinstance(atom, str) and atom in g.ontology
                          and g.comparable(atom, rdef.type_name))
                if not ok:
                    problems.append(
                        f"instance {iid}.{rname}: atom {atom!r} violates "
                        f"{rdef.type_name}")
            elif slot.kind == REF:
                tgt = sem.instances[slot.ref]
                if rdef.type_name in g.schemas:
                    if not (g.subtype_of(tgt.schema, rdef.type_name)
                            or g.subtype_of(rdef.type_name, tgt.schema)):
                        problems.append(
                            f"instance {iid}.{rname}: {tgt.schema} violates "
                            f"{rdef.type_name}")
        # co-indexing: every schema constraint must resolve to one slot
        for left, right in g.schema_constraints(inst.schema):
            sa = _static_resolve(g, sem, iid, left)
            sb = _static_resolve(g, sem, iid, right)
            if sa is not None and sb is not None and sa != sb:
                problems.append(
                    f"instance {iid} ({inst.schema}): constraint "
                    f"{'.'.join(left)} <-> {'.'.join(right)} not co-indexed")
    # reachability
    reached = set()
    stack = [sem.root]
    while stack:
        i = stack.pop()
        if i in reached:
            continue
        reached.add(i)
        for _, sid in sem.instances[i].roles:
            slot = sem.slots[sid]
            if slot.kind == REF:
                stack.append(slot.ref)
    if len(reached) != len(sem.instances):
        orphans = sorted(set(range(len(sem.instances))) - reached)
        problems.append(f"instances unreachable from root: {orphans}")
    return problems


def _static_resolve(g, sem: SemSpec, inst_id, parts):
    cur = inst_id
    for i, part in enumerate(parts):
        sid = sem.instances[cur].role_slot(part)
        if sid is None:
            return None
        if i == len(parts) - 1:
            return sid
        slot = sem.slots[sid]
        if slot.kind != REF:
            return None  # never materialized; vacuously co-indexed
        cur = slot.ref
    return None


def effective_type(g, sem: SemSpec, inst_id) -> str:
    """Most specific ontology type implied by the instance's ontoType and the
    constraints of the slot class that holds it."""
    candidates = []
    atom = sem.atom_of(inst_id, "ontoType")
    if isinstance(atom, str):
        candidates.append(atom)
    for slot in sem.slots:
        if slot.kind == REF and slot.ref == inst_id:
            candidates.extend(c for c in slot.constraints if c in g.ontology)
    best = g.meet(candidates)
    return best if best is not None else "entity"

