"""Tokenization, best-fit constructional analysis, and anaphora resolution.

The chart is agenda-driven and bottom-up: lexical constructions seed it,
phrasal constructions combine contiguous edges in declared constituent order,
and meaning poles unify as edges combine.  Identical (construction, span,
meaning) edges are packed.  Candidates are ranked by ``score_candidate``.
"""

from __future__ import annotations

import re
from collections import defaultdict, deque
from dataclasses import dataclass

from .errors import EmptyInputError, NoParseError, UnresolvedPronounError
from .semspec import (ATOM, REF, UNFILLED, MeaningWorkspace, SemSpec,
                      UnifyFailure)


@dataclass(frozen=True)
class Token:
    surface: str
    index: int
    span: tuple[int, int]  # character offsets into the raw utterance


_TOKEN_RE = re.compile(r"[^\s,]+|,")


def tokenize(utterance: str) -> list[Token]:
    """Lowercase, strip terminal punctuation, emit commas as own tokens."""
    if utterance is None or not utterance.strip():
        raise EmptyInputError("empty utterance")
    raw = [(m.group(0).lower(), m.start(), m.end())
           for m in _TOKEN_RE.finditer(utterance)]
    # strip . ! ? from the end of the utterance (possibly a whole token)
    while raw:
        text, start, end = raw[-1]
        stripped = text.rstrip(".!?")
        if stripped == text:
            break
        if stripped:
            raw[-1] = (stripped, start, start + len(stripped))
            break
        raw.pop()
    if not raw:
        raise EmptyInputError("utterance contains no words")
    return [Token(text, i, (start, end))
            for i, (text, start, end) in enumerate(raw)]


@dataclass(frozen=True)
class Edge:
    cxn: str
    start: int
    end: int
    sem: SemSpec
    children: tuple  # ((label, Edge | None), ...); empty for lexical edges

    @property
    def key(self):
        return (self.cxn, self.start, self.end, self.sem.text)


@dataclass(frozen=True)
class _Partial:
    cxn: str
    dot: int
    start: int
    end: int
    children: tuple  # Edge | None per constituent position

    def key(self):
        return (self.cxn, self.dot, self.start, self.end,
                tuple(c.key if c is not None else None for c in self.children))


@dataclass
class AnalysisCandidate:
    semspec: SemSpec
    covered: frozenset
    instance_count: int
    unfilled_count: int
    cxn: str = ""
    span: tuple[int, int] = (0, 0)
    edge: Edge | None = None


def score_candidate(c: AnalysisCandidate):
    """Lexicographic score; sorting ascending ranks best first."""
    return (-len(c.covered), c.instance_count, c.unfilled_count,
            c.semspec.text)


def _apply_bindings(ws: MeaningWorkspace, g, cxn_name, self_inst, consts):
    for b in g.cxn_bindings(cxn_name):
        base = self_inst if b.left[0] == "self" else consts.get(b.left[0])
        if base is None:
            continue  # optional constituent absent
        left_slot = ws.resolve(base, b.left[1:])
        if b.kind == "fill":
            ws.fill_atom(left_slot, b.atom)
        else:
            rbase = self_inst if b.right[0] == "self" else consts.get(b.right[0])
            if rbase is None:
                continue
            right_slot = ws.resolve(rbase, b.right[1:])
            ws.unify_slots(left_slot, right_slot)


def build_lexical_edge(g, cxn_name, token: Token) -> Edge | None:
    ws = MeaningWorkspace(g)
    try:
        inst = ws.new_instance(g.cxn_meaning(cxn_name),
                               (token.index, token.index + 1))
        _apply_bindings(ws, g, cxn_name, inst, {})
        sem = ws.freeze(inst)
    except UnifyFailure:
        return None
    return Edge(cxn_name, token.index, token.index + 1, sem, ())


def build_phrasal_edge(g, cxn_name, children) -> Edge | None:
    """children: list of (label, Edge | None) in declared constituent order."""
    present = [e for _, e in children if e is not None]
    start, end = present[0].start, present[-1].end
    # form constraints over present constituents
    spans = {label: (e.start, e.end) for label, e in children if e is not None}
    for fc in g.cxn_form(cxn_name):
        if fc.left in spans and fc.right in spans:
            if fc.relation == "meets" and spans[fc.left][1] != spans[fc.right][0]:
                return None
            if fc.relation == "before" and spans[fc.left][1] > spans[fc.right][0]:
                return None
    ws = MeaningWorkspace(g)
    consts = {}
    try:
        for label, edge in children:
            if edge is None:
                consts[label] = None
            else:
                mapping = ws.import_semspec(edge.sem)
                consts[label] = mapping[edge.sem.root]
        inst = ws.new_instance(g.cxn_meaning(cxn_name), (start, end))
        _apply_bindings(ws, g, cxn_name, inst, consts)
        sem = ws.freeze(inst)
    except UnifyFailure:
        return None
    return Edge(cxn_name, start, end, sem, tuple(children))


def analyze(g, tokens: list[Token]) -> list[AnalysisCandidate]:
    """Bottom-up chart analysis; returns candidates ranked best-first."""
    if not tokens:
        raise EmptyInputError("no tokens")

    unknown = [t.surface for t in tokens if t.surface not in g.lexical_index]

    rules = [(name, g.cxn_constituents(name)) for name in g.phrasal_rules]
    agenda: deque[Edge] = deque()
    edges: dict[tuple, Edge] = {}
    edges_by_start: dict[int, list[Edge]] = defaultdict(list)
    actives_by_end: dict[int, list[_Partial]] = defaultdict(list)
    partial_keys = set()

    def add_edge(e: Edge | None):
        if e is None or e.key in edges:
            return
        edges[e.key] = e
        edges_by_start[e.start].append(e)
        agenda.append(e)

    def next_positions(consts, dot):
        out = []
        for pos in range(dot, len(consts)):
            out.append(pos)
            if not consts[pos].optional:
                break
        return out

    def try_complete(p: _Partial, consts):
        if all(c.optional for c in consts[p.dot:]):
            labeled = tuple((consts[i].label, p.children[i])
                            for i in range(len(consts)))
            add_edge(build_phrasal_edge(g, p.cxn, labeled))

    def add_partial(p: _Partial, consts):
        k = p.key()
        if k in partial_keys:
            return
        partial_keys.add(k)
        try_complete(p, consts)
        if p.dot < len(consts):
            actives_by_end[p.end].append(p)
            for e in list(edges_by_start.get(p.end, ())):
                extend(p, consts, e)

    def extend(p: _Partial, consts, e: Edge):
        for pos in next_positions(consts, p.dot):
            if g.subtype_of(e.cxn, consts[pos].category):
                children = list(p.children)
                children[pos] = e
                add_partial(_Partial(p.cxn, pos + 1, p.start, e.end,
                                     tuple(children)), consts)

    for t in tokens:
        for cxn in g.lexical_index.get(t.surface, ()):
            add_edge(build_lexical_edge(g, cxn, t))

    while agenda:
        e = agenda.popleft()
        for rname, consts in rules:
            for pos in next_positions(consts, 0):
                if g.subtype_of(e.cxn, consts[pos].category):
                    children = [None] * len(consts)
                    children[pos] = e
                    add_partial(_Partial(rname, pos + 1, e.start, e.end,
                                         tuple(children)), consts)
        for p in list(actives_by_end.get(e.start, ())):
            extend(p, g.cxn_constituents(p.cxn), e)

    candidates = []
    for e in edges.values():
        if any(g.subtype_of(e.cxn, r) for r in g.roots):
            candidates.append(AnalysisCandidate(
                semspec=e.sem,
                covered=frozenset(range(e.start, e.end)),
                instance_count=e.sem.instance_count,
                unfilled_count=e.sem.unfilled_count,
                cxn=e.cxn,
                span=(e.start, e.end),
                edge=e))
    if not candidates:
        longest = sorted(edges.values(), key=lambda e: (e.start - e.end, e.start,
                                                        e.cxn))[:8]
        detail = (f"unknown words: {', '.join(unknown)}" if unknown
                  else "no clause spans the input")
        raise NoParseError(
            f"no analysis found ({detail})",
            partials=[(e.cxn, e.start, e.end) for e in longest])
    candidates.sort(key=score_candidate)
    return candidates


def render_tree(edge: Edge, tokens: list[Token]) -> str:
    """Derivation tree of the constructions behind an edge."""
    lines = []

    def visit(label, e: Edge, indent):
        pad = "  " * indent
        head = f"{pad}{label + ': ' if label else ''}{e.cxn} [{e.start},{e.end})"
        if not e.children:
            head += " " + repr(" ".join(t.surface
                                        for t in tokens[e.start:e.end]))
        lines.append(head)
        for lbl, child in e.children:
            if child is not None:
                visit(lbl, child, indent + 1)

    visit("", edge, 0)
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Anaphora resolution


def _is_rd(g, schema):
    return g.subtype_of(schema, "RD")


def resolve_anaphora(g, sem: SemSpec) -> SemSpec:
    """Re-index pronouns to their antecedent's slot; type one-anaphora.

    Antecedents must precede the anaphor, be type-compatible with every
    constraint on the anaphor's slot class, and not be a co-argument of the
    same process; ties break by modifier depth (head nouns first), then
    recency.
    """
    pending = False
    for i, inst in enumerate(sem.instances):
        if _is_rd(g, inst.schema):
            an = sem.atom_of(i, "anaphora")
            if an == "it":
                pending = True
            elif an == "one" and sem.atom_of(i, "ontoType") is None:
                pending = True
    if not pending:
        return sem

    ws = MeaningWorkspace(g)
    mapping = ws.import_semspec(sem)
    root = mapping[sem.root]
    res = _Resolver(g, ws)
    res.run()
    return ws.freeze(root)


class _Resolver:
    def __init__(self, g, ws: MeaningWorkspace):
        self.g = g
        self.ws = ws

    # -- workspace views ------------------------------------------------------

    def instances(self):
        out = []
        for i in range(len(self.ws._inst)):
            if self.ws.find_inst(i) == i and self.ws._inst[i].alive:
                out.append(i)
        return out

    def rds(self):
        return [i for i in self.instances()
                if _is_rd(self.g, self.ws._inst[i].schema)]

    def role_atom(self, i, role):
        roles = self.ws._inst[i].roles
        if role not in roles:
            return None
        kind, payload = self.ws.value(roles[role])
        return payload if kind == ATOM else None

    def role_ref(self, i, role):
        roles = self.ws._inst[i].roles
        if role not in roles:
            return None
        kind, payload = self.ws.value(roles[role])
        return self.ws.find_inst(payload) if kind == REF else None

    def rd_type(self, i):
        atom = self.role_atom(i, "ontoType")
        if isinstance(atom, str):
            return atom
        anchor = self.ws.find_slot(self.ws._inst[i].anchor)
        return self.g.meet(c for c in self.ws._sconstraints[anchor]
                           if c in self.g.ontology)

    # -- structure ------------------------------------------------------------

    def depths(self):
        """Modifier depth per referent: 0 for head nouns, +1 per PP hop."""
        tl_parent = {}
        spg_args = set()
        for i in self.instances():
            schema = self.ws._inst[i].schema
            if self.g.subtype_of(schema, "TrajectorLandmark"):
                lm = self.role_ref(i, "landmark")
                tj = self.role_ref(i, "trajector")
                if lm is not None:
                    tl_parent[lm] = tj
            elif self.g.subtype_of(schema, "SPG"):
                for role in ("source", "path", "goal"):
                    ref = self.role_ref(i, role)
                    if ref is not None:
                        spg_args.add(ref)
        memo = {}

        def depth(rd, guard=()):
            if rd in memo:
                return memo[rd]
            if rd in guard:
                return 0
            if rd in tl_parent:
                parent = tl_parent[rd]
                d = 1 + (depth(parent, guard + (rd,)) if parent is not None else 0)
            elif rd in spg_args:
                d = 1
            else:
                d = 0
            memo[rd] = d
            return d

        return depth

    def coargument_map(self):
        """Map RD -> set of top-level process ids it is an argument of."""
        procs = [i for i in self.instances()
                 if self.g.subtype_of(self.ws._inst[i].schema, "Process")]
        contained = set()
        members = {}
        for p in procs:
            sub = []
            for role in ("means", "affectedProcess"):
                ref = self.role_ref(p, role)
                if ref is not None:
                    sub.append(ref)
                    contained.add(ref)
            members[p] = sub
        rd_complexes = defaultdict(set)
        arg_roles = ("protagonist", "actedUpon", "affectedEntity", "mover")
        for top in procs:
            if top in contained:
                continue
            group = [top]
            seen = set()
            while group:
                m = group.pop()
                if m in seen:
                    continue
                seen.add(m)
                group.extend(members.get(m, ()))
                for role in arg_roles:
                    ref = self.role_ref(m, role)
                    if ref is not None and _is_rd(self.g, self.ws._inst[ref].schema):
                        rd_complexes[ref].add(top)
                spg = self.role_ref(m, "spg")
                if spg is not None:
                    for role in ("trajector", "source", "path", "goal"):
                        ref = self.role_ref(spg, role)
                        if ref is not None and _is_rd(self.g,
                                                      self.ws._inst[ref].schema):
                            rd_complexes[ref].add(top)
        return rd_complexes

    def anchor_constraints(self, i):
        anchor = self.ws.find_slot(self.ws._inst[i].anchor)
        cons = {c for c in self.ws._sconstraints[anchor] if c in self.g.ontology}
        own = self.role_atom(i, "ontoType")
        if isinstance(own, str):
            cons.add(own)
        return cons

    def antecedent_for(self, anaphor):
        depth = self.depths()
        coargs = self.coargument_map()
        excl = coargs.get(anaphor, set())
        required = self.anchor_constraints(anaphor)
        start = self.ws._inst[anaphor].prov[0]
        best = None
        for r in self.rds():
            if r == anaphor:
                continue
            if self.ws._inst[r].prov[0] >= start:
                continue
            if self.role_atom(r, "givenness") == "speaker":
                continue
            if self.role_atom(r, "anaphora") == "it":
                continue
            rtype = self.rd_type(r)
            if rtype is None:
                continue
            if coargs.get(r, set()) & excl:
                continue
            if not all(self.g.comparable(rtype, c) for c in required):
                continue
            key = (depth(r), -self.ws._inst[r].prov[0], r)
            if best is None or key < best[0]:
                best = (key, r)
        return None if best is None else best[1]

    # -- binding ----------------------------------------------------------------

    def bind_pronoun(self, pronoun, antecedent):
        ws = self.ws
        p_anchor = ws.find_slot(ws._inst[pronoun].anchor)
        a_anchor = ws.find_slot(ws._inst[antecedent].anchor)
        ws._svalue[p_anchor] = (UNFILLED, None)
        ws._inst[pronoun].alive = False
        ws.unify_slots(p_anchor, a_anchor)

    def run(self):
        while True:
            pronouns = sorted(
                (i for i in self.rds() if self.role_atom(i, "anaphora") == "it"),
                key=lambda i: self.ws._inst[i].prov[0])
            if not pronouns:
                break
            p = pronouns[0]
            antecedent = self.antecedent_for(p)
            if antecedent is None:
                raise UnresolvedPronounError(
                    "no compatible antecedent for 'it'")
            try:
                self.bind_pronoun(p, antecedent)
            except UnifyFailure as exc:
                raise UnresolvedPronounError(
                    f"pronoun binding failed: {exc}") from exc
        for i in sorted(self.rds(), key=lambda i: self.ws._inst[i].prov[0]):
            if (self.role_atom(i, "anaphora") == "one"
                    and self.role_atom(i, "ontoType") is None):
                antecedent = self.antecedent_for(i)
                if antecedent is None:
                    continue  # fragments: type supplied later by the dialog
                rtype = self.rd_type(antecedent)
                if rtype is not None:
                    self.ws.fill_atom(self.ws._inst[i].roles["ontoType"], rtype)
