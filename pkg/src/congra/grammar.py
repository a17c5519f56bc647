"""Grammar formalism: schemas, constructions, the ontology lattice, and the text DSL.

A grammar is assembled from one or more DSL sources (conventionally ``*.cg``
files).  Merging is additive only: later sources may add definitions but never
redefine a name.  After merging, the grammar is validated as a whole; loading
fails on any error-severity diagnostic.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import GrammarSyntaxError, GrammarValidationError, UnknownNameError

KEYWORDS = {
    "schema", "construction", "type", "root", "subcase", "of", "roles",
    "constraints", "constituents", "form", "meaning", "bindings", "token",
    "optional", "meets", "before",
}

DEF_KEYWORDS = {"schema", "construction", "type", "root"}
SECTION_KEYWORDS = {
    "subcase", "roles", "constraints", "constituents", "form", "meaning",
    "bindings", "token",
}


@dataclass(frozen=True)
class Location:
    source: str
    line: int

    def __str__(self):
        return f"{self.source}:{self.line}"


@dataclass(frozen=True)
class RoleDef:
    name: str
    type_name: str
    origin: str  # schema that declared the role


@dataclass(frozen=True)
class Schema:
    name: str
    parents: tuple[str, ...]
    roles: tuple[RoleDef, ...]
    constraints: tuple[tuple[tuple[str, ...], tuple[str, ...]], ...]
    location: Location


@dataclass(frozen=True)
class ConstituentDef:
    label: str
    category: str
    optional: bool


@dataclass(frozen=True)
class FormConstraint:
    left: str
    relation: str  # "meets" | "before"
    right: str


@dataclass(frozen=True)
class BindingDef:
    """Either a link between two meaning paths or a constant fill.

    ``kind`` is "link" (left <-> right) or "fill" (left <- atom).  Paths are
    tuples whose first element is "self" or a constituent label.
    """

    kind: str
    left: tuple[str, ...]
    right: tuple[str, ...] | None = None
    atom: object | None = None


@dataclass(frozen=True)
class Construction:
    name: str
    parents: tuple[str, ...]
    kind: str  # "lexical" | "phrasal" | "abstract"
    token: str | None
    constituents: tuple[ConstituentDef, ...]
    form: tuple[FormConstraint, ...]
    meaning: str | None
    bindings: tuple[BindingDef, ...]
    location: Location


@dataclass(frozen=True)
class TypeDef:
    name: str
    parent: str | None
    location: Location


@dataclass
class Diagnostic:
    severity: str  # "error" | "warning"
    location: Location | None
    message: str

    def __str__(self):
        where = f"{self.location}: " if self.location else ""
        return f"{self.severity}: {where}{self.message}"


@dataclass(frozen=True)
class GrammarSource:
    name: str
    text: str


# ---------------------------------------------------------------------------
# Lexer


_TOKEN_RE = re.compile(r'"[^"\n]*"|<->|<-|[A-Za-z_][\w.]*|[0-9][\w.]*|[:,]|\S')


def _lex(source: GrammarSource):
    toks = []
    for lineno, line in enumerate(source.text.splitlines(), start=1):
        body = line.split("#", 1)[0] if '"' not in line else _strip_comment(line)
        for m in _TOKEN_RE.finditer(body):
            toks.append((m.group(0), lineno, m.start() + 1))
    return toks


def _strip_comment(line: str) -> str:
    out = []
    in_str = False
    for ch in line:
        if ch == '"':
            in_str = not in_str
        if ch == "#" and not in_str:
            break
        out.append(ch)
    return "".join(out)


class _TokenStream:
    def __init__(self, source: GrammarSource):
        self.source = source.name
        self.toks = _lex(source)
        self.pos = 0

    def peek(self):
        return self.toks[self.pos][0] if self.pos < len(self.toks) else None

    def loc(self):
        if self.pos < len(self.toks):
            _, line, col = self.toks[self.pos]
        elif self.toks:
            _, line, col = self.toks[-1]
        else:
            line, col = 1, 1
        return line, col

    def next(self):
        tok = self.toks[self.pos]
        self.pos += 1
        return tok

    def error(self, message):
        line, col = self.loc()
        raise GrammarSyntaxError(message, self.source, line, col)

    def expect(self, text):
        if self.peek() != text:
            self.error(f"expected '{text}', found {self.peek()!r}")
        return self.next()

    def name(self, what="name"):
        tok = self.peek()
        if tok is None or tok in KEYWORDS or not re.fullmatch(r"[A-Za-z_]\w*", tok):
            self.error(f"expected {what}, found {tok!r}")
        return self.next()[0]


def _parse_path(ts: _TokenStream) -> tuple[str, ...]:
    tok = ts.peek()
    if tok is None or tok in KEYWORDS and tok != "self" or tok in {":", ","}:
        ts.error(f"expected path, found {tok!r}")
    text = ts.next()[0]
    parts = tuple(text.split("."))
    for p in parts:
        if not re.fullmatch(r"[A-Za-z_]\w*", p):
            ts.error(f"bad path component {p!r}")
    return parts


def _parse_atom(ts: _TokenStream):
    tok = ts.peek()
    if tok is None:
        ts.error("expected atom")
    text = ts.next()[0]
    if text.startswith('"'):
        return text[1:-1]
    if re.fullmatch(r"-?\d+", text):
        return int(text)
    if re.fullmatch(r"-?\d+\.\d*", text):
        return float(text)
    if not re.fullmatch(r"[A-Za-z_]\w*", text):
        ts.error(f"bad atom {text!r}")
    return text


def _parse_subcase(ts: _TokenStream) -> tuple[str, ...]:
    ts.expect("subcase")
    ts.expect("of")
    parents = [ts.name("parent name")]
    while ts.peek() == ",":
        ts.next()
        parents.append(ts.name("parent name"))
    return tuple(parents)


def _parse_schema(ts: _TokenStream, loc: Location) -> Schema:
    name = ts.name("schema name")
    parents: tuple[str, ...] = ()
    roles: list[RoleDef] = []
    constraints = []
    while ts.peek() in SECTION_KEYWORDS:
        section = ts.peek()
        if section == "subcase":
            parents = _parse_subcase(ts)
        elif section == "roles":
            ts.next()
            while ts.peek() not in DEF_KEYWORDS | SECTION_KEYWORDS and ts.peek() is not None:
                rname = ts.name("role name")
                ts.expect(":")
                rtype = ts.name("type name")
                roles.append(RoleDef(rname, rtype, name))
        elif section == "constraints":
            ts.next()
            while ts.peek() not in DEF_KEYWORDS | SECTION_KEYWORDS and ts.peek() is not None:
                left = _parse_path(ts)
                ts.expect("<->")
                right = _parse_path(ts)
                constraints.append((left, right))
        else:
            ts.error(f"'{section}' not allowed in schema")
    return Schema(name, parents, tuple(roles), tuple(constraints), loc)


def _parse_construction(ts: _TokenStream, loc: Location) -> Construction:
    name = ts.name("construction name")
    parents: tuple[str, ...] = ()
    token = None
    constituents: list[ConstituentDef] = []
    form: list[FormConstraint] = []
    meaning = None
    bindings: list[BindingDef] = []
    while ts.peek() in SECTION_KEYWORDS:
        section = ts.peek()
        if section == "subcase":
            parents = _parse_subcase(ts)
        elif section == "token":
            ts.next()
            tok = ts.next()[0]
            if not tok.startswith('"'):
                ts.error("token must be a quoted string")
            token = tok[1:-1]
        elif section == "constituents":
            ts.next()
            while ts.peek() not in DEF_KEYWORDS | SECTION_KEYWORDS and ts.peek() is not None:
                label = ts.name("constituent label")
                ts.expect(":")
                cat = ts.name("category name")
                optional = False
                if ts.peek() == "optional":
                    ts.next()
                    optional = True
                constituents.append(ConstituentDef(label, cat, optional))
        elif section == "form":
            ts.next()
            while ts.peek() not in DEF_KEYWORDS | SECTION_KEYWORDS and ts.peek() is not None:
                left = ts.name("constituent label")
                if ts.peek() not in {"meets", "before"}:
                    ts.error("expected 'meets' or 'before'")
                rel = ts.next()[0]
                right = ts.name("constituent label")
                form.append(FormConstraint(left, rel, right))
        elif section == "meaning":
            ts.next()
            meaning = ts.name("schema name")
        elif section == "bindings":
            ts.next()
            while ts.peek() not in DEF_KEYWORDS | SECTION_KEYWORDS and ts.peek() is not None:
                left = _parse_path(ts)
                if ts.peek() == "<->":
                    ts.next()
                    right = _parse_path(ts)
                    bindings.append(BindingDef("link", left, right=right))
                elif ts.peek() == "<-":
                    ts.next()
                    atom = _parse_atom(ts)
                    bindings.append(BindingDef("fill", left, atom=atom))
                else:
                    ts.error("expected '<->' or '<-'")
        else:
            ts.error(f"'{section}' not allowed in construction")
    if token is not None and constituents:
        line, col = loc.line, 1
        raise GrammarSyntaxError(
            f"construction {name} has both a token and constituents",
            loc.source, line, col)
    kind = "lexical" if token is not None else ("phrasal" if constituents else "abstract")
    return Construction(name, parents, kind, token, tuple(constituents),
                        tuple(form), meaning, tuple(bindings), loc)


def _parse_type(ts: _TokenStream, loc: Location) -> TypeDef:
    name = ts.name("type name")
    parent = None
    if ts.peek() == "subcase":
        parents = _parse_subcase(ts)
        if len(parents) != 1:
            ts.error("ontology types take a single parent")
        parent = parents[0]
    return TypeDef(name, parent, loc)


def _parse_source(source: GrammarSource):
    ts = _TokenStream(source)
    defs = []
    while ts.peek() is not None:
        line, _col = ts.loc()
        head = ts.peek()
        loc = Location(source.name, line)
        if head == "schema":
            ts.next()
            defs.append(_parse_schema(ts, loc))
        elif head == "construction":
            ts.next()
            defs.append(_parse_construction(ts, loc))
        elif head == "type":
            ts.next()
            defs.append(_parse_type(ts, loc))
        elif head == "root":
            ts.next()
            defs.append(("root", ts.name("construction name"), loc))
        else:
            ts.error(f"expected a definition, found {head!r}")
    return defs


# ---------------------------------------------------------------------------
# Grammar


class Grammar:
    """Immutable after construction; safe to share across analyses."""

    def __init__(self, schemas, constructions, ontology, roots):
        self.schemas: dict[str, Schema] = schemas
        self.constructions: dict[str, Construction] = constructions
        self.ontology: dict[str, str | None] = ontology
        self.roots: tuple[str, ...] = tuple(roots)
        self._schema_anc = self._ancestors(
            {n: s.parents for n, s in schemas.items()})
        self._cxn_anc = self._ancestors(
            {n: c.parents for n, c in constructions.items()})
        self._type_anc = self._ancestors(
            {n: (p,) if p else () for n, p in ontology.items()})
        self._flat_roles: dict[str, dict[str, RoleDef]] = {}
        self._flat_constraints: dict[str, tuple] = {}
        for name in schemas:
            self._flat_roles[name] = self._flatten_roles(name)
            self._flat_constraints[name] = self._flatten_constraints(name)
        self._resolved_meaning: dict[str, str | None] = {}
        self._flat_constituents: dict[str, tuple[ConstituentDef, ...]] = {}
        self._flat_form: dict[str, tuple[FormConstraint, ...]] = {}
        self._flat_bindings: dict[str, tuple[BindingDef, ...]] = {}
        for name in constructions:
            self._resolved_meaning[name] = self._resolve_meaning(name)
            self._flat_constituents[name] = self._flatten_cxn(name, "constituents")
            self._flat_form[name] = self._flatten_cxn(name, "form")
            self._flat_bindings[name] = self._flatten_cxn(name, "bindings")
        self.lexical_index: dict[str, list[str]] = {}
        self.phrasal_rules: list[str] = []
        for name, cxn in constructions.items():
            if cxn.token is not None:
                self.lexical_index.setdefault(cxn.token, []).append(name)
            elif self._flat_constituents[name]:
                self.phrasal_rules.append(name)

    @staticmethod
    def _ancestors(parents_map):
        anc = {}

        def walk(name, seen):
            if name in anc:
                return anc[name]
            if name in seen:
                return frozenset({name})  # cycle; validation reports it
            seen = seen | {name}
            acc = {name}
            for p in parents_map.get(name, ()):
                if p in parents_map:
                    acc |= walk(p, seen)
            anc[name] = frozenset(acc)
            return anc[name]

        for n in parents_map:
            walk(n, frozenset())
        return anc

    def _flatten_roles(self, name, _seen=None):
        _seen = _seen or set()
        if name in _seen:
            return {}
        schema = self.schemas[name]
        out: dict[str, RoleDef] = {}
        for p in schema.parents:
            if p in self.schemas:
                for rname, rdef in self._flatten_roles(p, _seen | {name}).items():
                    out.setdefault(rname, rdef)
        for rdef in schema.roles:
            out[rdef.name] = rdef
        return out

    def _flatten_constraints(self, name, _seen=None):
        _seen = _seen or set()
        if name in _seen:
            return ()
        schema = self.schemas[name]
        out = []
        for p in schema.parents:
            if p in self.schemas:
                out.extend(self._flatten_constraints(p, _seen | {name}))
        out.extend(schema.constraints)
        return tuple(dict.fromkeys(out))

    def _resolve_meaning(self, name, _seen=None):
        _seen = _seen or set()
        if name in _seen:
            return None
        cxn = self.constructions[name]
        if cxn.meaning is not None:
            return cxn.meaning
        for p in cxn.parents:
            if p in self.constructions:
                m = self._resolve_meaning(p, _seen | {name})
                if m is not None:
                    return m
        return None

    def _flatten_cxn(self, name, what, _seen=None):
        _seen = _seen or set()
        if name in _seen:
            return ()
        cxn = self.constructions[name]
        out = []
        for p in cxn.parents:
            if p in self.constructions:
                out.extend(self._flatten_cxn(p, what, _seen | {name}))
        out.extend(getattr(cxn, what))
        return tuple(dict.fromkeys(out))

    # -- public query API ---------------------------------------------------

    def schema_roles(self, name) -> dict[str, RoleDef]:
        if name not in self.schemas:
            raise UnknownNameError(f"unknown schema {name!r}")
        return self._flat_roles[name]

    def schema_constraints(self, name):
        return self._flat_constraints[name]

    def cxn_meaning(self, name) -> str:
        if name not in self.constructions:
            raise UnknownNameError(f"unknown construction {name!r}")
        return self._resolved_meaning[name]

    def cxn_constituents(self, name):
        return self._flat_constituents[name]

    def cxn_form(self, name):
        return self._flat_form[name]

    def cxn_bindings(self, name):
        return self._flat_bindings[name]

    def subtype_of(self, child: str, parent: str) -> bool:
        """True iff parent is reachable via parent links; reflexive.

        Schemas, constructions, and ontology types each live in their own
        lattice; both names must belong to (at least) one common lattice.
        """
        for anc, table in ((self._schema_anc, self.schemas),
                           (self._cxn_anc, self.constructions),
                           (self._type_anc, self.ontology)):
            if child in table and parent in table:
                return parent in anc[child]
        known = (child in self.schemas or child in self.constructions
                 or child in self.ontology)
        other = (parent in self.schemas or parent in self.constructions
                 or parent in self.ontology)
        if not known or not other:
            missing = child if not known else parent
            raise UnknownNameError(f"unknown name {missing!r}")
        return False

    def is_ontology_type(self, name) -> bool:
        return name in self.ontology

    def comparable(self, a: str, b: str) -> bool:
        """True iff the two ontology types lie on one chain of the lattice."""
        if a not in self.ontology or b not in self.ontology:
            return False
        return b in self._type_anc[a] or a in self._type_anc[b]

    def meet(self, types) -> str | None:
        """Most specific of a chain-comparable set of ontology types."""
        best = None
        for t in types:
            if t not in self.ontology:
                continue
            if best is None or best in self._type_anc[t]:
                best = t
        return best

    def type_depth(self, name) -> int:
        depth = 0
        cur = self.ontology.get(name)
        while cur is not None:
            depth += 1
            cur = self.ontology.get(cur)
        return depth


# ---------------------------------------------------------------------------
# Loading and validation


def load_grammar(sources) -> Grammar:
    """Parse, merge, and validate DSL sources.

    ``sources`` is a list of GrammarSource, (name, text) pairs, or raw texts.
    Raises GrammarSyntaxError or GrammarValidationError.
    """
    norm = []
    for i, s in enumerate(sources):
        if isinstance(s, GrammarSource):
            norm.append(s)
        elif isinstance(s, tuple):
            norm.append(GrammarSource(s[0], s[1]))
        else:
            norm.append(GrammarSource(f"source{i}", s))

    schemas: dict[str, Schema] = {}
    constructions: dict[str, Construction] = {}
    types: dict[str, TypeDef] = {}
    roots: list[str] = []
    diagnostics: list[Diagnostic] = []

    def defined_at(name):
        for table in (schemas, constructions, types):
            if name in table:
                return table[name].location
        return None

    for src in norm:
        for d in _parse_source(src):
            if isinstance(d, tuple) and d[0] == "root":
                if d[1] not in roots:
                    roots.append(d[1])
                continue
            prev = defined_at(d.name)
            if prev is not None:
                diagnostics.append(Diagnostic(
                    "error", d.location,
                    f"duplicate definition of {d.name!r} "
                    f"(first defined at {prev})"))
                continue
            if isinstance(d, Schema):
                schemas[d.name] = d
            elif isinstance(d, Construction):
                constructions[d.name] = d
            else:
                types[d.name] = d

    ontology = {name: t.parent for name, t in types.items()}
    g = Grammar(schemas, constructions, ontology, roots)
    diagnostics.extend(validate_grammar(g))
    errors = [d for d in diagnostics if d.severity == "error"]
    if errors:
        raise GrammarValidationError(errors)
    return g


def _path_resolves(g: Grammar, schema_name: str, path, allow_terminal_any=False):
    """Statically check a role path against flattened role declarations.

    Returns (ok, message, terminal RoleDef or None).
    """
    cur = schema_name
    for i, part in enumerate(path):
        roles = g.schema_roles(cur) if cur in g.schemas else {}
        if part not in roles:
            return False, f"unknown role {part!r} in {cur}", None
        rdef = roles[part]
        if i == len(path) - 1:
            return True, "", rdef
        if rdef.type_name not in g.schemas:
            return (False,
                    f"role {part!r} of {cur} is not schema-typed; "
                    f"cannot descend", None)
        cur = rdef.type_name
    return True, "", None


def _cycle_in(parents_map, name):
    seen = set()
    stack = [name]
    path = []
    def walk(n):
        if n in path:
            return path[path.index(n):]
        if n in seen:
            return None
        seen.add(n)
        path.append(n)
        for p in parents_map.get(n, ()):
            hit = walk(p)
            if hit:
                return hit
        path.pop()
        return None
    return walk(name)


def validate_grammar(g: Grammar) -> list[Diagnostic]:
    """Structural validation; returns diagnostics (empty iff valid)."""
    out: list[Diagnostic] = []

    def err(loc, msg):
        out.append(Diagnostic("error", loc, msg))

    all_names = set(g.schemas) | set(g.constructions) | set(g.ontology)

    # ontology: single top, acyclic, parents exist
    tops = [n for n, p in g.ontology.items() if p is None]
    if g.ontology and len(tops) != 1:
        err(None, f"ontology must have one top type, found {sorted(tops)}")
    for n, p in g.ontology.items():
        if p is not None and p not in g.ontology:
            err(None, f"type {n} has unknown parent {p!r}")
    for n in g.ontology:
        cyc = _cycle_in({k: (v,) if v else () for k, v in g.ontology.items()}, n)
        if cyc:
            err(None, f"ontology cycle: {','.join(sorted(set(cyc)))}")
            break

    # schemas
    for name, schema in g.schemas.items():
        for p in schema.parents:
            if p not in g.schemas:
                err(schema.location, f"schema {name} has unknown parent {p!r}")
        cyc = _cycle_in({k: v.parents for k, v in g.schemas.items()}, name)
        if cyc:
            err(schema.location,
                f"schema inheritance cycle: {','.join(sorted(set(cyc)))}")
            continue
        seen_roles = {}
        for p in schema.parents:
            if p in g.schemas:
                for rname, rdef in g.schema_roles(p).items():
                    seen_roles.setdefault(rname, rdef)
        for rdef in schema.roles:
            if rdef.name in seen_roles and seen_roles[rdef.name] != rdef:
                err(schema.location,
                    f"role {rdef.name!r} of {name} collides with "
                    f"inherited role from {seen_roles[rdef.name].origin}")
            seen_roles[rdef.name] = rdef
            if rdef.type_name not in g.schemas and rdef.type_name not in g.ontology:
                err(schema.location,
                    f"role {rdef.name!r} of {name} has unknown type "
                    f"{rdef.type_name!r}")
        for left, right in schema.constraints:
            for path in (left, right):
                ok, msg, _ = _path_resolves(g, name, path)
                if not ok:
                    err(schema.location, f"constraint path in {name}: {msg}")

    # schema-typed role graph must be acyclic (bounded auto-instantiation)
    role_graph = {}
    for name in g.schemas:
        role_graph[name] = tuple(
            r.type_name for r in g.schema_roles(name).values()
            if r.type_name in g.schemas)
    for name in g.schemas:
        cyc = _cycle_in(role_graph, name)
        if cyc:
            err(g.schemas[name].location,
                f"schema-typed role cycle: {','.join(sorted(set(cyc)))}")
            break

    # constructions
    for name, cxn in g.constructions.items():
        for p in cxn.parents:
            if p not in g.constructions:
                err(cxn.location, f"construction {name} has unknown parent {p!r}")
        cyc = _cycle_in({k: v.parents for k, v in g.constructions.items()}, name)
        if cyc:
            err(cxn.location,
                f"construction inheritance cycle: "
                f"{','.join(sorted(set(cyc)))}")
            continue
        meaning = g.cxn_meaning(name)
        if meaning is None:
            err(cxn.location, f"construction {name} has no meaning schema")
            continue
        if meaning not in g.schemas:
            err(cxn.location,
                f"construction {name} evokes unknown schema {meaning!r}")
            continue
        for p in cxn.parents:
            if p in g.constructions:
                pm = g.cxn_meaning(p)
                if pm in g.schemas and not g.subtype_of(meaning, pm):
                    err(cxn.location,
                        f"meaning {meaning} of {name} is not a subcase of "
                        f"parent meaning {pm}")
        constituents = g.cxn_constituents(name)
        if cxn.token is not None and constituents:
            err(cxn.location, f"lexical construction {name} has constituents")
        labels = [c.label for c in constituents]
        if len(labels) != len(set(labels)):
            err(cxn.location, f"duplicate constituent labels in {name}")
        index = {c.label: i for i, c in enumerate(constituents)}
        for c in constituents:
            if c.category not in g.constructions:
                err(cxn.location,
                    f"constituent {c.label} of {name} has unknown category "
                    f"{c.category!r}")
        for fc in g.cxn_form(name):
            if fc.left not in index or fc.right not in index:
                err(cxn.location,
                    f"form constraint in {name} references unknown label")
                continue
            if index[fc.left] >= index[fc.right]:
                err(cxn.location,
                    f"form constraint {fc.left} {fc.relation} {fc.right} "
                    f"conflicts with declared order in {name}")
            elif fc.relation == "meets":
                between = constituents[index[fc.left] + 1:index[fc.right]]
                if any(not b.optional for b in between):
                    err(cxn.location,
                        f"'{fc.left} meets {fc.right}' in {name} has a "
                        f"mandatory constituent between them")
        # bindings resolve against evoked schemas
        for b in g.cxn_bindings(name):
            for path, side in ((b.left, "left"), (b.right, "right")):
                if path is None:
                    continue
                root, rest = path[0], path[1:]
                if root == "self":
                    base = meaning
                elif root in index:
                    cat = constituents[index[root]].category
                    base = g.cxn_meaning(cat) if cat in g.constructions else None
                else:
                    err(cxn.location,
                        f"binding in {name} references unknown "
                        f"constituent {root!r}")
                    continue
                if base is None or base not in g.schemas:
                    continue
                if rest:
                    ok, msg, _ = _path_resolves(g, base, rest)
                    if not ok:
                        err(cxn.location, f"binding in {name}: {msg}")
            if b.kind == "fill" and isinstance(b.atom, str):
                if b.atom not in g.ontology:
                    err(cxn.location,
                        f"fill atom {b.atom!r} in {name} is not an "
                        f"ontology type")

    # roots
    if not g.roots:
        err(None, "no root construction declared")
    for r in g.roots:
        if r not in g.constructions:
            err(None, f"root {r!r} is not a defined construction")

    return out
