"""Core vocabulary: terms, atoms, rules, knowledge bases, queries.

Rules are kept in a fixed normal form (seven shapes, roughly: concept
inclusions, conjunctions on the left, qualified existential restrictions on
either side, value restrictions, nominals, and role inclusions).  Inverse
roles are canonicalized away at construction time: an atom ``r-(x, y)`` is
stored as ``r(y, x)``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator, Mapping, Optional, Union


class KBError(Exception):
    """Malformed knowledge base input."""


# ---------------------------------------------------------------------------
# Terms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Const:
    name: str

    def __repr__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Var:
    name: str

    def __repr__(self) -> str:
        return f"?{self.name}"


@dataclass(frozen=True)
class SkolemTerm:
    """Application of a unary Skolem function to a term."""

    fn: str
    arg: Term

    def __repr__(self) -> str:
        return f"{self.fn}({self.arg!r})"


Term = Union[Const, Var, SkolemTerm]


def term_depth(t: Term) -> int:
    d = 0
    while isinstance(t, SkolemTerm):
        d += 1
        t = t.arg
    return d


def term_is_ground(t: Term) -> bool:
    while isinstance(t, SkolemTerm):
        t = t.arg
    return isinstance(t, Const)


def subterms(t: Term) -> Iterator[Term]:
    """The term itself plus everything nested below it."""
    while True:
        yield t
        if not isinstance(t, SkolemTerm):
            return
        t = t.arg


def term_key(t: Term):
    """Total order on terms: constants, then Skolem terms, then variables."""
    if isinstance(t, Const):
        return (0, t.name)
    if isinstance(t, SkolemTerm):
        return (1, t.fn) + term_key(t.arg)
    return (2, t.name)


def format_term(t: Term) -> str:
    if isinstance(t, Const):
        return t.name
    if isinstance(t, Var):
        return f"?{t.name}"
    return f"{t.fn}({format_term(t.arg)})"


# ---------------------------------------------------------------------------
# Atoms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConceptAtom:
    concept: str
    term: Term


@dataclass(frozen=True)
class RoleAtom:
    role: str
    subj: Term
    obj: Term


@dataclass(frozen=True)
class EqAtom:
    lhs: Term
    rhs: Term


Atom = Union[ConceptAtom, RoleAtom, EqAtom]


def atom_terms(a: Atom) -> tuple[Term, ...]:
    if isinstance(a, ConceptAtom):
        return (a.term,)
    if isinstance(a, RoleAtom):
        return (a.subj, a.obj)
    return (a.lhs, a.rhs)


def atom_vars(a: Atom) -> set[Var]:
    out = set()
    for t in atom_terms(a):
        for s in subterms(t):
            if isinstance(s, Var):
                out.add(s)
    return out


def atom_is_ground(a: Atom) -> bool:
    return all(term_is_ground(t) for t in atom_terms(a))


def atom_pred(a: Atom) -> tuple:
    """Bucket key: predicate symbol with its kind."""
    if isinstance(a, ConceptAtom):
        return ("C", a.concept)
    if isinstance(a, RoleAtom):
        return ("R", a.role)
    return ("=",)


def atom_key(a: Atom):
    return atom_pred(a) + tuple(term_key(t) for t in atom_terms(a))


def format_atom(a: Atom) -> str:
    if isinstance(a, ConceptAtom):
        return f"{a.concept}({format_term(a.term)})"
    if isinstance(a, RoleAtom):
        return f"{a.role}({format_term(a.subj)},{format_term(a.obj)})"
    return f"{format_term(a.lhs)} = {format_term(a.rhs)}"


def substitute_term(t: Term, subst: Mapping[Var, Term]) -> Term:
    if isinstance(t, Var):
        return subst.get(t, t)
    if isinstance(t, SkolemTerm):
        return SkolemTerm(t.fn, substitute_term(t.arg, subst))
    return t


def substitute_atom(a: Atom, subst: Mapping[Var, Term]) -> Atom:
    if isinstance(a, ConceptAtom):
        return ConceptAtom(a.concept, substitute_term(a.term, subst))
    if isinstance(a, RoleAtom):
        return RoleAtom(a.role, substitute_term(a.subj, subst),
                        substitute_term(a.obj, subst))
    return EqAtom(substitute_term(a.lhs, subst), substitute_term(a.rhs, subst))


# ---------------------------------------------------------------------------
# Rules and normal forms
# ---------------------------------------------------------------------------

class NormalForm(Enum):
    I = "i"          # A(x) -> B(x)
    II = "ii"        # A(x), B(x) -> C(x)     (body atoms may be role patterns)
    III = "iii"      # R(x,y), A(y) -> B(x)
    IV = "iv"        # A(x) -> exists y. R(x,y), B(y)
    V = "v"          # A(x), R(x,y) -> B(y)
    VI = "vi"        # A(x) -> x = a
    VII = "vii"      # R1(x,y) -> R2(x,y)


class Fragment(Enum):
    DLLiteR = "dl-lite-r"
    EL = "el"
    HornALC = "horn-alc"
    HornALCHOI = "horn-alchoi"


# Reporting preference for the minimal fragment; the first two are
# incomparable, the rest contain everything before them in this list only
# in the ALCHOI case (DL-Lite has inverse roles, Horn-ALC does not).
FRAGMENT_ORDER = (Fragment.DLLiteR, Fragment.EL, Fragment.HornALC,
                  Fragment.HornALCHOI)

ALL_FRAGMENTS = frozenset(FRAGMENT_ORDER)
RESERVED_CONCEPTS = ("top", "bot")


@dataclass(frozen=True)
class Rule:
    """One normalized existential rule."""

    body: tuple[Atom, ...]
    head: tuple[Atom, ...]
    existential_vars: tuple[Var, ...]
    normal_form: NormalForm

    def variables(self) -> set[Var]:
        out = set()
        for a in self.body + self.head:
            out |= atom_vars(a)
        return out


def _solo_vars(atoms: Iterable[Atom]) -> set[Var]:
    """Variables occurring exactly once across the given atoms."""
    counts: dict[Var, int] = {}
    for a in atoms:
        for t in atom_terms(a):
            if isinstance(t, Var):
                counts[t] = counts.get(t, 0) + 1
    return {v for v, c in counts.items() if c == 1}


def _role_pattern(atom: RoleAtom, anchor: Var, solo: set[Var]) -> Optional[bool]:
    """Classify a body role atom as an existential pattern on ``anchor``.

    Returns False for a forward pattern (anchor in subject position),
    True for an inverse pattern, or None if the atom is not a pattern on
    the anchor at all.
    """
    if atom.subj == anchor and atom.obj in solo and atom.obj != anchor:
        return False
    if atom.obj == anchor and atom.subj in solo and atom.subj != anchor:
        return True
    return None


def classify_rule(body: tuple[Atom, ...], head: tuple[Atom, ...],
                  evars: tuple[Var, ...]) -> tuple[NormalForm, frozenset[Fragment]]:
    """Match a rule against the seven allowed shapes.

    Returns the normal form together with the set of fragments the rule is
    expressible in.  Raises KBError for anything outside the shapes.
    """
    if not body:
        raise KBError("rule has an empty body")
    if not head:
        raise KBError("rule has an empty head")
    if any(isinstance(a, EqAtom) for a in body):
        raise KBError("equality atoms are not allowed in rule bodies")
    body_vars = set().union(*(atom_vars(a) for a in body))
    for v in evars:
        if v in body_vars:
            raise KBError(f"existential variable ?{v.name} occurs in the body")

    if evars:
        return _classify_existential(body, head, evars)
    if len(head) != 1:
        raise KBError("not in normal form: multi-atom heads need an "
                      "existential variable (shape iv)")
    h = head[0]
    if isinstance(h, EqAtom):
        return _classify_nominal(body, h)
    if isinstance(h, RoleAtom):
        return _classify_role_inclusion(body, h)
    return _classify_concept_head(body, h)


def _classify_existential(body, head, evars):
    if len(evars) != 1:
        raise KBError("not in normal form: at most one existential variable")
    y = evars[0]
    if len(body) != 1 or not isinstance(body[0], ConceptAtom) \
            or not isinstance(body[0].term, Var):
        raise KBError("not in normal form: shape (iv) needs a single "
                      "concept atom body")
    x = body[0].term
    roles = [a for a in head if isinstance(a, RoleAtom)]
    concepts = [a for a in head if isinstance(a, ConceptAtom)]
    if len(roles) != 1 or len(roles) + len(concepts) != len(head):
        raise KBError("not in normal form: shape (iv) head must be one role "
                      "atom plus an optional concept atom")
    role = roles[0]
    inverse = None
    if role.subj == x and role.obj == y:
        inverse = False
    elif role.subj == y and role.obj == x:
        inverse = True
    else:
        raise KBError("not in normal form: shape (iv) role atom must connect "
                      "the body variable with the existential one")
    if len(concepts) > 1:
        raise KBError("not in normal form: shape (iv) allows one head concept")
    if concepts and concepts[0].term != y:
        raise KBError("not in normal form: shape (iv) head concept must hold "
                      "at the existential variable")
    top_filler = not concepts
    if top_filler:
        frags = ALL_FRAGMENTS if not inverse \
            else frozenset({Fragment.DLLiteR, Fragment.HornALCHOI})
    else:
        frags = frozenset({Fragment.EL, Fragment.HornALC, Fragment.HornALCHOI}) \
            if not inverse else frozenset({Fragment.HornALCHOI})
    return NormalForm.IV, frags


def _classify_nominal(body, h: EqAtom):
    if len(body) != 1 or not isinstance(body[0], ConceptAtom) \
            or not isinstance(body[0].term, Var):
        raise KBError("not in normal form: shape (vi) needs a single "
                      "concept atom body")
    x = body[0].term
    if h.lhs != x or not isinstance(h.rhs, Const):
        raise KBError("not in normal form: shape (vi) head must equate the "
                      "body variable with an individual")
    return NormalForm.VI, frozenset({Fragment.HornALCHOI})


def _classify_role_inclusion(body, h: RoleAtom):
    if len(body) != 1 or not isinstance(body[0], RoleAtom):
        raise KBError("not in normal form: a role-atom head needs a single "
                      "role-atom body (shape vii)")
    b = body[0]
    if not (isinstance(b.subj, Var) and isinstance(b.obj, Var) and b.subj != b.obj):
        raise KBError("not in normal form: shape (vii) body must use two "
                      "distinct variables")
    if (h.subj, h.obj) not in ((b.subj, b.obj), (b.obj, b.subj)):
        raise KBError("not in normal form: shape (vii) head must use the "
                      "body variables")
    return NormalForm.VII, frozenset({Fragment.DLLiteR, Fragment.HornALCHOI})


def _classify_concept_head(body, h: ConceptAtom):
    if not isinstance(h.term, Var):
        raise KBError("not in normal form: head concept must hold at a variable")
    v = h.term
    solo = _solo_vars(body)

    if len(body) == 1:
        b = body[0]
        if isinstance(b, ConceptAtom):
            if b.term != v:
                raise KBError("not in normal form: head variable must occur "
                              "in the body")
            return NormalForm.I, ALL_FRAGMENTS
        inv = _role_pattern(b, v, solo)
        if inv is None:
            raise KBError("not in normal form: single role-atom body must be "
                          "an existential pattern on the head variable")
        # unqualified existential on the left; fine for DL-Lite either way
        return NormalForm.III, ALL_FRAGMENTS if not inv \
            else frozenset({Fragment.DLLiteR, Fragment.HornALCHOI})

    if len(body) != 2:
        raise KBError("not in normal form: rule bodies have at most two atoms")

    concepts = [a for a in body if isinstance(a, ConceptAtom)]
    roles = [a for a in body if isinstance(a, RoleAtom)]
    if len(concepts) == 2:
        if not all(c.term == v for c in concepts):
            raise KBError("not in normal form: shape (ii) atoms must share "
                          "the head variable")
        return NormalForm.II, frozenset(
            {Fragment.EL, Fragment.HornALC, Fragment.HornALCHOI})

    if len(concepts) == 1 and len(roles) == 1:
        c, r = concepts[0], roles[0]
        if not isinstance(c.term, Var):
            raise KBError("not in normal form: body concept must hold at a "
                          "variable")
        u = c.term
        if u == r.obj and v == r.subj and r.subj != r.obj:
            # qualified existential on the left
            return NormalForm.III, frozenset(
                {Fragment.EL, Fragment.HornALC, Fragment.HornALCHOI})
        if u == r.subj and v == r.obj and r.subj != r.obj:
            # value restriction on the right
            return NormalForm.V, frozenset(
                {Fragment.HornALC, Fragment.HornALCHOI})
        inv = _role_pattern(r, v, solo)
        if u == v and inv is not None:
            frags = frozenset({Fragment.EL, Fragment.HornALC,
                               Fragment.HornALCHOI}) if not inv \
                else frozenset({Fragment.HornALCHOI})
            return NormalForm.II, frags
        raise KBError("not in normal form: concept/role body does not match "
                      "shapes (ii), (iii) or (v)")

    # two role atoms, both existential patterns on the head variable
    invs = [_role_pattern(r, v, solo) for r in roles]
    if any(i is None for i in invs):
        raise KBError("not in normal form: two-role body must consist of "
                      "existential patterns on the head variable")
    frags = frozenset({Fragment.EL, Fragment.HornALC, Fragment.HornALCHOI}) \
        if not any(invs) else frozenset({Fragment.HornALCHOI})
    return NormalForm.II, frags


def make_rule(body: Iterable[Atom], head: Iterable[Atom],
              evars: Iterable[Var] = ()) -> Rule:
    body_t, head_t, evars_t = tuple(body), tuple(head), tuple(evars)
    form, _ = classify_rule(body_t, head_t, evars_t)
    return Rule(body_t, head_t, evars_t, form)


def rule_fragments(rule: Rule) -> frozenset[Fragment]:
    _, frags = classify_rule(rule.body, rule.head, rule.existential_vars)
    return frags


def detect_fragment(tbox: Iterable[Rule]) -> Fragment:
    """The minimal fragment containing every rule.

    DL-Lite and EL are incomparable; when both fit, DL-Lite is reported.
    """
    common = ALL_FRAGMENTS
    for rule in tbox:
        common &= rule_fragments(rule)
    for frag in FRAGMENT_ORDER:
        if frag in common:
            return frag
    raise KBError("rule set fits no supported fragment")  # pragma: no cover


# ---------------------------------------------------------------------------
# Signature, knowledge base, queries
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Signature:
    concept_names: frozenset[str]
    role_names: frozenset[str]
    individual_names: frozenset[str]

    def __post_init__(self):
        for reserved in RESERVED_CONCEPTS:
            if reserved in self.concept_names or reserved in self.role_names \
                    or reserved in self.individual_names:
                raise KBError(f"'{reserved}' is reserved and cannot be declared")
        if (self.concept_names & self.role_names
                or self.concept_names & self.individual_names
                or self.role_names & self.individual_names):
            clash = (self.concept_names & self.role_names
                     | self.concept_names & self.individual_names
                     | self.role_names & self.individual_names)
            raise KBError(f"names used in more than one role: {sorted(clash)}")


def signature_of(tbox: Iterable[Rule], abox: Iterable[Atom]) -> Signature:
    concepts, roles, individuals = set(), set(), set()

    def visit_atom(a: Atom):
        if isinstance(a, ConceptAtom):
            concepts.add(a.concept)
        elif isinstance(a, RoleAtom):
            roles.add(a.role)
        for t in atom_terms(a):
            for s in subterms(t):
                if isinstance(s, Const):
                    individuals.add(s.name)

    for rule in tbox:
        for a in rule.body + rule.head:
            visit_atom(a)
    for a in abox:
        visit_atom(a)
    return Signature(frozenset(concepts), frozenset(roles), frozenset(individuals))


@dataclass(frozen=True)
class KnowledgeBase:
    tbox: tuple[Rule, ...]
    abox: tuple[Atom, ...]
    signature: Signature = field(compare=False)
    fragment: Fragment = field(compare=False)


def make_kb(tbox: Iterable[Rule], abox: Iterable[Atom]) -> KnowledgeBase:
    tbox_t, abox_t = tuple(tbox), tuple(abox)
    for a in abox_t:
        if isinstance(a, EqAtom):
            raise KBError("facts cannot be equalities")
        if not all(isinstance(t, Const) for t in atom_terms(a)):
            raise KBError(f"fact {format_atom(a)} must use constants only")
    sig = signature_of(tbox_t, abox_t)
    return KnowledgeBase(tbox_t, abox_t, sig, detect_fragment(tbox_t))


@dataclass(frozen=True)
class BooleanCQ:
    """Existentially closed conjunction of concept and role atoms."""

    atoms: tuple[Atom, ...]
    existential_vars: tuple[Var, ...]

    def __post_init__(self):
        # equality conjuncts are legal inside derived queries; user-facing
        # query statements reject them at parse time
        declared = set(self.existential_vars)
        used = set()
        for a in self.atoms:
            used |= atom_vars(a)
        if used - declared:
            missing = sorted(v.name for v in used - declared)
            raise KBError(f"undeclared query variables: {missing}")

    def variables(self) -> set[Var]:
        out = set()
        for a in self.atoms:
            out |= atom_vars(a)
        return out

    def terms(self) -> list[Term]:
        seen, out = set(), []
        for a in self.atoms:
            for t in atom_terms(a):
                if t not in seen:
                    seen.add(t)
                    out.append(t)
        return out

    def is_ground(self) -> bool:
        return not self.variables()


def cq_equivalent(a: BooleanCQ, b: BooleanCQ) -> bool:
    """Same atom multiset and same quantified variables (names included)."""
    return (sorted(a.atoms, key=atom_key) == sorted(b.atoms, key=atom_key)
            and set(a.existential_vars) == set(b.existential_vars))


def gaifman_graph(q: BooleanCQ) -> dict[Term, set[Term]]:
    """Co-occurrence graph over the terms of the query."""
    adj: dict[Term, set[Term]] = {t: set() for t in q.terms()}
    for a in q.atoms:
        ts = atom_terms(a)
        for s, t in itertools.combinations(set(ts), 2):
            adj[s].add(t)
            adj[t].add(s)
    return adj


def is_tree_shaped(q: BooleanCQ) -> bool:
    """Connected and acyclic Gaifman graph."""
    adj = gaifman_graph(q)
    if not adj:
        return False
    nodes = list(adj)
    seen = {nodes[0]}
    stack = [(nodes[0], None)]
    while stack:
        node, parent = stack.pop()
        for nxt in adj[node]:
            if nxt == parent:
                continue
            if nxt in seen:
                return False  # back edge: cycle
            seen.add(nxt)
            stack.append((nxt, node))
    if len(seen) != len(nodes):
        return False
    return True
