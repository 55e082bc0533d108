"""Whole-query inference schemas and the translations between the two
proof formats.

Query-level proofs stay sound with respect to the original rules: rule
application (MPe) rewrites part of a query, tautologies (Te) duplicate
atoms, and the remaining schemas mirror their ground-atom counterparts on
quantified conjunctions.  The translations convert in both directions:
ground-atom proofs aggregate into a tree of query steps and are
de-Skolemized at the end; query proofs are grounded with Skolem terms and
split back into single-atom inferences.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .chase import SkolemRule, skolemize
from .kb import (Atom, BooleanCQ, ConceptAtom, EqAtom, KBError,
                 KnowledgeBase, RoleAtom, Rule, SkolemTerm, Term, Var,
                 atom_key, atom_terms, atom_vars, cq_equivalent,
                 substitute_atom, term_key)
from .matching import (AtomIndex, match_conjunction, match_positionally,
                       unify_atom)
from .proofs import (AtomLabel, CQLabel, ConjLabel, Label, ProofBuilder,
                     ProofGraph, RuleLabel, Schema, TautRule)


class TransformError(KBError):
    pass


# ---------------------------------------------------------------------------
# Schema applications
# ---------------------------------------------------------------------------

def _close_cq(atoms: Sequence[Atom]) -> BooleanCQ:
    """Existentially close every variable, in first-occurrence order."""
    seen: list[Var] = []
    for a in atoms:
        for t in atom_terms(a):
            for v in _term_vars(t):
                if v not in seen:
                    seen.append(v)
    return BooleanCQ(tuple(atoms), tuple(seen))


def _term_vars(t: Term) -> list[Var]:
    if isinstance(t, Var):
        return [t]
    if isinstance(t, SkolemTerm):
        return _term_vars(t.arg)
    return []


def fresh_vars(count: int, taken: set[str], prefix: str = "u") -> list[Var]:
    out: list[Var] = []
    i = 1
    while len(out) < count:
        name = f"{prefix}{i}"
        i += 1
        if name not in taken:
            taken.add(name)
            out.append(Var(name))
    return out


def mpe_apply(cq: BooleanCQ, rule, pi: dict[Var, Term],
              replace_subset: Iterable[Atom], keep_head: Iterable[int],
              rename: Optional[dict[Var, Var]] = None) -> BooleanCQ:
    """Rewrite part of the query with (part of) a rule head.

    ``pi`` matches the rule body into the query; ``replace_subset`` lists
    matched query atoms to drop; ``keep_head`` indexes head atoms to add,
    their existential variables renamed apart (``u1, u2, ...`` by default).
    """
    body_in_cq = {substitute_atom(b, pi) for b in rule.body}
    if not body_in_cq <= set(cq.atoms):
        raise KBError("substitution does not match the rule body into the "
                      "query")
    replace = set(replace_subset)
    if not replace <= body_in_cq:
        raise KBError("replaced atoms must be matched body atoms")
    evars = tuple(getattr(rule, "existential_vars", ()))
    if rename is None:
        taken = {v.name for v in cq.variables()}
        rename = dict(zip(evars, fresh_vars(len(evars), taken)))
    images = {rename.get(v, v) for v in evars}
    if images & cq.variables():
        raise KBError("variable capture: renamed existential variables must "
                      "not occur in the query")
    kept: list[Atom] = []
    for i in keep_head:
        atom = rule.head[i]
        kept.append(_subst_with_rename(atom, pi, rename, evars))
    result = [a for a in cq.atoms if a not in replace]
    for a in kept:
        if a not in result:
            result.append(a)
    return _close_cq(result)


def _subst_with_rename(atom: Atom, pi: dict[Var, Term],
                       rename: dict[Var, Var], evars) -> Atom:
    def fix(t: Term) -> Term:
        if isinstance(t, Var):
            if t in evars:
                return rename.get(t, t)
            return pi.get(t, t)
        if isinstance(t, SkolemTerm):
            return SkolemTerm(t.fn, fix(t.arg))
        return t

    if isinstance(atom, ConceptAtom):
        return ConceptAtom(atom.concept, fix(atom.term))
    if isinstance(atom, RoleAtom):
        return RoleAtom(atom.role, fix(atom.subj), fix(atom.obj))
    return EqAtom(fix(atom.lhs), fix(atom.rhs))


def te_rule(pattern: Sequence[Atom], vars_to_duplicate: Iterable[Var],
            rename: Optional[dict[Var, Var]] = None) -> TautRule:
    """The tautology ``phi(x, y) -> exists x'. phi(x', y)``."""
    dup = list(vars_to_duplicate)
    pattern_vars = set()
    for a in pattern:
        pattern_vars |= atom_vars(a)
    if not set(dup) <= pattern_vars:
        raise KBError("duplicated variables must occur in the pattern")
    if rename is None:
        rename = {v: v for v in dup}
    head = tuple(substitute_atom(a, {v: rename[v] for v in dup})
                 for a in pattern)
    return TautRule(tuple(pattern), head, tuple(rename[v] for v in dup))


def ee_apply(cq: BooleanCQ, equality: EqAtom) -> BooleanCQ:
    """Drop an equality conjunct and substitute through the query."""
    if equality not in cq.atoms:
        raise KBError("equality conjunct is not part of the query")
    rest = [a for a in cq.atoms if a != equality]
    rewritten = [_replace_everywhere(a, equality.lhs, equality.rhs)
                 for a in rest]
    deduped: list[Atom] = []
    for a in rewritten:
        if a not in deduped:
            deduped.append(a)
    return _close_cq(deduped)


def _replace_everywhere(atom: Atom, src: Term, dst: Term) -> Atom:
    def fix(t: Term) -> Term:
        if t == src:
            return dst
        if isinstance(t, SkolemTerm):
            return SkolemTerm(t.fn, fix(t.arg))
        return t

    if isinstance(atom, ConceptAtom):
        return ConceptAtom(atom.concept, fix(atom.term))
    if isinstance(atom, RoleAtom):
        return RoleAtom(atom.role, fix(atom.subj), fix(atom.obj))
    return EqAtom(fix(atom.lhs), fix(atom.rhs))


def ce_apply(cq1: BooleanCQ, cq2: BooleanCQ,
             rename: Optional[dict[Var, Var]] = None) -> BooleanCQ:
    """Conjoin two queries, renaming the second apart (``u1, u2, ...``)."""
    if rename is None:
        taken = {v.name for v in cq1.variables()}
        vs = sorted(cq2.variables(), key=lambda v: v.name)
        rename = dict(zip(vs, fresh_vars(len(vs), taken)))
    renamed = [substitute_atom(a, dict(rename)) for a in cq2.atoms]
    overlap = {rename.get(v, v) for v in cq2.variables()} & cq1.variables()
    if overlap:
        raise KBError(f"renaming does not avoid the first query's variables: "
                      f"{sorted(v.name for v in overlap)}")
    return _close_cq(list(cq1.atoms) + renamed)


def ge_apply(cq: BooleanCQ,
             occurrences: dict[tuple[int, int], Var]) -> BooleanCQ:
    """Abstract chosen ground occurrences to fresh variables.

    Keys are (atom index, argument position); all occurrences mapped to one
    variable must carry the same ground term.
    """
    bound: dict[Var, Term] = {}
    new_atoms: list[Atom] = []
    taken = cq.variables()
    for i, atom in enumerate(cq.atoms):
        terms = list(atom_terms(atom))
        for pos, t in enumerate(terms):
            v = occurrences.get((i, pos))
            if v is None:
                continue
            if v in taken:
                raise KBError(f"generalization variable ?{v.name} already "
                              "occurs in the query")
            if _term_vars(t):
                raise KBError("only ground occurrences can be generalized")
            if v in bound and bound[v] != t:
                raise KBError(f"variable ?{v.name} would generalize two "
                              "different terms")
            bound[v] = t
            terms[pos] = v
        if isinstance(atom, ConceptAtom):
            new_atoms.append(ConceptAtom(atom.concept, terms[0]))
        elif isinstance(atom, RoleAtom):
            new_atoms.append(RoleAtom(atom.role, terms[0], terms[1]))
        else:
            new_atoms.append(EqAtom(terms[0], terms[1]))
    return _close_cq(new_atoms)


def leaf_labels(kb: KnowledgeBase) -> set[Label]:
    out: set[Label] = {CQLabel(BooleanCQ((a,), ())) for a in kb.abox}
    out |= {RuleLabel(r) for r in kb.tbox}
    return out


# ---------------------------------------------------------------------------
# Edge admissibility
# ---------------------------------------------------------------------------

def check_edge_labels(schema: Schema, premises: tuple[Label, ...],
                      conclusion: Label, kb: KnowledgeBase) -> Optional[str]:
    if schema is Schema.MPe:
        return _check_mpe(premises, conclusion, kb)
    if schema is Schema.Te:
        return _check_te(premises, conclusion)
    if schema is Schema.Ee:
        return _check_ee(premises, conclusion)
    if schema is Schema.Ce:
        return _check_ce(premises, conclusion)
    if schema is Schema.Ge:
        return _check_ge(premises, conclusion)
    return f"schema {schema.value} does not belong to this deriver"


def check_edge(schema: Schema, premises: tuple[Label, ...], conclusion: Label,
               kb: KnowledgeBase) -> bool:
    return check_edge_labels(schema, premises, conclusion, kb) is None


def analyze_mpe(premise: BooleanCQ, rule, conclusion: BooleanCQ
                ) -> Optional[tuple[dict[Var, Term], dict[Var, Term]]]:
    """A substitution and head-variable assignment realizing the inference.

    Returns (pi, head_assignment) where pi matches the rule body into the
    premise and head_assignment interprets the rule's existential variables,
    or None when no choice of replaced/kept subsets produces the conclusion.
    """
    prem_atoms = set(premise.atoms)
    concl_atoms = set(conclusion.atoms)
    added = [a for a in conclusion.atoms if a not in prem_atoms]
    removed = [a for a in premise.atoms if a not in concl_atoms]
    evars = tuple(getattr(rule, "existential_vars", ()))
    index = AtomIndex(premise.atoms)
    for pi in match_conjunction(rule.body, index):
        matched = {substitute_atom(b, pi) for b in rule.body}
        if not set(removed) <= matched:
            continue
        assignment = _match_added(added, rule.head, pi, evars)
        if assignment is not None:
            return pi, assignment
    return None


def _match_added(added: list[Atom], head: tuple[Atom, ...],
                 pi: dict[Var, Term], evars) -> Optional[dict[Var, Term]]:
    """Assign head existential variables so every added atom is covered."""
    def backtrack(i: int, assignment: dict[Var, Term]
                  ) -> Optional[dict[Var, Term]]:
        if i == len(added):
            return assignment
        target = added[i]
        for h in head:
            pattern = _subst_with_rename(h, pi, {}, evars)
            ext = unify_atom(pattern, target, dict(assignment))
            if ext is None:
                continue
            # renamed existential variables must stay variables
            if any(k in evars and not isinstance(ext[k], Var) for k in ext):
                continue
            result = backtrack(i + 1, ext)
            if result is not None:
                return result
        return None

    return backtrack(0, {})


def _check_mpe(premises, conclusion, kb) -> Optional[str]:
    if len(premises) != 2 or not isinstance(premises[0], CQLabel) \
            or not isinstance(premises[1], RuleLabel):
        return "rule application takes a query and a rule"
    rule = premises[1].rule
    if isinstance(rule, SkolemRule):
        return "query-level proofs use original rules, not Skolemized ones"
    if isinstance(rule, Rule):
        if rule not in kb.tbox:
            return "rule is not from the TBox"
    else:
        err = _taut_shape_error(rule)
        if err:
            return err
    if not isinstance(conclusion, CQLabel):
        return "conclusion must be a query"
    if analyze_mpe(premises[0].cq, rule, conclusion.cq) is None:
        return "no substitution and replaced/kept choice yields the conclusion"
    return None


def _taut_shape_error(rule: TautRule) -> Optional[str]:
    if len(rule.body) != len(rule.head):
        return "tautology head must repeat the pattern"
    mapping = match_positionally(list(rule.body), list(rule.head))
    if mapping is None:
        return "tautology head must be a variable renaming of the pattern"
    image_evars = set(rule.existential_vars)
    seen: dict[Term, Var] = {}
    for v, t in mapping.items():
        if not isinstance(t, Var):
            return "tautologies only rename variables"
        if t in seen.values() and seen.get(t) != v:
            return "tautology renaming must be injective"
        seen[t] = v
        if t != v and t not in image_evars:
            return "renamed variables must be re-quantified"
    for v in image_evars:
        if v not in mapping.values() and v not in {x for a in rule.head
                                                   for x in atom_vars(a)}:
            return "existential variables must occur in the head"
    return None


def _check_te(premises, conclusion) -> Optional[str]:
    if premises:
        return "tautology introduction takes no premises"
    if not isinstance(conclusion, RuleLabel) \
            or not isinstance(conclusion.rule, TautRule):
        return "conclusion must be a tautological rule"
    return _taut_shape_error(conclusion.rule)


def _check_ee(premises, conclusion) -> Optional[str]:
    if len(premises) != 1 or not isinstance(premises[0], CQLabel):
        return "equality elimination takes a single query premise"
    if not isinstance(conclusion, CQLabel):
        return "conclusion must be a query"
    cq = premises[0].cq
    for eq in cq.atoms:
        if isinstance(eq, EqAtom):
            try:
                if cq_equivalent(ee_apply(cq, eq), conclusion.cq):
                    return None
            except KBError:
                continue
    return "no equality conjunct produces the conclusion"


def _check_ce(premises, conclusion) -> Optional[str]:
    if len(premises) != 2 or not all(isinstance(p, CQLabel)
                                     for p in premises):
        return "conjunction takes two query premises"
    if not isinstance(conclusion, CQLabel):
        return "conclusion must be a query"
    cq1, cq2 = premises[0].cq, premises[1].cq
    concl_atoms = list(conclusion.cq.atoms)
    if len(concl_atoms) != len(cq1.atoms) + len(cq2.atoms):
        # conjuncts may collapse only if the renaming makes them equal,
        # which an injective renaming of disjoint variables cannot
        if set(cq1.atoms) | set(cq2.atoms) != set(concl_atoms):
            return "conclusion must conjoin the premises"
    if tuple(concl_atoms[:len(cq1.atoms)]) != cq1.atoms:
        return "conclusion must start with the first premise's atoms"
    tail = concl_atoms[len(cq1.atoms):]
    mapping = match_positionally(list(cq2.atoms), tail)
    if mapping is None:
        return "conclusion tail is not a renaming of the second premise"
    image = set()
    for v, t in mapping.items():
        if not isinstance(t, Var) and _term_vars(t):
            return "conjunction only renames variables"
        if isinstance(t, Var):
            if t in cq1.variables():
                return "second premise must be renamed apart"
            if t in image:
                return "renaming must be injective"
            image.add(t)
        elif v != t:
            return "constants cannot be renamed"
    return None


def _check_ge(premises, conclusion) -> Optional[str]:
    if len(premises) != 1 or not isinstance(premises[0], CQLabel):
        return "generalization takes a single query premise"
    if not isinstance(conclusion, CQLabel):
        return "conclusion must be a query"
    prem, concl = premises[0].cq, conclusion.cq
    if len(prem.atoms) != len(concl.atoms):
        return "generalization keeps the number of atoms"
    mapping = match_positionally(list(concl.atoms), list(prem.atoms))
    if mapping is None:
        return "premise is not an instance of the conclusion"
    prem_vars = prem.variables()
    for v, t in mapping.items():
        if v in prem_vars:
            if t != v:
                return "existing variables cannot be remapped"
        else:
            if _term_vars(t):
                return "new variables must abstract ground terms"
    return None


# ---------------------------------------------------------------------------
# Ground-atom proofs -> query proofs
# ---------------------------------------------------------------------------

def _goal_and_targets(p: ProofGraph) -> tuple[BooleanCQ, list[Atom]]:
    """The goal query of a ground-atom proof and its atom instances,
    one per goal-atom occurrence."""
    sink = p.sink()
    label = p.vertices[sink]
    inc = p.incoming()
    if isinstance(label, AtomLabel):
        return BooleanCQ((label.atom,), ()), [label.atom]
    if isinstance(label, ConjLabel):
        return BooleanCQ(label.atoms, ()), list(label.atoms)
    if not isinstance(label, CQLabel):
        raise TransformError("sink must be an atom, conjunction, or query")
    goal = label.cq
    edges = inc[sink]
    if not edges:
        raise TransformError("query-labeled sink must be derived")
    edge = edges[0]
    if edge.schema is Schema.C:
        targets = [_atom_of(p, v) for v in edge.premises]
        return goal, targets
    premise = p.vertices[edge.premises[0]]
    if isinstance(premise, AtomLabel):
        return goal, [premise.atom]
    assert isinstance(premise, ConjLabel)
    return goal, list(premise.atoms)


def _atom_of(p: ProofGraph, vid: int) -> Atom:
    label = p.vertices[vid]
    if not isinstance(label, AtomLabel):
        raise TransformError("expected a ground atom vertex")
    return label.atom


@dataclass
class _Step:
    kind: str                     # "mp" | "e"
    premises: tuple[Atom, ...]    # consumed ground atoms
    conclusions: tuple[Atom, ...]
    rule: Optional[SkolemRule] = None
    equality: Optional[EqAtom] = None


def _collect_steps(p: ProofGraph) -> tuple[list[_Step], list[Atom]]:
    """Atom-level inference steps of a ground proof, dependency-ordered,
    with rule applications sharing premises aggregated into one step."""
    inc = p.incoming()
    mp_groups: dict[tuple, _Step] = {}
    e_groups: dict[tuple, _Step] = {}
    facts: list[Atom] = []
    for v in p.topological_order():
        label = p.vertices[v]
        edges = inc[v]
        if not edges:
            if isinstance(label, AtomLabel):
                if label.atom not in facts:
                    facts.append(label.atom)
            continue
        e = edges[0]
        if e.schema in (Schema.C, Schema.G):
            continue
        if e.schema is Schema.MP:
            rule_label = p.vertices[e.premises[-1]]
            assert isinstance(rule_label, RuleLabel)
            rule = rule_label.rule
            assert isinstance(rule, SkolemRule)
            body = tuple(_atom_of(p, q) for q in e.premises[:-1])
            key = (rule.index, body)
            step = mp_groups.get(key)
            if step is None:
                step = _Step("mp", body, (), rule=rule)
                mp_groups[key] = step
            concl = _atom_of(p, v)
            if concl not in step.conclusions:
                step.conclusions = step.conclusions + (concl,)
        elif e.schema is Schema.E:
            alpha = _atom_of(p, e.premises[0])
            eq = _atom_of(p, e.premises[1])
            assert isinstance(eq, EqAtom)
            key = ("e", eq)
            step = e_groups.get(key)
            if step is None:
                step = _Step("e", (eq,), (), equality=eq)
                e_groups[key] = step
            if alpha not in step.premises:
                step.premises = step.premises + (alpha,)
            concl = _atom_of(p, v)
            if concl not in step.conclusions:
                step.conclusions = step.conclusions + (concl,)
        else:
            raise TransformError(f"unexpected schema {e.schema.value} in a "
                                 "ground-atom proof")

    steps = list(mp_groups.values()) + list(e_groups.values())
    # dependency-consistent order: a step waits for every producer of its
    # premises; ties resolved on a fixed key for determinism
    produced_by: dict[Atom, _Step] = {}
    for s in steps:
        for c in s.conclusions:
            produced_by.setdefault(c, s)
    ordered: list[_Step] = []
    placed: set[int] = set()

    fact_set = set(facts)

    def ready(s: _Step) -> bool:
        return all(a in fact_set
                   or (a in produced_by and id(produced_by[a]) in placed)
                   for a in s.premises)

    remaining = list(steps)
    while remaining:
        candidates = [s for s in remaining if ready(s)]
        if not candidates:
            raise TransformError("could not order the inference steps")
        candidates.sort(key=lambda s: (s.kind,
                                       tuple(atom_key(a) for a in s.premises)))
        nxt = candidates[0]
        ordered.append(nxt)
        placed.add(id(nxt))
        remaining.remove(nxt)
    return ordered, facts


def transform_sk_to_cq(p: ProofGraph, kb: KnowledgeBase) -> ProofGraph:
    """Aggregate a ground-atom proof into a tree of query-level steps.

    Facts are collected with binary conjunctions, rule applications over the
    same premises merge into one rewriting step that keeps exactly the atoms
    still needed later, and the Skolem terms of the intermediate queries are
    replaced by existential variables at the very end.
    """
    goal, target_atoms = _goal_and_targets(p)
    steps, facts = _collect_steps(p)
    sk_rules = skolemize(kb.tbox)

    # liveness: the step index after which an atom is no longer needed
    last_use: dict[Atom, int] = {}
    for a in target_atoms:
        last_use[a] = len(steps)
    for i, s in enumerate(steps):
        for a in s.premises:
            last_use[a] = max(last_use.get(a, -1), i)

    used_facts = [f for f in facts if f in last_use]
    target_order = {a: i for i, a in enumerate(dict.fromkeys(target_atoms))}
    used_facts.sort(key=lambda a: (a not in target_order,
                                   target_order.get(a, 0), atom_key(a)))
    if not used_facts:
        raise TransformError("a ground proof always rests on at least one fact")

    builder = ProofBuilder()
    running: list[Atom] = [used_facts[0]]
    current = builder.add_vertex(CQLabel(BooleanCQ((used_facts[0],), ())))
    for f in used_facts[1:]:
        leaf = builder.add_vertex(CQLabel(BooleanCQ((f,), ())))
        running.append(f)
        nxt = builder.add_vertex(CQLabel(BooleanCQ(tuple(running), ())))
        builder.add_edge((current, leaf), nxt, Schema.Ce)
        current = nxt

    eliminated: set[EqAtom] = set()
    for i, step in enumerate(steps):
        if step.kind == "mp":
            assert step.rule is not None
            consumed = [a for a in step.premises
                        if last_use.get(a, -1) == i
                        and a not in target_order]
            new_running = [a for a in running if a not in consumed]
            for c in step.conclusions:
                if c not in new_running:
                    new_running.append(c)
            rule_vertex = builder.add_vertex(RuleLabel(step.rule))
            nxt = builder.add_vertex(
                CQLabel(BooleanCQ(tuple(new_running), ())))
            builder.add_edge((current, rule_vertex), nxt, Schema.MPe)
            current, running = nxt, new_running
        else:
            eq = step.equality
            assert eq is not None
            if eq in eliminated:
                raise TransformError(
                    "an equality is used again after its elimination; this "
                    "proof cannot be aggregated")
            conflicts = [a for a in running
                         if last_use.get(a, -1) > i
                         and a not in step.premises
                         and _mentions_term(a, eq.lhs)]
            if conflicts:
                raise TransformError(
                    "an atom is needed both before and after an equality "
                    "rewrite; this proof cannot be aggregated")
            eliminated.add(eq)
            new_running = []
            for a in running:
                if a == eq:
                    continue
                b = _replace_everywhere(a, eq.lhs, eq.rhs)
                if b not in new_running:
                    new_running.append(b)
            nxt = builder.add_vertex(
                CQLabel(BooleanCQ(tuple(new_running), ())))
            builder.add_edge((current,), nxt, Schema.Ee)
            current, running = nxt, new_running

    # final step: produce the goal exactly
    distinct_targets = list(dict.fromkeys(target_atoms))
    if not goal.existential_vars and running == list(goal.atoms):
        pass  # the collected query already is the goal
    elif len(goal.atoms) == 1 and len(running) == 1 and goal.existential_vars:
        gid = builder.add_vertex(CQLabel(goal))
        builder.add_edge((current,), gid, Schema.Ge)
        current = gid
    else:
        taut = te_rule(goal.atoms, goal.existential_vars)
        tid = builder.add_vertex(RuleLabel(taut))
        builder.add_edge((), tid, Schema.Te)
        gid = builder.add_vertex(CQLabel(goal))
        builder.add_edge((current, tid), gid, Schema.MPe)
        current = gid

    graph = builder.build()
    return _deskolemize(graph, kb, goal, target_atoms)


def _mentions_term(atom: Atom, t: Term) -> bool:
    from .kb import subterms
    return any(t == s for term in atom_terms(atom) for s in subterms(term))


def _deskolemize(graph: ProofGraph, kb: KnowledgeBase, goal: BooleanCQ,
                 target_atoms: list[Atom]) -> ProofGraph:
    """Replace ground Skolem terms by variables throughout the proof."""
    skolem_terms: set[Term] = set()
    for label in graph.vertices.values():
        if isinstance(label, CQLabel):
            for a in label.cq.atoms:
                for t in atom_terms(a):
                    for s in _skolem_subterms(t):
                        skolem_terms.add(s)
    naming: dict[Term, Var] = {}
    sigma = match_positionally(list(goal.atoms), target_atoms)
    if sigma:
        for v in goal.existential_vars:
            t = sigma.get(v)
            if t is not None and isinstance(t, SkolemTerm) \
                    and t not in naming:
                naming[t] = v
    taken = {v.name for v in naming.values()} | {
        v.name for label in graph.vertices.values()
        if isinstance(label, CQLabel) for v in label.cq.existential_vars}
    rest = sorted((t for t in skolem_terms if t not in naming), key=term_key)
    for t, v in zip(rest, fresh_vars(len(rest), taken)):
        naming[t] = v

    def fix_term(t: Term) -> Term:
        if t in naming:
            return naming[t]
        if isinstance(t, SkolemTerm):
            rebuilt = SkolemTerm(t.fn, fix_term(t.arg))
            return naming.get(rebuilt, rebuilt)
        return t

    def fix_atom(a: Atom) -> Atom:
        if isinstance(a, ConceptAtom):
            return ConceptAtom(a.concept, fix_term(a.term))
        if isinstance(a, RoleAtom):
            return RoleAtom(a.role, fix_term(a.subj), fix_term(a.obj))
        return EqAtom(fix_term(a.lhs), fix_term(a.rhs))

    def fix_label(label: Label) -> Label:
        if isinstance(label, CQLabel):
            return CQLabel(_close_cq([fix_atom(a) for a in label.cq.atoms]))
        if isinstance(label, RuleLabel) and isinstance(label.rule, SkolemRule):
            return RuleLabel(kb.tbox[label.rule.index])
        if isinstance(label, RuleLabel) and isinstance(label.rule, TautRule):
            rule = label.rule
            return RuleLabel(TautRule(
                tuple(fix_atom(a) for a in rule.body),
                tuple(fix_atom(a) for a in rule.head),
                rule.existential_vars))
        return label

    return graph.relabel(fix_label)


def _skolem_subterms(t: Term):
    from .kb import subterms
    for s in subterms(t):
        if isinstance(s, SkolemTerm):
            yield s


# ---------------------------------------------------------------------------
# Query proofs -> ground-atom proofs
# ---------------------------------------------------------------------------

def transform_cq_to_sk(p: ProofGraph, kb: KnowledgeBase) -> ProofGraph:
    """Ground a query-level proof with Skolem terms and split it into
    single-atom inferences.

    Generalization steps are deferred (their conclusions keep the premise's
    grounding), tautology applications collapse, and the needed atoms are
    re-derived backward from the goal instance.
    """
    sk_rules = skolemize(kb.tbox)
    inc = p.incoming()
    grounding: dict[int, dict[Var, Term]] = {}
    ground_sets: dict[int, list[Atom]] = {}
    producer: dict[Atom, tuple] = {}

    def ground_term(gamma: dict[Var, Term], t: Term) -> Term:
        if isinstance(t, Var):
            if t not in gamma:
                raise TransformError(f"variable ?{t.name} has no grounding")
            return gamma[t]
        if isinstance(t, SkolemTerm):
            raise TransformError("query labels cannot contain Skolem terms")
        return t

    def ground_atom(gamma: dict[Var, Term], a: Atom) -> Atom:
        if isinstance(a, ConceptAtom):
            return ConceptAtom(a.concept, ground_term(gamma, a.term))
        if isinstance(a, RoleAtom):
            return RoleAtom(a.role, ground_term(gamma, a.subj),
                            ground_term(gamma, a.obj))
        return EqAtom(ground_term(gamma, a.lhs), ground_term(gamma, a.rhs))

    for v in p.topological_order():
        label = p.vertices[v]
        edges = inc[v]
        if isinstance(label, RuleLabel):
            continue
        if not edges:
            if not isinstance(label, CQLabel) or label.cq.existential_vars \
                    or len(label.cq.atoms) != 1:
                raise TransformError("query-proof leaves must be single facts")
            grounding[v] = {}
            ground_sets[v] = list(label.cq.atoms)
            producer.setdefault(label.cq.atoms[0], ("fact",))
            continue
        edge = edges[0]
        if edge.schema is Schema.MPe:
            _ground_mpe(p, kb, sk_rules, edge, v, grounding, ground_sets,
                        producer, ground_atom)
        elif edge.schema is Schema.Ee:
            _ground_ee(p, edge, v, grounding, ground_sets, producer,
                       ground_atom)
        elif edge.schema is Schema.Ce:
            _ground_ce(p, edge, v, grounding, ground_sets)
        elif edge.schema is Schema.Ge:
            _ground_ge(p, edge, v, grounding, ground_sets)
        else:
            raise TransformError(f"unexpected schema {edge.schema.value} in "
                                 "a query-level proof")

    sink = p.sink()
    goal_label = p.vertices[sink]
    if not isinstance(goal_label, CQLabel):
        raise TransformError("query-proof sinks carry queries")
    goal = goal_label.cq
    gamma = grounding[sink]
    targets = [ground_atom(gamma, a) for a in goal.atoms]

    builder = ProofBuilder()

    def need(atom: Atom) -> int:
        if builder.has_label(AtomLabel(atom)):
            return builder.vertex_for(AtomLabel(atom))
        vid = builder.vertex_for(AtomLabel(atom))
        entry = producer.get(atom)
        if entry is None:
            raise TransformError(f"no derivation recorded for {atom}")
        if entry[0] == "fact":
            return vid
        if entry[0] == "mp":
            _, idx, pi_hat = entry
            rule = sk_rules[idx]
            premise_ids = [need(substitute_atom(b, pi_hat))
                           for b in rule.body]
            rule_id = builder.vertex_for(RuleLabel(rule))
            builder.add_edge(tuple(premise_ids) + (rule_id,), vid, Schema.MP)
            return vid
        _, source, eq = entry
        src_id = need(source)
        eq_id = need(eq)
        builder.add_edge((src_id, eq_id), vid, Schema.E)
        return vid

    target_ids = [need(a) for a in targets]
    graph = builder.build()
    return _finish_sk(graph, target_ids, goal)


def _finish_sk(graph: ProofGraph, target_ids: list[int],
               goal: BooleanCQ) -> ProofGraph:
    from .compress import add_goal_tail
    return add_goal_tail(dict(graph.vertices), list(graph.edges), target_ids,
                         goal, strict_cg=False)


def _ground_mpe(p, kb, sk_rules, edge, v, grounding, ground_sets, producer,
                ground_atom):
    phi_vid = edge.premises[0]
    rule_label = p.vertices[edge.premises[1]]
    assert isinstance(rule_label, RuleLabel)
    rule = rule_label.rule
    concl_label = p.vertices[v]
    assert isinstance(concl_label, CQLabel)
    phi_label = p.vertices[phi_vid]
    assert isinstance(phi_label, CQLabel)
    analysis = analyze_mpe(phi_label.cq, rule, concl_label.cq)
    if analysis is None:
        raise TransformError("invalid rule application step")
    pi, head_assign = analysis
    gamma_phi = grounding[phi_vid]
    pi_hat = {var: ground_term_of(gamma_phi, t) for var, t in pi.items()}

    gamma_new: dict[Var, Term] = {}
    for var in concl_label.cq.variables():
        if var in gamma_phi:
            gamma_new[var] = gamma_phi[var]

    if isinstance(rule, TautRule):
        # copies collapse on ground queries: interpret duplicated variables
        # by the terms of the originals they renamed
        mapping = match_positionally(list(rule.body), list(rule.head))
        assert mapping is not None
        for body_var, head_term in mapping.items():
            if isinstance(head_term, Var):
                w = head_assign.get(head_term)
                if isinstance(w, Var):
                    gamma_new[w] = pi_hat[body_var]
                elif w is None and head_term in gamma_new:
                    pass
        new_producers = {}
    else:
        idx = kb.tbox.index(rule)
        sk_rule = sk_rules[idx]
        witness = {}
        for evar in rule.existential_vars:
            frontier = rule.body[0].term
            witness[evar] = SkolemTerm(sk_rule.fn, pi_hat[frontier])
        for evar, w in head_assign.items():
            if isinstance(w, Var) and evar in witness:
                gamma_new[w] = witness[evar]
        new_producers = {}
        for k, h in enumerate(sk_rule.head):
            ground_h = substitute_atom(h, pi_hat)
            new_producers[ground_h] = ("mp", idx, dict(pi_hat))

    grounding[v] = gamma_new
    ground_sets[v] = [ground_atom(gamma_new, a) for a in concl_label.cq.atoms]
    for atom, entry in new_producers.items():
        producer.setdefault(atom, entry)


def ground_term_of(gamma: dict[Var, Term], t: Term) -> Term:
    if isinstance(t, Var):
        if t not in gamma:
            raise TransformError(f"variable ?{t.name} has no grounding")
        return gamma[t]
    return t


def _ground_ee(p, edge, v, grounding, ground_sets, producer, ground_atom):
    phi_vid = edge.premises[0]
    phi_label = p.vertices[phi_vid]
    concl_label = p.vertices[v]
    assert isinstance(phi_label, CQLabel) and isinstance(concl_label, CQLabel)
    gamma_phi = grounding[phi_vid]
    equality = None
    for eq in phi_label.cq.atoms:
        if isinstance(eq, EqAtom):
            try:
                if cq_equivalent(ee_apply(phi_label.cq, eq), concl_label.cq):
                    equality = eq
                    break
            except KBError:
                continue
    if equality is None:
        raise TransformError("invalid equality elimination step")
    eq_hat = ground_atom(gamma_phi, equality)
    assert isinstance(eq_hat, EqAtom)
    src, dst = eq_hat.lhs, eq_hat.rhs

    gamma_new = {var: (dst if val == src else val)
                 for var, val in gamma_phi.items()}
    grounding[v] = gamma_new
    new_set = []
    for a in ground_sets[phi_vid]:
        if a == eq_hat:
            continue
        from .deriver_sk import _replace_top_level
        b = _replace_top_level(a, src, dst)
        rewritten = b if b is not None else a
        new_set.append(rewritten)
        if rewritten != a:
            producer.setdefault(rewritten, ("e", a, eq_hat))
    ground_sets[v] = new_set


def _ground_ce(p, edge, v, grounding, ground_sets):
    left_vid, right_vid = edge.premises
    left = p.vertices[left_vid]
    right = p.vertices[right_vid]
    concl = p.vertices[v]
    assert isinstance(left, CQLabel) and isinstance(right, CQLabel)
    assert isinstance(concl, CQLabel)
    tail = list(concl.cq.atoms[len(left.cq.atoms):])
    mapping = match_positionally(list(right.cq.atoms), tail)
    if mapping is None:
        raise TransformError("invalid conjunction step")
    gamma = dict(grounding[left_vid])
    gamma_right = grounding[right_vid]
    for var, target in mapping.items():
        if isinstance(target, Var):
            gamma[target] = gamma_right[var]
    grounding[v] = gamma
    ground_sets[v] = list(dict.fromkeys(ground_sets[left_vid]
                                        + ground_sets[right_vid]))


def _ground_ge(p, edge, v, grounding, ground_sets):
    phi_vid = edge.premises[0]
    phi = p.vertices[phi_vid]
    concl = p.vertices[v]
    assert isinstance(phi, CQLabel) and isinstance(concl, CQLabel)
    mapping = match_positionally(list(concl.cq.atoms), list(phi.cq.atoms))
    if mapping is None:
        raise TransformError("invalid generalization step")
    gamma = dict(grounding[phi_vid])
    for var, target in mapping.items():
        if isinstance(target, Var):
            gamma[var] = grounding[phi_vid][target]
        else:
            gamma[var] = target
    grounding[v] = gamma
    ground_sets[v] = list(ground_sets[phi_vid])
