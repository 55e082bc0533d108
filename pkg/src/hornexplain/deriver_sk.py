"""Ground-atom inference schemas: rule application (MP), equality
replacement (E), conjunction (C), and generalization (G).

The full derivation structure over a knowledge base is infinite (Skolem
terms nest arbitrarily deep), so it is only ever materialized up to a term
depth bound, as a :class:`FiniteStructure`.  The instance enumerators double
as the admissibility oracle: an edge is admissible iff the corresponding
enumerator generates it from exactly its premises.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .chase import SkolemRule, skolemize
from .kb import (Atom, BooleanCQ, ConceptAtom, Const, EqAtom, KBError,
                 KnowledgeBase, RoleAtom, SkolemTerm, Term, Var,
                 atom_is_ground, atom_key, atom_terms, substitute_atom,
                 term_depth)
from .matching import AtomIndex, match_conjunction, match_positionally, unify_atom
from .proofs import (AtomLabel, ConjLabel, CQLabel, Label, RuleLabel, Schema)


class DeriverError(KBError):
    """Requested inference cannot be instantiated."""


@dataclass(frozen=True)
class InferenceInstance:
    schema: Schema
    premises: tuple[Label, ...]
    conclusion: Label
    witness: tuple = ()  # substitution pairs (MP/C/G) or replaced pair (E)


def _subst_pairs(subst: dict[Var, Term]) -> tuple:
    return tuple(sorted(((v.name, t) for v, t in subst.items())))


def mp_instances(atoms: Iterable[Atom],
                 rules: Sequence[SkolemRule]) -> list[InferenceInstance]:
    """All rule applications over the given ground atoms.

    One instance per derived head atom; the rule itself is the last premise.
    """
    index = AtomIndex(atoms)
    out: list[InferenceInstance] = []
    for rule in rules:
        for subst in match_conjunction(rule.body, index):
            premises = tuple(AtomLabel(substitute_atom(b, subst))
                             for b in rule.body) + (RuleLabel(rule),)
            for h in rule.head:
                out.append(InferenceInstance(
                    Schema.MP, premises, AtomLabel(substitute_atom(h, subst)),
                    _subst_pairs(subst)))
    return out


def _orient_equality(eq: EqAtom) -> Optional[tuple[Term, Term]]:
    """Replaced term first; complex terms always give way to constants."""
    if eq.lhs == eq.rhs:
        return None
    if isinstance(eq.lhs, SkolemTerm) and isinstance(eq.rhs, Const):
        return eq.lhs, eq.rhs
    if isinstance(eq.rhs, SkolemTerm) and isinstance(eq.lhs, Const):
        return eq.rhs, eq.lhs
    if isinstance(eq.lhs, Const) and isinstance(eq.rhs, Const):
        return eq.lhs, eq.rhs
    return None


def _replace_top_level(atom: Atom, src: Term, dst: Term) -> Optional[Atom]:
    """Replace top-level occurrences of src; None when src does not occur."""
    def rep(t: Term) -> Term:
        return dst if t == src else t

    if isinstance(atom, ConceptAtom):
        if atom.term != src:
            return None
        return ConceptAtom(atom.concept, dst)
    if isinstance(atom, RoleAtom):
        if src not in (atom.subj, atom.obj):
            return None
        return RoleAtom(atom.role, rep(atom.subj), rep(atom.obj))
    if src not in (atom.lhs, atom.rhs):
        return None
    return EqAtom(rep(atom.lhs), rep(atom.rhs))


def e_instances(atoms: Iterable[Atom]) -> list[InferenceInstance]:
    """Equality replacements: top-level occurrences only, complex terms
    replaced by constants, never the other way around."""
    pool = sorted(atoms, key=atom_key)
    eqs = [a for a in pool if isinstance(a, EqAtom)]
    out: list[InferenceInstance] = []
    for eq in eqs:
        oriented = _orient_equality(eq)
        if oriented is None:
            continue
        src, dst = oriented
        for atom in pool:
            if atom == eq:
                continue
            replaced = _replace_top_level(atom, src, dst)
            if replaced is not None:
                out.append(InferenceInstance(
                    Schema.E, (AtomLabel(atom), AtomLabel(eq)),
                    AtomLabel(replaced), (src, dst)))
    return out


def cg_instances(atoms: Iterable[Atom], goal: BooleanCQ,
                 sigma: Optional[dict[Var, Term]] = None
                 ) -> tuple[InferenceInstance, InferenceInstance]:
    """The conjunction step grounding the goal and the generalization step.

    Uses the first match when no substitution is supplied; raises
    DeriverError when the goal does not match at all.
    """
    if sigma is None:
        index = AtomIndex(atoms)
        for subst in match_conjunction(goal.atoms, index):
            sigma = subst
            break
        if sigma is None:
            raise DeriverError("goal does not match the given atoms")
    ground = tuple(substitute_atom(a, sigma) for a in goal.atoms)
    pool = set(atoms)
    missing = [a for a in ground if a not in pool]
    if missing:
        raise DeriverError(f"substitution does not ground the goal into the "
                           f"given atoms: missing {missing}")
    conj = ConjLabel(ground)
    c_inst = InferenceInstance(Schema.C,
                               tuple(AtomLabel(a) for a in ground), conj,
                               _subst_pairs(sigma))
    g_inst = InferenceInstance(Schema.G, (conj,), CQLabel(goal),
                               _subst_pairs(sigma))
    return c_inst, g_inst


def leaf_labels(kb: KnowledgeBase) -> set[Label]:
    out: set[Label] = {AtomLabel(a) for a in kb.abox}
    out |= {RuleLabel(r) for r in skolemize(kb.tbox)}
    return out


# ---------------------------------------------------------------------------
# Edge admissibility
# ---------------------------------------------------------------------------

def check_edge_labels(schema: Schema, premises: tuple[Label, ...],
                      conclusion: Label, kb: KnowledgeBase) -> Optional[str]:
    """None when the edge instantiates its schema, else a diagnostic."""
    if schema is Schema.MP:
        return _check_mp(premises, conclusion, kb)
    if schema is Schema.E:
        return _check_e(premises, conclusion)
    if schema is Schema.C:
        return _check_c(premises, conclusion)
    if schema is Schema.G:
        return _check_g(premises, conclusion)
    return f"schema {schema.value} does not belong to this deriver"


def check_edge(schema: Schema, premises: tuple[Label, ...], conclusion: Label,
               kb: KnowledgeBase) -> bool:
    return check_edge_labels(schema, premises, conclusion, kb) is None


def _check_mp(premises, conclusion, kb) -> Optional[str]:
    if not premises or not isinstance(premises[-1], RuleLabel):
        return "the last premise must be a rule"
    rule = premises[-1].rule
    if not isinstance(rule, SkolemRule):
        return "rule premise must be Skolemized"
    if rule not in skolemize(kb.tbox):
        return "rule is not from the TBox"
    atom_premises = premises[:-1]
    for lab in atom_premises:
        if not isinstance(lab, AtomLabel) or not atom_is_ground(lab.atom):
            return "rule premises must be ground atoms"
    subst = match_positionally(rule.body, [lab.atom for lab in atom_premises])
    if subst is None:
        return "premises do not instantiate the rule body"
    if not isinstance(conclusion, AtomLabel):
        return "conclusion must be a ground atom"
    heads = {substitute_atom(h, subst) for h in rule.head}
    if conclusion.atom not in heads:
        return "conclusion is not an instantiated head atom"
    return None


def _check_e(premises, conclusion) -> Optional[str]:
    if len(premises) != 2 or not all(isinstance(p, AtomLabel)
                                     for p in premises):
        return "equality replacement takes an atom and an equality"
    atom_lab, eq_lab = premises
    if not isinstance(eq_lab.atom, EqAtom):
        return "second premise must be an equality"
    oriented = _orient_equality(eq_lab.atom)
    if oriented is None:
        return "equality is trivial or cannot be oriented toward a constant"
    src, dst = oriented
    if atom_lab.atom == eq_lab.atom:
        return "equality cannot rewrite itself"
    replaced = _replace_top_level(atom_lab.atom, src, dst)
    if replaced is None:
        return "replaced term does not occur at the top level of the atom"
    if not isinstance(conclusion, AtomLabel) or conclusion.atom != replaced:
        return "conclusion does not match the replacement result"
    return None


def _check_c(premises, conclusion) -> Optional[str]:
    atoms = []
    for lab in premises:
        if not isinstance(lab, AtomLabel) or not atom_is_ground(lab.atom):
            return "conjunction premises must be ground atoms"
        atoms.append(lab.atom)
    if isinstance(conclusion, ConjLabel):
        got = conclusion.atoms
    elif isinstance(conclusion, CQLabel) and not conclusion.cq.existential_vars:
        got = conclusion.cq.atoms
    else:
        return "conclusion must be the ground conjunction of the premises"
    if tuple(atoms) != got:
        return "conclusion atoms differ from the premises (order matters)"
    return None


def _check_g(premises, conclusion) -> Optional[str]:
    if len(premises) != 1:
        return "generalization takes a single conjunction premise"
    lab = premises[0]
    if isinstance(lab, ConjLabel):
        ground = lab.atoms
    elif isinstance(lab, AtomLabel):
        ground = (lab.atom,)
    else:
        return "premise must be a ground conjunction or atom"
    if not isinstance(conclusion, CQLabel):
        return "conclusion must be a query"
    cq = conclusion.cq
    if len(cq.atoms) != len(ground):
        return "query and conjunction have different lengths"
    subst = match_positionally(list(cq.atoms), list(ground))
    if subst is None:
        return "conjunction is not an instance of the query"
    return None


# ---------------------------------------------------------------------------
# Finite view of the derivation structure
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StructEdge:
    premises: tuple[int, ...]
    conclusion: int
    schema: Schema


class BudgetExceeded(Exception):
    pass


@dataclass
class FiniteStructure:
    """Derivation structure restricted to a term-depth bound."""

    vertices: dict[int, Label] = field(default_factory=dict)
    label_ids: dict[Label, int] = field(default_factory=dict)
    edges: list[StructEdge] = field(default_factory=list)
    in_edges: dict[int, list[int]] = field(default_factory=dict)
    leaf_ids: set[int] = field(default_factory=set)
    complete: bool = True
    depth_bound: Optional[int] = None

    def vertex_for(self, label: Label) -> int:
        vid = self.label_ids.get(label)
        if vid is None:
            vid = len(self.vertices)
            self.vertices[vid] = label
            self.label_ids[label] = vid
            self.in_edges[vid] = []
        return vid

    def add_edge(self, premises: tuple[int, ...], conclusion: int,
                 schema: Schema) -> None:
        edge = StructEdge(premises, conclusion, schema)
        idx = len(self.edges)
        self.edges.append(edge)
        self.in_edges[conclusion].append(idx)

    def atom_labels(self) -> list[Atom]:
        return sorted((lab.atom for lab in self.vertices.values()
                       if isinstance(lab, AtomLabel)), key=atom_key)

    def has_atom(self, atom: Atom) -> bool:
        return AtomLabel(atom) in self.label_ids


def saturate(facts: Iterable[Atom], rules: Sequence[SkolemRule],
             depth_bound: int, max_atoms: Optional[int] = None,
             with_equalities: bool = True,
             deadline: Optional[float] = None) -> FiniteStructure:
    """Materialize every rule application and equality replacement whose
    conclusion stays within the depth bound.

    Semi-naive: each round seeds rule bodies with the previous round's new
    atoms, so work is proportional to what actually changed.
    """
    import time as _time

    structure = FiniteStructure(depth_bound=depth_bound)
    atoms: set[Atom] = set()
    index = AtomIndex()
    for f in sorted(facts, key=atom_key):
        vid = structure.vertex_for(AtomLabel(f))
        structure.leaf_ids.add(vid)
        atoms.add(f)
        index.add(f)
    for r in rules:
        vid = structure.vertex_for(RuleLabel(r))
        structure.leaf_ids.add(vid)

    seen_edges: set[tuple] = set()

    def record(inst: InferenceInstance) -> bool:
        """Returns True when the conclusion atom is new."""
        assert isinstance(inst.conclusion, AtomLabel)
        concl_atom = inst.conclusion.atom
        if max(term_depth(t) for t in atom_terms(concl_atom)) > depth_bound:
            structure.complete = False
            return False
        key = (inst.schema, inst.premises, inst.conclusion)
        if key in seen_edges:
            return False
        seen_edges.add(key)
        fresh = concl_atom not in atoms
        if fresh:
            if max_atoms is not None and len(atoms) >= max_atoms:
                structure.complete = False
                raise BudgetExceeded(f"saturation exceeded {max_atoms} atoms")
            atoms.add(concl_atom)
            index.add(concl_atom)
        premise_ids = tuple(structure.vertex_for(lab)
                            for lab in inst.premises)
        structure.add_edge(premise_ids, structure.vertex_for(inst.conclusion),
                           inst.schema)
        return fresh

    frontier = sorted(atoms, key=atom_key)
    first_round = True
    while frontier:
        if deadline is not None and _time.monotonic() > deadline:
            structure.complete = False
            raise BudgetExceeded("saturation deadline")
        new_atoms: set[Atom] = set()
        frontier_set = set(frontier)
        for rule in rules:
            seeds: list[dict] = []
            if first_round:
                seeds.append({})
            else:
                for i, pattern in enumerate(rule.body):
                    for fa in frontier:
                        ext = unify_atom(pattern, fa, {})
                        if ext is not None:
                            seeds.append(ext)
            seen_subst: set[tuple] = set()
            for seed in seeds:
                for subst in match_conjunction(rule.body, index, seed):
                    key = tuple(sorted((v.name, subst[v]) for v in subst))
                    if key in seen_subst:
                        continue
                    seen_subst.add(key)
                    premises = tuple(AtomLabel(substitute_atom(b, subst))
                                     for b in rule.body) + (RuleLabel(rule),)
                    for h in rule.head:
                        inst = InferenceInstance(
                            Schema.MP, premises,
                            AtomLabel(substitute_atom(h, subst)))
                        concl = inst.conclusion.atom
                        if record(inst) and concl not in new_atoms:
                            new_atoms.add(concl)
        if with_equalities:
            eqs = [a for a in atoms if isinstance(a, EqAtom)]
            if eqs:
                pool = sorted(atoms, key=atom_key)
                fresh_pool = frontier if not first_round else pool
                for inst in e_instances(pool):
                    # keep only instances touching the frontier to stay
                    # incremental; the dedup makes repeats harmless
                    if first_round or inst.premises[0].atom in frontier_set \
                            or inst.premises[1].atom in frontier_set:
                        concl = inst.conclusion.atom
                        if record(inst) and concl not in new_atoms:
                            new_atoms.add(concl)
        first_round = False
        frontier = sorted(new_atoms, key=atom_key)
    return structure


def saturate_kb(kb: KnowledgeBase, depth_bound: int,
                max_atoms: Optional[int] = None,
                deadline: Optional[float] = None) -> FiniteStructure:
    return saturate(kb.abox, skolemize(kb.tbox), depth_bound,
                    max_atoms=max_atoms, deadline=deadline)
