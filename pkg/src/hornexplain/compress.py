"""Polynomial-size compressed derivation structures and the algorithms
built on them.

Anonymous chase elements are folded into finitely many placeholder
individuals: one per (possibly inverse) role for the DL-Lite variant, one
per Skolem function for the EL variant.  Proofs found over the compressed
structure are rewritten back to real Skolem terms afterwards; the rewriting
follows each vertex's own derivation, so a proof that conflates witnesses
with different origins is rejected rather than silently accepted.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

from .chase import SkolemRule, skolemize
from .kb import (Atom, BooleanCQ, ConceptAtom, Const, EqAtom, Fragment,
                 KBError, KnowledgeBase, RoleAtom, SkolemTerm, Term, Var,
                 atom_terms, gaifman_graph, is_tree_shaped, substitute_atom,
                 term_key)
from .matching import match_positionally
from .proofs import (AtomLabel, CQLabel, ConjLabel, Label, ProofEdge,
                     ProofGraph, RuleLabel, Schema)
from .deriver_sk import FiniteStructure, saturate


class CompressError(KBError):
    pass


class DecompressError(KBError):
    """The compressed proof mixes witnesses of different origins."""


@dataclass
class CompressedStructure:
    structure: FiniteStructure
    variant: str                      # "dllite" | "el"
    fresh_consts: frozenset[str]      # placeholder individual names
    rules: tuple[SkolemRule, ...]     # compressed rules, indexed like the TBox

    def constants(self) -> list[Const]:
        out: set[Const] = set()
        for lab in self.structure.vertices.values():
            if isinstance(lab, AtomLabel):
                for t in atom_terms(lab.atom):
                    if isinstance(t, Const):
                        out.add(t)
        return sorted(out, key=term_key)


def _fresh_const(base: str, taken: set[str]) -> Const:
    name = base
    while name in taken:
        name = "_" + name
    taken.add(name)
    return Const(name)


def _compress_head(head: tuple[Atom, ...], fn: str, placeholder: Const
                   ) -> tuple[Atom, ...]:
    def fix(t: Term) -> Term:
        if isinstance(t, SkolemTerm) and t.fn == fn:
            return placeholder
        return t

    out = []
    for a in head:
        if isinstance(a, ConceptAtom):
            out.append(ConceptAtom(a.concept, fix(a.term)))
        elif isinstance(a, RoleAtom):
            out.append(RoleAtom(a.role, fix(a.subj), fix(a.obj)))
        else:
            out.append(EqAtom(fix(a.lhs), fix(a.rhs)))
    return tuple(out)


def _compress(kb: KnowledgeBase, name_for_rule) -> CompressedStructure:
    taken = set(kb.signature.individual_names)
    fresh: dict[str, Const] = {}
    compressed: list[SkolemRule] = []
    for rule in skolemize(kb.tbox):
        if rule.fn is None:
            compressed.append(rule)
            continue
        base = name_for_rule(rule)
        if base not in fresh:
            fresh[base] = _fresh_const(base, taken)
        placeholder = fresh[base]
        compressed.append(SkolemRule(rule.body,
                                     _compress_head(rule.head, rule.fn,
                                                    placeholder),
                                     rule.normal_form, rule.index, rule.fn))
    structure = saturate(kb.abox, tuple(compressed), depth_bound=0)
    return CompressedStructure(structure, "",
                               frozenset(c.name for c in fresh.values()),
                               tuple(compressed))


def compress_dllite(kb: KnowledgeBase) -> CompressedStructure:
    """Placeholder pool: one individual per (possibly inverse) role."""
    if kb.fragment != Fragment.DLLiteR:
        raise CompressError(f"fragment mismatch: {kb.fragment.value} input, "
                            "this construction needs dl-lite-r")

    def name_for_rule(rule: SkolemRule) -> str:
        role_atom = next(a for a in rule.head if isinstance(a, RoleAtom))
        # the placeholder stands for the witness object of the head role atom
        if isinstance(role_atom.obj, SkolemTerm):
            return f"b_ex_{role_atom.role}_inv"
        return f"b_ex_{role_atom.role}"

    out = _compress(kb, name_for_rule)
    out.variant = "dllite"
    return out


def compress_el(kb: KnowledgeBase) -> CompressedStructure:
    """Placeholder pool: one individual per Skolem function."""
    if kb.fragment not in (Fragment.EL, Fragment.DLLiteR):
        raise CompressError(f"fragment mismatch: {kb.fragment.value} input, "
                            "this construction needs el or dl-lite-r")
    out = _compress(kb, lambda rule: f"c_{rule.fn}")
    out.variant = "el"
    return out


# ---------------------------------------------------------------------------
# Decompression
# ---------------------------------------------------------------------------

def _contains_fresh(t: Term, fresh: frozenset[str]) -> bool:
    if isinstance(t, Const):
        return t.name in fresh
    if isinstance(t, SkolemTerm):
        return _contains_fresh(t.arg, fresh)
    return False


def decompress(proof: ProofGraph, kb: KnowledgeBase,
               comp: CompressedStructure) -> ProofGraph:
    """Rewrite placeholder individuals back to Skolem terms.

    Proceeds bottom-up: the introducing rule application of a placeholder
    determines the Skolem term, and every later inference is re-checked
    against the real Skolemized rules.  Size and tree size are unchanged.
    """
    real_rules = skolemize(kb.tbox)
    inc = proof.incoming()
    resolved: dict[int, Label] = {}

    for v in proof.topological_order():
        label = proof.vertices[v]
        edges = inc[v]
        if not edges:
            if isinstance(label, RuleLabel) and isinstance(label.rule,
                                                           SkolemRule):
                resolved[v] = RuleLabel(real_rules[label.rule.index])
            else:
                if isinstance(label, AtomLabel) and any(
                        _contains_fresh(t, comp.fresh_consts)
                        for t in atom_terms(label.atom)):
                    raise DecompressError("placeholder individual in a leaf")
                resolved[v] = label
            continue
        edge = edges[0]
        if edge.schema is Schema.MP:
            resolved[v] = _resolve_mp(proof, comp, edge, v, resolved)
        elif edge.schema is Schema.C:
            atoms = []
            for q in edge.premises:
                lab = resolved[q]
                assert isinstance(lab, AtomLabel)
                atoms.append(lab.atom)
            original = proof.vertices[v]
            if isinstance(original, CQLabel):
                resolved[v] = CQLabel(BooleanCQ(tuple(atoms), ()))
            else:
                resolved[v] = ConjLabel(tuple(atoms))
        elif edge.schema is Schema.G:
            # goal queries never mention placeholders; keep the label but
            # re-check that the resolved conjunction still instantiates it
            assert isinstance(label, CQLabel)
            premise = resolved[edge.premises[0]]
            ground = premise.atoms if isinstance(premise, ConjLabel) \
                else (premise.atom,)
            if match_positionally(list(label.cq.atoms), list(ground)) is None:
                raise DecompressError(
                    "conflated witnesses: the resolved conjunction no longer "
                    "instantiates the goal query")
            resolved[v] = label
        else:
            raise DecompressError(f"unexpected schema {edge.schema.value} in "
                                  "a compressed proof")

    return ProofGraph({v: resolved[v] for v in proof.vertices},
                      list(proof.edges))


def _resolve_mp(proof: ProofGraph, comp: CompressedStructure, edge: ProofEdge,
                v: int, resolved: dict[int, Label]) -> Label:
    rule_label = resolved[edge.premises[-1]]
    if not isinstance(rule_label, RuleLabel) \
            or not isinstance(rule_label.rule, SkolemRule):
        raise DecompressError("rule premise missing in a compressed proof")
    real_rule = rule_label.rule
    premise_atoms = []
    for q in edge.premises[:-1]:
        lab = resolved[q]
        assert isinstance(lab, AtomLabel)
        premise_atoms.append(lab.atom)
    subst = match_positionally(real_rule.body, premise_atoms)
    if subst is None:
        raise DecompressError(
            "conflated witnesses: premises with different origins meet in "
            "one rule application")
    # find which head atom this conclusion instantiates, via the compressed rule
    comp_rule = comp.rules[real_rule.index]
    comp_premises = []
    for q in edge.premises[:-1]:
        lab = proof.vertices[q]
        assert isinstance(lab, AtomLabel)
        comp_premises.append(lab.atom)
    comp_subst = match_positionally(comp_rule.body, comp_premises)
    original = proof.vertices[v]
    assert isinstance(original, AtomLabel) and comp_subst is not None
    for k, h in enumerate(comp_rule.head):
        if substitute_atom(h, comp_subst) == original.atom:
            return AtomLabel(substitute_atom(real_rule.head[k], subst))
    raise DecompressError("conclusion is not a head instance")


# ---------------------------------------------------------------------------
# Minimal proofs over finite structures
# ---------------------------------------------------------------------------

_INF = float("inf")


def dp_min_tree(structure: FiniteStructure) -> tuple[dict[int, float],
                                                     dict[int, int]]:
    """Minimal tree size per vertex plus the chosen incoming edge.

    Label-correcting fixpoint of ``1 + sum over premises``; ties are broken
    on a fixed edge key, so results do not depend on edge insertion order.
    """
    values: dict[int, float] = {v: _INF for v in structure.vertices}
    chosen: dict[int, int] = {}
    for leaf in structure.leaf_ids:
        values[leaf] = 1.0

    def edge_key(idx: int):
        e = structure.edges[idx]
        return (e.schema.value,
                tuple(_label_sort_key(structure.vertices[q])
                      for q in e.premises))

    changed = True
    while changed:
        changed = False
        for idx, e in enumerate(structure.edges):
            total = 1.0
            dead = False
            for q in e.premises:
                if values[q] == _INF:
                    dead = True
                    break
                total += values[q]
            if dead:
                continue
            cur = values[e.conclusion]
            if total < cur:
                values[e.conclusion] = total
                chosen[e.conclusion] = idx
                changed = True
            elif total == cur and e.conclusion in chosen \
                    and edge_key(idx) < edge_key(chosen[e.conclusion]):
                chosen[e.conclusion] = idx
                changed = True
    return values, chosen


def _label_sort_key(label: Label):
    from .proofs import label_key
    return label_key(label)


def extract_witness(structure: FiniteStructure, chosen: dict[int, int],
                    targets: Iterable[int]) -> tuple[dict[int, Label],
                                                     list[ProofEdge]]:
    """The chosen-edge subgraph below the targets (vertices shared)."""
    keep: set[int] = set()
    edges: list[ProofEdge] = []
    stack = sorted(set(targets))
    while stack:
        v = stack.pop()
        if v in keep:
            continue
        keep.add(v)
        idx = chosen.get(v)
        if idx is None:
            if v not in structure.leaf_ids:
                raise KBError("target is not derivable in the structure")
            continue
        e = structure.edges[idx]
        edges.append(ProofEdge(e.premises, e.conclusion, e.schema))
        stack.extend(e.premises)
    vertices = {v: structure.vertices[v] for v in keep}
    return vertices, edges


def min_tree_size_dp(structure: FiniteStructure, goal_label: Label
                     ) -> tuple[int, ProofGraph]:
    """Exact minimal tree size for one label, with a witness subproof."""
    values, chosen = dp_min_tree(structure)
    vid = structure.label_ids.get(goal_label)
    if vid is None or values[vid] == _INF:
        raise KBError("goal label is not derivable in the structure")
    vertices, edges = extract_witness(structure, chosen, [vid])
    return int(values[vid]), ProofGraph(vertices, edges)


def min_size_dijkstra(structure: FiniteStructure,
                      goals: Optional[Iterable[Label]] = None
                      ) -> dict[Label, tuple[int, ProofGraph]]:
    """Minimal-size witnesses per label under the no-sharing relaxation.

    Edge choices optimize the tree-style relaxation; the reported value is
    the vertex count of the resulting subproof, which coincides with the
    relaxation on linear structures (one derivable premise per inference)
    and can only be smaller when subproofs are shared.
    """
    values, chosen = dp_min_tree(structure)
    if goals is None:
        goal_labels = [lab for lab in structure.vertices.values()
                       if isinstance(lab, AtomLabel)]
    else:
        goal_labels = list(goals)
    out: dict[Label, tuple[int, ProofGraph]] = {}
    for label in goal_labels:
        vid = structure.label_ids.get(label)
        if vid is None or values[vid] == _INF:
            continue
        vertices, edges = extract_witness(structure, chosen, [vid])
        out[label] = (len(vertices), ProofGraph(vertices, edges))
    return out


# ---------------------------------------------------------------------------
# Goal tails: conjunction and generalization steps
# ---------------------------------------------------------------------------

def add_goal_tail(vertices: dict[int, Label], edges: list[ProofEdge],
                  targets: list[int], goal: BooleanCQ,
                  strict_cg: bool = False) -> ProofGraph:
    """Finish a per-atom proof bundle with the conjunction and
    generalization steps, skipping degenerate identity steps by default."""
    vertices = dict(vertices)
    edges = list(edges)
    has_vars = bool(goal.existential_vars)
    next_id = max(vertices) + 1 if vertices else 0

    if not strict_cg:
        if len(goal.atoms) == 1 and not has_vars:
            return ProofGraph(vertices, edges)
        if len(goal.atoms) == 1 and has_vars:
            vertices[next_id] = CQLabel(goal)
            edges.append(ProofEdge((targets[0],), next_id, Schema.G))
            return ProofGraph(vertices, edges)
        if not has_vars:
            vertices[next_id] = CQLabel(goal)
            edges.append(ProofEdge(tuple(targets), next_id, Schema.C))
            return ProofGraph(vertices, edges)

    conj_atoms = []
    for t in targets:
        lab = vertices[t]
        assert isinstance(lab, AtomLabel)
        conj_atoms.append(lab.atom)
    cid = next_id
    vertices[cid] = ConjLabel(tuple(conj_atoms))
    edges.append(ProofEdge(tuple(targets), cid, Schema.C))
    gid = cid + 1
    vertices[gid] = CQLabel(goal)
    edges.append(ProofEdge((cid,), gid, Schema.G))
    return ProofGraph(vertices, edges)


def merge_witnesses(parts: list[tuple[dict[int, Label], list[ProofEdge]]]
                    ) -> tuple[dict[int, Label], list[ProofEdge]]:
    """Union of chosen-edge subgraphs that share vertex ids."""
    vertices: dict[int, Label] = {}
    edges: dict[tuple, ProofEdge] = {}
    for vs, es in parts:
        vertices.update(vs)
        for e in es:
            edges[(e.premises, e.conclusion)] = e
    return vertices, list(edges.values())


# ---------------------------------------------------------------------------
# Tree-shaped queries over DL-Lite: the cost-graph algorithm
# ---------------------------------------------------------------------------

@dataclass
class CostGraph:
    """Assignment graph over a tree-shaped query.

    Nodes map query terms to constants of the compressed structure; an edge
    connects assignments of Gaifman-adjacent terms, oriented from the root
    toward the leaves, and costs the atoms living on that term pair.
    """

    root: Term
    order: list[Term]                      # root first
    children: dict[Term, list[Term]]
    node_cost: dict[tuple[Term, Const], float]
    edge_cost: dict[tuple[tuple[Term, Const], tuple[Term, Const]], float]
    chosen: dict[Term, Const] = field(default_factory=dict)
    total: float = _INF


def _gaifman_tree(q: BooleanCQ) -> tuple[Term, list[Term], dict[Term, list[Term]]]:
    adj = gaifman_graph(q)
    root = min(adj, key=term_key)
    order = [root]
    children: dict[Term, list[Term]] = {t: [] for t in adj}
    seen = {root}
    queue = [root]
    while queue:
        t = queue.pop(0)
        for nxt in sorted(adj[t], key=term_key):
            if nxt not in seen:
                seen.add(nxt)
                children[t].append(nxt)
                order.append(nxt)
                queue.append(nxt)
    return root, order, children


def build_cost_graph(comp: CompressedStructure, q: BooleanCQ,
                     values: dict[int, float]) -> CostGraph:
    """Per-atom minimal proof costs aggregated over term assignments.

    Unary atoms (and atoms whose two positions carry the same term) are
    charged to the node of their term; binary atoms are charged to the edge
    of their term pair.
    """
    root, order, children = _gaifman_tree(q)
    constants = comp.constants()

    def atom_cost(atom: Atom, assignment: dict[Term, Const]) -> float:
        subst = {t: c for t, c in assignment.items() if isinstance(t, Var)}
        ground = substitute_atom(atom, subst)
        vid = comp.structure.label_ids.get(AtomLabel(ground))
        if vid is None:
            return _INF
        return values[vid]

    def candidates(term: Term) -> list[Const]:
        if isinstance(term, Const):
            return [term]
        return constants

    node_cost: dict[tuple[Term, Const], float] = {}
    for t in order:
        own_atoms = [a for a in q.atoms if set(atom_terms(a)) == {t}]
        for c in candidates(t):
            node_cost[(t, c)] = sum(atom_cost(a, {t: c}) for a in own_atoms)

    edge_cost: dict[tuple[tuple[Term, Const], tuple[Term, Const]], float] = {}
    for t in order:
        for child in children[t]:
            pair_atoms = [a for a in q.atoms
                          if set(atom_terms(a)) == {t, child}]
            for c1 in candidates(t):
                for c2 in candidates(child):
                    cost = sum(atom_cost(a, {t: c1, child: c2})
                               for a in pair_atoms)
                    edge_cost[((t, c1), (child, c2))] = cost
    return CostGraph(root, order, children, node_cost, edge_cost)


def eliminate_cost_graph(graph: CostGraph) -> CostGraph:
    """Leaf-up elimination keeping one minimal edge per (assignment, child
    term); ties go to the lexicographically least constant."""
    below: dict[tuple[Term, Const], float] = {}
    best_child: dict[tuple[Term, Const, Term], Const] = {}

    def cands(term: Term) -> list[Const]:
        return sorted({c for (t, c) in graph.node_cost if t == term},
                      key=term_key)

    for t in reversed(graph.order):
        for c in cands(t):
            total = graph.node_cost[(t, c)]
            for child in graph.children[t]:
                best = _INF
                best_c = None
                for cc in cands(child):
                    e = graph.edge_cost.get(((t, c), (child, cc)), _INF)
                    combined = e + below[(child, cc)]
                    if combined < best:
                        best, best_c = combined, cc
                if best_c is None or best == _INF:
                    total = _INF
                    break
                total += best
                best_child[(t, c, child)] = best_c
            below[(t, c)] = total

    root_cands = cands(graph.root)
    if not root_cands:
        graph.total = _INF
        return graph
    best_root = min(root_cands, key=lambda c: (below[(graph.root, c)],
                                               term_key(c)))
    graph.total = below[(graph.root, best_root)]
    if graph.total == _INF:
        return graph
    graph.chosen = {graph.root: best_root}
    queue = [graph.root]
    while queue:
        t = queue.pop(0)
        for child in graph.children[t]:
            graph.chosen[child] = best_child[(t, graph.chosen[t], child)]
            queue.append(child)
    return graph


def _assemble_assignment_proof(comp: CompressedStructure,
                               chosen_edges: dict[int, int],
                               assignment: dict[Var, Term], q: BooleanCQ,
                               strict_cg: bool) -> ProofGraph:
    structure = comp.structure
    targets: list[int] = []
    parts = []
    for atom in q.atoms:
        ground = substitute_atom(atom, assignment)
        vid = structure.label_ids.get(AtomLabel(ground))
        if vid is None:
            raise KBError(f"atom instance not derivable: {ground}")
        targets.append(vid)
        parts.append(extract_witness(structure, chosen_edges, [vid]))
    vertices, edges = merge_witnesses(parts)
    return add_goal_tail(vertices, edges, targets, q, strict_cg)


def _query_optimum_dllite(kb: KnowledgeBase, q: BooleanCQ, strict_cg: bool
                          ) -> tuple[ProofGraph, CostGraph]:
    if not is_tree_shaped(q):
        raise CompressError("query is not tree-shaped")
    comp = compress_dllite(kb)
    values, chosen = dp_min_tree(comp.structure)
    graph = eliminate_cost_graph(build_cost_graph(comp, q, values))
    if graph.total == _INF:
        raise CompressError("query is not entailed: no assignment is "
                            "derivable in the compressed structure")
    assignment = {t: c for t, c in graph.chosen.items() if isinstance(t, Var)}
    try:
        compressed_proof = _assemble_assignment_proof(comp, chosen, assignment,
                                                      q, strict_cg)
        return decompress(compressed_proof, kb, comp), graph
    except DecompressError:
        # anonymous joins across branches: realize the witness directly
        return _realize_over_real_structure(kb, q, strict_cg), graph


def tree_query_min_treesize(kb: KnowledgeBase, q: BooleanCQ,
                            strict_cg: bool = False
                            ) -> tuple[ProofGraph, CostGraph]:
    """Minimal-tree-size proof for a tree-shaped query over DL-Lite."""
    return _query_optimum_dllite(kb, q, strict_cg)


def dllite_query_min_size(kb: KnowledgeBase, q: BooleanCQ,
                          strict_cg: bool = False
                          ) -> tuple[ProofGraph, CostGraph]:
    """Size-minimal assembly over the same machinery.

    Per-atom proofs in DL-Lite are linear, where size and tree size agree;
    sharing across atoms is reflected in the measured result.
    """
    return _query_optimum_dllite(kb, q, strict_cg)


# ---------------------------------------------------------------------------
# EL queries: assignment enumeration over the compressed structure
# ---------------------------------------------------------------------------

def el_cq_min_treesize(kb: KnowledgeBase, q: BooleanCQ,
                       strict_cg: bool = False) -> ProofGraph:
    """Minimal-tree-size proof via per-assignment minima.

    Enumerates homomorphisms of the query into the compressed structure in
    ascending cost order and returns the first assembly that survives
    decompression; conflated-witness assignments are skipped.
    """
    from .matching import AtomIndex, match_conjunction

    comp = compress_el(kb)
    structure = comp.structure
    values, chosen = dp_min_tree(structure)
    index = AtomIndex(structure.atom_labels())

    scored: list[tuple[float, tuple, dict]] = []
    for subst in match_conjunction(q.atoms, index):
        total = 0.0
        for atom in q.atoms:
            vid = structure.label_ids[AtomLabel(substitute_atom(atom, subst))]
            total += values[vid]
        key = tuple(sorted((v.name, term_key(t)) for v, t in subst.items()))
        scored.append((total, key, subst))
    if not scored:
        raise CompressError("query is not entailed: no match in the "
                            "compressed structure")
    scored.sort(key=lambda s: (s[0], s[1]))

    best_total = scored[0][0]
    for total, _, subst in scored:
        if total > best_total:
            break  # a conflation-free realization of the optimum exists
        try:
            compressed_proof = _assemble_assignment_proof(
                comp, chosen, subst, q, strict_cg)
            return decompress(compressed_proof, kb, comp)
        except DecompressError:
            continue
    # the optimal value is right but its compressed witness conflates
    # anonymous witnesses with different origins; realize it directly
    return _realize_over_real_structure(kb, q, strict_cg)


def _realize_over_real_structure(kb: KnowledgeBase, q: BooleanCQ,
                                 strict_cg: bool) -> ProofGraph:
    """Minimal-tree-size witness over the depth-bounded real structure.

    Used when a compressed witness conflates anonymous witnesses of
    different origins: the value machinery stays polynomial, only the
    witness is re-derived with real Skolem terms.
    """
    from .chase import default_depth_ceiling
    from .deriver_sk import saturate_kb
    from .matching import AtomIndex, match_conjunction

    structure = saturate_kb(kb, default_depth_ceiling(kb, q),
                            max_atoms=500_000)
    values, chosen = dp_min_tree(structure)
    index = AtomIndex(structure.atom_labels())
    best: Optional[tuple[float, tuple, dict]] = None
    for subst in match_conjunction(q.atoms, index):
        total = 0.0
        ok = True
        for atom in q.atoms:
            vid = structure.label_ids.get(
                AtomLabel(substitute_atom(atom, subst)))
            if vid is None or values[vid] == _INF:
                ok = False
                break
            total += values[vid]
        if not ok:
            continue
        key = tuple(sorted((v.name, term_key(t)) for v, t in subst.items()))
        if best is None or (total, key) < (best[0], best[1]):
            best = (total, key, subst)
    if best is None:
        raise CompressError("query is not entailed within the realization "
                            "depth bound")
    _, _, subst = best
    targets = []
    parts = []
    for atom in q.atoms:
        vid = structure.label_ids[AtomLabel(substitute_atom(atom, subst))]
        targets.append(vid)
        parts.append(extract_witness(structure, chosen, [vid]))
    vertices, edges = merge_witnesses(parts)
    return add_goal_tail(vertices, edges, targets, q, strict_cg)
