"""Exact bounded proof search and the algorithm router.

The searches here are deliberately independent of the dynamic programs in
:mod:`hornexplain.compress`: tree-size minima are recomputed by recursive
descent over the saturated structure, and size / domain-size minima by
branch-and-bound over explicit derivation choices.  Outcomes are exact
relative to the structural bounds in force (term-depth ceiling, node and
time budgets); ``none`` means the whole space within those bounds was
exhausted, ``exhausted`` that a resource limit cut the search short.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .chase import default_depth_ceiling, entails
from .compress import (CompressError, DecompressError, add_goal_tail,
                       extract_witness, merge_witnesses, _INF)
from .deriver_sk import BudgetExceeded, FiniteStructure, saturate_kb
from .kb import (Atom, BooleanCQ, Fragment, KnowledgeBase, Term, Var,
                 is_tree_shaped, substitute_atom)
from .matching import AtomIndex, match_conjunction
from .proofs import (AtomLabel, CQLabel, Label, Measure, ProofEdge,
                     ProofGraph, RuleLabel, Schema, TautRule, label_key,
                     measure, proof_size, tree_size)


@dataclass
class SearchBudget:
    measure: Measure
    bound: Optional[int] = None          # None: minimize
    max_nodes: int = 1_000_000
    max_seconds: float = 60.0

    def __post_init__(self):
        if self.bound is not None and self.bound <= 1:
            raise ValueError("bounds are natural numbers greater than 1")


@dataclass
class SearchOutcome:
    status: str                          # "found" | "none" | "exhausted"
    proof: Optional[ProofGraph] = None
    value: Optional[int] = None
    nodes: int = 0
    complete: bool = True


class _OutOfBudget(Exception):
    pass


class _Ticker:
    def __init__(self, budget: SearchBudget):
        self.count = 0
        self.max_nodes = budget.max_nodes
        self.deadline = time.monotonic() + budget.max_seconds

    def tick(self, k: int = 1) -> None:
        self.count += k
        if self.count > self.max_nodes:
            raise _OutOfBudget("node limit")
        if self.count % 4096 == 0 and time.monotonic() > self.deadline:
            raise _OutOfBudget("time limit")


def _tail_shape(q: BooleanCQ, strict_cg: bool) -> tuple[str, int]:
    """How the proof ends after the per-atom part: kind and vertex count."""
    has_vars = bool(q.existential_vars)
    if strict_cg:
        return "c_and_g", 2
    if len(q.atoms) == 1 and not has_vars:
        return "none", 0
    if len(q.atoms) == 1:
        return "g_only", 1
    if not has_vars:
        return "c_only", 1
    return "c_and_g", 2


# ---------------------------------------------------------------------------
# Tree-size search.  The unique-label mode fixes one derivation per label and
# computes the least fixpoint by value iteration; the duplicate-tolerant mode
# descends recursively without any per-label state.
# ---------------------------------------------------------------------------

def _tree_values_fixpoint(structure: FiniteStructure, ticker: _Ticker
                          ) -> tuple[dict[int, float], dict[int, int]]:
    values: dict[int, float] = {v: _INF for v in structure.vertices}
    chosen: dict[int, int] = {}
    for leaf in structure.leaf_ids:
        values[leaf] = 1.0
    changed = True
    while changed:
        changed = False
        for idx, e in enumerate(structure.edges):
            ticker.tick()
            if e.conclusion in structure.leaf_ids:
                continue
            total = 1.0
            dead = False
            for p in e.premises:
                if values[p] == _INF:
                    dead = True
                    break
                total += values[p]
            if dead:
                continue
            cur = values[e.conclusion]
            if total < cur:
                values[e.conclusion] = total
                chosen[e.conclusion] = idx
                changed = True
            elif total == cur and e.conclusion in chosen \
                    and chosen[e.conclusion] != idx \
                    and _edge_sort_key(structure, idx) \
                    < _edge_sort_key(structure, chosen[e.conclusion]):
                chosen[e.conclusion] = idx
                changed = True
    return values, chosen


def _tree_min_descend(structure: FiniteStructure, vid: int, limit: float,
                      ticker: _Ticker, path: frozenset) -> float:
    """Exhaustive minimal tree size; labels may repeat across branches but
    never along a path (on-path repeats are never part of a minimum)."""
    ticker.tick()
    if vid in structure.leaf_ids:
        return 1.0
    best: float = _INF
    for eidx in sorted(structure.in_edges[vid],
                       key=lambda i: _edge_sort_key(structure, i)):
        e = structure.edges[eidx]
        if any(p in path for p in e.premises):
            continue
        total = 1.0
        sub_path = path | {vid}
        cap = min(limit, best)
        for p in e.premises:
            total += _tree_min_descend(structure, p, cap - total, ticker,
                                       sub_path)
            if total >= cap:
                total = _INF
                break
        best = min(best, total)
    return best


def _edge_sort_key(structure: FiniteStructure, idx: int):
    e = structure.edges[idx]
    return (e.schema.value,
            tuple(label_key(structure.vertices[p]) for p in e.premises))


# ---------------------------------------------------------------------------
# Size / domain-size search: choose a derivation per needed vertex copy
# ---------------------------------------------------------------------------

@dataclass
class _CoverState:
    members: dict[tuple[int, int], Optional[int]]  # (vid, copy) -> edge idx
    pending: list[tuple[int, int]]
    arcs: dict[tuple[int, int], set[tuple[int, int]]]
    size_count: int
    terms: set[Term]


def _label_terms(label: Label) -> set[Term]:
    from .proofs import ground_terms_of_label
    return ground_terms_of_label(label)


def _reaches(arcs, start, goal) -> bool:
    stack = [start]
    seen = set()
    while stack:
        v = stack.pop()
        if v == goal:
            return True
        if v in seen:
            continue
        seen.add(v)
        stack.extend(arcs.get(v, ()))
    return False


def _cover_min(structure: FiniteStructure, targets: list[int],
               kind: Measure, limit: float, ticker: _Ticker,
               allow_duplicates: bool
               ) -> Optional[tuple[float, dict[tuple[int, int], Optional[int]]]]:
    """Exact minimum over derivation choices for the target set.

    ``allow_duplicates`` admits up to two proof vertices per atom label
    (never beneficial, but part of the space the restriction cuts away).
    """
    best_value: list[float] = [limit]
    best_choice: list[Optional[dict]] = [None]
    max_copies = 2 if allow_duplicates else 1

    def value_of(state: _CoverState) -> float:
        if kind is Measure.SIZE:
            return float(state.size_count)
        return float(len(state.terms))

    def dfs(state: _CoverState) -> None:
        ticker.tick()
        if value_of(state) >= best_value[0]:
            return
        if not state.pending:
            best_value[0] = value_of(state)
            best_choice[0] = dict(state.members)
            return
        state.pending.sort(key=lambda k: (label_key(structure.vertices[k[0]]),
                                          k[1]), reverse=True)
        key = state.pending.pop()
        vid = key[0]
        edge_ids = sorted(structure.in_edges[vid],
                          key=lambda i: _edge_sort_key(structure, i))
        for eidx in edge_ids:
            e = structure.edges[eidx]
            for combo in _premise_combos(structure, e.premises, state,
                                         max_copies):
                nxt = _CoverState(dict(state.members), list(state.pending),
                                  {k: set(v) for k, v in state.arcs.items()},
                                  state.size_count, state.terms)
                nxt.members[key] = eidx
                ok = True
                for pkey in combo:
                    if _reaches(nxt.arcs, key, pkey):
                        ok = False
                        break
                    nxt.arcs.setdefault(pkey, set()).add(key)
                    if pkey not in nxt.members:
                        nxt.members[pkey] = None
                        nxt.size_count += 1
                        if kind is Measure.DOMAIN_SIZE:
                            nxt.terms = nxt.terms | _label_terms(
                                structure.vertices[pkey[0]])
                        if pkey[0] not in structure.leaf_ids:
                            nxt.pending.append(pkey)
                        if value_of(nxt) >= best_value[0]:
                            ok = False
                            break
                if ok:
                    dfs(nxt)
        state.pending.append(key)

    init_members: dict[tuple[int, int], Optional[int]] = {}
    init_terms: set[Term] = set()
    init_pending = []
    for vid in dict.fromkeys(targets):
        key = (vid, 0)
        init_members[key] = None
        init_terms |= _label_terms(structure.vertices[vid])
        if vid not in structure.leaf_ids:
            init_pending.append(key)
    state = _CoverState(init_members, init_pending, {}, len(init_members),
                        init_terms)
    dfs(state)
    if best_choice[0] is None:
        return None
    return best_value[0], best_choice[0]


def _premise_combos(structure, premises, state: _CoverState, max_copies):
    """All ways to satisfy the premise tuple with member copies."""
    options_per_premise = []
    for vid in premises:
        label = structure.vertices[vid]
        if isinstance(label, RuleLabel):
            options_per_premise.append([(vid, 0)])
            continue
        opts = [(vid, k) for k in range(max_copies)
                if (vid, k) in state.members]
        for k in range(max_copies):
            if (vid, k) not in state.members:
                opts.append((vid, k))
                break
        options_per_premise.append(opts)
    combos: list[tuple] = [()]
    for opts in options_per_premise:
        combos = [c + (o,) for c in combos for o in opts]
    return combos


# ---------------------------------------------------------------------------
# The bounded search proper
# ---------------------------------------------------------------------------

def bounded_search(kb: KnowledgeBase, q: BooleanCQ, budget: SearchBudget,
                   deriver: str = "sk", unique_labels: bool = True,
                   strict_cg: bool = False,
                   depth_ceiling: Optional[int] = None) -> SearchOutcome:
    """Decide whether a proof within the measure bound exists (or minimize).

    Saturates the derivation structure up to a term-depth cap implied by the
    bound and the configured ceiling, then optimizes over query matches and
    derivation choices.  Three-valued outcome; ``none`` is exact relative to
    the structural bounds.
    """
    if deriver == "cq":
        return bounded_search_cq(kb, q, budget, strict_cg=strict_cg)
    if deriver != "sk":
        raise ValueError(f"unknown deriver {deriver!r}")

    ticker = _Ticker(budget)
    ent = entails(kb, q, ceiling=depth_ceiling)
    if ent.verdict == "no":
        return SearchOutcome("none", complete=True)
    if ent.verdict == "unknown":
        return SearchOutcome("exhausted", complete=False)

    explicit_ceiling = depth_ceiling is not None
    hard = depth_ceiling if depth_ceiling is not None \
        else default_depth_ceiling(kb, q)
    hard = max(hard, ent.at_depth or 0)
    depth_want = min(budget.bound, hard) if budget.bound is not None else hard
    depth = min(max(ent.at_depth or 0, 0), depth_want)

    best_value = _INF
    best_sigma: Optional[dict[Var, Term]] = None
    best_choice = None
    best_structure: Optional[FiniteStructure] = None
    tripped = False
    structure: Optional[FiniteStructure] = None

    # deepen until the result is certified: deeper terms need longer
    # derivations, so nothing below the current best can hide past
    # depth best-1 (and nothing within the bound past bound-1)
    while True:
        try:
            structure = saturate_kb(kb, depth,
                                    max_atoms=max(1000, budget.max_nodes // 4),
                                    deadline=ticker.deadline)
        except BudgetExceeded:
            tripped = True
            structure = None
            break
        value, sigma, choice, tripped = _search_at_depth(
            kb, q, budget, structure, unique_labels, strict_cg, ticker,
            best_value)
        if value < best_value:
            best_value, best_sigma, best_choice = value, sigma, choice
            best_structure = structure
        if tripped:
            break
        certified = structure.complete or (
            depth >= (min(best_value, float(budget.bound))
                      if budget.bound is not None else best_value) - 1)
        if budget.bound is not None and best_value <= budget.bound:
            break  # existence settled
        if budget.bound is None and best_value < _INF and not explicit_ceiling:
            # certifying optimality may need terms deeper than the default
            # entailment ceiling; the node and time budgets still apply
            depth_want = max(depth_want, int(best_value) - 1)
        if certified or depth >= depth_want:
            break
        depth = min(depth_want, depth + 1)

    if best_sigma is not None and (budget.bound is None
                                   or best_value <= budget.bound):
        assert best_structure is not None
        assembly_ticker = _Ticker(SearchBudget(budget.measure,
                                               max_nodes=10_000_000,
                                               max_seconds=120.0))
        proof = _assemble_sk(best_structure, kb, q, best_sigma, budget.measure,
                             best_choice, strict_cg, assembly_ticker)
        complete = (not tripped) and (
            budget.bound is not None
            or best_structure.complete
            or (structure is not None and structure.complete)
            or depth >= best_value - 1)
        return SearchOutcome("found", proof, int(best_value), ticker.count,
                             complete)
    if tripped:
        return SearchOutcome("exhausted", nodes=ticker.count, complete=False)
    if budget.bound is not None:
        complete = (structure is not None and structure.complete) \
            or depth >= budget.bound - 1
        return SearchOutcome("none" if complete else "exhausted",
                             nodes=ticker.count, complete=complete)
    return SearchOutcome("exhausted", nodes=ticker.count, complete=False)


def _search_at_depth(kb: KnowledgeBase, q: BooleanCQ, budget: SearchBudget,
                     structure: FiniteStructure, unique_labels: bool,
                     strict_cg: bool, ticker: _Ticker, incoming_best: float
                     ) -> tuple[float, Optional[dict], Optional[dict], bool]:
    _, tail_count = _tail_shape(q, strict_cg)
    index = AtomIndex(structure.atom_labels())
    limit = float(budget.bound) + 1.0 if budget.bound is not None else _INF

    best_value = incoming_best
    best_sigma: Optional[dict[Var, Term]] = None
    best_choice = None
    tree_values: Optional[dict[int, float]] = None
    if budget.measure is Measure.TREE_SIZE and unique_labels:
        try:
            tree_values, _ = _tree_values_fixpoint(structure, ticker)
        except _OutOfBudget:
            return best_value, None, None, True
    tripped = False
    try:
        for sigma in match_conjunction(q.atoms, index):
            ticker.tick()
            targets = []
            for atom in q.atoms:
                ground = substitute_atom(atom, sigma)
                targets.append(structure.label_ids[AtomLabel(ground)])
            cap = min(limit, best_value)
            if budget.measure is Measure.TREE_SIZE:
                total = float(tail_count)
                ok = True
                for vid in targets:
                    if tree_values is not None:
                        sub = tree_values[vid]
                    else:
                        sub = _tree_min_descend(structure, vid, cap - total,
                                                ticker, frozenset())
                    total += sub
                    if total >= cap:
                        ok = False
                        break
                if ok and total < best_value:
                    best_value, best_sigma = total, sigma
                    best_choice = None
            else:
                res = _cover_min(structure, targets, budget.measure,
                                 cap - (tail_count if budget.measure
                                        is Measure.SIZE else 0),
                                 ticker, allow_duplicates=not unique_labels)
                if res is not None:
                    value, choice = res
                    total = value + (tail_count if budget.measure
                                     is Measure.SIZE else 0)
                    if total < best_value:
                        best_value, best_sigma = total, sigma
                        best_choice = choice
    except _OutOfBudget:
        tripped = True
    return best_value, best_sigma, best_choice, tripped


def _assemble_sk(structure: FiniteStructure, kb: KnowledgeBase, q: BooleanCQ,
                 sigma: dict[Var, Term], kind: Measure, choice,
                 strict_cg: bool, ticker: _Ticker) -> ProofGraph:
    targets = []
    for atom in q.atoms:
        ground = substitute_atom(atom, sigma)
        targets.append(structure.label_ids[AtomLabel(ground)])

    if kind is Measure.TREE_SIZE:
        _, chosen = _tree_values_fixpoint(structure, ticker)
        parts = [extract_witness(structure, chosen, [vid]) for vid in targets]
        vertices, edges = merge_witnesses(parts)
        return add_goal_tail(vertices, edges, targets, q, strict_cg)

    # size / domain: materialize the chosen copies
    assert choice is not None
    id_of: dict[tuple[int, int], int] = {}
    vertices: dict[int, Label] = {}
    for i, key in enumerate(sorted(choice,
                                   key=lambda k: (k[0], k[1]))):
        id_of[key] = i
        vertices[i] = structure.vertices[key[0]]
    edges = []
    for key, eidx in sorted(choice.items(), key=lambda kv: id_of[kv[0]]):
        if eidx is None:
            continue
        e = structure.edges[eidx]
        premise_keys = _premises_for(structure, e.premises, choice, key)
        edges.append(ProofEdge(tuple(id_of[p] for p in premise_keys),
                               id_of[key], e.schema))
    target_ids = [id_of[(vid, 0)] for vid in targets]
    return add_goal_tail(vertices, edges, target_ids, q, strict_cg)


def _premises_for(structure, premises, choice, conclusion_key):
    """Reconstruct which member copy served each premise position."""
    out = []
    for vid in premises:
        label = structure.vertices[vid]
        if isinstance(label, RuleLabel):
            out.append((vid, 0))
            continue
        copies = sorted(k for k in choice if k[0] == vid)
        # prefer copy 0; the duplicate-tolerant mode only needs a witness of
        # equal value, which copy 0 always provides
        out.append(copies[0] if copies else (vid, 0))
    return out


# ---------------------------------------------------------------------------
# Query-level search (no domain size here)
# ---------------------------------------------------------------------------

def bounded_search_cq(kb: KnowledgeBase, q: BooleanCQ, budget: SearchBudget,
                      strict_cg: bool = False) -> SearchOutcome:
    """Bounded search over whole-query proofs.

    Exact for rule-free knowledge bases, where every proof collects facts
    with binary conjunction steps and finishes with one generalization or
    one tautology application; with rules, a node-capped forward closure is
    attempted and ``none`` is never claimed.
    """
    if budget.measure is Measure.DOMAIN_SIZE:
        raise ValueError("domain size is not defined for query-level proofs")
    ticker = _Ticker(budget)
    index = AtomIndex(kb.abox)
    best: Optional[tuple[float, dict[Var, Term], bool]] = None
    limit = float(budget.bound) + 1.0 if budget.bound is not None else _INF
    try:
        for sigma in match_conjunction(q.atoms, index):
            ticker.tick()
            grounds = [substitute_atom(a, sigma) for a in q.atoms]
            distinct = list(dict.fromkeys(grounds))
            chain = 2 * len(distinct) - 1
            no_collision = len(distinct) == len(grounds)
            if not q.existential_vars:
                # the collected query already is the goal unless atoms repeat
                value = float(chain if no_collision else chain + 2)
                use_taut = not no_collision
            elif no_collision:
                value = float(chain + 1)      # one generalization step
                use_taut = False
            else:
                value = float(chain + 2)      # tautology rule + application
                use_taut = True
            if value < (best[0] if best else limit) and value < limit:
                best = (value, sigma, use_taut)
    except _OutOfBudget:
        return SearchOutcome("exhausted", nodes=ticker.count, complete=False)

    complete = not kb.tbox
    forward: Optional[tuple[float, ProofGraph]] = None
    if kb.tbox:
        cap = min(limit, best[0] if best else _INF)
        try:
            forward = _forward_cq_search(kb, q, cap, ticker)
        except _OutOfBudget:
            if best is None:
                return SearchOutcome("exhausted", nodes=ticker.count,
                                     complete=False)
    if forward is not None and (best is None or forward[0] < best[0]):
        value, proof = forward
        got = tree_size(proof) if budget.measure is Measure.TREE_SIZE \
            else proof_size(proof)
        return SearchOutcome("found", proof, got, ticker.count, False)
    if best is None and kb.tbox:
        return SearchOutcome("exhausted", nodes=ticker.count, complete=False)
    if best is None:
        return SearchOutcome("none", nodes=ticker.count, complete=True)
    value, sigma, use_taut = best
    proof = _assemble_cq(kb, q, sigma, use_taut)
    got = tree_size(proof) if budget.measure is Measure.TREE_SIZE \
        else proof_size(proof)
    return SearchOutcome("found", proof, got, ticker.count, complete)


def _canon_cq(cq: BooleanCQ) -> tuple:
    """Dedup key up to variable renaming (approximate but deterministic)."""
    from .kb import atom_pred, atom_terms as terms_of

    def blind_key(a: Atom):
        return (atom_pred(a),
                tuple(("v",) if isinstance(t, Var) else ("c", t.name)
                      for t in terms_of(a)))

    order = sorted(range(len(cq.atoms)), key=lambda i: blind_key(cq.atoms[i]))
    naming: dict[Var, int] = {}
    out = []
    for i in order:
        a = cq.atoms[i]
        row = [atom_pred(a)]
        for t in terms_of(a):
            if isinstance(t, Var):
                naming.setdefault(t, len(naming))
                row.append(("v", naming[t]))
            else:
                row.append(("c", t.name))
        out.append(tuple(row))
    return tuple(sorted(out))


def _forward_cq_search(kb: KnowledgeBase, q: BooleanCQ, limit: float,
                       ticker: _Ticker) -> Optional[tuple[float, ProofGraph]]:
    """Node-capped closure over query labels: rule applications on derived
    queries, conjunction with facts, and a final generalization or
    tautology step.  Cheapest-first, so the first goal hit is the minimum
    over the enumerated moves (intermediate tautologies are not explored).
    """
    import heapq
    from .deriver_cq import mpe_apply
    from .matching import match_conjunction as mc

    builder_vertices: dict[int, Label] = {}
    builder_edges: list[ProofEdge] = []

    def add_vertex(label: Label) -> int:
        vid = len(builder_vertices)
        builder_vertices[vid] = label
        return vid

    max_atoms = max(len(q.atoms), 2) + 2
    heap: list[tuple[float, int, BooleanCQ, int]] = []
    seen: dict[tuple, float] = {}
    counter = 0
    for fact in sorted(kb.abox, key=lambda a: str(a)):
        cq = BooleanCQ((fact,), ())
        vid = add_vertex(CQLabel(cq))
        heapq.heappush(heap, (1.0, counter, cq, vid))
        counter += 1

    while heap:
        ticker.tick()
        cost, _, cq, vid = heapq.heappop(heap)
        key = _canon_cq(cq)
        if seen.get(key, _INF) < cost:
            continue
        seen[key] = cost

        # try to finish: the popped query instantiates the goal
        finish = _finish_cq_goal(cq, vid, q, cost, add_vertex, builder_edges)
        if finish is not None and finish[0] < limit:
            value, sink = finish
            reachable = ProofGraph(dict(builder_vertices),
                                   list(builder_edges))
            from .proofs import sub_derivation
            return value, sub_derivation(reachable, sink)

        # rule applications
        for rule in kb.tbox:
            body_index = AtomIndex(cq.atoms)
            for pi in mc(rule.body, body_index):
                matched = sorted({substitute_atom(b, pi) for b in rule.body},
                                 key=lambda a: str(a))
                n_heads = len(rule.head)
                for rmask in range(2 ** len(matched)):
                    replace = [a for i, a in enumerate(matched)
                               if rmask >> i & 1]
                    for kmask in range(1, 2 ** n_heads):
                        keep = [i for i in range(n_heads) if kmask >> i & 1]
                        try:
                            new_cq = mpe_apply(cq, rule, pi, replace, keep)
                        except Exception:
                            continue
                        if len(new_cq.atoms) > max_atoms:
                            continue
                        new_cost = cost + 2.0
                        if new_cost >= limit:
                            continue
                        nkey = _canon_cq(new_cq)
                        if seen.get(nkey, _INF) <= new_cost:
                            continue
                        rule_vid = add_vertex(RuleLabel(rule))
                        new_vid = add_vertex(CQLabel(new_cq))
                        builder_edges.append(
                            ProofEdge((vid, rule_vid), new_vid, Schema.MPe))
                        heapq.heappush(heap,
                                       (new_cost, counter, new_cq, new_vid))
                        counter += 1
    return None


def _finish_cq_goal(cq: BooleanCQ, vid: int, q: BooleanCQ, cost: float,
                    add_vertex, edges: list[ProofEdge]
                    ) -> Optional[tuple[float, int]]:
    from .deriver_cq import te_rule
    from .kb import cq_equivalent
    from .matching import match_conjunction as mc

    if cq_equivalent(cq, q):
        return cost, vid
    index = AtomIndex(cq.atoms)
    for pi in mc(q.atoms, index):
        image = {substitute_atom(a, pi) for a in q.atoms}
        if not set(cq.atoms) <= image:
            continue  # leftovers would survive into the conclusion
        taut = te_rule(q.atoms, q.existential_vars)
        taut_vid = add_vertex(RuleLabel(taut))
        edges.append(ProofEdge((), taut_vid, Schema.Te))
        goal_vid = add_vertex(CQLabel(q))
        edges.append(ProofEdge((vid, taut_vid), goal_vid, Schema.MPe))
        return cost + 2.0, goal_vid
    return None


def _assemble_cq(kb: KnowledgeBase, q: BooleanCQ, sigma: dict[Var, Term],
                 use_taut: bool) -> ProofGraph:
    grounds = [substitute_atom(a, sigma) for a in q.atoms]
    distinct = list(dict.fromkeys(grounds))
    vertices: dict[int, Label] = {}
    edges: list[ProofEdge] = []

    def fresh(label: Label) -> int:
        vid = len(vertices)
        vertices[vid] = label
        return vid

    chain_atoms: list[Atom] = [distinct[0]]
    current = fresh(CQLabel(BooleanCQ((distinct[0],), ())))
    for atom in distinct[1:]:
        leaf = fresh(CQLabel(BooleanCQ((atom,), ())))
        chain_atoms.append(atom)
        nxt = fresh(CQLabel(BooleanCQ(tuple(chain_atoms), ())))
        edges.append(ProofEdge((current, leaf), nxt, Schema.Ce))
        current = nxt

    if not q.existential_vars and not use_taut:
        # the chain collects the goal atoms in goal order: current is the sink
        return ProofGraph(vertices, edges)

    if not use_taut:
        goal_id = fresh(CQLabel(q))
        edges.append(ProofEdge((current,), goal_id, Schema.Ge))
        return ProofGraph(vertices, edges)

    taut = TautRule(q.atoms, q.atoms, q.existential_vars)
    taut_id = fresh(RuleLabel(taut))
    edges.append(ProofEdge((), taut_id, Schema.Te))
    goal_id = fresh(CQLabel(q))
    edges.append(ProofEdge((current, taut_id), goal_id, Schema.MPe))
    return ProofGraph(vertices, edges)


# ---------------------------------------------------------------------------
# Algorithm routing
# ---------------------------------------------------------------------------

@dataclass
class RunConfig:
    measure: Measure = Measure.SIZE
    bound: Optional[int] = None
    algo: str = "auto"                   # auto | poly | exact
    deriver: str = "sk"
    depth_ceiling: Optional[int] = None
    max_nodes: int = 1_000_000
    max_seconds: float = 60.0
    strict_cg: bool = False

    def budget(self) -> SearchBudget:
        return SearchBudget(self.measure, self.bound, self.max_nodes,
                            self.max_seconds)


@dataclass
class ExplainResult:
    status: str                          # "found" | "none" | "exhausted"
    proof: Optional[ProofGraph] = None
    value: Optional[int] = None
    measure: Measure = Measure.SIZE
    algorithm: str = "exact"
    nodes: int = 0
    warnings: list[str] = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        return {"found": 0, "none": 1, "exhausted": 2}[self.status]


def _poly_applicable(kb: KnowledgeBase, q: BooleanCQ, m: Measure) -> bool:
    if m is Measure.DOMAIN_SIZE:
        return False
    if kb.fragment == Fragment.DLLiteR and is_tree_shaped(q):
        return True
    return m is Measure.TREE_SIZE and kb.fragment in (Fragment.EL,
                                                      Fragment.DLLiteR)


def _run_poly(kb: KnowledgeBase, q: BooleanCQ, config: RunConfig
              ) -> tuple[ProofGraph, str]:
    from .compress import (dllite_query_min_size, el_cq_min_treesize,
                           tree_query_min_treesize)

    if kb.fragment == Fragment.DLLiteR and is_tree_shaped(q):
        if config.measure is Measure.SIZE:
            proof, _ = dllite_query_min_size(kb, q, config.strict_cg)
            return proof, "poly-dllite-size"
        proof, _ = tree_query_min_treesize(kb, q, config.strict_cg)
        return proof, "poly-dllite-tree"
    proof = el_cq_min_treesize(kb, q, config.strict_cg)
    return proof, "poly-el-tree"


def explain(kb: KnowledgeBase, q: BooleanCQ,
            config: Optional[RunConfig] = None) -> ExplainResult:
    """Find an optimal proof (or one within the configured bound)."""
    config = config or RunConfig()
    warnings: list[str] = []
    if config.deriver == "cq" and config.measure is Measure.DOMAIN_SIZE:
        raise ValueError("domain size is not defined for query-level proofs")

    use_poly = False
    if config.deriver == "sk" and config.algo == "poly":
        use_poly = _poly_applicable(kb, q, config.measure)
        if not use_poly:
            warnings.append("polynomial algorithm preconditions not met "
                            "(fragment, query shape, or measure); falling "
                            "back to exact search")
    elif config.deriver == "sk" and config.algo == "auto":
        # tree size has dedicated polynomial routes; size and domain size
        # default to the exact search
        use_poly = (config.measure is Measure.TREE_SIZE
                    and _poly_applicable(kb, q, config.measure))

    if use_poly:
        try:
            proof, algo = _run_poly(kb, q, config)
            value = measure(proof, config.measure).value
            if config.bound is not None and value > config.bound:
                return ExplainResult("none", None, value, config.measure,
                                     algo, 0, warnings)
            return ExplainResult("found", proof, value, config.measure, algo,
                                 0, warnings)
        except (CompressError, DecompressError) as exc:
            if config.algo == "poly":
                warnings.append(f"polynomial algorithm failed: {exc}; "
                                "falling back to exact search")
            else:
                warnings.append(str(exc))

    outcome = bounded_search(kb, q, config.budget(), deriver=config.deriver,
                             strict_cg=config.strict_cg,
                             depth_ceiling=config.depth_ceiling)
    if not outcome.complete and outcome.status in ("found", "none"):
        warnings.append("search space was cut by the depth ceiling or "
                        "resource limits; result is relative to those bounds")
    return ExplainResult(outcome.status, outcome.proof, outcome.value,
                         config.measure, "exact", outcome.nodes, warnings)
