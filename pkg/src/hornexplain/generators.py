"""Deterministic families of benchmark instances.

Each constructor returns a knowledge base entailing its query by
construction, together with predicted growth classes (and exact bounds
where the family pins them down).
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .kb import (Atom, BooleanCQ, ConceptAtom, Const, KBError, KnowledgeBase,
                 RoleAtom, Rule, Var, make_kb, make_rule)


@dataclass(frozen=True)
class GeneratedInstance:
    family: str
    parameter: int
    kb: KnowledgeBase
    query: BooleanCQ
    predicted: dict = field(default_factory=dict, compare=False)
    bounds: dict = field(default_factory=dict, compare=False)


def _chainified(query: BooleanCQ, n: int, family: str, parameter: int,
                extra_rules: Sequence[Rule] = (),
                skip_preds: Sequence[str] = ()) -> GeneratedInstance:
    """Chains of inclusions over each query predicate, facts from the query.

    Every quantified variable becomes a fresh constant; each predicate P of
    the query gets the inclusions P_0 < P_1 < ... < P_n < P, so proofs must
    walk every chain once per atom.  Predicates in ``skip_preds`` get
    neither a chain nor facts; their atoms must be served by extra rules.
    """
    if n < 0:
        raise KBError("chain length must be non-negative")
    rules: list[Rule] = list(extra_rules)
    facts: list[Atom] = []
    preds_unary: list[str] = []
    preds_binary: list[str] = []
    for a in query.atoms:
        if isinstance(a, ConceptAtom) and a.concept not in preds_unary \
                and a.concept not in skip_preds:
            preds_unary.append(a.concept)
        if isinstance(a, RoleAtom) and a.role not in preds_binary \
                and a.role not in skip_preds:
            preds_binary.append(a.role)

    x, y = Var("x"), Var("y")
    for p in preds_unary:
        for i in range(n):
            rules.append(make_rule([ConceptAtom(f"{p}_{i}", x)],
                                   [ConceptAtom(f"{p}_{i + 1}", x)]))
        rules.append(make_rule([ConceptAtom(f"{p}_{n}", x)],
                               [ConceptAtom(p, x)]))
    for p in preds_binary:
        for i in range(n):
            rules.append(make_rule([RoleAtom(f"{p}_{i}", x, y)],
                                   [RoleAtom(f"{p}_{i + 1}", x, y)]))
        rules.append(make_rule([RoleAtom(f"{p}_{n}", x, y)],
                               [RoleAtom(p, x, y)]))

    def base_term(t):
        return Const(f"n_{t.name}") if isinstance(t, Var) else t

    for a in query.atoms:
        if isinstance(a, ConceptAtom):
            if a.concept in skip_preds:
                continue
            fact = ConceptAtom(f"{a.concept}_0", base_term(a.term))
        else:
            if a.role in skip_preds:
                continue
            fact = RoleAtom(f"{a.role}_0", base_term(a.subj),
                            base_term(a.obj))
        if fact not in facts:
            facts.append(fact)
    kb = make_kb(rules, facts)
    per_atom = 2 * (n + 1) + 1
    return GeneratedInstance(
        family, n, kb, query,
        predicted={"size": "poly", "tree": "poly", "domain": "poly"},
        bounds={"per_atom_chain": per_atom})


def gen_dllite_chain(n: int, shape: str = "path") -> GeneratedInstance:
    """Inclusion chains under a fixed query: a three-atom path or one atom."""
    if shape == "path":
        x, y = Var("x"), Var("y")
        query = BooleanCQ((ConceptAtom("A", x), RoleAtom("r", x, y),
                           ConceptAtom("B", y)), (x, y))
    elif shape == "unary":
        x = Var("x")
        query = BooleanCQ((ConceptAtom("P", x),), (x,))
    else:
        raise KBError(f"unknown shape {shape!r}")
    return _chainified(query, n, f"dllite-chain-{shape}", n)


def gen_dllite_tree_query(n: int, seed: int) -> GeneratedInstance:
    """A random tree-shaped query over chainified DL-Lite.

    Some seeds add an existential branch: one query atom is only satisfied
    by an anonymous witness, so optimal proofs must pass through the
    compressed structure's placeholder individuals.
    """
    rng = random.Random(seed)
    n_vars = rng.randint(2, 4)
    vars_ = [Var(f"v{i}") for i in range(n_vars)]
    atoms: list[Atom] = []
    # one predicate per atom: keeps per-atom subproofs disjoint, where the
    # per-atom decomposition of minimal size is exact
    for i in range(1, n_vars):
        parent = vars_[rng.randrange(i)]
        role = f"r{i}"
        if rng.random() < 0.5:
            atoms.append(RoleAtom(role, parent, vars_[i]))
        else:
            atoms.append(RoleAtom(role, vars_[i], parent))
    for i in range(n_vars):
        if rng.random() < 0.6:
            atoms.append(ConceptAtom(f"C{i}", vars_[i]))
    if not any(isinstance(a, ConceptAtom) for a in atoms):
        atoms.append(ConceptAtom("C0", vars_[0]))

    extra_rules: list[Rule] = []
    evars = list(vars_)
    if rng.random() < 0.4:
        anchor_candidates = [a.term for a in atoms
                             if isinstance(a, ConceptAtom)]
        anchor = anchor_candidates[0]
        w = Var("w")
        evars.append(w)
        atoms.append(RoleAtom("s_wit", anchor, w))
        concept = next(a.concept for a in atoms
                       if isinstance(a, ConceptAtom) and a.term == anchor)
        extra_rules.append(make_rule([ConceptAtom(concept, Var("x"))],
                                     [RoleAtom("s_wit", Var("x"), Var("yw"))],
                                     [Var("yw")]))
    query = BooleanCQ(tuple(atoms), tuple(evars))
    depth = 1 + (n % 3)
    return _chainified(query, depth, "dllite-tree-query", seed,
                       extra_rules=extra_rules,
                       skip_preds=("s_wit",) if extra_rules else ())


def gen_el_tree(n: int) -> GeneratedInstance:
    """Two grounded chains of qualified existentials forcing a binary tree.

    Level concepts A_1..A_n spawn r- and s-successors; the B_i travel back
    up, pairing both branches, so minimal proofs double per level.
    """
    if n < 1:
        raise KBError("tree depth starts at 1")
    x, yv = Var("x"), Var("y")
    rules: list[Rule] = [
        make_rule([ConceptAtom("A", x)], [ConceptAtom("A_1", x)]),
        make_rule([ConceptAtom(f"A_{n}", x)], [ConceptAtom(f"B_{n}", x)]),
        make_rule([ConceptAtom("B_1", x)], [ConceptAtom("B", x)]),
    ]
    for i in range(1, n):
        rules.append(make_rule([ConceptAtom(f"A_{i}", x)],
                               [RoleAtom("r", x, yv),
                                ConceptAtom(f"A_{i + 1}", yv)], [yv]))
        rules.append(make_rule([ConceptAtom(f"A_{i}", x)],
                               [RoleAtom("s", x, yv),
                                ConceptAtom(f"A_{i + 1}", yv)], [yv]))
        rules.append(make_rule([RoleAtom("r", x, yv),
                                ConceptAtom(f"B_{i + 1}", yv)],
                               [ConceptAtom(f"Nr_{i}", x)]))
        rules.append(make_rule([RoleAtom("s", x, yv),
                                ConceptAtom(f"B_{i + 1}", yv)],
                               [ConceptAtom(f"Ns_{i}", x)]))
        rules.append(make_rule([ConceptAtom(f"Nr_{i}", x),
                                ConceptAtom(f"Ns_{i}", x)],
                               [ConceptAtom(f"B_{i}", x)]))
    kb = make_kb(rules, [ConceptAtom("A", Const("a"))])
    query = BooleanCQ((ConceptAtom("B", Const("a")),), ())
    return GeneratedInstance(
        "el-tree", n, kb, query,
        predicted={"size": "exp", "tree": "exp", "domain": "exp"})


def gen_el_abox(n: int) -> GeneratedInstance:
    """A linear fact chain whose tree unraveling doubles at every level."""
    if n < 1:
        raise KBError("chain length starts at 1")
    x, yv = Var("x"), Var("y")
    rules = [
        make_rule([RoleAtom("r", x, yv), ConceptAtom("A", yv)],
                  [ConceptAtom("N1", x)]),
        make_rule([RoleAtom("s", x, yv), ConceptAtom("A", yv)],
                  [ConceptAtom("N2", x)]),
        make_rule([ConceptAtom("N1", x), ConceptAtom("N2", x)],
                  [ConceptAtom("A", x)]),
    ]
    facts: list[Atom] = [ConceptAtom("A", Const("a_0"))]
    for i in range(1, n + 1):
        facts.append(RoleAtom("r", Const(f"a_{i}"), Const(f"a_{i - 1}")))
        facts.append(RoleAtom("s", Const(f"a_{i}"), Const(f"a_{i - 1}")))
    kb = make_kb(rules, facts)
    query = BooleanCQ((ConceptAtom("A", Const(f"a_{n}")),), ())
    return GeneratedInstance(
        "el-abox", n, kb, query,
        predicted={"size": "poly", "tree": "exp", "domain": "poly"},
        bounds={"size": 5 * n + 4, "tree": 9 * 2 ** n - 8})


def gen_hornalc_counter(n: int) -> GeneratedInstance:
    """A binary counter over n bits driving a tree of depth 2^n.

    Bits live in concepts O_i (one) and Z_i (zero); children created along
    r carry the incremented counter, propagation axioms copy every bit to
    all r- and s-children, and B climbs back up pairwise.
    """
    if n < 1:
        raise KBError("counter width starts at 1")
    x, yv = Var("x"), Var("y")
    rules: list[Rule] = []

    def ci(body: list[Atom], head: Atom):
        rules.append(make_rule(body, [head]))

    def exist(body: Atom, role: str, filler: str):
        rules.append(make_rule([body], [RoleAtom(role, x, yv),
                                        ConceptAtom(filler, yv)], [yv]))

    for i in range(1, n + 1):
        ci([ConceptAtom("A", x)], ConceptAtom(f"Z_{i}", x))

    # carry logic: W_i collects "bits below i are all ones"
    if n >= 2:
        ci([ConceptAtom("O_1", x)], ConceptAtom("W_2", x))
        for i in range(2, n):
            ci([ConceptAtom(f"W_{i}", x), ConceptAtom(f"O_{i}", x)],
               ConceptAtom(f"W_{i + 1}", x))

    for i in range(1, n + 1):
        if i == 1:
            set_body = [ConceptAtom("Z_1", x)]
            clear_body = [ConceptAtom("O_1", x)]
        else:
            set_body = [ConceptAtom(f"Z_{i}", x), ConceptAtom(f"W_{i}", x)]
            clear_body = [ConceptAtom(f"O_{i}", x), ConceptAtom(f"W_{i}", x)]
        set_name, clear_name = f"SetR_{i}", f"ClrR_{i}"
        ci(set_body, ConceptAtom(set_name, x))
        ci(clear_body, ConceptAtom(clear_name, x))
        exist(ConceptAtom(set_name, x), "r", f"O_{i}")
        exist(ConceptAtom(clear_name, x), "r", f"Z_{i}")
        # no carry through bit i: some lower bit is zero
        for j in range(1, i):
            for bit, keep in (("O", f"O_{i}"), ("Z", f"Z_{i}")):
                name = f"Keep{bit}_{i}_{j}"
                ci([ConceptAtom(f"{bit}_{i}", x), ConceptAtom(f"Z_{j}", x)],
                   ConceptAtom(name, x))
                exist(ConceptAtom(name, x), "r", keep)

    # propagate every bit to all r-children and create/propagate s-children
    for i in range(1, n + 1):
        for bit in ("O", "Z"):
            base = f"{bit}_{i}"
            probe = f"Saw{bit}_{i}"
            ci([RoleAtom("r", x, yv), ConceptAtom(base, yv)],
               ConceptAtom(probe, x))
            rules.append(make_rule([ConceptAtom(probe, x),
                                    RoleAtom("r", x, yv)],
                                   [ConceptAtom(base, yv)]))
            exist(ConceptAtom(probe, x), "s", base)
            rules.append(make_rule([ConceptAtom(probe, x),
                                    RoleAtom("s", x, yv)],
                                   [ConceptAtom(base, yv)]))

    # all ones means B; B propagates up through r/s pairs
    all_ones: Atom = ConceptAtom("O_1", x)
    if n >= 2:
        ci([ConceptAtom(f"W_{n}", x), ConceptAtom(f"O_{n}", x)],
           ConceptAtom("Ones", x))
        all_ones = ConceptAtom("Ones", x)
    ci([all_ones], ConceptAtom("B", x))
    ci([RoleAtom("r", x, yv), ConceptAtom("B", yv)], ConceptAtom("Rb", x))
    ci([RoleAtom("s", x, yv), ConceptAtom("B", yv)], ConceptAtom("Sb", x))
    ci([ConceptAtom("Rb", x), ConceptAtom("Sb", x)], ConceptAtom("B", x))

    kb = make_kb(rules, [ConceptAtom("A", Const("a"))])
    query = BooleanCQ((ConceptAtom("B", Const("a")),), ())
    return GeneratedInstance(
        "hornalc-counter", n, kb, query,
        predicted={"size": "doubly-exp", "tree": "doubly-exp",
                   "domain": "doubly-exp"})


# ---------------------------------------------------------------------------
# Satisfiability reductions
# ---------------------------------------------------------------------------

def _prepare_clauses(clauses: Sequence[Sequence[int]]
                     ) -> tuple[list[frozenset[int]], int]:
    if not clauses:
        raise KBError("at least one clause is required")
    sets = []
    k = 0
    for clause in clauses:
        if not clause:
            raise KBError("empty clauses are not allowed")
        for lit in clause:
            if lit == 0:
                raise KBError("literals are non-zero integers")
            k = max(k, abs(lit))
        sets.append(frozenset(clause))
    # the reduction assumes a tautology clause per variable
    for v in range(1, k + 1):
        taut = frozenset({v, -v})
        if taut not in sets:
            sets.append(taut)
    return sets, k


def _lit_const(lit: int) -> Const:
    return Const(f"p{lit}" if lit > 0 else f"np{-lit}")


def _sat_instance(clauses: Sequence[Sequence[int]]
                  ) -> tuple[KnowledgeBase, BooleanCQ, int, int,
                             list[frozenset[int]]]:
    sets, k = _prepare_clauses(clauses)
    m = len(sets)
    facts: list[Atom] = []
    for v in range(1, k + 1):
        facts.append(ConceptAtom("T", _lit_const(v)))
        facts.append(ConceptAtom("T", _lit_const(-v)))
    for j, clause in enumerate(sets, start=1):
        for lit in sorted(clause):
            facts.append(RoleAtom("c", Const(f"cl_{j}"), _lit_const(lit)))
        if j < m:
            facts.append(RoleAtom("next", Const(f"cl_{j}"),
                                  Const(f"cl_{j + 1}")))
    atoms: list[Atom] = []
    evars: list[Var] = []
    for j in range(1, m + 1):
        xc, xp = Var(f"xc{j}"), Var(f"xp{j}")
        atoms.append(RoleAtom("c", xc, xp))
        atoms.append(ConceptAtom("T", xp))
        if j < m:
            atoms.append(RoleAtom("next", xc, Var(f"xc{j + 1}")))
        evars.extend([xc, xp])
    query = BooleanCQ(tuple(atoms), tuple(evars))
    kb = make_kb([], facts)
    return kb, query, m, k, sets


def gen_sat(clauses: Sequence[Sequence[int]]) -> GeneratedInstance:
    """Clause satisfiability as bounded proof search: a proof of the stated
    size (or domain size) exists iff the clauses are satisfiable."""
    kb, query, m, k, sets = _sat_instance(clauses)
    return GeneratedInstance(
        "sat", m, kb, query,
        predicted={"size": "poly", "domain": "poly"},
        bounds={"size": 2 + m + (m - 1) + k, "domain": m + k,
                "m": m, "k": k, "clauses": [sorted(c) for c in sets]})


def gen_sat_cq(clauses: Sequence[Sequence[int]]) -> GeneratedInstance:
    """The same reduction aimed at query-level proofs and tree size."""
    kb, query, m, k, sets = _sat_instance(clauses)
    return GeneratedInstance(
        "sat-cq", m, kb, query,
        predicted={"tree": "poly"},
        bounds={"cq_tree": 4 * m + 2 * k - 1, "m": m, "k": k,
                "clauses": [sorted(c) for c in sets]})


def brute_force_sat(clauses: Iterable[frozenset[int]], k: int) -> bool:
    """Exhaustive assignment check, the reference oracle for the reductions."""
    clause_list = list(clauses)
    for bits in range(2 ** k):
        assignment = {v: bool(bits >> (v - 1) & 1) for v in range(1, k + 1)}
        if all(any((lit > 0) == assignment[abs(lit)] for lit in clause)
               for clause in clause_list):
            return True
    return False


FAMILIES = {
    "dllite-chain": lambda n, seed=None: gen_dllite_chain(n),
    "dllite-chain-unary": lambda n, seed=None: gen_dllite_chain(n, "unary"),
    "dllite-tree-query": lambda n, seed=None: gen_dllite_tree_query(
        n, seed if seed is not None else n),
    "el-tree": lambda n, seed=None: gen_el_tree(n),
    "el-abox": lambda n, seed=None: gen_el_abox(n),
    "hornalc-counter": lambda n, seed=None: gen_hornalc_counter(n),
}
