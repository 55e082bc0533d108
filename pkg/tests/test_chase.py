"""Skolemization, bounded model construction, matching, entailment."""

import random

from hornexplain.chase import chase, entails, match_query, skolemize
from hornexplain.kb import (ConceptAtom, Const, RoleAtom, SkolemTerm, Var,
                            atom_terms, term_depth)
from hornexplain.parser import parse_document, parse_kb
from hornexplain.generators import gen_el_tree


def test_skolemize_example_rules(ex1):
    kb, _ = ex1
    sk = skolemize(kb.tbox)
    x = Var("x")
    assert sk[0].head == (RoleAtom("r", x, SkolemTerm("f_0", x)),
                          ConceptAtom("B", SkolemTerm("f_0", x)))
    assert sk[1].head == (RoleAtom("s", x, SkolemTerm("f_1", x)),
                          ConceptAtom("A", SkolemTerm("f_1", x)))
    # rules without existentials are unchanged
    assert sk[2].head == kb.tbox[2].head
    assert sk[2].fn is None
    assert sk[0].fn == "f_0" and sk[1].fn == "f_1"


def test_chase_depth_two_contains_the_model_fragment(ex1):
    kb, _ = ex1
    state = chase(kb, 2)
    a = Const("a")
    f0a = SkolemTerm("f_0", a)
    f1f0a = SkolemTerm("f_1", f0a)
    expected = {
        ConceptAtom("A", a),
        RoleAtom("r", a, f0a),
        ConceptAtom("B", f0a),
        RoleAtom("s", f0a, f1f0a),
        ConceptAtom("A", f1f0a),
        ConceptAtom("E", f0a),
        ConceptAtom("D", a),
    }
    assert expected <= state.atoms
    assert not state.saturated_at_bound  # deeper terms were suppressed


def test_chase_empty_tbox_saturates():
    kb = parse_kb("fact: A(a)\n")
    state = chase(kb, 5)
    assert state.atoms == {ConceptAtom("A", Const("a"))}
    assert state.saturated_at_bound


def test_chase_propagates_along_a_fact_chain():
    n = 4
    lines = ["rule: r(x,y), A(y) -> A(x)"]
    lines += [f"fact: r(c_{i}, c_{i+1})" for i in range(n)]
    lines += [f"fact: A(c_{n})"]
    kb = parse_kb("\n".join(lines) + "\n")
    state = chase(kb, 0)
    for i in range(n + 1):
        assert ConceptAtom("A", Const(f"c_{i}")) in state.atoms
    assert state.saturated_at_bound


def test_chase_monotone_and_depth_sound(ex1):
    kb, _ = ex1
    previous = None
    for depth in range(4):
        state = chase(kb, depth)
        for atom in state.atoms:
            assert max(term_depth(t) for t in atom_terms(atom)) <= depth
        if previous is not None:
            assert previous <= state.atoms
        previous = state.atoms


def test_nominal_equalities_rewrite_globally():
    kb = parse_kb(
        "rule: A(x) -> exists y. r(x,y), B(y)\n"
        "rule: B(x) -> x = b\n"
        "rule: B(x) -> exists z. s(x,z), C(z)\n"
        "fact: A(a)\n")
    state = chase(kb, 3)
    b = Const("b")
    assert RoleAtom("r", Const("a"), b) in state.atoms
    assert ConceptAtom("B", b) in state.atoms
    # nothing still mentions the merged witness, not even nested
    for atom in state.atoms:
        for t in atom_terms(atom):
            for s in [t] + ([t.arg] if isinstance(t, SkolemTerm) else []):
                assert not (isinstance(s, SkolemTerm) and s.fn == "f_0")
    assert any(src == SkolemTerm("f_0", Const("a")) and dst == b
               for src, dst in state.equalities)


def test_match_query_finds_the_published_assignment(ex1):
    kb, q = ex1
    state = chase(kb, 2)
    matches = match_query(q, state, limit=5)
    assert matches
    first = matches[0].as_dict()
    assert first[Var("xp")] == Const("a")
    assert first[Var("y")] == SkolemTerm("f_0", Const("a"))


def test_match_query_on_missing_atom_is_empty():
    kb = parse_kb("fact: B(a)\n")
    doc = parse_document("fact: B(a)\nquery: exists x. A(x)\n")
    state = chase(kb, 1)
    assert match_query(doc.queries[0], state, limit=3) == []


def test_match_query_variables_may_collide():
    doc = parse_document("fact: r(a,b)\nquery: exists x, y, z. r(x,y), r(z,y)\n")
    state = chase(doc.kb, 0)
    matches = match_query(doc.queries[0], state, limit=3)
    assert len(matches) == 1
    got = matches[0].as_dict()
    assert got == {Var("x"): Const("a"), Var("z"): Const("a"),
                   Var("y"): Const("b")}


def test_entails_example_at_depth_two(ex1):
    kb, q = ex1
    result = entails(kb, q)
    assert result.verdict == "yes"
    assert result.at_depth == 2


def test_entails_definitive_no():
    doc = parse_document("fact: A(a)\nquery: B(a)\n")
    result = entails(doc.kb, doc.queries[0])
    assert result.verdict == "no"


def test_entails_unknown_when_ceiling_hit():
    doc = parse_document(
        "rule: A(x) -> exists y. r(x,y), A(y)\nfact: A(a)\n"
        "query: B(a)\n")
    result = entails(doc.kb, doc.queries[0], ceiling=2)
    assert result.verdict == "unknown"


def test_entails_generated_el_instance():
    inst = gen_el_tree(3)
    result = entails(inst.kb, inst.query)
    assert result.verdict == "yes"
    assert result.at_depth == 2  # tree of qualified existentials, depth n-1


FORM_TEMPLATES = [
    "rule: {A}(x) -> {B}(x)",
    "rule: {A}(x), {B}(x) -> {C}(x)",
    "rule: {r}(x,y), {A}(y) -> {B}(x)",
    "rule: {A}(x) -> exists y. {r}(x,y), {B}(y)",
    "rule: {A}(x), {r}(x,y) -> {B}(y)",
    "rule: {A}(x) -> x = {a}",
    "rule: {r}(x,y) -> {s}(x,y)",
]


def _random_kb(rng):
    concepts = ["P", "Q", "R"]
    roles = ["u", "v"]
    consts = ["d", "e"]
    lines = []
    for _ in range(rng.randint(1, 4)):
        template = rng.choice(FORM_TEMPLATES)
        lines.append(template.format(
            A=rng.choice(concepts), B=rng.choice(concepts),
            C=rng.choice(concepts), r=rng.choice(roles),
            s=rng.choice(roles), a=rng.choice(consts)))
    for _ in range(rng.randint(1, 3)):
        if rng.random() < 0.5:
            lines.append(f"fact: {rng.choice(concepts)}({rng.choice(consts)})")
        else:
            lines.append(f"fact: {rng.choice(roles)}"
                         f"({rng.choice(consts)},{rng.choice(consts)})")
    return parse_kb("\n".join(dict.fromkeys(lines)) + "\n")


def test_chase_fuzz_monotone_depth_and_orientation():
    """Randomized knowledge bases: bound, monotonicity, equality rewriting."""
    rng = random.Random(20240817)
    for case in range(120):
        kb = _random_kb(rng)
        d = rng.randint(0, 2)
        lo = chase(kb, d, max_atoms=3000)
        hi = chase(kb, d + 1, max_atoms=3000)
        for atom in lo.atoms:
            assert max(term_depth(t) for t in atom_terms(atom)) <= d
        # monotone modulo equalities discovered at the deeper bound
        rewrites = dict(hi.equalities)

        def rewrite(term):
            while term in rewrites:
                term = rewrites[term]
            if isinstance(term, SkolemTerm):
                inner = rewrite(term.arg)
                out = SkolemTerm(term.fn, inner)
                return rewrites.get(out, out)
            return term

        def rewrite_atom(atom):
            if isinstance(atom, ConceptAtom):
                return ConceptAtom(atom.concept, rewrite(atom.term))
            return RoleAtom(atom.role, rewrite(atom.subj), rewrite(atom.obj))

        for atom in lo.atoms:
            assert rewrite_atom(atom) in hi.atoms, (kb, atom, d)
        # orientation: no atom keeps a term that was merged away
        for state in (lo, hi):
            merged = {src for src, _ in state.equalities}
            for atom in state.atoms:
                for t in atom_terms(atom):
                    assert t not in merged
