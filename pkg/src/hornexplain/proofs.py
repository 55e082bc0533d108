"""Proof hypergraphs: labels, structural checks, measures, export.

A proof is a finite acyclic labeled hypergraph with exactly one sink and at
most one incoming hyperedge per vertex, whose leaves are facts or rules of
the knowledge base and whose edges instantiate the inference schemas of one
of the two derivers (ground-atom level or whole-query level).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional, Union

from .kb import (Atom, BooleanCQ, KnowledgeBase, NormalForm, Rule, Term,
                 Var, atom_key, atom_terms, cq_equivalent, format_atom,
                 subterms, term_is_ground)
from .chase import SkolemRule


class Schema(Enum):
    MP = "MP"
    E = "E"
    C = "C"
    G = "G"
    MPe = "MPe"
    Te = "Te"
    Ee = "Ee"
    Ce = "Ce"
    Ge = "Ge"


SK_SCHEMAS = frozenset({Schema.MP, Schema.E, Schema.C, Schema.G})
CQ_SCHEMAS = frozenset({Schema.MPe, Schema.Te, Schema.Ee, Schema.Ce,
                        Schema.Ge})


class Measure(Enum):
    SIZE = "size"
    TREE_SIZE = "tree"
    DOMAIN_SIZE = "domain"


@dataclass(frozen=True)
class MeasureValue:
    measure: Measure
    value: int


# ---------------------------------------------------------------------------
# Vertex labels
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TautRule:
    """A tautology ``phi(x, y) -> exists x'. phi(x', y)`` used by (Te)."""

    body: tuple[Atom, ...]
    head: tuple[Atom, ...]
    existential_vars: tuple[Var, ...]


@dataclass(frozen=True)
class AtomLabel:
    atom: Atom


@dataclass(frozen=True)
class ConjLabel:
    """Ground conjunction; duplicates are meaningful and order is kept."""

    atoms: tuple[Atom, ...]


@dataclass(frozen=True)
class CQLabel:
    cq: BooleanCQ


@dataclass(frozen=True)
class RuleLabel:
    rule: Union[Rule, SkolemRule, TautRule]


Label = Union[AtomLabel, ConjLabel, CQLabel, RuleLabel]


def label_key(label: Label):
    if isinstance(label, AtomLabel):
        return (0, atom_key(label.atom))
    if isinstance(label, ConjLabel):
        return (1,) + tuple(atom_key(a) for a in label.atoms)
    if isinstance(label, CQLabel):
        return ((2,) + tuple(atom_key(a) for a in label.cq.atoms)
                + tuple(sorted(v.name for v in label.cq.existential_vars)))
    rule = label.rule
    if isinstance(rule, SkolemRule):
        return (3, 0, rule.index)
    if isinstance(rule, Rule):
        return (3, 1, tuple(atom_key(a) for a in rule.body + rule.head))
    return (3, 2, tuple(atom_key(a) for a in rule.body + rule.head))


def format_label(label: Label) -> str:
    if isinstance(label, AtomLabel):
        return format_atom(label.atom)
    if isinstance(label, ConjLabel):
        return ", ".join(format_atom(a) for a in label.atoms)
    if isinstance(label, CQLabel):
        cq = label.cq
        atoms = ", ".join(format_atom(a) for a in cq.atoms)
        if cq.existential_vars:
            names = ", ".join(v.name for v in cq.existential_vars)
            return f"exists {names}. {atoms}"
        return atoms
    rule = label.rule
    body = ", ".join(format_atom(a) for a in rule.body)
    head = ", ".join(format_atom(a) for a in rule.head)
    evars = getattr(rule, "existential_vars", ())
    if evars:
        names = ", ".join(v.name for v in evars)
        return f"{body} -> exists {names}. {head}"
    return f"{body} -> {head}"


# ---------------------------------------------------------------------------
# The hypergraph
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProofEdge:
    premises: tuple[int, ...]
    conclusion: int
    schema: Schema


@dataclass
class ProofGraph:
    vertices: dict[int, Label]
    edges: list[ProofEdge]

    def incoming(self) -> dict[int, list[ProofEdge]]:
        inc: dict[int, list[ProofEdge]] = {v: [] for v in self.vertices}
        for e in self.edges:
            inc[e.conclusion].append(e)
        return inc

    def premise_occurrences(self) -> dict[int, int]:
        used: dict[int, int] = {v: 0 for v in self.vertices}
        for e in self.edges:
            for p in e.premises:
                used[p] += 1
        return used

    def sinks(self) -> list[int]:
        used = self.premise_occurrences()
        return sorted(v for v, n in used.items() if n == 0)

    def sink(self) -> int:
        sinks = self.sinks()
        if len(sinks) != 1:
            raise ValueError(f"expected exactly one sink, found {len(sinks)}")
        return sinks[0]

    def leaves(self) -> list[int]:
        inc = self.incoming()
        return sorted(v for v, es in inc.items() if not es)

    def sink_label(self) -> Label:
        return self.vertices[self.sink()]

    def topological_order(self) -> list[int]:
        """Vertices ordered premises before conclusions; raises on cycles."""
        inc = self.incoming()
        order: list[int] = []
        state: dict[int, int] = {}

        def rec(v: int):
            s = state.get(v, 0)
            if s == 1:
                raise ValueError("cycle detected")
            if s == 2:
                return
            state[v] = 1
            for e in inc[v]:
                for p in e.premises:
                    rec(p)
            state[v] = 2
            order.append(v)

        for v in sorted(self.vertices):
            rec(v)
        return order

    def is_acyclic(self) -> bool:
        try:
            self.topological_order()
            return True
        except ValueError:
            return False

    def deriver(self) -> str:
        if any(e.schema in CQ_SCHEMAS for e in self.edges):
            return "cq"
        return "sk"

    def relabel(self, mapping) -> "ProofGraph":
        return ProofGraph({v: mapping(lab) for v, lab in self.vertices.items()},
                          list(self.edges))


class ProofBuilder:
    def __init__(self):
        self._vertices: dict[int, Label] = {}
        self._by_label: dict[Label, int] = {}
        self._edges: list[ProofEdge] = []
        self._next = 0

    def add_vertex(self, label: Label) -> int:
        vid = self._next
        self._next += 1
        self._vertices[vid] = label
        return vid

    def vertex_for(self, label: Label) -> int:
        """Shared vertex per label (for subproof-style graphs)."""
        if label not in self._by_label:
            self._by_label[label] = self.add_vertex(label)
        return self._by_label[label]

    def has_label(self, label: Label) -> bool:
        return label in self._by_label

    def add_edge(self, premises: Iterable[int], conclusion: int,
                 schema: Schema) -> None:
        self._edges.append(ProofEdge(tuple(premises), conclusion, schema))

    def build(self) -> ProofGraph:
        return ProofGraph(dict(self._vertices), list(self._edges))


# ---------------------------------------------------------------------------
# Measures
# ---------------------------------------------------------------------------

def proof_size(p: ProofGraph) -> int:
    return len(p.vertices)


def tree_size(p: ProofGraph) -> int:
    """Size of the tree unraveling: shared premises count once per use."""
    inc = p.incoming()
    memo: dict[int, int] = {}

    def mt(v: int) -> int:
        if v in memo:
            return memo[v]
        es = inc[v]
        if not es:
            memo[v] = 1
            return 1
        if len(es) > 1:
            raise ValueError("tree size needs at most one incoming edge "
                             "per vertex")
        memo[v] = 1 + sum(mt(q) for q in es[0].premises)
        return memo[v]

    return mt(p.sink())


def ground_terms_of_label(label: Label) -> set[Term]:
    """Ground terms, nested subterms included; rule labels contribute none."""
    if isinstance(label, RuleLabel):
        return set()
    if isinstance(label, AtomLabel):
        atoms: Iterable[Atom] = [label.atom]
    elif isinstance(label, ConjLabel):
        atoms = label.atoms
    else:
        atoms = label.cq.atoms
    out: set[Term] = set()
    for a in atoms:
        for t in atom_terms(a):
            for s in subterms(t):
                if term_is_ground(s):
                    out.add(s)
    return out


def domain_size(p: ProofGraph) -> int:
    terms: set[Term] = set()
    for label in p.vertices.values():
        terms |= ground_terms_of_label(label)
    return len(terms)


def measure(p: ProofGraph, m: Measure) -> MeasureValue:
    if m is Measure.DOMAIN_SIZE and p.deriver() == "cq":
        raise ValueError("domain size is not defined for query-level proofs")
    if m is Measure.SIZE:
        return MeasureValue(m, proof_size(p))
    if m is Measure.TREE_SIZE:
        return MeasureValue(m, tree_size(p))
    return MeasureValue(m, domain_size(p))


# ---------------------------------------------------------------------------
# Structural operations
# ---------------------------------------------------------------------------

def tree_unravel(p: ProofGraph) -> ProofGraph:
    """Duplicate shared subproofs so the result is a tree."""
    inc = p.incoming()
    builder = ProofBuilder()

    def copy(v: int) -> int:
        nid = builder.add_vertex(p.vertices[v])
        es = inc[v]
        if es:
            if len(es) > 1:
                raise ValueError("unraveling needs at most one incoming edge "
                                 "per vertex")
            e = es[0]
            builder.add_edge(tuple(copy(q) for q in e.premises), nid, e.schema)
        return nid

    copy(p.sink())
    return builder.build()


def sub_derivation(p: ProofGraph, vid: int) -> ProofGraph:
    """The subgraph of everything feeding into ``vid`` (ids preserved)."""
    inc = p.incoming()
    keep: set[int] = set()
    edges: list[ProofEdge] = []
    stack = [vid]
    while stack:
        v = stack.pop()
        if v in keep:
            continue
        keep.add(v)
        for e in inc[v]:
            edges.append(e)
            stack.extend(e.premises)
    return ProofGraph({v: p.vertices[v] for v in keep}, edges)


def is_subproof(s: ProofGraph, h: ProofGraph) -> bool:
    """Subgraph of ``h`` (shared ids), itself a proof, leaves among h's."""
    for v, lab in s.vertices.items():
        if h.vertices.get(v) != lab:
            return False
    h_edges = set(h.edges)
    if any(e not in h_edges for e in s.edges):
        return False
    ok, _ = check_proof_shape(s)
    if not ok:
        return False
    return set(s.leaves()) <= set(h.leaves())


def homomorphism(h1: ProofGraph, h2: ProofGraph) -> Optional[dict[int, int]]:
    """Label- and edge-preserving vertex map from h1 into h2, if any."""
    by_label: dict[Label, list[int]] = {}
    for v, lab in h2.vertices.items():
        by_label.setdefault(lab, []).append(v)
    for vs in by_label.values():
        vs.sort()
    candidates = {v: by_label.get(lab, []) for v, lab in h1.vertices.items()}
    if any(not c for c in candidates.values()):
        return None
    order = sorted(h1.vertices, key=lambda v: (len(candidates[v]), v))
    h2_edges = set(h2.edges)
    edges_by_vertex: dict[int, list[ProofEdge]] = {v: [] for v in h1.vertices}
    for e in h1.edges:
        for v in set(e.premises) | {e.conclusion}:
            edges_by_vertex[v].append(e)

    assignment: dict[int, int] = {}

    def consistent(v: int) -> bool:
        for e in edges_by_vertex[v]:
            ends = list(e.premises) + [e.conclusion]
            if all(u in assignment for u in ends):
                mapped = ProofEdge(tuple(assignment[u] for u in e.premises),
                                   assignment[e.conclusion], e.schema)
                if mapped not in h2_edges:
                    return False
        return True

    def search(i: int) -> bool:
        if i == len(order):
            return True
        v = order[i]
        for cand in candidates[v]:
            assignment[v] = cand
            if consistent(v) and search(i + 1):
                return True
            del assignment[v]
        return False

    return dict(assignment) if search(0) else None


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def check_proof_shape(p: ProofGraph) -> tuple[bool, list[str]]:
    """The deriver-independent proof conditions."""
    problems: list[str] = []
    if not p.vertices:
        return False, ["proof has no vertices"]
    sinks = p.sinks()
    if len(sinks) != 1:
        problems.append(f"expected exactly one sink, found {len(sinks)}")
    inc = p.incoming()
    for v, es in sorted(inc.items()):
        if len(es) > 1:
            problems.append(f"vertex {v} has {len(es)} incoming hyperedges")
    if not p.is_acyclic():
        problems.append("acyclicity violated")
    for e in p.edges:
        ends = set(e.premises) | {e.conclusion}
        missing = [v for v in ends if v not in p.vertices]
        if missing:
            problems.append(f"edge references unknown vertices {missing}")
    return not problems, problems


def label_matches_goal(label: Label, goal: BooleanCQ) -> bool:
    if isinstance(label, CQLabel):
        return cq_equivalent(label.cq, goal)
    if isinstance(label, AtomLabel):
        return (not goal.existential_vars and len(goal.atoms) == 1
                and goal.atoms[0] == label.atom)
    if isinstance(label, ConjLabel):
        return (not goal.existential_vars
                and sorted(label.atoms, key=atom_key)
                == sorted(goal.atoms, key=atom_key))
    return False


def validate_proof(p: ProofGraph, kb: KnowledgeBase, goal: BooleanCQ,
                   deriver: str = "sk") -> tuple[bool, list[str]]:
    """Full admissibility check against the KB and the goal query."""
    from . import deriver_cq, deriver_sk

    ok, problems = check_proof_shape(p)
    if not ok:
        return False, problems

    allowed = SK_SCHEMAS if deriver == "sk" else CQ_SCHEMAS
    for e in p.edges:
        if e.schema not in allowed:
            problems.append(f"schema {e.schema.value} not available in the "
                            f"{deriver} deriver")
    if problems:
        return False, problems

    if not label_matches_goal(p.vertices[p.sink()], goal):
        problems.append("sink label does not match the goal query")

    if deriver == "sk":
        leaf_ok = deriver_sk.leaf_labels(kb)
        checker = deriver_sk.check_edge_labels
    else:
        leaf_ok = deriver_cq.leaf_labels(kb)
        checker = deriver_cq.check_edge_labels
    for v in p.leaves():
        if p.vertices[v] not in leaf_ok:
            problems.append(f"leaf {v} ({format_label(p.vertices[v])}) is not "
                            "a fact or rule of the knowledge base")
    for e in p.edges:
        premises = tuple(p.vertices[q] for q in e.premises)
        conclusion = p.vertices[e.conclusion]
        err = checker(e.schema, premises, conclusion, kb)
        if err is not None:
            problems.append(
                f"edge -> {format_label(conclusion)} [{e.schema.value}]: {err}")
    return not problems, problems


def inference_steps(p: ProofGraph) -> list[tuple[Schema, tuple[int, ...],
                                                 tuple[int, ...]]]:
    """Edges grouped by (premises, schema), in topological order.

    Two conclusions drawn from the same premises by the same schema count as
    one displayed inference, which is how the proofs are drawn.
    """
    order = {v: i for i, v in enumerate(p.topological_order())}
    groups: dict[tuple, list[int]] = {}
    for e in p.edges:
        groups.setdefault((e.schema, e.premises), []).append(e.conclusion)
    out = []
    for (schema, premises), conclusions in groups.items():
        out.append((schema, premises, tuple(sorted(conclusions,
                                                   key=order.get))))
    out.sort(key=lambda s: min(order[c] for c in s[2]))
    return out


# ---------------------------------------------------------------------------
# JSON and DOT export
# ---------------------------------------------------------------------------

SCHEMA_VERSION = 1


def _label_to_json(label: Label) -> dict:
    if isinstance(label, AtomLabel):
        return {"kind": "atom", "atom": format_atom(label.atom)}
    if isinstance(label, ConjLabel):
        return {"kind": "conjunction",
                "atoms": [format_atom(a) for a in label.atoms]}
    if isinstance(label, CQLabel):
        return {"kind": "cq",
                "atoms": [format_atom(a) for a in label.cq.atoms],
                "evars": [v.name for v in label.cq.existential_vars]}
    rule = label.rule
    base = {"body": [format_atom(a) for a in rule.body],
            "head": [format_atom(a) for a in rule.head]}
    if isinstance(rule, SkolemRule):
        return {"kind": "skolem_rule", "index": rule.index,
                "form": rule.normal_form.value, "fn": rule.fn, **base}
    if isinstance(rule, TautRule):
        return {"kind": "taut_rule",
                "evars": [v.name for v in rule.existential_vars], **base}
    return {"kind": "rule", "form": rule.normal_form.value,
            "evars": [v.name for v in rule.existential_vars], **base}


def _label_from_json(obj: dict) -> Label:
    from .parser import parse_atom_text

    kind = obj["kind"]
    if kind == "atom":
        return AtomLabel(parse_atom_text(obj["atom"]))
    if kind == "conjunction":
        return ConjLabel(tuple(parse_atom_text(a) for a in obj["atoms"]))
    if kind == "cq":
        atoms = tuple(parse_atom_text(a) for a in obj["atoms"])
        return CQLabel(BooleanCQ(atoms, tuple(Var(n) for n in obj["evars"])))
    body = tuple(parse_atom_text(a) for a in obj["body"])
    head = tuple(parse_atom_text(a) for a in obj["head"])
    if kind == "skolem_rule":
        return RuleLabel(SkolemRule(body, head, NormalForm(obj["form"]),
                                    obj["index"], obj.get("fn")))
    if kind == "taut_rule":
        return RuleLabel(TautRule(body, head,
                                  tuple(Var(n) for n in obj["evars"])))
    return RuleLabel(Rule(body, head, tuple(Var(n) for n in obj["evars"]),
                          NormalForm(obj["form"])))


def proof_to_json(p: ProofGraph, goal: Optional[BooleanCQ] = None) -> str:
    vertices = [{"id": v, "label": format_label(lab), **_label_to_json(lab)}
                for v, lab in sorted(p.vertices.items())]
    edges = [{"premises": list(e.premises), "conclusion": e.conclusion,
              "schema": e.schema.value}
             for e in sorted(p.edges,
                             key=lambda e: (e.conclusion, e.premises))]
    doc = {"schema_version": SCHEMA_VERSION, "deriver": p.deriver(),
           "vertices": vertices, "edges": edges}
    if goal is not None:
        doc["goal"] = _label_to_json(CQLabel(goal))
    return json.dumps(doc, indent=2, sort_keys=True)


def proof_from_json(text: str) -> tuple[ProofGraph, Optional[BooleanCQ]]:
    doc = json.loads(text)
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ValueError("unsupported proof schema version")
    vertices = {v["id"]: _label_from_json(v) for v in doc["vertices"]}
    edges = [ProofEdge(tuple(e["premises"]), e["conclusion"],
                       Schema(e["schema"])) for e in doc["edges"]]
    goal = None
    if "goal" in doc:
        lab = _label_from_json(doc["goal"])
        assert isinstance(lab, CQLabel)
        goal = lab.cq
    return ProofGraph(vertices, edges), goal


def _dot_quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def proof_to_dot(p: ProofGraph) -> str:
    """Rule vertices gray and rounded, the goal vertex filled."""
    lines = ["digraph proof {", "  rankdir=BT;",
             '  node [shape=box, style=rounded];']
    sink = p.sink()
    for v, lab in sorted(p.vertices.items()):
        attrs = [f"label={_dot_quote(format_label(lab))}"]
        if isinstance(lab, RuleLabel):
            attrs.append('color=gray')
            attrs.append('fontcolor=gray')
        if v == sink:
            attrs.append('style="rounded,filled"')
            attrs.append('fillcolor=lightgray')
        lines.append(f"  v{v} [{', '.join(attrs)}];")
    for i, (schema, premises, conclusions) in enumerate(inference_steps(p)):
        j = f"e{i}"
        lines.append(f"  {j} [shape=point, width=0.05, "
                     f"xlabel={_dot_quote('(' + schema.value + ')')}];")
        for q in premises:
            lines.append(f"  v{q} -> {j} [arrowhead=none];")
        for c in conclusions:
            lines.append(f"  {j} -> v{c};")
    lines.append("}")
    return "\n".join(lines) + "\n"
