"""Backtracking matcher: homomorphisms from atom conjunctions into atom sets.

Used for rule application, query answering, and inference checking.  The
search picks the most constrained pattern atom first and enumerates
candidates in lexicographic order, so results come out in a fixed order.
"""

from __future__ import annotations

from typing import Iterator, Mapping, Optional, Sequence

from .kb import (Atom, ConceptAtom, RoleAtom, SkolemTerm, Term, Var,
                 atom_key, atom_pred)


class AtomIndex:
    """Per-predicate buckets, each sorted for deterministic enumeration."""

    def __init__(self, atoms=()):
        self.buckets: dict[tuple, list[Atom]] = {}
        self._dirty: set[tuple] = set()
        self.atoms: set[Atom] = set()
        for a in atoms:
            self.add(a)

    def add(self, atom: Atom) -> bool:
        if atom in self.atoms:
            return False
        self.atoms.add(atom)
        key = atom_pred(atom)
        self.buckets.setdefault(key, []).append(atom)
        self._dirty.add(key)
        return True

    def bucket(self, key: tuple) -> Sequence[Atom]:
        if key in self._dirty:
            self.buckets[key].sort(key=atom_key)
            self._dirty.discard(key)
        return self.buckets.get(key, ())

    def __contains__(self, atom: Atom) -> bool:
        return atom in self.atoms

    def __len__(self) -> int:
        return len(self.atoms)


def unify_term(pattern: Term, ground: Term,
               subst: dict[Var, Term]) -> Optional[dict[Var, Term]]:
    """Extend subst so that pattern maps onto ground; None if impossible."""
    if isinstance(pattern, Var):
        bound = subst.get(pattern)
        if bound is None:
            subst = dict(subst)
            subst[pattern] = ground
            return subst
        return subst if bound == ground else None
    if isinstance(pattern, SkolemTerm):
        if not isinstance(ground, SkolemTerm) or pattern.fn != ground.fn:
            return None
        return unify_term(pattern.arg, ground.arg, subst)
    return subst if pattern == ground else None


def unify_atom(pattern: Atom, ground: Atom,
               subst: dict[Var, Term]) -> Optional[dict[Var, Term]]:
    if atom_pred(pattern) != atom_pred(ground):
        return None
    if isinstance(pattern, ConceptAtom):
        return unify_term(pattern.term, ground.term, subst)
    if isinstance(pattern, RoleAtom):
        s = unify_term(pattern.subj, ground.subj, subst)
        if s is None:
            return None
        return unify_term(pattern.obj, ground.obj, s)
    s = unify_term(pattern.lhs, ground.lhs, subst)
    if s is None:
        return None
    return unify_term(pattern.rhs, ground.rhs, s)


def _candidates(pattern: Atom, index: AtomIndex,
                subst: Mapping[Var, Term]) -> list[tuple[Atom, dict]]:
    out = []
    for ground in index.bucket(atom_pred(pattern)):
        ext = unify_atom(pattern, ground, dict(subst))
        if ext is not None:
            out.append((ground, ext))
    return out


def match_conjunction(patterns: Sequence[Atom], index: AtomIndex,
                      subst: Optional[Mapping[Var, Term]] = None,
                      ) -> Iterator[dict[Var, Term]]:
    """All homomorphisms of the pattern conjunction into the indexed atoms."""
    base = dict(subst) if subst else {}

    def extend(remaining: list[Atom], current: dict[Var, Term]
               ) -> Iterator[dict[Var, Term]]:
        if not remaining:
            yield current
            return
        # most constrained first: fewest candidates under current bindings
        scored = []
        for i, p in enumerate(remaining):
            cands = _candidates(p, index, current)
            scored.append((len(cands), i, p, cands))
        _, idx, _, cands = min(scored, key=lambda s: (s[0], s[1]))
        rest = remaining[:idx] + remaining[idx + 1:]
        for _, ext in cands:
            yield from extend(rest, ext)

    yield from extend(list(patterns), base)


def match_positionally(patterns: Sequence[Atom], grounds: Sequence[Atom],
                       subst: Optional[dict[Var, Term]] = None
                       ) -> Optional[dict[Var, Term]]:
    """One substitution mapping pattern i onto ground i, or None."""
    if len(patterns) != len(grounds):
        return None
    current = dict(subst) if subst else {}
    for p, g in zip(patterns, grounds):
        nxt = unify_atom(p, g, current)
        if nxt is None:
            return None
        current = nxt
    return current
