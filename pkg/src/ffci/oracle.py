"""Ground-truth answers: oracle CI, MAG construction and FI-Markov equivalence."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Iterable

from .graph import (
    AugmentedDag, ContractViolation, GraphError, Mark, MixedGraph, VertexKind,
)
from .separation import ancestors, d_separated


@dataclass(frozen=True)
class CiQuery:
    """``lhs`` is a set of observed ids or a single indicator id; ``rhs`` and ``cond`` are observed ids."""

    lhs: frozenset[int]
    rhs: frozenset[int]
    cond: frozenset[int] = frozenset()

    @classmethod
    def of(cls, lhs: int | Iterable[int], rhs: int | Iterable[int], cond: Iterable[int] = ()) -> "CiQuery":
        as_fs = lambda x: frozenset([x]) if isinstance(x, int) else frozenset(x)
        return cls(as_fs(lhs), as_fs(rhs), frozenset(cond))

    def validate(self, g: MixedGraph) -> None:
        if not self.lhs or not self.rhs:
            raise GraphError("empty side in CI query")
        if self.lhs & self.rhs or self.lhs & self.cond or self.rhs & self.cond:
            raise GraphError("CI query sets must be disjoint")
        for x in self.lhs | self.rhs | self.cond:
            if x not in g:
                raise GraphError(f"unknown vertex id {x}")
        kinds = {g.kind(x) for x in self.lhs}
        if VertexKind.INDICATOR in kinds and len(self.lhs) != 1:
            raise GraphError("an indicator query takes a single indicator on the left")
        allowed_lhs = {VertexKind.OBSERVED, VertexKind.INDICATOR}
        if not kinds <= allowed_lhs:
            raise GraphError("left side must be observed vertices or one indicator")
        for x in self.rhs | self.cond:
            if g.kind(x) != VertexKind.OBSERVED:
                raise GraphError(f"{g.name(x)} is not observed")


def oracle_ci(g: AugmentedDag, q: CiQuery) -> bool:
    """True iff the query holds as an independence given selection.

    Every selection vertex is conditioned (samples are recorded only when
    selected) and so is every indicator outside the query (constant within a
    pooled pair of regimes). The intact augmented graph is used for every
    regime kind.
    """
    q.validate(g)
    z = set(q.cond) | set(g.ids(VertexKind.SELECTION))
    z |= set(g.ids(VertexKind.INDICATOR)) - q.lhs
    return d_separated(g, q.lhs, q.rhs, z)


def _observed_set(g: MixedGraph, include_indicators: bool) -> list[int]:
    kinds = (VertexKind.OBSERVED, VertexKind.INDICATOR) if include_indicators else (VertexKind.OBSERVED,)
    return g.ids(*kinds)


def mag_of(g: MixedGraph, include_indicators: bool = False) -> MixedGraph:
    """Marginalize latents and condition on selection.

    Two kept vertices are adjacent iff an inducing path joins them, which is
    decided by d-connection given the kept ancestors of the pair and the
    selection set. The mark at ``a`` is a tail iff ``a`` is an ancestor of
    the other endpoint or of the selection set. Indicators that are not kept
    are treated as conditioned.
    """
    keep = _observed_set(g, include_indicators)
    sel = set(g.ids(VertexKind.SELECTION))
    if not include_indicators:
        sel |= set(g.ids(VertexKind.INDICATOR))
    keep_set = set(keep)
    mag = MixedGraph([g.vertex(x) for x in keep])
    an_sel = ancestors(g, sel) if sel else set()
    for a, b in combinations(keep, 2):
        an = ancestors(g, {a, b} | sel)
        z = ((an & keep_set) - {a, b}) | sel
        if d_separated(g, a, b, z):
            continue
        an_b, an_a = ancestors(g, b), ancestors(g, a)
        mark_a = Mark.TAIL if a in an_b or a in an_sel else Mark.ARROW
        mark_b = Mark.TAIL if b in an_a or b in an_sel else Mark.ARROW
        mag.add_edge(a, b, mark_a, mark_b)
    return mag


def v_structures(g: MixedGraph) -> set[tuple[int, int, int]]:
    """Unshielded colliders as ``(a, c, b)`` with ``a < b``."""
    out = set()
    for c in g.ids():
        into = sorted(x for x in g.neighbors(c) if g.mark_at(c, x) == Mark.ARROW)
        for a, b in combinations(into, 2):
            if not g.adjacent(a, b):
                out.add((a, c, b))
    return out


def discriminating_paths(g: MixedGraph) -> list[tuple[int, ...]]:
    """Every path ``(x, q1..qk, v, y)``, k >= 1, discriminating for ``v``.

    ``x`` and ``y`` are non-adjacent and each ``q`` is a collider on the path
    and a parent of ``y``.
    """
    out = []
    for y in g.ids():
        pa_y = g.parents(y)
        for v in sorted(g.neighbors(y)):
            # Walk backwards from v: (path reversed: v, q1, q2, ...).
            def grow(rev: list[int]) -> None:
                last = rev[-1]
                for nxt in sorted(g.neighbors(last)):
                    if nxt in rev or nxt == y:
                        continue
                    # ``last`` is a q and must be a collider between nxt and rev[-2].
                    if g.mark_at(last, nxt) != Mark.ARROW or g.mark_at(last, rev[-2]) != Mark.ARROW:
                        continue
                    if not g.adjacent(nxt, y):
                        out.append(tuple(reversed(rev + [nxt])) + (y,))
                    if nxt in pa_y:
                        grow(rev + [nxt])

            for q in sorted(pa_y & g.neighbors(v)):
                grow([v, q])
    return sorted(set(out))


def _is_collider(g: MixedGraph, path: tuple[int, ...], k: int) -> bool:
    return g.mark_at(path[k], path[k - 1]) == Mark.ARROW and g.mark_at(path[k], path[k + 1]) == Mark.ARROW


def _is_discriminating(g: MixedGraph, path: tuple[int, ...]) -> bool:
    if len(path) < 4 or any(not g.adjacent(u, v) for u, v in zip(path, path[1:])):
        return False
    x, y = path[0], path[-1]
    if g.adjacent(x, y):
        return False
    return all(_is_collider(g, path, k) and g.is_directed(path[k], y) for k in range(1, len(path) - 2))


@dataclass(frozen=True)
class EquivalenceCertificate:
    verdict: bool
    witness: str | None = None

    def __post_init__(self) -> None:
        if not self.verdict and self.witness is None:
            raise ValueError("a negative verdict needs a witness")

    def __bool__(self) -> bool:
        return self.verdict


@dataclass(frozen=True)
class MagFeatures:
    """Precomputed equivalence features of a MAG with canonical (name-sorted) ids."""

    mag: MixedGraph
    skeleton: frozenset[tuple[int, int]]
    colliders: frozenset[tuple[int, int, int]]
    discriminating: dict[tuple[int, ...], bool]

    @classmethod
    def of(cls, m: MixedGraph) -> "MagFeatures":
        m = _renamed(m)
        skel = frozenset((e.u, e.v) for e in m.edges)
        disc = {p: _is_collider(m, p, len(p) - 2) for p in discriminating_paths(m)}
        return cls(m, skel, frozenset(v_structures(m)), disc)

    def collider_on(self, path: tuple[int, ...]) -> bool | None:
        """Collider status at the second-to-last vertex if ``path`` is discriminating here."""
        if path in self.discriminating:
            return self.discriminating[path]
        return None


def markov_difference(m1: MixedGraph | MagFeatures, m2: MixedGraph | MagFeatures) -> str | None:
    """First difference between two MAGs on a shared vertex set, or ``None`` if Markov equivalent."""
    f1 = m1 if isinstance(m1, MagFeatures) else MagFeatures.of(m1)
    f2 = m2 if isinstance(m2, MagFeatures) else MagFeatures.of(m2)
    name = f1.mag.name
    if [x.name for x in f1.mag.vertices] != [x.name for x in f2.mag.vertices]:
        raise ContractViolation("MAGs must share the same vertex names")
    if f1.skeleton != f2.skeleton:
        a, b = min(f1.skeleton ^ f2.skeleton)
        return f"skeleton: {name(a)}-{name(b)}"
    for t in sorted(f1.colliders ^ f2.colliders):
        return f"v-structure: {name(t[0])}->{name(t[1])}<-{name(t[2])}"
    for f, h in ((f1, f2), (f2, f1)):
        for p, col in sorted(f.discriminating.items()):
            other = h.collider_on(p)
            if other is not None and other != col:
                return "discriminating-path collider: " + ",".join(name(x) for x in p)
    return None


@dataclass(frozen=True)
class FiSignature:
    """What one augmented DAG contributes to an FI-equivalence comparison."""

    features: MagFeatures
    targets: tuple[tuple[str, ...], ...]
    observed: tuple[str, ...]
    marks: dict[tuple[int, int], tuple[Mark, Mark]]

    @classmethod
    def of(cls, g: AugmentedDag) -> "FiSignature":
        f = MagFeatures.of(mag_of(g, include_indicators=True))
        m = f.mag
        kept = {m.id_of(g.name(x)) for t in g.targets for x in t}
        marks = {(e.u, e.v): (e.mark_u, e.mark_v) for e in m.edges if e.u in kept and e.v in kept}
        targets = tuple(tuple(sorted(g.name(x) for x in t)) for t in g.targets)
        observed = tuple(sorted(g.name(x) for x in g.observed()))
        return cls(f, targets, observed, marks)


def compare_signatures(s1: FiSignature, s2: FiSignature) -> EquivalenceCertificate:
    if s1.targets != s2.targets:
        raise ContractViolation("augmented DAGs must share the same target list")
    if s1.observed != s2.observed:
        raise ContractViolation("augmented DAGs must share the same observed variables")
    diff = markov_difference(s1.features, s2.features)
    if diff is not None:
        return EquivalenceCertificate(False, diff)
    for pair in sorted(s1.marks):
        if s1.marks[pair] != s2.marks.get(pair):
            name = s1.features.mag.name
            return EquivalenceCertificate(False, f"intervened mark: {name(pair[0])}-{name(pair[1])}")
    return EquivalenceCertificate(True)


def fi_markov_equivalent(g1: AugmentedDag, g2: AugmentedDag) -> EquivalenceCertificate:
    """Compare the indicator-augmented MAGs of two augmented DAGs.

    Equivalent iff the MAGs over observed and indicator vertices are Markov
    equivalent and every edge between two intervened variables carries the
    same marks. For many comparisons build each
    :class:`FiSignature` once and call :func:`compare_signatures`.
    """
    return compare_signatures(FiSignature.of(g1), FiSignature.of(g2))


def _renamed(src: MixedGraph) -> MixedGraph:
    """Re-key a graph so that vertex ids follow sorted (kind, name)."""
    order = sorted(src.vertices, key=lambda x: (x.kind.value, x.name))
    idmap = {x.id: k for k, x in enumerate(order)}
    out = MixedGraph()
    for x in order:
        out.add_vertex(x.kind, x.name, vid=idmap[x.id])
    for e in src.edges:
        out.add_edge(idmap[e.u], idmap[e.v], e.mark_at(e.u), e.mark_at(e.v))
    return out
