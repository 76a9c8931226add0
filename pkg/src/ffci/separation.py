"""Ancestry, d-/m-separation and inducing-path search."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from .graph import AugmentedDag, GraphError, InterventionKind, Mark, MixedGraph, VertexKind


def _as_set(x: int | Iterable[int]) -> set[int]:
    return {x} if isinstance(x, int) else set(x)


def ancestors(g: MixedGraph, v: int | Iterable[int]) -> set[int]:
    """Reflexive ancestors of a vertex or vertex set, following directed edges backwards."""
    seeds = _as_set(v)
    for x in seeds:
        if x not in g:
            raise GraphError(f"unknown vertex id {x}")
    seen = set(seeds)
    stack = list(seeds)
    while stack:
        x = stack.pop()
        for p in g.parents(x):
            if p not in seen:
                seen.add(p)
                stack.append(p)
    return seen


def anteriors(g: MixedGraph, v: int | Iterable[int]) -> set[int]:
    """Vertices reaching ``v`` along edges that are directed towards ``v`` or undirected."""
    seen = set(_as_set(v))
    stack = list(seen)
    while stack:
        x = stack.pop()
        for p in g.parents(x) | g.undirected_neighbors(x):
            if p not in seen:
                seen.add(p)
                stack.append(p)
    return seen


def descendants(g: MixedGraph, v: int | Iterable[int]) -> set[int]:
    seen = set(_as_set(v))
    stack = list(seen)
    while stack:
        x = stack.pop()
        for c in g.children(x):
            if c not in seen:
                seen.add(c)
                stack.append(c)
    return seen


def _check_query(g: MixedGraph, a: set[int], b: set[int], z: set[int]) -> None:
    for x in a | b | z:
        if x not in g:
            raise GraphError(f"unknown vertex id {x}")
    if a & b or a & z or b & z:
        raise GraphError("separation query sets must be pairwise disjoint")


def _connected(g: MixedGraph, a: set[int], b: set[int], z: set[int]) -> bool:
    """Reachability over (vertex, arrived-with-arrowhead) states.

    A vertex is a collider for a pair of consecutive edges when both carry an
    arrowhead at it; colliders pass iff they are ancestors of ``z``, every
    other vertex passes iff it is not in ``z``.
    """
    an_z = ancestors(g, z) if z else set()
    frontier: list[tuple[int, bool]] = []
    seen: set[tuple[int, bool]] = set()
    for s in a:
        for w in g.neighbors(s):
            st = (w, g.mark_at(w, s) == Mark.ARROW)
            if st not in seen:
                seen.add(st)
                frontier.append(st)
    while frontier:
        v, head_in = frontier.pop()
        if v in b:
            return True
        if v in a:
            continue
        for w in g.neighbors(v):
            collider = head_in and g.mark_at(v, w) == Mark.ARROW
            if collider and v not in an_z:
                continue
            if not collider and v in z:
                continue
            st = (w, g.mark_at(w, v) == Mark.ARROW)
            if st not in seen:
                seen.add(st)
                frontier.append(st)
    return False


def d_separated(g: MixedGraph, a: int | Iterable[int], b: int | Iterable[int],
                z: int | Iterable[int] = ()) -> bool:
    """True iff every path between ``a`` and ``b`` in the DAG ``g`` is blocked by ``z``."""
    a, b, z = _as_set(a), _as_set(b), _as_set(z)
    _check_query(g, a, b, z)
    return not _connected(g, a, b, z)


def m_separated(g: MixedGraph, a: int | Iterable[int], b: int | Iterable[int],
                z: int | Iterable[int] = ()) -> bool:
    """m-separation over directed, bidirected and undirected edges.

    A collider is a vertex where two arrowheads meet; it is active iff it has
    a descendant in ``z`` (equivalently, is an ancestor of a member of ``z``).
    The traversal follows walks, which agree with simple paths on ancestral
    graphs.
    """
    a, b, z = _as_set(a), _as_set(b), _as_set(z)
    _check_query(g, a, b, z)
    return not _connected(g, a, b, z)


@dataclass(frozen=True)
class PathQuery:
    a: int
    b: int
    z: frozenset[int] = frozenset()

    def __post_init__(self) -> None:
        if self.a == self.b or self.a in self.z or self.b in self.z:
            raise GraphError("endpoints must be distinct and outside the conditioning set")


@dataclass(frozen=True)
class InducingPath:
    vertices: tuple[int, ...]
    start_mark: Mark
    end_mark: Mark


def _interior_ok(g: MixedGraph, prev: int, v: int, nxt: int, latent: set[int], allowed: set[int]) -> bool:
    collider = g.mark_at(v, prev) == Mark.ARROW and g.mark_at(v, nxt) == Mark.ARROW
    if collider:
        return v in allowed
    return v in latent


def is_inducing_path(g: MixedGraph, path: Iterable[int], latent: Iterable[int] | None = None,
                     selection: Iterable[int] | None = None) -> bool:
    """Check the inducing-path conditions on an explicit vertex sequence."""
    path = list(path)
    latent = set(g.ids(VertexKind.LATENT)) if latent is None else set(latent)
    selection = set(g.ids(VertexKind.SELECTION)) if selection is None else set(selection)
    if len(path) < 2 or len(set(path)) != len(path):
        return False
    if any(not g.adjacent(u, v) for u, v in zip(path, path[1:])):
        return False
    allowed = ancestors(g, {path[0], path[-1]} | selection)
    return all(
        _interior_ok(g, path[k - 1], path[k], path[k + 1], latent, allowed)
        for k in range(1, len(path) - 1)
    )


def inducing_paths(g: MixedGraph, i: int, j: int, latent: Iterable[int] | None = None,
                   selection: Iterable[int] | None = None, first_only: bool = False) -> list[InducingPath]:
    """All simple inducing paths between ``i`` and ``j`` relative to the latent and selection sets.

    Defaults take the latent and selection vertices of ``g``. Indicator and
    noise vertices never serve as interior vertices.
    """
    if i not in g or j not in g:
        raise GraphError("unknown endpoint")
    if i == j:
        raise GraphError("endpoints must differ")
    latent = set(g.ids(VertexKind.LATENT)) if latent is None else set(latent)
    selection = set(g.ids(VertexKind.SELECTION)) if selection is None else set(selection)
    allowed = ancestors(g, {i, j} | selection)
    barred = set(g.ids(VertexKind.INDICATOR, VertexKind.NOISE)) - {i, j}
    # An interior vertex must be latent or an allowed collider.
    usable = (latent | allowed) - barred
    out: list[InducingPath] = []
    path = [i]
    on_path = {i}

    def extend() -> bool:
        v = path[-1]
        for w in sorted(g.neighbors(v)):
            if w in on_path:
                continue
            if len(path) >= 2 and not _interior_ok(g, path[-2], v, w, latent, allowed):
                continue
            if w == j:
                seq = tuple(path + [j])
                out.append(InducingPath(seq, g.mark_at(i, seq[1]), g.mark_at(j, seq[-2])))
                if first_only:
                    return True
                continue
            if w not in usable:
                continue
            path.append(w)
            on_path.add(w)
            if extend():
                return True
            path.pop()
            on_path.discard(w)
        return False

    extend()
    return out


def mutilate(g: AugmentedDag, regime: int) -> AugmentedDag:
    """Graph for regime ``regime``; hard interventions cut incoming causal edges of the targets.

    Indicator and noise parents of a target are kept so the intervened value
    still has an exogenous source. Regime 0 and soft regimes return a copy.
    """
    if not 0 <= regime <= g.n_regimes:
        raise GraphError(f"regime {regime} out of range 0..{g.n_regimes}")
    out = g.copy()
    if regime == 0 or g.kinds[regime - 1] == InterventionKind.SOFT:
        return out
    for t in sorted(g.targets[regime - 1]):
        for p in sorted(g.parents(t)):
            if g.kind(p) not in (VertexKind.INDICATOR, VertexKind.NOISE):
                out.remove_edge(p, t)
    return out
