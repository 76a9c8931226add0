"""The F-FCI discovery procedure.

Stages, in order: skeleton search on observational data, CI-pattern capture
for every adjacent pair of intervened variables, table-driven orientation of
those pairs, Type-I refinement, and finishing with the FCI rules plus the two
indicator-invariance rules.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations
from typing import Iterable

import networkx as nx

from .citest import CiProvider, OracleProvider
from .graph import AugmentedDag, ContractViolation, Mark, MixedGraph, VertexKind
from .rules import TAILISH, RuleContext, apply_rules, rule0


@dataclass(frozen=True)
class CiTuple:
    """Dependence pattern of an intervened pair; ``True`` means dependent.

    Slots: (psi_i, X_j | C), (psi_i, X_j | X_i, C), (psi_j, X_i | C),
    (psi_j, X_i | X_j, C). ``witness`` holds, per slot, the first
    conditioning set that produced independence.
    """

    values: tuple[bool, bool, bool, bool]
    witness: tuple[tuple[str, ...] | None, ...] = (None, None, None, None)

    def __iter__(self):
        return iter(self.values)

    def label(self) -> str:
        return "(" + ",".join("d" if v else "i" for v in self.values) + ")"


class EdgeType(str, Enum):
    DIRECTED = "->"
    BIDIRECTED = "<->"
    PARTIAL = "o->"
    UNDIRECTED = "--"
    TAIL_SQUARE = "-[]"
    SQUARE_SQUARE = "[]-[]"
    NO_MATCH = "no-match"


NO_MATCH = EdgeType.NO_MATCH

D, I = True, False
ORIENTATION_TABLE = {
    (D, I, I, D): EdgeType.DIRECTED,
    (I, D, I, D): EdgeType.BIDIRECTED,
    (D, D, I, D): EdgeType.PARTIAL,
    (D, I, D, I): EdgeType.UNDIRECTED,
    (D, I, D, D): EdgeType.TAIL_SQUARE,
    (D, D, D, D): EdgeType.SQUARE_SQUARE,
}

# (mark at i, mark at j)
EDGE_MARKS = {
    EdgeType.DIRECTED: (Mark.TAIL, Mark.ARROW),
    EdgeType.BIDIRECTED: (Mark.ARROW, Mark.ARROW),
    EdgeType.PARTIAL: (Mark.CIRCLE, Mark.ARROW),
    EdgeType.UNDIRECTED: (Mark.TAIL, Mark.TAIL),
    EdgeType.TAIL_SQUARE: (Mark.TAIL, Mark.SQUARE),
    EdgeType.SQUARE_SQUARE: (Mark.SQUARE, Mark.SQUARE),
}


def orient_pair(t: CiTuple | tuple[bool, bool, bool, bool]) -> EdgeType:
    values = t.values if isinstance(t, CiTuple) else tuple(bool(v) for v in t)
    return ORIENTATION_TABLE.get(values, NO_MATCH)


@dataclass
class Options:
    skeleton_max_cond: int | None = None
    possible_dsep: bool = True
    pattern_max_cond: int = 3
    early_stop: bool = True
    refine: bool = True
    invariance_rules: bool = True


@dataclass
class DiscoveryState:
    provider: CiProvider
    graph: MixedGraph
    sepsets: dict[frozenset[int], frozenset[int]] = field(default_factory=dict)
    tuples: dict[tuple[int, int], CiTuple] = field(default_factory=dict)
    step2: dict[tuple[int, int], EdgeType] = field(default_factory=dict)
    frozen: set[tuple[int, int]] = field(default_factory=set)
    trace: list[dict] = field(default_factory=list)
    conflicts: list[dict] = field(default_factory=list)
    options: Options = field(default_factory=Options)

    def log(self, rec: dict) -> None:
        self.trace.append(rec)

    def name(self, x: int) -> str:
        return self.graph.name(x)

    def names(self, xs: Iterable[int]) -> list[str]:
        return [self.graph.name(x) for x in sorted(xs)]

    def regime(self, x: int) -> int | None:
        return self.provider.regime_of(self.name(x))

    def set_edge(self, i: int, j: int, mark_i: Mark, mark_j: Mark, triangle: bool = False) -> None:
        g = self.graph
        if i < j:
            g.set_edge(i, j, mark_i, mark_j, triangle)
        else:
            g.set_edge(j, i, mark_j, mark_i, triangle)


def _empty_pag(variables: list[str]) -> MixedGraph:
    g = MixedGraph()
    for k, v in enumerate(variables):
        g.add_vertex(VertexKind.OBSERVED, v, vid=k)
    return g


def _reset_circles(g: MixedGraph) -> None:
    for e in g.edges:
        g.set_edge(e.u, e.v, Mark.CIRCLE, Mark.CIRCLE)


def _possible_dsep(g: MixedGraph, a: int) -> set[int]:
    """Vertices reachable from ``a`` along paths whose interior vertices are colliders or in triangles."""
    out: set[int] = set()
    seen: set[tuple[int, int]] = set()
    stack = [(a, b) for b in sorted(g.neighbors(a))]
    while stack:
        prev, v = stack.pop()
        if (prev, v) in seen:
            continue
        seen.add((prev, v))
        out.add(v)
        for w in sorted(g.neighbors(v)):
            if w in (prev, a):
                continue
            collider = g.mark_at(v, prev) == Mark.ARROW and g.mark_at(v, w) == Mark.ARROW
            if collider or g.adjacent(prev, w):
                stack.append((v, w))
    out.discard(a)
    return out


def skeleton(provider: CiProvider, variables: Iterable[str] | None = None,
             options: Options | None = None, state: DiscoveryState | None = None) -> DiscoveryState:
    """Adjacency search on observational data; all surviving edges are circle-circle."""
    options = options or Options()
    variables = list(variables) if variables is not None else list(provider.variables)
    if state is None:
        state = DiscoveryState(provider, _empty_pag(variables), options=options)
    g = state.graph
    for a, b in combinations(g.ids(), 2):
        g.add_edge(a, b, Mark.CIRCLE, Mark.CIRCLE)

    def try_remove(a: int, b: int, pool: set[int], depth: int, stage: str) -> bool:
        for cond in combinations(sorted(pool), depth):
            if provider.indep(state.name(a), state.name(b), state.names(cond)):
                g.remove_edge(a, b)
                state.sepsets[frozenset((a, b))] = frozenset(cond)
                state.log({"event": "remove", "stage": stage, "pair": [state.name(a), state.name(b)],
                           "sepset": state.names(cond)})
                return True
        return False

    cap = options.skeleton_max_cond
    depth = 0
    while True:
        any_large = False
        # Neighbourhoods are frozen per depth so the result does not depend on pair order.
        adj = {x: set(g.neighbors(x)) for x in g.ids()}
        for a, b in combinations(g.ids(), 2):
            if not g.adjacent(a, b):
                continue
            for x, y in ((a, b), (b, a)):
                pool = adj[x] - {y}
                if len(pool) >= depth:
                    any_large = True
                    if try_remove(a, b, pool, depth, "adjacency"):
                        break
        depth += 1
        if not any_large or (cap is not None and depth > cap):
            break

    if options.possible_dsep:
        rule0(RuleContext(g, state.sepsets))
        pds = {x: _possible_dsep(g, x) for x in g.ids()}
        for a, b in combinations(g.ids(), 2):
            if not g.adjacent(a, b):
                continue
            for x, y in ((a, b), (b, a)):
                pool = pds[x] - {y}
                top = len(pool) if cap is None else min(len(pool), cap)
                removed = False
                for depth in range(top + 1):
                    if try_remove(a, b, pool, depth, "possible-dsep"):
                        removed = True
                        break
                if removed:
                    break
        _reset_circles(g)
    return state


def _path_vertices(g: MixedGraph, i: int, j: int) -> list[int]:
    """Vertices on some simple skeleton path between adjacent ``i`` and ``j``, endpoints excluded."""
    sk = nx.Graph()
    sk.add_nodes_from(g.ids())
    sk.add_edges_from((e.u, e.v) for e in g.edges)
    for comp in nx.biconnected_component_edges(sk):
        comp = list(comp)
        if any({u, v} == {i, j} for u, v in comp):
            return sorted({x for e in comp for x in e} - {i, j})
    return []


def _blocked_by(g: MixedGraph, i: int, j: int, cut: set[int]) -> bool:
    """True iff every skeleton path between ``i`` and ``j`` other than the direct edge meets ``cut``."""
    seen = {i} | cut
    stack = [w for w in g.neighbors(i) if w != j and w not in cut]
    seen |= set(stack)
    while stack:
        v = stack.pop()
        for w in g.neighbors(v):
            if w == j:
                return False
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return True


def capture_ci_patterns(state: DiscoveryState, i: int, j: int) -> CiTuple:
    """Existential CI pattern over conditioning sets drawn from skeleton paths between ``i`` and ``j``."""
    p = state.provider
    ri, rj = state.regime(i), state.regime(j)
    if ri is None or rj is None:
        raise ContractViolation("CI patterns need interventional data on both endpoints")
    xi, xj = state.name(i), state.name(j)
    cands = _path_vertices(state.graph, i, j)
    cap = min(state.options.pattern_max_cond, len(cands))
    dep = [True, True, True, True]
    wit: list[tuple[str, ...] | None] = [None, None, None, None]
    used: set[int] = set()
    for depth in range(cap + 1):
        for cset in combinations(cands, depth):
            c = state.names(cset)
            answers = (
                p.psi_indep(ri, xj, c),
                p.psi_indep(ri, xj, [xi, *c]),
                p.psi_indep(rj, xi, c),
                p.psi_indep(rj, xi, [xj, *c]),
            )
            for k, ind in enumerate(answers):
                if ind and dep[k]:
                    dep[k] = False
                    wit[k] = tuple(c)
                    used |= set(cset)
        if state.options.early_stop and depth >= 1 and _blocked_by(state.graph, i, j, used):
            break
    t = CiTuple(tuple(dep), tuple(wit))
    state.tuples[(i, j)] = t
    state.log({"event": "pattern", "pair": [xi, xj], "tuple": t.label(), "witness": [list(w) if w else None for w in wit]})
    return t


def orient_intervened_pairs(state: DiscoveryState) -> None:
    g = state.graph
    for e in g.edges:
        i, j = e.u, e.v
        if state.regime(i) is None or state.regime(j) is None:
            continue
        t = capture_ci_patterns(state, i, j)
        et = orient_pair(t)
        state.step2[(i, j)] = et
        state.log({"event": "orient", "pair": [state.name(i), state.name(j)], "edge": et.value})
        if et is NO_MATCH:
            continue
        mi, mj = EDGE_MARKS[et]
        state.set_edge(i, j, mi, mj)
        state.frozen |= {(i, j), (j, i)}


def refine_type1(state: DiscoveryState) -> DiscoveryState:
    """Flag intervened pairs whose Step-2 edge is explained by an inducing path through a Type-I node.

    ``i - j`` becomes a triangle edge when ``i -> n`` and ``n`` (square) - ``j``
    with ``psi_n`` independent of ``X_i``; ``i -> j`` becomes a triangle edge
    when ``i - n`` (square at ``n``), ``n <-> j`` with ``psi_n`` independent of
    ``X_j``.
    """
    g = state.graph
    p = state.provider
    at = g.mark_at
    for sweep in ("pass", "recheck"):
        for (a, b), et in sorted(state.step2.items()):
            e = g.edge(a, b)
            if e.triangle or et not in (EdgeType.DIRECTED, EdgeType.UNDIRECTED):
                continue
            orders = [(a, b)] if et is EdgeType.DIRECTED else [(a, b), (b, a)]
            for i, j in orders:
                for n in sorted(g.neighbors(i) & g.neighbors(j)):
                    if et is EdgeType.UNDIRECTED:
                        pattern = (at(i, n) in TAILISH and at(n, i) == Mark.ARROW
                                   and at(n, j) == Mark.SQUARE and at(j, n) == Mark.TAIL)
                        probe = i
                    else:
                        pattern = (at(i, n) == Mark.TAIL and at(n, i) == Mark.SQUARE
                                   and at(n, j) == Mark.ARROW and at(j, n) == Mark.ARROW)
                        probe = j
                    if not pattern:
                        continue
                    rn = state.regime(n)
                    if rn is None:
                        state.log({"event": "refine-skip", "pair": [state.name(a), state.name(b)],
                                   "node": state.name(n), "reason": "no interventional data"})
                        continue
                    indep = p.psi_indep(rn, state.name(probe))
                    state.log({"event": "refine-test", "sweep": sweep, "pair": [state.name(a), state.name(b)],
                               "node": state.name(n), "independent": indep})
                    if indep:
                        g.set_edge(e.u, e.v, e.mark_u, e.mark_v, True)
                        state.log({"event": "refine", "pair": [state.name(a), state.name(b)],
                                   "node": state.name(n)})
                        break
                if g.edge(a, b).triangle:
                    break
    return state


def finish_orientation(state: DiscoveryState) -> MixedGraph:
    """FCI rules on edges not fixed in Step 2, then the indicator-invariance rules, to a fixed point."""
    g = state.graph
    ctx = RuleContext(g, state.sepsets, state.frozen, state.log)
    rule0(ctx)
    apply_rules(ctx)
    if state.options.invariance_rules:
        p = state.provider
        while _invariance(state, ctx, p):
            apply_rules(ctx)
    state.conflicts.extend(ctx.conflicts)
    return g


def _invariance(state: DiscoveryState, ctx: RuleContext, p: CiProvider) -> bool:
    g = state.graph
    changed = False
    for i in g.ids():
        ri = state.regime(i)
        if ri is None:
            continue
        for j in sorted(g.neighbors(i)):
            if state.regime(j) is not None:
                continue
            xi, xj = state.name(i), state.name(j)
            marg = p.psi_indep(ri, xj)
            given = p.psi_indep(ri, xj, [xi])
            if not marg and given:
                changed |= ctx.set_mark(i, j, Mark.TAIL, "invariance-tail")
                changed |= ctx.set_mark(j, i, Mark.ARROW, "invariance-tail")
            elif marg and not given:
                changed |= ctx.set_mark(i, j, Mark.ARROW, "invariance-arrow")
    return changed


def f_fci(provider: CiProvider | AugmentedDag, options: Options | None = None) -> tuple[MixedGraph, list[dict]]:
    """Run every stage; returns the learned graph and the trace records."""
    if isinstance(provider, AugmentedDag):
        provider = OracleProvider(provider)
    options = options or Options()
    state = DiscoveryState(provider, _empty_pag(list(provider.variables)), options=options)
    prev_hook = provider.trace_hook
    provider.trace_hook = state.log
    try:
        state.log({"event": "start", "backend": provider.backend, "variables": list(provider.variables),
                   "targets": [list(t) for t in provider.targets]})
        skeleton(provider, options=options, state=state)
        orient_intervened_pairs(state)
        if options.refine:
            refine_type1(state)
        finish_orientation(state)
        state.log({"event": "done", "edges": edge_list(state.graph), "conflicts": len(state.conflicts)})
    finally:
        provider.trace_hook = prev_hook
    return state.graph, state.trace


def edge_list(g: MixedGraph) -> list[str]:
    from .graph import edge_symbol

    return [f"{g.name(e.u)} {edge_symbol(e.mark_u, e.mark_v, e.triangle)} {g.name(e.v)}" for e in g.edges]


def dump_trace(trace: list[dict]) -> str:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in trace)
