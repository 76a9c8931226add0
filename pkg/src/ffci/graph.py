"""Mixed graphs with typed endpoint marks.

One ``MixedGraph`` class backs every graph class used by the toolkit: plain
DAGs, augmented DAGs (with indicator, noise, latent and selection vertices),
MAGs, and F-PAGs (which add circle and square marks plus a triangle flag on
edges that stand for an inducing path rather than a direct link).
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable


class Mark(str, Enum):
    TAIL = "tail"
    ARROW = "arrowhead"
    CIRCLE = "circle"
    SQUARE = "square"


class VertexKind(str, Enum):
    OBSERVED = "observed"
    LATENT = "latent"
    SELECTION = "selection"
    NOISE = "noise"
    INDICATOR = "indicator"


KIND_RANK = {
    VertexKind.OBSERVED: 0,
    VertexKind.LATENT: 1,
    VertexKind.SELECTION: 2,
    VertexKind.NOISE: 3,
    VertexKind.INDICATOR: 4,
}


class InterventionKind(str, Enum):
    HARD = "hard"
    SOFT = "soft"


class GraphClass(str, Enum):
    DAG = "dag"
    MAG = "mag"
    FPAG = "fpag"
    AUGMENTED_DAG = "augmented_dag"


class GraphError(ValueError):
    """Structural problem: unknown vertex, duplicate edge, self-loop."""


class InvalidTargetError(GraphError):
    pass


class ContractViolation(ValueError):
    """Caller broke an operation's precondition (mismatched targets, missing regime)."""


@dataclass(frozen=True)
class Vertex:
    id: int
    kind: VertexKind
    name: str


@dataclass(frozen=True)
class Edge:
    u: int
    v: int
    mark_u: Mark
    mark_v: Mark
    triangle: bool = False

    def mark_at(self, x: int) -> Mark:
        if x == self.u:
            return self.mark_u
        if x == self.v:
            return self.mark_v
        raise GraphError(f"vertex {x} is not an endpoint of {self.u}-{self.v}")

    def other(self, x: int) -> int:
        return self.v if x == self.u else self.u


# Plain-mark pairs admitted in an F-PAG, as unordered pairs.
FPAG_MARK_PAIRS = {
    frozenset({Mark.TAIL, Mark.ARROW}),
    frozenset({Mark.ARROW}),
    frozenset({Mark.TAIL}),
    frozenset({Mark.SQUARE, Mark.TAIL}),
    frozenset({Mark.SQUARE}),
    frozenset({Mark.SQUARE, Mark.ARROW}),
    frozenset({Mark.CIRCLE, Mark.TAIL}),
    frozenset({Mark.CIRCLE}),
    frozenset({Mark.CIRCLE, Mark.ARROW}),
}
TRIANGLE_MARK_PAIRS = {frozenset({Mark.TAIL, Mark.ARROW}), frozenset({Mark.TAIL})}

_SYMBOL_LEFT = {Mark.TAIL: "-", Mark.ARROW: "<", Mark.CIRCLE: "o", Mark.SQUARE: "[]"}
_SYMBOL_RIGHT = {Mark.TAIL: "-", Mark.ARROW: ">", Mark.CIRCLE: "o", Mark.SQUARE: "[]"}


def edge_symbol(mark_u: Mark, mark_v: Mark, triangle: bool = False) -> str:
    """Compact text form of an edge read from u to v, e.g. ``o->`` or ``^->``."""
    s = _SYMBOL_LEFT[mark_u] + "-" + _SYMBOL_RIGHT[mark_v]
    return "^" + s if triangle else s


class MixedGraph:
    """Vertices with kinds plus at most one edge per unordered vertex pair.

    Edges are keyed by the sorted vertex pair and carry the mark at each
    endpoint. Graph values are treated as immutable once handed out; the
    mutators exist for builders.
    """

    def __init__(self, vertices: Iterable[Vertex] = (), edges: Iterable[Edge] = ()):
        self._vertices: dict[int, Vertex] = {}
        self._by_name: dict[str, int] = {}
        self._edges: dict[tuple[int, int], Edge] = {}
        self._adj: dict[int, set[int]] = {}
        self._pa: dict[int, set[int]] | None = None
        for vx in vertices:
            self.add_vertex(vx.kind, vx.name, vid=vx.id)
        for e in edges:
            self.add_edge(e.u, e.v, e.mark_u, e.mark_v, e.triangle)

    # construction -------------------------------------------------------

    def add_vertex(self, kind: VertexKind | str, name: str | None = None, vid: int | None = None) -> int:
        kind = VertexKind(kind)
        if vid is None:
            vid = max(self._vertices, default=-1) + 1
        if vid in self._vertices:
            raise GraphError(f"duplicate vertex id {vid}")
        name = name if name is not None else f"v{vid}"
        if name in self._by_name:
            raise GraphError(f"duplicate vertex name {name!r}")
        self._vertices[vid] = Vertex(vid, kind, name)
        self._by_name[name] = vid
        self._adj[vid] = set()
        self._pa = None
        return vid

    def _check(self, *vids: int) -> None:
        for x in vids:
            if x not in self._vertices:
                raise GraphError(f"unknown vertex id {x}")

    def add_edge(self, u: int, v: int, mark_u: Mark | str, mark_v: Mark | str, triangle: bool = False) -> None:
        self._check(u, v)
        if u == v:
            raise GraphError(f"self-loop on vertex {u}")
        key = (min(u, v), max(u, v))
        if key in self._edges:
            raise GraphError(f"duplicate edge {u}-{v}")
        self._put(u, v, Mark(mark_u), Mark(mark_v), triangle)

    def _put(self, u: int, v: int, mark_u: Mark, mark_v: Mark, triangle: bool) -> None:
        if u > v:
            u, v, mark_u, mark_v = v, u, mark_v, mark_u
        self._edges[(u, v)] = Edge(u, v, mark_u, mark_v, bool(triangle))
        self._adj[u].add(v)
        self._adj[v].add(u)
        self._pa = None

    def set_edge(self, u: int, v: int, mark_u: Mark | str, mark_v: Mark | str, triangle: bool = False) -> None:
        self._check(u, v)
        if u == v:
            raise GraphError(f"self-loop on vertex {u}")
        self._put(u, v, Mark(mark_u), Mark(mark_v), triangle)

    def add_directed(self, u: int, v: int) -> None:
        self.add_edge(u, v, Mark.TAIL, Mark.ARROW)

    def remove_edge(self, u: int, v: int) -> None:
        key = (min(u, v), max(u, v))
        if key not in self._edges:
            raise GraphError(f"no edge {u}-{v}")
        del self._edges[key]
        self._adj[u].discard(v)
        self._adj[v].discard(u)
        self._pa = None

    def copy(self) -> "MixedGraph":
        g = MixedGraph()
        self._copy_into(g)
        return g

    def _copy_into(self, g: "MixedGraph") -> None:
        g._vertices = dict(self._vertices)
        g._by_name = dict(self._by_name)
        g._edges = dict(self._edges)
        g._adj = {k: set(v) for k, v in self._adj.items()}
        g._pa = None

    # queries ------------------------------------------------------------

    def __contains__(self, vid: int) -> bool:
        return vid in self._vertices

    def __len__(self) -> int:
        return len(self._vertices)

    def vertex(self, vid: int) -> Vertex:
        self._check(vid)
        return self._vertices[vid]

    def id_of(self, name: str) -> int:
        try:
            return self._by_name[name]
        except KeyError:
            raise GraphError(f"unknown vertex name {name!r}") from None

    def name(self, vid: int) -> str:
        return self.vertex(vid).name

    def kind(self, vid: int) -> VertexKind:
        return self.vertex(vid).kind

    @property
    def vertices(self) -> list[Vertex]:
        """Vertices in canonical order: (kind rank, id)."""
        return sorted(self._vertices.values(), key=lambda x: (KIND_RANK[x.kind], x.id))

    def ids(self, *kinds: VertexKind) -> list[int]:
        return [x.id for x in self.vertices if not kinds or x.kind in kinds]

    @property
    def edges(self) -> list[Edge]:
        return [self._edges[k] for k in sorted(self._edges)]

    def edge(self, u: int, v: int) -> Edge | None:
        return self._edges.get((min(u, v), max(u, v)))

    def adjacent(self, u: int, v: int) -> bool:
        return (min(u, v), max(u, v)) in self._edges

    def neighbors(self, v: int) -> set[int]:
        self._check(v)
        return self._adj[v]

    def mark_at(self, at: int, other: int) -> Mark:
        """Mark at endpoint ``at`` of the edge ``at``-``other``."""
        e = self.edge(at, other)
        if e is None:
            raise GraphError(f"no edge {at}-{other}")
        return e.mark_at(at)

    def is_directed(self, u: int, v: int) -> bool:
        e = self.edge(u, v)
        return e is not None and e.mark_at(u) == Mark.TAIL and e.mark_at(v) == Mark.ARROW

    def parents(self, v: int) -> set[int]:
        if self._pa is None:
            # Parent sets are cached until the next mutation.
            pa: dict[int, set[int]] = {x: set() for x in self._vertices}
            for e in self._edges.values():
                if e.mark_u == Mark.TAIL and e.mark_v == Mark.ARROW:
                    pa[e.v].add(e.u)
                elif e.mark_v == Mark.TAIL and e.mark_u == Mark.ARROW:
                    pa[e.u].add(e.v)
            self._pa = pa
        return set(self._pa[v])

    def children(self, v: int) -> set[int]:
        return {w for w in self._adj[v] if self.is_directed(v, w)}

    def spouses(self, v: int) -> set[int]:
        return {
            u for u in self._adj[v]
            if self.mark_at(u, v) == Mark.ARROW and self.mark_at(v, u) == Mark.ARROW
        }

    def undirected_neighbors(self, v: int) -> set[int]:
        return {
            u for u in self._adj[v]
            if self.mark_at(u, v) == Mark.TAIL and self.mark_at(v, u) == Mark.TAIL
        }

    # serialization ------------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        return {
            "vertices": [{"id": x.id, "kind": x.kind.value, "name": x.name} for x in self.vertices],
            "edges": [
                {"u": e.u, "v": e.v, "mark_u": e.mark_u.value, "mark_v": e.mark_v.value,
                 "triangle": e.triangle}
                for e in self.edges
            ],
        }

    def to_json(self, **kw: Any) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, **kw)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MixedGraph):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __repr__(self) -> str:
        parts = [
            f"{self.name(e.u)} {edge_symbol(e.mark_u, e.mark_v, e.triangle)} {self.name(e.v)}"
            for e in self.edges
        ]
        return f"{type(self).__name__}({', '.join(parts)})"


@dataclass
class AugmentedDag(MixedGraph):
    """DAG over indicator, observed, latent, selection and noise vertices.

    ``targets[k-1]`` is the observed target set of regime ``k`` (regime 0 is
    observational), ``psi[k-1]`` the id of its indicator vertex and
    ``kinds[k-1]`` whether the intervention is hard or soft.
    """

    targets: list[frozenset[int]] = field(default_factory=list)
    kinds: list[InterventionKind] = field(default_factory=list)
    psi: list[int] = field(default_factory=list)

    def __post_init__(self) -> None:
        MixedGraph.__init__(self)

    @classmethod
    def from_graph(cls, g: MixedGraph, targets=(), kinds=(), psi=()) -> "AugmentedDag":
        out = cls()
        g._copy_into(out)
        out.targets = [frozenset(t) for t in targets]
        out.kinds = [InterventionKind(k) for k in kinds]
        out.psi = list(psi)
        return out

    def copy(self) -> "AugmentedDag":
        return AugmentedDag.from_graph(self, self.targets, self.kinds, self.psi)

    __eq__ = MixedGraph.__eq__
    __repr__ = MixedGraph.__repr__

    @property
    def n_regimes(self) -> int:
        return len(self.targets)

    def observed(self) -> list[int]:
        return self.ids(VertexKind.OBSERVED)

    def latent(self) -> list[int]:
        return self.ids(VertexKind.LATENT)

    def selection(self) -> list[int]:
        return self.ids(VertexKind.SELECTION)

    def regime_of(self, target: int) -> int:
        """Regime index whose target set is exactly ``{target}``."""
        for k, t in enumerate(self.targets, start=1):
            if t == frozenset({target}):
                return k
        raise InvalidTargetError(f"no singleton regime targets vertex {target}")

    def intervened(self) -> set[int]:
        return set().union(*self.targets) if self.targets else set()

    def to_dict(self) -> dict[str, Any]:
        d = MixedGraph.to_dict(self)
        d["targets"] = [sorted(t) for t in self.targets]
        d["intervention_kinds"] = [k.value for k in self.kinds]
        d["indicators"] = list(self.psi)
        return d


def graph_from_dict(d: dict[str, Any]) -> MixedGraph:
    """Inverse of ``to_dict``; returns an ``AugmentedDag`` when targets are present."""
    g = MixedGraph()
    for vx in d["vertices"]:
        g.add_vertex(vx["kind"], vx["name"], vid=int(vx["id"]))
    for e in d["edges"]:
        g.add_edge(int(e["u"]), int(e["v"]), e["mark_u"], e["mark_v"], bool(e.get("triangle", False)))
    if "targets" not in d and "intervention_kinds" not in d:
        return g
    targets = [frozenset(int(x) for x in t) for t in d.get("targets", [])]
    kinds = d.get("intervention_kinds") or ["hard"] * len(targets)
    psi = d.get("indicators")
    if psi is None:
        psi = []
        for t in targets:
            hits = [x for x in g.ids(VertexKind.INDICATOR) if g.children(x) == set(t)]
            if len(hits) != 1:
                raise GraphError(f"cannot identify indicator for target {sorted(t)}")
            psi.append(hits[0])
    return AugmentedDag.from_graph(g, targets, kinds, psi)


def graph_from_json(text: str) -> MixedGraph:
    return graph_from_dict(json.loads(text))


def dag_from_edges(names: Iterable[str], edges: Iterable[tuple[str, str]],
                   latent: Iterable[str] = (), selection: Iterable[str] = ()) -> MixedGraph:
    """Convenience builder: ``dag_from_edges(["X1", "X2"], [("X1", "X2")])``."""
    g = MixedGraph()
    latent, selection = set(latent), set(selection)
    for n in names:
        kind = (VertexKind.LATENT if n in latent
                else VertexKind.SELECTION if n in selection else VertexKind.OBSERVED)
        g.add_vertex(kind, n)
    for n in sorted((latent | selection) - set(names)):
        g.add_vertex(VertexKind.LATENT if n in latent else VertexKind.SELECTION, n)
    for a, b in edges:
        g.add_directed(g.id_of(a), g.id_of(b))
    return g


# operations --------------------------------------------------------------


def augment(g: MixedGraph, targets: Iterable[Iterable[int]] = (),
            kinds: Iterable[InterventionKind | str] | None = None) -> AugmentedDag:
    """Add one indicator per target set and one noise parent per observed/latent vertex."""
    targets = [frozenset(t) for t in targets]
    kinds = [InterventionKind(k) for k in kinds] if kinds is not None else [InterventionKind.HARD] * len(targets)
    if len(kinds) != len(targets):
        raise GraphError("intervention kinds must align with targets")
    for t in targets:
        if not t:
            raise InvalidTargetError("empty intervention target")
        for x in t:
            if x not in g:
                raise InvalidTargetError(f"unknown target vertex {x}")
            if g.kind(x) != VertexKind.OBSERVED:
                raise InvalidTargetError(f"target {g.name(x)} is {g.kind(x).value}, not observed")
    out = AugmentedDag.from_graph(g)
    for x in g.ids(VertexKind.OBSERVED, VertexKind.LATENT):
        eps = out.add_vertex(VertexKind.NOISE, f"eps_{g.name(x)}")
        out.add_directed(eps, x)
    psi = []
    for k, t in enumerate(targets, start=1):
        label = "psi_" + "_".join(g.name(x) for x in sorted(t)) if len(targets) == len(set(targets)) else f"psi{k}"
        p = out.add_vertex(VertexKind.INDICATOR, label)
        for x in sorted(t):
            out.add_directed(p, x)
        psi.append(p)
    out.targets, out.kinds, out.psi = targets, kinds, psi
    return out


def restrict_to_observed(g: MixedGraph) -> MixedGraph:
    """Drop every non-observed vertex together with its incident edges."""
    keep = set(g.ids(VertexKind.OBSERVED))
    return MixedGraph(
        [g.vertex(x) for x in sorted(keep)],
        [e for e in g.edges if e.u in keep and e.v in keep],
    )


def topological_order(g: MixedGraph) -> list[int] | None:
    """Kahn's algorithm over directed edges; ``None`` when a directed cycle exists."""
    indeg = {x: len(g.parents(x)) for x in g.ids()}
    queue = deque(sorted(x for x, d in indeg.items() if d == 0))
    order = []
    while queue:
        x = queue.popleft()
        order.append(x)
        for c in sorted(g.children(x)):
            indeg[c] -= 1
            if indeg[c] == 0:
                queue.append(c)
    return order if len(order) == len(indeg) else None


@dataclass
class ValidationReport:
    graph_class: GraphClass
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def validate(g: MixedGraph, graph_class: GraphClass | str) -> ValidationReport:
    """Report every violated invariant of ``graph_class``; empty iff valid."""
    graph_class = GraphClass(graph_class)
    rep = ValidationReport(graph_class)
    v = rep.violations
    for e in g.edges:
        if e.u not in g or e.v not in g:
            raise GraphError(f"edge {e.u}-{e.v} references unknown vertex")

    if graph_class in (GraphClass.DAG, GraphClass.AUGMENTED_DAG):
        for e in g.edges:
            if {e.mark_u, e.mark_v} != {Mark.TAIL, Mark.ARROW} or e.triangle:
                v.append(f"non-directed edge {g.name(e.u)}-{g.name(e.v)}")
        if topological_order(g) is None:
            v.append("directed cycle")

    if graph_class == GraphClass.AUGMENTED_DAG:
        v.extend(_augmented_violations(g))

    if graph_class == GraphClass.MAG:
        v.extend(_mag_violations(g))

    if graph_class == GraphClass.FPAG:
        for x in g.vertices:
            if x.kind != VertexKind.OBSERVED:
                v.append(f"non-observed vertex {x.name}")
        for e in g.edges:
            pair = frozenset({e.mark_u, e.mark_v})
            label = f"{g.name(e.u)} {edge_symbol(e.mark_u, e.mark_v, e.triangle)} {g.name(e.v)}"
            if pair not in FPAG_MARK_PAIRS:
                v.append(f"edge kind not admitted: {label}")
            if e.triangle and pair not in TRIANGLE_MARK_PAIRS:
                v.append(f"triangle on edge with marks other than tail/arrowhead: {label}")
    return rep


def _augmented_violations(g: MixedGraph) -> list[str]:
    v = []
    for x in g.ids(VertexKind.INDICATOR, VertexKind.NOISE):
        if g.parents(x):
            v.append(f"exogenous vertex {g.name(x)} has incoming edges")
    for x in g.ids(VertexKind.SELECTION):
        if g.children(x):
            v.append(f"selection vertex {g.name(x)} is not a sink")
    for x in g.ids(VertexKind.OBSERVED, VertexKind.LATENT):
        n_eps = sum(1 for p in g.parents(x) if g.kind(p) == VertexKind.NOISE)
        if n_eps != 1:
            v.append(f"{g.name(x)} has {n_eps} noise parents")
    for x in g.ids(VertexKind.NOISE):
        if len(g.children(x)) != 1:
            v.append(f"noise vertex {g.name(x)} must have exactly one child")
    if isinstance(g, AugmentedDag):
        if not (len(g.targets) == len(g.kinds) == len(g.psi)):
            v.append("targets, kinds and indicators are misaligned")
        for t, p in zip(g.targets, g.psi):
            if p not in g or g.kind(p) != VertexKind.INDICATOR:
                v.append(f"indicator id {p} is not an indicator vertex")
            elif g.children(p) != set(t):
                v.append(f"indicator {g.name(p)} does not point exactly to its targets")
    return v


def _mag_violations(g: MixedGraph) -> list[str]:
    from .separation import anteriors, ancestors, m_separated  # separation builds on graph

    v = []
    for x in g.vertices:
        if x.kind not in (VertexKind.OBSERVED, VertexKind.INDICATOR):
            v.append(f"non-observed vertex {x.name}")
    for e in g.edges:
        if e.mark_u not in (Mark.TAIL, Mark.ARROW) or e.mark_v not in (Mark.TAIL, Mark.ARROW) or e.triangle:
            v.append(f"edge {g.name(e.u)}-{g.name(e.v)} has marks outside tail/arrowhead")
    if v:
        return v
    if topological_order(g) is None:
        v.append("directed cycle")
        return v
    for e in g.edges:
        a, b = e.u, e.v
        if e.mark_u == Mark.ARROW and e.mark_v == Mark.ARROW:
            if a in ancestors(g, b) or b in ancestors(g, a):
                v.append(f"almost directed cycle through {g.name(a)}<->{g.name(b)}")
        if e.mark_u == Mark.TAIL and e.mark_v == Mark.TAIL:
            for x in (a, b):
                if g.parents(x):
                    v.append(f"undirected endpoint has parent: {g.name(x)}")
                if g.spouses(x):
                    v.append(f"undirected endpoint has spouse: {g.name(x)}")
    if v:
        return v
    ids = g.ids()
    for i, a in enumerate(ids):
        for b in ids[i + 1:]:
            if g.adjacent(a, b):
                continue
            z = anteriors(g, {a, b}) - {a, b}
            if not m_separated(g, {a}, {b}, z):
                v.append(f"not maximal: {g.name(a)} and {g.name(b)} are inseparable")
    return v


# DOT export -------------------------------------------------------------

_DOT_ARROW = {Mark.TAIL: "none", Mark.ARROW: "normal", Mark.CIRCLE: "odot", Mark.SQUARE: "box"}


def to_dot(g: MixedGraph, name: str = "G") -> str:
    lines = [f"digraph {name} {{"]
    for x in g.vertices:
        lines.append(f'  "{x.name}";')
    for e in g.edges:
        attrs = [f"dir=both", f"arrowtail={_DOT_ARROW[e.mark_u]}", f"arrowhead={_DOT_ARROW[e.mark_v]}"]
        if e.triangle:
            attrs.append('style=bold,label="▲"')
        lines.append(f'  "{g.name(e.u)}" -> "{g.name(e.v)}" [{", ".join(attrs)}];')
    lines.append("}")
    return "\n".join(lines) + "\n"
