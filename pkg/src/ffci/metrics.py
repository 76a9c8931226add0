"""Scores for learned graphs against ground truth."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

from .graph import AugmentedDag, ContractViolation, Mark, MixedGraph, VertexKind, restrict_to_observed
from .oracle import mag_of
from .separation import inducing_paths

_CAUSE_TAIL = (Mark.TAIL, Mark.SQUARE, Mark.CIRCLE)
_TAILISH = (Mark.TAIL, Mark.SQUARE)


@dataclass
class MetricsReport:
    dag_precision: float
    dag_recall: float
    dag_f1: float
    dag_shd: int
    selection_accuracy: float | None = None
    confusion: list[dict] = field(default_factory=list)

    def as_row(self) -> dict:
        return {"dag_precision": self.dag_precision, "dag_recall": self.dag_recall, "dag_f1": self.dag_f1,
                "dag_shd": self.dag_shd, "selection_accuracy": self.selection_accuracy}


def causal_edges(g: MixedGraph) -> set[tuple[str, str]]:
    """Pairs ``(a, b)`` read as a predicted direct cause ``a -> b``.

    The mark at ``b`` is an arrowhead and the mark at ``a`` is a tail, square
    or circle; triangle-flagged edges are excluded.
    """
    out = set()
    for e in g.edges:
        if e.triangle:
            continue
        for a, b in ((e.u, e.v), (e.v, e.u)):
            if e.mark_at(b) == Mark.ARROW and e.mark_at(a) in _CAUSE_TAIL:
                out.add((g.name(a), g.name(b)))
    return out


def _true_edges(truth: MixedGraph) -> set[tuple[str, str]]:
    t = restrict_to_observed(truth)
    return {(t.name(e.u), t.name(e.v)) if e.mark_v == Mark.ARROW else (t.name(e.v), t.name(e.u)) for e in t.edges}


def _observed_names(g: MixedGraph) -> list[str]:
    return sorted(g.name(x) for x in g.ids(VertexKind.OBSERVED))


def _cls(edges: set[tuple[str, str]], a: str, b: str) -> str:
    if (a, b) in edges:
        return f"{a}->{b}"
    if (b, a) in edges:
        return f"{b}->{a}"
    return "none"


def dag_metrics(pred: MixedGraph, truth: MixedGraph) -> MetricsReport:
    """Precision, recall, F1 and SHD of predicted direct causes against the true DAG over observed variables."""
    names = _observed_names(pred)
    if names != _observed_names(truth):
        raise ContractViolation("predicted and true graphs have different observed variables")
    p, t = causal_edges(pred), _true_edges(truth)
    tp = len(p & t)
    prec = tp / len(p) if p else (1.0 if not t else 0.0)
    rec = tp / len(t) if t else (1.0 if not p else 0.0)
    f1 = 2 * prec * rec / (prec + rec) if prec + rec > 0 else 0.0
    shd = 0
    confusion = []
    for a, b in combinations(names, 2):
        pc, tc = _cls(p, a, b), _cls(t, a, b)
        e = pred.edge(pred.id_of(a), pred.id_of(b))
        if pc == "none" and e is not None and not e.triangle:
            pc = "other"
        if pc != tc:
            shd += 1
        if pc != "none" or tc != "none":
            confusion.append({"pair": [a, b], "predicted": pc, "truth": tc})
    return MetricsReport(prec, rec, f1, shd, confusion=confusion)


def intervened_pairs(truth: AugmentedDag) -> list[tuple[str, str]]:
    names = sorted(truth.name(x) for t in truth.targets if len(t) == 1 for x in t)
    return list(combinations(names, 2))


def true_selected_pairs(truth: AugmentedDag) -> set[frozenset[str]]:
    """Pairs whose MAG edge is tail-tail: an inducing path that starts and ends with a selection-side tail."""
    m = mag_of(truth)
    return {frozenset((m.name(e.u), m.name(e.v))) for e in m.edges
            if e.mark_u == Mark.TAIL and e.mark_v == Mark.TAIL}


def predicted_selected_pairs(pred: MixedGraph) -> set[frozenset[str]]:
    """Edges read as selection: both marks tail or square (this covers the triangle-flagged variant)."""
    return {frozenset((pred.name(e.u), pred.name(e.v))) for e in pred.edges
            if e.mark_u in _TAILISH and e.mark_v in _TAILISH}


def selection_accuracy(pred: MixedGraph, truth: AugmentedDag) -> float:
    """Fraction of intervened pairs whose selected/not-selected status is predicted correctly (1.0 if none)."""
    pairs = intervened_pairs(truth)
    if not pairs:
        return 1.0
    t, p = true_selected_pairs(truth), predicted_selected_pairs(pred)
    hits = sum((frozenset(q) in t) == (frozenset(q) in p) for q in pairs)
    return hits / len(pairs)


def evaluate(pred: MixedGraph, truth: AugmentedDag) -> MetricsReport:
    rep = dag_metrics(pred, truth)
    rep.selection_accuracy = selection_accuracy(pred, truth)
    return rep


# mark soundness ------------------------------------------------------------


@dataclass
class MarkCheck:
    errors: list[str] = field(default_factory=list)
    exceptions: list[str] = field(default_factory=list)
    checked: int = 0


def y_structure_at(truth: AugmentedDag, x: int) -> bool:
    """``x`` is an ancestor of selection and has a latent parent: the documented non-identifiable case."""
    from .separation import ancestors

    sel = truth.ids(VertexKind.SELECTION)
    if not sel or x not in ancestors(truth, set(sel)):
        return False
    return any(truth.kind(p) == VertexKind.LATENT for p in truth.parents(x))


def check_marks(pred: MixedGraph, truth: AugmentedDag) -> MarkCheck:
    """Compare every non-circle mark on intervened pairs with the ground truth.

    Tail and arrowhead must match the MAG; a square needs a MAG tail plus an
    inducing path that begins with an arrowhead at that endpoint; a triangle
    arrow needs the direct causal link to be absent and a triangle undirected
    edge needs the pair not to share a selection child. Pairs with a
    Y-structure at an endpoint are reported as exceptions instead of errors.
    """
    out = MarkCheck()
    mag = mag_of(truth)
    tid = truth.id_of
    for a, b in intervened_pairs(truth):
        pa, pb = pred.id_of(a), pred.id_of(b)
        e = pred.edge(pa, pb)
        me = mag.edge(mag.id_of(a), mag.id_of(b))
        if e is None and me is None:
            continue
        problems = []
        if (e is None) != (me is None):
            problems.append(f"adjacency {a}-{b}: predicted {e is not None}, truth {me is not None}")
        else:
            paths = None
            for x, y in ((a, b), (b, a)):
                mk = e.mark_at(pred.id_of(x))
                tm = me.mark_at(mag.id_of(x))
                if mk == Mark.CIRCLE:
                    continue
                out.checked += 1
                if mk in (Mark.TAIL, Mark.ARROW) and mk != tm:
                    problems.append(f"mark at {x} on {a}-{b}: predicted {mk.value}, MAG {tm.value}")
                if mk == Mark.SQUARE:
                    if paths is None:
                        paths = inducing_paths(truth, tid(a), tid(b))
                    start = lambda p: p.start_mark if p.vertices[0] == tid(x) else p.end_mark
                    if tm != Mark.TAIL or not any(start(p) == Mark.ARROW for p in paths):
                        problems.append(f"square at {x} on {a}-{b} without tail plus arrowhead-led inducing path")
            if e.triangle:
                direct = truth.adjacent(tid(a), tid(b))
                shared = any(truth.kind(s) == VertexKind.SELECTION
                             for s in truth.children(tid(a)) & truth.children(tid(b)))
                if e.mark_u == Mark.ARROW or e.mark_v == Mark.ARROW:
                    if direct:
                        problems.append(f"triangle arrow on {a}-{b} but the direct link exists")
                elif shared:
                    problems.append(f"triangle undirected on {a}-{b} but the pair shares a selection child")
        if not problems:
            continue
        if y_structure_at(truth, tid(a)) or y_structure_at(truth, tid(b)):
            out.exceptions.extend(f"y-structure: {p}" for p in problems)
        else:
            out.errors.extend(problems)
    return out
