"""FCI orientation rules R0-R10 over a partially oriented graph.

Rules only ever replace circle marks. A square is read as a tail when a
rule tests for one. Endpoints listed in ``frozen`` are never changed; a rule
that wants to change a frozen or already non-circle mark records a conflict
instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable

from .graph import Mark, MixedGraph

TAILISH = (Mark.TAIL, Mark.SQUARE)


@dataclass
class RuleContext:
    g: MixedGraph
    sepsets: dict[frozenset[int], frozenset[int]]
    frozen: set[tuple[int, int]] = field(default_factory=set)  # (at, other)
    log: Callable[[dict], None] | None = None
    conflicts: list[dict] = field(default_factory=list)

    def at(self, x: int, y: int) -> Mark:
        """Mark at ``x`` on the edge ``x``-``y``."""
        return self.g.mark_at(x, y)

    def adj(self, x: int, y: int) -> bool:
        return self.g.adjacent(x, y)

    def set_mark(self, x: int, y: int, mark: Mark, rule: str) -> bool:
        """Put ``mark`` at ``x`` on edge ``x``-``y``; return True iff the graph changed."""
        cur = self.at(x, y)
        if cur == mark:
            return False
        if cur != Mark.CIRCLE or (x, y) in self.frozen:
            if not (mark == Mark.TAIL and cur == Mark.SQUARE):
                self.conflicts.append({"rule": rule, "at": x, "other": y, "kept": cur.value, "wanted": mark.value})
                if self.log:
                    self.log({"event": "conflict", "rule": rule, "at": self.g.name(x), "other": self.g.name(y),
                              "kept": cur.value, "wanted": mark.value})
            return False
        e = self.g.edge(x, y)
        mark_u = mark if e.u == x else e.mark_u
        mark_v = mark if e.v == x else e.mark_v
        self.g.set_edge(e.u, e.v, mark_u, mark_v, e.triangle)
        if self.log:
            self.log({"event": "rule", "rule": rule, "at": self.g.name(x), "other": self.g.name(y), "mark": mark.value})
        return True

    def directed(self, x: int, y: int) -> bool:
        return self.adj(x, y) and self.at(x, y) in TAILISH and self.at(y, x) == Mark.ARROW

    def undirected(self, x: int, y: int) -> bool:
        return self.adj(x, y) and self.at(x, y) in TAILISH and self.at(y, x) in TAILISH

    def ids(self) -> list[int]:
        return self.g.ids()

    def nbrs(self, x: int) -> list[int]:
        return sorted(self.g.neighbors(x))


def rule0(ctx: RuleContext) -> bool:
    """Unshielded colliders from separating sets."""
    changed = False
    for b in ctx.ids():
        for a, c in combinations(ctx.nbrs(b), 2):
            if ctx.adj(a, c):
                continue
            sep = ctx.sepsets.get(frozenset((a, c)))
            if sep is None or b in sep:
                continue
            changed |= ctx.set_mark(b, a, Mark.ARROW, "R0")
            changed |= ctx.set_mark(b, c, Mark.ARROW, "R0")
    return changed


def _rule1(ctx: RuleContext) -> bool:
    changed = False
    for b in ctx.ids():
        for a in ctx.nbrs(b):
            if ctx.at(b, a) != Mark.ARROW:
                continue
            for c in ctx.nbrs(b):
                if c == a or ctx.adj(a, c) or ctx.at(b, c) != Mark.CIRCLE:
                    continue
                changed |= ctx.set_mark(b, c, Mark.TAIL, "R1")
                changed |= ctx.set_mark(c, b, Mark.ARROW, "R1")
    return changed


def _rule2(ctx: RuleContext) -> bool:
    changed = False
    for a in ctx.ids():
        for c in ctx.nbrs(a):
            if ctx.at(c, a) != Mark.CIRCLE:
                continue
            for b in ctx.nbrs(a):
                if b == c or not ctx.adj(b, c):
                    continue
                chain1 = ctx.directed(a, b) and ctx.at(c, b) == Mark.ARROW
                chain2 = ctx.at(b, a) == Mark.ARROW and ctx.directed(b, c)
                if chain1 or chain2:
                    changed |= ctx.set_mark(c, a, Mark.ARROW, "R2")
                    break
    return changed


def _rule3(ctx: RuleContext) -> bool:
    changed = False
    for b in ctx.ids():
        into = [x for x in ctx.nbrs(b) if ctx.at(b, x) == Mark.ARROW]
        for a, c in combinations(into, 2):
            if ctx.adj(a, c):
                continue
            for t in ctx.nbrs(b):
                if t in (a, c) or ctx.at(b, t) != Mark.CIRCLE:
                    continue
                if ctx.adj(t, a) and ctx.adj(t, c) and ctx.at(t, a) == Mark.CIRCLE and ctx.at(t, c) == Mark.CIRCLE:
                    changed |= ctx.set_mark(b, t, Mark.ARROW, "R3")
    return changed


def _discriminating(ctx: RuleContext, b: int, c: int) -> list[list[int]]:
    """Discriminating paths ``[t, ..., a, b, c]`` for ``b``."""
    out = []
    for a in ctx.nbrs(b):
        if a == c or not ctx.directed(a, c) or ctx.at(a, b) != Mark.ARROW:
            continue
        stack = [[b, a]]
        while stack:
            rev = stack.pop()
            last = rev[-1]
            for nxt in ctx.nbrs(last):
                if nxt in rev or nxt == c or ctx.at(last, nxt) != Mark.ARROW:
                    continue
                if not ctx.adj(nxt, c):
                    out.append(list(reversed(rev + [nxt])) + [c])
                elif ctx.directed(nxt, c) and ctx.at(nxt, last) == Mark.ARROW:
                    stack.append(rev + [nxt])
    return out


def _rule4(ctx: RuleContext) -> bool:
    changed = False
    for b in ctx.ids():
        for c in ctx.nbrs(b):
            if ctx.at(b, c) != Mark.CIRCLE:
                continue
            for path in sorted(_discriminating(ctx, b, c)):
                t, a = path[0], path[-3]
                sep = ctx.sepsets.get(frozenset((t, c)))
                if sep is None:
                    continue
                if b in sep:
                    changed |= ctx.set_mark(b, c, Mark.TAIL, "R4")
                    changed |= ctx.set_mark(c, b, Mark.ARROW, "R4")
                else:
                    changed |= ctx.set_mark(a, b, Mark.ARROW, "R4")
                    changed |= ctx.set_mark(b, a, Mark.ARROW, "R4")
                    changed |= ctx.set_mark(b, c, Mark.ARROW, "R4")
                    changed |= ctx.set_mark(c, b, Mark.ARROW, "R4")
                break
    return changed


def _circle_edge(ctx: RuleContext, x: int, y: int) -> bool:
    return ctx.adj(x, y) and ctx.at(x, y) == Mark.CIRCLE and ctx.at(y, x) == Mark.CIRCLE


def _uncovered_paths(ctx: RuleContext, start: int, second: int, step_ok: Callable[[int, int], bool],
                     goal: Callable[[list[int]], bool]) -> list[list[int]]:
    """Uncovered paths beginning ``start, second`` whose every edge satisfies ``step_ok``."""
    out = []
    stack = [[start, second]]
    while stack:
        p = stack.pop()
        if goal(p):
            out.append(p)
            continue
        last = p[-1]
        for nxt in ctx.nbrs(last):
            if nxt in p or not step_ok(last, nxt) or ctx.adj(p[-2], nxt):
                continue
            stack.append(p + [nxt])
    return out


def _rule5(ctx: RuleContext) -> bool:
    changed = False
    for a in ctx.ids():
        for b in ctx.nbrs(a):
            if b < a or not _circle_edge(ctx, a, b):
                continue
            for g_ in ctx.nbrs(a):
                if g_ == b or ctx.adj(g_, b) or not _circle_edge(ctx, a, g_):
                    continue
                goal = lambda p: len(p) >= 3 and _circle_edge(ctx, p[-1], b) \
                    and not ctx.adj(p[-1], a) and not ctx.adj(p[-2], b)
                paths = _uncovered_paths(ctx, a, g_, lambda x, y: _circle_edge(ctx, x, y) and y not in (a, b), goal)
                for p in paths:
                    cycle = p + [b, a]
                    for x, y in zip(cycle, cycle[1:]):
                        changed |= ctx.set_mark(x, y, Mark.TAIL, "R5")
                        changed |= ctx.set_mark(y, x, Mark.TAIL, "R5")
                    break
    return changed


def _rule6(ctx: RuleContext) -> bool:
    changed = False
    for b in ctx.ids():
        if not any(ctx.undirected(a, b) for a in ctx.nbrs(b)):
            continue
        for c in ctx.nbrs(b):
            if ctx.at(b, c) == Mark.CIRCLE:
                changed |= ctx.set_mark(b, c, Mark.TAIL, "R6")
    return changed


def _rule7(ctx: RuleContext) -> bool:
    changed = False
    for b in ctx.ids():
        for a in ctx.nbrs(b):
            if not (ctx.at(a, b) in TAILISH and ctx.at(b, a) == Mark.CIRCLE):
                continue
            for c in ctx.nbrs(b):
                if c != a and not ctx.adj(a, c) and ctx.at(b, c) == Mark.CIRCLE:
                    changed |= ctx.set_mark(b, c, Mark.TAIL, "R7")
    return changed


def _pd_step(ctx: RuleContext, x: int, y: int) -> bool:
    return ctx.at(x, y) != Mark.ARROW and ctx.at(y, x) not in TAILISH


def _rules8to10(ctx: RuleContext) -> bool:
    changed = False
    for a in ctx.ids():
        for c in ctx.nbrs(a):
            if not (ctx.at(a, c) == Mark.CIRCLE and ctx.at(c, a) == Mark.ARROW):
                continue
            # R8
            for b in ctx.nbrs(a):
                if b != c and ctx.adj(b, c) and ctx.directed(b, c):
                    if ctx.directed(a, b) or (ctx.at(a, b) in TAILISH and ctx.at(b, a) == Mark.CIRCLE):
                        changed |= ctx.set_mark(a, c, Mark.TAIL, "R8")
                        break
            if ctx.at(a, c) != Mark.CIRCLE:
                continue
            # R9
            done = False
            for b in ctx.nbrs(a):
                if b == c or ctx.adj(b, c) or not _pd_step(ctx, a, b):
                    continue
                paths = _uncovered_paths(ctx, a, b, lambda x, y: _pd_step(ctx, x, y) and y != a,
                                         lambda p: p[-1] == c and len(p) >= 3)
                if paths:
                    changed |= ctx.set_mark(a, c, Mark.TAIL, "R9")
                    done = True
                    break
            if done:
                continue
            # R10
            into = [x for x in ctx.nbrs(c) if x != a and ctx.directed(x, c)]
            for b, t in combinations(into, 2):
                if _r10_match(ctx, a, b, t):
                    changed |= ctx.set_mark(a, c, Mark.TAIL, "R10")
                    break
    return changed


def _r10_match(ctx: RuleContext, a: int, b: int, t: int) -> bool:
    def heads(target: int) -> set[int]:
        firsts = set()
        for m in ctx.nbrs(a):
            if not _pd_step(ctx, a, m):
                continue
            if m == target:
                firsts.add(m)
                continue
            if _uncovered_paths(ctx, a, m, lambda x, y: _pd_step(ctx, x, y) and y != a, lambda p: p[-1] == target):
                firsts.add(m)
        return firsts

    for mu in heads(b):
        for om in heads(t):
            if mu != om and not ctx.adj(mu, om):
                return True
    return False


def apply_rules(ctx: RuleContext, max_rounds: int = 100) -> None:
    """Apply R1-R10 to a fixed point (R0 is applied separately)."""
    rules = (_rule1, _rule2, _rule3, _rule4, _rule5, _rule6, _rule7, _rules8to10)
    for _ in range(max_rounds):
        changed = False
        for r in rules:
            changed |= r(ctx)
        if not changed:
            return
