"""Unit vertex-capacity max-flow on grid subgraphs (vertex-disjoint paths)."""

from __future__ import annotations

from collections import deque
from typing import Callable, Iterable, Sequence

from .grid_core import Coord

Allowed = Callable[[Coord], bool]


def _nbrs(v: Coord) -> tuple[Coord, ...]:
    r, c = v
    return (Coord(r - 1, c), Coord(r + 1, c), Coord(r, c - 1), Coord(r, c + 1))


def disjoint_paths(allowed: Allowed, sources: Sequence[Coord], sinks: Iterable[Coord], limit: int | None = None) -> list[list[Coord]]:
    """Maximum set of vertex-disjoint paths from ``sources`` to ``sinks`` inside ``allowed``.

    Each source and each sink is used at most once. Augmenting paths are found by
    BFS on the split-vertex residual graph, so the result is a maximum flow.
    """
    sources = [s for s in dict.fromkeys(sources) if allowed(s)]
    sink_set = {t for t in sinks if allowed(t)}
    used: set[Coord] = set()  # internal in->out edge saturated
    nxt: dict[Coord, Coord] = {}
    prv: dict[Coord, Coord] = {}
    started: set[Coord] = set()
    ended: set[Coord] = set()
    limit = len(sources) if limit is None else limit
    found = 0
    while found < limit:
        # states: (v, 0) = v_in, (v, 1) = v_out
        par: dict[tuple[Coord, int], tuple[Coord, int] | None] = {}
        q: deque[tuple[Coord, int]] = deque()
        for s in sources:
            if s not in started:
                par[(s, 0)] = None
                q.append((s, 0))
        goal = None
        while q:
            v, side = q.popleft()
            if side == 0:
                if v not in used:
                    st = (v, 1)
                    if st not in par:
                        par[st] = (v, 0)
                        q.append(st)
                elif v in prv:
                    st = (prv[v], 1)
                    if st not in par:
                        par[st] = (v, 0)
                        q.append(st)
                continue
            if v in sink_set and v not in ended:
                goal = v
                break
            if v in used:
                st = (v, 0)
                if st not in par:
                    par[st] = (v, 1)
                    q.append(st)
            for w in _nbrs(v):
                if nxt.get(v) == w or not allowed(w):
                    continue
                st = (w, 0)
                if st not in par:
                    par[st] = (v, 1)
                    q.append(st)
        if goal is None:
            break
        steps = []
        cur: tuple[Coord, int] | None = (goal, 1)
        while cur is not None:
            p = par[cur]
            if p is None:
                started.add(cur[0])
            else:
                steps.append((p, cur))
            cur = p
        ended.add(goal)
        adds = []
        for (a, sa), (b, sb) in steps:
            if a == b:
                if sa == 0:
                    used.add(a)
                else:
                    used.discard(a)
            elif sa == 1:
                adds.append((a, b))
            else:
                # backward along flow b -> a
                if nxt.get(b) == a:
                    del nxt[b]
                    del prv[a]
        for a, b in adds:
            nxt[a] = b
            prv[b] = a
        found += 1
    paths = []
    for s in sources:
        if s not in started:
            continue
        path = [s]
        while path[-1] in nxt:
            path.append(nxt[path[-1]])
        paths.append(path)
    return paths


def shortest_path(allowed: Allowed, s: Coord, t: Coord) -> list[Coord] | None:
    """BFS path from s to t through allowed vertices (s and t must be allowed)."""
    if not (allowed(s) and allowed(t)):
        return None
    par: dict[Coord, Coord | None] = {s: None}
    q = deque([s])
    while q:
        v = q.popleft()
        if v == t:
            out = []
            cur: Coord | None = v
            while cur is not None:
                out.append(cur)
                cur = par[cur]
            return out[::-1]
        for w in _nbrs(v):
            if w not in par and allowed(w):
                par[w] = v
                q.append(w)
    return None
