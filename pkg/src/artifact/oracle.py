"""Exact brute-force solvers used as ground truth: NDP, HSC and the distance property."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional, Sequence

from .grid_core import Coord, GridInstance, GridPath, Routing, verify_routing


class BudgetExceeded(RuntimeError):
    pass


# Exact NDP


class _BitGrid:
    """Vertex sets of a small grid as Python int bitmasks."""

    def __init__(self, side: int):
        self.side = side
        self.full = (1 << side * side) - 1
        left_col = sum(1 << (r * side) for r in range(side))
        self.not_left = self.full & ~left_col
        self.not_right = self.full & ~(left_col << (side - 1))
        self.nbr = [self.spread(1 << i) for i in range(side * side)]

    def bit(self, c: Coord) -> int:
        return (c.row - 1) * self.side + (c.col - 1)

    def coord(self, i: int) -> Coord:
        return Coord(i // self.side + 1, i % self.side + 1)

    def spread(self, m: int) -> int:
        s = self.side
        return (
            ((m << 1) & self.not_left)
            | ((m >> 1) & self.not_right)
            | ((m << s) & self.full)
            | (m >> s)
        )

    def reach(self, src: int, free: int) -> int:
        cur = src
        while True:
            nxt = cur | (self.spread(cur) & free)
            if nxt == cur:
                return cur
            cur = nxt


def _route_all(bg: _BitGrid, terms: list[tuple[int, int]], blocked: int) -> Optional[list[list[int]]]:
    """Backtracking over induced paths; ``blocked`` holds all terminals and used vertices."""
    if not terms:
        return []
    s, t = terms[0]
    rest = terms[1:]
    if s == t:
        sub = _route_all(bg, rest, blocked)
        return None if sub is None else [[s], *sub]
    tbit = 1 << t
    nbr = bg.nbr

    def connected(occ: int) -> bool:
        free = bg.full & ~occ
        for a, b in rest:
            if a != b and not bg.reach(1 << a, free | (1 << b)) >> b & 1:
                return False
        return True

    path = [s]

    def dfs(head: int, pmask: int) -> Optional[list[list[int]]]:
        if nbr[head] & tbit:
            occ = blocked | pmask | tbit
            if connected(occ):
                sub = _route_all(bg, rest, occ)
                if sub is not None:
                    return [path + [t], *sub]
            # any longer path through a neighbour of t would not be induced
            return None
        free = bg.full & ~(blocked | pmask)
        if not bg.reach(1 << head, free | tbit) >> t & 1:
            return None
        cand = nbr[head] & free
        while cand:
            low = cand & -cand
            v = low.bit_length() - 1
            cand ^= low
            if nbr[v] & pmask != 1 << head:
                continue
            path.append(v)
            got = dfs(v, pmask | low)
            path.pop()
            if got is not None:
                return got
        return None

    return dfs(s, 1 << s)


def _feasible(bg: _BitGrid, pairs: Sequence[tuple[Coord, Coord]]) -> Optional[list[GridPath]]:
    terms = [(bg.bit(s), bg.bit(t)) for s, t in pairs]
    verts = [v for st in terms for v in set(st)]
    if len(verts) != len(set(verts)):
        return None
    blocked = 0
    for v in verts:
        blocked |= 1 << v
    # short pairs first shrinks the search tree
    order = sorted(range(len(terms)), key=lambda i: abs(pairs[i][0].row - pairs[i][1].row) + abs(pairs[i][0].col - pairs[i][1].col))
    got = _route_all(bg, [terms[i] for i in order], blocked)
    if got is None:
        return None
    paths: list[GridPath] = [GridPath(())] * len(pairs)
    for i, p in zip(order, got):
        paths[i] = GridPath(tuple(bg.coord(v) for v in p))
    return paths


def exact_ndp(inst: GridInstance, max_side: int = 6, max_k: int = 4) -> tuple[int, Routing]:
    """Maximum number of simultaneously routable pairs, with a witness routing."""
    if inst.side > max_side or inst.k > max_k:
        raise BudgetExceeded(f"exact_ndp budget: side {inst.side} > {max_side} or k {inst.k} > {max_k}")
    bg = _BitGrid(inst.side)
    idx = list(range(inst.k))
    for size in range(inst.k, 0, -1):
        for subset in itertools.combinations(idx, size):
            paths = _feasible(bg, [inst.pairs[i] for i in subset])
            if paths is not None:
                r = Routing(tuple(zip(subset, paths)))
                assert verify_routing(inst, r), "oracle produced an invalid witness"
                return size, r
    return 0, Routing(())


# Exact HSC


def _count_colorings(inst, sq, col, children, relevant) -> int:
    def cnt(q, c) -> int:
        total = 1
        for qc in children.get(q, []):
            if qc in relevant:
                total *= sum(cnt(qc, cc) for cc in col.children(c))
        return total

    total = 1
    for q in sq.levels[0]:
        if q in relevant:
            total *= sum(cnt(q, c) for c in col.colors(1))
    return total


def _laminar_best(inst, avail: dict) -> tuple[int, dict]:
    """Max selection under nested caps: bottom-up min(cap, sum of children)."""
    col, rho = inst.colors, inst.rho
    take: dict = {}

    def val(c) -> int:
        if c[0] == rho:
            v = min(avail.get(c, 0), inst.d[rho - 1])
        else:
            v = min(inst.d[c[0] - 1], sum(val(cc) for cc in col.children(c)))
        take[c] = v
        return v

    total = sum(val(c) for c in col.colors(1))

    # push the quotas back down to level-rho colors
    quota: dict = {}

    def push(c, q) -> None:
        if c[0] == rho:
            quota[c] = q
            return
        for cc in col.children(c):
            g = min(q, take[cc])
            push(cc, g)
            q -= g

    for c in col.colors(1):
        push(c, take[c])
    return total, quota


def exact_hsc(inst, budget: int = 10**6):
    """Maximum |U'| over all valid colorings, with a witness (Coloring, selection)."""
    from collections import defaultdict

    from .hierarchy import Coloring

    sq, col, rho = inst.squares, inst.colors, inst.rho
    children: dict = defaultdict(list)
    for ch, par in sq.parent.items():
        children[par].append(ch)
    by_sq: dict = defaultdict(list)
    for item in inst.U:
        by_sq[sq.locate(item[0])].append(item)
    # squares whose subtree holds no U vertex cannot affect the value
    relevant = set()
    for q in by_sq:
        relevant.update(sq.ancestors(q))
    if _count_colorings(inst, sq, col, children, relevant) > budget:
        raise BudgetExceeded("exact_hsc: too many colorings")

    best = (-1, None, ())
    order = [q for h in range(rho) for q in sq.levels[h] if q in relevant]
    f: dict = {}

    def evaluate() -> None:
        nonlocal best
        avail: dict = defaultdict(int)
        items: dict = defaultdict(list)
        for q in sq.levels[rho - 1]:
            if q in relevant:
                for item in by_sq[q]:
                    if item[1] == f[q]:
                        avail[item[1]] += 1
                        items[item[1]].append(item)
        total, quota = _laminar_best(inst, avail)
        if total > best[0]:
            sel = tuple(it for c, lst in sorted(items.items()) for it in sorted(lst, key=lambda t: (t[0], t[2]))[: quota.get(c, 0)])
            best = (total, dict(f), sel)

    def rec(i: int) -> None:
        if i == len(order):
            evaluate()
            return
        q = order[i]
        opts = col.colors(1) if q not in sq.parent else col.children(f[sq.parent[q]])
        for c in opts:
            f[q] = c
            rec(i + 1)
        del f[q]

    rec(0)
    total, fmap, sel = best
    full = dict(fmap)
    # complete the coloring on irrelevant squares with first children
    for h in range(rho):
        for q in sq.levels[h]:
            if q not in full:
                full[q] = col.colors(1)[0] if h == 0 else col.children(full[sq.parent[q]])[0]
    return total, (Coloring(sq, full), sel)


# Distance property


def _property_ok_batch(kept, between_ok) -> "np.ndarray":
    """For each kept-mask row, whether every kept pair meets N <= d."""
    import numpy as np

    k = kept.shape[1]
    pref = np.zeros((kept.shape[0], k + 1), dtype=np.int32)
    np.cumsum(kept, axis=1, out=pref[:, 1:])
    ok = np.ones(kept.shape[0], dtype=bool)
    for a, b, d in between_ok:
        n = pref[:, b] - pref[:, a + 1]  # kept sources strictly between a and b
        ok &= ~(kept[:, a] & kept[:, b] & (n > d))
    return ok


def max_distance_property_subset(inst: GridInstance, threshold: int = 1, chunk: int = 50_000) -> Optional[int]:
    """Largest subset with the 1-distance property, or None if none has size >= threshold.

    The property is inherited by subsets, so removal sets are tried by increasing size
    and the first size with a valid subset is the maximum.
    """
    import numpy as np

    k = inst.k
    if threshold <= 1:
        if k > 20:
            raise BudgetExceeded(f"full maximum needs k <= 20, got {k}")
        threshold = 1
    elif k > 40:
        raise BudgetExceeded(f"threshold search needs k <= 40, got {k}")
    if k == 0:
        return None if threshold > 0 else 0
    srcs = [s for s, _ in inst.pairs]
    if any(s.row != 1 for s in srcs) or len(set(srcs)) != k:
        raise ValueError("distance property needs distinct sources on the top row")
    order = sorted(range(k), key=lambda i: srcs[i].col)
    dst = [inst.pairs[i][1] for i in order]
    # only pairs that can violate matter: at least d+1 sources strictly between
    risky = [
        (a, b, abs(dst[a].row - dst[b].row) + abs(dst[a].col - dst[b].col))
        for a in range(k)
        for b in range(a + 1, k)
    ]
    risky = [(a, b, d) for a, b, d in risky if b - a - 1 > d]
    for removed in range(0, k - threshold + 1):
        combos = itertools.combinations(range(k), removed)
        while True:
            block = list(itertools.islice(combos, chunk))
            if not block:
                break
            kept = np.ones((len(block), k), dtype=bool)
            if removed:
                idx = np.array(block)
                kept[np.arange(len(block))[:, None], idx] = False
            if _property_ok_batch(kept, risky).any():
                return k - removed
    return None
