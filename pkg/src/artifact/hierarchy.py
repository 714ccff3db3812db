"""Hierarchical interval and square systems, L-decompositions of the top row,
color systems, perfect-set and compatibility checks, and shadow utilities."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Hashable, Iterable, Mapping, Optional, Sequence

from .grid_core import Coord, Params, SubGrid, Verdict

Interval = tuple[int, int]  # inclusive
Pair = tuple[Coord, Coord]


def separated(a: Interval, b: Interval, d: int) -> bool:
    """True iff |i - j| > d for all i in a, j in b."""
    gap = b[0] - a[1] if a[1] < b[0] else a[0] - b[1]
    return gap > d


def split_interval(iv: Interval, size: int) -> list[Interval]:
    lo, hi = iv
    if (hi - lo + 1) % size:
        raise ValueError(f"interval {iv} not divisible into blocks of {size}")
    return [(s, s + size - 1) for s in range(lo, hi + 1, size)]


def is_canonical(intervals: Sequence[Interval], d: int) -> bool:
    ivs = sorted(intervals)
    if any(hi - lo + 1 != d for lo, hi in ivs):
        return False
    return all(separated(a, b, d) for a, b in zip(ivs, ivs[1:]))


@dataclass(frozen=True)
class IntervalSystem:
    levels: tuple[tuple[Interval, ...], ...]

    def universe(self) -> set[int]:
        return {x for lo, hi in self.levels[-1] for x in range(lo, hi + 1)}

    def locate(self, h: int, x: int) -> Optional[int]:
        """Index of the level-h interval (1-based level) containing x, or None."""
        for i, (lo, hi) in enumerate(self.levels[h - 1]):
            if lo <= x <= hi:
                return i
        return None


def _check_divisible(ell_prime: int, params: Params) -> None:
    if ell_prime <= 0 or ell_prime % params.d[0]:
        raise ValueError(f"ell_prime={ell_prime} is not a positive multiple of d_1={params.d[0]}")


def build_interval_systems(ell_prime: int, params: Params) -> list[IntervalSystem]:
    """The 2**rho interval systems from odd/even splitting, level by level."""
    _check_divisible(ell_prime, params)
    blocks = split_interval((1, ell_prime), params.d[0])
    systems = [(tuple(blocks[0::2]),), (tuple(blocks[1::2]),)]
    for h in range(2, params.rho + 1):
        nxt = []
        for sys in systems:
            odd, even = [], []
            for iv in sys[-1]:
                parts = split_interval(iv, params.d[h - 1])
                odd += parts[0::2]
                even += parts[1::2]
            nxt.append(sys + (tuple(odd),))
            nxt.append(sys + (tuple(even),))
        systems = nxt
    return [IntervalSystem(s) for s in systems]


@dataclass(frozen=True)
class SquareSystem:
    """Product of a row and a column interval system; squares in grid coordinates.

    ``origin`` is added to interval coordinates, so local position x on the
    row axis is grid row origin[0] + x.
    """

    row_system: IntervalSystem
    col_system: IntervalSystem
    origin: tuple[int, int] = (0, 0)
    levels: tuple[tuple[SubGrid, ...], ...] = field(init=False)
    parent: Mapping[SubGrid, SubGrid] = field(init=False)

    def __post_init__(self) -> None:
        r0, c0 = self.origin
        levels = []
        parent: dict[SubGrid, SubGrid] = {}
        for h in range(len(self.row_system.levels)):
            sq = []
            for ri in self.row_system.levels[h]:
                for ci in self.col_system.levels[h]:
                    q = SubGrid((ri[0] + r0, ri[1] + r0), (ci[0] + c0, ci[1] + c0))
                    sq.append(q)
                    if h:
                        parent[q] = self._enclosing(levels[h - 1], q)
            levels.append(tuple(sq))
        object.__setattr__(self, "levels", tuple(levels))
        object.__setattr__(self, "parent", parent)

    @staticmethod
    def _enclosing(cands: Iterable[SubGrid], q: SubGrid) -> SubGrid:
        for p in cands:
            if p.rows[0] <= q.rows[0] and q.rows[1] <= p.rows[1] and p.cols[0] <= q.cols[0] and q.cols[1] <= p.cols[1]:
                return p
        raise AssertionError(f"square {q} has no parent")

    @property
    def rho(self) -> int:
        return len(self.levels)

    def locate(self, v: Coord, h: Optional[int] = None) -> Optional[SubGrid]:
        """Level-h square (default level rho) containing v, or None."""
        h = h or self.rho
        ri = self.row_system.locate(h, v.row - self.origin[0])
        ci = self.col_system.locate(h, v.col - self.origin[1])
        if ri is None or ci is None:
            return None
        return self.levels[h - 1][ri * len(self.col_system.levels[h - 1]) + ci]

    def ancestors(self, q: SubGrid) -> list[SubGrid]:
        """q followed by its parent, grandparent, ... up to level 1."""
        out = [q]
        while out[-1] in self.parent:
            out.append(self.parent[out[-1]])
        return out

    def level_of(self, q: SubGrid) -> int:
        return len(self.ancestors(q))


def build_square_systems(ell_prime: int, params: Params, origin: tuple[int, int] = (0, 0)) -> list[SquareSystem]:
    """The 4**rho square systems; system (i, j) in the returned order is index (i-1)*2**rho + (j-1)."""
    ivs = build_interval_systems(ell_prime, params)
    return [SquareSystem(ri, ci, origin) for ri in ivs for ci in ivs]


def square_system_index(i: int, j: int, rho: int) -> int:
    return (i - 1) * 2**rho + (j - 1)


# L-decompositions and colors


def is_power_of(x: int, base: int) -> bool:
    if x < 1:
        return False
    while x % base == 0:
        x //= base
    return x == 1


@dataclass(frozen=True)
class LDecomposition:
    """Nested partitions J_1..J_r of the top row; ``offset`` shifts local columns."""

    L: tuple[int, ...]
    levels: tuple[tuple[Interval, ...], ...]
    offset: int = 0

    def locate(self, h: int, col: int) -> Optional[int]:
        x = col - self.offset
        lvl = self.levels[h - 1]
        if not lvl or not lvl[0][0] <= x <= lvl[-1][1]:
            return None
        return (x - 1) // self.L[h - 1]


def build_l_decomposition(L: Sequence[int], ell_prime: int, eta: int = 2, offset: int = 0) -> LDecomposition:
    L = tuple(int(x) for x in L)
    if not L:
        raise ValueError("L must be nonempty")
    for x in L:
        if not is_power_of(x, eta) or x < eta:
            raise ValueError(f"L entry {x} is not a positive power of eta={eta}")
    if any(a <= b for a, b in zip(L, L[1:])):
        raise ValueError(f"L must be strictly decreasing, got {L}")
    if ell_prime % L[0]:
        raise ValueError(f"ell_1={L[0]} does not divide ell_prime={ell_prime}")
    levels = [tuple(split_interval((1, ell_prime), L[0]))]
    for size in L[1:]:
        levels.append(tuple(p for iv in levels[-1] for p in split_interval(iv, size)))
    return LDecomposition(L, tuple(levels), offset)


def enumerate_l_sequences(params: Params, ell_prime: Optional[int] = None) -> list[tuple[int, ...]]:
    """All strictly decreasing length-rho sequences of powers eta**e (e >= 1) dividing ell_prime."""
    ell_prime = params.ell_prime if ell_prime is None else ell_prime
    powers = []
    p = params.eta
    while p <= ell_prime:
        if ell_prime % p == 0:
            powers.append(p)
        p *= params.eta
    powers.sort(reverse=True)
    out: list[tuple[int, ...]] = []

    def rec(start: int, acc: tuple[int, ...]) -> None:
        if len(acc) == params.rho:
            out.append(acc)
            return
        for i in range(start, len(powers)):
            rec(i + 1, acc + (powers[i],))

    rec(0, ())
    return out


Color = tuple[int, int]  # (level h, index of the interval in J_h); level 0 is (0, 0)


@dataclass(frozen=True)
class ColorSystem:
    decomp: LDecomposition

    @property
    def rho(self) -> int:
        return len(self.decomp.L)

    def colors(self, h: int) -> list[Color]:
        if h == 0:
            return [(0, 0)]
        return [(h, i) for i in range(len(self.decomp.levels[h - 1]))]

    def parent(self, c: Color) -> Color:
        h, i = c
        if h <= 1:
            return (0, 0)
        ratio = self.decomp.L[h - 2] // self.decomp.L[h - 1]
        return (h - 1, i // ratio)

    def children(self, c: Color) -> list[Color]:
        h, i = c
        if h == self.rho:
            return []
        if h == 0:
            return self.colors(1)
        ratio = self.decomp.L[h - 1] // self.decomp.L[h]
        return [(h + 1, i * ratio + j) for j in range(ratio)]

    def ancestor_at(self, c: Color, h: int) -> Color:
        while c[0] > h:
            c = self.parent(c)
        return c

    def descendants(self, c: Color, h: int) -> list[Color]:
        """chi~_h(c): level-h descendants of c."""
        cur = [c]
        while cur and cur[0][0] < h:
            cur = [x for y in cur for x in self.children(y)]
        return cur

    def interval(self, c: Color) -> Interval:
        return self.decomp.levels[c[0] - 1][c[1]]

    def source_color(self, col: int, h: Optional[int] = None) -> Optional[Color]:
        h = h or self.rho
        i = self.decomp.locate(h, col)
        return None if i is None else (h, i)


@dataclass(frozen=True)
class Coloring:
    system: SquareSystem
    f: Mapping[SubGrid, Color]

    def check_valid(self, colors: ColorSystem) -> Verdict:
        for h, lvl in enumerate(self.system.levels, start=1):
            for q in lvl:
                c = self.f.get(q)
                if c is None or c[0] != h:
                    return Verdict.fail("coloring", f"square {q} lacks a level-{h} color")
                if h > 1 and colors.parent(c) != self.f[self.system.parent[q]]:
                    return Verdict.fail("coloring", f"square {q} color {c} is not a child of its parent's color")
        return Verdict.valid()

    def vertex_color(self, v: Coord, h: Optional[int] = None) -> Optional[Color]:
        q = self.system.locate(v, h)
        return None if q is None else self.f[q]


def is_perfect_set(
    pairs_subset: Sequence[Pair],
    coloring: Coloring,
    colors: ColorSystem,
    decomp: LDecomposition,
    params: Params,
) -> Verdict:
    rho = colors.rho
    srcs = [s for s, _ in pairs_subset]
    dsts = [t for _, t in pairs_subset]
    if len(set(srcs)) != len(srcs) or len(set(dsts)) != len(dsts):
        return Verdict.fail("distinct", "sources or destinations not distinct")
    counts: dict[Color, int] = defaultdict(int)
    for s, t in pairs_subset:
        ct = coloring.vertex_color(t)
        if ct is None:
            raise ValueError(f"destination {t} lies outside the square system")
        cs = colors.source_color(s.col)
        if cs != ct:
            return Verdict.fail("color agreement", f"pair {s}->{t}: source color {cs} != destination color {ct}", t)
        for h in range(1, rho + 1):
            counts[colors.ancestor_at(ct, h)] += 1
    for c, cnt in counts.items():
        if cnt > params.d[c[0] - 1]:
            return Verdict.fail("cap", f"color {c} carries {cnt} > d_{c[0]}={params.d[c[0] - 1]} pairs")
    return Verdict.valid()


def is_compatible(pairs_subset: Sequence[Pair], decomp: LDecomposition, params: Params) -> Verdict:
    for h in range(1, len(decomp.L) + 1):
        counts: dict[int, int] = defaultdict(int)
        for s, _ in pairs_subset:
            i = decomp.locate(h, s.col)
            if i is not None:
                counts[i] += 1
        lo = Fraction(params.d[h - 1], 16 * params.eta)
        hi = Fraction(params.d[h - 1], 4)
        for i, cnt in sorted(counts.items()):
            if not lo <= cnt <= hi:
                return Verdict.fail(
                    "compatibility", f"level-{h} interval {decomp.levels[h - 1][i]} holds {cnt} sources, outside [{lo}, {hi}]"
                )
    return Verdict.valid()


# Shadows


def shadow_length(square: SubGrid, pairs_subset: Sequence[Pair]) -> tuple[Optional[Interval], int]:
    cols = [s.col for s, _ in pairs_subset]
    if len(set(cols)) != len(cols):
        raise ValueError("duplicate sources")
    inside = [s.col for s, t in pairs_subset if square.contains(t)]
    if not inside:
        return None, 0
    lo, hi = min(inside), max(inside)
    return (lo, hi), sum(lo <= c <= hi for c in cols)


def has_shadow_property(square: SubGrid, pairs_subset: Sequence[Pair], beta: float) -> bool:
    return shadow_length(square, pairs_subset)[1] <= beta * square.height


def boost_shadow(pairs_subset: Sequence[Pair], beta1: float, beta2: float) -> list[Pair]:
    """Keep every 2*ceil(beta2/beta1)-th pair in source-column order."""
    step = 2 * math.ceil(Fraction(beta2) / Fraction(beta1))
    ordered = sorted(pairs_subset, key=lambda p: (p[0].col, p[0].row))
    return ordered[0::step]


# Forests


@dataclass(frozen=True)
class Forest:
    """Directed forest with edges toward the roots (``parent`` has out-degree <= 1)."""

    nodes: tuple[Hashable, ...]
    parent: Mapping[Hashable, Hashable]
    weights: Mapping[Hashable, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        nodes = set(self.nodes)
        for v, p in self.parent.items():
            if v not in nodes or p not in nodes:
                raise ValueError(f"edge {v}->{p} leaves the node set")
        for v in self.nodes:
            seen = {v}
            while v in self.parent:
                v = self.parent[v]
                if v in seen:
                    raise ValueError("forest contains a cycle")
                seen.add(v)

    def root_of(self, v: Hashable) -> Hashable:
        while v in self.parent:
            v = self.parent[v]
        return v


def partition_forest(f: Forest) -> list[list[Hashable]]:
    """Leaf-path peeling: layers Y_1..Y_t whose induced subgraphs are directed paths."""
    alive = set(f.nodes)
    children: dict[Hashable, set] = defaultdict(set)
    for v, p in f.parent.items():
        children[p].add(v)
    layers: list[list[Hashable]] = []
    order = {v: i for i, v in enumerate(f.nodes)}
    while alive:
        layer: list[Hashable] = []
        by_tree: dict[Hashable, list] = defaultdict(list)
        for v in alive:
            by_tree[f.root_of(v)].append(v)
        for root, verts in by_tree.items():

            def deg(v: Hashable) -> int:
                return len(children[v]) + (1 if v in f.parent else 0)

            # a tree that is already a directed path is taken whole
            if all(len(children[v]) <= 1 for v in verts):
                layer += verts
                continue
            for v in verts:
                if children[v] or v == root:
                    continue
                u = v
                while u != root and deg(u) <= 2:
                    layer.append(u)
                    u = f.parent[u]
        layer.sort(key=order.__getitem__)
        layers.append(layer)
        for v in layer:
            alive.discard(v)
            if v in f.parent:
                children[f.parent[v]].discard(v)
        # remaining nodes whose parent was removed cannot exist: paths end below a kept vertex
    return layers


def check_forest_partition(f: Forest, layers: Sequence[Sequence[Hashable]]) -> Verdict:
    """Postconditions of partition_forest, checked independently of the construction."""
    n = len(f.nodes)
    flat = [v for y in layers for v in y]
    if sorted(map(repr, flat)) != sorted(map(repr, f.nodes)) or len(flat) != n:
        return Verdict.fail("partition", "layers do not partition the nodes")
    if n > 1 and len(layers) > max(1, math.ceil(math.log2(n))):
        return Verdict.fail("depth", f"{len(layers)} layers > ceil(log2 {n})")
    for j, y in enumerate(layers, start=1):
        ys = set(y)
        indeg: dict[Hashable, int] = defaultdict(int)
        for v in y:
            p = f.parent.get(v)
            if p in ys:
                indeg[p] += 1
        if any(c > 1 for c in indeg.values()):
            return Verdict.fail("paths", f"layer {j} induces a branching subgraph")
        # path id = topmost vertex reached by following in-layer parent edges
        def top(v: Hashable) -> Hashable:
            while f.parent.get(v) in ys:
                v = f.parent[v]
            return v

        tops = {v: top(v) for v in y}
        for v in y:
            u = f.parent.get(v)
            while u is not None:
                if u in ys and tops[u] != tops[v]:
                    return Verdict.fail("ancestry", f"layer {j}: {v} and ancestor {u} on different paths")
                u = f.parent.get(u)
    return Verdict.valid()
