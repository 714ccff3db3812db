"""Corridors and snakes, routing inside snakes, level-by-level snake construction,
the spaced-out router and the far-from-boundary pipeline."""

from __future__ import annotations

import itertools
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence, Union

from .flow import disjoint_paths
from .grid_core import Coord, GridPath, SubGrid, Verdict
from .hierarchy import Color, ColorSystem, Coloring, SquareSystem


class SnakeError(ValueError):
    pass


class CapacityError(SnakeError):
    pass


class SpacingError(SnakeError):
    pass


# Corridors and snakes


def corridor_width(c: SubGrid) -> int:
    return min(c.height, c.width)


def _meet(a: SubGrid, b: SubGrid) -> Optional[SubGrid]:
    r0, r1 = max(a.rows[0], b.rows[0]), min(a.rows[1], b.rows[1])
    c0, c1 = max(a.cols[0], b.cols[0]), min(a.cols[1], b.cols[1])
    if r0 > r1 or c0 > c1:
        return None
    return SubGrid((r0, r1), (c0, c1))


def _interior(a: SubGrid) -> Optional[SubGrid]:
    if a.height < 3 or a.width < 3:
        return None
    return SubGrid((a.rows[0] + 1, a.rows[1] - 1), (a.cols[0] + 1, a.cols[1] - 1))


def _touches_interior(x: SubGrid, a: SubGrid) -> bool:
    inner = _interior(a)
    return inner is not None and _meet(x, inner) is not None


def check_snake(corridors: Sequence[SubGrid]) -> int:
    """Validate the snake invariants and return the width."""
    if not corridors:
        raise SnakeError("a snake needs at least one corridor")
    width = min(corridor_width(c) for c in corridors)
    # sort by top row so far-apart pairs are skipped cheaply
    order = sorted(range(len(corridors)), key=lambda i: corridors[i].rows[0])
    meets: dict[tuple[int, int], SubGrid] = {}
    for pos, i in enumerate(order):
        a = corridors[i]
        for j in order[pos + 1 :]:
            b = corridors[j]
            if b.rows[0] > a.rows[1]:
                break
            m = _meet(a, b)
            if m is None:
                continue
            lo, hi = min(i, j), max(i, j)
            if hi - lo != 1:
                raise SnakeError(f"corridors {lo} and {hi} intersect but are not consecutive")
            if _touches_interior(m, a) or _touches_interior(m, b):
                raise SnakeError(f"corridors {lo} and {hi} are not internally disjoint")
            meets[(lo, hi)] = m
    for i in range(len(corridors) - 1):
        m = meets.get((i, i + 1))
        if m is None:
            raise SnakeError(f"consecutive corridors {i} and {i + 1} do not touch")
        width = min(width, m.height * m.width)
    return width


@dataclass(frozen=True)
class Snake:
    corridors: tuple[SubGrid, ...]
    width: int = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "corridors", tuple(self.corridors))
        object.__setattr__(self, "width", check_snake(self.corridors))

    def __len__(self) -> int:
        return len(self.corridors)

    def contains(self, v: Coord) -> bool:
        return any(c.contains(v) for c in self.corridors)

    def vertices(self) -> set[Coord]:
        return {v for c in self.corridors for v in c.vertices()}


def compose(s1: Snake, s2: Snake) -> Snake:
    """Concatenation of two snakes whose end corridors share a boundary edge."""
    if _meet(s1.corridors[-1], s2.corridors[0]) is None:
        raise SnakeError("snakes are not composable: end corridors do not touch")
    return Snake(s1.corridors + s2.corridors)


def _edge_of(c: SubGrid, pts: Sequence[Coord]) -> bool:
    rows = {p.row for p in pts}
    cols = {p.col for p in pts}
    if not all(c.contains(p) for p in pts):
        return False
    return (len(rows) == 1 and rows & {c.rows[0], c.rows[1]} != set()) or (
        len(cols) == 1 and cols & {c.cols[0], c.cols[1]} != set()
    )


def route_in_snake(snake: Snake, A: Sequence[Coord], A_prime: Sequence[Coord]) -> list[GridPath]:
    """Node-disjoint paths inside the snake linking every vertex of A to a distinct vertex of A'."""
    A = [Coord(*a) for a in A]
    A_prime = [Coord(*a) for a in A_prime]
    if len(A) != len(A_prime):
        raise SnakeError(f"|A|={len(A)} differs from |A'|={len(A_prime)}")
    if len(set(A)) != len(A) or len(set(A_prime)) != len(A_prime):
        raise SnakeError("A and A' must consist of distinct vertices")
    if len(A) > snake.width - 2:
        raise CapacityError(f"capacity violation: |A|={len(A)} > width-2={snake.width - 2}")
    if not A:
        return []
    if not _edge_of(snake.corridors[0], A):
        raise SnakeError("A does not lie on a single boundary edge of the first corridor")
    if not _edge_of(snake.corridors[-1], A_prime):
        raise SnakeError("A' does not lie on a single boundary edge of the last corridor")
    paths = disjoint_paths(snake.contains, A, A_prime)
    if len(paths) < len(A):
        raise SnakeError(f"only {len(paths)} of {len(A)} paths fit inside the snake")
    out = [GridPath(tuple(p)) for p in paths]
    assert all(snake.contains(v) for p in out for v in p.vertices)
    return out


# Lanes: ribbons of parallel tracks built from vertical bands and horizontal strips


@dataclass(frozen=True)
class Lane:
    """A width-w ribbon whose legs alternate between vertical bands and horizontal strips.

    It starts on ``start_row`` in columns [col0, col0+w-1]; each turn (h, x) is a
    strip on rows [h, h+w-1] followed by a vertical band on columns [x, x+w-1];
    the last band ends on ``end_row``. Track 0 is the traveller's rightmost track.
    """

    w: int
    start_row: int
    col0: int
    turns: tuple[tuple[int, int], ...]
    end_row: int

    def vcol(self, k: int) -> int:
        return self.col0 if k == 0 else self.turns[k - 1][1]

    def _south(self, k: int) -> bool:
        """Direction of vertical band k."""
        here = self.start_row if k == 0 else self.turns[k - 1][0]
        there = self.turns[k][0] if k < len(self.turns) else self.end_row
        return there > here

    def _east(self, k: int) -> bool:
        """Direction of strip k (1-based)."""
        return self.vcol(k) > self.vcol(k - 1)

    def corridors(self) -> list[SubGrid]:
        w, t = self.w, self.turns
        if not t:
            lo, hi = sorted((self.start_row, self.end_row))
            return [SubGrid((lo, hi), (self.col0, self.col0 + w - 1))]
        out = []
        for k in range(len(t) + 1):
            south = self._south(k)
            if k == 0:
                a = self.start_row
            else:
                a = t[k - 1][0] + (w - 1 if south else 0)
            if k < len(t):
                b = t[k][0] if south else t[k][0] + w - 1
            else:
                b = self.end_row
            x = self.vcol(k)
            out.append(SubGrid((min(a, b), max(a, b)), (x, x + w - 1)))
            if k < len(t):
                h = t[k][0]
                x0, x1 = sorted((self.vcol(k), self.vcol(k + 1)))
                out.append(SubGrid((h, h + w - 1), (x0, x1 + w - 1)))
        return out

    def sub(self, off: int, w: int) -> "Lane":
        """Tracks off..off+w-1 as a lane of their own."""
        if off < 0 or off + w > self.w:
            raise ValueError("sub-lane out of range")
        def vshift(k: int, x: int) -> int:
            return x + off if self._south(k) else x + self.w - off - w
        turns = []
        for k, (h, x) in enumerate(self.turns, start=1):
            hh = h + self.w - off - w if self._east(k) else h + off
            turns.append((hh, vshift(k, x)))
        return Lane(w, self.start_row, vshift(0, self.col0), tuple(turns), self.end_row)

    @property
    def end_cols(self) -> tuple[int, int]:
        x = self.vcol(len(self.turns))
        return (x, x + self.w - 1)

    def joinable(self, other: "Lane") -> bool:
        return self.w == other.w and self.end_row == other.start_row and self.end_cols[0] == other.col0

    def join(self, other: "Lane") -> "Lane":
        return Lane(self.w, self.start_row, self.col0, self.turns + other.turns, other.end_row)


Piece = Union[Lane, SubGrid]


def _merge(pieces: Sequence[Piece]) -> list[Piece]:
    out: list[Piece] = []
    for p in pieces:
        if out and isinstance(p, Lane) and isinstance(out[-1], Lane):
            prev = out[-1]
            if not prev.joinable(p):
                raise SpacingError(f"lane pieces do not line up: {prev.end_cols}@{prev.end_row} vs {p.col0}@{p.start_row}")
            out[-1] = prev.join(p)
        else:
            out.append(p)
    return out


def route_corridors(pieces: Sequence[Piece]) -> list[SubGrid]:
    out: list[SubGrid] = []
    for p in _merge(pieces):
        out.extend(p.corridors() if isinstance(p, Lane) else [p])
    return out


def _layout(P: SubGrid, lanes: Sequence[tuple[Color, int]], squares: Sequence[tuple[SubGrid, Color]], exit_: bool) -> dict[Color, list[Piece]]:
    """Child lanes inside the corridor P from its entry interval to its exit interval.

    Lanes enter packed at the top-left of P. Child squares are visited column group by
    column group, top to bottom; between groups the packed ribbon runs east along the
    bottom, north in the inter-group gap and east again along the top. Before each square
    a shuffle band moves the visiting lane onto the square's left edge with lower-index
    lanes passing on the left and higher-index lanes on the right.
    """
    n = len(lanes)
    if n == 1 and len(squares) == 1 and squares[0][0] == P and squares[0][1] == lanes[0][0]:
        # the only child square fills the corridor: the child snake is the corridor itself
        return {lanes[0][0]: [P]}
    ws = [w for _, w in lanes]
    offs = [0] + list(itertools.accumulate(ws))
    W = offs[-1]
    idx = {c: i for i, (c, _) in enumerate(lanes)}
    x = [P.cols[0] + offs[i] for i in range(n)]
    start = [P.rows[0]] * n
    col0 = list(x)
    turns: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    pieces: list[list[Piece]] = [[] for _ in range(n)]

    def close(i: int, end_row: int) -> None:
        pieces[i].append(Lane(ws[i], start[i], col0[i], tuple(turns[i]), end_row))

    def band(y0: int, target: list[int]) -> int:
        """Order-preserving horizontal shuffle starting on row y0; returns its last row."""
        bottom = y0 - 1
        for movers in (sorted((i for i in range(n) if target[i] > x[i]), reverse=True), [i for i in range(n) if target[i] < x[i]]):
            h = y0
            for i in movers:
                turns[i].append((h, target[i]))
                h += ws[i]
            bottom = max(bottom, h - 1)
        x[:] = target
        return bottom

    cols = sorted({s.cols for s, _ in squares})
    groups = [sorted((sq for sq in squares if sq[0].cols == cv), key=lambda sq: sq[0].rows) for cv in cols]
    y = P.rows[0]
    for g, grp in enumerate(groups):
        a_g = grp[0][0].cols[0]
        if g:
            pa, pb = groups[g - 1][0][0].cols
            if not a_g - pb > 3 * W:
                raise SpacingError(f"column gap between square groups: {a_g} - {pb} > 3W = {3 * W} fails")
            bot = band(y + W, [pa + offs[i] for i in range(n)])
            yb, yt = bot + 2 * W, P.rows[0] + W
            if yb > P.rows[1]:
                raise SpacingError(f"bottom leg: band end {bot} + 2W = {yb} <= bottom row {P.rows[1]} fails")
            xg = pb + 2 * W
            xn = xg + 1
            for i in range(n):
                turns[i].append((yb - offs[i] - ws[i] + 1, xg - offs[i] - ws[i] + 1))
                turns[i].append((yt - offs[i] - ws[i] + 1, xn + offs[i]))
                x[i] = xn + offs[i]
            y = yt
        for S, c in grp:
            i = idx[c]
            (u, v), (a, b) = S.rows, S.cols
            WL, WR = offs[i], W - offs[i + 1]
            if a - WL < P.cols[0] or b + WR > P.cols[1]:
                raise SpacingError(f"bypass room at square {S}: {a} - {WL} >= {P.cols[0]} and {b} + {WR} <= {P.cols[1]}")
            target = [a - WL + offs[j] if j < i else a if j == i else b + 1 + offs[j] - offs[i + 1] for j in range(n)]
            bot = band(y + W, target)
            if u < bot + W:
                raise SpacingError(f"row gap above square {S}: top row {u} >= band end {bot} + W = {bot + W} fails")
            close(i, u)
            pieces[i].append(S)
            start[i], col0[i], turns[i], x[i] = v, b - ws[i] + 1, [], b - ws[i] + 1
            y = max(y, v)
    if exit_:
        bot = band(y + W, [P.cols[1] - W + 1 + offs[i] for i in range(n)])
        if P.rows[1] < bot + W:
            raise SpacingError(f"exit room: bottom row {P.rows[1]} >= band end {bot} + W = {bot + W} fails")
        for i in range(n):
            close(i, P.rows[1])
    return {c: pieces[idx[c]] for c, _ in lanes}


def _truncate(pieces: list[Piece]) -> list[Piece]:
    last = max((k for k, p in enumerate(pieces) if isinstance(p, SubGrid)), default=-1)
    return pieces[: last + 1]


@dataclass(frozen=True)
class SnakePlan:
    """Snakes Y(c_h) per level and color, with the interface intervals of every used corridor."""

    q0plus: SubGrid
    snakes: Mapping[int, Mapping[Color, Snake]]
    counts: Mapping[Color, int]
    interfaces: Mapping[SubGrid, tuple[tuple[Coord, ...], tuple[Coord, ...]]]
    entry: tuple[Coord, ...]
    squares_of: Mapping[Color, tuple[SubGrid, ...]]

    def portal(self, j: int) -> Coord:
        """s'_j: the 3j-th leftmost vertex of I'_0 (1-based j)."""
        return self.entry[3 * j - 1]

    def entry_interval(self, c: Color, first_pair: int) -> tuple[Coord, ...]:
        """I'(c): the portals of the color's pairs, given the 1-based index of its first pair."""
        n = self.counts.get(c, 0)
        return tuple(self.portal(j) for j in range(first_pair, first_pair + n))

    def check(self, colors: ColorSystem) -> Verdict:
        """All snake-plan invariants, checked from scratch."""
        rho = colors.rho
        prev_union: dict[Color, set[Coord]] = {(0, 0): set(self.q0plus.vertices())}
        for h in range(1, rho + 1):
            owner: dict[Coord, Color] = {}
            cur_union: dict[Color, set[Coord]] = {}
            first = 1
            for c in colors.colors(h):
                n = self.counts.get(c, 0)
                sn = self.snakes.get(h, {}).get(c)
                if n == 0:
                    continue
                if sn is None:
                    return Verdict.fail("snake", f"color {c} has pairs but no snake")
                if sn.width < 3 * n:
                    return Verdict.fail("width", f"snake of {c} has width {sn.width} < 3N = {3 * n}")
                if not all(self.q0plus.contains(Coord(r, col)) for q in sn.corridors for r in q.rows for col in q.cols):
                    return Verdict.fail("containment", f"snake of {c} leaves Q0+")
                top = sn.corridors[0]
                iv = self.entry_interval(c, first)
                if not all(p.row == top.rows[0] and top.cols[0] <= p.col <= top.cols[1] for p in iv):
                    return Verdict.fail("entry", f"snake of {c} does not start on its interval I'")
                for q in self.squares_of.get(c, ()):
                    if q not in sn.corridors:
                        return Verdict.fail("squares", f"snake of {c} misses square {q}")
                verts = sn.vertices()
                parent = prev_union.get(colors.parent(c))
                if parent is None or not verts <= parent:
                    return Verdict.fail("nesting", f"snake of {c} leaves its parent snake")
                for v in verts:
                    if v in owner:
                        return Verdict.fail("disjoint", f"level-{h} snakes of {owner[v]} and {c} share {v}", v)
                    owner[v] = c
                cur_union[c] = verts
                first += n
            prev_union = cur_union
        return Verdict.valid()


def build_level_snakes(
    squares: SquareSystem,
    colors: ColorSystem,
    coloring: Coloring,
    counts: Mapping[Color, int],
    q0plus: SubGrid,
    margins: Sequence[int],
    nonempty: Iterable[SubGrid],
) -> SnakePlan:
    """Snakes for every color of every level, nested and pairwise disjoint per level.

    ``counts`` gives N(c) for level-rho colors, ``margins[h-1]`` the Q+ margin of level-h
    squares and ``nonempty`` the level-rho squares holding a routed destination.
    """
    rho = colors.rho
    N: dict[Color, int] = defaultdict(int)
    for c, k in counts.items():
        if k:
            for h in range(rho + 1):
                N[colors.ancestor_at(c, h) if h else (0, 0)] += k

    def plus(q: SubGrid, h: int) -> SubGrid:
        m = margins[h - 1]
        return SubGrid((q.rows[0] - m, q.rows[1] + m), (q.cols[0] - m, q.cols[1] + m))

    ne: list[set[SubGrid]] = [set() for _ in range(rho + 1)]
    for q in nonempty:
        for h, a in enumerate(reversed(squares.ancestors(q)), start=1):
            ne[h].add(a)
    kids: dict[Optional[SubGrid], list[SubGrid]] = defaultdict(list)
    for h in range(1, rho + 1):
        for q in sorted(ne[h], key=lambda s: (s.rows, s.cols)):
            kids[squares.parent.get(q)].append(q)
    owner_of_plus: list[dict[SubGrid, SubGrid]] = [{} for _ in range(rho + 1)]
    for h in range(1, rho + 1):
        for q in ne[h]:
            owner_of_plus[h][plus(q, h)] = q
            if not q0plus.contains(Coord(q.rows[0] - margins[h - 1], q.cols[0] - margins[h - 1])) or not q0plus.contains(
                Coord(q.rows[1] + margins[h - 1], q.cols[1] + margins[h - 1])
            ):
                raise SpacingError(f"square {q} with its margin is not inside Q0+ {q0plus}")

    routes: dict[Color, list[Piece]] = {(0, 0): [q0plus]}
    snakes: dict[int, dict[Color, Snake]] = defaultdict(dict)
    squares_of: dict[Color, list[SubGrid]] = defaultdict(list)
    interfaces: dict[SubGrid, tuple[tuple[Coord, ...], tuple[Coord, ...]]] = {}
    for h in range(rho):
        for c in colors.colors(h):
            if not N[c]:
                continue
            lanes = [(cc, 3 * N[cc]) for cc in colors.children(c) if N[cc]]
            offs = dict(zip((cc for cc, _ in lanes), itertools.accumulate([0] + [w for _, w in lanes])))
            got: dict[Color, list[Piece]] = {cc: [] for cc, _ in lanes}
            route = routes[c]
            for k, piece in enumerate(route):
                if isinstance(piece, Lane):
                    for cc, w in lanes:
                        got[cc].append(piece.sub(offs[cc], w))
                    continue
                W = 3 * N[c]
                top = tuple(Coord(piece.rows[0], piece.cols[0] + j) for j in range(W))
                bottom = tuple(Coord(piece.rows[1], piece.cols[1] - W + 1 + j) for j in range(W))
                interfaces[piece] = (top, bottom if k < len(route) - 1 else ())
                inner = [(plus(q, h + 1), coloring.f[q]) for q in kids[owner_of_plus[h][piece] if h else None]]
                for qp, cc in inner:
                    squares_of[cc].append(qp)
                lay = _layout(piece, lanes, inner, exit_=k < len(route) - 1)
                for cc, _ in lanes:
                    got[cc].extend(lay[cc])
            for cc, _ in lanes:
                routes[cc] = _truncate(_merge(got[cc]))
                try:
                    snakes[h + 1][cc] = Snake(route_corridors(routes[cc]))
                except SnakeError as e:
                    raise SpacingError(f"snake of color {cc} is malformed: {e}") from e
    W0 = 3 * N[(0, 0)]
    entry = tuple(Coord(q0plus.rows[0], q0plus.cols[0] + j) for j in range(W0))
    for lvl in range(1, rho + 1):
        for q in ne[lvl]:
            c = coloring.f[q]
            if plus(q, lvl) not in interfaces:
                W = 3 * N[c]
                qp = plus(q, lvl)
                interfaces[qp] = (
                    tuple(Coord(qp.rows[0], qp.cols[0] + j) for j in range(W)),
                    tuple(Coord(qp.rows[1], qp.cols[1] - W + 1 + j) for j in range(W)),
                )
    plan = SnakePlan(
        q0plus,
        {h: dict(v) for h, v in snakes.items()},
        {c: k for c, k in N.items() if k},
        interfaces,
        entry,
        {c: tuple(v) for c, v in squares_of.items()},
    )
    verdict = plan.check(colors)
    if not verdict:
        raise SpacingError(f"snake plan invariant violated: {verdict.message}")
    return plan


# Spaced-out instances


def _left_normal(a: Coord, b: Coord) -> tuple[int, int]:
    dr = (b.row > a.row) - (b.row < a.row)
    dc = (b.col > a.col) - (b.col < a.col)
    return (-dc, dr)


def _offset_polyline(ref: Sequence[Coord], m: int) -> list[Coord]:
    """Track m of a ribbon whose track 0 follows ``ref``; turns are concentric."""
    normals = [_left_normal(a, b) for a, b in zip(ref, ref[1:])]
    out = [Coord(ref[0].row + m * normals[0][0], ref[0].col + m * normals[0][1])]
    for i in range(1, len(ref) - 1):
        n0, n1 = normals[i - 1], normals[i]
        out.append(Coord(ref[i].row + m * (n0[0] + n1[0]), ref[i].col + m * (n0[1] + n1[1])))
    out.append(Coord(ref[-1].row + m * normals[-1][0], ref[-1].col + m * normals[-1][1]))
    return out


def _simplify(points: Sequence[Coord]) -> list[Coord]:
    """Drop repeated and collinear interior points of a rectilinear polyline."""
    out: list[Coord] = []
    for p in points:
        if out and p == out[-1]:
            continue
        if len(out) >= 2 and (out[-2].row == out[-1].row == p.row or out[-2].col == out[-1].col == p.col):
            out[-1] = p
            continue
        out.append(p)
    return out


def _walk(points: Sequence[Coord]) -> list[Coord]:
    out = [points[0]]
    for b in points[1:]:
        a = out[-1]
        if a.row != b.row and a.col != b.col:
            raise AssertionError(f"polyline step {a}->{b} is not axis-parallel")
        dr = (b.row > a.row) - (b.row < a.row)
        dc = (b.col > a.col) - (b.col < a.col)
        while out[-1] != b:
            out.append(Coord(out[-1].row + dr, out[-1].col + dc))
    return out


def check_spaced(inst) -> None:
    """Raise SpacingError unless the instance is spaced out."""
    k, side = inst.k, inst.side
    gap = 8 * k + 8
    srcs = [s for s, _ in inst.pairs]
    if any(s.row != 1 for s in srcs):
        raise SpacingError("spacing violation: every source must lie on the top row")
    if len(set(srcs)) != k:
        raise SpacingError("spacing violation: sources must be distinct")
    for _, t in inst.pairs:
        d = min(t.row - 1, t.col - 1, side - t.row, side - t.col)
        if d < gap:
            raise SpacingError(f"spacing violation: destination {t} is {d} < {gap} from the boundary")
    for (_, a), (_, b) in itertools.combinations(inst.pairs, 2):
        d = abs(a.row - b.row) + abs(a.col - b.col)
        if d < gap:
            raise SpacingError(f"spacing violation: destinations {a} and {b} are {d} < {gap} apart")


def route_spaced_out(inst) -> "Routing":
    """Route all pairs of a spaced-out instance.

    Sources are first packed into the columns 1..k. The resulting ribbon of k tracks
    then sweeps bands of 3k rows, alternating east and west with U-turns in the k
    boundary columns. Near each destination the ribbon jogs vertically so that its
    pair's track passes through it, and that track is truncated there.
    """
    from .grid_core import Routing, verify_routing

    check_spaced(inst)
    k, side = inst.k, inst.side
    if k == 0:
        return Routing(())
    order = sorted(range(k), key=lambda i: inst.pairs[i][0].col)
    lane_of = {pid: m for m, pid in enumerate(order)}
    band_of = lambda r: (r - 2) // (3 * k)
    first_band = min(band_of(t.row) for _, t in inst.pairs)
    last_band = max(band_of(t.row) for _, t in inst.pairs)

    def nominal(b: int, east: bool) -> int:
        top = 2 + 3 * k * b
        return top + 2 * k - 1 if east else top + k

    ref = [Coord(2, 1)]
    east = True
    R = nominal(first_band, True)
    ref.append(Coord(R, 1))
    for b in range(first_band, last_band + 1):
        R = nominal(b, east)
        here = [pid for pid in range(k) if band_of(inst.pairs[pid][1].row) == b]
        here.sort(key=lambda pid: inst.pairs[pid][1].col, reverse=not east)
        sgn = 1 if east else -1
        for pid in here:
            t = inst.pairs[pid][1]
            p = lane_of[pid]
            want = t.row + p if east else t.row - p
            before = (t.col - sgn * (2 * k + 1), t.col - sgn * (k + 1))
            after = (t.col + sgn * (k + 1), t.col + sgn * (2 * k + 1))
            for target, (w0, w1) in ((want, before), (R, after)):
                cur = ref[-1].row
                if target == cur:
                    continue
                lo = min(w0, w1)
                # track m's vertical column is X + m when jogging south, X - m when north
                X = lo if target > cur else lo + k - 1
                ref.append(Coord(cur, X))
                ref.append(Coord(target, X))
        if b < last_band:
            X = side - k + 1 if east else 1
            ref.append(Coord(R, X))
            east = not east
            ref.append(Coord(nominal(b + 1, east), X))
    # run on past the last destination so every track ends on a straight run
    last = max(ref[-1].col * sgn, (t.col + sgn * (2 * k + 2)) * sgn) * sgn
    if last == ref[-1].col:
        last += sgn
    ref.append(Coord(ref[-1].row, last))
    ref = _simplify(ref)

    entries = []
    for pid in range(k):
        m = lane_of[pid]
        s, t = inst.pairs[pid]
        head = _walk([s, Coord(m + 2, s.col), Coord(m + 2, m + 1)]) if s.col != m + 1 else _walk([s, Coord(m + 2, m + 1)])
        track = _offset_polyline(ref, m)
        track[0] = Coord(m + 2, m + 1)
        cells = _walk(track)
        try:
            cut = cells.index(t)
        except ValueError:
            raise AssertionError(f"track {m} misses destination {t}") from None
        path = head + cells[1 : cut + 1]
        entries.append((pid, GridPath(tuple(path))))
    routing = Routing(tuple(entries))
    v = verify_routing(inst, routing)
    assert v, f"spaced-out routing invalid: {v.message}"
    return routing


# Far-from-boundary pipeline


@dataclass(frozen=True)
class FarConfig:
    """Knobs of the far-from-boundary pipeline.

    ``trials`` caps the HSC rounding trials per branch (None: the log^5 n default),
    ``max_branches`` samples that many (square system, L) branches (None: all),
    ``adaptive_stride`` also tries strides below 2 eta^3 and ``augment`` greedily
    adds shortest paths for unrouted pairs at the end.
    """

    trials: Optional[int] = 4
    max_branches: Optional[int] = None
    adaptive_stride: bool = True
    mirror: bool = True
    augment: bool = False


def _expand(q: SubGrid, m: int) -> SubGrid:
    return SubGrid((q.rows[0] - m, q.rows[1] + m), (q.cols[0] - m, q.cols[1] + m))


def _inside(inner: SubGrid, outer: SubGrid) -> bool:
    return outer.rows[0] <= inner.rows[0] and inner.rows[1] <= outer.rows[1] and outer.cols[0] <= inner.cols[0] and inner.cols[1] <= outer.cols[1]


def connector_paths(sources: Sequence[Coord], portals: Sequence[Coord]) -> list[list[Coord]]:
    """Order-preserving paths from top-row sources to portals on one row below.

    A path runs down its source column, along one row, then down to its portal.
    Right-moving paths take rows 2, 3, ... by decreasing index and left-moving paths
    by increasing index, so no two paths cross. Raises SpacingError when the rows
    above the portals run out.
    """
    if not sources:
        return []
    R0 = portals[0].row
    k = len(sources)
    if any(p.row != R0 for p in portals) or any(s.row != 1 for s in sources):
        raise ValueError("connectors need top-row sources and portals on one row")
    right = [j for j in range(k) if portals[j].col > sources[j].col][::-1]
    left = [j for j in range(k) if portals[j].col < sources[j].col]
    if max(len(right), len(left)) > R0 - 2:
        raise SpacingError(f"connector rows: {max(len(right), len(left))} movers > {R0 - 2} free rows")
    row = {j: 2 + i for i, j in enumerate(right)}
    row.update({j: 2 + i for i, j in enumerate(left)})
    out = []
    for j, (s, p) in enumerate(zip(sources, portals)):
        if j not in row:
            out.append(_walk([s, p]))
        else:
            out.append(_walk([s, Coord(row[j], s.col), Coord(row[j], p.col), p]))
    return out


def _mirror_coord(v: Coord, side: int) -> Coord:
    return Coord(v.row, side + 1 - v.col)


def mirror_instance(inst):
    """Reflect columns; the last ell' columns become the first ones."""
    from .grid_core import GridInstance

    m = lambda v: _mirror_coord(v, inst.side)
    return GridInstance(inst.side, tuple((m(s), m(t)) for s, t in inst.pairs), inst.seed)


def mirror_routing(r, side: int):
    from .grid_core import Routing

    return Routing(tuple((i, GridPath(tuple(_mirror_coord(v, side) for v in p.vertices))) for i, p in r.entries))


def greedy_routing(inst, order: Optional[Sequence[int]] = None, blocked: Iterable[Coord] = (), entries: Sequence = ()):
    """Shortest paths one pair at a time, avoiding vertices already used."""
    from .flow import shortest_path
    from .grid_core import Routing, in_grid

    used = set(blocked)
    done = {i for i, _ in entries}
    for _, p in entries:
        used.update(p.vertices)
    out = list(entries)
    for pid in order if order is not None else range(inst.k):
        if pid in done:
            continue
        s, t = inst.pairs[pid]
        if s in used or t in used:
            continue
        path = shortest_path(lambda v: in_grid(v, inst.side) and v not in used, s, t)
        if path is not None:
            used.update(path)
            out.append((pid, GridPath(tuple(path))))
            done.add(pid)
    return Routing(tuple(sorted(out)))


@dataclass
class FarStats:
    branches: int = 0
    hsc_failed: int = 0
    plans_built: int = 0
    spacing_rejects: int = 0
    best_source: str = "fallback"
    first_hsc: object = None  # HscInstance of the first branch with candidates (for LP dumps)
    best_plan: object = None  # SnakePlan behind the best routing, in the caller's coordinates


def _route_plan(inst, sq: SquareSystem, col: ColorSystem, coloring: Coloring, pids: Sequence[int], q0plus: SubGrid, margins: Sequence[int]):
    """Snakes for the given pairs (one per level-rho color), connectors and in-snake paths."""
    from .flow import shortest_path
    from .grid_core import Routing, verify_routing

    pids = sorted(pids, key=lambda p: inst.pairs[p][0].col)
    colr = {p: coloring.f[sq.locate(inst.pairs[p][1])] for p in pids}
    counts = {colr[p]: 1 for p in pids}
    if len(counts) != len(pids):
        raise SpacingError("two routed pairs share a level-rho color")
    plan = build_level_snakes(sq, col, coloring, counts, q0plus, margins, [sq.locate(inst.pairs[p][1]) for p in pids])
    rho = col.rho
    # colors are indexed left to right, so portal order is source order
    order = sorted(pids, key=lambda p: colr[p])
    if order != pids:
        raise SpacingError("source order and color order disagree")
    conns = connector_paths([inst.pairs[p][0] for p in pids], [plan.portal(j) for j in range(1, len(pids) + 1)])
    entries = []
    for j, p in enumerate(pids):
        sn = plan.snakes[rho][colr[p]]
        t = inst.pairs[p][1]
        inner = shortest_path(sn.contains, conns[j][-1], t)
        if inner is None:
            raise AssertionError(f"no path inside the snake of color {colr[p]}")
        entries.append((p, GridPath(tuple(conns[j] + inner[1:]))))
    r = Routing(tuple(sorted(entries)))
    v = verify_routing(inst, r)
    assert v, f"far-from-boundary routing invalid: {v.message}"
    return r, plan


def _far_once(inst, params, rng, cfg: FarConfig, stats: FarStats):
    """One orientation of the pipeline; returns the best (routing, plan) found."""
    from dataclasses import replace

    from .grid_core import Routing
    from .hierarchy import build_l_decomposition, build_square_systems, enumerate_l_sequences
    from .hsc_lp import HscInstance, run_hsc
    from .instances import rng_for

    best = (Routing(()), None)
    d, eta, side = params.d, params.eta, inst.side
    d1 = d[0]
    lp = ((side - 1) // d1) * d1
    if lp < 3 * d1:
        return best
    top = side - lp
    Q0 = SubGrid((top + d1 + 1, side - d1), (d1 + 1, lp - d1))
    q0plus = _expand(Q0, d1 // eta)
    margins = [max(1, dh // eta) for dh in d]
    pars = replace(params, ell_prime=lp)
    systems = build_square_systems(lp, pars, origin=(top, 0))
    branches = [(si, L) for si in range(len(systems)) for L in enumerate_l_sequences(pars, lp)]
    if cfg.max_branches is not None and len(branches) > cfg.max_branches:
        pick = sorted(rng.permutation(len(branches))[: cfg.max_branches])
        branches = [branches[i] for i in pick]
    eligible = [p for p, (s, t) in enumerate(inst.pairs) if s.row == 1 and s.col <= lp and Q0.contains(t)]
    base = 2 * eta**3
    strides = [base]
    while cfg.adaptive_stride and strides[-1] > 1:
        strides.append(strides[-1] // 2)
    for si, L in branches:
        branch_rng = rng_for(int(rng.integers(0, 2**63)))
        sq = systems[si]
        col = ColorSystem(build_l_decomposition(L, lp, eta))
        U = []
        for p in eligible:
            s, t = inst.pairs[p]
            q = sq.locate(t)
            if q is None or not _inside(sq.ancestors(q)[-1], Q0):
                continue
            U.append((t, col.source_color(s.col), p))
        if not U:
            continue
        stats.branches += 1
        hinst = HscInstance(sq, col, tuple(U), d, n=inst.n, overrides=params.polylog_overrides)
        if stats.first_hsc is None:
            stats.first_hsc = hinst
        sol = run_hsc(hinst, cfg.trials, branch_rng)
        if sol.failed or not sol.U_selected:
            stats.hsc_failed += 1
            continue
        picked = sorted({it[2] for it in sol.U_selected}, key=lambda p: inst.pairs[p][0].col)[:d1]
        for stride in strides:
            sub, seen = [], set()
            for p in picked[::stride]:
                c = sol.f.f[sq.locate(inst.pairs[p][1])]
                if c not in seen:
                    seen.add(c)
                    sub.append(p)
            if len(sub) <= len(best[0]):
                continue
            # greedy augmentation: keep each pair whose addition still lays out
            got, chosen = best, []
            for p in sub:
                try:
                    r, plan = _route_plan(inst, sq, col, sol.f, chosen + [p], q0plus, margins)
                except SpacingError:
                    stats.spacing_rejects += 1
                    continue
                stats.plans_built += 1
                chosen.append(p)
                if len(r) > len(got[0]):
                    got = (r, plan)
            if len(got[0]) > len(best[0]):
                best = got
    return best


def route_far_from_boundary(inst, opt_guess: int, params=None, rng=None, config: Optional[FarConfig] = None, stats: Optional[FarStats] = None):
    """Route pairs with top-row sources and destinations far from the boundary.

    For every square system and L-sequence the HSC LP is rounded; the selected pairs are
    truncated to d_1, subsampled, reduced to one pair per level-rho color and routed
    through nested snakes, with connectors from the sources to the portals above Q0+.
    The same is done on the column-mirrored instance. When nothing routes, one pair is
    routed by a shortest path.
    """
    from .grid_core import Routing, boundary_dist, derive_params, verify_routing
    from .instances import rng_for

    cfg = config or FarConfig()
    stats = stats if stats is not None else FarStats()
    if opt_guess < 1:
        raise ValueError("opt_guess must be at least 1")
    params = params or derive_params(max(inst.n, 4), opt_guess)
    rng = rng if rng is not None else rng_for(inst.seed)
    need = opt_guess / params.eta
    for i, (s, t) in enumerate(inst.pairs):
        if s.row != 1:
            raise ValueError(f"pair {i}: source {s} is not on the top row")
        if boundary_dist(t, inst.side) < need:
            raise ValueError(f"pair {i}: destination {t} closer than opt_guess/eta = {need:g} to the boundary")
    best = Routing(())
    if inst.k and not params.degenerate:
        for mirrored in (False, True) if cfg.mirror else (False,):
            sub = mirror_instance(inst) if mirrored else inst
            r, plan = _far_once(sub, params, rng_for(int(rng.integers(0, 2**63))), cfg, stats)
            if mirrored:
                r = mirror_routing(r, inst.side)
            if len(r) > len(best):
                best = r
                stats.best_source = "snakes-mirrored" if mirrored else "snakes"
                stats.best_plan = None if mirrored else plan
    if not len(best) and inst.k:
        best = greedy_routing(inst, order=range(inst.k))
        best = Routing(best.entries[:1])
    if cfg.augment:
        best = greedy_routing(inst, entries=best.entries)
    v = verify_routing(inst, best)
    assert v, f"far-from-boundary output invalid: {v.message}"
    return best
