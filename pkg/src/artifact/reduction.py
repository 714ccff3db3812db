"""Restricted NDP-Grid with boundary sources: classification, modified instances,
interval-pair selection, the three boundary cases and the top-level dispatcher."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .flow import disjoint_paths, shortest_path
from .grid_core import Coord, GridInstance, GridPath, Routing, SubGrid, boundary_dist, derive_params, in_grid, on_boundary, verify_routing
from .snake_router import FarConfig, FarStats, greedy_routing, route_far_from_boundary

EDGES = ("top", "right", "bottom", "left")  # clockwise


class GeometryError(ValueError):
    pass


class CapacityError(ValueError):
    pass


# Boundary geometry


def edge_of(v: Coord, side: int) -> Optional[str]:
    """First boundary edge (clockwise from top) containing v."""
    if v.row == 1:
        return "top"
    if v.col == side:
        return "right"
    if v.row == side:
        return "bottom"
    if v.col == 1:
        return "left"
    return None


def nearest_boundary(t: Coord, side: int) -> Coord:
    """t~: the closest boundary vertex, ties broken by smallest (row, col)."""
    cands = [Coord(1, t.col), Coord(side, t.col), Coord(t.row, 1), Coord(t.row, side)]
    return min(cands, key=lambda c: (abs(c.row - t.row) + abs(c.col - t.col), c))


def perimeter(side: int) -> int:
    return max(1, 4 * (side - 1))


def boundary_pos(v: Coord, side: int) -> int:
    """Clockwise position on the boundary cycle, 0 at the top-left corner."""
    e = edge_of(v, side)
    if e == "top":
        return v.col - 1
    if e == "right":
        return (side - 1) + (v.row - 1)
    if e == "bottom":
        return 2 * (side - 1) + (side - v.col)
    if e == "left":
        return 3 * (side - 1) + (side - v.row)
    raise ValueError(f"{v} is not on the boundary")


@dataclass(frozen=True)
class BInterval:
    """Consecutive vertices of one boundary edge; lo..hi along the edge coordinate
    (column for top and bottom, row for left and right)."""

    edge: str
    lo: int
    hi: int

    def vertices(self, side: int) -> list[Coord]:
        if self.edge == "top":
            return [Coord(1, c) for c in range(self.lo, self.hi + 1)]
        if self.edge == "bottom":
            return [Coord(side, c) for c in range(self.lo, self.hi + 1)]
        if self.edge == "left":
            return [Coord(r, 1) for r in range(self.lo, self.hi + 1)]
        return [Coord(r, side) for r in range(self.lo, self.hi + 1)]

    def contains(self, v: Coord, side: int) -> bool:
        along = v.col if self.edge in ("top", "bottom") else v.row
        fixed = {"top": v.row == 1, "bottom": v.row == side, "left": v.col == 1, "right": v.col == side}[self.edge]
        return fixed and self.lo <= along <= self.hi

    def __len__(self) -> int:
        return self.hi - self.lo + 1


def boundary_gap(a: BInterval, b: BInterval, side: int) -> int:
    """Number of boundary vertices strictly between two disjoint intervals (shorter way round)."""
    P = perimeter(side)
    pa = sorted(boundary_pos(v, side) for v in a.vertices(side))
    pb = sorted(boundary_pos(v, side) for v in b.vertices(side))
    if set(pa) & set(pb):
        return -1
    best = P
    for x in (pa[0], pa[-1]):
        for y in (pb[0], pb[-1]):
            g = (y - x) % P
            best = min(best, g - 1, P - g - 1)
    return best


# Symmetries of the square


@dataclass(frozen=True)
class Frame:
    """Mirror columns (optionally), then rotate k quarter turns clockwise."""

    side: int
    k: int = 0
    mirror: bool = False

    def fwd(self, v: Coord) -> Coord:
        r, c = v
        if self.mirror:
            c = self.side + 1 - c
        for _ in range(self.k % 4):
            r, c = c, self.side + 1 - r
        return Coord(r, c)

    def back(self, v: Coord) -> Coord:
        r, c = v
        for _ in range(self.k % 4):
            r, c = self.side + 1 - c, r
        if self.mirror:
            c = self.side + 1 - c
        return Coord(r, c)

    def edge(self, e: str) -> str:
        mid = {"top": Coord(1, 2), "right": Coord(2, self.side), "bottom": Coord(self.side, 2), "left": Coord(2, 1)}[e]
        if self.side < 3:
            raise GeometryError("frames need side >= 3")
        return edge_of(self.fwd(mid), self.side)

    def instance(self, inst: GridInstance) -> GridInstance:
        return GridInstance(inst.side, tuple((self.fwd(s), self.fwd(t)) for s, t in inst.pairs), inst.seed)

    def routing_back(self, r: Routing) -> Routing:
        return Routing(tuple((i, GridPath(tuple(self.back(v) for v in p.vertices))) for i, p in r.entries))


def frame_for(side: int, want: Mapping[str, str]) -> Frame:
    """A symmetry sending each edge key of ``want`` to its value."""
    for mirror in (False, True):
        for k in range(4):
            f = Frame(side, k, mirror)
            if all(f.edge(a) == b for a, b in want.items()):
                return f
    raise GeometryError(f"no symmetry realizes {dict(want)}")


# Classification


@dataclass(frozen=True)
class ClassSplit:
    """cells[(q, q')][r] lists pair ids; r = 0 is the far class, r = -1 boundary destinations."""

    cells: Mapping[tuple[str, str], Mapping[int, tuple[int, ...]]]
    opt_guess: int
    eta: int

    def count(self) -> int:
        return sum(len(p) for by_r in self.cells.values() for p in by_r.values())

    def d_of(self, r: int) -> int:
        """Integer d with d <= d(t, t~) < 2d for every pair of class r >= 1."""
        return max(1, math.ceil(self.opt_guess / (self.eta * 2**r)))


def distance_class(dist: int, opt_guess: int, eta: int) -> int:
    if dist == 0:
        return -1
    if dist * eta >= opt_guess:
        return 0
    r = 1
    while dist * eta * 2**r < opt_guess:
        r += 1
    return r


def split_classes(inst: GridInstance, opt_guess: int, eta: int) -> ClassSplit:
    """Partition by (source edge, edge of t~) and then by distance class."""
    cells: dict = defaultdict(lambda: defaultdict(list))
    for i, (s, t) in enumerate(inst.pairs):
        q = edge_of(s, inst.side)
        if q is None:
            raise ValueError(f"pair {i}: source {s} is not on the boundary")
        tt = nearest_boundary(t, inst.side)
        qp = edge_of(tt, inst.side)
        dist = abs(t.row - tt.row) + abs(t.col - tt.col)
        cells[(q, qp)][distance_class(dist, opt_guess, eta)].append(i)
    frozen = {k: {r: tuple(v) for r, v in by_r.items()} for k, by_r in cells.items()}
    return ClassSplit(frozen, opt_guess, eta)


# Modified instances


@dataclass(frozen=True)
class ModifiedInstance:
    """The square G' above I' (in ``frame`` coordinates I' is on the bottom edge).

    ``instance`` is G' as a grid of its own, sources on its top row; ``pids`` maps its
    pair indices to pairs of the original instance.
    """

    frame: Frame
    gp: SubGrid
    instance: GridInstance
    pids: tuple[int, ...]
    I: BInterval
    Ip: BInterval
    d: int

    def to_frame(self, v: Coord) -> Coord:
        return Coord(v.row + self.gp.rows[0] - 1, v.col + self.gp.cols[0] - 1)

    def to_local(self, v: Coord) -> Coord:
        return Coord(v.row - self.gp.rows[0] + 1, v.col - self.gp.cols[0] + 1)


def check_interesting(I: BInterval, Ip: BInterval, d: int, side: int) -> None:
    """Raise GeometryError unless (I, I') is d-interesting with I' on the bottom edge."""
    if Ip.edge != "bottom":
        raise GeometryError("I' must lie on the bottom edge of the frame")
    if Ip.lo - 1 < 16 * d or side - Ip.hi < 16 * d or side - 1 < 16 * d:
        raise GeometryError(f"I' = [{Ip.lo}, {Ip.hi}] is not 16d = {16 * d} away from the other edges")
    if not d <= len(Ip) <= side / 2:
        raise GeometryError(f"|I'| = {len(Ip)} outside [d, sqrt(n)/2] = [{d}, {side / 2:g}]")
    if boundary_gap(I, Ip, side) < 16 * d:
        raise GeometryError(f"I and I' are separated by fewer than 16d = {16 * d} boundary vertices")


def build_modified_instance(inst: GridInstance, I: BInterval, Ip: BInterval, d: int, pids: Optional[Sequence[int]] = None, frame: Optional[Frame] = None) -> ModifiedInstance:
    """G' = columns of I' widened by 4d each side, its bottom 4d rows plus |W'| - 4d rows above.

    ``inst`` and the intervals are given in ``frame`` coordinates (identity by default).
    Sources are mapped, in clockwise order from the bottom-left corner of G', to the
    leftmost vertices of the top row of G'.
    """
    side = inst.side
    frame = frame or Frame(side)
    pids = tuple(range(inst.k)) if pids is None else tuple(pids)
    check_interesting(I, Ip, d, side)
    w = len(Ip) + 8 * d
    if side - w < 2 * d:
        raise GeometryError(f"only {side - w} rows above G' (need 2d = {2 * d} for the connectors)")
    gp = SubGrid((side - w + 1, side), (Ip.lo - 4 * d, Ip.hi + 4 * d))
    for p in pids:
        s, t = inst.pairs[p]
        tt = nearest_boundary(t, side)
        dist = abs(t.row - tt.row) + abs(t.col - tt.col)
        if not I.contains(s, side):
            raise GeometryError(f"pair {p}: source {s} not in I")
        if not Ip.contains(tt, side):
            raise GeometryError(f"pair {p}: t~ = {tt} not in I'")
        if not d <= dist < 2 * d:
            raise GeometryError(f"pair {p}: d(t, t~) = {dist} not in [{d}, {2 * d})")
    srcs = sorted({inst.pairs[p][0] for p in pids}, key=lambda s: (boundary_pos(s, side) - boundary_pos(Coord(side, gp.cols[0]), side)) % perimeter(side))
    if len(srcs) > w:
        raise GeometryError(f"{len(srcs)} sources exceed the {w} top-row vertices of G'")
    slot = {s: Coord(1, j + 1) for j, s in enumerate(srcs)}
    local = tuple((slot[inst.pairs[p][0]], Coord(inst.pairs[p][1].row - gp.rows[0] + 1, inst.pairs[p][1].col - gp.cols[0] + 1)) for p in pids)
    return ModifiedInstance(frame, gp, GridInstance(w, local), pids, I, Ip, d)


def route_modified_back(inst: GridInstance, mi: ModifiedInstance, inner: Routing, blocked: Sequence[Coord] = ()) -> Routing:
    """Lift a routing of the modified instance to the original grid.

    Sources are joined to their top-row images s' by vertex-disjoint paths outside G'
    (unit-capacity max-flow); the pairing is forced by
    planarity and checked. ``blocked`` vertices (original coordinates) are avoided.
    """
    v = verify_routing(mi.instance, inner)
    if not v:
        raise ValueError(f"inner routing invalid: {v.message}")
    if len(inner) > mi.d:
        raise CapacityError(f"{len(inner)} inner paths exceed d = {mi.d}")
    if not len(inner):
        return Routing(())
    f = mi.frame
    fi = f.instance(inst)
    side = inst.side
    blocked_f = {f.fwd(b) for b in blocked}
    want: dict[Coord, tuple[int, Coord]] = {}  # frame source -> (original pid, frame s')
    inner_of: dict[int, list[Coord]] = {}
    for lid, path in inner.entries:
        pid = mi.pids[lid]
        s = fi.pairs[pid][0]
        sp = mi.to_frame(path.vertices[0])
        want[s] = (pid, sp)
        inner_of[pid] = [mi.to_frame(x) for x in path.vertices]
    sinks = {sp for _, sp in want.values()}

    def allowed(x: Coord) -> bool:
        if not in_grid(x, side) or x in blocked_f:
            return False
        return not mi.gp.contains(x) or x in sinks

    conns = disjoint_paths(allowed, list(want), sinks)
    ok = len(conns) == len(want) and all(want[p[0]][1] == p[-1] for p in conns)
    if not ok:
        # fall back to pair-by-pair shortest connectors in clockwise order
        conns, used = [], set()
        for s in sorted(want, key=lambda s: boundary_pos(s, side)):
            sp = want[s][1]
            p = shortest_path(lambda x: allowed(x) and x not in used and (x == sp or x not in sinks), s, sp)
            if p is not None:
                conns.append(p)
                used.update(p)
    entries = []
    for p in conns:
        pid, _ = want[p[0]]
        full = p + inner_of[pid][1:]
        entries.append((pid, GridPath(tuple(f.back(x) for x in full))))
    r = Routing(tuple(sorted(entries)))
    vv = verify_routing(inst, r)
    assert vv, f"lifted routing invalid: {vv.message}"
    return r


# Selecting good interval pairs


@dataclass(frozen=True)
class Candidate:
    """An interval pair given by linear boundary positions: every sigma precedes every sigma'."""

    sigma: tuple[int, int]
    sigma_p: tuple[int, int]
    payload: object = None


def chain_ok(a: Candidate, b: Candidate, d: int) -> bool:
    """b may follow a in a selection: sigma_a < sigma_b and sigma'_b < sigma'_a with 16d vertices between."""
    return a.sigma[1] < b.sigma[0] and b.sigma_p[1] + 16 * d < a.sigma_p[0]


def select_good_pairs_dp(
    candidates: Sequence[Candidate],
    d: int,
    evaluator: Callable[[Candidate], tuple[int, object]],
    floor: int = 1,
) -> list[tuple[Candidate, object]]:
    """Largest nested selection of good candidates (value >= floor); ties by total value.

    Selections appear on the boundary as sigma_1 .. sigma_z, sigma'_z .. sigma'_1; in that
    order each sigma' has only chain neighbours as nearest intervals, so checking
    consecutive members suffices for the 16d separation.
    """
    scored = []
    for c in candidates:
        val, routing = evaluator(c)
        if val >= floor:
            scored.append((c, val, routing))
    scored.sort(key=lambda x: (x[0].sigma, x[0].sigma_p))
    m = len(scored)
    best = [(1, scored[i][1]) for i in range(m)]
    prev = [-1] * m
    for j in range(m):
        for i in range(j):
            if chain_ok(scored[i][0], scored[j][0], d):
                cand = (best[i][0] + 1, best[i][1] + scored[j][1])
                if cand > best[j]:
                    best[j], prev[j] = cand, i
    if not m:
        return []
    j = max(range(m), key=lambda x: best[x])
    out = []
    while j >= 0:
        out.append((scored[j][0], scored[j][2]))
        j = prev[j]
    return out[::-1]


def selection_valid(sel: Sequence[Candidate], d: int) -> bool:
    """Full definition, for checking the DP: nested order and pairwise separation of every sigma'."""
    sel = sorted(sel, key=lambda c: c.sigma)
    if any(not (a.sigma[1] < b.sigma[0] and b.sigma_p[1] < a.sigma_p[0]) for a, b in zip(sel, sel[1:])):
        return False
    for i, a in enumerate(sel):
        for j, b in enumerate(sel):
            if i == j:
                continue
            gap = a.sigma_p[0] - b.sigma_p[1] - 1 if b.sigma_p[1] < a.sigma_p[0] else b.sigma_p[0] - a.sigma_p[1] - 1
            if gap < 16 * d:
                return False
    return True


# Configuration


@dataclass(frozen=True)
class RestrictedConfig:
    """Knobs of the dispatcher. ``overrides`` go to derive_params for every inner call;
    ``case_threshold`` is the 2^13 of "OPT' > 2^13 d" below which the far-from-boundary
    theorem is applied directly with OPT = d."""

    overrides: Mapping = field(default_factory=dict)
    far: FarConfig = FarConfig(trials=2, max_branches=4, adaptive_stride=True, mirror=True)
    case_threshold: float = 2**13
    case3_dp_threshold: int = 1024
    goodness_floor: int = 1
    max_candidates: int = 48
    greedy_baseline: bool = True
    max_guesses: Optional[int] = None
    opt_guesses: Optional[tuple[int, ...]] = None


@dataclass
class RestrictedStats:
    guesses: list = field(default_factory=list)
    winner: str = "none"
    winner_guess: Optional[int] = None
    plan: object = None  # snake plan of the winning far call, when it ran in the original frame
    far: FarStats = field(default_factory=FarStats)
    attempts: dict = field(default_factory=lambda: defaultdict(int))


def _far(sub: GridInstance, opt_guess: int, cfg: RestrictedConfig, rng, fallback: bool = False, stats: Optional[FarStats] = None) -> Routing:
    params = derive_params(max(sub.n, 4), max(1, opt_guess), cfg.overrides)
    if params.degenerate and not cfg.far.augment and not fallback:
        # the router would only fall back to one shortest path, which the baseline already has
        return Routing(())
    return route_far_from_boundary(sub, max(1, opt_guess), params, rng, cfg.far, stats)


def _sub(inst: GridInstance, pids: Sequence[int]) -> GridInstance:
    return GridInstance(inst.side, tuple(inst.pairs[p] for p in pids), inst.seed)


def _lift_ids(r: Routing, pids: Sequence[int]) -> Routing:
    return Routing(tuple(sorted((pids[i], p) for i, p in r.entries)))


def _used(r: Routing) -> set[Coord]:
    return {v for _, p in r.entries for v in p.vertices}


def _merge(inst: GridInstance, parts: Sequence[Routing]) -> Routing:
    """Union of routings, dropping any path that meets one kept earlier."""
    used: set[Coord] = set()
    out, seen = [], set()
    for r in parts:
        for i, p in r.entries:
            if i in seen or used & set(p.vertices):
                continue
            out.append((i, p))
            seen.add(i)
            used.update(p.vertices)
    res = Routing(tuple(sorted(out)))
    assert verify_routing(inst, res)
    return res


# Interval-pair routing (Cases 1, 2 and the large sub-case of 3)


def _solve_modified(fi: GridInstance, mi: ModifiedInstance, cfg: RestrictedConfig, rng) -> Routing:
    inner = _far(mi.instance, mi.d, cfg, rng, fallback=True)
    return Routing(inner.entries[: mi.d])


def _candidates(fi: GridInstance, pids: Sequence[int], I: BInterval, Ip: BInterval, d: int, cfg: RestrictedConfig, rng) -> list[Candidate]:
    """sigma' at stride d with lengths 16d, 32d, ... <= sqrt(n)/2; sigma = the minimal cover of a
    run of at most d consecutive sources among the pairs whose t~ falls in sigma'."""
    side = fi.side
    P = perimeter(side)
    base = boundary_pos(Coord(side, Ip.hi), side)

    def lin(iv: BInterval) -> tuple[int, int]:
        # cut the cycle just after I' ends, so every sigma precedes every sigma'
        xs = sorted((boundary_pos(v, side) - base - 1) % P for v in (iv.vertices(side)[0], iv.vertices(side)[-1]))
        return xs[0], xs[1]

    along = lambda v: v.col if I.edge in ("top", "bottom") else v.row
    src_ok = [p for p in pids if I.contains(fi.pairs[p][0], side)]
    tt = {p: nearest_boundary(fi.pairs[p][1], side) for p in src_ok}
    out: dict[tuple, Candidate] = {}
    L = 16 * d
    while L <= min(len(Ip), side // 2):
        for lo in range(Ip.lo, Ip.hi - L + 2, d):
            sp = BInterval("bottom", lo, lo + L - 1)
            mine = sorted((p for p in src_ok if sp.contains(tt[p], side)), key=lambda p: along(fi.pairs[p][0]))
            for i in range(len(mine)):
                for w in range(1, min(d, len(mine) - i) + 1):
                    a, b = along(fi.pairs[mine[i]][0]), along(fi.pairs[mine[i + w - 1]][0])
                    sg = BInterval(I.edge, a, b)
                    run = tuple(p for p in mine if a <= along(fi.pairs[p][0]) <= b)
                    key = (sg, sp)
                    if key in out:
                        continue
                    try:
                        check_interesting(sg, sp, d, side)
                    except GeometryError:
                        continue
                    out[key] = Candidate(lin(sg), lin(sp), (sg, sp, run))
        L *= 2
    cands = list(out.values())
    if len(cands) > cfg.max_candidates:
        idx = sorted(rng.choice(len(cands), size=cfg.max_candidates, replace=False))
        cands = [cands[i] for i in idx]
    return cands


def _interval_dp_route(fi: GridInstance, pids: Sequence[int], I: BInterval, Ip: BInterval, d: int, frame: Frame, orig: GridInstance, cfg: RestrictedConfig, rng, blocked: set[Coord]) -> Routing:
    """Evaluate candidate pairs on their modified instances, select by DP, lift and combine."""
    cands = _candidates(fi, pids, I, Ip, d, cfg, rng)

    def evaluate(c: Candidate):
        sg, sp, mine = c.payload
        try:
            mi = build_modified_instance(fi, sg, sp, d, mine, frame)
        except GeometryError:
            return 0, None
        inner = _solve_modified(fi, mi, cfg, rng)
        # at most d inner paths always lift (asserted when the selection is combined)
        return len(inner), (mi, inner)

    sel = select_good_pairs_dp(cands, d, evaluate, cfg.goodness_floor)
    used = set(blocked)
    parts = []
    for _, (mi, inner) in sel:
        inner = Routing(tuple((i, p) for i, p in inner.entries if not ({mi.frame.back(mi.to_frame(v)) for v in p.vertices} & used)))
        r = route_modified_back(orig, mi, inner, blocked=tuple(used))
        parts.append(r)
        used |= _used(r)
    return _merge(orig, parts) if parts else Routing(())


def solve_case_opposite(inst: GridInstance, pids: Sequence[int], q: str, d: int, cfg: RestrictedConfig, rng) -> Routing:
    """Case 1: sources on edge q, every t~ on the opposite edge."""
    opp = EDGES[(EDGES.index(q) + 2) % 4]
    f = frame_for(inst.side, {q: "top", opp: "bottom"})
    fi = f.instance(inst)
    side = inst.side
    return _interval_dp_route(fi, pids, BInterval("top", 1, side), BInterval("bottom", 1, side), d, f, inst, cfg, rng, set())


def solve_case_adjacent(inst: GridInstance, pids: Sequence[int], q: str, qp: str, d: int, opt_guess: int, cfg: RestrictedConfig, rng) -> Routing:
    """Case 2: sources on q, t~ on the neighbouring edge q'; I' skips ceil(OPT'/16) vertices at the shared corner."""
    f = frame_for(inst.side, {q: "left", qp: "bottom"})
    fi = f.instance(inst)
    side = inst.side
    skip = math.ceil(opt_guess / 16)
    if skip + 1 > side:
        return Routing(())
    keep = [p for p in pids if nearest_boundary(fi.pairs[p][1], side).col > skip]
    return _interval_dp_route(fi, keep, BInterval("left", 1, side), BInterval("bottom", skip + 1, side), d, f, inst, cfg, rng, set())


def short_pair_cover(side: int, d: int, offset: int) -> list[tuple[int, int]]:
    """Column ranges of Q_1..Q_r: the first of width 4d + offset, then 4d, the last up to 8d."""
    out = []
    lo = 1
    w = 4 * d + offset
    while True:
        if side - (lo + w - 1) > 8 * d:
            out.append((lo, lo + w - 1))
            lo += w
            w = 4 * d
        else:
            out.append((lo, side))
            return out


def solve_short_pairs(inst: GridInstance, d: int, rng, pids: Optional[Sequence[int]] = None, cfg: Optional[RestrictedConfig] = None, frame: Optional[Frame] = None, orig: Optional[GridInstance] = None) -> Routing:
    """Short pairs on the bottom edge: random square cover, four residue classes, each square
    with its margin solved by the far-from-boundary router; best class wins.

    ``inst`` is in frame coordinates (sources and t~ on the bottom edge); the result is in
    the coordinates of ``orig`` (default: ``inst``).
    """
    cfg = cfg or RestrictedConfig()
    frame = frame or Frame(inst.side)
    orig = orig or inst
    side = inst.side
    pids = list(range(inst.k)) if pids is None else list(pids)
    if side < 4 * d:
        return Routing(())
    offset = int(rng.integers(0, 4 * d + 1))
    squares = short_pair_cover(side, d, offset)
    best = Routing(())
    for cls in range(4):
        parts = []
        for j, (c0, c1) in enumerate(squares):
            if j % 4 != cls:
                continue
            hgt = c1 - c0 + 1
            mine = [p for p in pids if all(c0 <= v.col <= c1 and v.row > side - hgt for v in inst.pairs[p])]
            if not mine:
                continue
            left = 0 if j == 0 else 4 * d
            right = 0 if j == len(squares) - 1 else 4 * d
            above = left + right
            size = hgt + above
            top = side - hgt - above + 1
            if top < 1 or c0 - left < 1 or c1 + right > side:
                continue
            box = SubGrid((top, side), (c0 - left, c1 + right))
            # flip the box so the bottom edge becomes its top row
            loc = lambda v: Coord(side - v.row + 1, v.col - box.cols[0] + 1)
            unloc = lambda v: Coord(side - v.row + 1, v.col + box.cols[0] - 1)
            sub = GridInstance(size, tuple((loc(inst.pairs[p][0]), loc(inst.pairs[p][1])) for p in mine))
            try:
                r = _far(sub, d, cfg, rng, fallback=True)
            except ValueError:
                continue
            entries = [(mine[i], GridPath(tuple(frame.back(unloc(v)) for v in p.vertices))) for i, p in r.entries]
            parts.append(Routing(tuple(sorted(entries))))
        if parts:
            got = _merge(orig, parts)
            if len(got) > len(best):
                best = got
    return best


def solve_case_same(inst: GridInstance, pids: Sequence[int], q: str, d: int, cfg: RestrictedConfig, rng) -> Routing:
    """Case 3: sources and t~ on the same edge q (rotated to the bottom)."""
    side = inst.side
    best = Routing(())
    f0 = frame_for(side, {q: "bottom"})
    fi0 = f0.instance(inst)
    m0 = [p for p in pids if abs(fi0.pairs[p][0].col - fi0.pairs[p][1].col) <= 2 * d]
    if m0:
        best = solve_short_pairs(fi0, d, rng, m0, cfg, f0, inst)
    rest = [p for p in pids if p not in set(m0)]
    for mirror in (False, True):
        f = _mirrored(f0) if mirror else f0
        fi = f.instance(inst)
        m1 = [p for p in rest if fi.pairs[p][0].col < fi.pairs[p][1].col]
        by_class: dict[int, list[int]] = defaultdict(list)
        for p in m1:
            by_class[(fi.pairs[p][1].col - fi.pairs[p][0].col + 1).bit_length()].append(p)
        for i, cls in sorted(by_class.items()):
            r = _case3_class(fi, cls, i, d, f, inst, cfg, rng)
            if len(r) > len(best):
                best = r
    return best


def _mirrored(f: Frame) -> Frame:
    """f followed by a column mirror of the frame (keeps the bottom edge at the bottom)."""
    side = f.side
    for mirror in (False, True):
        for k in range(4):
            g = Frame(side, k, mirror)
            probe = [Coord(1, 2), Coord(2, side), Coord(side, 3)]
            if all(g.fwd(v) == Coord(f.fwd(v).row, side + 1 - f.fwd(v).col) for v in probe):
                return g
    raise GeometryError("no mirrored frame")


def _case3_class(fi: GridInstance, pids: Sequence[int], i: int, d: int, f: Frame, orig: GridInstance, cfg: RestrictedConfig, rng) -> Routing:
    """Length class 2^(i-1) <= |I(s,t)| < 2^i: random offset Z, strips H_j split at Z'."""
    side = fi.side
    period = 2 ** (i + 3)
    rho = int(rng.integers(0, period))
    Z = [z for z in range(rho, side + 1, period) if z >= 1]
    margin = 2 ** (i - 1) / 4
    keep = []
    for p in pids:
        cs, ct = fi.pairs[p][0].col, fi.pairs[p][1].col
        if any(cs < z < ct for z in Z) and all(abs(cs - z) >= margin and abs(ct - z) >= margin for z in Z):
            keep.append(p)
    Zp = [z + 2 ** (i + 2) for z in Z if z + 2 ** (i + 2) <= side]
    cuts = [0] + Zp + [side + 1]
    parts, used = [], set()
    trim = max(0, 2 ** (i - 3)) if i >= 3 else 0
    for a, b in zip(cuts, cuts[1:]):
        zs = [z for z in Z if a < z < b]
        if not zs:
            continue
        z = zs[0]
        mine = [p for p in keep if a < fi.pairs[p][0].col < z < fi.pairs[p][1].col < b]
        if not mine:
            continue
        I = BInterval("bottom", a + 1, z - 1)
        Ip = BInterval("bottom", z + 1 + trim, b - 1 - trim)
        if len(Ip) < 1 or len(I) < 1:
            continue
        mine = [p for p in mine if Ip.contains(nearest_boundary(fi.pairs[p][1], side), side)]
        if not mine:
            continue
        if len(mine) >= cfg.case3_dp_threshold * d:
            r = _interval_dp_route(fi, mine, I, Ip, d, f, orig, cfg, rng, used)
        else:
            try:
                mi = build_modified_instance(fi, I, Ip, d, mine, f)
            except GeometryError:
                continue
            inner = _solve_modified(fi, mi, cfg, rng)
            inner = Routing(tuple((j, p) for j, p in inner.entries if not ({f.back(mi.to_frame(v)) for v in p.vertices} & used)))
            r = route_modified_back(orig, mi, inner, blocked=tuple(used))
        parts.append(r)
        used |= _used(r)
    return _merge(orig, parts) if parts else Routing(())


# Boundary-only destinations


def solve_boundary_pairs(inst: GridInstance, pids: Sequence[int]) -> Routing:
    """Pairs with both terminals on the boundary: a maximum non-crossing set by interval DP
    on the boundary cycle, then routed innermost-first by shortest paths."""
    side = inst.side
    chords = []
    for p in pids:
        s, t = inst.pairs[p]
        a, b = sorted((boundary_pos(s, side), boundary_pos(t, side)))
        chords.append((a, b, p))
    pts = sorted({x for a, b, _ in chords for x in (a, b)})
    ix = {x: i for i, x in enumerate(pts)}
    at: dict[int, list[tuple[int, int]]] = defaultdict(list)
    for a, b, p in chords:
        at[ix[a]].append((ix[b], p))
    n = len(pts)
    memo: dict[tuple[int, int], tuple[int, tuple[int, ...]]] = {}

    def f(i: int, j: int) -> tuple[int, tuple[int, ...]]:
        if i > j:
            return (0, ())
        key = (i, j)
        if key in memo:
            return memo[key]
        best = f(i + 1, j)
        for k, p in at[i]:
            if k > j:
                continue
            inner = f(i + 1, k - 1) if k > i else (0, ())
            outer = f(k + 1, j)
            cand = (1 + inner[0] + outer[0], (p,) + inner[1] + outer[1])
            if cand[0] > best[0]:
                best = cand
        memo[key] = best
        return best

    import sys

    old = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old, 4 * n + 100))
    try:
        _, chosen = f(0, n - 1) if n else (0, ())
    finally:
        sys.setrecursionlimit(old)
    span = {p: (b - a) for a, b, p in chords}
    order = sorted(chosen, key=lambda p: span[p])
    terminals = {v for p in chosen for v in inst.pairs[p]}
    used: set[Coord] = set()
    out = []
    for p in order:
        s, t = inst.pairs[p]
        path = shortest_path(lambda v: in_grid(v, side) and v not in used and (v in (s, t) or v not in terminals), s, t)
        if path is not None:
            used.update(path)
            out.append((p, GridPath(tuple(path))))
    return Routing(tuple(sorted(out)))


# Sources near the boundary


def lift_sources_to_boundary(inst: GridInstance, delta: int) -> tuple[GridInstance, dict[int, tuple[Coord, ...]]]:
    """Move each source to its nearest boundary vertex; U_s is the straight segment from s to s~."""
    side = inst.side
    pairs, canon = [], {}
    for i, (s, t) in enumerate(inst.pairs):
        dist = boundary_dist(s, side)
        if dist > delta:
            raise ValueError(f"pair {i}: source {s} is {dist} > delta = {delta} from the boundary")
        st = nearest_boundary(s, side)
        seg = [s]
        while seg[-1] != st:
            v = seg[-1]
            seg.append(Coord(v.row + (st.row > v.row) - (st.row < v.row), v.col + (st.col > v.col) - (st.col < v.col)))
        pairs.append((st, t))
        canon[i] = tuple(seg)
    return GridInstance(side, tuple(pairs), inst.seed), canon


def compose_canonical(inst: GridInstance, lifted: Routing, canon: Mapping[int, Sequence[Coord]]) -> Routing:
    """Prepend U_s to each lifted path and keep a conflict-free subset.

    Conflict digraph: P -> P' when U_s of P' meets P. Paths are removed greedily by
    largest total degree until no conflict remains; paths that become non-simple are
    dropped first.
    """
    full = {}
    for i, p in lifted.entries:
        seg = list(canon[i])
        path = seg[:-1] + list(p.vertices)
        if len(set(path)) == len(path):
            full[i] = path
    alive = set(full)
    vsets = {i: set(p) for i, p in full.items()}
    useg = {i: set(canon[i]) for i in full}

    def conflicts(i: int) -> set[int]:
        return {j for j in alive if j != i and (useg[j] & vsets[i] or useg[i] & vsets[j] or vsets[i] & vsets[j])}

    while True:
        deg = {i: len(conflicts(i)) for i in alive}
        worst = max(alive, key=lambda i: (deg[i], i), default=None)
        if worst is None or deg[worst] == 0:
            break
        alive.discard(worst)
    r = Routing(tuple(sorted((i, GridPath(tuple(full[i]))) for i in alive)))
    v = verify_routing(inst, r)
    assert v, f"composed routing invalid: {v.message}"
    return r


# Dispatcher


def opt_guesses(side: int) -> list[int]:
    out, g = [], 1
    while g <= 4 * side:
        out.append(g)
        g *= 2
    return out


def solve_restricted(inst: GridInstance, rng=None, config: Optional[RestrictedConfig] = None, stats: Optional[RestrictedStats] = None) -> Routing:
    """Best valid routing over OPT guesses, boundary classes and distance classes."""
    from .instances import rng_for

    cfg = config or RestrictedConfig()
    stats = stats if stats is not None else RestrictedStats()
    rng = rng if rng is not None else rng_for(inst.seed)
    side = inst.side
    for i, (s, _) in enumerate(inst.pairs):
        if not on_boundary(s, side):
            raise ValueError(f"pair {i}: source {s} is not on the boundary")
    if inst.k == 0:
        return Routing(())
    best = greedy_routing(inst, order=range(inst.k))
    best = Routing(best.entries[:1])
    stats.winner = "single"
    if cfg.greedy_baseline:
        g = greedy_routing(inst, order=sorted(range(inst.k), key=lambda p: abs(inst.pairs[p][0].row - inst.pairs[p][1].row) + abs(inst.pairs[p][0].col - inst.pairs[p][1].col)))
        if len(g) > len(best):
            best, stats.winner = g, "greedy"
    if side < 3:
        return best
    guesses = list(cfg.opt_guesses) if cfg.opt_guesses else opt_guesses(side)
    if cfg.max_guesses is not None:
        guesses = guesses[-cfg.max_guesses :]

    def consider(r: Routing, label: str, plan=None) -> None:
        nonlocal best
        stats.attempts[label] += 1
        if len(r) > len(best):
            v = verify_routing(inst, r)
            assert v, f"{label} routing invalid: {v.message}"
            best, stats.winner, stats.winner_guess, stats.plan = r, label, g, plan

    boundary_done = False
    for g in guesses:
        stats.guesses.append(g)
        eta = derive_params(max(inst.n, 4), g, cfg.overrides).eta
        split = split_classes(inst, g, eta)
        for (q, qp), by_r in split.cells.items():
            for r, pids in by_r.items():
                branch_rng = rng_for(int(rng.integers(0, 2**63)))
                if r == -1:
                    if not boundary_done:
                        boundary_done = True
                        consider(solve_boundary_pairs(inst, [p for by in split.cells.values() for p in by.get(-1, ())]), "boundary-dp")
                    continue
                f = frame_for(side, {q: "top"})
                fi = f.instance(inst)
                sub = _sub(fi, pids)
                identity = f.k == 0 and not f.mirror
                if r == 0:
                    stats.far.best_plan = None
                    got = _far(sub, g, cfg, branch_rng, stats=stats.far)
                    consider(f.routing_back(_lift_ids(got, pids)), "far", stats.far.best_plan if identity else None)
                    continue
                d = split.d_of(r)
                if g <= cfg.case_threshold * d:
                    stats.far.best_plan = None
                    got = _far(sub, d, cfg, branch_rng, stats=stats.far)
                    consider(f.routing_back(_lift_ids(got, pids)), "near-direct", stats.far.best_plan if identity else None)
                    continue
                if EDGES.index(qp) == (EDGES.index(q) + 2) % 4:
                    consider(solve_case_opposite(inst, pids, q, d, cfg, branch_rng), "case1")
                elif q == qp:
                    consider(solve_case_same(inst, pids, q, d, cfg, branch_rng), "case3")
                else:
                    consider(solve_case_adjacent(inst, pids, q, qp, d, g, cfg, branch_rng), "case2")
    v = verify_routing(inst, best)
    assert v, f"solve_restricted output invalid: {v.message}"
    return best
