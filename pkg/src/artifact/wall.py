"""Walls obtained from grids, NDP/EDP on walls and EDP to NDP extraction."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .grid_core import Coord, GridInstance, GridPath, Routing, SubGrid, Verdict
from .reduction import RestrictedConfig, solve_restricted

Edge = frozenset


class WallError(ValueError):
    pass


@dataclass(frozen=True)
class WallGraph:
    """Grid of ``ell`` columns and ``h`` rows minus the edges e^j_z with z != j (mod 2),
    minus the degree-1 vertices that leaves."""

    ell: int
    h: int
    removed: frozenset = field(default=frozenset(), compare=False)

    def __post_init__(self) -> None:
        if self.ell % 2:
            raise WallError(f"wall length needs an even grid width, got ell = {self.ell}")
        if self.ell < 4 or self.h < 2:
            raise WallError("a wall needs ell >= 4 and h >= 2")
        deg1 = frozenset(v for v in self._grid_vertices() if len(self._raw_nbrs(v)) == 1)
        object.__setattr__(self, "removed", deg1)

    def _grid_vertices(self) -> Iterable[Coord]:
        return (Coord(r, c) for r in range(1, self.h + 1) for c in range(1, self.ell + 1))

    def _vertical(self, z: int, j: int) -> bool:
        """Edge e^j_z between rows z and z+1 of grid column j survives."""
        return 1 <= z < self.h and 1 <= j <= self.ell and z % 2 == j % 2

    def _raw_nbrs(self, v: Coord) -> list[Coord]:
        r, c = v
        out = []
        if c > 1:
            out.append(Coord(r, c - 1))
        if c < self.ell:
            out.append(Coord(r, c + 1))
        if self._vertical(r - 1, c):
            out.append(Coord(r - 1, c))
        if self._vertical(r, c):
            out.append(Coord(r + 1, c))
        return out

    def has_vertex(self, v: Coord) -> bool:
        return 1 <= v.row <= self.h and 1 <= v.col <= self.ell and v not in self.removed

    def neighbors(self, v: Coord) -> list[Coord]:
        if not self.has_vertex(v):
            return []
        return [w for w in self._raw_nbrs(v) if w not in self.removed]

    def has_edge(self, a: Coord, b: Coord) -> bool:
        return self.has_vertex(a) and b in self.neighbors(a)

    def vertices(self) -> list[Coord]:
        return [v for v in self._grid_vertices() if v not in self.removed]

    def degree(self, v: Coord) -> int:
        return len(self.neighbors(v))

    @property
    def n_columns(self) -> int:
        return self.ell // 2

    def row(self, j: int) -> list[Coord]:
        """R_j: the surviving part of grid row j, left to right."""
        return [Coord(j, c) for c in range(1, self.ell + 1) if self.has_vertex(Coord(j, c))]

    def column(self, i: int) -> list[Coord]:
        """W_i: the path from R_1 to R_h through grid columns 2i-1 and 2i."""
        if not 1 <= i <= self.n_columns:
            raise IndexError(i)
        a, b = 2 * i - 1, 2 * i
        down = lambda z: a if z % 2 == a % 2 else b  # column of the kept edge below row z
        path = []
        for z in range(1, self.h + 1):
            if z > 1:
                path.append(Coord(z, down(z - 1)))
            if z < self.h:
                path.append(Coord(z, down(z)))
        return [v for v in dict.fromkeys(path) if self.has_vertex(v)]

    def boundary(self) -> set[Coord]:
        """Gamma of the wall: R_1, R_h, W_1 and W_last."""
        out = set(self.row(1)) | set(self.row(self.h))
        out |= set(self.column(1)) | set(self.column(self.n_columns))
        return out


def build_wall(ell: int, h: int) -> WallGraph:
    w = WallGraph(ell, h)
    assert all(2 <= w.degree(v) <= 3 for v in w.vertices()), "wall degree invariant"
    return w


# Verification


def _edges(path: Sequence[Coord]) -> list[Edge]:
    return [Edge((a, b)) for a, b in zip(path, path[1:])]


def verify_wall_paths(wall: WallGraph, inst: GridInstance, r: Routing, mode: str = "NDP") -> Verdict:
    """Wall-aware check: endpoints match pairs, walks use wall edges, disjointness by mode."""
    if mode not in ("NDP", "EDP"):
        raise ValueError(f"mode must be NDP or EDP, got {mode}")
    seen_v: dict[Coord, int] = {}
    seen_e: dict[Edge, int] = {}
    ids = set()
    for idx, p in r.entries:
        vs = p.vertices
        if idx in ids or not 0 <= idx < inst.k:
            return Verdict.fail("pair-index", f"bad or repeated pair index {idx}", idx)
        ids.add(idx)
        s, t = inst.pairs[idx]
        if vs[0] != s or vs[-1] != t:
            return Verdict.fail("endpoints", f"path {idx} does not join {s} to {t}", idx)
        if len(set(vs)) != len(vs):
            return Verdict.fail("simple", f"path {idx} repeats a vertex", idx)
        if not all(wall.has_vertex(v) for v in vs):
            return Verdict.fail("vertex", f"path {idx} leaves the wall", idx)
        for a, b in zip(vs, vs[1:]):
            if not wall.has_edge(a, b):
                return Verdict.fail("edge", f"path {idx} uses missing edge {a}-{b}", idx)
        if mode == "NDP":
            for v in vs:
                if v in seen_v:
                    return Verdict.fail("node-disjoint", f"paths {seen_v[v]} and {idx} share {v}", v)
                seen_v[v] = idx
        else:
            for e in _edges(vs):
                if e in seen_e:
                    return Verdict.fail("edge-disjoint", f"paths {seen_e[e]} and {idx} share an edge", tuple(e))
                seen_e[e] = idx
    return Verdict.valid()


# EDP -> NDP


def conflict_digraph(paths: Sequence[Sequence[Coord]]) -> list[set[int]]:
    """Out-neighbours: i -> j when an endpoint of path j lies on path i."""
    where: dict[Coord, list[int]] = {}
    for j, p in enumerate(paths):
        for v in {p[0], p[-1]}:
            where.setdefault(v, []).append(j)
    out = [set() for _ in paths]
    for i, p in enumerate(paths):
        for v in p:
            for j in where.get(v, ()):
                if j != i:
                    out[i].add(j)
    return out


def _independent(adj: list[set[int]], pick_min: bool) -> list[int]:
    alive = set(range(len(adj)))
    nb = [set(a) for a in adj]
    chosen = []
    while alive:
        if pick_min:
            v = min(alive, key=lambda x: (len(nb[x] & alive), x))
            chosen.append(v)
            alive -= nb[v] | {v}
        else:
            v = max(alive, key=lambda x: (len(nb[x] & alive), -x))
            if not nb[v] & alive:
                chosen.extend(sorted(alive))
                break
            alive.discard(v)
    return sorted(chosen)


def independent_paths(paths: Sequence[Sequence[Coord]]) -> list[int]:
    """Indices of pairwise node-disjoint paths, given that paths meet only at endpoints.

    The conflict digraph has in-degree at most 4, so the underlying graph has average
    degree at most 8; the min-degree greedy keeps at least m/9 paths. The max-degree
    removal greedy is run as well and the larger set kept.
    """
    dig = conflict_digraph(paths)
    und = [set(a) for a in dig]
    for i, a in enumerate(dig):
        for j in a:
            und[j].add(i)
    a = _independent(und, pick_min=True)
    b = _independent(und, pick_min=False)
    return a if len(a) >= len(b) else b


def edp_to_ndp_extract(wall: WallGraph, paths: Sequence[Sequence[Coord]]) -> list[int]:
    """Indices of a node-disjoint subset of an edge-disjoint path family in a wall."""
    seen: set[Edge] = set()
    for i, p in enumerate(paths):
        for a, b in zip(p, p[1:]):
            if not wall.has_edge(a, b):
                raise WallError(f"path {i} uses {a}-{b}, not a wall edge")
        for e in _edges(p):
            if e in seen:
                raise WallError(f"input not edge-disjoint: path {i} reuses edge {tuple(e)}")
            seen.add(e)
    keep = independent_paths(paths)
    used: set[Coord] = set()
    for i in keep:
        assert not used & set(paths[i]), "extracted paths share a vertex"
        used |= set(paths[i])
    assert len(keep) >= math.ceil(len(paths) / 9), f"kept {len(keep)} < ceil({len(paths)}/9)"
    return keep


# Sources on the wall boundary


def remap_wall_sources(wall: WallGraph, inst: GridInstance) -> tuple[GridInstance, dict[int, Coord]]:
    """Move sources on W_1 / W_last off the grid boundary one step outward; returns the new
    instance and the original source of every moved pair."""
    gamma = wall.boundary()
    pairs, moved = [], {}
    for i, (s, t) in enumerate(inst.pairs):
        if s not in gamma:
            raise ValueError(f"pair {i}: source {s} is not on the wall boundary")
        sp = s
        if not (s.row in (1, wall.h) or s.col in (1, wall.ell)):
            if s in wall.column(1):
                sp = Coord(s.row, s.col - 1)
            elif s in wall.column(wall.n_columns):
                sp = Coord(s.row, s.col + 1)
        if sp != s:
            moved[i] = s
        pairs.append((sp, t))
    return GridInstance(inst.side, tuple(pairs), inst.seed), moved


def lift_wall_routing(wall: WallGraph, inst: GridInstance, r: Routing, moved: dict[int, Coord]) -> Routing:
    """Prepend the edge (s, s') to moved pairs and keep a node-disjoint subset."""
    items = []
    for idx, p in r.entries:
        vs = list(p.vertices)
        if idx in moved:
            s = moved[idx]
            vs = vs[vs.index(s):] if s in vs else [s] + vs
        items.append((idx, vs))
    keep = independent_paths([vs for _, vs in items])
    out = Routing(tuple(sorted((items[i][0], GridPath(tuple(items[i][1]))) for i in keep)))
    v = verify_wall_paths(wall, inst, out, "NDP")
    assert v, f"lifted wall routing invalid: {v.message}"
    return out


# Snakes in walls


def restrict_to_wall(wall: WallGraph, corridors: Sequence[SubGrid]) -> set[Coord]:
    return {v for c in corridors for v in c.vertices() if wall.has_vertex(v)}


def is_connected(wall: WallGraph, vs: set[Coord]) -> bool:
    if not vs:
        return True
    start = next(iter(vs))
    seen, q = {start}, deque([start])
    while q:
        v = q.popleft()
        for w in wall.neighbors(v):
            if w in vs and w not in seen:
                seen.add(w)
                q.append(w)
    return len(seen) == len(vs)


def wall_path(wall: WallGraph, allowed: set[Coord] | None, s: Coord, t: Coord, avoid: set[Coord]) -> Optional[list[Coord]]:
    """BFS in the wall, inside ``allowed`` (None = anywhere), avoiding ``avoid``."""
    ok = lambda v: wall.has_vertex(v) and v not in avoid and (allowed is None or v in allowed)
    if not (ok(s) and ok(t)):
        return None
    par: dict[Coord, Optional[Coord]] = {s: None}
    q = deque([s])
    while q:
        v = q.popleft()
        if v == t:
            out = []
            cur: Optional[Coord] = v
            while cur is not None:
                out.append(cur)
                cur = par[cur]
            return out[::-1]
        for w in wall.neighbors(v):
            if w not in par and ok(w):
                par[w] = v
                q.append(w)
    return None


def _band(path: Sequence[Coord], side: int) -> set[Coord]:
    """Width-3 band around a grid path: every vertex within Chebyshev distance 1."""
    return {Coord(v.row + dr, v.col + dc) for v in path for dr in (-1, 0, 1) for dc in (-1, 0, 1) if 1 <= v.row + dr <= side and 1 <= v.col + dc <= side}


@dataclass
class WallStats:
    grid_routed: int = 0
    in_band: int = 0
    rerouted: int = 0
    added: int = 0


def solve_wall(wall: WallGraph, inst: GridInstance, mode: str = "NDP", rng=None, config: Optional[RestrictedConfig] = None, stats: Optional[WallStats] = None) -> Routing:
    """Grid pipeline on the underlying grid, then each routed pair is re-routed inside the
    wall restriction of a width-3 band around its grid path; leftover pairs are tried by
    shortest wall paths. EDP mode returns the same node-disjoint set."""
    if mode not in ("NDP", "EDP"):
        raise ValueError(f"mode must be NDP or EDP, got {mode}")
    if wall.ell != wall.h or wall.ell != inst.side:
        raise WallError("solve_wall needs a square wall matching the instance side")
    stats = stats if stats is not None else WallStats()
    for i, (s, t) in enumerate(inst.pairs):
        if not (wall.has_vertex(s) and wall.has_vertex(t)):
            raise ValueError(f"pair {i}: terminal not in the wall")
    mi, moved = remap_wall_sources(wall, inst)
    grid = solve_restricted(mi, rng, config)
    stats.grid_routed = len(grid)
    terminals = {v for p in mi.pairs for v in p}
    used: set[Coord] = set()
    entries = []
    for idx, p in grid.entries:
        s, t = mi.pairs[idx]
        avoid = used | (terminals - {s, t})
        path = wall_path(wall, _band(p.vertices, inst.side), s, t, avoid)
        if path is not None:
            stats.in_band += 1
        else:
            path = wall_path(wall, None, s, t, avoid)
            stats.rerouted += path is not None
        if path is not None:
            entries.append((idx, GridPath(tuple(path))))
            used |= set(path)
    done = {i for i, _ in entries}
    for idx in range(mi.k):
        if idx in done:
            continue
        s, t = mi.pairs[idx]
        path = wall_path(wall, None, s, t, used | (terminals - {s, t}))
        if path is not None:
            entries.append((idx, GridPath(tuple(path))))
            used |= set(path)
            stats.added += 1
    out = lift_wall_routing(wall, inst, Routing(tuple(sorted(entries))), moved)
    v = verify_wall_paths(wall, inst, out, mode)
    assert v, f"solve_wall output invalid: {v.message}"
    return out
