"""Instance generators: random, spaced-out and the recursive hard instances."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .grid_core import Coord, GridInstance, GridPath, Routing, verify_routing

MAX_HARD_LEVEL = 1


def rng_for(seed: int) -> np.random.Generator:
    """Counter-based stream for one seed."""
    return np.random.Generator(np.random.Philox(int(seed) % 2**64))


def gen_random(side: int, k: int, far_margin: int = 0, seed: int = 0) -> GridInstance:
    """Distinct top-row sources; distinct destinations at boundary distance >= far_margin."""
    if side < 1 or k < 0 or far_margin < 0:
        raise ValueError("side must be positive, k and far_margin non-negative")
    if k > side:
        raise ValueError(f"infeasible counts: k={k} > side={side} top-row sources")
    lo, hi = far_margin + 1, side - far_margin
    cells = [Coord(r, c) for r in range(lo, hi + 1) for c in range(lo, hi + 1) if r != 1]
    if k and len(cells) < k:
        raise ValueError(f"infeasible counts: only {len(cells)} cells at distance >= {far_margin} for k={k}")
    rng = rng_for(seed)
    cols = rng.choice(side, size=k, replace=False) + 1
    picks = rng.choice(len(cells), size=k, replace=False) if k else []
    pairs = tuple((Coord(1, int(c)), cells[int(i)]) for c, i in zip(cols, picks))
    return GridInstance(side, pairs, seed)


def spaced_gap(k: int) -> int:
    return 8 * k + 8


def gen_spaced(side: int, k: int, seed: int = 0) -> GridInstance:
    """Destinations pairwise and from the boundary at least 8k+8 apart."""
    if k < 1:
        raise ValueError("k must be at least 1")
    g = spaced_gap(k)
    lo, hi = g + 1, side - g
    if hi < lo:
        raise ValueError(f"infeasible side {side}: needs at least {2 * g + 1} for k={k}")
    rng = rng_for(seed)
    pts: list[Coord] = []
    for _attempt in range(20):
        pts = []
        for _ in range(k):
            for _try in range(200):
                t = Coord(int(rng.integers(lo, hi + 1)), int(rng.integers(lo, hi + 1)))
                if all(abs(t.row - u.row) + abs(t.col - u.col) >= g for u in pts):
                    pts.append(t)
                    break
            else:
                break
        if len(pts) == k:
            break
    else:
        # rejection sampling failed: checkerboard lattice, any two cells are >= g apart
        h = (g + 1) // 2
        lattice = [
            Coord(lo + i * h, lo + j * h)
            for i in range((hi - lo) // h + 1)
            for j in range((hi - lo) // h + 1)
            if (i + j) % 2 == 0
        ]
        if len(lattice) < k:
            raise ValueError(f"infeasible side {side}: could not place {k} destinations {g} apart")
        idx = rng.choice(len(lattice), size=k, replace=False)
        pts = [lattice[int(i)] for i in idx]
    cols = rng.choice(side, size=k, replace=False) + 1
    return GridInstance(side, tuple((Coord(1, int(c)), t) for c, t in zip(cols, pts)), seed)


# Hard instances


@dataclass(frozen=True)
class HardParams:
    """Exact rational parameters of the recursive construction."""

    g: Fraction = Fraction(11, 10)

    def gamma(self, i: int) -> Fraction:
        return 20 * self.g ** (2 * i)

    def N(self, i: int) -> Fraction:
        n = Fraction(1)
        for j in range(i):
            n = 2 * self.gamma(j) * n
        return n

    def ell(self, i: int) -> int:
        return math.ceil(9 * self.N(i) * self.g**i)


def _flip(c: Coord, side: int) -> Coord:
    return Coord(side + 1 - c.row, side + 1 - c.col)


def gen_hard(level: int, params: HardParams = HardParams()) -> tuple[GridInstance, Routing]:
    """Level-i instance with a perfect routing witness."""
    if level < 0:
        raise ValueError("level must be non-negative")
    if level > MAX_HARD_LEVEL:
        raise ValueError(f"level {level} too large for configured memory (max {MAX_HARD_LEVEL})")
    if level == 0:
        inst = GridInstance(9, ((Coord(1, 1), Coord(5, 1)),))
        return inst, Routing(((0, GridPath(tuple(Coord(r, 1) for r in range(1, 6)))),))
    inner, wit = gen_hard(level - 1, params)
    gamma, N = params.gamma(level - 1), params.N(level - 1)
    if gamma.denominator != 1 or N.denominator != 1:
        raise ValueError(f"level {level}: gamma={gamma}, N={N} are not integers")
    gamma, N = int(gamma), int(N)
    li, side = inner.side, params.ell(level)
    gN = gamma * N
    if side < 2 * gamma * li + gN or side <= 2 * gN + li:
        raise ValueError(f"level {level}: side {side} too small for the layout")
    R1 = side - gN  # last row of the strip
    R0 = R1 - li + 1
    inner_paths = dict(wit.entries)

    copies = []  # (copy index j, inner pair id, placed source, placed destination, placed path)
    for j in range(1, 2 * gamma + 1):
        c0 = gN + (j - 1) * li
        for pid, (s, t) in enumerate(inner.pairs):
            def place(v: Coord) -> Coord:
                v = _flip(v, li) if j % 2 else v
                return Coord(R0 - 1 + v.row, c0 + v.col)
            path = tuple(place(v) for v in inner_paths[pid].vertices)
            copies.append((j, pid, place(s), place(t), path))
    odd = sorted((c for c in copies if c[0] % 2), key=lambda c: -c[2].col)
    even = sorted((c for c in copies if c[0] % 2 == 0), key=lambda c: c[2].col)

    pairs, entries = [], []
    for p, (_, _, s, t, path) in enumerate(odd, start=1):
        depth = R1 + (gN - p + 1)
        conn = [Coord(r, p) for r in range(1, depth + 1)]
        conn += [Coord(depth, c) for c in range(p + 1, s.col + 1)]
        conn += [Coord(r, s.col) for r in range(depth - 1, R1, -1)]
        pairs.append((Coord(1, p), t))
        entries.append(conn + list(path))
    for q, (_, _, s, t, path) in enumerate(even, start=1):
        col, depth = gN + q, 1 + (gN - q + 1)
        conn = [Coord(r, col) for r in range(1, depth + 1)]
        conn += [Coord(depth, c) for c in range(col + 1, s.col + 1)]
        conn += [Coord(r, s.col) for r in range(depth + 1, R0)]
        pairs.append((Coord(1, col), t))
        entries.append(conn + list(path))
    inst = GridInstance(side, tuple(pairs))
    routing = Routing(tuple((i, GridPath(tuple(p))) for i, p in enumerate(entries)))
    v = verify_routing(inst, routing)
    assert v, f"hard-instance witness invalid: {v.message}"
    return inst, routing
