"""Grid-graph model: coordinates, sub-grids, paths, routings and the verifier."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Optional, Sequence


class Coord(NamedTuple):
    """Grid vertex v(row, col); 1-indexed, rows top to bottom."""

    row: int
    col: int

    def __str__(self) -> str:
        return f"({self.row},{self.col})"


def in_grid(c: Coord, side: int) -> bool:
    return 1 <= c.row <= side and 1 <= c.col <= side


def neighbors(c: Coord, side: int) -> list[Coord]:
    r, k = c
    out = []
    if r > 1:
        out.append(Coord(r - 1, k))
    if r < side:
        out.append(Coord(r + 1, k))
    if k > 1:
        out.append(Coord(r, k - 1))
    if k < side:
        out.append(Coord(r, k + 1))
    return out


def on_boundary(c: Coord, side: int) -> bool:
    return c.row in (1, side) or c.col in (1, side)


def boundary_dist(c: Coord, side: int) -> int:
    """Distance from c to the grid boundary."""
    return min(c.row - 1, c.col - 1, side - c.row, side - c.col)


@dataclass(frozen=True)
class GridInstance:
    """Square grid of side ``side`` with an ordered list of demand pairs."""

    side: int
    pairs: tuple[tuple[Coord, Coord], ...]
    seed: int = field(default=0, compare=False)  # generator metadata, not part of the instance

    def __post_init__(self) -> None:
        if self.side < 1:
            raise ValueError(f"side must be positive, got {self.side}")
        pairs = tuple((Coord(*s), Coord(*t)) for s, t in self.pairs)
        object.__setattr__(self, "pairs", pairs)
        for i, (s, t) in enumerate(pairs):
            for c in (s, t):
                if not in_grid(c, self.side):
                    raise ValueError(f"pair {i}: coordinate {c} outside grid of side {self.side}")

    @property
    def n(self) -> int:
        return self.side * self.side

    @property
    def k(self) -> int:
        return len(self.pairs)


@dataclass(frozen=True)
class SubGrid:
    """Sub-grid spanned by inclusive row and column intervals."""

    rows: tuple[int, int]
    cols: tuple[int, int]

    def __post_init__(self) -> None:
        if self.rows[0] > self.rows[1] or self.cols[0] > self.cols[1]:
            raise ValueError(f"empty sub-grid rows={self.rows} cols={self.cols}")

    @property
    def height(self) -> int:
        return self.rows[1] - self.rows[0] + 1

    @property
    def width(self) -> int:
        return self.cols[1] - self.cols[0] + 1

    @property
    def is_square(self) -> bool:
        return self.height == self.width

    def contains(self, c: Coord) -> bool:
        return self.rows[0] <= c.row <= self.rows[1] and self.cols[0] <= c.col <= self.cols[1]

    def inside(self, side: int) -> bool:
        return self.rows[0] >= 1 and self.cols[0] >= 1 and self.rows[1] <= side and self.cols[1] <= side

    def vertices(self) -> Iterable[Coord]:
        for r in range(self.rows[0], self.rows[1] + 1):
            for k in range(self.cols[0], self.cols[1] + 1):
                yield Coord(r, k)

    def on_own_boundary(self, c: Coord) -> bool:
        return self.contains(c) and (c.row in self.rows or c.col in self.cols)


@dataclass(frozen=True)
class GridPath:
    vertices: tuple[Coord, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "vertices", tuple(Coord(*v) for v in self.vertices))

    def __len__(self) -> int:
        return len(self.vertices)

    @property
    def start(self) -> Coord:
        return self.vertices[0]

    @property
    def end(self) -> Coord:
        return self.vertices[-1]


@dataclass(frozen=True)
class Routing:
    entries: tuple[tuple[int, GridPath], ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", tuple((int(i), p) for i, p in self.entries))

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def pair_indices(self) -> list[int]:
        return [i for i, _ in self.entries]


@dataclass(frozen=True)
class Verdict:
    """Result of a check: ``ok`` or the first violated rule."""

    ok: bool
    rule: str = ""
    where: Optional[Coord] = None
    message: str = ""

    def __bool__(self) -> bool:
        return self.ok

    @staticmethod
    def valid() -> "Verdict":
        return Verdict(True)

    @staticmethod
    def fail(rule: str, message: str, where: Optional[Coord] = None) -> "Verdict":
        return Verdict(False, rule, where, message)


def manhattan_dist(a: Coord, b: Coord) -> int:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


def manhattan_set_dist(xs: Iterable[Coord], ys: Iterable[Coord]) -> int:
    ys = list(ys)
    return min(manhattan_dist(x, y) for x in xs for y in ys)


def verify_path(side: int, path: GridPath) -> Verdict:
    """Check that a path is nonempty, in range, simple and grid-connected."""
    if not path.vertices:
        return Verdict.fail("empty path", "empty path")
    seen: set[Coord] = set()
    prev: Optional[Coord] = None
    for v in path.vertices:
        if not in_grid(v, side):
            return Verdict.fail("out of range", f"out of range {v}", v)
        if v in seen:
            return Verdict.fail("repeated vertex", f"repeated vertex {v}", v)
        if prev is not None and manhattan_dist(prev, v) != 1:
            return Verdict.fail("non-adjacent step", f"non-adjacent step {prev}->{v}", v)
        seen.add(v)
        prev = v
    return Verdict.valid()


def verify_routing(inst: GridInstance, r: Routing) -> Verdict:
    """Return ``Verdict.valid()`` or the first violated routing invariant."""
    used: dict[Coord, int] = {}
    seen_idx: set[int] = set()
    for idx, path in r.entries:
        if not 0 <= idx < inst.k:
            return Verdict.fail("bad pair index", f"bad pair index {idx}")
        if idx in seen_idx:
            return Verdict.fail("duplicate pair index", f"duplicate pair index {idx}")
        seen_idx.add(idx)
        v = verify_path(inst.side, path)
        if not v:
            return Verdict.fail(v.rule, f"pair {idx}: {v.message}", v.where)
        s, t = inst.pairs[idx]
        if path.start != s or path.end != t:
            bad = path.start if path.start != s else path.end
            return Verdict.fail("endpoint mismatch", f"endpoint mismatch {bad} for pair {idx}", bad)
        for v in path.vertices:
            if v in used:
                return Verdict.fail(
                    "shared vertex", f"shared vertex {v} between pairs {used[v]} and {idx}", v
                )
            used[v] = idx
    return Verdict.valid()


# Parameters


def log2n(n: int) -> float:
    return math.log2(n)


@dataclass(frozen=True)
class Params:
    """Algorithm parameters eta, rho, d_h, and the trimmed side ell_prime.

    ``polylog_overrides`` maps a threshold name to a multiplier replacing its
    log-power factor; the key ``scale`` applies to every threshold.
    """

    eta: int
    rho: int
    d: tuple[int, ...]
    opt_guess: int
    c_star: int = 11
    ell_prime: int = 0
    n: int = 4
    polylog_overrides: Mapping[str, float] = field(default_factory=dict)
    degenerate: bool = False

    def polylog(self, name: str, power: int) -> float:
        """log2(n)**power, or the override for ``name`` (or ``scale``)."""
        ov = self.polylog_overrides
        if name in ov:
            return float(ov[name])
        if "scale" in ov:
            return float(ov["scale"])
        return log2n(self.n) ** power

    @property
    def d1(self) -> int:
        return self.d[0]


def _formula_eta(n: int) -> int:
    return 2 ** math.ceil(math.sqrt(math.log2(n)))


def _formula_rho(n: int, opt_guess: int, eta: int, c_star: int) -> int:
    """Largest rho with eta**(rho+2) <= OPT / 2**(c* sqrt(log n) log log n); may be < 1."""
    ln = math.log2(n)
    denom_log = c_star * math.sqrt(ln) * math.log2(ln) if ln > 1 else 0.0
    budget_log = math.log2(opt_guess) - denom_log
    return math.floor(budget_log / math.log2(eta)) - 2


def derive_params(n: int, opt_guess: int, overrides: Optional[Mapping] = None) -> Params:
    """Apply the parameter formulas; recognised overrides are
    ``eta``, ``rho``, ``c_star``, ``side`` and ``polylog`` (a mapping)."""
    if n < 4:
        raise ValueError(f"n must be at least 4, got {n}")
    if opt_guess < 1:
        raise ValueError(f"opt_guess must be at least 1, got {opt_guess}")
    ov = dict(overrides or {})
    c_star = int(ov.get("c_star", 11))
    eta = int(ov["eta"]) if "eta" in ov else _formula_eta(n)
    if eta < 2:
        raise ValueError("eta must be at least 2")
    degenerate = False
    if "rho" in ov:
        rho = int(ov["rho"])
        if rho < 1:
            raise ValueError("rho must be at least 1")
    else:
        rho = _formula_rho(n, opt_guess, eta, c_star)
        if rho < 1:
            rho, degenerate = 1, True
    d = tuple(eta ** (rho - h + 3) for h in range(1, rho + 1))
    side = int(ov.get("side", math.isqrt(n)))
    ell_prime = ((side - 1) // d[0]) * d[0] if side > 1 else 0
    if ell_prime == 0:
        degenerate = True
    return Params(
        eta=eta,
        rho=rho,
        d=d,
        opt_guess=opt_guess,
        c_star=c_star,
        ell_prime=ell_prime,
        n=n,
        polylog_overrides=dict(ov.get("polylog", {})),
        degenerate=degenerate,
    )


# Text formats


class FormatError(ValueError):
    """Malformed instance or routing text; message carries the line number."""


def format_instance(inst: GridInstance, header: Sequence[str] = ()) -> str:
    lines = ["ndpgrid v1", *header, f"side {inst.side}", f"pairs {inst.k}"]
    lines += [f"{s.row} {s.col} {t.row} {t.col}" for s, t in inst.pairs]
    return "\n".join(lines) + "\n"


def _content_lines(text: str) -> list[tuple[int, str]]:
    out = []
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line and not line.startswith("#"):
            out.append((no, line))
    return out


def _ints(no: int, line: str, count: int) -> list[int]:
    parts = line.split()
    if len(parts) != count:
        raise FormatError(f"expected {count} integers at line {no}, got {line!r}")
    try:
        return [int(p) for p in parts]
    except ValueError:
        raise FormatError(f"non-integer token at line {no}: {line!r}") from None


def _token_col(line: str, i: int) -> int:
    """1-based character column of the i-th whitespace-separated token."""
    pos = 0
    for j, tok in enumerate(line.split()):
        pos = line.index(tok, pos)
        if j == i:
            return pos + 1
        pos += len(tok)
    return 1


def _keyword(no: int, line: str, key: str) -> int:
    parts = line.split()
    if len(parts) != 2 or parts[0] != key:
        raise FormatError(f"malformed header at line {no}: expected '{key} <int>', got {line!r}")
    try:
        return int(parts[1])
    except ValueError:
        raise FormatError(f"malformed header at line {no}: {line!r}") from None


def parse_instance_text(text: str) -> tuple[GridInstance, list[str]]:
    """Parse the ``ndpgrid v1`` format; returns the instance and extra header lines."""
    lines = _content_lines(text)
    if not lines or lines[0][1] != "ndpgrid v1":
        no = lines[0][0] if lines else 1
        raise FormatError(f"malformed header at line {no}: expected 'ndpgrid v1'")
    pos = 1
    extra = []
    while pos < len(lines) and lines[pos][1].startswith("graph"):
        extra.append(lines[pos][1])
        pos += 1
    if pos + 1 >= len(lines):
        raise FormatError(f"malformed header at line {lines[-1][0] + 1}: missing side/pairs")
    side = _keyword(*lines[pos], "side")
    k = _keyword(*lines[pos + 1], "pairs")
    if side < 1 or k < 0:
        raise FormatError(f"malformed header at line {lines[pos][0]}: bad side or pair count")
    body = lines[pos + 2 :]
    if len(body) != k:
        at = body[k][0] if len(body) > k else (body[-1][0] if body else lines[pos + 1][0])
        raise FormatError(f"count mismatch at line {at}: declared {k} pairs, found {len(body)}")
    pairs = []
    for no, line in body:
        a, b, c, e = _ints(no, line, 4)
        for j, (r, col) in enumerate(((a, b), (c, e))):
            if not (1 <= r <= side and 1 <= col <= side):
                raise FormatError(f"out-of-range coordinate ({r},{col}) at line {no}, column {_token_col(line, 2 * j)}")
        pairs.append((Coord(a, b), Coord(c, e)))
    return GridInstance(side, tuple(pairs)), extra


def format_routing(r: Routing) -> str:
    lines = ["routing v1"]
    for idx, path in r.entries:
        lines.append(f"pair {idx} len {len(path)}")
        lines += [f"{v.row} {v.col}" for v in path.vertices]
    return "\n".join(lines) + "\n"


def parse_routing(text: str) -> Routing:
    lines = _content_lines(text)
    if not lines or lines[0][1] != "routing v1":
        raise FormatError("malformed header at line 1: expected 'routing v1'")
    entries = []
    pos = 1
    while pos < len(lines):
        no, line = lines[pos]
        parts = line.split()
        if len(parts) != 4 or parts[0] != "pair" or parts[2] != "len":
            raise FormatError(f"malformed pair header at line {no}: {line!r}")
        try:
            idx, m = int(parts[1]), int(parts[3])
        except ValueError:
            raise FormatError(f"malformed pair header at line {no}: {line!r}") from None
        verts = lines[pos + 1 : pos + 1 + m]
        if len(verts) != m or any(len(v[1].split()) != 2 for v in verts):
            raise FormatError(f"count mismatch at line {no}: pair {idx} declares {m} vertices")
        entries.append((idx, GridPath(tuple(Coord(*_ints(vn, vl, 2)) for vn, vl in verts))))
        pos += 1 + m
    return Routing(tuple(entries))
