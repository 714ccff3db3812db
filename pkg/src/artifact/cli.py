"""Command-line front end: instance I/O, solving, verification, generators, benchmarks, SVG."""

from __future__ import annotations

import argparse
import colorsys
import csv
import io
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

from .grid_core import (
    Coord,
    FormatError,
    GridInstance,
    Routing,
    boundary_dist,
    format_instance,
    format_routing,
    parse_instance_text,
    parse_routing,
    verify_routing,
)
from .instances import gen_hard, gen_random, gen_spaced, rng_for
from .reduction import RestrictedConfig, RestrictedStats, compose_canonical, lift_sources_to_boundary, solve_restricted
from .snake_router import FarConfig
from .wall import WallError, WallGraph, WallStats, build_wall, solve_wall, verify_wall_paths

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class WallInstance:
    wall: WallGraph
    instance: GridInstance


# Parsing and emitting


def parse_instance(text: str) -> Union[GridInstance, WallInstance]:
    """Strict parse; a ``graph wall`` header line gives a wall on the square grid."""
    inst, extra = parse_instance_text(text)
    kinds = [line.split()[1] if len(line.split()) == 2 else None for line in extra]
    if any(k not in ("grid", "wall") for k in kinds) or len(kinds) > 1:
        no = next(no for no, raw in enumerate(text.splitlines(), 1) if raw.strip().startswith("graph"))
        raise FormatError(f"malformed header at line {no}: expected 'graph grid' or 'graph wall'")
    if kinds == ["wall"]:
        try:
            wall = build_wall(inst.side, inst.side)
        except WallError as e:
            raise FormatError(f"malformed header: {e}") from None
        body = [no for no, raw in enumerate(text.splitlines(), 1) if raw.strip() and not raw.strip().startswith("#")][-inst.k :] if inst.k else []
        for i, (s, t) in enumerate(inst.pairs):
            for v in (s, t):
                if not wall.has_vertex(v):
                    raise FormatError(f"out-of-range coordinate ({v.row},{v.col}) at line {body[i]}: not a wall vertex")
        return WallInstance(wall, inst)
    return inst


def emit_instance(x: Union[GridInstance, WallInstance]) -> str:
    if isinstance(x, WallInstance):
        return format_instance(x.instance, ["graph wall"])
    return format_instance(x)


def routing_json(r: Routing) -> list:
    return [{"pair": i, "path": [[v.row, v.col] for v in p.vertices]} for i, p in r.entries]


# SVG


def _color(i: int) -> str:
    h = (i * 0.6180339887498949) % 1.0
    r, g, b = colorsys.hsv_to_rgb(h, 0.75, 0.85)
    return f"#{int(r * 255):02x}{int(g * 255):02x}{int(b * 255):02x}"


def render_svg(inst: GridInstance, routing: Optional[Routing] = None, snake_plan=None, wall: Optional[WallGraph] = None) -> str:
    """Deterministic SVG 1.1: lattice, labeled terminals, one path element per routed pair,
    snake corridors as translucent rectangles."""
    side = inst.side
    if routing is not None:
        for i, p in routing.entries:
            if not 0 <= i < inst.k:
                raise ValueError(f"inconsistent input: routing names pair {i}, instance has {inst.k}")
            s, t = inst.pairs[i]
            if p.vertices[0] != s or p.vertices[-1] != t:
                raise ValueError(f"inconsistent input: path {i} does not join its terminals")
    cell = max(2, min(24, 960 // max(side, 1)))
    pad = cell
    size = 2 * pad + (side - 1) * cell
    xy = lambda v: (pad + (v.col - 1) * cell, pad + (v.row - 1) * cell)
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{size}" height="{size}" viewBox="0 0 {size} {size}">',
        f'<rect x="0" y="0" width="{size}" height="{size}" fill="#ffffff"/>',
    ]
    if wall is None:
        for j in range(side):
            a = pad + j * cell
            out.append(f'<line x1="{pad}" y1="{a}" x2="{pad + (side - 1) * cell}" y2="{a}" stroke="#dddddd" stroke-width="1"/>')
            out.append(f'<line x1="{a}" y1="{pad}" x2="{a}" y2="{pad + (side - 1) * cell}" stroke="#dddddd" stroke-width="1"/>')
    else:
        for v in wall.vertices():
            for w in wall.neighbors(v):
                if w > v:
                    (x1, y1), (x2, y2) = xy(v), xy(w)
                    out.append(f'<line x1="{x1}" y1="{y1}" x2="{x2}" y2="{y2}" stroke="#dddddd" stroke-width="1"/>')
    if snake_plan is not None:
        for h in sorted(snake_plan.snakes):
            for c in sorted(snake_plan.snakes[h]):
                for q in snake_plan.snakes[h][c].corridors:
                    x, y = xy(Coord(q.rows[0], q.cols[0]))
                    w, hh = (q.cols[1] - q.cols[0]) * cell, (q.rows[1] - q.rows[0]) * cell
                    out.append(f'<rect x="{x}" y="{y}" width="{w}" height="{hh}" fill="{_color(h * 97 + hash_color(c))}" fill-opacity="0.15" stroke="none"/>')
    if routing is not None:
        for i, p in routing.entries:
            pts = " ".join(("M" if j == 0 else "L") + f"{xy(v)[0]} {xy(v)[1]}" for j, v in enumerate(p.vertices))
            out.append(f'<path d="{pts}" fill="none" stroke="{_color(i)}" stroke-width="{max(1, cell // 3)}"/>')
    r = max(1, cell // 4)
    font = max(4, cell // 2)
    for i, (s, t) in enumerate(inst.pairs):
        for v, tag in ((s, "s"), (t, "t")):
            x, y = xy(v)
            out.append(f'<rect x="{x - r}" y="{y - r}" width="{2 * r}" height="{2 * r}" fill="{_color(i)}"/>')
            out.append(f'<text x="{x + r}" y="{y - r}" font-size="{font}" font-family="monospace">{tag}{i}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def hash_color(c) -> int:
    """Stable small integer for a color key (tuples of ints)."""
    acc = 0
    for x in (c if isinstance(c, tuple) else (c,)):
        acc = (acc * 31 + int(x)) % 9973
    return acc


# Commands


def _read(path: str) -> str:
    try:
        return sys.stdin.read() if path == "-" else Path(path).read_text()
    except OSError as e:
        raise UsageError(f"cannot read {path}: {e}") from None


def _write(path: Optional[str], text: str, binary: bytes | None = None) -> None:
    try:
        if path is None or path == "-":
            sys.stdout.write(text)
        elif binary is not None:
            Path(path).write_bytes(binary)
        else:
            Path(path).write_text(text)
    except OSError as e:
        raise UsageError(f"cannot write {path}: {e}") from None


def _config(args) -> RestrictedConfig:
    ov: dict = {}
    if args.eta is not None:
        ov["eta"] = args.eta
    if args.rho is not None:
        ov["rho"] = args.rho
    if args.polylog_scale is not None:
        ov["polylog"] = {"scale": args.polylog_scale}
    far = FarConfig(trials=args.trials, max_branches=4, adaptive_stride=True, mirror=True)
    return RestrictedConfig(overrides=ov, far=far, opt_guesses=(args.opt_guess,) if args.opt_guess else None)


def solve_grid(inst: GridInstance, seed: int, cfg: RestrictedConfig, stats: Optional[RestrictedStats] = None) -> tuple[Routing, dict]:
    """The grid pipeline; sources off the boundary are lifted to it first."""
    stats = stats if stats is not None else RestrictedStats()
    rng = rng_for(seed)
    delta = max((boundary_dist(s, inst.side) for s, _ in inst.pairs), default=0)
    if delta == 0:
        r = solve_restricted(inst, rng, cfg, stats)
    else:
        lifted, canon = lift_sources_to_boundary(inst, delta)
        r = compose_canonical(inst, solve_restricted(lifted, rng, cfg, stats), canon)
    v = verify_routing(inst, r)
    if not v:
        raise AssertionError(f"solve output failed verification: {v.message}")
    summary = {
        "routed": len(r),
        "pairs": inst.k,
        "seed": seed,
        "opt_guess": stats.winner_guess,
        "winner": stats.winner,
        "guesses": stats.guesses,
        "source_delta": delta,
        "far_branches": stats.far.branches,
        "hsc_failed": stats.far.hsc_failed,
        "plans_built": stats.far.plans_built,
        "spacing_rejects": stats.far.spacing_rejects,
    }
    return r, summary


def _emit_result(args, r: Routing, summary: dict) -> None:
    if args.format == "json":
        text = json.dumps({"routing": routing_json(r), "summary": summary}, sort_keys=True) + "\n"
    else:
        text = format_routing(r) + "".join(f"# {k} {json.dumps(summary[k])}\n" for k in sorted(summary))
    _write(args.output, text)


def cmd_solve(args) -> int:
    x = parse_instance(_read(args.instance))
    if isinstance(x, WallInstance):
        raise UsageError("instance is a wall; use solve-wall")
    stats = RestrictedStats()
    r, summary = solve_grid(x, args.seed, _config(args), stats)
    _emit_result(args, r, summary)
    if args.svg:
        _write(args.svg, render_svg(x, r, stats.plan))
    if args.lp_dump:
        from .hsc_lp import build_lp, dump_lp

        h = stats.far.first_hsc
        _write(args.lp_dump, dump_lp(build_lp(h)) if h is not None else "\\ no HSC LP was built (degenerate parameters or no eligible pairs)\n")
    return EXIT_OK


def cmd_solve_wall(args) -> int:
    x = parse_instance(_read(args.instance))
    if not isinstance(x, WallInstance):
        raise UsageError("instance has no 'graph wall' header")
    st = WallStats()
    r = solve_wall(x.wall, x.instance, args.mode, rng_for(args.seed), _config(args), st)
    summary = {"routed": len(r), "pairs": x.instance.k, "seed": args.seed, "mode": args.mode, "grid_routed": st.grid_routed, "in_band": st.in_band, "rerouted": st.rerouted, "added": st.added}
    _emit_result(args, r, summary)
    if args.svg:
        _write(args.svg, render_svg(x.instance, r, wall=x.wall))
    return EXIT_OK


def cmd_verify(args) -> int:
    x = parse_instance(_read(args.instance))
    r = parse_routing(_read(args.routing))
    if isinstance(x, WallInstance):
        v = verify_wall_paths(x.wall, x.instance, r, args.mode)
    else:
        v = verify_routing(x, r)
    if v:
        print(f"valid: {len(r)} pairs routed")
        return EXIT_OK
    print(f"invalid: {v.rule}: {v.message}")
    return EXIT_VERIFY


def cmd_oracle(args) -> int:
    from .oracle import BudgetExceeded, exact_ndp

    x = parse_instance(_read(args.instance))
    if isinstance(x, WallInstance):
        raise UsageError("the exact oracle works on grid instances")
    try:
        count, r = exact_ndp(x, max_side=args.max_side, max_k=args.max_k)
    except BudgetExceeded as e:
        raise UsageError(f"oracle budget exceeded: {e}") from None
    _emit_result(args, r, {"optimum": count, "pairs": x.k})
    return EXIT_OK


def cmd_gen(args) -> int:
    try:
        if args.kind == "random":
            inst = gen_random(args.side, args.k, args.far_margin, args.seed)
        elif args.kind == "spaced":
            inst = gen_spaced(args.side, args.k, args.seed)
        else:
            inst, wit = gen_hard(args.level)
            if args.witness:
                _write(args.witness, format_routing(wit))
    except ValueError as e:
        raise UsageError(str(e)) from None
    _write(args.output, format_instance(inst))
    return EXIT_OK


def cmd_render(args) -> int:
    x = parse_instance(_read(args.instance))
    r = parse_routing(_read(args.routing)) if args.routing else None
    wall = x.wall if isinstance(x, WallInstance) else None
    inst = x.instance if isinstance(x, WallInstance) else x
    try:
        svg = render_svg(inst, r, wall=wall)
    except ValueError as e:
        raise UsageError(str(e)) from None
    _write(args.output, svg)
    return EXIT_OK


def bench_rows(seeds: int, sides: Sequence[int], base_seed: int, cfg: RestrictedConfig, hard_levels: Sequence[int] = (0, 1)) -> list[dict]:
    """One row per generated instance: family, side, k, routed, oracle (small only), seconds."""
    from .oracle import exact_ndp

    rows = []
    cases = []
    for side in sides:
        for j in range(seeds):
            seed = base_seed + 1000 * side + j
            k = max(1, min(side, 2 + (j * side) // (2 * seeds + 1)))
            cases.append(("random", side, k, lambda side=side, k=k, seed=seed: gen_random(side, min(k, side), 0, seed), seed))
            ks = max(1, (side - 1) // 32 - 1)
            if ks >= 1 and side >= 2 * (8 * ks + 8) + 1:
                cases.append(("spaced", side, ks, lambda side=side, ks=ks, seed=seed: gen_spaced(side, ks, seed), seed))
    for lvl in hard_levels:
        cases.append(("hard", None, None, lambda lvl=lvl: gen_hard(lvl)[0], base_seed + lvl))
    for fam, _, _, make, seed in cases:
        inst = make()
        t0 = time.perf_counter()
        r, _ = solve_grid(inst, seed, cfg)
        dt = time.perf_counter() - t0
        opt = ""
        if inst.side <= 6 and inst.k <= 4:
            opt = exact_ndp(inst)[0]
        rows.append({"instance": f"{fam}-s{inst.side}-k{inst.k}-seed{seed}", "family": fam, "side": inst.side, "k": inst.k, "routed": len(r), "oracle": opt, "seconds": round(dt, 4)})
    return rows


def cmd_bench(args) -> int:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    sides = [int(s) for s in args.sides.split(",")]
    rows = bench_rows(args.seeds, sides, args.seed, _config(args), (0, 1) if args.hard else (0,))
    out = Path(args.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise UsageError(f"cannot create {out}: {e}") from None
    buf = io.StringIO()
    fields = ["instance", "family", "side", "k", "routed", "oracle", "seconds"]
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    _write(str(out / "bench.csv"), buf.getvalue())
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for fam, mark in (("random", "o"), ("spaced", "s"), ("hard", "^")):
        sel = [r for r in rows if r["family"] == fam]
        if sel:
            axes[0].scatter([r["k"] for r in sel], [r["routed"] for r in sel], marker=mark, label=fam)
            axes[1].scatter([r["side"] for r in sel], [r["seconds"] for r in sel], marker=mark, label=fam)
    axes[0].set_xlabel("pairs k")
    axes[0].set_ylabel("routed")
    axes[1].set_xlabel("grid side")
    axes[1].set_ylabel("seconds")
    for ax in axes:
        ax.legend()
    fig.tight_layout()
    fig.savefig(out / "bench.png", dpi=100, metadata={"Software": None})
    plt.close(fig)
    print(f"wrote {out / 'bench.csv'} and {out / 'bench.png'} ({len(rows)} rows)")
    return EXIT_OK


# Argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(message)


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="u64 seed for all randomness")
    p.add_argument("--opt-guess", type=int, default=None, help="use this OPT guess only")
    p.add_argument("--eta", type=int, default=None)
    p.add_argument("--rho", type=int, default=None)
    p.add_argument("--polylog-scale", type=float, default=None, help="replace every log-power threshold factor")
    p.add_argument("--trials", type=int, default=2, help="HSC rounding trials per branch")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("-o", "--output", default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="ndpgrid", description="Node-disjoint paths in grids with boundary sources.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="grid pipeline")
    p.add_argument("instance")
    _add_solver_flags(p)
    p.add_argument("--svg", default=None)
    p.add_argument("--lp-dump", default=None)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("solve-wall", help="wall pipeline")
    p.add_argument("instance")
    _add_solver_flags(p)
    p.add_argument("--mode", choices=("NDP", "EDP"), default="NDP")
    p.add_argument("--svg", default=None)
    p.set_defaults(func=cmd_solve_wall)

    p = sub.add_parser("verify", help="check a routing")
    p.add_argument("instance")
    p.add_argument("routing")
    p.add_argument("--mode", choices=("NDP", "EDP"), default="NDP")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("oracle", help="exact optimum for tiny instances")
    p.add_argument("instance")
    p.add_argument("--max-side", type=int, default=6)
    p.add_argument("--max-k", type=int, default=4)
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("gen", help="generate an instance")
    p.add_argument("kind", choices=("random", "spaced", "hard"))
    p.add_argument("--side", type=int, default=20)
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--far-margin", type=int, default=0)
    p.add_argument("--level", type=int, default=0)
    p.add_argument("--witness", default=None, help="hard: write the witness routing here")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("bench", help="benchmark table and plot")
    _add_solver_flags(p)
    p.add_argument("--sides", default="6,20,60,120")
    p.add_argument("--seeds", type=int, default=3)
    p.add_argument("--hard", action="store_true", help="include the level-1 hard instance")
    p.add_argument("--out-dir", default="bench-out")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("render", help="SVG of an instance and optional routing")
    p.add_argument("instance")
    p.add_argument("routing", nargs="?")
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=cmd_render)
    return ap


def run(argv: Sequence[str]) -> int:
    try:
        args = build_parser().parse_args(list(argv))
        if not 0 <= getattr(args, "seed", 0) < 2**64:
            raise UsageError("--seed must be an unsigned 64-bit integer")
        return args.func(args)
    except (UsageError, FormatError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except AssertionError as e:
        print(f"internal error: {e}", file=sys.stderr)
        return EXIT_INTERNAL


def main(argv: Optional[Sequence[str]] = None) -> None:
    sys.exit(run(sys.argv[1:] if argv is None else argv))


if __name__ == "__main__":
    main()
