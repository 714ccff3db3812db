import random

import pytest
from hypothesis import given, settings, strategies as st

from artifact.grid_core import Coord, GridInstance, GridPath, Routing, SubGrid
from artifact.instances import rng_for
from artifact.wall import (
    WallError,
    build_wall,
    conflict_digraph,
    edp_to_ndp_extract,
    is_connected,
    lift_wall_routing,
    remap_wall_sources,
    restrict_to_wall,
    solve_wall,
    verify_wall_paths,
)
from wall_fixtures import edge_disjoint_family


def test_small_wall():
    w = build_wall(4, 4)
    assert w.n_columns == 2
    assert max(w.degree(v) for v in w.vertices()) == 3
    with pytest.raises(WallError):
        build_wall(3, 4)
    with pytest.raises(WallError):
        build_wall(2, 6)


@given(st.integers(2, 15).map(lambda x: 2 * x), st.integers(2, 30))
def test_wall_degrees(ell, h):
    w = build_wall(ell, h)
    assert all(2 <= w.degree(v) <= 3 for v in w.vertices())
    for v in w.vertices():
        for u in w.neighbors(v):
            assert v in w.neighbors(u)


def test_wall_columns_are_paths():
    w = build_wall(10, 9)
    for i in range(1, w.n_columns + 1):
        col = w.column(i)
        assert col[0].row == 1 and col[-1].row == 9
        assert all(w.has_edge(a, b) for a, b in zip(col, col[1:]))


def test_extract_keeps_node_disjoint_family():
    w = build_wall(10, 10)
    paths = [w.row(1), w.row(5), w.row(10)]
    assert sorted(edp_to_ndp_extract(w, paths)) == [0, 1, 2]


def test_extract_shared_endpoint():
    w = build_wall(10, 10)
    a = w.row(3)[:5]
    b = [a[-1]] + w.row(3)[5:]
    keep = edp_to_ndp_extract(w, [a, b])
    assert len(keep) == 1


def test_extract_rejects_shared_edge():
    w = build_wall(10, 10)
    with pytest.raises(WallError):
        edp_to_ndp_extract(w, [w.row(2)[:4], w.row(2)[2:6]])


@settings(max_examples=30)
@given(st.integers(0, 2**32))
def test_extract_random_family(seed):
    rng = random.Random(seed)
    w = build_wall(2 * rng.randint(5, 20), rng.randint(5, 20))
    paths = edge_disjoint_family(rng, w, rng.randint(1, 30))
    keep = edp_to_ndp_extract(w, paths)
    assert len(keep) >= -(-len(paths) // 9)
    seen = set()
    for i in keep:
        assert not seen & set(paths[i])
        seen |= set(paths[i])


def test_conflict_digraph_endpoint():
    a = [Coord(1, 1), Coord(1, 2), Coord(1, 3)]
    b = [Coord(1, 2), Coord(2, 2)]
    adj = conflict_digraph([a, b])
    assert 0 in adj[1] or 1 in adj[0]


def test_remap_sources():
    w = build_wall(10, 10)
    inst = GridInstance(10, (((1, 4), (5, 5)), ((2, 2), (6, 6))))
    out, moved = remap_wall_sources(w, inst)
    assert out.pairs[0][0] == Coord(1, 4)
    assert out.pairs[1][0] == Coord(2, 1) and moved == {1: Coord(2, 2)}


def test_lift_back_node_disjoint():
    w = build_wall(10, 10)
    inst = GridInstance(10, (((2, 2), (2, 6)), ((1, 4), (9, 4))))
    remapped, moved = remap_wall_sources(w, inst)
    p0 = [Coord(2, 1), Coord(2, 2), Coord(2, 3), Coord(2, 4), Coord(2, 5), Coord(2, 6)]
    r = Routing(((0, GridPath(tuple(p0))),))
    lifted = lift_wall_routing(w, inst, r, moved)
    assert len(lifted) == 1 and verify_wall_paths(w, inst, lifted, "NDP")
    assert lifted.entries[0][1].vertices[0] == Coord(2, 2)


def test_solve_wall_single_pair():
    w = build_wall(12, 12)
    inst = GridInstance(12, (((1, 5), (7, 7)),))
    r = solve_wall(w, inst, "NDP", rng_for(0))
    assert len(r) == 1 and verify_wall_paths(w, inst, r, "NDP")


@pytest.mark.parametrize("seed", range(25))
def test_solve_wall_outputs_verify(seed):
    rng = random.Random(seed)
    side = 2 * rng.randint(6, 14)
    w = build_wall(side, side)
    gamma = sorted(w.boundary())
    inner = [v for v in w.vertices() if v not in set(gamma)]
    srcs = rng.sample(gamma, rng.randint(1, 8))
    inst = GridInstance(side, tuple((s, rng.choice(inner)) for s in srcs))
    for mode in ("NDP", "EDP"):
        r = solve_wall(w, inst, mode, rng_for(seed))
        assert verify_wall_paths(w, inst, r, mode) and len(r) >= 1


@settings(max_examples=40)
@given(st.integers(0, 2**32))
def test_width3_snake_restriction_connected(seed):
    rng = random.Random(seed)
    w = build_wall(40, 40)
    r0, c0 = rng.randint(1, 10), rng.randint(1, 10)
    corridors = [SubGrid((r0, r0 + rng.randint(2, 10)), (c0, c0 + 2))]
    while len(corridors) < rng.randint(1, 5):
        cur = corridors[-1]
        if len(corridors) % 2:
            nxt = SubGrid((cur.rows[1] - 2, cur.rows[1]), (cur.cols[0], cur.cols[0] + rng.randint(3, 10)))
        else:
            nxt = SubGrid((cur.rows[1], cur.rows[1] + rng.randint(2, 8)), (cur.cols[1] - 2, cur.cols[1]))
        if nxt.rows[1] > 40 or nxt.cols[1] > 40:
            break
        corridors.append(nxt)
    assert is_connected(w, restrict_to_wall(w, corridors))
