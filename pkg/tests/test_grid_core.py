import pytest
from hypothesis import given, strategies as st

from artifact.grid_core import (
    Coord,
    FormatError,
    GridInstance,
    GridPath,
    Routing,
    SubGrid,
    derive_params,
    format_instance,
    format_routing,
    manhattan_dist,
    manhattan_set_dist,
    neighbors,
    parse_instance_text,
    parse_routing,
    verify_path,
    verify_routing,
)


def route(*entries):
    return Routing(tuple((i, GridPath(tuple(vs))) for i, vs in entries))


def test_manhattan_examples():
    assert manhattan_dist(Coord(1, 1), Coord(3, 4)) == 5
    assert manhattan_dist(Coord(2, 2), Coord(2, 2)) == 0
    assert manhattan_set_dist([Coord(1, 1)], [Coord(1, 3), Coord(4, 1)]) == 2


def test_verify_valid_path():
    inst = GridInstance(3, (((1, 1), (3, 1)),))
    assert verify_routing(inst, route((0, [(1, 1), (2, 1), (3, 1)])))


def test_verify_shared_vertex():
    inst = GridInstance(3, (((1, 2), (3, 2)), ((2, 1), (2, 3))))
    v = verify_routing(inst, route((0, [(1, 2), (2, 2), (3, 2)]), (1, [(2, 1), (2, 2), (2, 3)])))
    assert not v and v.rule == "shared vertex" and v.where == Coord(2, 2)
    assert "shared vertex (2,2)" in v.message


def test_verify_endpoint_mismatch():
    inst = GridInstance(3, (((1, 3), (3, 3)),))
    v = verify_routing(inst, route((0, [(1, 3), (2, 3), (3, 3), (3, 2)])))
    assert not v and v.rule == "endpoint mismatch"


def test_verify_rejects_jumps_and_repeats():
    assert not verify_path(3, GridPath(((1, 1), (2, 2))))
    inst = GridInstance(3, (((1, 1), (1, 2)),))
    assert not verify_routing(inst, route((0, [(1, 1), (1, 2), (1, 1), (1, 2)])))
    assert not verify_routing(inst, route((0, [(1, 1), (1, 2)]), (0, [(1, 1), (1, 2)])))


def test_derive_params_examples():
    assert derive_params(2**16, 2**200).eta == 16
    assert derive_params(2**16, 64, {"eta": 2, "rho": 2}).d == (16, 8)
    p = derive_params(4, 1)
    assert p.degenerate and p.rho == 1


def test_derive_params_trim():
    p = derive_params(100 * 100, 64, {"eta": 2, "rho": 1})
    assert p.ell_prime % p.d1 == 0 and p.ell_prime <= 99
    with pytest.raises(ValueError):
        derive_params(2, 1)
    with pytest.raises(ValueError):
        derive_params(16, 1, {"rho": 0})


def test_instance_rejects_outside():
    with pytest.raises(ValueError):
        GridInstance(3, (((1, 1), (4, 1)),))


def test_parse_errors():
    with pytest.raises(FormatError, match="count mismatch at line 4"):
        parse_instance_text("ndpgrid v1\nside 3\npairs 2\n1 1 3 3\n")
    with pytest.raises(FormatError, match="malformed header at line 1"):
        parse_instance_text("side 3\npairs 1\n1 1 3 3\n")
    with pytest.raises(FormatError, match=r"out-of-range coordinate \(9,3\) at line 4, column 5"):
        parse_instance_text("ndpgrid v1\nside 3\npairs 1\n1 1 9 3\n")


def test_parse_minimal():
    inst, extra = parse_instance_text("ndpgrid v1\nside 3\npairs 1\n1 1 3 3\n")
    assert inst == GridInstance(3, (((1, 1), (3, 3)),)) and extra == []


coords = lambda side: st.builds(Coord, st.integers(1, side), st.integers(1, side))


@st.composite
def instances(draw, max_side=12, max_k=6):
    side = draw(st.integers(1, max_side))
    pairs = draw(st.lists(st.tuples(coords(side), coords(side)), max_size=max_k))
    return GridInstance(side, tuple(pairs))


@given(instances())
def test_instance_round_trip(inst):
    back, _ = parse_instance_text(format_instance(inst))
    assert back == inst


@given(st.lists(st.lists(st.tuples(st.integers(1, 9), st.integers(1, 9)), min_size=1, max_size=5), max_size=4))
def test_routing_round_trip(paths):
    r = Routing(tuple((i, GridPath(tuple(p))) for i, p in enumerate(paths)))
    assert parse_routing(format_routing(r)) == r


@given(coords(10))
def test_neighbors_are_unit_steps(c):
    for w in neighbors(c, 10):
        assert manhattan_dist(c, w) == 1 and 1 <= w.row <= 10 and 1 <= w.col <= 10


@given(instances(max_side=8, max_k=3), st.integers(0, 2**32))
def test_greedy_straight_paths_verify_or_report(inst, seed):
    # L-shaped paths: the verifier accepts exactly the pairwise vertex-disjoint ones
    paths = []
    for i, (s, t) in enumerate(inst.pairs):
        vs = [s]
        while vs[-1].row != t.row:
            vs.append(Coord(vs[-1].row + (1 if t.row > vs[-1].row else -1), vs[-1].col))
        while vs[-1].col != t.col:
            vs.append(Coord(vs[-1].row, vs[-1].col + (1 if t.col > vs[-1].col else -1)))
        paths.append((i, vs))
    r = route(*paths)
    disjoint = len({v for _, vs in paths for v in vs}) == sum(len(vs) for _, vs in paths)
    assert bool(verify_routing(inst, r)) == disjoint


def test_subgrid():
    q = SubGrid((2, 4), (3, 7))
    assert q.height == 3 and q.width == 5 and not q.is_square
    assert q.on_own_boundary(Coord(2, 5)) and not q.on_own_boundary(Coord(3, 5))
    with pytest.raises(ValueError):
        SubGrid((3, 2), (1, 1))
