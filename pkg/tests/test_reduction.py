import itertools
import random

import pytest
from hypothesis import given, settings, strategies as st

from artifact.grid_core import Coord, GridInstance, GridPath, Routing, verify_routing
from artifact.instances import gen_random, rng_for
from artifact.reduction import (
    BInterval,
    Candidate,
    Frame,
    GeometryError,
    RestrictedConfig,
    RestrictedStats,
    boundary_gap,
    boundary_pos,
    build_modified_instance,
    check_interesting,
    compose_canonical,
    distance_class,
    edge_of,
    frame_for,
    lift_sources_to_boundary,
    nearest_boundary,
    perimeter,
    route_modified_back,
    select_good_pairs_dp,
    selection_valid,
    short_pair_cover,
    solve_boundary_pairs,
    solve_restricted,
    solve_short_pairs,
    split_classes,
)
from artifact.snake_router import greedy_routing


# boundary geometry


@given(st.integers(2, 30), st.data())
def test_boundary_positions_are_a_cycle(side, data):
    bd = [Coord(r, c) for r in range(1, side + 1) for c in range(1, side + 1) if r in (1, side) or c in (1, side)]
    pos = sorted(boundary_pos(v, side) for v in bd)
    assert pos == list(range(perimeter(side)))


@given(st.integers(0, 7), st.booleans(), st.integers(3, 15), st.data())
def test_frame_round_trip(k, mirror, side, data):
    f = Frame(side, k % 4, mirror)
    v = Coord(data.draw(st.integers(1, side)), data.draw(st.integers(1, side)))
    assert f.back(f.fwd(v)) == v
    e = edge_of(v, side)
    corner = v.row in (1, side) and v.col in (1, side)
    if e is not None and not corner:
        assert edge_of(f.fwd(v), side) == f.edge(e)


def test_frame_for():
    f = frame_for(10, {"left": "bottom", "top": "right"})
    assert f.edge("left") == "bottom" and f.edge("top") == "right"


def test_boundary_gap():
    a, b = BInterval("top", 1, 3), BInterval("top", 8, 10)
    assert boundary_gap(a, b, 12) == 4


# classes


def test_class_examples():
    inst = GridInstance(20, (((1, 5), (18, 9)), ((1, 7), (20, 3))))
    split = split_classes(inst, 8, 2)
    cls = {p: (k, r) for k, by_r in split.cells.items() for r, ps in by_r.items() for p in ps}
    assert cls[0][0] == ("top", "bottom")
    assert cls[1] == (("top", "bottom"), -1)


@given(st.integers(1, 200), st.integers(1, 512), st.sampled_from([2, 4, 8]))
def test_distance_class_bounds(dist, opt, eta):
    r = distance_class(dist, opt, eta)
    if r == 0:
        assert dist * eta >= opt
    else:
        assert dist * eta * 2**r >= opt > dist * eta * 2 ** (r - 1)


@pytest.mark.parametrize("seed", range(100))
def test_split_partitions(seed):
    rng = random.Random(seed)
    side = rng.randint(5, 60)
    cells = [Coord(r, c) for r in range(1, side + 1) for c in range(1, side + 1)]
    bd = [v for v in cells if v.row in (1, side) or v.col in (1, side)]
    inst = GridInstance(side, tuple((rng.choice(bd), rng.choice(cells)) for _ in range(rng.randint(0, 20))))
    split = split_classes(inst, 2 ** rng.randint(0, 8), rng.choice([2, 4]))
    ids = sorted(p for by_r in split.cells.values() for ps in by_r.values() for p in ps)
    assert ids == list(range(inst.k))
    for (q, qp), by_r in split.cells.items():
        for r, ps in by_r.items():
            for p in ps:
                s, t = inst.pairs[p]
                assert edge_of(s, side) == q and edge_of(nearest_boundary(t, side), side) == qp
                if r >= 1:
                    d = split.d_of(r)
                    dist = abs(t.row - nearest_boundary(t, side).row) + abs(t.col - nearest_boundary(t, side).col)
                    assert dist >= 1 and dist * split.eta * 2**r >= split.opt_guess


# modified instances


def test_modified_instance_size():
    inst = GridInstance(60, (((1, 5), (59, 25)), ((1, 50), (59, 30))))
    mi = build_modified_instance(inst, BInterval("top", 1, 60), BInterval("bottom", 20, 35), 1)
    assert mi.instance.side == 24 and mi.gp.height == 24 and mi.gp.width == 24


def test_modified_instance_empty_and_order():
    I, Ip = BInterval("top", 1, 60), BInterval("bottom", 20, 35)
    empty = build_modified_instance(GridInstance(60, ()), I, Ip, 1)
    assert empty.instance.k == 0 and empty.instance.side == 24
    # clockwise order along the top edge: (1,7) before (1,40)
    inst = GridInstance(60, (((1, 40), (59, 30)), ((1, 7), (59, 25))))
    mi = build_modified_instance(inst, I, Ip, 1)
    srcs = {mi.pids[i]: s for i, (s, _) in enumerate(mi.instance.pairs)}
    assert srcs[1] == Coord(1, 1) and srcs[0] == Coord(1, 2)


def test_not_interesting():
    with pytest.raises(GeometryError):
        check_interesting(BInterval("top", 1, 60), BInterval("bottom", 2, 17), 1, 60)


def test_route_back_one_pair():
    inst = GridInstance(60, (((1, 27), (59, 27)),))
    mi = build_modified_instance(inst, BInterval("top", 1, 60), BInterval("bottom", 20, 35), 1)
    inner = greedy_routing(mi.instance)
    r = route_modified_back(inst, mi, inner)
    assert len(r) == 1 and verify_routing(inst, r)


def test_route_back_d_pairs():
    d = 3
    side = 180
    pairs = tuple(((1, 30 + 40 * j), (side - d, 80 + 6 * j)) for j in range(d))
    inst = GridInstance(side, pairs)
    mi = build_modified_instance(inst, BInterval("top", 1, side), BInterval("bottom", 70, 110), d)
    inner = greedy_routing(mi.instance)
    assert len(inner) == d
    r = route_modified_back(inst, mi, inner)
    assert len(r) == d and verify_routing(inst, r)


# selection DP


def _brute(cands, d, floor=1):
    best = 0
    for k in range(len(cands), 0, -1):
        for sub in itertools.combinations(cands, k):
            if selection_valid(sub, d):
                return k
    return best


def test_dp_single_and_conflict():
    ev = lambda c: (1, None)
    one = [Candidate((0, 2), (200, 210))]
    assert len(select_good_pairs_dp(one, 1, ev)) == 1
    crossing = [Candidate((0, 2), (100, 110)), Candidate((5, 7), (150, 160))]
    assert len(select_good_pairs_dp(crossing, 1, ev)) == 1


@settings(max_examples=60)
@given(st.integers(0, 2**32), st.integers(1, 12))
def test_dp_matches_brute_force(seed, m):
    rng = random.Random(seed)
    d = rng.choice([1, 2])
    cands = []
    for _ in range(m):
        a = rng.randint(0, 60)
        b = rng.randint(200, 500)
        cands.append(Candidate((a, a + rng.randint(0, 4)), (b, b + rng.randint(0, 20))))
    sel = select_good_pairs_dp(cands, d, lambda c: (1, None))
    assert selection_valid([c for c, _ in sel], d)
    assert len(sel) == _brute(cands, d)


# short pairs


def test_short_pair_cover_shape():
    cov = short_pair_cover(100, 2, 3)
    assert cov[0] == (1, 11)
    assert all(hi - lo + 1 == 8 for lo, hi in cov[1:-1])
    assert 8 <= cov[-1][1] - cov[-1][0] + 1 <= 16 + 8 and cov[-1][1] == 100
    assert [lo for lo, _ in cov[1:]] == [hi + 1 for _, hi in cov[:-1]]


def test_short_pairs_single():
    side, d = 60, 2
    inst = GridInstance(side, (((side, 20), (side - 2, 21)),))
    r = solve_short_pairs(inst, d, rng_for(1))
    assert len(r) == 1 and verify_routing(inst, r)


def test_short_pair_straddling_excluded():
    side, d = 60, 2
    for seed in range(40):
        offset = int(rng_for(seed).integers(0, 4 * d + 1))
        cov = short_pair_cover(side, d, offset)
        cut = cov[1][0]
        inst = GridInstance(side, (((side, cut - 1), (side - 2, cut + 1)),))
        got = solve_short_pairs(inst, d, rng_for(seed))
        assert len(got) == 0


def test_short_pair_survival_frequency():
    d, side = 2, 120
    rng = random.Random(0)
    pairs = []
    for _ in range(200):
        c = rng.randint(1, side - 2 * d)
        pairs.append((c, c + rng.randint(0, 2 * d)))
    survived = [0] * len(pairs)
    for seed in range(500):
        offset = int(rng_for(seed).integers(0, 4 * d + 1))
        cov = short_pair_cover(side, d, offset)
        for i, (a, b) in enumerate(pairs):
            survived[i] += any(lo <= a and b <= hi for lo, hi in cov)
    assert min(survived) / 500 >= 0.4


# sources near the boundary


def test_lift_identity_and_segment():
    inst = gen_random(10, 3, seed=2)
    lifted, canon = lift_sources_to_boundary(inst, 0)
    assert lifted == inst and all(len(seg) == 1 for seg in canon.values())
    inst = GridInstance(10, (((2, 5), (7, 7)),))
    lifted, canon = lift_sources_to_boundary(inst, 1)
    assert lifted.pairs[0][0] == Coord(1, 5) and canon[0] == (Coord(2, 5), Coord(1, 5))
    with pytest.raises(ValueError):
        lift_sources_to_boundary(GridInstance(10, (((3, 5), (7, 7)),)), 1)


def test_compose_canonical_conflicts():
    # six sources one row below the top; lifted path i runs along row 2 through s_{i+1},
    # so U_{i+1} meets path i and every path has conflict out-degree <= 2
    side = 50
    cols = [5 + 6 * i for i in range(6)]
    inst = GridInstance(side, tuple(((2, c), (40, c + 6)) for c in cols))
    lifted, canon = lift_sources_to_boundary(inst, 1)
    entries = []
    for i, c in enumerate(cols):
        path = [Coord(1, c), Coord(1, c + 1), Coord(1, c + 2)]
        path += [Coord(2, x) for x in range(c + 2, c + 7)]
        path += [Coord(r, c + 6) for r in range(3, 41)]
        entries.append((i, GridPath(tuple(path))))
    lifted_routing = Routing(tuple(entries))
    assert verify_routing(lifted, lifted_routing)
    r = compose_canonical(inst, lifted_routing, canon)
    assert len(r) >= 2 and verify_routing(inst, r)


def test_boundary_pairs_dp():
    side = 8
    inst = GridInstance(side, (((1, 2), (1, 7)), ((1, 4), (1, 5)), ((1, 3), (8, 3))))
    r = solve_boundary_pairs(inst, [0, 1])
    assert len(r) == 2 and verify_routing(inst, r)


# dispatcher


def test_single_pair():
    for seed in range(10):
        inst = gen_random(15, 1, seed=seed)
        r = solve_restricted(inst, rng_for(seed))
        assert len(r) == 1 and verify_routing(inst, r)


@pytest.mark.parametrize("seed", range(60))
def test_outputs_verify(seed):
    rng = random.Random(seed)
    side = rng.randint(4, 40)
    cells = [Coord(r, c) for r in range(1, side + 1) for c in range(1, side + 1)]
    bd = [v for v in cells if v.row in (1, side) or v.col in (1, side)]
    inst = GridInstance(side, tuple((rng.choice(bd), rng.choice(cells)) for _ in range(rng.randint(0, 15))))
    stats = RestrictedStats()
    r = solve_restricted(inst, rng_for(seed), stats=stats)
    assert verify_routing(inst, r)
    assert (len(r) >= 1) == (inst.k >= 1)


@pytest.mark.parametrize("seed", range(6))
def test_forced_cases_verify(seed):
    # case_threshold 0 sends near classes through Cases 1-3 instead of the direct far call
    rng = rng_for(seed)
    side = 160
    pairs = []
    for j in range(10):
        kind = j % 3
        dist = 2
        if kind == 0:
            s = Coord(1, int(rng.integers(1, side + 1)))
        elif kind == 1:
            s = Coord(int(rng.integers(2, side)), 1)
        else:
            s = Coord(side, int(rng.integers(2, side - 60)))
        pairs.append((s, Coord(side - dist, int(rng.integers(20, side - 20)))))
    inst = GridInstance(side, tuple(dict.fromkeys(pairs)))
    cfg = RestrictedConfig(case_threshold=0)
    r = solve_restricted(inst, rng_for(seed), cfg)
    assert verify_routing(inst, r) and len(r) >= 1
