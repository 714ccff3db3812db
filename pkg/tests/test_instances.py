import pytest
from hypothesis import given, settings, strategies as st

from artifact.grid_core import Coord, boundary_dist, manhattan_dist, on_boundary, verify_routing
from artifact.instances import HardParams, MAX_HARD_LEVEL, gen_hard, gen_random, gen_spaced, spaced_gap


def test_random_basics():
    assert gen_random(10, 0, seed=1).pairs == ()
    assert gen_random(30, 5, seed=4) == gen_random(30, 5, seed=4)


@settings(max_examples=30)
@given(st.integers(12, 60), st.integers(0, 8), st.integers(0, 2), st.integers(0, 2**32))
def test_random_margin_and_boundary(side, k, margin, seed):
    inst = gen_random(side, k, far_margin=margin, seed=seed)
    assert inst.k == k
    srcs = [s for s, _ in inst.pairs]
    assert len(set(srcs)) == k and all(on_boundary(s, side) for s in srcs)
    assert all(boundary_dist(t, side) >= margin for _, t in inst.pairs)


def test_spaced():
    inst = gen_spaced(40, 1, seed=0)
    assert inst.k == 1
    inst = gen_spaced(130, 3, seed=2)
    g = spaced_gap(3)
    assert g == 32
    ts = [t for _, t in inst.pairs]
    assert all(manhattan_dist(a, b) >= g for i, a in enumerate(ts) for b in ts[i + 1 :])
    assert all(boundary_dist(t, 130) >= g for t in ts)
    with pytest.raises(ValueError):
        gen_spaced(60, 3, seed=0)


def test_hard_level0():
    inst, w = gen_hard(0)
    assert inst.side == 9 and inst.pairs == ((Coord(1, 1), Coord(5, 1)),)
    assert verify_routing(inst, w)


def test_hard_level1():
    inst, w = gen_hard(1)
    assert inst.k == 40 and inst.side == 396
    assert HardParams().ell(1) == 396
    assert verify_routing(inst, w) and len(w) == 40
    assert all(s.row == 1 for s, _ in inst.pairs)


def test_hard_level_limit():
    with pytest.raises(ValueError):
        gen_hard(MAX_HARD_LEVEL + 1)
