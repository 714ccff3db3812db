import itertools
import random

import pytest

from artifact.grid_core import Coord, GridInstance, verify_routing
from artifact.instances import gen_hard
from artifact.oracle import BudgetExceeded, exact_hsc, exact_ndp, max_distance_property_subset
from hsc_fixtures import one_square, random_tiny


def test_crossing_corner_pairs():
    inst = GridInstance(3, (((1, 1), (3, 3)), ((1, 3), (3, 1))))
    count, r = exact_ndp(inst)
    assert count == 1 and verify_routing(inst, r)


def test_single_and_empty():
    assert exact_ndp(GridInstance(3, (((1, 2), (3, 2)),)))[0] == 1
    assert exact_ndp(GridInstance(3, ()))[0] == 0


def test_budget():
    with pytest.raises(BudgetExceeded):
        exact_ndp(GridInstance(7, (((1, 1), (2, 2)),)))
    with pytest.raises(BudgetExceeded):
        exact_ndp(GridInstance(4, tuple(((1, c), (4, c)) for c in range(1, 5)) + (((2, 1), (2, 4)),)))


def _brute_ndp(inst: GridInstance) -> int:
    """Independent check: all simple paths per pair, then the largest disjoint choice."""
    side = inst.side

    def simple_paths(s, t):
        out, stack = [], [(s, (s,))]
        while stack:
            v, p = stack.pop()
            if v == t:
                out.append(frozenset(p))
                continue
            r, c = v
            for w in ((r + 1, c), (r - 1, c), (r, c + 1), (r, c - 1)):
                if 1 <= w[0] <= side and 1 <= w[1] <= side and w not in p:
                    stack.append((w, p + (w,)))
        return out

    options = [simple_paths(tuple(s), tuple(t)) for s, t in inst.pairs]
    best = 0
    for k in range(len(options), 0, -1):
        for sub in itertools.combinations(range(len(options)), k):
            def rec(i, used):
                if i == len(sub):
                    return True
                return any(not (p & used) and rec(i + 1, used | p) for p in options[sub[i]])

            if rec(0, frozenset()):
                return k
    return best


@pytest.mark.parametrize("seed", range(25))
def test_exact_ndp_matches_brute_force_3x3(seed):
    rng = random.Random(seed)
    cells = [Coord(r, c) for r in range(1, 4) for c in range(1, 4)]
    bd = [v for v in cells if v.row in (1, 3) or v.col in (1, 3)]
    pairs = tuple((rng.choice(bd), rng.choice(cells)) for _ in range(rng.randint(1, 3)))
    inst = GridInstance(3, pairs)
    count, r = exact_ndp(inst)
    assert count == _brute_ndp(inst)
    assert len(r) == count and verify_routing(inst, r)


def test_exact_hsc_examples():
    assert exact_hsc(one_square())[0] == 2
    assert exact_hsc(one_square(cap=0))[0] == 0
    assert exact_hsc(one_square(U_colors=((1, 0),) * 3, cap=3))[0] == 3


@pytest.mark.parametrize("seed", range(10))
def test_exact_hsc_witness_consistent(seed):
    from artifact.hsc_lp import HscSolution, check_hsc_solution

    inst = random_tiny(random.Random(seed))
    value, (f, chosen) = exact_hsc(inst)
    assert len(chosen) == value
    assert check_hsc_solution(inst, HscSolution(f, tuple(chosen), 0, 0))


def test_distance_property_examples():
    inst = GridInstance(20, (((1, 3), (15, 3)), ((1, 4), (15, 12))))
    assert max_distance_property_subset(inst) == 2
    lvl0, _ = gen_hard(0)
    assert max_distance_property_subset(lvl0) == 1
