import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from artifact.hsc_lp import (
    build_lp,
    caps_ok,
    check_hsc_solution,
    check_lp_solution,
    dump_lp,
    expected_model_size,
    round_once,
    run_hsc,
    solve_lp,
)
from artifact.oracle import exact_hsc
from hsc_fixtures import one_square, random_tiny


def test_three_vertex_lp_value():
    inst = one_square()
    sol = solve_lp(build_lp(inst))
    assert sol.objective == 2
    assert isinstance(sol.objective, Fraction)


def test_empty_u_and_zero_caps():
    assert solve_lp(build_lp(one_square(U_colors=()))).objective == 0
    assert solve_lp(build_lp(one_square(cap=0))).objective == 0


def test_doubled_caps_bounded_by_counts():
    # one square takes one color, so doubling caps cannot exceed the 2 vertices of color a
    assert solve_lp(build_lp(one_square(cap=4))).objective == 2


@pytest.mark.parametrize("seed", range(10))
def test_model_size_closed_form(seed):
    inst = random_tiny(random.Random(seed))
    model = build_lp(inst)
    assert (model.num_vars, len(model.rows)) == expected_model_size(inst)


def test_dump_lp_layout():
    text = dump_lp(build_lp(one_square()))
    assert text.startswith("\\ HSC linear program\nMaximize\n")
    assert "Subject To" in text and text.rstrip().endswith("End")


@pytest.mark.parametrize("seed", range(15))
def test_exact_and_float_solvers_agree(seed):
    inst = random_tiny(random.Random(100 + seed))
    model = build_lp(inst)
    exact = solve_lp(model, method="exact")
    floating = solve_lp(model, method="highs")
    assert check_lp_solution(model, exact, 0)
    assert check_lp_solution(model, floating, 1e-7)
    assert abs(float(exact.objective) - floating.objective) < 1e-6


def test_round_once_integral_lp_is_deterministic():
    inst = one_square()
    model = build_lp(inst)
    sol = solve_lp(model)
    assert all(Fraction(v).denominator == 1 for v in sol.values)
    for seed in range(20):
        r = round_once(inst, model, sol, np.random.default_rng(seed))
        assert r.value == 2 and not r.failed
        assert {c for _, c, _ in r.U_selected} == {(1, 0)}
        assert check_hsc_solution(inst, r)


def test_round_once_zero_lp():
    inst = one_square(cap=0)
    model = build_lp(inst)
    r = round_once(inst, model, solve_lp(model), np.random.default_rng(0))
    assert r.value == 0 and check_hsc_solution(inst, r)


def test_round_once_mean_close_to_lp():
    inst = one_square()
    model = build_lp(inst)
    sol = solve_lp(model)
    rng = np.random.default_rng(7)
    mean = np.mean([round_once(inst, model, sol, rng).value for _ in range(10_000)])
    assert abs(mean - 2) <= 0.05 * 2


def test_run_hsc_single_trial_matches_round_once():
    inst = one_square()
    best = run_hsc(inst, 1, np.random.default_rng(3))
    assert best.value == 2


def test_run_hsc_monotone_in_trials():
    inst = random_tiny(random.Random(5))
    a = run_hsc(inst, 10, np.random.default_rng(11))
    b = run_hsc(inst, 50, np.random.default_rng(11))
    assert b.value >= a.value
    with pytest.raises(ValueError):
        run_hsc(inst, 0, np.random.default_rng(0))


@settings(max_examples=40)
@given(st.integers(0, 10**6))
def test_rounded_solutions_feasible_and_lp_dominates(seed):
    inst = random_tiny(random.Random(seed))
    model = build_lp(inst)
    sol = solve_lp(model)
    opt, _ = exact_hsc(inst)
    assert sol.objective >= opt
    rng = np.random.default_rng(seed)
    for _ in range(5):
        r = round_once(inst, model, sol, rng)
        if not r.failed:
            assert check_hsc_solution(inst, r)
            assert caps_ok(inst, r.U_selected)
