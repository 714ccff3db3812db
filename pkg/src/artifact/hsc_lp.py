"""Hierarchical Square Coloring: LP construction, solving, and three-stage rounding."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .grid_core import Coord, SubGrid, Verdict
from .hierarchy import Color, ColorSystem, Coloring, SquareSystem

Num = Union[Fraction, float]
UItem = tuple[Coord, Color, int]  # (vertex, level-rho color, pair id)


@dataclass(frozen=True)
class HscInstance:
    """``n`` sets the log base of the thresholds (defaults to |U|); ``overrides`` may
    replace log^3 n (``stage2``), log^4 n (``stage3``), log^5 n (``trials``) or all (``scale``)."""

    squares: SquareSystem
    colors: ColorSystem
    U: tuple[UItem, ...]
    d: tuple[int, ...]
    n: int = 0
    overrides: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        rho = self.squares.rho
        if self.colors.rho != rho or len(self.d) != rho:
            raise ValueError("square, color and cap hierarchies disagree on rho")
        for v, c, _ in self.U:
            if self.squares.locate(v) is None:
                raise ValueError(f"U vertex {v} lies outside every level-rho square")
            if c[0] != rho or c not in set(self.colors.colors(rho)):
                raise ValueError(f"U vertex {v} has invalid level-rho color {c}")

    @property
    def rho(self) -> int:
        return self.squares.rho

    def polylog(self, name: str, power: int) -> float:
        ov = self.overrides
        if name in ov:
            return float(ov[name])
        if "scale" in ov:
            return float(ov["scale"])
        n = max(self.n or len(self.U), 2)
        return math.log2(n) ** power

    def stage2_threshold(self, h: int) -> float:
        return 64 * self.d[h - 1] * self.polylog("stage2", 3)

    def stage3_modulus(self) -> int:
        return max(1, math.ceil(128 * self.polylog("stage3", 4)))

    def default_trials(self) -> int:
        return max(1, math.ceil(self.polylog("trials", 5)))


@dataclass
class HscModel:
    """LP in the form max c.x s.t. rows (sense in {'<=', '='}), x >= 0."""

    names: list[str]
    index: dict[tuple, int]
    objective: dict[int, int]
    rows: list[tuple[str, dict[int, int], str, int]]  # (label, coeffs, sense, rhs)
    counts: dict[tuple[SubGrid, Color], int]

    @property
    def num_vars(self) -> int:
        return len(self.names)

    def tag_counts(self) -> dict[str, int]:
        out: dict[str, int] = defaultdict(int)
        for label, *_ in self.rows:
            out[label.split("_")[0]] += 1
        return dict(out)


@dataclass(frozen=True)
class LpSolution:
    values: tuple[Num, ...]
    objective: Num
    method: str

    def __getitem__(self, i: int) -> Num:
        return self.values[i]


@dataclass(frozen=True)
class HscSolution:
    f: Optional[Coloring]
    U_selected: tuple[UItem, ...]
    lp_value: Num
    trial_seed: int
    failed: bool = False
    repaired: bool = False

    @property
    def value(self) -> int:
        return len(self.U_selected)


def _var_name(key: tuple) -> str:
    kind = key[0]
    if kind == "Y":
        _, (h, i) = key
        return f"Y_{h}_{i}"
    _, q, (h, i) = key
    return f"{kind}_r{q.rows[0]}_c{q.cols[0]}_h{h}_k{i}"


def build_lp(inst: HscInstance) -> HscModel:
    sq, col, rho = inst.squares, inst.colors, inst.rho
    keys: list[tuple] = []
    for h in range(1, rho + 1):
        keys += [("x", q, c) for q in sq.levels[h - 1] for c in col.colors(h)]
    for h in range(1, rho + 1):
        keys += [("Y", c) for c in col.colors(h)]
    keys += [("y", q, c) for q in sq.levels[rho - 1] for c in col.colors(rho)]
    index = {k: i for i, k in enumerate(keys)}
    counts: dict[tuple[SubGrid, Color], int] = defaultdict(int)
    for v, c, _ in inst.U:
        counts[(sq.locate(v), c)] += 1

    rows: list[tuple[str, dict[int, int], str, int]] = []
    x = lambda q, c: index[("x", q, c)]  # noqa: E731
    y = lambda q, c: index[("y", q, c)]  # noqa: E731
    Y = lambda c: index[("Y", c)]  # noqa: E731
    Qr, Cr = sq.levels[rho - 1], col.colors(rho)
    # (1) y <= n x
    for q in Qr:
        for c in Cr:
            rows.append((f"c1_{len(rows)}", {y(q, c): 1, x(q, c): -counts.get((q, c), 0)}, "<=", 0))
    # (2) Y_rho = sum_Q y
    for c in Cr:
        coef = {Y(c): 1}
        for q in Qr:
            coef[y(q, c)] = -1
        rows.append((f"c2_{len(rows)}", coef, "=", 0))
    # (3) Y_h = sum of descendant Y_rho
    for h in range(1, rho):
        for c in col.colors(h):
            coef = {Y(c): 1}
            for cr in col.descendants(c, rho):
                coef[Y(cr)] = -1
            rows.append((f"c3_{len(rows)}", coef, "=", 0))
    # (4) Y_h <= d_h
    for h in range(1, rho + 1):
        for c in col.colors(h):
            rows.append((f"c4_{len(rows)}", {Y(c): 1}, "<=", inst.d[h - 1]))
    # (5) each level-1 square gets one color
    for q in sq.levels[0]:
        rows.append((f"c5_{len(rows)}", {x(q, c): 1 for c in col.colors(1)}, "=", 1))
    # (6) child squares take child colors
    children: dict[SubGrid, list[SubGrid]] = defaultdict(list)
    for ch, par in sq.parent.items():
        children[par].append(ch)
    for h in range(1, rho):
        for q in sq.levels[h - 1]:
            for c in col.colors(h):
                for qc in children[q]:
                    coef = {x(qc, cc): 1 for cc in col.children(c)}
                    coef[x(q, c)] = -1
                    rows.append((f"c6_{len(rows)}", coef, "=", 0))
    # (7) descendant y-sums <= d_h' x(Q_h, c_h)
    desc_r: dict[SubGrid, list[SubGrid]] = {}
    for qr in Qr:
        for a in sq.ancestors(qr):
            desc_r.setdefault(a, []).append(qr)
    for h in range(1, rho + 1):
        for q in sq.levels[h - 1]:
            for c in col.colors(h):
                for hp in range(h, rho + 1):
                    for cp in col.descendants(c, hp):
                        coef = {y(qr, cr): 1 for qr in desc_r[q] for cr in col.descendants(cp, rho)}
                        coef[x(q, c)] = -inst.d[hp - 1]
                        rows.append((f"c7_{len(rows)}", coef, "<=", 0))
    objective = {Y(c): 1 for c in Cr}
    return HscModel([_var_name(k) for k in keys], index, objective, rows, dict(counts))


def expected_model_size(inst: HscInstance) -> tuple[int, int]:
    """Closed-form (variable count, constraint count) of build_lp."""
    sq, col, rho = inst.squares, inst.colors, inst.rho
    nq = [len(sq.levels[h]) for h in range(rho)]
    nc = [len(col.colors(h)) for h in range(1, rho + 1)]
    nvars = sum(a * b for a, b in zip(nq, nc)) + sum(nc) + nq[-1] * nc[-1]
    ncons = nq[-1] * nc[-1] + nc[-1] + sum(nc[:-1]) + sum(nc) + nq[0]
    ncons += sum(nq[h + 1] * nc[h] for h in range(rho - 1))
    ncons += sum(nq[h] * nc[hp] for h in range(rho) for hp in range(h, rho))
    return nvars, ncons


def dump_lp(model: HscModel) -> str:
    """CPLEX LP text layout."""
    def expr(coef: Mapping[int, int]) -> str:
        parts = []
        for j in sorted(coef):
            a = coef[j]
            if a:
                parts.append(f"{'+' if a > 0 else '-'} {abs(a)} {model.names[j]}")
        return " ".join(parts) if parts else "0 " + model.names[0]

    out = ["\\ HSC linear program", "Maximize", f" obj: {expr(model.objective)}", "Subject To"]
    for label, coef, sense, rhs in model.rows:
        out.append(f" {label}: {expr(coef)} {sense} {rhs}")
    out.append("Bounds")
    out += [f" {nm} >= 0" for nm in model.names]
    out.append("End")
    return "\n".join(out) + "\n"


# LP solving


class LpNumericalError(RuntimeError):
    pass


def _simplex_exact(model: HscModel) -> tuple[list[Fraction], Fraction]:
    """Two-phase tableau simplex in exact rationals with Bland's rule."""
    n = model.num_vars
    m = len(model.rows)
    # columns: originals, slacks for '<=' rows, artificials for '=' rows
    slack_of: dict[int, int] = {}
    art_of: dict[int, int] = {}
    ncol = n
    for i, (_, _, sense, _) in enumerate(model.rows):
        if sense == "<=":
            slack_of[i] = ncol
            ncol += 1
    for i, (_, _, sense, _) in enumerate(model.rows):
        if sense == "=":
            art_of[i] = ncol
            ncol += 1
    T: list[list[Fraction]] = []
    basis: list[int] = []
    for i, (_, coef, sense, rhs) in enumerate(model.rows):
        row = [Fraction(0)] * (ncol + 1)
        sign = -1 if rhs < 0 else 1
        for j, a in coef.items():
            row[j] = Fraction(sign * a)
        if i in slack_of:
            if sign < 0:
                raise LpNumericalError("negative right-hand side on an inequality row")
            row[slack_of[i]] = Fraction(1)
            basis.append(slack_of[i])
        else:
            row[art_of[i]] = Fraction(1)
            basis.append(art_of[i])
        row[-1] = Fraction(sign * rhs)
        T.append(row)

    def pivot(r: int, c: int) -> None:
        pr = T[r]
        inv = 1 / pr[c]
        T[r] = pr = [v * inv for v in pr]
        nz = [j for j, v in enumerate(pr) if v]
        for i in range(m):
            if i != r and T[i][c]:
                f = T[i][c]
                row = T[i]
                for j in nz:
                    row[j] -= f * pr[j]
        basis[r] = c

    def run(cost: list[Fraction], allowed: int) -> None:
        # maximise cost.x; reduced cost r_j = cost_j - sum_i cost_{basis_i} T[i][j]
        while True:
            cb = [cost[b] for b in basis]
            enter = -1
            for j in range(allowed):
                if j in basis_set:
                    continue
                rj = cost[j] - sum(cb[i] * T[i][j] for i in range(m) if T[i][j])
                if rj > 0:
                    enter = j
                    break
            if enter < 0:
                return
            best = None
            for i in range(m):
                a = T[i][enter]
                if a > 0:
                    ratio = T[i][-1] / a
                    if best is None or ratio < best[0] or (ratio == best[0] and basis[i] < basis[best[1]]):
                        best = (ratio, i)
            if best is None:
                raise LpNumericalError("LP is unbounded")
            basis_set.discard(basis[best[1]])
            pivot(best[1], enter)
            basis_set.add(enter)

    basis_set = set(basis)
    if art_of:
        cost1 = [Fraction(0)] * ncol
        for a in art_of.values():
            cost1[a] = Fraction(-1)
        run(cost1, ncol)
        if any(T[i][-1] and basis[i] in art_of.values() for i in range(m)):
            raise LpNumericalError("LP is infeasible")
        # drive zero-valued artificials out of the basis
        arts = set(art_of.values())
        for i in range(m):
            if basis[i] in arts:
                for j in range(n + len(slack_of)):
                    if T[i][j] and j not in basis_set:
                        basis_set.discard(basis[i])
                        pivot(i, j)
                        basis_set.add(j)
                        break
    cost2 = [Fraction(0)] * ncol
    for j, a in model.objective.items():
        cost2[j] = Fraction(a)
    run(cost2, n + len(slack_of))
    vals = [Fraction(0)] * n
    for i, b in enumerate(basis):
        if b < n:
            vals[b] = T[i][-1]
    obj = sum((Fraction(a) * vals[j] for j, a in model.objective.items()), Fraction(0))
    return vals, obj


def _simplex_highs(model: HscModel, tol: float) -> tuple[list[float], float]:
    from scipy.optimize import linprog
    from scipy.sparse import lil_matrix

    n = model.num_vars
    ub = [r for r in model.rows if r[2] == "<="]
    eq = [r for r in model.rows if r[2] == "="]

    def mat(rows):
        A = lil_matrix((len(rows), n))
        for i, (_, coef, _, _) in enumerate(rows):
            for j, a in coef.items():
                A[i, j] = a
        return A.tocsr(), np.array([r[3] for r in rows], dtype=float)

    c = np.zeros(n)
    for j, a in model.objective.items():
        c[j] = -a
    A_ub, b_ub = mat(ub) if ub else (None, None)
    A_eq, b_eq = mat(eq) if eq else (None, None)
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if res.status != 0:
        raise LpNumericalError(f"HiGHS failed: {res.message}")
    x = np.where(res.x < tol, 0.0, res.x)
    return x.tolist(), float(-c @ x)


def check_lp_solution(model: HscModel, sol: LpSolution, tol: float) -> Verdict:
    for label, coef, sense, rhs in model.rows:
        lhs = sum(a * sol.values[j] for j, a in coef.items())
        if sense == "=" and abs(lhs - rhs) > tol * (1 + abs(rhs)):
            return Verdict.fail("residual", f"{label}: {float(lhs)} != {rhs}")
        if sense == "<=" and lhs - rhs > tol * (1 + abs(rhs)):
            return Verdict.fail("residual", f"{label}: {float(lhs)} > {rhs}")
    if any(v < -tol for v in sol.values):
        return Verdict.fail("residual", "negative variable")
    return Verdict.valid()


def solve_lp(model: HscModel, tol: float = 1e-9, method: str = "auto", exact_limit: int = 4000) -> LpSolution:
    """Exact rational simplex for small models, HiGHS otherwise (or as forced by ``method``)."""
    size = model.num_vars * len(model.rows)
    use_exact = method == "exact" or (method == "auto" and size <= exact_limit)
    if use_exact:
        vals, obj = _simplex_exact(model)
        sol = LpSolution(tuple(vals), obj, "exact")
    else:
        vals, obj = _simplex_highs(model, tol)
        sol = LpSolution(tuple(vals), obj, "highs")
    v = check_lp_solution(model, sol, tol if not use_exact else 0)
    if not v:
        raise LpNumericalError(v.message)
    return sol


# Rounding


def _rng_for(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def sample_coloring(inst: HscInstance, model: HscModel, sol: LpSolution, rng: np.random.Generator) -> dict[SubGrid, Color]:
    """Stage 1 color sampling, top-down with conditional probabilities."""
    sq, col = inst.squares, inst.colors
    f: dict[SubGrid, Color] = {}
    for h in range(1, inst.rho + 1):
        for q in sq.levels[h - 1]:
            opts = col.colors(1) if h == 1 else col.children(f[sq.parent[q]])
            w = np.array([float(sol[model.index[("x", q, c)]]) for c in opts])
            w = np.clip(w, 0.0, None)
            total = w.sum()
            assert total > 0, f"zero-probability branch reached at square {q}"
            f[q] = opts[int(rng.choice(len(opts), p=w / total))]
    return f


def color_counts(inst: HscInstance, items: Sequence[UItem]) -> dict[Color, int]:
    cnt: dict[Color, int] = defaultdict(int)
    for _, c, _ in items:
        for h in range(1, inst.rho + 1):
            cnt[inst.colors.ancestor_at(c, h)] += 1
    return cnt


def caps_ok(inst: HscInstance, items: Sequence[UItem]) -> bool:
    return all(v <= inst.d[c[0] - 1] for c, v in color_counts(inst, items).items())


def _stage3_key(inst: HscInstance, item: UItem) -> tuple:
    v, c, pid = item
    return (inst.colors.interval(c)[0], v.row, v.col, pid)


def round_once(
    inst: HscInstance,
    model: HscModel,
    lp_solution: LpSolution,
    rng: np.random.Generator,
    stages: int = 3,
    trial_seed: int = 0,
) -> HscSolution:
    """One trial of the three-stage rounding; ``stages`` < 3 disables later stages."""
    f = sample_coloring(inst, model, lp_solution, rng)
    coloring = Coloring(inst.squares, f)
    by_cell: dict[tuple[SubGrid, Color], list[UItem]] = defaultdict(list)
    for item in inst.U:
        by_cell[(inst.squares.locate(item[0]), item[1])].append(item)
    for lst in by_cell.values():
        lst.sort(key=lambda it: (it[0].row, it[0].col, it[2]))
    chosen: list[UItem] = []
    for q in inst.squares.levels[-1]:
        c = f[q]
        xv = lp_solution[model.index[("x", q, c)]]
        yv = lp_solution[model.index[("y", q, c)]]
        cand = by_cell.get((q, c), [])
        if not cand or yv <= 0:
            continue
        ratio = yv / xv
        if ratio >= 1 - 1e-12:
            take = math.ceil(ratio - 1e-9) if isinstance(ratio, float) else math.ceil(ratio)
            assert take <= len(cand) or isinstance(ratio, float), "constraint (1) violated"
            chosen += cand[: min(take, len(cand))]
        elif rng.random() < float(ratio):
            chosen.append(cand[0])
    lp_value = lp_solution.objective
    if stages >= 2:
        for c, v in color_counts(inst, chosen).items():
            if v > inst.stage2_threshold(c[0]):
                return HscSolution(coloring, (), lp_value, trial_seed, failed=True)
    repaired = False
    if stages >= 3 and not caps_ok(inst, chosen):
        ordered = sorted(chosen, key=lambda it: _stage3_key(inst, it))
        chosen = ordered[:: inst.stage3_modulus()]
        if not caps_ok(inst, chosen):
            # override-scaled modulus too small for the guarantee: greedy cap repair
            repaired = True
            cnt: dict[Color, int] = defaultdict(int)
            kept = []
            for it in chosen:
                anc = [inst.colors.ancestor_at(it[1], h) for h in range(1, inst.rho + 1)]
                if all(cnt[a] < inst.d[a[0] - 1] for a in anc):
                    kept.append(it)
                    for a in anc:
                        cnt[a] += 1
            chosen = kept
    return HscSolution(coloring, tuple(chosen), lp_value, trial_seed, repaired=repaired)


def check_hsc_solution(inst: HscInstance, sol: HscSolution) -> Verdict:
    """Agreement with the coloring, per-level caps and coloring validity."""
    if sol.f is not None:
        v = sol.f.check_valid(inst.colors)
        if not v:
            return v
    for vtx, c, _ in sol.U_selected:
        if sol.f is None or sol.f.vertex_color(vtx) != c:
            return Verdict.fail("agreement", f"vertex {vtx} color {c} disagrees with its square", vtx)
    if len(set(sol.U_selected)) != len(sol.U_selected):
        return Verdict.fail("multiset", "an element of U selected twice")
    if not caps_ok(inst, sol.U_selected):
        return Verdict.fail("cap", "a color exceeds its cap")
    return Verdict.valid()


def run_hsc(
    inst: HscInstance,
    trials: Optional[int],
    rng: np.random.Generator,
    model: Optional[HscModel] = None,
    lp_solution: Optional[LpSolution] = None,
) -> HscSolution:
    """Best feasible solution over independent rounding trials."""
    model = model or build_lp(inst)
    lp_solution = lp_solution or solve_lp(model)
    trials = inst.default_trials() if trials is None else trials
    if trials < 1:
        raise ValueError("trials must be at least 1")
    seeds = rng.integers(0, 2**63, size=trials)
    best: Optional[HscSolution] = None
    for s in seeds:
        sol = round_once(inst, model, lp_solution, _rng_for(int(s)), trial_seed=int(s))
        if best is None or sol.value > best.value:
            best = sol
    assert best is not None
    return best
