import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import build_instance, solomon_like, tiny_instance
from oracles import brute_force_optimum, lp_feasible, route_cost_recomputed
from vrpsc.alns import initial_solution, timed_solution
from vrpsc.instance import transform
from vrpsc.operators import (
    REMOVALS,
    ArcBounds,
    InsertionState,
    RemovalRequest,
    _ranked_pick,
    copy_wait,
    feasible_regular_insertion,
    insertion_cost_regular,
    insertion_cost_special,
    nb_rm_bounds,
    precheck_special_insertion,
    regret_insert,
    regret_value,
    relatedness,
    relatedness_scales,
    removal_gain,
    remove_random,
    special_wait,
)
from vrpsc.solution import validate


def test_regular_insertion_cost_examples():
    # triangle with sides 5 (prev-i), 7 (i-next), 10 (prev-next)
    y = math.sqrt(25 - 3.8 ** 2)
    inst = build_instance([(10.0, 0.0, 1, 0, 500, 0), (3.8, y, 1, 0, 500, 0), (4.0, 0.0, 1, 0, 500, 0)])
    assert insertion_cost_regular(inst, 5, 0, 4) == pytest.approx(2.0)
    assert insertion_cost_regular(inst, 6, 0, 4) == pytest.approx(0.0, abs=1e-12)


def test_special_insertion_cost_examples():
    inst = build_instance([(2.0, 0.0, 1, 0, 500, 0)], special=(1,))
    j = inst.special_customers[0]
    assert insertion_cost_special(inst, j, 0, 1, 2, 3) == pytest.approx(4.0)

    inst = build_instance([(3.0, 0.0, 1, 0, 500, 0), (3.0, 4.0, 1, 0, 500, 0)], special=(1, 2))
    j, k = inst.special_customers
    # copy into an empty route: 6; special between depot and k: 3 + 4 - 5 = 2
    assert insertion_cost_special(inst, j, 0, 1, 2, k) == pytest.approx(4.0)


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_insertion_costs_match_recompute(data):
    inst = transform(solomon_like(12, "R", 2, seed=data.draw(st.integers(0, 5))), 0.25)
    regs = sorted(inst.requests)
    route = data.draw(st.permutations(regs).map(lambda p: list(p[:5])))
    pos = data.draw(st.integers(0, len(route)))
    i = data.draw(st.sampled_from([v for v in regs if v not in route]))
    full = [0, *route, 1]
    before = route_cost_recomputed(inst, [(1, route)])
    after = route_cost_recomputed(inst, [(1, route[:pos] + [i] + route[pos:])])
    assert insertion_cost_regular(inst, i, full[pos], full[pos + 1]) == pytest.approx(after - before, abs=1e-9)
    assert insertion_cost_regular(inst, i, full[pos], full[pos + 1]) >= -1e-12

    j = data.draw(st.sampled_from(inst.special_customers))
    r = inst.vertices[j].mirror
    others = [v for v in route if v != r]
    spe = [inst.special_of[v] for v in others if v in inst.special_of]
    p1 = data.draw(st.integers(0, len(others)))
    p2 = data.draw(st.integers(0, len(spe)))
    f1, f2 = [0, *others, 1], [2, *spe, 3]
    before = route_cost_recomputed(inst, [(1, others), (2, spe)])
    after = route_cost_recomputed(inst, [(1, others[:p1] + [r] + others[p1:]), (2, spe[:p2] + [j] + spe[p2:])])
    got = insertion_cost_special(inst, j, f1[p1], f1[p1 + 1], f2[p2], f2[p2 + 1])
    assert got == pytest.approx((after - before) / 2, abs=1e-9)


def test_regular_screen_boundaries():
    rows = [(10.0, 0.0, 1, 10, 10, 0), (5.0, 0.0, 1, 0, 100, 0), (5.0, 0.0, 1, 0, 4.9, 0),
            (5.0, 0.0, 1, 0, 100, 1e-3)]
    inst = build_instance(rows)
    assert feasible_regular_insertion(inst, 5, 0, 4, delta=0.0, et=0.0)
    assert not feasible_regular_insertion(inst, 6, 0, 4, delta=100.0, et=0.0)  # arrives at 5 > 4.9
    assert not feasible_regular_insertion(inst, 7, 0, 4, delta=0.0, et=0.0)  # service eats the zero slack


def test_regret_values():
    assert regret_value([10, 14, 20], 2) == 4
    assert regret_value([20, 10, 14], 3) == 14
    assert regret_value([10, 14, 20], 1) == 0


def test_special_precheck_boundary():
    inst = build_instance([(0.0, 0.0, 1, 0, 1000, 0)], special=(1,), beta=10.0)
    j = inst.special_customers[0]
    a1 = ArcBounds(0, 1, delta=500.0, et=0.0, lt=50.0)
    assert precheck_special_insertion(inst, j, a1, ArcBounds(2, 3, delta=500.0, et=60.0, lt=100.0))
    assert not precheck_special_insertion(inst, j, a1, ArcBounds(2, 3, delta=500.0, et=60.5, lt=100.0))


def test_sync_wait_example():
    assert copy_wait(0.0, 100.0, 10.0, 80.0) == 10.0
    assert special_wait(80.0, 0.0, 100.0) == 0.0
    inst = build_instance([(0.0, 0.0, 1, 0, 1000, 0)], special=(1,), beta=10.0)
    j = inst.special_customers[0]
    a2 = ArcBounds(2, 3, delta=500.0, et=100.0, lt=200.0)
    assert precheck_special_insertion(inst, j, ArcBounds(0, 1, delta=10.0, et=80.0, lt=200.0), a2)
    assert not precheck_special_insertion(inst, j, ArcBounds(0, 1, delta=9.9, et=80.0, lt=200.0), a2)


def partial_states(seeds, n_remove=5):
    """Feasible partial solutions of 25-customer instances, with the removed requests."""
    out = []
    for s in seeds:
        family = ("R", "C", "RC")[s % 3]
        inst = transform(solomon_like(25, family, 1 + s % 2, seed=s), 0.25, beta=float(5 + 5 * (s % 3)))
        sol = initial_solution(inst, seed=s)
        rng = np.random.default_rng(s)
        reg, spe, removed = remove_random(inst, sol, RemovalRequest(n_remove), rng)
        out.append((inst, InsertionState(inst, reg, spe), removed))
    return out


@pytest.fixture(scope="module")
def states():
    return partial_states(range(6))


def _with(routes, ridx, pos, v):
    out = [list(r) for r in routes]
    if ridx == len(out):
        out.append([])
    out[ridx].insert(pos, v)
    return out


def test_regular_screen_is_exact_against_lp(states):
    """Every arc of every regular pending request: screen verdict equals LP feasibility."""
    checked = agree_yes = 0
    for inst, state, removed in states:
        A = state.reg
        for req in removed:
            if req in inst.special_of:
                continue
            for row in range(len(A["arc"])):
                ridx, pos = int(A["route"][row]), int(A["pos"][row])
                ok = feasible_regular_insertion(inst, req, int(A["tail"][row]), int(A["head"][row]),
                                                A["delta"][row], A["et"][row], A["ref"][row])
                truth = lp_feasible(inst, _with(state.regular, ridx, pos, req), state.special)
                assert ok == truth, (inst.name, req, row)
                checked += 1
                agree_yes += ok
    assert checked >= 300 and agree_yes > 0


def test_regular_screen_at_et_is_sound():
    """The plain earliest-start form never says yes to an infeasible insertion (1000 samples)."""
    samples = 0
    for inst, state, removed in partial_states(range(6, 30)):
        A = state.reg
        for req in removed:
            if req in inst.special_of:
                continue
            for row in range(len(A["arc"])):
                if feasible_regular_insertion(inst, req, int(A["tail"][row]), int(A["head"][row]),
                                              A["delta"][row], A["et"][row]):
                    ridx, pos = int(A["route"][row]), int(A["pos"][row])
                    assert lp_feasible(inst, _with(state.regular, ridx, pos, req), state.special)
                samples += 1
        if samples >= 1000:
            break
    assert samples >= 1000


def test_special_precheck_never_rejects_feasible(states):
    """Scalar pre-check over >= 1000 sampled (regular arc, special arc) pairs vs LP."""
    samples = rejects = 0
    rng = np.random.default_rng(0)
    for inst, state, _ in states:
        A1, A2 = state.reg, state.spe
        for j in inst.special_customers:
            r = inst.vertices[j].mirror
            if any(r in route for route in state.regular):
                continue
            for _ in range(120):
                x, y = int(rng.integers(len(A1["arc"]))), int(rng.integers(len(A2["arc"])))
                a1 = ArcBounds(int(A1["tail"][x]), int(A1["head"][x]), A1["delta"][x], A1["et"][x], A1["lt"][x],
                               A1["ref"][x])
                a2 = ArcBounds(int(A2["tail"][y]), int(A2["head"][y]), A2["delta"][y], A2["et"][y], A2["lt"][y],
                               A2["ref"][y])
                samples += 1
                if precheck_special_insertion(inst, j, a1, a2):
                    continue
                rejects += 1
                reg = _with(state.regular, int(A1["route"][x]), int(A1["pos"][x]), r)
                spe = _with(state.special, int(A2["route"][y]), int(A2["pos"][y]), j)
                assert not lp_feasible(inst, reg, spe), (inst.name, j, x, y)
    assert samples >= 1000 and rejects > 0


def test_special_options_find_every_feasible_route_pair(states):
    """Per route pair, the cheapest screened-and-confirmed cost equals the LP-checked minimum."""
    for inst, state, _ in states[:3]:
        A1, A2 = state.reg, state.spe
        for j in inst.special_customers:
            r = inst.vertices[j].mirror
            if any(r in route for route in state.regular):
                continue
            opts, exhaustive = state.special_options(j, 10 ** 6)
            assert exhaustive
            got = {(int(A1["route"][x]), int(A2["route"][y])): c for c, x, y in opts}
            want = {}
            for x in range(len(A1["arc"])):
                if A1["load"][x] + inst.q[r] > inst.capacity:
                    continue
                for y in range(len(A2["arc"])):
                    pair = (int(A1["route"][x]), int(A2["route"][y]))
                    c = insertion_cost_special(inst, j, int(A1["tail"][x]), int(A1["head"][x]),
                                               int(A2["tail"][y]), int(A2["head"][y]))
                    if c >= want.get(pair, math.inf) - 1e-12:
                        continue
                    reg = _with(state.regular, pair[0], int(A1["pos"][x]), r)
                    spe = _with(state.special, pair[1], int(A2["pos"][y]), j)
                    if lp_feasible(inst, reg, spe):
                        want[pair] = c
            assert got.keys() == want.keys()
            for pair, c in want.items():
                assert got[pair] == pytest.approx(c, abs=1e-9)


def test_cheapest_insertion_is_regret_one(states):
    """With one pending request, regret-1 inserts it at the globally cheapest LP-feasible position."""
    for inst, state, removed in states:
        req = removed[0]
        base = route_cost_recomputed(inst, [(1, r) for r in state.regular] + [(2, r) for r in state.special])
        res = regret_insert(inst, state.regular, state.special, [req], k=1)
        assert res.ok
        got = route_cost_recomputed(inst, [(1, r) for r in res.regular] + [(2, r) for r in res.special]) - base
        best = math.inf
        if req in inst.special_of:
            j = inst.special_of[req]
            for c, _, _ in state.special_options(j, 10 ** 6)[0]:
                best = min(best, 2 * c)
        else:
            A = state.reg
            for row in range(len(A["arc"])):
                if A["load"][row] + inst.q[req] > inst.capacity:
                    continue
                reg = _with(state.regular, int(A["route"][row]), int(A["pos"][row]), req)
                if lp_feasible(inst, reg, state.special):
                    best = min(best, insertion_cost_regular(inst, req, int(A["tail"][row]), int(A["head"][row])))
        assert got == pytest.approx(best, abs=1e-9)


@pytest.mark.parametrize("seed", range(6))
def test_regret_two_on_tiny_instance_is_near_optimal(seed):
    inst = tiny_instance(200 + seed, n=4, n_special=1)
    opt = brute_force_optimum(inst)
    if opt is None:
        pytest.skip("instance has no feasible routing")
    sol = initial_solution(inst)
    assert validate(inst, sol) == []
    assert sol.cost <= 1.2 * opt + 1e-9


def test_failure_reports_stranded_requests():
    # customer 5 can only be reached after its window closes
    inst = build_instance([(1.0, 0.0, 1, 0, 100, 0), (300.0, 0.0, 1, 0, 10, 0)])
    res = regret_insert(inst, [], [], [4, 5], k=2)
    assert not res.ok and 5 in res.stranded


def test_nb_rm_bounds():
    assert nb_rm_bounds(100) == (4, 40)
    assert nb_rm_bounds(25) == (4, 10)
    assert nb_rm_bounds(200) == (4, 40)
    assert nb_rm_bounds(5) == (4, 4)


@pytest.fixture(scope="module")
def incumbent():
    inst = transform(solomon_like(25, "RC", 1, seed=3), 0.25)
    return inst, initial_solution(inst, seed=3)


@settings(max_examples=30, deadline=None)
@given(name=st.sampled_from(sorted(REMOVALS)), nb=st.integers(1, 30), seed=st.integers(0, 10 ** 6))
def test_removal_invariants(incumbent, name, nb, seed):
    inst, sol = incumbent
    reg, spe, removed = REMOVALS[name](inst, sol, RemovalRequest(nb), np.random.default_rng(seed))
    assert len(removed) == len(set(removed)) == min(nb, len(inst.requests))
    left = {v for r in reg for v in r}
    assert left.isdisjoint(removed) and left | set(removed) == set(inst.requests)
    served_special = {v for r in spe for v in r}
    assert served_special == {inst.special_of[v] for v in left if v in inst.special_of}
    assert all(0 <= min(r) and not {0, 1, 2, 3} & set(r) for r in reg + spe)
    assert all(r for r in reg + spe)


@settings(max_examples=15, deadline=None)
@given(name=st.sampled_from(sorted(REMOVALS)), k=st.sampled_from([1, 2, 3]), seed=st.integers(0, 10 ** 6))
def test_removal_then_reinsertion_is_feasible(incumbent, name, k, seed):
    inst, sol = incumbent
    rng = np.random.default_rng(seed)
    reg, spe, removed = REMOVALS[name](inst, sol, RemovalRequest(int(rng.integers(4, 11))), rng)
    res = regret_insert(inst, reg, spe, removed, k=k, rng=rng)
    if res.ok:
        new = timed_solution(inst, res.regular, res.special)
        assert new is not None and validate(inst, new) == []


def test_relatedness_properties(incumbent):
    inst, sol = incumbent
    present = sorted(inst.requests)
    start = sol.start_times()
    scales = relatedness_scales(inst, present, start)
    for a in present[:8]:
        assert relatedness(inst, a, a, start, scales, (4, 2, 1, 4)) == 0.0
        for b in present:
            assert relatedness(inst, a, b, start, scales, (4, 2, 1, 4)) == \
                pytest.approx(relatedness(inst, b, a, start, scales, (4, 2, 1, 4)))
            for w in np.eye(4):
                assert 0.0 <= relatedness(inst, a, b, start, scales, tuple(w)) <= 1.0 + 1e-12


class _FixedDraw:
    def __init__(self, value):
        self.value = value

    def random(self):
        return self.value


def test_ranked_pick():
    assert _ranked_pick(10, 6, _FixedDraw(0.0)) == 0
    assert _ranked_pick(10, 1, _FixedDraw(0.999)) == 9
    assert _ranked_pick(10, 2, _FixedDraw(0.5)) == 2


def test_removal_gain_of_a_collinear_detour():
    inst = build_instance([(10.0, 0.0, 1, 0, 500, 0), (15.0, 3.0, 1, 0, 500, 0), (20.0, 0.0, 1, 0, 500, 0)])
    detour = math.hypot(5, 3) * 2 - 10.0
    assert removal_gain(inst, [[4, 5, 6]], [], 5) == pytest.approx(detour)
    assert removal_gain(inst, [[4, 6]], [], 4) == pytest.approx(0.0, abs=1e-12)
