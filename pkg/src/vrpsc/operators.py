"""
Destroy and repair operators.

Insertion feasibility is decided in two stages. O(1) screens built from the
per-arc delay table reject most infeasible positions; a regular customer that
passes its screen is feasible outright, while a special customer that passes
is confirmed by the exact synchronized-insertion check of
:func:`vrpsc.temporal.check_special_insertion`.
"""

import math
from collections import OrderedDict
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .instance import REGULAR, SPECIAL
from .temporal import EPS, INF, TemporalProblem, check_special_insertion, max_delays_all

# ---------------------------------------------------------------------------
# Insertion costs and O(1) screens (scalar forms; the search uses the
# vectorized equivalents in InsertionState)
# ---------------------------------------------------------------------------


def insertion_cost_regular(instance, i, prev, nxt):
    d = instance.d
    return d[prev][i] + d[i][nxt] - d[prev][nxt]


def insertion_cost_special(instance, i, prev1, next1, prev2, next2):
    """Average of the regular-route detour of the copy and the special-route detour of ``i``."""
    r = instance.vertices[i].mirror
    return (insertion_cost_regular(instance, r, prev1, next1)
            + insertion_cost_regular(instance, i, prev2, next2)) / 2.0


def feasible_regular_insertion(instance, i, prev, nxt, delta, et, ref=None):
    """Whether customer ``i`` fits between ``prev`` and ``nxt`` given the arc's delay data.

    ``delta`` is the arc's maximum delay and ``et`` the earliest start at
    ``prev``. The arrival deadline is checked from ``et``; the window wait is
    measured from ``ref`` (the tail start of the arc's max-delay solution,
    ``et`` by default). With ``ref`` from the delay table the test is exact.
    Capacity is the caller's business.
    """
    d, s1 = instance.d, instance.s1
    ref = et if ref is None else ref
    arrival = et + s1[prev] + d[prev][i]
    wait = max(instance.ready[i] - (ref + s1[prev] + d[prev][i]), 0.0)
    detour = d[prev][i] + d[i][nxt] - d[prev][nxt]
    return detour + wait + s1[i] <= delta + EPS and arrival <= instance.due[i] + EPS


@dataclass
class ArcBounds:
    """Cached delay-table values of one arc, as used by the special screen."""

    tail: int
    head: int
    delta: float
    et: float
    lt: float
    ref: Optional[float] = None

    def __post_init__(self):
        if self.ref is None:
            self.ref = self.et


def copy_wait(ready, lb_special, beta, arrival):
    """Wait of the regular copy: for its window, or for the special vehicle (it may lag at most ``beta``)."""
    return max(0.0, ready - arrival, lb_special - beta - arrival)


def special_wait(lb_copy, alpha, arrival):
    """Wait of the special vehicle for the copy's start (it may lead by at most ``alpha``)."""
    return max(0.0, lb_copy - alpha - arrival)


def precheck_special_insertion(instance, i, a1, a2):
    """Screen inserting special ``i`` on special arc ``a2`` and its copy on regular arc ``a1``.

    Returns False only when the insertion is certainly infeasible. Start-time
    bounds come from ``et``/``lt``; waiting times are measured from ``ref``,
    the tail start of the arc's max-delay solution (identical to ``et`` unless
    the arc's slack is coupled to another route through synchronization,
    where measuring from ``et`` could reject feasible insertions).
    """
    d, s1, s2 = instance.d, instance.s1, instance.s2
    v = instance.vertices[i]
    r, alpha, beta = v.mirror, v.alpha, v.beta
    c1 = s1[a1.tail] + d[a1.tail][r]
    c2 = s2[a2.tail] + d[a2.tail][i]
    lb_r = a1.et + c1
    ub_r = a1.lt - s1[r] - d[r][a1.head]
    lb_i = a2.et + c2
    ub_i = a2.lt - s2[i] - d[i][a2.head]
    if lb_i - ub_r > beta + EPS or ub_i - lb_r < -alpha - EPS:
        return False
    wait_r = copy_wait(instance.ready[r], lb_i, beta, a1.ref + c1)
    wait_i = special_wait(lb_r, alpha, a2.ref + c2)
    detour1 = d[a1.tail][r] + d[r][a1.head] - d[a1.tail][a1.head]
    detour2 = d[a2.tail][i] + d[i][a2.head] - d[a2.tail][a2.head]
    if detour1 + wait_r + s1[r] > a1.delta + EPS:
        return False
    if detour2 + wait_i + s2[i] > a2.delta + EPS:
        return False
    return lb_r <= instance.due[r] + EPS


def regret_value(costs, k):
    """Sum of the gaps between the k best per-route costs and the best one."""
    best = sorted(costs)[:k]
    return sum(c - best[0] for c in best)


# ---------------------------------------------------------------------------
# Partial solutions under repair
# ---------------------------------------------------------------------------


@dataclass
class InsertionCandidate:
    """Cheapest feasible position of one pending request.

    ``regular_row``/``special_row`` index the packed arc arrays of the
    :class:`InsertionState` that produced it; ``special_row`` is None for
    plain customers. ``route_costs`` are the per-route (or per route pair)
    best costs in ascending order, which feed the regret value.
    """

    customer: int
    regular_row: int
    special_row: Optional[int]
    cost: float
    route_costs: list


class SkeletonCache:
    """Bounded memo of per-skeleton delay data and special-insertion verdicts.

    Repairs revisit the same partial routings often (always, on tiny
    instances); one cache per search run skips rebuilding them.
    """

    def __init__(self, maxsize=4096):
        self.maxsize = maxsize
        self.entries = OrderedDict()
        self.hits = 0

    def get(self, key):
        entry = self.entries.get(key)
        if entry is not None:
            self.entries.move_to_end(key)
            self.hits += 1
        return entry

    def put(self, key, entry):
        self.entries[key] = entry
        if len(self.entries) > self.maxsize:
            self.entries.popitem(last=False)


class InsertionState:
    """A feasible partial solution plus the delay table of its skeleton.

    Route lists exclude depots. One empty route per class stands in for all
    unused vehicles; inserting there opens a new route.
    """

    def __init__(self, instance, regular, special, cache=None):
        self.instance = instance
        self.regular = [list(r) for r in regular if r]
        self.special = [list(r) for r in special if r]
        self.cache = cache
        self.f3_checks = 0
        self.screen_passes = 0
        self.rebuild()

    @property
    def feasible(self):
        return self.table is not None

    def rebuild(self):
        key = None
        if self.cache is not None:
            key = (tuple(map(tuple, self.regular)), tuple(map(tuple, self.special)))
            entry = self.cache.get(key)
            if entry is not None:
                self.problem, self.table, self.reg, self.spe, self.verdicts = entry
                return
        self._build()
        if key is not None:
            self.cache.put(key, (self.problem, self.table, self.reg, self.spe, self.verdicts))

    def _build(self):
        inst = self.instance
        spare_r = len(self.regular) < inst.n_regular_vehicles
        spare_s = len(self.special) < inst.n_special_vehicles
        self.problem = TemporalProblem.from_routes(inst, self.regular, self.special, spare_r, spare_s)
        self.table = max_delays_all(self.problem)
        self.verdicts = {}
        self.reg = self.spe = None
        if self.table is None:
            return
        t = self.table
        prob = self.problem
        reg_idx, reg_route, reg_pos = [], [], []
        spe_idx, spe_route, spe_pos = [], [], []
        counters = {REGULAR: 0, SPECIAL: 0}
        for route in prob.routes:
            ridx = counters[route.klass]
            counters[route.klass] += 1
            for p in range(len(route.nodes) - 1):
                a = route.first_arc + p
                if route.klass == REGULAR:
                    reg_idx.append(a), reg_route.append(ridx), reg_pos.append(p)
                else:
                    spe_idx.append(a), spe_route.append(ridx), spe_pos.append(p)
        vof = prob.vertex_of

        def pack(idx, rts, pos):
            idx = np.asarray(idx, dtype=int)
            tails = np.array([vof[prob.arcs[a][0]] for a in idx], dtype=int)
            heads = np.array([vof[prob.arcs[a][1]] for a in idx], dtype=int)
            return {
                "arc": idx,
                "route": np.asarray(rts, dtype=int),
                "pos": np.asarray(pos, dtype=int),
                "tail": tails,
                "head": heads,
                "delta": t.delta[idx],
                "et": t.et[idx],
                "lt": t.lt[idx],
                "ref": t.ref[idx],
            }

        self.reg = pack(reg_idx, reg_route, reg_pos)
        self.spe = pack(spe_idx, spe_route, spe_pos)
        q = inst.q
        loads = [sum(q[v] for v in r) for r in self.regular]
        if spare_r:
            loads.append(0.0)
        self.reg["load"] = np.asarray(loads, dtype=float)[self.reg["route"]]
        # route boundaries in the packed arrays, for per-route minima
        self.reg["starts"] = _group_starts(self.reg["route"])
        self.spe["starts"] = _group_starts(self.spe["route"])

    # -- candidate evaluation -----------------------------------------------

    def regular_options(self, i, rng=None, noise=0.0):
        """Best insertion cost of regular customer ``i`` on every regular route.

        Returns ``(costs_per_route, best_arc_per_route)``; infeasible routes
        get ``inf``.
        """
        inst = self.instance
        A = self.reg
        D = inst.dist
        tv, hv = A["tail"], A["head"]
        dti, dih = D[tv, i], D[i, hv]
        detour = dti + dih - D[tv, hv]
        arrival = A["et"] + inst.s1_arr[tv] + dti
        wait = np.maximum(inst.ready[i] - (A["ref"] + inst.s1_arr[tv] + dti), 0.0)
        ok = (
            (detour + wait + inst.s1[i] <= A["delta"] + EPS)
            & (arrival <= inst.due[i] + EPS)
            & (A["load"] + inst.q[i] <= inst.capacity + 1e-9)
        )
        cost = detour
        if noise and rng is not None:
            cost = np.maximum(cost + rng.uniform(-noise, noise, size=cost.shape), 0.0)
        cost = np.where(ok, cost, INF)
        return _per_route_best(cost, A["starts"])

    def special_options(self, j, k, rng=None, noise=0.0):
        """Up to ``k`` best route-pair insertions of special customer ``j``.

        Returns a list of ``(cost, reg_arc_row, spe_arc_row)`` sorted by cost,
        one per (regular route, special route) pair, and a flag telling whether
        the list is exhaustive.
        """
        inst = self.instance
        D = inst.dist
        s1, s2 = inst.s1, inst.s2
        v = inst.vertices[j]
        r, alpha, beta = v.mirror, v.alpha, v.beta
        A1, A2 = self.reg, self.spe

        t1, h1 = A1["tail"], A1["head"]
        d1a, d1b = D[t1, r], D[r, h1]
        c1 = inst.s1_arr[t1] + d1a
        lb_r = A1["et"] + c1
        ub_r = A1["lt"] - s1[r] - d1b
        lbw_r = A1["ref"] + c1
        detour1 = d1a + d1b - D[t1, h1]
        ok1 = (
            (lb_r <= inst.due[r] + EPS)
            & (A1["load"] + inst.q[r] <= inst.capacity + 1e-9)
            & (detour1 + np.maximum(inst.ready[r] - lbw_r, 0.0) + s1[r] <= A1["delta"] + EPS)
        )
        t2, h2 = A2["tail"], A2["head"]
        d2a, d2b = D[t2, j], D[j, h2]
        c2 = inst.s2_arr[t2] + d2a
        lb_i = A2["et"] + c2
        ub_i = A2["lt"] - s2[j] - d2b
        lbw_i = A2["ref"] + c2
        detour2 = d2a + d2b - D[t2, h2]
        ok2 = detour2 + s2[j] <= A2["delta"] + EPS

        rows1 = np.flatnonzero(ok1)
        rows2 = np.flatnonzero(ok2)
        if rows1.size == 0 or rows2.size == 0:
            return [], True
        lb_r, ub_r, lbw_r, detour1 = lb_r[rows1, None], ub_r[rows1, None], lbw_r[rows1, None], detour1[rows1, None]
        delta1 = A1["delta"][rows1, None]
        lb_i, ub_i, lbw_i, detour2 = lb_i[None, rows2], ub_i[None, rows2], lbw_i[None, rows2], detour2[None, rows2]
        delta2 = A2["delta"][None, rows2]

        with np.errstate(invalid="ignore"):
            sync_ok = (lb_i - ub_r <= beta + EPS) & (ub_i - lb_r >= -alpha - EPS)
        wait_r = np.maximum(np.maximum(inst.ready[r] - lbw_r, lb_i - beta - lbw_r), 0.0)
        wait_i = np.maximum(lb_r - alpha - lbw_i, 0.0)
        ok = (
            sync_ok
            & (detour1 + wait_r + s1[r] <= delta1 + EPS)
            & (detour2 + wait_i + s2[j] <= delta2 + EPS)
        )
        cost = (detour1 + detour2) / 2.0
        if noise and rng is not None:
            cost = np.maximum(cost + rng.uniform(-noise, noise, size=cost.shape), 0.0)
        ii, jj = np.nonzero(ok)
        if ii.size == 0:
            return [], True
        cvals = cost[ii, jj]
        order = np.argsort(cvals, kind="stable")
        self.screen_passes += int(ii.size)
        found, seen = [], set()
        route1, route2 = A1["route"], A2["route"]
        arc1, arc2 = A1["arc"], A2["arc"]
        for o in order:
            x, y = rows1[ii[o]], rows2[jj[o]]
            pair = (route1[x], route2[y])
            if pair in seen:
                continue
            self.f3_checks += 1
            if self._confirm(j, int(arc1[x]), int(arc2[y])):
                seen.add(pair)
                found.append((float(cvals[o]), int(x), int(y)))
                if len(found) >= k:
                    return found, False
        return found, True

    def _confirm(self, j, a1, a2):
        key = (j, a1, a2)
        verdict = self.verdicts.get(key)
        if verdict is None:
            verdict = self.verdicts[key] = check_special_insertion(self.problem, j, a1, a2, self.table)
        return verdict

    # -- mutation -------------------------------------------------------------

    def insert_regular(self, i, row):
        ridx, pos = int(self.reg["route"][row]), int(self.reg["pos"][row])
        if ridx == len(self.regular):
            self.regular.append([])
        self.regular[ridx].insert(pos, i)

    def insert_special(self, j, row1, row2):
        r = self.instance.vertices[j].mirror
        self.insert_regular(r, row1)
        ridx, pos = int(self.spe["route"][row2]), int(self.spe["pos"][row2])
        if ridx == len(self.special):
            self.special.append([])
        self.special[ridx].insert(pos, j)


def _group_starts(route_ids):
    if route_ids.size == 0:
        return np.zeros(0, dtype=int)
    return np.flatnonzero(np.r_[True, route_ids[1:] != route_ids[:-1]])


def _per_route_best(cost, starts):
    if cost.size == 0:
        return np.zeros(0), np.zeros(0, dtype=int)
    best = np.minimum.reduceat(cost, starts)
    bounds = np.r_[starts, cost.size]
    arg = np.array([starts[g] + int(np.argmin(cost[bounds[g]:bounds[g + 1]])) for g in range(starts.size)])
    return best, arg


@dataclass
class InsertResult:
    regular: list
    special: list
    stranded: list
    f3_checks: int = 0
    screen_passes: int = 0

    @property
    def ok(self):
        return not self.stranded


def regret_insert(instance, regular, special, unserved, k=2, rng=None, noise=0.0, cache=None):
    """Reinsert ``unserved`` requests with the regret-``k`` rule.

    Requests are identified by their regular-side vertex. Each step scores
    every pending request by its best insertion cost per route (route pairs
    for special requests), picks the one with the fewest feasible routes if
    some have fewer than ``k``, otherwise the largest regret (ties: lowest
    best cost), and inserts it at its cheapest feasible position. Stops with
    ``stranded`` set when some request has no feasible position left.
    ``cache`` is an optional :class:`SkeletonCache` shared across calls.
    """
    state = InsertionState(instance, regular, special, cache)
    pending = list(unserved)
    if not state.feasible:
        return InsertResult(state.regular, state.special, pending)
    special_of = instance.special_of
    while pending:
        best_key, best = None, None
        stranded = []
        for req in pending:
            if req in special_of:
                j = special_of[req]
                opts, _ = state.special_options(j, k, rng, noise)
                cand = InsertionCandidate(j, opts[0][1], opts[0][2], opts[0][0], [c for c, _, _ in opts]) \
                    if opts else None
            else:
                per_route, arcs = state.regular_options(req, rng, noise)
                finite = np.isfinite(per_route)
                cand = None
                if finite.any():
                    g = int(np.argmin(per_route))
                    cand = InsertionCandidate(req, int(arcs[g]), None, float(per_route[g]),
                                              sorted(per_route[finite].tolist()))
            if cand is None:
                stranded.append(req)
                continue
            costs = cand.route_costs
            if len(costs) < k:
                key = (0, len(costs), costs[0])
            else:
                key = (1, -regret_value(costs, k), costs[0])
            if best_key is None or key < best_key:
                best_key, best = key, cand
        if stranded:
            return InsertResult(state.regular, state.special, pending, state.f3_checks, state.screen_passes)
        if best.special_row is None:
            state.insert_regular(best.customer, best.regular_row)
            pending.remove(best.customer)
        else:
            state.insert_special(best.customer, best.regular_row, best.special_row)
            pending.remove(instance.vertices[best.customer].mirror)
        if not pending:
            break  # the caller schedules the complete solution anyway
        state.rebuild()
        if not state.feasible:  # numerical disagreement between screen and table
            return InsertResult(state.regular, state.special, pending, state.f3_checks, state.screen_passes)
    return InsertResult(state.regular, state.special, [], state.f3_checks, state.screen_passes)


# ---------------------------------------------------------------------------
# Removal
# ---------------------------------------------------------------------------


@dataclass
class RemovalRequest:
    nb_rm: int
    p_related: float = 6.0
    p_worst: float = 3.0
    weights: tuple = (4.0, 2.0, 1.0, 4.0)  # time, distance, demand, type


def nb_rm_bounds(n_requests, lower=4, upper_cap=40, upper_frac=0.4):
    """Removal-size range.

    Below 10 requests the fractional upper bound drops under ``lower``; the
    lower bound wins and the operators then remove every request present.
    """
    hi = max(lower, min(upper_cap, math.floor(upper_frac * n_requests)))
    return lower, hi


def _strip(instance, regular, special, removed):
    gone = set(removed)
    gone.update(instance.special_of[r] for r in removed if r in instance.special_of)
    reg = [[v for v in r if v not in gone] for r in regular]
    spe = [[v for v in r if v not in gone] for r in special]
    return [r for r in reg if r], [r for r in spe if r]


def _present(regular):
    return [v for r in regular for v in r]


def remove_random(instance, solution, req, rng):
    present = _present(solution.regular)
    n = min(req.nb_rm, len(present))
    picks = rng.choice(len(present), size=n, replace=False)
    removed = [present[p] for p in picks]
    reg, spe = _strip(instance, solution.regular, solution.special, removed)
    return reg, spe, removed


def relatedness(instance, a, b, start, scales, weights):
    """Dissimilarity of two requests (0 = identical); symmetric, each term in [0, 1]."""
    max_time, max_dis, max_dem = scales
    l1, l2, l3, l4 = weights
    ta, tb = start.get(a, 0.0), start.get(b, 0.0)
    ty_a = 1 if a in instance.special_of else 0
    ty_b = 1 if b in instance.special_of else 0
    return (
        l1 * abs(ta - tb) / max_time
        + l2 * instance.d[a][b] / max_dis
        + l3 * abs(instance.q[a] - instance.q[b]) / max_dem
        + l4 * abs(ty_a - ty_b)
    )


def relatedness_scales(instance, present, start):
    times = [start.get(v, 0.0) for v in present]
    max_time = max(times, default=0.0)
    idx = np.asarray(present, dtype=int)
    max_dis = float(instance.dist[np.ix_(idx, idx)].max()) if idx.size else 0.0
    max_dem = max((instance.q[v] for v in present), default=0.0)
    return (max_time or 1.0, max_dis or 1.0, max_dem or 1.0)


def _ranked_pick(n, p, rng):
    return min(n - 1, int(math.floor(rng.random() ** p * n)))


def remove_related(instance, solution, req, rng):
    present = _present(solution.regular)
    n = min(req.nb_rm, len(present))
    start = solution.start_times()
    scales = relatedness_scales(instance, present, start)
    remaining = list(present)
    first = remaining.pop(int(rng.integers(len(remaining))))
    removed = [first]
    while len(removed) < n:
        anchor = removed[int(rng.integers(len(removed)))]
        remaining.sort(key=lambda v: relatedness(instance, anchor, v, start, scales, req.weights))
        removed.append(remaining.pop(_ranked_pick(len(remaining), req.p_related, rng)))
    reg, spe = _strip(instance, solution.regular, solution.special, removed)
    return reg, spe, removed


def removal_gain(instance, regular, special, request):
    """Cost saved by taking ``request`` (and its special visit) out of the routes."""
    d = instance.d
    gain = 0.0
    targets = [(regular, request, 0, 1)]
    if request in instance.special_of:
        targets.append((special, instance.special_of[request], 2, 3))
    for routes, v, start, end in targets:
        for r in routes:
            if v in r:
                p = r.index(v)
                prev = r[p - 1] if p > 0 else start
                nxt = r[p + 1] if p + 1 < len(r) else end
                gain += d[prev][v] + d[v][nxt] - d[prev][nxt]
                break
    return gain


def remove_worst(instance, solution, req, rng):
    regular = [list(r) for r in solution.regular]
    special = [list(r) for r in solution.special]
    n = min(req.nb_rm, len(_present(regular)))
    removed = []
    while len(removed) < n:
        present = _present(regular)
        ranked = sorted(present, key=lambda v: -removal_gain(instance, regular, special, v))
        pick = ranked[_ranked_pick(len(ranked), req.p_worst, rng)]
        removed.append(pick)
        regular, special = _strip(instance, regular, special, [pick])
    return regular, special, removed


REMOVALS = {
    "random": remove_random,
    "related": remove_related,
    "worst": remove_worst,
}
