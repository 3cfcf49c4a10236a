"""Exhaustive solver for tiny instances, used as ground truth for the search."""

import heapq
import itertools
from dataclasses import dataclass

from .solution import Solution, route_cost
from .temporal import TemporalProblem, schedule


class InstanceTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class TinyLimit:
    max_customers: int = 7
    max_special: int = 3
    max_vehicles: int = 3

    def check(self, instance):
        n_reg = min(instance.n_regular_vehicles, len(instance.regular_customers))
        n_spe = min(instance.n_special_vehicles, len(instance.special_customers))
        problems = []
        if instance.n_customers > self.max_customers:
            problems.append(f"{instance.n_customers} customers > {self.max_customers}")
        if len(instance.special_customers) > self.max_special:
            problems.append(f"{len(instance.special_customers)} special customers > {self.max_special}")
        if max(n_reg, n_spe) > self.max_vehicles:
            problems.append(f"more than {self.max_vehicles} usable vehicles in a class")
        if problems:
            raise InstanceTooLarge(f"{instance.name}: " + "; ".join(problems))


def set_partitions(items, max_blocks):
    """Partitions of ``items`` into at most ``max_blocks`` blocks.

    Blocks come out ordered by their first item, which removes the symmetry
    between identical vehicles.
    """
    items = list(items)
    if not items:
        yield []
        return

    def rec(i, blocks):
        if i == len(items):
            yield [list(b) for b in blocks]
            return
        x = items[i]
        for b in blocks:
            b.append(x)
            yield from rec(i + 1, blocks)
            b.pop()
        if len(blocks) < max_blocks:
            blocks.append([x])
            yield from rec(i + 1, blocks)
            blocks.pop()

    yield from rec(0, [])


def route_sets(items, max_routes, klass, instance, capacity=None):
    """Every way to serve ``items`` with at most ``max_routes`` routes, as ``(cost, routes)``."""
    out = []
    for blocks in set_partitions(items, max_routes):
        if capacity is not None and any(sum(instance.q[v] for v in b) > capacity for b in blocks):
            continue
        for orders in itertools.product(*(itertools.permutations(b) for b in blocks)):
            routes = [list(o) for o in orders]
            out.append((sum(route_cost(instance, r, klass) for r in routes), routes))
    out.sort(key=lambda t: t[0])
    return out


def solve_exact(instance, limit=TinyLimit()):
    """Minimum-cost feasible solution, or ``None`` if the instance is infeasible.

    Regular and special route sets are enumerated separately and merged in
    ascending order of total cost; the first merged skeleton that admits a
    schedule is optimal.
    """
    limit.check(instance)
    regular = route_sets(instance.regular_customers, instance.n_regular_vehicles, 1, instance,
                         instance.capacity)
    # a regular route set that violates windows on its own fails with any special routing
    regular = [(c, r) for c, r in regular if schedule(TemporalProblem.from_routes(instance, r, [])) is not None]
    special = route_sets(instance.special_customers, instance.n_special_vehicles, 2, instance)
    if not regular or not special:
        return None

    heap = [(regular[0][0] + special[0][0], 0, 0)]
    seen = {(0, 0)}
    checked = 0
    while heap:
        _, a, b = heapq.heappop(heap)
        routes_r, routes_s = regular[a][1], special[b][1]
        prob = TemporalProblem.from_routes(instance, routes_r, routes_s)
        tau = schedule(prob)
        checked += 1
        if tau is not None:
            sol = Solution.from_routes(instance, routes_r, routes_s, prob.route_times(tau))
            sol.meta["skeletons_checked"] = checked
            return sol
        for na, nb in ((a + 1, b), (a, b + 1)):
            if na < len(regular) and nb < len(special) and (na, nb) not in seen:
                seen.add((na, nb))
                heapq.heappush(heap, (regular[na][0] + special[nb][0], na, nb))
    return None
