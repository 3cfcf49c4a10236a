"""Routes, schedules, cost, and the independent solution validator."""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .instance import REG_END, REG_START, SPE_END, SPE_START, VrptwParseError

# Slack allowed on every schedule comparison in validate().
TOL = 1e-9


@dataclass
class Route:
    klass: int  # 1 regular, 2 special
    customers: list

    def vertices(self):
        if self.klass == 1:
            return [REG_START, *self.customers, REG_END]
        return [SPE_START, *self.customers, SPE_END]


def route_cost(instance, customers, klass=1):
    if not customers:
        return 0.0
    d = instance.d
    start, end = (REG_START, REG_END) if klass == 1 else (SPE_START, SPE_END)
    total = d[start][customers[0]]
    for a, b in zip(customers, customers[1:]):
        total += d[a][b]
    return total + d[customers[-1]][end]


@dataclass
class Solution:
    """Regular and special routes (non-empty customer lists) plus schedule.

    ``times`` holds one list per route, aligned with the full visit sequence
    (start depot, customers, end depot): regular routes first, then special.
    Unused vehicles are simply absent.
    """

    regular: list
    special: list
    times: Optional[list] = None
    cost: float = 0.0
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_routes(cls, instance, regular, special, times=None):
        regular = [list(r) for r in regular if r]
        special = [list(r) for r in special if r]
        sol = cls(regular, special, times)
        sol.cost = cost(instance, sol)
        return sol

    def copy(self):
        return Solution(
            [list(r) for r in self.regular],
            [list(r) for r in self.special],
            None if self.times is None else [list(t) for t in self.times],
            self.cost,
            dict(self.meta),
        )

    def routes(self):
        return [Route(1, r) for r in self.regular] + [Route(2, r) for r in self.special]

    def served(self):
        out = set()
        for r in self.regular:
            out.update(r)
        for r in self.special:
            out.update(r)
        return out

    def is_complete(self, instance):
        reg = sorted(v for r in self.regular for v in r)
        spe = sorted(v for r in self.special for v in r)
        return reg == sorted(instance.regular_customers) and spe == sorted(instance.special_customers)

    def start_times(self):
        """Map customer vertex -> scheduled start time."""
        out = {}
        if self.times is None:
            return out
        for route, times in zip(self.regular + self.special, self.times):
            for v, t in zip(route, times[1:-1]):
                out[v] = t
        return out

    def key(self):
        """Canonical identity, invariant under route order."""
        return (tuple(sorted(map(tuple, self.regular))), tuple(sorted(map(tuple, self.special))))

    # -- serialization ------------------------------------------------------

    def to_text(self, instance_name="", **meta):
        head = {"format": "vrpsc-solution", "version": 1, "instance": instance_name}
        head.update(self.meta)
        head.update(meta)
        head["cost"] = self.cost
        lines = [json.dumps(head, sort_keys=True)[:-1] + ","]
        body = []
        times = self.times or [None] * (len(self.regular) + len(self.special))
        for klass, route, t in zip(
            [1] * len(self.regular) + [2] * len(self.special), self.regular + self.special, times
        ):
            body.append("  " + json.dumps({"class": klass, "visits": route, "times": t}))
        return "\n".join(lines) + '\n "routes": [\n' + ",\n".join(body) + "\n ]\n}\n"

    @classmethod
    def from_text(cls, text, path=None):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise VrptwParseError(f"invalid solution file: {exc.msg}", exc.lineno, path) from None
        if not isinstance(data, dict) or data.get("format") != "vrpsc-solution":
            raise VrptwParseError("not a VRPSC solution file", 1, path)
        try:
            regular, special, times = [], [], []
            for route in data["routes"]:
                (regular if route["class"] == 1 else special).append(list(route["visits"]))
            # keep times aligned with the regular-then-special order
            for klass in (1, 2):
                times += [r["times"] for r in data["routes"] if r["class"] == klass]
            meta = {k: v for k, v in data.items() if k not in ("format", "version", "routes", "cost")}
            has_times = all(t is not None for t in times)
            return cls(regular, special, times if has_times else None, float(data["cost"]), meta)
        except (KeyError, TypeError, ValueError) as exc:
            raise VrptwParseError(f"invalid solution file: {exc}", None, path) from None

    def write(self, path, instance_name="", **meta):
        Path(path).write_text(self.to_text(instance_name, **meta))

    @classmethod
    def read(cls, path):
        return cls.from_text(Path(path).read_text(), path=path)


def cost(instance, solution):
    """Total travel cost of both fleets; empty routes contribute nothing."""
    return sum(route_cost(instance, r, 1) for r in solution.regular) + sum(
        route_cost(instance, r, 2) for r in solution.special
    )


@dataclass(frozen=True)
class Violation:
    kind: str
    message: str
    route: Optional[int] = None
    vertex: Optional[int] = None

    def __str__(self):
        ctx = []
        if self.route is not None:
            ctx.append(f"route {self.route}")
        if self.vertex is not None:
            ctx.append(f"vertex {self.vertex}")
        return f"[{self.kind}] {self.message}" + (f" ({', '.join(ctx)})" if ctx else "")


def validate(instance, solution, tol=TOL):
    """Check a complete solution against every problem constraint.

    Returns the list of violations (empty means feasible). Route indices in
    the report count regular routes first, then special routes.
    """
    out = []
    vs = instance.vertices
    reg_customers = set(instance.regular_customers)
    specials = set(instance.special_customers)

    if len(solution.regular) > instance.n_regular_vehicles:
        out.append(Violation("fleet", f"{len(solution.regular)} regular routes for "
                                      f"{instance.n_regular_vehicles} vehicles"))
    if len(solution.special) > instance.n_special_vehicles:
        out.append(Violation("fleet", f"{len(solution.special)} special routes for "
                                      f"{instance.n_special_vehicles} vehicles"))

    seen = {}
    routes = solution.routes()
    for k, route in enumerate(routes):
        allowed = reg_customers if route.klass == 1 else specials
        for v in route.customers:
            if v not in allowed:
                out.append(Violation("domain", "vertex cannot be visited by this vehicle class", k, v))
            elif v in seen:
                out.append(Violation("duplicate", f"served again (first on route {seen[v]})", k, v))
            else:
                seen[v] = k
    for v in sorted(reg_customers - seen.keys()):
        out.append(Violation("unserved", "not visited by a regular vehicle", vertex=v))
    for v in sorted(specials - seen.keys()):
        out.append(Violation("unserved", "not visited by a special vehicle", vertex=v))

    for k, r in enumerate(solution.regular):
        load = sum(instance.q[v] for v in r)
        if load > instance.capacity:
            out.append(Violation("capacity", f"load {load} exceeds {instance.capacity}", k))

    recomputed = cost(instance, solution)
    if abs(recomputed - solution.cost) > tol * max(1.0, abs(recomputed)):
        out.append(Violation("cost", f"stored cost {solution.cost!r} != recomputed {recomputed!r}"))

    if solution.times is None:
        out.append(Violation("schedule", "solution carries no schedule"))
        return out
    if len(solution.times) != len(routes):
        out.append(Violation("schedule", "one time list per route expected"))
        return out

    start = {}
    for k, (route, times) in enumerate(zip(routes, solution.times)):
        seq = route.vertices()
        if times is None or len(times) != len(seq):
            out.append(Violation("schedule", "times not aligned with the visit sequence", k))
            continue
        svc = instance.s1 if route.klass == 1 else instance.s2
        for v, t in zip(seq, times):
            if t < -tol:
                out.append(Violation("time", f"negative start {t!r}", k, v))
            if route.klass == 1 and v != REG_START and vs[v].has_window:
                if t < vs[v].ready - tol or t > vs[v].due + tol:
                    out.append(Violation("window", f"start {t!r} outside [{vs[v].ready}, {vs[v].due}]", k, v))
        for a, b, ta, tb in zip(seq, seq[1:], times, times[1:]):
            earliest = ta + svc[a] + instance.d[a][b]
            if tb < earliest - tol:
                out.append(Violation("travel", f"starts {tb!r} before arrival {earliest!r} from {a}", k, b))
        for v, t in zip(seq[1:-1], times[1:-1]):
            start[v] = t

    for j in sorted(specials):
        if j not in start or vs[j].mirror not in start:
            continue
        tj, tr = start[j], start[vs[j].mirror]
        if tj < tr - vs[j].alpha - tol or tj > tr + vs[j].beta + tol:
            out.append(
                Violation("sync", f"start {tj!r} outside [{tr - vs[j].alpha!r}, {tr + vs[j].beta!r}]",
                          vertex=j)
            )
    return out
