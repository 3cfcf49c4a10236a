import os
from pathlib import Path

import numpy as np
import pytest

from vrpsc.instance import Instance, RawCustomer, RawVrptw, Vertex, VertexKind, transform
from vrpsc.temporal import TemporalProblem, is_consistent


def build_instance(customers, depot=(0.0, 0.0), horizon=(0.0, 1000.0), special=(), alpha=0.0, beta=10.0,
                   vehicles=3, special_vehicles=None, capacity=100.0, name="hand"):
    """Hand-built instance.

    ``customers`` are ``(x, y, demand, ready, due, service)`` rows numbered
    from 1; ``special`` lists the row numbers that also need a special visit.
    """
    verts = [
        Vertex(0, VertexKind.DEPOT_START_REGULAR, *depot),
        Vertex(1, VertexKind.DEPOT_END_REGULAR, *depot, ready=horizon[0], due=horizon[1]),
        Vertex(2, VertexKind.DEPOT_START_SPECIAL, *depot),
        Vertex(3, VertexKind.DEPOT_END_SPECIAL, *depot),
    ]
    for c, (x, y, q, ready, due, svc) in enumerate(customers, start=1):
        kind = VertexKind.SPECIAL_COPY if c in special else VertexKind.REGULAR_CUSTOMER
        verts.append(Vertex(len(verts), kind, x, y, q, svc, 0.0, ready, due))
    for c in special:
        x, y, q, _, _, svc = customers[c - 1]
        verts.append(Vertex(len(verts), VertexKind.SPECIAL_CUSTOMER, x, y, q, 0.0, svc,
                            mirror=3 + c, alpha=alpha, beta=beta))
    return Instance(name, tuple(verts), capacity, vehicles,
                    vehicles if special_vehicles is None else special_vehicles)


def solomon_like(n=25, family="R", horizon=1, seed=0, vehicles=None, capacity=None):
    """Random VRPTW data shaped like the benchmark families.

    ``family`` R spreads customers uniformly, C clusters them, RC mixes both.
    ``horizon`` 1 gives a short depot horizon and tight windows, 2 a long one.
    Every customer stays reachable from the depot inside its window.
    """
    rng = np.random.default_rng(seed)
    depot = (40.0, 50.0) if family == "C" else (35.0, 35.0)
    due0 = 230.0 if horizon == 1 else 1000.0
    if family == "C":
        due0 = 1236.0 if horizon == 1 else 3390.0
    service = 90.0 if family == "C" else 10.0
    capacity = capacity or (200 if horizon == 1 else 700)
    vehicles = vehicles or (25 if horizon == 1 else 10)

    def points(k):
        if family == "R":
            return rng.integers(0, 71, size=(k, 2)).astype(float)
        centers = rng.integers(10, 71, size=(max(1, k // 6), 2))
        pts = centers[rng.integers(len(centers), size=k)] + rng.integers(-5, 6, size=(k, 2))
        return np.clip(pts, 0, 80).astype(float)

    if family == "RC":
        half = n // 2
        xy = np.vstack([points(half), rng.integers(0, 71, size=(n - half, 2)).astype(float)])
    else:
        xy = points(n)
    rows = [RawCustomer(0, *depot, 0.0, 0.0, due0, 0.0)]
    width = 0.15 * due0 if horizon == 1 else 0.35 * due0
    for c in range(1, n + 1):
        x, y = xy[c - 1]
        travel = float(np.hypot(x - depot[0], y - depot[1]))
        lo_start = travel
        hi_start = due0 - service - travel - width
        centre = float(rng.uniform(lo_start, max(lo_start, hi_start)))
        ready = float(np.floor(centre))
        due = float(np.ceil(centre + width))
        due = min(due, due0 - service - np.ceil(travel))
        due = max(due, np.ceil(travel))
        ready = min(ready, due)
        demand = float(rng.integers(1, 41))
        rows.append(RawCustomer(c, float(x), float(y), demand, ready, due, service))
    return RawVrptw(f"{family}{horizon}{seed:02d}", vehicles, capacity, tuple(rows))


def tiny_instance(seed, n=5, n_special=1, alpha=0.0, beta=10.0, vehicles=3):
    """Small random instance with loose-but-binding windows; specials are the first ids."""
    rng = np.random.default_rng(seed)
    horizon = 200.0
    rows = [RawCustomer(0, 50.0, 50.0, 0.0, 0.0, horizon, 0.0)]
    for c in range(1, n + 1):
        x, y = rng.integers(20, 81, size=2)
        travel = float(np.hypot(x - 50, y - 50))
        ready = float(rng.integers(0, 80))
        due = float(max(ready + rng.integers(20, 100), np.ceil(travel) + 1))
        due = min(due, horizon - 10 - np.ceil(travel))
        ready = min(ready, due)
        rows.append(RawCustomer(c, float(x), float(y), float(rng.integers(1, 10)), ready, due, 10.0))
    raw = RawVrptw(f"T{seed}", vehicles, 30.0, tuple(rows))
    n_s = n_special / n if n_special else None
    inst = transform(raw, n_s if n_s else 1.0 / n, alpha, beta)
    if not n_special:
        inst = strip_specials(inst)
    return inst


def strip_specials(inst):
    """Same instance with every special request turned back into a plain customer."""
    verts = []
    for v in inst.vertices:
        if v.kind == VertexKind.SPECIAL_CUSTOMER:
            continue
        if v.kind == VertexKind.SPECIAL_COPY:
            v = Vertex(v.id, VertexKind.REGULAR_CUSTOMER, v.x, v.y, v.demand, v.service_regular,
                       v.service_special, v.ready, v.due)
        verts.append(v)
    return Instance(inst.name, tuple(verts), inst.capacity, inst.n_regular_vehicles,
                    inst.n_special_vehicles, inst.n_s, inst.source, inst.truncate)


def synthetic_suite(n=25, sync_ns=0.05, seeds=(0,)):
    out = []
    for family in ("R", "C", "RC"):
        for horizon in (1, 2):
            for s in seeds:
                out.append(transform(solomon_like(n, family, horizon, seed=s), sync_ns))
    return out


def random_skeleton(instance, rng, fill=1.0):
    """Random routing of a random subset of requests (special pairs kept together)."""
    reqs = [r for r in instance.requests if rng.random() < fill]
    n_reg = int(rng.integers(1, instance.n_regular_vehicles + 1))
    n_spe = int(rng.integers(1, instance.n_special_vehicles + 1))
    regular = [[] for _ in range(n_reg)]
    special = [[] for _ in range(n_spe)]
    for r in rng.permutation(reqs):
        regular[int(rng.integers(n_reg))].append(int(r))
        if r in instance.special_of:
            special[int(rng.integers(n_spe))].append(instance.special_of[int(r)])
    return [r for r in regular if r], [s for s in special if s]


def loose_instance(seed, n=8, n_special=2, beta=10.0):
    rng = np.random.default_rng(seed)
    rows = []
    for _ in range(n):
        x, y = rng.integers(0, 41, size=2)
        ready = float(rng.integers(0, 150))
        rows.append((float(x), float(y), 1.0, ready, ready + float(rng.integers(30, 200)), 5.0))
    special = tuple(range(1, n_special + 1))
    return build_instance(rows, depot=(20.0, 20.0), horizon=(0.0, 600.0), special=special, beta=beta,
                          vehicles=3)


def feasible_skeletons(count, seed=0, max_visits=30):
    rng = np.random.default_rng(seed)
    out = []
    tries = 0
    while len(out) < count:
        tries += 1
        inst = loose_instance(int(rng.integers(1 << 30)), n=int(rng.integers(3, 11)),
                              n_special=int(rng.integers(0, 4)))
        reg, spe = random_skeleton(inst, rng, fill=float(rng.uniform(0.5, 1.0)))
        if not reg:
            continue
        prob = TemporalProblem.from_routes(inst, reg, spe)
        if prob.n_nodes - 1 > max_visits or not is_consistent(prob):
            continue
        out.append((inst, reg, spe, prob))
    return out


@pytest.fixture(scope="session")
def suite25():
    return synthetic_suite()


@pytest.fixture(scope="session")
def solomon_dir():
    """Directory holding the real benchmark files, if the user supplied one."""
    value = os.environ.get("VRPSC_SOLOMON_DIR")
    return Path(value) if value else None


def solomon_instances(directory, size, prefix="", n_s=0.05, skip=()):
    """Benchmark files under ``directory`` cut to their first ``size`` customers, by name."""
    from vrpsc.instance import read_vrptw

    out = {}
    for path in sorted(Path(directory).iterdir()):
        if not path.is_file() or not path.stem.upper().startswith(prefix):
            continue
        try:
            raw = read_vrptw(path)
        except Exception:
            continue
        if raw.n_customers < size or raw.name.upper() in skip:
            continue
        raw = RawVrptw(raw.name.upper(), raw.vehicles, raw.capacity, raw.customers[: size + 1])
        out[raw.name] = transform(raw, n_s)
    return out


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
