"""
Temporal feasibility over a fixed routing skeleton.

Every question the search asks about time (maximum delay on an arc,
earliest/latest service starts, whether a synchronized pair can be inserted,
the schedule of a complete solution) is a linear program whose constraints
are bounds on single start times and bounds on differences of two start
times. Such a system is a simple temporal network: with an origin node ``z``
pinned at time 0, a constraint ``tau_b - tau_a <= w`` is an edge ``a -> b``
of weight ``w``; the system is feasible iff the graph has no negative cycle,
and the LP optimum of ``max tau_b - tau_a`` is the shortest-path distance
from ``a`` to ``b``. The solvers below exploit this instead of calling a
generic LP code; ``tests/`` cross-checks them against ``scipy.optimize.linprog``.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .instance import REG_END, REG_START, REGULAR, SPE_END, SPE_START, SPECIAL

# Absolute tolerance (time units) for every feasibility comparison. Kept well
# below the 1e-9 slack allowed by the solution validator's schedule check.
EPS = 1e-10
INF = math.inf
ORIGIN = 0


@dataclass
class TemporalRoute:
    klass: int  # REGULAR or SPECIAL
    vertices: list  # full visit sequence, depots included
    nodes: list  # time-point node of each visit
    empty: bool = False
    first_arc: int = 0  # index of the route's first arc in TemporalProblem.arcs


@dataclass
class TemporalProblem:
    """Difference-constraint system of a (partial) solution.

    Node 0 is the origin. ``lower``/``upper`` bound each node's start time;
    ``arcs`` are ``(tail, head, gap, klass)`` with ``tau_head >= tau_tail + gap``;
    ``syncs`` are ``(special_node, copy_node, alpha, beta)`` with
    ``-alpha <= tau_special - tau_copy <= beta``.
    """

    instance: object
    lower: list
    upper: list
    vertex_of: list  # node -> vertex id (None for the origin)
    arcs: list
    syncs: list
    routes: list = field(default_factory=list)
    node_of: dict = field(default_factory=dict)  # customer vertex -> node

    @property
    def n_nodes(self):
        return len(self.lower)

    @classmethod
    def from_routes(cls, instance, regular, special, spare_regular=False, spare_special=False):
        """Build the system for the given routes (customer lists, depots implicit).

        ``spare_*`` append one empty depot-to-depot route of that class, the
        single representative of all unused vehicles.
        """
        prob = cls(instance, [0.0], [INF], [None], [], [])
        specs = [(REGULAR, r, False) for r in regular]
        if spare_regular:
            specs.append((REGULAR, [], True))
        specs += [(SPECIAL, r, False) for r in special]
        if spare_special:
            specs.append((SPECIAL, [], True))
        for klass, custs, empty in specs:
            start, end = (REG_START, REG_END) if klass == REGULAR else (SPE_START, SPE_END)
            seq = [start, *custs, end]
            nodes = [prob._add_node(v, klass) for v in seq]
            route = TemporalRoute(klass, seq, nodes, empty, len(prob.arcs))
            svc = instance.s1 if klass == REGULAR else instance.s2
            d = instance.d
            for a, b, na, nb in zip(seq, seq[1:], nodes, nodes[1:]):
                prob.arcs.append((na, nb, svc[a] + d[a][b], klass))
            prob.routes.append(route)
        for v, node in prob.node_of.items():
            vert = instance.vertices[v]
            if vert.mirror is not None:
                copy_node = prob.node_of.get(vert.mirror)
                if copy_node is None:
                    raise ValueError(f"special customer {v} routed without its copy {vert.mirror}")
                prob.syncs.append((node, copy_node, vert.alpha, vert.beta))
        return prob

    def _add_node(self, v, klass):
        inst = self.instance
        vert = inst.vertices[v]
        node = len(self.lower)
        if klass == REGULAR and v != REG_START and vert.has_window:
            lo, hi = max(0.0, vert.ready), vert.due
        else:
            lo, hi = 0.0, INF
        self.lower.append(lo)
        self.upper.append(hi)
        self.vertex_of.append(v)
        if v not in (REG_START, REG_END, SPE_START, SPE_END):
            if v in self.node_of:
                raise ValueError(f"vertex {v} appears twice in the skeleton")
            self.node_of[v] = node
        return node

    def edges(self):
        """All distance-graph edges ``(u, v, w)`` meaning ``tau_v - tau_u <= w``."""
        out = []
        for v in range(1, self.n_nodes):
            if self.upper[v] < INF:
                out.append((ORIGIN, v, self.upper[v]))
            out.append((v, ORIGIN, -self.lower[v]))
        for a, b, gap, _ in self.arcs:
            out.append((b, a, -gap))
        for j, r, alpha, beta in self.syncs:
            out.append((r, j, beta))
            out.append((j, r, alpha))
        return out

    def weight_matrix(self):
        n = self.n_nodes
        w = np.full((n, n), INF)
        np.fill_diagonal(w, 0.0)
        for u, v, c in self.edges():
            if c < w[u, v]:
                w[u, v] = c
        return w

    def arc_index(self, route, position):
        """Arc between ``vertices[position]`` and ``vertices[position+1]`` of a route."""
        return self.routes[route].first_arc + position

    def route_times(self, tau):
        return [[float(tau[n]) for n in r.nodes] for r in self.routes if not r.empty]

    def to_lp(self, objective=None):
        """Dump the system in CPLEX LP text format for external cross-checking."""
        lines = ["\\ temporal feasibility system", "Maximize" if objective else "Minimize"]
        lines.append(f" obj: {objective}" if objective else " obj: 0 t0")
        lines.append("Subject To")
        k = 0
        for a, b, gap, _ in self.arcs:
            lines.append(f" c{k}: t{b} - t{a} >= {gap!r}")
            k += 1
        for j, r, alpha, beta in self.syncs:
            lines.append(f" c{k}: t{j} - t{r} <= {beta!r}")
            lines.append(f" c{k + 1}: t{j} - t{r} >= {-alpha!r}")
            k += 2
        lines.append("Bounds")
        lines.append(" t0 = 0")
        for v in range(1, self.n_nodes):
            hi = "+inf" if self.upper[v] == INF else repr(self.upper[v])
            lines.append(f" {self.lower[v]!r} <= t{v} <= {hi}")
        lines.append("End")
        return "\n".join(lines) + "\n"


@dataclass
class ArcDelayTable:
    """Per-arc maximum delay and service-time bounds of a feasible skeleton.

    ``et`` is the earliest feasible start at the arc's tail, ``lt`` the latest
    feasible start at its head, ``ref`` the tail start of the optimal
    max-delay solution whose head starts at ``lt`` (equals ``et`` unless the
    arc's slack is coupled to other routes through synchronization).
    ``dist`` is the all-pairs shortest-path matrix the values came from.
    """

    delta: np.ndarray
    et: np.ndarray
    lt: np.ndarray
    ref: np.ndarray
    dist: np.ndarray


def _floyd_warshall(w):
    d = w.copy()
    for k in range(d.shape[0]):
        np.minimum(d, d[:, k, None] + d[None, k, :], out=d)
    return d


def all_pairs(problem):
    """Shortest-path matrix of the distance graph, or ``None`` if infeasible."""
    d = _floyd_warshall(problem.weight_matrix())
    if (np.diagonal(d) < -EPS).any():
        return None
    return d


def max_delays_all(problem):
    """Maximum delay of every arc, with ``et``/``lt`` bounds; ``None`` if infeasible.

    One all-pairs solve answers the max-delay program of every arc at once:
    the optimum for arc ``(a, b)`` is ``dist[a, b] - gap``.
    """
    d = all_pairs(problem)
    if d is None:
        return None
    tails = np.fromiter((a for a, _, _, _ in problem.arcs), dtype=int, count=len(problem.arcs))
    heads = np.fromiter((b for _, b, _, _ in problem.arcs), dtype=int, count=len(problem.arcs))
    gaps = np.fromiter((g for _, _, g, _ in problem.arcs), dtype=float, count=len(problem.arcs))
    span = d[tails, heads]
    delta = span - gaps
    et = -d[tails, ORIGIN]
    lt = d[ORIGIN, heads]
    with np.errstate(invalid="ignore"):
        ref = np.where(np.isfinite(span) & np.isfinite(lt), lt - span, et)
    return ArcDelayTable(delta, et, lt, ref, d)


def _bellman_ford(n, edges, source):
    dist = [INF] * n
    dist[source] = 0.0
    for _ in range(n - 1):
        changed = False
        for u, v, w in edges:
            du = dist[u]
            if du + w < dist[v]:
                dist[v] = du + w
                changed = True
        if not changed:
            break
    for u, v, w in edges:
        if dist[u] + w < dist[v] - EPS:
            return None
    return dist


def is_consistent(problem):
    """Negative-cycle test from a virtual source linked to every node."""
    n = problem.n_nodes
    edges = problem.edges() + [(n, v, 0.0) for v in range(n)]
    return _bellman_ford(n + 1, edges, n) is not None


def max_delay_single(problem, arc):
    """Largest extra slack insertable on one arc (index into ``problem.arcs``).

    Solved on its own with Bellman-Ford from the arc's tail. Returns ``inf``
    when the delay is unbounded and ``None`` when the skeleton is infeasible.
    """
    if not is_consistent(problem):
        return None
    tail, head, gap, _ = problem.arcs[arc]
    dist = _bellman_ford(problem.n_nodes, problem.edges(), tail)
    return max(dist[head] - gap, 0.0) if dist[head] < INF else INF


def schedule(problem):
    """Earliest feasible start time of every node, or ``None`` if infeasible.

    Forward label-correcting pass: each start is pushed to the maximum of its
    lower bound, its predecessors' finish-plus-travel, and its sync partner's
    start minus the allowed offset, until nothing moves. The fixpoint is the
    componentwise least solution.
    """
    n = problem.n_nodes
    tau = list(problem.lower)
    tau[ORIGIN] = 0.0
    # (from, to, gap): tau_to >= tau_from + gap
    pushes = [(a, b, g) for a, b, g, _ in problem.arcs]
    for j, r, alpha, beta in problem.syncs:
        pushes.append((r, j, -alpha))
        pushes.append((j, r, -beta))
    upper = problem.upper
    for _ in range(n + 1):
        changed = False
        for a, b, g in pushes:
            t = tau[a] + g
            if t > tau[b]:
                tau[b] = t
                changed = True
        if not changed:
            break
        if any(tau[v] > upper[v] + EPS for v in range(n)):
            return None
    else:
        return None  # positive cycle: starts keep growing
    if any(tau[v] > upper[v] + EPS for v in range(n)):
        return None
    return tau


def insertion_edges(problem, j, a1, a2):
    """Extra nodes and edges for inserting special ``j`` on ``a2`` and its copy on ``a1``.

    New node ids are ``n`` (copy) and ``n + 1`` (special customer).
    """
    inst = problem.instance
    d, s1, s2 = inst.d, inst.s1, inst.s2
    vj = inst.vertices[j]
    r = vj.mirror
    n = problem.n_nodes
    rn, jn = n, n + 1
    p1m, p1, _, k1 = problem.arcs[a1]
    p2m, p2, _, k2 = problem.arcs[a2]
    if k1 != REGULAR or k2 != SPECIAL:
        raise ValueError("a1 must be a regular arc and a2 a special arc")
    v1m, v1 = problem.vertex_of[p1m], problem.vertex_of[p1]
    v2m, v2 = problem.vertex_of[p2m], problem.vertex_of[p2]
    vr = inst.vertices[r]
    lo_r = max(0.0, vr.ready) if vr.has_window else 0.0
    hi_r = vr.due if vr.has_window else INF
    edges = [
        (rn, p1m, -(s1[v1m] + d[v1m][r])),
        (p1, rn, -(s1[r] + d[r][v1])),
        (jn, p2m, -(s2[v2m] + d[v2m][j])),
        (p2, jn, -(s2[j] + d[j][v2])),
        (rn, ORIGIN, -lo_r),
        (jn, ORIGIN, 0.0),
        (rn, jn, vj.beta),
        (jn, rn, vj.alpha),
    ]
    if hi_r < INF:
        edges.append((ORIGIN, rn, hi_r))
    return edges


def check_special_insertion(problem, j, a1, a2, table=None):
    """Whether special customer ``j`` fits on special arc ``a2`` with its copy on regular arc ``a1``.

    With a table, the check runs on the 7-node closure {origin, the four arc
    endpoints, the two new nodes} whose old-to-old edges are the cached
    shortest-path distances: any cycle through the new nodes decomposes into
    old-graph segments between those endpoints. Without a table the whole
    augmented system is tested from scratch.
    """
    extra = insertion_edges(problem, j, a1, a2)
    n = problem.n_nodes
    if table is None:
        edges = problem.edges()
        for k in (a1, a2):
            a, b, g, _ = problem.arcs[k]
            edges.remove((b, a, -g))  # replaced by the two arcs through the new node
        edges += extra
        m = n + 2
        edges += [(m, v, 0.0) for v in range(m)]
        return _bellman_ford(m + 1, edges, m) is not None

    # The cached distances still contain the two replaced arcs; they are implied
    # by the new two-leg paths whenever travel times obey the triangle inequality.
    p1m, p1 = problem.arcs[a1][:2]
    p2m, p2 = problem.arcs[a2][:2]
    keys =[ORIGIN, p1m, p1, p2m, p2, n, n + 1]
    pos = {v: i for i, v in enumerate(keys)}
    dist = table.dist
    m = [[INF] * 7 for _ in range(7)]
    for i in range(5):
        row = dist[keys[i]]
        mi = m[i]
        for k in range(5):
            mi[k] = row[keys[k]]
    m[5][5] = m[6][6] = 0.0
    for u, v, w in extra:
        iu, iv = pos[u], pos[v]
        if w < m[iu][iv]:
            m[iu][iv] = w
    for k in range(7):
        mk = m[k]
        for i in range(7):
            mik = m[i][k]
            if mik == INF:
                continue
            mi = m[i]
            for t in range(7):
                c = mik + mk[t]
                if c < mi[t]:
                    mi[t] = c
        if mk[k] < -EPS:
            return False
    return all(m[i][i] >= -EPS for i in range(7))


def insert_into(problem, j, a1, a2):
    """Routes (customer lists) after inserting ``j`` on ``a2`` and its copy on ``a1``."""
    regular, special = _customer_lists(problem)
    r = problem.instance.vertices[j].mirror
    _insert(problem, regular, special, a1, r)
    _insert(problem, regular, special, a2, j)
    return regular, special


def _customer_lists(problem):
    regular, special = [], []
    for route in problem.routes:
        (regular if route.klass == REGULAR else special).append(list(route.vertices[1:-1]))
    return regular, special


def _insert(problem, regular, special, arc, v):
    for k, route in enumerate(problem.routes):
        if route.first_arc <= arc < route.first_arc + len(route.nodes) - 1:
            pos = arc - route.first_arc
            same = [r for r in problem.routes[:k] if r.klass == route.klass]
            lists = regular if route.klass == REGULAR else special
            lists[len(same)].insert(pos, v)
            return
    raise IndexError(f"arc {arc} out of range")
