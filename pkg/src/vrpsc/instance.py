"""
Problem data: Solomon/Homberger VRPTW parsing and the transformation into
instances with synchronized special customers.

Vertex layout of an :class:`Instance`::

    0  regular start depot        1  regular end depot
    2  special start depot        3  special end depot
    4 .. 3+n                      raw customers 1..n on the regular side
                                  (regular customers or copies of special ones)
    4+n ..                        special customers, visited by special vehicles

Every special customer ``i`` has ``mirror`` pointing at its regular-side copy.
"""

import json
import math
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_fraction, check_nonnegative, check_optional_count

REG_START, REG_END, SPE_START, SPE_END = 0, 1, 2, 3
REGULAR, SPECIAL = 1, 2


class VertexKind(str, Enum):
    DEPOT_START_REGULAR = "depot_start_regular"
    DEPOT_END_REGULAR = "depot_end_regular"
    DEPOT_START_SPECIAL = "depot_start_special"
    DEPOT_END_SPECIAL = "depot_end_special"
    REGULAR_CUSTOMER = "regular_customer"
    SPECIAL_COPY = "special_copy"
    SPECIAL_CUSTOMER = "special_customer"


DEPOT_KINDS = frozenset(
    {
        VertexKind.DEPOT_START_REGULAR,
        VertexKind.DEPOT_END_REGULAR,
        VertexKind.DEPOT_START_SPECIAL,
        VertexKind.DEPOT_END_SPECIAL,
    }
)


class VrptwParseError(ValueError):
    """Malformed benchmark or instance file; carries the offending line number."""

    def __init__(self, message, line=None, path=None):
        self.reason = message
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


# ---------------------------------------------------------------------------
# Raw Solomon files
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RawCustomer:
    id: int
    x: float
    y: float
    demand: float
    ready: float
    due: float
    service: float


@dataclass(frozen=True)
class RawVrptw:
    name: str
    vehicles: int
    capacity: float
    customers: tuple  # RawCustomer rows, depot first

    @property
    def depot(self):
        return self.customers[0]

    @property
    def n_customers(self):
        return len(self.customers) - 1

    def to_text(self):
        """Serialize in the Solomon layout; ``parse_vrptw(raw.to_text()) == raw``."""
        lines = [
            self.name,
            "",
            "VEHICLE",
            "NUMBER     CAPACITY",
            f"  {self.vehicles}         {_num(self.capacity)}",
            "",
            "CUSTOMER",
            "CUST NO.  XCOORD.   YCOORD.    DEMAND   READY TIME  DUE DATE   SERVICE   TIME",
            "",
        ]
        for c in self.customers:
            cols = [c.id, c.x, c.y, c.demand, c.ready, c.due, c.service]
            lines.append("".join(f"{_num(v):>10}" for v in cols))
        return "\n".join(lines) + "\n"


def _num(v):
    """Shortest text form that parses back to the same float."""
    f = float(v)
    if f.is_integer():
        return str(int(f))
    return repr(f)


def _parse_number(token, lineno):
    try:
        return float(token)
    except ValueError:
        raise VrptwParseError(f"non-numeric field {token!r}", lineno) from None


def parse_vrptw(text):
    """Parse a Solomon/Homberger VRPTW file.

    The first non-blank line is the instance name. The ``VEHICLE`` section
    holds ``NUMBER CAPACITY``; the ``CUSTOMER`` section holds 7-column rows
    with the depot as row 0.
    """
    lines = [(i + 1, ln.strip()) for i, ln in enumerate(text.splitlines())]
    content = [(n, ln) for n, ln in lines if ln]
    if not content:
        raise VrptwParseError("empty file", 1)
    name = content[0][1]

    def section(keyword):
        for k, (n, ln) in enumerate(content):
            if ln.upper() == keyword:
                return k
        raise VrptwParseError(f"missing {keyword} section", content[-1][0])

    v = section("VEHICLE")
    # header row (NUMBER CAPACITY) then the values row
    if v + 2 >= len(content):
        raise VrptwParseError("truncated VEHICLE section", content[v][0])
    head_no, head = content[v + 1]
    if not head.upper().startswith("NUMBER"):
        raise VrptwParseError("malformed VEHICLE header", head_no)
    val_no, val = content[v + 2]
    parts = val.split()
    if len(parts) != 2:
        raise VrptwParseError("malformed VEHICLE header", val_no)
    vehicles = _parse_number(parts[0], val_no)
    capacity = _parse_number(parts[1], val_no)
    if not vehicles.is_integer() or vehicles < 1:
        raise VrptwParseError("vehicle count must be a positive integer", val_no)

    c = section("CUSTOMER")
    rows = []
    for n, ln in content[c + 1 :]:
        if re.match(r"^[A-Za-z]", ln):
            continue  # column header
        parts = ln.split()
        if len(parts) != 7:
            raise VrptwParseError(f"expected 7 columns, got {len(parts)}", n)
        vals = [_parse_number(p, n) for p in parts]
        if not vals[0].is_integer():
            raise VrptwParseError("customer number must be an integer", n)
        rows.append((n, RawCustomer(int(vals[0]), *vals[1:])))

    if not rows:
        raise VrptwParseError("no customers", content[c][0])
    depot_line, depot = rows[0]
    if depot.id != 0:
        raise VrptwParseError("missing depot row (customer 0)", depot_line)
    if depot.demand != 0:
        raise VrptwParseError("depot row has nonzero demand", depot_line)
    if len(rows) == 1:
        raise VrptwParseError("no customers", depot_line)
    for k, (n, row) in enumerate(rows):
        if row.id != k:
            raise VrptwParseError(f"customer rows must be numbered consecutively, expected {k}", n)
        if row.ready > row.due:
            raise VrptwParseError("ready time after due date", n)
    return RawVrptw(name, int(vehicles), capacity, tuple(r for _, r in rows))


def read_vrptw(path):
    path = Path(path)
    try:
        return parse_vrptw(path.read_text())
    except VrptwParseError as exc:
        raise VrptwParseError(exc.reason, exc.line, path) from None


# ---------------------------------------------------------------------------
# VRPSC instances
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Vertex:
    id: int
    kind: VertexKind
    x: float
    y: float
    demand: float = 0.0
    service_regular: float = 0.0
    service_special: float = 0.0
    ready: Optional[float] = None
    due: Optional[float] = None
    mirror: Optional[int] = None
    alpha: Optional[float] = None
    beta: Optional[float] = None

    @property
    def has_window(self):
        return self.ready is not None


@dataclass(frozen=True, eq=False)
class Instance:
    """Immutable VRPSC problem data.

    Travel time equals travel cost equals Euclidean distance for both
    vehicle classes, so a single matrix serves both; :meth:`distance`
    enforces the per-class domains.
    """

    name: str
    vertices: tuple
    capacity: float
    n_regular_vehicles: int
    n_special_vehicles: int
    n_s: Optional[float] = None
    source: str = ""
    truncate: bool = False
    dist: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        vs = self.vertices
        for k, v in enumerate(vs):
            if v.id != k:
                raise ValueError(f"vertex {k} carries id {v.id}")
        expected = [
            VertexKind.DEPOT_START_REGULAR,
            VertexKind.DEPOT_END_REGULAR,
            VertexKind.DEPOT_START_SPECIAL,
            VertexKind.DEPOT_END_SPECIAL,
        ]
        if [v.kind for v in vs[:4]] != expected:
            raise ValueError("vertices 0..3 must be the four depot copies")
        for v in vs:
            if v.has_window and v.ready > v.due:
                raise ValueError(f"vertex {v.id}: window ({v.ready}, {v.due}) is empty")
            if v.kind in DEPOT_KINDS and (v.service_regular or v.service_special):
                raise ValueError(f"depot vertex {v.id} must have zero service time")
            if v.kind is VertexKind.SPECIAL_CUSTOMER:
                if v.has_window:
                    raise ValueError(f"special customer {v.id} cannot carry its own window")
                m = vs[v.mirror] if v.mirror is not None and 0 <= v.mirror < len(vs) else None
                if m is None or m.kind is not VertexKind.SPECIAL_COPY or (m.x, m.y) != (v.x, v.y):
                    raise ValueError(f"special customer {v.id} has an invalid mirror")
                if v.alpha is None or v.beta is None or v.alpha < 0 or v.beta < 0:
                    raise ValueError(f"special customer {v.id} needs nonnegative alpha/beta")
            elif v.mirror is not None:
                raise ValueError(f"vertex {v.id} is not special but has a mirror")

        xy = np.array([(v.x, v.y) for v in vs], dtype=float)
        d = np.hypot(xy[:, None, 0] - xy[None, :, 0], xy[:, None, 1] - xy[None, :, 1])
        if self.truncate:
            d = np.floor(d * 10.0) / 10.0
        d.setflags(write=False)
        object.__setattr__(self, "dist", d)

        regular_customers = tuple(
            v.id for v in vs if v.kind in (VertexKind.REGULAR_CUSTOMER, VertexKind.SPECIAL_COPY)
        )
        specials = tuple(v.id for v in vs if v.kind is VertexKind.SPECIAL_CUSTOMER)
        special_of = {vs[s].mirror: s for s in specials}
        if len(special_of) != len(specials):
            raise ValueError("two special customers share a mirror")
        object.__setattr__(self, "regular_customers", regular_customers)
        object.__setattr__(self, "special_customers", specials)
        object.__setattr__(self, "special_of", special_of)
        object.__setattr__(self, "regular_domain", frozenset((REG_START, REG_END) + regular_customers))
        object.__setattr__(self, "special_domain", frozenset((SPE_START, SPE_END) + specials))
        # plain lists: scalar indexing in hot loops is much cheaper than numpy
        object.__setattr__(self, "d", d.tolist())
        object.__setattr__(self, "q", [v.demand for v in vs])
        object.__setattr__(self, "s1", [v.service_regular for v in vs])
        object.__setattr__(self, "s2", [v.service_special for v in vs])
        object.__setattr__(self, "ready", [v.ready if v.has_window else 0.0 for v in vs])
        object.__setattr__(self, "due", [v.due if v.has_window else math.inf for v in vs])
        object.__setattr__(self, "s1_arr", np.asarray(self.s1, dtype=float))
        object.__setattr__(self, "s2_arr", np.asarray(self.s2, dtype=float))

    @property
    def requests(self):
        """Customer requests, identified by their regular-side vertex."""
        return self.regular_customers

    @property
    def n_customers(self):
        return len(self.regular_customers)

    def is_special_request(self, r):
        return r in self.special_of

    def mirror(self, i):
        return self.vertices[i].mirror

    def distance(self, k, i, j):
        """Travel time/cost between ``i`` and ``j`` for vehicle class ``k`` (1 or 2)."""
        if k == REGULAR:
            domain = self.regular_domain
        elif k == SPECIAL:
            domain = self.special_domain
        else:
            raise ValueError(f"vehicle class must be 1 or 2, got {k!r}")
        if i not in domain or j not in domain:
            raise IndexError(f"({i}, {j}) outside the domain of vehicle class {k}")
        return float(self.dist[i, j])

    # -- serialization ------------------------------------------------------

    _COLUMNS = ("id", "kind", "x", "y", "q", "s1", "s2", "l", "u", "mirror", "alpha", "beta")

    def to_text(self):
        meta = {
            "format": "vrpsc-instance",
            "version": 1,
            "name": self.name,
            "source": self.source,
            "n_s": self.n_s,
            "capacity": self.capacity,
            "fleet": {"regular": self.n_regular_vehicles, "special": self.n_special_vehicles},
            "truncate": self.truncate,
            "columns": list(self._COLUMNS),
        }
        head = json.dumps(meta, indent=1)[:-2]
        rows = []
        for v in self.vertices:
            row = [v.id, v.kind.value, v.x, v.y, v.demand, v.service_regular, v.service_special,
                   v.ready, v.due, v.mirror, v.alpha, v.beta]
            rows.append("  " + json.dumps(row))
        return head + ',\n "vertices": [\n' + ",\n".join(rows) + "\n ]\n}\n"

    @classmethod
    def from_text(cls, text, path=None):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise VrptwParseError(f"invalid instance file: {exc.msg}", exc.lineno, path) from None
        if not isinstance(data, dict) or data.get("format") != "vrpsc-instance":
            raise VrptwParseError("not a VRPSC instance file", 1, path)
        try:
            cols = data["columns"]
            vertices = []
            for row in data["vertices"]:
                rec = dict(zip(cols, row))
                vertices.append(
                    Vertex(
                        id=rec["id"],
                        kind=VertexKind(rec["kind"]),
                        x=rec["x"],
                        y=rec["y"],
                        demand=rec["q"],
                        service_regular=rec["s1"],
                        service_special=rec["s2"],
                        ready=rec["l"],
                        due=rec["u"],
                        mirror=rec["mirror"],
                        alpha=rec["alpha"],
                        beta=rec["beta"],
                    )
                )
            return cls(
                name=data["name"],
                vertices=tuple(vertices),
                capacity=data["capacity"],
                n_regular_vehicles=data["fleet"]["regular"],
                n_special_vehicles=data["fleet"]["special"],
                n_s=data.get("n_s"),
                source=data.get("source", ""),
                truncate=data.get("truncate", False),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise VrptwParseError(f"invalid instance file: {exc}", None, path) from None

    def write(self, path):
        Path(path).write_text(self.to_text())

    @classmethod
    def read(cls, path):
        return cls.from_text(Path(path).read_text(), path=path)


def special_customer_ids(n_customers, n_s):
    """Raw customer numbers that become special: 1, 1+step, 1+2*step, ..."""
    # round() guards against 0.05*n landing a hair above an integer
    count = math.ceil(round(n_s * n_customers, 9))
    step = math.floor(round(1.0 / n_s, 9))
    chosen = [1 + k * step for k in range(count)]
    if count > n_customers or (chosen and chosen[-1] > n_customers):
        raise ValueError(
            f"n_s={n_s} asks for {count} special customers at interval {step}, "
            f"but there are only {n_customers} customers"
        )
    return chosen


def transform(raw, n_s, alpha=0.0, beta=10.0, fleet_special=None, fleet_regular=None, truncate=False):
    """Build a VRPSC :class:`Instance` from a VRPTW file."""
    n_s = check_fraction(n_s, "n_s")
    alpha = check_nonnegative(alpha, "alpha")
    beta = check_nonnegative(beta, "beta")
    fleet_regular = check_optional_count(fleet_regular, "fleet_regular", min_val=1)
    fleet_special = check_optional_count(fleet_special, "fleet_special", min_val=1)
    n = raw.n_customers
    chosen = special_customer_ids(n, n_s)
    n_reg = raw.vehicles if fleet_regular is None else fleet_regular
    n_spe = n_reg if fleet_special is None else fleet_special

    dep = raw.depot
    verts = [
        Vertex(REG_START, VertexKind.DEPOT_START_REGULAR, dep.x, dep.y),
        Vertex(REG_END, VertexKind.DEPOT_END_REGULAR, dep.x, dep.y, ready=dep.ready, due=dep.due),
        Vertex(SPE_START, VertexKind.DEPOT_START_SPECIAL, dep.x, dep.y),
        Vertex(SPE_END, VertexKind.DEPOT_END_SPECIAL, dep.x, dep.y),
    ]
    special_set = set(chosen)
    for c in raw.customers[1:]:
        kind = VertexKind.SPECIAL_COPY if c.id in special_set else VertexKind.REGULAR_CUSTOMER
        verts.append(
            Vertex(len(verts), kind, c.x, c.y, demand=c.demand, service_regular=c.service,
                   ready=c.ready, due=c.due)
        )
    for cid in chosen:
        c = raw.customers[cid]
        verts.append(
            Vertex(len(verts), VertexKind.SPECIAL_CUSTOMER, c.x, c.y, demand=c.demand,
                   service_special=c.service, mirror=3 + cid, alpha=alpha, beta=beta)
        )
    return Instance(
        name=raw.name,
        vertices=tuple(verts),
        capacity=raw.capacity,
        n_regular_vehicles=n_reg,
        n_special_vehicles=n_spe,
        n_s=n_s,
        source=raw.name,
        truncate=bool(truncate),
    )


class SyncInstanceTransformer(TransformerMixin, BaseEstimator):
    """Turn VRPTW benchmark data into VRPSC instances.

    ``transform`` accepts a :class:`RawVrptw`, a path to a Solomon file, or a
    list of either, and returns the matching :class:`Instance` (or list).

    Parameters
    ----------
    n_s : float
        Fraction of customers that require a synchronized special visit.
    alpha, beta : float
        Allowed lead/lag of the special visit relative to its regular copy.
    fleet_regular, fleet_special : int or None
        Fleet overrides; default to the file's vehicle count.
    truncate : bool
        Truncate distances to one decimal instead of full precision.
    """

    def __init__(self, n_s=0.05, alpha=0.0, beta=10.0, fleet_regular=None, fleet_special=None,
                 truncate=False):
        self.n_s = n_s
        self.alpha = alpha
        self.beta = beta
        self.fleet_regular = fleet_regular
        self.fleet_special = fleet_special
        self.truncate = truncate

    def fit(self, X=None, y=None):
        check_fraction(self.n_s, "n_s")
        check_nonnegative(self.alpha, "alpha")
        check_nonnegative(self.beta, "beta")
        self.n_special_ = None
        if X is not None:
            raws = [_as_raw(x) for x in _as_list(X)]
            self.n_special_ = [len(special_customer_ids(r.n_customers, self.n_s)) for r in raws]
        return self

    def transform(self, X):
        out = [
            transform(_as_raw(x), self.n_s, self.alpha, self.beta, fleet_special=self.fleet_special,
                      fleet_regular=self.fleet_regular, truncate=self.truncate)
            for x in _as_list(X)
        ]
        return out if isinstance(X, (list, tuple)) else out[0]


def _as_list(X):
    return list(X) if isinstance(X, (list, tuple)) else [X]


def _as_raw(x):
    if isinstance(x, RawVrptw):
        return x
    if isinstance(x, (str, Path)):
        return read_vrptw(x)
    raise TypeError(f"expected RawVrptw or a path, got {type(x).__name__}")


def load_instance(path, **transform_kwargs):
    """Read a VRPSC instance file, or transform a Solomon file on the fly."""
    path = Path(path)
    text = path.read_text()
    if text.lstrip().startswith("{"):
        return Instance.from_text(text, path=path)
    try:
        raw = parse_vrptw(text)
    except VrptwParseError as exc:
        raise VrptwParseError(exc.reason, exc.line, path) from None
    transform_kwargs.setdefault("n_s", 0.05)
    return transform(raw, **transform_kwargs)
