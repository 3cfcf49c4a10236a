"""Benchmark sweeps over (instance, seed) pairs and their aggregate report."""

import csv
import io
import json
import math
import re
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .alns import SearchConfig, run
from .instance import load_instance
from .solution import validate

CLASS_COLUMNS = ["size", "class", "sync", "runs", "initial", "final", "runtime", "imp", "reference", "gap"]
DETAIL_COLUMNS = ["instance", "size", "class", "sync", "seed", "status", "initial", "final", "runtime",
                  "imp", "feasible", "iterations"]


def instance_class(name):
    """Benchmark family of an instance name: ``"R101"`` -> ``"R1"``, ``"RC208"`` -> ``"RC2"``."""
    m = re.match(r"([A-Za-z]+)(\d)", name or "")
    return (m.group(1).upper() + m.group(2)) if m else (name or "?")


def improvement(initial, final):
    """Relative improvement of ``final`` over ``initial`` in percent."""
    if initial is None or final is None or not initial:
        return None
    return 100.0 * (initial - final) / initial


def gap(final, reference):
    if final is None or reference is None or not reference:
        return None
    return 100.0 * (final - reference) / reference


@dataclass
class BenchJob:
    path: str
    seed: int
    config: dict
    transform: dict = field(default_factory=dict)
    label: str = None


def run_job(job):
    """Solve one (instance, seed) pair; never raises, failures become row status."""
    row = {"instance": job.label or Path(job.path).stem, "seed": job.seed, "status": "ok"}
    try:
        inst = load_instance(job.path, **job.transform)
    except FileNotFoundError:
        row["status"] = "absent"
        return row
    except Exception as exc:  # parse or transform errors
        row.update(status="error", error=str(exc))
        return row
    row.update(instance=job.label or inst.name, size=inst.n_customers, sync=len(inst.special_customers),
               **{"class": instance_class(inst.name)})
    cfg = SearchConfig.from_dict({**job.config, "seed": job.seed})
    t0 = time.perf_counter()
    try:
        best, trace, info = run(inst, cfg)
    except Exception as exc:
        row.update(status="error", error=str(exc))
        return row
    row["runtime"] = time.perf_counter() - t0
    row["initial"] = info["initial"].cost
    row["final"] = best.cost
    row["imp"] = improvement(row["initial"], row["final"])
    row["feasible"] = not validate(inst, best) and not validate(inst, info["initial"])
    row["iterations"] = cfg.iterations
    row["best_series"] = [rec["best"] for rec in trace]
    return row


def load_reference(path=None, column=None):
    """Reference final objectives keyed by ``(size, class, sync)``.

    ``path`` may be a CSV with a ``lp_final`` or ``final`` column, or a JSON
    report written by :class:`BenchReport` (its class rows are used). The
    bundled published table is loaded when ``path`` is None. ``column``
    picks another CSV column (e.g. ``lp_initial``).
    """
    if path is None:
        text = resources.files("vrpsc").joinpath("data/reference_table.csv").read_text()
    else:
        text = Path(path).read_text()
        if text.lstrip().startswith("{"):
            data = json.loads(text)
            return {(r["size"], r["class"], r["sync"]): r["final"] for r in data["classes"]}
    rows = csv.DictReader(line for line in io.StringIO(text) if not line.startswith("#"))
    out = {}
    for r in rows:
        value = r[column] if column else (r.get("lp_final") or r.get("final"))
        out[(int(r["size"]), r["class"], int(r["sync"]))] = float(value)
    return out


def _mean(values):
    values = [v for v in values if v is not None]
    return statistics.fmean(values) if values else None


@dataclass
class BenchReport:
    details: list
    seeds: list
    reference: dict = field(default_factory=dict)

    @property
    def classes(self):
        groups = {}
        for row in self.details:
            if row.get("status") == "ok":
                groups.setdefault((row["size"], row["class"], row["sync"]), []).append(row)
        out = []
        for key in sorted(groups, key=lambda k: (k[0], k[2], k[1])):
            rows = groups[key]
            initial = _mean(r["initial"] for r in rows)
            final = _mean(r["final"] for r in rows)
            ref = self.reference.get(key)
            out.append({
                "size": key[0], "class": key[1], "sync": key[2], "runs": len(rows),
                "initial": initial, "final": final, "runtime": _mean(r["runtime"] for r in rows),
                "imp": improvement(initial, final), "reference": ref, "gap": gap(final, ref),
            })
        return out

    def to_dict(self):
        details = [{k: v for k, v in r.items() if k != "best_series"} for r in self.details]
        return {"format": "vrpsc-bench-report", "version": 1, "seeds": list(self.seeds),
                "classes": self.classes, "details": details}

    @classmethod
    def from_dict(cls, data, reference=None):
        return cls(list(data["details"]), list(data["seeds"]), reference or {})

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    def series(self):
        """Plot-ready per-class series and per-run best-cost curves."""
        classes = self.classes
        return {
            "labels": [f"{c['size']}-{c['class']}-{c['sync']}" for c in classes],
            "initial": [c["initial"] for c in classes],
            "final": [c["final"] for c in classes],
            "reference": [c["reference"] for c in classes],
            "convergence": {
                f"{r['instance']}#{r['seed']}": r["best_series"]
                for r in self.details if r.get("best_series")
            },
        }

    @staticmethod
    def _csv(rows, columns):
        buf = io.StringIO()
        w = csv.DictWriter(buf, columns, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r.get(k)) for k in columns})
        return buf.getvalue()

    def classes_csv(self):
        return self._csv(self.classes, CLASS_COLUMNS)

    def details_csv(self):
        return self._csv(self.details, DETAIL_COLUMNS)

    def table(self):
        """Fixed-width text rendering of the class rows."""
        head = f"{'size':>5} {'class':<5} {'sync':>4} {'runs':>4} {'initial':>10} {'final':>10} " \
               f"{'time(s)':>8} {'imp%':>7} {'ref':>10} {'gap%':>7}"
        lines = [head]
        for c in self.classes:
            lines.append(
                f"{c['size']:>5} {c['class']:<5} {c['sync']:>4} {c['runs']:>4} {_num(c['initial'], 10, 2)} "
                f"{_num(c['final'], 10, 2)} {_num(c['runtime'], 8, 1)} {_num(c['imp'], 7, 2)} "
                f"{_num(c['reference'], 10, 2)} {_num(c['gap'], 7, 2)}"
            )
        absent = [r for r in self.details if r.get("status") != "ok"]
        for r in absent:
            lines.append(f"  {r['instance']} seed {r['seed']}: {r['status']} {r.get('error', '')}".rstrip())
        return "\n".join(lines) + "\n"

    def write(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(self.to_json())
        (out / "classes.csv").write_text(self.classes_csv())
        (out / "details.csv").write_text(self.details_csv())
        (out / "series.json").write_text(json.dumps(self.series(), sort_keys=True) + "\n")
        return out


def _fmt(v):
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return "" if v is None else v


def _num(v, width, digits):
    return f"{'-':>{width}}" if v is None else f"{v:>{width}.{digits}f}"


def read_manifest(path):
    """Load a bench manifest.

    Keys: ``instances`` (paths, or objects with ``path`` and optional
    ``label``/``transform``), ``seeds``, optional ``config`` (object or path
    to a config file), ``transform`` (defaults for Solomon inputs),
    ``reference`` (path, ``"bundled"``, or null) and ``workers``.
    Relative paths resolve against the manifest's directory.
    """
    path = Path(path)
    data = json.loads(path.read_text())
    base = path.parent
    config = data.get("config") or {}
    if isinstance(config, str):
        config = json.loads((base / config).read_text())
    SearchConfig.from_dict(config)  # fail early on bad keys
    default_transform = data.get("transform", {})
    jobs = []
    seeds = [int(s) for s in data.get("seeds", [0])]
    for entry in data["instances"]:
        if isinstance(entry, str):
            entry = {"path": entry}
        p = base / entry["path"]
        tf = {**default_transform, **entry.get("transform", {})}
        for seed in seeds:
            jobs.append(BenchJob(str(p), seed, config, tf, entry.get("label")))
    ref = data.get("reference", "bundled")
    if ref and ref != "bundled":
        ref = str(base / ref)
    return jobs, seeds, ref, data.get("workers", 1)


def run_bench(jobs, seeds, workers=1, reference="bundled"):
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run_job, jobs))
    else:
        rows = [run_job(j) for j in jobs]
    if reference == "bundled":
        ref = load_reference()
    elif reference:
        ref = load_reference(reference)
    else:
        ref = {}
    return BenchReport(rows, seeds, ref)
