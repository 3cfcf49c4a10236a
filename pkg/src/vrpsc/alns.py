"""Adaptive large neighborhood search with simulated-annealing acceptance."""

import dataclasses
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_count, check_nonnegative, check_open_unit, check_seed
from .instance import Instance, load_instance
from .operators import REMOVALS, RemovalRequest, SkeletonCache, nb_rm_bounds, regret_insert
from .solution import Solution
from .temporal import TemporalProblem, schedule


class NoInitialSolution(RuntimeError):
    pass


@dataclass
class SearchConfig:
    iterations: int = 25000
    seed: int = 0
    nb_rm_min: int = 4
    nb_rm_max: int = 40
    nb_rm_fraction: float = 0.4
    relatedness_weights: tuple = (4.0, 2.0, 1.0, 4.0)
    p_related: float = 6.0
    p_worst: float = 3.0
    removal_ops: tuple = ("random", "related", "worst")
    regret_ks: tuple = (1, 2, 3)
    start_worse: float = 0.05
    start_accept: float = 0.5
    start_temperature: float = None  # overrides start_worse/start_accept when set
    cooling: float = 0.99975
    noise: float = 0.025
    use_noise: bool = True
    sigma_best: float = 33.0
    sigma_better: float = 9.0
    sigma_accepted: float = 13.0
    reaction: float = 0.1
    segment: int = 100
    weight_floor: float = 1e-3
    initial_retries: int = 10

    def __post_init__(self):
        check_count(self.iterations, "iterations")
        check_seed(self.seed)
        check_count(self.segment, "segment", min_val=1)
        check_open_unit(self.cooling, "cooling")
        check_nonnegative(self.noise, "noise")
        check_nonnegative(self.reaction, "reaction")
        if self.start_temperature is not None:
            check_nonnegative(self.start_temperature, "start_temperature")
        self.relatedness_weights = tuple(float(w) for w in self.relatedness_weights)
        self.removal_ops = tuple(self.removal_ops)
        self.regret_ks = tuple(int(k) for k in self.regret_ks)
        unknown = set(self.removal_ops) - REMOVALS.keys()
        if unknown:
            raise ValueError(f"unknown removal operators {sorted(unknown)}")
        if not self.removal_ops or not self.regret_ks or min(self.regret_ks) < 1:
            raise ValueError("need at least one removal operator and regret k >= 1")

    def to_dict(self):
        out = dataclasses.asdict(self)
        for k, v in out.items():
            if isinstance(v, tuple):
                out[k] = list(v)
        return out

    @classmethod
    def from_dict(cls, data):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def read(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class OperatorBank:
    """Roulette-wheel selection over named operators with segment-wise weight updates."""

    names: list
    reaction: float = 0.1
    floor: float = 1e-3
    weights: list = field(default=None)
    scores: list = field(default=None)
    uses: list = field(default=None)

    def __post_init__(self):
        n = len(self.names)
        self.weights = [1.0] * n if self.weights is None else list(self.weights)
        self.scores = [0.0] * n
        self.uses = [0] * n

    def probabilities(self):
        total = sum(self.weights)
        return [w / total for w in self.weights]

    def select(self, rng):
        x = rng.random() * sum(self.weights)
        acc = 0.0
        for i, w in enumerate(self.weights):
            acc += w
            if x < acc:
                return i
        return len(self.weights) - 1

    def reward(self, i, score):
        self.uses[i] += 1
        self.scores[i] += score

    def update(self):
        r = self.reaction
        for i in range(len(self.weights)):
            if self.uses[i]:
                w = (1 - r) * self.weights[i] + r * self.scores[i] / self.uses[i]
                self.weights[i] = max(w, self.floor)
            self.scores[i] = 0.0
            self.uses[i] = 0


def timed_solution(instance, regular, special):
    """Complete solution with its earliest schedule, or ``None`` if infeasible."""
    regular = [list(r) for r in regular if r]
    special = [list(r) for r in special if r]
    prob = TemporalProblem.from_routes(instance, regular, special)
    tau = schedule(prob)
    if tau is None:
        return None
    return Solution.from_routes(instance, regular, special, prob.route_times(tau))


def initial_solution(instance, seed=0, retries=10, rng=None):
    """Regret-2 construction from empty routes.

    If the plain construction strands a customer, each retry shuffles the
    request order and perturbs insertion costs with noise that grows with
    the attempt number (order alone only breaks regret ties).
    """
    rng = np.random.default_rng(seed) if rng is None else rng
    order = list(instance.requests)
    scale = float(instance.dist.max())
    for attempt in range(retries + 1):
        noise = 0.0
        if attempt:
            order = [order[i] for i in rng.permutation(len(order))]
            noise = scale * attempt / max(retries, 1)
        res = regret_insert(instance, [], [], order, k=2, rng=rng, noise=noise)
        if res.ok:
            sol = timed_solution(instance, res.regular, res.special)
            if sol is not None:
                sol.meta["construction_attempts"] = attempt + 1
                return sol
    raise NoInitialSolution(f"no initial solution for {instance.name} after {retries + 1} attempts")


def _temperature(config, initial_cost):
    if config.start_temperature is not None:
        return config.start_temperature
    if initial_cost <= 0:
        return 0.0
    return -config.start_worse * initial_cost / math.log(config.start_accept)


def run(instance, config=None):
    """Search from a regret-2 start; returns ``(best, trace, info)``.

    ``trace`` has one record per iteration; ``info`` carries the initial
    solution, every new best as ``(iteration, solution)``, final operator
    weights, and check counters.
    """
    config = SearchConfig() if config is None else config
    rng = np.random.default_rng(config.seed)
    init = initial_solution(instance, config.seed, config.initial_retries, rng=rng)
    current = best = init
    removal = OperatorBank(list(config.removal_ops), config.reaction, config.weight_floor)
    insertion = OperatorBank([f"regret-{k}" for k in config.regret_ks], config.reaction, config.weight_floor)
    noise_bank = OperatorBank(["plain", "noise"], config.reaction, config.weight_floor)
    max_noise = config.noise * float(instance.dist.max())
    temp = _temperature(config, init.cost)
    lo, hi = nb_rm_bounds(instance.n_customers, config.nb_rm_min, config.nb_rm_max, config.nb_rm_fraction)
    visited = {init.key()}
    trace = []
    counters = {"f3_checks": 0, "screen_passes": 0, "failed_repairs": 0}
    cache = SkeletonCache()
    improvements = [(0, init)]

    for it in range(1, config.iterations + 1):
        ri = removal.select(rng)
        ii = insertion.select(rng)
        ni = noise_bank.select(rng) if config.use_noise else 0
        nb_rm = int(rng.integers(lo, hi + 1))
        req = RemovalRequest(nb_rm, config.p_related, config.p_worst, config.relatedness_weights)
        reg, spe, removed = REMOVALS[removal.names[ri]](instance, current, req, rng)
        res = regret_insert(instance, reg, spe, removed, k=config.regret_ks[ii], rng=rng,
                            noise=max_noise if ni else 0.0, cache=cache)
        counters["f3_checks"] += res.f3_checks
        counters["screen_passes"] += res.screen_passes
        cand = timed_solution(instance, res.regular, res.special) if res.ok else None

        score = 0.0
        accepted = False
        if cand is None:
            status = "failed"
            counters["failed_repairs"] += 1
        else:
            key = cand.key()
            fresh = key not in visited
            if cand.cost < best.cost - 1e-9:
                best = cand
                improvements.append((it, cand))
                status = "best"
                score = config.sigma_best
            elif cand.cost < current.cost - 1e-9:
                status = "better"
                score = config.sigma_better if fresh else 0.0
            else:
                status = "worse"
            if cand.cost < current.cost - 1e-9:
                accepted = True
            elif temp > 0 and rng.random() < math.exp(-(cand.cost - current.cost) / temp):
                accepted = True
                if status == "worse" and fresh:
                    score = config.sigma_accepted
            if accepted:
                current = cand
                visited.add(key)
            elif status == "worse":
                status = "rejected"
        removal.reward(ri, score)
        insertion.reward(ii, score)
        if config.use_noise:
            noise_bank.reward(ni, score)
        trace.append(
            {
                "iter": it,
                "remove": removal.names[ri],
                "insert": insertion.names[ii],
                "noise": bool(ni),
                "nb_rm": nb_rm,
                "status": status,
                "accepted": accepted,
                "candidate": None if cand is None else cand.cost,
                "current": current.cost,
                "best": best.cost,
            }
        )
        temp *= config.cooling
        if it % config.segment == 0:
            removal.update()
            insertion.update()
            noise_bank.update()

    info = {
        "initial": init,
        "improvements": improvements,
        "weights": {
            "removal": dict(zip(removal.names, removal.weights)),
            "insertion": dict(zip(insertion.names, insertion.weights)),
            "noise": dict(zip(noise_bank.names, noise_bank.weights)),
        },
        **counters,
    }
    return best, trace, info


def trace_lines(trace):
    """Line-delimited JSON records; byte-identical for identical runs."""
    return "".join(json.dumps(rec, sort_keys=True) + "\n" for rec in trace)


class LpAlnsSolver(BaseEstimator):
    """Estimator front end for :func:`run`.

    ``fit`` takes an :class:`~vrpsc.instance.Instance` (or a path to an
    instance/Solomon file) and stores the best solution found in
    ``solution_``; ``predict`` returns it. Hyper-parameters mirror
    :class:`SearchConfig`.

    Examples
    --------
    >>> solver = LpAlnsSolver(iterations=200, seed=1).fit(instance)  # doctest: +SKIP
    >>> solver.cost_, solver.initial_cost_  # doctest: +SKIP
    """

    def __init__(self, iterations=25000, seed=0, nb_rm_min=4, nb_rm_max=40, nb_rm_fraction=0.4,
                 relatedness_weights=(4.0, 2.0, 1.0, 4.0), p_related=6.0, p_worst=3.0,
                 removal_ops=("random", "related", "worst"), regret_ks=(1, 2, 3), start_worse=0.05,
                 start_accept=0.5, start_temperature=None, cooling=0.99975, noise=0.025, use_noise=True,
                 sigma_best=33.0, sigma_better=9.0, sigma_accepted=13.0, reaction=0.1, segment=100,
                 weight_floor=1e-3, initial_retries=10):
        self.iterations = iterations
        self.seed = seed
        self.nb_rm_min = nb_rm_min
        self.nb_rm_max = nb_rm_max
        self.nb_rm_fraction = nb_rm_fraction
        self.relatedness_weights = relatedness_weights
        self.p_related = p_related
        self.p_worst = p_worst
        self.removal_ops = removal_ops
        self.regret_ks = regret_ks
        self.start_worse = start_worse
        self.start_accept = start_accept
        self.start_temperature = start_temperature
        self.cooling = cooling
        self.noise = noise
        self.use_noise = use_noise
        self.sigma_best = sigma_best
        self.sigma_better = sigma_better
        self.sigma_accepted = sigma_accepted
        self.reaction = reaction
        self.segment = segment
        self.weight_floor = weight_floor
        self.initial_retries = initial_retries

    @classmethod
    def from_config(cls, config):
        return cls(**dataclasses.asdict(config))

    def fit(self, X, y=None):
        instance = X if isinstance(X, Instance) else load_instance(X)
        self.config_ = SearchConfig(**self.get_params())
        t0 = time.perf_counter()
        best, trace, info = run(instance, self.config_)
        self.runtime_ = time.perf_counter() - t0
        self.instance_ = instance
        self.solution_ = best
        self.initial_solution_ = info["initial"]
        self.trace_ = trace
        self.cost_ = best.cost
        self.initial_cost_ = info["initial"].cost
        self.operator_weights_ = info["weights"]
        self.counters_ = {k: info[k] for k in ("f3_checks", "screen_passes", "failed_repairs")}
        return self

    def predict(self, X=None):
        check_is_fitted(self, "solution_")
        return self.solution_

    def score(self, X=None, y=None):
        """Negated travel cost of the best solution (higher is better)."""
        check_is_fitted(self, "solution_")
        return -self.cost_
