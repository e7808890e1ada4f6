"""Global-Local loop: DE generations whose trials are refined by GROUP before selection.

Each generation builds one trial per member (best/1 donor plus block
crossover), evaluates all trials, ranks them, sends each to the local
optimizer with a rank-dependent sigmoid probability and finally keeps the
better of member and trial. All random draws of a generation are taken from
per-member generators before any work is dispatched, so results do not depend
on how many worker processes share the evaluations.
"""
from __future__ import annotations

import dataclasses
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .control import BasisSpec
from .de import (
    INIT_STREAM,
    DEConfig,
    Member,
    best_index,
    genome_bounds,
    init_bounds,
    init_genome,
    make_trial,
    member_rng,
    scale_factor,
    select,
)
from .gradient import ControlObjective, CostBreakdown
from .local import LocalOptConfig, group_optimize

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class HybridConfig:
    de: DEConfig = field(default_factory=DEConfig)
    local: LocalOptConfig = field(default_factory=lambda: LocalOptConfig(max_iterations=50))
    F_conv: float = 0.99
    max_generations: int = 200
    sigmoid_midpoint_rank: float | None = None  # default N/4
    sigmoid_width: float | None = None  # default N/10
    master_seed: int = 0
    max_evals: int | None = None  # stop once this many cost evaluations are spent
    n_workers: int = 1
    local_probability_override: float | None = None  # constant gate, for testing
    max_wall_seconds: float | None = None  # wall-clock budget; results then depend on machine speed

    def __post_init__(self):
        if not 0 <= self.F_conv <= 1:
            raise ValueError("F_conv must lie in [0, 1]")
        if self.sigmoid_width is not None and self.sigmoid_width <= 0:
            raise ValueError("sigmoid_width must be positive")
        if self.max_generations < 0:
            raise ValueError("max_generations must be non-negative")
        if self.n_workers < 1:
            raise ValueError("n_workers must be at least 1")

    @property
    def midpoint(self) -> float:
        N = self.de.population_size
        return N / 4 if self.sigmoid_midpoint_rank is None else self.sigmoid_midpoint_rank

    @property
    def width(self) -> float:
        N = self.de.population_size
        return N / 10 if self.sigmoid_width is None else self.sigmoid_width


@dataclass(frozen=True)
class GenerationRecord:
    generation: int
    costs: np.ndarray
    best_cost: float
    median_cost: float
    q25: float
    q75: float
    local_opt_count: int
    cost_evals_cumulative: int
    best_fidelity: float = float("nan")

    @classmethod
    def from_population(cls, generation, population, local_opt_count, evals):
        costs = np.array([m.cost for m in population])
        q25, med, q75 = np.percentile(costs, [25, 50, 75])
        best = population[best_index(costs)]
        return cls(
            generation, costs, float(costs.min()), float(med), float(q25), float(q75),
            int(local_opt_count), int(evals), best.fidelity,
        )


@dataclass
class HybridResult:
    best: Member
    records: list
    evals: int
    population: list


def local_probability(rank: int, cfg: HybridConfig) -> float:
    """1 / (1 + exp((rank - midpoint) / width)); rank 0 is the cheapest trial."""
    if cfg.local_probability_override is not None:
        return float(cfg.local_probability_override)
    z = (rank - cfg.midpoint) / cfg.width
    if z > 700:
        return 0.0
    return 1.0 / (1.0 + math.exp(z))


def as_objective(problem, basis: BasisSpec, cfg: HybridConfig):
    if hasattr(problem, "evaluate"):
        return problem
    return ControlObjective(problem, basis.T, cfg.de.c_max)


# Worker-side state: the objective is shipped once per process.
_OBJECTIVE = None


def _init_worker(objective):
    global _OBJECTIVE
    _OBJECTIVE = objective


def _evaluate_task(genome):
    M = genome.size // 2
    try:
        return _OBJECTIVE.evaluate(genome[:M], genome[M:]), None
    except Exception as err:  # noqa: BLE001 - reported back and logged by the caller
        return None, f"{type(err).__name__}: {err}"


def _local_task(args):
    genome, local_cfg = args
    M = genome.size // 2
    try:
        res = group_optimize(genome[:M], BasisSpec(genome[M:], getattr(_OBJECTIVE, "T", 1.0)), _OBJECTIVE, local_cfg)
        return res.best_coeffs, res.best_cost, res.evals, None
    except Exception as err:  # noqa: BLE001
        return None, None, 1, f"{type(err).__name__}: {err}"


class _Pool:
    """Ordered map over either the current process or a process pool."""

    def __init__(self, objective, n_workers: int):
        self.executor = None
        _init_worker(objective)
        if n_workers > 1:
            self.executor = ProcessPoolExecutor(n_workers, initializer=_init_worker, initargs=(objective,))

    def map(self, fn, items):
        items = list(items)
        if self.executor is None or len(items) < 2:
            return [fn(x) for x in items]
        return list(self.executor.map(fn, items))

    def close(self):
        if self.executor is not None:
            self.executor.shutdown()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _member(genome, breakdown, stream) -> Member:
    cost = float("nan") if breakdown is None else breakdown.total
    return Member(np.asarray(genome, dtype=float), cost, breakdown, stream)


def initial_population(objective, M: int, cfg: HybridConfig, pool: _Pool):
    lo, hi = init_bounds(M, cfg.de)
    streams = [(cfg.master_seed, 0, i, INIT_STREAM) for i in range(cfg.de.population_size)]
    genomes = [init_genome(member_rng(*s), lo, hi) for s in streams]
    out = pool.map(_evaluate_task, genomes)
    pop = []
    for g, (bd, err), s in zip(genomes, out, streams):
        if err:
            log.warning("initial member %d failed: %s", s[2], err)
        pop.append(_member(g, bd, s))
    return pop


def _de_schedule(cfg: HybridConfig) -> DEConfig:
    return dataclasses.replace(cfg.de, generations_max=cfg.max_generations)


def run_generation(population, generation: int, cfg: HybridConfig, objective, pool: _Pool | None = None):
    """One synchronous generation (numbered from 1).

    Returns ``(population, local_opt_count, evals_spent)``.
    """
    own_pool = pool is None
    pool = pool or _Pool(objective, 1)
    try:
        N = len(population)
        M = population[0].M
        lower, upper = genome_bounds(M, cfg.de.c_max)
        de_cfg = _de_schedule(cfg)
        F = scale_factor(min(generation - 1, de_cfg.generations_max), de_cfg)
        genomes = [m.genome for m in population]
        costs = [m.cost for m in population]

        trials, gates, streams = [], [], []
        for i in range(N):
            stream = (cfg.master_seed, generation, i)
            rng = member_rng(*stream)
            trials.append(make_trial(genomes, costs, i, F, cfg.de, rng, lower, upper))
            gates.append(rng.random())
            streams.append(stream)

        evaluated = pool.map(_evaluate_task, trials)
        evals = N
        trial_members = []
        for i, (bd, err) in enumerate(evaluated):
            if err:
                log.warning("generation %d member %d: trial evaluation failed: %s", generation, i, err)
            trial_members.append(_member(trials[i], bd, streams[i]))

        trial_costs = np.array([math.inf if math.isnan(m.cost) else m.cost for m in trial_members])
        ranks = np.empty(N, dtype=int)
        ranks[np.argsort(trial_costs, kind="stable")] = np.arange(N)
        chosen = [i for i in range(N) if np.isfinite(trial_costs[i]) and gates[i] < local_probability(ranks[i], cfg)]

        optimized = pool.map(_local_task, [(trials[i], cfg.local) for i in chosen])
        for i, (c_opt, bd, n_evals, err) in zip(chosen, optimized):
            evals += n_evals
            if err:
                log.warning("generation %d member %d: local optimization failed: %s", generation, i, err)
                trial_members[i] = _member(trials[i], None, streams[i])
                continue
            genome = np.concatenate([c_opt, trials[i][M:]])
            trial_members[i] = _member(genome, bd, streams[i])

        new_pop = [select(cur, tr) for cur, tr in zip(population, trial_members)]
        return new_pop, len(chosen), evals
    finally:
        if own_pool:
            pool.close()


def run(problem, basis: BasisSpec, cfg: HybridConfig, callback=None) -> HybridResult:
    """Evolve until the best fidelity reaches F_conv or a budget runs out.

    ``basis`` supplies the basis size M and the duration T; its shifts are
    ignored since they are part of each genome. ``callback(record)`` is called
    after every generation, including the initial population (generation 0).
    """
    objective = as_objective(problem, basis, cfg)
    t0 = time.monotonic()
    with _Pool(objective, cfg.n_workers) as pool:
        population = initial_population(objective, basis.M, cfg, pool)
        evals = len(population)
        records = [GenerationRecord.from_population(0, population, 0, evals)]
        if callback:
            callback(records[-1])
        g = 0
        while g < cfg.max_generations:
            g += 1
            population, n_local, spent = run_generation(population, g, cfg, objective, pool)
            evals += spent
            records.append(GenerationRecord.from_population(g, population, n_local, evals))
            if callback:
                callback(records[-1])
            best = population[best_index([m.cost for m in population])]
            if best.fidelity >= cfg.F_conv:
                break
            if cfg.max_evals is not None and evals >= cfg.max_evals:
                break
            if cfg.max_wall_seconds is not None and time.monotonic() - t0 >= cfg.max_wall_seconds:
                break
    best = population[best_index([m.cost for m in population])]
    return HybridResult(best, records, evals, population)


def records_equal(a, b) -> bool:
    """Field-by-field equality of two record lists, arrays compared exactly."""
    if len(a) != len(b):
        return False
    for ra, rb in zip(a, b):
        for f in dataclasses.fields(GenerationRecord):
            if not np.array_equal(getattr(ra, f.name), getattr(rb, f.name), equal_nan=True):
                return False
    return True
