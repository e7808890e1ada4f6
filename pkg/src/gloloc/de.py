"""Differential evolution primitives: best/1 donors, block crossover, selection.

A genome for a control problem is (c_1..c_M, r_1..r_M); the generic driver
:func:`differential_evolution` works on any box-bounded vector.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .gradient import CostBreakdown

log = logging.getLogger(__name__)

# Stream tags so that initialization and evolution never share random draws.
INIT_STREAM = 0
EVOLVE_STREAM = 1


@dataclass(frozen=True)
class DEConfig:
    population_size: int = 32
    F_start: float = 0.4
    F_end: float = 0.1
    Cr: float = 0.97
    generations_max: int = 200
    literal_poisson: bool = True  # block-length mean Cr; False uses Cr * genome length
    c_max: float = 5.0
    c_init: float = 1.0

    def __post_init__(self):
        if self.population_size < 4:
            raise ValueError("population_size must be at least 4")
        if not self.F_start >= self.F_end > 0:
            raise ValueError("need F_start >= F_end > 0")
        if self.Cr <= 0:
            raise ValueError("Cr must be positive")
        if self.generations_max < 0:
            raise ValueError("generations_max must be non-negative")


@dataclass(frozen=True)
class Member:
    genome: np.ndarray
    cost: float
    breakdown: CostBreakdown | None = None
    rng_stream: tuple = ()

    @property
    def M(self) -> int:
        return self.genome.size // 2

    @property
    def c(self) -> np.ndarray:
        return self.genome[: self.M]

    @property
    def r(self) -> np.ndarray:
        return self.genome[self.M :]

    @property
    def fidelity(self) -> float:
        return self.breakdown.fidelity if self.breakdown is not None else float("nan")


def member_rng(master_seed: int, generation: int, member: int, stream: int = EVOLVE_STREAM):
    """Independent generator keyed on (seed, generation, member, stream)."""
    return np.random.default_rng([int(master_seed), int(generation), int(member), int(stream)])


def genome_bounds(M: int, c_max: float) -> tuple[np.ndarray, np.ndarray]:
    lower = np.concatenate([np.full(M, -c_max), np.full(M, -0.5)])
    upper = np.concatenate([np.full(M, c_max), np.full(M, 0.5)])
    return lower, upper


def scale_factor(generation: int, cfg: DEConfig) -> float:
    """Linear schedule from F_start at generation 0 to F_end at generations_max."""
    if cfg.generations_max == 0:
        return cfg.F_start
    if not 0 <= generation <= cfg.generations_max:
        raise ValueError(f"generation {generation} outside [0, {cfg.generations_max}]")
    return cfg.F_start + (cfg.F_end - cfg.F_start) * generation / cfg.generations_max


def donor(best, a, b, F: float, lower=None, upper=None, indices=None) -> np.ndarray:
    """best + F (a - b), clipped to [lower, upper].

    ``best``, ``a`` and ``b`` are genomes or Members. ``indices`` gives their
    population indices and is checked for collisions.
    """
    if indices is not None and len(set(indices)) != len(indices):
        raise ValueError(f"donor indices must be distinct, got {tuple(indices)}")
    vecs = [np.asarray(m.genome if isinstance(m, Member) else m, dtype=float) for m in (best, a, b)]
    v = vecs[0] + F * (vecs[1] - vecs[2])
    if lower is not None or upper is not None:
        v = np.clip(v, lower, upper)
    return v


def poisson_mean(cfg: DEConfig, genome_length: int) -> float:
    return cfg.Cr if cfg.literal_poisson else cfg.Cr * genome_length


def block_length(rng, mean: float) -> int:
    return max(1, int(rng.poisson(mean)))


def expected_block_length(mean: float, genome_length: int) -> float:
    """E[min(max(1, L), n)] for L ~ Poisson(mean), from the probability mass function."""
    pmf = [math.exp(-mean)]
    for k in range(1, genome_length):
        pmf.append(pmf[-1] * mean / k)
    total = pmf[0] * 1 + sum(k * p for k, p in enumerate(pmf) if k >= 1)
    return total + genome_length * max(0.0, 1.0 - sum(pmf))


def crossover(target, donor_vec, cfg: DEConfig, rng, length: int | None = None, start: int | None = None):
    """Copy a wrapped block of ``length`` donor entries into the target.

    Length and start are drawn from ``rng`` when not given.
    """
    target = np.asarray(target, dtype=float)
    donor_vec = np.asarray(donor_vec, dtype=float)
    if target.shape != donor_vec.shape:
        raise ValueError("target and donor differ in length")
    n = target.size
    if length is None:
        length = block_length(rng, poisson_mean(cfg, n))
    if start is None:
        start = int(rng.integers(n))
    trial = target.copy()
    idx = (start + np.arange(min(length, n))) % n
    trial[idx] = donor_vec[idx]
    return trial


def _key(cost: float) -> float:
    return math.inf if math.isnan(cost) else cost


def select(current: Member, trial: Member) -> Member:
    """Trial wins only with a strictly lower cost; NaN counts as +inf."""
    if math.isnan(trial.cost):
        log.warning("trial cost is NaN; keeping current member")
    return trial if _key(trial.cost) < _key(current.cost) else current


def best_index(costs) -> int:
    return int(np.argmin([_key(c) for c in costs]))


def make_trial(genomes, costs, i: int, F: float, cfg: DEConfig, rng, lower, upper) -> np.ndarray:
    """Donor from best/1 (all three indices distinct from target ``i``) and crossover."""
    n = len(genomes)
    b = best_index(costs)
    others = [j for j in range(n) if j != i and j != b]
    j1, j2 = rng.choice(others, size=2, replace=False)
    v = donor(genomes[b], genomes[j1], genomes[j2], F, lower, upper, indices=(b, int(j1), int(j2)))
    return crossover(genomes[i], v, cfg, rng)


def init_genome(rng, init_lower, init_upper) -> np.ndarray:
    return rng.uniform(init_lower, init_upper)


def init_bounds(M: int, cfg: DEConfig) -> tuple[np.ndarray, np.ndarray]:
    """Initial sampling box: c in [-c_init, c_init], r in [-0.5, 0.5]."""
    return genome_bounds(M, min(cfg.c_init, cfg.c_max))


@dataclass
class DEResult:
    best_genome: np.ndarray
    best_cost: float
    history: list  # best cost after each generation, index 0 = initial population
    generations: int
    evals: int


def differential_evolution(
    fun,
    lower,
    upper,
    cfg: DEConfig,
    seed: int,
    init_lower=None,
    init_upper=None,
    tol: float = -math.inf,
) -> DEResult:
    """Synchronous DE/best/1 with block crossover minimizing ``fun(genome) -> float``.

    Stops after ``cfg.generations_max`` generations or once the best cost
    drops below ``tol``.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    lo0 = lower if init_lower is None else np.asarray(init_lower, dtype=float)
    hi0 = upper if init_upper is None else np.asarray(init_upper, dtype=float)
    N = cfg.population_size
    genomes = [init_genome(member_rng(seed, 0, i, INIT_STREAM), lo0, hi0) for i in range(N)]
    costs = [float(fun(g)) for g in genomes]
    evals = N
    history = [min(map(_key, costs))]
    g = 0
    while g < cfg.generations_max and history[-1] >= tol:
        F = scale_factor(g, cfg)
        g += 1
        trials = [make_trial(genomes, costs, i, F, cfg, member_rng(seed, g, i), lower, upper) for i in range(N)]
        for i, t in enumerate(trials):
            ct = float(fun(t))
            evals += 1
            if _key(ct) < _key(costs[i]):
                genomes[i], costs[i] = t, ct
        history.append(min(map(_key, costs)))
    b = best_index(costs)
    return DEResult(genomes[b], costs[b], history, g, evals)
