from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from ..qnet import SearchDomain

# stream tags for derived seeds; distinct tags never share random numbers
SAMPLE_STREAM = 0
BETA_STREAM = 1
GA_STREAM = 2
LS_STREAM = 3
RANDOM_STREAM = 4

CURVE_COLUMNS = ("generation", "evals", "best_fitness", "pop_best_fitness", "cycle", "beta")


def derived_rng(seed: int, *keys: int) -> np.random.Generator:
    """Generator for a fixed ``(seed, *keys)`` tuple, independent of call order."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, keys)]))


class BudgetExceeded(RuntimeError):
    pass


class Evaluator:
    """Counts fitness calls and refuses to exceed the budget.

    Uses ``fitness_fn.batch`` when present. With ``jobs > 1`` a population is
    split into contiguous chunks evaluated on a thread pool; results are
    placed back by index, so they never depend on completion order.
    """

    def __init__(self, fitness_fn: Callable, budget: int, jobs: int = 1):
        self.fn = fitness_fn
        self.budget = int(budget)
        self.jobs = max(1, int(jobs))
        self.calls = 0
        self._pool = ThreadPoolExecutor(self.jobs) if self.jobs > 1 else None

    @property
    def remaining(self) -> int:
        return self.budget - self.calls

    def _eval_chunk(self, genomes):
        batch = getattr(self.fn, "batch", None)
        if batch is not None:
            return np.asarray(batch(genomes), dtype=np.float64)
        return np.array([self.fn(g) for g in genomes], dtype=np.float64)

    def __call__(self, genomes) -> np.ndarray:
        genomes = np.atleast_2d(genomes)
        if genomes.shape[0] > self.remaining:
            raise BudgetExceeded(f"{genomes.shape[0]} evaluations requested, {self.remaining} left")
        self.calls += genomes.shape[0]
        if self._pool is None or genomes.shape[0] == 1:
            return self._eval_chunk(genomes)
        chunks = np.array_split(genomes, min(self.jobs, genomes.shape[0]))
        return np.concatenate(list(self._pool.map(self._eval_chunk, chunks)))

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


@dataclass
class EdaConfig:
    generations_per_cycle: int = 500
    population: int = 20
    elite_count: int = 20
    alpha: float = 0.1
    sigma: float = 0.95
    accuracy_threshold: float = 1.0
    beta_range: tuple[float, float] = (0.4, 0.6)
    max_fitness_evals: int = 150_000
    seed: int = 0

    def validate(self) -> None:
        if self.generations_per_cycle < 0:
            raise ValueError("generations_per_cycle must be >= 0")
        if self.population < 1:
            raise ValueError("population must be >= 1")
        if not 1 <= self.elite_count <= self.population:
            raise ValueError("elite_count must be in [1, population]")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must be in (0, 1]")
        if not 0.0 < self.sigma < 1.0:
            raise ValueError("sigma must be in (0, 1)")
        if not 0.0 <= self.accuracy_threshold <= 1.0:
            raise ValueError("accuracy_threshold must be in [0, 1]")
        lo, hi = self.beta_range
        if not 0.0 <= lo <= hi <= 1.0:
            raise ValueError("beta_range must satisfy 0 <= lo <= hi <= 1")
        if self.max_fitness_evals <= 0:
            raise ValueError("max_fitness_evals must be positive")


@dataclass
class GaConfig:
    population: int = 20
    tournament_size: int = 2
    crossover_rate: float = 0.9
    # None means 1/n
    mutation_rate: Optional[float] = None
    elitism: int = 1
    sigma: float = 0.95
    max_fitness_evals: int = 150_000
    seed: int = 0

    def validate(self) -> None:
        if self.population < 2:
            raise ValueError("GA population must be >= 2")
        if not 1 <= self.tournament_size <= self.population:
            raise ValueError("tournament_size must be in [1, population]")
        if not 0.0 <= self.crossover_rate <= 1.0:
            raise ValueError("crossover_rate must be in [0, 1]")
        if self.mutation_rate is not None and not 0.0 <= self.mutation_rate <= 1.0:
            raise ValueError("mutation_rate must be in [0, 1]")
        if not 0 <= self.elitism < self.population:
            raise ValueError("elitism must be in [0, population)")
        if not 0.0 < self.sigma <= 1.0:
            raise ValueError("sigma must be in (0, 1]")
        if self.max_fitness_evals <= 0:
            raise ValueError("max_fitness_evals must be positive")


@dataclass
class LsConfig:
    sigma: float = 0.95
    max_fitness_evals: int = 150_000
    seed: int = 0

    def validate(self) -> None:
        if not 0.0 < self.sigma < 1.0:
            raise ValueError("sigma must be in (0, 1)")
        if self.max_fitness_evals <= 0:
            raise ValueError("max_fitness_evals must be positive")


@dataclass
class RandomConfig:
    batch: int = 20
    max_fitness_evals: int = 150_000
    seed: int = 0

    def validate(self) -> None:
        if self.batch < 1:
            raise ValueError("batch must be >= 1")
        if self.max_fitness_evals <= 0:
            raise ValueError("max_fitness_evals must be positive")


@dataclass
class GenerationEntry:
    generation: int
    evals: int
    best_fitness: float
    pop_best_fitness: float
    cycle: int = 0
    beta: float = math.nan


@dataclass
class PartitionEvent:
    cycle: int
    beta: float
    frozen_count: int


@dataclass
class RunRecord:
    entries: list[GenerationEntry] = field(default_factory=list)
    partitions: list[PartitionEvent] = field(default_factory=list)
    best_genome: Optional[np.ndarray] = None
    best_fitness: float = math.nan
    initial_fitness: float = math.nan
    evals_used: int = 0
    truncated: bool = False

    def log(self, generation, evals, best, pop_best, cycle=0, beta=math.nan):
        self.entries.append(
            GenerationEntry(int(generation), int(evals), float(best), float(pop_best), int(cycle), float(beta))
        )

    def best_curve(self) -> np.ndarray:
        return np.array([e.best_fitness for e in self.entries])

    def curve_rows(self) -> list[list[str]]:
        rows = []
        for e in self.entries:
            beta = "" if math.isnan(e.beta) else format(e.beta, ".17g")
            rows.append(
                [
                    str(e.generation),
                    str(e.evals),
                    format(e.best_fitness, ".17g"),
                    format(e.pop_best_fitness, ".17g"),
                    str(e.cycle),
                    beta,
                ]
            )
        return rows

    def write_curve(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CURVE_COLUMNS)
            w.writerows(self.curve_rows())


def read_curve(path) -> list[dict]:
    with open(Path(path), newline="") as fh:
        return list(csv.DictReader(fh))


def sigma_perturb(genome: np.ndarray, sigma: float, domain: SearchDomain, rng: np.random.Generator) -> np.ndarray:
    """Keep each choice with probability sigma, else move to a uniform other candidate."""
    n = domain.n
    move = rng.random(n) >= sigma
    shift = 1 + np.floor(rng.random(n) * (domain.sizes - 1)).astype(np.int64)
    out = genome.copy()
    out[move] = (genome[move] + shift[move]) % domain.sizes[move]
    return out
