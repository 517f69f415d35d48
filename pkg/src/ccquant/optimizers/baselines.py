"""Comparison searches: generational GA, first-improvement local search, random sampling."""

from __future__ import annotations

import numpy as np

from .common import (
    GA_STREAM,
    LS_STREAM,
    RANDOM_STREAM,
    Evaluator,
    GaConfig,
    LsConfig,
    RandomConfig,
    RunRecord,
    derived_rng,
    sigma_perturb,
)


def _tournament(fits, size, rng):
    picks = rng.integers(0, fits.size, size=size)
    # first drawn wins ties
    return int(picks[np.argmax(fits[picks])])


def run_ga(domain, initial, fitness_fn, cfg: GaConfig, jobs: int = 1):
    """Generational GA with tournament selection, uniform crossover and per-gene mutation.

    The first population is the initial genome plus sigma-greedy perturbations
    of it. The best ``cfg.elitism`` individuals survive unchanged.
    """
    cfg.validate()
    initial = domain.check_genome(initial)
    n, P = domain.n, cfg.population
    rate = 1.0 / n if cfg.mutation_rate is None else cfg.mutation_rate
    rng = derived_rng(cfg.seed, GA_STREAM)
    record = RunRecord()

    with Evaluator(fitness_fn, cfg.max_fitness_evals, jobs) as ev:
        pop = np.stack([initial] + [sigma_perturb(initial, cfg.sigma, domain, rng) for _ in range(P - 1)])
        k = min(P, ev.remaining)
        pop = pop[:k]
        fits = ev(pop)
        record.initial_fitness = float(fits[0])
        best_i = int(np.argmax(fits))
        best, best_fit = pop[best_i].copy(), float(fits[best_i])
        record.truncated = k < P
        gen = 0
        record.log(gen, ev.calls, best_fit, fits.max())

        while ev.remaining > 0 and not record.truncated:
            order = np.argsort(-fits, kind="stable")
            children = [pop[i].copy() for i in order[: cfg.elitism]]
            while len(children) < P:
                a = pop[_tournament(fits, cfg.tournament_size, rng)]
                b = pop[_tournament(fits, cfg.tournament_size, rng)]
                if rng.random() < cfg.crossover_rate:
                    child = np.where(rng.random(n) < 0.5, a, b)
                else:
                    child = a.copy()
                mutate = rng.random(n) < rate
                if mutate.any():
                    shift = 1 + np.floor(rng.random(n) * (domain.sizes - 1)).astype(np.int64)
                    child = np.where(mutate, (child + shift) % domain.sizes, child)
                children.append(child)
            fresh = np.stack(children[cfg.elitism:])
            k = min(len(fresh), ev.remaining)
            if k < len(fresh):
                record.truncated = True
                fresh = fresh[:k]
            fresh_fits = ev(fresh)
            pop = np.concatenate([np.asarray(children[: cfg.elitism], dtype=np.int64).reshape(-1, n), fresh])
            fits = np.concatenate([fits[order[: cfg.elitism]], fresh_fits])
            i = int(np.argmax(fits))
            if fits[i] > best_fit:
                best, best_fit = pop[i].copy(), float(fits[i])
            gen += 1
            record.log(gen, ev.calls, best_fit, fits.max())

        record.best_genome, record.best_fitness, record.evals_used = best, best_fit, ev.calls
    return best, record


def run_ls(domain, initial, fitness_fn, cfg: LsConfig, jobs: int = 1):
    """First-improvement hill climbing with sigma-greedy restarts.

    Each sweep visits every position once in a fresh random order and moves
    it to another candidate, keeping the move only on strict improvement. A
    sweep with no accepted move ends the climb; the next one starts from a
    sigma-greedy perturbation of the best genome seen so far. One curve row is
    logged per sweep.
    """
    cfg.validate()
    current = domain.check_genome(initial).copy()
    n = domain.n
    rng = derived_rng(cfg.seed, LS_STREAM)
    record = RunRecord()

    with Evaluator(fitness_fn, cfg.max_fitness_evals, jobs) as ev:
        cur_fit = float(ev(current[None])[0])
        record.initial_fitness = cur_fit
        best, best_fit = current.copy(), cur_fit
        sweep = 0
        while ev.remaining > 0:
            improved = False
            for i in rng.permutation(n):
                if ev.remaining == 0:
                    record.truncated = True
                    break
                cand = current.copy()
                cand[i] = (current[i] + 1 + rng.integers(0, domain.sizes[i] - 1)) % domain.sizes[i]
                f = float(ev(cand[None])[0])
                if f > cur_fit:
                    current, cur_fit, improved = cand, f, True
                    if f > best_fit:
                        best, best_fit = cand.copy(), f
            record.log(sweep, ev.calls, best_fit, cur_fit)
            sweep += 1
            if not improved and ev.remaining > 0:
                current = sigma_perturb(best, cfg.sigma, domain, rng)
                cur_fit = float(ev(current[None])[0])
                if cur_fit > best_fit:
                    best, best_fit = current.copy(), cur_fit

        record.best_genome, record.best_fitness, record.evals_used = best, best_fit, ev.calls
    return best, record


def run_random(domain, fitness_fn, cfg: RandomConfig, jobs: int = 1):
    """Uniform sampling over the domain, logged in batches of ``cfg.batch``."""
    cfg.validate()
    rng = derived_rng(cfg.seed, RANDOM_STREAM)
    record = RunRecord()
    best, best_fit = None, -np.inf
    gen = 0
    with Evaluator(fitness_fn, cfg.max_fitness_evals, jobs) as ev:
        while ev.remaining > 0:
            k = min(cfg.batch, ev.remaining)
            pop = np.floor(rng.random((k, domain.n)) * domain.sizes).astype(np.int64)
            fits = ev(pop)
            i = int(np.argmax(fits))
            if fits[i] > best_fit:
                best, best_fit = pop[i].copy(), float(fits[i])
            record.log(gen, ev.calls, best_fit, fits.max())
            gen += 1
        record.best_genome, record.best_fitness, record.evals_used = best, best_fit, ev.calls
    return best, record
