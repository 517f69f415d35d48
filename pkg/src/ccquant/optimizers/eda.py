"""EDA over a discrete search domain, with optional cooperative-coevolution restarts.

All three public entry points share one loop:

* ``run_eda``: a single cycle of ``G`` generations from a sigma-greedy model.
* ``run_eda_cc``: after each cycle, freeze the ``floor(beta * n)`` most
  confident parameters at the incumbent's choices, re-initialize the rest
  around the incumbent, and run another cycle.
* ``run_eda_no_cc``: same cadence, but every restart re-initializes all rows.

Restarting modes stop once the incumbent's fitness exceeds the accuracy
threshold or the evaluation budget is spent.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .. import probmodel as pm
from ..qnet import SearchDomain
from .common import (
    BETA_STREAM,
    SAMPLE_STREAM,
    EdaConfig,
    Evaluator,
    GenerationEntry,
    PartitionEvent,
    RunRecord,
    derived_rng,
)

SINGLE = "single"
CC = "cc"
NO_CC = "no-cc"


def partition_by_confidence(conf: np.ndarray, beta: float) -> np.ndarray:
    """Boolean mask of the ``floor(beta * n)`` most confident positions.

    Sorted by confidence descending; ties go to the lower index.
    """
    n = conf.size
    count = int(math.floor(beta * n))
    order = np.argsort(-conf, kind="stable")
    frozen = np.zeros(n, dtype=bool)
    frozen[order[:count]] = True
    return frozen


def draw_beta(cfg: EdaConfig, cycle: int) -> float:
    lo, hi = cfg.beta_range
    return float(derived_rng(cfg.seed, BETA_STREAM, cycle).uniform(lo, hi))


def sample_generation(model: pm.ProbModel, seed: int, generation: int, size: int) -> np.ndarray:
    """Population of one generation, drawn from a stream keyed by ``(seed, generation)``."""
    return pm.sample_population(model, derived_rng(seed, SAMPLE_STREAM, generation), size)


@dataclass
class CycleState:
    """Everything needed to continue a run at a cycle boundary."""

    model: pm.ProbModel
    best: np.ndarray
    best_fitness: float
    frozen: np.ndarray
    generation: int
    cycle: int
    evals: int
    record: RunRecord


def _run(
    domain: SearchDomain,
    initial,
    fitness_fn: Callable,
    cfg: EdaConfig,
    mode: str,
    jobs: int = 1,
    on_generation: Optional[Callable] = None,
    on_cycle_end: Optional[Callable[[CycleState], None]] = None,
    resume: Optional[CycleState] = None,
):
    cfg.validate()
    initial = domain.check_genome(initial)
    G, S = cfg.generations_per_cycle, cfg.population

    with Evaluator(fitness_fn, cfg.max_fitness_evals, jobs) as ev:
        if resume is None:
            record = RunRecord()
            best = initial.copy()
            best_fit = float(ev(best[None])[0])
            record.initial_fitness = best_fit
            model = pm.init_sigma_greedy(best, cfg.sigma, domain)
            frozen = np.zeros(domain.n, dtype=bool)
            gen = cycle = 0
        else:
            record = resume.record
            best, best_fit = resume.best.copy(), resume.best_fitness
            model, frozen = resume.model, resume.frozen.copy()
            gen, cycle = resume.generation, resume.cycle
            ev.calls = resume.evals

        while True:
            if mode == SINGLE and cycle >= 1:
                break
            if mode != SINGLE and best_fit > cfg.accuracy_threshold:
                break
            if ev.remaining == 0:
                record.truncated = True
                break
            beta = math.nan
            if cycle > 0:
                if mode == CC:
                    beta = draw_beta(cfg, cycle)
                    frozen = partition_by_confidence(pm.confidence(model), beta)
                    model = pm.reinit_rows(model, ~frozen, best, cfg.sigma, domain)
                    record.partitions.append(PartitionEvent(cycle, beta, int(frozen.sum())))
                else:
                    model = pm.init_sigma_greedy(best, cfg.sigma, domain)
            anchor = best.copy()
            active = ~frozen
            for _ in range(G):
                if ev.remaining == 0:
                    record.truncated = True
                    break
                k = min(S, ev.remaining)
                pop = sample_generation(model, cfg.seed, gen, k)
                pop[:, frozen] = anchor[frozen]
                if on_generation is not None:
                    on_generation(cycle, gen, pop, frozen.copy())
                fits = ev(pop)
                order = np.argsort(-fits, kind="stable")
                if fits[order[0]] > best_fit:
                    best, best_fit = pop[order[0]].copy(), float(fits[order[0]])
                if k == S:
                    model = pm.update(model, pop[order[: cfg.elite_count]], cfg.alpha, rows=active)
                else:
                    record.truncated = True
                record.log(gen, ev.calls, best_fit, fits.max(), cycle, beta)
                gen += 1
                if k < S:
                    break
            cycle += 1
            if on_cycle_end is not None:
                on_cycle_end(CycleState(model, best.copy(), best_fit, frozen.copy(), gen, cycle, ev.calls, record))

        record.best_genome = best
        record.best_fitness = best_fit
        record.evals_used = ev.calls
    return best, record


def run_eda(domain, initial, fitness_fn, cfg: EdaConfig, jobs: int = 1, on_generation=None):
    """One sigma-greedy initialized EDA run of ``cfg.generations_per_cycle`` generations."""
    return _run(domain, initial, fitness_fn, cfg, SINGLE, jobs, on_generation)


def run_eda_cc(
    domain, initial, fitness_fn, cfg: EdaConfig, jobs: int = 1, on_generation=None, on_cycle_end=None, resume=None
):
    """EDA with confidence-based grouping and freezing between cycles."""
    return _run(domain, initial, fitness_fn, cfg, CC, jobs, on_generation, on_cycle_end, resume)


def run_eda_no_cc(
    domain, initial, fitness_fn, cfg: EdaConfig, jobs: int = 1, on_generation=None, on_cycle_end=None, resume=None
):
    """Restarting EDA that re-initializes every row around the incumbent."""
    return _run(domain, initial, fitness_fn, cfg, NO_CC, jobs, on_generation, on_cycle_end, resume)


# -- checkpoints ------------------------------------------------------------


def _entry_json(entry: GenerationEntry) -> dict:
    out = asdict(entry)
    if math.isnan(out["beta"]):
        out["beta"] = None
    return out


def save_state(state: CycleState, directory) -> None:
    """Write ``model.txt``, ``incumbent.txt`` and ``state.json`` into ``directory``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    pm.save_model(state.model, d / "model.txt")
    (d / "incumbent.txt").write_text(" ".join(map(str, state.best.tolist())) + "\n")
    meta = {
        "version": 1,
        "best_fitness": state.best_fitness,
        "frozen": np.flatnonzero(state.frozen).tolist(),
        "generation": state.generation,
        "cycle": state.cycle,
        "evals": state.evals,
        "record": {
            "entries": [_entry_json(e) for e in state.record.entries],
            "partitions": [asdict(p) for p in state.record.partitions],
            "initial_fitness": state.record.initial_fitness,
            "truncated": state.record.truncated,
        },
    }
    (d / "state.json").write_text(json.dumps(meta, indent=1, allow_nan=False) + "\n")


def load_state(directory) -> CycleState:
    d = Path(directory)
    model = pm.load_model(d / "model.txt")
    best = np.array((d / "incumbent.txt").read_text().split(), dtype=np.int64)
    meta = json.loads((d / "state.json").read_text())
    if meta.get("version") != 1:
        raise ValueError(f"{d}: unsupported checkpoint version {meta.get('version')}")
    frozen = np.zeros(model.n, dtype=bool)
    frozen[meta["frozen"]] = True
    rec = RunRecord()
    for e in meta["record"]["entries"]:
        if e["beta"] is None:
            e["beta"] = math.nan
        rec.entries.append(GenerationEntry(**e))
    rec.partitions = [PartitionEvent(**p) for p in meta["record"]["partitions"]]
    rec.initial_fitness = meta["record"]["initial_fitness"]
    rec.truncated = meta["record"]["truncated"]
    return CycleState(
        model, best, meta["best_fitness"], frozen, meta["generation"], meta["cycle"], meta["evals"], rec
    )
