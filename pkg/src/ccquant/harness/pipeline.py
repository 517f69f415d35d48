"""Experiment orchestration: float training -> quantize -> switch -> optimize -> report."""

from __future__ import annotations

import dataclasses
import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from ..optimizers import (
    EdaConfig,
    GaConfig,
    LsConfig,
    RandomConfig,
    RunRecord,
    run_eda,
    run_eda_cc,
    run_eda_no_cc,
    run_ga,
    run_ls,
    run_random,
)
from ..qnet import Dataset, NetworkFitness, QuantNetwork, SearchDomain, apply_genome, fitness, mlp
from .data import load_split
from .files import save_domain, save_genome, save_network
from .floatnet import float_accuracy, train_float_reference
from .initial import initial_genome, quantize_network, switch_perturb

log = logging.getLogger(__name__)

ALGORITHMS = ("eda", "eda-cc", "eda-nocc", "ga", "ls", "random")
OUTPUT_ENV = "CCQUANT_OUT"


def parse_topology(text: str):
    """``"2,16,8,2"`` -> dense MLP layer specs."""
    try:
        sizes = [int(s) for s in str(text).replace("-", ",").split(",") if s.strip()]
    except ValueError:
        raise ValueError(f"bad topology {text!r}; expected comma-separated layer sizes") from None
    return mlp(sizes)


def default_output_dir() -> str:
    return os.environ.get(OUTPUT_ENV, "runs")


@dataclass
class ExperimentConfig:
    """Flat experiment description; serialized one field per key."""

    topology: str = "2,16,8,2"
    data: str = "two-moons:n=200,n_test=200,noise=0.2,seed=7"
    bits: int = 4
    activation_bits: int = 4
    switch: float = 0.3
    algo: str = "eda-cc"
    seed: int = 0
    budget: int = 150_000
    threshold: float = 1.0
    gens: int = 500
    pop: int = 20
    elite: int = 20
    alpha: float = 0.1
    sigma: float = 0.95
    beta_lo: float = 0.4
    beta_hi: float = 0.6
    ga_crossover: float = 0.9
    ga_tournament: int = 2
    ga_mutation: Optional[float] = None
    float_epochs: int = 300
    float_lr: float = 0.1
    float_batch: int = 32
    jobs: int = 1
    out_dir: str = dataclasses.field(default_factory=default_output_dir)

    def validate(self) -> None:
        if self.algo not in ALGORITHMS:
            raise ValueError(f"algo must be one of {', '.join(ALGORITHMS)}")
        if not 0.0 <= self.switch <= 1.0:
            raise ValueError("switch must be in [0, 1]")
        if self.bits < 1 or self.activation_bits < 1:
            raise ValueError("bit widths must be >= 1")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")
        if self.float_epochs < 0 or self.float_lr <= 0 or self.float_batch < 1:
            raise ValueError("invalid float-training settings")
        parse_topology(self.topology)
        self.optimizer_config().validate()

    def eda_config(self) -> EdaConfig:
        return EdaConfig(
            generations_per_cycle=self.gens,
            population=self.pop,
            elite_count=self.elite,
            alpha=self.alpha,
            sigma=self.sigma,
            accuracy_threshold=self.threshold,
            beta_range=(self.beta_lo, self.beta_hi),
            max_fitness_evals=self.budget,
            seed=self.seed,
        )

    def optimizer_config(self):
        if self.algo.startswith("eda"):
            return self.eda_config()
        if self.algo == "ga":
            return GaConfig(population=self.pop, tournament_size=self.ga_tournament,
                            crossover_rate=self.ga_crossover, mutation_rate=self.ga_mutation,
                            sigma=self.sigma, max_fitness_evals=self.budget, seed=self.seed)
        if self.algo == "ls":
            return LsConfig(sigma=self.sigma, max_fitness_evals=self.budget, seed=self.seed)
        return RandomConfig(batch=self.pop, max_fitness_evals=self.budget, seed=self.seed)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**d)


def save_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=1, sort_keys=True) + "\n")


def load_config(path) -> ExperimentConfig:
    return ExperimentConfig.from_dict(json.loads(Path(path).read_text()))


def optimize(net: QuantNetwork, domain: SearchDomain, train: Dataset, cfg: ExperimentConfig,
             **hooks) -> tuple[np.ndarray, RunRecord]:
    """Run the configured optimizer starting from ``net``'s position in ``domain``.

    The fitness function sees only codes and codebook levels.
    """
    fit = NetworkFitness(net, domain, train)
    start = initial_genome(net, domain)
    ocfg = cfg.optimizer_config()
    if cfg.algo == "eda":
        return run_eda(domain, start, fit, ocfg, jobs=cfg.jobs, **hooks)
    if cfg.algo == "eda-cc":
        return run_eda_cc(domain, start, fit, ocfg, jobs=cfg.jobs, **hooks)
    if cfg.algo == "eda-nocc":
        return run_eda_no_cc(domain, start, fit, ocfg, jobs=cfg.jobs, **hooks)
    if cfg.algo == "ga":
        return run_ga(domain, start, fit, ocfg, jobs=cfg.jobs)
    if cfg.algo == "ls":
        return run_ls(domain, start, fit, ocfg, jobs=cfg.jobs)
    return run_random(domain, fit, ocfg, jobs=cfg.jobs)


@dataclass
class InitialSolution:
    float_net: object
    quantized: QuantNetwork
    perturbed: QuantNetwork
    domain: SearchDomain
    train: Dataset
    test: Dataset


def build_initial(cfg: ExperimentConfig) -> InitialSolution:
    """Float-train, quantize and switch-perturb according to ``cfg``."""
    layers = parse_topology(cfg.topology)
    train, test = load_split(cfg.data)
    fnet = train_float_reference(layers, train, cfg.float_epochs, cfg.float_lr, cfg.seed, cfg.float_batch)
    qnet = quantize_network(fnet, cfg.bits, cfg.activation_bits)
    perturbed, domain = switch_perturb(qnet, cfg.switch, cfg.seed)
    return InitialSolution(fnet, qnet, perturbed, domain, train, test)


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Full pipeline; writes every artifact into ``cfg.out_dir`` and returns the summary."""
    cfg.validate()
    out = Path(cfg.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        save_config(cfg, out / "config.json")
    except OSError as exc:
        raise OSError(f"cannot write to {out}: {exc}") from exc

    init = build_initial(cfg)
    # the search below only ever sees the quantized network
    float_net, init.float_net = init.float_net, None
    best, record = optimize(init.perturbed, init.domain, init.train, cfg)
    final = apply_genome(init.domain, best, init.perturbed)

    summary = {
        "algo": cfg.algo,
        "seed": cfg.seed,
        "n_params": init.perturbed.n_params,
        "float_train_accuracy": float_accuracy(float_net, init.train),
        "float_test_accuracy": float_accuracy(float_net, init.test),
        "quantized_train_accuracy": fitness(init.quantized, init.train),
        "initial_train_accuracy": fitness(init.perturbed, init.train),
        "initial_test_accuracy": fitness(init.perturbed, init.test),
        "final_train_accuracy": fitness(final, init.train),
        "final_test_accuracy": fitness(final, init.test),
        "fitness_evals": record.evals_used,
        "truncated": record.truncated,
        "generations": len(record.entries),
        "partitions": len(record.partitions),
    }
    try:
        save_network(float_net, out / "float.fnet")
        save_network(init.quantized, out / "quantized.qnet")
        save_network(init.perturbed, out / "initial.qnet")
        save_domain(init.domain, out / "domain.json")
        save_network(final, out / "final.qnet")
        save_network(final, out / "final.qnetb")
        save_genome(best, out / "best_genome.txt")
        record.write_curve(out / "curve.csv")
        (out / "summary.json").write_text(json.dumps(summary, indent=1) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write artifacts to {out}: {exc}") from exc
    return summary
