"""Independent per-parameter categorical model (PBIL-style).

Row ``i`` of the model is a distribution over the candidate codes of
parameter ``i``. Rows are padded with zeros to a common width.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .qnet import SearchDomain

CHECKPOINT_MAGIC = "ccquant-probmodel"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ProbModel:
    probs: np.ndarray = field(repr=False)
    sizes: np.ndarray = field(repr=False)

    def __post_init__(self):
        p = np.array(self.probs, dtype=np.float64)
        sizes = np.ascontiguousarray(self.sizes, dtype=np.int64)
        if p.ndim != 2 or sizes.shape != (p.shape[0],):
            raise ValueError("probs must be (n, m) with one size per row")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "sizes", sizes)

    @property
    def n(self) -> int:
        return int(self.sizes.size)

    def check(self, tol: float = 1e-9) -> None:
        """Raise if any row leaves the probability simplex."""
        valid = np.arange(self.probs.shape[1])[None, :] < self.sizes[:, None]
        if np.any(self.probs < 0) or np.any(self.probs[~valid] != 0):
            raise ValueError("probabilities must be non-negative and zero past each row's size")
        if np.any(np.abs(self.probs.sum(axis=1) - 1.0) > tol):
            raise ValueError("every row must sum to 1")


def init_sigma_greedy(anchor, sigma: float, domain: SearchDomain) -> ProbModel:
    """``sigma`` on the anchor's choice, the rest spread evenly over the others."""
    anchor = domain.check_genome(anchor)
    sizes = domain.sizes
    if not np.all((1.0 / sizes < sigma) & (sigma < 1.0)):
        raise ValueError(f"sigma must lie in (1/m, 1) for every row, got {sigma}")
    valid = np.arange(domain.candidates.shape[1])[None, :] < sizes[:, None]
    rest = (1.0 - sigma) / (sizes - 1)
    probs = np.where(valid, rest[:, None], 0.0)
    probs[np.arange(domain.n), anchor] = sigma
    return ProbModel(probs, sizes)


def reinit_rows(model: ProbModel, rows, anchor, sigma: float, domain: SearchDomain) -> ProbModel:
    """Sigma-greedy re-initialization restricted to a boolean row mask."""
    fresh = init_sigma_greedy(anchor, sigma, domain)
    rows = np.asarray(rows, dtype=bool)
    probs = np.where(rows[:, None], fresh.probs, model.probs)
    return ProbModel(probs, model.sizes)


def sample_population(model: ProbModel, rng: np.random.Generator, size: int) -> np.ndarray:
    """Draw ``size`` genomes by inverse-CDF sampling of every row.

    Genome ``i`` uses row ``i`` of one ``(size, n)`` uniform draw, so a
    smaller ``size`` yields a prefix of the same genomes.
    """
    u = rng.random((size, model.n))
    cdf = np.cumsum(model.probs, axis=1)
    choice = (u[:, :, None] >= cdf[None]).sum(axis=2)
    # row sums may fall a hair short of 1
    return np.minimum(choice, model.sizes - 1).astype(np.int64)


def sample(model: ProbModel, rng: np.random.Generator) -> np.ndarray:
    """Draw one genome; same numbers as the first row of :func:`sample_population`."""
    return sample_population(model, rng, 1)[0]


def elite_frequencies(elite, width: int) -> np.ndarray:
    elite = np.atleast_2d(np.asarray(elite))
    if elite.shape[0] == 0:
        raise ValueError("elite set is empty")
    freq = np.empty((elite.shape[1], width))
    for j in range(width):
        freq[:, j] = (elite == j).mean(axis=0)
    return freq


def update(model: ProbModel, elite, alpha: float, rows=None) -> ProbModel:
    """Move the model toward the elite's empirical frequencies.

    ``(1 - alpha) * P + alpha * P_best``. If ``rows`` is a boolean mask, only
    those rows change.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")
    elite = np.atleast_2d(np.asarray(elite))
    if elite.shape[0] == 0:
        raise ValueError("elite set is empty")
    if elite.shape[1] != model.n:
        raise ValueError("elite genomes do not match the model length")
    p_best = elite_frequencies(elite, model.probs.shape[1])
    new = (1.0 - alpha) * model.probs + alpha * p_best
    if rows is not None:
        new = np.where(np.asarray(rows, dtype=bool)[:, None], new, model.probs)
    return ProbModel(new, model.sizes)


def confidence(model: ProbModel) -> np.ndarray:
    """Per-row maximum probability, used as the convergence measure."""
    return model.probs.max(axis=1)


def save_model(model: ProbModel, path) -> None:
    """Text checkpoint: one header line, then one row per parameter.

    Each row is ``size p_0 ... p_{size-1}`` with 17 significant digits, which
    round-trips float64 exactly.
    """
    lines = [f"# {CHECKPOINT_MAGIC} v{CHECKPOINT_VERSION} n={model.n} width={model.probs.shape[1]}"]
    for size, row in zip(model.sizes, model.probs):
        lines.append(" ".join([str(int(size))] + [format(v, ".17g") for v in row[:size]]))
    Path(path).write_text("\n".join(lines) + "\n")


def load_model(path) -> ProbModel:
    text = Path(path).read_text().splitlines()
    if not text or not text[0].startswith(f"# {CHECKPOINT_MAGIC} v"):
        raise ValueError(f"{path}: not a probability-model checkpoint")
    header = dict(tok.split("=") for tok in text[0].split()[3:])
    version = int(text[0].split()[2][1:])
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    n, width = int(header["n"]), int(header["width"])
    probs = np.zeros((n, width))
    sizes = np.zeros(n, dtype=np.int64)
    body = text[1:]
    if len(body) != n:
        raise ValueError(f"{path}: expected {n} rows, found {len(body)}")
    for i, line in enumerate(body):
        parts = line.split()
        sizes[i] = int(parts[0])
        probs[i, : sizes[i]] = [float(v) for v in parts[1:]]
    return ProbModel(probs, sizes)
