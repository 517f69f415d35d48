"""Datasets: synthetic generators and a delimited-text format.

A dataset spec is either a path to a text file or ``name[:key=value,...]``,
for example ``two-moons:n=200,n_test=200,noise=0.1,seed=7,part=train``.
Generators draw ``n + n_test`` points at once, rescale them together and
split, so the train and test parts share one affine mapping.
"""

from __future__ import annotations

import logging
import os
from pathlib import Path

import numpy as np
from sklearn.datasets import make_blobs, make_moons

from ..qnet import Dataset

log = logging.getLogger(__name__)

SCALED_MARKER = "# ccquant-dataset v1 scaled"

XOR_POINTS = np.array([[-1.0, -1.0], [-1.0, 1.0], [1.0, -1.0], [1.0, 1.0]])
XOR_LABELS = np.array([0, 1, 1, 0])


class DatasetParseError(ValueError):
    def __init__(self, path, lineno, msg):
        super().__init__(f"{path}:{lineno}: {msg}")
        self.path = path
        self.lineno = lineno


def rescale_features(x: np.ndarray) -> np.ndarray:
    """Map each column affinely onto [-1, 1]; constant columns become 0."""
    x = np.asarray(x, dtype=np.float64)
    lo, hi = x.min(axis=0), x.max(axis=0)
    span = hi - lo
    out = np.zeros_like(x)
    const = span == 0
    if np.any(const):
        log.warning("constant feature column(s) %s mapped to 0", np.flatnonzero(const).tolist())
    ok = ~const
    out[:, ok] = 2.0 * (x[:, ok] - lo[ok]) / span[ok] - 1.0
    return np.clip(out, -1.0, 1.0)


def xor(size: int = 4, noise: float = 0.0, seed: int = 0):
    """The four canonical XOR points, cycled to ``size`` rows with optional jitter."""
    idx = np.arange(size) % 4
    x = XOR_POINTS[idx].copy()
    if noise > 0:
        x += noise * np.random.default_rng(seed).standard_normal(x.shape)
    return x, XOR_LABELS[idx].copy()


GENERATORS = ("xor", "two-moons", "gaussian-blobs")

_INT_KEYS = {"n", "n_test", "seed", "classes", "features"}
_FLOAT_KEYS = {"noise"}


def parse_spec(spec: str) -> tuple[str, dict]:
    name, _, rest = spec.partition(":")
    params: dict = {}
    for item in filter(None, rest.split(",")):
        key, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"bad dataset option {item!r} in {spec!r}")
        key = key.strip()
        if key in _INT_KEYS:
            params[key] = int(value)
        elif key in _FLOAT_KEYS:
            params[key] = float(value)
        elif key == "part":
            if value not in ("train", "test", "all"):
                raise ValueError(f"part must be train, test or all, got {value!r}")
            params[key] = value
        else:
            raise ValueError(f"unknown dataset option {key!r}")
    if name not in GENERATORS:
        raise ValueError(f"unknown dataset generator {name!r}")
    return name, params


def generate(name: str, n: int = 200, n_test: int = 0, noise: float = 0.1, seed: int = 0,
             classes: int = 3, features: int = 2, part: str = "train") -> Dataset:
    total = n + n_test
    if name == "xor":
        # already on [-1, 1]; jitter is clipped rather than rescaled
        x, y = xor(total, noise, seed)
        x = np.clip(x, -1.0, 1.0)
    elif name == "two-moons":
        x, y = make_moons(n_samples=total, noise=noise, random_state=seed)
        x = rescale_features(x)
    else:
        x, y = make_blobs(n_samples=total, centers=classes, n_features=features,
                          cluster_std=max(noise, 1e-12), random_state=seed)
        x = rescale_features(x)
    if part == "train":
        x, y = x[:n], y[:n]
    elif part == "test":
        x, y = x[n:], y[n:]
    return Dataset(x, y)


def load_dataset(spec) -> Dataset:
    """Load a dataset from a file path or a generator spec."""
    if isinstance(spec, os.PathLike) or Path(str(spec)).is_file():
        return load_csv(spec)
    name, params = parse_spec(str(spec))
    if name == "xor":
        params.setdefault("n", 4)
        params.setdefault("noise", 0.0)
    return generate(name, **params)


def load_split(spec: str) -> tuple[Dataset, Dataset]:
    """Train and test parts of a generator spec, or the same file twice."""
    if Path(spec).is_file():
        d = load_csv(spec)
        return d, d
    name, params = parse_spec(spec)
    params.pop("part", None)
    if name == "xor":
        params.setdefault("n", 4)
        params.setdefault("noise", 0.0)
        train = generate(name, **params, part="train")
        return train, train
    return generate(name, **params, part="train"), generate(name, **params, part="test")


def load_csv(path, rescale: bool | None = None) -> Dataset:
    """Comma-separated rows, label in the last column.

    Blank lines and ``#`` comments are skipped and an all-text first row is
    taken as a header. Features are rescaled to [-1, 1] unless the file
    carries the marker written by :func:`save_csv`.
    """
    path = Path(path)
    rows, labels = [], []
    scaled = False
    width = None
    seen_data = False
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                if line == SCALED_MARKER:
                    scaled = True
                continue
            fields = [f.strip() for f in line.split(",")]
            if not seen_data and not any(_is_number(f) for f in fields):
                seen_data = True
                continue
            seen_data = True
            if len(fields) < 2:
                raise DatasetParseError(path, lineno, "need at least one feature and a label")
            if width is not None and len(fields) != width:
                raise DatasetParseError(path, lineno, f"expected {width} columns, found {len(fields)}")
            width = len(fields)
            try:
                feats = [float(f) for f in fields[:-1]]
                label = float(fields[-1])
            except ValueError as exc:
                raise DatasetParseError(path, lineno, str(exc)) from None
            if not np.all(np.isfinite(feats)):
                raise DatasetParseError(path, lineno, "non-finite feature")
            if label != int(label) or label < 0:
                raise DatasetParseError(path, lineno, f"label must be a non-negative integer, got {fields[-1]}")
            rows.append(feats)
            labels.append(int(label))
    if not rows:
        raise DatasetParseError(path, 0, "no data rows")
    x = np.array(rows)
    if rescale is None:
        rescale = not scaled
    if rescale:
        x = rescale_features(x)
    return Dataset(x, np.array(labels))


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def save_csv(data: Dataset, path) -> None:
    """Write scaled data so that :func:`load_csv` reads back identical arrays."""
    cols = [f"x{i}" for i in range(data.n_features)] + ["label"]
    lines = [SCALED_MARKER, ",".join(cols)]
    for x, y in zip(data.inputs, data.labels):
        lines.append(",".join([format(v, ".17g") for v in x] + [str(int(y))]))
    Path(path).write_text("\n".join(lines) + "\n")
