"""Quantized feed-forward networks and their accuracy as a fitness signal.

Weight values are always the discrete codebook levels. A stack of genomes
is evaluated with one matrix product per genome; every product has the same
shape and memory layout whatever the stack size, so splitting a population
across workers never changes a single bit of the result.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .quantizer import ActivationQuantizer, Codebook

DENSE = "dense"
CONV2D = "conv2d"
RELU = "relu"
IDENTITY = "identity"


@dataclass(frozen=True)
class LayerSpec:
    """One layer of a feed-forward topology.

    Dense layers use ``in_features``/``out_features``. Conv layers are
    stride-1, "same"-padded cross-correlations over a ``(channels, height,
    width)`` input and use ``in_features``/``out_features`` as channel counts.
    """

    kind: str
    in_features: int
    out_features: int
    activation: str = RELU
    height: int = 1
    width: int = 1
    kernel: int = 1

    def __post_init__(self):
        if self.kind not in (DENSE, CONV2D):
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.activation not in (RELU, IDENTITY):
            raise ValueError(f"unknown activation {self.activation!r}")
        dims = (self.in_features, self.out_features, self.height, self.width, self.kernel)
        if any(int(d) != d or d < 1 for d in dims):
            raise ValueError(f"layer dimensions must be positive integers: {self}")
        if self.kind == CONV2D and self.kernel % 2 == 0:
            raise ValueError("conv2d kernel must be odd for same padding")

    @property
    def weight_shape(self) -> tuple[int, ...]:
        if self.kind == DENSE:
            return (self.in_features, self.out_features)
        return (self.out_features, self.in_features, self.kernel, self.kernel)

    @property
    def n_weights(self) -> int:
        return int(np.prod(self.weight_shape))

    @property
    def n_params(self) -> int:
        return self.n_weights + self.out_features

    @property
    def input_size(self) -> int:
        if self.kind == DENSE:
            return self.in_features
        return self.in_features * self.height * self.width

    @property
    def output_size(self) -> int:
        if self.kind == DENSE:
            return self.out_features
        return self.out_features * self.height * self.width


def dense(in_features: int, out_features: int, activation: str = RELU) -> LayerSpec:
    return LayerSpec(DENSE, in_features, out_features, activation)


def mlp(sizes: Sequence[int]) -> tuple[LayerSpec, ...]:
    """Dense stack with relu hidden layers and an identity output layer."""
    if len(sizes) < 2:
        raise ValueError("an MLP needs at least input and output sizes")
    layers = []
    for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        act = IDENTITY if i == len(sizes) - 2 else RELU
        layers.append(dense(a, b, act))
    return tuple(layers)


def validate_topology(layers: Sequence[LayerSpec]) -> None:
    if len(layers) == 0:
        raise ValueError("a network needs at least one layer")
    for prev, cur in zip(layers[:-1], layers[1:]):
        if prev.output_size != cur.input_size:
            raise ValueError(
                f"layer output size {prev.output_size} does not match next input size {cur.input_size}"
            )
        if cur.kind == CONV2D and prev.kind == CONV2D and (prev.height, prev.width) != (cur.height, cur.width):
            raise ValueError("consecutive conv2d layers must share spatial size")
    for layer in layers[:-1]:
        if layer.activation != RELU:
            raise ValueError("hidden layers must use relu")
    if layers[-1].activation != IDENTITY:
        raise ValueError("the output layer must be identity")


def count_params(layers: Sequence[LayerSpec]) -> int:
    """Total weights plus biases."""
    if len(layers) == 0:
        raise ValueError("a network needs at least one layer")
    return sum(layer.n_params for layer in layers)


def layer_offsets(layers: Sequence[LayerSpec]) -> np.ndarray:
    """Start offset of each layer's parameters in the flat vector, plus the total."""
    return np.concatenate([[0], np.cumsum([layer.n_params for layer in layers])]).astype(np.int64)


@dataclass(frozen=True)
class QuantNetwork:
    """Topology plus one code per parameter; values come from per-layer codebooks."""

    layers: tuple[LayerSpec, ...]
    codebooks: tuple[Codebook, ...]
    codes: np.ndarray = field(repr=False)
    activation: ActivationQuantizer

    def __post_init__(self):
        validate_topology(self.layers)
        if len(self.codebooks) != len(self.layers):
            raise ValueError("need exactly one codebook per layer")
        codes = np.ascontiguousarray(self.codes, dtype=np.int64)
        offs = layer_offsets(self.layers)
        if codes.shape != (offs[-1],):
            raise ValueError(f"expected {offs[-1]} codes, got shape {codes.shape}")
        for l, cb in enumerate(self.codebooks):
            seg = codes[offs[l]:offs[l + 1]]
            if seg.size and (seg.min() < 0 or seg.max() >= len(cb)):
                raise ValueError(f"layer {l} has codes outside its codebook")
        codes.setflags(write=False)
        object.__setattr__(self, "codes", codes)

    @property
    def n_params(self) -> int:
        return int(self.codes.size)

    def values(self) -> np.ndarray:
        """Decoded flat parameter vector."""
        offs = layer_offsets(self.layers)
        out = np.empty(self.n_params)
        for l, cb in enumerate(self.codebooks):
            out[offs[l]:offs[l + 1]] = cb.levels[self.codes[offs[l]:offs[l + 1]]]
        return out

    def position_codebook_sizes(self) -> np.ndarray:
        offs = layer_offsets(self.layers)
        return np.repeat([len(cb) for cb in self.codebooks], np.diff(offs))

    def with_codes(self, codes) -> "QuantNetwork":
        return QuantNetwork(self.layers, self.codebooks, np.asarray(codes), self.activation)

    def __eq__(self, other):
        if not isinstance(other, QuantNetwork):
            return NotImplemented
        return (
            self.layers == other.layers
            and self.codebooks == other.codebooks
            and self.activation == other.activation
            and np.array_equal(self.codes, other.codes)
        )

    __hash__ = None


@dataclass(frozen=True)
class Dataset:
    """Examples with features pre-scaled to [-1, 1] and integer labels."""

    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        x = np.ascontiguousarray(self.inputs, dtype=np.float64)
        y = np.ascontiguousarray(self.labels, dtype=np.int64)
        if x.ndim != 2:
            raise ValueError("inputs must be a 2-D matrix")
        if y.shape != (x.shape[0],):
            raise ValueError("labels must be a vector with one entry per input row")
        if y.size and y.min() < 0:
            raise ValueError("labels must be non-negative class indices")
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "labels", y)

    def __len__(self):
        return self.labels.size

    @property
    def n_features(self) -> int:
        return self.inputs.shape[1]


@dataclass(frozen=True)
class SearchDomain:
    """Allowed codes per parameter.

    ``candidates`` is an ``(n, m)`` matrix padded with -1 past ``sizes[i]``;
    each row's valid prefix is sorted ascending with no duplicates.
    """

    candidates: np.ndarray = field(repr=False)
    sizes: np.ndarray = field(repr=False)

    def __post_init__(self):
        cand = np.ascontiguousarray(self.candidates, dtype=np.int64)
        sizes = np.ascontiguousarray(self.sizes, dtype=np.int64)
        if cand.ndim != 2 or sizes.shape != (cand.shape[0],):
            raise ValueError("candidates must be (n, m) with one size per row")
        if sizes.size and (sizes.min() < 2 or sizes.max() > cand.shape[1]):
            raise ValueError("every parameter needs at least two candidates")
        valid = np.arange(cand.shape[1])[None, :] < sizes[:, None]
        if np.any(cand[valid] < 0):
            raise ValueError("candidate codes must be non-negative")
        d = np.diff(np.where(valid, cand, np.iinfo(np.int64).max), axis=1)
        if np.any(d[valid[:, 1:]] <= 0):
            raise ValueError("candidate rows must be strictly ascending")
        cand = np.where(valid, cand, -1)
        cand.setflags(write=False)
        sizes.setflags(write=False)
        object.__setattr__(self, "candidates", cand)
        object.__setattr__(self, "sizes", sizes)

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[int]]) -> "SearchDomain":
        m = max(len(r) for r in rows)
        cand = np.full((len(rows), m), -1, dtype=np.int64)
        for i, r in enumerate(rows):
            cand[i, : len(r)] = r
        return cls(cand, np.array([len(r) for r in rows]))

    @classmethod
    def full(cls, net: QuantNetwork) -> "SearchDomain":
        """Every codebook level is a candidate for every parameter."""
        sizes = net.position_codebook_sizes()
        m = int(sizes.max())
        cand = np.tile(np.arange(m, dtype=np.int64), (sizes.size, 1))
        return cls(cand, sizes)

    @property
    def n(self) -> int:
        return int(self.sizes.size)

    def rows(self) -> list[list[int]]:
        return [self.candidates[i, : self.sizes[i]].tolist() for i in range(self.n)]

    def check_genome(self, genome) -> np.ndarray:
        g = np.asarray(genome)
        if g.ndim != 1 or g.size != self.n:
            raise ValueError(f"genome length {g.size} does not match domain size {self.n}")
        if not np.issubdtype(g.dtype, np.integer):
            raise ValueError("genome entries must be integers")
        if np.any(g < 0) or np.any(g >= self.sizes):
            raise ValueError("genome choice outside its candidate set")
        return g.astype(np.int64)

    def check_network(self, net: QuantNetwork) -> None:
        if net.n_params != self.n:
            raise ValueError(f"domain covers {self.n} parameters, network has {net.n_params}")
        if np.any(self.candidates.max(axis=1) >= net.position_codebook_sizes()):
            raise ValueError("domain holds codes outside the network's codebooks")


def decode_genomes(domain: SearchDomain, genomes: np.ndarray) -> np.ndarray:
    """Map choice indices to codes; works on one genome or a stack of them."""
    genomes = np.asarray(genomes)
    return domain.candidates[np.arange(domain.n), genomes]


def apply_genome(domain: SearchDomain, genome, net: QuantNetwork) -> QuantNetwork:
    """New network whose code ``i`` is ``candidates[i][genome[i]]``."""
    domain.check_network(net)
    g = domain.check_genome(genome)
    return net.with_codes(decode_genomes(domain, g))


def extract_genome(domain: SearchDomain, net: QuantNetwork) -> np.ndarray:
    """Inverse of :func:`apply_genome`; fails if a code is not a candidate."""
    domain.check_network(net)
    hits = domain.candidates == net.codes[:, None]
    if not np.all(hits.any(axis=1)):
        bad = int(np.flatnonzero(~hits.any(axis=1))[0])
        raise ValueError(f"code at position {bad} is not among its candidates")
    return hits.argmax(axis=1).astype(np.int64)


# -- forward pass ---------------------------------------------------------


def _dense_forward(x, w, b):
    # x (P, B, in) or (1, B, in); w (P, in, out); b (P, out)
    return np.matmul(x, w) + b[:, None, :]


def _conv_forward(x, w, b, layer):
    # x (P, B, C, H, W); w (P, O, C, K, K); b (P, O)
    # accumulated term by term in a fixed (c, dy, dx) order
    k, h, wd = layer.kernel, layer.height, layer.width
    pad = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (0, 0), (pad, pad), (pad, pad)))
    acc = np.zeros((w.shape[0], x.shape[1], w.shape[1], h, wd))
    for c in range(w.shape[2]):
        for dy in range(k):
            for dx in range(k):
                patch = xp[:, :, c, None, dy:dy + h, dx:dx + wd]
                acc += patch * w[:, None, :, c, dy, dx, None, None]
    acc += b[:, None, :, None, None]
    return acc


def forward_values(layers, params, act: ActivationQuantizer, batch, trace=None):
    """Forward pass for a stack of decoded parameter vectors.

    ``params`` is ``(P, n)``; returns logits ``(P, B, classes)``. If ``trace``
    is a list, every quantized hidden activation array is appended to it.
    """
    params = np.atleast_2d(params)
    x = np.asarray(batch, dtype=np.float64)[None]
    offs = layer_offsets(layers)
    pop = params.shape[0]
    for l, layer in enumerate(layers):
        seg = params[:, offs[l]:offs[l + 1]]
        w = seg[:, : layer.n_weights].reshape((pop,) + layer.weight_shape)
        b = seg[:, layer.n_weights:]
        if layer.kind == DENSE:
            x = x.reshape(x.shape[0], x.shape[1], -1)
            x = _dense_forward(x, w, b)
        else:
            x = x.reshape(x.shape[0], x.shape[1], layer.in_features, layer.height, layer.width)
            x = _conv_forward(x, w, b, layer)
        if layer.activation == RELU:
            x = act.quantize_relu(x)
            if trace is not None:
                trace.append(x)
    return x.reshape(x.shape[0], x.shape[1], -1)


def forward(net: QuantNetwork, batch, trace=None) -> np.ndarray:
    """Logits ``(B, classes)`` of the quantized network on ``batch``."""
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[1] != net.layers[0].input_size:
        raise ValueError(
            f"batch must be (B, {net.layers[0].input_size}), got shape {batch.shape}"
        )
    if not np.all(np.isfinite(batch)):
        raise ValueError("non-finite input")
    return forward_values(net.layers, net.values()[None], net.activation, batch, trace)[0]


def accuracy_from_logits(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Fraction of rows whose argmax (first on ties) equals the label."""
    pred = np.argmax(logits, axis=-1)
    return np.mean(pred == labels, axis=-1)


def _check_data(layers, data: Dataset):
    if len(data) == 0:
        raise ValueError("empty dataset")
    if data.n_features != layers[0].input_size:
        raise ValueError(f"dataset has {data.n_features} features, network expects {layers[0].input_size}")
    if data.labels.max() >= layers[-1].output_size:
        raise ValueError("label exceeds the network's class count")


def fitness(net: QuantNetwork, data: Dataset) -> float:
    """Classification accuracy in [0, 1]."""
    _check_data(net.layers, data)
    return float(accuracy_from_logits(forward(net, data.inputs), data.labels))


class NetworkFitness:
    """Genome -> accuracy for a fixed network, domain and dataset.

    Holds only codes and codebook levels. Call with one genome or use
    :meth:`batch` with a ``(P, n)`` stack; both give identical numbers.
    """

    def __init__(self, net: QuantNetwork, domain: SearchDomain, data: Dataset):
        domain.check_network(net)
        _check_data(net.layers, data)
        self.layers = net.layers
        self.activation = net.activation
        self.domain = domain
        self.data = data
        pos_levels = []
        offs = layer_offsets(net.layers)
        for l, cb in enumerate(net.codebooks):
            cand = domain.candidates[offs[l]:offs[l + 1]]
            pos_levels.append(cb.levels[np.maximum(cand, 0)])
        # value of candidate j at position i
        self.candidate_values = np.concatenate(pos_levels, axis=0)

    def batch(self, genomes) -> np.ndarray:
        genomes = np.atleast_2d(np.asarray(genomes))
        params = self.candidate_values[np.arange(self.domain.n), genomes]
        logits = forward_values(self.layers, params, self.activation, self.data.inputs)
        return accuracy_from_logits(logits, self.data.labels)

    def __call__(self, genome) -> float:
        return float(self.batch(np.asarray(genome)[None])[0])
