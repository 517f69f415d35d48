"""Initial quantized solutions: per-layer quantization plus the switch-s% perturbation."""

from __future__ import annotations

import logging
import math

import numpy as np

from ..qnet import QuantNetwork, SearchDomain, extract_genome, layer_offsets
from ..quantizer import ActivationQuantizer, LayerRange, build_codebook, quantize_codes
from .floatnet import FloatNetwork

log = logging.getLogger(__name__)


def layer_range(values: np.ndarray) -> LayerRange:
    lo, hi = float(values.min()), float(values.max())
    if lo == hi:
        margin = max(abs(lo), 1.0) * np.finfo(np.float64).eps * 16
        log.warning("degenerate weight range at %r; widened by %g", lo, margin)
        lo, hi = lo - margin, hi + margin
    return LayerRange(lo, hi)


def quantize_network(fnet: FloatNetwork, k: int, activation_bits: int | None = None) -> QuantNetwork:
    """Quantize every layer (weights and biases together) onto its own k-bit codebook."""
    offs = layer_offsets(fnet.layers)
    codebooks, codes = [], []
    for l in range(len(fnet.layers)):
        values = fnet.weights[offs[l]:offs[l + 1]]
        cb = build_codebook(layer_range(values), k)
        codebooks.append(cb)
        codes.append(quantize_codes(values, cb))
    act = ActivationQuantizer(k if activation_bits is None else activation_bits)
    return QuantNetwork(fnet.layers, tuple(codebooks), np.concatenate(codes), act)


def _neighbor(codes, sizes, rng):
    """One adjacent code per position, direction uniform, forced inward at the ends."""
    step = np.where(rng.random(codes.size) < 0.5, -1, 1)
    step = np.where(codes == 0, 1, step)
    step = np.where(codes == sizes - 1, -1, step)
    return codes + step


def switch_perturb(net: QuantNetwork, s: float, seed: int) -> tuple[QuantNetwork, SearchDomain]:
    """Move ``floor(s * n)`` random codes to an adjacent level and build a binary domain.

    Perturbed positions may choose between their original and perturbed code.
    Every other position gets its current code and one random neighbor.
    """
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"switch fraction must be in [0, 1], got {s}")
    rng = np.random.default_rng([int(seed), 11])
    n = net.n_params
    sizes = net.position_codebook_sizes()
    count = int(math.floor(s * n))
    chosen = np.zeros(n, dtype=bool)
    chosen[rng.choice(n, size=count, replace=False)] = True
    neighbor = _neighbor(net.codes, sizes, rng)
    new_codes = np.where(chosen, neighbor, net.codes)
    pair = np.stack([net.codes, neighbor], axis=1)
    domain = SearchDomain(np.sort(pair, axis=1), np.full(n, 2))
    return net.with_codes(new_codes), domain


def initial_genome(net: QuantNetwork, domain: SearchDomain) -> np.ndarray:
    return extract_genome(domain, net)
