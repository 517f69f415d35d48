"""On-disk formats for networks, search domains and configs.

Network files come in two variants with the same content:

Text (any extension other than ``.qnetb``/``.fnetb``): a JSON document::

    {"format": "ccquant-network", "version": 1, "kind": "quantized" | "float",
     "layers": [{layer fields}, ...],
     "activation_bits": k,                               # quantized only
     "params": [{"bits", "w_min", "w_max", "codes"}]     # quantized, per layer
     "params": [[float, ...], ...]}                      # float, per layer

Floats are written with ``repr`` precision so a save/load round trip is exact.

Binary (``.qnetb``/``.fnetb``), all integers and floats little-endian::

    magic   4s   b"CCQN"
    version u16  1
    kind    u8   0 = float, 1 = quantized
    abits   u8   activation bits (0 for float)
    nlayers u32
    per layer:  kind u8 (0 dense, 1 conv2d), activation u8 (0 relu, 1 identity),
                in, out, height, width, kernel  (u32 each)
    per layer, quantized:  bits u8, w_min f64, w_max f64, count u32, codes u32[count]
    per layer, float:      count u32, values f64[count]
"""

from __future__ import annotations

import dataclasses
import json
import struct
from pathlib import Path

import numpy as np

from ..qnet import CONV2D, DENSE, IDENTITY, RELU, LayerSpec, QuantNetwork, SearchDomain, layer_offsets
from ..quantizer import ActivationQuantizer, LayerRange, build_codebook
from .floatnet import FloatNetwork

FORMAT = "ccquant-network"
VERSION = 1
MAGIC = b"CCQN"
BINARY_SUFFIXES = (".qnetb", ".fnetb")

_KINDS = (DENSE, CONV2D)
_ACTS = (RELU, IDENTITY)


def _layer_dict(layer: LayerSpec) -> dict:
    return dataclasses.asdict(layer)


def _network_doc(net) -> dict:
    doc = {"format": FORMAT, "version": VERSION}
    offs = layer_offsets(net.layers)
    if isinstance(net, QuantNetwork):
        doc["kind"] = "quantized"
        doc["layers"] = [_layer_dict(l) for l in net.layers]
        doc["activation_bits"] = net.activation.bits
        doc["params"] = [
            {
                "bits": cb.bits,
                "w_min": cb.range.w_min,
                "w_max": cb.range.w_max,
                "codes": net.codes[offs[l]:offs[l + 1]].tolist(),
            }
            for l, cb in enumerate(net.codebooks)
        ]
    elif isinstance(net, FloatNetwork):
        doc["kind"] = "float"
        doc["layers"] = [_layer_dict(l) for l in net.layers]
        doc["params"] = [net.weights[offs[l]:offs[l + 1]].tolist() for l in range(len(net.layers))]
    else:
        raise TypeError(f"cannot serialize {type(net).__name__}")
    return doc


def _network_from_doc(doc: dict, path):
    if doc.get("format") != FORMAT:
        raise ValueError(f"{path}: not a network file")
    if doc.get("version") != VERSION:
        raise ValueError(f"{path}: unsupported network file version {doc.get('version')}")
    layers = tuple(LayerSpec(**d) for d in doc["layers"])
    if doc["kind"] == "quantized":
        codebooks, codes = [], []
        for p in doc["params"]:
            codebooks.append(build_codebook(LayerRange(p["w_min"], p["w_max"]), p["bits"]))
            codes.extend(p["codes"])
        return QuantNetwork(layers, tuple(codebooks), np.array(codes, dtype=np.int64),
                            ActivationQuantizer(doc["activation_bits"]))
    if doc["kind"] == "float":
        return FloatNetwork(layers, np.concatenate([np.asarray(p, dtype=np.float64) for p in doc["params"]]))
    raise ValueError(f"{path}: unknown network kind {doc['kind']!r}")


def _write_binary(net, fh) -> None:
    quant = isinstance(net, QuantNetwork)
    abits = net.activation.bits if quant else 0
    fh.write(struct.pack("<4sHBBI", MAGIC, VERSION, int(quant), abits, len(net.layers)))
    for layer in net.layers:
        fh.write(struct.pack("<BB5I", _KINDS.index(layer.kind), _ACTS.index(layer.activation),
                             layer.in_features, layer.out_features, layer.height, layer.width, layer.kernel))
    offs = layer_offsets(net.layers)
    for l in range(len(net.layers)):
        if quant:
            cb = net.codebooks[l]
            seg = net.codes[offs[l]:offs[l + 1]]
            fh.write(struct.pack("<BddI", cb.bits, cb.range.w_min, cb.range.w_max, seg.size))
            fh.write(seg.astype("<u4").tobytes())
        else:
            seg = net.weights[offs[l]:offs[l + 1]]
            fh.write(struct.pack("<I", seg.size))
            fh.write(seg.astype("<f8").tobytes())


def _read_exact(fh, size, path):
    data = fh.read(size)
    if len(data) != size:
        raise ValueError(f"{path}: truncated network file")
    return data


def _read_binary(fh, path):
    magic, version, quant, abits, nlayers = struct.unpack("<4sHBBI", _read_exact(fh, 12, path))
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise ValueError(f"{path}: unsupported network file version {version}")
    layers = []
    for _ in range(nlayers):
        kind, act, *dims = struct.unpack("<BB5I", _read_exact(fh, 22, path))
        layers.append(LayerSpec(_KINDS[kind], dims[0], dims[1], _ACTS[act], dims[2], dims[3], dims[4]))
    layers = tuple(layers)
    if quant:
        codebooks, codes = [], []
        for _ in layers:
            bits, lo, hi, count = struct.unpack("<BddI", _read_exact(fh, 21, path))
            codebooks.append(build_codebook(LayerRange(lo, hi), bits))
            codes.append(np.frombuffer(_read_exact(fh, 4 * count, path), dtype="<u4").astype(np.int64))
        return QuantNetwork(layers, tuple(codebooks), np.concatenate(codes), ActivationQuantizer(abits))
    values = []
    for _ in layers:
        (count,) = struct.unpack("<I", _read_exact(fh, 4, path))
        values.append(np.frombuffer(_read_exact(fh, 8 * count, path), dtype="<f8").astype(np.float64))
    return FloatNetwork(layers, np.concatenate(values))


def save_network(net, path, binary: bool | None = None) -> None:
    path = Path(path)
    if binary is None:
        binary = path.suffix in BINARY_SUFFIXES
    if binary:
        with open(path, "wb") as fh:
            _write_binary(net, fh)
    else:
        path.write_text(json.dumps(_network_doc(net), indent=1) + "\n")


def load_network(path):
    """Load a quantized or float network from either file variant."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(4)
        fh.seek(0)
        if head == MAGIC:
            return _read_binary(fh, path)
    try:
        doc = json.loads(path.read_text())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ValueError(f"{path}: unreadable network file ({exc})") from None
    return _network_from_doc(doc, path)


def save_domain(domain: SearchDomain, path) -> None:
    doc = {"format": "ccquant-domain", "version": 1, "candidates": domain.rows()}
    Path(path).write_text(json.dumps(doc) + "\n")


def load_domain(path) -> SearchDomain:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != "ccquant-domain" or doc.get("version") != 1:
        raise ValueError(f"{path}: not a version-1 domain file")
    return SearchDomain.from_rows(doc["candidates"])


def save_genome(genome, path) -> None:
    Path(path).write_text(" ".join(map(str, np.asarray(genome).tolist())) + "\n")


def load_genome(path) -> np.ndarray:
    return np.array(Path(path).read_text().split(), dtype=np.int64)
