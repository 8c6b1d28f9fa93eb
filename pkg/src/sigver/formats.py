"""Binary artifact containers.

Every file starts with a 4-byte magic, a little-endian u32 format version
and the 32-byte SHA-256 digest of the run config that produced it (zeros
when unknown). Floats are little-endian; network weights and features are
32-bit, SVM models keep 64-bit values so decision scores survive a round
trip unchanged.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError
from .nn.network import LayerSpec, Network, NetworkSpec
from .protocol import LABELS, SampleKey
from .svm import SvmModel

VERSION = 1
NETWORK_MAGIC = b"SGNT"
TENSOR_MAGIC = b"SGTN"
FEATURE_MAGIC = b"SGFT"
SVM_MAGIC = b"SGSV"
NO_DIGEST = bytes(32)

_KIND_TAGS = {"conv": 1, "lrn": 2, "maxpool": 3, "fc": 4, "dropout": 5, "relu": 6, "softmax": 7}
_TAG_KINDS = {v: k for k, v in _KIND_TAGS.items()}
_HPARAMS = {
    "conv": ("filters", "size", "stride", "pad"),
    "lrn": ("alpha", "beta", "k", "n"),
    "maxpool": ("size", "stride"),
    "fc": ("units",),
    "dropout": ("p",),
}
_INT_HPARAMS = {"filters", "size", "stride", "pad", "n", "units"}


class _Reader:
    def __init__(self, data: bytes, what: str):
        self.buf = memoryview(data)
        self.pos = 0
        self.what = what

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError(f"{self.what}: truncated file")
        out = bytes(self.buf[self.pos:self.pos + n])
        self.pos += n
        return out

    def unpack(self, fmt: str):
        fmt = "<" + fmt
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def array(self, dtype: str, count: int) -> np.ndarray:
        dt = np.dtype(dtype)
        return np.frombuffer(self.take(dt.itemsize * count), dtype=dt).copy()

    def done(self):
        if self.pos != len(self.buf):
            raise FormatError(f"{self.what}: {len(self.buf) - self.pos} trailing bytes")


def _header(magic: bytes, digest: bytes) -> bytes:
    if len(digest) != 32:
        raise ValueError("config digest must be 32 bytes")
    return magic + struct.pack("<I", VERSION) + digest


def _open(data: bytes, magic: bytes, what: str) -> tuple[_Reader, bytes]:
    r = _Reader(data, what)
    if r.take(4) != magic:
        raise FormatError(f"{what}: bad magic, expected {magic!r}")
    (version,) = r.unpack("I")
    if version != VERSION:
        raise FormatError(f"{what}: unsupported format version {version} (expected {VERSION})")
    return r, r.take(32)


def _f32(a) -> bytes:
    return np.ascontiguousarray(a, dtype="<f4").tobytes()


def dumps_network(net: Network, digest: bytes = NO_DIGEST) -> bytes:
    out = io.BytesIO()
    out.write(_header(NETWORK_MAGIC, digest))
    out.write(struct.pack("<5I", *net.spec.input_shape, net.n_classes, len(net.layers)))
    for layer in net.layers:
        names = _HPARAMS.get(layer.kind, ())
        values = [layer.spec[n] for n in names]
        if layer.kind == "fc":
            values = [layer.out_shape[0]]
        out.write(struct.pack("<BB", _KIND_TAGS[layer.kind], len(values)))
        out.write(struct.pack(f"<{len(values)}d", *values))
        out.write(struct.pack("<B", len(layer.params)))
        for p in layer.params:
            out.write(struct.pack("<B", p.ndim) + struct.pack(f"<{p.ndim}I", *p.shape))
            out.write(_f32(p))
    return out.getvalue()


def loads_network(data: bytes, what: str = "network") -> tuple[Network, bytes]:
    r, digest = _open(data, NETWORK_MAGIC, what)
    c, h, w, n_classes, n_layers = r.unpack("5I")
    specs, tensors = [], []
    for _ in range(n_layers):
        tag, n_h = r.unpack("BB")
        if tag not in _TAG_KINDS:
            raise FormatError(f"{what}: unknown layer tag {tag}")
        kind = _TAG_KINDS[tag]
        values = r.unpack(f"{n_h}d") if n_h else ()
        names = _HPARAMS.get(kind, ())
        if len(names) != n_h:
            raise FormatError(f"{what}: {kind} layer has {n_h} hyperparameters, expected {len(names)}")
        params = {n: (int(v) if n in _INT_HPARAMS else v) for n, v in zip(names, values)}
        specs.append(LayerSpec(kind, params))
        (n_t,) = r.unpack("B")
        layer_tensors = []
        for _ in range(n_t):
            (ndim,) = r.unpack("B")
            shape = r.unpack(f"{ndim}I")
            layer_tensors.append(r.array("<f4", int(np.prod(shape))).reshape(shape).astype(np.float32))
        tensors.append(layer_tensors)
    r.done()
    net = Network(NetworkSpec((c, h, w), tuple(specs)), n_classes, np.float32)
    for layer, ts in zip(net.layers, tensors):
        if [t.shape for t in ts] != [tuple(s) for s in layer.param_shapes]:
            raise FormatError(f"{what}: stored tensor shapes do not match the {layer.kind} layer")
        layer.params = ts
    return net, digest


def dumps_tensor(a: np.ndarray, digest: bytes = NO_DIGEST) -> bytes:
    a = np.asarray(a)
    return _header(TENSOR_MAGIC, digest) + struct.pack("<B", a.ndim) + struct.pack(f"<{a.ndim}I", *a.shape) + _f32(a)


def loads_tensor(data: bytes, what: str = "tensor") -> tuple[np.ndarray, bytes]:
    r, digest = _open(data, TENSOR_MAGIC, what)
    (ndim,) = r.unpack("B")
    shape = r.unpack(f"{ndim}I")
    a = r.array("<f4", int(np.prod(shape))).reshape(shape).astype(np.float32)
    r.done()
    return a, digest


@dataclass
class FeatureSet:
    keys: list[SampleKey]
    vectors: np.ndarray  # (n, dim) float32

    def as_dict(self) -> dict[SampleKey, np.ndarray]:
        return {k: v for k, v in zip(self.keys, self.vectors)}


def dumps_features(fs: FeatureSet, digest: bytes = NO_DIGEST) -> bytes:
    n, dim = fs.vectors.shape
    out = io.BytesIO()
    out.write(_header(FEATURE_MAGIC, digest))
    out.write(struct.pack("<II", dim, n))
    for (user, label, index), v in zip(fs.keys, fs.vectors):
        out.write(struct.pack("<IBI", user, LABELS.index(label), index))
        out.write(_f32(v))
    return out.getvalue()


def loads_features(data: bytes, what: str = "features") -> tuple[FeatureSet, bytes]:
    r, digest = _open(data, FEATURE_MAGIC, what)
    dim, n = r.unpack("II")
    keys, rows = [], []
    for _ in range(n):
        user, label, index = r.unpack("IBI")
        if label >= len(LABELS):
            raise FormatError(f"{what}: bad label code {label}")
        keys.append((user, LABELS[label], index))
        rows.append(r.array("<f4", dim))
    r.done()
    vectors = np.stack(rows).astype(np.float32) if rows else np.zeros((0, dim), np.float32)
    return FeatureSet(keys, vectors), digest


def feature_index_text(fs: FeatureSet) -> str:
    lines = ["#SGFI 1", "row\tuser\tlabel\tindex"]
    lines += [f"{i}\t{u}\t{lab}\t{idx}" for i, (u, lab, idx) in enumerate(fs.keys)]
    return "\n".join(lines) + "\n"


def dumps_svm(model: SvmModel, digest: bytes = NO_DIGEST) -> bytes:
    n_sv = len(model.dual_coef)
    out = io.BytesIO()
    out.write(_header(SVM_MAGIC, digest))
    out.write(struct.pack("<B4dIII", ("linear", "rbf").index(model.kernel), model.C_pos, model.C_neg,
                          model.gamma, model.bias, model.dim, n_sv, model.iterations))
    out.write(np.ascontiguousarray(model.feature_scale, "<f8").tobytes())
    out.write(np.ascontiguousarray(model.support_indices, "<u4").tobytes())
    out.write(np.ascontiguousarray(model.dual_coef, "<f8").tobytes())
    out.write(np.ascontiguousarray(model.support_vectors, "<f8").tobytes())
    return out.getvalue()


def loads_svm(data: bytes, what: str = "svm model") -> tuple[SvmModel, bytes]:
    r, digest = _open(data, SVM_MAGIC, what)
    kernel, C_pos, C_neg, gamma, bias, dim, n_sv, iterations = r.unpack("B4dIII")
    if kernel > 1:
        raise FormatError(f"{what}: unknown kernel code {kernel}")
    scale = r.array("<f8", dim).astype(np.float64)
    idx = r.array("<u4", n_sv).astype(np.int64)
    coef = r.array("<f8", n_sv).astype(np.float64)
    sv = r.array("<f8", n_sv * dim).astype(np.float64).reshape(n_sv, dim)
    r.done()
    model = SvmModel(("linear", "rbf")[kernel], gamma, C_pos, C_neg, sv, coef, bias, scale, idx, iterations)
    return model, digest


def write_bytes(path: Path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)


def read_bytes(path: Path) -> bytes:
    return Path(path).read_bytes()
