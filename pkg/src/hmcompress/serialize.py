"""
Binary containers.

HMX1 (one H-matrix), little-endian::

    b"HMX1"
    rows u64, cols u64, tol f64, min_block u64, max_depth u64
    preorder nodes:
        tag u8 (0 = branch, 1 = low-rank, 2 = dense),
        row_start u64, row_stop u64, col_start u64, col_stop u64
        branch:   the four children, row-major quadrant order
        low-rank: local_error f64, rank u64, U (len u64 + f64[]), V (len u64 + f64[])
        dense:    block (len u64 + f64[])

HMXN (a network)::

    b"HMXN", n_layers u64, then per layer
        rows u64, cols u64, weight_kind u8 (0 = dense, 1 = HMX1)
        dense: f64[rows*cols]   HMX1: len u64 + blob
        bias: len u64 + f64[]
        activation u8 (0 = identity, 1 = tanh)

Arrays are stored row-major; round trips are bit-exact.
"""
import io
import struct

import numpy as np

from .hmatrix import BlockNode, BuildConfig, HMatrix, LowRankFactor
from .nn import Layer, Network

__all__ = [
    "dump_hmatrix",
    "load_hmatrix",
    "dump_network",
    "load_network",
    "save_hmatrix",
    "read_hmatrix",
    "save_network",
    "read_network",
]

_TAGS = {"branch": 0, "lowrank": 1, "dense": 2}
_KINDS = {v: k for k, v in _TAGS.items()}
_ACT = {"identity": 0, "tanh": 1}
_ACT_NAMES = {v: k for k, v in _ACT.items()}


def _u64(buf, v):
    buf.write(struct.pack("<Q", int(v)))


def _f64(buf, v):
    buf.write(struct.pack("<d", float(v)))


def _array(buf, a):
    a = np.ascontiguousarray(a, dtype="<f8")
    _u64(buf, a.size)
    buf.write(a.tobytes())


class _Reader:
    def __init__(self, data):
        self.data = memoryview(data)
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise ValueError("truncated container")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u8(self):
        return self.take(1)[0]

    def u64(self):
        return struct.unpack("<Q", self.take(8))[0]

    def f64(self):
        return struct.unpack("<d", self.take(8))[0]

    def array(self, shape=None):
        n = self.u64()
        a = np.frombuffer(self.take(8 * n), dtype="<f8").astype(np.float64)
        return a if shape is None else a.reshape(shape)


def _write_node(buf, node):
    buf.write(bytes([_TAGS[node.kind]]))
    for v in (*node.row_span, *node.col_span):
        _u64(buf, v)
    if node.kind == "branch":
        for child in node.children:
            _write_node(buf, child)
    elif node.kind == "lowrank":
        f = node.factor
        _f64(buf, f.local_error)
        _u64(buf, f.rank)
        _array(buf, f.U)
        _array(buf, f.V)
    else:
        _array(buf, node.block)


def _read_node(r, level=0):
    tag = r.u8()
    if tag not in _KINDS:
        raise ValueError(f"bad node tag {tag}")
    kind = _KINDS[tag]
    rows = (r.u64(), r.u64())
    cols = (r.u64(), r.u64())
    m, n = rows[1] - rows[0], cols[1] - cols[0]
    if kind == "branch":
        children = tuple(_read_node(r, level + 1) for _ in range(4))
        return BlockNode(rows, cols, kind, level, children=children)
    if kind == "lowrank":
        err = r.f64()
        k = r.u64()
        U = r.array((m, k))
        V = r.array((n, k))
        return BlockNode(rows, cols, kind, level, factor=LowRankFactor(U, V, err))
    return BlockNode(rows, cols, kind, level, block=r.array((m, n)))


def dump_hmatrix(H):
    buf = io.BytesIO()
    buf.write(b"HMX1")
    m, n = H.shape
    _u64(buf, m)
    _u64(buf, n)
    _f64(buf, H.tol)
    _u64(buf, H.config.min_block)
    _u64(buf, H.config.max_depth)
    _write_node(buf, H.root)
    return buf.getvalue()


def _load_hmatrix(r):
    if bytes(r.take(4)) != b"HMX1":
        raise ValueError("not an HMX1 container")
    m, n = r.u64(), r.u64()
    tol = r.f64()
    cfg = BuildConfig(tol, min_block=r.u64(), max_depth=r.u64())
    root = _read_node(r)
    if root.shape != (m, n):
        raise ValueError("root span does not match the header dimensions")
    return HMatrix(root, tol, cfg)


def load_hmatrix(data):
    r = _Reader(data)
    H = _load_hmatrix(r)
    if r.pos != len(r.data):
        raise ValueError("trailing bytes after HMX1 container")
    return H


def dump_network(net):
    buf = io.BytesIO()
    buf.write(b"HMXN")
    _u64(buf, len(net.layers))
    for layer in net.layers:
        m, n = layer.shape
        _u64(buf, m)
        _u64(buf, n)
        if layer.is_dense:
            buf.write(b"\x00")
            buf.write(np.ascontiguousarray(layer.weight, dtype="<f8").tobytes())
        else:
            buf.write(b"\x01")
            blob = dump_hmatrix(layer.weight)
            _u64(buf, len(blob))
            buf.write(blob)
        _array(buf, layer.bias)
        buf.write(bytes([_ACT[layer.activation]]))
    return buf.getvalue()


def load_network(data):
    r = _Reader(data)
    if bytes(r.take(4)) != b"HMXN":
        raise ValueError("not an HMXN container")
    layers = []
    for _ in range(r.u64()):
        m, n = r.u64(), r.u64()
        kind = r.u8()
        if kind == 0:
            W = np.frombuffer(r.take(8 * m * n), dtype="<f8").astype(np.float64).reshape(m, n)
        elif kind == 1:
            W = load_hmatrix(bytes(r.take(r.u64())))
        else:
            raise ValueError(f"bad weight kind {kind}")
        b = r.array()
        layers.append(Layer(W, b, _ACT_NAMES[r.u8()]))
    if r.pos != len(r.data):
        raise ValueError("trailing bytes after HMXN container")
    return Network(layers)


def save_hmatrix(path, H):
    with open(path, "wb") as fh:
        fh.write(dump_hmatrix(H))


def read_hmatrix(path):
    with open(path, "rb") as fh:
        return load_hmatrix(fh.read())


def save_network(path, net):
    with open(path, "wb") as fh:
        fh.write(dump_network(net))


def read_network(path):
    with open(path, "rb") as fh:
        return load_network(fh.read())
