"""One-hidden-layer perceptron with hand-written backprop and plain SGD.

Parameter file format (little-endian):

    b"MLP1"                 4-byte magic
    uint64 n                number of layer dims (always 3)
    int64[n]                dims (input, hidden, output)
    float64[...]            W1 (input x hidden), b1, W2 (hidden x output), b2,
                            each row-major, concatenated in that order
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

PARAM_NAMES = ("W1", "b1", "W2", "b2")
_MAGIC = b"MLP1"


class ShapeMismatch(ValueError):
    pass


@dataclass
class ForwardTrace:
    x: np.ndarray
    z1: np.ndarray
    h: np.ndarray


class Mlp:
    def __init__(self, W1, b1, W2, b2):
        self.W1, self.b1, self.W2, self.b2 = (np.asarray(p, dtype=np.float64) for p in (W1, b1, W2, b2))
        if self.W1.shape[1] != self.b1.shape[0] or self.W2.shape != (self.b1.shape[0], self.b2.shape[0]):
            raise ShapeMismatch("layer shapes do not chain")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.W1.shape[0], self.W1.shape[1], self.W2.shape[1]

    def params(self) -> dict:
        return {k: getattr(self, k) for k in PARAM_NAMES}

    def copy(self) -> "Mlp":
        return Mlp(*(p.copy() for p in (self.W1, self.b1, self.W2, self.b2)))

    def load_from(self, other: "Mlp"):
        for k in PARAM_NAMES:
            getattr(self, k)[...] = getattr(other, k)

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        if x.shape[1] != self.W1.shape[0]:
            raise ShapeMismatch(f"input dim {x.shape[1]} != {self.W1.shape[0]}")
        z1 = x @ self.W1 + self.b1
        h = np.maximum(z1, 0.0)
        return h @ self.W2 + self.b2, ForwardTrace(x, z1, h)

    def __call__(self, x) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, trace: ForwardTrace, dout) -> dict:
        dout = np.asarray(dout, dtype=np.float64)
        if dout.ndim == 1:
            dout = dout[None, :]
        if dout.shape != (trace.h.shape[0], self.W2.shape[1]):
            raise ShapeMismatch(f"output gradient shape {dout.shape} does not match trace")
        dW2 = trace.h.T @ dout
        db2 = dout.sum(axis=0)
        dz1 = (dout @ self.W2.T) * (trace.z1 > 0)
        dW1 = trace.x.T @ dz1
        db1 = dz1.sum(axis=0)
        return {"W1": dW1, "b1": db1, "W2": dW2, "b2": db2}

    def sgd_step(self, grads: dict, lr: float):
        for k in PARAM_NAMES:
            p = getattr(self, k)
            if grads[k].shape != p.shape:
                raise ShapeMismatch(f"gradient for {k} has shape {grads[k].shape}, expected {p.shape}")
        for k in PARAM_NAMES:
            getattr(self, k)[...] -= lr * grads[k]

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<Q", 3))
            fh.write(np.asarray(self.dims, dtype="<i8").tobytes())
            for k in PARAM_NAMES:
                fh.write(np.ascontiguousarray(getattr(self, k), dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "Mlp":
        with open(path, "rb") as fh:
            raw = fh.read()
        if raw[:4] != _MAGIC:
            raise ValueError("not an MLP parameter file")
        (n,) = struct.unpack_from("<Q", raw, 4)
        dims = np.frombuffer(raw, dtype="<i8", count=n, offset=12)
        d_in, d_h, d_out = (int(d) for d in dims)
        flat = np.frombuffer(raw, dtype="<f8", offset=12 + 8 * n).astype(np.float64)
        shapes = [(d_in, d_h), (d_h,), (d_h, d_out), (d_out,)]
        out, pos = [], 0
        for shp in shapes:
            size = int(np.prod(shp))
            out.append(flat[pos:pos + size].reshape(shp).copy())
            pos += size
        if pos != flat.size:
            raise ValueError("parameter file has trailing or missing data")
        return cls(*out)


def init_mlp(rng: np.random.Generator, dims) -> Mlp:
    """Glorot-uniform weights, zero biases."""
    d_in, d_h, d_out = dims
    if min(dims) < 1:
        raise ValueError(f"layer dims must be >= 1, got {dims}")

    def glorot(fan_in, fan_out):
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-lim, lim, size=(fan_in, fan_out))

    return Mlp(glorot(d_in, d_h), np.zeros(d_h), glorot(d_h, d_out), np.zeros(d_out))


def masked_softmax(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Row-wise softmax with masked slots forced to probability exactly 0."""
    z = np.where(mask, logits, -np.inf)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)
