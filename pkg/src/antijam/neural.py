"""Small ReLU value networks with point and interval (box) passes.

Everything is batched over the leading axis and computed in float64.
Weights are stored ``(out, in)`` so a layer computes ``x @ W.T + b``.

Interval propagation uses the centre/radius form of sign-aware interval
arithmetic::

    mu  = W @ c + b          c = (low + high) / 2
    rad = |W| @ r            r = (high - low) / 2
    low', high' = mu - rad, mu + rad

which equals ``W+ @ low + W- @ high + b`` / ``W+ @ high + W- @ low + b``
and collapses bit-exactly onto the point pass when ``r = 0``.

Checkpoint layout (all little-endian)::

    bytes 0..3    magic  b"QNET"
    uint32        format version (1)
    uint32        L, number of affine layers
    uint32 x L+1  layer widths, input first
    then for each layer: W as float64 row-major (out x in), b as float64 (out)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"QNET"
FORMAT_VERSION = 1


_EPS = np.finfo(float).eps


class TrainingError(RuntimeError):
    """Non-finite gradient or loss during an update."""


@dataclass
class IntervalVector:
    low: np.ndarray
    high: np.ndarray

    def __post_init__(self):
        self.low = np.asarray(self.low, dtype=float)
        self.high = np.asarray(self.high, dtype=float)
        if self.low.shape != self.high.shape:
            raise ValueError("low/high shapes differ")
        if np.any(self.low > self.high):
            raise ValueError("interval with low > high")

    @classmethod
    def around(cls, x, radius) -> "IntervalVector":
        x = np.asarray(x, dtype=float)
        return cls(x - radius, x + radius)

    @property
    def width(self) -> np.ndarray:
        return self.high - self.low


@dataclass
class GradientBundle:
    weights: list
    biases: list
    dx: np.ndarray | None = None

    def global_norm(self) -> float:
        total = sum(float(np.sum(w * w)) for w in self.weights)
        total += sum(float(np.sum(b * b)) for b in self.biases)
        return float(np.sqrt(total))

    def scaled(self, s: float) -> "GradientBundle":
        return GradientBundle([w * s for w in self.weights], [b * s for b in self.biases],
                              None if self.dx is None else self.dx * s)

    def __add__(self, other: "GradientBundle") -> "GradientBundle":
        dx = None
        if self.dx is not None and other.dx is not None:
            dx = self.dx + other.dx
        return GradientBundle([a + b for a, b in zip(self.weights, other.weights)],
                              [a + b for a, b in zip(self.biases, other.biases)], dx)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(w)) for w in self.weights) and \
            all(np.all(np.isfinite(b)) for b in self.biases)


@dataclass
class _PointCache:
    acts: list          # input of each layer
    pre: list           # pre-activation of each hidden layer


@dataclass
class _IntervalCache:
    centers: list
    radii: list
    lows: list = field(default_factory=list)     # pre-activation bounds, hidden layers
    highs: list = field(default_factory=list)


class QNetwork:
    """Fully connected net: ReLU on hidden layers, identity output."""

    def __init__(self, weights, biases):
        if len(weights) != len(biases) or not weights:
            raise ValueError("need matching, non-empty weight and bias lists")
        self.weights = [np.array(w, dtype=float) for w in weights]
        self.biases = [np.array(b, dtype=float) for b in biases]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ValueError(f"layer {i}: bad shapes {w.shape}, {b.shape}")
            if i and w.shape[1] != self.weights[i - 1].shape[0]:
                raise ValueError(f"layer {i}: input width {w.shape[1]} != {self.weights[i - 1].shape[0]}")

    @classmethod
    def init(cls, layer_dims, rng: np.random.Generator) -> "QNetwork":
        """Glorot-uniform weights, zero biases."""
        ws, bs = [], []
        for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
            lim = np.sqrt(6.0 / (fan_in + fan_out))
            ws.append(rng.uniform(-lim, lim, size=(fan_out, fan_in)))
            bs.append(np.zeros(fan_out))
        return cls(ws, bs)

    @property
    def layer_dims(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def n_inputs(self) -> int:
        return self.weights[0].shape[1]

    @property
    def n_actions(self) -> int:
        return self.weights[-1].shape[0]

    def copy(self) -> "QNetwork":
        return QNetwork([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def load_from(self, other: "QNetwork") -> None:
        for w, ow in zip(self.weights, other.weights):
            w[...] = ow
        for b, ob in zip(self.biases, other.biases):
            b[...] = ob

    def equals(self, other: "QNetwork") -> bool:
        return self.layer_dims == other.layer_dims and \
            all(np.array_equal(a, b) for a, b in zip(self.weights, other.weights)) and \
            all(np.array_equal(a, b) for a, b in zip(self.biases, other.biases))

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n_inputs:
            raise ValueError(f"input width {x.shape[-1]} != network input {self.n_inputs}")
        return x

    # -- point path -----------------------------------------------------------
    def forward(self, x) -> np.ndarray:
        x = self._check(x)
        a = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w.T + b
            a = z if i == last else np.maximum(z, 0.0)
        return a

    def forward_cache(self, x):
        x = self._check(x)
        acts, pre = [x], []
        a = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w.T + b
            if i == last:
                a = z
            else:
                pre.append(z)
                a = np.maximum(z, 0.0)
                acts.append(a)
        return a, _PointCache(acts, pre)

    def backward(self, cache: _PointCache, upstream) -> GradientBundle:
        """Reverse pass for a batch; parameter gradients are summed over it."""
        g = np.asarray(upstream, dtype=float)
        batched = g.ndim == 2
        if not batched:
            g = g[None, :]
        n = len(self.weights)
        dws, dbs = [None] * n, [None] * n
        for i in range(n - 1, -1, -1):
            a = cache.acts[i]
            a2 = a if a.ndim == 2 else a[None, :]
            dws[i] = g.T @ a2
            dbs[i] = g.sum(axis=0)
            g = g @ self.weights[i]
            if i > 0:
                z = cache.pre[i - 1]
                z2 = z if z.ndim == 2 else z[None, :]
                g = g * (z2 > 0)
        dx = g if batched else g[0]
        return GradientBundle(dws, dbs, dx)

    def input_gradient(self, cache: _PointCache, upstream) -> np.ndarray:
        """``dx`` of :meth:`backward` without the parameter gradients."""
        g = np.asarray(upstream, dtype=float)
        for i in range(len(self.weights) - 1, -1, -1):
            g = g @ self.weights[i]
            if i > 0:
                g = g * (cache.pre[i - 1] > 0)
        return g

    # -- interval path ----------------------------------------------------------
    def ibp_forward(self, low, high):
        low = self._check(low)
        high = self._check(high)
        c = (low + high) * 0.5
        r = (high - low) * 0.5
        cache = _IntervalCache([c], [r])
        last = len(self.weights) - 1
        # outward rounding: a float forward pass of any point in the box may land a few ulps
        # outside the exact bounds; a zero-radius box skips this and stays bit-equal to forward()
        widen = bool(np.any(r > 0))
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            mu = c @ w.T + b
            aw = np.abs(w)
            rad = r @ aw.T
            if widen:
                slack = 4.0 * (w.shape[1] + 2) * _EPS
                rad = rad + slack * (np.abs(c) @ aw.T + np.abs(b) + rad)
            lo, hi = mu - rad, mu + rad
            if i == last:
                return lo, hi, cache
            cache.lows.append(lo)
            cache.highs.append(hi)
            lo, hi = np.maximum(lo, 0.0), np.maximum(hi, 0.0)
            c = (lo + hi) * 0.5
            r = (hi - lo) * 0.5
            cache.centers.append(c)
            cache.radii.append(r)
        raise AssertionError("unreachable")

    def ibp_backward(self, cache: _IntervalCache, g_low, g_high) -> GradientBundle:
        """Gradients of a scalar loss given its derivatives w.r.t. the output bounds.

        ``dx`` holds the derivative w.r.t. the box centre.
        """
        gl = np.asarray(g_low, dtype=float)
        gh = np.asarray(g_high, dtype=float)
        batched = gl.ndim == 2
        if not batched:
            gl, gh = gl[None, :], gh[None, :]
        dmu = gl + gh
        drad = gh - gl
        n = len(self.weights)
        dws, dbs = [None] * n, [None] * n
        for i in range(n - 1, -1, -1):
            w = self.weights[i]
            c = cache.centers[i]
            r = cache.radii[i]
            c2 = c if c.ndim == 2 else c[None, :]
            r2 = r if r.ndim == 2 else r[None, :]
            dws[i] = dmu.T @ c2 + np.sign(w) * (drad.T @ r2)
            dbs[i] = dmu.sum(axis=0)
            g_c = dmu @ w
            g_r = drad @ np.abs(w)
            if i == 0:
                break
            lo = cache.lows[i - 1]
            hi = cache.highs[i - 1]
            lo2 = lo if lo.ndim == 2 else lo[None, :]
            hi2 = hi if hi.ndim == 2 else hi[None, :]
            m_l = (lo2 > 0).astype(float)
            m_h = (hi2 > 0).astype(float)
            a = (m_l + m_h) * 0.5
            d = (m_h - m_l) * 0.5
            dmu = a * g_c + d * g_r
            drad = d * g_c + a * g_r
        dx = g_c if batched else g_c[0]
        return GradientBundle(dws, dbs, dx)

    # -- persistence ---------------------------------------------------------------
    def to_bytes(self) -> bytes:
        dims = self.layer_dims
        parts = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(self.weights)),
                 struct.pack(f"<{len(dims)}I", *dims)]
        for w, b in zip(self.weights, self.biases):
            parts.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
            parts.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "QNetwork":
        if blob[:4] != MAGIC:
            raise ValueError("not a QNET checkpoint")
        version, n_layers = struct.unpack_from("<II", blob, 4)
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        off = 12
        dims = struct.unpack_from(f"<{n_layers + 1}I", blob, off)
        off += 4 * (n_layers + 1)
        ws, bs = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            w = np.frombuffer(blob, dtype="<f8", count=fan_in * fan_out, offset=off).reshape(fan_out, fan_in)
            off += 8 * fan_in * fan_out
            b = np.frombuffer(blob, dtype="<f8", count=fan_out, offset=off)
            off += 8 * fan_out
            ws.append(w.astype(float))
            bs.append(b.astype(float))
        if off != len(blob):
            raise ValueError("trailing bytes in checkpoint")
        return cls(ws, bs)

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "QNetwork":
        return cls.from_bytes(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# Functional surface

def forward(net: QNetwork, x) -> np.ndarray:
    return net.forward(x)


def backward(net: QNetwork, x, upstream) -> GradientBundle:
    _, cache = net.forward_cache(x)
    return net.backward(cache, upstream)


def sgd_step(net: QNetwork, grads: GradientBundle, lr: float) -> QNetwork:
    """In-place plain gradient descent; returns ``net`` for chaining."""
    if not lr > 0:
        raise ValueError("learning rate must be > 0")
    if not grads.is_finite():
        raise TrainingError("non-finite gradient")
    for w, g in zip(net.weights, grads.weights):
        w -= lr * g
    for b, g in zip(net.biases, grads.biases):
        b -= lr * g
    return net


def ibp_forward(net: QNetwork, box: IntervalVector) -> IntervalVector:
    lo, hi, _ = net.ibp_forward(box.low, box.high)
    return IntervalVector(lo, hi)


def ibp_backward(net: QNetwork, box: IntervalVector, g_low, g_high) -> GradientBundle:
    _, _, cache = net.ibp_forward(box.low, box.high)
    return net.ibp_backward(cache, g_low, g_high)


def compress(q, c, coeff: float):
    """Pull ``q`` toward ``c``; the pull grows with the distance."""
    if coeff < 0:
        raise ValueError("compression coefficient must be >= 0")
    d = np.asarray(q, dtype=float) - c
    return c + d * np.exp(-coeff * np.abs(d))


def compress_interval(low, high, coeff: float):
    """Compress both endpoints toward the interval midpoint.

    Endpoints are symmetric about the midpoint, so they never cross; the
    final min/max only guards the ordering contract.
    """
    low = np.asarray(low, dtype=float)
    high = np.asarray(high, dtype=float)
    c = (low + high) * 0.5
    gl = compress(low, c, coeff)
    gh = compress(high, c, coeff)
    return np.minimum(gl, gh), np.maximum(gl, gh)


def compress_interval_backward(low, high, coeff: float, g_low, g_high):
    """Map derivatives on the compressed bounds back to the raw bounds."""
    low = np.asarray(low, dtype=float)
    high = np.asarray(high, dtype=float)
    c = (low + high) * 0.5
    dl = np.abs(low - c)
    dh = np.abs(high - c)
    s_l = np.exp(-coeff * dl) * (1.0 - coeff * dl)
    s_h = np.exp(-coeff * dh) * (1.0 - coeff * dh)
    d_low = g_low * (s_l + (1.0 - s_l) * 0.5) + g_high * (1.0 - s_h) * 0.5
    d_high = g_high * (s_h + (1.0 - s_h) * 0.5) + g_low * (1.0 - s_l) * 0.5
    return d_low, d_high
