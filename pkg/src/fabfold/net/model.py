"""The fully-convolutional heatmap network: layer plan, forward, backward.

The standard architecture maps (B, 64, 64, in_ch) to per-pixel logits
(B, 64, 64, out_ch):

    conv3x3 in->16 s1 + ReLU        64x64
    conv3x3 16->32 s2 + ReLU        32x32
    conv3x3 32->64 s2 + ReLU        16x16
    conv3x3 64->64 s1 + ReLU        16x16
    up x2, conv3x3 64->32 s1 + ReLU 32x32
    up x2, conv3x3 32->16 s1 + ReLU 64x64
    conv1x1 16->out (logits)        64x64

Layer plans are data so tests can build small variants of the same family.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import layers as L


class ShapeError(Exception):
    pass


class StaleCacheError(Exception):
    pass


@dataclass(frozen=True)
class FcnArchitecture:
    in_channels: int
    out_channels: int
    # ("conv3", name, cin, cout, stride) | ("conv1", name, cin, cout)
    # | ("relu",) | ("up2",)
    plan: tuple = ()

    @classmethod
    def standard(cls, in_channels: int, out_channels: int) -> "FcnArchitecture":
        plan = (
            ("conv3", "enc1", in_channels, 16, 1), ("relu",),
            ("conv3", "enc2", 16, 32, 2), ("relu",),
            ("conv3", "enc3", 32, 64, 2), ("relu",),
            ("conv3", "enc4", 64, 64, 1), ("relu",),
            ("up2",),
            ("conv3", "dec1", 64, 32, 1), ("relu",),
            ("up2",),
            ("conv3", "dec2", 32, 16, 1), ("relu",),
            ("conv1", "out", 16, out_channels),
        )
        return cls(in_channels=in_channels, out_channels=out_channels, plan=plan)

    @classmethod
    def tiny(cls, in_channels: int = 2, out_channels: int = 1,
             width: int = 4) -> "FcnArchitecture":
        """Small member of the same family (stride-2 + upsample included),
        used by gradient verification."""
        plan = (
            ("conv3", "enc1", in_channels, width, 1), ("relu",),
            ("conv3", "enc2", width, width * 2, 2), ("relu",),
            ("up2",),
            ("conv3", "dec1", width * 2, width, 1), ("relu",),
            ("conv1", "out", width, out_channels),
        )
        return cls(in_channels=in_channels, out_channels=out_channels, plan=plan)

    def param_names(self):
        names = []
        for spec in self.plan:
            if spec[0] in ("conv3", "conv1"):
                names += [f"{spec[1]}.w", f"{spec[1]}.b"]
        return names


def init_params(arch: FcnArchitecture, seed: int = 0, dtype=np.float32) -> dict:
    """He-uniform kernels, zero biases; deterministic in layer order."""
    rng = np.random.default_rng(seed)
    params = {}
    for spec in arch.plan:
        if spec[0] == "conv3":
            _, name, cin, cout, _ = spec
            w, b = L.conv3_init(cin, cout, rng, dtype)
            params[f"{name}.w"], params[f"{name}.b"] = w, b
        elif spec[0] == "conv1":
            _, name, cin, cout = spec
            w, b = L.conv1_init(cin, cout, rng, dtype)
            params[f"{name}.w"], params[f"{name}.b"] = w, b
    return params


def n_params(params: dict) -> int:
    return sum(int(np.prod(p.shape)) for p in params.values())


def forward(arch: FcnArchitecture, params: dict, x: np.ndarray,
            want_cache: bool = False):
    """Run the network; x is (B, H, W, in_channels).

    Returns logits, or (logits, cache) when want_cache: the cache feeds
    backward() and is tied to this exact input.
    """
    if x.ndim != 4 or x.shape[3] != arch.in_channels:
        raise ShapeError(
            f"input shape {x.shape} does not carry {arch.in_channels} channels")
    a = x
    trace = []
    for spec in arch.plan:
        kind = spec[0]
        if kind == "conv3":
            _, name, cin, cout, stride = spec
            if a.shape[3] != cin:
                raise ShapeError(f"layer {name}: expected {cin} channels, got {a.shape[3]}")
            y, cache = L.conv3_forward(a, params[f"{name}.w"], params[f"{name}.b"], stride)
            trace.append((spec, a.shape, cache))
            a = y
        elif kind == "conv1":
            _, name, cin, cout = spec
            if a.shape[3] != cin:
                raise ShapeError(f"layer {name}: expected {cin} channels, got {a.shape[3]}")
            y, _ = L.conv1_forward(a, params[f"{name}.w"], params[f"{name}.b"])
            trace.append((spec, a, None))
            a = y
        elif kind == "relu":
            a, mask = L.relu_forward(a)
            trace.append((spec, None, mask))
        elif kind == "up2":
            a = L.upsample2_forward(a)
            trace.append((spec, None, None))
        else:
            raise ValueError(f"unknown layer kind {kind}")
    if want_cache:
        return a, {"trace": trace, "out_shape": a.shape, "in_id": id(x)}
    return a


def backward(arch: FcnArchitecture, params: dict, cache: dict,
             grad_out: np.ndarray) -> dict:
    """Parameter gradients for a prior forward(want_cache=True) call."""
    if cache is None or "trace" not in cache:
        raise StaleCacheError("backward() needs the cache from forward(want_cache=True)")
    if grad_out.shape != cache["out_shape"]:
        raise ShapeError(
            f"upstream grad shape {grad_out.shape} != forward output {cache['out_shape']}")
    grads = {}
    g = grad_out
    for spec, aux, cached in reversed(cache["trace"]):
        kind = spec[0]
        if kind == "conv3":
            _, name, cin, cout, stride = spec
            g, gw, gb = L.conv3_backward(g, aux, params[f"{name}.w"], stride, cached)
            grads[f"{name}.w"], grads[f"{name}.b"] = gw, gb
        elif kind == "conv1":
            _, name, cin, cout = spec
            g, gw, gb = L.conv1_backward(g, aux, params[f"{name}.w"])
            grads[f"{name}.w"], grads[f"{name}.b"] = gw, gb
        elif kind == "relu":
            g = L.relu_backward(g, cached)
        elif kind == "up2":
            g = L.upsample2_backward(g)
    return grads


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out
