"""Finite-difference verification of the analytic gradients.

Central differences on the BCE objective, computed in float64. Parameters
with more than `max_checks` entries are spot-checked on a deterministic
random subset. ReLU kinks are excluded two ways: inputs are jittered away
from near-zero pre-activations, and any probe whose +eps/-eps evaluations
land on different sides of a kink (a pre-activation sign flip) is skipped --
a central difference across a non-differentiable point measures nothing.
"""
from __future__ import annotations

import numpy as np

from .model import FcnArchitecture, forward, backward
from .loss import bce_loss
from . import layers as L


def _loss_and_signs(arch, params, x, target):
    a = x
    signs = []
    for spec in arch.plan:
        if spec[0] == "conv3":
            _, name, cin, cout, stride = spec
            a, _ = L.conv3_forward(a, params[f"{name}.w"], params[f"{name}.b"], stride)
        elif spec[0] == "conv1":
            _, name, cin, cout = spec
            a, _ = L.conv1_forward(a, params[f"{name}.w"], params[f"{name}.b"])
        elif spec[0] == "relu":
            signs.append(a > 0)
            a, _ = L.relu_forward(a)
        elif spec[0] == "up2":
            a = L.upsample2_forward(a)
    loss, _ = bce_loss(a, target)
    return loss, signs


def _min_preact(arch, params, x) -> float:
    a = x
    mn = np.inf
    for spec in arch.plan:
        if spec[0] == "conv3":
            _, name, cin, cout, stride = spec
            a, _ = L.conv3_forward(a, params[f"{name}.w"], params[f"{name}.b"], stride)
        elif spec[0] == "conv1":
            _, name, cin, cout = spec
            a, _ = L.conv1_forward(a, params[f"{name}.w"], params[f"{name}.b"])
        elif spec[0] == "relu":
            mn = min(mn, float(np.abs(a).min()))
            a, _ = L.relu_forward(a)
        elif spec[0] == "up2":
            a = L.upsample2_forward(a)
    return mn


def grad_check(arch: FcnArchitecture, params: dict, x: np.ndarray,
               target: np.ndarray, eps: float = 1e-3,
               max_checks: int = 200, seed: int = 0):
    """Max relative error between analytic and numeric gradients.

    Returns (max_rel_err, worst_param_name).
    """
    params = {k: v.astype(np.float64) for k, v in params.items()}
    x = x.astype(np.float64)
    target = target.astype(np.float64)
    rng = np.random.default_rng(seed)
    for _ in range(20):
        if _min_preact(arch, params, x) > 4 * eps:
            break
        x = x + rng.uniform(0.01, 0.02, size=x.shape)

    logits, cache = forward(arch, params, x, want_cache=True)
    _, gz = bce_loss(logits, target)
    grads = backward(arch, params, cache, gz)

    worst = 0.0
    worst_name = ""
    for name, p in params.items():
        flat = p.ravel()
        n = flat.size
        idxs = np.arange(n) if n <= max_checks else rng.choice(n, max_checks, replace=False)
        for i in idxs:
            orig = flat[i]
            flat[i] = orig + eps
            up, s_up = _loss_and_signs(arch, params, x, target)
            flat[i] = orig - eps
            down, s_down = _loss_and_signs(arch, params, x, target)
            flat[i] = orig
            if any((a != b).any() for a, b in zip(s_up, s_down)):
                continue  # probe straddles a ReLU kink: excluded by rule
            numeric = (up - down) / (2 * eps)
            analytic = grads[name].ravel()[i]
            rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-6)
            if rel > worst:
                worst = rel
                worst_name = name
    return worst, worst_name


def run_grad_check_suite(seeds=range(10), eps: float = 1e-3):
    """The standard verification: tiny nets on 8x8 inputs across seeds.

    Returns (max_rel_err, report_lines).
    """
    from .model import init_params

    lines = []
    worst = 0.0
    for seed in seeds:
        rng = np.random.default_rng(seed)
        arch = FcnArchitecture.tiny(in_channels=2, out_channels=1, width=4)
        params = init_params(arch, seed=seed, dtype=np.float64)
        x = rng.standard_normal((2, 8, 8, 2))
        target = rng.uniform(0, 1, size=(2, 8, 8, 1))
        err, name = grad_check(arch, params, x, target, eps=eps, seed=seed)
        lines.append(f"seed {seed}: max rel err {err:.3e} (worst: {name})")
        worst = max(worst, err)
    return worst, lines
