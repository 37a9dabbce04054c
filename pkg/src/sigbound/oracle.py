"""Brute-force reference checks.

No computation is shared with the relaxation or propagation code: activations
and bounds are re-evaluated from scratch so that a disagreement points at one
side only.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .model import InputRegion, Network
from .propagation import LayerBounds  # plain container; no bound computation is shared

MAX_ENUMERATED_CORNERS = 4096


@dataclass(frozen=True)
class OracleReport:
    quantity: str
    oracle_value: float
    engine_value: float
    margin: float
    verdict: bool

    def __str__(self):
        word = "PASS" if self.verdict else "FAIL"
        return f"{word} {self.quantity}: engine={self.engine_value:.10g} oracle={self.oracle_value:.10g} margin={self.margin:.3g}"


def lower_bound_report(quantity, engine_value, oracle_value, tol=1e-9) -> OracleReport:
    """Engine claims a lower bound; it must not exceed the oracle value by more than ``tol``."""
    margin = oracle_value - engine_value
    return OracleReport(quantity, float(oracle_value), float(engine_value), float(margin), bool(margin >= -tol))


def _act(name: str, z):
    if name == "sigmoid":
        return 1.0 / (1.0 + np.exp(-np.clip(z, -700, 700)))
    if name == "tanh":
        return np.tanh(z)
    return z


def _forward(net: Network, x):
    z = np.asarray(x, dtype=np.float64)
    for layer in net.layers:
        z = _act(layer.activation.value, z @ layer.weights.T + layer.bias)
    return z


def _preactivations(net: Network, x):
    z = np.asarray(x, dtype=np.float64)
    out = []
    for layer in net.layers:
        pre = z @ layer.weights.T + layer.bias
        out.append(pre)
        z = _act(layer.activation.value, pre)
    return out


def _corners(region: InputRegion, rng):
    n = region.center.shape[0]
    if 2**n <= MAX_ENUMERATED_CORNERS:
        signs = np.array(list(itertools.product((-1.0, 1.0), repeat=n)))
    else:
        signs = rng.choice((-1.0, 1.0), size=(MAX_ENUMERATED_CORNERS, n))
    return region.center + region.radius * signs


def box_samples(region: InputRegion, n_samples: int, seed=0) -> np.ndarray:
    """Uniform samples of the box plus its centre, axis extremes and corners."""
    rng = np.random.default_rng(seed)
    n = region.center.shape[0]
    uniform = rng.uniform(region.lower, region.upper, size=(n_samples, n))
    axis = np.concatenate([region.center + region.radius * np.eye(n), region.center - region.radius * np.eye(n)])
    return np.vstack([region.center[None], axis, _corners(region, rng), uniform])


def sampled_min(net_with_margin: Network, region: InputRegion, n_samples: int, seed=0) -> float:
    """Minimum of the scalar network output over a finite sample of the box (an upper bound on the true minimum)."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    values = _forward(net_with_margin, box_samples(region, n_samples, seed))
    return float(values.min())


def grid_min(net_with_margin: Network, region: InputRegion, points_per_dim: int) -> float:
    n = region.center.shape[0]
    if n > 3:
        raise ValueError(f"grid_min supports at most 3 input dimensions, got {n}")
    if points_per_dim < 2:
        raise ValueError("points_per_dim must be >= 2")
    axes = [np.linspace(lo, hi, points_per_dim) for lo, hi in zip(region.lower, region.upper)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    return float(_forward(net_with_margin, mesh).min())


def dense_validity(kind, line, l, u, n_points=1000, side="upper", tol=1e-10):
    """Check a bounding line on an ``n_points`` grid over [l, u].

    ``line`` is a ``(slope, intercept)`` pair or any object with those
    attributes; batches of lines (arrays of slopes and intercepts) are
    checked together. Returns ``(valid, worst_gap)`` where the gap is
    ``line - act`` for upper lines and ``act - line`` for lower lines.
    """
    if l > u:
        raise ValueError("lower bound exceeds upper bound")
    if n_points < 2:
        raise ValueError("n_points must be >= 2")
    slope, intercept = (line.slope, line.intercept) if hasattr(line, "slope") else line
    slope = np.asarray(slope, dtype=np.float64)
    intercept = np.asarray(intercept, dtype=np.float64)
    name = getattr(kind, "value", kind)
    z = np.linspace(l, u, n_points)
    act = _act(name, z)
    values = slope[..., None] * z + intercept[..., None]
    gaps = values - act if side == "upper" else act - values
    worst = gaps.min(axis=-1)
    valid = worst >= -tol
    if worst.ndim == 0:
        return bool(valid), float(worst)
    return valid, worst


def interval_bounds(net: Network, region: InputRegion):
    """Naive interval arithmetic bounds on the pre-activations of every layer."""
    lo, hi = region.lower, region.upper
    out = []
    for layer in net.layers:
        w_pos = np.maximum(layer.weights, 0.0)
        w_neg = np.minimum(layer.weights, 0.0)
        pre_lo = w_pos @ lo + w_neg @ hi + layer.bias
        pre_hi = w_pos @ hi + w_neg @ lo + layer.bias
        out.append(LayerBounds(pre_lo, pre_hi))
        # both activations are monotone increasing
        lo, hi = _act(layer.activation.value, pre_lo), _act(layer.activation.value, pre_hi)
    return out


def sampled_preactivations(net: Network, region: InputRegion, n_samples: int, seed=0):
    """Pre-activations of every layer at sampled points of the box."""
    return _preactivations(net, box_samples(region, n_samples, seed))
