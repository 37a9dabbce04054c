"""Backward substitution of linear relaxations and concretisation over the input box."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .model import InputRegion, Network, ShapeError
from .relaxation import LayerRelaxation, relax_layer

TangentStrategy = Callable[..., tuple]

LOWER = "lower"
UPPER = "upper"


@dataclass(frozen=True)
class SymbolicBound:
    """Linear function ``coeffs @ x + constant`` of the network input.

    ``coeffs`` is a vector for a single target, or a matrix with one row per
    target neuron when a whole layer is bounded at once.
    """

    coeffs: np.ndarray
    constant: np.ndarray
    direction: str

    def __call__(self, x):
        return np.asarray(x, dtype=np.float64) @ self.coeffs.T + self.constant


@dataclass(frozen=True)
class LayerBounds:
    lower: np.ndarray
    upper: np.ndarray

    def contains(self, values, tol: float = 1e-9) -> bool:
        values = np.asarray(values)
        return bool(np.all(values >= self.lower - tol) and np.all(values <= self.upper + tol))


@dataclass
class BoundResult:
    g_star: float
    g_upper: float
    bounds: list[LayerBounds]
    relaxations: list[Optional[LayerRelaxation]]
    lower_bound: SymbolicBound
    upper_bound: SymbolicBound = field(repr=False)

    def tangent_records(self):
        """(layer, neuron, side, tangent point) for every tangent used."""
        rows = []
        for i, rel in enumerate(self.relaxations):
            if rel is None:
                continue
            for side, values in (("lower", rel.tangent_lower), ("upper", rel.tangent_upper)):
                for j in np.flatnonzero(~np.isnan(values)):
                    rows.append((i, int(j), side, float(values[j])))
        return rows


def _substitute(net: Network, relaxations, layer: int, coeffs: np.ndarray, direction: str):
    """Fold layers ``layer, layer-1, ..., 0`` into ``coeffs`` (rows over layer's pre-activation)."""
    lower = direction == LOWER
    const = np.zeros(coeffs.shape[0])
    for i in range(layer, -1, -1):
        affine = net.layers[i]
        if coeffs.shape[1] != affine.out_dim:
            raise ShapeError(f"coefficient width {coeffs.shape[1]} != layer {i} width {affine.out_dim}")
        const = const + coeffs @ affine.bias
        coeffs = coeffs @ affine.weights
        if i == 0:
            break
        if not net.layers[i - 1].activation.is_sigmoidal:
            continue
        if i - 1 >= len(relaxations) or relaxations[i - 1] is None:
            raise ValueError(f"no relaxation available for activation layer {i - 1}")
        rel = relaxations[i - 1]
        # zero coefficients take the lower line in both directions
        take_lower = coeffs >= 0 if lower else coeffs <= 0
        slope = np.where(take_lower, rel.lower_slope, rel.upper_slope)
        intercept = np.where(take_lower, rel.lower_intercept, rel.upper_intercept)
        const = const + np.sum(coeffs * intercept, axis=1)
        coeffs = coeffs * slope
    return coeffs, const


def backward_substitute(net: Network, relaxations: Sequence, target, direction: str) -> SymbolicBound:
    """Linear bound on a pre-activation in terms of the network input.

    ``target`` is ``(layer, neuron)``; pass ``neuron=None`` to bound every
    neuron of the layer at once (one coefficient row each).
    """
    if direction not in (LOWER, UPPER):
        raise ValueError(f"direction must be {LOWER!r} or {UPPER!r}")
    layer, neuron = target
    if not 0 <= layer < len(net.layers):
        raise IndexError(f"layer {layer} out of range")
    width = net.layers[layer].out_dim
    if neuron is None:
        start = np.eye(width)
    else:
        if not 0 <= neuron < width:
            raise IndexError(f"neuron {neuron} out of range for layer {layer}")
        start = np.zeros((1, width))
        start[0, neuron] = 1.0
    coeffs, const = _substitute(net, relaxations, layer, start, direction)
    if neuron is not None:
        return SymbolicBound(coeffs[0], const[0], direction)
    return SymbolicBound(coeffs, const, direction)


def concretize(bound: SymbolicBound, region: InputRegion):
    """Exact minimum (lower) or maximum (upper) of the bound over the box."""
    coeffs = np.asarray(bound.coeffs)
    if coeffs.shape[-1] != region.center.shape[0]:
        raise ShapeError(f"bound has {coeffs.shape[-1]} inputs, region has {region.center.shape[0]}")
    centre = coeffs @ region.center + bound.constant
    spread = region.radius * np.abs(coeffs).sum(axis=-1)
    value = centre - spread if bound.direction == LOWER else centre + spread
    return float(value) if np.ndim(value) == 0 else value


def _layer_bounds(net, relaxations, layer, region):
    eye = np.eye(net.layers[layer].out_dim)
    lo_c, lo_k = _substitute(net, relaxations, layer, eye, LOWER)
    up_c, up_k = _substitute(net, relaxations, layer, eye, UPPER)
    lo = concretize(SymbolicBound(lo_c, lo_k, LOWER), region)
    up = concretize(SymbolicBound(up_c, up_k, UPPER), region)
    # tiny crossings from rounding on near-point regions
    return LayerBounds(np.minimum(lo, up), np.maximum(lo, up))


def compute_preactivation_bounds(net: Network, region: InputRegion, tangent_strategy: TangentStrategy):
    """Bounds and relaxations for every layer feeding the output layer.

    Returns ``(bounds, relaxations)``; ``relaxations[i]`` is None for identity
    layers.
    """
    region.check_dim(net)
    bounds: list[LayerBounds] = []
    relaxations: list[Optional[LayerRelaxation]] = []
    for k in range(len(net.layers) - 1):
        lb = _layer_bounds(net, relaxations, k, region)
        bounds.append(lb)
        kind = net.layers[k].activation
        if kind.is_sigmoidal:
            tl, tu = tangent_strategy(kind, lb.lower, lb.upper)
            relaxations.append(relax_layer(kind, lb.lower, lb.upper, tl, tu))
        else:
            relaxations.append(None)
    return bounds, relaxations


def global_lower_bound(net_with_margin: Network, region: InputRegion, tangent_strategy: TangentStrategy) -> BoundResult:
    """Certified lower bound on the scalar output of a margin network over the region."""
    if net_with_margin.output_dim != 1:
        raise ValueError("global_lower_bound expects a single-output (margin) network")
    bounds, relaxations = compute_preactivation_bounds(net_with_margin, region, tangent_strategy)
    last = len(net_with_margin.layers) - 1
    lower = backward_substitute(net_with_margin, relaxations, (last, 0), LOWER)
    upper = backward_substitute(net_with_margin, relaxations, (last, 0), UPPER)
    return BoundResult(
        g_star=concretize(lower, region),
        g_upper=concretize(upper, region),
        bounds=bounds,
        relaxations=relaxations,
        lower_bound=lower,
        upper_bound=upper,
    )
