"""Linear bounding lines for Sigmoid and Tanh neurons.

Both activations are convex on (-inf, 0] and concave on [0, inf). Every
function here accepts numpy arrays elementwise; the scalar entry points
(``relax_neuron``, ``check_upper_valid`` ...) are thin wrappers used by tests
and by callers working one neuron at a time.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import expit

from .model import ActivationKind

# slack allowed when a line touches the activation (rounding at tangency)
VALIDITY_TOL = 1e-12


class InvalidTangentError(ValueError):
    """A tangent point does not yield a valid bounding line on its interval."""


class ActivationCase(enum.IntEnum):
    SMINUS = -1
    SMIXED = 0
    SPLUS = 1


@dataclass(frozen=True)
class BoundingLine:
    slope: float
    intercept: float

    def __call__(self, z):
        return self.slope * np.asarray(z, dtype=np.float64) + self.intercept


@dataclass(frozen=True)
class NeuronRelaxation:
    lower: BoundingLine
    upper: BoundingLine
    case: ActivationCase
    pre_bounds: tuple[float, float]
    tangent_lower: Optional[float] = None
    tangent_upper: Optional[float] = None


@dataclass(frozen=True)
class LayerRelaxation:
    """Relaxations of every neuron in one activation layer, stored as arrays.

    Missing tangent points are NaN.
    """

    kind: ActivationKind
    lower: np.ndarray
    upper: np.ndarray
    lower_slope: np.ndarray
    lower_intercept: np.ndarray
    upper_slope: np.ndarray
    upper_intercept: np.ndarray
    case: np.ndarray
    tangent_lower: np.ndarray
    tangent_upper: np.ndarray

    def __len__(self):
        return self.lower.shape[0]

    def neuron(self, j: int) -> NeuronRelaxation:
        tl, tu = self.tangent_lower[j], self.tangent_upper[j]
        return NeuronRelaxation(
            lower=BoundingLine(float(self.lower_slope[j]), float(self.lower_intercept[j])),
            upper=BoundingLine(float(self.upper_slope[j]), float(self.upper_intercept[j])),
            case=ActivationCase(int(self.case[j])),
            pre_bounds=(float(self.lower[j]), float(self.upper[j])),
            tangent_lower=None if np.isnan(tl) else float(tl),
            tangent_upper=None if np.isnan(tu) else float(tu),
        )


def _require_sigmoidal(kind) -> ActivationKind:
    kind = ActivationKind.parse(kind)
    if not kind.is_sigmoidal:
        raise ValueError("identity activation has no relaxation")
    return kind


def sigma(kind, x):
    kind = _require_sigmoidal(kind)
    if kind is ActivationKind.SIGMOID:
        return expit(x)
    return np.tanh(x)


def sigma_prime(kind, x):
    kind = _require_sigmoidal(kind)
    if kind is ActivationKind.SIGMOID:
        # sigma(x) * (1 - sigma(x)) with 1 - sigma(x) taken as sigma(-x)
        return expit(x) * expit(-np.asarray(x))
    t = np.tanh(x)
    return 1.0 - t * t


def classify_case(l, u):
    """Case codes: SPLUS if 0 <= l, SMINUS if u <= 0, SMIXED otherwise."""
    l = np.asarray(l, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if np.any(l > u):
        raise ValueError("lower bound exceeds upper bound")
    out = np.where(l >= 0, ActivationCase.SPLUS, np.where(u <= 0, ActivationCase.SMINUS, ActivationCase.SMIXED))
    if out.ndim == 0:
        return ActivationCase(int(out))
    return out.astype(np.int8)


def chord(kind, l, u):
    """Slope and intercept of the line through both interval endpoints."""
    l = np.asarray(l, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if np.any(l > u):
        raise ValueError("lower bound exceeds upper bound")
    yl, yu = sigma(kind, l), sigma(kind, u)
    width = u - l
    degenerate = width == 0
    slope = np.where(degenerate, 0.0, (yu - yl) / np.where(degenerate, 1.0, width))
    return slope, yl - slope * l


def tangent(kind, d):
    """Slope and intercept of the tangent line at ``d``."""
    d = np.asarray(d, dtype=np.float64)
    slope = sigma_prime(kind, d)
    return slope, sigma(kind, d) - slope * d


def chord_line(kind, l: float, u: float) -> BoundingLine:
    slope, intercept = chord(kind, l, u)
    return BoundingLine(float(slope), float(intercept))


def tangent_line(kind, d: float) -> BoundingLine:
    slope, intercept = tangent(kind, d)
    return BoundingLine(float(slope), float(intercept))


def upper_gap(kind, slope, intercept, l, u):
    """Worst value of ``line - sigma`` over [l, u] for a tangent taken at d >= 0.

    On the concave side such a tangent lies above sigma; on the convex side the
    gap is concave, so its minimum sits at ``l`` or at ``min(u, 0)``.
    """
    l = np.asarray(l, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    right = np.minimum(u, 0.0)
    gap_l = slope * l + intercept - sigma(kind, l)
    gap_r = slope * right + intercept - sigma(kind, right)
    gap = np.minimum(gap_l, gap_r)
    return np.where(l >= 0, 0.0, gap)


def lower_gap(kind, slope, intercept, l, u):
    """Worst value of ``sigma - line`` over [l, u] for a tangent taken at d <= 0."""
    l = np.asarray(l, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    left = np.maximum(l, 0.0)
    gap_u = sigma(kind, u) - (slope * u + intercept)
    gap_left = sigma(kind, left) - (slope * left + intercept)
    gap = np.minimum(gap_u, gap_left)
    return np.where(u <= 0, 0.0, gap)


def check_upper_valid(kind, line: BoundingLine, l: float, u: float) -> bool:
    """True iff ``line`` (a tangent at some d >= 0) stays above sigma on [l, u]."""
    if l > u:
        raise ValueError("lower bound exceeds upper bound")
    return bool(upper_gap(kind, line.slope, line.intercept, l, u) >= -VALIDITY_TOL)


def check_lower_valid(kind, line: BoundingLine, l: float, u: float) -> bool:
    """True iff ``line`` (a tangent at some d <= 0) stays below sigma on [l, u]."""
    if l > u:
        raise ValueError("lower bound exceeds upper bound")
    return bool(lower_gap(kind, line.slope, line.intercept, l, u) >= -VALIDITY_TOL)


def relax_layer(kind, l, u, tangent_lower=None, tangent_upper=None) -> LayerRelaxation:
    """Build the relaxation of every neuron of a layer.

    SPLUS neurons take the chord below and the tangent at ``tangent_upper``
    above; SMINUS neurons the mirror image; SMIXED neurons a tangent on each
    side. Degenerate intervals get the constant line and no tangents.
    """
    kind = _require_sigmoidal(kind)
    l = np.atleast_1d(np.asarray(l, dtype=np.float64))
    u = np.atleast_1d(np.asarray(u, dtype=np.float64))
    n = l.shape[0]
    tl = np.full(n, np.nan) if tangent_lower is None else np.atleast_1d(np.asarray(tangent_lower, dtype=np.float64)).copy()
    tu = np.full(n, np.nan) if tangent_upper is None else np.atleast_1d(np.asarray(tangent_upper, dtype=np.float64)).copy()
    case = classify_case(l, u)
    degenerate = l == u

    need_upper = ~degenerate & (case != ActivationCase.SMINUS)
    need_lower = ~degenerate & (case != ActivationCase.SPLUS)
    tu[~need_upper] = np.nan
    tl[~need_lower] = np.nan

    missing = (need_upper & np.isnan(tu)) | (need_lower & np.isnan(tl))
    if np.any(missing):
        j = int(np.flatnonzero(missing)[0])
        raise InvalidTangentError(f"neuron {j} ({ActivationCase(int(case[j])).name}) is missing a tangent point")
    wrong_sign = (need_upper & (tu < 0)) | (need_lower & (tl > 0))
    if np.any(wrong_sign):
        j = int(np.flatnonzero(wrong_sign)[0])
        raise InvalidTangentError(f"neuron {j}: upper tangents must be >= 0 and lower tangents <= 0")

    c_slope, c_int = chord(kind, l, u)
    tu_slope, tu_int = tangent(kind, np.where(need_upper, tu, 0.0))
    tl_slope, tl_int = tangent(kind, np.where(need_lower, tl, 0.0))

    bad_upper = need_upper & (upper_gap(kind, tu_slope, tu_int, l, u) < -VALIDITY_TOL)
    bad_lower = need_lower & (lower_gap(kind, tl_slope, tl_int, l, u) < -VALIDITY_TOL)
    if np.any(bad_upper | bad_lower):
        j = int(np.flatnonzero(bad_upper | bad_lower)[0])
        side = "upper" if bad_upper[j] else "lower"
        d = tu[j] if bad_upper[j] else tl[j]
        raise InvalidTangentError(f"neuron {j}: {side} tangent at {d} is invalid on [{l[j]}, {u[j]}]")

    return LayerRelaxation(
        kind=kind,
        lower=l,
        upper=u,
        lower_slope=np.where(need_lower, tl_slope, c_slope),
        lower_intercept=np.where(need_lower, tl_int, c_int),
        upper_slope=np.where(need_upper, tu_slope, c_slope),
        upper_intercept=np.where(need_upper, tu_int, c_int),
        case=case,
        tangent_lower=tl,
        tangent_upper=tu,
    )


def relax_neuron(kind, l: float, u: float, tangent_lower=None, tangent_upper=None) -> NeuronRelaxation:
    layer = relax_layer(
        kind,
        [l],
        [u],
        None if tangent_lower is None else [tangent_lower],
        None if tangent_upper is None else [tangent_upper],
    )
    return layer.neuron(0)
