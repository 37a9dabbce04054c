"""Tangent point selection.

Two strategies share the ``strategy(kind, l, u) -> (tangent_lower, tangent_upper)``
calling convention used by the bound propagation (arrays in, arrays out, NaN
where a neuron needs no tangent on that side):

* :class:`MultiplicativeSearch` starts every tangent point at ``s`` and keeps
  multiplying it by ``psi`` until the bounding line is valid.
* :func:`baseline_tangents` reproduces the default choice: interval midpoint
  for one-sided neurons, the tangent through the opposite endpoint for
  neurons that straddle zero (found by bisection).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .relaxation import (
    ActivationCase,
    classify_case,
    lower_gap,
    sigma,
    sigma_prime,
    tangent,
    upper_gap,
    VALIDITY_TOL,
)

DEFAULT_MAX_STEPS = 200
UPPER_S_RANGE = (0.01, 2.0)
LOWER_S_RANGE = (-2.0, -0.01)
PSI_RANGE = (1.01, 3.0)


class SearchBudgetExceeded(RuntimeError):
    """The multiplicative search ran out of steps before finding a valid line."""


@dataclass(frozen=True)
class SearchConfig:
    """Starting points and multipliers for the two bound sides.

    ``psi_lower`` is kept as a magnitude; the lower search scales the
    (negative) tangent point by ``|psi_lower|`` so the sign never flips.
    """

    s_upper: float
    psi_upper: float
    s_lower: float
    psi_lower: float

    def as_array(self) -> np.ndarray:
        return np.array([self.s_upper, self.psi_upper, self.s_lower, self.psi_lower])

    @classmethod
    def from_array(cls, values) -> "SearchConfig":
        return cls(*(float(v) for v in values))

    def to_dict(self) -> dict:
        return {
            "s_upper": self.s_upper,
            "psi_upper": self.psi_upper,
            "s_lower": self.s_lower,
            "psi_lower": self.psi_lower,
        }


def _geometric_search(valid_fn, start, factor, n, max_steps):
    d = np.full(n, start, dtype=np.float64)
    pending = ~valid_fn(d, np.ones(n, dtype=bool))
    steps = 0
    while np.any(pending):
        if steps >= max_steps:
            raise SearchBudgetExceeded(
                f"{int(pending.sum())} tangent point(s) still invalid after {max_steps} steps "
                f"(start={start}, multiplier={factor})"
            )
        d[pending] *= factor
        pending[pending] = ~valid_fn(d, pending)[pending]
        steps += 1
    return d


def search_upper_array(kind, l, u, s, psi, max_steps=DEFAULT_MAX_STEPS):
    if not s > 0:
        raise ValueError(f"upper search needs s > 0, got {s}")
    if not psi > 1:
        raise ValueError(f"upper search needs psi > 1, got {psi}")
    l = np.atleast_1d(np.asarray(l, dtype=np.float64))
    u = np.atleast_1d(np.asarray(u, dtype=np.float64))

    def valid(d, mask):
        ok = np.ones(d.shape[0], dtype=bool)
        slope, intercept = tangent(kind, d[mask])
        ok[mask] = upper_gap(kind, slope, intercept, l[mask], u[mask]) >= -VALIDITY_TOL
        return ok

    return _geometric_search(valid, float(s), float(psi), l.shape[0], max_steps)


def search_lower_array(kind, l, u, s, psi, max_steps=DEFAULT_MAX_STEPS):
    if not s < 0:
        raise ValueError(f"lower search needs s < 0, got {s}")
    factor = abs(psi)
    if not factor > 1:
        raise ValueError(f"lower search needs |psi| > 1, got {psi}")
    l = np.atleast_1d(np.asarray(l, dtype=np.float64))
    u = np.atleast_1d(np.asarray(u, dtype=np.float64))

    def valid(d, mask):
        ok = np.ones(d.shape[0], dtype=bool)
        slope, intercept = tangent(kind, d[mask])
        ok[mask] = lower_gap(kind, slope, intercept, l[mask], u[mask]) >= -VALIDITY_TOL
        return ok

    return _geometric_search(valid, float(s), factor, l.shape[0], max_steps)


def search_tangent_upper(kind, l, u, s, psi, max_steps=DEFAULT_MAX_STEPS) -> float:
    """First point of ``s, s*psi, s*psi**2, ...`` giving a valid upper tangent."""
    if l > u:
        raise ValueError("lower bound exceeds upper bound")
    if classify_case(l, u) is ActivationCase.SMINUS and l != u:
        raise ValueError("upper tangents are only searched for SPLUS and SMIXED neurons")
    return float(search_upper_array(kind, [l], [u], s, psi, max_steps)[0])


def search_tangent_lower(kind, l, u, s, psi, max_steps=DEFAULT_MAX_STEPS) -> float:
    """Mirror of :func:`search_tangent_upper` for the lower bounding line."""
    if l > u:
        raise ValueError("lower bound exceeds upper bound")
    if classify_case(l, u) is ActivationCase.SPLUS and l != u:
        raise ValueError("lower tangents are only searched for SMINUS and SMIXED neurons")
    return float(search_lower_array(kind, [l], [u], s, psi, max_steps)[0])


def _endpoint_residual(kind, d, anchor):
    return sigma_prime(kind, d) * (anchor - d) + sigma(kind, d) - sigma(kind, anchor)


def _upper_endpoint_array(kind, anchor, tol, max_bracket=1e6, max_iter=400):
    anchor = np.atleast_1d(np.asarray(anchor, dtype=np.float64))
    if np.any(anchor > 0):
        raise ValueError("upper-side anchor must be <= 0")
    lo = np.zeros_like(anchor)
    hi = np.ones_like(anchor)
    r0 = _endpoint_residual(kind, lo, anchor)
    done = r0 >= 0
    hi[done] = 0.0

    r_hi = _endpoint_residual(kind, hi, anchor)
    grow = ~done & (r_hi < 0)
    while np.any(grow):
        hi[grow] *= 2.0
        if np.any(hi[grow] > max_bracket):
            raise ArithmeticError("no sign change of the tangency residual below the bracket limit")
        r_hi[grow] = _endpoint_residual(kind, hi[grow], anchor[grow])
        grow = grow & (r_hi < 0)

    # invariant: residual(lo) < 0 <= residual(hi); hi is always the valid side
    active = ~done & (r_hi > tol)
    for _ in range(max_iter):
        if not np.any(active):
            break
        mid = 0.5 * (lo[active] + hi[active])
        r_mid = _endpoint_residual(kind, mid, anchor[active])
        right = r_mid >= 0
        idx = np.flatnonzero(active)
        hi[idx[right]] = mid[right]
        r_hi[idx[right]] = r_mid[right]
        lo[idx[~right]] = mid[~right]
        stalled = (hi[idx] - lo[idx]) <= np.spacing(hi[idx])
        active[idx] = (r_hi[idx] > tol) & ~stalled
    return hi


def endpoint_tangent_array(kind, anchor, side: str, tol: float = 1e-9):
    """Vectorised :func:`binary_search_endpoint_tangent`."""
    if side == "upper":
        return _upper_endpoint_array(kind, anchor, tol)
    if side == "lower":
        # sigmoid(-x) = 1 - sigmoid(x) and tanh is odd, so mirror the problem
        anchor = np.atleast_1d(np.asarray(anchor, dtype=np.float64))
        if np.any(anchor < 0):
            raise ValueError("lower-side anchor must be >= 0")
        return -_upper_endpoint_array(kind, -anchor, tol)
    raise ValueError(f"side must be 'upper' or 'lower', got {side!r}")


def binary_search_endpoint_tangent(kind, anchor: float, side: str, tol: float = 1e-9) -> float:
    """Tangent point whose tangent line passes through ``(anchor, sigma(anchor))``.

    For ``side="upper"`` the anchor is a negative lower bound and the result is
    >= 0; for ``side="lower"`` the anchor is a positive upper bound and the
    result is <= 0. The returned point always lies on the valid side of the
    exact solution, so the line is a sound bound on ``[anchor, 0]``.
    """
    return float(endpoint_tangent_array(kind, [anchor], side, tol)[0])


def baseline_tangents(kind, l, u, tol: float = 1e-9):
    """Default tangent choice for every neuron of a layer."""
    l = np.atleast_1d(np.asarray(l, dtype=np.float64))
    u = np.atleast_1d(np.asarray(u, dtype=np.float64))
    case = classify_case(l, u)
    live = l != u
    mid = 0.5 * (l + u)
    tl = np.full(l.shape, np.nan)
    tu = np.full(l.shape, np.nan)

    plus = live & (case == ActivationCase.SPLUS)
    minus = live & (case == ActivationCase.SMINUS)
    mixed = live & (case == ActivationCase.SMIXED)
    tu[plus] = mid[plus]
    tl[minus] = mid[minus]
    if np.any(mixed):
        tu[mixed] = endpoint_tangent_array(kind, l[mixed], "upper", tol)
        tl[mixed] = endpoint_tangent_array(kind, u[mixed], "lower", tol)
    return tl, tu


class MultiplicativeSearch:
    """Tangent strategy driven by one :class:`SearchConfig` for the whole network."""

    def __init__(self, config: SearchConfig, max_steps: int = DEFAULT_MAX_STEPS):
        self.config = config
        self.max_steps = max_steps

    def __call__(self, kind, l, u):
        l = np.atleast_1d(np.asarray(l, dtype=np.float64))
        u = np.atleast_1d(np.asarray(u, dtype=np.float64))
        case = classify_case(l, u)
        live = l != u
        tl = np.full(l.shape, np.nan)
        tu = np.full(l.shape, np.nan)
        up = live & (case != ActivationCase.SMINUS)
        down = live & (case != ActivationCase.SPLUS)
        cfg = self.config
        if np.any(up):
            tu[up] = search_upper_array(kind, l[up], u[up], cfg.s_upper, cfg.psi_upper, self.max_steps)
        if np.any(down):
            tl[down] = search_lower_array(kind, l[down], u[down], cfg.s_lower, cfg.psi_lower, self.max_steps)
        return tl, tu

    def __repr__(self):
        return f"MultiplicativeSearch({self.config!r}, max_steps={self.max_steps})"
