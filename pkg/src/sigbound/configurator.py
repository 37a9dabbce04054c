"""Per-instance configuration of the tangent search with sequential model-based optimisation.

A random forest models cost (the negated certified lower bound) as a function
of the four search hyper-parameters; new configurations maximise expected
improvement over a random candidate pool.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import norm
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.ensemble import RandomForestRegressor
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .model import InputRegion, Network
from .propagation import BoundResult, global_lower_bound
from .relaxation import InvalidTangentError
from .search import (
    DEFAULT_MAX_STEPS,
    LOWER_S_RANGE,
    PSI_RANGE,
    UPPER_S_RANGE,
    MultiplicativeSearch,
    SearchBudgetExceeded,
    SearchConfig,
)

logger = logging.getLogger(__name__)

PENALTY_COST = 1e6
N_UNIFORM_CANDIDATES = 1000
N_LOCAL_CANDIDATES = 100
LOCAL_STD_FRACTION = 0.1


@dataclass(frozen=True)
class ConfigSpace:
    """Axis-aligned box over ``(s_upper, psi_upper, s_lower, |psi_lower|)``."""

    low: tuple = (UPPER_S_RANGE[0], PSI_RANGE[0], LOWER_S_RANGE[0], PSI_RANGE[0])
    high: tuple = (UPPER_S_RANGE[1], PSI_RANGE[1], LOWER_S_RANGE[1], PSI_RANGE[1])

    def __post_init__(self):
        lo, hi = np.asarray(self.low, float), np.asarray(self.high, float)
        if lo.shape != (4,) or hi.shape != (4,) or np.any(lo > hi):
            raise ValueError("space bounds must be 4 ordered pairs")
        if lo[0] <= 0 or hi[2] >= 0 or lo[1] <= 1 or lo[3] <= 1:
            raise ValueError("space must keep s_upper > 0, s_lower < 0 and multipliers > 1")

    @property
    def bounds(self):
        return np.asarray(self.low, float), np.asarray(self.high, float)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        lo, hi = self.bounds
        return rng.uniform(lo, hi, size=(n, 4))

    def clip(self, x: np.ndarray) -> np.ndarray:
        lo, hi = self.bounds
        return np.clip(x, lo, hi)

    def contains(self, config: SearchConfig) -> bool:
        lo, hi = self.bounds
        x = config.as_array()
        return bool(np.all(x >= lo) and np.all(x <= hi))


@dataclass(frozen=True)
class Observation:
    config: SearchConfig
    cost: float
    failed: bool = False


@dataclass
class ConfiguratorResult:
    best_config: SearchConfig
    best_cost: float
    history: list[Observation]
    g_star: float
    incumbent_costs: list[float] = field(default_factory=list)

    @property
    def n_failed(self) -> int:
        return sum(o.failed for o in self.history)


class RandomForestSurrogate(BaseEstimator, RegressorMixin):
    """Random forest returning the across-tree mean and variance."""

    def __init__(self, n_estimators=10, max_features=0.8, min_samples_leaf=1, random_state=None):
        self.n_estimators = n_estimators
        self.max_features = max_features
        self.min_samples_leaf = min_samples_leaf
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.forest_ = RandomForestRegressor(
            n_estimators=self.n_estimators,
            max_features=self.max_features,
            min_samples_leaf=self.min_samples_leaf,
            bootstrap=True,
            random_state=self.random_state,
        ).fit(X, y)
        return self

    def predict(self, X, return_var=False):
        check_is_fitted(self, "forest_")
        X = check_array(X, dtype=np.float64)
        per_tree = np.stack([tree.predict(X) for tree in self.forest_.estimators_])
        mean = per_tree.mean(axis=0)
        if return_var:
            return mean, per_tree.var(axis=0)
        return mean


def evaluate_config(
    net_with_margin: Network,
    region: InputRegion,
    config: SearchConfig,
    max_steps: int = DEFAULT_MAX_STEPS,
    return_result: bool = False,
):
    """Cost of one configuration: the negated certified lower bound.

    Search failures do not raise; they come back as a penalty observation.
    """
    result: Optional[BoundResult] = None
    try:
        result = global_lower_bound(net_with_margin, region, MultiplicativeSearch(config, max_steps))
        obs = Observation(config, -result.g_star)
    except (SearchBudgetExceeded, InvalidTangentError) as exc:
        logger.debug("configuration %s failed: %s", config, exc)
        obs = Observation(config, PENALTY_COST, failed=True)
    if return_result:
        return obs, result
    return obs


def _training_data(history):
    X = np.array([o.config.as_array() for o in history])
    y = np.array([o.cost for o in history])
    return X, y


def fit_surrogate(history: list[Observation], seed=0) -> RandomForestSurrogate:
    if not history:
        raise ValueError("cannot fit a surrogate on an empty history")
    X, y = _training_data(history)
    return RandomForestSurrogate(random_state=seed).fit(X, y)


def expected_improvement(mean, std, best_cost):
    """Expected amount by which the cost drops below ``best_cost`` (minimisation)."""
    mean = np.asarray(mean, dtype=np.float64)
    std = np.asarray(std, dtype=np.float64)
    gain = best_cost - mean
    safe = np.where(std > 0, std, 1.0)
    z = gain / safe
    ei = np.where(std > 0, gain * norm.cdf(z) + std * norm.pdf(z), np.maximum(gain, 0.0))
    ei = np.maximum(ei, 0.0)
    return float(ei) if ei.ndim == 0 else ei


def model_expected_improvement(model: RandomForestSurrogate, configs, best_cost):
    X = np.atleast_2d([c.as_array() if isinstance(c, SearchConfig) else c for c in configs])
    mean, var = model.predict(X, return_var=True)
    return expected_improvement(mean, np.sqrt(var), best_cost)


def propose_next(model, history, space: ConfigSpace, rng: np.random.Generator) -> SearchConfig:
    """Expected-improvement argmax over uniform candidates plus incumbent perturbations."""
    lo, hi = space.bounds
    best = min(history, key=lambda o: o.cost)
    uniform = space.sample(rng, N_UNIFORM_CANDIDATES)
    local = best.config.as_array() + rng.normal(0.0, LOCAL_STD_FRACTION * (hi - lo), size=(N_LOCAL_CANDIDATES, 4))
    pool = np.vstack([uniform, space.clip(local)])
    ei = model_expected_improvement(model, pool, best.cost)
    return SearchConfig.from_array(pool[int(np.argmax(ei))])


def configure(
    net_with_margin: Network,
    region: InputRegion,
    space: Optional[ConfigSpace] = None,
    n_max: int = 150,
    n_init: int = 10,
    seed: int = 0,
    max_steps: int = DEFAULT_MAX_STEPS,
) -> ConfiguratorResult:
    """Search the configuration space for the tightest certified lower bound."""
    if n_init < 1 or n_max < n_init:
        raise ValueError("need 1 <= n_init <= n_max")
    space = space or ConfigSpace()
    rng = np.random.default_rng(seed)
    history: list[Observation] = []
    incumbent: Optional[Observation] = None
    trajectory: list[float] = []

    initial = [SearchConfig.from_array(x) for x in space.sample(rng, n_init)]
    for n in range(n_max):
        if n < n_init:
            config = initial[n]
        else:
            model = fit_surrogate(history, seed=int(rng.integers(2**31)))
            config = propose_next(model, history, space, rng)
        obs = evaluate_config(net_with_margin, region, config, max_steps)
        history.append(obs)
        if incumbent is None or obs.cost < incumbent.cost:
            incumbent = obs
        trajectory.append(incumbent.cost)

    return ConfiguratorResult(
        best_config=incumbent.config,
        best_cost=incumbent.cost,
        history=history,
        g_star=-incumbent.cost,
        incumbent_costs=trajectory,
    )
