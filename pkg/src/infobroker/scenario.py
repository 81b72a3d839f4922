"""Scenario bundle: primitives plus a memoised agent-response oracle."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .acquisition import AcquisitionSolution, CostModel, best_response
from .beliefs import Belief, StateSpace
from .errors import DimensionMismatch
from .typedist import TypeDistribution
from .valuation import SeparableValuation, value_full_information

_DERIV_H = 1e-6


@dataclass(frozen=True)
class OutsideOption:
    """Explicit reservation-utility curve c(theta) overriding self-acquisition."""

    fn: Callable[[float], float]
    points: Optional[tuple[tuple[float, float], ...]] = None

    @staticmethod
    def from_points(points) -> "OutsideOption":
        pts = sorted((float(t), float(c)) for t, c in points)
        xs = np.array([p[0] for p in pts])
        ys = np.array([p[1] for p in pts])
        if len(xs) < 2 or np.any(np.diff(xs) <= 0):
            raise DimensionMismatch("outside option needs increasing sample thetas")
        fn = lambda t: float(np.interp(t, xs, ys))
        return OutsideOption(fn=fn, points=tuple(pts))

    @staticmethod
    def from_callable(fn) -> "OutsideOption":
        return OutsideOption(fn=fn)

    def value(self, theta: float) -> float:
        return float(self.fn(theta))

    def derivative(self, theta: float, lo: float, hi: float) -> float:
        h = min(_DERIV_H, (hi - lo) / 4.0)
        a = max(theta - h, lo)
        b = min(theta + h, hi)
        return (self.value(b) - self.value(a)) / (b - a)

    def validate(self, lo: float, hi: float, vbar: float, points: int = 201):
        ts = np.linspace(lo, hi, points)
        cs = np.array([self.value(t) for t in ts])
        if np.any(np.diff(cs) < -1e-9):
            raise DimensionMismatch("outside option must be nondecreasing")
        second = cs[:-2] + cs[2:] - 2 * cs[1:-1]
        if np.any(second < -1e-8):
            raise DimensionMismatch("outside option must be convex")
        if np.any(cs > ts * vbar + 1e-9):
            raise DimensionMismatch("outside option may not exceed theta * full-information value")


@dataclass
class Scenario:
    """All primitives of one selling problem, with caches for repeated queries."""

    states: StateSpace
    prior: Belief
    valuation: SeparableValuation
    cost: CostModel
    types: TypeDistribution
    belief_points: int = 2001
    type_points: int = 501
    outside_option: Optional[OutsideOption] = None
    name: str = ""
    _belief_grid: Optional[np.ndarray] = field(default=None, repr=False, compare=False)
    _memo: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.cost.is_gaussian:
            return  # continuous-state closed forms bypass the belief machinery
        if self.prior.n != self.states.n:
            raise DimensionMismatch("prior dimension does not match the state space")
        d = self.valuation.dim
        if d is not None and d != self.states.n:
            raise DimensionMismatch("valuation dimension does not match the state space")
        if self.outside_option is not None:
            lo, hi = self.types.support()
            self.outside_option.validate(lo, hi, self.v_bar)

    # -- cached primitives -------------------------------------------
    @property
    def is_gaussian(self) -> bool:
        return self.cost.is_gaussian

    @property
    def belief_grid(self) -> np.ndarray:
        if self._belief_grid is None:
            self._belief_grid = np.linspace(0.0, 1.0, self.belief_points)
        return self._belief_grid

    @property
    def v_bar(self) -> float:
        key = ("v_bar",)
        if key not in self._memo:
            self._memo[key] = value_full_information(self.valuation, self.prior)
        return self._memo[key]

    @property
    def v_prior(self) -> float:
        key = ("v_prior",)
        if key not in self._memo:
            self._memo[key] = self.valuation.value(self.prior)
        return self._memo[key]

    # -- agent oracle --------------------------------------------------
    def agent_solution(self, theta: float, mu: Optional[Belief] = None,
                       prefer_stop: bool = False) -> AcquisitionSolution:
        """Memoised best response at (theta, mu); ties break toward the costlier
        plan unless ``prefer_stop`` asks for the stop-preferring limit."""
        if mu is None:
            mu = self.prior
        key = (round(float(theta), 12), prefer_stop) + tuple(round(p, 12) for p in mu.probs)
        hit = self._memo.get(key)
        if hit is None:
            grid = self.belief_grid if mu.n == 2 else None
            hit = best_response(self.cost, self.valuation, float(theta), mu,
                                points=self.belief_points, grid=grid,
                                prefer_stop=prefer_stop)
            self._memo[key] = hit
        return hit

    def outside_value(self, theta: float) -> float:
        """Reservation utility: explicit curve if present, else self-acquisition."""
        if self.outside_option is not None:
            return self.outside_option.value(float(theta))
        return self.agent_solution(theta).value

    def replace_cost(self, cost: CostModel) -> "Scenario":
        return Scenario(
            states=self.states, prior=self.prior, valuation=self.valuation,
            cost=cost, types=self.types, belief_points=self.belief_points,
            type_points=self.type_points, outside_option=self.outside_option,
            name=self.name,
        )
