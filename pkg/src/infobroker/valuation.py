"""Convex per-belief valuations v(mu); total willingness to pay is v(mu) * theta.

Four families: ``matching`` (max posterior probability), ``neg_variance``
(negative posterior variance over numeric states), ``monopoly_binary``
(a reselling firm's profit under a two-point value distribution), and
``tabulated`` (piecewise-linear from sample points, binary states only).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .beliefs import Belief
from .errors import DimensionMismatch

CONVEXITY_TOL = 1e-9


def _lower_convex_hull(xs: np.ndarray, ys: np.ndarray):
    """Vertices of the lower convex hull of the sorted point set."""
    hx: list[float] = []
    hy: list[float] = []
    for x, y in zip(xs, ys):
        while len(hx) >= 2:
            cross = (hx[-1] - hx[-2]) * (y - hy[-2]) - (x - hx[-2]) * (hy[-1] - hy[-2])
            if cross <= 0:  # last vertex lies on/above the chord: drop it
                hx.pop()
                hy.pop()
            else:
                break
        hx.append(float(x))
        hy.append(float(y))
    return np.array(hx), np.array(hy)


@dataclass(frozen=True)
class SeparableValuation:
    """Convex function of the belief, scaled multiplicatively by the type."""

    kind: str
    w_low: float = 0.0
    w_high: float = 0.0
    state_values: Optional[tuple[float, ...]] = None
    tab_x: Optional[tuple[float, ...]] = None
    tab_y: Optional[tuple[float, ...]] = None

    # -- constructors ------------------------------------------------
    @staticmethod
    def matching() -> "SeparableValuation":
        return SeparableValuation("matching")

    @staticmethod
    def neg_variance(state_values) -> "SeparableValuation":
        vals = tuple(float(v) for v in state_values)
        if len(vals) < 2 or any(b <= a for a, b in zip(vals, vals[1:])):
            raise DimensionMismatch("neg_variance needs increasing state values")
        return SeparableValuation("neg_variance", state_values=vals)

    @staticmethod
    def monopoly_binary(w_low: float, w_high: float) -> "SeparableValuation":
        if not (0.0 < w_low < w_high):
            raise DimensionMismatch("monopoly_binary requires 0 < w_low < w_high")
        return SeparableValuation("monopoly_binary", w_low=float(w_low), w_high=float(w_high))

    @staticmethod
    def tabulated(points, envelope: bool = True) -> "SeparableValuation":
        """Piecewise-linear valuation on binary beliefs from (p_first, value) points.

        With ``envelope=True`` (default) the points are replaced by their lower
        convex hull and non-convex inputs are rejected; ``envelope=False`` keeps
        raw linear interpolation, which is how deliberately non-convex test
        fixtures are built.
        """
        pts = sorted((float(x), float(y)) for x, y in points)
        xs = np.array([p[0] for p in pts])
        ys = np.array([p[1] for p in pts])
        if len(xs) < 2 or xs[0] > 1e-12 or xs[-1] < 1 - 1e-12:
            raise DimensionMismatch("tabulated points must span [0, 1]")
        if np.any(np.diff(xs) <= 0):
            raise DimensionMismatch("tabulated points need distinct x values")
        if envelope:
            hx, hy = _lower_convex_hull(xs, ys)
            above = np.abs(np.interp(xs, hx, hy) - ys) > CONVEXITY_TOL
            if np.any(above):
                raise DimensionMismatch(
                    "tabulated points are not convex; offending x ="
                    f" {xs[above].tolist()}"
                )
            xs, ys = hx, hy
        return SeparableValuation("tabulated", tab_x=tuple(xs), tab_y=tuple(ys))

    # -- evaluation --------------------------------------------------
    @property
    def dim(self) -> Optional[int]:
        """State count this valuation is pinned to, if any."""
        if self.kind == "neg_variance":
            return len(self.state_values)
        if self.kind in ("monopoly_binary", "tabulated"):
            return 2
        return None

    def _check_dim(self, n: int):
        d = self.dim
        if d is not None and n != d:
            raise DimensionMismatch(f"{self.kind} valuation needs {d} states, got {n}")

    def eval_binary(self, x):
        """Vectorised value over binary beliefs; x is the first-state probability."""
        x = np.asarray(x, dtype=float)
        if self.kind == "matching":
            return np.maximum(x, 1.0 - x)
        if self.kind == "neg_variance":
            self._check_dim(2)
            a, b = self.state_values
            m = x * a + (1.0 - x) * b
            return -(x * a * a + (1.0 - x) * b * b - m * m)
        if self.kind == "monopoly_binary":
            w1, w2 = self.w_low, self.w_high
            with np.errstate(divide="ignore", invalid="ignore"):
                phi = np.where(x > 0, w1 - (1.0 - x) * (w2 - w1) / np.where(x > 0, x, 1.0), -np.inf)
            return x * np.maximum(0.0, phi) ** 2 / 4.0 + (1.0 - x) * w2 * w2 / 4.0
        if self.kind == "tabulated":
            return np.interp(x, self.tab_x, self.tab_y)
        raise DimensionMismatch(f"unknown valuation kind {self.kind}")

    def value(self, mu: Belief) -> float:
        self._check_dim(mu.n)
        if mu.n == 2:
            return float(self.eval_binary(mu.probs[0]))
        if self.kind == "matching":
            return float(max(mu.probs))
        if self.kind == "neg_variance":
            p = mu.as_array()
            v = np.asarray(self.state_values)
            m = float(p @ v)
            return -(float(p @ (v * v)) - m * m)
        raise DimensionMismatch(f"{self.kind} valuation is binary-state only")


def eval_v(val: SeparableValuation, mu: Belief) -> float:
    return val.value(mu)


def value_full_information(val: SeparableValuation, prior: Belief) -> float:
    """Expected value when the state is always fully revealed."""
    n = prior.n
    return float(
        sum(p * val.value(Belief.point_mass(n, i)) for i, p in enumerate(prior.probs) if p > 0)
    )


@dataclass(frozen=True)
class ConvexityReport:
    passed: bool
    max_violation: float
    tolerance: float = CONVEXITY_TOL


def check_convexity(
    val: SeparableValuation, grid_resolution: int = 101, dim: int = 2, seed: int = 0
) -> ConvexityReport:
    """Midpoint-convexity sweep over sampled simplex segments."""
    if grid_resolution < 3:
        raise DimensionMismatch("grid_resolution must be at least 3")
    d = val.dim or dim
    worst = 0.0
    if d == 2:
        xs = np.linspace(0.0, 1.0, grid_resolution)
        a, b = np.meshgrid(xs, xs)
        mid = (a + b) / 2.0
        viol = val.eval_binary(mid) - (val.eval_binary(a) + val.eval_binary(b)) / 2.0
        worst = float(np.max(viol))
    else:
        rng = np.random.default_rng(seed)
        for _ in range(max(grid_resolution, 200)):
            p = rng.dirichlet(np.ones(d))
            q = rng.dirichlet(np.ones(d))
            va = val.value(Belief(tuple(p)))
            vb = val.value(Belief(tuple(q)))
            vm = val.value(Belief(tuple((p + q) / 2.0)))
            worst = max(worst, vm - (va + vb) / 2.0)
    return ConvexityReport(passed=worst <= CONVEXITY_TOL, max_violation=worst)
