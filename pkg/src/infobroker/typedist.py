"""Type distributions, virtual values, monopoly type, and quantile revenue curves.

Expectations are taken in quantile space throughout: q(theta) = P(z >= theta)
is the exceedance, theta(q) its inverse, and R(q) = q * theta(q) the revenue
curve. Piecewise-linear quantile curves represent segments through the origin
as atoms, so truncated heavy-tailed constructions round-trip exactly.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .errors import DimensionMismatch, DiscreteUnsupported, IrregularDistribution

REGULARITY_TOL = 1e-9
_DENSITY_H = 1e-6


@dataclass(frozen=True)
class TypeDistribution:
    family: str
    a: float = 0.0
    b: float = 1.0
    rate: float = 1.0
    curve_q: Optional[tuple[float, ...]] = None
    curve_r: Optional[tuple[float, ...]] = None
    atoms: Optional[tuple[tuple[float, float], ...]] = None

    # -- constructors ------------------------------------------------
    @staticmethod
    def uniform(a: float, b: float) -> "TypeDistribution":
        if not (0 <= a < b):
            raise DimensionMismatch("uniform support needs 0 <= a < b")
        return TypeDistribution("uniform", a=float(a), b=float(b))

    @staticmethod
    def truncated_exponential(rate: float, a: float, b: float) -> "TypeDistribution":
        if rate <= 0 or not (0 <= a < b):
            raise DimensionMismatch("need rate > 0 and 0 <= a < b")
        return TypeDistribution("truncated_exponential", a=float(a), b=float(b), rate=float(rate))

    @staticmethod
    def quantile_curve(points) -> "TypeDistribution":
        """Piecewise-linear revenue curve from (q, R) control points.

        Points must start at (0, 0), end at q = 1, have strictly increasing q,
        and every segment's extrapolated intercept at q = 0 must be >= 0 so
        that theta(q) = R(q)/q is nonincreasing.
        """
        pts = [(float(q), float(r)) for q, r in points]
        qs = [p[0] for p in pts]
        rs = [p[1] for p in pts]
        if len(pts) < 2 or abs(qs[0]) > 1e-15 or abs(rs[0]) > 1e-15 or abs(qs[-1] - 1) > 1e-12:
            raise DimensionMismatch("control points must run from (0,0) to q = 1")
        if any(q2 <= q1 for q1, q2 in zip(qs, qs[1:])):
            raise DimensionMismatch("control-point quantiles must be strictly increasing")
        if rs[-1] < -1e-12:
            raise DimensionMismatch("types must be nonnegative: R(1) >= 0")
        for i in range(len(pts) - 1):
            slope = (rs[i + 1] - rs[i]) / (qs[i + 1] - qs[i])
            alpha = rs[i] - slope * qs[i]
            if alpha < -1e-10:
                raise DimensionMismatch("theta(q) = R(q)/q must be nonincreasing")
        return TypeDistribution("quantile_curve", curve_q=tuple(qs), curve_r=tuple(rs))

    @staticmethod
    def discrete(pairs) -> "TypeDistribution":
        at = tuple(sorted((float(t), float(p)) for t, p in pairs))
        if not at or any(p <= 0 for _, p in at) or abs(sum(p for _, p in at) - 1) > 1e-12:
            raise DimensionMismatch("atom probabilities must be positive and sum to 1")
        if any(t < 0 for t, _ in at):
            raise DimensionMismatch("types must be nonnegative")
        return TypeDistribution("discrete", atoms=at)

    # -- basic geometry ----------------------------------------------
    def support(self) -> tuple[float, float]:
        if self.family in ("uniform", "truncated_exponential"):
            return self.a, self.b
        if self.family == "quantile_curve":
            return float(self.curve_r[-1]), self._curve_slope(0)
        return self.atoms[0][0], self.atoms[-1][0]

    def _curve_slope(self, seg: int) -> float:
        q, r = self.curve_q, self.curve_r
        return (r[seg + 1] - r[seg]) / (q[seg + 1] - q[seg])

    def exceedance(self, theta: float) -> float:
        """q(theta) = P(z >= theta)."""
        lo, hi = self.support()
        if theta <= lo:
            return 1.0
        if self.family == "uniform":
            return float(np.clip((self.b - theta) / (self.b - self.a), 0.0, 1.0))
        if self.family == "truncated_exponential":
            if theta >= hi:
                return 0.0
            r = self.rate
            z = np.exp(-r * self.a) - np.exp(-r * self.b)
            return float((np.exp(-r * theta) - np.exp(-r * self.b)) / z)
        if self.family == "quantile_curve":
            if theta > hi:
                return 0.0
            # invert theta(q) = alpha/q + slope on each segment
            q, r = self.curve_q, self.curve_r
            for i in range(len(q) - 1):
                slope = self._curve_slope(i)
                alpha = r[i] - slope * q[i]
                th_right = (alpha / q[i + 1] + slope) if q[i + 1] > 0 else np.inf
                th_left = (alpha / q[i] + slope) if q[i] > 0 else np.inf
                if alpha <= 1e-15:  # atom segment at theta = slope
                    if theta > slope:
                        return float(q[i])
                    continue
                if th_right <= theta <= th_left + 1e-12:
                    return float(alpha / (theta - slope))
            return 1.0
        mass = sum(p for t, p in self.atoms if t >= theta)
        return float(mass)

    def theta_of_q(self, q: float) -> float:
        lo, hi = self.support()
        q = float(np.clip(q, 0.0, 1.0))
        if q <= 0.0:
            return hi
        if self.family == "uniform":
            return self.b - q * (self.b - self.a)
        if self.family == "truncated_exponential":
            r = self.rate
            z = np.exp(-r * self.a) - np.exp(-r * self.b)
            return float(-np.log(q * z + np.exp(-r * self.b)) / r)
        if self.family == "quantile_curve":
            return float(self.revenue_at_q(q) / q)
        cum = 0.0
        for t, p in reversed(self.atoms):
            cum += p
            if q <= cum + 1e-15:
                return t
        return lo

    def cdf(self, theta: float) -> float:
        if self.family == "discrete":
            return float(sum(p for t, p in self.atoms if t <= theta))
        return 1.0 - self.exceedance(theta)

    def pdf(self, theta: float) -> float:
        lo, hi = self.support()
        if theta < lo or theta > hi:
            return 0.0
        if self.family == "uniform":
            return 1.0 / (self.b - self.a)
        if self.family == "truncated_exponential":
            r = self.rate
            z = np.exp(-r * self.a) - np.exp(-r * self.b)
            return float(r * np.exp(-r * theta) / z)
        if self.family == "quantile_curve":
            h = _DENSITY_H
            return float(
                (self.exceedance(theta - h) - self.exceedance(theta + h)) / (2 * h)
            )
        raise DiscreteUnsupported("discrete families have no density")

    def revenue_at_q(self, q: float) -> float:
        """Revenue curve R(q) = q * theta(q)."""
        q = float(np.clip(q, 0.0, 1.0))
        if self.family == "quantile_curve":
            return float(np.interp(q, self.curve_q, self.curve_r))
        if q == 0.0:
            return 0.0
        return q * self.theta_of_q(q)

    @property
    def is_continuous(self) -> bool:
        return self.family in ("uniform", "truncated_exponential")

    # -- grid mass helpers -------------------------------------------
    def grid(self, n: int, extra=()) -> np.ndarray:
        lo, hi = self.support()
        g = np.linspace(lo, hi, n)
        if len(extra):
            g = np.unique(np.concatenate([g, np.asarray(extra, float)]))
            g = g[(g >= lo - 1e-12) & (g <= hi + 1e-12)]
        return g

    def cell_masses(self, grid: np.ndarray) -> np.ndarray:
        """P(cell_i) for the left-closed cells of a sorted grid ending at theta_max.

        The last entry is P(z >= grid[-1]), which carries any top atom.
        """
        qs = np.array([self.exceedance(t) for t in grid])
        m = np.empty(len(grid))
        m[:-1] = qs[:-1] - qs[1:]
        m[-1] = qs[-1]
        return np.clip(m, 0.0, None)

    def cell_virtual_masses(self, grid: np.ndarray) -> np.ndarray:
        """Exact integral of the virtual value over each cell: R(q_i) - R(q_{i+1})."""
        rs = np.array([self.revenue_at_q(self.exceedance(t)) for t in grid])
        out = np.empty(len(grid))
        out[:-1] = rs[:-1] - rs[1:]
        out[-1] = rs[-1]
        return out

    def band_mean(self, q_lo: float, q_hi: float, points: int = 2001) -> float:
        """Conditional mean of the type over the quantile band [q_lo, q_hi]."""
        qs = np.linspace(q_lo, q_hi, points)
        th = np.array([self.theta_of_q(q) for q in qs])
        return float(np.trapezoid(th, qs) / (q_hi - q_lo))


# ---------------------------------------------------------------------------


def virtual_value(dist: TypeDistribution, theta: float) -> float:
    """theta - (1 - F)/f, evaluated in closed form per family."""
    lo, hi = dist.support()
    if not (lo - 1e-12 <= theta <= hi + 1e-12):
        raise DimensionMismatch(f"type {theta} outside support [{lo}, {hi}]")
    if dist.family == "uniform":
        return 2.0 * theta - dist.b
    if dist.family == "truncated_exponential":
        r = dist.rate
        return theta - (1.0 - np.exp(-r * (dist.b - theta))) / r
    if dist.family == "quantile_curve":
        # marginal revenue: the slope of R at q(theta)
        q = dist.exceedance(theta)
        qs = dist.curve_q
        i = min(max(bisect_right(qs, q) - 1, 0), len(qs) - 2)
        if q <= qs[i] + 1e-15 and i > 0:
            i -= 1
        return dist._curve_slope(i)
    raise DiscreteUnsupported("virtual values need a continuous family; use the oracle")


@dataclass(frozen=True)
class RegularityReport:
    passed: bool
    max_violation: float
    tolerance: float = REGULARITY_TOL


def regularity_check(dist: TypeDistribution, points: int = 1001) -> RegularityReport:
    """Concavity sweep of the revenue curve by midpoint second differences."""
    qs = np.linspace(0.0, 1.0, points)
    if dist.family == "quantile_curve":
        qs = np.unique(np.concatenate([qs, np.asarray(dist.curve_q)]))
    if dist.family == "discrete":
        edges = np.array([dist.exceedance(t) for t, _ in dist.atoms])
        qs = np.unique(np.clip(np.concatenate([qs, edges, edges - 1e-9, edges + 1e-9]), 0, 1))
    rv = np.array([dist.revenue_at_q(q) for q in qs])
    viol = (rv[:-2] + rv[2:]) / 2.0 - rv[1:-1]
    worst = float(np.max(viol)) if len(viol) else 0.0
    return RegularityReport(passed=worst <= REGULARITY_TOL, max_violation=worst)


def monopoly_type(dist: TypeDistribution) -> float:
    """Lowest type with nonnegative virtual value, clamped into the support."""
    rep = regularity_check(dist)
    if not rep.passed:
        raise IrregularDistribution(
            f"revenue curve not concave (violation {rep.max_violation:.3g}); ironing unsupported"
        )
    lo, hi = dist.support()
    if dist.family == "uniform":
        return float(min(max(dist.b / 2.0, lo), hi))
    if dist.family == "truncated_exponential":
        if virtual_value(dist, lo) >= 0:
            return lo
        if virtual_value(dist, hi) < 0:
            return hi
        return float(brentq(lambda t: virtual_value(dist, t), lo, hi, xtol=1e-14))
    if dist.family == "quantile_curve":
        qs, n = dist.curve_q, len(dist.curve_q)
        q_star = qs[-1]
        for i in range(n - 1):
            if dist._curve_slope(i) < 0:
                q_star = qs[i]
                break
        q_star = max(q_star, qs[1] if abs(qs[0]) < 1e-15 else qs[0])
        return float(min(max(dist.theta_of_q(q_star), lo), hi))
    raise DiscreteUnsupported("monopoly type needs a continuous family")


def revenue_curve(dist: TypeDistribution, q: float) -> float:
    return dist.revenue_at_q(q)
