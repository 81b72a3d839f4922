"""Menus over a type grid, interim utilities, revenue identities, and audits.

A mechanism stores one allocation and payment per grid node and interpolates
piecewise-constant-from-left between nodes. Audits evaluate agent best
responses only at grid nodes; within-cell behaviour is a documented
discretisation, refined by adding nodes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .acquisition import gaussian_extra_sampling
from .beliefs import Belief, Splitting
from .errors import DimensionMismatch
from .scenario import Scenario

IC_TOL = 1e-6
IR_TOL = 1e-6
ONPATH_TOL = 1e-8
REV_IDENTITY_TOL = 1e-4
ACCOUNTING_TOL = 1e-8


@dataclass(frozen=True)
class FullInformation:
    pass


@dataclass(frozen=True)
class NoInformation:
    pass


@dataclass(frozen=True)
class SplittingSpec:
    splitting: Splitting


@dataclass(frozen=True)
class GaussianSamples:
    k: int

    def __post_init__(self):
        if self.k < 0 or self.k != int(self.k):
            raise DimensionMismatch("sample count must be a nonnegative integer")


AllocationSpec = Union[FullInformation, NoInformation, SplittingSpec, GaussianSamples]


@dataclass(frozen=True)
class Mechanism:
    grid: tuple[float, ...]
    allocation: tuple[AllocationSpec, ...]
    payment: tuple[float, ...]
    meta: tuple[tuple[str, float], ...] = ()

    def __post_init__(self):
        g = np.asarray(self.grid, float)
        if g.ndim != 1 or len(g) < 1 or np.any(np.diff(g) <= 0):
            raise DimensionMismatch("grid must be strictly increasing")
        if not (len(self.grid) == len(self.allocation) == len(self.payment)):
            raise DimensionMismatch("grid, allocation, payment must align")
        if not np.all(np.isfinite(self.payment)):
            raise DimensionMismatch("payments must be finite")

    @property
    def n(self) -> int:
        return len(self.grid)

    def meta_value(self, key: str, default=None):
        for k, v in self.meta:
            if k == key:
                return v
        return default

    def index_at(self, theta: float) -> int:
        i = int(np.searchsorted(self.grid, theta, side="right")) - 1
        return min(max(i, 0), self.n - 1)

    def allocation_at(self, theta: float) -> AllocationSpec:
        return self.allocation[self.index_at(theta)]

    def payment_at(self, theta: float) -> float:
        return self.payment[self.index_at(theta)]

    def has_full_information_entry(self) -> bool:
        return any(isinstance(a, FullInformation) for a in self.allocation)


# ---------------------------------------------------------------------------
# Agent-side evaluation of one allocation for one type.


def spec_atoms(sc: Scenario, spec: AllocationSpec) -> list[tuple[Belief, float]]:
    if isinstance(spec, FullInformation):
        n = sc.prior.n
        return [(Belief.point_mass(n, i), p) for i, p in enumerate(sc.prior.probs) if p > 0]
    if isinstance(spec, NoInformation):
        return [(sc.prior, 1.0)]
    if isinstance(spec, SplittingSpec):
        return list(spec.splitting.atoms)
    raise DimensionMismatch("gaussian allocations have no finite posterior atoms")


def _gaussian_parts(sc: Scenario, k: int, theta: float, prefer_stop: bool = False):
    eta2, c = sc.cost.eta2, sc.cost.sample_cost
    value, j = gaussian_extra_sampling(eta2, c, theta, k_received=k, prefer_stop=prefer_stop)
    quantity = -eta2 / (1.0 + (k + j) * eta2)
    return value, quantity, j * c


def value_of_spec(sc: Scenario, spec: AllocationSpec, theta: float,
                  prefer_stop: bool = False) -> float:
    """Gross continuation value: E over delivered posteriors of the agent's optimum."""
    if isinstance(spec, GaussianSamples):
        return _gaussian_parts(sc, spec.k, theta, prefer_stop)[0]
    return float(sum(w * sc.agent_solution(theta, b, prefer_stop).value
                     for b, w in spec_atoms(sc, spec)))


def quantity_of_spec(sc: Scenario, spec: AllocationSpec, theta: float,
                     prefer_stop: bool = False) -> float:
    """E[v(final posterior)]: the envelope slope of the continuation value in theta."""
    if isinstance(spec, GaussianSamples):
        return _gaussian_parts(sc, spec.k, theta, prefer_stop)[1]
    return float(sum(w * sc.agent_solution(theta, b, prefer_stop).quantity
                     for b, w in spec_atoms(sc, spec)))


def onpath_cost_of_spec(sc: Scenario, spec: AllocationSpec, theta: float,
                        prefer_stop: bool = False) -> float:
    """Expected cost of the extra experiments the agent runs after delivery."""
    if isinstance(spec, GaussianSamples):
        return _gaussian_parts(sc, spec.k, theta, prefer_stop)[2]
    return float(sum(w * sc.agent_solution(theta, b, prefer_stop).cost
                     for b, w in spec_atoms(sc, spec)))


def interim_utility(mech: Mechanism, sc: Scenario, theta: float) -> float:
    i = mech.index_at(theta)
    return value_of_spec(sc, mech.allocation[i], theta) - mech.payment[i]


# ---------------------------------------------------------------------------
# Revenue identities.


def revenue_direct(mech: Mechanism, sc: Scenario) -> float:
    """Expected payment with exact cell masses of the type distribution."""
    masses = sc.types.cell_masses(np.asarray(mech.grid))
    return float(np.dot(masses, np.asarray(mech.payment)))


def revenue_virtual(mech: Mechanism, sc: Scenario) -> float:
    """Virtual-surplus form: E[phi * quantity - on-path cost] - U(theta_low).

    Uses exact per-cell virtual masses (revenue-curve increments) and averages
    the integrand between each cell's endpoint types under the cell's own
    allocation, so the identity with direct revenue holds to quadrature error.
    """
    grid = np.asarray(mech.grid)
    masses = sc.types.cell_masses(grid)
    vmasses = sc.types.cell_virtual_masses(grid)
    # Under finitely generated costs the integrand is piecewise constant with
    # switch points inserted as nodes, so left values are cell-exact; smooth
    # cost models average both endpoints, taking the right one as the limit
    # from below so switches sitting exactly on a node do not leak leftward.
    endpoint_average = sc.cost.kind not in ("singleton", "finitely_generated")
    total = 0.0
    for i in range(mech.n):
        spec = mech.allocation[i]
        a_l = quantity_of_spec(sc, spec, grid[i])
        c_l = onpath_cost_of_spec(sc, spec, grid[i])
        if endpoint_average and i < mech.n - 1:
            a_r = quantity_of_spec(sc, spec, grid[i + 1], prefer_stop=True)
            c_r = onpath_cost_of_spec(sc, spec, grid[i + 1], prefer_stop=True)
        else:
            a_r, c_r = a_l, c_l
        total += vmasses[i] * 0.5 * (a_l + a_r) - masses[i] * 0.5 * (c_l + c_r)
    return float(total - interim_utility(mech, sc, grid[0]))


def welfare(mech: Mechanism, sc: Scenario) -> float:
    """E[theta * quantity - on-path acquisition cost] at grid nodes."""
    grid = np.asarray(mech.grid)
    masses = sc.types.cell_masses(grid)
    vals = [
        t * quantity_of_spec(sc, a, t) - onpath_cost_of_spec(sc, a, t)
        for t, a in zip(grid, mech.allocation)
    ]
    return float(np.dot(masses, vals))


def agent_surplus(mech: Mechanism, sc: Scenario) -> float:
    grid = np.asarray(mech.grid)
    masses = sc.types.cell_masses(grid)
    vals = [interim_utility(mech, sc, t) for t in grid]
    return float(np.dot(masses, vals))


def acquisition_audit(mech: Mechanism, sc: Scenario) -> float:
    """Expected on-path acquisition cost across the menu."""
    grid = np.asarray(mech.grid)
    masses = sc.types.cell_masses(grid)
    vals = [onpath_cost_of_spec(sc, a, t) for t, a in zip(grid, mech.allocation)]
    return float(np.dot(masses, vals))


# ---------------------------------------------------------------------------
# Incentive audits.


@dataclass(frozen=True)
class IcReport:
    min_integral: float
    worst_pair: tuple[float, float]
    passed: bool
    n_nodes: int


@dataclass(frozen=True)
class IrReport:
    min_slack: float
    binding: tuple[float, ...]  # grid nodes where the constraint binds
    passed: bool


def _audit_nodes(mech: Mechanism, n_sample: int, full: bool) -> np.ndarray:
    if full or mech.n <= n_sample:
        return np.arange(mech.n)
    return np.unique(np.round(np.linspace(0, mech.n - 1, n_sample)).astype(int))


def check_ic(mech: Mechanism, sc: Scenario, n_sample: int = 50, full: bool = False,
             scale: Optional[float] = None) -> IcReport:
    """Integral-monotonicity audit over a stratified subsample of report pairs.

    For every target report theta' and every true type theta, the signed
    integral of (own-report envelope slope minus deviation slope) over
    [theta', theta] must be nonnegative.
    """
    idx = _audit_nodes(mech, n_sample, full)
    ts = np.asarray(mech.grid)[idx]
    a_own = np.array([quantity_of_spec(sc, mech.allocation[i], t) for i, t in zip(idx, ts)])
    scale = scale if scale is not None else max(1.0, abs(revenue_direct(mech, sc)))
    worst = np.inf
    worst_pair = (ts[0], ts[0])
    for jj, j in enumerate(idx):
        spec_j = mech.allocation[j]
        b_j = np.array([quantity_of_spec(sc, spec_j, t) for t in ts])
        diff = a_own - b_j
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (diff[1:] + diff[:-1]) * np.diff(ts))])
        gaps = cum - cum[jj]
        k = int(np.argmin(gaps))
        if gaps[k] < worst:
            worst = float(gaps[k])
            worst_pair = (float(ts[k]), float(ts[jj]))
    return IcReport(
        min_integral=float(worst),
        worst_pair=worst_pair,
        passed=worst >= -IC_TOL * scale,
        n_nodes=len(idx),
    )


def check_ir(mech: Mechanism, sc: Scenario, scale: Optional[float] = None) -> IrReport:
    grid = np.asarray(mech.grid)
    slacks = np.array([interim_utility(mech, sc, t) - sc.outside_value(t) for t in grid])
    scale = scale if scale is not None else max(1.0, abs(revenue_direct(mech, sc)))
    binding = tuple(float(t) for t, s in zip(grid, slacks) if s <= IR_TOL * scale)
    return IrReport(
        min_slack=float(slacks.min()),
        binding=binding,
        passed=float(slacks.min()) >= -IR_TOL * scale,
    )


@dataclass(frozen=True)
class AuditReport:
    revenue_direct: float
    revenue_virtual: float
    ic_min_integral: float
    ir_min_slack: float
    onpath_cost: float
    welfare: float
    agent_surplus: float
    scale: float
    ic_pass: bool
    ir_pass: bool
    onpath_pass: bool
    revenue_identity_pass: bool
    accounting_pass: bool
    ir_binding: tuple[float, ...] = ()

    @property
    def all_pass(self) -> bool:
        return (self.ic_pass and self.ir_pass and self.onpath_pass
                and self.revenue_identity_pass and self.accounting_pass)


def audit(mech: Mechanism, sc: Scenario, n_sample: int = 50, full_ic: bool = False) -> AuditReport:
    rev_d = revenue_direct(mech, sc)
    scale = max(1.0, abs(rev_d))
    rev_v = revenue_virtual(mech, sc)
    ic = check_ic(mech, sc, n_sample=n_sample, full=full_ic, scale=scale)
    ir = check_ir(mech, sc, scale=scale)
    onc = acquisition_audit(mech, sc)
    w = welfare(mech, sc)
    surp = agent_surplus(mech, sc)
    return AuditReport(
        revenue_direct=rev_d,
        revenue_virtual=rev_v,
        ic_min_integral=ic.min_integral,
        ir_min_slack=ir.min_slack,
        onpath_cost=onc,
        welfare=w,
        agent_surplus=surp,
        scale=scale,
        ic_pass=ic.passed,
        ir_pass=ir.passed,
        onpath_pass=onc <= ONPATH_TOL * scale,
        revenue_identity_pass=abs(rev_d - rev_v) <= REV_IDENTITY_TOL * scale,
        accounting_pass=abs(w - surp - rev_d) <= ACCOUNTING_TOL * scale,
        ir_binding=ir.binding,
    )


def ir_binding_gap_below(mech: Mechanism, sc: Scenario, theta_star: float) -> float:
    """max |U(theta) - outside(theta)| over grid nodes up to the monopoly type."""
    gaps = [
        abs(interim_utility(mech, sc, t) - sc.outside_value(t))
        for t in mech.grid
        if t <= theta_star + 1e-12
    ]
    return float(max(gaps)) if gaps else 0.0
