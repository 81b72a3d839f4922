"""Optimal menus, posted pricing, approximation analysis, and the worst case.

The revenue-optimal menu gives every type above the monopoly type full
information at the price that makes the monopoly type indifferent, and gives
every lower type exactly the experiment she would have bought herself, priced
at its cost. Posted pricing for full revelation is provably within a factor
two of the optimum; ``worst_case`` constructs the instances that make that
bound tight.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .acquisition import CostModel, gaussian_extra_sampling, gaussian_menu_samples
from .beliefs import Belief, StateSpace
from .errors import DegenerateParameters, DimensionMismatch, GaussianScenarioError
from .mechanism import (
    FullInformation,
    GaussianSamples,
    Mechanism,
    NoInformation,
    SplittingSpec,
    agent_surplus,
    revenue_direct,
    welfare,
)
from .scenario import OutsideOption, Scenario
from .typedist import TypeDistribution, monopoly_type
from .valuation import SeparableValuation

PLAN_SIG_DECIMALS = 10
_BOUNDARY_PASSES = 3


def _plan_signature(sol) -> tuple:
    return (round(sol.quantity, PLAN_SIG_DECIMALS), round(sol.cost, PLAN_SIG_DECIMALS))


def _low_type_entry(sc: Scenario, theta: float):
    """Allocation and payment for a type below the monopoly type."""
    if sc.outside_option is not None:
        lo, hi = sc.types.support()
        c = sc.outside_option.value(theta)
        cp = sc.outside_option.derivative(theta, lo, hi)
        # envelope menu: utility pinned to the outside option, no experiment materialised
        return NoInformation(), theta * cp - c
    sol = sc.agent_solution(theta)
    if sol.plan.is_trivial:
        return NoInformation(), 0.0
    return SplittingSpec(sol.plan), sol.cost


def _insert_plan_boundaries(sc: Scenario, nodes: np.ndarray, theta_star: float) -> np.ndarray:
    """Add nodes where the agent's optimal plan switches discretely.

    Plans under finitely generated experiment sets change at isolated types;
    aligning nodes with the switches keeps the menu envelope-exact.
    """
    if sc.cost.kind != "finitely_generated" or sc.outside_option is not None:
        return nodes
    for _ in range(_BOUNDARY_PASSES):
        sols = {t: sc.agent_solution(t) for t in nodes if t < theta_star}
        extra = []
        low = [t for t in nodes if t < theta_star]
        for t1, t2 in zip(low, low[1:]):
            s1, s2 = sols[t1], sols[t2]
            if _plan_signature(s1) == _plan_signature(s2):
                continue
            dq = s1.quantity - s2.quantity
            if abs(dq) < 1e-12:
                continue
            tc = (s1.cost - s2.cost) / dq
            if t1 + 1e-9 < tc < t2 - 1e-9:
                extra.append(tc)
        if not extra:
            break
        nodes = np.unique(np.concatenate([nodes, extra]))
    return nodes


def solve_optimal(sc: Scenario, full_price: float | None = None) -> Mechanism:
    """Revenue-optimal menu on the scenario's type grid.

    Raises GaussianScenarioError for Gaussian-sampling scenarios (use
    ``solve_gaussian``) and IrregularDistribution when the revenue curve is
    not concave. With an explicit outside option the low-type branch carries
    the envelope payments directly and materialises no experiment.
    """
    if sc.is_gaussian:
        raise GaussianScenarioError("use solve_gaussian for sampling-cost scenarios")
    theta_star = monopoly_type(sc.types)
    nodes = sc.types.grid(sc.type_points, extra=[theta_star])
    nodes = _insert_plan_boundaries(sc, nodes, theta_star)
    if full_price is None:
        full_price = theta_star * sc.v_bar - sc.outside_value(theta_star)
    alloc, pay = [], []
    for t in nodes:
        if t >= theta_star - 1e-12:
            alloc.append(FullInformation())
            pay.append(full_price)
        else:
            a, p = _low_type_entry(sc, t)
            alloc.append(a)
            pay.append(p)
    return Mechanism(
        grid=tuple(float(t) for t in nodes),
        allocation=tuple(alloc),
        payment=tuple(pay),
        meta=(("theta_star", float(theta_star)), ("v_bar", float(sc.v_bar)),
              ("full_price", float(full_price))),
    )


def gaussian_switch_points(eta2: float, c: float, k_max: int) -> list[float]:
    """Types where the optimal sample count steps from k to k + 1."""
    return [c * (1 + k * eta2) * (1 + (k + 1) * eta2) / eta2**2 for k in range(k_max + 1)]


def solve_gaussian(types: TypeDistribution, eta2: float, c: float,
                   type_points: int = 501) -> Mechanism:
    """Menu of Gaussian sample bundles below the monopoly type, full revelation above.

    Low types get the sample count they would buy themselves at price k * c;
    full revelation is priced at theta_star * eta2 (the prior variance times
    the monopoly type).
    """
    if eta2 <= 0 or c <= 0:
        raise DimensionMismatch("need eta2 > 0 and c > 0")
    theta_star = monopoly_type(types)
    k_star = gaussian_menu_samples(eta2, c, theta_star)
    switches = [t for t in gaussian_switch_points(eta2, c, k_star + 1)
                if types.support()[0] < t < theta_star]
    nodes = types.grid(type_points, extra=[theta_star] + switches)
    full_price = theta_star * eta2
    alloc, pay = [], []
    for t in nodes:
        if t >= theta_star - 1e-12:
            alloc.append(FullInformation())
            pay.append(full_price)
        else:
            k = gaussian_menu_samples(eta2, c, t)
            alloc.append(GaussianSamples(k))
            pay.append(k * c)
    return Mechanism(
        grid=tuple(float(t) for t in nodes),
        allocation=tuple(alloc),
        payment=tuple(pay),
        meta=(("theta_star", float(theta_star)), ("full_price", float(full_price)),
              ("eta2", float(eta2)), ("sample_cost", float(c))),
    )


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PostedPriceResult:
    price: float
    cutoff: float
    revenue: float


def _pp_objective(sc: Scenario, theta: float) -> float:
    vbar = 0.0 if sc.is_gaussian else sc.v_bar
    price = theta * vbar - sc.outside_value(theta)
    return price * sc.types.exceedance(theta)


def posted_price_optimal(sc: Scenario) -> PostedPriceResult:
    """Best single price for full revelation; cutoff never exceeds the monopoly type."""
    theta_star = monopoly_type(sc.types)
    lo, _ = sc.types.support()
    nodes = sc.types.grid(sc.type_points, extra=[theta_star])
    nodes = nodes[nodes <= theta_star + 1e-12]
    vals = np.array([_pp_objective(sc, t) for t in nodes])
    i = int(np.argmax(vals))
    a = nodes[max(i - 1, 0)]
    b = nodes[min(i + 1, len(nodes) - 1)]
    gr = 0.6180339887498949
    c_pt = b - gr * (b - a)
    d_pt = a + gr * (b - a)
    fc, fd = _pp_objective(sc, c_pt), _pp_objective(sc, d_pt)
    for _ in range(80):
        if b - a < 1e-12:
            break
        if fc >= fd:
            b, d_pt, fd = d_pt, c_pt, fc
            c_pt = b - gr * (b - a)
            fc = _pp_objective(sc, c_pt)
        else:
            a, c_pt, fc = c_pt, d_pt, fd
            d_pt = a + gr * (b - a)
            fd = _pp_objective(sc, d_pt)
    cutoff = 0.5 * (a + b)
    best = max(float(vals[i]), _pp_objective(sc, cutoff))
    if best <= float(vals[i]):
        cutoff = float(nodes[i])
    vbar = 0.0 if sc.is_gaussian else sc.v_bar
    return PostedPriceResult(
        price=float(cutoff * vbar - sc.outside_value(cutoff)),
        cutoff=float(cutoff),
        revenue=float(best),
    )


def _low_branch_price(sc: Scenario, theta: float) -> float:
    if sc.outside_option is not None:
        lo, hi = sc.types.support()
        return theta * sc.outside_option.derivative(theta, lo, hi) - sc.outside_option.value(theta)
    return sc.agent_solution(theta).cost


def menu_revenue_refined(mech: Mechanism, sc: Scenario) -> float:
    """Continuum revenue of the menu the grid approximates.

    Payments below the monopoly type vary continuously under smooth cost
    models, so the step menu's left-priced revenue understates the limit
    first-order in the grid step; per-cell Simpson quadrature on the price
    curve removes the bias. Step-priced models (singleton, finitely
    generated) are already exact cell by cell.
    """
    grid = np.asarray(mech.grid)
    masses = sc.types.cell_masses(grid)
    smooth = sc.outside_option is not None or sc.cost.kind == "posterior_separable"
    total = float(masses[-1] * mech.payment[-1])
    for i in range(mech.n - 1):
        left_is_full = isinstance(mech.allocation[i], FullInformation)
        if left_is_full or not smooth:
            total += masses[i] * mech.payment[i]
            continue
        t_l, t_r = grid[i], grid[i + 1]
        t_m = 0.5 * (t_l + t_r)
        p_l = mech.payment[i]
        p_m = _low_branch_price(sc, t_m)
        p_r = _low_branch_price(sc, t_r)
        f_l, f_m, f_r = sc.types.pdf(t_l), sc.types.pdf(t_m), sc.types.pdf(t_r)
        total += (t_r - t_l) / 6.0 * (p_l * f_l + 4.0 * p_m * f_m + p_r * f_r)
    return total


def approximation_ratio(sc: Scenario) -> float:
    """Posted-price revenue over optimal-menu revenue; in [1/2, 1] up to tolerance.

    The denominator is the refined continuum menu revenue so that both sides
    of the ratio are measured at the same resolution as the refined cutoff.
    """
    if sc.is_gaussian:
        raise GaussianScenarioError("approximation analysis needs a belief-space scenario")
    opt = menu_revenue_refined(solve_optimal(sc), sc)
    pp = posted_price_optimal(sc).revenue
    if abs(opt) < 1e-12 and abs(pp) < 1e-12:
        return 1.0
    return float(pp / opt)


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InformativePriorReport:
    no_acquisition_at_monopoly: bool
    br_cost: float
    theta_star: float
    epsilon: float | None = None
    max_prior_prob: float | None = None
    bound_sufficient: bool | None = None


def informative_prior_check(sc: Scenario) -> InformativePriorReport:
    """Does the monopoly type decline to acquire information at the prior?

    When true, the optimal menu collapses to a posted price for full
    revelation. For finitely generated sets the report also carries the
    sufficient prior-concentration bound epsilon = c_min / (theta_star * v_bar).
    """
    theta_star = monopoly_type(sc.types)
    sol = sc.agent_solution(theta_star)
    no_acq = sol.cost <= 1e-9
    eps = max_p = suff = None
    if sc.cost.kind == "finitely_generated":
        c_min = min(c for _, c in sc.cost.generators)
        denom = theta_star * sc.v_bar
        if denom > 0:
            eps = c_min / denom
            max_p = max(sc.prior.probs)
            suff = max_p > 1.0 - eps
    return InformativePriorReport(
        no_acquisition_at_monopoly=no_acq,
        br_cost=float(sol.cost),
        theta_star=float(theta_star),
        epsilon=eps,
        max_prior_prob=max_p,
        bound_sufficient=suff,
    )


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ComparativeRow:
    label: str
    revenue: float
    welfare: float
    agent_surplus: float


@dataclass(frozen=True)
class ComparativeStaticsTable:
    rows: tuple[ComparativeRow, ...]
    violations: tuple[str, ...]

    @property
    def consistent(self) -> bool:
        return not self.violations


def _cost_label(model: CostModel) -> str:
    if model.kind == "singleton":
        return "singleton"
    if model.kind == "posterior_separable":
        return f"posterior_separable(scale={model.scale:g})"
    if model.kind == "finitely_generated":
        return f"finitely_generated({len(model.generators)})"
    return model.kind


def comparative_statics(sc: Scenario, variants, tol: float = 1e-6) -> ComparativeStaticsTable:
    """Revenue / welfare / agent-surplus table across nested experiment sets.

    Asserts revenue nonincreasing along the given order and welfare and agent
    surplus minimised at the singleton row; violations are reported, never
    swallowed.
    """
    rows = []
    for model in variants:
        sv = sc.replace_cost(model)
        mech = solve_optimal(sv)
        rows.append(ComparativeRow(
            label=_cost_label(model),
            revenue=revenue_direct(mech, sv),
            welfare=welfare(mech, sv),
            agent_surplus=agent_surplus(mech, sv),
        ))
    scale = max(1.0, max(abs(r.revenue) for r in rows))
    violations = []
    for r1, r2 in zip(rows, rows[1:]):
        if r2.revenue > r1.revenue + tol * scale:
            violations.append(
                f"revenue increased along the chain: {r1.label} {r1.revenue:.9g}"
                f" -> {r2.label} {r2.revenue:.9g}"
            )
    singles = [r for r in rows if r.label == "singleton"]
    if singles:
        s = singles[0]
        for r in rows:
            if r.welfare < s.welfare - tol * scale:
                violations.append(f"welfare below singleton at {r.label}")
            if r.agent_surplus < s.agent_surplus - tol * scale:
                violations.append(f"agent surplus below singleton at {r.label}")
    return ComparativeStaticsTable(rows=tuple(rows), violations=tuple(violations))


# ---------------------------------------------------------------------------


def worst_case(q_bar: float, r: float, type_points: int = 501) -> tuple[Scenario, float]:
    """Instance family that drives posted pricing toward half the optimum.

    Builds the truncated-Pareto-tail type distribution as a piecewise-linear
    quantile revenue curve (flat at 1 on [q_bar/2, q_bar], linear down to
    (1, r), top atom at 2/q_bar) together with the linear outside option that
    makes the seller indifferent over all posted prices. Returns the scenario
    and the predicted optimal-over-posted revenue ratio
    (1 - q_bar)(1 - r)/(1 - r q_bar) + 1.
    """
    if not (0.0 < q_bar < 1.0) or not (0.0 < r < 1.0):
        raise DegenerateParameters("need 0 < q_bar < 1 and 0 < r < 1")
    theta_top = 2.0 / q_bar
    points = [(0.0, 0.0), (1.0 / theta_top, 1.0), (q_bar, 1.0), (1.0, r)]
    types = TypeDistribution.quantile_curve(points)
    theta_star = 1.0 / q_bar
    slope = q_bar * (1.0 - r) / (1.0 - r * q_bar)
    outside = OutsideOption.from_callable(lambda t: slope * (t - theta_star))
    sc = Scenario(
        states=StateSpace.binary(),
        prior=Belief.binary(0.5),
        valuation=SeparableValuation.matching(),
        cost=CostModel.singleton(),
        types=types,
        type_points=type_points,
        outside_option=outside,
        name=f"worst_case(q_bar={q_bar:g}, r={r:g})",
    )
    predicted = (1.0 - q_bar) * (1.0 - r) / (1.0 - r * q_bar) + 1.0
    return sc, predicted
