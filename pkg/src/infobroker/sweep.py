"""Randomised property suite: seeded scenario families plus per-instance checks.

Every instance solves the optimal menu and asserts the structural guarantees:
posted pricing earns at least half the optimum, no on-path acquisition, the
participation constraint binds below the monopoly type, the incentive audit
passes, direct and virtual revenue agree, and shrinking the agent's experiment
set raises revenue while lowering welfare and agent surplus.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .acquisition import CostModel
from .beliefs import Belief, StateSpace
from .mechanism import audit, agent_surplus, ir_binding_gap_below, revenue_direct, welfare
from .scenario import Scenario
from .solver import menu_revenue_refined, posted_price_optimal, solve_optimal
from .typedist import TypeDistribution
from .valuation import SeparableValuation

RATIO_TOL = 1e-6
IR_TOL = 1e-6
ONPATH_TOL = 1e-8
COMPARATIVE_TOL = 1e-6

DEFAULT_SPEC = {
    "count": 100,
    "seed": 42,
    "lambda_range": [0.1, 10.0],
    "prior_range": [0.1, 0.9],
    "type_families": ["uniform", "truncated_exponential"],
    "valuations": ["matching", "monopoly_binary"],
    "assertions": ["approximation", "onpath", "full_info_entry", "ir_binding",
                   "ic", "revenue_identity", "comparative"],
}


def _sample_scenario(rng: np.random.Generator, spec: dict, index: int) -> tuple[Scenario, dict]:
    lam_lo, lam_hi = spec["lambda_range"]
    lam = float(np.exp(rng.uniform(np.log(lam_lo), np.log(lam_hi))))
    p = float(rng.uniform(*spec["prior_range"]))
    val_kind = spec["valuations"][rng.integers(len(spec["valuations"]))]
    if val_kind == "matching":
        valuation = SeparableValuation.matching()
        params: dict = {}
    else:
        w1 = float(rng.uniform(0.5, 1.5))
        w2 = w1 + float(rng.uniform(0.5, 1.5))
        valuation = SeparableValuation.monopoly_binary(w1, w2)
        params = {"w1": w1, "w2": w2}
    fam = spec["type_families"][rng.integers(len(spec["type_families"]))]
    if fam == "uniform":
        b = float(rng.uniform(0.8, 3.0))
        types = TypeDistribution.uniform(0.0, b)
        params.update(family="uniform", high=b)
    else:
        rate = float(rng.uniform(0.5, 2.0))
        types = TypeDistribution.truncated_exponential(rate, 0.0, 8.0 / rate)
        params.update(family="truncated_exponential", rate=rate)
    sc = Scenario(
        states=StateSpace.binary(),
        prior=Belief.binary(p),
        valuation=valuation,
        cost=CostModel.posterior_separable(lam),
        types=types,
        name=f"sweep_{index}",
    )
    params.update(valuation=val_kind, prior=p, scale=lam)
    return sc, params


@dataclass(frozen=True)
class SweepRow:
    index: int
    params: dict
    revenue_opt: float
    revenue_pp: float
    ratio: float
    onpath: float
    ir_gap_below: float
    ic_min: float
    identity_gap: float
    revenue_singleton: float
    welfare: float
    welfare_singleton: float
    surplus: float
    surplus_singleton: float
    checks: dict

    @property
    def ok(self) -> bool:
        return all(self.checks.values())


@dataclass
class SweepResult:
    rows: list[SweepRow] = field(default_factory=list)
    first_failure: Optional[dict] = None  # scenario document for replay

    @property
    def n_failed(self) -> int:
        return sum(1 for r in self.rows if not r.ok)

    @property
    def all_ok(self) -> bool:
        return self.n_failed == 0


def evaluate_instance(sc: Scenario, index: int = 0, params: Optional[dict] = None,
                      assertions: Optional[list] = None, ic_sample: int = 50) -> SweepRow:
    assertions = assertions if assertions is not None else DEFAULT_SPEC["assertions"]
    mech = solve_optimal(sc)
    rep = audit(mech, sc, n_sample=ic_sample)
    rev = rep.revenue_direct
    scale = rep.scale
    pp = posted_price_optimal(sc)
    opt_refined = menu_revenue_refined(mech, sc)
    ratio = 1.0 if abs(opt_refined) < 1e-12 else pp.revenue / opt_refined
    theta_star = mech.meta_value("theta_star")
    ir_gap = ir_binding_gap_below(mech, sc, theta_star)
    sc_single = sc.replace_cost(CostModel.singleton())
    mech_single = solve_optimal(sc_single)
    rev_s = revenue_direct(mech_single, sc_single)
    wel_s = welfare(mech_single, sc_single)
    sur_s = agent_surplus(mech_single, sc_single)
    checks = {}
    if "approximation" in assertions:
        checks["approximation"] = 0.5 - RATIO_TOL <= ratio <= 1.0 + RATIO_TOL
    if "onpath" in assertions:
        checks["onpath"] = rep.onpath_cost <= ONPATH_TOL * scale
    if "full_info_entry" in assertions:
        checks["full_info_entry"] = mech.has_full_information_entry()
    if "ir_binding" in assertions:
        checks["ir_binding"] = ir_gap <= IR_TOL * scale
    if "ic" in assertions:
        checks["ic"] = rep.ic_pass
    if "revenue_identity" in assertions:
        checks["revenue_identity"] = rep.revenue_identity_pass
    if "comparative" in assertions:
        tol = COMPARATIVE_TOL * max(scale, abs(rev_s), 1.0)
        checks["comparative"] = (
            rev_s >= rev - tol
            and rep.welfare >= wel_s - tol
            and rep.agent_surplus >= sur_s - tol
        )
    return SweepRow(
        index=index,
        params=params or {},
        revenue_opt=rev,
        revenue_pp=pp.revenue,
        ratio=ratio,
        onpath=rep.onpath_cost,
        ir_gap_below=ir_gap,
        ic_min=rep.ic_min_integral,
        identity_gap=abs(rep.revenue_direct - rep.revenue_virtual),
        revenue_singleton=rev_s,
        welfare=rep.welfare,
        welfare_singleton=wel_s,
        surplus=rep.agent_surplus,
        surplus_singleton=sur_s,
        checks=checks,
    )


def run_sweep(spec: Optional[dict] = None) -> SweepResult:
    """Run the seeded sweep; deterministic for a given spec."""
    merged = dict(DEFAULT_SPEC)
    merged.update(spec or {})
    rng = np.random.default_rng(merged["seed"])
    result = SweepResult()
    for i in range(merged["count"]):
        sc, params = _sample_scenario(rng, merged, i)
        row = evaluate_instance(sc, index=i, params=params,
                                assertions=merged["assertions"])
        result.rows.append(row)
        if not row.ok and result.first_failure is None:
            from .serialize import scenario_to_json

            result.first_failure = scenario_to_json(sc)
    return result
