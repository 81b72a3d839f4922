"""Independent brute-force verification of optimal menus.

``enumerate_optimal`` searches every assignment of candidate experiments to a
small discrete type set; payments per assignment come from the least solution
of the incentive constraint system (the exact optimum of the payment LP,
computed by longest-path relaxation). ``verify_counterexample`` reproduces
the hard-coded two-type fixture in which a non-composable experiment set
makes on-path information acquisition strictly profitable.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .acquisition import CostModel, SequentialPlan, entropy
from .beliefs import (
    Belief,
    Experiment,
    Splitting,
    induced_splitting,
    make_splitting,
    posterior_update,
    signal_marginals,
)
from ._envelope import support_at_callable
from .errors import CapExceeded, DimensionMismatch, FixtureMismatch, InfeasiblePayments
from .mechanism import (
    AllocationSpec,
    FullInformation,
    Mechanism,
    NoInformation,
    SplittingSpec,
)
from .scenario import Scenario
from .solver import solve_optimal
from .typedist import monopoly_type
from .mechanism import revenue_direct

MAX_TYPES = 6
MAX_CANDIDATES = 200
MAX_PROFILES = 5_000_000
_CHUNK = 200_000
SLACK_TOL = 1e-9


# ---------------------------------------------------------------------------
# Agent models the oracle can evaluate candidates against.


class ScenarioAgent:
    """Best responses delegated to a scenario's acquisition machinery."""

    def __init__(self, sc: Scenario, thetas: Sequence[float]):
        self.sc = sc
        self.thetas = list(thetas)

    def value(self, i: int, mu: Belief) -> float:
        return self.sc.agent_solution(self.thetas[i], mu).value

    def response_cost(self, i: int, mu: Belief) -> float:
        return self.sc.agent_solution(self.thetas[i], mu).cost


class OneShotAgent:
    """Agent who runs exactly one experiment from a fixed, non-composable set."""

    def __init__(self, value_fns: Sequence[Callable[[float], float]],
                 experiments: Sequence[tuple[str, Optional[Experiment], Callable[[float], float]]]):
        self.value_fns = list(value_fns)  # per type, on the first-state probability
        self.experiments = list(experiments)  # (label, experiment or None for stop, cost(mu))

    def _options(self, i: int, mu: Belief):
        x = mu.probs[0]
        vfn = self.value_fns[i]
        for label, exp, costfn in self.experiments:
            if exp is None:
                yield label, float(vfn(x)), 0.0
                continue
            marg = signal_marginals(mu, exp)
            gross = 0.0
            for j, s in enumerate(exp.signals):
                if marg[j] > 0:
                    gross += marg[j] * vfn(posterior_update(mu, exp, s).probs[0])
            yield label, float(gross - costfn(x)), float(costfn(x))

    def value(self, i: int, mu: Belief) -> float:
        return max(v for _, v, _ in self._options(i, mu))

    def response_cost(self, i: int, mu: Belief) -> float:
        """Cost of the best option; ties break toward the costlier experiment."""
        best_v, best_c = -np.inf, 0.0
        for _, v, c in self._options(i, mu):
            if v > best_v + SLACK_TOL or (v > best_v - SLACK_TOL and c > best_c):
                best_v, best_c = max(v, best_v), c
        return best_c


class EntropyTableAgent:
    """Posterior-separable agent over arbitrary per-type value tables."""

    def __init__(self, value_fns: Sequence[Callable[[float], float]], scale: float,
                 points: int = 2001):
        self.value_fns = list(value_fns)
        self.scale = float(scale)
        self.xs = np.linspace(0.0, 1.0, points)
        self._grids: dict[int, np.ndarray] = {}

    def _support(self, i: int, mu: Belief):
        lam = self.scale
        fn = lambda x: self.value_fns[i](x) + lam * float(entropy(Belief.binary(x)))
        if i not in self._grids:
            self._grids[i] = np.array([fn(x) for x in self.xs])
        return support_at_callable(fn, mu.probs[0], self.xs, zoom_rounds=2,
                                   grid_z=self._grids[i])

    def value(self, i: int, mu: Belief) -> float:
        res = self._support(i, mu)
        return res.value - self.scale * float(entropy(mu))

    def response_cost(self, i: int, mu: Belief) -> float:
        res = self._support(i, mu)
        if res.trivial:
            return 0.0
        h = lambda x: float(entropy(Belief.binary(x)))
        p = mu.probs[0]
        wb = (p - res.a) / (res.b - res.a)
        return self.scale * (h(p) - (1 - wb) * h(res.a) - wb * h(res.b))


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DiscreteScenario:
    prior: Belief
    types: tuple[tuple[float, float], ...]  # (theta, probability), strictly increasing
    candidates: tuple[AllocationSpec, ...]
    agent: object

    def __post_init__(self):
        probs = [p for _, p in self.types]
        ths = [t for t, _ in self.types]
        if any(p <= 0 for p in probs) or abs(sum(probs) - 1.0) > 1e-9:
            raise DimensionMismatch("type probabilities must be positive and sum to 1")
        if any(b <= a for a, b in zip(ths, ths[1:])):
            raise DimensionMismatch("types must be strictly increasing")
        if not any(isinstance(c, NoInformation) for c in self.candidates):
            raise DimensionMismatch("candidates must include the null experiment")
        if not any(isinstance(c, FullInformation) for c in self.candidates):
            raise DimensionMismatch("candidates must include full revelation")


def _atoms_of(spec: AllocationSpec, prior: Belief):
    if isinstance(spec, FullInformation):
        return [(Belief.point_mass(prior.n, i), p) for i, p in enumerate(prior.probs) if p > 0]
    if isinstance(spec, NoInformation):
        return [(prior, 1.0)]
    if isinstance(spec, SplittingSpec):
        return list(spec.splitting.atoms)
    raise DimensionMismatch("oracle candidates must be belief-space experiments")


@dataclass(frozen=True)
class OracleResult:
    mechanism: Mechanism
    revenue: float
    assignment: tuple[int, ...]
    utilities: tuple[float, ...]
    outside: tuple[float, ...]
    onpath_cost: float


def _least_utilities(w_chosen: np.ndarray, out: np.ndarray):
    """Least solution of U_i >= out_i, U_i >= U_l + w[i,l] - w[l,l] (or None)."""
    k = len(out)
    g = w_chosen - np.tile(np.diag(w_chosen), (k, 1))
    u = out.astype(float).copy()
    for _ in range(k):
        nu = np.maximum(u, (u[None, :] + g).max(axis=1))
        if np.max(nu - u) <= 1e-15:
            u = nu
            break
        u = nu
    if np.max(np.maximum(u, (u[None, :] + g).max(axis=1)) - u) > 1e-9:
        return None  # positive cycle: no payments implement this assignment
    return u


def enumerate_optimal(dsc: DiscreteScenario) -> OracleResult:
    """Global revenue maximum over candidate assignments with exact payments."""
    k = len(dsc.types)
    m = len(dsc.candidates)
    if k > MAX_TYPES:
        raise CapExceeded(f"at most {MAX_TYPES} types, got {k}")
    if m > MAX_CANDIDATES:
        raise CapExceeded(f"at most {MAX_CANDIDATES} candidates, got {m}")
    if m**k > MAX_PROFILES:
        raise CapExceeded(f"{m}^{k} assignments exceed the {MAX_PROFILES} cap")

    f = np.array([p for _, p in dsc.types])
    # value matrix: type i receiving candidate j
    w = np.empty((k, m))
    for j, spec in enumerate(dsc.candidates):
        atoms = _atoms_of(spec, dsc.prior)
        for i in range(k):
            w[i, j] = sum(wt * dsc.agent.value(i, b) for b, wt in atoms)
    out = np.array([dsc.agent.value(i, dsc.prior) for i in range(k)])

    best_rev, best_profile = -np.inf, None
    profiles = itertools.product(range(m), repeat=k)
    while True:
        chunk = list(itertools.islice(profiles, _CHUNK))
        if not chunk:
            break
        idx = np.array(chunk)  # (n, k)
        n = idx.shape[0]
        # w_chosen[n, i, l] = w[i, idx[n, l]]
        w_chosen = w[:, idx].transpose(1, 0, 2)  # (n, k, k): [profile, i, l]
        own = w_chosen[:, np.arange(k), np.arange(k)]  # (n, k): type i gets its own item
        g = w_chosen - own[:, None, :]
        u = np.tile(out, (n, 1))
        for _ in range(k):
            u = np.maximum(u, (u[:, None, :] + g).max(axis=2))
        feasible = (np.maximum(u, (u[:, None, :] + g).max(axis=2)) - u).max(axis=1) <= 1e-9
        rev = ((own - u) * f[None, :]).sum(axis=1)
        rev[~feasible] = -np.inf
        j = int(np.argmax(rev))
        if rev[j] > best_rev:
            best_rev = float(rev[j])
            best_profile = tuple(int(x) for x in idx[j])
    if best_profile is None or not np.isfinite(best_rev):
        raise InfeasiblePayments("no assignment admits incentive compatible payments")

    w_chosen = w[:, list(best_profile)]
    u = _least_utilities(w_chosen, out)
    if u is None:
        raise InfeasiblePayments("winning assignment failed payment recovery")
    pay = np.diag(w_chosen) - u
    # re-audit: IC and IR slacks of the recovered payments
    for i in range(k):
        if u[i] < out[i] - SLACK_TOL:
            raise InfeasiblePayments(f"IR violated for type {i}")
        for l in range(k):
            if u[i] < w_chosen[i, l] - pay[l] - SLACK_TOL:
                raise InfeasiblePayments(f"IC violated for pair ({i}, {l})")
    onpath = 0.0
    for i, j in enumerate(best_profile):
        for b, wt in _atoms_of(dsc.candidates[j], dsc.prior):
            onpath += f[i] * wt * dsc.agent.response_cost(i, b)
    mech = Mechanism(
        grid=tuple(t for t, _ in dsc.types),
        allocation=tuple(dsc.candidates[j] for j in best_profile),
        payment=tuple(float(p) for p in pay),
        meta=(("oracle", 1.0),),
    )
    return OracleResult(
        mechanism=mech,
        revenue=best_rev,
        assignment=best_profile,
        utilities=tuple(float(x) for x in u),
        outside=tuple(float(x) for x in out),
        onpath_cost=float(onpath),
    )


# ---------------------------------------------------------------------------
# The two-type fixture with a non-composable experiment set.


def _fixture_pieces():
    e1 = Experiment(("s1", "s2"), ((2 / 3, 1 / 3), (1 / 3, 2 / 3)))
    prior = Belief.binary(0.5)

    def near(x, t):
        return abs(x - t) <= 1e-9

    v1 = lambda x: 3.0 if near(x, 0.8) or near(x, 0.2) else 0.0
    v2 = lambda x: 10.0 if near(x, 0.0) or near(x, 1.0) else 0.0
    cost_full = lambda x: 10.0 if (1 / 3 - 1e-12) <= x <= (2 / 3 + 1e-12) else 1.0
    full = Experiment(("w1", "w2"), ((1.0, 0.0), (0.0, 1.0)))
    agent = OneShotAgent(
        value_fns=[v1, v2],
        experiments=[
            ("none", None, lambda x: 0.0),
            ("e1", e1, lambda x: 1.0),
            ("full", full, cost_full),
        ],
    )
    from .beliefs import compose

    e1e1 = compose(e1, {"s1": e1, "s2": e1})
    candidates = (
        NoInformation(),
        SplittingSpec(induced_splitting(prior, e1)),
        SplittingSpec(induced_splitting(prior, e1e1)),
        FullInformation(),
    )
    return prior, agent, candidates, (v1, v2)


@dataclass(frozen=True)
class CounterexampleReport:
    revenue: float
    low_allocation: str
    low_price: float
    high_allocation: str
    high_price: float
    low_onpath_cost: float
    passed: bool


_CAND_LABELS = ("none", "one_round", "two_rounds", "full")


def verify_counterexample() -> CounterexampleReport:
    """Reproduce the fixture where the agent acquires information on path.

    The optimal restricted menu sells the single-round experiment to the low
    type at 2/3 and full revelation to the high type at 10 (revenue 16/3), and
    the low type strictly prefers to run the experiment once more after
    either signal.
    """
    prior, agent, candidates, _ = _fixture_pieces()
    dsc = DiscreteScenario(prior=prior, types=((1.0, 0.5), (2.0, 0.5)),
                           candidates=candidates, agent=agent)
    res = enumerate_optimal(dsc)
    lo_j, hi_j = res.assignment
    lo_p, hi_p = res.mechanism.payment
    diffs = []
    if _CAND_LABELS[lo_j] != "one_round":
        diffs.append(f"low-type allocation {_CAND_LABELS[lo_j]} != one_round")
    if _CAND_LABELS[hi_j] != "full":
        diffs.append(f"high-type allocation {_CAND_LABELS[hi_j]} != full")
    if abs(lo_p - 2.0 / 3.0) > 1e-9:
        diffs.append(f"low price {lo_p} != 2/3")
    if abs(hi_p - 10.0) > 1e-9:
        diffs.append(f"high price {hi_p} != 10")
    if abs(res.revenue - 16.0 / 3.0) > 1e-9:
        diffs.append(f"revenue {res.revenue} != 16/3")
    low_onpath = sum(
        wt * agent.response_cost(0, b) for b, wt in _atoms_of(candidates[lo_j], prior)
    )
    if low_onpath <= 1e-9:
        diffs.append("low type does not acquire information on path")
    if diffs:
        raise FixtureMismatch("; ".join(diffs))
    return CounterexampleReport(
        revenue=res.revenue,
        low_allocation=_CAND_LABELS[lo_j],
        low_price=float(lo_p),
        high_allocation=_CAND_LABELS[hi_j],
        high_price=float(hi_p),
        low_onpath_cost=float(low_onpath),
        passed=True,
    )


def counterexample_composable_costs(scale: Optional[float] = None):
    """Re-run the fixture under a composition-consistent entropy cost.

    The scale defaults to the value that prices the single-round splitting at
    exactly 1 from the uniform prior, matching the original fixed cost. On-path
    acquisition disappears at the new optimum.
    """
    prior, _, _, (v1, v2) = _fixture_pieces()
    e1 = Experiment(("s1", "s2"), ((2 / 3, 1 / 3), (1 / 3, 2 / 3)))
    split = induced_splitting(prior, e1)
    if scale is None:
        h = lambda b: entropy(b)
        drop = h(prior) - split.expect(h)
        scale = 1.0 / drop
    agent = EntropyTableAgent([v1, v2], scale)
    # two-point splittings on a grid containing the payoff-relevant posteriors
    xs = [round(0.05 * i, 10) for i in range(21)]
    pairs = [
        SplittingSpec(make_splitting(prior, [
            (Belief.binary(a), (b - 0.5) / (b - a)),
            (Belief.binary(b), (0.5 - a) / (b - a)),
        ]))
        for a in xs if a < 0.5 for b in xs if b > 0.5
    ]
    candidates = (NoInformation(), FullInformation(),
                  SplittingSpec(split),
                  SplittingSpec(induced_splitting(prior, Experiment(
                      ("a", "b", "c"), ((4/9, 4/9, 1/9), (1/9, 4/9, 4/9))))),
                  *pairs)
    dsc = DiscreteScenario(prior=prior, types=((1.0, 0.5), (2.0, 0.5)),
                           candidates=candidates, agent=agent)
    return enumerate_optimal(dsc)


# ---------------------------------------------------------------------------
# Cross validation of the grid solver against the enumeration oracle.


@dataclass(frozen=True)
class CrossValidationReport:
    opt_solver: float
    opt_oracle: float
    rel_gap: float
    n_types: int
    n_candidates: int
    passed: bool


def _fg_policy_splittings(sc: Scenario, max_depth: int = 3):
    """Induced splittings of every stopping policy up to the depth cap."""
    gens = [e for e, _ in sc.cost.generators]

    def plans(belief: Belief, depth: int):
        yield SequentialPlan(belief)
        if depth == 0:
            return
        for g, exp in enumerate(gens):
            margs = signal_marginals(belief, exp)
            per_signal = []
            for j, s in enumerate(exp.signals):
                if margs[j] <= 0:
                    continue
                post = posterior_update(belief, exp, s)
                per_signal.append([(s, float(margs[j]), child)
                                   for child in plans(post, depth - 1)])
            for combo in itertools.product(*per_signal):
                yield SequentialPlan(belief, g, tuple(combo))

    seen, out = set(), []
    for plan in plans(sc.prior, max_depth):
        split = plan.splitting()
        key = tuple((round(b.probs[0], 8), round(w, 8)) for b, w in split.atoms)
        if key in seen or split.is_trivial:
            continue
        seen.add(key)
        out.append(SplittingSpec(split))
    return out


def _fine_scan_split(sc: Scenario, theta: float, n: int = 400):
    """Best two-point splitting by direct grid search (independent of the solver path)."""
    p = sc.prior.probs[0]
    a = np.linspace(0.0, max(p - 1e-6, 0.0), n)
    b = np.linspace(min(p + 1e-6, 1.0), 1.0, n)
    A, B = np.meshgrid(a, b, indexing="ij")
    wb = (p - A) / (B - A)
    va = sc.valuation.eval_binary(A)
    vb = sc.valuation.eval_binary(B)
    lam = sc.cost.scale
    from ._envelope import entropy_binary

    ha = entropy_binary(A)
    hb = entropy_binary(B)
    hp = float(entropy_binary(np.array([p]))[0])
    val = theta * ((1 - wb) * va + wb * vb) - lam * (hp - (1 - wb) * ha - wb * hb)
    i, j = np.unravel_index(np.argmax(val), val.shape)
    stop = theta * sc.valuation.eval_binary(np.array([p]))[0]
    if val[i, j] <= stop + 1e-12:
        return None
    aa, bb = float(A[i, j]), float(B[i, j])
    wbb = (p - aa) / (bb - aa)
    return SplittingSpec(make_splitting(sc.prior, [
        (Belief.binary(aa), 1 - wbb), (Belief.binary(bb), wbb)]))


def _quantile_band_types(sc: Scenario, n_types: int):
    """Quantile bands aligned at the monopoly type, types at band lower endpoints.

    Placing each band's type at its lowest theta reproduces the continuum
    exceedance exactly at band edges, so the discrete problem is the step-menu
    restriction of the continuous one rather than a relaxation of it.
    """
    q_star = sc.types.exceedance(monopoly_type(sc.types))
    n_high = max(1, min(n_types - 1, round(n_types * q_star)))
    n_low = n_types - n_high
    edges = np.concatenate([
        np.linspace(0.0, q_star, n_high + 1)[:-1],
        np.linspace(q_star, 1.0, n_low + 1),
    ])
    merged: dict[float, float] = {}
    for q1, q2 in zip(edges, edges[1:]):
        t = round(sc.types.theta_of_q(q2), 12)
        merged[t] = merged.get(t, 0.0) + (q2 - q1)
    return tuple(sorted(merged.items()))


def cross_validate(sc: Scenario, n_types: int = 4, pair_grid: int = 7,
                   tol: float = 0.02) -> CrossValidationReport:
    """Solver optimum vs. brute-force optimum on a discretised twin scenario."""
    opt_solver = revenue_direct(solve_optimal(sc), sc)
    types = _quantile_band_types(sc, n_types)
    thetas = [t for t, _ in types]
    p = sc.prior.probs[0]
    candidates: list[AllocationSpec] = [NoInformation(), FullInformation()]

    def add_pairs(n):
        lefts = np.linspace(0.0, p, n)[:-1]
        rights = np.linspace(p, 1.0, n)[1:]
        for a in lefts:
            for b in rights:
                wb = (p - a) / (b - a)
                candidates.append(SplittingSpec(make_splitting(
                    sc.prior, [(Belief.binary(float(a)), 1 - wb),
                               (Belief.binary(float(b)), wb)])))

    if sc.cost.kind == "posterior_separable":
        add_pairs(pair_grid)
        for t in thetas:
            cand = _fine_scan_split(sc, t)
            if cand is not None:
                candidates.append(cand)
    elif sc.cost.kind == "finitely_generated":
        add_pairs(min(pair_grid, 5))
        candidates.extend(_fg_policy_splittings(sc))
    dsc = DiscreteScenario(
        prior=sc.prior, types=types, candidates=tuple(candidates),
        agent=ScenarioAgent(sc, thetas),
    )
    res = enumerate_optimal(dsc)
    gap = abs(opt_solver - res.revenue) / max(abs(opt_solver), 1e-12)
    return CrossValidationReport(
        opt_solver=float(opt_solver),
        opt_oracle=float(res.revenue),
        rel_gap=float(gap),
        n_types=len(types),
        n_candidates=len(candidates),
        passed=gap <= tol,
    )
