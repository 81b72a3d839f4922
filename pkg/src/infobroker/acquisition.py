"""Agent-side information acquisition: cost models, concavification, best responses.

The agent facing belief mu and type theta solves

    max over feasible plans of  theta * E[v(final posterior)] - expected cost.

For posterior-separable costs this is a concavification of theta*v + lam*H
evaluated at mu; for finitely generated experiment sets it is an optimal
stopping problem solved by value iteration on a belief grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _envelope as env
from .beliefs import Belief, Experiment, Splitting, induced_splitting, make_splitting, merge_atoms
from .errors import (
    DimensionMismatch,
    NonConvergence,
    UnattributedSplitting,
    UnsupportedBelief,
)
from .valuation import SeparableValuation

VALUE_TIE_TOL = 1e-9
DEFAULT_BELIEF_POINTS = 2001
FG_MAX_ITER = 10_000
FG_RESIDUAL = 1e-9
FG_MAX_DEPTH = 60


def entropy(mu: Belief) -> float:
    """Natural-log entropy of a belief."""
    p = mu.as_array()
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


@dataclass(frozen=True)
class CostModel:
    """Feasible experiment set and cost function for the agent."""

    kind: str
    scale: float = 1.0
    potential: str = "entropy"
    pot_x: Optional[tuple[float, ...]] = None
    pot_y: Optional[tuple[float, ...]] = None
    generators: tuple[tuple[Experiment, float], ...] = ()
    eta2: float = 0.0
    sample_cost: float = 0.0

    @staticmethod
    def singleton() -> "CostModel":
        return CostModel("singleton")

    @staticmethod
    def posterior_separable(scale: float = 1.0, potential="entropy") -> "CostModel":
        if scale <= 0:
            raise DimensionMismatch("cost scale must be positive")
        if potential == "entropy":
            return CostModel("posterior_separable", scale=float(scale))
        pts = sorted((float(x), float(y)) for x, y in potential)
        xs = np.array([p[0] for p in pts])
        ys = np.array([p[1] for p in pts])
        if len(xs) < 3 or xs[0] > 1e-12 or xs[-1] < 1 - 1e-12:
            raise DimensionMismatch("tabulated potential must span [0, 1]")
        mids = np.interp((xs[:-2] + xs[2:]) / 2.0, xs, ys)
        chords = (ys[:-2] + ys[2:]) / 2.0
        if np.any(mids < chords - 1e-9):
            raise DimensionMismatch("tabulated potential must be concave")
        return CostModel(
            "posterior_separable", scale=float(scale), potential="tabulated",
            pot_x=tuple(xs), pot_y=tuple(ys),
        )

    @staticmethod
    def finitely_generated(generators) -> "CostModel":
        gens = tuple((e, float(c)) for e, c in generators)
        if not gens:
            raise DimensionMismatch("need at least one generator")
        if any(c <= 0 for _, c in gens):
            raise DimensionMismatch("generator costs must be strictly positive")
        return CostModel("finitely_generated", generators=gens)

    @staticmethod
    def gaussian_sampling(eta2: float, sample_cost: float) -> "CostModel":
        if eta2 <= 0 or sample_cost <= 0:
            raise DimensionMismatch("gaussian sampling needs eta2 > 0 and cost > 0")
        return CostModel("gaussian_sampling", eta2=float(eta2), sample_cost=float(sample_cost))

    # ------------------------------------------------------------------
    def potential_value(self, mu: Belief) -> float:
        if self.kind != "posterior_separable":
            return 0.0
        if self.potential == "entropy":
            return entropy(mu)
        if mu.n != 2:
            raise DimensionMismatch("tabulated potentials support binary states only")
        return float(np.interp(mu.probs[0], self.pot_x, self.pot_y))

    @property
    def is_gaussian(self) -> bool:
        return self.kind == "gaussian_sampling"


@dataclass(frozen=True)
class SequentialPlan:
    """Stopping strategy over a finitely generated experiment set."""

    belief: Belief
    generator: Optional[int] = None  # None = stop here
    children: tuple[tuple[str, float, "SequentialPlan"], ...] = ()  # (signal, prob, plan)

    def leaves(self, weight: float = 1.0):
        if self.generator is None:
            yield self.belief, weight
            return
        for _, prob, child in self.children:
            yield from child.leaves(weight * prob)

    def expected_cost(self, model: CostModel) -> float:
        if self.generator is None:
            return 0.0
        c = model.generators[self.generator][1]
        return c + sum(p * child.expected_cost(model) for _, p, child in self.children)

    def splitting(self) -> Splitting:
        return make_splitting(self.belief, list(self.leaves()))

    def depth(self) -> int:
        if self.generator is None:
            return 0
        return 1 + max(child.depth() for _, _, child in self.children)


def cost(model: CostModel, split: Splitting, plan: Optional[SequentialPlan] = None) -> float:
    """Expected cost of producing the splitting under the cost model."""
    if split.is_trivial:
        return 0.0
    if model.kind == "singleton":
        raise UnsupportedBelief("singleton experiment set only produces the trivial splitting")
    if model.kind == "posterior_separable":
        h0 = model.potential_value(split.prior)
        he = split.expect(model.potential_value)
        return max(0.0, model.scale * (h0 - he))
    if model.kind == "finitely_generated":
        if plan is None:
            raise UnattributedSplitting(
                "finitely generated costs need the sequential plan that produced the splitting"
            )
        got = plan.splitting()
        want = Splitting(merge_atoms(split.atoms), split.prior)
        if len(got.atoms) != len(want.atoms) or any(
            a.max_norm_dist(b) > 1e-6 or abs(wa - wb) > 1e-6
            for (a, wa), (b, wb) in zip(got.atoms, want.atoms)
        ):
            raise UnattributedSplitting("plan does not generate the provided splitting")
        return plan.expected_cost(model)
    raise UnsupportedBelief("gaussian sampling costs are handled by the dedicated solver")


@dataclass(frozen=True)
class AcquisitionSolution:
    """Value, optimal posterior law, and expected cost of the agent's problem."""

    value: float
    plan: Splitting
    cost: float
    quantity: float  # E[v(final posterior)] under the plan
    tree: Optional[SequentialPlan] = None


def _objective_codes(val: SeparableValuation):
    if val.kind == "matching":
        return env.V_MATCHING, 0.0, 0.0, None, None
    if val.kind == "neg_variance":
        a, b = val.state_values
        return env.V_NEGVAR, a, b, None, None
    if val.kind == "monopoly_binary":
        return env.V_MONOP, val.w_low, val.w_high, None, None
    return env.V_TAB, 0.0, 0.0, val.tab_x, val.tab_y


def binary_objective(val: SeparableValuation, theta: float, model: Optional[CostModel]) -> env.BinaryObjective:
    """theta*v + lam*H packed for the envelope kernels."""
    vkind, va, vb, tx, ty = _objective_codes(val)
    lam, hkind, hx, hy = 0.0, env.H_NONE, None, None
    if model is not None and model.kind == "posterior_separable":
        lam = model.scale
        if model.potential == "entropy":
            hkind = env.H_ENTROPY
        else:
            hkind, hx, hy = env.H_TAB, model.pot_x, model.pot_y
    return env.BinaryObjective(theta, vkind, va, vb, tx, ty, lam, hkind, hx, hy)


def _split_from_support(res: env.SupportResult, prior: Belief) -> Splitting:
    if res.trivial:
        return Splitting.trivial(prior)
    p = prior.probs[0]
    wb = (p - res.a) / (res.b - res.a)
    pairs = [(Belief.binary(res.a), 1.0 - wb), (Belief.binary(res.b), wb)]
    return make_splitting(prior, [(b, w) for b, w in pairs if w > 1e-14])


def concavify(
    objective: Callable[[Belief], float] | env.BinaryObjective,
    prior: Belief,
    points: int = DEFAULT_BELIEF_POINTS,
    resolution: int = 40,
    grid: Optional[np.ndarray] = None,
) -> tuple[float, Splitting]:
    """Concave envelope of the objective at the prior with an optimal splitting."""
    if prior.n == 2:
        xs = grid if grid is not None else np.linspace(0.0, 1.0, points)
        if isinstance(objective, env.BinaryObjective):
            res = env.support_at(objective, prior.probs[0], xs)
        else:
            res = env.support_at_callable(lambda x: objective(Belief.binary(x)), prior.probs[0], xs)
        return res.value, _split_from_support(res, prior)
    value, atoms, weights = env.concavify_lp(
        lambda p: objective(Belief(tuple(p))), prior.as_array(), resolution
    )
    pairs = [(Belief(tuple(a)), float(w)) for a, w in zip(atoms, weights)]
    return value, make_splitting(prior, pairs)


# ---------------------------------------------------------------------------
# Finitely generated experiment sets: value iteration + plan extraction.


def _fg_tables(model: CostModel, xs: np.ndarray):
    """Per-generator signal marginals and posterior positions on the grid."""
    tables = []
    for exp, c in model.generators:
        if exp.n_states != 2:
            raise DimensionMismatch("value iteration supports binary states only")
        k = exp.as_array()
        margs, posts = [], []
        for j in range(len(exp.signals)):
            m = xs * k[0, j] + (1.0 - xs) * k[1, j]
            with np.errstate(invalid="ignore", divide="ignore"):
                post = np.where(m > 0, xs * k[0, j] / np.where(m > 0, m, 1.0), xs)
            margs.append(m)
            posts.append(np.clip(post, 0.0, 1.0))
        tables.append((np.array(margs), np.array(posts), c))
    return tables


def fg_value_function(model: CostModel, val: SeparableValuation, theta: float, xs: np.ndarray):
    """Fixed point of the stop/continue recursion on a binary belief grid."""
    stop = theta * val.eval_binary(xs)
    tables = _fg_tables(model, xs)
    v = stop.copy()
    for _ in range(FG_MAX_ITER):
        best = stop.copy()
        for margs, posts, c in tables:
            cont = -c * np.ones_like(xs)
            for m, post in zip(margs, posts):
                cont += m * np.interp(post, xs, v)
            np.maximum(best, cont, out=best)
        resid = float(np.max(np.abs(best - v)))
        v = best
        if resid < FG_RESIDUAL:
            return v
    raise NonConvergence(f"value iteration exceeded {FG_MAX_ITER} iterations")


def _fg_decision(model, val, theta, xs, vgrid, x: float, prefer_stop: bool = False):
    """Stop (None) or the generator index to run at belief x under the value function."""
    stop_val = float(theta * val.eval_binary(x))
    best_gain, best_g = -np.inf, None
    for g, (exp, c) in enumerate(model.generators):
        k = exp.as_array()
        cont = -c
        for j in range(len(exp.signals)):
            m = x * k[0, j] + (1.0 - x) * k[1, j]
            if m > 0:
                cont += m * float(np.interp(x * k[0, j] / m, xs, vgrid))
        if cont > best_gain:
            best_gain, best_g = cont, g
    # ties between stopping and continuing break toward the costlier plan,
    # unless the caller wants the stop-preferring limit
    margin = VALUE_TIE_TOL if prefer_stop else -VALUE_TIE_TOL
    if best_g is None or best_gain < stop_val + margin:
        return None
    return best_g


def _fg_execute(model, val, theta, xs, vgrid, start: Belief, prefer_stop: bool = False):
    """Run the optimal stopping policy from ``start``; may be recurrent.

    Propagates (belief, mass) pairs through the policy, merging beliefs within
    the canonical merge tolerance, until the continuing mass is negligible.
    Returns (stopped atom pairs, expected cost).
    """
    def key(x):
        return round(x, 10)

    decisions: dict[float, Optional[int]] = {}
    frontier: dict[float, float] = {key(start.probs[0]): 1.0}
    stopped: dict[float, float] = {}
    total_cost = 0.0
    for _ in range(FG_MAX_ITER):
        if not frontier:
            break
        if sum(frontier.values()) < 1e-13:
            for x, m in frontier.items():  # force-stop the negligible residual
                stopped[x] = stopped.get(x, 0.0) + m
            frontier = {}
            break
        new_frontier: dict[float, float] = {}
        for x, mass in frontier.items():
            g = decisions.get(x, False)
            if g is False:
                g = _fg_decision(model, val, theta, xs, vgrid, x, prefer_stop)
                decisions[x] = g
            if g is None:
                stopped[x] = stopped.get(x, 0.0) + mass
                continue
            exp, c = model.generators[g]
            total_cost += mass * c
            k = exp.as_array()
            for j in range(len(exp.signals)):
                m = x * k[0, j] + (1.0 - x) * k[1, j]
                if m > 0:
                    child = key(float(np.clip(x * k[0, j] / m, 0.0, 1.0)))
                    new_frontier[child] = new_frontier.get(child, 0.0) + mass * m
        frontier = new_frontier
    else:
        raise NonConvergence("optimal stopping policy failed to absorb")
    kept = [(x, m) for x, m in stopped.items() if m > 1e-12]
    total = sum(m for _, m in kept)
    pairs = [(Belief.binary(x), m / total) for x, m in kept]
    return pairs, total_cost


# ---------------------------------------------------------------------------


def _solution_from_split(val, theta, prior, split, acq_cost, tree=None) -> AcquisitionSolution:
    quantity = split.expect(val.value)
    return AcquisitionSolution(
        value=theta * quantity - acq_cost,
        plan=split,
        cost=acq_cost,
        quantity=quantity,
        tree=tree,
    )


def agent_value(
    model: CostModel,
    val: SeparableValuation,
    theta: float,
    mu: Belief,
    points: int = DEFAULT_BELIEF_POINTS,
    grid: Optional[np.ndarray] = None,
    prefer_stop: bool = False,
) -> AcquisitionSolution:
    """Optimal endogenous-acquisition value, plan, and cost at belief ``mu``.

    Ties between value-equal plans break toward the costlier one, matching the
    tie rule the optimal menu relies on; ``prefer_stop`` flips that to the
    limit from below in the type (used when integrating menu envelopes).
    """
    if theta < 0:
        raise DimensionMismatch("type must be nonnegative")
    if model.kind == "singleton":
        return _solution_from_split(val, theta, mu, Splitting.trivial(mu), 0.0)
    if model.kind == "posterior_separable":
        if mu.n == 2:
            obj = binary_objective(val, theta, model)
            xs = grid if grid is not None else np.linspace(0.0, 1.0, points)
            res = env.support_at(obj, mu.probs[0], xs, allow_tie_split=not prefer_stop)
            split = _split_from_support(res, mu)
        else:
            lam = model.scale
            fn = lambda b: theta * val.value(b) + lam * entropy(b)
            _, split = concavify(fn, mu, points=points)
        return _solution_from_split(val, theta, mu, split, cost(model, split))
    if model.kind == "finitely_generated":
        if mu.n != 2:
            raise DimensionMismatch("finitely generated models support binary states only")
        xs = grid if grid is not None else np.linspace(0.0, 1.0, points)
        vgrid = fg_value_function(model, val, theta, xs)
        pairs, acq_cost = _fg_execute(model, val, theta, xs, vgrid, mu, prefer_stop)
        atoms = merge_atoms(pairs)
        drift = abs(sum(w * b.probs[0] for b, w in atoms) - mu.probs[0])
        if drift > 1e-7:
            raise NonConvergence(f"stopping-policy mass drifted by {drift:.3g}")
        # key-rounding during propagation can drift the mean past the strict
        # Bayes tolerance; the drift bound above is the effective guarantee
        split = Splitting(atoms, mu, _skip_check=drift > 1e-10)
        return _solution_from_split(val, theta, mu, split, acq_cost)
    raise UnsupportedBelief(
        "gaussian sampling is solved in closed form at the prior by the dedicated solver"
    )


def best_response(
    model: CostModel,
    val: SeparableValuation,
    theta: float,
    mu: Belief,
    points: int = DEFAULT_BELIEF_POINTS,
    grid: Optional[np.ndarray] = None,
    prefer_stop: bool = False,
) -> AcquisitionSolution:
    """``agent_value`` with the cost-maximising tie rule made explicit."""
    return agent_value(model, val, theta, mu, points=points, grid=grid,
                       prefer_stop=prefer_stop)


# ---------------------------------------------------------------------------
# Gaussian sampling closed forms.


def gaussian_extra_sampling(eta2: float, c: float, theta: float, k_received: int = 0,
                            prefer_stop: bool = False):
    """Optimal number of extra unit-variance samples after ``k_received`` free ones.

    Returns (value, j_extra): value = max_j -theta * eta2/(1+(k+j)eta2) - j*c.
    Ties go to more sampling unless ``prefer_stop``.
    """
    if theta < 0:
        raise DimensionMismatch("type must be nonnegative")
    total_guess = eta2 * np.sqrt(max(theta, 0.0) / c)
    j_hi = int(np.ceil(max(total_guess - 1.0, 0.0) / eta2)) + 2
    js = np.arange(0, max(j_hi, 1) + 1)
    vals = -theta * eta2 / (1.0 + (k_received + js) * eta2) - js * c
    best = float(vals.max())
    tied = js[vals >= best - 1e-12]
    j = int(tied.min() if prefer_stop else tied.max())
    return float(vals[j]), j


def gaussian_menu_samples(eta2: float, c: float, theta: float) -> int:
    """Sample count maximising the type's net value at the prior."""
    _, j = gaussian_extra_sampling(eta2, c, theta, k_received=0)
    return j
