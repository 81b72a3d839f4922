"""Finite state spaces, beliefs, experiments, and splittings of posteriors.

Everything here is immutable and pure; values validate themselves at
construction so downstream code can assume well-formedness.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import DimensionMismatch, ZeroProbabilitySignal

MAX_STATES = 16
PROB_SUM_TOL = 1e-12
BAYES_TOL = 1e-10
MERGE_TOL = 1e-9


@dataclass(frozen=True)
class StateSpace:
    """Finite set of states, optionally carrying a real value per state."""

    labels: tuple[str, ...]
    values: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        if not self.labels:
            raise DimensionMismatch("state space must be nonempty")
        if len(self.labels) > MAX_STATES:
            raise DimensionMismatch(f"at most {MAX_STATES} states supported")
        if len(set(self.labels)) != len(self.labels):
            raise DimensionMismatch("state labels must be distinct")
        if self.values is not None:
            if len(self.values) != len(self.labels):
                raise DimensionMismatch("one value per state required")
            if any(b <= a for a, b in zip(self.values, self.values[1:])):
                raise DimensionMismatch("state values must be strictly increasing")

    @property
    def n(self) -> int:
        return len(self.labels)

    @staticmethod
    def binary(labels: Sequence[str] = ("w1", "w2"), values=None) -> "StateSpace":
        return StateSpace(tuple(labels), None if values is None else tuple(values))


@dataclass(frozen=True)
class Belief:
    """Probability vector over the states of some (implicit) state space."""

    probs: tuple[float, ...]

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise DimensionMismatch("belief must be a nonempty vector")
        if np.any(p < -1e-12):
            raise DimensionMismatch(f"negative probability in belief {self.probs}")
        s = float(p.sum())
        if abs(s - 1.0) > PROB_SUM_TOL:
            raise DimensionMismatch(f"belief sums to {s}, not 1")
        p = np.clip(p, 0.0, None) / np.clip(p, 0.0, None).sum()
        object.__setattr__(self, "probs", tuple(float(x) for x in p))

    @property
    def n(self) -> int:
        return len(self.probs)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.probs, dtype=float)

    @staticmethod
    def point_mass(n: int, index: int) -> "Belief":
        p = [0.0] * n
        p[index] = 1.0
        return Belief(tuple(p))

    @staticmethod
    def uniform(n: int) -> "Belief":
        return Belief(tuple([1.0 / n] * n))

    @staticmethod
    def binary(p_first: float) -> "Belief":
        return Belief((float(p_first), 1.0 - float(p_first)))

    def max_norm_dist(self, other: "Belief") -> float:
        return float(np.max(np.abs(self.as_array() - other.as_array())))

    def is_point_mass(self, tol: float = 1e-12) -> bool:
        return max(self.probs) >= 1.0 - tol


@dataclass(frozen=True)
class Experiment:
    """Signal structure: one probability row over signals per state."""

    signals: tuple[str, ...]
    kernel: tuple[tuple[float, ...], ...]  # kernel[state][signal]

    def __post_init__(self):
        if not self.signals:
            raise DimensionMismatch("experiment needs at least one signal")
        k = np.asarray(self.kernel, dtype=float)
        if k.ndim != 2 or k.shape[1] != len(self.signals):
            raise DimensionMismatch("kernel must be states x signals")
        if np.any(k < -1e-12):
            raise DimensionMismatch("kernel rows must be nonnegative")
        rows = k.sum(axis=1)
        if np.any(np.abs(rows - 1.0) > PROB_SUM_TOL):
            raise DimensionMismatch("each kernel row must sum to 1")
        k = np.clip(k, 0.0, None)
        k = k / k.sum(axis=1, keepdims=True)
        object.__setattr__(
            self, "kernel", tuple(tuple(float(x) for x in row) for row in k)
        )

    @property
    def n_states(self) -> int:
        return len(self.kernel)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.kernel, dtype=float)


@dataclass(frozen=True)
class Splitting:
    """Bayes-plausible distribution over posterior beliefs."""

    atoms: tuple[tuple[Belief, float], ...]
    prior: Belief
    _skip_check: bool = field(default=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.atoms:
            raise DimensionMismatch("splitting needs at least one atom")
        w = np.array([wt for _, wt in self.atoms], dtype=float)
        if np.any(w <= 0):
            raise DimensionMismatch("atom weights must be strictly positive")
        if abs(w.sum() - 1.0) > PROB_SUM_TOL:
            raise DimensionMismatch(f"atom weights sum to {w.sum()}, not 1")
        if not self._skip_check:
            mean = np.zeros(self.prior.n)
            for b, wt in self.atoms:
                if b.n != self.prior.n:
                    raise DimensionMismatch("atom dimension mismatch")
                mean += wt * b.as_array()
            if np.max(np.abs(mean - self.prior.as_array())) > BAYES_TOL:
                raise DimensionMismatch(
                    "splitting is not Bayes-plausible: mean posterior "
                    f"{mean} vs prior {self.prior.probs}"
                )

    @staticmethod
    def trivial(prior: Belief) -> "Splitting":
        return Splitting(((prior, 1.0),), prior)

    @property
    def is_trivial(self) -> bool:
        return len(self.atoms) == 1 and self.atoms[0][0].max_norm_dist(self.prior) < MERGE_TOL

    def weights(self) -> np.ndarray:
        return np.array([wt for _, wt in self.atoms], dtype=float)

    def posteriors(self) -> list[Belief]:
        return [b for b, _ in self.atoms]

    def expect(self, fn) -> float:
        """Weighted average of ``fn`` over the posterior atoms."""
        return float(sum(wt * fn(b) for b, wt in self.atoms))


def merge_atoms(pairs: Sequence[tuple[Belief, float]], tol: float = MERGE_TOL):
    """Merge atoms whose posteriors differ by < tol in max norm; canonical order."""
    merged: list[tuple[Belief, float]] = []
    for b, w in pairs:
        if w <= 0:
            continue
        for i, (mb, mw) in enumerate(merged):
            if b.max_norm_dist(mb) < tol:
                # weight-average the posteriors so merging is order-insensitive
                avg = (mw * mb.as_array() + w * b.as_array()) / (mw + w)
                merged[i] = (Belief(tuple(avg)), mw + w)
                break
        else:
            merged.append((b, w))
    merged.sort(key=lambda bw: bw[0].probs)
    return tuple(merged)


def make_splitting(prior: Belief, pairs: Sequence[tuple[Belief, float]]) -> Splitting:
    """Build a canonical (merged, sorted) splitting from raw atom pairs."""
    return Splitting(merge_atoms(pairs), prior)


def signal_marginals(prior: Belief, exp: Experiment) -> np.ndarray:
    if exp.n_states != prior.n:
        raise DimensionMismatch("experiment and prior dimension mismatch")
    return prior.as_array() @ exp.as_array()


def posterior_update(prior: Belief, exp: Experiment, signal: str) -> Belief:
    """Bayes posterior after observing ``signal`` from ``exp``."""
    try:
        j = exp.signals.index(signal)
    except ValueError:
        raise ZeroProbabilitySignal(f"unknown signal {signal!r}") from None
    marg = signal_marginals(prior, exp)
    if marg[j] <= 0.0:
        raise ZeroProbabilitySignal(f"signal {signal!r} has zero marginal probability")
    post = prior.as_array() * exp.as_array()[:, j] / marg[j]
    return Belief(tuple(post))


def induced_splitting(prior: Belief, exp: Experiment) -> Splitting:
    """Distribution over posteriors the experiment induces from the prior."""
    marg = signal_marginals(prior, exp)
    pairs = []
    for j, s in enumerate(exp.signals):
        if marg[j] > 0.0:
            pairs.append((posterior_update(prior, exp, s), float(marg[j])))
    return make_splitting(prior, pairs)


def compose(first: Experiment, continuation: Mapping[str, Experiment]) -> Experiment:
    """Run ``first``, then the continuation experiment chosen by its signal.

    Composed signals are the ordered pairs ``"s.t"``.
    """
    for s in first.signals:
        if s not in continuation:
            raise DimensionMismatch(f"continuation missing for signal {s!r}")
    n = first.n_states
    signals: list[str] = []
    cols: list[np.ndarray] = []
    fk = first.as_array()
    for j, s in enumerate(first.signals):
        cont = continuation[s]
        if cont.n_states != n:
            raise DimensionMismatch("continuation state dimension mismatch")
        ck = cont.as_array()
        for t, tsig in enumerate(cont.signals):
            signals.append(f"{s}.{tsig}")
            cols.append(fk[:, j] * ck[:, t])
    kernel = np.stack(cols, axis=1)
    return Experiment(tuple(signals), tuple(tuple(row) for row in kernel))


def full_information(states: StateSpace) -> Experiment:
    eye = np.eye(states.n)
    return Experiment(tuple(states.labels), tuple(tuple(row) for row in eye))


def no_information(states: StateSpace) -> Experiment:
    return Experiment(("s0",), tuple((1.0,) for _ in range(states.n)))
