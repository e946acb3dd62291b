"""Weight-update rules applied to the firing in-edges of each winner.

Every rule has the multiplicative form ``w + f * w``; the rules differ only in
how the per-edge multiplier ``f`` is chosen:

* ``Hebb``: ``f = beta`` for every edge.
* ``Oja``: ``f = beta * (1 - alpha * w**2)``, which pulls weights towards
  ``1 / sqrt(alpha)``.
* ``StdpStep``: ``f = beta_reward`` when the edge's timing offset is positive,
  ``beta_punish`` when negative.
* ``StdpInverse``: ``f = alpha / dt`` clipped to ``[clamp_lo, clamp_hi]``.

The simulation has no spike times, so STDP rules obtain the timing offset
``dt`` from a :class:`DtMode`: either a pseudo-arrival time derived from the
running input sum, or a random sign drawn with a fixed reward ratio.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .connectome import ConfigurationError

#: Floor applied after every update so that no synapse reaches zero weight.
W_MIN = 1e-6

#: A firing source as ``(neuron id, upstream rank)``. Edges are ordered by
#: neuron index across all upstream areas; the rank (stimulus first) only
#: separates equal indices from different areas.
Source = tuple[int, int]


@dataclass(frozen=True)
class PseudoArrival:
    """``dt = weakest_winner_input - running input sum`` along the in-edges."""


@dataclass(frozen=True)
class RandomRatio:
    """``dt = +1`` with probability ``reward_ratio``, otherwise ``-1``."""

    reward_ratio: float

    def __post_init__(self):
        if not 0.0 <= self.reward_ratio <= 1.0:
            raise ConfigurationError(f"reward_ratio must lie in [0, 1], got {self.reward_ratio}")


DtMode = Union[PseudoArrival, RandomRatio]


@dataclass(frozen=True)
class Hebb:
    beta: float

    def __post_init__(self):
        if self.beta < 0:
            raise ConfigurationError(f"Hebb beta must be >= 0, got {self.beta}")


@dataclass(frozen=True)
class Oja:
    beta: float
    alpha: float

    def __post_init__(self):
        if self.beta < 0 or self.alpha < 0:
            raise ConfigurationError(f"Oja needs beta, alpha >= 0, got {self.beta}, {self.alpha}")


@dataclass(frozen=True)
class StdpStep:
    beta_reward: float
    beta_punish: float
    dt_mode: DtMode = field(default_factory=PseudoArrival)


@dataclass(frozen=True)
class StdpInverse:
    """Inverse-time STDP.

    Combining it with :class:`RandomRatio` is allowed but only ever sees
    ``|dt| = 1``; that pairing is untested.
    """

    alpha: float
    clamp_lo: float = -0.1
    clamp_hi: float = 0.1
    dt_mode: DtMode = field(default_factory=PseudoArrival)

    def __post_init__(self):
        if self.clamp_lo > self.clamp_hi:
            raise ConfigurationError(
                f"clamp_lo={self.clamp_lo} exceeds clamp_hi={self.clamp_hi}")


PlasticityRule = Union[Hebb, Oja, StdpStep, StdpInverse]

RULE_NAMES = {Hebb: "hebb", Oja: "oja", StdpStep: "stdp_step", StdpInverse: "stdp_inverse"}


def rule_name(rule: PlasticityRule) -> str:
    return RULE_NAMES[type(rule)]


@dataclass
class ConnectionContext:
    """Firing in-edges of each winner plus the weakest winner's total input.

    ``in_edges[target]`` lists ``(source, weight)`` pairs in ascending source
    order; targets are visited in the mapping's insertion order.
    """

    in_edges: dict[int, list[tuple[Source, float]]]
    weakest_winner_input: float

    def __post_init__(self):
        for target, edges in self.in_edges.items():
            for (a, _), (b, _) in zip(edges, edges[1:]):
                if not a < b:
                    raise ValueError(f"in-edges of {target} are not strictly ascending")

    @property
    def edge_count(self) -> int:
        return sum(len(e) for e in self.in_edges.values())


def hebb_update(w: float, beta: float) -> float:
    # Written as w + beta*w (not w*(1+beta)) so a reward-only STDP step with
    # the same beta rounds identically.
    return w + beta * w


def oja_update(w: float, beta: float, alpha: float) -> float:
    return w + beta * w * (1.0 - alpha * w * w)


def compute_dt_pseudo_arrival(weights: Sequence[float], weakest_winner_input: float) -> np.ndarray:
    """Offsets ``weakest - c_j`` where ``c_j`` is the inclusive running sum."""
    return weakest_winner_input - np.cumsum(np.asarray(weights, dtype=np.float64))


def compute_dt_random(edge_count: int, reward_ratio: float, rng: np.random.Generator) -> np.ndarray:
    if not 0.0 <= reward_ratio <= 1.0:
        raise ConfigurationError(f"reward_ratio must lie in [0, 1], got {reward_ratio}")
    draws = rng.random(edge_count)
    return np.where(draws < reward_ratio, 1.0, -1.0)


def stdp_step_multiplier(dt: float, beta_reward: float, beta_punish: float) -> float:
    if dt > 0:
        return beta_reward
    if dt < 0:
        return beta_punish
    return 0.0


def stdp_inverse_multiplier(dt: float, alpha: float, clamp_lo: float, clamp_hi: float) -> float:
    if clamp_lo > clamp_hi:
        raise ConfigurationError(f"clamp_lo={clamp_lo} exceeds clamp_hi={clamp_hi}")
    if dt == 0:
        return 0.0
    return min(max(alpha / dt, clamp_lo), clamp_hi)


def _offsets(rule: StdpStep | StdpInverse, ctx: ConnectionContext,
             rng: np.random.Generator) -> dict[int, np.ndarray]:
    mode = rule.dt_mode
    if isinstance(mode, RandomRatio):
        # One uniform per edge, targets in context order, sources ascending.
        signs = compute_dt_random(ctx.edge_count, mode.reward_ratio, rng)
        out, start = {}, 0
        for target, edges in ctx.in_edges.items():
            out[target] = signs[start:start + len(edges)]
            start += len(edges)
        return out
    return {
        target: compute_dt_pseudo_arrival([w for _, w in edges], ctx.weakest_winner_input)
        for target, edges in ctx.in_edges.items()
    }


def apply_rule(rule: PlasticityRule, ctx: ConnectionContext,
               rng: np.random.Generator | None = None) -> dict[int, list[float]]:
    """New weights for every edge in ``ctx``, aligned with ``ctx.in_edges``."""
    if isinstance(rule, Hebb):
        return {t: [max(hebb_update(w, rule.beta), W_MIN) for _, w in edges]
                for t, edges in ctx.in_edges.items()}
    if isinstance(rule, Oja):
        return {t: [max(oja_update(w, rule.beta, rule.alpha), W_MIN) for _, w in edges]
                for t, edges in ctx.in_edges.items()}
    if isinstance(rule, (StdpStep, StdpInverse)):
        if isinstance(rule.dt_mode, RandomRatio) and rng is None:
            raise ValueError("random dt mode needs an rng")
        offsets = _offsets(rule, ctx, rng)
        updated = {}
        for t, edges in ctx.in_edges.items():
            new = []
            for (_, w), dt in zip(edges, offsets[t]):
                if isinstance(rule, StdpStep):
                    f = stdp_step_multiplier(dt, rule.beta_reward, rule.beta_punish)
                else:
                    f = stdp_inverse_multiplier(dt, rule.alpha, rule.clamp_lo, rule.clamp_hi)
                new.append(max(w + f * w, W_MIN))
            updated[t] = new
        return updated
    raise TypeError(f"unknown plasticity rule {rule!r}")
