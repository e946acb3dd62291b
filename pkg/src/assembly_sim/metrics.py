"""Convergence and density measurements for assemblies."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Collection, Iterable, Sequence

from .connectome import SynapseStore


class MetricDomainError(ValueError):
    """A metric was evaluated outside the domain where it is defined."""


@dataclass(frozen=True)
class MetricsRecord:
    t: int
    overlap: float
    density_ratio: float
    support_size: int
    winner_churn: int


def overlap(prev: Iterable[int], cur: Collection[int]) -> float:
    """Fraction of the current winners that also won in the previous round."""
    cur = set(cur)
    if not cur:
        raise MetricDomainError("overlap is undefined for an empty winner set")
    return len(cur.intersection(prev)) / len(cur)


def density_ratio(winners: Collection[int], store: SynapseStore, p: float) -> float:
    """Structural edge density of the winner-induced subgraph divided by ``p``.

    Ordered pairs without self-loops form the denominator, so a complete
    directed subgraph has density 1.
    """
    k = len(set(winners))
    if k < 2:
        raise MetricDomainError("density needs at least two winners")
    if p <= 0:
        raise MetricDomainError(f"p must be positive, got {p}")
    return store.count_within(winners) / (k * (k - 1)) / p


def lambert_w0(x: float) -> float:
    """Principal branch of the Lambert W function for ``x >= 0``.

    Halley iteration on ``w e^w - x`` started from ``log1p(x)`` for small
    arguments and ``log x - log log x`` for large ones.
    """
    x = float(x)
    if x < 0 or math.isnan(x):
        raise MetricDomainError(f"lambert_w0 is only implemented for x >= 0, got {x}")
    if x == 0.0:
        return 0.0
    if math.isinf(x):
        return math.inf
    if x < math.e:
        w = math.log1p(x)
    else:
        lx = math.log(x)
        w = lx - math.log(lx)
    for _ in range(100):
        ew = math.exp(w)
        f = w * ew - x
        wp1 = w + 1.0
        step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1))
        w -= step
        if abs(step) <= 1e-15 * (1.0 + abs(w)):
            break
    return w


@dataclass(frozen=True)
class DensityBound:
    d_max: float
    r_max: float


def max_expected_density(n: float, k: float, p: float) -> DensityBound:
    """Expected density of the densest k-subgraph of G(n, p).

    ``d_max = 2 log n / (k W(2 log n / (k p)))`` with base-10 logarithms;
    ``r_max = d_max / p``. ``k`` may be fractional (e.g. ``sqrt(n)``).
    """
    if not n > 1:
        raise MetricDomainError(f"n must exceed 1, got {n}")
    if not k >= 2:
        raise MetricDomainError(f"k must be at least 2, got {k}")
    if not 0 < p <= 1:
        raise MetricDomainError(f"p must lie in (0, 1], got {p}")
    top = 2.0 * math.log10(n)
    d_max = top / (k * lambert_w0(top / (k * p)))
    return DensityBound(d_max=d_max, r_max=d_max / p)


def convergence_round(overlaps: Sequence[float]) -> int | None:
    """1-based round at which overlap first reaches 1.0, if ever."""
    for t, o in enumerate(overlaps, start=1):
        if o >= 1.0:
            return t
    return None
