"""Sparse Erdos-Renyi connectomes with lazily materialized synapses.

An area of ``n`` neurons only tracks the neurons that have won at least once
(its *support*). Everything else is represented statistically: the input a
never-fired neuron would receive from ``m`` firing sources is
``Binomial(m, p)``, so the best never-fired neurons can be drawn from the
right tail of that distribution without ever building the full graph.

When a never-fired neuron wins for the first time its synapses are created:
its observed input fixes how many of the firing sources connect to it, and
every other still-undecided pair involving the support is drawn Bernoulli(p).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np
from scipy.stats import binom

#: Weight given to every newly created synapse.
INITIAL_WEIGHT = 1.0


class ConfigurationError(ValueError):
    """Raised for invalid area or experiment parameters."""


class ConnectomeInvariantError(RuntimeError):
    """A materialization request contradicts the current connectome."""


@dataclass(frozen=True)
class AreaParams:
    n: int
    k: int
    p: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ConfigurationError(f"n must be a positive integer, got {self.n!r}")
        if int(self.k) != self.k or self.k < 1:
            raise ConfigurationError(f"k must be a positive integer, got {self.k!r}")
        if self.k > self.n:
            raise ConfigurationError(f"k={self.k} exceeds n={self.n}")
        if not 0.0 < self.p <= 1.0:
            raise ConfigurationError(f"p must lie in (0, 1], got {self.p!r}")


class SynapseStore:
    """Directed weighted edges ``(source, target) -> weight``.

    Edges are indexed both ways: ``_in[target][source]`` holds the weight and
    ``_out[source]`` lists the targets, so input accumulation only touches the
    out-edges of firing neurons.
    """

    def __init__(self, allow_self_loops: bool = True):
        self.allow_self_loops = allow_self_loops
        self._in: dict[int, dict[int, float]] = {}
        self._out: dict[int, list[int]] = {}
        self._count = 0

    def __len__(self) -> int:
        return self._count

    def __contains__(self, edge: tuple[int, int]) -> bool:
        source, target = edge
        return source in self._in.get(target, ())

    def add(self, source: int, target: int, weight: float = INITIAL_WEIGHT) -> None:
        if weight <= 0:
            raise ValueError(f"synapse weight must be positive, got {weight!r}")
        if source == target and not self.allow_self_loops:
            raise ConnectomeInvariantError(f"self-loop on neuron {source}")
        row = self._in.setdefault(target, {})
        if source in row:
            raise ConnectomeInvariantError(f"duplicate synapse {source}->{target}")
        row[source] = weight
        self._out.setdefault(source, []).append(target)
        self._count += 1

    def weight(self, source: int, target: int) -> float:
        return self._in[target][source]

    def set_weight(self, source: int, target: int, weight: float) -> None:
        row = self._in[target]
        if source not in row:
            raise KeyError((source, target))
        if weight <= 0:
            raise ValueError(f"synapse weight must be positive, got {weight!r}")
        row[source] = weight

    def in_edges(self, target: int) -> Mapping[int, float]:
        return self._in.get(target, {})

    def out_targets(self, source: int) -> Sequence[int]:
        return self._out.get(source, ())

    def edges(self) -> Iterator[tuple[int, int, float]]:
        """Yield ``(source, target, weight)`` sorted by target then source."""
        for target in sorted(self._in):
            row = self._in[target]
            for source in sorted(row):
                yield source, target, row[source]

    def count_within(self, nodes: Iterable[int]) -> int:
        """Number of edges with both endpoints in ``nodes``, self-loops excluded."""
        members = set(nodes)
        total = 0
        for target in members:
            row = self._in.get(target)
            if not row:
                continue
            total += sum(1 for s in row if s in members and s != target)
        return total


@dataclass
class RngStreams:
    """Independent generators so that plasticity noise never shifts structure."""

    structure: np.random.Generator
    candidates: np.random.Generator
    plasticity: np.random.Generator

    @classmethod
    def from_seed(cls, seed: int | None) -> "RngStreams":
        children = np.random.SeedSequence(seed).spawn(3)
        return cls(*(np.random.default_rng(s) for s in children))


@dataclass
class Area:
    """A brain area whose connectome is grown as neurons win.

    ``synapses`` maps an upstream area name to the store of edges from that
    area into this one; the recurrent store is keyed by the area's own name.
    In ``replay`` mode every neuron is materialized up front (see
    :func:`assembly_sim.oracle.replay_state`) and no candidates are sampled.
    """

    name: str
    params: AreaParams
    rng: RngStreams
    synapses: dict[str, SynapseStore] = field(default_factory=dict)
    ever_fired: set[int] = field(default_factory=set)
    fired_order: list[int] = field(default_factory=list)
    current_winners: list[int] = field(default_factory=list)
    support_inputs: dict[int, float] = field(default_factory=dict)
    replay: bool = False
    initial_weight: float = INITIAL_WEIGHT
    _next_id: int = 0

    @property
    def support_size(self) -> int:
        return len(self.ever_fired)

    @property
    def never_fired_count(self) -> int:
        if self.replay:
            return 0
        return self.params.n - self._next_id

    def store(self, upstream: str) -> SynapseStore:
        store = self.synapses.get(upstream)
        if store is None:
            store = SynapseStore(allow_self_loops=upstream != self.name)
            self.synapses[upstream] = store
        return store

    def allocate_ids(self, count: int) -> list[int]:
        """Reserve the next ``count`` never-fired ids (sequential allocation)."""
        start = self._next_id
        return list(range(start, start + count))

    def mark_fired(self, neuron: int) -> None:
        if neuron in self.ever_fired:
            return
        self.ever_fired.add(neuron)
        self.fired_order.append(neuron)
        if not self.replay:
            if neuron != self._next_id:
                raise ConnectomeInvariantError(
                    f"first-time winner {neuron} is not the next unused id {self._next_id}")
            self._next_id += 1


def new_area(params: AreaParams, seed: int | None, name: str = "B",
             initial_weight: float = INITIAL_WEIGHT) -> Area:
    if not isinstance(params, AreaParams):
        raise ConfigurationError("params must be an AreaParams instance")
    if not initial_weight > 0:
        raise ConfigurationError(f"initial_weight must be positive, got {initial_weight}")
    return Area(name=name, params=params, rng=RngStreams.from_seed(seed),
                initial_weight=initial_weight)


def sample_new_candidates(area: Area, total_active_input: int,
                          rng: np.random.Generator) -> list[tuple[int, float]]:
    """Draw the potential inputs of the best never-fired neurons.

    Each of the ``N`` never-fired neurons would see ``Binomial(m, p)`` input
    from ``m`` firing sources. The largest ``min(k, N)`` of those ``N`` i.i.d.
    draws are produced exactly by generating the top uniform order statistics
    (in survival space, for resolution near 1) and pushing them through the
    binomial inverse survival function. Potentials are synapse counts times
    the area's initial weight. Candidates come back sorted by descending
    input with sequentially allocated ids.
    """
    if total_active_input < 0:
        raise ValueError("total_active_input must be non-negative")
    pool = area.never_fired_count
    count = min(area.params.k, pool)
    if count <= 0:
        return []
    ids = area.allocate_ids(count)
    if total_active_input == 0:
        return [(i, 0.0) for i in ids]
    # log U_(N) = log V_1 / N, log U_(N-j) = log U_(N-j+1) + log V_j / (N - j)
    remaining = pool - np.arange(count, dtype=np.float64)
    log_u = np.cumsum(np.log(rng.random(count)) / remaining)
    tail = -np.expm1(log_u)
    values = binom.isf(tail, total_active_input, area.params.p)
    values = np.clip(values, 0, total_active_input) * area.initial_weight
    return [(i, float(v)) for i, v in zip(ids, values)]


def materialize_synapses_for_new_winner(area: Area, winner: int,
                                        firing: Mapping[str, Sequence[int]],
                                        observed_input: int,
                                        rng: np.random.Generator,
                                        recurrent: bool = False) -> None:
    """Create the synapses of a first-time winner and add it to the support.

    ``observed_input`` distinct sources are drawn uniformly from the union of
    all firing sets, which splits the input across upstream areas
    hypergeometrically. With ``recurrent`` set, every other pair between the
    winner and the existing support (both directions, firing sources
    excepted) is drawn Bernoulli(p) so that the support stays a faithful
    G(n, p) sample.
    """
    if winner in area.ever_fired:
        raise ConnectomeInvariantError(f"neuron {winner} has already fired")
    observed_input = int(observed_input)
    names = list(firing)
    sizes = [len(firing[u]) for u in names]
    total = sum(sizes)
    if observed_input > total or observed_input < 0:
        raise ConnectomeInvariantError(
            f"observed input {observed_input} outside [0, {total}] firing sources")
    if observed_input:
        picks = np.sort(rng.choice(total, size=observed_input, replace=False))
        offsets = np.cumsum([0] + sizes)
        for u, name in enumerate(names):
            lo, hi = np.searchsorted(picks, [offsets[u], offsets[u + 1]])
            if lo == hi:
                continue
            store = area.store(name)
            sources = firing[name]
            for idx in picks[lo:hi]:
                store.add(int(sources[idx - offsets[u]]), winner, area.initial_weight)

    if recurrent:
        p = area.params.p
        store = area.store(area.name)
        already_firing = set(firing.get(area.name, ()))
        silent = [x for x in area.fired_order if x not in already_firing]
        for pool, outgoing in ((silent, False), (area.fired_order, True)):
            hits = rng.binomial(len(pool), p) if pool else 0
            if not hits:
                continue
            for idx in np.sort(rng.choice(len(pool), size=hits, replace=False)):
                other = pool[idx]
                if outgoing:
                    store.add(winner, other, area.initial_weight)
                else:
                    store.add(other, winner, area.initial_weight)
    area.mark_fired(winner)


def accumulate_inputs(area: Area, firing: Mapping[str, Sequence[int]]) -> dict[int, float]:
    """Total synaptic input to every materialized neuron.

    Contributions are added upstream by upstream (mapping order) and, within
    an upstream, by ascending source id. Neurons with no firing in-edge get
    ``0.0``.
    """
    targets: Iterable[int] = range(area.params.n) if area.replay else area.fired_order
    inputs = {t: 0.0 for t in targets}
    for name, sources in firing.items():
        store = area.synapses.get(name)
        if store is None:
            continue
        rows = store._in
        for source in sorted(sources):
            for target in store.out_targets(source):
                inputs[target] += rows[target][source]
    return inputs


def write_edge_list(area: Area, path) -> int:
    """Dump every materialized synapse as ``source,target,weight`` CSV.

    Endpoints are written ``<area>:<id>`` since ids are only unique per area.
    """
    rows = 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["source", "target", "weight"])
        for name in sorted(area.synapses):
            for source, target, weight in area.synapses[name].edges():
                writer.writerow([f"{name}:{source}", f"{area.name}:{target}", repr(weight)])
                rows += 1
    return rows


def default_cap(n: int) -> int:
    """Cap size used throughout: ``round(sqrt(n))``."""
    return max(1, int(round(math.sqrt(n))))
