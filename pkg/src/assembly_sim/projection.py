"""Round-by-round projection of a fixed stimulus assembly into an area.

Each round:

1. accumulate input to the support from the stimulus and, with recurrence,
   from the previous winners;
2. sample the best never-fired candidates from the binomial tail;
3. cap to the ``k`` largest inputs;
4. create the synapses of first-time winners;
5. apply the plasticity rule to every winner's in-edges from firing sources.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .connectome import (
    Area,
    AreaParams,
    INITIAL_WEIGHT,
    ConfigurationError,
    accumulate_inputs,
    materialize_synapses_for_new_winner,
    new_area,
    sample_new_candidates,
)
from .metrics import MetricsRecord, convergence_round, density_ratio, overlap
from .plasticity import ConnectionContext, Hebb, PlasticityRule, apply_rule

STIMULUS = "A"
TARGET = "B"


@dataclass(frozen=True)
class ProjectionConfig:
    """One projection experiment: a fixed stimulus of ``stimulus_size``
    neurons (default ``k``) firing into a target area."""

    area: AreaParams
    rule: PlasticityRule = field(default_factory=lambda: Hebb(0.1))
    seed: int | None = 0
    stimulus_size: int | None = None
    recurrent: bool = True
    max_rounds: int = 50
    early_stop_at_full_overlap: bool = True
    initial_weight: float = INITIAL_WEIGHT

    def __post_init__(self):
        if self.max_rounds < 1:
            raise ConfigurationError(f"max_rounds must be >= 1, got {self.max_rounds}")
        if self.stimulus_size is not None and self.stimulus_size < 0:
            raise ConfigurationError("stimulus_size must be non-negative")

    @property
    def stimulus_k(self) -> int:
        return self.area.k if self.stimulus_size is None else self.stimulus_size


@dataclass
class ProjectionState:
    target: Area
    stimulus: tuple[int, ...]
    round: int = 0

    @classmethod
    def fresh(cls, cfg: ProjectionConfig) -> "ProjectionState":
        return cls(target=new_area(cfg.area, cfg.seed, name=TARGET,
                                   initial_weight=cfg.initial_weight),
                   stimulus=tuple(range(cfg.stimulus_k)))

    def firing_sets(self, recurrent: bool) -> dict[str, Sequence[int]]:
        firing: dict[str, Sequence[int]] = {STIMULUS: self.stimulus}
        if recurrent and self.target.current_winners:
            firing[self.target.name] = sorted(self.target.current_winners)
        return firing


@dataclass(frozen=True)
class RoundResult:
    t: int
    winners: tuple[int, ...]
    first_time_winner_count: int
    weakest_input: float
    degenerate: bool = False


def select_k_winners(potentials: Mapping[int, float],
                     candidates: Sequence[tuple[int, float]], k: int) -> list[int]:
    """The ``k`` largest inputs, ties broken by ascending id.

    Returns ids ranked best first; fewer than ``k`` when fewer neurons exist.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    pool = list(potentials.items())
    pool.extend(candidates)
    best = heapq.nsmallest(k, pool, key=lambda item: (-item[1], item[0]))
    return [i for i, _ in best]


def _connection_context(area: Area, winners: Sequence[int],
                        firing: Mapping[str, Sequence[int]], weakest: float) -> ConnectionContext:
    firing_sets = [(rank, area.synapses.get(name), set(sources))
                   for rank, (name, sources) in enumerate(firing.items())]
    in_edges = {}
    for target in sorted(winners):
        edges = []
        for rank, store, sources in firing_sets:
            if store is None:
                continue
            row = store.in_edges(target)
            edges.extend(((s, rank), row[s]) for s in sources.intersection(row))
        edges.sort()
        in_edges[target] = edges
    return ConnectionContext(in_edges=in_edges, weakest_winner_input=weakest)


def project_round(cfg: ProjectionConfig, state: ProjectionState) -> RoundResult:
    area = state.target
    k = area.params.k
    firing = state.firing_sets(cfg.recurrent)

    inputs = accumulate_inputs(area, firing)
    total_active = sum(len(s) for s in firing.values())
    candidates = sample_new_candidates(area, total_active, area.rng.candidates)
    winners = select_k_winners(inputs, candidates, k)

    candidate_input = dict(candidates)
    winner_inputs = {w: inputs[w] if w in inputs else candidate_input[w] for w in winners}
    weakest = winner_inputs[winners[-1]]

    first_timers = sorted(w for w in winners if w not in area.ever_fired)
    for w in first_timers:
        if area.replay:
            area.mark_fired(w)
        else:
            materialize_synapses_for_new_winner(
                area, w, firing, round(candidate_input[w] / area.initial_weight),
                area.rng.structure,
                recurrent=cfg.recurrent)

    ctx = _connection_context(area, winners, firing, weakest)
    updated = apply_rule(cfg.rule, ctx, area.rng.plasticity)
    names = list(firing)
    for target, edges in ctx.in_edges.items():
        for ((source, rank), _), w in zip(edges, updated[target]):
            area.synapses[names[rank]].set_weight(source, target, w)

    area.current_winners = list(winners)
    area.support_inputs = {**inputs, **winner_inputs}
    state.round += 1
    return RoundResult(t=state.round, winners=tuple(winners),
                       first_time_winner_count=len(first_timers),
                       weakest_input=weakest,
                       degenerate=len(winners) < k)


@dataclass
class Trajectory:
    records: list[MetricsRecord] = field(default_factory=list)
    winners: list[tuple[int, ...]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def overlaps(self) -> list[float]:
        return [r.overlap for r in self.records]

    @property
    def converged_round(self) -> int | None:
        return convergence_round(self.overlaps)

    @property
    def final_density_ratio(self) -> float:
        return self.records[-1].density_ratio if self.records else math.nan


def round_metrics(state: ProjectionState, prev: Sequence[int], result: RoundResult) -> MetricsRecord:
    area = state.target
    cur = result.winners
    if len(cur) >= 2:
        r = density_ratio(cur, area.store(area.name), area.params.p)
    else:
        r = math.nan
    return MetricsRecord(t=result.t, overlap=overlap(prev, cur), density_ratio=r,
                         support_size=area.support_size,
                         winner_churn=len(set(cur).difference(prev)))


def project_until_convergence(cfg: ProjectionConfig,
                              state: ProjectionState | None = None) -> Trajectory:
    if state is None:
        state = ProjectionState.fresh(cfg)
    traj = Trajectory()
    prev: Sequence[int] = tuple(state.target.current_winners)
    for _ in range(cfg.max_rounds):
        result = project_round(cfg, state)
        record = round_metrics(state, prev, result)
        traj.records.append(record)
        traj.winners.append(result.winners)
        prev = result.winners
        if cfg.early_stop_at_full_overlap and record.overlap >= 1.0:
            break
    return traj
