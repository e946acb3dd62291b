"""Brute-force projection on a fully sampled graph, used to check the sparse engine.

The explicit engine holds dense ``n x n`` weight matrices and computes every
neuron's input exactly, so it needs none of the tail sampling or lazy
synapse creation of :mod:`assembly_sim.projection`. It re-implements the cap
and every plasticity rule with array operations, sharing no update code with
the sparse engine. Summation and random-draw orders follow the same
conventions, which makes the two engines bit-identical when the sparse engine
is replayed on the same graph (:func:`replay_state`).
"""

from __future__ import annotations

import json
import math
import statistics
import warnings
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import ks_2samp

from .connectome import (
    INITIAL_WEIGHT,
    AreaParams,
    ConfigurationError,
    RngStreams,
    new_area,
)
from .plasticity import (
    W_MIN,
    Hebb,
    Oja,
    PlasticityRule,
    RandomRatio,
    StdpInverse,
    StdpStep,
    rule_name,
)
from .projection import (
    STIMULUS,
    TARGET,
    ProjectionConfig,
    ProjectionState,
    project_round,
    project_until_convergence,
)

MAX_EXPLICIT_N = 5000

#: Convergence tolerances for :func:`compare_engines`.
KS_ALPHA = 0.01
MAX_MEAN_ROUND_GAP = 1.0


@dataclass
class ExplicitGraph:
    """Dense G(n, p) sample for the recurrent area plus stimulus -> area edges.

    Absent edges have weight 0; present ones start at ``INITIAL_WEIGHT``.
    """

    n: int
    p: float
    adjacency: np.ndarray
    weights: np.ndarray
    stimulus_adjacency: np.ndarray
    stimulus_weights: np.ndarray

    @property
    def edge_count(self) -> int:
        return int(self.adjacency.sum())


def build_explicit(n: int, p: float, seed: int | None, stimulus_size: int = 0,
                   initial_weight: float = INITIAL_WEIGHT) -> ExplicitGraph:
    if n > MAX_EXPLICIT_N:
        raise ConfigurationError(f"explicit graphs are limited to n <= {MAX_EXPLICIT_N}, got {n}")
    if not 0.0 <= p <= 1.0:
        raise ConfigurationError(f"p must lie in [0, 1], got {p}")
    rng = RngStreams.from_seed(seed).structure
    adjacency = rng.random((n, n)) < p
    np.fill_diagonal(adjacency, False)
    stim_adjacency = rng.random((stimulus_size, n)) < p
    return ExplicitGraph(
        n=n, p=p,
        adjacency=adjacency,
        weights=np.where(adjacency, initial_weight, 0.0),
        stimulus_adjacency=stim_adjacency,
        stimulus_weights=np.where(stim_adjacency, initial_weight, 0.0),
    )


def _multipliers(rule: PlasticityRule, w: np.ndarray, mask: np.ndarray, weakest: float,
                 rng: np.random.Generator) -> np.ndarray:
    """Per-edge ``f`` for a (sources x winners) block; rows already in source order."""
    if isinstance(rule, Hebb):
        return np.full_like(w, rule.beta)
    if isinstance(rule.dt_mode, RandomRatio):
        dt = np.zeros_like(w)
        cols, rows = np.nonzero(mask.T)  # winner-major, sources ascending
        draws = rng.random(len(rows))
        dt[rows, cols] = np.where(draws < rule.dt_mode.reward_ratio, 1.0, -1.0)
    else:
        dt = weakest - np.cumsum(w, axis=0)
    if isinstance(rule, StdpStep):
        return np.where(dt > 0, rule.beta_reward, np.where(dt < 0, rule.beta_punish, 0.0))
    if isinstance(rule, StdpInverse):
        with np.errstate(divide="ignore"):
            f = np.clip(rule.alpha / dt, rule.clamp_lo, rule.clamp_hi)
        return np.where(dt == 0, 0.0, f)
    raise TypeError(f"unknown plasticity rule {rule!r}")


class ExplicitEngine:
    def __init__(self, graph: ExplicitGraph, k: int, rule: PlasticityRule,
                 seed: int | None, recurrent: bool = True):
        self.graph = graph
        self.k = k
        self.rule = rule
        self.recurrent = recurrent
        self.weights = graph.weights.copy()
        self.stimulus_weights = graph.stimulus_weights.copy()
        self.rng = RngStreams.from_seed(seed).plasticity
        self.winners: np.ndarray = np.empty(0, dtype=np.int64)
        self.ever_fired = np.zeros(graph.n, dtype=bool)

    def inputs(self) -> np.ndarray:
        total = np.zeros(self.graph.n)
        for s in range(self.stimulus_weights.shape[0]):
            total += self.stimulus_weights[s]
        if self.recurrent:
            for s in np.sort(self.winners):
                total += self.weights[s]
        return total

    def density_ratio(self) -> float:
        w = self.winners
        if len(w) < 2:
            return math.nan
        inside = self.graph.adjacency[np.ix_(w, w)].sum()
        return inside / (len(w) * (len(w) - 1)) / self.graph.p


def project_round_explicit(engine: ExplicitEngine) -> np.ndarray:
    """One round on the dense graph; returns winners ranked best first."""
    n, k = engine.graph.n, engine.k
    inputs = engine.inputs()
    order = np.lexsort((np.arange(n), -inputs))
    winners = order[:k]
    weakest = inputs[winners[-1]]

    # Firing rows keyed (neuron id, upstream rank): stimulus rank 0, area rank 1.
    stim_rows = np.arange(engine.stimulus_weights.shape[0])
    area_rows = np.sort(engine.winners) if engine.recurrent else np.empty(0, dtype=np.int64)
    ids = np.concatenate([stim_rows, area_rows])
    ranks = np.concatenate([np.zeros(len(stim_rows), int), np.ones(len(area_rows), int)])
    key = np.lexsort((ranks, ids))
    cols = np.sort(winners)
    block = np.concatenate([engine.stimulus_weights[np.ix_(stim_rows, cols)],
                            engine.weights[np.ix_(area_rows, cols)]])[key]
    mask = block > 0

    rule = engine.rule
    if isinstance(rule, Oja):
        # Same association as the scalar rule so replay stays bit-identical.
        new = block + rule.beta * block * (1.0 - rule.alpha * block * block)
    else:
        f = _multipliers(rule, block, mask, weakest, engine.rng)
        new = block + f * block
    new = np.where(mask, np.maximum(new, W_MIN), 0.0)

    unkeyed = np.empty_like(new)
    unkeyed[key] = new
    engine.stimulus_weights[np.ix_(stim_rows, cols)] = unkeyed[:len(stim_rows)]
    engine.weights[np.ix_(area_rows, cols)] = unkeyed[len(stim_rows):]

    engine.winners = winners
    engine.ever_fired[winners] = True
    return winners


def run_explicit(engine: ExplicitEngine, rounds: int, early_stop: bool = True) -> dict:
    history, overlaps, densities = [], [], []
    prev: set[int] = set()
    for _ in range(rounds):
        winners = project_round_explicit(engine)
        cur = set(winners.tolist())
        overlaps.append(len(cur & prev) / len(cur))
        densities.append(engine.density_ratio())
        history.append(tuple(winners.tolist()))
        prev = cur
        if early_stop and overlaps[-1] >= 1.0:
            break
    return {"winners": history, "overlaps": overlaps, "density_ratios": densities}


def replay_state(cfg: ProjectionConfig, graph: ExplicitGraph) -> ProjectionState:
    """A sparse-engine state preloaded with every edge of ``graph``.

    No candidates are sampled in replay mode, so the sparse engine's cap and
    plasticity can be compared round by round against the explicit engine.
    """
    if graph.n != cfg.area.n:
        raise ConfigurationError("graph size does not match the area")
    if graph.stimulus_weights.shape[0] != cfg.stimulus_k:
        raise ConfigurationError("graph stimulus size does not match the config")
    area = new_area(cfg.area, cfg.seed, name=TARGET, initial_weight=cfg.initial_weight)
    area.replay = True
    rec = area.store(TARGET)
    for s, t in zip(*np.nonzero(graph.adjacency)):
        rec.add(int(s), int(t), float(graph.weights[s, t]))
    stim = area.store(STIMULUS)
    for s, t in zip(*np.nonzero(graph.stimulus_adjacency)):
        stim.add(int(s), int(t), float(graph.stimulus_weights[s, t]))
    return ProjectionState(target=area, stimulus=tuple(range(cfg.stimulus_k)))


def replay_matches(cfg: ProjectionConfig, graph: ExplicitGraph, rounds: int) -> bool:
    """Run both engines on ``graph`` and check every round's winners agree."""
    state = replay_state(cfg, graph)
    engine = ExplicitEngine(graph, cfg.area.k, cfg.rule, cfg.seed, recurrent=cfg.recurrent)
    for _ in range(rounds):
        sparse = project_round(cfg, state).winners
        dense = tuple(project_round_explicit(engine).tolist())
        if sparse != dense:
            return False
    return True


@dataclass
class EngineStats:
    convergence_rounds: list[int | None]
    final_density_ratios: list[float]
    mean_overlaps: list[float]
    rounds: int

    def censored_rounds(self) -> list[int]:
        """Convergence rounds with non-convergence counted as ``rounds + 1``."""
        return [self.rounds + 1 if c is None else c for c in self.convergence_rounds]

    @property
    def non_converged(self) -> int:
        return sum(c is None for c in self.convergence_rounds)

    @property
    def mean_convergence_round(self) -> float:
        """Mean over the runs that converged; NaN if none did."""
        done = [c for c in self.convergence_rounds if c is not None]
        return statistics.fmean(done) if done else math.nan

    @property
    def mean_final_density_ratio(self) -> float:
        vals = [r for r in self.final_density_ratios if not math.isnan(r)]
        return statistics.fmean(vals) if vals else math.nan


@dataclass
class Divergence:
    ks_statistic: float
    ks_pvalue: float
    mean_round_gap: float
    final_density_gap: float
    mean_overlap_gap: float

    @property
    def diverged(self) -> bool:
        return self.ks_pvalue < KS_ALPHA

    @property
    def mean_gap_exceeded(self) -> bool:
        return self.mean_round_gap > MAX_MEAN_ROUND_GAP


def _gap(x: float, y: float) -> float:
    # One engine never converging while the other does is an unbounded gap.
    if math.isnan(x) and math.isnan(y):
        return 0.0
    if math.isnan(x) or math.isnan(y):
        return math.inf
    return abs(x - y)


def _nan_to_none(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _nan_to_none(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_nan_to_none(v) for v in obj]
    return obj


def divergence(a: EngineStats, b: EngineStats) -> Divergence:
    ra, rb = a.censored_rounds(), b.censored_rounds()
    if ra == rb:
        ks_stat, ks_p = 0.0, 1.0
    else:
        with warnings.catch_warnings():
            # Ties make scipy fall back from the exact to the asymptotic p-value.
            warnings.simplefilter("ignore", RuntimeWarning)
            res = ks_2samp(ra, rb)
        ks_stat, ks_p = float(res.statistic), float(res.pvalue)
    return Divergence(
        ks_statistic=ks_stat,
        ks_pvalue=ks_p,
        mean_round_gap=_gap(a.mean_convergence_round, b.mean_convergence_round),
        final_density_gap=abs(a.mean_final_density_ratio - b.mean_final_density_ratio),
        mean_overlap_gap=abs(statistics.fmean(a.mean_overlaps) - statistics.fmean(b.mean_overlaps)),
    )


@dataclass
class ComparisonReport:
    n: int
    p: float
    k: int
    rule: str
    seeds: list[int]
    rounds: int
    statistical: EngineStats
    explicit: EngineStats
    divergence: Divergence
    replay_identical: bool
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.replay_identical and not self.divergence.diverged

    def to_json(self) -> str:
        body = asdict(self)
        body["passed"] = self.passed
        body["divergence"]["diverged"] = self.divergence.diverged
        body["divergence"]["mean_gap_exceeded"] = self.divergence.mean_gap_exceeded
        return json.dumps(_nan_to_none(body), indent=2, sort_keys=True)

    def to_text(self) -> str:
        d = self.divergence
        lines = [
            f"engine comparison  n={self.n} p={self.p} k={self.k} rule={self.rule} "
            f"seeds={len(self.seeds)} rounds={self.rounds}",
            f"  statistical: mean convergence round {self.statistical.mean_convergence_round:.2f} "
            f"({self.statistical.non_converged} never converged), "
            f"mean final r_t {self.statistical.mean_final_density_ratio:.3f}",
            f"  explicit:    mean convergence round {self.explicit.mean_convergence_round:.2f} "
            f"({self.explicit.non_converged} never converged), "
            f"mean final r_t {self.explicit.mean_final_density_ratio:.3f}",
            f"  KS statistic {d.ks_statistic:.3f}, p-value {d.ks_pvalue:.4f} (reject below {KS_ALPHA})",
            f"  mean round gap {d.mean_round_gap:.2f} "
            f"({'above' if d.mean_gap_exceeded else 'within'} {MAX_MEAN_ROUND_GAP})",
            f"  replay winners identical: {self.replay_identical}",
            f"  verdict: {'PASS' if self.passed else 'DIVERGED'}",
        ]
        return "\n".join(lines)


def _statistical_stats(n, p, k, rule, seeds, rounds) -> EngineStats:
    conv, dens, ovl = [], [], []
    for seed in seeds:
        cfg = ProjectionConfig(area=AreaParams(n, k, p), rule=rule, seed=seed, max_rounds=rounds)
        traj = project_until_convergence(cfg)
        conv.append(traj.converged_round)
        dens.append(traj.final_density_ratio)
        ovl.append(statistics.fmean(traj.overlaps))
    return EngineStats(conv, dens, ovl, rounds)


def _explicit_stats(n, p, k, rule, seeds, rounds) -> EngineStats:
    conv, dens, ovl = [], [], []
    for seed in seeds:
        graph = build_explicit(n, p, seed, stimulus_size=k)
        out = run_explicit(ExplicitEngine(graph, k, rule, seed), rounds)
        overlaps = out["overlaps"]
        conv.append(next((t for t, o in enumerate(overlaps, 1) if o >= 1.0), None))
        dens.append(out["density_ratios"][-1])
        ovl.append(statistics.fmean(overlaps))
    return EngineStats(conv, dens, ovl, rounds)


def compare_engines(n: int, p: float, k: int, rule: PlasticityRule, seeds: Sequence[int],
                    rounds: int = 50, replay_seeds: int = 3) -> ComparisonReport:
    """Sparse engine vs. explicit engine over the same seeds.

    The convergence-round distributions are compared with a two-sample KS
    test; separately the sparse engine is replayed on the first
    ``replay_seeds`` explicit graphs and must pick identical winners.
    """
    seeds = list(seeds)
    AreaParams(n, k, p)
    stat = _statistical_stats(n, p, k, rule, seeds, rounds)
    expl = _explicit_stats(n, p, k, rule, seeds, rounds)
    identical = True
    for seed in seeds[:replay_seeds]:
        cfg = ProjectionConfig(area=AreaParams(n, k, p), rule=rule, seed=seed, max_rounds=rounds)
        graph = build_explicit(n, p, seed, stimulus_size=k)
        identical &= replay_matches(cfg, graph, rounds)
    return ComparisonReport(n=n, p=p, k=k, rule=rule_name(rule), seeds=seeds, rounds=rounds,
                            statistical=stat, explicit=expl,
                            divergence=divergence(stat, expl), replay_identical=identical,
                            extra={"rule_params": asdict(rule)})
