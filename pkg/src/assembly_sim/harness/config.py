"""Experiment spec files.

A spec is a YAML mapping::

    experiment: hebb_beta          # id written to every CSV row
    area: {n: 100000, k: 316, p: 0.01}   # k defaults to round(sqrt(n))
    seeds: [0, 1, 2, 3, 4]
    max_rounds: 50                 # default 50
    early_stop: true               # default true
    recurrent: true                # default true
    initial_weight: 1.0            # default 1.0
    output_dir: results/hebb_beta  # default results/<experiment>
    rules:
      - rule: hebb
        beta: [0.01, 0.05, 0.1, 0.5]
      - rule: stdp_step
        dt_mode: random
        reward_ratio: 0.5
        beta_reward: 0.1
        beta_punish: [-1, 0, -0.05]

Every list-valued rule parameter is swept; the grid of a template is the
Cartesian product of its lists in the order the keys appear. Two sentinel
values of ``stdp_step`` are translated here: ``beta_punish: -1`` runs plain
Hebb with ``beta = beta_reward``; ``beta_punish: 0`` leaves punished weights
unchanged, which is already what a zero multiplier does.
"""

from __future__ import annotations

import itertools
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from ..connectome import INITIAL_WEIGHT, AreaParams, ConfigurationError, default_cap
from ..plasticity import (
    Hebb,
    Oja,
    PlasticityRule,
    PseudoArrival,
    RandomRatio,
    StdpInverse,
    StdpStep,
)

#: Environment variable that overrides a spec's ``output_dir``.
OUTPUT_ENV = "ASSEMBLY_SIM_OUT"

HEBB_SENTINEL = -1.0

RULE_PARAMS: dict[str, dict[str, Any]] = {
    # name -> {param: default}; a default of ... means required
    "hebb": {"beta": ...},
    "oja": {"beta": ..., "alpha": ...},
    "stdp_step": {"beta_reward": ..., "beta_punish": ...,
                  "dt_mode": "pseudo_arrival", "reward_ratio": None},
    "stdp_inverse": {"alpha": ..., "clamp_lo": -0.1, "clamp_hi": 0.1,
                     "dt_mode": "pseudo_arrival", "reward_ratio": None},
}

TOP_LEVEL_KEYS = {"experiment", "area", "seeds", "max_rounds", "early_stop",
                  "recurrent", "initial_weight", "output_dir", "rules"}


class SpecError(ConfigurationError):
    """A spec file violates the schema; the message names the offending key."""


@dataclass(frozen=True)
class Cell:
    """One point of the rule grid."""

    index: int
    rule: PlasticityRule
    rule_label: str
    params: tuple[tuple[str, Any], ...]

    @property
    def params_label(self) -> str:
        return ";".join(f"{k}={_fmt(v)}" for k, v in self.params)


@dataclass
class ExperimentSpec:
    experiment: str
    area: AreaParams
    seeds: list[int]
    cells: list[Cell]
    max_rounds: int = 50
    early_stop: bool = True
    recurrent: bool = True
    initial_weight: float = INITIAL_WEIGHT
    output_dir: Path = field(default_factory=lambda: Path("results"))

    @property
    def run_count(self) -> int:
        return len(self.cells) * len(self.seeds)


def _fmt(value: Any) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _dt_mode(params: dict, where: str):
    mode = params.pop("dt_mode")
    ratio = params.pop("reward_ratio")
    if mode == "pseudo_arrival":
        if ratio is not None:
            raise SpecError(f"{where}.reward_ratio: only valid with dt_mode 'random'")
        return PseudoArrival()
    if mode == "random":
        if ratio is None:
            raise SpecError(f"{where}.reward_ratio: required with dt_mode 'random'")
        return RandomRatio(float(ratio))
    raise SpecError(f"{where}.dt_mode: expected 'pseudo_arrival' or 'random', got {mode!r}")


def build_rule(name: str, values: dict[str, Any], where: str = "rule") -> tuple[PlasticityRule, str]:
    """Concrete rule for one grid point, plus the label of the rule actually run."""
    params = dict(values)
    try:
        if name == "hebb":
            return Hebb(float(params["beta"])), "hebb"
        if name == "oja":
            return Oja(float(params["beta"]), float(params["alpha"])), "oja"
        if name == "stdp_step":
            if float(params["beta_punish"]) == HEBB_SENTINEL:
                return Hebb(float(params["beta_reward"])), "hebb"
            mode = _dt_mode(params, where)
            return StdpStep(float(params["beta_reward"]), float(params["beta_punish"]), mode), name
        if name == "stdp_inverse":
            mode = _dt_mode(params, where)
            return StdpInverse(float(params["alpha"]), float(params["clamp_lo"]),
                               float(params["clamp_hi"]), mode), name
    except (TypeError, ValueError) as exc:
        if isinstance(exc, SpecError):
            raise
        raise SpecError(f"{where}: {exc}") from exc
    raise SpecError(f"{where}.rule: unknown rule {name!r}, expected one of {sorted(RULE_PARAMS)}")


def expand_rules(templates: list[dict]) -> list[Cell]:
    if not isinstance(templates, list) or not templates:
        raise SpecError("rules: must be a non-empty list")
    cells: list[Cell] = []
    for i, template in enumerate(templates):
        where = f"rules[{i}]"
        if not isinstance(template, dict) or "rule" not in template:
            raise SpecError(f"{where}.rule: missing")
        name = template["rule"]
        if name not in RULE_PARAMS:
            raise SpecError(f"{where}.rule: unknown rule {name!r}, expected one of {sorted(RULE_PARAMS)}")
        schema = RULE_PARAMS[name]
        for key in template:
            if key != "rule" and key not in schema:
                raise SpecError(f"{where}.{key}: not a parameter of rule {name!r}")
        keys = [k for k in template if k != "rule"]
        for key, default in schema.items():
            if key not in template:
                if default is ...:
                    raise SpecError(f"{where}.{key}: required for rule {name!r}")
        axes = []
        for key in keys:
            value = template[key]
            if isinstance(value, list):
                if not value:
                    raise SpecError(f"{where}.{key}: empty value list")
                axes.append(value)
            else:
                axes.append([value])
        for combo in itertools.product(*axes):
            chosen = dict(zip(keys, combo))
            full = {k: chosen.get(k, d) for k, d in schema.items()}
            rule, label = build_rule(name, full, where)
            shown = tuple((k, v) for k, v in chosen.items())
            cells.append(Cell(index=len(cells), rule=rule, rule_label=label, params=shown))
    return cells


def spec_from_mapping(data: dict, base_dir: Path | None = None) -> ExperimentSpec:
    if not isinstance(data, dict):
        raise SpecError("spec: top level must be a mapping")
    for key in data:
        if key not in TOP_LEVEL_KEYS:
            raise SpecError(f"{key}: unknown top-level key")
    for key in ("experiment", "area", "seeds", "rules"):
        if key not in data:
            raise SpecError(f"{key}: required")

    area = data["area"]
    if not isinstance(area, dict):
        raise SpecError("area: must be a mapping with n, p and optional k")
    for key in area:
        if key not in ("n", "k", "p"):
            raise SpecError(f"area.{key}: unknown key")
    try:
        n = int(area["n"])
        k = int(area["k"]) if "k" in area else default_cap(n)
        params = AreaParams(n, k, float(area["p"]))
    except KeyError as exc:
        raise SpecError(f"area.{exc.args[0]}: required") from exc
    except ConfigurationError as exc:
        raise SpecError(f"area: {exc}") from exc

    seeds = data["seeds"]
    if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) for s in seeds):
        raise SpecError("seeds: must be a non-empty list of integers")

    max_rounds = data.get("max_rounds", 50)
    if not isinstance(max_rounds, int) or max_rounds < 1:
        raise SpecError("max_rounds: must be a positive integer")
    for key in ("early_stop", "recurrent"):
        if key in data and not isinstance(data[key], bool):
            raise SpecError(f"{key}: must be true or false")
    initial_weight = float(data.get("initial_weight", INITIAL_WEIGHT))
    if initial_weight <= 0:
        raise SpecError("initial_weight: must be positive")

    experiment = str(data["experiment"])
    out = os.environ.get(OUTPUT_ENV) or data.get("output_dir") or f"results/{experiment}"
    out = Path(out)
    if base_dir is not None and not out.is_absolute() and OUTPUT_ENV not in os.environ:
        out = base_dir / out

    return ExperimentSpec(
        experiment=experiment,
        area=params,
        seeds=list(seeds),
        cells=expand_rules(data["rules"]),
        max_rounds=max_rounds,
        early_stop=data.get("early_stop", True),
        recurrent=data.get("recurrent", True),
        initial_weight=initial_weight,
        output_dir=out,
    )


def parse_spec(path: str | os.PathLike) -> ExperimentSpec:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise SpecError(f"spec: not valid YAML ({exc})") from exc
    return spec_from_mapping(data, base_dir=None)
