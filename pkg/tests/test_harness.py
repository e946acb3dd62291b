import csv
import json
import textwrap

import pytest
import yaml

from assembly_sim.harness import cli, sweep
from assembly_sim.harness.config import OUTPUT_ENV, SpecError, parse_spec, spec_from_mapping
from assembly_sim.harness.plots import build_figures, emit_plots
from assembly_sim.harness.sweep import CSV_HEADER, CSV_NAME, SUMMARY_NAME, run_sweep
from assembly_sim.metrics import max_expected_density
from assembly_sim.plasticity import Hebb, Oja, RandomRatio, StdpInverse, StdpStep

SMALL_AREA = {"n": 2000, "k": 45, "p": 0.05}


def spec_dict(**over):
    base = {
        "experiment": "t",
        "area": dict(SMALL_AREA),
        "seeds": [0],
        "max_rounds": 20,
        "rules": [{"rule": "hebb", "beta": 0.1}],
    }
    base.update(over)
    return base


def write_spec(tmp_path, data, name="spec.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data), encoding="utf-8")
    return path


# --- parsing ---------------------------------------------------------------------

def test_minimal_spec(tmp_path):
    spec = parse_spec(write_spec(tmp_path, spec_dict()))
    assert len(spec.cells) == 1 and spec.run_count == 1
    assert spec.cells[0].rule == Hebb(0.1)
    assert spec.max_rounds == 20 and spec.early_stop and spec.recurrent


def test_beta_list_times_seeds():
    spec = spec_from_mapping(spec_dict(seeds=[0, 1, 2], rules=[{"rule": "hebb", "beta": [0.01, 0.05, 0.1]}]))
    assert spec.run_count == 9
    assert [c.params_label for c in spec.cells] == ["beta=0.01", "beta=0.05", "beta=0.1"]


def test_default_cap_and_output_dir(monkeypatch):
    monkeypatch.delenv(OUTPUT_ENV, raising=False)
    spec = spec_from_mapping(spec_dict(area={"n": 100_000, "p": 0.01}))
    assert spec.area.k == 316
    assert str(spec.output_dir) == "results/t"


def test_grid_is_a_product():
    spec = spec_from_mapping(spec_dict(rules=[
        {"rule": "oja", "beta": [0.05, 0.1], "alpha": [0.25, 0.5, 1.0]},
        {"rule": "stdp_inverse", "alpha": 1.0, "clamp_lo": [-0.1, -10.0], "clamp_hi": 10.0},
    ]))
    assert len(spec.cells) == 8
    assert spec.cells[0].rule == Oja(0.05, 0.25)
    assert spec.cells[-1].rule == StdpInverse(1.0, -10.0, 10.0)


def test_punish_sentinels():
    spec = spec_from_mapping(spec_dict(rules=[{
        "rule": "stdp_step", "dt_mode": "random", "reward_ratio": 0.5,
        "beta_reward": 0.1, "beta_punish": [-1, 0, -0.05]}]))
    hebb, freeze, punish = (c.rule for c in spec.cells)
    assert hebb == Hebb(0.1) and spec.cells[0].rule_label == "hebb"
    assert freeze == StdpStep(0.1, 0.0, RandomRatio(0.5))
    assert punish == StdpStep(0.1, -0.05, RandomRatio(0.5))


@pytest.mark.parametrize("mutate,key", [
    (lambda d: d["rules"][0].update(rule="bcm"), "rules[0].rule"),
    (lambda d: d["rules"][0].update(gamma=1), "rules[0].gamma"),
    (lambda d: d["rules"][0].pop("beta"), "rules[0].beta"),
    (lambda d: d["area"].pop("p"), "area.p"),
    (lambda d: d["area"].update(k=5000), "area"),
    (lambda d: d.update(seeds=[]), "seeds"),
    (lambda d: d.update(max_rounds=0), "max_rounds"),
    (lambda d: d.update(colour="red"), "colour"),
    (lambda d: d.update(rules=[]), "rules"),
    (lambda d: d.update(rules=[{"rule": "stdp_step", "beta_reward": 0.1, "beta_punish": -0.1,
                                 "dt_mode": "random"}]), "rules[0].reward_ratio"),
    (lambda d: d.update(rules=[{"rule": "stdp_step", "beta_reward": 0.1, "beta_punish": -0.1,
                                 "dt_mode": "sometimes"}]), "rules[0].dt_mode"),
    (lambda d: d.update(rules=[{"rule": "hebb", "beta": -1.0}]), "rules[0]"),
])
def test_schema_errors_name_the_key(mutate, key):
    data = spec_dict()
    mutate(data)
    with pytest.raises(SpecError) as err:
        spec_from_mapping(data)
    assert str(err.value).startswith(key)


def test_invalid_yaml(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("experiment: [unclosed\n", encoding="utf-8")
    with pytest.raises(SpecError):
        parse_spec(path)


def test_shipped_configs_parse():
    from pathlib import Path
    configs = sorted((Path(__file__).parent.parent / "configs").glob("*.yaml"))
    assert configs
    for path in configs:
        assert parse_spec(path).run_count > 0


# --- sweeps ------------------------------------------------------------------------

def read_rows(out):
    with open(out / CSV_NAME, newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


def test_one_cell_sweep(tmp_path):
    spec = spec_from_mapping(spec_dict())
    out = run_sweep(spec, out_dir=tmp_path / "o")
    rows = read_rows(out)
    assert rows[0] == CSV_HEADER
    assert 1 <= len(rows) - 1 <= spec.max_rounds
    assert [int(r[4]) for r in rows[1:]] == list(range(1, len(rows)))
    assert rows[1][:4] == ["t", "hebb", "beta=0.1", "0"]


def test_rerun_and_parallel_are_byte_identical(tmp_path):
    data = spec_dict(seeds=[0, 1, 2], rules=[{"rule": "hebb", "beta": [0.05, 0.1]},
                                             {"rule": "stdp_step", "dt_mode": "random",
                                              "reward_ratio": 0.7, "beta_reward": 0.1,
                                              "beta_punish": -0.05}])
    spec = spec_from_mapping(data)
    a = run_sweep(spec, jobs=1, out_dir=tmp_path / "a")
    b = run_sweep(spec, jobs=1, out_dir=tmp_path / "b")
    c = run_sweep(spec, jobs=2, out_dir=tmp_path / "c")
    bytes_a = (a / CSV_NAME).read_bytes()
    assert bytes_a == (b / CSV_NAME).read_bytes() == (c / CSV_NAME).read_bytes()
    assert (a / SUMMARY_NAME).read_bytes() == (c / SUMMARY_NAME).read_bytes()


def test_row_count_and_summary(tmp_path):
    spec = spec_from_mapping(spec_dict(seeds=[0, 1], rules=[{"rule": "hebb", "beta": [0.0, 0.1]}]))
    out = run_sweep(spec, out_dir=tmp_path)
    rows = read_rows(out)[1:]
    summary = json.loads((out / SUMMARY_NAME).read_text(encoding="utf-8"))
    assert [c["params"] for c in summary["cells"]] == ["beta=0.0", "beta=0.1"]
    frozen, learning = summary["cells"]
    assert frozen["convergence_round"] == "none"
    assert isinstance(learning["convergence_round"], (int, float))
    executed = sum(spec.max_rounds if r is None else r
                   for cell in summary["cells"] for r in cell["convergence_rounds"])
    assert len(rows) == executed
    assert summary["area"] == SMALL_AREA
    assert summary["r_max"] == pytest.approx(max_expected_density(2000, 45, 0.05).r_max)
    assert learning["final_density_ratio_mean"] > 0 and learning["final_density_ratio_std"] >= 0


def test_failed_runs_are_recorded(tmp_path, monkeypatch):
    real = sweep.project_until_convergence

    def flaky(cfg, state=None):
        if cfg.seed == 1:
            raise RuntimeError("boom")
        return real(cfg, state)

    monkeypatch.setattr(sweep, "project_until_convergence", flaky)
    spec = spec_from_mapping(spec_dict(seeds=[0, 1], rules=[{"rule": "hebb", "beta": [0.05, 0.1]}]))
    out = run_sweep(spec, out_dir=tmp_path)
    summary = json.loads((out / SUMMARY_NAME).read_text(encoding="utf-8"))
    assert len(summary["cells"]) == 2
    for cell in summary["cells"]:
        assert cell["runs"] == 2
        assert cell["errors"] == [{"seed": 1, "error": "RuntimeError: boom"}]
    assert {r[3] for r in read_rows(out)[1:]} == {"0"}


def test_hebb_beta_grid_converges_faster_with_larger_beta(tmp_path):
    spec = spec_from_mapping(spec_dict(area={"n": 10_000, "k": 100, "p": 0.01}, seeds=[0, 1, 2],
                                       max_rounds=50,
                                       rules=[{"rule": "hebb", "beta": [0.05, 0.1, 0.5]}]))
    summary = json.loads((run_sweep(spec, out_dir=tmp_path) / SUMMARY_NAME).read_text())
    rounds = [c["convergence_round"] for c in summary["cells"]]
    assert "none" not in rounds
    assert rounds == sorted(rounds, reverse=True)


def test_output_dir_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env"))
    spec = parse_spec(write_spec(tmp_path, spec_dict(output_dir=str(tmp_path / "ignored"))))
    assert spec.output_dir == tmp_path / "env"


# --- plots -------------------------------------------------------------------------

def test_single_run_gives_two_svgs(tmp_path):
    out = run_sweep(spec_from_mapping(spec_dict()), out_dir=tmp_path / "run")
    paths = emit_plots(out / CSV_NAME, tmp_path / "fig")
    assert [p.name for p in paths] == ["t_overlap.svg", "t_density.svg"]
    assert all(p.read_text(encoding="utf-8").lstrip().startswith("<?xml") for p in paths)


def test_five_value_sweep_plots(tmp_path):
    spec = spec_from_mapping(spec_dict(seeds=[0, 1], rules=[{"rule": "hebb",
                                                             "beta": [0.02, 0.05, 0.1, 0.2, 0.5]}]))
    out = run_sweep(spec, out_dir=tmp_path)
    r_max = max_expected_density(2000, 45, 0.05).r_max
    figs = dict(build_figures(out / CSV_NAME))
    over = figs["t_overlap"].axes[0]
    dens = figs["t_density"].axes[0]
    assert len(over.get_lines()) == 5
    data_lines = [ln for ln in dens.get_lines() if not ln.get_label().startswith("$r_")]
    assert len(data_lines) == 5
    assert over.get_ylim() == (0.0, 1.0)
    assert dens.get_ylim() == pytest.approx((0.0, 1.5 * r_max))
    ref = [ln for ln in dens.get_lines() if ln.get_label().startswith("$r_")]
    assert len(ref) == 1 and ref[0].get_ydata()[0] == pytest.approx(r_max)
    labels = [t.get_text() for t in over.get_legend().get_texts()]
    assert labels == [f"hebb beta={b}" for b in (0.02, 0.05, 0.1, 0.2, 0.5)]


def test_svg_output_is_reproducible(tmp_path):
    out = run_sweep(spec_from_mapping(spec_dict()), out_dir=tmp_path / "run")
    a = emit_plots(out / CSV_NAME, tmp_path / "a")
    b = emit_plots(out / CSV_NAME, tmp_path / "b")
    assert [p.read_bytes() for p in a] == [p.read_bytes() for p in b]


def test_empty_csv_is_an_error(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text(",".join(CSV_HEADER) + "\n", encoding="utf-8")
    with pytest.raises(ValueError):
        emit_plots(path, tmp_path / "fig")
    assert not (tmp_path / "fig").exists()


# --- command line ------------------------------------------------------------------

def test_cli_dmax(capsys):
    assert cli.main(["dmax", "--n", "10", "--k", "2", "--p", "1"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out == ["d_max = 1.763222834", "r_max = 1.763222834"]


def test_cli_dmax_domain_error(capsys):
    assert cli.main(["dmax", "--n", "1e5", "--k", "316", "--p", "0"]) == 2
    assert "p must lie" in capsys.readouterr().err


def test_cli_simulate_and_edges(tmp_path, capsys):
    edges = tmp_path / "edges.csv"
    rc = cli.main(["simulate", "--n", "3000", "--k", "55", "--p", "0.05", "--seed", "1",
                   "--rule", "oja", "--beta", "0.1", "--alpha", "0.5", "--edges-out", str(edges)])
    assert rc == 0
    out = capsys.readouterr().out.splitlines()
    assert out[1] == "t,overlap,density_ratio,support_size"
    assert out[2].startswith("1,0.000000,")
    assert edges.read_text(encoding="utf-8").startswith("source,target,weight\n")


def test_cli_rule_missing_parameter(capsys):
    assert cli.main(["simulate", "--n", "500", "--rule", "stdp_step", "--beta-reward", "0.1"]) == 2
    assert "--beta-punish" in capsys.readouterr().err


def test_cli_sweep_and_plot(tmp_path, capsys):
    spec = write_spec(tmp_path, spec_dict(seeds=[0, 1]))
    assert cli.main(["sweep", str(spec), "--out", str(tmp_path / "o"), "--jobs", "2"]) == 0
    assert cli.main(["plot", str(tmp_path / "o" / CSV_NAME), "--out", str(tmp_path / "f")]) == 0
    assert sorted(p.name for p in (tmp_path / "f").iterdir()) == ["t_density.svg", "t_overlap.svg"]


def test_cli_oracle_compare_json(capsys):
    rc = cli.main(["oracle-compare", "--n", "500", "--k", "22", "--p", "0.05",
                   "--seeds", "4", "--replay-seeds", "1", "--json"])
    body = json.loads(capsys.readouterr().out)
    assert rc == (0 if body["passed"] else 1)
    assert body["replay_identical"] is True
    assert len(body["seeds"]) == 4


def test_cli_readme_spec_example(tmp_path):
    text = textwrap.dedent("""\
        experiment: demo
        area: {n: 2000, p: 0.05}
        seeds: [0]
        rules:
          - rule: stdp_inverse
            alpha: 1.0
            clamp_lo: -0.1
            clamp_hi: 0.1
    """)
    path = tmp_path / "demo.yaml"
    path.write_text(text, encoding="utf-8")
    assert cli.main(["sweep", str(path), "--out", str(tmp_path / "o")]) == 0
    assert read_rows(tmp_path / "o")[1][1] == "stdp_inverse"
