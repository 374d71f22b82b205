import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from roughwall.errors import ConfigError, PipelineError
from roughwall.harness import (
    ExperimentConfig,
    RateTarget,
    config_from_dict,
    fit_rate,
    load_config,
    run_pipeline,
    svg_loglog,
)
from roughwall.harness import pipeline as pipeline_mod
from roughwall.harness.cli import main
from roughwall.harness.report import read_csv

SMALL = {
    "cell": {"resolution": 32},
    "macro": {"eps": ["1/8", "1/16", "1/32"], "elements_per_period": 4, "layer_elements": 3, "wall_spacing": "1/16"},
}


def small_config(**geometry):
    data = {k: dict(v) for k, v in SMALL.items()}
    data["geometry"] = geometry
    return config_from_dict(data)


# ---------------------------------------------------------------- rates


def test_two_point_rate():
    fit = fit_rate([(0.1, 0.01), (0.05, 0.0035)])
    assert fit.slope == pytest.approx(math.log(0.01 / 0.0035) / math.log(2), rel=1e-12)
    assert fit.slope == pytest.approx(1.515, abs=1e-3)
    assert math.isnan(fit.ci95)


def test_exact_power_law():
    eps = [1 / 8, 1 / 16, 1 / 32, 1 / 64]
    fit = fit_rate([(e, e**1.5) for e in eps])
    assert fit.slope == pytest.approx(1.5, abs=1e-12)
    assert fit.residual <= 1e-12
    assert fit.ci95 <= 1e-10


def test_perturbed_power_law():
    eps = [2.0**-k for k in range(3, 9)]
    fit = fit_rate([(e, e**1.5 * (1 + 0.1 * math.sin(1 / e))) for e in eps])
    assert abs(fit.slope - 1.5) <= 0.1
    assert fit.residual > 0


def test_floor_points_are_excluded():
    fit = fit_rate([(0.1, 1e-2), (0.05, 2.5e-3), (0.025, 0.0)])
    assert fit.floor_reached == (0.025,)
    assert fit.n_used == 2
    assert fit.slope == pytest.approx(2.0)
    assert not fit_rate([(0.1, 0.0), (0.05, -1.0)]).usable


def test_rate_needs_two_pairs():
    with pytest.raises(ValueError):
        fit_rate([(0.1, 0.01)])


@given(st.floats(0.2, 3.0), st.floats(-5, 5), st.integers(3, 7))
@settings(max_examples=50, deadline=None)
def test_power_law_slope_recovered(p, logc, n):
    eps = [2.0**-k for k in range(2, 2 + n)]
    fit = fit_rate([(e, math.exp(logc) * e**p) for e in eps])
    assert fit.slope == pytest.approx(p, abs=1e-9)
    assert fit.residual <= 1e-9


@given(st.floats(1e-3, 1e3), st.lists(st.floats(1e-6, 1.0), min_size=3, max_size=6))
@settings(max_examples=50, deadline=None)
def test_slope_ignores_constant_factor(scale, errs):
    eps = [2.0**-k for k in range(len(errs))]
    a = fit_rate(zip(eps, errs))
    b = fit_rate(zip(eps, [scale * e for e in errs]))
    assert b.slope == pytest.approx(a.slope, abs=1e-8)
    assert b.residual == pytest.approx(a.residual, abs=1e-8)


def test_verdict_bands():
    t = RateTarget("x", "q", "l2", 1.5)
    eps = [1 / 8, 1 / 16, 1 / 32]
    assert t.verdict(fit_rate([(e, e**1.6) for e in eps])).startswith("pass")
    assert t.verdict(fit_rate([(e, e**2.0) for e in eps])).startswith("fail")
    assert t.verdict(fit_rate([(e, e**1.5) for e in eps[:2]])).startswith("insufficient")


# ---------------------------------------------------------------- config


def test_default_config_is_valid():
    cfg = ExperimentConfig()
    assert cfg.macro.eps == (1 / 16, 1 / 32, 1 / 64, 1 / 128)
    assert cfg.macro.cells_per_period >= 8


def test_load_toml(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text(
        'seed = 7\nvariants = ["navier"]\n[geometry]\namplitude = "1/4"\n'
        '[cell]\nlambda = [0, 1]\n[macro]\neps = ["1/4", "1/8", 0.0625]\nwall_spacing = "1/32"\n'
    )
    cfg = load_config(path)
    assert cfg.seed == 7 and cfg.variants == ("navier",)
    assert cfg.geometry.amplitude == 0.25
    assert cfg.cell.jump == (0.0, 1.0)
    assert cfg.macro.eps == (0.25, 0.125, 0.0625)
    assert cfg.macro.wall_spacing == 1 / 32


@pytest.mark.parametrize(
    "data",
    [
        {"macro": {"eps": [0.1, 0.04]}},
        {"macro": {"eps": [0.1, 0.1]}},
        {"macro": {"eps": [0.1, -0.05]}},
        {"macro": {"elements_per_period": 3}},
        {"macro": {"bogus": 1}},
        {"speed": 1},
        {"variants": ["rough-ish"]},
        {"cell": {"method": "direct"}},
        {"geometry": {"inner_radius": 2.0, "outer_radius": 1.0}},
        {"macro": {"eps": ["1/0"]}},
    ],
)
def test_invalid_configs_rejected(data):
    with pytest.raises(ConfigError):
        config_from_dict(data)


def test_bad_toml_rejected(tmp_path):
    path = tmp_path / "bad.toml"
    path.write_text("[macro\neps = 1")
    with pytest.raises(ConfigError):
        load_config(path)


# ---------------------------------------------------------------- pipeline


def test_zero_data_is_degenerate(tmp_path):
    report = run_pipeline(small_config(outer_speed=0.0), tmp_path)
    assert report.rows and all(r[k] == 0 for r in report.rows for k in ("l2", "h1", "w11"))
    assert set(report.verdicts.values()) == {"degenerate: skipped"}
    assert report.rates == {}


def test_small_sweep_writes_reports(tmp_path):
    report = run_pipeline(small_config(), tmp_path)
    rows = read_csv(tmp_path / "rows.csv")
    assert len(rows) == len(report.rows) == 3 * 5
    assert (tmp_path / "summary.json").exists()
    ET.fromstring((tmp_path / "rates.svg").read_text())
    for name, fit in report.rates.items():
        assert fit.n_used == 3 and math.isfinite(fit.residual)
    assert report.verdicts["dirichlet L2"].startswith("pass")
    assert report.verdicts["navier L2"].startswith("pass")


def test_sweep_is_deterministic_across_threads():
    cfg = small_config()
    a = run_pipeline(cfg, threads=1)
    b = run_pipeline(cfg, threads=3)
    strip = lambda rows: [{k: v for k, v in r.items() if k != "wall_time"} for r in rows]
    assert strip(a.rows) == strip(b.rows)
    assert [r["eps"] for r in b.rows[::5]] == list(cfg.macro.eps)


def test_doubled_resolution_keeps_rates():
    cfg = small_config()
    a, b = run_pipeline(cfg), run_pipeline(cfg, scale=2)
    # the corrected error is discretization-limited on meshes this coarse
    for name in ("dirichlet energy", "dirichlet L2", "navier L2", "navier W11", "oscillating L2"):
        assert abs(a.rates[name].slope - b.rates[name].slope) <= 0.1


def test_failed_stage_keeps_finished_rows(tmp_path, monkeypatch):
    real = pipeline_mod.solve_macro

    def flaky(spec, **kw):
        if spec.variant == "navier" and spec.annulus.eps < 0.1:
            raise RuntimeError("boom")
        return real(spec, **kw)

    monkeypatch.setattr(pipeline_mod, "solve_macro", flaky)
    with pytest.raises(PipelineError) as info:
        run_pipeline(small_config(), tmp_path)
    assert info.value.stage == "navier solve"
    assert info.value.eps == pytest.approx(1 / 16)
    assert "navier solve" in str(info.value) and "boom" in str(info.value)
    rows = read_csv(tmp_path / "rows.csv")
    assert {float(r["eps"]) for r in rows} == {1 / 8}
    assert not (tmp_path / "summary.json").exists()


# ---------------------------------------------------------------- svg


def test_svg_skips_nonpositive_points():
    svg = svg_loglog({"a": ([0.1, 0.05, 0.025], [1e-2, 0.0, 1e-3]), "b": ([0.1], [-1.0])})
    root = ET.fromstring(svg)
    ns = "{http://www.w3.org/2000/svg}"
    assert len(root.findall(f"{ns}polyline")) == 1
    assert len(root.findall(f"{ns}circle")) == 2


# ---------------------------------------------------------------- cli


def write_small_toml(tmp_path, **extra):
    lines = [
        f'out = "{tmp_path / "runs"}"',
        "[cell]",
        "resolution = 32",
        "[macro]",
        'eps = ["1/8", "1/16", "1/32"]',
        "elements_per_period = 4",
        "layer_elements = 3",
        'wall_spacing = "1/16"',
    ]
    path = tmp_path / "small.toml"
    path.write_text("\n".join(lines) + "\n")
    return path


def test_cli_converge_and_bad_config(tmp_path, capsys):
    cfg = write_small_toml(tmp_path)
    assert main(["converge", "--config", str(cfg), "--threads", "2"]) in (0, 1)
    out = capsys.readouterr().out
    assert "navier L2" in out and "pass" in out
    assert (tmp_path / "runs" / "converge" / "rows.csv").exists()
    assert main(["converge", "--config", str(tmp_path / "missing.toml")]) == 2


def test_cli_cell_json(tmp_path):
    import json

    cfg = write_small_toml(tmp_path)
    assert main(["--config", str(cfg), "cell", "--res", "32"]) == 0
    data = json.loads((tmp_path / "runs" / "cell" / "cell.json").read_text())
    assert set(data) >= {"c_bl", "alpha_bound", "measured_decay", "residuals"}
    assert np.dot(data["c_bl"], data["jump"]) < 0
    assert data["measured_decay"]["rate"] >= data["alpha_bound"]


def test_cli_slip_field_csv(tmp_path):
    cfg = write_small_toml(tmp_path)
    assert main(["slip-field", "--config", str(cfg), "--samples", "3"]) == 0
    rows = read_csv(tmp_path / "runs" / "slip_field" / "slip_field.csv")
    assert len(rows) == 3
    assert all(float(r["eigmax"]) < 0 for r in rows)
    assert (tmp_path / "runs" / "slip_field" / "manifest.json").exists()


def test_cli_macro_and_oracle(tmp_path):
    cfg = write_small_toml(tmp_path)
    assert main(["macro", "--config", str(cfg), "--variant", "navier", "--eps", "1/16"]) == 0
    assert list((tmp_path / "runs" / "macro").glob("navier_*.csv"))
    assert main(["oracle-check", "--config", str(cfg), "--res-list", "16,32", "--tol", "0.05"]) == 0


def test_cli_divbench_seed_flag(tmp_path):
    out = tmp_path / "o"
    args = ["divbench", "--eps-list", "1/4,1/8", "--q", "2", "--out", str(out)]
    assert main(args + ["--seed", "5"]) == 0
    first = (out / "divbench" / "divbench.csv").read_text()
    assert main(["--seed", "5"] + args) == 0
    assert (out / "divbench" / "divbench.csv").read_text() == first
    assert main(args + ["--q", "3"]) == 2
