"""End-to-end sweep: cell solves, slip field, macro solves per eps, rate fits."""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..cell import CellResolution
from ..errors import PipelineError
from ..geometry import build_rough_annulus
from ..macro import (
    MacroProblemSpec,
    annulus_cell_solutions,
    annulus_slip_field,
    build_correctors,
    error_norms,
    field_norms,
    solve_macro,
    unit_rotation,
)
from .config import ExperimentConfig
from .rates import RateFit, RateTarget, fit_rate
from .report import CsvSink, write_json, write_svg

COLUMNS = ("eps", "eps_eff", "quantity", "region", "l2", "h1", "w11", "wall_time")

# quantity labels: errors against the rough solution, or the corrector itself
TARGETS = (
    RateTarget("dirichlet energy", "dirichlet_rough", "h1", 0.5, 0.15),
    RateTarget("dirichlet L2", "dirichlet", "l2", 1.0),
    RateTarget("navier L2", "navier", "l2", 1.5),
    RateTarget("navier W11", "navier", "w11", 1.0),
    RateTarget("corrected L2", "corrected", "l2", 1.5),
    RateTarget("oscillating L2", "oscillating", "l2", 1.5),
    RateTarget("oscillating grad L1", "oscillating", "w11", 1.0),
)

NEEDS = {"navier": "navier", "corrected": "corrector", "oscillating": "corrector"}

DEGENERATE = "degenerate: skipped"


@dataclass
class CellStage:
    slip_field: object = None
    cell_solutions: list = None
    frame: np.ndarray = None
    wall_time: float = 0.0

    def summary(self) -> dict:
        out = {"wall_time": self.wall_time}
        if self.slip_field is not None:
            out["slip_samples"] = [float(smp.matrix[0, 0]) for smp in self.slip_field.samples]
        if self.cell_solutions is not None:
            out["c_bl"] = [sol.bl_constant.tolist() for sol in self.cell_solutions]
            out["cell_residuals"] = [sol.residuals for sol in self.cell_solutions]
        return out


@dataclass
class ConvergenceReport:
    config: ExperimentConfig
    rows: list = field(default_factory=list)
    rates: dict = field(default_factory=dict)  # target name -> RateFit
    verdicts: dict = field(default_factory=dict)
    cell: dict = field(default_factory=dict)
    wall_time: float = 0.0
    resolution_scale: int = 1

    def series(self, quantity: str, norm: str):
        sel = [r for r in self.rows if r["quantity"] == quantity]
        return np.array([r["eps_eff"] for r in sel]), np.array([r[norm] for r in sel])

    @property
    def degenerate(self) -> bool:
        return bool(self.rows) and all(r[k] == 0 for r in self.rows for k in ("l2", "h1", "w11"))

    def passed(self) -> bool:
        return all(v.startswith("pass") for v in self.verdicts.values())

    def as_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "rows": self.rows,
            "rates": {k: v.as_dict() for k, v in self.rates.items()},
            "verdicts": self.verdicts,
            "cell": self.cell,
            "wall_time": self.wall_time,
            "resolution_scale": self.resolution_scale,
        }

    def write(self, out_dir, plot: bool = True) -> Path:
        out = Path(out_dir)
        write_json(out / "summary.json", self.as_dict())
        if plot and self.rows:
            series = {t.name: self.series(t.quantity, t.norm) for t in TARGETS if t.name in self.rates}
            write_svg(out / "rates.svg", series, title="errors against the rough solution")
        return out


def targets_for(variants) -> list:
    return [t for t in TARGETS if t.quantity not in NEEDS or NEEDS[t.quantity] in variants]


def _stage(name, fn, eps=None):
    """Run ``fn``; failures come back as a ``PipelineError`` tagged with the stage."""
    try:
        return fn()
    except PipelineError:
        raise
    except Exception as exc:
        raise PipelineError(name, exc, eps) from exc


def _timed(name, eps, fn):
    t0 = time.perf_counter()
    val = _stage(name, fn, eps)
    return val, time.perf_counter() - t0


def run_cell_stage(cfg: ExperimentConfig) -> CellStage:
    g, c = cfg.geometry, cfg.cell
    t0 = time.perf_counter()
    profile = g.make_profile()
    ann = build_rough_annulus(g.inner_radius, g.outer_radius, cfg.macro.eps[0], profile, cfg.macro.resolution())
    res = CellResolution(n=c.resolution)
    kw = {"truncation_depth": c.truncation_depth, "tol": c.tolerance}
    stage = CellStage()
    if "navier" in cfg.variants:
        stage.slip_field = annulus_slip_field(ann, c.samples, res, c.method, **kw)
    if "corrector" in cfg.variants:
        stage.cell_solutions, stage.frame = annulus_cell_solutions(ann, res, c.method, **kw)
    stage.wall_time = time.perf_counter() - t0
    return stage


def sweep_point(cfg: ExperimentConfig, cells: CellStage, eps: float, scale: int = 1) -> list:
    """Rows for one eps: errors of each approximation against the rough solution."""
    g = cfg.geometry
    speed = g.outer_speed

    def outer(th):
        return speed * unit_rotation(th)

    def macro(variant, **kw):
        return solve_macro(MacroProblemSpec(ann, variant, outer), **kw)

    ann, _ = _timed("mesh", eps, lambda: build_rough_annulus(
        g.inner_radius, g.outer_radius, eps, g.make_profile(), cfg.macro.resolution(scale)
    ))
    rough, t_rough = _timed("rough solve", eps, lambda: macro("rough"))
    dirichlet, t_dir = _timed("dirichlet solve", eps, lambda: macro("dirichlet"))
    base = {"eps": eps, "eps_eff": ann.eps}

    def row(quantity, region, norms, wall):
        return {**base, "quantity": quantity, "region": region, **norms, "wall_time": wall}

    rows = [
        row("dirichlet", "omega", error_norms(rough, dirichlet), t_rough + t_dir),
        row("dirichlet_rough", "rough", error_norms(rough, dirichlet, "rough"), t_rough + t_dir),
    ]
    if "navier" in cfg.variants:
        nav, t = _timed("navier solve", eps, lambda: macro("navier", slip=cells.slip_field))
        rows.append(row("navier", "omega", error_norms(rough, nav), t))
    if "corrector" in cfg.variants:
        bundle, t = _timed("corrector build", eps, lambda: build_correctors(dirichlet, cells.cell_solutions, cells.frame))
        rows.append(row("corrected", "omega", error_norms(rough, bundle.augmented(dirichlet)), t))
        rows.append(row("oscillating", "rough", field_norms(bundle.oscillating_field(), "rough"), t))
    return rows


def fit_report(report: ConvergenceReport) -> None:
    cfg = report.config
    report.rates.clear()
    report.verdicts.clear()
    targets = targets_for(cfg.variants)
    if report.degenerate:
        report.verdicts.update({t.name: DEGENERATE for t in targets})
        return
    for t in targets:
        eps, err = report.series(t.quantity, t.norm)
        if eps.size < 2:
            report.verdicts[t.name] = f"insufficient: {eps.size} points"
            continue
        fit = fit_rate(zip(eps, err))
        report.rates[t.name] = fit
        report.verdicts[t.name] = t.verdict(fit)
    if "corrector" in cfg.variants:
        _, plain = report.series("dirichlet", "l2")
        _, corr = report.series("corrected", "l2")
        worse = int(np.sum(corr >= plain))
        report.verdicts["corrected below dirichlet"] = "pass: every eps" if worse == 0 else (
            f"fail: {worse} eps values not improved"
        )


def run_pipeline(cfg: ExperimentConfig, out_dir=None, threads: int = 1, scale: int = 1,
                 progress=None) -> ConvergenceReport:
    """Run the sweep described by ``cfg``.

    With ``out_dir`` the rows go to ``rows.csv`` as soon as each eps is done,
    so a failing stage leaves the finished rows on disk; the summary JSON and
    an SVG plot are written at the end.  ``scale`` multiplies the macro
    element counts (resolution robustness checks).  Points are solved on up
    to ``threads`` workers and reported in the configured eps order.
    """
    t0 = time.perf_counter()
    report = ConvergenceReport(cfg, resolution_scale=scale)
    cells = _stage("cell", lambda: run_cell_stage(cfg))
    report.cell = cells.summary()
    if progress:
        progress(f"cell stage done in {cells.wall_time:.1f} s")
    sink = CsvSink(Path(out_dir) / "rows.csv", COLUMNS) if out_dir is not None else None
    try:
        with ThreadPoolExecutor(max_workers=max(1, int(threads))) as pool:
            futures = [pool.submit(sweep_point, cfg, cells, eps, scale) for eps in cfg.macro.eps]
            for eps, fut in zip(cfg.macro.eps, futures):
                try:
                    rows = fut.result()
                except PipelineError:
                    for f in futures:
                        f.cancel()
                    raise
                report.rows.extend(rows)
                if sink:
                    for row in rows:
                        sink.write(row)
                if progress:
                    progress(f"eps={eps:g} done")
    finally:
        if sink:
            sink.close()
    fit_report(report)
    report.wall_time = time.perf_counter() - t0
    if out_dir is not None:
        report.write(out_dir)
    return report


def rate_of(report: ConvergenceReport, name: str) -> RateFit | None:
    return report.rates.get(name)
