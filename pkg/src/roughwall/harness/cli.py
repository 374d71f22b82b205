"""Command-line entry point: ``roughwall <command> [options]``.

Exit status is 0 on success, 1 when a check or verdict fails and 2 on
errors (bad configuration, failed solves).
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from ..cell import CellProblemSpec, CellResolution, solve_cell
from ..cell.analysis import decay_fit, oracle_error
from ..divergence_lab import constant_study
from ..errors import RoughWallError
from ..geometry import (
    build_rough_annulus,
    decay_rate_bound,
    make_patch,
    metric_matrices,
)
from ..macro import (
    MacroProblemSpec,
    annulus_cell_solutions,
    annulus_slip_field,
    build_correctors,
    error_norms,
    solve_macro,
    unit_rotation,
)
from ..slip_field import CoverPatch, assemble_slip_field
from .config import ExperimentConfig, load_config, parse_list, parse_number
from .pipeline import run_pipeline
from .report import write_csv, write_json

GLOBAL_DEFAULTS = {"config": None, "out": None, "threads": 1, "seed": None}

CHART_PARAMS = {"circle": lambda g: {"radius": g.inner_radius, "orientation": -1.0}}


# ---------------------------------------------------------------- helpers


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=int(args.seed))
    return cfg


def _out_dir(args, cfg, name) -> Path:
    out = Path(args.out or cfg.out) / name
    out.mkdir(parents=True, exist_ok=True)
    return out


def _patch(cfg):
    kind = cfg.cell.chart
    params = CHART_PARAMS.get(kind, lambda g: {})(cfg.geometry)
    return make_patch(kind, **params)


def _base_point(patch):
    return 0.5 * (np.asarray(patch.lower, dtype=float) + np.asarray(patch.upper, dtype=float))


def _jump(text, dim, tangent):
    """Jump vector from ``e1|e2|e3`` or components; defaults to the chart's first tangent."""
    if text is None:
        return np.asarray(tangent, dtype=float)
    if text.startswith("e") and text[1:].isdigit():
        k = int(text[1:]) - 1
        if not 0 <= k < dim:
            raise RoughWallError(f"--lambda {text} has no meaning in {dim} dimensions")
        lam = np.zeros(dim)
        lam[k] = 1.0
        return lam
    lam = np.array(parse_list(text))
    if lam.size != dim:
        raise RoughWallError(f"--lambda needs {dim} components")
    return lam


def _decay(sol) -> dict:
    if getattr(sol, "mesh", sol) is None:  # wall on the interface, nothing decays
        return {"rate": None, "points": 0}
    samples = sol.decay_samples
    if callable(samples):  # boundary-fitted solutions compute them on demand
        samples = samples()
        keep = samples[:, 1] > max(1e-12, 1e-9 * samples[:, 1].max())
        if np.count_nonzero(keep) < 2:
            return {"rate": None, "points": int(np.count_nonzero(keep))}
        slope = np.polyfit(samples[keep, 0], np.log(samples[keep, 1]), 1)[0]
        return {"rate": float(slope), "points": int(np.count_nonzero(keep))}
    fit = decay_fit(sol)
    return {"rate": fit.rate if fit.has_signal else None, "points": fit.n_points, "residual": fit.residual}


# ---------------------------------------------------------------- commands


def cmd_cell(args, cfg) -> int:
    patch = _patch(cfg)
    base = _base_point(patch)
    coeffs = metric_matrices(patch, base)
    lam = _jump(args.jump, coeffs.dim, patch.tangent_frame(base)[0])
    res = CellResolution(n=args.res or cfg.cell.resolution)
    depth = args.depth if args.depth is not None else cfg.cell.truncation_depth
    spec = CellProblemSpec(coeffs, cfg.geometry.make_profile(), lam, depth, res, cfg.cell.tolerance, cfg.cell.method)
    t0 = time.perf_counter()
    sol = solve_cell(spec)
    out = {
        "c_bl": sol.bl_constant,
        "alpha_bound": decay_rate_bound(coeffs),
        "measured_decay": _decay(sol),
        "residuals": sol.residuals,
        "jump": lam,
        "resolution": res.n,
        "wall_time": time.perf_counter() - t0,
    }
    path = write_json(_out_dir(args, cfg, "cell") / "cell.json", out)
    print(f"c_bl = {np.array2string(sol.bl_constant, precision=8)}  ->  {path}")
    return 0


def cmd_slip_field(args, cfg) -> int:
    res = CellResolution(n=cfg.cell.resolution)
    kw = {"truncation_depth": cfg.cell.truncation_depth, "tol": cfg.cell.tolerance, "method": cfg.cell.method}
    samples = args.samples or cfg.cell.samples
    profile = cfg.geometry.make_profile()
    if cfg.cell.chart == "circle":
        ann = build_rough_annulus(cfg.geometry.inner_radius, cfg.geometry.outer_radius, cfg.macro.eps[0], profile,
                                  cfg.macro.resolution())
        fld = annulus_slip_field(ann, samples, res, **kw)
    else:
        # one curve along the first chart coordinate, others held at the midpoint
        patch = _patch(cfg)
        mid = _base_point(patch)
        lo, hi = float(patch.lower[0]), float(patch.upper[0])

        def to_chart(s):
            x = mid.copy()
            x[0] = s
            return x

        fld = assemble_slip_field([CoverPatch(patch, (lo, hi), to_chart)], profile, sample_count=samples,
                                  resolution=res, **kw)
    rows = []
    for smp in fld.samples:
        c = np.zeros((2, 2))
        m = smp.matrix.shape[0]
        c[:m, :m] = smp.matrix
        eig = np.linalg.eigvalsh(0.5 * (smp.matrix + smp.matrix.T))
        rows.append({"s": smp.s, "c11": c[0, 0], "c12": c[0, 1], "c21": c[1, 0], "c22": c[1, 1],
                     "eigmin": float(eig[0]), "eigmax": float(eig[-1])})
    out = _out_dir(args, cfg, "slip_field")
    write_csv(out / "slip_field.csv", rows)
    fld.to_json(out / "manifest.json")
    print(f"{len(rows)} samples, {getattr(fld, 'solve_count', '?')} cell solves  ->  {out}")
    return 0


def cmd_macro(args, cfg) -> int:
    g = cfg.geometry
    eps = parse_number(args.eps) if args.eps is not None else cfg.macro.eps[0]
    ann = build_rough_annulus(g.inner_radius, g.outer_radius, eps, g.make_profile(), cfg.macro.resolution())

    def outer(th):
        return g.outer_speed * unit_rotation(th)

    rough = solve_macro(MacroProblemSpec(ann, "rough", outer))
    res = CellResolution(n=cfg.cell.resolution)
    kw = {"truncation_depth": cfg.cell.truncation_depth, "tol": cfg.cell.tolerance}
    summary = {"variant": args.variant, "eps": eps, "eps_eff": ann.eps, "rough_wall_time": rough.wall_time}
    if args.variant == "rough":
        sol, field = rough, rough
    elif args.variant == "dirichlet":
        sol = solve_macro(MacroProblemSpec(ann, "dirichlet", outer))
        field = sol
    elif args.variant == "navier":
        slip = annulus_slip_field(ann, cfg.cell.samples, res, cfg.cell.method, **kw)
        sol = solve_macro(MacroProblemSpec(ann, "navier", outer), slip=slip)
        field = sol
        summary["slip_coefficient"] = float(slip.scalar(np.array(0.0)))
        summary["boundary_dissipation"] = sol.boundary_dissipation
    else:  # corrector
        sol = solve_macro(MacroProblemSpec(ann, "dirichlet", outer))
        sols, frame = annulus_cell_solutions(ann, res, cfg.cell.method, **kw)
        field = build_correctors(sol, sols, frame).augmented(sol)
    if args.variant != "rough":
        summary["error_vs_rough"] = error_norms(rough, field)
    summary["wall_time"] = sol.wall_time
    summary["divergence_residual"] = sol.divergence_residual
    out = _out_dir(args, cfg, "macro")
    stem = f"{args.variant}_eps{ann.eps:.6g}"
    write_json(out / f"{stem}.json", summary)
    mesh = field.mesh
    th = np.broadcast_to(ann.theta[:, None], mesh.radii.shape)
    vel = field.values if hasattr(field, "values") else field.velocity
    rows = ({"theta": float(a), "r": float(r), "u_r": float(u[0]), "u_theta": float(u[1])}
            for a, r, u in zip(th.ravel(), mesh.radii.ravel(), vel.reshape(-1, 2)))
    write_csv(out / f"{stem}.csv", rows, ["theta", "r", "u_r", "u_theta"])
    if "error_vs_rough" in summary:
        print(f"L2 error against the rough solution: {summary['error_vs_rough']['l2']:.6e}")
    print(f"-> {out / stem}.json")
    return 0


def cmd_converge(args, cfg) -> int:
    out = _out_dir(args, cfg, "converge")
    report = run_pipeline(cfg, out, threads=args.threads, scale=args.scale, progress=lambda m: print(m, flush=True))
    for name, verdict in report.verdicts.items():
        fit = report.rates.get(name)
        extra = f"  (residual {fit.residual:.3f}, 95% +/- {fit.ci95:.3f})" if fit is not None else ""
        print(f"{name:24s} {verdict}{extra}")
    print(f"-> {out}")
    return 0 if report.passed() or report.degenerate else 1


def cmd_divbench(args, cfg) -> int:
    eps = parse_list(args.eps_list) if args.eps_list else list(cfg.divbench.eps)
    q = float(args.q) if args.q is not None else cfg.divbench.q
    rows, verdict = constant_study(eps, seed=cfg.seed, q=q)
    out = _out_dir(args, cfg, "divbench")
    cols = ["eps", "m", "pieces", "global_ratio", "max_piece_ratio", "bound_envelope"]
    write_csv(out / "divbench.csv", [r.as_dict() for r in rows], cols)
    write_json(out / "verdict.json", {"seed": cfg.seed, "q": q, "eps": eps, **verdict})
    for r in rows:
        print(f"eps={r.eps:.5g} m={r.m} pieces={r.pieces} ratio={r.global_ratio:.4f} "
              f"max_piece={r.max_piece_ratio:.4f} bound={r.bound_envelope:.4g}")
    print(f"spread {verdict['spread']:.4f}: {'pass' if verdict['pass'] else 'fail'}  ->  {out}")
    return 0 if verdict["pass"] else 1


def cmd_oracle_check(args, cfg) -> int:
    patch = _patch(cfg)
    base = _base_point(patch)
    coeffs = metric_matrices(patch, base)
    lam = _jump(args.jump, coeffs.dim, patch.tangent_frame(base)[0])
    levels = [int(x) for x in (args.res_list or "32,64").split(",")]
    rows = []
    for n in levels:
        # the mode reconstruction reads staggered-grid traces
        spec = CellProblemSpec(coeffs, cfg.geometry.make_profile(), lam, cfg.cell.truncation_depth,
                               CellResolution(n=n), cfg.cell.tolerance, "auto")
        sol = solve_cell(spec)
        rows.append({"n": n, "oracle_error": oracle_error(sol)})
        print(f"n={n}: relative oracle mismatch {rows[-1]['oracle_error']:.3e}")
    errs = [r["oracle_error"] for r in rows]
    decreasing = all(b < a for a, b in zip(errs, errs[1:]))
    tol = args.tol if args.tol is not None else (5e-3 if coeffs.dim == 2 else 5e-2)
    ok = decreasing and errs[-1] <= tol
    out = _out_dir(args, cfg, "oracle")
    write_csv(out / "oracle.csv", rows)
    write_json(out / "oracle.json", {"rows": rows, "decreasing": decreasing, "tolerance": tol, "pass": ok})
    print(f"{'pass' if ok else 'fail'} (tolerance {tol:g}, decreasing: {decreasing})")
    return 0 if ok else 1


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="TOML experiment file")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory (overrides the config)")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="parallel eps points")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)

    p = argparse.ArgumentParser(prog="roughwall", description="Rough-wall homogenization experiments.",
                                parents=[common])
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("cell", parents=[common], help="solve one boundary-layer cell problem")
    c.add_argument("--lambda", dest="jump", help="e1|e2|e3 or comma-separated components")
    c.add_argument("--depth", type=float)
    c.add_argument("--res", type=int)
    c.set_defaults(func=cmd_cell)

    s = sub.add_parser("slip-field", parents=[common], help="sample the slip matrix along the wall")
    s.add_argument("--samples", type=int)
    s.set_defaults(func=cmd_slip_field)

    m = sub.add_parser("macro", parents=[common], help="one macro solve compared with the rough solution")
    m.add_argument("--variant", choices=("rough", "dirichlet", "navier", "corrector"), default="navier")
    m.add_argument("--eps", help="roughness period, e.g. 1/32")
    m.set_defaults(func=cmd_macro)

    v = sub.add_parser("converge", parents=[common], help="eps sweep with rate fits and verdicts")
    v.add_argument("--scale", type=int, default=1, help="multiply macro element counts")
    v.set_defaults(func=cmd_converge)

    d = sub.add_parser("divbench", parents=[common], help="divergence-solve constant study")
    d.add_argument("--eps-list", help="comma-separated, e.g. 1/8,1/16,1/32")
    d.add_argument("--q", type=float)
    d.set_defaults(func=cmd_divbench)

    o = sub.add_parser("oracle-check", parents=[common], help="cell field against the Fourier-mode reconstruction")
    o.add_argument("--lambda", dest="jump")
    o.add_argument("--res-list", help="comma-separated cell resolutions, e.g. 32,64")
    o.add_argument("--tol", type=float)
    o.set_defaults(func=cmd_oracle_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    # global flags may sit before or after the command name
    for name, default in GLOBAL_DEFAULTS.items():
        if not hasattr(args, name):
            setattr(args, name, default)
    try:
        cfg = _config(args)
        return args.func(args, cfg)
    except (RoughWallError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
