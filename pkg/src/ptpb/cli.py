"""Command-line front end: ``ptpb simulate | feasibility | sweep``.

Exit codes: 0 success, 2 config parse error, 3 validation error,
4 run finished with a non-completed status.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import RunConfig, build_scenario, load_config, parse_config, target_position
from .exceptions import ConfigError, DimensionError, EmptyBoxError, InfeasibleMarginError, ValidationError
from .feasibility import feasibility_report, monte_carlo_region, viable_mask
from .models import estimate_bounds
from .sim import compute_metrics, run_scenario, validate_scenario

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_VALIDATION = 3
EXIT_RUN = 4

log = logging.getLogger("ptpb")

_VALIDATION_ERRORS = (ValidationError, EmptyBoxError, InfeasibleMarginError, DimensionError)


def _bounds(cfg: RunConfig, scenario):
    f = cfg.feasibility
    return estimate_bounds(scenario.model, scenario.box, samples=f.bound_samples, seed=f.bound_seed, safety_factor=f.safety_factor)


def prepare(cfg: RunConfig, seed: int | None = None):
    """Build and fully validate a scenario, including ``T > T*``."""
    sc = build_scenario(cfg, seed=seed)
    validate_scenario(sc)
    bounds = _bounds(cfg, sc)
    q_star = target_position(cfg, sc.model.n)
    rep = feasibility_report(bounds, sc.box, sc.T, q_star, u_star_val=cfg.feasibility.u_star, eps=cfg.feasibility.eps)
    if not sc.T > rep.t_star:
        raise ValidationError(f"prescribed time T = {sc.T} does not exceed the lower bound T* = {rep.t_star:.6g}")
    return sc


def write_plot(result, t0: float, T: float, path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    n = result.n
    fig, axes = plt.subplots(n + 1, 1, figsize=(7, 2.2 * (n + 1)), sharex=True)
    for i in range(n):
        ax = axes[i]
        ax.plot(result.t, np.degrees(result.q[:, i]), label=f"q_{i + 1}")
        ax.plot(result.t, np.degrees(result.qr[:, i]), "--", label=f"q_r,{i + 1}")
        ax.set_ylabel("deg")
        ax.legend(loc="upper right", fontsize=8)
    ax = axes[-1]
    ax.semilogy(result.t, np.maximum(np.linalg.norm(result.e, axis=1), 1e-12))
    ax.axvline(t0 + T, color="k", linestyle=":", label="t0 + T")
    ax.set_ylabel("|e| (rad)")
    ax.set_xlabel("t (s)")
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def _write_outputs(cfg: RunConfig, sc, result, out: Path, svg: bool) -> dict | None:
    out.mkdir(parents=True, exist_ok=True)
    if cfg.output.csv:
        result.write_csv(out / "trace.csv")
    metrics = None
    if result.completed:
        metrics = compute_metrics(result, sc.t0, sc.T).to_dict()
    doc = {
        "status": result.status,
        "message": result.message,
        "t_fail": result.t_fail,
        "position_bound_deg": math.degrees(sc.gains.position_bound),
        "rate_bound_deg_s": math.degrees(sc.gains.rate_bound),
        "metrics": metrics,
    }
    if cfg.output.metrics:
        (out / "metrics.json").write_text(json.dumps(doc, indent=2))
    if svg:
        write_plot(result, sc.t0, sc.T, out / "tracking.svg")
    return metrics


def cmd_simulate(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    try:
        sc = prepare(cfg, seed=args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (*_VALIDATION_ERRORS, ValueError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    result = run_scenario(sc, validate=False)
    out = Path(args.out) if args.out else Path(cfg.output.dir)
    metrics = _write_outputs(cfg, sc, result, out, args.svg or cfg.output.svg)
    print(f"status: {result.status}")
    if result.completed:
        print(f"MASE q (deg): {metrics['mase_q']}  bound: {math.degrees(sc.gains.position_bound):.6g}")
        return EXIT_OK
    print(result.message, file=sys.stderr)
    return EXIT_RUN


def cmd_feasibility(args) -> int:
    try:
        cfg = load_config(args.config)
        sc = build_scenario(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (*_VALIDATION_ERRORS, ValueError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    f = cfg.feasibility
    try:
        sc.box.validate()
        bounds = _bounds(cfg, sc)
    except (*_VALIDATION_ERRORS, ValueError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    n = sc.model.n
    q_star = target_position(cfg, n)
    start = None if f.start_radius_deg is None else math.radians(f.start_radius_deg)
    T_values = [sc.T] if not f.T_values else [float(v) for v in f.T_values]
    samples = f.mc_samples if args.samples is None else args.samples
    out = Path(args.out) if args.out else Path(cfg.output.dir)
    out.mkdir(parents=True, exist_ok=True)

    reports = []
    rows = []
    for T in T_values:
        rep = feasibility_report(
            bounds, sc.box, T, q_star, sigma=f.sigma, u_star_val=f.u_star, eps=f.eps, start_radius=start, region=f.region
        )
        entry = rep.to_dict()
        if samples and rep.nonempty:
            mc = monte_carlo_region(
                lambda q, dq, T=T, rep=rep: viable_mask(bounds, sc.box, T, rep.u_star, q_star, rep.sigma, q, dq),
                sc.box,
                samples,
                seed=f.mc_seed,
            )
            entry["mc_ratio"] = mc.ratio
            entry["mc_samples"] = samples
            qa, dqa = mc.accepted_samples()
            rows.extend([T, *qa_i, *dqa_i] for qa_i, dqa_i in zip(qa, dqa))
        reports.append(entry)
        print(
            f"T={T:g}  sigma_lower={rep.sigma_lower:.6g}  sigma_upper={rep.sigma_upper:.6g}  T*={rep.t_star:.6g}  "
            f"radius={math.degrees(rep.viable_radius):.6g} deg  u_min={rep.u_min:.6g}  d_bar={rep.d_bar:.6g}  "
            f"nonempty={rep.nonempty}"
        )
    doc = {"bounds": bounds.as_dict(), "q_star": list(map(float, q_star)), "reports": reports}
    (out / "feasibility.json").write_text(json.dumps(doc, indent=2, default=float))
    if samples:
        with open(out / "viable_samples.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["T", *[f"q_{i + 1}" for i in range(n)], *[f"dq_{i + 1}" for i in range(n)]])
            for r in rows:
                w.writerow([repr(float(v)) for v in r])
    return EXIT_OK


def _sweep_cells(cfg: RunConfig):
    sw = cfg.sweep
    if sw is None:
        raise ValidationError("config has no sweep section")
    axes = {"T": sw.T, "offset_deg": sw.offset_deg, "seed": sw.seed}
    declared = {k: v for k, v in axes.items() if v is not None}
    if not declared:
        raise ValidationError("sweep declares no axes")
    for k, v in declared.items():
        if len(v) == 0:
            raise ValidationError(f"sweep axis {k!r} is empty")
    names = list(declared)
    return names, [dict(zip(names, combo)) for combo in itertools.product(*declared.values())]


def _cell_config(base_doc: dict, cell: dict) -> RunConfig:
    doc = json.loads(json.dumps(base_doc))
    doc["sweep"] = None
    if "T" in cell:
        doc["timing"]["T"] = cell["T"]
    if "offset_deg" in cell:
        doc["initial"]["offset_deg"] = cell["offset_deg"]
    return parse_config(doc)


def run_cell(base_doc: dict, cell: dict, out_dir: str) -> dict:
    """Run one sweep cell; returns a summary row. Never raises for run failures."""
    row = dict(cell)
    try:
        cfg = _cell_config(base_doc, cell)
        sc = prepare(cfg, seed=cell.get("seed"))
    except (ConfigError, *_VALIDATION_ERRORS, ValueError) as exc:
        row.update(status="invalid", message=str(exc))
        return row
    result = run_scenario(sc, validate=False)
    metrics = _write_outputs(cfg, sc, result, Path(out_dir), svg=False)
    row.update(status=result.status, message=result.message)
    if metrics:
        for i, v in enumerate(metrics["mase_q"]):
            row[f"mase_q_{i + 1}"] = v
        for i, v in enumerate(metrics["rmse_q"]):
            row[f"rmse_q_{i + 1}"] = v
        row["sup_e_norm_deg"] = metrics["sup_e_norm"]
    return row


def cmd_sweep(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    try:
        names, cells = _sweep_cells(cfg)
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    base = cfg.to_document()
    out = Path(args.out) if args.out else Path(cfg.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    dirs = [str(out / f"cell_{i:03d}") for i in range(len(cells))]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(run_cell, [base] * len(cells), cells, dirs))
    else:
        rows = [run_cell(base, c, d) for c, d in zip(cells, dirs)]
    keys = ["cell", *names, "status"]
    extra = sorted({k for r in rows for k in r} - set(keys) - {"message"})
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=[*keys, *extra, "message"])
        w.writeheader()
        for i, r in enumerate(rows):
            w.writerow({"cell": i, **r})
    n_invalid = sum(r["status"] == "invalid" for r in rows)
    n_done = sum(r["status"] == "completed" for r in rows)
    print(f"{len(rows)} cells: {n_done} completed, {n_invalid} invalid, {len(rows) - n_done - n_invalid} failed")
    return EXIT_VALIDATION if n_invalid else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ptpb", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run one closed-loop scenario")
    s.add_argument("--config", required=True)
    s.add_argument("--out")
    s.add_argument("--seed", type=int)
    s.add_argument("--svg", action="store_true")
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("feasibility", help="feasibility report and viable-set sampling")
    f.add_argument("--config", required=True)
    f.add_argument("--out")
    f.add_argument("--samples", type=int)
    f.set_defaults(func=cmd_feasibility)

    w = sub.add_parser("sweep", help="run a grid of scenarios")
    w.add_argument("--config", required=True)
    w.add_argument("--out")
    w.add_argument("--jobs", type=int, default=1)
    w.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
