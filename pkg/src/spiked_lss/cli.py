"""Command-line interface: ``spiked-lss {theory,simulate,compare,density}``.

Exit codes: 0 success, 1 configuration error, 2 numerical error,
3 ``compare`` tolerances not met.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import re
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import RunConfig, parse_config
from .exceptions import ConfigError, SpikedLSSError
from .kernels import parse_kernel
from .montecarlo import run_experiment
from .spectrum import build_H_n, validate_assumptions
from .spiked import clt_prediction
from .stieltjes import density_at, support_edges

log = logging.getLogger("spiked_lss")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_COMPARE = 0, 1, 2, 3


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(payload), indent=2))


def kernel_filename(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]", "_", name)


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    changes = {}
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("--seed: must be an unsigned 64-bit integer")
        changes["seed"] = args.seed
    if getattr(args, "reps", None) is not None:
        if args.reps < 1:
            raise ConfigError("--reps: must be positive")
        changes["reps"] = args.reps
    if args.out is not None:
        changes["out_dir"] = args.out
    if args.kernels is not None:
        names = [k for k in args.kernels.split(";" if ";" in args.kernels else ",") if k]
        if any(n.startswith(("poly:", "affine:")) for n in names) and ";" not in args.kernels:
            raise ConfigError("--kernels: separate parameterized kernels with ';'")
        changes["kernels"] = tuple(parse_kernel(k).name for k in names)
    if args.nodes is not None:
        if args.nodes < 8 or args.nodes % 2:
            raise ConfigError("--nodes: must be an even integer >= 8")
        changes["nodes_single"] = args.nodes
        changes["nodes_double"] = max(4, (args.nodes // 4) // 2 * 2)
    if args.margin is not None:
        if not 0 < args.margin < 0.8:
            raise ConfigError("--margin: must lie in (0, 0.8)")
        changes["margin"] = args.margin
    return replace(cfg, **changes) if changes else cfg


def _prediction(cfg: RunConfig):
    return clt_prediction(
        cfg.spectrum, cfg.moment_profile, cfg.kernel_objects,
        margin=cfg.margin, nodes_single=cfg.nodes_single, nodes_double=cfg.nodes_double,
    )


def cmd_theory(cfg: RunConfig) -> int:
    pred = _prediction(cfg)
    report = {
        "command": "theory",
        "config": cfg.resolved(),
        "seed": cfg.seed,
        "validation": validate_assumptions(cfg.spectrum, cfg.moment_profile).to_dict(),
        "prediction": pred.to_dict(),
    }
    out = Path(cfg.out_dir)
    _write_json(out / "report.json", report)
    for k, m, v in zip(pred.kernels, pred.mean, np.diag(pred.cov)):
        print(f"{k.name:>12}  mean={m: .6g}  var={v:.6g}")
    print(f"wrote {out / 'report.json'}")
    return EXIT_OK


def _write_histograms(out: Path, report) -> None:
    for name, h in report.histograms.items():
        path = out / f"hist_{kernel_filename(name)}.csv"
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bin_left", "bin_right", "count", "density"])
            for row in zip(h["bin_left"], h["bin_right"], h["count"], h["density"]):
                w.writerow(row)


def _simulate(cfg: RunConfig):
    pred = _prediction(cfg)
    report = run_experiment(cfg.sample_config(), prediction=pred)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_histograms(out, report)
    return report


def _report_payload(command: str, cfg: RunConfig, body: dict) -> dict:
    """Full resolved config first; the experiment's own summary goes under ``run``."""
    body = dict(body)
    run = body.pop("config")
    return {"command": command, "config": cfg.resolved(), "run": run, **body}


def cmd_simulate(cfg: RunConfig) -> int:
    report = _simulate(cfg)
    payload = _report_payload("simulate", cfg, report.to_dict())
    _write_json(Path(cfg.out_dir) / "report.json", payload)
    for name, s in report.kernel_stats.items():
        print(f"{name:>12}  mean={s['normalized_mean']: .4f}  var={s['normalized_var']:.4f}  ks_p={s['ks_pvalue']}")
    print(f"wrote {Path(cfg.out_dir) / 'report.json'}")
    return EXIT_OK


def compare_rows(report, cfg: RunConfig) -> list[dict]:
    rows = []
    for name, s in report.kernel_stats.items():
        ks_p = s["ks_pvalue"]
        ok_mean = abs(s["normalized_mean"]) <= cfg.mean_tol
        ok_var = abs(s["normalized_var"] - 1.0) <= cfg.var_tol if np.isfinite(s["normalized_var"]) else False
        ok_ks = ks_p is None or ks_p > cfg.ks_min_p
        rows.append({
            "kernel": name,
            "predicted_mean": s["predicted_mean"],
            "predicted_var": s["predicted_var"],
            "empirical_mean": s["raw"]["mean"],
            "empirical_var": s["raw"]["var"],
            "normalized_mean": s["normalized_mean"],
            "normalized_var": s["normalized_var"],
            "ks_pvalue": ks_p,
            "pass": bool(ok_mean and ok_var and ok_ks),
        })
    return rows


def cmd_compare(cfg: RunConfig) -> int:
    report = _simulate(cfg)
    rows = compare_rows(report, cfg)
    header = f"{'kernel':>10} {'pred_mean':>11} {'emp_mean':>11} {'pred_var':>11} {'emp_var':>11} {'z_mean':>8} {'z_var':>8} {'ks_p':>8}  result"
    print(header)
    for r in rows:
        ks = "n/a" if r["ks_pvalue"] is None else f"{r['ks_pvalue']:.4f}"
        print(
            f"{r['kernel']:>10} {r['predicted_mean']:11.5g} {r['empirical_mean']:11.5g} {r['predicted_var']:11.5g} "
            f"{r['empirical_var']:11.5g} {r['normalized_mean']:8.4f} {r['normalized_var']:8.4f} {ks:>8}  "
            f"{'PASS' if r['pass'] else 'FAIL'}"
        )
    passed = all(r["pass"] for r in rows)
    payload = _report_payload("compare", cfg, report.to_dict(include_samples=False))
    payload.update(
        tolerances={"mean": cfg.mean_tol, "var": cfg.var_tol, "ks_min_p": cfg.ks_min_p},
        comparison=rows,
        passed=passed,
    )
    _write_json(Path(cfg.out_dir) / "report.json", payload)
    return EXIT_OK if passed else EXIT_COMPARE


def cmd_density(cfg: RunConfig, points: int = 501) -> int:
    """Density of the limiting law for ``(p/n, H_n)`` over a grid around its positive support."""
    spec = cfg.spectrum
    H_n, _ = build_H_n(spec)
    c = spec.c_n
    support = support_edges(c, H_n)
    lo, hi = support[0].left_edge, support[-1].right_edge
    pad = 0.05 * (hi - lo)
    xs = np.linspace(max(lo - pad, 1e-9), hi + pad, points)
    dens = density_at(xs, c, H_n)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "density.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "density"])
        for x, d in zip(xs, dens):
            w.writerow([repr(float(x)), repr(float(d))])
    print(f"support: {[(s.left_edge, s.right_edge) for s in support]}")
    print(f"wrote {out / 'density.csv'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spiked-lss",
        description="Gaussian limits of linear spectral statistics for spiked sample covariance matrices.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="path to the JSON run configuration")
        p.add_argument("--seed", type=int, help="random seed (unsigned 64-bit)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--kernels", help="comma separated kernels, e.g. 'x,log' (use ';' with poly:/affine:)")
        p.add_argument("--nodes", type=int, help="nodes per contour side (double integrals use a quarter)")
        p.add_argument("--margin", type=float, help="relative contour margin")
        p.add_argument("-v", "--verbose", action="store_true")
        return p

    common(sub.add_parser("theory", help="predicted mean and covariance"))
    for name, helptext in (("simulate", "Monte Carlo run"), ("compare", "Monte Carlo versus prediction")):
        common(sub.add_parser(name, help=helptext)).add_argument("--reps", type=int, help="replications")
    common(sub.add_parser("density", help="limiting bulk density on a grid")).add_argument(
        "--points", type=int, default=501, help="grid size"
    )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _apply_overrides(parse_config(args.config), args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "theory":
            return cmd_theory(cfg)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "compare":
            return cmd_compare(cfg)
        return cmd_density(cfg, args.points)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SpikedLSSError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
