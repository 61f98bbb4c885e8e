"""Command line entry point: simulate, density, stein, rates, verify."""

import argparse
import csv
import dataclasses
import json
import os
import sys
import time
from dataclasses import dataclass, field
from importlib import metadata

import numpy as np

from . import appendix
from .config import OUTPUT_ENV, dump_config, load_config
from .ensemble import run_ensemble
from .malliavin import SteinIngredients, stein_report
from .stats import kde_density, rate_fit, sup_distance, tv_distance

RESULTS_COLUMNS = ["config_id", "case", "t", "R", "n_replicas", "sample_var", "sup_dist", "tv_dist"]
STEIN_COLUMNS = ["config_id", "case", "t", "R", "n_replicas"] + [
    f.name for f in dataclasses.fields(SteinIngredients)] + ["sup_dist", "lhs_over_rhs"]
RATES_COLUMNS = ["config_id", "case", "t", "metric", "n_points", "slope", "intercept", "slope_stderr"]


@dataclass
class RunManifest:
    config: dict
    config_hash: str
    code_version: str
    start: str
    end: str = ""
    aborted_replicas: int = 0
    status: str = "ok"
    output_root_env: str | None = None
    outputs: dict = field(default_factory=dict)


def _now():
    return time.strftime("%Y-%m-%dT%H:%M:%S%z")


def _version():
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header_hash, columns, rows):
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={header_hash}\n")
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def read_csv(path):
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def write_manifest(run_dir, manifest):
    path = os.path.join(run_dir, "manifest.json")
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(dataclasses.asdict(manifest), fh, indent=2, sort_keys=True, default=str)
    os.replace(tmp, path)
    return path


def _density_rows(cfg, res):
    rows, dens = [], {}
    F = res.F
    for i, R in enumerate(cfg.r_ladder):
        sup = tv = float("nan")
        if F.shape[1] >= 1000:
            d = kde_density(F[i])
            sup, tv = sup_distance(d), tv_distance(d)
            dens[R] = d
        rows.append([res.config_hash, cfg.case, cfg.t_end, R, F.shape[1],
                     float(res.A[i, res.kept].var(ddof=1)), sup, tv])
    return rows, dens


def _rate_rows(cfg, key, results):
    out = []
    for metric in ("sup_dist", "tv_dist"):
        ladder = [(float(r["R"]), float(r[metric])) for r in results
                  if r[metric] not in ("", "nan") and float(r[metric]) > 0]
        if len(ladder) >= 3:
            fit = rate_fit(ladder)
            out.append([key, cfg.case, cfg.t_end, metric, len(ladder), fit.slope, fit.intercept,
                        fit.slope_stderr])
    return out


def cmd_simulate(cfg, density=False, stein=False):
    start = _now()
    run_dir = cfg.run_dir()
    os.makedirs(run_dir, exist_ok=True)
    key = cfg.config_hash()
    manifest = RunManifest(dataclasses.asdict(cfg), key, _version(), start,
                           output_root_env=os.environ.get(OUTPUT_ENV))
    res = run_ensemble(cfg)
    manifest.aborted_replicas = res.n_aborted
    if res.failed:
        manifest.status = "failed: aborted replicas above 0.1%"
    rows, dens = _density_rows(cfg, res)
    files = {"simulate": [write_results(run_dir, key, rows)]}
    with open(os.path.join(run_dir, "config.txt"), "w") as fh:
        fh.write(dump_config(cfg))
    if density:
        files["density"] = []
        for R, d in dens.items():
            p = os.path.join(run_dir, f"density_R{R}.csv")
            write_csv(p, key, ["x", "density"], zip(d.grid, d.values))
            files["density"].append(p)
        results = [dict(zip(RESULTS_COLUMNS, map(_fmt, r))) for r in rows]
        p = os.path.join(run_dir, "rates.csv")
        write_csv(p, key, RATES_COLUMNS, _rate_rows(cfg, key, results))
        files["density"].append(p)
    if stein:
        if res.T1 is None:
            raise SystemExit("stein needs tangents = true in the config")
        srows = []
        for i, R in enumerate(cfg.r_ladder):
            ing = stein_report(res.F[i], res.DvF[i], res.DvDvF[i])
            sup = rows[i][6]
            vals = [getattr(ing, f.name) for f in dataclasses.fields(ing)]
            srows.append([key, cfg.case, cfg.t_end, R, res.F.shape[1]] + vals
                         + [sup, sup / ing.rhs_e85])
        p = os.path.join(run_dir, "stein.csv")
        write_csv(p, key, STEIN_COLUMNS, srows)
        files["stein"] = [p]
    manifest.outputs = files
    manifest.end = _now()
    write_manifest(run_dir, manifest)
    return manifest


def write_results(run_dir, key, rows):
    p = os.path.join(run_dir, "results.csv")
    write_csv(p, key, RESULTS_COLUMNS, rows)
    return p


def cmd_rates(cfg):
    run_dir = cfg.run_dir()
    key = cfg.config_hash()
    results = read_csv(os.path.join(run_dir, "results.csv"))
    p = os.path.join(run_dir, "rates.csv")
    write_csv(p, key, RATES_COLUMNS, _rate_rows(cfg, key, results))
    return p


def cmd_verify(cfg, phi_scale=1.0, sweep=None):
    out = os.path.join(cfg.output_root(), "verify")
    os.makedirs(out, exist_ok=True)
    reports = appendix.run_all(sweep, phi_scale=phi_scale)
    for r in reports:
        r.write(os.path.join(out, f"{r.name}.csv"), header=f"config_hash=verify-{_version()}")
    return reports


def build_parser():
    ap = argparse.ArgumentParser(prog="shelab")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("simulate", "density", "stein", "rates", "verify"):
        sp = sub.add_parser(name)
        sp.add_argument("--config")
        sp.add_argument("--profile")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--workers", type=int)
        sp.add_argument("--out")
        sp.add_argument("--case", choices=["flat", "pam"])
        sp.add_argument("--preset")
        sp.add_argument("--r-ladder", dest="r_ladder",
                        type=lambda s: tuple(int(v) if float(v).is_integer() else float(v)
                                             for v in map(float, s.split(","))))
        sp.add_argument("--t", dest="t_end", type=float)
        sp.add_argument("--replicas", type=int)
        if name == "verify":
            sp.add_argument("--phi-scale", type=float, default=1.0, help=argparse.SUPPRESS)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    overrides = {k: getattr(args, k) for k in ("seed", "workers", "out", "case", "preset",
                                               "r_ladder", "t_end", "replicas")}
    cfg = load_config(args.config, args.profile, overrides)
    if args.command == "verify":
        reports = cmd_verify(cfg, phi_scale=args.phi_scale)
        for r in reports:
            summary = ", ".join(f"{k}={_fmt(v)}" for k, v in r.summary.items())
            print(f"{r.name}: {'pass' if r.passed else 'FAIL'} {summary}")
        return 0 if all(r.passed for r in reports) else 1
    if args.command == "rates":
        print(cmd_rates(cfg))
        return 0
    m = cmd_simulate(cfg, density=args.command == "density", stein=args.command == "stein")
    print(json.dumps(m.outputs, indent=2))
    return 0 if m.status == "ok" else 1


if __name__ == "__main__":
    sys.exit(main())
