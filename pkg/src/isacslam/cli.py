"""Command line: ``isacslam validate | run | metrics | plotdata``.

Failures exit nonzero and print a JSON object ``{"ok": false, "violations": [...]}``
on stdout so callers can parse them.
"""
import argparse
import csv
import json
import logging
import os
import sys

import numpy as np

from .errors import ConfigError
from .experiments import run_experiment
from .scenario import BUNDLED, PRESETS, bundled_text, load, parse, validate

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 2, 3


def _fail(violations, code=EXIT_INVALID):
    print(json.dumps({"ok": False, "violations": list(violations)}, indent=2))
    return code


def _read_scenario(path, preset=None):
    if path is None:
        text = bundled_text(preset or "default")
        return parse(text), text
    if path in BUNDLED and not os.path.exists(path):
        text = bundled_text(path)
        return parse(text), text
    return load(path)


def cmd_validate(args):
    try:
        sc, _ = _read_scenario(args.scenario)
    except OSError as exc:
        return _fail([f"cannot read {args.scenario}: {exc}"], EXIT_IO)
    except ConfigError as exc:
        return _fail(exc.violations)
    problems = validate(sc)
    if problems:
        return _fail(problems)
    print(json.dumps({"ok": True, "scenario": sc.name}))
    return EXIT_OK


def cmd_run(args):
    try:
        sc, text = _read_scenario(args.scenario, args.preset)
        rep = run_experiment(sc, args.preset, seeds=args.seeds, config_text=text,
                             progress=lambda m: logging.getLogger("isacslam.run").info(m))
    except OSError as exc:
        return _fail([f"cannot read {args.scenario}: {exc}"], EXIT_IO)
    except ConfigError as exc:
        return _fail(exc.violations)
    paths = rep.write(args.out)
    print(json.dumps({"ok": True, "preset": rep.preset, "seeds": len(rep.seeds), "runtime_s": round(rep.runtime, 3),
                      "files": [os.path.basename(p) for p in paths]}))
    return EXIT_OK


def _read_series(d):
    path = os.path.join(d, "series.csv")
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _num(v):
    return float(v) if v not in ("", "nan") else np.nan


def metrics_table(rows):
    """Per (experiment, mechanism, ue): track MAE, final-epoch MAE and MOSPA over seeds."""
    groups = {}
    for r in rows:
        groups.setdefault((r["experiment"], r["mechanism"], int(r["ue"])), []).append(r)
    out = []
    for key in sorted(groups):
        g = groups[key]
        last = max(int(r["epoch"]) for r in g)
        err = np.array([_num(r["error_m"]) for r in g])
        fin = [r for r in g if int(r["epoch"]) == last]
        fin_err = np.array([_num(r["error_m"]) for r in fin])
        fin_osp = np.array([_num(r["ospa_m"]) for r in fin])
        out.append(key + (len({r["seed"] for r in g}), last, float(np.nanmean(err)), float(np.nanmean(fin_err)),
                          float(np.nanmean(fin_osp)) if np.isfinite(fin_osp).any() else np.nan))
    return ("experiment", "mechanism", "ue", "n_seeds", "final_epoch", "track_mae_m", "final_mae_m",
            "final_mospa_m"), out


def _write_csv(path, header, rows, stream=None):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for target in (fh, stream) if stream else (fh,):
            w = csv.writer(target, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([f"{v:.10g}" if isinstance(v, float) else v for v in r])


def cmd_metrics(args):
    try:
        rows = _read_series(args.inp)
    except OSError as exc:
        return _fail([f"cannot read series.csv in {args.inp}: {exc}"], EXIT_IO)
    header, out = metrics_table(rows)
    _write_csv(os.path.join(args.inp, "metrics.csv"), header, out, sys.stdout)
    return EXIT_OK


def cmd_plotdata(args):
    """Tidy long table keyed (experiment, mechanism, seed, epoch, metric)."""
    try:
        rows = _read_series(args.inp)
    except OSError as exc:
        return _fail([f"cannot read series.csv in {args.inp}: {exc}"], EXIT_IO)
    long = []
    for r in rows:
        for metric in ("error_m", "ospa_m"):
            v = _num(r[metric])
            if np.isfinite(v):
                long.append((r["experiment"], r["mechanism"], int(r["seed"]), int(r["ue"]), int(r["epoch"]), metric, v))
    long.sort(key=lambda t: t[:6])
    path = os.path.join(args.inp, "plotdata.csv")
    _write_csv(path, ("experiment", "mechanism", "seed", "ue", "epoch", "metric", "value"), long)
    print(json.dumps({"ok": True, "file": path, "rows": len(long)}))
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="isacslam", description="Cooperative radio SLAM experiments")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)
    v = sub.add_parser("validate", help="check a scenario file and list every violation")
    v.add_argument("scenario", nargs="?", default=None, help="scenario TOML (default: bundled default)")
    v.set_defaults(func=cmd_validate)
    r = sub.add_parser("run", help="run an experiment preset")
    r.add_argument("--preset", required=True, choices=PRESETS)
    r.add_argument("--scenario", default=None, help="scenario TOML (default: the preset's bundled scenario)")
    r.add_argument("--seeds", type=int, default=None, help="number of seeds (default: from the scenario)")
    r.add_argument("--out", required=True, help="output directory")
    r.set_defaults(func=cmd_run)
    m = sub.add_parser("metrics", help="summarise series.csv of a run directory")
    m.add_argument("--in", dest="inp", required=True)
    m.set_defaults(func=cmd_metrics)
    d = sub.add_parser("plotdata", help="write a tidy long-format table for plotting")
    d.add_argument("--in", dest="inp", required=True)
    d.set_defaults(func=cmd_plotdata)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
