"""Command-line entry point.

Subcommands ``excite``, ``estimate``, ``evaluate`` and ``demo-circle`` share
the flags ``--config``, ``--out``, ``--seed``, ``--workers`` and
``--verbose``. Stages exchange data only through files in the output
directory.

Exit codes: 0 success, 1 runtime failure, 2 configuration error,
3 infeasible excitation problem, 4 missing or unreadable input file.
The output directory is ``--out``, else ``$FRICTIONEST_OUT``, else the
config's ``output_dir``. Every hashed output is listed with its SHA-256 in
``manifest_<command>.json``; wall-clock timings go to
``timing_<command>.json``, which is not hashed.
"""

import argparse
import csv
import io
import json
import logging
import os
import sys
import time

import numpy as np

from . import evaluation, pipeline, plotting
from .config import load_config
from .errors import ConfigError, InfeasibleError
from .fileio import atomic_write, dump_json, sha256_file
from .simloop import config_hash
from .trajectory import FourierTrajectory

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_FILE = 4

OUT_ENV = "FRICTIONEST_OUT"

log = logging.getLogger("frictionest")


class FileInputError(Exception):
    """An input file named on the command line is missing or unreadable."""


class Outputs:
    """Collects files written by one command and records their hashes."""

    def __init__(self, root):
        self.root = root
        self.files = []

    def write(self, name, data):
        path = os.path.join(self.root, name)
        atomic_write(path, data)
        self.files.append(name)
        log.info("wrote %s", path)
        return path

    def finish(self, command, cfg_hash, started):
        manifest = {"command": command, "config_hash": cfg_hash,
                    "files": {f: sha256_file(os.path.join(self.root, f)) for f in sorted(self.files)}}
        atomic_write(os.path.join(self.root, manifest_name(command)), dump_json(manifest))
        atomic_write(os.path.join(self.root, f"timing_{command}.json"),
                     dump_json({"command": command, "wall_time_s": time.perf_counter() - started}))
        return manifest


def manifest_name(command):
    return f"manifest_{command}.json"


def _read_json(path, what):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise FileInputError(f"cannot read {what} {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise FileInputError(f"{what} {path} is not valid JSON: {exc}") from exc


def _safe(name):
    return name.replace("+", "-")


def _stats_rows(label, subset, stats):
    for j in range(len(stats.count)):
        yield [label, subset, j + 1, int(stats.count[j])] + [
            "" if np.isnan(getattr(stats, k)[j]) else repr(float(getattr(stats, k)[j]))
            for k in ("median", "q25", "q75", "min", "max", "mean", "rms")]


def stats_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["controller", "subset", "joint", "count", "median", "q25", "q75", "min", "max",
                "mean", "rms"])
    for label, full, low in rows:
        w.writerows(_stats_rows(label, "all", full))
        w.writerows(_stats_rows(label, "low_velocity", low))
    return buf.getvalue()


def cmd_excite(cfg, out, args):
    traj, report = pipeline.run_excitation(cfg)
    out.write("trajectory.json", traj.to_json() + "\n")
    out.write("excitation_report.json", dump_json(report.to_dict(include_timing=False)))
    out.write("cond_history.svg", plotting.render_cond_history(report.history))
    log.info("condition number %.4g -> %.4g", report.initial_cond, report.final_cond)
    return {"initial_cond": report.initial_cond, "final_cond": report.final_cond}


def cmd_estimate(cfg, out, args):
    if not args.trajectory:
        raise FileInputError("estimate needs --trajectory")
    doc = _read_json(args.trajectory, "trajectory")
    try:
        traj = FourierTrajectory.from_dict(doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"trajectory file is malformed: {exc}") from exc
    truth = cfg.build_truth()
    result = pipeline.run_estimation(cfg, traj)
    out.write("params.json", dump_json(result.params_document(truth)))
    report = {
        "truth_pi_f": truth.vector().tolist(),
        "gains": result.gains.to_dict(),
        "terminal_pi_f": {k: m.pi_f.tolist() for k, m in result.models.items()},
        "settling_time": {k: (v if np.isfinite(v) else None) for k, v in result.settling.items()},
        "lyapunov": {k: v.to_dict() for k, v in result.lyapunov.items()},
        "backstepping": result.backstepping,
        "traces": {},
    }
    for name, trace in result.traces.items():
        fname = f"trace_{_safe(name)}.csv"
        out.write(fname, trace.to_csv())
        report["traces"][name] = {"file": fname, "digest": evaluation.trace_digest(trace)}
        if name.startswith("adaptive"):
            out.write(f"convergence_{_safe(name)}.svg",
                      plotting.render_convergence(trace.t, trace.pi_f, truth.vector()))
    first = next(iter(result.lyapunov))
    out.write("lyapunov.svg", plotting.render_lyapunov(result.traces[first].t,
                                                       result.lyapunov[first].series))
    out.write("estimation_report.json", dump_json(report))
    return report["settling_time"]


def cmd_evaluate(cfg, out, args):
    if not args.params:
        raise FileInputError("evaluate needs --params")
    models = pipeline.load_models(_read_json(args.params, "parameters"))
    results = pipeline.run_campaign(cfg, models, workers=args.workers)
    for report, trace in results:
        stem = f"{_safe(report.controller)}_{report.trajectory}_s{report.seed}"
        if cfg.evaluation.save_traces:
            out.write(f"traces/trace_{stem}.journal", trace.to_journal())
            report.extra["trace_file"] = f"traces/trace_{stem}.journal"
        out.write(f"reports/report_{stem}.json", dump_json(report.to_dict()))
    summary, pooled = pipeline.campaign_summary(cfg, results)
    out.write("summary.json", dump_json(summary))
    out.write("summary.csv", stats_csv(pooled))
    firsts = {}
    for report, trace in results:
        firsts.setdefault(report.controller, trace)
    for name, svg in plotting.emit_plots(pooled, firsts).items():
        out.write(name, svg)
    return summary["comparisons"]


def cmd_demo_circle(cfg, out, args):
    if cfg.circle is None:
        raise ConfigError("demo-circle needs a 'circle' section")
    models = pipeline.load_models(_read_json(args.params, "parameters")) if args.params else {}
    model = cfg.build_model()
    ref_xy, traces = pipeline.run_circle(cfg, models)
    thr = cfg.evaluation.threshold
    pooled = [(name, evaluation.tracking_error_stats(tr),
               evaluation.tracking_error_stats(tr, evaluation.low_velocity_filter(tr, thr)))
              for name, tr in traces.items()]
    cart = {}
    for name, tr in traces.items():
        xy = pipeline.cartesian(tr, model)
        ref = pipeline.cartesian(tr, model, desired=True)
        cart[name] = {"median_m": float(np.median(np.linalg.norm(xy - ref, axis=1))),
                      "max_m": float(np.max(np.linalg.norm(xy - ref, axis=1)))}
    report = {"friction_source": "estimate" if models else "truth",
              "controllers": {n: {"full": f.to_dict(), "low_velocity": lo.to_dict(),
                                  "cartesian_error": cart[n]} for n, f, lo in pooled}}
    out.write("circle_report.json", dump_json(report))
    out.write("circle_errors.csv", stats_csv(pooled))
    out.write("cartesian_path.svg", plotting.render_cartesian_paths(
        ref_xy, [(n, pipeline.cartesian(tr, model)) for n, tr in traces.items()]))
    out.write("circle_errors.svg", plotting.render_error_boxes(
        [(n, f) for n, f, _ in pooled], "circle tracking error"))
    return {n: v["median_m"] for n, v in cart.items()}


COMMANDS = {
    "excite": cmd_excite,
    "estimate": cmd_estimate,
    "evaluate": cmd_evaluate,
    "demo-circle": cmd_demo_circle,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="frictionest", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True,
                       help="YAML configuration file or bundled config name")
        p.add_argument("--out", help=f"output directory (overrides ${OUT_ENV} and the config)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--workers", type=int, default=1, help="parallel simulation workers")
        p.add_argument("--verbose", "-v", action="store_true")
        if name == "estimate":
            p.add_argument("--trajectory", help="excitation trajectory JSON from 'excite'")
        if name in ("evaluate", "demo-circle"):
            p.add_argument("--params", help="parameters JSON from 'estimate'")
    return parser


def output_dir(args, cfg):
    return args.out or os.environ.get(OUT_ENV) or cfg.output_dir


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    started = time.perf_counter()
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        if args.workers < 1:
            raise ConfigError("--workers must be at least 1")
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FILE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    cfg_hash = config_hash(cfg.to_dict(), args.command)
    try:
        for path in (getattr(args, "trajectory", None), getattr(args, "params", None)):
            if path and not os.path.isfile(path):
                raise FileInputError(f"input file {path} not found")
        out = Outputs(output_dir(args, cfg))
        result = COMMANDS[args.command](cfg, out, args)
        out.finish(args.command, cfg_hash, started)
    except FileInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FILE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except Exception as exc:  # noqa: BLE001
        log.debug("failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(json.dumps({"command": args.command, "out": out.root, "result": result},
                     sort_keys=True, default=float))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
