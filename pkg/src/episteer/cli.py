"""Command-line entry point: ``episteer <subcommand> [options]``.

Exit status is 0 on success, 1 when inputs or configuration are invalid and 2
when a run fails after validation.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data.epiweek import EpiWeek
from .data.graph import load_edge_list, build_region_graph, write_edge_list
from .data.panels import load_exogenous, load_wili, write_exogenous, write_wili
from .data.synth import SynthConfig, synth_generate
from .data.windows import forecast_inputs
from .eval import (
    VARIANTS,
    ForecastReport,
    Entry,
    best_performer_count,
    hist_baseline,
    leakage_violations,
    ablation_run,
    ratio_heatmap,
    read_forecasts,
    write_heatmap,
)
from .source_model import SourceModel, load_source, pretrain_source, save_source
from .training import TrainConfig, load_bundle, predict, save_bundle, weekly_protocol

log = logging.getLogger("episteer")

SEED_ENV = "EPISTEER_SEED"


class UsageError(Exception):
    """Bad arguments, unreadable inputs or an invalid configuration."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _flag(name):
    return "--" + name.replace("_", "-")


def _add_config_flags(p):
    """One flag per TrainConfig field; unset flags fall back to the config file."""
    g = p.add_argument_group("training configuration")
    for f in dataclasses.fields(TrainConfig):
        if f.name == "seed":
            continue
        default = f.default
        if isinstance(default, bool):
            g.add_argument(_flag(f.name), dest=f.name, action=argparse.BooleanOptionalAction, default=None)
        elif f.name == "drop_buckets":
            g.add_argument(_flag(f.name), dest=f.name, default=None, help="comma-separated buckets, e.g. DS1,DS3")
        else:
            g.add_argument(_flag(f.name), dest=f.name, type=type(default), default=None)


def _add_common(p):
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help=f"defaults to ${SEED_ENV}, then the config")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_panels(p, exo=True):
    p.add_argument("--wili", required=True)
    p.add_argument("--contamination-start", default=SynthConfig.contamination_start)
    if exo:
        p.add_argument("--exogenous", required=True)
        p.add_argument("--graph", default=None, help="HHS edge list; the bundled one by default")


def build_parser():
    parser = _Parser(prog="episteer", description="Steering historical flu forecasts with exogenous signals.")
    parser.add_argument("--version", action="version", version=f"episteer {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("synth", help="write a synthetic contaminated season")
    _add_common(p)
    p.add_argument("--synth-config", default=None, help="JSON file of generator settings")
    for name in ("n_seasons", "uptrend_magnitude", "signal_noise", "missing_rate"):
        default = getattr(SynthConfig, name)
        p.add_argument(_flag(name), dest=name, type=type(default), default=None)

    p = sub.add_parser("pretrain", help="fit the historical source model")
    _add_common(p)
    _add_panels(p, exo=False)
    p.add_argument("--config", default=None)
    _add_config_flags(p)

    p = sub.add_parser("train", help="run the weekly protocol and write bundles and forecasts")
    _add_common(p)
    _add_panels(p)
    p.add_argument("--source", required=True, help="checkpoint written by pretrain")
    p.add_argument("--config", default=None)
    _add_config_flags(p)

    p = sub.add_parser("forecast", help="k-ahead forecasts for one as_of week from a trained bundle")
    _add_common(p)
    p.add_argument("--bundle", required=True)
    p.add_argument("--exogenous", required=True)
    p.add_argument("--as-of", required=True)

    p = sub.add_parser("evaluate", help="score forecast CSVs against wILI")
    _add_common(p)
    p.add_argument("--wili", required=True)
    p.add_argument("--contamination-start", default=SynthConfig.contamination_start)
    p.add_argument("--forecasts", required=True, nargs="+", help="one or more forecast CSVs")
    p.add_argument("--config", default=None)
    _add_config_flags(p)

    p = sub.add_parser("ablate", help="run the protocol once per variant")
    _add_common(p)
    _add_panels(p)
    p.add_argument("--source", required=True)
    p.add_argument("--variants", default=",".join(VARIANTS), help="comma-separated variant names")
    p.add_argument("--config", default=None)
    _add_config_flags(p)
    return parser


def _readable(path, what):
    if path is None:
        return None
    path = Path(path)
    if not path.is_file() or not os.access(path, os.R_OK):
        raise UsageError(f"cannot read {what} at {path}")
    return path


def _out_dir(path):
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {out}: {exc}") from None
    if not os.access(out, os.W_OK):
        raise UsageError(f"output directory {out} is not writable")
    return out


def _seed(args, fallback):
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"{SEED_ENV}={env!r} is not an integer") from None
    return fallback


def resolve_config(args) -> TrainConfig:
    """Config file first, then flags, then the seed fallback chain."""
    values = {}
    if getattr(args, "config", None):
        path = _readable(args.config, "config file")
        try:
            values = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {path} is not valid JSON: {exc}") from None
        if not isinstance(values, dict):
            raise UsageError(f"config {path} must hold a JSON object")
    for f in dataclasses.fields(TrainConfig):
        v = getattr(args, f.name, None)
        if v is None or f.name == "seed":
            continue
        if f.name == "drop_buckets":
            v = tuple(b for b in v.split(",") if b)
        values[f.name] = v
    values["seed"] = _seed(args, values.get("seed", TrainConfig.seed))
    try:
        return TrainConfig.from_dict(values)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid configuration: {exc}") from None


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out, command, argv, seed, config=None, inputs=(), outputs=()):
    manifest = {
        "command": command,
        "argv": list(argv),
        "version": __version__,
        "seed": seed,
        "config": config.to_dict() if config is not None else None,
        "config_hash": config.digest() if config is not None else None,
        "inputs": {str(p): _sha256(p) for p in inputs if p is not None},
        "outputs": sorted(str(p) for p in outputs),
    }
    path = Path(out) / f"manifest_{command}.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _load_panels(args, with_exo=True):
    wili_path = _readable(args.wili, "wILI CSV")
    try:
        wili = load_wili(wili_path, EpiWeek.parse(args.contamination_start))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if not with_exo:
        return wili, None, None, [wili_path]
    exo_path = _readable(args.exogenous, "exogenous CSV")
    graph_path = _readable(args.graph, "edge list")
    try:
        exo = load_exogenous(exo_path)
        graph = build_region_graph(load_edge_list(graph_path))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return wili, exo, graph, [wili_path, exo_path, graph_path]


def _load_source(path):
    path = _readable(path, "source checkpoint (run `episteer pretrain` first)")
    try:
        source = load_source(path)
    except (ValueError, OSError, KeyError) as exc:
        raise UsageError(f"cannot load source checkpoint {path}: {exc}") from None
    if not source.pretrained:
        raise UsageError(f"source checkpoint {path} was never pretrained; run `episteer pretrain`")
    return source, path


def _write_forecasts(path, rows, variant):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["region", "epiweek", "horizon", "pred", "truth", "variant", "as_of"])
        for r in rows:
            truth = "" if r["truth"] is None else repr(r["truth"])
            w.writerow([r["region"], str(r["epiweek"]), r["horizon"], repr(r["pred"]), truth, variant, str(r["as_of"])])


def cmd_synth(args, argv):
    out = _out_dir(args.out)
    values = {}
    if args.synth_config:
        values = json.loads(_readable(args.synth_config, "synth config").read_text())
    for name in ("n_seasons", "uptrend_magnitude", "signal_noise", "missing_rate"):
        if getattr(args, name) is not None:
            values[name] = getattr(args, name)
    try:
        cfg = SynthConfig(**values)
        cfg.validate()
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid synth config: {exc}") from None
    seed = _seed(args, 0)
    season = synth_generate(seed, cfg)
    paths = [out / "wili.csv", out / "exogenous.csv", out / "graph.txt"]
    write_wili(season.wili, paths[0])
    write_exogenous(season.exo, paths[1])
    write_edge_list(season.graph, paths[2])
    cfg_path = out / "synth_config.json"
    cfg_path.write_text(json.dumps({"seed": seed, **dataclasses.asdict(cfg)}, indent=2, sort_keys=True) + "\n")
    write_manifest(out, "synth", argv, seed, outputs=paths + [cfg_path])
    print(f"wrote {', '.join(str(p) for p in paths)}")


def cmd_pretrain(args, argv):
    cfg = resolve_config(args)
    out = _out_dir(args.out)
    wili, _, _, inputs = _load_panels(args, with_exo=False)
    source = SourceModel(cfg.source_config())
    trace = pretrain_source(source, wili.historical())
    path = out / "source.ckpt"
    save_source(source, path)
    trace_path = out / "source_trace.csv"
    with open(trace_path, "w") as fh:
        fh.write("step,term,value\n")
        for i, v in enumerate(trace):
            fh.write(f"{i},source_loss,{v!r}\n")
    write_manifest(out, "pretrain", argv, cfg.seed, cfg, inputs, [path, trace_path])
    print(f"source loss {trace[0]:.4f} -> {trace[-1]:.4f}; wrote {path}")


def _forecast_rows(forecasts, wili):
    return [{
        "region": f.region,
        "epiweek": f.target_week,
        "horizon": f.horizon,
        "pred": f.prediction,
        "truth": wili.value(f.target_week, f.region) if wili.has_week(f.target_week) else None,
        "as_of": f.as_of,
    } for f in forecasts]


def _write_audit(path, audit):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        names = [f.name for f in dataclasses.fields(audit[0])] if audit else []
        w.writerow(names + ["clean"])
        for rec in audit:
            w.writerow([str(getattr(rec, n)) if getattr(rec, n) is not None else "" for n in names] + [rec.clean()])


def cmd_train(args, argv):
    cfg = resolve_config(args)
    out = _out_dir(args.out)
    source, source_path = _load_source(args.source)
    wili, exo, graph, inputs = _load_panels(args)
    bundle_dir = out / "bundles"
    bundle_dir.mkdir(exist_ok=True)
    written = []

    def on_week(as_of, bundle):
        if bundle is not None:
            path = bundle_dir / f"{as_of}.ckpt"
            save_bundle(bundle, path)
            written.append(path)

    result = weekly_protocol(source, wili, exo, graph, cfg, on_week=on_week)
    variant = cfg.model
    fc_path = out / "forecasts.csv"
    _write_forecasts(fc_path, _forecast_rows(result.forecasts, wili), variant)
    trace_path = out / "trace.csv"
    result.trace.to_csv(trace_path)
    audit_path = out / "audit.csv"
    _write_audit(audit_path, result.audit)
    bad = leakage_violations(result.audit)
    if bad:
        raise RuntimeError(f"leakage audit failed for {[str(r.as_of) for r in bad]}")
    write_manifest(out, "train", argv, cfg.seed, cfg, inputs + [source_path],
                   written + [fc_path, trace_path, audit_path])
    print(f"{len(result.forecasts)} forecasts over {len(result.audit)} weeks; wrote {fc_path}")


def cmd_forecast(args, argv):
    out = _out_dir(args.out)
    bundle_path = _readable(args.bundle, "bundle checkpoint")
    exo_path = _readable(args.exogenous, "exogenous CSV")
    try:
        as_of = EpiWeek.parse(args.as_of)
        exo = load_exogenous(exo_path)
        bundle = load_bundle(bundle_path)
    except (ValueError, KeyError) as exc:
        raise UsageError(str(exc)) from None
    cfg = bundle.cfg
    if bundle.norm_as_of is not None and bundle.norm_as_of > as_of:
        raise UsageError(f"bundle was fitted through {bundle.norm_as_of}, after as_of {as_of}")
    if tuple(exo.signals) != tuple(bundle.signals):
        exo = exo.drop_buckets(cfg.drop_buckets) if cfg.drop_buckets else exo
        if tuple(exo.signals) != tuple(bundle.signals):
            raise UsageError("exogenous signals do not match the bundle")
    exo = exo.until(as_of)
    try:
        _, X = forecast_inputs(exo, cfg.W, as_of)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    n = len(exo.regions)
    preds = predict(bundle, bundle.normalize(X), np.arange(n), None, None)
    rows = [{"region": r, "epiweek": as_of + (h + 1), "horizon": h + 1, "pred": float(preds[j, h]),
             "truth": None, "as_of": as_of} for j, r in enumerate(exo.regions) for h in range(cfg.k)]
    path = out / f"forecast_{as_of}.csv"
    _write_forecasts(path, rows, cfg.model)
    write_manifest(out, "forecast", argv, cfg.seed, cfg, [bundle_path, exo_path], [path])
    print(f"wrote {path}")


def _report_from_csv(path, wili, cfg):
    rows = read_forecasts(path)
    variants = {r["variant"] for r in rows}
    entries = []
    for r in rows:
        if not wili.has_week(r["epiweek"]):
            continue
        entries.append(Entry(r["region"], r["as_of"], r["horizon"], r["epiweek"], r["pred"],
                             wili.value(r["epiweek"], r["region"])))
    if not entries:
        raise UsageError(f"{path}: no forecast has an observed truth")
    variant = variants.pop() if len(variants) == 1 else Path(path).stem
    periods = {p: cfg.period_weeks(p) for p in ("T1", "T2", "T")}
    return ForecastReport(entries, variant, cfg.seed, cfg.digest(), periods)


def _hist_report(reference, wili, cfg):
    historical = wili.historical()
    entries = [Entry(e.region, e.as_of, e.horizon, e.target_week,
                     hist_baseline(historical, e.target_week, e.region), e.truth) for e in reference.entries]
    return ForecastReport(entries, "hist", cfg.seed, cfg.digest(), reference.periods)


def _comparisons(out, reports):
    """Best-performer counts and heatmaps of the first report against the rest."""
    summary = {"best_performers": {}, "heatmaps": []}
    for period in ("T1", "T2", "T"):
        tables = {r.variant: r.rmse_table(period) for r in reports if r.select(period)}
        if len(tables) == len(reports):
            summary["best_performers"][period] = best_performer_count(tables)
    first = reports[0]
    rows, weeks, a = first.weekly_rmse()
    for other in reports[1:]:
        rows_b, weeks_b, b = other.weekly_rmse()
        if rows_b != rows or weeks_b != weeks:
            continue
        path = out / f"heatmap_{first.variant}_vs_{other.variant}.csv"
        write_heatmap(path, ratio_heatmap(a, b), rows, weeks)
        summary["heatmaps"].append(str(path))
    return summary


def cmd_evaluate(args, argv):
    cfg = resolve_config(args)
    out = _out_dir(args.out)
    wili_path = _readable(args.wili, "wILI CSV")
    paths = [_readable(p, "forecast CSV") for p in args.forecasts]
    try:
        wili = load_wili(wili_path, EpiWeek.parse(args.contamination_start))
        reports = [_report_from_csv(p, wili, cfg) for p in paths]
        reports.append(_hist_report(reports[0], wili, cfg))
    except (ValueError, KeyError) as exc:
        raise UsageError(str(exc)) from None
    outputs = []
    for rep in reports:
        rep.write(out)
        outputs += [out / f"{rep.variant}_forecasts.csv", out / f"{rep.variant}_summary.json"]
    comp = _comparisons(out, reports)
    comp_path = out / "comparison.json"
    comp_path.write_text(json.dumps(comp, indent=2, sort_keys=True) + "\n")
    write_manifest(out, "evaluate", argv, cfg.seed, cfg, [wili_path] + paths, outputs + [comp_path])
    for rep in reports:
        agg = " ".join(f"{p}={rep.aggregate(p):.4f}" for p in ("T1", "T2", "T") if rep.select(p))
        print(f"{rep.variant}: {agg}")


def cmd_ablate(args, argv):
    cfg = resolve_config(args)
    variants = [v for v in args.variants.split(",") if v]
    unknown = [v for v in variants if v not in VARIANTS]
    if unknown:
        raise UsageError(f"unknown variants {unknown}; choose from {sorted(VARIANTS)}")
    out = _out_dir(args.out)
    source, source_path = _load_source(args.source)
    wili, exo, graph, inputs = _load_panels(args)
    reports, outputs = [], []
    for v in variants:
        report, result = ablation_run(v, source, wili, exo, graph, cfg)
        if leakage_violations(result.audit):
            raise RuntimeError(f"leakage audit failed for variant {v}")
        report.write(out)
        outputs += [out / f"{v}_forecasts.csv", out / f"{v}_summary.json"]
        reports.append(report)
        print(f"{v}: " + " ".join(f"{p}={report.aggregate(p):.4f}" for p in ("T1", "T2", "T")), flush=True)
    comp = _comparisons(out, reports)
    comp_path = out / "comparison.json"
    comp_path.write_text(json.dumps(comp, indent=2, sort_keys=True) + "\n")
    write_manifest(out, "ablate", argv, cfg.seed, cfg, inputs + [source_path], outputs + [comp_path])


COMMANDS = {
    "synth": cmd_synth,
    "pretrain": cmd_pretrain,
    "train": cmd_train,
    "forecast": cmd_forecast,
    "evaluate": cmd_evaluate,
    "ablate": cmd_ablate,
}


def run(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError(f"missing subcommand; choose from {', '.join(COMMANDS)}")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        COMMANDS[args.command](args, argv)
    except UsageError as exc:
        print(f"episteer: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        print(f"episteer: run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
