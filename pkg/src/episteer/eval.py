"""Rolling-origin scoring, baselines, period tables, heatmaps and the ablation harness."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .data.epiweek import EpiWeek
from .data.panels import BUCKETS, WiliPanel
from .training import TrainConfig, weekly_protocol

PERIODS = ("T1", "T2", "T")
BEST_TOLERANCE = 1.01


def rmse(preds, truths):
    preds = np.asarray(preds, dtype=float).reshape(-1)
    truths = np.asarray(truths, dtype=float).reshape(-1)
    if preds.shape != truths.shape:
        raise ValueError(f"length mismatch: {preds.size} predictions, {truths.size} truths")
    if preds.size == 0:
        raise ValueError("rmse of an empty set")
    return float(np.sqrt(np.mean((preds - truths) ** 2)))


def hist_baseline(panel: WiliPanel, target_week: EpiWeek, region, seasons=None):
    """Mean wILI of earlier seasons at the same week of season."""
    j = panel.region_index(region)
    offset = target_week.week_of_season()
    vals = []
    for year in panel.seasons() if seasons is None else seasons:
        if year >= target_week.season:
            continue
        weeks, values = panel.season(year)
        for i, w in enumerate(weeks):
            if w.week_of_season() == offset:
                vals.append(values[i, j])
    if not vals:
        raise ValueError(f"no historical season covers week {offset} of season for {region}")
    return float(np.mean(vals))


def best_performer_count(tables, tol=BEST_TOLERANCE):
    """Credit every model within ``tol`` x the best RMSE in each region.

    ``tables`` maps model name -> {region: rmse}.
    """
    if not tables:
        return {}
    names = list(tables)
    regions = set(tables[names[0]])
    for name in names[1:]:
        if set(tables[name]) != regions:
            raise ValueError(f"{name} covers different regions")
    counts = {name: 0 for name in names}
    for region in regions:
        best = min(tables[n][region] for n in names)
        for n in names:
            if tables[n][region] <= tol * best:
                counts[n] += 1
    return counts


def ratio_cell(a, b):
    """clamp(1 - a/b, -1, 1); positive when ``a`` is the lower RMSE."""
    if b == 0:
        return 0.0 if a == 0 else -1.0
    if b > 0 and a >= 2 * b:  # saturated; also avoids overflow for tiny b
        return -1.0
    return float(min(1.0, max(-1.0, 1.0 - a / b)))


def ratio_heatmap(rmse_a, rmse_b):
    a = np.asarray(rmse_a, dtype=float)
    b = np.asarray(rmse_b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"heatmap inputs differ in shape: {a.shape} vs {b.shape}")
    out = np.empty(a.shape)
    for idx in np.ndindex(a.shape):
        out[idx] = ratio_cell(a[idx], b[idx])
    return out


def write_heatmap(path, matrix, rows, cols):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["region"] + [str(c) for c in cols])
        for r, row in zip(rows, matrix):
            w.writerow([r] + [repr(float(v)) for v in row])


@dataclass
class Entry:
    region: str
    as_of: EpiWeek
    horizon: int
    target_week: EpiWeek
    pred: float
    truth: float


@dataclass
class ForecastReport:
    entries: list
    variant: str = "cali_net"
    seed: int = 0
    config_hash: str = ""
    periods: dict = field(default_factory=dict)  # name -> list of target weeks

    @classmethod
    def from_forecasts(cls, forecasts, wili: WiliPanel, cfg: TrainConfig, variant="cali_net"):
        periods = {p: cfg.period_weeks(p) for p in PERIODS}
        entries = []
        for f in forecasts:
            if not wili.has_week(f.target_week):
                continue
            entries.append(Entry(f.region, f.as_of, f.horizon, f.target_week, f.prediction,
                                 wili.value(f.target_week, f.region)))
        return cls(entries, variant, cfg.seed, cfg.digest(), periods)

    @property
    def regions(self):
        return sorted({e.region for e in self.entries}, key=_region_key)

    def select(self, period=None, region=None, horizon=None):
        weeks = None if period is None else set(self.periods[period])
        return [e for e in self.entries
                if (weeks is None or e.target_week in weeks)
                and (region is None or e.region == region)
                and (horizon is None or e.horizon == horizon)]

    def rmse_table(self, period, horizon=None):
        """{region: rmse} over the target weeks of ``period``."""
        table = {}
        for region in self.regions:
            sel = self.select(period, region, horizon)
            if sel:
                table[region] = rmse([e.pred for e in sel], [e.truth for e in sel])
        return table

    def aggregate(self, period, horizon=None):
        sel = self.select(period, horizon=horizon)
        return rmse([e.pred for e in sel], [e.truth for e in sel])

    def weekly_rmse(self, horizon=1):
        """(regions, weeks, matrix) of per-cell RMSE for one horizon."""
        weeks = sorted({e.target_week for e in self.entries if e.horizon == horizon})
        regions = self.regions
        m = np.full((len(regions), len(weeks)), np.nan)
        ri = {r: i for i, r in enumerate(regions)}
        wi = {w: i for i, w in enumerate(weeks)}
        for e in self.entries:
            if e.horizon == horizon:
                m[ri[e.region], wi[e.target_week]] = abs(e.pred - e.truth)
        return regions, weeks, m

    def summary(self):
        return {
            "variant": self.variant,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "periods": {p: [str(w) for w in ws] for p, ws in self.periods.items()},
            "rmse": {p: self.rmse_table(p) for p in PERIODS if self.select(p)},
            "aggregate": {p: self.aggregate(p) for p in PERIODS if self.select(p)},
        }

    def write(self, out_dir, stem=None):
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        stem = stem or self.variant
        with open(out_dir / f"{stem}_forecasts.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["region", "epiweek", "horizon", "pred", "truth", "variant", "as_of"])
            for e in self.entries:
                w.writerow([e.region, str(e.target_week), e.horizon, repr(e.pred), repr(e.truth),
                            self.variant, str(e.as_of)])
        with open(out_dir / f"{stem}_summary.json", "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)


def _region_key(r):
    return (0, 0) if r == "nat" else (1, int(r[3:])) if r.startswith("hhs") and r[3:].isdigit() else (2, r)


def read_forecasts(path):
    """Rows of a forecasts CSV as a list of dicts with parsed fields."""
    rows = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append({
                "region": row["region"],
                "epiweek": EpiWeek.parse(row["epiweek"]),
                "horizon": int(row["horizon"]),
                "pred": float(row["pred"]),
                "truth": float(row["truth"]) if row.get("truth") not in (None, "") else None,
                "variant": row.get("variant", ""),
                "as_of": EpiWeek.parse(row["as_of"]) if row.get("as_of") else None,
            })
    return rows


# variant name -> config overrides applied on top of the base config
VARIANTS = {
    "cali_net": {},
    "no_region_recon": {"lambda_re": 0.0},
    "no_laplacian": {"lambda_lap": 0.0},
    "feedforward_instead_of_gru": {"encoder": "ff"},
    "no_kd": {"kd_enabled": False},
    **{f"drop_{b}": {"drop_buckets": (b,)} for b in BUCKETS},
    "standalone_caem": {"model": "standalone_caem"},
    "gru_only": {"model": "standalone_caem", "use_region_embedding": False, "lambda_re": 0.0, "lambda_lap": 0.0},
    "source_only": {"model": "source_only"},
}


def variant_config(base: TrainConfig, variant):
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; choose from {sorted(VARIANTS)}")
    return replace(base, **VARIANTS[variant])


def config_diff(a: TrainConfig, b: TrainConfig):
    da, db = a.to_dict(), b.to_dict()
    return {k: (da[k], db[k]) for k in da if da[k] != db[k]}


def ablation_run(variant, source, wili, exo, graph, cfg: TrainConfig, weeks=None):
    """Same protocol as the full model with one component or bucket switched off."""
    vcfg = variant_config(cfg, variant)
    result = weekly_protocol(source, wili, exo, graph, vcfg, weeks=weeks)
    report = ForecastReport.from_forecasts(result.forecasts, wili, vcfg, variant)
    return report, result


def leakage_violations(audit):
    """Audit records that reference any week later than their as_of."""
    return [rec for rec in audit if not rec.clean()]
