"""wILI and exogenous panels with long-format CSV interchange."""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .epiweek import EpiWeek, week_range

NATIONAL = "nat"
REGIONS = (NATIONAL,) + tuple(f"hhs{i}" for i in range(1, 11))
BUCKETS = ("DS1", "DS2", "DS3", "DS4")

# forward-fill reach for missing exogenous cells
MAX_FILL_WEEKS = 2


class PanelError(ValueError):
    """Malformed or inconsistent panel input."""


@dataclass(frozen=True)
class WiliPanel:
    """Weekly wILI per region; ``values[i, j]`` is week ``weeks[i]`` in region ``regions[j]``."""

    regions: tuple
    weeks: tuple
    values: np.ndarray
    contamination_start: EpiWeek

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if values.shape != (len(self.weeks), len(self.regions)):
            raise PanelError(f"values shape {values.shape} does not match weeks x regions")
        if any(b <= a for a, b in zip(self.weeks, self.weeks[1:])):
            raise PanelError("weeks must be strictly increasing")
        if np.isnan(values).any():
            raise PanelError("wILI panel has missing cells")
        if (values < 0).any():
            raise PanelError("wILI must be non-negative")
        values.setflags(write=False)
        object.__setattr__(self, "_index", {w: i for i, w in enumerate(self.weeks)})

    def region_index(self, region):
        return self.regions.index(region)

    def has_week(self, week):
        return week in self._index

    def value(self, week, region):
        return float(self.values[self._index[week], self.region_index(region)])

    def column(self, weeks, region=None):
        rows = [self._index[w] for w in weeks]
        if region is None:
            return self.values[rows]
        return self.values[rows, self.region_index(region)]

    def series(self, region):
        j = self.region_index(region)
        return [(w, float(self.values[i, j])) for i, w in enumerate(self.weeks)]

    def until(self, as_of):
        keep = [i for i, w in enumerate(self.weeks) if w <= as_of]
        return replace(self, weeks=tuple(self.weeks[i] for i in keep), values=self.values[keep])

    @property
    def last_week(self):
        return self.weeks[-1]

    @property
    def current_season(self):
        return self.contamination_start.season

    def seasons(self):
        """Season start years present, in order."""
        return sorted({w.season for w in self.weeks})

    def season(self, year):
        """``(weeks, values)`` restricted to one season."""
        rows = [i for i, w in enumerate(self.weeks) if w.season == year]
        return tuple(self.weeks[i] for i in rows), self.values[rows]

    def historical(self):
        """Panel restricted to seasons before the contaminated one."""
        keep = [i for i, w in enumerate(self.weeks) if w.season < self.current_season]
        return replace(self, weeks=tuple(self.weeks[i] for i in keep), values=self.values[keep])


@dataclass(frozen=True)
class ExogenousPanel:
    """Per-region weekly feature vectors; NaN marks a missing cell.

    ``data[i, j, s]`` is signal ``signals[s]`` for week ``weeks[i]`` and region ``regions[j]``.
    """

    signals: tuple  # (name, bucket) pairs
    regions: tuple
    weeks: tuple
    data: np.ndarray
    coverage_start: EpiWeek

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        object.__setattr__(self, "data", data)
        if data.shape != (len(self.weeks), len(self.regions), len(self.signals)):
            raise PanelError(f"data shape {data.shape} does not match weeks x regions x signals")
        if any(b <= a for a, b in zip(self.weeks, self.weeks[1:])):
            raise PanelError("weeks must be strictly increasing")
        if self.weeks and self.weeks[0] < self.coverage_start:
            raise PanelError("exogenous data precedes coverage_start")
        for _, bucket in self.signals:
            if bucket not in BUCKETS:
                raise PanelError(f"unknown bucket {bucket!r}")
        data.setflags(write=False)
        object.__setattr__(self, "_index", {w: i for i, w in enumerate(self.weeks)})

    @property
    def n_signals(self):
        return len(self.signals)

    @property
    def signal_names(self):
        return [name for name, _ in self.signals]

    def has_week(self, week):
        return week in self._index

    def missing(self):
        return np.isnan(self.data)

    def until(self, as_of):
        keep = [i for i, w in enumerate(self.weeks) if w <= as_of]
        return replace(self, weeks=tuple(self.weeks[i] for i in keep), data=self.data[keep])

    def drop_buckets(self, buckets):
        buckets = set(buckets)
        keep = [i for i, (_, b) in enumerate(self.signals) if b not in buckets]
        if not keep:
            raise PanelError("dropping these buckets leaves no signals")
        return replace(
            self,
            signals=tuple(self.signals[i] for i in keep),
            data=self.data[:, :, keep],
        )

    def filled(self, max_fill=MAX_FILL_WEEKS):
        """Forward-fill gaps of at most ``max_fill`` consecutive weeks; longer gaps stay NaN."""
        data = self.data.copy()
        gap = np.zeros(data.shape[1:], dtype=int)
        last = np.full(data.shape[1:], np.nan)
        for i in range(data.shape[0]):
            row = data[i]
            miss = np.isnan(row)
            gap = np.where(miss, gap + 1, 0)
            fill = miss & (gap <= max_fill) & ~np.isnan(last)
            row[fill] = last[fill]
            last = np.where(miss, last, row)
        return replace(self, data=data)

    def block(self, weeks):
        """Array (len(weeks), regions, signals) for the given weeks."""
        return self.data[[self._index[w] for w in weeks]]

    def zscore_stats(self, as_of=None):
        """Per-signal mean and std over every observed cell dated <= ``as_of``."""
        data = self.data if as_of is None else self.until(as_of).data
        flat = data.reshape(-1, data.shape[-1])
        if flat.shape[0] == 0:
            raise PanelError("no exogenous data to fit normalization")
        mean = np.nanmean(flat, axis=0)
        std = np.nanstd(flat, axis=0)
        std = np.where(np.isfinite(std) & (std > 1e-8), std, 1.0)
        mean = np.where(np.isfinite(mean), mean, 0.0)
        return mean, std


def _fmt(x):
    return repr(float(x))


def write_wili(panel: WiliPanel, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epiweek", "region", "wili"])
        for i, week in enumerate(panel.weeks):
            for j, region in enumerate(panel.regions):
                w.writerow([str(week), region, _fmt(panel.values[i, j])])


def load_wili(path, contamination_start, regions=REGIONS) -> WiliPanel:
    """Read an ``epiweek,region,wili`` CSV; every region must report every week."""
    if isinstance(contamination_start, str):
        contamination_start = EpiWeek.parse(contamination_start)
    cells = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["epiweek", "region", "wili"]:
            raise PanelError(f"{path}: header must be epiweek,region,wili")
        for lineno, row in enumerate(reader, start=2):
            try:
                week = EpiWeek.parse(row["epiweek"])
            except ValueError as exc:
                raise PanelError(f"{path}:{lineno}: {exc}") from None
            region = row["region"].strip()
            if region not in regions:
                raise PanelError(f"{path}:{lineno}: unknown region {region!r}")
            try:
                value = float(row["wili"])
            except (TypeError, ValueError):
                raise PanelError(f"{path}:{lineno}: wili value {row['wili']!r} is not a number") from None
            if not np.isfinite(value) or value < 0:
                raise PanelError(f"{path}:{lineno}: wili must be a non-negative number, got {value}")
            if (week, region) in cells:
                raise PanelError(f"{path}:{lineno}: duplicate row for {region} {week}")
            cells[(week, region)] = value
    weeks = sorted({w for w, _ in cells})
    values = np.empty((len(weeks), len(regions)))
    for i, week in enumerate(weeks):
        for j, region in enumerate(regions):
            if (week, region) not in cells:
                raise PanelError(f"{path}: missing wILI for region {region} week {week}")
            values[i, j] = cells[(week, region)]
    return WiliPanel(tuple(regions), tuple(weeks), values, contamination_start)


def signal_column(name, bucket):
    return f"{bucket}:{name}"


def write_exogenous(panel: ExogenousPanel, path):
    """Long format ``epiweek,region,name,value``; names carry their bucket as ``DSn:name``.

    Missing cells are written with an empty value.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epiweek", "region", "name", "value"])
        for i, week in enumerate(panel.weeks):
            for j, region in enumerate(panel.regions):
                for s, (name, bucket) in enumerate(panel.signals):
                    v = panel.data[i, j, s]
                    w.writerow([str(week), region, signal_column(name, bucket), "" if np.isnan(v) else _fmt(v)])


def load_exogenous(path, coverage_start=None, regions=REGIONS) -> ExogenousPanel:
    """Read the long-format exogenous CSV.

    Absent rows and empty values are both recorded as missing. ``coverage_start``
    defaults to the first week in the file.
    """
    cells = {}
    signals = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["epiweek", "region", "name", "value"]:
            raise PanelError(f"{path}: header must be epiweek,region,name,value")
        for lineno, row in enumerate(reader, start=2):
            try:
                week = EpiWeek.parse(row["epiweek"])
            except ValueError as exc:
                raise PanelError(f"{path}:{lineno}: {exc}") from None
            region = row["region"].strip()
            if region not in regions:
                raise PanelError(f"{path}:{lineno}: unknown region {region!r}")
            bucket, sep, name = row["name"].partition(":")
            if not sep or bucket not in BUCKETS:
                raise PanelError(f"{path}:{lineno}: signal name {row['name']!r} must look like DSn:name")
            key = (name, bucket)
            if key not in signals:
                signals.append(key)
            raw = row["value"].strip()
            value = float(raw) if raw else np.nan
            cells[(week, region, key)] = value
    if not cells:
        raise PanelError(f"{path}: no exogenous rows")
    seen = sorted({w for w, _, _ in cells})
    # weeks absent from the file become all-missing rows
    weeks = week_range(seen[0], seen[-1])
    data = np.full((len(weeks), len(regions), len(signals)), np.nan)
    index = {w: i for i, w in enumerate(weeks)}
    rindex = {r: j for j, r in enumerate(regions)}
    sindex = {s: k for k, s in enumerate(signals)}
    for (week, region, key), value in cells.items():
        data[index[week], rindex[region], sindex[key]] = value
    if coverage_start is None:
        coverage_start = weeks[0]
    elif isinstance(coverage_start, str):
        coverage_start = EpiWeek.parse(coverage_start)
    return ExogenousPanel(tuple(signals), tuple(regions), tuple(weeks), data, coverage_start)
