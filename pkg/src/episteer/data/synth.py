"""Synthetic historical and contaminated seasons for desk-scale verification.

Historical seasons are Gaussian bumps with per-season jitter. The current
season follows the typical bump and, from the contamination start, picks up an
extra term that creeps, surges (first evaluation period) and then decays
(second period). Exogenous signals are noisy transforms of a driver that leads
the contamination term by ``driver_lead`` weeks; a few of them (ER visits,
thermometer readings) track total wILI instead. Line-list signals (DS1) are the
least noisy, social media (DS4) the noisiest.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .epiweek import SEASON_START_WEEK, EpiWeek
from .graph import RegionGraph, default_graph
from .panels import REGIONS, ExogenousPanel, WiliPanel

# name, bucket, source ("driver", "lagged", "total", "trend"), noise in wILI units, output scale
SIGNALS = (
    ("confirmed_cases", "DS1", "driver", 0.05, 1000.0),
    ("hospitalizations", "DS1", "lagged", 0.05, 100.0),
    ("ili_er_visits", "DS1", "total", 0.05, 50.0),
    ("people_tested", "DS2", "driver", 0.3, 5000.0),
    ("negative_cases", "DS2", "trend", 0.3, 4000.0),
    ("thermometer_readings", "DS3", "total", 0.5, 10.0),
    ("health_tweets", "DS4", "driver", 0.8, 200.0),
)


@dataclass
class SynthConfig:
    n_seasons: int = 15
    season_length: int = 33
    current_season: int = 2019
    contamination_start: str = "202003"
    coverage_start: str = "201950"
    uptrend_start: str = "202005"
    uptrend_peak: str = "202011"
    decline_end: str = "202016"
    uptrend_magnitude: float = 3.0
    signal_noise: float = 1.0
    peak_week: float = 18.0  # week of season
    peak_width: float = 4.5
    peak_jitter: float = 1.5
    season_jitter: float = 0.15
    obs_noise: float = 0.05
    driver_lead: int = 1
    missing_rate: float = 0.0
    regions: tuple = field(default_factory=lambda: REGIONS)

    def validate(self):
        if self.n_seasons < 1 or self.season_length < 8:
            raise ValueError("need at least one historical season of 8+ weeks")
        if self.uptrend_magnitude < 0 or self.signal_noise < 0 or not 0 <= self.missing_rate < 1:
            raise ValueError("magnitude, noise and missing rate must be non-negative (rate < 1)")
        order = [EpiWeek.parse(x) for x in (self.contamination_start, self.uptrend_start,
                                            self.uptrend_peak, self.decline_end)]
        if any(b <= a for a, b in zip(order, order[1:])):
            raise ValueError("contamination phases must be strictly ordered")
        if EpiWeek.parse(self.coverage_start) > order[0]:
            raise ValueError("exogenous coverage must start no later than contamination")
        if order[-1].season != self.current_season or order[0].season != self.current_season:
            raise ValueError("contamination must fall inside the current season")


@dataclass
class SyntheticSeason:
    wili: WiliPanel
    exo: ExogenousPanel
    graph: RegionGraph
    contamination: np.ndarray  # (current-season weeks, regions), added wILI
    driver: np.ndarray  # same shape, what the exogenous signals see
    current_weeks: tuple
    typical: np.ndarray  # current season without contamination

    def __iter__(self):
        return iter((self.wili, self.exo, self.graph))


def contamination_profile(j, jw, ju, jp, je):
    """Unit-peak shape over week-of-season ``j``: creep, surge to 1, decay to 0."""
    j = np.asarray(j, dtype=float)
    out = np.zeros_like(j)
    creep = (j >= jw) & (j < ju)
    out[creep] = 0.1 * (j[creep] - jw) / (ju - jw)
    rise = (j >= ju) & (j <= jp)
    out[rise] = 0.1 + 0.9 * 0.5 * (1 - np.cos(np.pi * (j[rise] - ju) / (jp - ju)))
    fall = (j > jp) & (j <= je)
    out[fall] = 0.5 * (1 + np.cos(np.pi * (j[fall] - jp) / (je - jp)))
    return out


def _season_weeks(year, length):
    start = EpiWeek(year, SEASON_START_WEEK)
    return [start + i for i in range(length)]


def synth_generate(seed, cfg: SynthConfig | None = None) -> SyntheticSeason:
    cfg = cfg or SynthConfig()
    cfg.validate()
    rng = np.random.default_rng(seed)
    regions = tuple(cfg.regions)
    hhs = [j for j, r in enumerate(regions) if r != "nat"]
    nat = regions.index("nat")
    n_hhs = len(hhs)

    base = rng.uniform(0.6, 1.4, n_hhs)
    height = rng.uniform(2.5, 5.0, n_hhs)
    offset = rng.normal(0.0, 1.0, n_hhs)
    share = rng.uniform(0.6, 1.3, n_hhs)  # regional exposure to contamination
    idx = np.arange(cfg.season_length, dtype=float)

    def season_curve(mu, sd, h, h_region):
        bump = np.exp(-((idx[:, None] - mu - offset[None, :]) ** 2) / (2 * sd**2))
        return base[None, :] + height[None, :] * h * h_region[None, :] * bump

    def with_national(hhs_values):
        full = np.empty((hhs_values.shape[0], len(regions)))
        full[:, hhs] = hhs_values
        full[:, nat] = hhs_values.mean(axis=1)
        return full

    weeks, blocks = [], []
    first_year = cfg.current_season - cfg.n_seasons
    for year in range(first_year, cfg.current_season):
        mu = cfg.peak_week + rng.normal(0.0, cfg.peak_jitter)
        sd = cfg.peak_width * (1 + rng.normal(0.0, 0.1))
        h = 1 + rng.normal(0.0, cfg.season_jitter)
        hr = 1 + rng.normal(0.0, cfg.season_jitter / 2, n_hhs)
        y = season_curve(mu, max(sd, 1.0), h, hr) + rng.normal(0.0, cfg.obs_noise, (cfg.season_length, n_hhs))
        weeks += _season_weeks(year, cfg.season_length)
        blocks.append(with_national(y))

    cur_weeks = _season_weeks(cfg.current_season, cfg.season_length)
    hr = 1 + rng.normal(0.0, cfg.season_jitter / 2, n_hhs)
    typical = season_curve(cfg.peak_week, cfg.peak_width, 1.0, hr)
    typical = typical + rng.normal(0.0, cfg.obs_noise, typical.shape)

    marks = [EpiWeek.parse(x).week_of_season() for x in
             (cfg.contamination_start, cfg.uptrend_start, cfg.uptrend_peak, cfg.decline_end)]
    profile = contamination_profile(idx, *marks)
    lead = contamination_profile(idx + cfg.driver_lead, *marks)
    contamination = cfg.uptrend_magnitude * profile[:, None] * share[None, :]
    driver = cfg.uptrend_magnitude * lead[:, None] * share[None, :]
    current = typical + contamination
    weeks += cur_weeks
    blocks.append(with_national(current))

    values = np.clip(np.vstack(blocks), 0.05, None)
    contamination_start = EpiWeek.parse(cfg.contamination_start)
    wili = WiliPanel(regions, tuple(weeks), values, contamination_start)

    coverage = EpiWeek.parse(cfg.coverage_start)
    rows = [i for i, w in enumerate(cur_weeks) if w >= coverage]
    total = with_national(np.clip(current, 0.05, None))[rows]
    drv = with_national(driver)[rows]
    lagged = with_national(contamination)[rows]
    trend = np.linspace(0.5, 1.5, len(rows))[:, None] * np.ones((1, len(regions)))
    region_gain = rng.uniform(0.8, 1.2, len(regions))
    data = np.empty((len(rows), len(regions), len(SIGNALS)))
    for s, (_, _, source, noise, out_scale) in enumerate(SIGNALS):
        clean = {"driver": drv, "lagged": lagged, "total": total, "trend": trend + 0.5 * drv}[source]
        noisy = clean + rng.normal(0.0, noise * cfg.signal_noise, clean.shape)
        # percent-type signals carry no population scale
        gain = 1.0 if source == "total" else region_gain[None, :]
        data[:, :, s] = out_scale * gain * noisy
    if cfg.missing_rate > 0:
        data[rng.random(data.shape) < cfg.missing_rate] = np.nan
    exo = ExogenousPanel(
        tuple((name, bucket) for name, bucket, *_ in SIGNALS),
        regions,
        tuple(cur_weeks[i] for i in rows),
        data,
        coverage,
    )
    return SyntheticSeason(
        wili=wili,
        exo=exo,
        graph=default_graph(),
        contamination=with_national(contamination),
        driver=with_national(driver),
        current_weeks=tuple(cur_weeks),
        typical=with_national(typical),
    )
