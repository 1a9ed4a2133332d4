"""Panels, epiweeks, the region graph, training windows and the synthetic generator."""

from .epiweek import EpiWeek, week_range, weeks_in_year
from .graph import RegionGraph, build_region_graph, default_graph, load_edge_list, parse_edge_list, write_edge_list
from .panels import (
    BUCKETS,
    NATIONAL,
    REGIONS,
    ExogenousPanel,
    PanelError,
    WiliPanel,
    load_exogenous,
    load_wili,
    write_exogenous,
    write_wili,
)
from .synth import SynthConfig, SyntheticSeason, synth_generate
from .windows import InsufficientHistory, TrainingWindow, forecast_inputs, make_training_windows
