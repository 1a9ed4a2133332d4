"""Real-time training windows over the exogenous and wILI panels."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .epiweek import EpiWeek
from .panels import ExogenousPanel, WiliPanel


class InsufficientHistory(ValueError):
    pass


@dataclass(frozen=True)
class TrainingWindow:
    """Exogenous rows for weeks t-W..t-1 paired with wILI for weeks t..t+k-1.

    ``in_overlap`` is set when every target week falls on or after the
    contamination start, i.e. the observation belongs to the KD-eligible subset.
    """

    region: str
    inputs: np.ndarray  # (W, l)
    targets: np.ndarray  # (k,)
    input_weeks: tuple
    target_weeks: tuple
    in_overlap: bool

    @property
    def target_week(self) -> EpiWeek:
        return self.target_weeks[-1]

    @property
    def first_target_week(self) -> EpiWeek:
        return self.target_weeks[0]

    def latest_reference(self) -> EpiWeek:
        return max(self.input_weeks[-1], self.target_weeks[-1])


def _check(W, k):
    if W < 1 or k < 1:
        raise ValueError(f"need W >= 1 and k >= 1, got W={W}, k={k}")


def make_training_windows(exo: ExogenousPanel, wili: WiliPanel, W: int, k: int, as_of: EpiWeek):
    """All windows whose inputs and targets are dated on or before ``as_of``.

    Missing exogenous cells are forward-filled up to two weeks; a window that
    still has a gap is skipped. Windows come ordered by first target week, then
    region.
    """
    _check(W, k)
    if as_of < exo.coverage_start:
        raise InsufficientHistory(f"as_of {as_of} precedes exogenous coverage {exo.coverage_start}")
    first = exo.coverage_start + (W + k - 1)
    if first > as_of:
        raise InsufficientHistory(
            f"as_of {as_of}: need {W + k} weeks from coverage start {exo.coverage_start}"
        )
    seen = exo.until(as_of).filled()
    wili = wili.until(as_of)
    out = []
    t = exo.coverage_start + W
    while t + (k - 1) <= as_of:
        input_weeks = tuple(t - (W - i) for i in range(W))
        target_weeks = tuple(t + i for i in range(k))
        if all(seen.has_week(w) for w in input_weeks) and all(wili.has_week(w) for w in target_weeks):
            block = seen.block(input_weeks)  # (W, regions, l)
            tv = wili.column(target_weeks)  # (k, regions)
            overlap = target_weeks[0] >= wili.contamination_start
            for j, region in enumerate(exo.regions):
                x = block[:, j, :]
                if np.isnan(x).any():
                    continue
                y = tv[:, wili.region_index(region)]
                out.append(TrainingWindow(region, x.copy(), y.copy(), input_weeks, target_weeks, overlap))
        t = t.next()
    return out


def forecast_inputs(exo: ExogenousPanel, W: int, as_of: EpiWeek):
    """Inputs for forecasting weeks after ``as_of``: ``(input_weeks, array (regions, W, l))``."""
    _check(W, 1)
    input_weeks = tuple(as_of - (W - 1 - i) for i in range(W))
    if input_weeks[0] < exo.coverage_start:
        raise InsufficientHistory(f"as_of {as_of}: fewer than {W} weeks of exogenous coverage")
    seen = exo.until(as_of).filled()
    missing = [w for w in input_weeks if not seen.has_week(w)]
    if missing:
        raise InsufficientHistory(f"exogenous data absent for {', '.join(map(str, missing))}")
    block = np.transpose(seen.block(input_weeks), (1, 0, 2))
    if np.isnan(block).any():
        bad = [exo.regions[j] for j in np.unique(np.where(np.isnan(block))[0])]
        raise InsufficientHistory(f"unfillable exogenous gap before {as_of} in {', '.join(bad)}")
    return input_weeks, block.copy()
