"""MMWR epidemiological weeks.

Week 1 of a year is the Sunday-to-Saturday week containing January 4th, so a
year has 52 or 53 weeks. Influenza seasons start at week 40.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from datetime import date, timedelta
from functools import lru_cache

SEASON_START_WEEK = 40

_EPIWEEK_RE = re.compile(r"^(\d{4})(\d{2})$")


@lru_cache(maxsize=None)
def year_start(year: int) -> date:
    jan4 = date(year, 1, 4)
    return jan4 - timedelta(days=(jan4.weekday() + 1) % 7)


@lru_cache(maxsize=None)
def weeks_in_year(year: int) -> int:
    return (year_start(year + 1) - year_start(year)).days // 7


@dataclass(frozen=True, order=True)
class EpiWeek:
    year: int
    week: int

    def __post_init__(self):
        if not 1 <= self.week <= weeks_in_year(self.year):
            raise ValueError(f"week {self.week} out of range for {self.year}")

    @classmethod
    def parse(cls, text) -> "EpiWeek":
        m = _EPIWEEK_RE.match(str(text).strip())
        if m is None:
            raise ValueError(f"malformed epiweek {text!r}; expected YYYYWW")
        return cls(int(m.group(1)), int(m.group(2)))

    @classmethod
    def from_date(cls, d: date) -> "EpiWeek":
        year = d.year + 1
        while year_start(year) > d:
            year -= 1
        return cls(year, (d - year_start(year)).days // 7 + 1)

    def start_date(self) -> date:
        return year_start(self.year) + timedelta(weeks=self.week - 1)

    def __add__(self, n: int) -> "EpiWeek":
        if not isinstance(n, int):
            return NotImplemented
        return EpiWeek.from_date(self.start_date() + timedelta(weeks=n))

    def __sub__(self, other):
        if isinstance(other, EpiWeek):
            return (self.start_date() - other.start_date()).days // 7
        if isinstance(other, int):
            return self + (-other)
        return NotImplemented

    def next(self) -> "EpiWeek":
        if self.week < weeks_in_year(self.year):
            return EpiWeek(self.year, self.week + 1)
        return EpiWeek(self.year + 1, 1)

    @property
    def season(self) -> int:
        """Year in which this week's influenza season started."""
        return self.year if self.week >= SEASON_START_WEEK else self.year - 1

    def week_of_season(self) -> int:
        return self - EpiWeek(self.season, SEASON_START_WEEK)

    def __str__(self):
        return f"{self.year:04d}{self.week:02d}"

    def __repr__(self):
        return f"EpiWeek({self.year}w{self.week:02d})"


def week_range(start: EpiWeek, stop: EpiWeek):
    """Inclusive range of consecutive epiweeks."""
    out = []
    w = start
    while w <= stop:
        out.append(w)
        w = w.next()
    return out
