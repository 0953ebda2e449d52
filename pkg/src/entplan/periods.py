"""Calendar periods: quarters ("2010Q2") and whole years ("2010")."""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import total_ordering

from .errors import EntplanError

_PERIOD_RE = re.compile(r"^(\d{4})(?:[Qq]([0-9]))?$")


class PeriodError(EntplanError):
    """Malformed or out-of-range period text."""


@total_ordering
@dataclass(frozen=True)
class Period:
    year: int
    quarter: int | None = None  # None means the whole year

    def __post_init__(self):
        if self.quarter is not None and not 1 <= self.quarter <= 4:
            raise PeriodError(f"quarter out of range 1-4: {self.quarter}")

    @classmethod
    def parse(cls, text: str) -> "Period":
        m = _PERIOD_RE.match(text.strip())
        if not m:
            raise PeriodError(f"malformed period {text!r}, expected YYYY or YYYYQn")
        quarter = int(m.group(2)) if m.group(2) else None
        if quarter is not None and not 1 <= quarter <= 4:
            raise PeriodError(f"malformed period {text!r}: quarter must be 1-4")
        return cls(int(m.group(1)), quarter)

    @property
    def is_quarter(self) -> bool:
        return self.quarter is not None

    def sort_key(self) -> tuple[int, int]:
        return (self.year, self.quarter or 0)

    def __lt__(self, other: "Period") -> bool:
        return self.sort_key() < other.sort_key()

    def __str__(self) -> str:
        if self.quarter is None:
            return str(self.year)
        return f"{self.year}Q{self.quarter}"

    def contains(self, other: "Period") -> bool:
        """Whether `other` falls inside this period (a year contains its quarters)."""
        if self.quarter is None:
            return other.year == self.year
        return other == self

    def previous(self) -> "Period":
        if self.quarter is None:
            return Period(self.year - 1)
        if self.quarter == 1:
            return Period(self.year - 1, 4)
        return Period(self.year, self.quarter - 1)

    def quarters(self) -> tuple["Period", ...]:
        if self.quarter is not None:
            return (self,)
        return tuple(Period(self.year, q) for q in range(1, 5))


def as_period(value) -> Period:
    """Coerce a Period or str into a Period, raising PeriodError on bad text."""
    if isinstance(value, Period):
        return value
    if isinstance(value, str):
        return Period.parse(value)
    raise PeriodError(f"cannot interpret {value!r} as a period")
