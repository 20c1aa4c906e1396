"""Small container for quantities indexed by site separation."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class DistanceSeries:
    """Values C(d) on integer separations d.

    Periodic series hold d = 0..M-1 and resolve negative d modulo M; open
    series hold d = -(M-1)..(M-1).
    """

    d: np.ndarray
    values: np.ndarray
    periodic: bool = False

    @property
    def M(self) -> int:
        return len(self.d) if self.periodic else (len(self.d) + 1) // 2

    def at(self, d: int) -> float:
        if self.periodic:
            return float(self.values[int(d) % self.M])
        idx = int(d) + self.M - 1
        if not 0 <= idx < len(self.values):
            raise IndexError(f"separation {d} outside the series")
        return float(self.values[idx])

    def __len__(self):
        return len(self.values)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["d", "value"])
        for a, b in zip(self.d, self.values):
            w.writerow([int(a), repr(float(b))])
        return buf.getvalue()
