"""Benchmark result types and the shared CSV emitter."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field


def gain(time_original_ms: float, time_hybrid_ms: float) -> float:
    """Relative makespan improvement of the hybrid run; may be negative."""
    if time_original_ms == 0:
        raise ZeroDivisionError("original execution time is zero")
    return (time_original_ms - time_hybrid_ms) / time_original_ms


@dataclass(frozen=True)
class GainReport:
    time_original_ms: float
    time_hybrid_ms: float

    @property
    def gain(self) -> float:
        return gain(self.time_original_ms, self.time_hybrid_ms)


@dataclass
class BalanceReport:
    """Elements processed per reader, in reader submission order."""

    counts: list[int]

    @property
    def total(self) -> int:
        return sum(self.counts)

    @property
    def fractions(self) -> list[float]:
        total = self.total
        if total == 0:
            return [0.0 for _ in self.counts]
        return [c / total for c in self.counts]


@dataclass
class CsvLog:
    """Accumulates (config_id, mode, metric, value, unit) rows for one run."""

    rows: list[tuple[str, str, str, float, str]] = field(default_factory=list)

    def add(self, config_id: str, mode: str, metric: str, value: float,
            unit: str) -> None:
        self.rows.append((config_id, mode, metric, float(value), unit))

    def write(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["config_id", "mode", "metric", "value", "unit"])
            for config_id, mode, metric, value, unit in self.rows:
                writer.writerow([config_id, mode, metric, f"{value:.6f}", unit])

    def values(self, metric: str, mode: str | None = None) -> list[float]:
        return [v for cid, m, met, v, _ in self.rows
                if met == metric and (mode is None or m == mode)]
