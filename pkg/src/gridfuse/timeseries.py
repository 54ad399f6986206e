"""Multi-rate time-series data model, masking, scaling and the linear baseline."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from gridfuse._core import interp_hold
from gridfuse.errors import InvalidArgument, NoDataError

DAY_SECONDS = 86400.0


class Phase(str, enum.Enum):
    A = "A"
    B = "B"
    C = "C"


class Quantity(str, enum.Enum):
    ActivePower_kW = "P_kW"
    ReactivePower_kVAr = "Q_kVAr"
    VoltageMag_pu = "V_pu"

    @classmethod
    def parse(cls, text: str) -> "Quantity":
        for q in cls:
            if text in (q.value, q.name):
                return q
        raise InvalidArgument(
            f"unknown quantity {text!r}; expected one of {[q.value for q in cls]}"
        )


@dataclass(frozen=True)
class TimeGrid:
    start: float
    step: float
    count: int

    def __post_init__(self):
        if not self.step > 0:
            raise InvalidArgument(f"grid step must be > 0, got {self.step}")
        if self.count < 1:
            raise InvalidArgument(f"grid count must be >= 1, got {self.count}")

    @classmethod
    def day(cls, step: float) -> "TimeGrid":
        """Grid covering one day ``[0, 86400)`` at ``step`` seconds."""
        count = int(round(DAY_SECONDS / step))
        return cls(0.0, float(step), count)

    @property
    def times(self) -> np.ndarray:
        return self.start + self.step * np.arange(self.count, dtype=float)

    @property
    def end(self) -> float:
        return self.start + self.step * (self.count - 1)


@dataclass(frozen=True)
class TimeSeriesTask:
    """One sensor stream: identity plus strictly increasing (time, value) samples."""

    task_id: str
    bus_id: str
    phase: Phase
    quantity: Quantity
    times: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).reshape(-1)
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if t.shape != v.shape:
            raise InvalidArgument(
                f"task {self.task_id}: {t.size} timestamps but {v.size} values"
            )
        if np.any(np.isnan(v)) or np.any(np.isnan(t)):
            raise InvalidArgument(f"task {self.task_id}: NaN among samples")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise InvalidArgument(f"task {self.task_id}: timestamps not strictly increasing")
        t.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "phase", Phase(self.phase))
        if not isinstance(self.quantity, Quantity):
            object.__setattr__(self, "quantity", Quantity.parse(self.quantity))

    def __len__(self) -> int:
        return self.times.size

    def with_samples(self, times, values) -> "TimeSeriesTask":
        return TimeSeriesTask(self.task_id, self.bus_id, self.phase, self.quantity, times, values)


@dataclass(frozen=True)
class MissingnessMask:
    task_id: str
    kept_indices: tuple[int, ...]
    seed: int
    fraction_missing: float


@dataclass(frozen=True)
class Standardization:
    mean: float
    std: float

    def apply(self, v):
        return (np.asarray(v, dtype=float) - self.mean) / self.std

    def invert(self, z):
        return np.asarray(z, dtype=float) * self.std + self.mean


def kept_count(n: int, fraction: float) -> int:
    # Python's round() is half-to-even; spell out half-up so 0.5 cases are stable.
    return int(math.floor((1.0 - fraction) * n + 0.5))


def apply_missingness(
    task: TimeSeriesTask, fraction: float, seed: int
) -> tuple[TimeSeriesTask, MissingnessMask]:
    """Drop ``fraction`` of the samples uniformly at random.

    The kept set is a prefix of one seeded permutation, so for a fixed seed a
    smaller fraction always keeps a superset of the samples a larger one keeps.
    """
    if not 0.0 <= fraction < 1.0:
        raise InvalidArgument(f"missing fraction must be in [0, 1), got {fraction}")
    n = len(task)
    if n == 0:
        raise InvalidArgument(f"task {task.task_id} is empty")
    k = kept_count(n, fraction)
    perm = np.random.default_rng(seed).permutation(n)
    kept = np.sort(perm[:k])
    mask = MissingnessMask(task.task_id, tuple(int(i) for i in kept), seed, fraction)
    return task.with_samples(task.times[kept], task.values[kept]), mask


def linear_interpolate(task: TimeSeriesTask, grid: TimeGrid | Sequence[float]) -> np.ndarray:
    """Piecewise-linear interpolation with constant hold outside the sampled span."""
    if len(task) == 0:
        raise NoDataError(f"task {task.task_id} has no samples to interpolate")
    query = grid.times if isinstance(grid, TimeGrid) else np.asarray(grid, dtype=float)
    return interp_hold(task.times, task.values, query)


def standardize_task(task: TimeSeriesTask) -> tuple[TimeSeriesTask, Standardization]:
    v = task.values
    mean = float(v.mean()) if v.size else 0.0
    std = float(v.std()) if v.size >= 2 else 0.0  # population std: [0, 2] -> [-1, 1]
    if not std > 0 or not math.isfinite(std):
        std = 1.0
    st = Standardization(mean, std)
    return task.with_samples(task.times, st.apply(v)), st


def destandardize(values, st: Standardization) -> np.ndarray:
    return st.invert(values)


def normalize_time(t, horizon: float = DAY_SECONDS):
    if not horizon > 0:
        raise InvalidArgument(f"horizon must be > 0, got {horizon}")
    return np.asarray(t, dtype=float) / horizon if np.ndim(t) else float(t) / horizon


# -- measurement CSV ---------------------------------------------------------

MEASUREMENT_HEADER = ["task_id", "bus_id", "phase", "quantity", "timestamp_s", "value"]


def write_measurements(path: str | Path, tasks: Iterable[TimeSeriesTask]) -> None:
    from gridfuse.io import atomic_writer

    with atomic_writer(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MEASUREMENT_HEADER)
        for task in tasks:
            for t, v in zip(task.times, task.values):
                w.writerow([task.task_id, task.bus_id, task.phase.value,
                            task.quantity.value, repr(float(t)), repr(float(v))])


def read_measurements(path: str | Path) -> list[TimeSeriesTask]:
    """Read a measurement CSV; tasks come back in first-appearance order."""
    rows: dict[str, dict] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != MEASUREMENT_HEADER:
            raise InvalidArgument(
                f"{path}: expected header {','.join(MEASUREMENT_HEADER)}, got {header}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 6:
                raise InvalidArgument(f"{path}:{lineno}: expected 6 fields, got {len(row)}")
            task_id, bus_id, phase, quantity, ts, val = row
            try:
                t, v = float(ts), float(val)
            except ValueError as exc:
                raise InvalidArgument(f"{path}:{lineno}: {exc}") from None
            entry = rows.setdefault(
                task_id, {"bus_id": bus_id, "phase": phase, "quantity": quantity, "t": [], "v": []}
            )
            entry["t"].append(t)
            entry["v"].append(v)
    tasks = []
    for task_id, e in rows.items():
        t = np.array(e["t"])
        v = np.array(e["v"])
        order = np.argsort(t, kind="stable")
        tasks.append(TimeSeriesTask(task_id, e["bus_id"], Phase(e["phase"]),
                                    Quantity.parse(e["quantity"]), t[order], v[order]))
    return tasks
