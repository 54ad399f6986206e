"""Synthetic ground truth: radial feeder model, residential loads, LinDistFlow, sampling."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.ndimage import gaussian_filter1d

from gridfuse._core import lindistflow_sweep
from gridfuse.errors import FeederValidationError, InfeasibleOperatingPoint, InvalidArgument
from gridfuse.timeseries import DAY_SECONDS, Phase, Quantity, TimeSeriesTask

MINUTES_PER_DAY = 1440
BUNDLED_FEEDER = "ieee37_sp.json"


@dataclass(frozen=True)
class FeederModel:
    """Radial feeder in topological order: ``parent[i] < i``, bus 0 is the substation.

    ``r[i]``, ``x[i]`` are the per-unit impedance of the line feeding bus ``i``
    (zero for the root). ``load_kw`` is each bus's nominal peak demand.
    """

    bus_ids: tuple[str, ...]
    parent: np.ndarray
    r: np.ndarray
    x: np.ndarray
    load_kw: np.ndarray
    substation_v_pu: float = 1.0
    s_base_kva: float = 1000.0
    name: str = ""

    @property
    def n_buses(self) -> int:
        return len(self.bus_ids)

    @property
    def load_buses(self) -> list[str]:
        return [b for b, kw in zip(self.bus_ids, self.load_kw) if kw > 0]

    def index(self, bus_id: str) -> int:
        try:
            return self.bus_ids.index(bus_id)
        except ValueError:
            raise InvalidArgument(f"unknown bus {bus_id!r}") from None

    def depth(self) -> np.ndarray:
        d = np.zeros(self.n_buses)
        for i in range(1, self.n_buses):
            d[i] = d[self.parent[i]] + 1
        return d

    def normalized_depth(self) -> dict[str, float]:
        d = self.depth()
        top = d.max() or 1.0
        return {b: float(v / top) for b, v in zip(self.bus_ids, d)}


def _fail(src, msg):
    raise FeederValidationError(f"{src}: {msg}")


def feeder_from_dict(doc: Mapping, src: str = "<feeder>") -> FeederModel:
    """Validate a feeder document and return it in topological order."""
    buses = doc.get("buses")
    lines = doc.get("lines")
    if not isinstance(buses, list) or not buses:
        _fail(src, "'buses' must be a nonempty list")
    if not isinstance(lines, list):
        _fail(src, "'lines' must be a list")
    parent: dict[str, str | None] = {}
    load: dict[str, float] = {}
    for i, b in enumerate(buses):
        if not isinstance(b, dict) or "id" not in b:
            _fail(src, f"buses[{i}]: expected an object with 'id'")
        bid = str(b["id"])
        if bid in parent:
            _fail(src, f"buses[{i}]: duplicate bus id {bid!r}")
        p = b.get("parent")
        parent[bid] = None if p is None else str(p)
        kw = float(b.get("load_kw", 0.0))
        if kw < 0 or not math.isfinite(kw):
            _fail(src, f"buses[{i}] ({bid}): load_kw must be finite and >= 0")
        load[bid] = kw
    roots = [b for b, p in parent.items() if p is None]
    if len(roots) != 1:
        _fail(src, f"expected exactly one root bus (parent null), found {len(roots)}: {roots}")
    for i, (b, p) in enumerate(parent.items()):
        if p is not None and p not in parent:
            _fail(src, f"buses[{i}] ({b}): parent {p!r} is not a bus")

    imp: dict[str, tuple[float, float]] = {}
    for i, ln in enumerate(lines):
        try:
            a, b = str(ln["from"]), str(ln["to"])
            r, x = float(ln["r_pu"]), float(ln["x_pu"])
        except (KeyError, TypeError, ValueError) as exc:
            _fail(src, f"lines[{i}]: malformed line ({exc})")
        where = f"lines[{i}] ({a}->{b})"
        if a not in parent or b not in parent:
            _fail(src, f"{where}: references an unknown bus")
        if r < 0 or x < 0 or not (math.isfinite(r) and math.isfinite(x)):
            _fail(src, f"{where}: negative or non-finite impedance r={r}, x={x}")
        if parent[b] == a:
            child = b
        elif parent[a] == b:
            child = a
        else:
            _fail(src, f"{where}: edge closes a cycle (not a parent-child pair)")
        if child in imp:
            _fail(src, f"{where}: duplicate edge closes a cycle")
        imp[child] = (r, x)

    # Breadth-first order from the root; anything unreached sits on a cycle.
    root = roots[0]
    children: dict[str, list[str]] = {b: [] for b in parent}
    for b, p in parent.items():
        if p is not None:
            children[p].append(b)
    order = [root]
    k = 0
    while k < len(order):
        order.extend(children[order[k]])
        k += 1
    if len(order) != len(parent):
        stray = next(b for b in parent if b not in set(order))
        _fail(src, f"edge {parent[stray]}->{stray} lies on a cycle detached from root {root!r}")
    for b in order[1:]:
        if b not in imp:
            _fail(src, f"bus {b!r} has no line from its parent {parent[b]!r}")

    idx = {b: i for i, b in enumerate(order)}
    par = np.array([-1] + [idx[parent[b]] for b in order[1:]], dtype=np.intp)
    r = np.array([0.0] + [imp[b][0] for b in order[1:]])
    x = np.array([0.0] + [imp[b][1] for b in order[1:]])
    v0 = float(doc.get("substation_v_pu", 1.0))
    if not v0 > 0:
        _fail(src, "substation_v_pu must be > 0")
    return FeederModel(tuple(order), par, r, x, np.array([load[b] for b in order]), v0,
                       float(doc.get("s_base_kva", 1000.0)), str(doc.get("name", "")))


def load_feeder(path: str | Path | None = None) -> FeederModel:
    """Load and validate a feeder JSON file; ``None`` or the bundled name loads the 37-bus model."""
    if path is None or (str(path) == BUNDLED_FEEDER and not Path(path).exists()):
        text = resources.files("gridfuse.data").joinpath(BUNDLED_FEEDER).read_text("utf-8")
        src = BUNDLED_FEEDER
    else:
        text = Path(path).read_text(encoding="utf-8")
        src = str(path)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FeederValidationError(f"{src}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return feeder_from_dict(doc, src)


# -- loads -------------------------------------------------------------------


@dataclass(frozen=True)
class LoadProfile:
    bus_id: str
    p_kw: np.ndarray
    q_kvar: np.ndarray


def q_ratio(pf: float) -> float:
    if not 0.0 < pf <= 1.0:
        raise InvalidArgument(f"power factor must be in (0, 1], got {pf}")
    return 0.0 if pf == 1.0 else math.tan(math.acos(pf))


def residential_shape(rng: np.random.Generator, minutes: np.ndarray) -> np.ndarray:
    """Double-peak daily demand in units of the bus's nominal peak."""
    h = minutes / 60.0
    base = 0.25 + 0.05 * rng.uniform()
    morning = (0.45 + 0.15 * rng.uniform()) * np.exp(
        -0.5 * ((h - 7.5 - rng.normal(0, 0.4)) / (1.0 + 0.2 * rng.uniform())) ** 2)
    evening = (0.65 + 0.15 * rng.uniform()) * np.exp(
        -0.5 * ((h - 19.0 - rng.normal(0, 0.4)) / (1.6 + 0.3 * rng.uniform())) ** 2)
    wiggle = gaussian_filter1d(rng.normal(size=minutes.size), sigma=45.0, mode="wrap")
    wiggle *= 0.03 / max(wiggle.std(), 1e-12)
    return np.maximum(base + morning + evening + wiggle, 0.05)


def generate_load_profiles(feeder: FeederModel, seed: int, pf: float = 0.87) -> list[LoadProfile]:
    k = q_ratio(pf)
    minutes = np.arange(MINUTES_PER_DAY, dtype=float)
    rng = np.random.default_rng(seed)
    out = []
    for bus, kw in zip(feeder.bus_ids, feeder.load_kw):
        if kw <= 0:
            continue
        p = kw * residential_shape(rng, minutes)
        out.append(LoadProfile(bus, p, p * k))
    return out


# -- power flow --------------------------------------------------------------


def _solve_w(feeder: FeederModel, p_pu: np.ndarray, q_pu: np.ndarray):
    w, th = lindistflow_sweep(feeder.parent, feeder.r, feeder.x, p_pu, q_pu,
                              feeder.substation_v_pu ** 2)
    if not np.all(w > 0):
        t, i = np.argwhere(~(w > 0))[0]
        raise InfeasibleOperatingPoint(
            f"squared voltage {w[t, i]:.4g} <= 0 at bus {feeder.bus_ids[i]} (snapshot {t})"
        )
    return w, th


def _load_array(feeder: FeederModel, loads: Mapping[str, tuple[float, float]]):
    p = np.zeros(feeder.n_buses)
    q = np.zeros(feeder.n_buses)
    for bus, (pb, qb) in loads.items():
        i = feeder.index(bus)
        if not (math.isfinite(pb) and math.isfinite(qb)):
            raise InvalidArgument(f"non-finite load at bus {bus}")
        p[i], q[i] = pb, qb
    return p, q


def lindistflow_solve(feeder: FeederModel, loads_at_t: Mapping[str, tuple[float, float]]) -> dict[str, float]:
    """Voltage magnitude (p.u.) per bus for per-bus ``(p_pu, q_pu)`` consumption."""
    p, q = _load_array(feeder, loads_at_t)
    w, _ = _solve_w(feeder, p, q)
    return dict(zip(feeder.bus_ids, np.sqrt(w[0]).tolist()))


def lindistflow_squared(feeder: FeederModel, loads_at_t) -> np.ndarray:
    """Squared magnitudes in bus order; the form in which the recursion is linear."""
    p, q = _load_array(feeder, loads_at_t)
    return _solve_w(feeder, p, q)[0][0]


@dataclass(frozen=True)
class GroundTruth:
    """Per-minute states for one synthetic day, arrays shaped (1440, n_buses)."""

    bus_ids: tuple[str, ...]
    times: np.ndarray
    p_kw: np.ndarray
    q_kvar: np.ndarray
    v_mag: np.ndarray
    v_ang: np.ndarray

    def column(self, bus_id: str) -> int:
        return self.bus_ids.index(bus_id)

    def series(self, quantity: Quantity, bus_id: str) -> np.ndarray:
        arr = {Quantity.ActivePower_kW: self.p_kw, Quantity.ReactivePower_kVAr: self.q_kvar,
               Quantity.VoltageMag_pu: self.v_mag}[quantity]
        return arr[:, self.column(bus_id)]


def simulate_day(feeder: FeederModel, profiles: Sequence[LoadProfile]) -> GroundTruth:
    """Run LinDistFlow at every minute of the day."""
    p = np.zeros((MINUTES_PER_DAY, feeder.n_buses))
    q = np.zeros_like(p)
    for prof in profiles:
        i = feeder.index(prof.bus_id)
        p[:, i] = prof.p_kw
        q[:, i] = prof.q_kvar
    w, th = _solve_w(feeder, p / feeder.s_base_kva, q / feeder.s_base_kva)
    times = np.arange(MINUTES_PER_DAY, dtype=float) * 60.0
    return GroundTruth(feeder.bus_ids, times, p, q, np.sqrt(w), th)


def sample_measurements(
    truth: GroundTruth,
    ami_step: float = 900.0,
    scada_step: float = 60.0,
    noise_rel: float = 0.005,
    seed: int = 0,
    load_buses: Sequence[str] | None = None,
    voltage_buses: Sequence[str] | None = None,
) -> list[TimeSeriesTask]:
    """Sample AMI (P, Q per load bus) and SCADA (|v| per bus) tasks from a simulated day.

    Additive Gaussian noise has std ``noise_rel`` times each task's signal std.
    """
    for name, step in (("ami_step", ami_step), ("scada_step", scada_step)):
        if not step > 0 or DAY_SECONDS % step or step % 60:
            raise InvalidArgument(f"{name}={step} must be a whole number of minutes dividing 86400")
    if noise_rel < 0:
        raise InvalidArgument("noise_rel must be >= 0")
    rng = np.random.default_rng(seed)
    if load_buses is None:
        load_buses = [b for j, b in enumerate(truth.bus_ids) if np.any(truth.p_kw[:, j] != 0)]
    if voltage_buses is None:
        voltage_buses = list(truth.bus_ids)

    def task(bus, quantity, step, tag):
        stride = int(step // 60)
        sig = truth.series(quantity, bus)[::stride]
        t = truth.times[::stride]
        noise = rng.normal(size=sig.size) * (noise_rel * sig.std()) if noise_rel else 0.0
        return TimeSeriesTask(f"{tag}_{quantity.value}_{bus}", bus, Phase.A, quantity, t, sig + noise)

    tasks = []
    for bus in load_buses:
        tasks.append(task(bus, Quantity.ActivePower_kW, ami_step, "ami"))
        tasks.append(task(bus, Quantity.ReactivePower_kVAr, ami_step, "ami"))
    for bus in voltage_buses:
        tasks.append(task(bus, Quantity.VoltageMag_pu, scada_step, "scada"))
    return tasks


def synthesize(feeder: FeederModel, seed: int, pf: float = 0.87):
    """Profiles and the simulated day for one seed."""
    profiles = generate_load_profiles(feeder, seed, pf)
    return profiles, simulate_day(feeder, profiles)


# -- ground-truth CSV ----------------------------------------------------------

TRUTH_HEADER = ["timestamp_s", "bus_id", "p_kw", "q_kvar", "v_mag_pu", "v_ang_rad"]


def write_truth(path, truth: GroundTruth) -> None:
    import csv

    from gridfuse.io import atomic_writer

    with atomic_writer(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRUTH_HEADER)
        for k, t in enumerate(truth.times):
            for j, b in enumerate(truth.bus_ids):
                w.writerow([repr(float(t)), b, repr(float(truth.p_kw[k, j])),
                            repr(float(truth.q_kvar[k, j])), repr(float(truth.v_mag[k, j])),
                            repr(float(truth.v_ang[k, j]))])


def read_truth(path) -> GroundTruth:
    import csv

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != TRUTH_HEADER:
            raise InvalidArgument(f"{path}: expected header {','.join(TRUTH_HEADER)}")
        rows = list(reader)
    times = sorted({float(r[0]) for r in rows})
    buses: list[str] = []
    for r in rows:
        if r[1] not in buses:
            buses.append(r[1])
        else:
            break
    ti = {t: k for k, t in enumerate(times)}
    bi = {b: j for j, b in enumerate(buses)}
    arrs = np.zeros((4, len(times), len(buses)))
    for r in rows:
        k, j = ti[float(r[0])], bi[r[1]]
        arrs[:, k, j] = [float(v) for v in r[2:6]]
    return GroundTruth(tuple(buses), np.array(times), *arrs)
