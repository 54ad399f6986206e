"""Seeded experiments: imputation error vs. missing fraction, state error vs. FAD."""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Iterable, Sequence

import numpy as np

from gridfuse._core import lindistflow_sweep
from gridfuse.dsse import CompletionConfig, dsse_snapshot
from gridfuse.errors import InvalidArgument
from gridfuse.feeder import FeederModel, GroundTruth, load_feeder, sample_measurements, synthesize
from gridfuse.gp import GpPrior, InputEncoding, TrainConfig, impute, train_prior
from gridfuse.metrics import RMSE_PERCENT_DEFINITION, ci_coverage, mean_absolute_error, rmse_percent
from gridfuse.timeseries import (
    Quantity,
    TimeGrid,
    TimeSeriesTask,
    apply_missingness,
    linear_interpolate,
)

log = logging.getLogger(__name__)

METHODS = ("gp", "linear")
QUANTITY_LABEL = {
    Quantity.ActivePower_kW: "active_power_kW",
    Quantity.ReactivePower_kVAr: "reactive_power_kVAr",
    Quantity.VoltageMag_pu: "voltage_pu",
}

# purpose tags mixed into per-trial seed sequences
_TRAIN_DAY, _TEST_DAY, _TRAIN_NOISE, _TEST_NOISE, _MASK, _FAD, _PRIOR = range(7)


def derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    missing_fractions: tuple[float, ...] = (0.6, 0.4, 0.2, 0.1)
    fads: tuple[float, ...] = (0.5, 0.6, 0.7, 0.8, 0.9)
    grid_step: float = 60.0
    methods: tuple[str, ...] = METHODS
    trials: int = 10
    # data generation
    feeder_path: str | None = None
    pf: float = 0.87
    ami_step: float = 900.0
    scada_step: float = 60.0
    noise_rel: float = 0.005
    # prior training
    epochs: int = 100
    learning_rate: float = 0.01
    encoding: str = InputEncoding.TIME_PLUS_TASK_FEATURES.value
    train_max_points: int = 96
    level: float = 0.95
    # FAD sweep
    fad_missing: float = 0.6
    snapshot_step: float = 900.0
    completion_restarts: int = 0
    completion_max_iters: int = 500
    completion_mu: float | None = None  # None: 1e-3 * ||observed entries|| (column-scaled)

    def __post_init__(self):
        for name in ("missing_fractions", "fads", "methods"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if any(not 0.0 <= f < 1.0 for f in self.missing_fractions):
            raise InvalidArgument(f"missing fractions must be in [0, 1): {self.missing_fractions}")
        if any(not 0.0 < f <= 1.0 for f in self.fads):
            raise InvalidArgument(f"FADs must be in (0, 1]: {self.fads}")
        if self.trials < 1:
            raise InvalidArgument("trials must be >= 1")
        bad = set(self.methods) - set(METHODS)
        if bad or not self.methods:
            raise InvalidArgument(f"unknown method(s) {sorted(bad)}; valid methods: {', '.join(METHODS)}")
        if not self.grid_step > 0 or 86400 % self.grid_step:
            raise InvalidArgument(f"grid_step must divide 86400, got {self.grid_step}")
        if not 0.0 <= self.fad_missing < 1.0:
            raise InvalidArgument("fad_missing must be in [0, 1)")
        InputEncoding(self.encoding)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise InvalidArgument(f"unknown config key(s): {sorted(unknown)}")
        return cls(**doc)

    def to_dict(self) -> dict:
        return asdict(self)


# -- result table ----------------------------------------------------------------


@dataclass(frozen=True)
class Cell:
    method: str
    quantity: str
    sweep_name: str
    sweep_value: float
    metric: str
    value: float
    trial_std: float
    per_trial: tuple[float, ...] = field(default=(), compare=False)

    def __post_init__(self):
        for name in ("value", "trial_std"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise InvalidArgument(f"{self.method}/{self.quantity}/{self.metric}: {name}={v} "
                                      "must be finite and >= 0")


CSV_HEADER = ["method", "quantity", "sweep_name", "sweep_value", "metric", "value", "trial_std"]


@dataclass
class ResultTable:
    cells: list[Cell] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def get(self, method: str, quantity: str, sweep_value: float, metric: str) -> Cell:
        for c in self.cells:
            if (c.method, c.quantity, c.metric) == (method, quantity, metric) and math.isclose(
                c.sweep_value, sweep_value
            ):
                return c
        raise KeyError((method, quantity, sweep_value, metric))

    def value(self, method, quantity, sweep_value, metric) -> float:
        return self.get(method, quantity, sweep_value, metric).value

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for c in self.cells:
            w.writerow([c.method, c.quantity, c.sweep_name, repr(float(c.sweep_value)), c.metric,
                        repr(float(c.value)), repr(float(c.trial_std))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ResultTable":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or rows[0] != CSV_HEADER:
            raise InvalidArgument(f"expected header {','.join(CSV_HEADER)}")
        cells = [Cell(r[0], r[1], r[2], float(r[3]), r[4], float(r[5]), float(r[6])) for r in rows[1:] if r]
        return cls(cells)

    def to_text(self) -> str:
        """Aligned table: one row per (quantity, method, metric), one column per sweep value."""
        if not self.cells:
            return "(empty table)\n"
        sweep_name = self.cells[0].sweep_name
        sweeps = sorted({c.sweep_value for c in self.cells}, reverse=sweep_name == "missing_fraction")
        keys = []
        for c in self.cells:
            k = (c.quantity, c.method, c.metric)
            if k not in keys:
                keys.append(k)
        head = ["quantity", "method", "metric"] + [f"{sweep_name}={v:g}" for v in sweeps]
        body = []
        for q, m, met in keys:
            row = [q, m, met]
            for v in sweeps:
                try:
                    c = self.get(m, q, v, met)
                    row.append(f"{c.value:.4g} ±{c.trial_std:.2g}")
                except KeyError:
                    row.append("-")
            body.append(row)
        widths = [max(len(r[i]) for r in [head] + body) for i in range(len(head))]
        lines = ["  ".join(s.ljust(wd) for s, wd in zip(r, widths)).rstrip() for r in [head] + body]
        notes = [f"# {k}: {v}" for k, v in self.metadata.items()]
        return "\n".join(lines + notes) + "\n"


def _summarize(values: Sequence[float]) -> tuple[float, float]:
    a = np.asarray(values, dtype=float)
    return float(a.mean()), float(a.std(ddof=1)) if a.size > 1 else 0.0


# -- shared trial setup --------------------------------------------------------------


@dataclass
class Trial:
    feeder: FeederModel
    test_truth: GroundTruth
    test_tasks: list[TimeSeriesTask]
    train_tasks: list[TimeSeriesTask]
    prior: GpPrior | None


def thin_task(task: TimeSeriesTask, max_points: int) -> TimeSeriesTask:
    """Evenly spaced subset of at most ``max_points`` samples (training cost control)."""
    n = len(task)
    if n <= max_points:
        return task
    stride = int(math.ceil(n / max_points))
    return task.with_samples(task.times[::stride], task.values[::stride])


def prepare_trial(config: ExperimentConfig, trial: int, need_prior: bool = True) -> Trial:
    feeder = load_feeder(config.feeder_path)
    s = config.seed
    _, train_truth = synthesize(feeder, derive_seed(s, trial, _TRAIN_DAY), config.pf)
    _, test_truth = synthesize(feeder, derive_seed(s, trial, _TEST_DAY), config.pf)
    sample = dict(ami_step=config.ami_step, scada_step=config.scada_step, noise_rel=config.noise_rel,
                  load_buses=feeder.load_buses)
    train_tasks = sample_measurements(train_truth, seed=derive_seed(s, trial, _TRAIN_NOISE), **sample)
    test_tasks = sample_measurements(test_truth, seed=derive_seed(s, trial, _TEST_NOISE), **sample)
    prior = None
    if need_prior:
        train_cfg = TrainConfig(epochs=config.epochs, learning_rate=config.learning_rate,
                                seed=derive_seed(s, trial, _PRIOR),
                                encoding=InputEncoding(config.encoding))
        thinned = [thin_task(t, config.train_max_points) for t in train_tasks]
        prior = train_prior(thinned, train_cfg, bus_depth=feeder.normalized_depth())
    return Trial(feeder, test_truth, test_tasks, train_tasks, prior)


def mask_tasks(tasks: Iterable[TimeSeriesTask], fraction: float, seed: int, trial: int):
    """Mask every task; each task's seed is independent of ``fraction`` so masks nest."""
    return [apply_missingness(t, fraction, derive_seed(seed, trial, _MASK, k))[0]
            for k, t in enumerate(tasks)]


def impute_tasks(method: str, prior: GpPrior | None, observed: Sequence[TimeSeriesTask], query,
                 level: float = 0.95):
    """Return ``{task_id: (mean, prediction_or_None)}`` on ``query`` times."""
    out = {}
    for task in observed:
        if method == "linear":
            out[task.task_id] = (linear_interpolate(task, query), None)
        elif method == "gp":
            pred = impute(prior, task, query, level=level)
            out[task.task_id] = (pred.mean, pred)
        else:
            raise InvalidArgument(f"unknown method {method!r}; valid methods: {', '.join(METHODS)}")
    return out


def _truth_on(truth: GroundTruth, task: TimeSeriesTask, query: np.ndarray) -> np.ndarray:
    series = truth.series(task.quantity, task.bus_id)
    idx = np.round(query / 60.0).astype(int)
    return series[idx]


# -- imputation sweep -------------------------------------------------------------------


def imputation_experiment(config: ExperimentConfig, quantities=tuple(Quantity)) -> ResultTable:
    """RMSE% of each method per quantity and missing fraction, pooled over tasks.

    Also reports GP credible-interval coverage at ``config.level``.
    """
    grid = TimeGrid.day(config.grid_step).times
    acc: dict[tuple, list[float]] = {}
    for trial in range(config.trials):
        tr = prepare_trial(config, trial, need_prior="gp" in config.methods)
        truth_cache = {t.task_id: _truth_on(tr.test_truth, t, grid) for t in tr.test_tasks}
        for frac in config.missing_fractions:
            observed = mask_tasks(tr.test_tasks, frac, config.seed, trial)
            for method in config.methods:
                est = impute_tasks(method, tr.prior, observed, grid, config.level)
                for q in quantities:
                    group = [t for t in observed if t.quantity is q]
                    if not group:
                        continue
                    truth = np.concatenate([truth_cache[t.task_id] for t in group])
                    guess = np.concatenate([est[t.task_id][0] for t in group])
                    acc.setdefault((method, QUANTITY_LABEL[q], frac, "rmse_percent"), []).append(
                        rmse_percent(truth, guess))
                    if method == "gp":
                        # observed instants pass through with zero width; score imputed ones only,
                        # pooled over the quantity's tasks
                        hits = total = 0
                        for t in group:
                            gap = ~np.isin(grid, t.times)
                            if gap.any():
                                n = int(gap.sum())
                                hits += ci_coverage(truth_cache[t.task_id], est[t.task_id][1],
                                                    config.level, where=gap) * n
                                total += n
                        if total:
                            acc.setdefault((method, QUANTITY_LABEL[q], frac, "ci_coverage"),
                                           []).append(hits / total)
            log.info("trial %d fraction %.2f done", trial, frac)
    cells = []
    for (method, q, frac, metric), vals in acc.items():
        mean, std = _summarize(vals)
        cells.append(Cell(method, q, "missing_fraction", frac, metric, mean, std, tuple(vals)))
    return ResultTable(cells, {"rmse_percent": RMSE_PERCENT_DEFINITION,
                               "pooling": "all tasks of a quantity pooled per trial",
                               "trials": config.trials, "seed": config.seed})


# -- FAD sweep -------------------------------------------------------------------------


def snapshot_measurements(feeder: FeederModel, p_kw: np.ndarray, q_kvar: np.ndarray,
                          v_mag: np.ndarray) -> dict:
    """Per-bus measurement dict for one instant; phasor parts come from |v| and a LinDistFlow angle."""
    _, th = lindistflow_sweep(feeder.parent, feeder.r, feeder.x, p_kw / feeder.s_base_kva,
                              q_kvar / feeder.s_base_kva, feeder.substation_v_pu ** 2)
    th = th[0]
    meas = {}
    for i, b in enumerate(feeder.bus_ids):
        meas[b] = {"re_v": v_mag[i] * math.cos(th[i]), "im_v": v_mag[i] * math.sin(th[i]),
                   "v_mag": v_mag[i], "re_s": p_kw[i], "im_s": q_kvar[i]}
    return meas


def fad_sweep(config: ExperimentConfig) -> ResultTable:
    """Mean absolute state error per method, quantity and FAD.

    Each method's imputed series (at ``fad_missing`` missingness) feed the
    completion at every snapshot; both methods share the FAD subsampling seeds.
    """
    snaps = TimeGrid.day(config.snapshot_step).times
    comp = CompletionConfig(mu=config.completion_mu, restarts=config.completion_restarts,
                            max_iters=config.completion_max_iters)
    acc: dict[tuple, list[float]] = {}
    for trial in range(config.trials):
        tr = prepare_trial(config, trial, need_prior="gp" in config.methods)
        feeder = tr.feeder
        observed = mask_tasks(tr.test_tasks, config.fad_missing, config.seed, trial)
        k_idx = np.round(snaps / 60.0).astype(int)
        t_p = tr.test_truth.p_kw[k_idx]
        t_q = tr.test_truth.q_kvar[k_idx]
        t_v = tr.test_truth.v_mag[k_idx]
        for method in config.methods:
            est = impute_tasks(method, tr.prior, observed, snaps, config.level)
            p = np.zeros((snaps.size, feeder.n_buses))
            q = np.zeros_like(p)
            v = np.full_like(p, feeder.substation_v_pu)
            for task in observed:
                j = feeder.index(task.bus_id)
                target = {Quantity.ActivePower_kW: p, Quantity.ReactivePower_kVAr: q,
                          Quantity.VoltageMag_pu: v}[task.quantity]
                target[:, j] = est[task.task_id][0]
            for fad in config.fads:
                e_p, e_q, e_v = [], [], []
                for k in range(snaps.size):
                    meas = snapshot_measurements(feeder, p[k], q[k], v[k])
                    cfg = replace(comp, seed=derive_seed(config.seed, trial, _FAD, k))
                    states = dsse_snapshot(meas, feeder.bus_ids, fad,
                                           derive_seed(config.seed, trial, _FAD, k, int(fad * 1000)), cfg)
                    e_p.append(mean_absolute_error(t_p[k], [s.s.real for s in states]))
                    e_q.append(mean_absolute_error(t_q[k], [s.s.imag for s in states]))
                    e_v.append(mean_absolute_error(t_v[k], [s.v_mag for s in states]))
                for q_label, errs in (("active_power_kW", e_p), ("reactive_power_kVAr", e_q),
                                      ("voltage_pu", e_v)):
                    acc.setdefault((method, q_label, fad), []).append(float(np.mean(errs)))
            log.info("trial %d method %s done", trial, method)
    cells = []
    for (method, q, fad), vals in acc.items():
        mean, std = _summarize(vals)
        cells.append(Cell(method, q, "fad", fad, "mae", mean, std, tuple(vals)))
    return ResultTable(cells, {"mae": "mean |estimate - truth| over buses and snapshots, native units",
                               "missing_fraction": config.fad_missing,
                               "trials": config.trials, "seed": config.seed})
