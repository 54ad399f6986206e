"""Command-line front end: ``gridfuse {generate,impute,dsse,sweep,plot}``.

Exit codes: 0 success, 1 user error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from gridfuse import __version__
from gridfuse.errors import GridfuseError, InvalidArgument, NoDataError, NumericalFailure
from gridfuse.io import atomic_writer

log = logging.getLogger("gridfuse")

COMMANDS = ("generate", "impute", "dsse", "sweep", "plot")
IMPUTED_HEADER = ["task_id", "timestamp_s", "mean", "std"]
SWEEP_KINDS = ("imputation", "fad")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage().rstrip()}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gridfuse", description="Sensor-data imputation and low-rank state estimation.")
    p.add_argument("--version", action="version", version=f"gridfuse {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp, seed=True):
        sp.add_argument("--config", help="JSON file of option values; flags override it")
        if seed:
            sp.add_argument("--seed", type=int, help="default: $GRIDFUSE_SEED, else 0")

    g = sub.add_parser("generate", help="simulate a feeder day; write measurement and truth CSVs")
    common(g)
    g.add_argument("--feeder", help="feeder JSON (default: bundled 37-bus feeder)")
    g.add_argument("--out", help="output directory")
    g.add_argument("--pf", type=float)
    g.add_argument("--noise", type=float, help="relative measurement noise")

    i = sub.add_parser("impute", help="fill a measurement CSV onto a regular grid")
    common(i)
    i.add_argument("--method", help="gp or linear")
    i.add_argument("--data", help="measurement CSV")
    i.add_argument("--grid", type=float, help="grid step in seconds")
    i.add_argument("--missing", type=float, help="fraction of samples to drop before imputing")
    i.add_argument("--prior", help="trained prior JSON (gp); trained on the input when omitted")
    i.add_argument("--save-prior", dest="save_prior", help="write the prior used to this path")
    i.add_argument("--feeder", help="feeder JSON used for bus-depth features")
    i.add_argument("--epochs", type=int)
    i.add_argument("--out", help="imputed CSV")

    d = sub.add_parser("dsse", help="estimate all bus states at one instant")
    common(d)
    d.add_argument("--data", help="measurement CSV")
    d.add_argument("--imputed", help="imputed CSV whose means replace the raw series")
    d.add_argument("--time", type=float, help="snapshot timestamp in seconds")
    d.add_argument("--fad", type=float, help="fraction of state-matrix entries kept")
    d.add_argument("--feeder")
    d.add_argument("--out", help="snapshot CSV")

    s = sub.add_parser("sweep", help="run the imputation or FAD experiment")
    common(s)
    s.add_argument("--kind", help="imputation or fad")
    s.add_argument("--trials", type=int)
    s.add_argument("--out", help="ResultTable CSV")

    pl = sub.add_parser("plot", help="SVG of an imputed task with its interval band")
    common(pl, seed=False)
    pl.add_argument("--imputed", help="imputed CSV")
    pl.add_argument("--data", help="measurement CSV with the observed samples (optional)")
    pl.add_argument("--task", help="task id to draw")
    pl.add_argument("--level", type=float)
    pl.add_argument("--out", help="SVG path")
    return p


DEFAULTS = {
    "generate": {"out": None, "feeder": None, "pf": 0.87, "noise": 0.005},
    "impute": {"method": "gp", "data": None, "grid": 60.0, "missing": 0.0, "prior": None,
               "save_prior": None, "feeder": None, "epochs": 100, "out": None},
    "dsse": {"data": None, "imputed": None, "time": None, "fad": 0.9, "feeder": None, "out": None},
    "sweep": {"kind": "imputation", "trials": None, "out": None, "experiment": None},
    "plot": {"imputed": None, "data": None, "task": None, "level": 0.95, "out": None},
}
REQUIRED = {
    "generate": ("out",),
    "impute": ("data", "out"),
    "dsse": ("data", "time", "out"),
    "sweep": ("out",),
    "plot": ("imputed", "task", "out"),
}


def resolve_options(command: str, ns: argparse.Namespace) -> dict:
    """Merge built-in defaults, the optional JSON config and explicit flags (in that order)."""
    opts = dict(DEFAULTS[command])
    if command != "plot":
        opts["seed"] = None
    if ns.config:
        try:
            doc = json.loads(Path(ns.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidArgument(f"cannot read config {ns.config}: {exc}") from None
        if not isinstance(doc, dict):
            raise InvalidArgument(f"config {ns.config} must hold a JSON object")
        unknown = sorted(set(doc) - set(opts))
        if unknown:
            raise InvalidArgument(f"unknown config keys for {command}: {', '.join(unknown)}; "
                                  f"allowed: {', '.join(sorted(opts))}")
        opts.update(doc)
    for key in opts:
        val = getattr(ns, key, None)
        if val is not None:
            opts[key] = val
    if "seed" in opts and opts["seed"] is None:
        env = os.environ.get("GRIDFUSE_SEED")
        try:
            opts["seed"] = int(env) if env not in (None, "") else 0
        except ValueError:
            raise InvalidArgument(f"GRIDFUSE_SEED must be an integer, got {env!r}") from None
    missing = [k for k in REQUIRED[command] if opts.get(k) in (None, "")]
    if missing:
        raise InvalidArgument(f"{command}: missing required option(s): "
                              + ", ".join("--" + k.replace("_", "-") for k in missing))
    return opts


# -- subcommands ---------------------------------------------------------------------


def _feeder(path):
    from gridfuse.feeder import load_feeder

    if path is None:
        return load_feeder()
    p = Path(path)
    if not p.exists() and p.name == "ieee37_sp.json":
        return load_feeder()  # name of the bundled file
    return load_feeder(p)


def cmd_generate(o: dict) -> None:
    from gridfuse.feeder import sample_measurements, synthesize, write_truth
    from gridfuse.timeseries import write_measurements

    feeder = _feeder(o["feeder"])
    _, truth = synthesize(feeder, o["seed"], o["pf"])
    tasks = sample_measurements(truth, noise_rel=o["noise"], seed=o["seed"] + 1,
                                load_buses=feeder.load_buses)
    out = Path(o["out"])
    out.mkdir(parents=True, exist_ok=True)
    write_measurements(out / "meas.csv", tasks)
    write_truth(out / "truth.csv", truth)
    log.info("wrote %d tasks to %s", len(tasks), out)


def cmd_impute(o: dict) -> None:
    from gridfuse.experiments import METHODS, derive_seed, thin_task
    from gridfuse.gp import InputEncoding, TrainConfig, impute, load_prior, save_prior, train_prior
    from gridfuse.timeseries import TimeGrid, apply_missingness, linear_interpolate, read_measurements

    method = o["method"]
    if method not in METHODS:
        raise InvalidArgument(f"unknown method {method!r}; valid methods: {', '.join(METHODS)}")
    if not o["grid"] > 0:
        raise InvalidArgument("--grid must be > 0")
    tasks = read_measurements(o["data"])
    if not tasks:
        raise NoDataError(f"{o['data']} holds no measurements")
    # per-task seeds do not depend on the fraction, so masks nest across --missing values
    observed = [apply_missingness(t, o["missing"], derive_seed(o["seed"], k))[0]
                for k, t in enumerate(tasks)]
    t0 = min(float(t.times[0]) for t in tasks)
    t1 = max(float(t.times[-1]) for t in tasks)
    grid = TimeGrid(t0, o["grid"], int(np.floor((t1 - t0) / o["grid"] + 1e-9)) + 1).times

    prior = None
    if method == "gp":
        if o["prior"]:
            prior = load_prior(o["prior"])
        else:
            feeder = _feeder(o["feeder"])
            cfg = TrainConfig(epochs=o["epochs"], seed=derive_seed(o["seed"], 1 << 20),
                              encoding=InputEncoding.TIME_PLUS_TASK_FEATURES)
            prior = train_prior([thin_task(t, 96) for t in observed if len(t) >= 2], cfg,
                                bus_depth=feeder.normalized_depth())
        if o["save_prior"]:
            save_prior(prior, o["save_prior"])

    with atomic_writer(o["out"]) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(IMPUTED_HEADER)
        for task in observed:
            if method == "linear":
                mean, std = linear_interpolate(task, grid), np.zeros(grid.size)
            else:
                pred = impute(prior, task, grid)
                mean, std = pred.mean, pred.std
            for t, m, s in zip(grid, mean, std):
                w.writerow([task.task_id, repr(float(t)), repr(float(m)), repr(float(s))])


def read_imputed(path) -> dict[str, tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """``{task_id: (times, mean, std)}`` from an imputed CSV."""
    acc: dict[str, list] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != IMPUTED_HEADER:
            raise InvalidArgument(f"{path}: expected header {','.join(IMPUTED_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise InvalidArgument(f"{path}:{lineno}: expected 4 fields")
            try:
                vals = [float(x) for x in row[1:]]
            except ValueError as exc:
                raise InvalidArgument(f"{path}:{lineno}: {exc}") from None
            acc.setdefault(row[0], []).append(vals)
    out = {}
    for k, rows in acc.items():
        a = np.array(rows)
        out[k] = (a[:, 0], a[:, 1], a[:, 2])
    return out


def cmd_dsse(o: dict) -> None:
    from gridfuse._core import interp_hold
    from gridfuse.dsse import StateMatrix, build_state_matrix, complete_matrix, subsample_entries, write_snapshot
    from gridfuse.experiments import snapshot_measurements
    from gridfuse.timeseries import Quantity, read_measurements

    if not 0.0 < o["fad"] <= 1.0:
        raise InvalidArgument("--fad must be in (0, 1]")
    feeder = _feeder(o["feeder"])
    tasks = read_measurements(o["data"])
    imputed = read_imputed(o["imputed"]) if o["imputed"] else {}
    t = float(o["time"])
    p = np.zeros(feeder.n_buses)
    q = np.zeros(feeder.n_buses)
    v = np.full(feeder.n_buses, feeder.substation_v_pu)
    target = {Quantity.ActivePower_kW: p, Quantity.ReactivePower_kVAr: q, Quantity.VoltageMag_pu: v}
    for task in tasks:
        try:
            j = feeder.index(task.bus_id)
        except InvalidArgument:
            log.warning("skipping task %s: bus %s not in feeder", task.task_id, task.bus_id)
            continue
        if task.task_id in imputed:
            times, mean, _ = imputed[task.task_id]
        else:
            times, mean = task.times, task.values
        target[task.quantity][j] = interp_hold(times, mean, np.array([t]))[0]
    full = build_state_matrix(snapshot_measurements(feeder, p, q, v), feeder.bus_ids)
    keep = subsample_entries(full.mask, o["fad"], o["seed"])
    x = StateMatrix(np.where(keep, full.values, np.nan), keep, full.bus_order)
    from gridfuse.dsse import CompletionConfig

    result = complete_matrix(x, CompletionConfig(seed=o["seed"]))
    write_snapshot(o["out"], x, result.matrix)


def cmd_sweep(o: dict) -> None:
    from gridfuse.experiments import ExperimentConfig, fad_sweep, imputation_experiment

    if o["kind"] not in SWEEP_KINDS:
        raise InvalidArgument(f"unknown sweep kind {o['kind']!r}; valid kinds: {', '.join(SWEEP_KINDS)}")
    doc = dict(o["experiment"] or {})
    doc["seed"] = o["seed"]
    if o["trials"] is not None:
        doc["trials"] = o["trials"]
    cfg = ExperimentConfig.from_dict(doc)
    table = imputation_experiment(cfg) if o["kind"] == "imputation" else fad_sweep(cfg)
    with atomic_writer(o["out"]) as fh:
        fh.write(table.to_csv())
    sys.stdout.write(table.to_text())


def cmd_plot(o: dict) -> None:
    from gridfuse.gp.predict import z_value
    from gridfuse.plot import emit_svg_plot
    from gridfuse.timeseries import read_measurements

    imputed = read_imputed(o["imputed"])
    if o["task"] not in imputed:
        raise InvalidArgument(f"task {o['task']!r} not in {o['imputed']}")
    t, mean, std = imputed[o["task"]]
    series = {"imputed mean": (t, mean)}
    if o["data"]:
        raw = {x.task_id: x for x in read_measurements(o["data"])}
        if o["task"] in raw:
            series["measured"] = (raw[o["task"]].times, raw[o["task"]].values)
    band = None
    if np.any(std > 0):
        z = z_value(o["level"])
        band = (t, mean - z * std, mean + z * std)
    svg = emit_svg_plot(series, band, title=o["task"])
    with atomic_writer(o["out"]) as fh:
        fh.write(svg)


HANDLERS = {"generate": cmd_generate, "impute": cmd_impute, "dsse": cmd_dsse,
            "sweep": cmd_sweep, "plot": cmd_plot}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(ns.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if ns.command is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        opts = resolve_options(ns.command, ns)
        HANDLERS[ns.command](opts)
    except NumericalFailure as exc:
        print(f"gridfuse: numerical failure: {exc}", file=sys.stderr)
        return 2
    except (GridfuseError, ValueError) as exc:
        print(f"gridfuse: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"gridfuse: error: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
