"""The shared multi-task GP prior: mean network + kernel, and its JSON form."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from gridfuse.errors import InvalidArgument
from gridfuse.gp.kernel import KernelParams
from gridfuse.gp.meannet import MeanNet
from gridfuse.timeseries import DAY_SECONDS, Quantity, TimeSeriesTask, normalize_time

FORMAT_VERSION = 1
HIDDEN_WIDTHS = (32, 32)


class InputEncoding(str, enum.Enum):
    TIME_ONLY = "time_only"
    TIME_PLUS_TASK_FEATURES = "time_plus_task_features"

    @property
    def input_dim(self) -> int:
        # time, one-hot quantity (3), normalized bus depth
        return 1 if self is InputEncoding.TIME_ONLY else 1 + len(Quantity) + 1


_QUANTITY_INDEX = {q: i for i, q in enumerate(Quantity)}


@dataclass(frozen=True)
class GpPrior:
    mean: MeanNet
    kernel: KernelParams
    input_encoding: InputEncoding = InputEncoding.TIME_ONLY
    horizon: float = DAY_SECONDS
    bus_depth: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "input_encoding", InputEncoding(self.input_encoding))
        if self.mean.layer_dims[0] != self.input_encoding.input_dim:
            raise InvalidArgument(
                f"mean net input dim {self.mean.layer_dims[0]} does not match "
                f"{self.input_encoding.value} encoding ({self.input_encoding.input_dim})"
            )
        if not self.horizon > 0:
            raise InvalidArgument("horizon must be > 0")

    @classmethod
    def initial(
        cls,
        seed: int,
        encoding: InputEncoding | str = InputEncoding.TIME_ONLY,
        kernel: KernelParams | None = None,
        hidden=HIDDEN_WIDTHS,
        horizon: float = DAY_SECONDS,
        bus_depth: dict | None = None,
    ) -> "GpPrior":
        encoding = InputEncoding(encoding)
        dims = [encoding.input_dim, *hidden, 1]
        return cls(MeanNet.init(dims, seed), kernel or KernelParams(), encoding,
                   horizon, dict(bus_depth or {}))

    # -- parameter vector: [mean-net params..., log l, log sf2, log sn2] --------

    @property
    def n_params(self) -> int:
        return self.mean.n_params + 3

    def flat(self) -> np.ndarray:
        return np.concatenate([self.mean.flat(), self.kernel.as_array()])

    def with_flat(self, vec) -> "GpPrior":
        vec = np.asarray(vec, dtype=float)
        k = self.mean.n_params
        return replace(self, mean=self.mean.with_flat(vec[:k]),
                       kernel=KernelParams.from_array(vec[k:]))

    # -- inputs ---------------------------------------------------------------

    def kernel_inputs(self, times) -> np.ndarray:
        return normalize_time(np.asarray(times, dtype=float), self.horizon)

    def mean_inputs(self, times, task: TimeSeriesTask | None = None) -> np.ndarray:
        t = self.kernel_inputs(times)
        if self.input_encoding is InputEncoding.TIME_ONLY:
            return t[:, None]
        feats = np.zeros((t.size, self.input_encoding.input_dim))
        feats[:, 0] = t
        if task is not None:
            feats[:, 1 + _QUANTITY_INDEX[task.quantity]] = 1.0
            feats[:, -1] = float(self.bus_depth.get(task.bus_id, 0.0))
        return feats

    def mean_at(self, times, task: TimeSeriesTask | None = None) -> np.ndarray:
        return self.mean.forward(self.mean_inputs(times, task))

    # -- persistence ------------------------------------------------------------

    def to_json(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "layer_dims": self.mean.layer_dims,
            "weights": [w.ravel().tolist() for w in self.mean.weights],
            "biases": [b.tolist() for b in self.mean.biases],
            "kernel": {
                "log_lengthscale": self.kernel.log_lengthscale,
                "log_signal_var": self.kernel.log_signal_var,
                "log_noise_var": self.kernel.log_noise_var,
            },
            "input_encoding": self.input_encoding.value,
            "horizon_s": self.horizon,
            "bus_depth": dict(sorted(self.bus_depth.items())),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "GpPrior":
        if doc.get("format_version") != FORMAT_VERSION:
            raise InvalidArgument(f"unsupported prior format version {doc.get('format_version')!r}")
        dims = doc["layer_dims"]
        ws = tuple(np.asarray(w, dtype=float).reshape(a, b)
                   for w, a, b in zip(doc["weights"], dims[:-1], dims[1:]))
        bs = tuple(np.asarray(b, dtype=float) for b in doc["biases"])
        k = doc["kernel"]
        return cls(MeanNet(ws, bs),
                   KernelParams(k["log_lengthscale"], k["log_signal_var"], k["log_noise_var"]),
                   InputEncoding(doc["input_encoding"]), float(doc["horizon_s"]),
                   dict(doc.get("bus_depth", {})))


def save_prior(prior: GpPrior, path: str | Path) -> None:
    from gridfuse.io import atomic_writer

    with atomic_writer(path) as fh:
        json.dump(prior.to_json(), fh, indent=1)
        fh.write("\n")


def load_prior(path: str | Path) -> GpPrior:
    with open(path, encoding="utf-8") as fh:
        return GpPrior.from_json(json.load(fh))
