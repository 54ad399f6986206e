"""Snapshot state estimation by nuclear-norm matrix completion.

Each bus is a row ``[Re v, Im v, |v|, Re s, Im s]``; unobserved entries are
filled by soft-impute (proximal gradient on the nuclear-norm regularized fit),
optionally followed by a rank-restricted refinement of the same objective.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.linalg import LinAlgError, svd
from scipy.optimize import least_squares

from gridfuse.errors import InvalidArgument, NoDataError, NumericalFailure

log = logging.getLogger(__name__)

COLUMNS = ("re_v", "im_v", "v_mag", "re_s", "im_s")
N_COLS = len(COLUMNS)


@dataclass(frozen=True)
class StateMatrix:
    values: np.ndarray  # NaN wherever mask is False
    mask: np.ndarray
    bus_order: tuple[str, ...]

    def __post_init__(self):
        if self.values.shape != (len(self.bus_order), N_COLS) or self.mask.shape != self.values.shape:
            raise InvalidArgument(
                f"state matrix must be {len(self.bus_order)}x{N_COLS}, got {self.values.shape}"
            )

    @property
    def density(self) -> float:
        return float(self.mask.mean())

    def observed(self) -> np.ndarray:
        """Zero-filled copy of the observed entries."""
        return np.where(self.mask, self.values, 0.0)


@dataclass(frozen=True)
class CompletionConfig:
    mu: float | None = None  # None -> 1e-3 * ||P_Omega(X)||_F of the scaled matrix
    max_iters: int = 500
    tol: float = 1e-6
    step: float = 1.0
    scale_columns: bool = True
    refine: bool = True
    rank: int | None = None  # None -> chosen by BIC over identifiable ranks
    restarts: int = 10
    refine_iters: int = 2000
    seed: int = 0

    def __post_init__(self):
        if self.mu is not None and not self.mu > 0:
            raise InvalidArgument(f"mu must be > 0, got {self.mu}")
        if self.max_iters < 1 or not self.tol > 0 or not 0 < self.step <= 1:
            raise InvalidArgument("need max_iters >= 1, tol > 0, 0 < step <= 1")


@dataclass
class CompletionResult:
    matrix: np.ndarray
    iterations: int
    converged: bool
    objective: list[float] = field(default_factory=list)
    soft_impute: np.ndarray | None = None
    rank: int | None = None


def _row_from_measurement(meas: Mapping) -> tuple[np.ndarray, np.ndarray]:
    vals = np.full(N_COLS, np.nan)
    for key, val in meas.items():
        if val is None:
            continue
        if key == "v":
            v = complex(val)
            vals[0], vals[1] = v.real, v.imag
            if "v_mag" not in meas:
                vals[2] = abs(v)
        elif key == "s":
            s = complex(val)
            vals[3], vals[4] = s.real, s.imag
        elif key in COLUMNS:
            vals[COLUMNS.index(key)] = float(val)
        else:
            raise InvalidArgument(f"unknown measurement key {key!r}; expected v, s or {COLUMNS}")
    mask = ~np.isnan(vals)
    return vals, mask


def build_state_matrix(snapshot: Mapping[str, Mapping], buses: Sequence[str]) -> StateMatrix:
    """Place per-bus measurements into the bus-by-quantity matrix.

    ``snapshot`` maps bus id to a dict of known quantities: any of ``COLUMNS``,
    or ``v``/``s`` as complex numbers.
    """
    order = tuple(buses)
    index = {b: i for i, b in enumerate(order)}
    values = np.full((len(order), N_COLS), np.nan)
    mask = np.zeros((len(order), N_COLS), dtype=bool)
    for bus, meas in snapshot.items():
        if bus not in index:
            raise InvalidArgument(f"measurement references unknown bus {bus!r}")
        row, m = _row_from_measurement(meas)
        i = index[bus]
        values[i, m] = row[m]
        mask[i] |= m
    return StateMatrix(values, mask, order)


def svd_soft_threshold(m, tau: float) -> np.ndarray:
    """Singular value soft-thresholding: the prox operator of ``tau * ||.||_*``."""
    if tau < 0:
        raise InvalidArgument(f"tau must be >= 0, got {tau}")
    m = np.asarray(m, dtype=float)
    try:
        u, s, vt = svd(m, full_matrices=False, lapack_driver="gesdd")
    except (LinAlgError, ValueError):
        try:
            u, s, vt = svd(m, full_matrices=False, lapack_driver="gesvd")
        except (LinAlgError, ValueError) as exc:
            raise NumericalFailure(f"SVD failed: {exc}") from None
    s = np.maximum(s - tau, 0.0)
    keep = s > 0
    return (u[:, keep] * s[keep]) @ vt[keep]


def nuclear_norm(m) -> float:
    return float(np.sum(np.linalg.svd(np.asarray(m, dtype=float), compute_uv=False)))


def soft_impute(obs: np.ndarray, mask: np.ndarray, mu: float, config: CompletionConfig):
    """Proximal gradient on ``0.5*||P(Z - X)||_F^2 + mu*||Z||_*`` from the zero-filled ``obs``.

    Returns ``(Z, iterations, converged, objective_history)``.
    """

    def objective(z):
        r = np.where(mask, z - obs, 0.0)
        return 0.5 * float(np.sum(r * r)) + mu * nuclear_norm(z)

    z = obs.copy()
    history = [objective(z)]
    converged = False
    it = 0
    for it in range(1, config.max_iters + 1):
        grad = np.where(mask, z - obs, 0.0)
        z_new = svd_soft_threshold(z - config.step * grad, config.step * mu)
        history.append(objective(z_new))
        change = np.linalg.norm(z_new - z) / max(1.0, np.linalg.norm(z))
        z = z_new
        if change < config.tol:
            converged = True
            break
    return z, it, converged, history


def _factored_fit(obs, mask, u, v, mu, max_nfev):
    """Levenberg-Marquardt on ``0.5*||P(UV' - X)||^2 + mu/2 (||U||^2 + ||V||^2)``.

    This is the nuclear-norm objective restricted to rank ``u.shape[1]``.
    """
    n1, n2 = obs.shape
    r = u.shape[1]
    ii, jj = np.nonzero(mask)
    y = obs[ii, jj]
    m = y.size
    sm = math.sqrt(mu)
    nu = n1 * r
    rows = np.arange(m)

    def unpack(p):
        return p[:nu].reshape(n1, r), p[nu:].reshape(n2, r)

    def residuals(p):
        u, v = unpack(p)
        return np.concatenate([np.einsum("ik,ik->i", u[ii], v[jj]) - y, sm * p])

    def jacobian(p):
        u, v = unpack(p)
        jac = np.zeros((m + p.size, p.size))
        for k in range(r):
            jac[rows, ii * r + k] = v[jj, k]
            jac[rows, nu + jj * r + k] = u[ii, k]
        jac[m:, :] = sm * np.eye(p.size)
        return jac

    p0 = np.concatenate([u.ravel(), v.ravel()])
    sol = least_squares(residuals, p0, jac=jacobian, method="lm",
                        xtol=1e-12, ftol=1e-12, gtol=1e-12, max_nfev=max_nfev)
    u, v = unpack(sol.x)
    return u @ v.T, 0.5 * float(sol.fun @ sol.fun)


def _refine_rank(obs, mask, z0, mu, rank, config):
    u0, s0, vt0 = np.linalg.svd(z0, full_matrices=False)
    root = np.sqrt(np.maximum(s0[:rank], 1e-12))
    starts = [(u0[:, :rank] * root, vt0[:rank].T * root)]
    rng = np.random.default_rng(config.seed)
    scale = math.sqrt(max(float(np.abs(obs[mask]).mean()), 1e-12))
    for _ in range(config.restarts):
        starts.append((rng.normal(size=(obs.shape[0], rank)) * scale,
                       rng.normal(size=(obs.shape[1], rank)) * scale))
    best_z, best_f = None, math.inf
    for u, v in starts:
        z, f = _factored_fit(obs, mask, u, v, mu, config.refine_iters)
        if best_z is None or f < best_f - 1e-12 * max(1.0, abs(best_f)):
            best_z, best_f = z, f
    return best_z


def max_identifiable_rank(shape, n_observed: int) -> int:
    """Largest r whose rank-r model has no more degrees of freedom than observations."""
    n1, n2 = shape
    r = 0
    while r < min(n1, n2) and (r + 1) * (n1 + n2 - r - 1) <= n_observed:
        r += 1
    return r


def _select_rank(obs, mask, z0, mu, config):
    n_obs = int(mask.sum())
    r_max = max_identifiable_rank(obs.shape, n_obs)
    if r_max < 1:
        return None, None
    best = (math.inf, None, None)
    for r in range(1, r_max + 1):
        z = _refine_rank(obs, mask, z0, mu, r, config)
        rss = float(np.sum(np.where(mask, z - obs, 0.0) ** 2))
        dof = r * (sum(obs.shape) - r)
        bic = n_obs * math.log(max(rss / n_obs, 1e-300)) + dof * math.log(n_obs)
        if bic < best[0]:
            best = (bic, r, z)
    return best[1], best[2]


def complete(values, mask, config: CompletionConfig | None = None) -> CompletionResult:
    """Fill the unobserved entries of any real matrix (``values`` is read only where ``mask``).

    Stage one is soft-impute on ``0.5*||P(Z - X)||_F^2 + mu*||Z||_*``; its
    objective history (in the column-scaled space the solver works in) is
    returned. With ``refine`` set, stage two minimizes the same objective over
    rank-``r`` factorizations started from the stage-one solution and seeded
    restarts, with ``r`` fixed by ``config.rank`` or picked by BIC.
    """
    config = config or CompletionConfig()
    mask = np.asarray(mask, dtype=bool)
    values = np.asarray(values, dtype=float)
    if values.shape != mask.shape or values.ndim != 2:
        raise InvalidArgument(f"values {values.shape} and mask {mask.shape} must be equal 2-D shapes")
    if not mask.any():
        raise NoDataError("matrix has no observed entries")
    obs = np.where(mask, values, 0.0)
    if not np.all(np.isfinite(obs)):
        raise InvalidArgument("observed entries must be finite")
    if config.scale_columns:
        scale = np.maximum(np.abs(obs).max(axis=0), 1e-6)
    else:
        scale = np.ones(values.shape[1])
    obs = obs / scale
    mu = config.mu if config.mu is not None else 1e-3 * float(np.linalg.norm(obs))
    if not mu > 0:
        mu = 1e-12
    z, iters, converged, history = soft_impute(obs, mask, mu, config)
    if not converged:
        log.debug("soft-impute stopped at max_iters=%d without converging", config.max_iters)
    stage_one = z * scale
    rank = None
    if config.refine:
        if config.rank is not None:
            rank, z = config.rank, _refine_rank(obs, mask, z, mu, config.rank, config)
        else:
            rank, z_ref = _select_rank(obs, mask, z, mu, config)
            if z_ref is not None:
                z = z_ref
    return CompletionResult(z * scale, iters, converged, history, stage_one, rank)


def complete_matrix(x: StateMatrix, config: CompletionConfig | None = None) -> CompletionResult:
    """Complete a bus-by-quantity state matrix; see :func:`complete`."""
    return complete(x.observed(), x.mask, config)


@dataclass(frozen=True)
class BusState:
    bus_id: str
    v: complex
    v_mag: float
    s: complex
    consistency_residual: float


def extract_states(z, bus_order: Sequence[str]) -> list[BusState]:
    """Read completed rows back into named quantities.

    ``consistency_residual`` is ``| |v| - abs(Re v + j Im v) |``, reported only.
    """
    z = np.asarray(z, dtype=float)
    if z.shape != (len(bus_order), N_COLS):
        raise InvalidArgument(f"expected shape ({len(bus_order)}, {N_COLS}), got {z.shape}")
    out = []
    for b, row in zip(bus_order, z):
        v = complex(row[0], row[1])
        out.append(BusState(b, v, float(row[2]), complex(row[3], row[4]),
                            abs(float(row[2]) - abs(v))))
    return out


def subsample_entries(mask: np.ndarray, fad: float, seed: int) -> np.ndarray:
    """Keep ``round(fad * total)`` entries, drawn uniformly from the available ones."""
    if not 0.0 < fad <= 1.0:
        raise InvalidArgument(f"FAD must be in (0, 1], got {fad}")
    total = mask.size
    avail = np.flatnonzero(mask.ravel())
    k = min(int(math.floor(fad * total + 0.5)), avail.size)
    rng = np.random.default_rng(seed)
    chosen = rng.permutation(avail)[:k]
    out = np.zeros(total, dtype=bool)
    out[chosen] = True
    return out.reshape(mask.shape)


def dsse_snapshot(
    measurements: Mapping[str, Mapping],
    buses: Sequence[str],
    fad: float,
    seed: int,
    config: CompletionConfig | None = None,
) -> list[BusState]:
    """Estimate every bus's state from one instant's measurements at a given FAD.

    FAD counts matrix entries: ``round(fad * 5 * n_buses)`` entries are kept,
    drawn uniformly from those present in ``measurements``.
    """
    full = build_state_matrix(measurements, buses)
    keep = subsample_entries(full.mask, fad, seed)
    x = StateMatrix(np.where(keep, full.values, np.nan), keep, full.bus_order)
    result = complete_matrix(x, config)
    return extract_states(result.matrix, full.bus_order)


# -- snapshot CSV ----------------------------------------------------------------

SNAPSHOT_HEADER = ["bus_id", *COLUMNS, "mask_bits"]


def write_snapshot(path: str | Path, x: StateMatrix, values: np.ndarray | None = None) -> None:
    """Write a state matrix; ``values`` (e.g. a completed matrix) overrides the stored ones."""
    from gridfuse.io import atomic_writer

    vals = x.values if values is None else np.asarray(values, dtype=float)
    with atomic_writer(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SNAPSHOT_HEADER)
        for b, row, m in zip(x.bus_order, vals, x.mask):
            cells = ["" if math.isnan(v) else repr(float(v)) for v in row]
            w.writerow([b, *cells, "".join("1" if f else "0" for f in m)])


def read_snapshot(path: str | Path) -> StateMatrix:
    """Read a snapshot CSV; entries whose mask bit is 0 come back as NaN."""
    return read_snapshot_values(path)[0]


def read_snapshot_values(path: str | Path) -> tuple[StateMatrix, np.ndarray]:
    """Like :func:`read_snapshot` but also returns every stored value (completed entries included)."""
    buses, rows, masks = [], [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != SNAPSHOT_HEADER:
            raise InvalidArgument(f"{path}: expected header {','.join(SNAPSHOT_HEADER)}")
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(SNAPSHOT_HEADER):
                raise InvalidArgument(f"{path}:{lineno}: expected {len(SNAPSHOT_HEADER)} fields")
            bits = rec[-1]
            if len(bits) != N_COLS or set(bits) - {"0", "1"}:
                raise InvalidArgument(f"{path}:{lineno}: mask_bits must be 5 chars of 0/1")
            m = np.array([c == "1" for c in bits])
            try:
                v = np.array([float(c) if c.strip() else np.nan for c in rec[1:-1]])
            except ValueError as exc:
                raise InvalidArgument(f"{path}:{lineno}: {exc}") from None
            if np.any(np.isnan(v[m])):
                raise InvalidArgument(f"{path}:{lineno}: masked-in entry has no value")
            buses.append(rec[0])
            rows.append(v)
            masks.append(m)
    vals = np.array(rows).reshape(-1, N_COLS)
    mask = np.array(masks).reshape(-1, N_COLS)
    return StateMatrix(np.where(mask, vals, np.nan), mask, tuple(buses)), vals
