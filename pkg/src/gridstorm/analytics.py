"""Comparing simulated outage ensembles with observations, and fitting fragility curves.

Observed-outage CSV: ``timestamp_iso8601,region,outage_pct`` with one series
per region; the region name ``total`` denotes the system-wide series.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import minimize
from scipy.special import ndtr

from .engine import OutageEnsemble, SimulationConfig, simulate
from .errors import (
    DegenerateData,
    InputError,
    InsufficientPoints,
    MalformedFile,
    MalformedRow,
    TimestampMismatch,
)
from .network import MS_TO_MPH, FragilityParams, Network, RegionFragilityTable, design_wind_matrix
from .track import TcTrack, format_time, parse_time, to_epoch
from .windfield import generate_wind_fields

TOTAL = "total"
OBSERVED_HEADER = ["timestamp_iso8601", "region", "outage_pct"]


@dataclass(frozen=True)
class ObservedOutageSeries:
    region: str
    timestamps: np.ndarray
    outage_pct: np.ndarray

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype="datetime64[s]")
        vals = np.asarray(self.outage_pct, dtype=np.float64)
        if ts.shape != vals.shape or ts.ndim != 1 or ts.size == 0:
            raise InputError("observed series needs matching, non-empty timestamps and values")
        if np.any(np.diff(to_epoch(ts)) <= 0):
            raise InputError(f"observed series {self.region!r}: timestamps not strictly increasing")
        if np.any(~np.isfinite(vals)) or np.any(vals < 0) or np.any(vals > 100):
            raise InputError(f"observed series {self.region!r}: values must lie in [0, 100]")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "outage_pct", vals)

    def at(self, timestamps) -> np.ndarray:
        """Observed values at ``timestamps`` by step-and-hold.

        Raises :class:`TimestampMismatch` if a timestamp falls outside the
        observed span or the requested grid is finer than the observations.
        """
        obs = to_epoch(self.timestamps)
        want = to_epoch(timestamps)
        if want.size == 0 or want[0] < obs[0] or want[-1] > obs[-1]:
            raise TimestampMismatch(
                f"requested times outside observed span {format_time(self.timestamps[0])}"
                f" .. {format_time(self.timestamps[-1])}")
        idx = np.searchsorted(obs, want, side="right") - 1
        if np.any(np.diff(idx) <= 0):
            raise TimestampMismatch("simulation grid is finer than the observed series")
        return self.outage_pct[idx]


def parse_observed(path) -> dict:
    """Read observed outages; returns region -> :class:`ObservedOutageSeries`."""
    path = Path(path)
    try:
        handle = path.open(newline="")
    except OSError as exc:
        raise MalformedFile(f"cannot read observed file {path}: {exc}") from exc
    rows: dict = {}
    with handle:
        reader = csv.reader(handle)
        if [h.strip() for h in next(reader, [])] != OBSERVED_HEADER:
            raise MalformedRow(1, "expected header " + ",".join(OBSERVED_HEADER))
        for row in reader:
            if not row:
                continue
            if len(row) != 3:
                raise MalformedRow(reader.line_num, "expected 3 fields")
            try:
                rows.setdefault(row[1].strip(), []).append((parse_time(row[0]), float(row[2])))
            except ValueError as exc:
                raise MalformedRow(reader.line_num, str(exc)) from exc
    out = {}
    for region, items in rows.items():
        try:
            out[region] = ObservedOutageSeries(region, [t for t, _ in items], [v for _, v in items])
        except InputError as exc:
            raise MalformedFile(str(exc)) from exc
    return out


def write_observed(series, path) -> None:
    with Path(path).open("w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(OBSERVED_HEADER)
        for s in series.values():
            for t, v in zip(s.timestamps, s.outage_pct.tolist()):
                writer.writerow([format_time(t), s.region, repr(v)])


def _runs(ensemble, region=None):
    if isinstance(ensemble, OutageEnsemble):
        if region in (None, TOTAL):
            return ensemble.p_fail, ensemble.timestamps
        if region not in ensemble.region_p_fail:
            raise InputError(f"ensemble has no regional series for {region!r}")
        return ensemble.region_p_fail[region], ensemble.timestamps
    p, ts = ensemble
    return np.atleast_2d(np.asarray(p, dtype=np.float64)), np.asarray(ts, dtype="datetime64[s]")


def avg_rmse(observed: ObservedOutageSeries, ensemble, region=None) -> float:
    """Mean over runs of each run's RMSE against the observed series, in percentage points.

    ``ensemble`` is an :class:`OutageEnsemble` or a ``(p_fail, timestamps)``
    pair; ``region`` selects a regional series of the ensemble.
    """
    p, ts = _runs(ensemble, region)
    obs = observed.at(ts)
    return float(np.mean(np.sqrt(np.mean((p - obs[None, :]) ** 2, axis=1))))


@dataclass
class QuantileBands:
    timestamps: np.ndarray
    mean: np.ndarray
    levels: dict

    @property
    def lower(self):
        return self.levels[min(self.levels)]

    @property
    def upper(self):
        return self.levels[max(self.levels)]


def nearest_rank(sorted_values: np.ndarray, level: float) -> np.ndarray:
    """Order statistic number ``floor(level * n) + 1`` (1-based, capped at ``n``) along axis 0."""
    n = sorted_values.shape[0]
    k = min(int(math.floor(level * n)), n - 1)
    return sorted_values[k]


def quantile_bands(ensemble, levels=(0.01, 0.99), region=None) -> QuantileBands:
    p, ts = _runs(ensemble, region)
    if p.shape[0] < 100 and any(lv < 0.01 + 1e-12 or lv > 0.99 - 1e-12 for lv in levels):
        warnings.warn(f"only {p.shape[0]} runs; 1%/99% bands are poorly resolved", stacklevel=2)
    s = np.sort(p, axis=0)
    return QuantileBands(ts, p.mean(axis=0), {lv: nearest_rank(s, lv) for lv in levels})


@dataclass
class ComparisonReport:
    method: str
    avg_rmse: float | None
    quantile_bands: QuantileBands
    per_region: dict = field(default_factory=dict)
    resolution_table: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def band_dict(b):
            return {"timestamps": [format_time(t) for t in b.timestamps],
                    "mean": b.mean.tolist(),
                    **{f"q{round(lv * 100):02d}": v.tolist() for lv, v in b.levels.items()}}
        return {
            "method": self.method,
            "avg_rmse": self.avg_rmse,
            "quantile_bands": band_dict(self.quantile_bands),
            "per_region": {r: {"avg_rmse": v["avg_rmse"], "quantile_bands": band_dict(v["bands"])}
                           for r, v in self.per_region.items()},
            "resolution_table": {str(k): v for k, v in self.resolution_table.items()},
        }

    def write(self, out_dir, stem=None) -> dict:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        stem = stem or self.method
        paths = {"json": out_dir / f"{stem}_report.json", "bands": out_dir / f"{stem}_bands.csv"}
        paths["json"].write_text(json.dumps(self.to_dict(), indent=2) + "\n")
        write_bands_csv(self.quantile_bands, paths["bands"])
        return paths


def write_bands_csv(bands: QuantileBands, path) -> None:
    with Path(path).open("w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["timestamp", "mean", "q01", "q99"])
        for t, m, lo, hi in zip(bands.timestamps, bands.mean.tolist(),
                                bands.lower.tolist(), bands.upper.tolist()):
            writer.writerow([format_time(t), repr(m), repr(lo), repr(hi)])


def write_resolution_csv(table: dict, path) -> None:
    """``table`` maps (method, dt_s) -> avg_rmse."""
    with Path(path).open("w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["method", "dt_s", "avg_rmse"])
        for (method, dt), value in sorted(table.items()):
            writer.writerow([method, dt, repr(value)])


def compare(ensemble: OutageEnsemble, observed: dict, levels=(0.01, 0.99)) -> ComparisonReport:
    """Report for one ensemble against observed series keyed by region (``total`` for the system)."""
    total = observed.get(TOTAL)
    rmse = avg_rmse(total, ensemble) if total is not None else None
    report = ComparisonReport(ensemble.method, rmse, quantile_bands(ensemble, levels))
    for region, series in observed.items():
        if region == TOTAL or region not in ensemble.region_p_fail:
            continue
        report.per_region[region] = {
            "avg_rmse": avg_rmse(series, ensemble, region),
            "bands": quantile_bands(ensemble, levels, region),
        }
    return report


@dataclass(frozen=True)
class CalibrationResult:
    params: FragilityParams
    residual: float
    n_points: int


def _initial_lambda(w, y):
    order = np.argsort(w, kind="stable")
    w, y = w[order], y[order]
    for k in range(len(w) - 1):
        if (y[k] - 0.5) * (y[k + 1] - 0.5) <= 0 and y[k] != y[k + 1]:
            frac = (0.5 - y[k]) / (y[k + 1] - y[k])
            return math.log(w[k] + frac * (w[k + 1] - w[k]))
    return math.log(w[np.argmin(np.abs(y - 0.5))])


def calibrate_fragility(points, beta0=0.3, beta_floor=0.01) -> CalibrationResult:
    """Least-squares lognormal CDF fit to ``(wind_mph, outage_fraction)`` points.

    Fractions are clamped to [0.001, 0.999]. The search runs Nelder-Mead over
    ``(lambda, log(beta - beta_floor))``, started at the log of the wind where
    the data cross 50% and ``beta0``.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 3 or pts.shape[1] != 2:
        raise InsufficientPoints(f"need at least 3 (wind, fraction) points, got {len(pts)}")
    w, y = pts[:, 0], np.clip(pts[:, 1], 0.001, 0.999)
    if np.any(~np.isfinite(w)) or np.any(w <= 0):
        raise InputError("calibration winds must be positive")
    if np.ptp(w) == 0:
        raise DegenerateData("all calibration winds are equal; lambda and beta are not identifiable")
    logw = np.log(w)

    def sse(theta):
        beta = beta_floor + math.exp(theta[1])
        return float(np.sum((ndtr((logw - theta[0]) / beta) - y) ** 2))

    start = np.array([_initial_lambda(w, y), math.log(max(beta0 - beta_floor, 1e-6))])
    opts = {"xatol": 1e-11, "fatol": 1e-18, "maxiter": 20000, "maxfev": 40000}
    res = minimize(sse, start, method="Nelder-Mead", options=opts)
    # One restart shakes the simplex loose from early collapse.
    res = minimize(sse, res.x, method="Nelder-Mead", options=opts)
    lam, beta = float(res.x[0]), beta_floor + math.exp(res.x[1])
    return CalibrationResult(FragilityParams(lam, beta, check_range=False), float(res.fun), len(w))


def calibration_points(network: Network, wind, observed: dict, scope="region") -> dict:
    """Pair observed outage fractions with the winds that produced them.

    For each observed time inside the wind series, the wind is the
    load-weighted mean over the group's feeders of the running-maximum design
    gust (mph). ``scope="region"`` gives one point set per region;
    ``scope="total"`` pools all feeders against the ``total`` series.
    """
    groups = {}
    if scope == "region":
        idx = network.region_index()
        for k, region in enumerate(network.regions):
            if region in observed:
                groups[region] = (idx == k, observed[region])
    elif scope == "total":
        if TOTAL not in observed:
            raise InputError("observed file has no 'total' series")
        groups[TOTAL] = (np.ones(len(network), dtype=bool), observed[TOTAL])
    else:
        raise InputError(f"scope must be 'region' or 'total', got {scope!r}")
    loads = network.loads
    out = {}
    for name, (mask, series) in groups.items():
        e = to_epoch(series.timestamps)
        keep = (e >= wind.epoch[0]) & (e <= wind.epoch[-1])
        times = series.timestamps[keep]
        if times.size == 0 or not mask.any():
            out[name] = np.empty((0, 2))
            continue
        design = np.maximum.accumulate(design_wind_matrix(network, wind, times) * MS_TO_MPH, axis=0)
        weights = loads[mask] if loads[mask].sum() > 0 else np.ones(mask.sum())
        mean_wind = design[:, mask] @ weights / weights.sum()
        out[name] = np.column_stack([mean_wind, series.outage_pct[keep] / 100.0])
    return out


def calibrate_regions(points_by_group: dict) -> tuple:
    """Fit every group; returns ``(RegionFragilityTable, {group: residual})``."""
    params, residuals = {}, {}
    for name, pts in points_by_group.items():
        result = calibrate_fragility(pts)
        params[name] = result.params
        residuals[name] = result.residual
    return RegionFragilityTable(params), residuals


def resolution_sweep(network: Network, table, track: TcTrack, cfg: SimulationConfig, dts,
                     observed: ObservedOutageSeries, *, bbox, cell_size=0.05, params=None,
                     methods=("hrsra", "smc"), threads=1, region=None) -> dict:
    """Average RMSE for each (method, dt): wind regenerated at every dt, seeds matched."""
    table_out = {}
    for dt in dts:
        step_cfg = cfg.replace(dt=int(dt))
        wind = generate_wind_fields(track, bbox, cell_size, int(dt), params,
                                    time_range=step_cfg.time_range)
        for method in methods:
            ens = simulate(network, table, wind, step_cfg.replace(method=method), threads=threads)
            table_out[(method, int(dt))] = avg_rmse(observed, ens, region)
    return table_out
