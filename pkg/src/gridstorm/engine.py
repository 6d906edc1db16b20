"""Monte Carlo feeder-outage simulation: hazard-resistance sampling vs sequential sampling.

Two samplers share one fragility curve, a lognormal CDF in gust wind (mph):

* ``hrsra`` draws one uniform per feeder per run and turns it into a fixed
  wind resistance by inverting the fragility CDF. A feeder fails the first
  time its design gust strictly exceeds that resistance.
* ``smc`` draws a fresh uniform per feeder per time step and fails the feeder
  when the draw is at or below the current failure probability.

Failures are absorbing in both. The system failure level ``p_fail`` is the
failed share of load, in percent.

Random numbers: run ``j`` owns a Philox stream keyed by ``(master_seed, j)``.
Within it, feeder ``i`` reads word ``i`` (hrsra) or word ``t * n_feeders + i``
at step ``t`` (smc). Draws therefore never depend on chunking or thread
count, and a feeder's resistance does not depend on the time grid.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import CoverageGap, DegenerateUniform, InputError, MalformedFile, MissingRegion
from .network import MS_TO_MPH, FragilityParams, Network, design_wind_matrix
from .track import check_dt, format_time, from_epoch, parse_time, to_epoch

METHODS = ("hrsra", "smc")
CHUNK_RUNS = 250
_TWO_M52 = 2.0 ** -52


def fragility_prob(w_mph, params: FragilityParams | None = None, *, lam=None, beta=None):
    """Failure probability ``Phi((ln w - lam) / beta)``; exactly 0 at ``w = 0``."""
    if params is not None:
        lam, beta = params.lam, params.beta
    w = np.asarray(w_mph, dtype=np.float64)
    if np.any(w < 0):
        raise ValueError("wind speed must be >= 0")
    with np.errstate(divide="ignore"):
        out = ndtr((np.log(w) - lam) / beta)
    return out if out.ndim else float(out)


def sample_resistance(r, params: FragilityParams | None = None, *, lam=None, beta=None):
    """Inverse-transform a uniform ``r`` in (0, 1) to a wind resistance in mph."""
    if params is not None:
        lam, beta = params.lam, params.beta
    r = np.asarray(r, dtype=np.float64)
    if np.any(r <= 0) or np.any(r >= 1):
        raise DegenerateUniform("uniform draw must lie strictly inside (0, 1)")
    out = np.exp(lam + beta * ndtri(r))
    return out if out.ndim else float(out)


def run_stream(master_seed: int, run: int) -> np.random.Philox:
    return np.random.Philox(key=np.array([master_seed, run], dtype=np.uint64))


def open_uniform(raw: np.ndarray) -> np.ndarray:
    """Map raw 64-bit words to doubles ``(k + 0.5) / 2**52``, never 0 or 1."""
    return ((raw >> np.uint64(12)).astype(np.float64) + 0.5) * _TWO_M52


@dataclass(frozen=True)
class SimulationConfig:
    n_runs: int
    dt: int
    time_range: tuple
    method: str = "hrsra"
    master_seed: int = 0
    outage_unit: str = "percent"
    keep_status: bool = False

    def __post_init__(self):
        if int(self.n_runs) != self.n_runs or self.n_runs < 1:
            raise InputError(f"n_runs must be an integer >= 1, got {self.n_runs}")
        object.__setattr__(self, "dt", check_dt(self.dt))
        start, end = (np.datetime64(t, "s") if not isinstance(t, str) else parse_time(t)
                      for t in self.time_range)
        object.__setattr__(self, "time_range", (start, end))
        if not start < end:
            raise InputError("time_range start must precede end")
        if int(to_epoch(end) - to_epoch(start)) % self.dt:
            raise InputError(f"dt={self.dt}s does not divide the simulated span")
        method = self.method.lower()
        if method not in METHODS:
            raise InputError(f"method must be one of {METHODS}, got {self.method!r}")
        object.__setattr__(self, "method", method)
        if not 0 <= int(self.master_seed) < 2 ** 64:
            raise InputError("master_seed must fit in an unsigned 64-bit integer")
        if self.outage_unit != "percent":
            raise InputError("only outage_unit='percent' is supported")

    def timestamps(self) -> np.ndarray:
        start, end = to_epoch(self.time_range[0]), to_epoch(self.time_range[1])
        return from_epoch(np.arange(start, end + 1, self.dt))

    def replace(self, **changes) -> "SimulationConfig":
        data = {**self.to_dict(), **changes}
        return SimulationConfig(**data)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["time_range"] = [format_time(t) for t in self.time_range]
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "SimulationConfig":
        known = {k: data[k] for k in cls.__dataclass_fields__ if k in data}
        try:
            return cls(**known)
        except TypeError as exc:
            raise InputError(f"bad simulation config: {exc}") from exc


@dataclass
class OutageEnsemble:
    """Per-run system failure trajectories.

    ``p_fail`` is ``(n_runs, n_times)`` in percent. ``region_p_fail`` maps each
    region to the same shape (failed share of that region's load).
    ``status``, when kept, is the feeder in-service bit matrix packed along
    the feeder axis: ``(n_runs, n_times, ceil(n_feeders / 8))``.
    """

    method: str
    timestamps: np.ndarray
    p_fail: np.ndarray
    master_seed: int
    region_p_fail: dict = field(default_factory=dict)
    status: np.ndarray | None = None
    n_feeders: int | None = None
    config: dict = field(default_factory=dict)

    @property
    def n_runs(self) -> int:
        return self.p_fail.shape[0]

    @property
    def rng_trace(self) -> dict:
        return {"generator": "philox4x64", "master_seed": int(self.master_seed),
                "streams": [0, self.n_runs], "key": "(master_seed, run)"}

    def feeder_status(self, run: int) -> np.ndarray:
        """Unpacked ``(n_times, n_feeders)`` bool matrix, True = in service."""
        if self.status is None:
            raise ValueError("ensemble was simulated without keep_status")
        return np.unpackbits(self.status[run], axis=-1, count=self.n_feeders).astype(bool)


@dataclass(frozen=True)
class ResistanceSample:
    feeder_id: str
    r: float
    resistance_mph: float


def draw_resistances(master_seed, runs, lam, beta) -> np.ndarray:
    """Resistance (mph) of every feeder in each of ``runs``, shape ``(len(runs), n_feeders)``."""
    lam, beta = np.asarray(lam, dtype=np.float64), np.asarray(beta, dtype=np.float64)
    out = np.empty((len(runs), lam.size))
    for k, j in enumerate(runs):
        r = open_uniform(run_stream(master_seed, j).random_raw(lam.size))
        out[k] = np.exp(lam + beta * ndtri(r))
    return out


def resistance_samples(network: Network, table, master_seed: int, run: int) -> list:
    """The uniforms and resistances a given run assigns to each feeder."""
    lam, beta = table.per_feeder(network)
    r = open_uniform(run_stream(master_seed, run).random_raw(len(network)))
    resist = np.exp(lam + beta * ndtri(r))
    return [ResistanceSample(f.id, float(u), float(x)) for f, u, x in zip(network.feeders, r, resist)]


def _hrsra_fail_steps(cummax_mph, lam, beta, seed, runs):
    resist = draw_resistances(seed, runs, lam, beta)
    steps = np.empty(resist.shape, dtype=np.intp)
    # cummax is non-decreasing, so the first step with wind > R is a right-bisection.
    for i in range(resist.shape[1]):
        steps[:, i] = np.searchsorted(cummax_mph[:, i], resist[:, i], side="right")
    return steps


def _smc_fail_steps(prob, seed, runs):
    n_times, n_feeders = prob.shape
    steps = np.empty((len(runs), n_feeders), dtype=np.intp)
    for k, j in enumerate(runs):
        u = open_uniform(run_stream(seed, j).random_raw(n_times * n_feeders)).reshape(n_times, n_feeders)
        hit = u <= prob
        steps[k] = np.where(hit.any(axis=0), hit.argmax(axis=0), n_times)
    return steps


def _aggregate(steps, loads, region_idx, n_regions):
    """Failed-load percentages from first-failure steps.

    Returns ``(total, regional)`` with shapes ``(c, T)`` and ``(c, R, T)``.
    """
    c, n_feeders = steps.shape
    n_times = loads.shape[0]
    if np.all(loads == loads[0]):
        load = loads[0]
        width = n_times + 1
        row = np.arange(c)[:, None]
        w = np.broadcast_to(load, steps.shape).ravel()
        bins = np.bincount((row * width + steps).ravel(), weights=w, minlength=c * width)
        failed = np.cumsum(bins.reshape(c, width)[:, :n_times], axis=1)
        total = failed * (100.0 / load.sum()) if load.sum() > 0 else np.zeros_like(failed)
        rkey = (row * n_regions + region_idx[None, :]) * width + steps
        rbins = np.bincount(rkey.ravel(), weights=w, minlength=c * n_regions * width)
        rfailed = np.cumsum(rbins.reshape(c, n_regions, width)[:, :, :n_times], axis=2)
        rtot = np.bincount(region_idx, weights=load, minlength=n_regions)
        with np.errstate(invalid="ignore", divide="ignore"):
            regional = np.where(rtot[None, :, None] > 0, rfailed * (100.0 / rtot)[None, :, None], 0.0)
    else:
        down = steps[:, None, :] <= np.arange(n_times)[None, :, None]
        failed = np.einsum("ctf,tf->ct", down, loads)
        denom = loads.sum(axis=1)
        total = np.where(denom > 0, 100.0 * failed / np.where(denom > 0, denom, 1.0), 0.0)
        onehot = np.eye(n_regions)[region_idx]
        rfailed = np.einsum("ctf,tf,fr->crt", down, loads, onehot)
        rden = loads @ onehot
        regional = np.where(rden.T[None] > 0, 100.0 * rfailed / np.where(rden.T[None] > 0, rden.T[None], 1.0), 0.0)
    return np.minimum(total, 100.0), np.minimum(regional, 100.0)


def simulate_matrix(design_mph, lam, beta, loads, n_runs, master_seed, method, *,
                    region_idx=None, n_regions=1, keep_status=False, threads=1):
    """Run the sampler on a precomputed design-wind matrix.

    ``design_mph`` is ``(n_times, n_feeders)`` gust in mph; ``lam``/``beta``
    are per-feeder arrays; ``loads`` is ``(n_feeders,)`` or
    ``(n_times, n_feeders)``. Returns ``(p_fail, regional, status)``.
    """
    design_mph = np.asarray(design_mph, dtype=np.float64)
    n_times, n_feeders = design_mph.shape
    lam = np.broadcast_to(np.asarray(lam, dtype=np.float64), (n_feeders,))
    beta = np.broadcast_to(np.asarray(beta, dtype=np.float64), (n_feeders,))
    loads = np.asarray(loads, dtype=np.float64)
    if loads.ndim == 1:
        loads = np.broadcast_to(loads, (n_times, n_feeders))
    region_idx = np.zeros(n_feeders, dtype=np.intp) if region_idx is None else np.asarray(region_idx)
    method = method.lower()
    if method == "hrsra":
        prepared = np.maximum.accumulate(design_mph, axis=0)
        sampler = _hrsra_fail_steps
        extra = (prepared, lam, beta)
    elif method == "smc":
        sampler = _smc_fail_steps
        extra = (fragility_prob(design_mph, lam=lam, beta=beta),)
    else:
        raise InputError(f"unknown method {method!r}")

    p_fail = np.empty((n_runs, n_times))
    regional = np.empty((n_runs, n_regions, n_times))
    status = np.empty((n_runs, n_times, (n_feeders + 7) // 8), dtype=np.uint8) if keep_status else None

    def work(start):
        runs = range(start, min(start + CHUNK_RUNS, n_runs))
        steps = sampler(*extra, master_seed, runs)
        tot, reg = _aggregate(steps, loads, region_idx, n_regions)
        sl = slice(runs.start, runs.stop)
        p_fail[sl] = tot
        regional[sl] = reg
        if status is not None:
            up = steps[:, None, :] > np.arange(n_times)[None, :, None]
            status[sl] = np.packbits(up, axis=-1)

    starts = range(0, n_runs, CHUNK_RUNS)
    if threads <= 1:
        for s in starts:
            work(s)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, starts))
    return p_fail, regional, status


def _check_coverage(network: Network, table, wind, cfg: SimulationConfig):
    try:
        lam, beta = table.per_feeder(network)
    except MissingRegion as exc:
        raise CoverageGap(f"fragility table does not cover region {exc.region!r}") from exc
    start, end = to_epoch(cfg.time_range[0]), to_epoch(cfg.time_range[1])
    if start < wind.epoch[0] or end > wind.epoch[-1]:
        raise CoverageGap("wind field does not cover the simulated time range")
    for f in network.feeders:
        lat, lon = np.array(f.poles).T
        if not np.all(wind.bbox.contains(lat, lon)):
            raise CoverageGap(f"wind field does not cover feeder {f.id!r}")
    return lam, beta


def simulate(network: Network, table, wind, cfg: SimulationConfig, *, threads=1,
             method=None) -> OutageEnsemble:
    """Simulate ``cfg.n_runs`` outage trajectories with ``cfg.method`` (or ``method``)."""
    method = (method or cfg.method).lower()
    lam, beta = _check_coverage(network, table, wind, cfg)
    times = cfg.timestamps()
    design_mph = design_wind_matrix(network, wind, times) * MS_TO_MPH
    loads = network.load_matrix(times) if network.has_load_curves else network.loads
    p_fail, regional, status = simulate_matrix(
        design_mph, lam, beta, loads, cfg.n_runs, cfg.master_seed, method,
        region_idx=network.region_index(), n_regions=len(network.regions),
        keep_status=cfg.keep_status, threads=threads)
    return OutageEnsemble(
        method=method, timestamps=times, p_fail=p_fail, master_seed=cfg.master_seed,
        region_p_fail={r: regional[:, k, :] for k, r in enumerate(network.regions)},
        status=status, n_feeders=len(network), config=cfg.replace(method=method).to_dict())


def run_hrsra(network, table, wind, cfg, *, threads=1) -> OutageEnsemble:
    return simulate(network, table, wind, cfg, threads=threads, method="hrsra")


def run_smc(network, table, wind, cfg, *, threads=1) -> OutageEnsemble:
    return simulate(network, table, wind, cfg, threads=threads, method="smc")


def _csv_rows(p_fail, stamps):
    for j in range(p_fail.shape[0]):
        for ts, v in zip(stamps, p_fail[j].tolist()):
            yield f"{j},{ts},{v!r}\n"


def export_ensemble(ens: OutageEnsemble, out_dir, *, by_region=False) -> dict:
    """Write ``ensemble.csv`` (run,timestamp,p_fail_pct) and ``summary.json``.

    With ``by_region`` also write ``regions.csv`` in wide form
    (run,timestamp,<region>...).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stamps = [format_time(t) for t in ens.timestamps]
    paths = {"ensemble": out_dir / "ensemble.csv", "summary": out_dir / "summary.json"}
    with paths["ensemble"].open("w") as handle:
        handle.write("run,timestamp,p_fail_pct\n")
        handle.writelines(_csv_rows(ens.p_fail, stamps))
    regions = list(ens.region_p_fail)
    if by_region and regions:
        paths["regions"] = out_dir / "regions.csv"
        stack = np.stack([ens.region_p_fail[r] for r in regions], axis=-1)
        with paths["regions"].open("w") as handle:
            handle.write("run,timestamp," + ",".join(regions) + "\n")
            for j in range(ens.n_runs):
                rows = stack[j].tolist()
                handle.writelines(f"{j},{ts}," + ",".join(repr(v) for v in row) + "\n"
                                  for ts, row in zip(stamps, rows))
    summary = {
        "method": ens.method,
        "master_seed": int(ens.master_seed),
        "n_runs": ens.n_runs,
        "timestamps": stamps,
        "regions": regions if by_region else [],
        "rng": ens.rng_trace,
        "config": ens.config,
        "mean_final_p_fail_pct": float(ens.p_fail[:, -1].mean()),
    }
    paths["summary"].write_text(json.dumps(summary, indent=2) + "\n")
    return paths


def load_ensemble(path) -> OutageEnsemble:
    """Read an exported ensemble directory (or its ``summary.json``)."""
    path = Path(path)
    directory = path.parent if path.is_file() else path
    try:
        summary = json.loads((directory / "summary.json").read_text())
        times = np.array([parse_time(t) for t in summary["timestamps"]])
        n_runs, n_times = summary["n_runs"], len(times)
        data = np.loadtxt(directory / "ensemble.csv", delimiter=",", skiprows=1,
                          usecols=(0, 2), ndmin=2)
        p_fail = data[:, 1].reshape(n_runs, n_times)
        regional = {}
        if summary.get("regions"):
            cols = tuple(range(2, 2 + len(summary["regions"])))
            rdata = np.loadtxt(directory / "regions.csv", delimiter=",", skiprows=1,
                               usecols=cols, ndmin=2)
            for k, r in enumerate(summary["regions"]):
                regional[r] = rdata[:, k].reshape(n_runs, n_times)
    except (OSError, KeyError, ValueError) as exc:
        raise MalformedFile(f"cannot load ensemble from {directory}: {exc}") from exc
    return OutageEnsemble(summary["method"], times, p_fail, summary["master_seed"],
                          region_p_fail=regional, config=summary.get("config", {}))


def analytic_hrsra_mean(design_mph, lam, beta, loads):
    """Expected p_fail (%) under resistance sampling: sum_i L_i F_i(max_{s<=t} w_i(s)) / sum L."""
    cm = np.maximum.accumulate(np.asarray(design_mph, dtype=np.float64), axis=0)
    prob = fragility_prob(cm, lam=lam, beta=beta)
    loads = np.asarray(loads, dtype=np.float64)
    return 100.0 * (prob @ loads) / loads.sum() if loads.sum() > 0 else np.zeros(cm.shape[0])


__all__ = [
    "METHODS", "OutageEnsemble", "ResistanceSample", "SimulationConfig", "draw_resistances",
    "resistance_samples", "analytic_hrsra_mean", "export_ensemble",
    "fragility_prob", "load_ensemble", "open_uniform", "run_hrsra", "run_smc", "run_stream",
    "sample_resistance", "simulate", "simulate_matrix",
]
