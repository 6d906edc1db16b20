"""Distribution network description and regional fragility parameters.

Network JSON::

    {"regions": ["Ponce", "Caguas"],
     "feeders": [{"id": "F1", "substation_id": "S1", "region": "Ponce",
                  "load_mw": 3.2, "poles": [[18.01, -66.61], [18.02, -66.60]]}]}

A feeder may also carry ``"load_curve": [["2022-09-18T00:00:00Z", 3.1], ...]``;
the load then follows the curve (step-and-hold) and ``load_mw`` applies
before its first entry.

Fragility CSV: ``region,lambda,beta`` with lambda in log-mph.
"""

from __future__ import annotations

import csv
import json
import math
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DuplicateFeederId,
    EmptyPoles,
    MalformedFile,
    MalformedRow,
    MissingRegion,
    NonPositiveBeta,
    OutOfBounds,
    UnknownRegion,
)
from .track import format_time, parse_time, to_epoch
from .windfield import WindFieldSeries, gust_at

MS_TO_MPH = 2.236936


@dataclass(frozen=True)
class Feeder:
    id: str
    substation_id: str
    region: str
    poles: tuple
    load_mw: float
    load_curve: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "poles", tuple((float(a), float(b)) for a, b in self.poles))
        object.__setattr__(self, "load_curve",
                           tuple((np.datetime64(t, "s"), float(v)) for t, v in self.load_curve))
        if not self.poles:
            raise EmptyPoles(self.id)
        if not (math.isfinite(self.load_mw) and self.load_mw >= 0):
            raise ValueError(f"feeder {self.id!r}: load_mw must be finite and >= 0")
        if any(not (math.isfinite(v) and v >= 0) for _, v in self.load_curve):
            raise ValueError(f"feeder {self.id!r}: load curve values must be finite and >= 0")


@dataclass(frozen=True)
class Network:
    feeders: tuple
    regions: tuple
    _index: dict = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "feeders", tuple(self.feeders))
        object.__setattr__(self, "regions", tuple(self.regions))
        seen = {}
        known = set(self.regions)
        for k, f in enumerate(self.feeders):
            if f.id in seen:
                raise DuplicateFeederId(f.id)
            if f.region not in known:
                raise UnknownRegion(f.id, f.region)
            seen[f.id] = k
        object.__setattr__(self, "_index", seen)

    def __len__(self):
        return len(self.feeders)

    def feeder(self, feeder_id: str) -> Feeder:
        return self.feeders[self._index[feeder_id]]

    @property
    def loads(self) -> np.ndarray:
        return np.array([f.load_mw for f in self.feeders])

    @property
    def total_load(self) -> float:
        return float(self.loads.sum())

    def region_loads(self) -> dict:
        out = dict.fromkeys(self.regions, 0.0)
        for f in self.feeders:
            out[f.region] += f.load_mw
        return out

    def region_index(self) -> np.ndarray:
        """Position of each feeder's region in :attr:`regions`."""
        pos = {r: k for k, r in enumerate(self.regions)}
        return np.array([pos[f.region] for f in self.feeders], dtype=np.intp)

    @property
    def has_load_curves(self) -> bool:
        return any(f.load_curve for f in self.feeders)

    def load_matrix(self, times) -> np.ndarray:
        """Loads ``(n_times, n_feeders)`` at the given times."""
        epoch = to_epoch(times)
        out = np.tile(self.loads, (epoch.size, 1))
        for i, f in enumerate(self.feeders):
            if not f.load_curve:
                continue
            ct = to_epoch([t for t, _ in f.load_curve])
            cv = np.array([v for _, v in f.load_curve])
            k = np.searchsorted(ct, epoch, side="right") - 1
            out[:, i] = np.where(k >= 0, cv[np.maximum(k, 0)], f.load_mw)
        return out

    def check_within(self, bbox) -> None:
        for f in self.feeders:
            lat, lon = np.array(f.poles).T
            if not np.all(bbox.contains(lat, lon)):
                raise OutOfBounds(f"feeder {f.id!r} has poles outside bbox {tuple(bbox)}")

    def to_dict(self) -> dict:
        feeders = []
        for f in self.feeders:
            item = {"id": f.id, "substation_id": f.substation_id, "region": f.region,
                    "load_mw": f.load_mw, "poles": [list(p) for p in f.poles]}
            if f.load_curve:
                item["load_curve"] = [[format_time(t), v] for t, v in f.load_curve]
            feeders.append(item)
        return {"regions": list(self.regions), "feeders": feeders}


def network_from_dict(data, bbox=None) -> Network:
    try:
        regions = [str(r) for r in data["regions"]]
        feeders = []
        for item in data["feeders"]:
            fid = str(item["id"])
            if not item.get("poles"):
                raise EmptyPoles(fid)
            curve = [(parse_time(t), float(v)) for t, v in item.get("load_curve", [])]
            feeders.append(Feeder(fid, str(item["substation_id"]), str(item["region"]),
                                  item["poles"], float(item["load_mw"]), curve))
    except (KeyError, TypeError) as exc:
        raise MalformedFile(f"network description missing or bad field: {exc}") from exc
    except ValueError as exc:
        if isinstance(exc, MalformedFile):
            raise
        raise MalformedFile(str(exc)) from exc
    net = Network(feeders, regions)
    if bbox is not None:
        net.check_within(bbox)
    return net


def parse_network(path, bbox=None) -> Network:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise MalformedFile(f"cannot read network file {path}: {exc}") from exc
    return network_from_dict(data, bbox)


def write_network(network: Network, path) -> None:
    Path(path).write_text(json.dumps(network.to_dict()) + "\n")


@dataclass(frozen=True)
class FragilityParams:
    """Lognormal fragility in gust wind (mph): median exp(lam), log-std beta."""

    lam: float
    beta: float
    check_range: bool = field(default=True, compare=False)

    def __post_init__(self):
        if not (self.beta > 0 and math.isfinite(self.beta)):
            raise ValueError(f"beta must be > 0, got {self.beta}")
        if not math.isfinite(self.lam):
            raise ValueError(f"lambda must be finite, got {self.lam}")
        if self.check_range and not 10.0 <= math.exp(self.lam) <= 500.0:
            raise ValueError(f"median resistance exp(lambda)={math.exp(self.lam):.1f} mph "
                             "outside 10-500 mph; pass check_range=False to override")


class RegionFragilityTable(Mapping):
    """Read-only mapping region -> :class:`FragilityParams`."""

    def __init__(self, params):
        self._params = dict(params)

    def __getitem__(self, region):
        return self._params[region]

    def __iter__(self):
        return iter(self._params)

    def __len__(self):
        return len(self._params)

    def __repr__(self):
        return f"RegionFragilityTable({self._params!r})"

    def check_covers(self, network: Network) -> None:
        for region in network.regions:
            if region not in self._params:
                raise MissingRegion(region)

    def per_feeder(self, network: Network) -> tuple[np.ndarray, np.ndarray]:
        """(lambda, beta) arrays aligned with ``network.feeders``."""
        self.check_covers(network)
        lam = np.array([self._params[f.region].lam for f in network.feeders])
        beta = np.array([self._params[f.region].beta for f in network.feeders])
        return lam, beta


def parse_fragility(path, network: Network | None = None) -> RegionFragilityTable:
    path = Path(path)
    try:
        handle = path.open(newline="")
    except OSError as exc:
        raise MalformedFile(f"cannot read fragility file {path}: {exc}") from exc
    params = {}
    with handle:
        reader = csv.reader(handle)
        header = [h.strip() for h in next(reader, [])]
        if header != ["region", "lambda", "beta"]:
            raise MalformedRow(1, "expected header region,lambda,beta")
        for row in reader:
            if not row:
                continue
            if len(row) != 3:
                raise MalformedRow(reader.line_num, "expected 3 fields")
            region = row[0].strip()
            try:
                lam, beta = float(row[1]), float(row[2])
            except ValueError as exc:
                raise MalformedRow(reader.line_num, str(exc)) from exc
            if not beta > 0:
                raise NonPositiveBeta(region)
            try:
                params[region] = FragilityParams(lam, beta)
            except ValueError as exc:
                raise MalformedRow(reader.line_num, str(exc)) from exc
    table = RegionFragilityTable(params)
    if network is not None:
        table.check_covers(network)
    return table


def write_fragility(table, path) -> None:
    with Path(path).open("w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["region", "lambda", "beta"])
        for region, p in table.items():
            writer.writerow([region, repr(p.lam), repr(p.beta)])


def feeder_design_wind(feeder: Feeder, series: WindFieldSeries, t) -> float:
    """Largest 3-second gust (m/s) over the feeder's poles at time ``t``."""
    lat, lon = np.array(feeder.poles).T
    return float(np.max(gust_at(series, lat, lon, t)))


def design_wind_matrix(network: Network, series: WindFieldSeries, times) -> np.ndarray:
    """Design gust (m/s) of every feeder at every time, shape ``(n_times, n_feeders)``."""
    counts = np.array([len(f.poles) for f in network.feeders])
    pts = np.array([p for f in network.feeders for p in f.poles])
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    out = np.empty((len(times), len(network)))
    for k, t in enumerate(times):
        gust = series.gust_factor * series.sample(series.step_index(t), pts[:, 0], pts[:, 1])
        out[k] = np.maximum.reduceat(gust, starts)
    return out
