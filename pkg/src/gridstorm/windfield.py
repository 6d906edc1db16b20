"""Parametric asymmetric hurricane wind field on a lat/lon raster.

The rotational part is a Holland-shaped radial profile driven only by the
maximum sustained wind and the radius of maximum wind::

    v(r) = vmax * sqrt((rmax/r)**B * exp(1 - (rmax/r)**B))

Storm motion enters as a background wind: the translation velocity scaled by
``asym_alpha`` and rotated by ``asym_theta`` degrees (counterclockwise in the
northern hemisphere, clockwise in the southern), added vectorially to the
rotational wind. The magnitude of the sum is the 1-minute sustained wind; the
3-second gust is that times a constant gust factor.

Any callable ``profile(r_km, vmax, rmax, params) -> m/s`` can replace
:func:`holland_profile`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import geo
from .errors import MalformedFile, OutOfBounds
from .track import (
    TcTrack,
    check_dt,
    format_time,
    from_epoch,
    parse_time,
    time_grid,
    to_epoch,
)

GUST_FACTOR = 1.49
DEFAULT_CELL_SIZE = 0.05
DEFAULT_DT = 600


@dataclass(frozen=True)
class WindProfileParams:
    shape_b: float = 1.3
    asym_alpha: float = 0.55
    asym_theta: float = 20.0

    def __post_init__(self):
        if not self.shape_b > 0:
            raise ValueError(f"shape_b must be > 0, got {self.shape_b}")
        if not 0.0 <= self.asym_alpha <= 1.0:
            raise ValueError(f"asym_alpha must be in [0, 1], got {self.asym_alpha}")


class BBox(NamedTuple):
    south: float
    north: float
    west: float
    east: float

    def validate(self) -> "BBox":
        if not (-90 <= self.south < self.north <= 90) or not (-180 <= self.west < self.east <= 180):
            raise ValueError(f"degenerate or invalid bbox {tuple(self)}")
        return self

    def contains(self, lat, lon):
        lat, lon = np.asarray(lat), np.asarray(lon)
        return (lat >= self.south) & (lat <= self.north) & (lon >= self.west) & (lon <= self.east)

    @classmethod
    def parse(cls, text: str) -> "BBox":
        """``"south,north,west,east"`` in degrees."""
        parts = [float(p) for p in text.split(",")]
        if len(parts) != 4:
            raise ValueError("bbox needs four numbers: south,north,west,east")
        return cls(*parts).validate()


class StormState(NamedTuple):
    lat: float
    lon: float
    vmax: float
    rmax: float
    vt_east: float = 0.0
    vt_north: float = 0.0


def holland_profile(r, vmax, rmax, params: WindProfileParams):
    """Rotational wind speed at radius ``r`` (km); zero at the centre."""
    r = np.asarray(r, dtype=np.float64)
    out = np.zeros(np.broadcast(r, vmax, rmax).shape)
    pos = np.broadcast_to(r > 0, out.shape)
    b = params.shape_b
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        log_ratio = np.log(rmax) - np.log(r)
        x = np.exp(b * log_ratio)
        # log of x * exp(1 - x); stays finite deep inside the eye where x overflows
        val = vmax * np.exp(0.5 * (b * log_ratio + 1.0 - x))
    out[pos] = np.broadcast_to(val, out.shape)[pos]
    return out if out.ndim else float(out)


def grid_shape(bbox: BBox, cell_size: float) -> tuple[int, int]:
    if not cell_size > 0:
        raise ValueError(f"cell_size must be > 0, got {cell_size}")
    nlat = math.ceil((bbox.north - bbox.south) / cell_size - 1e-9)
    nlon = math.ceil((bbox.east - bbox.west) / cell_size - 1e-9)
    return nlat, nlon


def cell_centers(bbox: BBox, cell_size: float) -> tuple[np.ndarray, np.ndarray]:
    nlat, nlon = grid_shape(bbox, cell_size)
    lats = bbox.south + (np.arange(nlat) + 0.5) * cell_size
    lons = bbox.west + (np.arange(nlon) + 0.5) * cell_size
    return lats, lons


def sustained_wind_at(lat, lon, storm: StormState, params: WindProfileParams | None = None,
                      profile=holland_profile):
    """1-minute sustained wind (m/s) at point(s) ``lat``/``lon`` for one storm state."""
    params = params or WindProfileParams()
    r = geo.haversine(storm.lat, storm.lon, lat, lon)
    theta = geo.bearing(storm.lat, storm.lon, lat, lon)
    speed = profile(r, storm.vmax, storm.rmax, params)
    # Counterclockwise tangent in the northern hemisphere, clockwise in the southern.
    sense = 1.0 if storm.lat >= 0 else -1.0
    u = speed * (-np.cos(theta)) * sense
    v = speed * np.sin(theta) * sense
    a = math.radians(params.asym_theta) * sense
    bg_u = params.asym_alpha * (storm.vt_east * math.cos(a) - storm.vt_north * math.sin(a))
    bg_v = params.asym_alpha * (storm.vt_east * math.sin(a) + storm.vt_north * math.cos(a))
    out = np.hypot(u + bg_u, v + bg_v)
    return out if np.ndim(out) else float(out)


def storm_states(track: TcTrack, epoch, dt) -> list[StormState]:
    """Interpolated storm states with translation velocity at each epoch second.

    Velocity comes from a central difference over ``±dt`` of interpolated
    positions, one-sided where the track ends.
    """
    epoch = np.asarray(epoch, dtype=np.int64)
    lat, lon, vmax, rmax = track.at(epoch)
    t_prev = np.maximum(epoch - dt, track.epoch[0])
    t_next = np.minimum(epoch + dt, track.epoch[-1])
    lat0, lon0, _, _ = track.at(t_prev)
    lat1, lon1, _, _ = track.at(t_next)
    dist_m = geo.haversine(lat0, lon0, lat1, lon1) * 1000.0
    heading = geo.bearing(lat0, lon0, lat1, lon1)
    speed = dist_m / (t_next - t_prev)
    return [
        StormState(float(lat[k]), float(lon[k]), float(vmax[k]), float(rmax[k]),
                   float(speed[k] * math.sin(heading[k])), float(speed[k] * math.cos(heading[k])))
        for k in range(epoch.size)
    ]


class WindFieldSeries:
    """Stack of sustained-wind rasters on a regular lat/lon grid.

    ``sustained`` has shape ``(n_times, n_lat, n_lon)``; row 0 is the
    southernmost band of cells, column 0 the westernmost. The array is made
    read-only so one series can be shared across simulation runs.
    """

    def __init__(self, bbox, cell_size, timestamps, sustained, gust_factor=GUST_FACTOR):
        self.bbox = BBox(*bbox).validate()
        self.cell_size = float(cell_size)
        self.timestamps = np.asarray(timestamps, dtype="datetime64[s]")
        sustained = np.array(sustained, dtype=np.float64)
        nlat, nlon = grid_shape(self.bbox, self.cell_size)
        if sustained.shape != (self.timestamps.size, nlat, nlon):
            raise ValueError(
                f"raster stack shape {sustained.shape} does not match "
                f"{(self.timestamps.size, nlat, nlon)} from bbox/cell_size/timestamps")
        if not np.all(np.isfinite(sustained)) or np.any(sustained < 0):
            raise ValueError("wind values must be finite and >= 0")
        if self.timestamps.size == 0 or np.any(np.diff(to_epoch(self.timestamps)) <= 0):
            raise ValueError("timestamps must be non-empty and strictly increasing")
        if not gust_factor > 0:
            raise ValueError("gust_factor must be > 0")
        sustained.setflags(write=False)
        self.sustained = sustained
        self.gust_factor = float(gust_factor)
        self.lats, self.lons = cell_centers(self.bbox, self.cell_size)
        self.epoch = to_epoch(self.timestamps)

    @property
    def gust(self) -> np.ndarray:
        return self.gust_factor * self.sustained

    @property
    def shape(self):
        return self.sustained.shape

    def __eq__(self, other):
        return (isinstance(other, WindFieldSeries) and self.bbox == other.bbox
                and self.cell_size == other.cell_size and self.gust_factor == other.gust_factor
                and np.array_equal(self.timestamps, other.timestamps)
                and np.array_equal(self.sustained, other.sustained))

    def __repr__(self):
        return (f"WindFieldSeries({self.timestamps.size} steps, grid {self.shape[1]}x{self.shape[2]}, "
                f"cell {self.cell_size} deg)")

    def step_index(self, t) -> int:
        """Index of the last time step at or before ``t``."""
        e = int(to_epoch(t))
        if e < self.epoch[0] or e > self.epoch[-1]:
            raise OutOfBounds(f"time {format_time(t)} outside wind series "
                              f"[{format_time(self.timestamps[0])}, {format_time(self.timestamps[-1])}]")
        return int(np.searchsorted(self.epoch, e, side="right") - 1)

    def sample(self, step: int, lat, lon):
        """Bilinear interpolation of the sustained raster ``step`` at cell-centre coordinates.

        Points in the half-cell margin outside the outermost centres take the
        edge value.
        """
        lat = np.asarray(lat, dtype=np.float64)
        lon = np.asarray(lon, dtype=np.float64)
        if not np.all(self.bbox.contains(lat, lon)):
            raise OutOfBounds("point outside wind-field bbox")
        raster = self.sustained[step]
        fy, y0, wy = _axis_weights(lat, self.bbox.south, self.cell_size, raster.shape[0])
        fx, x0, wx = _axis_weights(lon, self.bbox.west, self.cell_size, raster.shape[1])
        y1 = np.minimum(y0 + 1, raster.shape[0] - 1)
        x1 = np.minimum(x0 + 1, raster.shape[1] - 1)
        top = raster[y0, x0] * (1 - wx) + raster[y0, x1] * wx
        bot = raster[y1, x0] * (1 - wx) + raster[y1, x1] * wx
        return top * (1 - wy) + bot * wy


def _axis_weights(coord, origin, cell, n):
    f = np.clip((coord - origin) / cell - 0.5, 0.0, n - 1)
    i0 = np.minimum(np.floor(f).astype(np.intp), max(n - 2, 0))
    return f, i0, f - i0


def gust_at(series: WindFieldSeries, lat, lon, t):
    """3-second gust (m/s) at point(s) at time ``t`` (step-and-hold in time)."""
    step = series.step_index(t)
    out = series.gust_factor * series.sample(step, lat, lon)
    return out if np.ndim(out) else float(out)


def generate_wind_fields(track: TcTrack, bbox, cell_size=DEFAULT_CELL_SIZE, dt=DEFAULT_DT,
                         params: WindProfileParams | None = None, *, time_range=None,
                         profile=holland_profile, gust_factor=GUST_FACTOR) -> WindFieldSeries:
    """Rasterise the wind field every ``dt`` seconds.

    Without ``time_range`` the steps follow :func:`interpolate_track` (track
    start to end). With ``time_range=(start, end)`` the steps run from
    ``start`` to ``end``; both must lie within the track.
    """
    params = params or WindProfileParams()
    bbox = BBox(*bbox).validate()
    dt = check_dt(dt)
    if time_range is None:
        epoch = time_grid(track.start, track.end, dt)
    else:
        start, end = (to_epoch(t) for t in time_range)
        if start < track.epoch[0] or end > track.epoch[-1] or start > end:
            raise OutOfBounds("time_range must lie within the track")
        epoch = time_grid(from_epoch(start), from_epoch(end), dt)
    lats, lons = cell_centers(bbox, cell_size)
    glat, glon = np.meshgrid(lats, lons, indexing="ij")
    rasters = np.empty((epoch.size,) + glat.shape)
    for k, storm in enumerate(storm_states(track, epoch, dt)):
        rasters[k] = sustained_wind_at(glat, glon, storm, params, profile)
    return WindFieldSeries(bbox, cell_size, from_epoch(epoch), rasters, gust_factor)


def export_wind_fields(series: WindFieldSeries, out_dir) -> Path:
    """Write one ``lat,lon,sustained_ms,gust_ms`` CSV per step plus ``manifest.json``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    glat, glon = np.meshgrid(series.lats, series.lons, indexing="ij")
    glat, glon = glat.ravel(), glon.ravel()
    files = []
    for k in range(series.timestamps.size):
        name = f"step_{k:04d}.csv"
        sus = series.sustained[k].ravel()
        gust = series.gust_factor * sus
        lines = ["lat,lon,sustained_ms,gust_ms"]
        lines += [f"{a!r},{b!r},{c!r},{d!r}" for a, b, c, d in
                  zip(glat.tolist(), glon.tolist(), sus.tolist(), gust.tolist())]
        (out_dir / name).write_text("\n".join(lines) + "\n")
        files.append(name)
    manifest = {
        "bbox": {"south": series.bbox.south, "north": series.bbox.north,
                 "west": series.bbox.west, "east": series.bbox.east},
        "cell_size": series.cell_size,
        "gust_factor": series.gust_factor,
        "timestamps": [format_time(t) for t in series.timestamps],
        "files": files,
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def load_wind_fields(directory) -> WindFieldSeries:
    directory = Path(directory)
    try:
        manifest = json.loads((directory / "manifest.json").read_text())
        bbox = BBox(**manifest["bbox"])
        cell = manifest["cell_size"]
        times = [parse_time(t) for t in manifest["timestamps"]]
        nlat, nlon = grid_shape(bbox, cell)
        stack = np.empty((len(times), nlat, nlon))
        for k, name in enumerate(manifest["files"]):
            data = np.loadtxt(directory / name, delimiter=",", skiprows=1, ndmin=2)
            stack[k] = data[:, 2].reshape(nlat, nlon)
        return WindFieldSeries(bbox, cell, times, stack, manifest["gust_factor"])
    except (OSError, KeyError, ValueError, TypeError) as exc:
        raise MalformedFile(f"cannot load wind fields from {directory}: {exc}") from exc
