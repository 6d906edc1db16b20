"""Tropical-cyclone track ingestion and time interpolation.

Track CSV layout (header required)::

    timestamp_iso8601,lat_deg,lon_deg,vmax_ms,rmax_km
    2022-09-18T00:00:00Z,16.4,-64.4,33.4,40.0

Times are handled internally as integer UTC epoch seconds and exposed as
``numpy.datetime64[s]`` arrays.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .errors import EmptyTrack, MalformedFile, MalformedRow, NonMonotonicTime, NonPositiveDt

TRACK_HEADER = ["timestamp_iso8601", "lat_deg", "lon_deg", "vmax_ms", "rmax_km"]


def parse_time(text: str) -> np.datetime64:
    """Parse an ISO-8601 instant to ``datetime64[s]`` UTC. Naive input is taken as UTC."""
    text = text.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    stamp = datetime.fromisoformat(text)
    if stamp.tzinfo is not None:
        stamp = stamp.astimezone(timezone.utc).replace(tzinfo=None)
    return np.datetime64(stamp, "s")


def format_time(t) -> str:
    return str(np.datetime64(t, "s")) + "Z"


def to_epoch(t) -> np.ndarray:
    if isinstance(t, str):
        t = parse_time(t)
    return np.asarray(t, dtype="datetime64[s]").astype(np.int64)


def from_epoch(seconds) -> np.ndarray:
    return np.asarray(seconds, dtype=np.int64).astype("datetime64[s]")


def check_dt(dt) -> int:
    """Validate a time step in seconds; returns it as an int."""
    if not dt > 0:
        raise NonPositiveDt(f"dt must be > 0, got {dt}")
    if dt != int(dt):
        raise NonPositiveDt(f"dt must be a whole number of seconds, got {dt}")
    return int(dt)


@dataclass(frozen=True)
class TcTrackPoint:
    timestamp: np.datetime64
    lat: float
    lon: float
    vmax: float
    rmax: float

    def __post_init__(self):
        if not (-90.0 <= self.lat <= 90.0) or not (-180.0 <= self.lon <= 180.0):
            raise ValueError(f"position out of range: {self.lat}, {self.lon}")
        if not (self.vmax >= 0.0 and math.isfinite(self.vmax)):
            raise ValueError(f"vmax must be >= 0, got {self.vmax}")
        if not (self.rmax > 0.0 and math.isfinite(self.rmax)):
            raise ValueError(f"rmax must be > 0, got {self.rmax}")


class TcTrack:
    """Ordered storm positions and intensities, at least two points."""

    def __init__(self, points):
        points = tuple(points)
        if len(points) < 2:
            raise EmptyTrack(f"a track needs at least 2 points, got {len(points)}")
        times = to_epoch([p.timestamp for p in points])
        bad = np.nonzero(np.diff(times) <= 0)[0]
        if bad.size:
            raise NonMonotonicTime(int(bad[0]) + 1)
        self.points = points
        self.epoch = times
        self.lat = np.array([p.lat for p in points])
        self.lon = np.array([p.lon for p in points])
        self.vmax = np.array([p.vmax for p in points])
        self.rmax = np.array([p.rmax for p in points])

    def __len__(self):
        return len(self.points)

    def __eq__(self, other):
        return isinstance(other, TcTrack) and self.points == other.points

    def __repr__(self):
        return f"TcTrack({len(self)} points, {self.start} .. {self.end})"

    @property
    def timestamps(self) -> np.ndarray:
        return from_epoch(self.epoch)

    @property
    def start(self) -> np.datetime64:
        return self.points[0].timestamp

    @property
    def end(self) -> np.datetime64:
        return self.points[-1].timestamp

    @property
    def duration(self) -> int:
        """Span in seconds."""
        return int(self.epoch[-1] - self.epoch[0])

    def at(self, epoch_seconds):
        """Linearly interpolated (lat, lon, vmax, rmax) arrays at the given epoch seconds.

        Longitudes are unwrapped before interpolation so tracks crossing the
        antimeridian interpolate along the short way round.
        """
        t = np.asarray(epoch_seconds, dtype=np.float64)
        if np.any(t < self.epoch[0]) or np.any(t > self.epoch[-1]):
            raise ValueError("requested time outside the track")
        x = self.epoch.astype(np.float64)
        lon_unwrapped = np.degrees(np.unwrap(np.radians(self.lon)))
        lon = np.interp(t, x, lon_unwrapped)
        lon = (lon + 180.0) % 360.0 - 180.0
        return (
            np.interp(t, x, self.lat),
            lon,
            np.interp(t, x, self.vmax),
            np.interp(t, x, self.rmax),
        )


def parse_track(path) -> TcTrack:
    path = Path(path)
    try:
        handle = path.open(newline="")
    except OSError as exc:
        raise MalformedFile(f"cannot read track file {path}: {exc}") from exc
    with handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None:
            raise EmptyTrack(f"{path} is empty")
        if [h.strip() for h in header] != TRACK_HEADER:
            raise MalformedRow(1, f"expected header {','.join(TRACK_HEADER)}")
        points = []
        last = None
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(TRACK_HEADER):
                raise MalformedRow(line, f"expected {len(TRACK_HEADER)} fields, got {len(row)}")
            if not row[3].strip() or not row[4].strip():
                raise MalformedRow(line, "missing vmax or rmax")
            try:
                stamp = parse_time(row[0])
                point = TcTrackPoint(stamp, *(float(c) for c in row[1:]))
            except ValueError as exc:
                raise MalformedRow(line, str(exc)) from exc
            if last is not None and stamp <= last:
                raise NonMonotonicTime(line)
            last = stamp
            points.append(point)
    if len(points) < 2:
        raise EmptyTrack(f"{path}: need at least 2 track points, got {len(points)}")
    return TcTrack(points)


def write_track(track: TcTrack, path) -> None:
    with Path(path).open("w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(TRACK_HEADER)
        for p in track.points:
            writer.writerow([format_time(p.timestamp), repr(p.lat), repr(p.lon), repr(p.vmax), repr(p.rmax)])


def time_grid(start, end, dt) -> np.ndarray:
    """Epoch seconds start, start+dt, ... <= end, plus end if it is off the grid."""
    dt = check_dt(dt)
    t0, t1 = int(to_epoch(start)), int(to_epoch(end))
    grid = np.arange(t0, t1 + 1, dt, dtype=np.int64)
    if grid[-1] != t1:
        grid = np.append(grid, t1)
    return grid


def interpolate_track(track: TcTrack, dt) -> TcTrack:
    """Resample ``track`` every ``dt`` seconds; the original end point is always kept."""
    grid = time_grid(track.start, track.end, dt)
    lat, lon, vmax, rmax = track.at(grid)
    # Keep the original knot values bit-exact (interp can drift on the unwrapped longitude).
    knots = {int(e): p for e, p in zip(track.epoch, track.points)}
    points = []
    for k, e in enumerate(grid):
        if int(e) in knots:
            points.append(knots[int(e)])
        else:
            points.append(TcTrackPoint(from_epoch(e)[()], float(lat[k]), float(lon[k]), float(vmax[k]), float(rmax[k])))
    return TcTrack(points)
