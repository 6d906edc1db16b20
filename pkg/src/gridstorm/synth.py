"""Synthetic Puerto-Rico-scale fixtures: feeder network, storm track, observed outages.

Nothing here is real utility data. Regions are placed at rough island
locations, feeders cluster around substations, loads are log-normal and
rescaled to a configured system total, and the "observed" outage series is
the expected outage under resistance sampling with a chosen truth table.
"""

from __future__ import annotations

import numpy as np

from .analytics import TOTAL, ObservedOutageSeries
from .engine import fragility_prob
from .network import MS_TO_MPH, Feeder, FragilityParams, Network, RegionFragilityTable, design_wind_matrix
from .track import TcTrack, TcTrackPoint, parse_time
from .windfield import BBox

# name: (lat, lon, spread_deg, share of feeders)
REGIONS = {
    "Ponce": (18.04, -66.58, 0.08, 0.15),
    "Mayaguez": (18.17, -67.08, 0.07, 0.13),
    "Arecibo": (18.38, -66.68, 0.08, 0.14),
    "Bayamon": (18.36, -66.20, 0.05, 0.15),
    "Carolina": (18.36, -65.92, 0.06, 0.13),
    "Caguas": (18.18, -66.04, 0.08, 0.13),
    "San Juan": (18.42, -66.07, 0.03, 0.17),
}

# Regional fragility (lambda in log-mph, beta) used as ground truth for synthetic observations.
REGION_FRAGILITY = {
    "Ponce": (4.7084, 0.4379),
    "Mayaguez": (4.4057, 0.2061),
    "Caguas": (4.1715, 0.2217),
    "Arecibo": (5.0150, 0.8574),
    "Bayamon": (4.4308, 0.3012),
    "Carolina": (4.2666, 0.2947),
    "San Juan": (4.4443, 0.4226),
}

ISLAND = BBox(17.92, 18.52, -67.27, -65.60)
SCENARIO_BBOX = BBox(17.85, 18.60, -67.35, -65.50)
SCENARIO_WINDOW = ("2022-09-18T00:00:00Z", "2022-09-18T16:00:00Z")
SYSTEM_LOAD_MW = 2751.0
FEEDERS_PER_SUBSTATION = 936 / 296

_FIONA_LIKE = [
    ("2022-09-18T00:00:00Z", 15.90, -63.70, 33.4, 25.0),
    ("2022-09-18T06:00:00Z", 16.50, -64.70, 36.0, 22.0),
    ("2022-09-18T12:00:00Z", 17.10, -65.80, 38.6, 20.0),
    ("2022-09-18T18:00:00Z", 17.80, -66.95, 38.6, 20.0),
]


def fiona_like_track() -> TcTrack:
    """Four 6-hourly fixes of a hurricane tracking northwest past the island's south coast."""
    return TcTrack(TcTrackPoint(parse_time(t), *vals) for t, *vals in _FIONA_LIKE)


def truth_table(regions=None) -> RegionFragilityTable:
    regions = list(REGION_FRAGILITY) if regions is None else regions
    return RegionFragilityTable({r: FragilityParams(*REGION_FRAGILITY[r]) for r in regions})


def synth_network(n_feeders=936, n_regions=7, total_load=SYSTEM_LOAD_MW, seed=0,
                  poles=(4, 12), length_km=(2.0, 8.0)) -> Network:
    if not 1 <= n_regions <= len(REGIONS):
        raise ValueError(f"n_regions must be between 1 and {len(REGIONS)}")
    if n_feeders < n_regions:
        raise ValueError("need at least one feeder per region")
    rng = np.random.default_rng(seed)
    names = list(REGIONS)[:n_regions]
    share = np.array([REGIONS[r][3] for r in names])
    counts = np.maximum(1, np.floor(share / share.sum() * n_feeders).astype(int))
    counts[np.argmax(counts)] += n_feeders - counts.sum()

    feeders = []
    for region, n in zip(names, counts):
        lat0, lon0, spread, _ = REGIONS[region]
        n_sub = max(1, round(n / FEEDERS_PER_SUBSTATION))
        subs = np.column_stack([rng.normal(lat0, spread, n_sub), rng.normal(lon0, spread, n_sub)])
        subs[:, 0] = subs[:, 0].clip(ISLAND.south, ISLAND.north)
        subs[:, 1] = subs[:, 1].clip(ISLAND.west, ISLAND.east)
        owner = np.concatenate([np.arange(min(n, n_sub)), rng.integers(0, n_sub, max(0, n - n_sub))])
        for k in range(n):
            s = owner[k]
            n_poles = int(rng.integers(poles[0], poles[1] + 1))
            heading = rng.uniform(0, 2 * np.pi)
            dist = np.linspace(0.2, rng.uniform(*length_km), n_poles) / 111.0
            lat = subs[s, 0] + dist * np.cos(heading) + rng.normal(0, 0.002, n_poles)
            lon = subs[s, 1] + dist * np.sin(heading) / np.cos(np.radians(subs[s, 0])) + rng.normal(0, 0.002, n_poles)
            pts = np.column_stack([lat.clip(ISLAND.south, ISLAND.north), lon.clip(ISLAND.west, ISLAND.east)])
            slug = region.replace(" ", "")[:3].upper()
            feeders.append((f"{slug}-F{k + 1:04d}", f"{slug}-S{s + 1:03d}", region,
                            [tuple(p) for p in pts.round(6).tolist()]))

    raw = rng.lognormal(0.0, 0.6, len(feeders))
    loads = raw * (total_load / raw.sum())
    return Network([Feeder(fid, sid, reg, pts, float(ld)) for (fid, sid, reg, pts), ld in zip(feeders, loads)],
                   names)


def expected_outage(network: Network, table, wind, times) -> dict:
    """Expected failed-load share (%) by region and in total, under resistance sampling."""
    lam, beta = table.per_feeder(network)
    design = np.maximum.accumulate(design_wind_matrix(network, wind, times) * MS_TO_MPH, axis=0)
    failed = fragility_prob(design, lam=lam, beta=beta) * network.loads
    out = {}
    idx = network.region_index()
    for k, region in enumerate(network.regions):
        mask = idx == k
        denom = network.loads[mask].sum()
        out[region] = 100.0 * failed[:, mask].sum(axis=1) / denom if denom > 0 else np.zeros(len(times))
    out[TOTAL] = 100.0 * failed.sum(axis=1) / network.loads.sum()
    return out


def synth_observed(network: Network, table, wind, times, noise_pct=0.0, seed=0) -> dict:
    """Observed-outage series per region plus ``total``.

    ``noise_pct`` adds independent Gaussian noise in percentage points,
    clipped to [0, 100].
    """
    rng = np.random.default_rng(seed)
    out = {}
    for region, values in expected_outage(network, table, wind, times).items():
        if noise_pct > 0:
            values = np.clip(values + rng.normal(0.0, noise_pct, values.shape), 0.0, 100.0)
        out[region] = ObservedOutageSeries(region, times, np.clip(values, 0.0, 100.0))
    return out
