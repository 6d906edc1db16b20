"""
Gust wind field of a passing hurricane
======================================

Build a parametric wind field from a four-fix track, then look at how the
gust at a few towns rises and falls as the storm moves past.
"""

import numpy as np

from gridstorm import BBox, generate_wind_fields, gust_at
from gridstorm.synth import SCENARIO_BBOX, SCENARIO_WINDOW, fiona_like_track

track = fiona_like_track()
print(f"track: {len(track)} fixes, peak vmax {track.vmax.max()} m/s")

# 10-minute rasters on a 0.05 degree grid over the island
wind = generate_wind_fields(track, SCENARIO_BBOX, cell_size=0.05, dt=600, time_range=SCENARIO_WINDOW)
print(wind)

# Gust is the sustained wind times 1.49 in every cell
assert np.array_equal(wind.gust, 1.49 * wind.sustained)

towns = {"Ponce": (18.01, -66.61), "Mayaguez": (18.20, -67.14), "San Juan": (18.44, -66.06)}
print("\nhour  " + "  ".join(f"{name:>9s}" for name in towns))
for t in wind.timestamps[::12]:
    row = [gust_at(wind, lat, lon, t) for lat, lon in towns.values()]
    print(f"{str(t)[11:16]}  " + "  ".join(f"{g:9.1f}" for g in row))

# Where the strongest gust of the event landed
peak = wind.gust.max(axis=0)
k = np.unravel_index(peak.argmax(), peak.shape)
print(f"\nstrongest gust {peak.max():.1f} m/s at ({wind.lats[k[0]]:.3f}, {wind.lons[k[1]]:.3f})")
