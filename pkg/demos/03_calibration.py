"""
Fitting regional fragility curves
=================================

Make a synthetic island network and an "observed" outage record from known
regional curves, then recover those curves from the record alone.
"""

from gridstorm import calibrate_regions, calibration_points, generate_wind_fields
from gridstorm.synth import SCENARIO_BBOX, SCENARIO_WINDOW, fiona_like_track, synth_network, synth_observed, truth_table

net = synth_network(936, 7, seed=1)
print(f"{len(net)} feeders in {len(net.regions)} regions, {net.total_load:.0f} MW")

wind = generate_wind_fields(fiona_like_track(), SCENARIO_BBOX, 0.05, 600, time_range=SCENARIO_WINDOW)
truth = truth_table(net.regions)
observed = synth_observed(net, truth, wind, wind.timestamps, noise_pct=0.5, seed=1)

# Each point pairs a region's outage share with its load-weighted running-max gust
points = calibration_points(net, wind, observed)
fitted, residuals = calibrate_regions(points)

print(f"\n{'region':10s} {'lambda':>7s} {'fit':>7s} {'beta':>7s} {'fit':>7s}")
for region in net.regions:
    t, f = truth[region], fitted[region]
    print(f"{region:10s} {t.lam:7.4f} {f.lam:7.4f} {t.beta:7.4f} {f.beta:7.4f}")
