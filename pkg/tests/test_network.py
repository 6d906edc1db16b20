import json
import math

import numpy as np
import pytest

from conftest import constant_series, hourly
from gridstorm.errors import (
    DuplicateFeederId,
    EmptyPoles,
    MalformedFile,
    MissingRegion,
    NonPositiveBeta,
    OutOfBounds,
    UnknownRegion,
)
from gridstorm.network import (
    Feeder,
    FragilityParams,
    Network,
    design_wind_matrix,
    feeder_design_wind,
    parse_fragility,
    parse_network,
    write_fragility,
    write_network,
)
from gridstorm.synth import SCENARIO_BBOX, synth_network
from gridstorm.windfield import (
    BBox,
    StormState,
    WindFieldSeries,
    WindProfileParams,
    cell_centers,
    gust_at,
    holland_profile,
    sustained_wind_at,
)


def test_three_feeder_fixture(data_dir):
    net = parse_network(data_dir / "three_feeder.json")
    assert len(net) == 3
    assert net.regions == ("Ponce", "Caguas")
    assert net.total_load == pytest.approx(12.75)
    assert net.region_loads() == {"Ponce": 6.5, "Caguas": 6.25}
    assert net.region_index().tolist() == [0, 0, 1]


def test_duplicate_feeder_id():
    f = Feeder("F1", "S1", "Ponce", [(18.0, -66.0)], 1.0)
    with pytest.raises(DuplicateFeederId):
        Network([f, Feeder("F1", "S2", "Ponce", [(18.1, -66.1)], 2.0)], ["Ponce"])


def test_unknown_region_and_empty_poles():
    with pytest.raises(UnknownRegion):
        Network([Feeder("F1", "S1", "Nowhere", [(18.0, -66.0)], 1.0)], ["Ponce"])
    with pytest.raises(EmptyPoles):
        Feeder("F1", "S1", "Ponce", [], 1.0)
    with pytest.raises(ValueError):
        Feeder("F1", "S1", "Ponce", [(18.0, -66.0)], -1.0)


def test_poles_outside_bbox(data_dir):
    with pytest.raises(OutOfBounds):
        parse_network(data_dir / "three_feeder.json", bbox=BBox(18.0, 18.1, -67.0, -66.0))


def test_broken_network_file(tmp_path):
    path = tmp_path / "net.json"
    path.write_text(json.dumps({"regions": ["A"], "feeders": [{"id": "F1"}]}))
    with pytest.raises(MalformedFile):
        parse_network(path)
    path.write_text("{not json")
    with pytest.raises(MalformedFile):
        parse_network(path)


def test_synthetic_island_scale():
    net = synth_network(seed=3)
    assert len(net) == 936 and len(net.regions) == 7
    net.check_within(SCENARIO_BBOX)


def test_network_round_trip(tmp_path, data_dir):
    net = parse_network(data_dir / "three_feeder.json")
    write_network(net, tmp_path / "n.json")
    assert parse_network(tmp_path / "n.json") == net


def test_load_curve_steps_and_holds():
    t = hourly(4)
    f = Feeder("F1", "S1", "A", [(18.0, -66.0)], 5.0, [(t[1], 2.0), (t[2], 3.0)])
    net = Network([f], ["A"])
    assert net.load_matrix(t)[:, 0].tolist() == [5.0, 2.0, 3.0, 3.0]


def test_table_rows(data_dir):
    table = parse_fragility(data_dir / "table2.csv")
    assert len(table) == 7
    assert table["Ponce"] == FragilityParams(4.7084, 0.4379)
    assert table["Arecibo"].lam == 5.0150 and table["Arecibo"].beta == 0.8574


def test_zero_beta_row(tmp_path):
    path = tmp_path / "f.csv"
    path.write_text("region,lambda,beta\nPonce,4.7,0\n")
    with pytest.raises(NonPositiveBeta):
        parse_fragility(path)


def test_table_must_cover_network(tmp_path, data_dir):
    path = tmp_path / "f.csv"
    path.write_text("region,lambda,beta\nPonce,4.7084,0.4379\n")
    net = parse_network(data_dir / "three_feeder.json")
    with pytest.raises(MissingRegion):
        parse_fragility(path, net)


def test_median_sanity_range():
    with pytest.raises(ValueError):
        FragilityParams(math.log(5.0), 0.3)
    assert FragilityParams(math.log(5.0), 0.3, check_range=False).lam == math.log(5.0)


def test_fragility_round_trip(tmp_path, data_dir):
    table = parse_fragility(data_dir / "table2.csv")
    write_fragility(table, tmp_path / "t.csv")
    assert dict(parse_fragility(tmp_path / "t.csv")) == dict(table)


def test_single_pole_design_wind_equals_gust():
    bbox = BBox(18.0, 19.0, -67.0, -66.0)
    rng = np.random.default_rng(0)
    series = WindFieldSeries(bbox, 0.25, hourly(1), rng.uniform(0, 40, (1, 4, 4)))
    f = Feeder("F1", "S1", "A", [(18.33, -66.41)], 1.0)
    t = hourly(1)[0]
    assert feeder_design_wind(f, series, t) == gust_at(series, 18.33, -66.41, t)


def test_design_wind_is_max_over_poles():
    bbox = BBox(18.0, 19.0, -67.0, -66.0)
    raster = np.array([[20.0, 35.0], [20.0, 35.0]]) / 1.49
    series = WindFieldSeries(bbox, 0.5, hourly(1), raster[None])
    f = Feeder("F1", "S1", "A", [(18.25, -66.75), (18.25, -66.25)], 1.0)
    assert feeder_design_wind(f, series, hourly(1)[0]) == pytest.approx(35.0, rel=1e-12)


def test_straddling_feeder_sees_more_wind():
    storm_lat, storm_lon, vmax, rmax = 18.0, -66.5, 40.0, 20.0
    bbox = BBox(17.5, 18.9, -67.2, -65.8)
    cell = 0.01
    lats, lons = cell_centers(bbox, cell)
    glat, glon = np.meshgrid(lats, lons, indexing="ij")
    storm = StormState(storm_lat, storm_lon, vmax, rmax)
    series = WindFieldSeries(bbox, cell, hourly(1), sustained_wind_at(glat, glon, storm)[None])
    dlat = 1.0 / 111.19  # about 1 km of latitude
    straddle = Feeder("S", "S1", "A", [(storm_lat + k * dlat, storm_lon) for k in (10, 20, 30)], 1.0)
    outside = Feeder("O", "S1", "A", [(storm_lat + k * dlat, storm_lon) for k in (50, 60, 70)], 1.0)
    t = hourly(1)[0]
    ws, wo = feeder_design_wind(straddle, series, t), feeder_design_wind(outside, series, t)
    assert ws >= wo
    # beyond rmax the profile decays, so the outer feeder's nearest pole bounds it
    near_outer = holland_profile(50.0, vmax, rmax, WindProfileParams()) * 1.49
    assert wo == pytest.approx(near_outer, rel=0.02)


def test_design_matrix_matches_per_feeder(data_dir):
    net = parse_network(data_dir / "three_feeder.json")
    times = hourly(3)
    rng = np.random.default_rng(1)
    bbox = BBox(17.0, 19.0, -68.0, -65.0)
    series = WindFieldSeries(bbox, 0.5, times, rng.uniform(0, 50, (3, 4, 6)))
    m = design_wind_matrix(net, series, times)
    expected = [[feeder_design_wind(f, series, t) for f in net.feeders] for t in times]
    np.testing.assert_array_equal(m, expected)


def test_constant_series_design_wind(data_dir):
    net = parse_network(data_dir / "three_feeder.json")
    times = hourly(2)
    m = design_wind_matrix(net, constant_series([10.0, 20.0], times), times)
    np.testing.assert_allclose(m, [[14.9] * 3, [29.8] * 3], rtol=1e-12)
