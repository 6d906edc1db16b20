import json
import subprocess
import sys

import numpy as np
import pytest
from scipy.special import ndtr

import gridstorm
from conftest import hourly
from gridstorm.analytics import TOTAL, ObservedOutageSeries, parse_observed, write_observed
from gridstorm.cli import EXIT_INPUT, EXIT_OK, EXIT_USAGE, main
from gridstorm.engine import load_ensemble
from gridstorm.network import MS_TO_MPH, Feeder, Network, parse_fragility, parse_network, write_network
from gridstorm.windfield import BBox, WindFieldSeries, export_wind_fields


@pytest.fixture
def three_config(tmp_path, data_dir):
    cfg = {
        "network": str(data_dir / "three_feeder.json"),
        "fragility": str(data_dir / "table2.csv"),
        "track": str(data_dir / "fiona_like.csv"),
        "bbox": [17.85, 18.60, -67.35, -65.50],
        "time_range": ["2022-09-18T00:00:00Z", "2022-09-18T16:00:00Z"],
        "n_runs": 100,
        "dt": 3600,
        "master_seed": 17,
        "cell_size": 0.1,
    }
    path = tmp_path / "sim.json"
    path.write_text(json.dumps(cfg))
    return path


def test_simulate_both_methods(tmp_path, three_config):
    assert main(["simulate", "--config", str(three_config), "--out", str(tmp_path / "h")]) == EXIT_OK
    assert main(["simulate", "--config", str(three_config), "--method", "smc",
                 "--out", str(tmp_path / "s")]) == EXIT_OK
    h, s = load_ensemble(tmp_path / "h"), load_ensemble(tmp_path / "s")
    assert h.p_fail.shape == s.p_fail.shape == (100, 17)
    assert np.all(np.diff(h.p_fail, axis=1) >= 0)
    assert (h.method, s.method) == ("hrsra", "smc")
    head = (tmp_path / "h" / "ensemble.csv").read_text().splitlines()[0]
    assert head == (tmp_path / "s" / "ensemble.csv").read_text().splitlines()[0] == "run,timestamp,p_fail_pct"
    manifest = json.loads((tmp_path / "h" / "run_manifest.json").read_text())
    assert manifest["master_seed"] == 17 and manifest["command"] == "simulate"
    assert any(k.endswith("ensemble.csv") for k in manifest["outputs"])


def test_simulate_by_region_and_toml(tmp_path, three_config):
    cfg = json.loads(three_config.read_text())
    lines = [f'{k} = {json.dumps(v)}' for k, v in cfg.items()]
    toml = tmp_path / "sim.toml"
    toml.write_text("\n".join(lines) + "\n")
    assert main(["simulate", "--config", str(toml), "--by-region", "--seed", "3",
                 "--out", str(tmp_path / "r")]) == EXIT_OK
    header = (tmp_path / "r" / "regions.csv").read_text().splitlines()[0]
    assert header == "run,timestamp,Ponce,Caguas"
    assert load_ensemble(tmp_path / "r").master_seed == 3


def test_replay_is_byte_identical(tmp_path, three_config):
    out = tmp_path / "h"
    assert main(["simulate", "--config", str(three_config), "--out", str(out)]) == EXIT_OK
    first = (out / "ensemble.csv").read_bytes()
    (out / "ensemble.csv").unlink()
    assert main(["replay", str(out / "run_manifest.json")]) == EXIT_OK
    assert (out / "ensemble.csv").read_bytes() == first


def test_windfield_command(tmp_path, data_dir):
    args = ["windfield", "--track", str(data_dir / "fiona_like.csv"), "--bbox", "17.85,18.60,-67.35,-65.50",
            "--dt", "600", "--start", "2022-09-18T00:00:00Z", "--end", "2022-09-18T16:00:00Z"]
    assert main(args + ["--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(args + ["--out", str(tmp_path / "b")]) == EXIT_OK
    rasters = sorted((tmp_path / "a").glob("step_*.csv"))
    assert len(rasters) == 97
    for f in rasters + [tmp_path / "a" / "manifest.json"]:
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_missing_track_is_input_error(tmp_path, capsys):
    code = main(["windfield", "--track", str(tmp_path / "nope.csv"), "--bbox", "17,19,-68,-65",
                 "--out", str(tmp_path / "w")])
    assert code == EXIT_INPUT
    assert "MalformedFile" in capsys.readouterr().err


def test_usage_error():
    assert main(["simulate"]) == EXIT_USAGE
    assert main(["bogus"]) == EXIT_USAGE


def test_compare_command(tmp_path, three_config):
    for method in ("hrsra", "smc"):
        assert main(["simulate", "--config", str(three_config), "--method", method,
                     "--out", str(tmp_path / method)]) == EXIT_OK
    h = load_ensemble(tmp_path / "hrsra")
    write_observed({TOTAL: ObservedOutageSeries(TOTAL, h.timestamps, h.p_fail.mean(axis=0))},
                   tmp_path / "obs.csv")
    assert main(["compare", "--ensemble", str(tmp_path / "hrsra"), "--ensemble", str(tmp_path / "smc"),
                 "--observed", str(tmp_path / "obs.csv"), "--out", str(tmp_path / "cmp")]) == EXIT_OK
    summary = json.loads((tmp_path / "cmp" / "comparison.json").read_text())
    assert set(summary) == {"hrsra", "smc"}
    assert all(v["avg_rmse"] is not None for v in summary.values())
    for method in ("hrsra", "smc"):
        rows = np.loadtxt(tmp_path / "cmp" / f"{method}_bands.csv", delimiter=",", skiprows=1,
                          usecols=(1, 2, 3))
        assert np.all(rows[:, 1] <= rows[:, 0]) and np.all(rows[:, 0] <= rows[:, 2])


def test_compare_timestamp_mismatch(tmp_path, three_config):
    assert main(["simulate", "--config", str(three_config), "--out", str(tmp_path / "h")]) == EXIT_OK
    later = hourly(3, start="2022-09-19T00:00:00")
    write_observed({TOTAL: ObservedOutageSeries(TOTAL, later, [0.0, 1.0, 2.0])}, tmp_path / "obs.csv")
    code = main(["compare", "--ensemble", str(tmp_path / "h"), "--observed", str(tmp_path / "obs.csv"),
                 "--out", str(tmp_path / "cmp")])
    assert code == EXIT_INPUT


def san_juan_inputs(tmp_path, n_levels):
    """One-feeder network under a uniform wind that ramps through the fragility curve."""
    lam, beta = 4.4443, 0.4226
    z = np.linspace(-2.0537, 2.0537, n_levels)
    gust_mph = np.exp(lam + beta * z)
    times = hourly(n_levels)
    bbox = BBox(18.0, 18.5, -66.5, -66.0)
    sustained = (gust_mph / MS_TO_MPH / 1.49)[:, None, None] * np.ones((1, 5, 5))
    export_wind_fields(WindFieldSeries(bbox, 0.1, times, sustained), tmp_path / "wind")
    net = Network([Feeder("SJ-F1", "SJ-S1", "San Juan", [(18.2, -66.2), (18.3, -66.3)], 5.0)], ["San Juan"])
    write_network(net, tmp_path / "net.json")
    write_observed({"San Juan": ObservedOutageSeries("San Juan", times, 100.0 * ndtr(z))}, tmp_path / "obs.csv")
    return lam, beta


def test_calibrate_recovers_san_juan(tmp_path):
    lam, beta = san_juan_inputs(tmp_path, 20)
    out = tmp_path / "fit" / "fragility.csv"
    assert main(["calibrate", "--observed", str(tmp_path / "obs.csv"), "--windfield", str(tmp_path / "wind"),
                 "--network", str(tmp_path / "net.json"), "--out", str(out)]) == EXIT_OK
    table = parse_fragility(out)
    assert abs(table["San Juan"].lam - lam) <= 0.01 and abs(table["San Juan"].beta - beta) <= 0.02
    assert (tmp_path / "fit" / "fragility.run_manifest.json").exists()


def test_calibrate_insufficient_points(tmp_path, capsys):
    san_juan_inputs(tmp_path, 2)
    code = main(["calibrate", "--observed", str(tmp_path / "obs.csv"), "--windfield", str(tmp_path / "wind"),
                 "--network", str(tmp_path / "net.json"), "--out", str(tmp_path / "f.csv")])
    assert code == EXIT_INPUT
    assert "InsufficientPoints" in capsys.readouterr().err


def test_synth_command(tmp_path):
    args = ["synth", "--feeders", "60", "--regions", "4", "--total-load", "500", "--seed", "9"]
    assert main(args + ["--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(args + ["--out", str(tmp_path / "b")]) == EXIT_OK
    net = parse_network(tmp_path / "a" / "network.json")
    assert len(net) == 60 and len(net.regions) == 4
    assert net.total_load == pytest.approx(500.0, rel=1e-12)
    for name in ("network.json", "track.csv", "fragility_truth.csv", "observed.csv", "simulate.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    observed = parse_observed(tmp_path / "a" / "observed.csv")
    assert set(observed) == set(net.regions) | {TOTAL}
    assert observed[TOTAL].timestamps.size == 97


def test_synth_then_simulate_and_sweep(tmp_path):
    assert main(["synth", "--feeders", "40", "--regions", "2", "--out", str(tmp_path)]) == EXIT_OK
    cfg = tmp_path / "simulate.json"
    assert main(["simulate", "--config", str(cfg), "--runs", "50", "--dt", "3600",
                 "--out", str(tmp_path / "ens")]) == EXIT_OK
    assert load_ensemble(tmp_path / "ens").p_fail.shape == (50, 17)
    assert main(["sweep", "--config", str(cfg), "--observed", str(tmp_path / "observed.csv"), "--runs", "50",
                 "--dts", "3600,7200", "--out", str(tmp_path / "sweep")]) == EXIT_OK
    rows = (tmp_path / "sweep" / "resolution.csv").read_text().splitlines()
    assert rows[0] == "method,dt_s,avg_rmse" and len(rows) == 5


def test_sweep_rejects_non_dividing_dt(tmp_path):
    assert main(["synth", "--feeders", "20", "--regions", "1", "--out", str(tmp_path)]) == EXIT_OK
    code = main(["sweep", "--config", str(tmp_path / "simulate.json"), "--observed",
                 str(tmp_path / "observed.csv"), "--runs", "10", "--dts", "7000", "--out", str(tmp_path / "s")])
    assert code == EXIT_INPUT


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "gridstorm.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.strip() == gridstorm.__version__
