"""``gridstorm`` command line: wind fields, simulation, comparison, calibration, fixtures.

Exit codes: 0 success, 2 usage error, 3 bad input data, 4 internal error.
Every command leaves a ``*run_manifest.json`` next to its outputs; ``gridstorm
replay <manifest>`` re-runs the recorded command.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
import traceback
from pathlib import Path

from . import __version__
from .analytics import (
    TOTAL,
    calibrate_regions,
    calibration_points,
    compare,
    parse_observed,
    resolution_sweep,
    write_observed,
    write_resolution_csv,
)
from .engine import SimulationConfig, export_ensemble, load_ensemble, simulate
from .errors import InputError, MalformedFile
from .network import parse_fragility, parse_network, write_fragility, write_network
from .synth import (
    SCENARIO_BBOX,
    SCENARIO_WINDOW,
    SYSTEM_LOAD_MW,
    fiona_like_track,
    synth_network,
    synth_observed,
    truth_table,
)
from .track import parse_time, parse_track, write_track
from .windfield import (
    BBox,
    WindProfileParams,
    export_wind_fields,
    generate_wind_fields,
    load_wind_fields,
)

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_INTERNAL = 0, 2, 3, 4

# Every numeric default of the config schema lives here.
DEFAULTS = {
    "n_runs": 10000,
    "dt": 600,
    "method": "hrsra",
    "master_seed": 0,
    "cell_size": 0.05,
    "gust_factor": 1.49,
    "shape_b": 1.3,
    "asym_alpha": 0.55,
    "asym_theta": 20.0,
    "threads": 1,
    "by_region": False,
    "keep_status": False,
}


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _digest_inputs(paths):
    out = {}
    for p in paths:
        p = Path(p)
        if p.is_file():
            out[str(p)] = sha256(p)
        elif p.is_dir():
            for f in sorted(p.iterdir()):
                if f.is_file():
                    out[str(f)] = sha256(f)
    return out


def write_manifest(path, args, config, inputs, outputs, seed, started):
    manifest = {
        "command": args.command,
        "argv": args.argv,
        "cwd": os.getcwd(),
        "config": config,
        "inputs": _digest_inputs(inputs),
        "outputs": _digest_inputs(outputs),
        "master_seed": seed,
        "tool_version": __version__,
        "wall_clock_s": round(time.perf_counter() - started, 3),
    }
    Path(path).write_text(json.dumps(manifest, indent=2, default=str) + "\n")
    return manifest


def load_config(path) -> dict:
    path = Path(path)
    try:
        text = path.read_bytes()
    except OSError as exc:
        raise MalformedFile(f"cannot read config {path}: {exc}") from exc
    try:
        data = tomllib.loads(text.decode()) if path.suffix == ".toml" else json.loads(text)
    except (ValueError, UnicodeDecodeError) as exc:
        raise MalformedFile(f"cannot parse config {path}: {exc}") from exc
    base = path.resolve().parent
    for key in ("network", "fragility", "track", "windfield", "observed"):
        if key in data:
            data[key] = str((base / data[key]).resolve())
    return {**DEFAULTS, **data}


def _wind_params(cfg):
    return WindProfileParams(cfg["shape_b"], cfg["asym_alpha"], cfg["asym_theta"])


def _bbox(value):
    if isinstance(value, str):
        return BBox.parse(value)
    if isinstance(value, dict):
        return BBox(**value).validate()
    return BBox(*value).validate()


def _time_range(cfg):
    if "time_range" not in cfg:
        raise InputError("config needs time_range = [start, end]")
    return tuple(parse_time(t) for t in cfg["time_range"])


def _apply_overrides(cfg, args):
    for flag, key in (("method", "method"), ("seed", "master_seed"), ("dt", "dt"),
                      ("threads", "threads"), ("runs", "n_runs"), ("by_region", "by_region")):
        value = getattr(args, flag, None)
        if value is not None:
            cfg[key] = value
    return cfg


def _wind_for(cfg, dt):
    if cfg.get("windfield"):
        return load_wind_fields(cfg["windfield"])
    if not cfg.get("track") or "bbox" not in cfg:
        raise InputError("config needs either 'windfield' or both 'track' and 'bbox'")
    return generate_wind_fields(parse_track(cfg["track"]), _bbox(cfg["bbox"]), cfg["cell_size"], dt,
                                _wind_params(cfg), time_range=_time_range(cfg),
                                gust_factor=cfg["gust_factor"])


def _sim_config(cfg):
    return SimulationConfig(n_runs=cfg["n_runs"], dt=cfg["dt"], time_range=_time_range(cfg),
                            method=cfg["method"], master_seed=cfg["master_seed"],
                            keep_status=cfg["keep_status"])


def cmd_windfield(args):
    started = time.perf_counter()
    cfg = load_config(args.config) if args.config else dict(DEFAULTS)
    track_path = args.track or cfg.get("track")
    bbox = args.bbox or cfg.get("bbox")
    if not track_path or bbox is None:
        raise InputError("windfield needs --track and --bbox (or a config providing them)")
    for key in ("cell_size", "dt", "shape_b", "asym_alpha", "asym_theta", "gust_factor"):
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    start = args.start or (cfg.get("time_range") or [None])[0]
    end = args.end or (cfg.get("time_range") or [None, None])[1]
    window = (parse_time(start), parse_time(end)) if start and end else None
    track = parse_track(track_path)
    series = generate_wind_fields(track, _bbox(bbox), cfg["cell_size"], cfg["dt"], _wind_params(cfg),
                                  time_range=window, gust_factor=cfg["gust_factor"])
    out = Path(args.out)
    export_wind_fields(series, out)
    echo = {k: cfg[k] for k in ("cell_size", "dt", "shape_b", "asym_alpha", "asym_theta", "gust_factor")}
    echo.update(track=str(track_path), bbox=list(_bbox(bbox)),
                time_range=[start, end] if window else None)
    write_manifest(out / "run_manifest.json", args, echo, [track_path], [out / "manifest.json"], None, started)
    print(f"wrote {series.timestamps.size} wind rasters to {out}")


def cmd_simulate(args):
    started = time.perf_counter()
    cfg = _apply_overrides(load_config(args.config), args)
    sim = _sim_config(cfg)
    network = parse_network(cfg["network"])
    table = parse_fragility(cfg["fragility"])
    wind = _wind_for(cfg, sim.dt)
    ens = simulate(network, table, wind, sim, threads=int(cfg["threads"]))
    out = Path(args.out or cfg.get("out", "."))
    paths = export_ensemble(ens, out, by_region=bool(cfg["by_region"]))
    inputs = [cfg[k] for k in ("network", "fragility", "track", "windfield") if cfg.get(k)]
    echo = {**{k: v for k, v in cfg.items() if k != "threads"}, **sim.to_dict()}
    write_manifest(out / "run_manifest.json", args, echo, inputs, list(paths.values()), sim.master_seed, started)
    print(f"{sim.method}: {sim.n_runs} runs, mean final p_fail "
          f"{ens.p_fail[:, -1].mean():.4f}% -> {paths['ensemble']}")


def cmd_compare(args):
    started = time.perf_counter()
    observed = parse_observed(args.observed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary, written, used = {}, [], {}
    for path in args.ensemble:
        ens = load_ensemble(path)
        stem = ens.method if ens.method not in used else f"{ens.method}_{used[ens.method]}"
        used[ens.method] = used.get(ens.method, 0) + 1
        report = compare(ens, observed)
        written += list(report.write(out, stem).values())
        summary[stem] = {"ensemble": str(path), "avg_rmse": report.avg_rmse,
                         "per_region": {r: v["avg_rmse"] for r, v in report.per_region.items()}}
    (out / "comparison.json").write_text(json.dumps(summary, indent=2) + "\n")
    write_manifest(out / "run_manifest.json", args, {"ensembles": args.ensemble, "observed": args.observed},
                   [args.observed] + list(args.ensemble), written, None, started)
    for stem, item in summary.items():
        print(f"{stem}: avg RMSE {item['avg_rmse']}")


def cmd_calibrate(args):
    started = time.perf_counter()
    observed = parse_observed(args.observed)
    wind = load_wind_fields(args.windfield)
    network = parse_network(args.network)
    points = calibration_points(network, wind, observed, scope=args.scope)
    table, residuals = calibrate_regions(points)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_fragility(table, out)
    write_manifest(out.with_name(out.stem + ".run_manifest.json"), args,
                   {"scope": args.scope, "residuals": residuals},
                   [args.observed, args.windfield, args.network], [out], None, started)
    for region, p in table.items():
        print(f"{region}: lambda={p.lam:.4f} beta={p.beta:.4f} residual={residuals[region]:.3g}")


def cmd_synth(args):
    started = time.perf_counter()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    network = synth_network(args.feeders, args.regions, args.total_load, args.seed)
    track = fiona_like_track()
    window = tuple(parse_time(t) for t in SCENARIO_WINDOW)
    wind = generate_wind_fields(track, SCENARIO_BBOX, DEFAULTS["cell_size"], 600, time_range=window)
    truth = truth_table(network.regions)
    observed = synth_observed(network, truth, wind, wind.timestamps, args.noise, args.seed)
    files = {
        "network": out / "network.json",
        "track": out / "track.csv",
        "fragility": out / "fragility_truth.csv",
        "observed": out / "observed.csv",
        "config": out / "simulate.json",
    }
    write_network(network, files["network"])
    write_track(track, files["track"])
    write_fragility(truth, files["fragility"])
    write_observed(observed, files["observed"])
    config = {"network": "network.json", "fragility": "fragility_truth.csv", "track": "track.csv",
              "bbox": list(SCENARIO_BBOX), "time_range": list(SCENARIO_WINDOW),
              "n_runs": DEFAULTS["n_runs"], "dt": 600, "method": "hrsra", "master_seed": args.seed}
    files["config"].write_text(json.dumps(config, indent=2) + "\n")
    write_manifest(out / "run_manifest.json", args, vars_echo(args), [], list(files.values()), args.seed, started)
    print(f"wrote {len(network)} feeders in {len(network.regions)} regions "
          f"({network.total_load:.1f} MW) to {out}")


def cmd_sweep(args):
    started = time.perf_counter()
    cfg = _apply_overrides(load_config(args.config), args)
    sim = _sim_config(cfg)
    if not cfg.get("track") or "bbox" not in cfg:
        raise InputError("sweep needs 'track' and 'bbox' in the config")
    network = parse_network(cfg["network"])
    table = parse_fragility(cfg["fragility"])
    observed = parse_observed(args.observed)
    region = args.region or TOTAL
    if region not in observed:
        raise InputError(f"observed file has no {region!r} series")
    dts = [int(x) for x in args.dts.split(",")]
    result = resolution_sweep(network, table, parse_track(cfg["track"]), sim, dts, observed[region],
                              bbox=_bbox(cfg["bbox"]), cell_size=cfg["cell_size"], params=_wind_params(cfg),
                              threads=int(cfg["threads"]), region=None if region == TOTAL else region)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_resolution_csv(result, out / "resolution.csv")
    write_manifest(out / "run_manifest.json", args, {**cfg, "dts": dts, "region": region},
                   [cfg["network"], cfg["fragility"], cfg["track"], args.observed],
                   [out / "resolution.csv"], sim.master_seed, started)
    for (method, dt), value in sorted(result.items()):
        print(f"{method:6s} dt={dt:5d}s avg RMSE {value:.4f}")


def cmd_replay(args):
    try:
        manifest = json.loads(Path(args.manifest).read_text())
        argv, cwd = manifest["argv"], manifest["cwd"]
    except (OSError, KeyError, ValueError) as exc:
        raise MalformedFile(f"cannot read run manifest {args.manifest}: {exc}") from exc
    previous = os.getcwd()
    os.chdir(cwd)
    try:
        return main(argv)
    finally:
        os.chdir(previous)


def vars_echo(args):
    return {k: v for k, v in vars(args).items() if k not in ("func", "argv")}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gridstorm", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("windfield", help="generate and export a gust wind-field series")
    p.add_argument("--config")
    p.add_argument("--track")
    p.add_argument("--bbox", help="south,north,west,east in degrees")
    p.add_argument("--cell-size", dest="cell_size", type=float)
    p.add_argument("--dt", type=int)
    p.add_argument("--start")
    p.add_argument("--end")
    p.add_argument("--shape-b", dest="shape_b", type=float)
    p.add_argument("--asym-alpha", dest="asym_alpha", type=float)
    p.add_argument("--asym-theta", dest="asym_theta", type=float)
    p.add_argument("--gust-factor", dest="gust_factor", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_windfield)

    p = sub.add_parser("simulate", help="run the Monte Carlo outage simulation")
    p.add_argument("--config", required=True)
    p.add_argument("--method", choices=("hrsra", "smc"))
    p.add_argument("--seed", type=int)
    p.add_argument("--dt", type=int)
    p.add_argument("--runs", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--by-region", dest="by_region", action="store_const", const=True,
                   help="also write per-region trajectories")
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="compare ensembles with observed outages")
    p.add_argument("--ensemble", action="append", required=True, help="ensemble directory (repeatable)")
    p.add_argument("--observed", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("calibrate", help="fit regional fragility curves to observed outages")
    p.add_argument("--observed", required=True)
    p.add_argument("--windfield", required=True)
    p.add_argument("--network", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--scope", choices=("region", "total"), default="region")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("synth", help="write synthetic network, track and observed fixtures")
    p.add_argument("--out", required=True)
    p.add_argument("--feeders", type=int, default=936)
    p.add_argument("--regions", type=int, default=7)
    p.add_argument("--total-load", dest="total_load", type=float, default=SYSTEM_LOAD_MW)
    p.add_argument("--noise", type=float, default=0.0, help="observation noise, percentage points")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("sweep", help="average RMSE of both methods across time steps")
    p.add_argument("--config", required=True)
    p.add_argument("--observed", required=True)
    p.add_argument("--dts", default="600,3600,7200")
    p.add_argument("--region")
    p.add_argument("--seed", type=int)
    p.add_argument("--runs", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("replay", help="re-run the command recorded in a run manifest")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args.argv = argv
    try:
        result = args.func(args)
    except (InputError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception:  # noqa: BLE001
        traceback.print_exc()
        return EXIT_INTERNAL
    return result if isinstance(result, int) else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
