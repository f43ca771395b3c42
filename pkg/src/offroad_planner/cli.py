"""Command-line entry points: planner serve / planner plan, bench run."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import bench as bench_mod
from . import synth
from .geomap import (IntermediateMap, load_geojson_features, load_map_cache,
                     rasterize_features, save_map_cache)
from .pipeline import MODE_TRAIL_PREFERRED, PlanContext, PlanRequest
from .service import create_app
from .trails import TrailNetwork


def _setup_logging():
    level = os.environ.get("PLANNER_LOG", "INFO").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")


def _load_map(map_arg: str, trails_path: str | None) -> IntermediateMap:
    if map_arg == "demo":
        imap = synth.demo_map()
    else:
        imap = load_map_cache(map_arg)
    if trails_path:
        feats = load_geojson_features(trails_path)
        imap = rasterize_features(imap, feats)
    return imap


def _cmd_serve(args) -> int:
    import uvicorn

    imap = _load_map(args.map, args.trails)
    context = PlanContext(imap, TrailNetwork(imap, args.df))
    app = create_app(context, map_id=args.map_id, plan_timeout_s=args.timeout,
                     state_dir=args.state_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def _cmd_plan(args) -> int:
    imap = _load_map(args.map, args.trails)
    context = PlanContext(imap, TrailNetwork(imap, args.df))
    lon_s, lat_s = (float(v) for v in args.start.split(","))
    lon_t, lat_t = (float(v) for v in args.target.split(","))
    request = PlanRequest(start=(lon_s, lat_s, 0.0), target=(lon_t, lat_t, 0.0),
                          mode=args.mode, planner=args.planner)
    result = context.plan(request)
    doc = result.to_geojson()
    out = Path(args.out)
    with open(out, "w") as f:
        json.dump(doc, f, indent=2)
    t = result.metrics
    print(f"planned {t.length_m:.1f} m in {t.timings_ms['total']:.0f} ms "
          f"(mode={result.mode_used}); wrote {out}")
    return 0


def _cmd_make_demo(args) -> int:
    imap = synth.demo_map()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_map_cache(imap, out / "demo_map.bin")
    print(f"wrote {out / 'demo_map.bin'} ({imap.width}x{imap.height})")
    return 0


def main(argv=None) -> int:
    _setup_logging()
    parser = argparse.ArgumentParser(prog="planner", description="Off-road global planner")
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the HTTP API")
    serve.add_argument("--map", required=True, help="map cache path, or 'demo'")
    serve.add_argument("--trails", help="GeoJSON features to rasterize onto the map")
    serve.add_argument("--map-id", default="default")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8088)
    serve.add_argument("--df", type=float, default=8.0, help="trail downsampling factor")
    serve.add_argument("--timeout", type=float, default=30.0, help="per-plan cap, seconds")
    serve.add_argument("--state-dir", help="snapshot session overlays as JSON here")
    serve.set_defaults(func=_cmd_serve)

    plan_p = sub.add_parser("plan", help="one-shot plan to GeoJSON")
    plan_p.add_argument("--map", required=True, help="map cache path, or 'demo'")
    plan_p.add_argument("--trails")
    plan_p.add_argument("--start", required=True, metavar="lon,lat")
    plan_p.add_argument("--target", required=True, metavar="lon,lat")
    plan_p.add_argument("--out", default="path.geojson")
    plan_p.add_argument("--mode", default=MODE_TRAIL_PREFERRED,
                        choices=["trail_preferred", "direct"])
    plan_p.add_argument("--planner", default="jps", choices=["jps", "astar"])
    plan_p.add_argument("--df", type=float, default=8.0)
    plan_p.set_defaults(func=_cmd_plan)

    demo = sub.add_parser("make-demo", help="write the demo map cache")
    demo.add_argument("--out", default=".")
    demo.set_defaults(func=_cmd_make_demo)

    args = parser.parse_args(argv)
    return args.func(args)


def bench_main(argv=None) -> int:
    _setup_logging()
    parser = argparse.ArgumentParser(prog="bench", description="Planner benchmarks")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a benchmark scenario")
    run.add_argument("--scenario", required=True, help="scenario JSON file")
    run.add_argument("--out", required=True, help="output directory for CSV + table")
    args = parser.parse_args(argv)

    scenario = bench_mod.BenchScenario.from_json(args.scenario)
    summary, _ = bench_mod.run_benchmark(scenario, out_dir=args.out)
    print(bench_mod.format_table(summary))
    return 0


if __name__ == "__main__":
    sys.exit(main())
