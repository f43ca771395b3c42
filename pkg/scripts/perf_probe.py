"""Measure plan() wall time and memory on a Map-1-scale synthetic map.

Runs as its own process so the RSS high-water mark reflects this workload
alone. Prints a JSON report:

    python scripts/perf_probe.py [--width 5000 --height 16000 --plans 5]
"""

import argparse
import json
import resource
import time

import numpy as np

from offroad_planner.pipeline import PlanRequest, plan
from offroad_planner.synth import make_synthetic_map
from offroad_planner.trails import TrailNetwork


def rss_bytes() -> int:
    return resource.getrusage(resource.RUSAGE_SELF).ru_maxrss * 1024


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--width", type=int, default=5000)
    parser.add_argument("--height", type=int, default=16000)
    parser.add_argument("--plans", type=int, default=5)
    parser.add_argument("--min-displacement", type=float, default=1200.0)
    parser.add_argument("--seed", type=int, default=3)
    args = parser.parse_args()

    t0 = time.perf_counter()
    imap = make_synthetic_map(args.width, args.height, seed=args.seed, n_trails=4)
    net = TrailNetwork(imap, 8)
    setup_s = time.perf_counter() - t0

    rng = np.random.default_rng(args.seed + 1)
    pts = net.points
    pairs = []
    while len(pairs) < args.plans:
        i, j = rng.integers(0, len(pts), 2)
        a = np.clip(pts[i] + rng.uniform(-20, 20, 2), 1,
                    [imap.width - 2, imap.height - 2])
        b = np.clip(pts[j] + rng.uniform(-20, 20, 2), 1,
                    [imap.width - 2, imap.height - 2])
        if np.hypot(*(a - b)) < args.min_displacement:
            continue
        if imap.is_traversable(int(a[0]), int(a[1])) and \
                imap.is_traversable(int(b[0]), int(b[1])):
            pairs.append((a, b))

    rss_before = rss_bytes()
    times = []
    lengths = []
    for a, b in pairs:
        lon_s, lat_s = imap.pixel_to_geo(*a)
        lon_t, lat_t = imap.pixel_to_geo(*b)
        request = PlanRequest(start=(lon_s, lat_s, 0.0), target=(lon_t, lat_t, 0.0))
        t0 = time.perf_counter()
        result = plan(request, imap, net)
        times.append(time.perf_counter() - t0)
        lengths.append(result.metrics.length_m)

    report = {
        "map": [args.width, args.height],
        "plans": len(times),
        "setup_s": setup_s,
        "median_plan_s": float(np.median(times)),
        "max_plan_s": float(np.max(times)),
        "mean_length_m": float(np.mean(lengths)),
        "planning_rss_delta_gb": (rss_bytes() - rss_before) / 1e9,
        "total_rss_gb": rss_bytes() / 1e9,
    }
    print(json.dumps(report))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
