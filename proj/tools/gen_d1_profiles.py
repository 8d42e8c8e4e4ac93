#!/usr/bin/env python3
"""Regenerate the bundled 24-h D1 profiles (60-s resolution, per-unit multipliers).

Usage: gen_d1_profiles.py [outdir]    (default: profiles/d1 next to this script's repo root)
Output is deterministic for a given seed.
"""
import math
import os
import random
import sys

STEP_S = 60
N = 24 * 3600 // STEP_S
SEED = 20240611


def load_shape(h):
    # Residential: overnight trough, morning shoulder, evening peak.
    base = 0.36
    morning = 0.30 * math.exp(-((h - 7.8) / 1.3) ** 2)
    midday = 0.10 * math.exp(-((h - 13.0) / 3.0) ** 2)
    evening = 0.64 * math.exp(-((h - 19.3) / 1.8) ** 2)
    return base + morning + midday + evening


def solar_shape(h):
    if h <= 6.0 or h >= 18.5:
        return 0.0
    x = (h - 6.0) / 12.5
    return math.sin(math.pi * x) ** 1.4


def main():
    root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    out = sys.argv[1] if len(sys.argv) > 1 else os.path.join(root, "profiles", "d1")
    os.makedirs(out, exist_ok=True)
    rng = random.Random(SEED)

    load, solar, wind = [], [], []
    cloud = 1.0
    w = 0.45
    noise = 0.0
    for k in range(N):
        h = k * STEP_S / 3600.0
        noise = 0.9 * noise + rng.gauss(0.0, 0.006)
        load.append(max(0.05, load_shape(h) * (1.0 + noise)))

        # Passing clouds: occasional dips that recover over a few minutes.
        if rng.random() < 0.02:
            cloud = min(cloud, rng.uniform(0.6, 0.9))
        cloud += (1.0 - cloud) * 0.15
        solar.append(solar_shape(h) * cloud)

        # Mean-reverting wind with a stronger afternoon/evening regime.
        target = 0.40 + 0.25 * math.sin(math.pi * (h - 9.0) / 12.0)
        w += 0.05 * (target - w) + rng.gauss(0.0, 0.03)
        w = min(1.0, max(0.0, w))
        wind.append(w)

    for name, series in (("load", load), ("solar", solar), ("wind", wind)):
        with open(os.path.join(out, name + ".csv"), "w", newline="\n") as f:
            f.write("time_s,value\n")
            for k, v in enumerate(series):
                f.write("%d,%.6f\n" % (k * STEP_S, v))


if __name__ == "__main__":
    main()
