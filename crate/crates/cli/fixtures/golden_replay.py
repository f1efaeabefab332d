#!/usr/bin/env python3
"""Independent oracle for the replay golden files.

Builds a scripted scanpath over the default messenger layout, then derives
the expected clicks with a direct batch implementation of blink hold,
centred median smoothing and the dwell state machine. Writes
`scanpath.csv` and `golden_clicks.csv` next to this script.

Run from anywhere: python3 golden_replay.py
"""

import csv
import json
import math
import os

HERE = os.path.dirname(os.path.abspath(__file__))

DWELL_TIME = 1000
JITTER_RADIUS = 50.0
REFRACTORY = 500
SMOOTH_WINDOW = 5
BLINK_HOLD = 300


def load_regions():
    with open(os.path.join(HERE, "messenger_layout.json")) as f:
        return json.load(f)["regions"]


def centre(regions, rid):
    r = next(r for r in regions if r["id"] == rid)
    return (math.floor(r["x"] + r["w"] / 2), math.floor(r["y"] + r["h"] / 2))


def script(regions):
    """List of (x, y) or None per 30 Hz frame."""
    rest = (300, 60)
    out = []

    def hold(p, n, jitter=None):
        for i in range(n):
            if jitter:
                dx, dy = jitter[i % len(jitter)]
                out.append((p[0] + dx, p[1] + dy))
            else:
                out.append(p)

    def blink(n):
        out.extend([None] * n)

    def glide(a, b, n):
        for i in range(1, n + 1):
            f = i / (n + 1)
            out.append((round(a[0] + (b[0] - a[0]) * f), round(a[1] + (b[1] - a[1]) * f)))

    h, i_, speak = centre(regions, "key:H"), centre(regions, "key:I"), centre(regions, "speak")
    alarm, t3, e = centre(regions, "alarm"), centre(regions, "template-3"), centre(regions, "key:E")

    hold(rest, 10)
    glide(rest, h, 2)
    hold(h, 40)  # plain dwell
    glide(h, i_, 3)
    hold(i_, 15)
    blink(5)  # short blink, held through
    hold(i_, 25)
    glide(i_, speak, 3)
    hold(speak, 90)  # long stare repeats after the refractory period
    glide(speak, alarm, 2)
    hold(alarm, 27)  # leaves before the dwell completes
    hold(rest, 5)
    hold(t3, 15)
    blink(12)  # longer than blink_hold: tracking lost
    hold(t3, 35)
    glide(t3, e, 3)
    hold(e, 40, jitter=[(0, 0), (6, -4), (-5, 3), (3, 5), (-4, -6)])
    hold(rest, 5)
    return out


def timestamps(n):
    return [i * 1000 // 30 for i in range(n)]


def blink_hold(ts, pts):
    """Returns (x, y, valid, held) per sample."""
    n = len(pts)
    out = [None] * n
    last_valid = None
    i = 0
    while i < n:
        if pts[i] is not None:
            out[i] = (pts[i][0], pts[i][1], True, False)
            last_valid = pts[i]
            i += 1
            continue
        j = i
        while j < n and pts[j] is None:
            j += 1
        until = ts[j] if j < n else ts[j - 1]
        short = until - ts[i] < BLINK_HOLD
        for k in range(i, j):
            if short and last_valid is not None:
                out[k] = (last_valid[0], last_valid[1], True, True)
            else:
                out[k] = (0.0, 0.0, False, False)
        i = j
    return out


def median(vals):
    s = sorted(vals)
    return s[len(s) // 2]


def smooth(samples):
    half = SMOOTH_WINDOW // 2
    valid_idx = [k for k, s in enumerate(samples) if s[2]]
    out = list(samples)
    m = len(valid_idx)
    for j, k in enumerate(valid_idx):
        r = min(half, j, m - 1 - j)
        win = [samples[valid_idx[q]] for q in range(j - r, j + r + 1)]
        x, y, v, held = samples[k]
        out[k] = (median([w[0] for w in win]), median([w[1] for w in win]), v, held)
    return out


def hit(regions, x, y):
    for idx, r in enumerate(regions):
        if r["x"] <= x < r["x"] + r["w"] and r["y"] <= y < r["y"] + r["h"]:
            return idx
    return None


def dwell(regions, ts, samples):
    clicks = []
    state = ("idle",)

    def enter(h, t, x, y):
        return ("idle",) if h is None else ("hover", h, t, [x], [y])

    for t, (x, y, valid, held) in zip(ts, samples):
        if not valid:
            state = ("idle",)
            continue
        h = hit(regions, x, y)
        if state[0] == "idle":
            state = enter(h, t, x, y)
        elif state[0] == "refractory":
            _, target, since = state
            if not (h == target and t - since < REFRACTORY):
                state = enter(h, t, x, y)
        else:
            _, target, since, xs, ys = state
            if h != target:
                state = enter(h, t, x, y)
                continue
            if not held:
                ax, ay = sum(xs) / len(xs), sum(ys) / len(ys)
                if math.hypot(x - ax, y - ay) > JITTER_RADIUS:
                    state = enter(h, t, x, y)
                    continue
                xs.append(x)
                ys.append(y)
            if t - since >= DWELL_TIME:
                clicks.append((t, regions[target]["id"], sum(xs) / len(xs), sum(ys) / len(ys)))
                state = ("refractory", target, t)
    return clicks


def main():
    regions = load_regions()
    pts = script(regions)
    ts = timestamps(len(pts))
    with open(os.path.join(HERE, "scanpath.csv"), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["timestamp", "x", "y", "valid"])
        for t, p in zip(ts, pts):
            w.writerow([t, "", "", 0] if p is None else [t, p[0], p[1], 1])
    clicks = dwell(regions, ts, smooth(blink_hold(ts, pts)))
    with open(os.path.join(HERE, "golden_clicks.csv"), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["timestamp", "target_id", "x", "y"])
        for t, rid, x, y in clicks:
            w.writerow([t, rid, f"{x:.3f}", f"{y:.3f}"])
    for c in clicks:
        print(c)


if __name__ == "__main__":
    main()
