#!/usr/bin/env python3
"""Writes the bundled synthetic datasets.

rts24/  24-bus, 38-line system on the RTS-24 topology with a four-step
        day (6 h steps), day-ahead scenarios, a realized demand curve,
        real-time line risk, a small raster with a reliability table, and
        a demand/risk history for scenario construction.
three_bus/  the 3-bus example used in the README.

Deterministic; rerunning reproduces the committed files.
"""

import json
import math
import os
import random

HERE = os.path.dirname(os.path.abspath(__file__))

BRANCHES = [
    (1, 2), (1, 3), (1, 5), (2, 4), (2, 6), (3, 9), (3, 24), (4, 9), (5, 10),
    (6, 10), (7, 8), (8, 9), (8, 10), (9, 11), (9, 12), (10, 11), (10, 12),
    (11, 13), (11, 14), (12, 13), (12, 23), (13, 23), (14, 16), (15, 16),
    (15, 21), (15, 21), (15, 24), (16, 17), (16, 19), (17, 18), (17, 22),
    (18, 21), (18, 21), (19, 20), (19, 20), (20, 23), (20, 23), (21, 22),
]
ZERO_RISK = {14, 23, 24, 25, 26, 28, 30, 31, 32, 33, 38}

# bus: (row, col) on a coarse map, north at row 0
LAYOUT = {
    1: (6, 1), 2: (6, 3), 3: (5, 0), 4: (5, 3), 5: (5, 1), 6: (5, 4),
    7: (6, 5), 8: (5, 5), 9: (4, 2), 10: (4, 4), 11: (3, 2), 12: (3, 4),
    13: (2, 5), 14: (3, 1), 15: (1, 0), 16: (2, 1), 17: (1, 1), 18: (0, 1),
    19: (2, 3), 20: (2, 4), 21: (0, 0), 22: (0, 2), 23: (1, 5), 24: (3, 0),
}

PEAK = {
    1: 108, 2: 97, 3: 180, 4: 74, 5: 71, 6: 136, 7: 125, 8: 171, 9: 175,
    10: 195, 13: 265, 14: 194, 15: 317, 16: 100, 18: 333, 19: 181, 20: 128,
}

# bus, p_max, p_min share, marginal cost, startup, min up, min down
UNITS = [
    (1, 192, 0.3, 42.0, 6000, 1, 1),
    (2, 192, 0.3, 42.0, 6000, 1, 1),
    (7, 300, 0.3, 55.0, 9000, 2, 1),
    (13, 591, 0.35, 38.0, 15000, 2, 2),
    (15, 215, 0.3, 30.0, 5000, 1, 1),
    (16, 155, 0.3, 24.0, 4000, 1, 1),
    (18, 400, 0.5, 9.0, 30000, 2, 2),
    (21, 400, 0.5, 9.0, 30000, 2, 2),
    (22, 300, 0.0, 4.0, 0, 1, 1),
    (23, 660, 0.4, 20.0, 20000, 2, 2),
]

SHAPE = [0.72, 0.93, 1.0, 0.86]
DEMAND_SCALE = float(os.environ.get("DEMAND_SCALE", "0.55"))
PMIN_SCALE = float(os.environ.get("PMIN_SCALE", "1.0"))
STEP_HOURS = 6.0
VOLL = 1000.0
LAT0, LON0, CELL = 39.0, -122.4, 0.08


def coords(bus):
    r, c = LAYOUT[bus]
    return (round(LAT0 - 0.1 * r, 4), round(LON0 + 0.12 * c, 4))


def risky_pi():
    """Daily ignition probability per line; zero-risk lines get 0."""
    rng = random.Random(int(os.environ.get("RISK_SEED", "24")))
    risky = [l for l in range(1, 39) if l not in ZERO_RISK]
    values = sorted((round(rng.uniform(0.02, 0.3), 4) for _ in risky), reverse=True)
    # southern lines (low bus numbers) carry the highest risk
    order = sorted(risky, key=lambda l: (BRANCHES[l - 1][0] + BRANCHES[l - 1][1], l))
    pi = {l: 0.0 for l in range(1, 39)}
    for l, v in zip(order, values):
        pi[l] = v
    return [pi[l] for l in range(1, 39)]


def network():
    buses = [
        {"id": b, "name": f"bus{b}", "latitude": coords(b)[0], "longitude": coords(b)[1]}
        for b in range(1, 25)
    ]
    lines = []
    for i, (f, t) in enumerate(BRANCHES, start=1):
        heavy = f >= 11 and t >= 11
        lim = 500.0 if heavy else 175.0
        lines.append({
            "id": i,
            "from_bus": f,
            "to_bus": t,
            "susceptance": 1500.0 if heavy else 700.0,
            "flow_min": -lim,
            "flow_max": lim,
            "endpoints": [list(coords(f)), list(coords(t))],
        })
    gens = []
    for i, (bus, pmax, share, mc, su, mu, md) in enumerate(UNITS, start=1):
        ramp = round(0.8 * pmax, 1)
        gens.append({
            "id": i,
            "bus": bus,
            "p_min": round(PMIN_SCALE * share * pmax, 1),
            "p_max": float(pmax),
            "ramp_down": -ramp,
            "ramp_up": ramp,
            "min_up": mu,
            "min_down": md,
            "marginal_cost": mc,
            "startup_cost": float(su),
            "shutdown_cost": 0.0,
            "initially_on": False,
        })
    demands = [
        {
            "id": i,
            "bus": b,
            "voll": VOLL,
            "base_profile": [round(PEAK[b] * DEMAND_SCALE * s, 2) for s in SHAPE],
        }
        for i, b in enumerate(sorted(PEAK), start=1)
    ]
    return {
        "buses": buses,
        "lines": lines,
        "generators": gens,
        "demands": demands,
        "horizon": len(SHAPE),
        "step_hours": STEP_HOURS,
    }


def line_risk_json(pi, horizon):
    out = []
    for i, p in enumerate(pi, start=1):
        lp = math.log(p) if p > 0 else -1e9
        lq = math.log1p(-p)
        out.append({
            "line_id": i,
            "pi": [p] * horizon,
            "log_pi": [lp] * horizon,
            "log_one_minus_pi": [lq] * horizon,
            "cells": [],
            "metric_value": p,
        })
    return out


def write_json(path, obj):
    with open(path, "w") as f:
        json.dump(obj, f, indent=2)
        f.write("\n")


def rts24():
    out = os.environ.get("RTS24_OUT", os.path.join(HERE, "rts24"))
    os.makedirs(out, exist_ok=True)
    net = network()
    write_json(os.path.join(out, "network.json"), net)
    pi = risky_pi()
    h = net["horizon"]
    scen = []
    for sid, (scale, prob) in enumerate([(0.92, 0.25), (1.0, 0.5), (1.08, 0.25)]):
        scen.append({
            "id": sid,
            "probability": prob,
            "demand": [[round(v * scale, 3) for v in d["base_profile"]] for d in net["demands"]],
            "line_risk": pi,
        })
    write_json(os.path.join(out, "scenarios.json"), {"kind": "day-ahead", "scenarios": scen})
    write_json(os.path.join(out, "rt_line_risk.json"), line_risk_json(pi, h))
    total = [sum(d["base_profile"][t] for d in net["demands"]) for t in range(h)]
    with open(os.path.join(out, "realized_demand.csv"), "w") as f:
        f.write("step,total_demand\n")
        for t, v in enumerate(total):
            f.write(f"{t},{round(v * (1.03 if t == 2 else 0.99), 2)}\n")

    # raster covering the buses, WFPI-like values with a hot south-west
    rows, cols = 10, 9
    rng = random.Random(7)
    with open(os.path.join(out, "wfpi.asc"), "w") as f:
        f.write(f"ncols {cols}\nnrows {rows}\n")
        f.write(f"xllcorner {LON0 - 0.1:.4f}\nyllcorner {LAT0 - 0.76:.4f}\n")
        f.write(f"cellsize {CELL}\nNODATA_value -9999\n")
        for r in range(rows):
            vals = []
            for c in range(cols):
                v = 20 + 9 * r - 3 * c + rng.uniform(-5, 5)
                vals.append(f"{max(0.0, min(150.0, v)):.1f}")
            f.write(" ".join(vals) + "\n")
    with open(os.path.join(out, "reliability.csv"), "w") as f:
        f.write("value_lo,value_hi,mean_owip\n")
        edges = [0, 25, 50, 75, 100, 125, 150]
        for k in range(len(edges) - 1):
            f.write(f"{edges[k]},{edges[k + 1]},{2e-6 * k:.2e}\n")

    rng = random.Random(11)
    risky = [l for l in range(38) if pi[l] > 0]
    with open(os.path.join(out, "history_demand.csv"), "w") as fd, \
            open(os.path.join(out, "history_risk.csv"), "w") as fr:
        fd.write("date,step,total_demand\n")
        fr.write("date,cumulative_bus_risk," + ",".join(f"line_{l}" for l in range(1, 39)) + "\n")
        for day in range(1, 31):
            date = f"2020-09-{day:02d}"
            level = rng.gauss(1.0, 0.06)
            for t in range(h):
                fd.write(f"{date},{t},{round(total[t] * level * rng.uniform(0.98, 1.02), 2)}\n")
            heat = rng.uniform(0.5, 1.5)
            lp = [round(min(0.6, pi[l] * heat * rng.uniform(0.8, 1.2)), 4) if l in risky else 0.0
                  for l in range(38)]
            fr.write(f"{date},{round(sum(lp), 4)}," + ",".join(str(v) for v in lp) + "\n")


def three_bus():
    out = os.path.join(HERE, "three_bus")
    os.makedirs(out, exist_ok=True)
    pos = {1: (38.0, -121.0), 2: (38.1, -121.0), 3: (38.0, -120.9)}
    buses = [{"id": b, "name": f"b{b}", "latitude": la, "longitude": lo} for b, (la, lo) in pos.items()]
    lines = []
    for i, (f, t) in enumerate([(1, 2), (2, 3), (1, 3)], start=1):
        lines.append({
            "id": i,
            "from_bus": f,
            "to_bus": t,
            "susceptance": 500.0,
            "flow_min": -100.0,
            "flow_max": 100.0,
            "endpoints": [list(pos[f]), list(pos[t])],
        })
    gens = []
    for i, (bus, pmax, mc, su) in enumerate([(1, 150.0, 10.0, 100.0), (3, 80.0, 30.0, 50.0)], start=1):
        gens.append({
            "id": i, "bus": bus, "p_min": 0.0, "p_max": pmax,
            "ramp_down": -pmax, "ramp_up": pmax, "min_up": 1, "min_down": 1,
            "marginal_cost": mc, "startup_cost": su, "shutdown_cost": 0.0,
            "initially_on": False,
        })
    shape = [0.7, 0.9, 1.0, 0.8]
    demands = [
        {"id": 1, "bus": 2, "voll": 1000.0, "base_profile": [round(90 * s, 2) for s in shape]},
        {"id": 2, "bus": 3, "voll": 1000.0, "base_profile": [round(40 * s, 2) for s in shape]},
    ]
    net = {"buses": buses, "lines": lines, "generators": gens, "demands": demands,
           "horizon": len(shape), "step_hours": 1.0}
    write_json(os.path.join(out, "network.json"), net)

    rows, cols = 6, 6
    rng = random.Random(3)
    with open(os.path.join(out, "wfpi.asc"), "w") as f:
        f.write(f"ncols {cols}\nnrows {rows}\nxllcorner -121.1000\nyllcorner 37.9000\n")
        f.write("cellsize 0.05\nNODATA_value -9999\n")
        for r in range(rows):
            f.write(" ".join(f"{40 + 12 * c + rng.uniform(-4, 4):.1f}" for c in range(cols)) + "\n")
    with open(os.path.join(out, "reliability.csv"), "w") as f:
        f.write("value_lo,value_hi,mean_owip\n")
        edges = [0, 25, 50, 75, 100, 125, 150]
        for k in range(len(edges) - 1):
            f.write(f"{edges[k]},{edges[k + 1]},{0.004 * (k + 1):.3f}\n")

    total = [sum(d["base_profile"][t] for d in demands) for t in range(len(shape))]
    with open(os.path.join(out, "realized_demand.csv"), "w") as f:
        f.write("step,total_demand\n")
        for t, v in enumerate(total):
            f.write(f"{t},{round(v * 1.02, 2)}\n")
    rng = random.Random(5)
    with open(os.path.join(out, "history_demand.csv"), "w") as fd, \
            open(os.path.join(out, "history_risk.csv"), "w") as fr:
        fd.write("date,step,total_demand\n")
        fr.write("date,cumulative_bus_risk,line_1,line_2,line_3\n")
        for day in range(1, 13):
            date = f"2020-08-{day:02d}"
            level = rng.gauss(1.0, 0.08)
            for t in range(len(shape)):
                fd.write(f"{date},{t},{round(total[t] * level, 2)}\n")
            lp = [round(rng.uniform(0.05, 0.25), 4), round(rng.uniform(0.1, 0.4), 4), 0.0]
            fr.write(f"{date},{round(sum(lp), 4)}," + ",".join(str(v) for v in lp) + "\n")
    write_json(os.path.join(out, "config.json"), {
        "network": "network.json",
        "raster": {"path": "wfpi.asc", "date": "2020-08-15"},
        "reliability_table": "reliability.csv",
        "history": {"demand": "history_demand.csv", "risk": "history_risk.csv"},
        "realized_demand": "realized_demand.csv",
        "metric": "wfpi",
        "budget": {"mode": "log-wip", "pi_tol": 0.3},
        "scenarios": {"structure": "tree", "count": 3},
        "rt": {"samples": 200, "onset": "uniform"},
        "sweep": {"lines": [1, 2]},
        "seed": 7,
        "out": "out",
    })


if __name__ == "__main__":
    rts24()
    three_bus()
