"""Regenerates scenarios/churn25.json (fixed RNG seed, so output is stable)."""
import json
import random
import sys

rng = random.Random(25)
SIDE = 36.0
HORIZON_MS = 60000


def point():
    return round(rng.uniform(0, SIDE), 1), round(rng.uniform(0, SIDE), 1)


nodes = []
for i in range(25):
    x, y = point()
    cls = 2 if i % 5 == 0 else 3
    node = {"id": i, "x": x, "y": y, "class": cls}
    if i % 3 == 0:
        wps = [{"t_ms": 0, "x": x, "y": y}]
        t = 0
        while t < HORIZON_MS:
            t += rng.randrange(5000, 15001, 100)
            wx, wy = point()
            wps.append({"t_ms": min(t, HORIZON_MS), "x": wx, "y": wy})
        node["waypoints"] = wps
    nodes.append(node)

actions = []
for node in rng.sample(range(25), 6):
    off = rng.randrange(5000, 40001, 250)
    actions.append({"t_ms": off, "node": node, "set_state": "off"})
    actions.append({"t_ms": off + rng.randrange(3000, 12001, 250), "node": node, "set_state": "active"})
for node in rng.sample(range(25), 2):
    actions.append({"t_ms": rng.randrange(45000, 55001, 250), "node": node, "withdraw": True})
actions.sort(key=lambda a: (a["t_ms"], a["node"]))

traffic = []
for _ in range(80):
    src, dst = rng.sample(range(25), 2)
    traffic.append({"t_ms": rng.randrange(2000, 58001, 10), "src": src, "dst": dst,
                    "bytes": rng.choice([16, 64, 200, 400, 800])})
traffic.sort(key=lambda t: (t["t_ms"], t["src"], t["dst"]))

scenario = {"horizon_ms": HORIZON_MS, "link_mode": "scatternet", "nodes": nodes,
            "traffic": traffic, "actions": actions}
json.dump(scenario, sys.stdout, indent=1)
sys.stdout.write("\n")
