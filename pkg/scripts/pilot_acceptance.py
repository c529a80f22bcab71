"""One-off pilot measurements for the acceptance windows. Results land in
.alpha_build/pilot.json; values get frozen into the acceptance suite."""

import json
import math
import os
import sys
import time

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from rotorwalk.analysis import check_flux_identity, compute_odometer, count_columns
from rotorwalk.engine import run_escape_experiment, run_finite_ball
from rotorwalk.lattice import ceil_root, up_rule

out = {}
t0 = time.time()

for n in (1000, 4000, 16000):
    stats = run_escape_experiment(up_rule(2), n)
    rate = stats.escaped / n
    out[f"d2_up_n{n}"] = {
        "escaped": stats.escaped,
        "rate": rate,
        "log_scaled": rate * math.log(n),
        "steps": stats.steps_total,
        "secs": round(time.time() - t0, 1),
    }
    print(n, out[f"d2_up_n{n}"], flush=True)

for n in (5000, 10000, 20000):
    stats = run_escape_experiment(up_rule(3), n)
    out[f"d3_up_n{n}"] = {
        "escaped": stats.escaped,
        "rate": stats.escaped / n,
        "steps": stats.steps_total,
        "secs": round(time.time() - t0, 1),
    }
    print(n, out[f"d3_up_n{n}"], flush=True)

for n in (256, 1024):
    od, fx, _ = compute_odometer(up_rule(2), n, n)
    ratio = od.origin_count() * math.pi / (2 * n * math.log(n))
    out[f"d2_odometer_n{n}"] = {
        "u_o": od.origin_count(),
        "ratio": ratio,
        "max_R": check_flux_identity(od, fx),
        "columns": count_columns(od),
        "secs": round(time.time() - t0, 1),
    }
    print(n, out[f"d2_odometer_n{n}"], flush=True)

# criterion 9 at full scale
for n in (1000, 4000):
    r = ceil_root(n, 2)
    od, fx, _ = compute_odometer(up_rule(3), n, r)
    out[f"d3_columns_n{n}"] = {
        "r": r,
        "columns": count_columns(od),
        "ratio": count_columns(od) / n,
        "secs": round(time.time() - t0, 1),
    }
    print(n, out[f"d3_columns_n{n}"], flush=True)

# criterion 2 sampling: I_2r <= I_r over triples
triples = []
for d, rule_spec, n, r in [
    (2, "up", 50, 8), (2, "up", 200, 12), (2, "up", 500, 16), (2, "up", 120, 25),
    (2, "random:1", 80, 8), (2, "random:5", 300, 10), (2, "random:9", 50, 20),
    (2, "split", 60, 9), (3, "up", 100, 6), (3, "up", 400, 9), (3, "up", 900, 12),
    (3, "random:1", 150, 7), (3, "random:3", 60, 5), (3, "random:7", 500, 8),
    (2, "up", 1000, 30), (3, "up", 2000, 14), (2, "random:2", 700, 18),
    (3, "random:4", 250, 10), (2, "up", 64, 40), (3, "up", 50, 16),
]:
    from rotorwalk.lattice import rule_from_spec, SplitRule, direction_set

    if rule_spec == "split":
        dirs = direction_set(d)
        rule = SplitRule(d, dirs[0], dirs[1])
    else:
        rule = rule_from_spec(rule_spec, d, seed=None)
    lo, _ = run_finite_ball(rule, n, r)
    hi, _ = run_finite_ball(rule, n, 2 * r)
    triples.append({"d": d, "rule": rule_spec, "n": n, "r": r, "I_r": lo, "I_2r": hi,
                    "ok": hi <= lo})
out["monotone_triples"] = triples
print("monotone ok:", all(t["ok"] for t in triples), flush=True)

out["total_secs"] = round(time.time() - t0, 1)
with open(os.path.join(os.path.dirname(__file__), "..", ".alpha_build", "pilot.json"), "w") as fh:
    json.dump(out, fh, indent=1)
print("DONE", out["total_secs"], flush=True)
