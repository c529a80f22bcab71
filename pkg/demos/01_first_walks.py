"""
First rotor walks on the square lattice
=======================================

A rotor walk is a walk with no randomness at all: every site owns a
rotor that cycles through the outgoing directions in a fixed order, and
the walker always leaves along the rotor's current direction, advancing
the rotor as it goes.  Re-running any script in this directory prints
identical numbers, byte for byte.
"""

from rotorwalk.engine import run_escape_experiment, run_finite_ball
from rotorwalk.lattice import Mechanism, up_rule

# Sites start with their rotor pointing "up" (+e2 in d=2), and the
# mechanism cycles +e1, -e1, +e2, -e2.  A walker on a fresh site
# therefore leaves upward, and the next visitor leaves along -e2.
rule = up_rule(2)
mech = Mechanism.default(2)
print("exit order at a fresh site:", ", ".join(
    mech.direction_at((mech.first_index(rule.direction_at((0, 0))) + i) % 4).compass()
    for i in range(4)))

# Send three walkers from the origin, one after the other, with the
# rotor field carried over between walks.  A walker that climbs above
# everything previously touched in its column can never come back, so
# the run certifies an escape without simulating forever.
stats = run_escape_experiment(rule, 3)
print(f"3 walkers: {stats.escaped} escaped, {stats.returned} returned "
      f"to the origin, {stats.steps_total} steps simulated in total")

# The same dynamics inside a finite ball: walkers stop on the boundary
# shell or back at the origin, whichever comes first.  Escapes become
# boundary hits; a bigger ball can only convert escapes into returns.
for r in (4, 8, 16):
    exits, _ = run_finite_ball(up_rule(2), 40, r)
    print(f"ball radius {r:2d}: {exits} of 40 walkers reach the boundary")
