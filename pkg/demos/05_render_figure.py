"""
Rendering the rotor field
=========================

After a run, every touched site points somewhere.  Rendering the field
as a PPM image shows the blocked disk of returned walkers and the
column trails of the escaped ones.  Output lands in demos/out/.
"""

import os

from rotorwalk.cli import RenderSpec, render_rotors
from rotorwalk.engine import run_escape_experiment
from rotorwalk.lattice import Mechanism, up_rule

out_dir = os.path.join(os.path.dirname(__file__), "out")
os.makedirs(out_dir, exist_ok=True)

# 100 walkers from the origin in d=2, rotors starting up.  Green and
# orange pixels point along +-e1, blue and red along +-e2; white sites
# were never touched.  Escape trails render in the post-escape rotor
# color and are clipped to the image box.
stats = run_escape_experiment(up_rule(2), 100)
image = render_rotors(stats.final_state, RenderSpec(scale=4))
path = os.path.join(out_dir, "field_d2_n100.ppm")
with open(path, "wb") as fh:
    fh.write(image)
print(f"{path}: {stats.escaped} escapes among n=100, "
      f"{len(stats.final_state.ray_map())} escape columns")

# The same field through a magnifying glass: an explicit window around
# the origin, 12 pixels per site.
window = RenderSpec(bbox=((-8, 8), (-8, 8)), scale=12)
with open(os.path.join(out_dir, "field_d2_n100_zoom.ppm"), "wb") as fh:
    fh.write(render_rotors(stats.final_state, window, Mechanism.default(2)))
print("zoom written (17x17 sites, 12 px each)")

# d=3 renders one horizontal slice; walkers certified as escaped leave
# vertical trails that appear wherever the slice cuts their column.
stats3 = run_escape_experiment(up_rule(3), 400)
for z in (0, 2):
    spec = RenderSpec(scale=6, slice_coord=z)
    with open(os.path.join(out_dir, f"field_d3_n400_z{z}.ppm"), "wb") as fh:
        fh.write(render_rotors(stats3.final_state, spec))
print(f"d=3 slices written; {stats3.escaped} of 400 walkers escaped")

# PPM is deliberately primitive; convert with any image tool, e.g.
#   magick demos/out/field_d2_n100.ppm field.png
