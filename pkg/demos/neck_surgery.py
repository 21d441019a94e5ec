"""Replace a wasteful neck by cones and a logarithmic geodesic.

Run:  python3 demos/neck_surgery.py [--nx 256]

The long-neck field walks from q to p over a short radial interval.  Spreading
that walk logarithmically over the whole annulus is much cheaper, and the
competitor built this way agrees with the field everywhere outside the neck.
"""
import argparse
import math

import numpy as np

from alphaflow import bubbletree as bt
from alphaflow import diagnostics as dg
from alphaflow import fields
from alphaflow.geometry import TorusGrid

ap = argparse.ArgumentParser()
ap.add_argument("--nx", type=int, default=256)
args = ap.parse_args()

grid = TorusGrid(args.nx)
u, p, q = fields.long_neck(grid)
spec = bt.NeckSpec(p, q, 0.06, 0.2, (0.5, 0.5))
comp = bt.build_competitor(u, specs=[spec])
same, dist = bt.close_maps_homotopic(u, comp.field, mask=~comp.neck_mask)

print(f"field energy        {dg.dirichlet_energy(u):.5f}")
for k, v in comp.region_energies.items():
    print(f"  competitor {k:12s} {v:.5f}")
print(f"largest change outside the neck: {dist}  (homotopic: {same})")

# closed forms for the pieces
d = math.pi / 2
neck = bt.geodesic_neck(bt.NeckSpec(np.array([1.0, 0, 0]), np.array([0, 1.0, 0]), 1.0, math.e ** 4))
print(f"\ngeodesic neck, d = pi/2, b/a = e^4: {neck.energy():.5f} (pi^3/8 = {math.pi ** 3 / 8:.5f})")
pole = np.array([0.0, 0.0, 1.0])
for r in (0.2, 0.1, 0.05):
    cone = bt.cone_extension(bt.geodesic_circle(pole, r), pole)
    print(f"cone from a circle of radius {r}: E / d^2 = {cone.energy() / r ** 2:.4f}")
