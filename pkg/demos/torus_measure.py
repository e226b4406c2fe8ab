"""The equilibrium measure of [z^2 : w^2 : t^2] by inverse iteration.

Walkers settle on the torus |z| = |w| = |t|, which keeps a fixed distance
1/sqrt 3 from the coordinate lines: a tube of radius below that carries
no mass at all.

Run:  python demos/torus_measure.py
"""

import numpy as np

from equidist.exceptional import declared_model, tubular_mass_probe
from equidist.fibers import SolverSettings
from equidist.maps import preset
from equidist.measures import estimate_mu
from equidist.rates import default_start

f = preset("torus2")
mu = estimate_mu(f, SolverSettings(rng_seed=1), 20000, 20, default_start(2))
pts = mu.measure.points
ratios = np.abs(pts[:, :2] / pts[:, 2:])
print("|z/t| range", ratios[:, 0].min(), ratios[:, 0].max())
print("|w/t| range", ratios[:, 1].min(), ratios[:, 1].max())

model = declared_model(f)
print("distance to the lines", model.distance_rows(pts[:5]))
rep = tubular_mass_probe(mu, model, (0.1, 0.3, 0.5, 0.6))
print("tube masses", rep.masses, rep.status)
