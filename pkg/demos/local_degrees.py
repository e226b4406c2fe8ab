"""Local degrees along critical orbits.

0 is periodic of period 2 for z^2 - 1, so kappa_n(0) doubles every
other step.  The cocycle identity is checked on the whole table.

Run:  python demos/local_degrees.py
"""

from equidist.exceptional import local_degree_profile
from equidist.maps import preset
from equidist.projective import ProjectivePoint

f = preset("basilica")
prof = local_degree_profile(f, ProjectivePoint.affine(0), 5)
print("kappa_n(0):", prof.kappa_n)
print("kappa_-n(0):", prof.kappa_minus_n)
print("cocycle violations:", prof.cocycle_violations(f))

torus = preset("torus2")
print("torus2 at a vertex:", local_degree_profile(torus, ProjectivePoint([0, 0, 1]), 2).kappa_n)
