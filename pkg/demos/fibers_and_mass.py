"""Backward orbits of z^2 - 1 and their multiplicities.

Run:  python demos/fibers_and_mass.py
"""

from equidist.fibers import backward_tree, fiber
from equidist.maps import preset
from equidist.projective import ProjectivePoint

f = preset("basilica")

# The preimages of -1 collapse onto the critical point 0.
fib = fiber(f, ProjectivePoint.affine(-1))
for p, m in fib:
    print("preimage", p, "multiplicity", m)

# Generic fibers are simple, and mass is conserved level by level.
for level in backward_tree(f, ProjectivePoint.affine(0.3 + 0.2j), 8, levels=True):
    print(f"n={level.n}: {len(level)} points, mass {level.total_multiplicity}, residual {level.residual:.1e}")
