"""How fast do the fiber measures of z^2 approach the circle?

For a = 2 the fiber of z^(2^n) lies on |z| = 2^(2^-n), so the error on Z
is known in closed form and decays like 2^-n.

Run:  python demos/rate_of_z2.py
"""

from equidist.maps import preset
from equidist.projective import ProjectivePoint
from equidist.rates import RateExperimentConfig, run_exceptional_control, run_rate_experiment

z2 = preset("z2")
rep = run_rate_experiment(RateExperimentConfig(z2, ProjectivePoint.affine(2)))
for n, e in sorted(rep.e_n.items()):
    r2 = 2.0 ** (2.0 ** (1 - n))
    print(f"n={n:2d}  e_n={e:.3e}  closed form={(r2 - 1) / (r2 + 1):.3e}")
print("fitted rate", round(rep.fitted_rate_rho, 4), "verdict", rep.verdict)

# Starting at the fixed point 0 nothing moves.
ctl = run_exceptional_control(RateExperimentConfig(z2, ProjectivePoint.affine(0)))
print("from 0:", [round(e, 3) for e in ctl.e_n.values()], ctl.verdict)
