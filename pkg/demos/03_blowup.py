"""
Racing to infinity
==================

With a convergent series the blow-up field escapes in finite time.  The
run goes up to ``y_max`` and an analytic tail bounds what is left.
"""

import math

from osgood.fields import build_blowup_field, riccati_field
from osgood.integrator import IntegratorConfig, estimate_blowup
from osgood.modulus import builtin

for name in ("poly2", "maxsq", "exp", "linear"):
    m = builtin(name)
    rep = estimate_blowup(build_blowup_field(m), m, 0.0, IntegratorConfig(y_max=1e15))
    lo, hi = rep.x_infinity_bracket
    print(f"{name:>7}: escape time in [{lo:.6f}, {hi:.6g}]  gap bound holds: {rep.gaps_ok}")

# A sanity check with a closed form: y' = 1 + y^2 from 0 reaches infinity at pi/2.
ric = estimate_blowup(riccati_field(), None, 0.0, IntegratorConfig(y_max=1e12))
print("Riccati", ric.x_reach, "vs", math.pi / 2)

# The per-level gaps shrink like 1/phi(n).
m = builtin("poly2")
rep = estimate_blowup(build_blowup_field(m), m, 0.0)
for n, gap, bound in rep.gaps[:6]:
    print(f"n={n}: gap {gap:.5f} <= {bound:.5f}")
