"""
Reaching zero in finite time
============================

Run the non-uniqueness field backwards (``y' = -F(y)``).  For a convergent
series the decay hits 0 at a finite time, so by reversing time the zero
solution has a second, positive companion.  For a divergent one the
crossing times of ``e^-n`` grow without bound.
"""

import math

from osgood.fields import build_nonuniqueness_field
from osgood.integrator import hitting_time_zero
from osgood.modulus import builtin

m = builtin("poly2")
rep = hitting_time_zero(build_nonuniqueness_field(m), m, math.exp(-1))
print("phi=(1+t)^2: zero reached in", rep.x_infinity_bracket)

# The upper gap estimate (e-1)/phi(n) is tight only when phi grows slowly
# between neighbouring levels; for this modulus the first cell exceeds it.
for n, gap, bound in rep.gaps[:4]:
    print(f"  n={n}: gap {gap:.4f}  bound {bound:.4f}  {'ok' if gap <= bound + 1e-9 else 'ABOVE'}")
print("  cell-wise bound holds:", rep.cell_gaps_ok)

m = builtin("linear")
rep = hitting_time_zero(build_nonuniqueness_field(m), m, 1.0, n_max=200,
                        floor=lambda n: 0.5 * math.log(n + 1), floor_range=(4, 200))
xs = {r.n: r.x_first for r in rep.crossings}
print("phi=1+t: x_n for n = 10, 100, 200:", [round(xs[n], 3) for n in (10, 100, 200)])
print("  floor x_n >= log(n+1)/2 holds:", rep.floor_ok)
