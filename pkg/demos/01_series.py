"""
Which moduli make the series converge
=====================================

Everything in this package turns on one number: whether the sum of
``1/phi(n)`` is finite.  This script classifies the built-in moduli and
prints the evidence the classifier collected.
"""

from osgood.modulus import FAMILIES, builtin, classify_series

# A budget of 2**14 terms is plenty for a demo; the tagged families get an
# analytic tail on top of the partial sum.
for name in sorted(FAMILIES):
    m = builtin(name)
    est = classify_series(m, budget=2 ** 14)
    total = est.partial + est.tail_upper
    print(f"{name:>9}  {est.verdict.value:<10} sum <= {total:.6g}")

# For phi = (1+t)^2 the sum from n = 1 is pi^2/6 - 1.
import math
est = classify_series(builtin("poly2"))
print("poly2 total", est.partial + est.tail_upper, "exact", math.pi ** 2 / 6 - 1)
