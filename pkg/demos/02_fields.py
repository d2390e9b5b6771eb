"""
Building the counterexample fields
==================================

A modulus ``phi`` is turned into a piecewise linear field on the grid
``e^n``.  The blow-up variant grows like ``y phi(log y)``; the
non-uniqueness variant vanishes at 0 and behaves like ``y phi(|log y|)``
near it.
"""

import math

import numpy as np

from osgood.fields import (SamplingPlan, build_blowup_field, build_nonuniqueness_field,
                           check_osgood_difference, sqrt_field)
from osgood.modulus import builtin

m = builtin("poly2")
up = build_blowup_field(m)
down = build_nonuniqueness_field(m)

# Breakpoints hold exactly; between them the field is affine.
for y in (0.0, 1.0, math.e, (1 + math.e) / 2, math.e ** 2):
    print(f"blow-up F({y:.4f}) = {up(0.0, y):.6f}")
for y in (-5.0, math.exp(-3), math.exp(-2), math.exp(-1), 0.5, 2.0):
    print(f"non-uniqueness F({y:.4f}) = {down(0.0, y):.6f}")

# The non-uniqueness field satisfies the Osgood-type difference bound ...
rep = check_osgood_difference(down, m, 1.0, SamplingPlan(n_samples=20_000))
print("difference bound on the phi field:", rep.passed, f"worst ratio {rep.worst_ratio:.3f}")

# ... while 2 sqrt|y| violates it against the divergent modulus 1+t.
bad = check_osgood_difference(sqrt_field(), builtin("linear"), 1.0, SamplingPlan(n_samples=20_000))
x, y, z = bad.worst_witness
print("sqrt field:", bad.passed, f"witness y={y:.3g} gap={z - y:.3g}")

ys = np.geomspace(1e-8, 1, 5)
print(np.array([down(0.0, y) / y for y in ys]))
