"""
Envelopes for growth and separation
===================================

Between Lipschitz and Osgood there are explicit rates.  The extremal
fields attain them, so numeric solutions should sit on the envelopes.
"""

import numpy as np

from osgood.bounds import BoundKind, crossing_lower_bound, crossing_oracle, verify_proposition

for kind in BoundKind:
    print(verify_proposition(kind).summary())

# Crossing times of e^-n for the sqrt-rate extremal field, with the floor
# from the proof underneath.
print(" n    exact     floor")
for n in (1, 4, 16, 64, 200):
    s = BoundKind.SEPARATION_SQRT
    print(f"{n:>3} {crossing_oracle(s, n):9.4f} {crossing_lower_bound(s, n):9.4f}")

ns = np.arange(1, 11)
print(np.round([crossing_lower_bound(BoundKind.SEPARATION_LOG, int(n)) for n in ns], 4))
