"""Probability mass that a Gaussian KDE grid spanning min-ah .. max+ah misses.

The worst case is a single tight cluster, where the grid covers mean +- a*h of
each kernel. A 1e-3 integral tolerance needs a > 3.
"""

import numpy as np
from scipy.stats import norm

from bandxai.kde import kde_eval

for a in (3.0, 4.0, 5.0):
    print(f"half-width {a:.0f}h: analytic tail mass {2 * norm.sf(a):.2e}")

x = np.array([0.60, 0.6001, 0.6002])
print(f"emitted grid, tight cluster: |integral - 1| = {abs(kde_eval(x).integral() - 1):.2e}")
