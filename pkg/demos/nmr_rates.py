"""Rates generated by an ancilla spin, and the offset that makes them Markovian.

    python demos/nmr_rates.py
"""

import math

import numpy as np

from tdtransport import Nmr
from tdtransport.metrics import markovian_crossover, nm_quantifier

t = np.linspace(0.0, 1.0, 9)
for theta in (0.1, 0.3, math.pi / 6, 0.7, 1.0):
    m = Nmr(0.0, 1.0, theta)
    print(f"theta={theta:.4f}  crossover={markovian_crossover(m):.5f}  "
          f"F(one period)={nm_quantifier(m, 0.0, 1.0):.5f}")
    print("   gamma(t):", " ".join(f"{g:+.3f}" for g in m.rate(t)))
