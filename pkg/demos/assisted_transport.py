"""Dephasing-assisted transport on a short chain.

Sweeps a constant dephasing rate on a four-site chain with extraction at
site 3 and at the far end. Only the interior extraction site profits from
a little dephasing; the optimum sits near gamma ~ kappa.

    python demos/assisted_transport.py
"""

import numpy as np

from tdtransport import ChainSpec, Constant, find_steady_state, make_context
from tdtransport.metrics import observables

gammas = np.linspace(0.0, 0.1, 11)
for k in (3, 4):
    spec = ChainSpec.uniform(4, k)
    print(f"extraction site {k}")
    print("   gamma     J~         delta_n")
    for g in gammas:
        res = find_steady_state(make_context(spec, Constant(g)))
        obs = observables(res.populations, spec)
        print(f"  {g:6.3f}  {obs.rescaled_current:.6f}  {obs.spread:.6f}")
    print()
