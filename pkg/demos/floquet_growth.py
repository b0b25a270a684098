"""Why some periodic dephasing rates have no physical steady state.

A zero-mean rate gamma sin(nu t) passes the pure-dephasing CP test, yet
with hopping switched on the one-period map of the chain can stretch
traceless perturbations. When its largest multiplier exceeds one the
populations run away; below one the limit cycle may still leave the
positive cone. This script prints both diagnostics for a three-site chain.

    python demos/floquet_growth.py
"""

from tdtransport import (ChainSpec, IntegratorConfig, OffsetSine, Sine, find_steady_state,
                         make_context)
from tdtransport.metrics import cp_check_single_channel

cfg = IntegratorConfig(positivity="record")
for k in (2, 3):
    spec = ChainSpec.uniform(3, k)
    for model in (Sine(1.0, 4.0), Sine(1.0, 2.0), OffsetSine(0.05, 1.0, 1.0), OffsetSine(1.5, 1.0, 1.0)):
        cp = cp_check_single_channel(model, 500.0).valid
        res = find_steady_state(make_context(spec, model), cfg)
        growth = "-" if res.floquet_growth is None else f"{res.floquet_growth:.3f}"
        lam = f"{res.invariants.min_eigenvalue:.3e}" if res.converged else "-"
        print(f"k={k} {str(model):38s} CP={cp!s:5s} growth={growth:>7s} "
              f"converged={res.converged!s:5s} min eig={lam}")
