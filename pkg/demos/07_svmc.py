"""Spin-vector Monte Carlo baselines for reverse annealing.

Plain SVMC proposes unrestricted angles, so given enough sweeps it escapes
any initial condition; SVMC-TF shrinks proposals by min(1, A/B) pi and
freezes once the transverse envelope dies, reproducing the device-like
drop of the total success probability at large inversion points and the
up/down asymmetry of the partial probabilities.

The tail section compares N = 16 against N = 32 at fixed sweep budget; the
curves are nearly indistinguishable, an observation (not a contract) worth
keeping an eye on when comparing against hardware.
"""

import pathlib

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from openanneal.model import Schedule
from openanneal.svmc import run_reverse_anneal

OUT = pathlib.Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

sched = Schedule.dwave_like()
s_grid = np.linspace(0.1, 0.95, 12)

fig, (left, right) = plt.subplots(1, 2, figsize=(10, 4))
for variant, tau, style in (("svmc", 1e3, "o-"), ("svmc_tf", 1e3, "s-")):
    totals, ups, downs = [], [], []
    for s_inv in s_grid:
        res = run_reverse_anneal(4, 2, sched, tau_sweeps=tau,
                                 s_inv=float(s_inv), K=3000, seed=42,
                                 variant=variant)
        totals.append(res.total)
        ups.append(res.up)
        downs.append(res.down)
    left.plot(s_grid, totals, style, label=f"{variant} ($\\tau$={tau:.0f})")
    if variant == "svmc_tf":
        right.plot(s_grid, ups, "^-", label="all-up (svmc_tf)")
        right.plot(s_grid, downs, "v-", label="all-down (svmc_tf)")
    print(f"{variant}: total(s_inv) = "
          + " ".join(f"{t:.2f}" for t in totals))

left.set_xlabel(r"$s_{\rm inv}$")
left.set_ylabel("total success probability")
left.legend(fontsize=8)
right.set_xlabel(r"$s_{\rm inv}$")
right.set_ylabel("partial success probability")
right.legend(fontsize=8)
fig.tight_layout()
fig.savefig(OUT / "svmc.png", dpi=150)
print(f"figure -> {OUT/'svmc.png'}")

# exploratory: size independence of SVMC-TF at fixed sweep budget
print("\nSVMC-TF size comparison at s_inv = 0.45, tau = 1000 sweeps:")
for n in (16, 32):
    res = run_reverse_anneal(n, 2, sched, tau_sweeps=1e3, s_inv=0.45,
                             K=2000, seed=7, variant="svmc_tf")
    print(f"  N={n:2d}: up {res.up:.3f}+-{res.up_err:.3f} "
          f"down {res.down:.3f}+-{res.down_err:.3f}")
