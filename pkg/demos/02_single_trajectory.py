"""A single quantum-jump trajectory behaves like a step function.

Between jumps the drift term vanishes on a nondegenerate eigenstate, so the
overlap with the instantaneous ground state only moves when a jump fires.
The net number of jumps toward the ground state flips sign at the minimum
gap: excitations dominate before it, relaxation after.
"""

import pathlib

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from openanneal import trajectories as tj
from openanneal.liouville import build_generator
from openanneal.model import Protocol, Schedule, chain_model, ground_state
from openanneal.spectral import BathSpec

OUT = pathlib.Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

tau = 60.0
model = chain_model(3, Schedule.linear(8.0, 8.0),
                    Protocol(variant="forward", tau=tau))
bath = BathSpec(eta_g2=5e-3, omega_c=1e3, temperature=2.6)
gen = build_generator(model, bath)
psi0 = ground_state(model, 0.0)
out_t = np.linspace(0.0, tau, 241)

# find a trajectory with a few jumps
for index in range(30):
    rec = tj.run_trajectory(index, gen, psi0, out_t, master_seed=11)
    if 2 <= len(rec.jumps) <= 6:
        break
print(f"trajectory {index}: {len(rec.jumps)} jumps at "
      f"{[f'{e.t:.1f}' for e in rec.jumps]} ns")

stats = tj.ensemble(gen, psi0, K=250, master_seed=11, output_times=out_t,
                    n_jump_bins=12)

fig, (top, bottom) = plt.subplots(2, 1, figsize=(6, 6), sharex=True)
top.plot(out_t / tau, rec.gs_population, "b-", lw=1,
         label=f"single trajectory #{index}")
top.plot(out_t / tau, stats.gs_mean, "r--", label="ensemble mean (K=250)")
for e in rec.jumps:
    top.axvline(e.t / tau, color="gray", alpha=0.4, lw=0.8)
top.set_ylabel("ground-state overlap$^2$")
top.legend()

centers = 0.5 * (stats.net_jump_bins[:-1] + stats.net_jump_bins[1:]) / tau
bottom.bar(centers, stats.net_jumps, width=0.9 / 12, color="tab:green")
bottom.axhline(0, color="k", lw=0.8)
bottom.set_xlabel("s = t / t_f")
bottom.set_ylabel("net jumps toward GS")
fig.tight_layout()
fig.savefig(OUT / "single_trajectory.png", dpi=150)
print(f"figure -> {OUT/'single_trajectory.png'}")
neg = stats.net_jumps[centers < 0.66].sum()
pos = stats.net_jumps[centers >= 0.66].sum()
print(f"net jumps before the minimum gap: {neg:.0f}, after: {pos:.0f}")
