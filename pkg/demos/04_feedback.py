"""Feedback error correction during an anneal, with and without delay.

A detected thermal excitation enqueues a correction: either the adjoint of
the excitation dyad (a cooling channel) or a pi/2 pulse. At zero delay the
trajectory ensemble matches the feedback master equation; at finite delay
the correction can misfire, and the final ground-state population traces
out an optimum as a function of the delay.
"""

import pathlib

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from openanneal import ame, trajectories as tj
from openanneal.liouville import build_generator
from openanneal.model import Protocol, Schedule, ground_state, single_qubit_model
from openanneal.spectral import BathSpec

OUT = pathlib.Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

tau = 100.0
model = single_qubit_model(Schedule.linear(2 * 1.57, 2 * 2.01),
                           Protocol(variant="forward", tau=tau), h=-1.0)
bath = BathSpec(eta_g2=5e-3, omega_c=1e3, temperature=2.6)
gen = build_generator(model, bath)
psi0 = ground_state(model, 0.0)
out_t = np.linspace(0.0, tau, 21)

res_no = ame.propagate(model, bath, np.outer(psi0, psi0.conj()),
                       output_times=out_t, table=gen)
fb0 = ame.FeedbackSpec(kind="lindblad_cooling", basis="energy", delay=0.0)
res_fb = ame.propagate(model, bath, np.outer(psi0, psi0.conj()),
                       output_times=out_t, table=gen, feedback=fb0)
stats0 = tj.ensemble(gen, psi0, K=400, master_seed=5, output_times=out_t, fb=fb0)
print(f"no feedback final GS population: {res_no.gs_population[-1]:.4f}")
print(f"zero-delay feedback (master equation): {res_fb.gs_population[-1]:.4f}")
print(f"zero-delay feedback (trajectories):    {stats0.gs_mean[-1]:.4f}")

delays = [0.0, 5.0, 10.0, 20.0, 40.0, 70.0]
finals = []
for delay in delays:
    fb = ame.FeedbackSpec(kind="lindblad_cooling", basis="energy", delay=delay)
    st = tj.ensemble(gen, psi0, K=400, master_seed=5, output_times=out_t, fb=fb)
    finals.append(st.gs_mean[-1])
    print(f"delay {delay:5.1f} ns -> final GS population {finals[-1]:.4f}")

fig, axis = plt.subplots(figsize=(6, 4))
axis.plot(delays, finals, "o-", label="trajectories with delayed feedback")
axis.axhline(res_no.gs_population[-1], color="purple", ls="--",
             label="no feedback")
axis.set_xlabel("feedback delay [ns]")
axis.set_ylabel("final ground-state population")
axis.legend()
fig.tight_layout()
fig.savefig(OUT / "feedback_delay.png", dpi=150)
print(f"figure -> {OUT/'feedback_delay.png'}")
