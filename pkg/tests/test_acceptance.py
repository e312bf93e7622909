"""Acceptance suite: every headline requirement at its stated tolerance.

Each test prints one PASS/FAIL line (run with `pytest -s` to stream them).
Criterion 12's speedup half needs >= 4 physical cores; on smaller machines
it fails honestly rather than being skipped, since the determinism half is
still verified.
"""

import os
import time

import numpy as np
import pytest
from scipy.integrate import simpson

from openanneal import ame
from openanneal import trajectories as tj
from openanneal.cli import benchmark, parse_config
from openanneal.fluctuators import (Fluctuator, FluctuatorEnsembleSpec,
                                    fid_analytic, propagate_sse,
                                    realization_rng, sample_ensemble,
                                    spectrum_check, switch_schedule)
from openanneal.liouville import build_generator
from openanneal.model import (IsingProblem, Protocol, PSpinProblem, Schedule,
                              chain_model, ground_state, ising_model,
                              maxspin_projector, pattern_state, pspin_model,
                              single_qubit_model)
from openanneal.spectral import BathSpec, build_lindblads, decompose, ohmic_rate
from openanneal.stats import loglog_slope
from openanneal.svmc import run_reverse_anneal

from conftest import random_hermitian


def report(num, name, ok, detail):
    print(f"\nACCEPTANCE {num:02d} {name}: {'PASS' if ok else 'FAIL'} ({detail})")
    return ok


BATH = BathSpec(eta_g2=1e-3, omega_c=1e3, temperature=1.57)


def test_criterion_01_trajectory_ame_equivalence():
    """3-qubit ferromagnetic chain: K = 2000 trajectories agree with the
    direct master equation within 2 sigma-hat at every output point."""
    model = chain_model(3, Schedule.linear(8.0, 8.0),
                        Protocol(variant="forward", tau=100.0))
    gen = build_generator(model, BATH)
    psi0 = ground_state(model, 0.0)
    out = np.linspace(0.0, 100.0, 11)
    t0 = time.time()
    res = ame.propagate(model, BATH, np.outer(psi0, psi0.conj()),
                        output_times=out, table=gen)
    workers = min(4, os.cpu_count() or 1)
    stats = tj.ensemble(gen, psi0, K=2000, master_seed=2024, workers=workers,
                        output_times=out)
    wall = time.time() - t0
    dev = np.abs(stats.gs_mean - res.gs_population)
    tol = 2.0 * stats.gs_stderr + 1e-9  # epsilon floor covers the exact t=0 point
    ok = bool(np.all(dev <= tol)) and wall <= 300.0
    worst = float(np.max(dev / tol))
    assert report(1, "trajectory-ame-equivalence", ok,
                  f"max dev/tol {worst:.2f}, wall {wall:.0f}s, K=2000")


def test_criterion_02_waiting_time_identity():
    """||psi(t)||^2 tracks exp(-int lambda) to 1e-5 relative on a no-jump
    stretch of a random 2-qubit instance."""
    rng = np.random.default_rng(4242)
    problem = IsingProblem(2, h=tuple(rng.uniform(-1, 1, 2)),
                           couplings=((0, 1, float(rng.uniform(-1, 1))),))
    model = ising_model(problem, Schedule.linear(6.0, 6.0),
                        Protocol(variant="forward", tau=15.0))
    bath = BathSpec(eta_g2=5e-3, omega_c=1e3, temperature=1.57)
    gen = build_generator(model, bath, n_frames=128)
    psi0 = ground_state(model, 0.0)
    st = tj.TrajectoryState(psi=gen.to_frame(psi0, gen.segments[0]), t=0.0,
                            seg=0, rng=tj.trajectory_rng(0, 0))
    integral = 0.0
    rel_max = 0.0

    def record(piece):
        nonlocal integral, rel_max
        ts = np.linspace(piece.t_lo, piece.t_hi, 41)
        lams = np.empty(ts.size)
        for i, t in enumerate(ts):
            psi = piece.state_at(t)
            n2 = float(np.real(np.vdot(psi, psi)))
            lams[i] = float(np.real(np.vdot(psi, piece.seg.g_op @ psi))) / n2
        end_norm = piece.norm2_at(piece.t_hi)
        integral += float(simpson(lams, x=ts))
        rel = abs(end_norm - np.exp(-integral)) / np.exp(-integral)
        rel_max = max(rel_max, rel)

    tj.evolve_until_jump(st, 1e-30, gen.t_end, gen, on_dense=record)
    ok = rel_max < 1e-5
    assert report(2, "waiting-time-identity", ok, f"max rel err {rel_max:.2e}")


def test_criterion_03_eigenstate_drift():
    """Drift term annihilates nondegenerate eigenstates to 1e-10 for five
    random Hamiltonians."""
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(5):
        h = random_hermitian(6, rng, scale=3.0)
        frame = decompose(h)
        ops = [random_hermitian(6, rng) for _ in range(2)]
        lset = build_lindblads(frame, BATH, coupling_ops=ops)
        for b in range(6):
            e = np.zeros(6, dtype=complex)
            e[b] = 1.0
            acc = np.zeros_like(e)
            for op in lset:
                ada = op.matrix.conj().T @ op.matrix
                acc += 0.5 * (ada @ e - np.real(np.vdot(e, ada @ e)) * e)
            worst = max(worst, float(np.linalg.norm(acc)))
    ok = worst <= 1e-10
    assert report(3, "eigenstate-drift", ok, f"max drift norm {worst:.2e}")


def test_criterion_04_kms():
    """gamma(-w) = e^{-beta w} gamma(w) to 1e-12 over the frequency grid."""
    w = np.linspace(-1e3, 1e3, 20001)
    w = w[np.abs(w) > 1e-12]
    dev = np.abs(ohmic_rate(-w, BATH) - np.exp(-BATH.beta * w) * ohmic_rate(w, BATH))
    worst = float(np.nanmax(dev))
    ok = worst <= 1e-12
    assert report(4, "kms-detailed-balance", ok, f"max deviation {worst:.2e}")


def test_criterion_05_single_fluctuator_fid():
    """Averaged transverse component of 8000 telegraph realizations matches
    the closed-form free-induction decay within 0.05 for g = 0.8 and 5."""
    from openanneal.stats import stderr_mean
    gamma = 1.0
    grid = np.linspace(0.0, 5.0 / gamma, 101)
    psi0 = np.array([1.0, 1.0], dtype=complex) / np.sqrt(2)
    worst = {}
    ok_pointwise = True
    for g in (0.8, 5.0):
        b = g * gamma / 2.0
        samples = np.empty((8000, grid.size))
        for k in range(8000):
            rng = realization_rng(808, k)
            chi0 = 1 if rng.uniform() < 0.5 else -1
            f = Fluctuator(b=b, gamma=gamma, chi0=chi0)
            f.switch_times = switch_schedule(f, grid[-1], rng)
            states = propagate_sse(psi0, [f], grid)
            samples[k] = np.real(2.0 * states[:, 1] * states[:, 0].conj())
        m_mean = samples.mean(axis=0)
        dev = np.abs(m_mean - fid_analytic(b, gamma, grid))
        worst[g] = float(dev.max())
        sig = stderr_mean(samples)
        ok_pointwise &= bool(np.all(dev <= np.maximum(4.0 * sig, 1e-9)))
    ok = all(v <= 0.05 for v in worst.values()) and ok_pointwise
    assert report(5, "single-fluctuator-fid", ok,
                  f"sup dev g=0.8: {worst[0.8]:.3f}, g=5: {worst[5.0]:.3f}, "
                  f"pointwise<=4sigma {ok_pointwise}")


def test_criterion_06_one_over_f_spectrum():
    """Analytic Lorentzian sum over 4 decades at 100 per decade has mid-band
    log-log slope -1.00 +/- 0.10."""
    spec = FluctuatorEnsembleSpec(gamma_min=1e-2, gamma_max=1e2, b_mean=1.0,
                                  n_per_decade=100)
    fl = sample_ensemble(spec, np.random.default_rng(606))
    omega = np.logspace(-2, 2, 160)
    res = spectrum_check(fl, omega)
    ok = abs(res.slope + 1.0) <= 0.10
    assert report(6, "one-over-f-spectrum", ok, f"slope {res.slope:.3f}")


def test_criterion_07_spin_sector_bound():
    """Collective dephasing on the 4-qubit p=2 model: total success stays
    below the max-spin-sector weight of the initial state (1/4 for |0001>,
    1/6 for |0011>) and the sector population is conserved to 1e-8."""
    t0 = time.time()
    sched = Schedule.linear(8.0, 8.0)
    bath = BathSpec(eta_g2=1e-3, omega_c=1e3, temperature=1.57,
                    topology="collective")
    proj = maxspin_projector(4)
    targets = [0, 15]
    worst_success = 0.0
    worst_drift = 0.0
    for s_inv in np.linspace(0.05, 0.95, 20):
        proto = Protocol(variant="ira_experimental", tau=50.0, s_inv=float(s_inv))
        model = pspin_model(PSpinProblem(4, 2), sched, proto)
        psi0 = pattern_state((1, 1, 1, -1), 4)
        rho0 = np.outer(psi0, psi0.conj())
        gen = build_generator(model, bath)
        res = ame.propagate(model, bath, rho0, n_out=5, table=gen)
        succ = float(res.success(targets)[-1])
        sector = [float(np.real(np.trace(proj @ r))) for r in res.rhos]
        worst_success = max(worst_success, succ)
        worst_drift = max(worst_drift, abs(sector[-1] - sector[0]))
    ok_quarter = worst_success <= 0.25 + 1e-6
    # |0011> initial state: sector weight 1/6
    worst_success2 = 0.0
    for s_inv in (0.3, 0.6):
        proto = Protocol(variant="ira_experimental", tau=50.0, s_inv=s_inv)
        model = pspin_model(PSpinProblem(4, 2), sched, proto)
        psi0 = pattern_state((1, 1, -1, -1), 4)
        res = ame.propagate(model, bath, np.outer(psi0, psi0.conj()), n_out=3)
        worst_success2 = max(worst_success2, float(res.success(targets)[-1]))
    ok = (ok_quarter and worst_drift <= 1e-8
          and worst_success2 <= 1.0 / 6.0 + 1e-6)
    assert report(7, "spin-sector-bound", ok,
                  f"max success {worst_success:.4f} <= 0.25, "
                  f"|0011> {worst_success2:.4f} <= 1/6, "
                  f"sector drift {worst_drift:.1e}, wall {time.time()-t0:.0f}s")


def test_criterion_08_gibbs_steady_state():
    """Holding s = 0.5 on the 2-qubit chain for ten times the slowest
    relaxation time lands on the Gibbs state in trace distance <= 1e-3."""
    sched = Schedule.linear(8.0, 8.0)
    probe = chain_model(2, sched, Protocol(variant="fixed_point", tau=1.0,
                                           s_inv=0.5))
    h = probe.hamiltonian(0.0)
    # slowest nonzero decay rate of the explicitly vectorized Liouvillian
    frame = decompose(h)
    lset = build_lindblads(frame, BATH, coupling_ops=probe.coupling_ops)
    v = frame.vectors
    eye = np.eye(4)
    liou = -1.0j * (np.kron(h, eye) - np.kron(eye, h.conj()))
    for op in lset:
        a = v @ op.matrix @ v.conj().T
        ada = a.conj().T @ a
        liou += np.kron(a, a.conj())
        liou -= 0.5 * (np.kron(ada, eye) + np.kron(eye, ada.conj()))
    rates = -np.real(np.linalg.eigvals(liou))
    t_run = 10.0 / float(np.min(rates[rates > 1e-10]))
    model = chain_model(2, sched, Protocol(variant="fixed_point", tau=t_run,
                                           s_inv=0.5))
    psi0 = ground_state(model, 0.0)
    res = ame.propagate(model, BATH, np.outer(psi0, psi0.conj()),
                        output_times=[0.0, t_run])
    dist = ame.trace_distance(res.rhos[-1], ame.gibbs(h, BATH.beta))
    ok = dist <= 1e-3
    assert report(8, "gibbs-steady-state", ok,
                  f"trace distance {dist:.2e} after {t_run:.0f} ns")


def test_criterion_09_feedback():
    """Zero-delay cooling feedback on a single annealed qubit: trajectories
    agree with the feedback master equation and the final ground-state
    population beats the no-feedback run."""
    model = single_qubit_model(Schedule.linear(2 * 1.57, 2 * 2.01),
                               Protocol(variant="forward", tau=100.0), h=-1.0)
    bath = BathSpec(eta_g2=5e-3, omega_c=1e3, temperature=2.6)
    gen = build_generator(model, bath)
    psi0 = ground_state(model, 0.0)
    rho0 = np.outer(psi0, psi0.conj())
    out = np.linspace(0.0, 100.0, 11)
    fb = ame.FeedbackSpec(kind="lindblad_cooling", basis="energy", delay=0.0)
    res_fb = ame.propagate(model, bath, rho0, output_times=out, table=gen,
                           feedback=fb)
    res_no = ame.propagate(model, bath, rho0, output_times=out, table=gen)
    stats = tj.ensemble(gen, psi0, K=1500, master_seed=909, output_times=out,
                        fb=fb)
    dev = np.abs(stats.gs_mean - res_fb.gs_population)
    # the floor covers integrator tolerance where all trajectories coincide
    tol = np.maximum(2.0 * stats.gs_stderr, 1e-5)
    ok_agree = bool(np.all(dev <= tol))
    ok_improve = stats.gs_mean[-1] >= res_no.gs_population[-1]
    ok = ok_agree and ok_improve
    assert report(9, "feedback", ok,
                  f"max dev {dev.max():.2e}, fb {stats.gs_mean[-1]:.4f} vs "
                  f"no-fb {res_no.gs_population[-1]:.4f}")


def test_criterion_10_svmc_vs_svmc_tf():
    """Reverse annealing at s_inv = 0.9 on the 4-qubit p=2 model: SVMC-TF is
    frozen (total < 0.05 at tau = 1e3) while plain SVMC succeeds (> 0.5 at
    tau = 1e4); 10^4 samples with 2 sigma bars."""
    sched = Schedule.dwave_like()
    frozen = run_reverse_anneal(4, 2, sched, tau_sweeps=1e3, s_inv=0.9,
                                K=10000, seed=1010, variant="svmc_tf")
    mobile = run_reverse_anneal(4, 2, sched, tau_sweeps=1e4, s_inv=0.9,
                                K=10000, seed=1010, variant="svmc")
    ok = frozen.total < 0.05 and mobile.total > 0.5
    assert report(10, "svmc-vs-svmc-tf", ok,
                  f"tf {frozen.total:.4f}+-{frozen.total_err:.4f}, "
                  f"svmc {mobile.total:.4f}+-{mobile.total_err:.4f}")


def test_criterion_11_ensemble_scaling():
    """Standard error of the trajectory mean scales as K^(-0.5 +/- 0.1)."""
    model = chain_model(2, Schedule.linear(8.0, 8.0),
                        Protocol(variant="forward", tau=20.0))
    bath = BathSpec(eta_g2=1e-2, omega_c=1e3, temperature=1.57)
    gen = build_generator(model, bath)
    psi0 = ground_state(model, 0.0)
    out = np.linspace(0.0, 20.0, 5)
    ks = (250, 1000, 4000)
    sigs = []
    for k in ks:
        stats = tj.ensemble(gen, psi0, K=k, master_seed=99, output_times=out,
                            n_boot=50)
        sigs.append(float(stats.gs_stderr[-1]))
    slope = loglog_slope(ks, sigs)
    ok = abs(slope + 0.5) <= 0.1
    assert report(11, "ensemble-scaling", ok, f"fit exponent {slope:.3f}")


def test_criterion_12_determinism_and_speedup():
    """Ensembles are bit-identical for 1, 2 and 4 workers, and 4 workers give
    >= 2.8x speedup on 1000 trajectories (requires 4 physical cores)."""
    config = """
[run]
seed = 77
label = bench

[model]
kind = ising
n_qubits = 2
h = 0.25, 0
couplings = 0 1 -1

[schedule]
kind = linear

[protocol]
variant = forward
tau_ns = 20

[numerics]
output_points = 6
k_traj = 1000
n_boot = 200
"""
    cfg = parse_config(config, engine="bench")
    tables = benchmark(cfg, worker_counts=[1, 2, 4])
    rows = tables[0].rows
    identical = bool(np.all(rows[:, 3] == 1.0))
    speedup4 = float(rows[2, 2])
    ok = identical and speedup4 >= 2.8
    assert report(12, "determinism-and-speedup", ok,
                  f"identical {identical}, speedup(C=4) {speedup4:.2f} "
                  f"on {os.cpu_count()} cpu(s)")
