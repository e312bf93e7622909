"""Quantum-jump unraveling of the adiabatic master equation.

A trajectory alternates deterministic non-Hermitian evolution
(d psi/dt = -i H_eff psi with H_eff = H + H_LS - (i/2) sum A^dag A)
with stochastic jumps. The next jump fires when the decaying squared norm
of the unnormalized state crosses a uniform threshold r (the waiting-time
distribution); the channel is drawn proportionally to ||A_i psi||^2 and the
state is replaced by the normalized A_i psi. Averaging the resulting pure
states over many trajectories recovers the master-equation density matrix.

Trajectories are reproducible: each one owns a counter-based RNG stream
keyed by (master seed, trajectory index), so ensembles are bit-identical
for any worker count.
"""

from __future__ import annotations

import multiprocessing as mp
import os
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .ame import FeedbackSpec
from .liouville import GeneratorTable
from .model import SIGMA_X, SIGMA_Z
from .spectral import LindbladSet, SpectralFrame, decompose
from .stats import bootstrap_interval, stderr_mean

__all__ = [
    "JumpEvent", "TrajectoryState", "TrajectoryRecord", "EnsembleStatistics",
    "trajectory_rng", "h_eff", "jump_rate", "dt_bound",
    "evolve_until_jump", "select_and_apply_jump", "run_trajectory", "ensemble",
]


def trajectory_rng(master_seed: int, index: int) -> np.random.Generator:
    """Counter-based stream for one trajectory; order-independent parallelism."""
    return np.random.Generator(np.random.Philox(key=np.array(
        [master_seed & 0xFFFFFFFFFFFFFFFF, index & 0xFFFFFFFFFFFFFFFF],
        dtype=np.uint64)))


@dataclass
class JumpEvent:
    t: float
    alpha: int
    omega: float
    pre_level: int
    post_level: int


@dataclass
class TrajectoryState:
    """Unnormalized state in the frame basis of generator segment `seg`."""

    psi: np.ndarray
    t: float
    seg: int
    rng: np.random.Generator
    pending: list = field(default_factory=list)  # [(due, op record), ...]
    leakage: float = 0.0

    @property
    def norm2(self) -> float:
        return float(np.real(np.vdot(self.psi, self.psi)))


@dataclass
class TrajectoryRecord:
    index: int
    times: np.ndarray
    gs_population: np.ndarray
    success: np.ndarray
    jumps: list
    final_psi: np.ndarray  # computational basis, normalized
    leakage: float


@dataclass
class EnsembleStatistics:
    """Per-time-point trajectory statistics with bootstrap confidence bands."""

    times: np.ndarray
    gs_mean: np.ndarray
    gs_stderr: Optional[np.ndarray]
    gs_ci_low: Optional[np.ndarray]
    gs_ci_high: Optional[np.ndarray]
    success_mean: np.ndarray
    success_stderr: Optional[np.ndarray]
    success_ci_low: Optional[np.ndarray]
    success_ci_high: Optional[np.ndarray]
    net_jump_bins: np.ndarray    # bin edges over time
    net_jumps: np.ndarray        # (toward GS) - (away from GS) per bin
    n_traj: int
    master_seed: int
    gs_samples: Optional[np.ndarray] = None   # (K, n_t) when kept
    jump_events: Optional[np.ndarray] = None  # (n, 6): traj, t, alpha, omega, pre, post


# ---------------------------------------------------------------------------
# Explicit-operator helpers (reference path; the engine uses the table)
# ---------------------------------------------------------------------------

def h_eff(frame: SpectralFrame, lindblads: LindbladSet,
          lamb_op: Optional[np.ndarray] = None) -> np.ndarray:
    """H_S + H_LS - (i/2) sum_i A_i^dag A_i in the frame's eigenbasis."""
    h = np.diag(frame.energies.astype(complex))
    if lamb_op is not None:
        h = h + lamb_op
    acc = np.zeros_like(h)
    for op in lindblads:
        a = op.matrix if lindblads.rates_absorbed else np.sqrt(op.rate) * op.matrix
        acc += a.conj().T @ a
    return h - 0.5j * acc


def jump_rate(psi: np.ndarray, lindblads: LindbladSet):
    """Total rate lambda = sum_i ||A_i psi||^2 plus the per-channel weights."""
    psi = np.asarray(psi, dtype=complex)
    n2 = float(np.real(np.vdot(psi, psi)))
    weights = []
    for op in lindblads:
        a = op.matrix if lindblads.rates_absorbed else np.sqrt(op.rate) * op.matrix
        weights.append(float(np.sum(np.abs(a @ psi) ** 2)) / n2)
    w = np.asarray(weights)
    return float(w.sum()), w


def dt_bound(t: float, gen: GeneratorTable, psi: Optional[np.ndarray] = None,
             delta: Optional[float] = None) -> float:
    """Admissible step: min of 2||H_eff||/||dH_eff/dt||, 1/||H_eff|| and
    |lambda/(lambda^2 - dlambda/dt)|, derivatives by central differences.

    H_eff combines the model's (continuous) Hamiltonian drive with the
    tabulated dissipative part; the lambda term needs a state and is
    omitted when the jump rate vanishes.
    """
    seg = gen.segment_at(t)
    span = gen.t_end - gen.t_start
    if delta is None:
        delta = max(1e-6 * span, 1e-12)
    lo = max(gen.t_start, t - delta)
    hi = min(gen.t_end, t + delta)

    def h_eff_comp(tt):
        sg = gen.segment_at(tt)
        v = sg.frame.vectors
        diss = v @ (sg.h_ls - 0.5j * sg.g_op) @ v.conj().T
        return gen.model.hamiltonian(tt).astype(complex) + diss

    h_now = h_eff_comp(t)
    h_dot = (h_eff_comp(hi) - h_eff_comp(lo)) / (hi - lo)
    h_norm = float(np.linalg.norm(h_now, 2))
    terms = [1.0 / h_norm] if h_norm > 0 else []
    hd_norm = float(np.linalg.norm(h_dot, 2))
    if hd_norm > 1e-30:
        terms.append(2.0 * h_norm / hd_norm)
    if psi is not None:
        psi = np.asarray(psi, dtype=complex)
        n2 = float(np.real(np.vdot(psi, psi)))
        lam = float(np.real(np.vdot(psi, seg.g_op @ psi))) / n2
        if lam > 1e-30:
            # frozen-state sensitivity of lambda to the tabulated generator
            lam_hi = float(np.real(np.vdot(psi, gen.segment_at(hi).g_op @ psi))) / n2
            lam_lo = float(np.real(np.vdot(psi, gen.segment_at(lo).g_op @ psi))) / n2
            lam_dot = (lam_hi - lam_lo) / (hi - lo)
            denom = lam * lam - lam_dot
            if abs(denom) > 1e-30:
                terms.append(abs(lam / denom))
    if not terms:
        return np.inf
    return float(min(terms))


# ---------------------------------------------------------------------------
# Deterministic stretches and jumps
# ---------------------------------------------------------------------------

class DensePiece:
    """Exact dense view of one deterministic stretch in a frozen segment:
    psi(t) = exp(-i H_eff (t - t_lo)) psi_0, evaluated through the cached
    non-Hermitian eigendecomposition."""

    def __init__(self, seg, t_lo, t_hi, coeffs):
        self.seg = seg
        self.t_lo = t_lo
        self.t_hi = t_hi
        self.coeffs = coeffs

    def state_at(self, t: float) -> np.ndarray:
        """Unnormalized frame-basis state at time t within the piece."""
        return self.seg.state_from_coeffs(self.coeffs, t - self.t_lo)

    def norm2_at(self, t: float) -> float:
        psi = self.state_at(t)
        return float(np.real(np.vdot(psi, psi)))


def _bisect_crossing(piece: DensePiece, r: float, time_tol: float = 1e-4) -> float:
    """Crossing time of ||psi||^2 = r inside the piece, bisected to a
    relative time tolerance (the squared norm decreases monotonically)."""
    lo, hi = piece.t_lo, piece.t_hi
    while hi - lo > time_tol * max(abs(hi), 1e-30):
        mid = 0.5 * (lo + hi)
        if piece.norm2_at(mid) <= r:
            hi = mid
        else:
            lo = mid
    return hi


def evolve_until_jump(state: TrajectoryState, r: float, t_stop: float,
                      gen: GeneratorTable, *, rtol: float = 1e-8,
                      atol: float = 1e-10,
                      on_dense: Optional[Callable] = None) -> bool:
    """Evolve under exp(-i H_eff t) until <psi|psi> <= r or t_stop is reached.

    Propagation through each frozen segment is an exact matrix exponential
    (cached eigendecomposition); the jump condition is located by bisection
    on the monotonically decaying squared norm to 1e-4 relative in time.
    Returns True if the jump fired. `on_dense(piece)` is invoked with a
    DensePiece per stretch so callers can sample on their own grid. (rtol
    and atol are kept for signature compatibility; propagation is exact.)
    """
    if not (0.0 < r < 1.0):
        raise ValueError("threshold r must lie in (0, 1)")
    while state.t < t_stop - 1e-12:
        if state.norm2 <= r:
            return True
        seg = gen.segments[state.seg]
        t1 = min(seg.t1, t_stop)
        coeffs = seg.propagate_coeffs(state.psi)
        piece = DensePiece(seg, state.t, t1, coeffs)
        psi_end = seg.state_from_coeffs(coeffs, t1 - state.t)
        n2_end = float(np.real(np.vdot(psi_end, psi_end)))
        if n2_end <= r:
            t_hit = _bisect_crossing(piece, r)
            piece.t_hi = t_hit
            if on_dense is not None:
                on_dense(piece)
            state.psi = piece.state_at(t_hit)
            state.t = t_hit
            return True
        if on_dense is not None:
            on_dense(piece)
        state.psi = psi_end
        state.t = t1
        if t1 >= seg.t1 - 1e-12 and state.seg + 1 < len(gen.segments):
            nxt = gen.segments[state.seg + 1]
            psi = gen.remap(state.psi, seg, nxt)
            if gen.n_keep is not None:
                before = state.norm2
                after = float(np.real(np.vdot(psi, psi)))
                lost = max(0.0, before - after)
                state.leakage += lost
                if after > 0:
                    psi = psi * np.sqrt(before / after)
            state.psi = psi
            state.seg += 1
    return False


def select_and_apply_jump(state: TrajectoryState, gen: GeneratorTable) -> JumpEvent:
    """Draw the channel with probability ||A_i psi||^2 / lambda and apply it."""
    seg = gen.segments[state.seg]
    norm = np.sqrt(state.norm2)
    psi_n = state.psi / norm
    weights, descr = gen.channel_weights(psi_n, seg)
    total = weights.sum()
    if total <= 0:
        raise RuntimeError("jump fired with no available channel")
    u = state.rng.uniform() * total
    idx = int(np.searchsorted(np.cumsum(weights), u, side="right"))
    idx = min(idx, len(descr) - 1)
    kind, ci = descr[idx]
    pre_level = int(np.argmax(np.abs(psi_n) ** 2))
    out, alpha, omega = gen.apply_channel(psi_n, seg, kind, ci)
    nrm = np.linalg.norm(out)
    if nrm == 0:
        raise RuntimeError("selected channel annihilated the state")
    state.psi = out / nrm
    post_level = int(np.argmax(np.abs(state.psi) ** 2))
    return JumpEvent(t=state.t, alpha=alpha, omega=omega,
                     pre_level=pre_level, post_level=post_level)


# ---------------------------------------------------------------------------
# Feedback bookkeeping
# ---------------------------------------------------------------------------

def _feedback_record(fb: FeedbackSpec, gen: GeneratorTable, seg, event: JumpEvent):
    """Concrete correction operator, fixed at detection time (comp. basis)."""
    v = seg.frame.vectors
    if fb.kind == "lindblad_cooling":
        # adjoint dyad of the detected excitation: |pre><post| at the jump frame
        u = v[:, event.pre_level]
        w = v[:, event.post_level]
        return ("dyad", u.copy(), w.copy())
    if fb.basis == "energy":
        return ("pulse", v[:, 0].copy(), v[:, 1].copy())
    sig = SIGMA_X if fb.basis == "comp_x" else SIGMA_Z
    if v.shape[0] != 2:
        raise ValueError("computational-basis pulses are defined for a single qubit")
    return ("unitary", -1.0j * np.asarray(sig, dtype=complex))


def _apply_feedback(state: TrajectoryState, gen: GeneratorTable, record) -> None:
    """Apply the correction, preserving the accumulated no-jump norm."""
    seg = gen.segments[state.seg]
    psi_c = gen.from_frame(state.psi, seg)
    kind = record[0]
    if kind == "dyad":
        _, u, w = record
        out = u * np.vdot(w, psi_c)
    elif kind == "pulse":
        _, v0, v1 = record
        a0 = np.vdot(v0, psi_c)
        a1 = np.vdot(v1, psi_c)
        out = psi_c - v0 * a0 - v1 * a1 - 1.0j * (v0 * a1 + v1 * a0)
    else:
        _, u_mat = record
        out = u_mat @ psi_c
    nrm_out = np.linalg.norm(out)
    if nrm_out < 1e-14:
        return  # nothing to correct; leave the state untouched
    out = out * (np.sqrt(state.norm2) / nrm_out)
    state.psi = gen.to_frame(out, seg)


# ---------------------------------------------------------------------------
# Single trajectory
# ---------------------------------------------------------------------------

def _observation_frames(gen: GeneratorTable, times: np.ndarray):
    """Chained exact frames at the output times (shared by both engines)."""
    frames = []
    prev = None
    for t in times:
        prev = decompose(gen.model.hamiltonian(t), prev, t=t)
        frames.append(prev)
    return frames


class _GridRecorder:
    def __init__(self, gen, times, obs_frames, targets):
        self.gen = gen
        self.times = times
        self.gs = np.empty(times.size)
        self.success = np.zeros(times.size)
        self.targets = list(targets) if targets is not None else None
        self.v0 = [f.vectors[:, 0] for f in obs_frames]
        self.p = 0

    def __call__(self, piece: "DensePiece"):
        while self.p < self.times.size and self.times[self.p] <= piece.t_hi + 1e-12:
            t = float(min(max(self.times[self.p], piece.t_lo), piece.t_hi))
            y = piece.state_at(t)
            y = y / np.linalg.norm(y)
            psi_c = self.gen.from_frame(y, piece.seg)
            self.gs[self.p] = abs(np.vdot(self.v0[self.p], psi_c)) ** 2
            if self.targets is not None:
                self.success[self.p] = float(np.sum(np.abs(psi_c[self.targets]) ** 2))
            self.p += 1


def run_trajectory(index: int, gen: GeneratorTable, psi0: np.ndarray,
                   output_times: np.ndarray, *, master_seed: int = 0,
                   fb: Optional[FeedbackSpec] = None,
                   rtol: float = 1e-8, atol: float = 1e-10,
                   targets: Optional[Sequence[int]] = None,
                   obs_frames=None) -> TrajectoryRecord:
    """One quantum-jump trajectory; bit-reproducible for a given (seed, index)."""
    output_times = np.asarray(output_times, dtype=float)
    if obs_frames is None:
        obs_frames = _observation_frames(gen, output_times)
    rng = trajectory_rng(master_seed, index)
    seg0 = gen.segments[0]
    psi_f = gen.to_frame(np.asarray(psi0, dtype=complex), seg0)
    leak0 = 0.0
    n2 = float(np.real(np.vdot(psi_f, psi_f)))
    if gen.n_keep is not None and n2 < 1.0:
        leak0 = 1.0 - n2
        psi_f = psi_f / np.sqrt(n2)
    state = TrajectoryState(psi=psi_f, t=gen.t_start, seg=0, rng=rng)
    state.leakage = leak0
    rec = _GridRecorder(gen, output_times, obs_frames, targets)
    t_end = gen.t_end
    jumps = []
    r = float(rng.uniform())
    while state.t < t_end - 1e-12:
        due = state.pending[0][0] if state.pending else np.inf
        t_stop = min(t_end, max(due, state.t))
        jumped = evolve_until_jump(state, r, t_stop, gen, rtol=rtol, atol=atol,
                                   on_dense=rec)
        if jumped:
            event = select_and_apply_jump(state, gen)
            jumps.append(event)
            if fb is not None and event.omega < -gen.omega_tol:
                seg = gen.segments[state.seg]
                record = _feedback_record(fb, gen, seg, event)
                state.pending.append((state.t + fb.delay, record))
                state.pending.sort(key=lambda item: item[0])
            r = float(rng.uniform())
        while state.pending and state.pending[0][0] <= state.t + 1e-12:
            _, record = state.pending.pop(0)
            _apply_feedback(state, gen, record)
    # flush any grid points sitting exactly at the end
    if rec.p < output_times.size:
        seg = gen.segments[state.seg]
        psi_c = gen.from_frame(state.psi / np.sqrt(state.norm2), seg)
        while rec.p < output_times.size:
            rec.gs[rec.p] = abs(np.vdot(rec.v0[rec.p], psi_c)) ** 2
            if rec.targets is not None:
                rec.success[rec.p] = float(np.sum(np.abs(psi_c[rec.targets]) ** 2))
            rec.p += 1
    seg = gen.segments[state.seg]
    final_psi = gen.from_frame(state.psi / np.sqrt(state.norm2), seg)
    return TrajectoryRecord(index=index, times=output_times, gs_population=rec.gs,
                            success=rec.success, jumps=jumps, final_psi=final_psi,
                            leakage=state.leakage)


# ---------------------------------------------------------------------------
# Ensembles
# ---------------------------------------------------------------------------

_WORKER_PAYLOAD = {}


def _init_worker(payload):
    _WORKER_PAYLOAD["p"] = payload


def _run_indexed(index):
    p = _WORKER_PAYLOAD["p"]
    rec = run_trajectory(index, p["gen"], p["psi0"], p["times"],
                         master_seed=p["seed"], fb=p["fb"], rtol=p["rtol"],
                         atol=p["atol"], targets=p["targets"],
                         obs_frames=p["obs_frames"])
    jump_arr = np.array([[e.t, e.alpha, e.omega, e.pre_level, e.post_level]
                         for e in rec.jumps], dtype=float).reshape(-1, 5)
    return index, rec.gs_population, rec.success, jump_arr, rec.leakage


def ensemble(gen: GeneratorTable, psi0: np.ndarray, K: int, master_seed: int,
             workers: int = 1, *, output_times: Optional[np.ndarray] = None,
             n_out: int = 101, fb: Optional[FeedbackSpec] = None,
             targets: Optional[Sequence[int]] = None,
             rtol: float = 1e-8, atol: float = 1e-10, n_boot: int = 1000,
             n_jump_bins: int = 16, keep_samples: bool = False,
             keep_jumps: bool = False) -> EnsembleStatistics:
    """Average K trajectories; deterministic for fixed (seed, K) and any workers."""
    if K < 1:
        raise ValueError("K must be at least 1")
    workers = max(1, min(int(workers), K))
    if output_times is None:
        output_times = np.linspace(gen.t_start, gen.t_end, n_out)
    output_times = np.asarray(output_times, dtype=float)
    obs_frames = _observation_frames(gen, output_times)
    payload = {"gen": gen, "psi0": np.asarray(psi0, dtype=complex),
               "times": output_times, "seed": int(master_seed), "fb": fb,
               "rtol": rtol, "atol": atol, "targets": targets,
               "obs_frames": obs_frames}
    if workers == 1:
        _init_worker(payload)
        results = [_run_indexed(i) for i in range(K)]
    else:
        ctx = mp.get_context("fork")
        chunk = max(1, K // (workers * 8))
        with ctx.Pool(workers, initializer=_init_worker,
                      initargs=(payload,)) as pool:
            results = pool.map(_run_indexed, range(K), chunksize=chunk)
    results.sort(key=lambda r: r[0])
    gs = np.stack([r[1] for r in results])
    success = np.stack([r[2] for r in results])
    jump_blocks = []
    for idx, _, _, jarr, _ in results:
        if jarr.size:
            jump_blocks.append(np.column_stack([np.full(len(jarr), idx), jarr]))
    all_with_idx = np.vstack(jump_blocks) if jump_blocks else np.empty((0, 6))
    all_jumps = all_with_idx[:, 1:]

    gs_mean = gs.mean(axis=0)
    success_mean = success.mean(axis=0)
    if K >= 2:
        gs_err = stderr_mean(gs)
        success_err = stderr_mean(success)
        boot_rng = np.random.Generator(np.random.Philox(
            key=np.array([master_seed & 0xFFFFFFFFFFFFFFFF, 0xFFFFFFFFFFFFFFFF],
                         dtype=np.uint64)))
        gs_lo, gs_hi = bootstrap_interval(gs, boot_rng, n_boot=n_boot)
        sc_lo, sc_hi = bootstrap_interval(success, boot_rng, n_boot=n_boot)
    else:
        gs_err = success_err = gs_lo = gs_hi = sc_lo = sc_hi = None

    bins = np.linspace(gen.t_start, gen.t_end, n_jump_bins + 1)
    net = np.zeros(n_jump_bins)
    if all_jumps.size:
        toward = (all_jumps[:, 4] == 0) & (all_jumps[:, 3] != 0)
        away = (all_jumps[:, 3] == 0) & (all_jumps[:, 4] != 0)
        sign = toward.astype(int) - away.astype(int)
        which = np.clip(np.digitize(all_jumps[:, 0], bins) - 1, 0, n_jump_bins - 1)
        np.add.at(net, which, sign)

    return EnsembleStatistics(
        times=output_times, gs_mean=gs_mean, gs_stderr=gs_err,
        gs_ci_low=gs_lo, gs_ci_high=gs_hi, success_mean=success_mean,
        success_stderr=success_err, success_ci_low=sc_lo, success_ci_high=sc_hi,
        net_jump_bins=bins, net_jumps=net, n_traj=K, master_seed=master_seed,
        gs_samples=gs if keep_samples else None,
        jump_events=all_with_idx if keep_jumps else None)
