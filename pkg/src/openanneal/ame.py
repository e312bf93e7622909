"""Direct density-matrix propagation of the adiabatic master equation.

The generator is -i[H + H_LS, rho] + sum_i gamma_i (L rho L^dag -
{L^dag L, rho}/2) with jump operators in the instantaneous eigenbasis.
A Markovian feedback variant conjugates the thermal-excitation channel
by the feedback pulse. The long-time fixed point at constant H is the
Gibbs state, which doubles as a regression oracle.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .liouville import GeneratorTable, Segment, build_generator
from .rk import integrate_norm_event
from .model import AnnealModel, SIGMA_X, SIGMA_Z
from .spectral import BathSpec, DEFAULT_OMEGA_TOL, SpectralFrame, decompose, build_lindblads, lamb_shift

__all__ = [
    "DensityState", "FeedbackSpec", "AMEResult", "PositivityError",
    "UnsupportedFeedbackError", "ame_rhs", "feedback_rhs", "propagate",
    "gibbs", "observables", "trace_distance",
]


class PositivityError(RuntimeError):
    """Density matrix left the positive cone beyond tolerance; run aborted."""


class UnsupportedFeedbackError(ValueError):
    """Delayed feedback cannot be treated at the master-equation level."""


@dataclass
class DensityState:
    """Density matrix with a basis tag ('computational' or 'frame')."""

    rho: np.ndarray
    t: float = 0.0
    basis: str = "computational"

    def validate(self, herm_tol=1e-10, trace_tol=1e-8, pos_tol=1e-8):
        r = self.rho
        if np.abs(r - r.conj().T).max() > herm_tol:
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(r).real - 1.0) > trace_tol:
            raise ValueError("density matrix trace differs from 1")
        if np.linalg.eigvalsh(r).min() < -pos_tol:
            raise ValueError("density matrix has a negative eigenvalue")
        return self

    @classmethod
    def from_pure(cls, psi: np.ndarray, t: float = 0.0) -> "DensityState":
        psi = np.asarray(psi, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        return cls(rho=np.outer(psi, psi.conj()), t=t)


@dataclass(frozen=True)
class FeedbackSpec:
    """Correction applied after a detected thermal excitation.

    kind 'lindblad_cooling' applies the adjoint of the excitation dyad
    (a damping channel); 'hamiltonian_pulse' applies exp(-i H_fb) with a
    pi/2 pulse in the chosen basis. delay is in ns; the master equation
    supports only delay = 0 (use the trajectories module otherwise).
    """

    kind: str = "lindblad_cooling"
    basis: str = "energy"  # energy | comp_x | comp_z
    delay: float = 0.0

    def __post_init__(self):
        if self.kind not in ("lindblad_cooling", "hamiltonian_pulse"):
            raise ValueError(f"unknown feedback kind {self.kind!r}")
        if self.basis not in ("energy", "comp_x", "comp_z"):
            raise ValueError(f"unknown feedback basis {self.basis!r}")
        if self.delay < 0:
            raise ValueError("delay must be nonnegative")


def _pulse_unitary_frame(seg_dim: int) -> np.ndarray:
    """exp(-i (pi/2) X) on the lowest two levels, identity elsewhere."""
    u = np.eye(seg_dim, dtype=complex)
    u[0, 0] = u[1, 1] = 0.0
    u[0, 1] = u[1, 0] = -1.0j
    return u


def feedback_transform_frame(fb: FeedbackSpec, seg: Segment, channel_mat: np.ndarray):
    """Frame-basis operator replacing an excitation jump operator A -> F A."""
    k = seg.k
    if fb.kind == "lindblad_cooling":
        # adjoint dyad of the bare excitation operator
        bare = channel_mat.copy()
        nrm = np.abs(bare).max()
        if nrm > 0:
            bare = bare / nrm
        f = bare.conj().T
    elif fb.basis == "energy":
        f = _pulse_unitary_frame(k)
    else:
        if k != 2:
            raise ValueError("computational-basis pulses are defined for a single qubit")
        sig = SIGMA_X if fb.basis == "comp_x" else SIGMA_Z
        u_comp = -1.0j * np.asarray(sig, dtype=complex)  # exp(-i pi/2 sigma)
        v = seg.frame.vectors
        f = v.conj().T @ u_comp @ v
    return f @ channel_mat


# ---------------------------------------------------------------------------
# Right-hand sides (fresh construction; reference path used by the tests)
# ---------------------------------------------------------------------------

def _fresh_lindblads(t, model: AnnealModel, bath: BathSpec, omega_tol, lamb):
    frame = decompose(model.hamiltonian(t), t=t)
    ops = list(model.coupling_ops)
    lset = build_lindblads(frame, bath, omega_tol, coupling_ops=ops)
    h_ls = lamb_shift(lset, bath, enabled=lamb)
    return frame, lset, h_ls


def ame_rhs(rho: np.ndarray, t: float, model: AnnealModel, bath: BathSpec, *,
            omega_tol: float = DEFAULT_OMEGA_TOL, lamb: bool = False) -> np.ndarray:
    """d rho / dt in the computational basis, built from scratch at time t."""
    frame, lset, h_ls = _fresh_lindblads(t, model, bath, omega_tol, lamb)
    v = frame.vectors
    h = model.hamiltonian(t).astype(complex) + v @ h_ls @ v.conj().T
    out = -1.0j * (h @ rho - rho @ h)
    rho_f = v.conj().T @ rho @ v
    diss = np.zeros_like(rho_f)
    for op in lset:
        a = op.matrix
        ada = a.conj().T @ a
        diss += a @ rho_f @ a.conj().T - 0.5 * (ada @ rho_f + rho_f @ ada)
    return out + v @ diss @ v.conj().T


def feedback_rhs(rho: np.ndarray, t: float, model: AnnealModel, bath: BathSpec,
                 fb: Optional[FeedbackSpec], *, omega_tol: float = DEFAULT_OMEGA_TOL,
                 lamb: bool = False) -> np.ndarray:
    """Feedback master equation (zero-delay limit): the excitation jump term
    is conjugated by the feedback operation, all other channels unchanged.
    A trivial correction (fb None) reduces entrywise to the plain generator."""
    if fb is None:
        return ame_rhs(rho, t, model, bath, omega_tol=omega_tol, lamb=lamb)
    if fb.delay != 0.0:
        raise UnsupportedFeedbackError(
            "nonzero feedback delay is a trajectory-level feature")
    frame, lset, h_ls = _fresh_lindblads(t, model, bath, omega_tol, lamb)
    v = frame.vectors
    h = model.hamiltonian(t).astype(complex) + v @ h_ls @ v.conj().T
    out = -1.0j * (h @ rho - rho @ h)
    rho_f = v.conj().T @ rho @ v
    diss = np.zeros_like(rho_f)
    for op in lset:
        a = op.matrix
        ada = a.conj().T @ a
        if op.omega < -omega_tol:
            dim = a.shape[0]
            seg = _segment_like(frame, dim)
            b = feedback_transform_frame(fb, seg, a)
            diss += b @ rho_f @ b.conj().T - 0.5 * (ada @ rho_f + rho_f @ ada)
        else:
            diss += a @ rho_f @ a.conj().T - 0.5 * (ada @ rho_f + rho_f @ ada)
    return out + v @ diss @ v.conj().T


def _segment_like(frame: SpectralFrame, dim: int):
    class _S:
        pass

    s = _S()
    s.k = dim
    s.frame = frame
    return s


# ---------------------------------------------------------------------------
# Gibbs state and observables
# ---------------------------------------------------------------------------

def gibbs(h: np.ndarray, beta: float) -> np.ndarray:
    """exp(-beta H)/Z via max-eigenvalue shift; trace is 1 to 1e-12."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    evals, vecs = np.linalg.eigh(np.asarray(h))
    w = np.exp(-beta * (evals - evals.min()))
    w /= w.sum()
    return (vecs * w) @ vecs.conj().T


def trace_distance(rho: np.ndarray, sigma: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.linalg.eigvalsh(rho - sigma)).sum())


def observables(state, frame: SpectralFrame, targets: Optional[Sequence[int]] = None):
    """Populations in the instantaneous eigenbasis, the computational diagonal,
    and (optionally) summed populations of target computational states."""
    v = frame.vectors
    arr = state.rho if isinstance(state, DensityState) else np.asarray(state)
    if arr.ndim == 1:
        psi_f = v.conj().T @ arr
        pops = np.abs(psi_f) ** 2
        comp = np.abs(arr) ** 2
    else:
        pops = np.real(np.einsum("ia,ij,ja->a", v.conj(), arr, v))
        comp = np.real(np.diag(arr))
    out = {"populations": pops, "comp_diag": comp, "gs_population": float(pops[0])}
    if targets is not None:
        out["success"] = float(np.sum(comp[list(targets)]))
    return out


# ---------------------------------------------------------------------------
# Propagation
# ---------------------------------------------------------------------------

@dataclass
class AMEResult:
    times: np.ndarray
    rhos: list                     # computational-basis density matrices
    gs_population: np.ndarray
    populations: np.ndarray        # (n_out, k)
    comp_diag: np.ndarray          # (n_out, d)
    trace_drift: np.ndarray        # Tr rho - 1, reported, never applied
    leakage: float                 # total population lost to truncation remaps
    table: GeneratorTable

    def success(self, targets) -> np.ndarray:
        return self.comp_diag[:, list(targets)].sum(axis=1)


def propagate(model: AnnealModel, bath: BathSpec, rho0: np.ndarray, *,
              t_span=None, output_times=None, n_out: int = 101,
              rtol: float = 1e-8, atol: float = 1e-10,
              n_frames=None, omega_tol: float = DEFAULT_OMEGA_TOL,
              lamb: bool = False, n_keep: Optional[int] = None,
              feedback: Optional[FeedbackSpec] = None,
              table: Optional[GeneratorTable] = None,
              pos_tol: float = 1e-6) -> AMEResult:
    """Integrate the master equation over the protocol (or t_span).

    The state is stored in the instantaneous eigenbasis segment by segment;
    trace drift is recorded, never renormalized, and positivity violations
    beyond pos_tol abort the run.
    """
    if feedback is not None and feedback.delay != 0.0:
        raise UnsupportedFeedbackError(
            "nonzero feedback delay is a trajectory-level feature")
    if table is None:
        table = build_generator(model, bath, t_span=t_span, n_frames=n_frames,
                                omega_tol=omega_tol, lamb=lamb, n_keep=n_keep)
    t0, t1 = table.t_start, table.t_end
    if output_times is None:
        output_times = np.linspace(t0, t1, n_out)
    output_times = np.sort(np.asarray(output_times, dtype=float))

    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.ndim == 1:
        rho0 = np.outer(rho0, rho0.conj())
    DensityState(rho0).validate()

    fb_ops = _feedback_ops(table, feedback) if feedback is not None else None

    seg0 = table.segments[0]
    rho_f = table.to_frame(rho0, seg0)
    leakage = max(0.0, 1.0 - float(np.trace(rho_f).real)) if table.n_keep else 0.0

    out_rhos = []
    out_times = []
    n_seg = len(table.segments)
    for j, seg in enumerate(table.segments):
        k = seg.k
        eps = seg.frame.energies
        fb_j = fb_ops[j] if fb_ops is not None else None

        # interaction picture of diag(eps): the remaining generator is static
        # (channel phases cancel within each Bohr group), so steps span whole
        # segments; feedback-conjugated channels keep explicit phases.
        def rhs(t, y, seg=seg, fb_j=fb_j, eps=eps, t_ref=seg.t0):
            rho = y.reshape(k, k)
            h = seg.h_ls
            out = -1.0j * (h @ rho - rho @ h)
            if fb_j is None:
                out += table.dissipator_frame(rho, seg)
            else:
                out += _feedback_dissipator(rho, seg, fb_j, eps, t - t_ref)
            return out.ravel()

        t_end, y_end, dense, _ = integrate_norm_event(
            rhs, seg.t0, seg.t1, rho_f.ravel(), rtol=rtol, atol=atol)
        hi = seg.t1 if j == n_seg - 1 else seg.t1 - 1e-12
        sel = output_times[(output_times >= seg.t0 - 1e-12) & (output_times <= hi)]
        for ti in sel:
            tc = min(max(float(ti), seg.t0), seg.t1)
            yi = dense(tc) if dense.t0s else rho_f.ravel()
            rho_i = _undo_rotation(yi.reshape(k, k), eps, tc - seg.t0)
            out_times.append(float(ti))
            out_rhos.append(table.from_frame(rho_i, seg))
        rho_f = _undo_rotation(y_end.reshape(k, k), eps, seg.t1 - seg.t0)
        if j + 1 < n_seg:
            tr_before = float(np.trace(rho_f).real)
            rho_f = table.remap(rho_f, seg, table.segments[j + 1])
            leakage += max(0.0, tr_before - float(np.trace(rho_f).real))

    times = np.asarray(out_times)
    rhos = out_rhos
    gs = np.empty(times.size)
    pops = None
    comp = np.empty((times.size, rho0.shape[0]))
    trace_drift = np.empty(times.size)
    prev_frame = None
    for i, (ti, ri) in enumerate(zip(times, rhos)):
        frame = decompose(model.hamiltonian(ti), prev_frame, t=ti)
        prev_frame = frame
        obs = observables(ri, frame)
        if pops is None:
            pops = np.empty((times.size, obs["populations"].size))
        gs[i] = obs["gs_population"]
        pops[i] = obs["populations"]
        comp[i] = obs["comp_diag"]
        trace_drift[i] = np.trace(ri).real - 1.0
        min_eig = float(np.linalg.eigvalsh(ri).min())
        if min_eig < -pos_tol:
            raise PositivityError(
                f"min eigenvalue {min_eig:.3e} at t={ti:.6g} ns; aborting")
    return AMEResult(times=times, rhos=rhos, gs_population=gs, populations=pops,
                     comp_diag=comp, trace_drift=trace_drift, leakage=leakage,
                     table=table)


def _undo_rotation(rho_tilde: np.ndarray, eps: np.ndarray, dt: float) -> np.ndarray:
    """Back to the Schroedinger picture: rho = e^{-i D dt} rho_tilde e^{+i D dt}."""
    u = np.exp(-1.0j * eps * dt)
    return (rho_tilde * u[:, None]) * u.conj()[None, :]


def _feedback_ops(table: GeneratorTable, fb: FeedbackSpec):
    """Per segment: excitation channels replaced by conjugated dense ops."""
    per_seg = []
    for seg in table.segments:
        exc = table.excitation_channels(seg)
        dense = []
        drop_single = np.zeros((seg.k, seg.k), dtype=bool)
        drop_multi = set()
        for kind, idx in exc:
            if kind == "single":
                a, b = seg.sing_a[idx], seg.sing_b[idx]
                mat = np.zeros((seg.k, seg.k), dtype=complex)
                mat[a, b] = seg.sing_val[idx]
                drop_single[a, b] = True
            else:
                _, _, mat = seg.multi_ops[idx]
                drop_multi.add(idx)
            dense.append(feedback_transform_frame(fb, seg, mat))
        w_single = seg.w_single.copy()
        w_single[drop_single] = 0.0
        keep_multi = [m for i, m in enumerate(seg.multi_ops) if i not in drop_multi]
        per_seg.append((w_single, keep_multi, dense))
    return per_seg


def _feedback_dissipator(rho, seg, fb_parts, eps, dt):
    """Dissipator with conjugated excitation channels, in the rotated picture.

    Ordinary channels are frequency-pure so their phases cancel; the
    feedback-conjugated operators are not, so they carry explicit phases.
    """
    w_single, keep_multi, dense = fb_parts
    out = np.zeros_like(rho)
    np.fill_diagonal(out, w_single @ np.real(np.diag(rho)))
    for _, _, mat in keep_multi:
        out = out + mat @ rho @ mat.conj().T
    u = np.exp(1.0j * eps * dt)
    for b in dense:
        b_t = (b * u[:, None]) * u.conj()[None, :]
        out = out + b_t @ rho @ b_t.conj().T
    g = seg.g_op
    return out - 0.5 * (g @ rho + rho @ g)
