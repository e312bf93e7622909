"""Precomputed dissipative generator along a protocol.

The protocol span is divided into short segments; within each segment the
full generator (Hamiltonian, frame, Bohr groups, rates, Lamb shift) is
frozen at the segment midpoint, and states are stored in the segment's
instantaneous eigenbasis. Crossing a boundary re-expresses the state in
the next frame via the overlap matrix (an exact basis change; with
truncation to n_keep levels the lost population is reported, never
hidden). The segment length is chosen automatically from the adiabatic
step bound min(2||H||/||dH/dt||, 1/||H||, 1/lambda_max), so freezing is
legitimate at the scale the jump algorithm requires anyway.

Both the density-matrix and the trajectory engines consume the same
table, so their generators agree exactly; trajectories additionally get
the exact non-Hermitian eigendecomposition of each segment's effective
Hamiltonian, making the deterministic stretches a cached matrix product
per segment.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import AnnealModel
from .spectral import (BathSpec, DEFAULT_OMEGA_TOL, SpectralFrame, decompose,
                       group_bohr, ohmic_rate)

__all__ = ["Segment", "GeneratorTable", "build_generator"]


@dataclass
class Segment:
    """Frozen generator for one time slice [t0, t1]."""

    t0: float
    t1: float
    frame: SpectralFrame          # truncated to n_keep columns if requested
    h_ls: np.ndarray              # Lamb shift (frame basis; zero if disabled)
    g_op: np.ndarray              # sum_i A_i^dag A_i (frame basis)
    heff: np.ndarray              # diag(eps) + h_ls - i/2 g_op
    heff_evals: np.ndarray        # eigendecomposition of heff (non-Hermitian)
    heff_vecs: np.ndarray
    heff_vecs_inv: np.ndarray
    # jump channels, rates absorbed: singles batched, multi-member groups dense
    sing_alpha: np.ndarray
    sing_a: np.ndarray
    sing_b: np.ndarray
    sing_val: np.ndarray
    sing_omega: np.ndarray
    multi_ops: list               # [(alpha, omega, dense matrix)]
    w_single: np.ndarray          # (k,k) sum_alpha |val|^2 on singleton pairs
    max_step: float               # adiabatic step bound at the midpoint

    @property
    def k(self) -> int:
        return self.frame.energies.size

    def propagate_coeffs(self, psi: np.ndarray) -> np.ndarray:
        """Expansion of psi in the non-Hermitian eigenbasis of heff."""
        return self.heff_vecs_inv @ psi

    def state_from_coeffs(self, coeffs: np.ndarray, tau: float) -> np.ndarray:
        """exp(-i heff tau) psi given the expansion coefficients of psi."""
        return self.heff_vecs @ (np.exp(-1.0j * self.heff_evals * tau) * coeffs)


@dataclass
class GeneratorTable:
    model: AnnealModel
    bath: BathSpec
    times: np.ndarray
    segments: list
    omega_tol: float
    n_keep: Optional[int]
    lamb: bool

    @property
    def t_start(self) -> float:
        return float(self.times[0])

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    def segment_index(self, t: float) -> int:
        i = int(np.searchsorted(self.times, t, side="right") - 1)
        return min(max(i, 0), len(self.segments) - 1)

    def segment_at(self, t: float) -> Segment:
        return self.segments[self.segment_index(t)]

    def envelopes(self, t: float):
        return self.model.envelopes(t)

    # -- state transport ---------------------------------------------------

    def to_frame(self, state: np.ndarray, seg: Segment) -> np.ndarray:
        v = seg.frame.vectors
        if state.ndim == 1:
            return v.conj().T @ state
        return v.conj().T @ state @ v

    def from_frame(self, state: np.ndarray, seg: Segment) -> np.ndarray:
        v = seg.frame.vectors
        if state.ndim == 1:
            return v @ state
        return v @ state @ v.conj().T

    def remap(self, state: np.ndarray, seg_from: Segment, seg_to: Segment) -> np.ndarray:
        """Re-express a frame-basis state in the next segment's frame."""
        o = seg_to.frame.vectors.conj().T @ seg_from.frame.vectors
        if state.ndim == 1:
            return o @ state
        return o @ state @ o.conj().T

    # -- generator pieces ---------------------------------------------------

    def h_eff_frame(self, t: float, seg: Optional[Segment] = None) -> np.ndarray:
        """Frozen H_S + H_LS - (i/2) sum A^dag A of the segment containing t."""
        seg = seg or self.segment_at(t)
        return seg.heff

    def jump_rate_frame(self, psi_f: np.ndarray, seg: Segment) -> float:
        """lambda = <psi| sum A^dag A |psi> for a normalized frame-basis state."""
        return float(np.real(np.vdot(psi_f, seg.g_op @ psi_f)))

    def channel_weights(self, psi_f: np.ndarray, seg: Segment):
        """Per-channel jump weights ||A_i psi||^2 and the channel descriptors."""
        weights = []
        descr = []
        if seg.sing_val.size:
            w = np.abs(seg.sing_val * psi_f[seg.sing_b]) ** 2
            weights.extend(w.tolist())
            descr.extend(("single", i) for i in range(seg.sing_val.size))
        for i, (alpha, omega, mat) in enumerate(seg.multi_ops):
            weights.append(float(np.sum(np.abs(mat @ psi_f) ** 2)))
            descr.append(("multi", i))
        return np.asarray(weights), descr

    def apply_channel(self, psi_f: np.ndarray, seg: Segment, kind: str, idx: int):
        """A_i |psi> (unnormalized) plus the channel's (alpha, omega)."""
        if kind == "single":
            out = np.zeros_like(psi_f)
            a = seg.sing_a[idx]
            out[a] = seg.sing_val[idx] * psi_f[seg.sing_b[idx]]
            return out, int(seg.sing_alpha[idx]), float(seg.sing_omega[idx])
        alpha, omega, mat = seg.multi_ops[idx]
        return mat @ psi_f, int(alpha), float(omega)

    def dissipator_frame(self, rho_f: np.ndarray, seg: Segment) -> np.ndarray:
        """sum_i A_i rho A_i^dag - (1/2){A_i^dag A_i, rho} in the frame basis."""
        out = np.zeros_like(rho_f)
        np.fill_diagonal(out, seg.w_single @ np.real(np.diag(rho_f)))
        for _, _, mat in seg.multi_ops:
            out = out + mat @ rho_f @ mat.conj().T
        g = seg.g_op
        return out - 0.5 * (g @ rho_f + rho_f @ g)

    def excitation_channels(self, seg: Segment):
        """Indices of channels with negative Bohr frequency (thermal excitation)."""
        chans = []
        if seg.sing_val.size:
            for i in np.flatnonzero(seg.sing_omega < -self.omega_tol):
                chans.append(("single", int(i)))
        for i, (alpha, omega, mat) in enumerate(seg.multi_ops):
            if omega < -self.omega_tol:
                chans.append(("multi", i))
        return chans


def _coupling_ops(model: AnnealModel, bath: BathSpec):
    ops = list(model.coupling_ops)
    if not ops:
        raise ValueError("model provides no bath coupling operators")
    if bath.topology == "collective" and len(ops) > 1:
        ops = [sum(ops)]
    return [np.asarray(op, dtype=complex) for op in ops]


def _op_norm(mat: np.ndarray) -> float:
    return float(np.abs(np.linalg.eigvalsh(mat)).max()) if mat.size else 0.0


def _auto_frames(model: AnnealModel, bath: BathSpec, t0: float, t1: float) -> int:
    """Segment count so every segment obeys the adiabatic step bound."""
    probes = np.linspace(t0, t1, 33)
    h_norm = max(_op_norm(model.hamiltonian(t)) for t in probes)
    # crude magnitude cap of the dissipative part: all rates at the largest gap
    lam_cap = 0.0
    for op in _coupling_ops(model, bath):
        span = 2.0 * h_norm
        lam_cap += ohmic_rate(span, bath) * _op_norm(op) ** 2
    bound = 1.0 / max(h_norm + 0.5 * lam_cap, 1e-30)
    dt = 1e-6 * (t1 - t0)
    hdot = max(np.abs(np.linalg.norm(model.hamiltonian(min(t + dt, t1)), 2)
                      - np.linalg.norm(model.hamiltonian(max(t - dt, t0)), 2)) / (2 * dt)
               for t in probes)
    if hdot > 0:
        bound = min(bound, 2.0 * h_norm / hdot)
    n = int(np.ceil((t1 - t0) / bound * 1.05))
    return int(min(max(n, 8), 60000))


def build_generator(model: AnnealModel, bath: BathSpec, *,
                    t_span: Optional[tuple] = None,
                    n_frames=None,
                    omega_tol: float = DEFAULT_OMEGA_TOL,
                    lamb: bool = False,
                    lamb_kernel=None,
                    n_keep: Optional[int] = None) -> GeneratorTable:
    """Precompute the frozen-generator table for a model + bath.

    n_frames defaults to the automatic choice satisfying the step bound;
    protocols with constant s (fixed_point) still honor it because the jump
    algorithm's step conditions apply there too.
    """
    if t_span is None:
        t_span = (0.0, model.protocol.total_time)
    t0, t1 = map(float, t_span)
    if t1 <= t0:
        raise ValueError("t_span must be increasing")
    if n_frames is None or n_frames == "auto":
        n_frames = _auto_frames(model, bath, t0, t1)
    times = np.linspace(t0, t1, int(n_frames) + 1)
    ops = _coupling_ops(model, bath)
    segments = []
    prev_frame = None
    kernel_cache = {}
    for j in range(int(n_frames)):
        ta, tb = times[j], times[j + 1]
        tm = 0.5 * (ta + tb)
        frame = decompose(model.hamiltonian(tm), prev_frame, t=tm)
        prev_frame = frame
        work = frame if n_keep is None else frame.truncated(n_keep)
        seg = _build_segment(work, model, bath, ops, omega_tol, lamb,
                             lamb_kernel, kernel_cache, ta, tb)
        segments.append(seg)
    return GeneratorTable(model=model, bath=bath, times=times, segments=segments,
                          omega_tol=omega_tol, n_keep=n_keep, lamb=lamb)


def _build_segment(frame, model, bath, ops, omega_tol, lamb, lamb_kernel,
                   kernel_cache, ta, tb) -> Segment:
    v = frame.vectors
    k = frame.energies.size
    groups = group_bohr(frame, omega_tol)
    gid = np.empty((k, k), dtype=np.intp)
    rate_of = np.empty(len(groups))
    size_of = np.empty(len(groups), dtype=np.intp)
    for gi, g in enumerate(groups):
        gid[g.rows, g.cols] = gi
        rate_of[gi] = ohmic_rate(g.omega, bath)
        size_of[gi] = g.size
    m_stack = np.stack([v.conj().T @ op @ v for op in ops])          # bare elements
    b_stack = m_stack * np.sqrt(rate_of[gid])                        # rates absorbed

    # G = sum over channels of A^dag A: diagonal always; off-diagonal entries
    # only between levels b, d whose gaps to every a fall in the same group.
    g_op = np.zeros((k, k), dtype=complex)
    np.fill_diagonal(g_op, np.einsum("xab,xab->b", b_stack.conj(), b_stack).real)
    h_ls = np.zeros((k, k), dtype=complex)
    s_mat = None
    if lamb:
        s_of = np.empty(len(groups))
        for gi, g in enumerate(groups):
            key = round(g.omega / omega_tol)
            if key not in kernel_cache:
                if lamb_kernel is None:
                    from .spectral import _hilbert_kernel
                    kernel_cache[key] = _hilbert_kernel(g.omega, bath)
                else:
                    kernel_cache[key] = lamb_kernel(g.omega)
            s_of[gi] = kernel_cache[key]
        s_mat = s_of[gid]
        for b in range(k):
            h_ls[b, b] = np.sum(s_mat[:, b] * np.abs(m_stack[:, :, b]) ** 2)

    # degenerate level clusters (same criterion as the omega grouping)
    eps = frame.energies
    cl_breaks = np.flatnonzero(np.diff(eps) > omega_tol) + 1
    for cluster in np.split(np.arange(k), cl_breaks):
        if cluster.size < 2:
            continue
        for bi in cluster:
            for di in cluster:
                if bi == di:
                    continue
                mask = gid[:, bi] == gid[:, di]
                if not np.any(mask):
                    continue
                g_op[bi, di] += np.sum(b_stack[:, mask, bi].conj() * b_stack[:, mask, di])
                if lamb:
                    h_ls[bi, di] += np.sum(s_mat[mask, bi][None, :]
                                           * m_stack[:, mask, bi].conj()
                                           * m_stack[:, mask, di])

    # jump channels: batch all singleton groups, keep dense ops for the rest
    s_alpha, s_a, s_b, s_val, s_omega = [], [], [], [], []
    multi_ops = []
    w_single = np.zeros((k, k))
    n_ch = len(ops)
    for gi, g in enumerate(groups):
        if size_of[gi] == 1:
            a, b = int(g.rows[0]), int(g.cols[0])
            for alpha in range(n_ch):
                val = b_stack[alpha, a, b]
                if abs(val) < 1e-14:
                    continue
                s_alpha.append(alpha)
                s_a.append(a)
                s_b.append(b)
                s_val.append(val)
                s_omega.append(g.omega)
                w_single[a, b] += abs(val) ** 2
        else:
            for alpha in range(n_ch):
                vals = b_stack[alpha, g.rows, g.cols]
                if np.all(np.abs(vals) < 1e-14):
                    continue
                mat = np.zeros((k, k), dtype=complex)
                mat[g.rows, g.cols] = vals
                multi_ops.append((alpha, g.omega, mat))

    heff = np.diag(eps.astype(complex)) + h_ls - 0.5j * g_op
    evals, vecs = np.linalg.eig(heff)
    vecs_inv = np.linalg.inv(vecs)
    scale = max(1.0, float(np.abs(heff).max()))
    recon = (vecs * evals) @ vecs_inv
    if np.abs(recon - heff).max() > 1e-9 * scale:
        raise ArithmeticError(
            "effective Hamiltonian is too ill-conditioned to diagonalize")

    # adiabatic step bound at the midpoint (the auto segmentation honors it)
    h_norm = float(np.abs(eps).max()) + 0.5 * _op_norm(g_op) + _op_norm(h_ls)
    dt_env = 1e-6 * max(tb - ta, 1e-12)
    tm = 0.5 * (ta + tb)
    hs_hi = model.hamiltonian(min(tm + dt_env, model.protocol.total_time))
    hs_lo = model.hamiltonian(max(tm - dt_env, 0.0))
    hdot_norm = float(np.linalg.norm(hs_hi - hs_lo, 2) / (2 * dt_env))
    lam_cap = max(_op_norm(g_op), 1e-30)
    max_step = min(1.0 / max(h_norm, 1e-30), 1.0 / lam_cap)
    if hdot_norm > 1e-30:
        max_step = min(max_step, 2.0 * h_norm / hdot_norm)

    return Segment(t0=float(ta), t1=float(tb), frame=frame,
                   h_ls=h_ls, g_op=g_op, heff=heff, heff_evals=evals,
                   heff_vecs=vecs, heff_vecs_inv=vecs_inv,
                   sing_alpha=np.asarray(s_alpha, dtype=np.intp),
                   sing_a=np.asarray(s_a, dtype=np.intp),
                   sing_b=np.asarray(s_b, dtype=np.intp),
                   sing_val=np.asarray(s_val, dtype=complex),
                   sing_omega=np.asarray(s_omega, dtype=float),
                   multi_ops=multi_ops, w_single=w_single,
                   max_step=float(max_step))
