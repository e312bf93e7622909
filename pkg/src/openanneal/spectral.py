"""Instantaneous spectral frames and Lindblad operator construction.

The dissipative channels live in the instantaneous eigenbasis of H(t):
each Bohr frequency omega = eps_b - eps_a (within a grouping tolerance)
and coupling operator A_alpha contributes one operator with entries
<eps_a|A_alpha|eps_b> at (a, b). Rates follow an Ohmic spectral density
obeying the KMS detailed-balance condition.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate

from .model import SIGMA_Z, pauli_on

__all__ = [
    "SpectralFrame", "BathSpec", "BohrGroup", "LindbladOp", "LindbladSet",
    "decompose", "group_bohr", "ohmic_rate", "build_lindblads", "lamb_shift",
    "NumericalError",
]

DEFAULT_OMEGA_TOL = 1e-4  # GHz; tolerance for merging Bohr frequencies


class NumericalError(RuntimeError):
    """Quadrature or linear-algebra failure with diagnostics attached."""


@dataclass
class SpectralFrame:
    """Eigenvalues (ascending) and eigenvector columns of H at time t."""

    t: float
    energies: np.ndarray
    vectors: np.ndarray
    n_keep: Optional[int] = None

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def truncated(self, n_keep: int) -> "SpectralFrame":
        """Drop all but the lowest n_keep levels."""
        if not (1 <= n_keep <= self.dim):
            raise ValueError("n_keep out of range")
        return SpectralFrame(self.t, self.energies[:n_keep],
                             self.vectors[:, :n_keep], n_keep=n_keep)


def decompose(h: np.ndarray, prev: Optional[SpectralFrame] = None, *,
              t: float = 0.0, deg_tol: float = 1e-9) -> SpectralFrame:
    """Eigendecomposition with sign/phase continuity against a previous frame.

    Non-degenerate vectors get a global phase making <prev_a|new_a> real and
    nonnegative; degenerate clusters are rotated (polar factor of the overlap
    matrix) to maximize overlap with the previous cluster.
    """
    h = np.asarray(h)
    scale = max(np.abs(h).max(), 1.0)
    if np.abs(h - h.conj().T).max() > 1e-10 * scale:
        raise ValueError("decompose requires a Hermitian matrix")
    energies, vectors = np.linalg.eigh(h)
    vectors = vectors.astype(complex)
    if prev is not None:
        if prev.vectors.shape[0] != vectors.shape[0]:
            raise ValueError("previous frame has incompatible dimension")
        start = 0
        d = energies.size
        while start < d:
            stop = start + 1
            while stop < d and energies[stop] - energies[stop - 1] <= deg_tol * max(1.0, abs(energies[stop])):
                stop += 1
            k = min(stop, prev.vectors.shape[1])
            if start < k:
                block = vectors[:, start:stop]
                ov = block.conj().T @ prev.vectors[:, start:k]
                # pad square so the rotation stays unitary on the whole cluster
                if ov.shape[1] < ov.shape[0]:
                    pad = np.zeros((ov.shape[0], ov.shape[0] - ov.shape[1]), dtype=complex)
                    ov = np.hstack([ov, pad])
                u, sing, vh = np.linalg.svd(ov)
                # avoid rotating between vectors with no previous counterpart
                if np.min(sing) > 1e-12 or ov.shape[0] == 1:
                    w = u @ vh
                    vectors[:, start:stop] = block @ w
                else:
                    for a in range(start, stop):
                        if a >= prev.vectors.shape[1]:
                            continue
                        o = np.vdot(vectors[:, a], prev.vectors[:, a])
                        if abs(o) > 1e-12:
                            vectors[:, a] *= o / abs(o)
            start = stop
    return SpectralFrame(t=t, energies=energies, vectors=vectors)


# ---------------------------------------------------------------------------
# Bohr frequency grouping
# ---------------------------------------------------------------------------

@dataclass
class BohrGroup:
    """One Bohr frequency with its member transitions |row><col|."""

    omega: float
    rows: np.ndarray
    cols: np.ndarray

    @property
    def size(self) -> int:
        return self.rows.size


def group_bohr(frame: SpectralFrame, omega_tol: float = DEFAULT_OMEGA_TOL):
    """Cluster all transition gaps eps_col - eps_row into Bohr-frequency groups.

    Every ordered pair (a, b) with a != b, plus all diagonal pairs (a, a),
    lands in exactly one group (single-linkage clustering with radius
    omega_tol); the group frequency is the mean member gap, snapped to 0 for
    the group containing the diagonal.
    """
    if omega_tol <= 0:
        raise ValueError("omega_tol must be positive")
    eps = frame.energies
    d = eps.size
    rows, cols = np.meshgrid(np.arange(d), np.arange(d), indexing="ij")
    rows = rows.ravel()
    cols = cols.ravel()
    gaps = eps[cols] - eps[rows]
    order = np.argsort(gaps, kind="stable")
    sorted_gaps = gaps[order]
    # new cluster wherever the gap to the previous sorted value exceeds the tol
    breaks = np.flatnonzero(np.diff(sorted_gaps) > omega_tol) + 1
    groups = []
    for chunk in np.split(np.arange(d * d), breaks):
        idx = order[chunk]
        omega = float(np.mean(gaps[idx]))
        if np.any(rows[idx] == cols[idx]):
            omega = 0.0
        groups.append(BohrGroup(omega=omega, rows=rows[idx], cols=cols[idx]))
    groups.sort(key=lambda g: g.omega)
    return groups


# ---------------------------------------------------------------------------
# Bath
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BathSpec:
    """Ohmic bath: rate gamma(omega) = 2 pi eta g^2 omega e^{-|omega|/omega_c} / (1 - e^{-beta omega}).

    eta_g2 is the combined dimensionless coupling; temperature in GHz
    (hbar = k_B = 1). Topology selects one bath per qubit (independent) or a
    single bath coupled to the summed operator (collective).
    """

    eta_g2: float = 1e-3
    omega_c: float = 1e3
    temperature: float = 1.57
    topology: str = "independent"

    def __post_init__(self):
        if self.eta_g2 <= 0 or self.omega_c <= 0 or self.temperature <= 0:
            raise ValueError("bath parameters must be positive")
        if self.topology not in ("independent", "collective"):
            raise ValueError("topology must be 'independent' or 'collective'")

    @property
    def beta(self) -> float:
        return 1.0 / self.temperature


def ohmic_rate(omega, bath: BathSpec):
    """gamma(omega); the omega -> 0 removable singularity becomes 2 pi eta g^2 / beta."""
    w = np.asarray(omega, dtype=float)
    pref = 2.0 * np.pi * bath.eta_g2
    x = bath.beta * w
    cut = np.exp(-np.abs(w) / bath.omega_c)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        denom = -np.expm1(-x)
        out = np.where(np.abs(x) < 1e-12,
                       pref * bath.temperature * cut,
                       pref * w * cut / np.where(denom == 0.0, 1.0, denom))
        # deep negative frequencies underflow to zero rate
        out = np.where(np.isfinite(out), out, 0.0)
    if np.ndim(omega) == 0:
        return float(out)
    return out


# ---------------------------------------------------------------------------
# Lindblad sets
# ---------------------------------------------------------------------------

@dataclass
class LindbladOp:
    """One channel: Bohr frequency, rate, operator in the eigenbasis, channel index."""

    omega: float
    rate: float
    matrix: np.ndarray  # eigenbasis; sqrt(rate) absorbed iff the set says so
    alpha: int


@dataclass
class LindbladSet:
    ops: list
    frame: SpectralFrame
    rates_absorbed: bool = True

    def __iter__(self):
        return iter(self.ops)

    def __len__(self):
        return len(self.ops)


def _default_coupling_ops(dim: int, topology: str):
    n = int(round(np.log2(dim)))
    if 2 ** n != dim:
        raise ValueError("cannot infer qubit register from dimension; pass coupling_ops")
    ops = [pauli_on(SIGMA_Z, i, n) for i in range(n)]
    if topology == "collective":
        return [sum(ops)]
    return ops


def build_lindblads(frame: SpectralFrame, bath: BathSpec,
                    omega_tol: float = DEFAULT_OMEGA_TOL,
                    coupling_ops: Optional[Sequence[np.ndarray]] = None,
                    absorb_rates: bool = True) -> LindbladSet:
    """All (channel, Bohr-frequency) jump operators for the given frame.

    coupling_ops are per-qubit system operators in the same basis as the
    Hamiltonian that produced the frame (sigma_i^z by default). Independent
    topology keeps one channel per operator; collective topology sums them
    first. Channels whose matrix elements all vanish are dropped.
    """
    if coupling_ops is None:
        coupling_ops = _default_coupling_ops(frame.vectors.shape[0], bath.topology)
    elif bath.topology == "collective" and len(coupling_ops) > 1:
        coupling_ops = [sum(coupling_ops)]
    groups = group_bohr(frame, omega_tol)
    v = frame.vectors
    ops = []
    for alpha, a_op in enumerate(coupling_ops):
        m = v.conj().T @ np.asarray(a_op, dtype=complex) @ v
        for g in groups:
            vals = m[g.rows, g.cols]
            if np.all(np.abs(vals) < 1e-14):
                continue
            mat = np.zeros_like(m)
            mat[g.rows, g.cols] = vals
            rate = ohmic_rate(g.omega, bath)
            if absorb_rates:
                mat = np.sqrt(rate) * mat
            ops.append(LindbladOp(omega=g.omega, rate=rate, matrix=mat, alpha=alpha))
    return LindbladSet(ops=ops, frame=frame, rates_absorbed=absorb_rates)


def lamb_shift(lindblads: LindbladSet, bath: BathSpec, enabled: bool = True,
               kernel: Optional[Callable[[float], float]] = None) -> np.ndarray:
    """H_LS = sum_omega S(omega) L_omega^dag L_omega in the eigenbasis.

    S(omega) is the principal-value Hilbert transform of gamma/2 over
    [-Omega, Omega] with Omega = 20 omega_c (standard weak-coupling kernel);
    a `kernel` callable overrides it (used for verification). Disabled ->
    zero operator.
    """
    dim = lindblads.frame.dim
    if not enabled:
        return np.zeros((dim, dim), dtype=complex)
    if kernel is None:
        cache = {}

        def kernel(w: float) -> float:
            if w not in cache:
                cache[w] = _hilbert_kernel(w, bath)
            return cache[w]

    h_ls = np.zeros((dim, dim), dtype=complex)
    for op in lindblads:
        mat = op.matrix
        if lindblads.rates_absorbed:
            if op.rate <= 0:
                continue
            mat = mat / np.sqrt(op.rate)
        h_ls += kernel(op.omega) * (mat.conj().T @ mat)
    return h_ls


def _hilbert_kernel(omega: float, bath: BathSpec) -> float:
    """S(omega) = (1/2pi) P int gamma(nu) / (omega - nu) dnu over [-Omega, Omega]."""
    big = 20.0 * bath.omega_c

    def integrand(nu):
        return ohmic_rate(nu, bath)

    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            # quad's cauchy weight computes P int f(nu)/(nu - wvar) dnu
            val, err = integrate.quad(integrand, -big, big, weight="cauchy",
                                      wvar=float(omega), limit=400)
        except integrate.IntegrationWarning as exc:  # pragma: no cover
            raise NumericalError(f"Lamb-shift quadrature failed at omega={omega}: {exc}")
    if not np.isfinite(val):
        raise NumericalError(f"Lamb-shift quadrature diverged at omega={omega}")
    return -val / (2.0 * np.pi)
