"""Problem operators, annealing schedules, and protocol time maps.

Units: energies, rates and temperatures are angular frequencies in GHz
(hbar = k_B = 1), times are in ns, so phases are plain products E*t.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "SIGMA_X", "SIGMA_Y", "SIGMA_Z", "GHZ_PER_MK", "DEFAULT_TEMPERATURE_GHZ",
    "CapacityError", "DomainError",
    "IsingProblem", "PSpinProblem", "Schedule", "Protocol", "AnnealModel",
    "pauli_on", "build_ising", "build_pspin", "pspin_transverse",
    "maxspin_z_collective", "maxspin_projector",
    "schedule_eval", "protocol_s", "assemble_hamiltonian",
    "ising_model", "chain_model", "pspin_model", "single_qubit_model",
    "pattern_state", "ground_state",
]

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]])
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]])
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]])

# Device operating point quoted as 12.1 mK = 1.57 GHz (hbar = k_B = 1);
# the ratio is kept as the documented conversion constant.
GHZ_PER_MK = 1.57 / 12.1
DEFAULT_TEMPERATURE_GHZ = 1.57

# Dense 2^N matrices beyond this are not desk-scale.
MAX_QUBITS = 14


class CapacityError(ValueError):
    """Requested dimension exceeds the configured dense-operator cap."""


class DomainError(ValueError):
    """Argument outside the documented domain (s, t ranges)."""


def pauli_on(op: np.ndarray, i: int, n: int) -> np.ndarray:
    """Single-site operator `op` acting on qubit i of an n-qubit register."""
    out = np.array([[1.0]])
    for k in range(n):
        out = np.kron(out, op if k == i else np.eye(2))
    return out


# ---------------------------------------------------------------------------
# Problems
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IsingProblem:
    """Transverse-field Ising instance: local fields h_i and couplings J_ij (i<j)."""

    n_qubits: int
    h: tuple = ()
    couplings: tuple = ()  # ((i, j, J), ...)

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValueError("n_qubits must be positive")
        h = np.asarray(self.h, dtype=float)
        if h.size == 0:
            h = np.zeros(self.n_qubits)
        if h.size == 1:
            h = np.full(self.n_qubits, h.item())
        if h.size != self.n_qubits:
            raise ValueError("h must have one entry per qubit")
        if not np.all(np.isfinite(h)):
            raise ValueError("h entries must be finite")
        object.__setattr__(self, "h", tuple(h))
        seen = set()
        norm = []
        for (i, j, J) in self.couplings:
            i, j = int(i), int(j)
            if not (0 <= i < self.n_qubits and 0 <= j < self.n_qubits) or i == j:
                raise ValueError(f"coupling indices ({i},{j}) out of range")
            if i > j:
                i, j = j, i
            if (i, j) in seen:
                raise ValueError(f"duplicate coupling ({i},{j})")
            if not math.isfinite(J):
                raise ValueError("couplings must be finite")
            seen.add((i, j))
            norm.append((i, j, float(J)))
        object.__setattr__(self, "couplings", tuple(norm))


def build_ising(problem: IsingProblem, max_qubits: int = MAX_QUBITS):
    """Return (H_X, H_Z) with H_X = -sum_i sigma_i^x and
    H_Z = -sum_i h_i sigma_i^z + sum_{i<j} J_ij sigma_i^z sigma_j^z."""
    n = problem.n_qubits
    if n > max_qubits:
        raise CapacityError(f"{n} qubits exceeds dense cap of {max_qubits}")
    dim = 2 ** n
    # sigma_i^z is diagonal with entries z_i = +/-1; work on the diagonal.
    z = np.ones((n, dim))
    for i in range(n):
        bit = (np.arange(dim) >> (n - 1 - i)) & 1
        z[i] = 1.0 - 2.0 * bit
    diag = -np.asarray(problem.h) @ z
    for (i, j, J) in problem.couplings:
        diag += J * z[i] * z[j]
    h_z = np.diag(diag)
    h_x = np.zeros((dim, dim))
    for i in range(n):
        h_x -= pauli_on(SIGMA_X, i, n)
    return h_x, h_z


@dataclass(frozen=True)
class PSpinProblem:
    """Fully connected ferromagnet -(N/2) m_z^p, optionally in the maximum-spin sector."""

    n_qubits: int
    p: int = 2
    reduced: bool = False

    def __post_init__(self):
        if self.p < 2 or int(self.p) != self.p:
            raise ValueError("p must be an integer >= 2")
        if self.n_qubits < 1:
            raise ValueError("n_qubits must be positive")

    @property
    def dim(self) -> int:
        return self.n_qubits + 1 if self.reduced else 2 ** self.n_qubits


def build_pspin(problem: PSpinProblem, max_qubits: int = MAX_QUBITS) -> np.ndarray:
    """Problem operator -(N/2) m_z^p, full 2^N space or (N+1)-dim max-spin sector."""
    n, p = problem.n_qubits, problem.p
    if problem.reduced:
        w = np.arange(n + 1)
        return np.diag(-(n / 2.0) * (1.0 - 2.0 * w / n) ** p)
    if n > max_qubits:
        raise CapacityError(f"{n} qubits exceeds dense cap of {max_qubits}")
    dim = 2 ** n
    mz = np.zeros(dim)
    for i in range(n):
        bit = (np.arange(dim) >> (n - 1 - i)) & 1
        mz += 1.0 - 2.0 * bit
    mz /= n
    return np.diag(-(n / 2.0) * mz ** p)


def pspin_transverse(problem: PSpinProblem) -> np.ndarray:
    """Transverse term -sum_i sigma_i^x in the problem's representation.

    In the maximum-spin sector this is -2 S_x for total spin j = N/2, whose
    basis |w> counts the number of down spins (w = 0 is all-up).
    """
    n = problem.n_qubits
    if not problem.reduced:
        dim = 2 ** n
        h_x = np.zeros((dim, dim))
        for i in range(n):
            h_x -= pauli_on(SIGMA_X, i, n)
        return h_x
    j = n / 2.0
    m = j - np.arange(n + 1)  # S_z eigenvalue of |w>
    # S_- |j, m> = sqrt(j(j+1) - m(m-1)) |j, m-1>, i.e. w -> w+1
    lower = np.sqrt(j * (j + 1) - m[:-1] * (m[:-1] - 1.0))
    s_x = np.zeros((n + 1, n + 1))
    for w in range(n):
        s_x[w + 1, w] = 0.5 * lower[w]
        s_x[w, w + 1] = 0.5 * lower[w]
    return -2.0 * s_x


def maxspin_z_collective(n_qubits: int) -> np.ndarray:
    """Collective coupling operator sum_i sigma_i^z in the max-spin sector basis."""
    w = np.arange(n_qubits + 1)
    return np.diag(float(n_qubits) - 2.0 * w)


def maxspin_projector(n_qubits: int) -> np.ndarray:
    """Projector onto the S = N/2 sector of the full 2^N space."""
    n = n_qubits
    dim = 2 ** n
    sx = sum(pauli_on(SIGMA_X, i, n) for i in range(n)) / 2.0
    sy = sum(pauli_on(SIGMA_Y, i, n) for i in range(n)) / 2.0
    sz = sum(pauli_on(SIGMA_Z, i, n) for i in range(n)) / 2.0
    s2 = sx @ sx + sy @ sy + sz @ sz
    evals, vecs = np.linalg.eigh(s2)
    smax = n / 2.0
    keep = np.abs(evals - smax * (smax + 1)) < 1e-8
    v = vecs[:, keep]
    return v @ v.conj().T


# ---------------------------------------------------------------------------
# Schedules
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Schedule:
    """Annealing envelopes A(s), B(s) in GHz, tabulated and interpolated linearly."""

    s_knots: tuple
    a_knots: tuple
    b_knots: tuple

    def __post_init__(self):
        s = np.asarray(self.s_knots, dtype=float)
        a = np.asarray(self.a_knots, dtype=float)
        b = np.asarray(self.b_knots, dtype=float)
        if s.ndim != 1 or s.size < 2 or a.size != s.size or b.size != s.size:
            raise ValueError("knot arrays must be 1-d and equal length >= 2")
        if not (np.all(np.diff(s) > 0) and abs(s[0]) < 1e-12 and abs(s[-1] - 1) < 1e-12):
            raise ValueError("s knots must increase strictly from 0 to 1")
        if np.any(a < 0) or np.any(b < 0):
            raise ValueError("A and B must be nonnegative")
        object.__setattr__(self, "s_knots", tuple(s))
        object.__setattr__(self, "a_knots", tuple(a))
        object.__setattr__(self, "b_knots", tuple(b))
        object.__setattr__(self, "_s_arr", s)
        object.__setattr__(self, "_a_arr", a)
        object.__setattr__(self, "_b_arr", b)

    @classmethod
    def linear(cls, a0: float = 8.0, b1: float = 8.0) -> "Schedule":
        """A(s) = a0 (1 - s), B(s) = b1 s."""
        return cls((0.0, 1.0), (a0, 0.0), (0.0, b1))

    @classmethod
    def dwave_like(cls) -> "Schedule":
        """Bundled sample table shaped like a flux-qubit device schedule.

        The transverse envelope decays steeply and vanishes near s = 1
        (a small residual is kept before the final knot); the problem
        envelope grows roughly quadratically to ~12 GHz.
        """
        s = np.linspace(0.0, 1.0, 21)
        a = 8.0 * (1.0 - s) ** 2 * np.exp(-2.0 * s)
        a[-1] = 0.0
        b = 0.5 + 11.5 * s ** 1.8
        b[0] = 0.0
        return cls(tuple(s), tuple(a), tuple(b))

    def evaluate(self, s):
        """(A(s), B(s)); `s` may be scalar or array, must lie in [0, 1]."""
        if np.ndim(s) == 0:
            s = float(s)
            if s < -1e-12 or s > 1.0 + 1e-12:
                raise DomainError(f"s = {s} outside [0, 1]")
            s = min(max(s, 0.0), 1.0)
            return (float(np.interp(s, self._s_arr, self._a_arr)),
                    float(np.interp(s, self._s_arr, self._b_arr)))
        s_arr = np.asarray(s, dtype=float)
        if np.any(s_arr < -1e-12) or np.any(s_arr > 1 + 1e-12):
            raise DomainError(f"s = {s} outside [0, 1]")
        s_arr = np.clip(s_arr, 0.0, 1.0)
        return (np.interp(s_arr, self._s_arr, self._a_arr),
                np.interp(s_arr, self._s_arr, self._b_arr))


def schedule_eval(sched: Schedule, s: float):
    return sched.evaluate(s)


# ---------------------------------------------------------------------------
# Protocols
# ---------------------------------------------------------------------------

_VARIANTS = ("forward", "ira", "ira_experimental", "ara", "fixed_point")


@dataclass(frozen=True)
class Protocol:
    """Time map s(t) for one of the supported annealing protocols.

    variant:
      forward            s = t/tau
      ira                s: 1 -> s_inv -> 1 over tau (+ optional pause at s_inv);
                         the reversal point is t_inv = tau (1 - s_inv)
      ira_experimental   device-style map with constant slope 1/tau and a pause;
                         cycle time 2 tau (1 - s_inv) + t_p
      ara                s = t/tau with the initialization-Hamiltonian drive
      fixed_point        s held at s_inv for the whole duration tau

    r > 1 concatenates r identical cycles.
    """

    variant: str
    tau: float
    s_inv: Optional[float] = None
    t_p: float = 0.0
    gamma: float = 1.0
    pattern: Optional[tuple] = None  # epsilon_i = +/-1 per qubit
    r: int = 1
    lam: Optional[Callable[[float], float]] = None  # ARA lambda(s); default lambda = s

    def __post_init__(self):
        if self.variant not in _VARIANTS:
            raise ValueError(f"unknown protocol variant {self.variant!r}")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.t_p < 0:
            raise ValueError("pause duration must be nonnegative")
        if self.r < 1 or int(self.r) != self.r:
            raise ValueError("iteration count r must be a positive integer")
        if self.variant in ("ira", "ira_experimental", "fixed_point"):
            if self.s_inv is None or not (0.0 < self.s_inv < 1.0):
                raise ValueError(f"{self.variant} requires s_inv in (0, 1)")
        if self.variant in ("forward", "ara") and self.t_p:
            raise ValueError(f"{self.variant} does not support a pause")
        if self.pattern is not None:
            pat = tuple(int(e) for e in self.pattern)
            if any(e not in (-1, 1) for e in pat):
                raise ValueError("pattern entries must be +/-1")
            object.__setattr__(self, "pattern", pat)

    @property
    def cycle_time(self) -> float:
        if self.variant == "ira_experimental":
            return 2.0 * self.tau * (1.0 - self.s_inv) + self.t_p
        if self.variant == "ira":
            return self.tau + self.t_p
        return self.tau

    @property
    def total_time(self) -> float:
        return self.r * self.cycle_time

    def s_of(self, t: float) -> float:
        """Annealing fraction s at physical time t in [0, total_time]."""
        tc = self.cycle_time
        if t < -1e-9 * tc or t > self.total_time * (1 + 1e-12) + 1e-12:
            raise DomainError(f"t = {t} outside [0, {self.total_time}]")
        t = min(max(t, 0.0), self.total_time)
        # fold into one cycle; the cycle endpoint maps to the endpoint value
        tloc = t - tc * min(self.r - 1, int(t / tc)) if tc > 0 else 0.0
        tloc = min(tloc, tc)
        v = self.variant
        if v == "forward" or v == "ara":
            return tloc / self.tau
        if v == "fixed_point":
            return self.s_inv
        if v == "ira":
            t_inv = self.tau * (1.0 - self.s_inv)
            if tloc <= t_inv:
                return 1.0 - tloc / self.tau
            if tloc <= t_inv + self.t_p:
                return self.s_inv
            u = tloc - self.t_p
            return (1.0 - self.s_inv) / (self.tau * self.s_inv) * u \
                + (2.0 * self.s_inv - 1.0) / self.s_inv
        # ira_experimental: slopes are exactly +/- 1/tau
        t_inv = self.tau * (1.0 - self.s_inv)
        if tloc <= t_inv:
            return 1.0 - tloc / self.tau
        if tloc <= t_inv + self.t_p:
            return self.s_inv
        return 2.0 * self.s_inv - 1.0 + (tloc - self.t_p) / self.tau

    @property
    def max_slope(self) -> float:
        """Lipschitz constant of s(t); 1/tau except for the ira return branch."""
        if self.variant == "ira":
            return max(1.0, (1.0 - self.s_inv) / self.s_inv) / self.tau
        if self.variant == "fixed_point":
            return 0.0
        return 1.0 / self.tau

    def breakpoints(self) -> np.ndarray:
        """Times in (0, total_time) where s(t) has a kink."""
        tc = self.cycle_time
        local = []
        if self.variant in ("ira", "ira_experimental"):
            t_inv = self.tau * (1.0 - self.s_inv)
            local = [t_inv, t_inv + self.t_p] if self.t_p > 0 else [t_inv]
        pts = []
        for cycle in range(self.r):
            base = cycle * tc
            if cycle:
                pts.append(base)
            pts.extend(base + b for b in local)
        out = np.array([p for p in pts if 0.0 < p < self.total_time])
        return np.unique(out)


def protocol_s(p: Protocol, t: float) -> float:
    return p.s_of(t)


# ---------------------------------------------------------------------------
# Assembled model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AnnealModel:
    """Static operator terms plus schedule and protocol.

    For forward/ira/ira_experimental/fixed_point:
        H(s) = (A(s)/2) H_X + (B(s)/2) H_Z
    For ara (with lambda = s unless the protocol overrides):
        H(s) = s H_Z + (1-s)(1-lambda) H_init + Gamma (1-s) lambda (H_X)
    where H_X = -sum_i sigma_i^x (or its max-spin-sector form).

    Immutable after construction; safe to share across workers.
    """

    h_x: np.ndarray
    h_z: np.ndarray
    schedule: Schedule
    protocol: Protocol
    n_qubits: int
    h_init: Optional[np.ndarray] = None
    coupling_ops: tuple = ()  # per-qubit bath coupling operators
    representation: str = "computational"

    def __post_init__(self):
        if self.protocol.variant == "ara" and self.h_init is None:
            raise ValueError("ara protocol requires h_init (set a pattern)")

    @property
    def dim(self) -> int:
        return self.h_z.shape[0]

    def envelopes(self, t: float):
        """Coefficients (c_x, c_z, c_init) so H = c_x H_X + c_z H_Z + c_init H_init."""
        s = self.protocol.s_of(t)
        return self.envelopes_at_s(s)

    def envelopes_at_s(self, s: float):
        if self.protocol.variant == "ara":
            lam = self.protocol.lam(s) if self.protocol.lam is not None else s
            return (self.protocol.gamma * (1.0 - s) * lam, s, (1.0 - s) * (1.0 - lam))
        a, b = self.schedule.evaluate(s)
        return (0.5 * a, 0.5 * b, 0.0)

    def hamiltonian_at_s(self, s: float) -> np.ndarray:
        cx, cz, ci = self.envelopes_at_s(s)
        h = cx * self.h_x + cz * self.h_z
        if ci and self.h_init is not None:
            h = h + ci * self.h_init
        return h

    def hamiltonian(self, t: float) -> np.ndarray:
        return self.hamiltonian_at_s(self.protocol.s_of(t))


def assemble_hamiltonian(model: AnnealModel, t: float) -> np.ndarray:
    return model.hamiltonian(t)


def _pattern_h_init(pattern: Sequence[int], n: int) -> np.ndarray:
    """H_init = -sum_i epsilon_i sigma_i^z on the full 2^n space."""
    if len(pattern) != n:
        raise ValueError("pattern length must equal n_qubits")
    dim = 2 ** n
    diag = np.zeros(dim)
    for i, eps in enumerate(pattern):
        bit = (np.arange(dim) >> (n - 1 - i)) & 1
        diag -= eps * (1.0 - 2.0 * bit)
    return np.diag(diag)


def ising_model(problem: IsingProblem, schedule: Schedule, protocol: Protocol) -> AnnealModel:
    h_x, h_z = build_ising(problem)
    n = problem.n_qubits
    ops = tuple(pauli_on(SIGMA_Z, i, n) for i in range(n))
    h_init = None
    if protocol.variant == "ara":
        if protocol.pattern is None:
            raise ValueError("ara protocol requires an initial pattern")
        h_init = _pattern_h_init(protocol.pattern, n)
    return AnnealModel(h_x=h_x, h_z=h_z, schedule=schedule, protocol=protocol,
                       n_qubits=n, h_init=h_init, coupling_ops=ops)


def chain_model(n_qubits: int, schedule: Schedule, protocol: Protocol,
                h1: float = 0.25, j: float = -1.0) -> AnnealModel:
    """Ferromagnetic chain with a field on the first qubit only."""
    problem = IsingProblem(
        n_qubits=n_qubits,
        h=(h1,) + (0.0,) * (n_qubits - 1),
        couplings=tuple((i, i + 1, j) for i in range(n_qubits - 1)),
    )
    return ising_model(problem, schedule, protocol)


def single_qubit_model(schedule: Schedule, protocol: Protocol, h: float = -1.0) -> AnnealModel:
    """One qubit with H_Z = -h sigma^z; h = -1 gives H_Z = +sigma^z."""
    return ising_model(IsingProblem(1, (h,), ()), schedule, protocol)


def pspin_model(problem: PSpinProblem, schedule: Schedule, protocol: Protocol) -> AnnealModel:
    h_z = build_pspin(problem)
    h_x = pspin_transverse(problem)
    n = problem.n_qubits
    if problem.reduced:
        # only the collective coupling survives in the sector representation
        ops = (maxspin_z_collective(n),)
        rep = "maxspin"
    else:
        ops = tuple(pauli_on(SIGMA_Z, i, n) for i in range(n))
        rep = "computational"
    h_init = None
    if protocol.variant == "ara":
        if protocol.pattern is None:
            raise ValueError("ara protocol requires an initial pattern")
        if problem.reduced:
            raise ValueError("ara with a bit pattern needs the full-space representation")
        h_init = _pattern_h_init(protocol.pattern, n)
    return AnnealModel(h_x=h_x, h_z=h_z, schedule=schedule, protocol=protocol,
                       n_qubits=n, h_init=h_init, coupling_ops=ops, representation=rep)


# ---------------------------------------------------------------------------
# Initial states
# ---------------------------------------------------------------------------

def pattern_state(pattern: Sequence[int], n_qubits: int) -> np.ndarray:
    """Computational basis vector for epsilon_i = +/-1 (+1 = |0> = up)."""
    idx = 0
    for eps in pattern:
        idx = (idx << 1) | (0 if eps == 1 else 1)
    psi = np.zeros(2 ** n_qubits, dtype=complex)
    psi[idx] = 1.0
    return psi


def ground_state(model: AnnealModel, t: float = 0.0) -> np.ndarray:
    """Ground state of H(t); for reverse protocols t = 0 sits at s = 1."""
    _, vecs = np.linalg.eigh(model.hamiltonian(t))
    return vecs[:, 0].astype(complex)
