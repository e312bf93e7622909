"""Spin-vector Monte Carlo for reverse annealing on the p-spin landscape.

Qubits become classical O(2) spins (sin theta_i, 0, cos theta_i) with energy
    E(theta; s) = -(A(s)/2) sum_i sin theta_i - (B(s) N / 2) (mean_i cos theta_i)^p
updated by Metropolis sweeps. Plain SVMC proposes uniform angles; SVMC-TF
restricts proposals to +/- min(1, A/B) pi, which freezes the dynamics when
the transverse envelope is small. Time is measured in sweeps and s follows
the device-style reverse-annealing map, so a run of annealing parameter tau
performs 2 tau (1 - s_inv) + t_p sweeps.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .model import DEFAULT_TEMPERATURE_GHZ, Protocol, Schedule

__all__ = [
    "SpinAngles", "SvmcResult", "classical_energy", "delta_energy",
    "sweep", "run_reverse_anneal",
]


@dataclass
class SpinAngles:
    """Per-spin angles in [0, pi] plus the sweep counter and variant tag.

    cached_energy carries the incrementally updated energy of the last
    sweep so bookkeeping drift can be checked against a recomputation.
    """

    theta: np.ndarray
    sweeps: int = 0
    variant: str = "svmc"
    cached_energy: Optional[float] = None

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        if self.variant not in ("svmc", "svmc_tf"):
            raise ValueError("variant must be 'svmc' or 'svmc_tf'")
        if np.any(self.theta < 0) or np.any(self.theta > np.pi):
            raise ValueError("angles must lie in [0, pi]")

    @classmethod
    def from_bits(cls, bits: Sequence[int], variant: str = "svmc") -> "SpinAngles":
        """bit 0 -> theta 0 (up), bit 1 -> theta pi (down)."""
        theta = np.array([np.pi if b else 0.0 for b in bits], dtype=float)
        return cls(theta=theta, variant=variant)


def classical_energy(theta: np.ndarray, s: float, schedule: Schedule, p: int) -> float:
    a, b = schedule.evaluate(s)
    theta = np.asarray(theta, dtype=float)
    n = theta.size
    return float(-(a / 2.0) * np.sin(theta).sum()
                 - (b * n / 2.0) * np.mean(np.cos(theta)) ** p)


def delta_energy(i: int, theta_new: float, theta: np.ndarray, s: float,
                 schedule: Schedule, p: int) -> float:
    """Energy change of rotating spin i, via the cached magnetization sums."""
    a, b = schedule.evaluate(s)
    theta = np.asarray(theta, dtype=float)
    n = theta.size
    sum_cos = np.cos(theta).sum()
    d_sin = np.sin(theta_new) - np.sin(theta[i])
    new_cos = sum_cos - np.cos(theta[i]) + np.cos(theta_new)
    return float(-(a / 2.0) * d_sin
                 - (b * n / 2.0) * ((new_cos / n) ** p - (sum_cos / n) ** p))


def _proposal_width(s: float, schedule: Schedule) -> float:
    a, b = schedule.evaluate(s)
    if b <= 0:
        return np.pi
    return min(1.0, a / b) * np.pi


def sweep(state: SpinAngles, s: float, beta: float, rng: np.random.Generator,
          schedule: Schedule, p: int, random_order: bool = False):
    """One Metropolis sweep (one proposal per spin, fixed index order by
    default); returns the updated state and the number of accepted moves."""
    theta = state.theta
    n = theta.size
    a, b = schedule.evaluate(s)
    sum_sin = np.sin(theta).sum()
    sum_cos = np.cos(theta).sum()
    accepted = 0
    order = rng.permutation(n) if random_order else range(n)
    width = _proposal_width(s, schedule) if state.variant == "svmc_tf" else None
    for i in order:
        if width is None:
            proposal = rng.uniform(0.0, np.pi)
        else:
            proposal = np.clip(theta[i] + rng.uniform(-width, width), 0.0, np.pi)
        d_sin = np.sin(proposal) - np.sin(theta[i])
        new_cos = sum_cos - np.cos(theta[i]) + np.cos(proposal)
        d_e = (-(a / 2.0) * d_sin
               - (b * n / 2.0) * ((new_cos / n) ** p - (sum_cos / n) ** p))
        if d_e <= 0 or rng.uniform() < np.exp(-beta * d_e):
            theta[i] = proposal
            sum_sin += d_sin
            sum_cos = new_cos
            accepted += 1
    state.sweeps += 1
    state.cached_energy = float(-(a / 2.0) * sum_sin
                                - (b * n / 2.0) * (sum_cos / n) ** p)
    return state, accepted


@dataclass
class SvmcResult:
    total: float
    up: float
    down: float
    total_err: float     # 2 sigma over samples
    up_err: float
    down_err: float
    n_sweeps: int
    n_samples: int
    final_theta: Optional[np.ndarray] = None


def run_reverse_anneal(n_qubits: int, p: int, schedule: Schedule, *,
                       tau_sweeps: float, s_inv: float, t_p_sweeps: float = 0.0,
                       K: int = 1000, seed: int = 0, variant: str = "svmc",
                       beta: float = 1.0 / DEFAULT_TEMPERATURE_GHZ,
                       initial_bits: Optional[Sequence[int]] = None,
                       keep_final: bool = False) -> SvmcResult:
    """Reverse anneal K samples and report total/partial success with 2 sigma bars.

    Samples are updated in lockstep (vectorized over K) from one counter-based
    stream, so results are deterministic for a given (seed, K). Spins project
    to bit 0 when theta <= pi/2; success means all-up or all-down.
    """
    if initial_bits is None:
        initial_bits = [0] * (n_qubits - 1) + [1]  # single spin down
    if len(initial_bits) != n_qubits:
        raise ValueError("initial_bits length must equal n_qubits")
    if variant not in ("svmc", "svmc_tf"):
        raise ValueError("variant must be 'svmc' or 'svmc_tf'")
    proto = Protocol(variant="ira_experimental", tau=tau_sweeps, s_inv=s_inv,
                     t_p=t_p_sweeps)
    n_sweeps = int(round(proto.total_time))
    rng = np.random.Generator(np.random.Philox(key=np.array(
        [seed & 0xFFFFFFFFFFFFFFFF, 0], dtype=np.uint64)))

    theta0 = np.array([np.pi if b else 0.0 for b in initial_bits], dtype=float)
    theta = np.tile(theta0, (K, 1))
    sum_cos = np.cos(theta).sum(axis=1)

    n = n_qubits
    for k in range(n_sweeps):
        s = proto.s_of(min(float(k + 1), proto.total_time))
        a, b = schedule.evaluate(s)
        width = _proposal_width(s, schedule) if variant == "svmc_tf" else None
        for i in range(n):
            if width is None:
                proposal = rng.uniform(0.0, np.pi, size=K)
            else:
                proposal = np.clip(theta[:, i] + rng.uniform(-width, width, size=K),
                                   0.0, np.pi)
            d_sin = np.sin(proposal) - np.sin(theta[:, i])
            new_cos = sum_cos - np.cos(theta[:, i]) + np.cos(proposal)
            d_e = (-(a / 2.0) * d_sin
                   - (b * n / 2.0) * ((new_cos / n) ** p - (sum_cos / n) ** p))
            u = rng.uniform(size=K)
            accept = (d_e <= 0) | (u < np.exp(-beta * np.maximum(d_e, 0.0)))
            theta[accept, i] = proposal[accept]
            sum_cos = np.where(accept, new_cos, sum_cos)

    bits = theta > np.pi / 2.0
    all_up = ~bits.any(axis=1)
    all_down = bits.all(axis=1)
    p_up = float(all_up.mean())
    p_down = float(all_down.mean())
    p_tot = float((all_up | all_down).mean())

    def two_sigma(prob):
        return 2.0 * np.sqrt(max(prob * (1.0 - prob), 0.0) / K)

    return SvmcResult(total=p_tot, up=p_up, down=p_down,
                      total_err=two_sigma(p_tot), up_err=two_sigma(p_up),
                      down_err=two_sigma(p_down), n_sweeps=n_sweeps,
                      n_samples=K, final_theta=theta if keep_final else None)
