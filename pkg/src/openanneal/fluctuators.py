"""Telegraph-noise (1/f) simulation via stochastic Hamiltonians.

Each fluctuator is a random-telegraph sign chi_i(t) with coupling b_i and
total switching rate gamma_i (gamma_i/2 per direction, so the sign
autocorrelation decays as exp(-gamma_i t) and the single-fluctuator power
spectrum is the Lorentzian b^2 gamma / pi (omega^2 + gamma^2)). Switching
rates drawn log-uniformly over several decades sum to a 1/omega spectrum
with amplitude <b^2> n_d / (2 ln 10) for n_d fluctuators per decade.

The noise enters the Hamiltonian as H(t) + (1/2) sum_i b_i chi_i(t) A and
each realization is propagated exactly (piecewise-constant noise, unitary
substeps), so the state norm is preserved to rounding.
"""

from __future__ import annotations

import math
import multiprocessing as mp
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import curve_fit

from .model import SIGMA_Z
from .stats import bootstrap_interval, stderr_mean

__all__ = [
    "Fluctuator", "FluctuatorEnsembleSpec", "sample_ensemble", "switch_schedule",
    "chi_at", "stochastic_h", "propagate_sse", "fid_analytic",
    "ensemble_density", "FitResult", "fit_decay", "SpectrumResult",
    "spectrum_check", "run_fluctuator_ensemble", "FluctuatorRunResult",
    "realization_rng",
]


def realization_rng(master_seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=np.array(
        [master_seed & 0xFFFFFFFFFFFFFFFF, index & 0xFFFFFFFFFFFFFFFF],
        dtype=np.uint64)))


@dataclass
class Fluctuator:
    """One telegraph source: coupling b (GHz), total flip rate gamma (GHz),
    initial sign chi0 and the precomputed switch times."""

    b: float
    gamma: float
    chi0: int = 1
    switch_times: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        if self.b <= 0 or self.gamma <= 0:
            raise ValueError("b and gamma must be positive")
        if self.chi0 not in (-1, 1):
            raise ValueError("chi0 must be +/-1")


@dataclass(frozen=True)
class FluctuatorEnsembleSpec:
    """Log-uniform switching rates in [gamma_min, gamma_max], Gaussian couplings
    (resampled if nonpositive), equilibrium bias dp_eq for the initial signs."""

    gamma_min: float
    gamma_max: float
    b_mean: float
    n_per_decade: Optional[float] = None
    n_total: Optional[int] = None
    b_rel_spread: float = 0.2
    dp_eq: float = 0.0

    def __post_init__(self):
        if not (0 < self.gamma_min < self.gamma_max):
            raise ValueError("need 0 < gamma_min < gamma_max")
        if self.b_mean <= 0 or self.b_rel_spread < 0:
            raise ValueError("b_mean must be positive, spread nonnegative")
        if not (0.0 <= self.dp_eq <= 1.0):
            raise ValueError("dp_eq must lie in [0, 1]")
        if (self.n_per_decade is None) == (self.n_total is None):
            raise ValueError("specify exactly one of n_per_decade / n_total")

    @property
    def decades(self) -> float:
        return math.log10(self.gamma_max / self.gamma_min)

    @property
    def count(self) -> int:
        if self.n_total is not None:
            return int(self.n_total)
        return int(round(self.n_per_decade * self.decades))


def switch_schedule(fluct, t_max: float, rng: np.random.Generator) -> np.ndarray:
    """Ordered switch times on [0, t_max]; gaps ~ Exp(rate gamma/2)."""
    if t_max <= 0:
        raise ValueError("t_max must be positive")
    gamma = fluct.gamma if isinstance(fluct, Fluctuator) else float(fluct)
    scale = 2.0 / gamma
    times = []
    t = 0.0
    block = max(8, int(t_max / scale * 1.5) + 8)
    while t < t_max:
        gaps = rng.exponential(scale, size=block)
        cum = t + np.cumsum(gaps)
        times.append(cum[cum < t_max])
        t = cum[-1]
    return np.concatenate(times) if times else np.empty(0)


def sample_ensemble(spec: FluctuatorEnsembleSpec, rng: np.random.Generator,
                    t_max: Optional[float] = None):
    """Draw the fluctuator ensemble; attaches switch schedules when t_max given."""
    n = spec.count
    gammas = np.exp(rng.uniform(np.log(spec.gamma_min), np.log(spec.gamma_max), size=n))
    sigma = spec.b_rel_spread * spec.b_mean
    bs = rng.normal(spec.b_mean, sigma, size=n)
    while np.any(bs <= 0):
        bad = bs <= 0
        bs[bad] = rng.normal(spec.b_mean, sigma, size=int(bad.sum()))
    chis = np.where(rng.uniform(size=n) < 0.5 * (1.0 + spec.dp_eq), 1, -1)
    out = []
    for b, g, c in zip(bs, gammas, chis):
        f = Fluctuator(b=float(b), gamma=float(g), chi0=int(c))
        if t_max is not None:
            f.switch_times = switch_schedule(f, t_max, rng)
        out.append(f)
    return out


def chi_at(fluct: Fluctuator, t) -> np.ndarray:
    """Telegraph sign at time(s) t given the precomputed switch times."""
    flips = np.searchsorted(fluct.switch_times, np.asarray(t, dtype=float),
                            side="right")
    return fluct.chi0 * np.where(flips % 2 == 0, 1, -1)


def stochastic_h(t: float, h_sys: Optional[np.ndarray], fluctuators,
                 axis_op: Optional[np.ndarray] = None) -> np.ndarray:
    """H_sys(t) + (1/2) sum_i b_i chi_i(t) A; piecewise constant between switches."""
    if axis_op is None:
        axis_op = SIGMA_Z
    amp = 0.5 * sum(f.b * float(chi_at(f, t)) for f in fluctuators)
    noise = amp * np.asarray(axis_op, dtype=complex)
    if h_sys is None:
        return noise
    return np.asarray(h_sys, dtype=complex) + noise


def _expm_unitary(h: np.ndarray, dt: float) -> np.ndarray:
    evals, vecs = np.linalg.eigh(h)
    return (vecs * np.exp(-1.0j * evals * dt)) @ vecs.conj().T


def propagate_sse(psi0: np.ndarray, fluctuators, grid: np.ndarray, *,
                  h_of_t: Optional[Callable[[float], np.ndarray]] = None,
                  axis_op: Optional[np.ndarray] = None,
                  dt_sub: Optional[float] = None) -> np.ndarray:
    """Exact piecewise-unitary propagation of one noise realization.

    Noise intervals come from the union of all switch times; inside an
    interval the noise is constant and the propagation is an exact matrix
    exponential (sub-stepped at dt_sub only when h_of_t is time dependent).
    Returns the states at the grid times, shape (len(grid), dim).
    """
    psi = np.asarray(psi0, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 1 or np.any(np.diff(grid) < 0):
        raise ValueError("grid must be a nondecreasing 1-d array")
    t0, t_end = float(grid[0]), float(grid[-1])
    if axis_op is None:
        axis_op = SIGMA_Z
    axis_op = np.asarray(axis_op, dtype=complex)

    switch = np.concatenate([f.switch_times for f in fluctuators]) if fluctuators else np.empty(0)
    switch = switch[(switch > t0) & (switch < t_end)]
    events = np.unique(np.concatenate([switch, grid, [t0, t_end]]))
    events = events[(events >= t0) & (events <= t_end)]

    out = np.empty((grid.size, psi.size), dtype=complex)
    gi = 0
    while gi < grid.size and grid[gi] <= t0:
        out[gi] = psi
        gi += 1
    for ta, tb in zip(events[:-1], events[1:]):
        if tb <= ta:
            continue
        amp = 0.5 * sum(f.b * float(chi_at(f, 0.5 * (ta + tb))) for f in fluctuators)
        noise = amp * axis_op
        if h_of_t is None:
            psi = _expm_unitary(noise, tb - ta) @ psi
        else:
            n_sub = 1 if dt_sub is None else max(1, int(math.ceil((tb - ta) / dt_sub)))
            h_const = None
            if dt_sub is None:
                h_const = h_of_t(0.5 * (ta + tb))
            step = (tb - ta) / n_sub
            for k in range(n_sub):
                tm = ta + (k + 0.5) * step
                h = h_const if h_const is not None else h_of_t(tm)
                psi = _expm_unitary(np.asarray(h, dtype=complex) + noise, step) @ psi
        while gi < grid.size and grid[gi] <= tb + 1e-15:
            out[gi] = psi
            gi += 1
    while gi < grid.size:
        out[gi] = psi
        gi += 1
    return out


# ---------------------------------------------------------------------------
# Single-fluctuator analytics and derived observables
# ---------------------------------------------------------------------------

def fid_analytic(b: float, gamma: float, t) -> np.ndarray:
    """Free-induction decay <m_+(t)> of one symmetric telegraph fluctuator:
    (2 mu)^-1 e^{-gamma t/2} [(mu+1) e^{gamma mu t/2} + (mu-1) e^{-gamma mu t/2}]
    with mu = sqrt(1 - (2b/gamma)^2); imaginary mu gives damped oscillation."""
    if b <= 0 or gamma <= 0:
        raise ValueError("b and gamma must be positive")
    t = np.asarray(t, dtype=float)
    mu = np.sqrt(complex(1.0 - (2.0 * b / gamma) ** 2))
    if abs(mu) < 1e-12:
        return np.exp(-gamma * t / 2.0) * (1.0 + gamma * t / 2.0)
    x = gamma * mu * t / 2.0
    val = np.exp(-gamma * t / 2.0) / (2.0 * mu) * (
        (mu + 1.0) * np.exp(x) + (mu - 1.0) * np.exp(-x))
    return np.real(val)


def ensemble_density(states: np.ndarray) -> np.ndarray:
    """Averaged density matrices from stacked pure states (K, n_t, dim)."""
    states = np.asarray(states, dtype=complex)
    if states.ndim == 2:
        states = states[None]
    return np.einsum("kti,ktj->tij", states, states.conj()) / states.shape[0]


@dataclass
class FitResult:
    decay_time: float
    amplitude: float
    residual_rms: float
    degenerate: bool


def fit_decay(times: np.ndarray, series: np.ndarray, model: str = "T2star") -> FitResult:
    """Least-squares fit of the closed-form decay profile.

    model 'T1': series is a level population relaxing as 0.5 + a e^{-t/T};
    model 'T2star': series is a coherence magnitude decaying as a e^{-t/T}.
    A series that does not decay over the window is flagged degenerate.
    """
    times = np.asarray(times, dtype=float)
    series = np.asarray(series, dtype=float)
    span = times[-1] - times[0]
    if model == "T1":
        def f(t, a, T):
            return 0.5 + a * np.exp(-t / T)
        p0 = (series[0] - 0.5, max(span / 3.0, 1e-9))
    elif model == "T2star":
        def f(t, a, T):
            return a * np.exp(-t / T)
        p0 = (max(series[0], 1e-6), max(span / 3.0, 1e-9))
    else:
        raise ValueError("model must be 'T1' or 'T2star'")
    try:
        popt, _ = curve_fit(f, times, series, p0=p0, maxfev=20000)
    except RuntimeError:
        return FitResult(np.inf, np.nan, np.inf, True)
    resid = series - f(times, *popt)
    rms = float(np.sqrt(np.mean(resid ** 2)))
    decay_time = float(popt[1])
    degenerate = not np.isfinite(decay_time) or decay_time <= 0 or decay_time > 50 * span
    return FitResult(decay_time=decay_time, amplitude=float(popt[0]),
                     residual_rms=rms, degenerate=degenerate)


@dataclass
class SpectrumResult:
    omega: np.ndarray
    spectrum: np.ndarray
    slope: float
    amplitude: float
    warning: Optional[str]


def spectrum_check(fluctuators, omega: np.ndarray,
                   band: Optional[tuple] = None) -> SpectrumResult:
    """Analytic total spectrum sum_i b_i^2 gamma_i / pi (omega^2 + gamma_i^2)
    with the log-log slope and 1/omega amplitude fitted over the mid-band."""
    omega = np.asarray(omega, dtype=float)
    if np.any(omega <= 0):
        raise ValueError("omega grid must be positive")
    b = np.array([f.b for f in fluctuators])
    g = np.array([f.gamma for f in fluctuators])
    spec = ((b ** 2)[:, None] * (g[:, None] / np.pi)
            / (omega[None, :] ** 2 + (g ** 2)[:, None])).sum(axis=0)
    if band is None:
        band = (10.0 * g.min(), g.max() / 10.0)
    lo, hi = band
    warning = None
    sel = (omega >= lo) & (omega <= hi)
    if sel.sum() < 2:
        warning = "omega grid does not cover the 1/f validity band"
        sel = slice(None)
        slope = float("nan")
        amplitude = float(np.median(spec * omega))
    else:
        slope = float(np.polyfit(np.log(omega[sel]), np.log(spec[sel]), 1)[0])
        amplitude = float(np.mean(spec[sel] * omega[sel]))
    if omega.min() < g.min() or omega.max() > g.max():
        warning = warning or "omega grid extends outside (gamma_min, gamma_max)"
    return SpectrumResult(omega=omega, spectrum=spec, slope=slope,
                          amplitude=amplitude, warning=warning)


# ---------------------------------------------------------------------------
# Ensemble runner
# ---------------------------------------------------------------------------

@dataclass
class FluctuatorRunResult:
    times: np.ndarray
    bloch: np.ndarray            # (n_t, 3) averaged <sigma_x,y,z> (single qubit)
    coherence: np.ndarray        # |rho_01(t)| from the averaged state
    gs_population: Optional[np.ndarray]
    stderr: Optional[np.ndarray]         # per-time sigma-hat of the tracked series
    ci_low: Optional[np.ndarray]
    ci_high: Optional[np.ndarray]
    rho: np.ndarray              # (n_t, d, d) averaged density matrices
    n_real: int


_FLUCT_PAYLOAD = {}


def _fluct_init(payload):
    _FLUCT_PAYLOAD["p"] = payload


def _fluct_one(index):
    p = _FLUCT_PAYLOAD["p"]
    rng = realization_rng(p["seed"], index)
    flucts = sample_ensemble(p["spec"], rng, t_max=p["times"][-1])
    states = propagate_sse(p["psi0"], flucts, p["times"], h_of_t=p["h_of_t"],
                           axis_op=p["axis"], dt_sub=p["dt_sub"])
    return index, states


def run_fluctuator_ensemble(spec: FluctuatorEnsembleSpec, psi0: np.ndarray,
                            times: np.ndarray, *, master_seed: int = 0,
                            n_real: int = 1000, workers: int = 1,
                            h_of_t: Optional[Callable] = None,
                            axis_op: Optional[np.ndarray] = None,
                            gs_vectors: Optional[np.ndarray] = None,
                            dt_sub: Optional[float] = None,
                            n_boot: int = 1000) -> FluctuatorRunResult:
    """Average n_real independent noise realizations of the stochastic SSE."""
    times = np.asarray(times, dtype=float)
    payload = {"spec": spec, "psi0": np.asarray(psi0, dtype=complex),
               "times": times, "seed": int(master_seed), "h_of_t": h_of_t,
               "axis": SIGMA_Z if axis_op is None else axis_op, "dt_sub": dt_sub}
    workers = max(1, min(int(workers), n_real))
    if workers == 1:
        _fluct_init(payload)
        results = [_fluct_one(i) for i in range(n_real)]
    else:
        ctx = mp.get_context("fork")
        with ctx.Pool(workers, initializer=_fluct_init,
                      initargs=(payload,)) as pool:
            results = pool.map(_fluct_one, range(n_real),
                               chunksize=max(1, n_real // (workers * 8)))
    results.sort(key=lambda r: r[0])
    states = np.stack([r[1] for r in results])  # (K, n_t, d)
    rho = ensemble_density(states)
    dim = states.shape[-1]
    if dim == 2:
        bloch = np.stack([
            2.0 * np.real(rho[:, 0, 1]),
            -2.0 * np.imag(rho[:, 0, 1]),
            np.real(rho[:, 0, 0] - rho[:, 1, 1]),
        ], axis=1)
        coherence = np.abs(rho[:, 0, 1])
    else:
        bloch = np.zeros((times.size, 3))
        coherence = np.abs(rho[:, 0, 1])
    gs = None
    if gs_vectors is not None:
        ov = np.einsum("td,ktd->kt", np.asarray(gs_vectors).conj(), states)
        samples = np.abs(ov) ** 2
        gs = samples.mean(axis=0)
        if n_real >= 2:
            err = stderr_mean(samples)
            rng = realization_rng(master_seed, 0xFFFFFFFFFFFFFFFF)
            lo, hi = bootstrap_interval(samples, rng, n_boot=n_boot)
        else:
            err = lo = hi = None
    elif n_real >= 2:
        samples = np.abs(states[:, :, 0] * states[:, :, 1].conj())
        err = stderr_mean(samples)
        rng = realization_rng(master_seed, 0xFFFFFFFFFFFFFFFF)
        lo, hi = bootstrap_interval(samples, rng, n_boot=n_boot)
    else:
        err = lo = hi = None
    return FluctuatorRunResult(times=times, bloch=bloch, coherence=coherence,
                               gs_population=gs, stderr=err, ci_low=lo,
                               ci_high=hi, rho=rho, n_real=n_real)
