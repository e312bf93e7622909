"""Sample statistics shared by the stochastic engines."""

from __future__ import annotations

import numpy as np

__all__ = ["stderr_mean", "bootstrap_interval", "tts", "loglog_slope"]


def stderr_mean(samples: np.ndarray, axis: int = 0) -> np.ndarray:
    """Standard error of the sample mean, sigma^2 = sum (x - m)^2 / (R (R-1))."""
    samples = np.asarray(samples)
    r = samples.shape[axis]
    if r < 2:
        raise ValueError("standard error needs at least two samples")
    m = samples.mean(axis=axis, keepdims=True)
    return np.sqrt(np.sum((samples - m) ** 2, axis=axis) / (r * (r - 1)))


def bootstrap_interval(samples: np.ndarray, rng: np.random.Generator,
                       n_boot: int = 1000, z: float = 2.0, chunk: int = 64):
    """(low, high) = mean -/+ z * std of bootstrap means over trajectories.

    samples has shape (R, ...); resampling is over the first axis.
    """
    samples = np.asarray(samples, dtype=float)
    r = samples.shape[0]
    mean = samples.mean(axis=0)
    boot_means = np.empty((n_boot,) + samples.shape[1:])
    done = 0
    while done < n_boot:
        m = min(chunk, n_boot - done)
        idx = rng.integers(0, r, size=(m, r))
        boot_means[done:done + m] = samples[idx].mean(axis=1)
        done += m
    spread = z * boot_means.std(axis=0)
    return mean - spread, mean + spread


def tts(tau: float, p_g: float, p_d: float = 0.99) -> float:
    """Time to solution tau * ln(1-p_d)/ln(1-p_g); NaN when p_g is 0 or 1."""
    if not (0.0 < p_g < 1.0):
        return float("nan")
    return tau * np.log(1.0 - p_d) / np.log(1.0 - p_g)


def loglog_slope(x: np.ndarray, y: np.ndarray) -> float:
    """Least-squares slope of log y against log x."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    good = (x > 0) & (y > 0)
    if good.sum() < 2:
        raise ValueError("need at least two positive points")
    return float(np.polyfit(np.log(x[good]), np.log(y[good]), 1)[0])
