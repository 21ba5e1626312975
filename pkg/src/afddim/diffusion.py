"""Mapping between AF hops and variance-preserving diffusion steps.

Amplitude convention for single steps and the collapsed channel:
``x_{t+1} = alpha x_t + sqrt(1 - alpha^2) z``. Reverse schedules use the
variance convention of DDIM, ``x_t = sqrt(abar_t) x_0 + sqrt(1 - abar_t) eps``,
so the schedule endpoint ``abar_T`` equals the squared collapse amplitude.
"""

import math
from dataclasses import dataclass

import numpy as np

from .signal import ConfigurationError


@dataclass(frozen=True)
class VpStep:
    alpha: float
    beta: float


def alpha_from_snr(snr_in):
    """alpha^2 = snr/(1+snr), beta = 1/(1+snr)."""
    if not snr_in >= 0:
        raise ValueError(f"input SNR must be non-negative, got {snr_in}")
    if snr_in == math.inf:
        return VpStep(1.0, 0.0)
    beta = 1.0 / (1.0 + snr_in)
    return VpStep(math.sqrt(snr_in / (1.0 + snr_in)), beta)


def snr_from_alpha(alpha):
    a2 = alpha * alpha
    return a2 / (1.0 - a2)


@dataclass(frozen=True)
class CollapsedChannel:
    alpha_bar: float
    gamma: float


def collapse(steps):
    if len(steps) == 0:
        raise ValueError("collapse needs at least one step")
    # sorted product so every ordering of the same steps gives identical bits
    alpha_bar = float(np.prod(sorted(s.alpha for s in steps)))
    a2 = alpha_bar * alpha_bar
    gamma = math.inf if a2 >= 1.0 else a2 / (1.0 - a2)
    return CollapsedChannel(alpha_bar, gamma)


def _cn(rng, n):
    return (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / math.sqrt(2.0)


def forward_sequential(x0, alphas, rng):
    """Run the per-step recursion on a sample array; returns the final state."""
    x = np.asarray(x0, dtype=np.complex128)
    for a in alphas:
        x = a * x + math.sqrt(1.0 - a * a) * _cn(rng, x.size)
    return x


def forward_jump(x0, abar_t, rng):
    """Corrupt a block in one step: sqrt(abar) x0 + sqrt(1-abar) z.

    Returns ``(block, z)``; ``z`` is the injected noise used as the
    denoiser training target.
    """
    if not 0.0 < abar_t <= 1.0:
        raise ValueError("abar_t must lie in (0, 1]")
    z = _cn(rng, len(x0))
    x = math.sqrt(abar_t) * x0.samples + math.sqrt(1.0 - abar_t) * z
    return x0.with_samples(x), z


@dataclass(frozen=True, eq=False)
class ReverseSchedule:
    """``abar[t]`` for t = 0..T, with sigma and log-SNR lambda per step."""

    steps: int
    abar: np.ndarray
    sigma: np.ndarray
    lam: np.ndarray

    @property
    def snr_eq(self):
        a = self.abar[-1]
        return math.inf if a >= 1.0 else a / (1.0 - a)


def schedule_from_snr(snr_eq, T):
    if T < 1:
        raise ConfigurationError("reverse schedule needs T >= 1")
    abar_T = 1.0 if snr_eq == math.inf else snr_eq / (1.0 + snr_eq)
    t = np.arange(T + 1)
    abar = abar_T ** (t / T)
    abar[0] = 1.0
    abar[T] = abar_T
    sigma = np.sqrt(1.0 - abar)
    with np.errstate(divide="ignore"):
        lam = np.log(abar) - np.log1p(-abar)
    for arr in (abar, sigma, lam):
        arr.setflags(write=False)
    return ReverseSchedule(T, abar, sigma, lam)


def schedule_from_stats(stats, T):
    return schedule_from_snr(stats.snr_eq, T)


def init_reverse_state(x_H, stats):
    """Equalize by mu and rescale onto the step-T marginal.

    ``x_H / mu = x_0 + n`` with Var n = v/|mu|^2 = 1/snr; multiplying by
    sqrt(abar_T) leaves noise variance abar_T/snr = 1 - abar_T.
    """
    if stats.mu == 0:
        raise ValueError("cannot equalize a chain with zero end-to-end gain")
    snr = stats.snr_eq
    abar_T = 1.0 if snr == math.inf else snr / (1.0 + snr)
    x = np.asarray(x_H.samples if hasattr(x_H, "samples") else x_H) / stats.mu
    x = math.sqrt(abar_T) * x
    return x_H.with_samples(x) if hasattr(x_H, "samples") else x
