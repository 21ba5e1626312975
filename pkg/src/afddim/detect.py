"""Destination decoders: deterministic DDIM reverse recursion and collapsed-channel ML."""

import math
from dataclasses import dataclass

import numpy as np

from .denoise import BayesDenoiser, LearnedDenoiser
from .diffusion import init_reverse_state, schedule_from_stats
from .signal import ConfigurationError, SymbolBlock


@dataclass(frozen=True)
class DetectorConfig:
    """``denoiser`` is ``"exact_bayes"`` or ``"learned"`` (then ``model`` is required)."""

    steps: int
    constellation: object
    denoiser: str = "exact_bayes"
    model: object = None

    def __post_init__(self):
        if self.steps < 1:
            raise ConfigurationError("reverse steps must be >= 1")
        if self.denoiser not in ("exact_bayes", "learned"):
            raise ConfigurationError(f"unknown denoiser {self.denoiser!r}")
        if self.denoiser == "learned" and self.model is None:
            raise ConfigurationError("the learned denoiser needs a trained model")

    def build_denoiser(self):
        if self.denoiser == "exact_bayes":
            return BayesDenoiser(self.constellation)
        return LearnedDenoiser(self.model)


def ddim_reverse(x_T, schedule, denoiser):
    """Deterministic DDIM from step T down to 0 on a sample array.

    The denoiser returns (eps, x0) so the clean prediction is used as
    produced instead of being re-derived from eps.
    """
    x = np.asarray(x_T, dtype=np.complex128)
    abar, sigma, lam = schedule.abar, schedule.sigma, schedule.lam
    for t in range(schedule.steps, 0, -1):
        if sigma[t] == 0.0:
            # already on the clean manifold
            continue
        eps, x0 = denoiser.predict(x, t, float(abar[t]), float(lam[t]))
        x = math.sqrt(abar[t - 1]) * x0 + math.sqrt(1.0 - abar[t - 1]) * eps
    return x


def ddim_decode(x_H, stats, cfg):
    """Soft estimate of the source block from the received block and (mu, v)."""
    schedule = schedule_from_stats(stats, cfg.steps)
    x_T = init_reverse_state(x_H, stats)
    out = ddim_reverse(x_T.samples, schedule, cfg.build_denoiser())
    return x_H.with_samples(out)


def ml_decode(x_H, stats, const):
    """argmin_s |x_H - mu s|^2, i.e. nearest point after equalization by mu."""
    if stats.mu == 0:
        raise ValueError("cannot decide with zero end-to-end gain")
    idx = const.decide(np.asarray(x_H.samples) / stats.mu)
    return SymbolBlock(const.points[idx], x_H.side, idx)
