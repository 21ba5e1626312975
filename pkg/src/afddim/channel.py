"""Fixed-gain amplify-and-forward relay chains (SISO).

Each hop receives ``y = h x + w`` with ``w ~ CN(0, sigma^2)`` and forwards
``g y``, where the gain ``g`` meets the relay power cap with equality using
the statistical input power. Besides the received block, propagation returns
the exact end-to-end statistics ``(mu, v)`` such that
``x_H = mu x_0 + CN(0, v)``.
"""

import math
from dataclasses import dataclass

import numpy as np

from .signal import ConfigurationError, SymbolBlock

V_FLOOR = 1e-300


def db_to_lin(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


@dataclass(frozen=True)
class HopConfig:
    """Parameters of one hop.

    ``fading`` is ``"unit_gain"`` or ``"rician"``. ``distance_m`` is either a
    fixed distance or a ``(d_min, d_max)`` range sampled uniformly per draw.
    ``ref_loss_db`` is the attenuation at 1 m (10 means a 0.1 power gain).
    """

    fading: str = "unit_gain"
    k_db: float = 15.0
    distance_m: object = 1.0
    path_loss_exponent: float = 0.0
    ref_loss_db: float = 0.0
    noise_variance: float = 1.0
    power_cap: float = 1.0

    def __post_init__(self):
        if self.fading not in ("unit_gain", "rician"):
            raise ConfigurationError(f"unknown fading model {self.fading!r}")
        lo, hi = self.distance_range
        vals = (lo, hi, self.k_db, self.path_loss_exponent, self.ref_loss_db, self.noise_variance, self.power_cap)
        if not all(math.isfinite(float(v)) for v in vals):
            raise ConfigurationError("hop parameters must be finite")
        if lo <= 0 or lo > hi:
            raise ConfigurationError("distance must be positive with d_min <= d_max")
        if self.path_loss_exponent < 0 or self.noise_variance < 0 or self.power_cap <= 0:
            raise ConfigurationError("invalid exponent, noise variance or power cap")

    @property
    def distance_range(self):
        d = self.distance_m
        if isinstance(d, (tuple, list)):
            return float(d[0]), float(d[1])
        return float(d), float(d)

    def mean_power_gain(self):
        """E|h|^2 over the distance distribution (fading has unit mean power)."""
        lo, hi = self.distance_range
        ref = 10.0 ** (-self.ref_loss_db / 10.0)
        n = self.path_loss_exponent
        if hi == lo:
            return ref * lo ** (-n)
        if abs(n - 1.0) < 1e-12:
            return ref * math.log(hi / lo) / (hi - lo)
        return ref * (hi ** (1 - n) - lo ** (1 - n)) / ((1 - n) * (hi - lo))


@dataclass(frozen=True)
class HopRealization:
    h: complex
    g: float
    noise_variance: float
    input_power: float
    snr_in: float


@dataclass(frozen=True)
class SufficientStats:
    """End-to-end gain ``mu`` and noise variance ``v`` of a collapsed chain."""

    mu: complex
    v: float

    def snr(self, source_power=1.0):
        return abs(self.mu) ** 2 * source_power / self.v

    @property
    def snr_eq(self):
        return self.snr(1.0)


def draw_hop(config, rng):
    lo, hi = config.distance_range
    d = lo if hi == lo else rng.uniform(lo, hi)
    path_gain = 10.0 ** (-config.ref_loss_db / 10.0) * d ** (-config.path_loss_exponent)
    if config.fading == "unit_gain":
        fade = 1.0 + 0.0j
    else:
        k = 10.0 ** (config.k_db / 10.0)
        scatter = (rng.standard_normal() + 1j * rng.standard_normal()) / math.sqrt(2.0)
        fade = math.sqrt(k / (k + 1.0)) + math.sqrt(1.0 / (k + 1.0)) * scatter
    return complex(math.sqrt(path_gain) * fade)


def relay_gain(h, input_power, noise_variance, power_cap):
    """Fixed gain meeting ``g^2 (|h|^2 P_in + sigma^2) = P_cap``."""
    return math.sqrt(power_cap / (abs(h) ** 2 * input_power + noise_variance))


def propagate_chain(block, hops, rng, source_power=1.0):
    """Send ``block`` through the hops.

    Returns ``(x_H, stats, realizations)``. The noise of each hop is drawn as
    CN(0, 1) (the whitened form) and scaled by ``sigma``.
    """
    if not hops:
        raise ConfigurationError("a chain needs at least one hop")
    x = np.asarray(block.samples)
    mu = 1.0 + 0.0j
    v = 0.0
    p_in = float(source_power)
    realizations = []
    for cfg in hops:
        h = draw_hop(cfg, rng)
        s2 = float(cfg.noise_variance)
        g = relay_gain(h, p_in, s2, cfg.power_cap)
        w = (rng.standard_normal(x.size) + 1j * rng.standard_normal(x.size)) / math.sqrt(2.0)
        x = g * (h * x + math.sqrt(s2) * w)
        snr_in = abs(h) ** 2 * p_in / s2 if s2 > 0 else math.inf
        realizations.append(HopRealization(h=h, g=g, noise_variance=s2, input_power=p_in, snr_in=snr_in))
        mu = g * h * mu
        v = abs(g * h) ** 2 * v + g * g * s2
        p_in = float(cfg.power_cap)
    return block.with_samples(x), SufficientStats(complex(mu), max(v, V_FLOOR)), realizations


def equal_split_hop_snr(snr_eq, hops):
    """Per-hop input SNR that yields end-to-end ``snr_eq`` over ``hops`` equal hops.

    Each hop keeps a fraction s/(1+s) of the signal power, and the chain keeps
    snr_eq/(1+snr_eq), so s/(1+s) is the hops-th root of that.
    """
    if snr_eq == math.inf:
        return math.inf
    r = snr_eq / (1.0 + snr_eq)
    # r**(1/H) close to 1 loses digits in 1 - r**(1/H); expm1 keeps them
    keep_log = math.log(r) / hops
    return -math.exp(keep_log) / math.expm1(keep_log)


def end_to_end_snr(hop_snrs):
    keep = 1.0
    for s in hop_snrs:
        keep *= s / (1.0 + s) if math.isfinite(s) else 1.0
    return math.inf if keep == 1.0 else keep / (1.0 - keep)


def calibrated_hops(H, snr_db, *, axis="end_to_end", fading="unit_gain", k_db=15.0,
                    distance_m=1.0, path_loss_exponent=0.0, ref_loss_db=0.0,
                    power_cap=1.0, source_power=1.0):
    """Hop configs whose noise variances hit an SNR target.

    With ``axis="end_to_end"`` the target is the destination SNR, split evenly
    over the hops; with ``axis="per_hop"`` every hop gets ``snr_db`` as input
    SNR. Noise is set against the mean channel power gain, so fading makes
    the realized SNR fluctuate around the target.
    """
    if axis not in ("end_to_end", "per_hop"):
        raise ConfigurationError(f"unknown SNR axis {axis!r}")
    snr = math.inf if snr_db == math.inf else float(db_to_lin(snr_db))
    if not snr > 0:
        raise ConfigurationError(f"SNR target {snr_db} dB is not reachable")
    s = snr if axis == "per_hop" else equal_split_hop_snr(snr, H)
    hops = []
    p_in = source_power
    for _ in range(H):
        proto = HopConfig(fading=fading, k_db=k_db, distance_m=distance_m,
                          path_loss_exponent=path_loss_exponent, ref_loss_db=ref_loss_db,
                          noise_variance=1.0, power_cap=power_cap)
        s2 = 0.0 if s == math.inf else proto.mean_power_gain() * p_in / s
        hops.append(HopConfig(fading=fading, k_db=k_db, distance_m=distance_m,
                              path_loss_exponent=path_loss_exponent, ref_loss_db=ref_loss_db,
                              noise_variance=s2, power_cap=power_cap))
        p_in = power_cap
    return hops


@dataclass(frozen=True)
class ChainSpace:
    """Distribution over relay chains: destination SNR uniform in dB over a range."""

    hops: int = 10
    snr_db_range: tuple = (5.0, 15.0)
    fading: str = "unit_gain"
    k_db: float = 15.0
    distance_m: object = 1.0
    path_loss_exponent: float = 0.0
    ref_loss_db: float = 0.0
    power_cap: float = 1.0

    def sample(self, rng):
        lo, hi = self.snr_db_range
        snr_db = rng.uniform(lo, hi) if hi > lo else lo
        return calibrated_hops(self.hops, snr_db, fading=self.fading, k_db=self.k_db,
                               distance_m=self.distance_m,
                               path_loss_exponent=self.path_loss_exponent,
                               ref_loss_db=self.ref_loss_db, power_cap=self.power_cap)


@dataclass(frozen=True)
class StatQuantizer:
    """Uniform quantizer for (Re mu, Im mu) and a log-domain one for v."""

    bits_re: int = 32
    bits_im: int = 32
    bits_v: int = 16
    mu_range: tuple = (-1.0, 1.0)
    v_range: tuple = (1e-12, 1.0)

    def __post_init__(self):
        if min(self.bits_re, self.bits_im, self.bits_v) < 2:
            raise ConfigurationError("quantizer bit widths must be >= 2")
        if not (self.mu_range[0] < self.mu_range[1] and 0 < self.v_range[0] < self.v_range[1]):
            raise ConfigurationError("invalid quantizer ranges")

    @property
    def total_bits(self):
        return self.bits_re + self.bits_im + self.bits_v

    def __call__(self, stats):
        return quantize_stats(stats, self.bits_re, self.bits_im, self.bits_v,
                              mu_range=self.mu_range, v_range=self.v_range)


def _uniform_q(x, lo, hi, bits):
    levels = (1 << bits) - 1
    x = min(max(x, lo), hi)
    step = (hi - lo) / levels
    return lo + round((x - lo) / step) * step


def quantize_stats(stats, bits_re, bits_im, bits_v, mu_range=(-1.0, 1.0), v_range=(1e-12, 1.0)):
    """Round each scalar to its nearest quantizer level (clamped to range)."""
    re = _uniform_q(stats.mu.real, mu_range[0], mu_range[1], bits_re)
    im = _uniform_q(stats.mu.imag, mu_range[0], mu_range[1], bits_im)
    lv = _uniform_q(math.log(max(stats.v, V_FLOOR)), math.log(v_range[0]), math.log(v_range[1]), bits_v)
    return SufficientStats(complex(re, im), math.exp(lv))
