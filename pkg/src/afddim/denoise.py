"""Noise-prediction denoisers for the reverse process.

Two interchangeable implementations of ``predict(x_t, step, abar_t, lam_t)``
returning ``(eps_hat, x0_hat)``:

* :class:`BayesDenoiser` -- exact posterior mean for a known finite prior;
* :class:`LearnedDenoiser` -- a per-symbol MLP trained with the usual
  noise-regression loss on samples drawn from simulated relay chains.

Checkpoint format (JSON text, ``format = "afddim-mlp"``, ``version = 1``)::

    layer_sizes   [n_in, h1, h2, 2]
    activation    "silu"
    embed_pairs   number of (sin, cos) pairs in the step embedding
    lam_shift, lam_scale   input normalization of the log-SNR feature
    amplitude     bound on each coordinate of the clean estimate
    step_lambdas  mean log-SNR of each training step index (may be empty)
    layers        list of {"weight": [...], "bias": [...]}; weight is the
                  row-major (n_in x n_out) matrix flattened
"""

import json
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from . import kernels
from .channel import propagate_chain
from .signal import SymbolBlock

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "afddim-mlp"
CHECKPOINT_VERSION = 1


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class DenoiserQuery:
    x_t: complex
    abar_t: float
    sigma_t: float
    t: int = 1
    lambda_t: float = 0.0
    mu: complex = 1.0
    v: float = 1.0

    def __post_init__(self):
        if abs(self.sigma_t - math.sqrt(1.0 - self.abar_t)) > 1e-12:
            raise ValueError("sigma_t must equal sqrt(1 - abar_t)")

    @classmethod
    def at(cls, x_t, abar_t, t=1, mu=1.0, v=1.0):
        lam = math.log(abar_t) - math.log1p(-abar_t) if abar_t < 1 else math.inf
        return cls(x_t, abar_t, math.sqrt(1.0 - abar_t), t, lam, mu, v)


# ---------------------------------------------------------------------------
# exact Bayes


def bayes_x0_array(x_t, abar_t, const):
    """Posterior mean of x0 given x_t = sqrt(abar) x0 + sqrt(1-abar) eps."""
    abar_t = np.asarray(abar_t, dtype=float)
    return kernels.posterior_mean(x_t, np.sqrt(abar_t), 1.0 - abar_t, const.points, const.log_prior)


def bayes_x0(query, const):
    return complex(bayes_x0_array([query.x_t], query.abar_t, const)[0])


def bayes_epsilon(query, const):
    if query.sigma_t == 0:
        raise ValueError("epsilon is undefined at sigma_t = 0")
    x0 = bayes_x0(query, const)
    return (query.x_t - math.sqrt(query.abar_t) * x0) / query.sigma_t


class BayesDenoiser:
    name = "exact_bayes"

    def __init__(self, const):
        self.const = const

    def predict(self, x_t, step, abar_t, lam_t):
        x0 = bayes_x0_array(x_t, abar_t, self.const)
        sigma = math.sqrt(1.0 - abar_t)
        eps = (x_t - math.sqrt(abar_t) * x0) / sigma
        return eps, x0


# ---------------------------------------------------------------------------
# MLP


def sinusoidal_embedding(t, pairs=8):
    """[sin(w t), cos(w t)] with wavelengths geometric from 1 to 1e4."""
    t = np.asarray(t, dtype=float).reshape(-1, 1)
    w = 1.0 / np.geomspace(1.0, 1e4, pairs)
    ang = t * w[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


def _silu(z):
    s = 0.5 * (1.0 + np.tanh(0.5 * z))
    return z * s, s


def _vp_coefficients(lam):
    """sqrt(abar) and sigma = sqrt(1 - abar) from the log-SNR."""
    return np.sqrt(special.expit(lam)), np.sqrt(special.expit(-lam))


class MlpDenoiser:
    """Per-symbol noise predictor.

    Inputs: componentwise asinh of the matched-filter statistic
    sqrt(abar) x_t / (1 - abar), the sinusoidal step embedding and the
    normalized log-SNR. Two SiLU hidden layers produce F; the clean estimate
    is ``amplitude * tanh(F)`` per component and the returned noise estimate
    is ``(x_t - sqrt(abar) x0) / sigma``.
    """

    def __init__(self, hidden=128, embed_pairs=8, rng=None, *, layers=None,
                 lam_shift=0.0, lam_scale=1.0, amplitude=1.0, step_lambdas=()):
        self.embed_pairs = int(embed_pairs)
        self.lam_shift = float(lam_shift)
        self.lam_scale = float(lam_scale)
        self.amplitude = float(amplitude)
        self.step_lambdas = np.asarray(step_lambdas, dtype=float)
        self.history = []
        n_in = 2 + 2 * self.embed_pairs + 1
        if layers is None:
            rng = np.random.default_rng() if rng is None else rng
            sizes = [n_in, hidden, hidden, 2]
            layers = []
            for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
                W = rng.standard_normal((fan_in, fan_out)) / math.sqrt(fan_in)
                layers.append([W, np.zeros(fan_out)])
        self.layers = [[np.array(W, dtype=float), np.array(b, dtype=float)] for W, b in layers]
        if self.layers[0][0].shape[0] != n_in or self.layers[-1][0].shape[1] != 2:
            raise ValueError("layer shapes do not match the input embedding")

    @property
    def layer_sizes(self):
        return [self.layers[0][0].shape[0]] + [W.shape[1] for W, _ in self.layers]

    def params(self):
        return [arr for layer in self.layers for arr in layer]

    def features(self, x_t, t, lam):
        x_t = np.asarray(x_t, dtype=np.complex128).reshape(-1)
        n = x_t.size
        t = np.broadcast_to(np.asarray(t, dtype=float), (n,))
        lam = np.broadcast_to(np.asarray(lam, dtype=float), (n,))
        ra, sig = _vp_coefficients(lam)
        r = ra * x_t / (sig * sig)
        lam_f = (np.clip(lam, -30.0, 30.0) - self.lam_shift) / self.lam_scale
        return np.column_stack([np.arcsinh(r.real), np.arcsinh(r.imag),
                                sinusoidal_embedding(t, self.embed_pairs), lam_f])

    def forward(self, feats, keep=False):
        """Raw network output F (n x 2)."""
        acts = [feats]
        pre = []
        h = feats
        for i, (W, b) in enumerate(self.layers):
            z = h @ W + b
            if i < len(self.layers) - 1:
                pre.append(z)
                h, _ = _silu(z)
            else:
                h = z
            acts.append(h)
        return (h, (acts, pre)) if keep else h

    def _heads(self, x_t, lam, F):
        th = np.tanh(F)
        x0 = self.amplitude * (th[:, 0] + 1j * th[:, 1])
        ra, sig = _vp_coefficients(np.broadcast_to(np.asarray(lam, dtype=float), x0.shape))
        return (x_t - ra * x0) / sig, x0, th, ra / sig

    def predict(self, x_t, t, lam):
        """``(eps_hat, x0_hat)`` for a sample array."""
        x_t = np.asarray(x_t, dtype=np.complex128).reshape(-1)
        eps, x0, _, _ = self._heads(x_t, lam, self.forward(self.features(x_t, t, lam)))
        return eps, x0

    def epsilon(self, x_t, t, lam):
        return self.predict(x_t, t, lam)[0]

    def loss_and_grads(self, x_t, t, lam, target_eps):
        """Mean |eps_hat - target|^2 over samples and its parameter gradients."""
        x_t = np.asarray(x_t, dtype=np.complex128).reshape(-1)
        F, (acts, pre) = self.forward(self.features(x_t, t, lam), keep=True)
        eps, _, th, gain = self._heads(x_t, lam, F)
        diff = eps - target_eps
        n = x_t.size
        loss = float(np.mean(diff.real**2 + diff.imag**2))
        # d eps / d F = -sqrt(abar)/sigma * amplitude * (1 - tanh^2)
        grad = np.column_stack([diff.real, diff.imag]) * (2.0 / n)
        grad = grad * (-gain * self.amplitude)[:, None] * (1.0 - th * th)
        grads = [None] * (2 * len(self.layers))
        for i in range(len(self.layers) - 1, -1, -1):
            W, _ = self.layers[i]
            grads[2 * i] = acts[i].T @ grad
            grads[2 * i + 1] = grad.sum(axis=0)
            if i > 0:
                grad = grad @ W.T
                z = pre[i - 1]
                _, s = _silu(z)
                grad = grad * s * (1.0 + z * (1.0 - s))
        return loss, grads

    def step_for_lambda(self, lam):
        """Training step index whose mean log-SNR is nearest to ``lam``."""
        if self.step_lambdas.size == 0:
            return None
        return int(np.argmin(np.abs(self.step_lambdas - lam))) + 1

    # -- persistence --------------------------------------------------------

    def to_dict(self):
        return {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "layer_sizes": self.layer_sizes,
            "activation": "silu",
            "embed_pairs": self.embed_pairs,
            "lam_shift": self.lam_shift,
            "lam_scale": self.lam_scale,
            "amplitude": self.amplitude,
            "step_lambdas": self.step_lambdas.tolist(),
            "layers": [{"weight": W.reshape(-1).tolist(), "bias": b.tolist()} for W, b in self.layers],
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"not an {CHECKPOINT_FORMAT} checkpoint")
        if d.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {d.get('version')}")
        sizes = d["layer_sizes"]
        layers = []
        for (n_in, n_out), layer in zip(zip(sizes[:-1], sizes[1:]), d["layers"]):
            W = np.asarray(layer["weight"], dtype=float).reshape(n_in, n_out)
            layers.append([W, np.asarray(layer["bias"], dtype=float)])
        return cls(embed_pairs=d["embed_pairs"], layers=layers, lam_shift=d["lam_shift"],
                   lam_scale=d["lam_scale"], amplitude=d["amplitude"],
                   step_lambdas=d["step_lambdas"])

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def mlp_epsilon(denoiser, query):
    t = denoiser.step_for_lambda(query.lambda_t) or query.t
    return complex(denoiser.epsilon([query.x_t], t, query.lambda_t)[0])


class LearnedDenoiser:
    name = "learned"

    def __init__(self, model):
        self.model = model

    def predict(self, x_t, step, abar_t, lam_t):
        t = self.model.step_for_lambda(lam_t) or step
        return self.model.predict(x_t, t, lam_t)


# ---------------------------------------------------------------------------
# training data


@dataclass(frozen=True)
class TrainingSample:
    x_t: complex
    t: int
    abar_t: float
    target_eps: complex
    mu: complex
    v: float
    x0: complex


@dataclass(frozen=True, eq=False)
class TrainingSet:
    """Column arrays of training samples."""

    x_t: np.ndarray
    t: np.ndarray
    abar_t: np.ndarray
    target_eps: np.ndarray
    mu: np.ndarray
    v: np.ndarray
    x0: np.ndarray

    def __len__(self):
        return self.x_t.size

    def __getitem__(self, i):
        return TrainingSample(complex(self.x_t[i]), int(self.t[i]), float(self.abar_t[i]),
                              complex(self.target_eps[i]), complex(self.mu[i]), float(self.v[i]),
                              complex(self.x0[i]))

    @property
    def lam(self):
        return np.log(self.abar_t) - np.log1p(-self.abar_t)


def generate_training_set(space, const, count, rng):
    """Draw ``count`` single-symbol samples from partial relay chains.

    Each sample draws a chain from ``space``, a hop index t uniform in
    1..H, and a symbol from the prior; the symbol is propagated through the
    first t hops and mapped onto the VP state of that partial chain.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    cols = {k: np.empty(count, dtype=np.complex128 if k in ("x_t", "target_eps", "mu", "x0") else float)
            for k in ("x_t", "t", "abar_t", "target_eps", "mu", "v", "x0")}
    for i in range(count):
        hops = space.sample(rng)
        t = int(rng.integers(1, len(hops) + 1))
        idx = rng.choice(const.order, p=const.prior)
        x0 = const.points[idx]
        block = SymbolBlock(np.array([x0]), 1, np.array([idx]))
        out, stats, _ = propagate_chain(block, hops[:t], rng)
        snr = stats.snr_eq
        abar = snr / (1.0 + snr)
        noise = out.samples[0] - stats.mu * x0
        eps = math.sqrt(abar) * noise / (stats.mu * math.sqrt(1.0 - abar))
        cols["x_t"][i] = math.sqrt(abar) * x0 + math.sqrt(1.0 - abar) * eps
        cols["t"][i] = t
        cols["abar_t"][i] = abar
        cols["target_eps"][i] = eps
        cols["mu"][i] = stats.mu
        cols["v"][i] = stats.v
        cols["x0"][i] = x0
    cols["t"] = cols["t"].astype(np.int64)
    return TrainingSet(**cols)


# ---------------------------------------------------------------------------
# training


def _step_lambda_table(data):
    steps = np.unique(data.t)
    lam = data.lam
    table = np.full(int(steps.max()), np.nan)
    for s in steps:
        table[s - 1] = lam[data.t == s].mean()
    # unseen indices borrow the neighbour value so the table stays monotone-ish
    good = ~np.isnan(table)
    table[~good] = np.interp(np.flatnonzero(~good), np.flatnonzero(good), table[good])
    return table


def train(model, data, epochs=5, batch=64, lr=1e-3, rng=None, weight_decay=0.01,
          betas=(0.9, 0.999), eps=1e-8):
    """AdamW on the noise-regression loss; updates ``model`` in place and returns it.

    Before the first step the input normalization, output amplitude (largest
    symbol coordinate in ``data``) and the step/log-SNR table are fitted to
    ``data``. Decoupled weight decay applies to every parameter. The per-epoch mean
    training loss is appended to ``model.history``.
    """
    if len(data) == 0:
        raise ValueError("training data is empty")
    rng = np.random.default_rng() if rng is None else rng
    lam = data.lam
    model.lam_shift = float(np.mean(lam))
    model.lam_scale = float(np.std(lam)) or 1.0
    model.step_lambdas = _step_lambda_table(data)
    model.amplitude = float(np.max(np.abs(np.concatenate([data.x0.real, data.x0.imag]))))

    params = model.params()
    m = [np.zeros_like(p) for p in params]
    s = [np.zeros_like(p) for p in params]
    b1, b2 = betas
    step = 0
    n = len(data)
    for epoch in range(epochs):
        order = rng.permutation(n)
        total = 0.0
        for lo in range(0, n, batch):
            sel = order[lo:lo + batch]
            loss, grads = model.loss_and_grads(data.x_t[sel], data.t[sel], lam[sel], data.target_eps[sel])
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, step {step}")
            step += 1
            for p, g, mi, si in zip(params, grads, m, s):
                mi *= b1
                mi += (1 - b1) * g
                si *= b2
                si += (1 - b2) * g * g
                mhat = mi / (1 - b1**step)
                shat = si / (1 - b2**step)
                p -= lr * (mhat / (np.sqrt(shat) + eps) + weight_decay * p)
            total += loss * sel.size
        model.history.append(total / n)
        log.info("epoch %d: loss %.6f", epoch + 1, model.history[-1])
    return model
