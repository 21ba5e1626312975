"""Experiment configuration, Monte-Carlo sweeps and result emission.

The SNR axis is the destination SNR ``|mu|^2 / v`` by default
(``snr_axis: end_to_end``), reached by giving every hop the same input SNR;
``snr_axis: per_hop`` fixes the input SNR of each hop instead.

Every trial draws from its own stream ``default_rng([seed, grid_index,
trial])``, and rows are emitted in grid order, so a config and seed determine
the CSV byte for byte. Wall-clock timings go to a separate file for that
reason.
"""

import csv
import itertools
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np
import yaml

from .channel import ChainSpace, StatQuantizer, calibrated_hops, propagate_chain
from .denoise import MlpDenoiser, generate_training_set, train
from .detect import DetectorConfig, ddim_decode, ml_decode
from .signal import ConfigurationError, build_constellation, compute_errors, draw_block

DETECTORS = ("ml", "ddim-bayes", "ddim-learned")

CSV_COLUMNS = (
    "regime", "M", "N", "H", "snr_axis", "snr_db", "detector", "steps",
    "mse", "ser", "ber", "mse_se", "ser_se", "snr_eq_mean", "trials", "status",
)

RICIAN_DEFAULTS = {"k_db": 15.0, "distance_m": [1.0, 2.0], "path_loss_exponent": 2.0, "ref_loss_db": 10.0}


def _fmt(x):
    return format(x, ".9g") if isinstance(x, float) else str(x)


@dataclass
class ExperimentConfig:
    regime: str = "awgn_only"
    M: list = field(default_factory=lambda: [4, 16, 64])
    N: list = field(default_factory=lambda: [64])
    H: list = field(default_factory=lambda: [10])
    snr_db: list = field(default_factory=lambda: [0.0, 5.0, 10.0, 15.0, 20.0])
    snr_axis: str = "end_to_end"
    trials: int = 400
    seed: int = 0
    detectors: list = field(default_factory=lambda: ["ml", "ddim-bayes"])
    steps: int = None
    quantization: dict = None
    rician: dict = field(default_factory=lambda: dict(RICIAN_DEFAULTS))
    power_cap: float = 1.0
    model: str = None
    workers: int = 1
    out: str = "results"

    def __post_init__(self):
        if self.regime not in ("awgn_only", "rician"):
            raise ConfigurationError(f"unknown regime {self.regime!r}")
        if self.snr_axis not in ("end_to_end", "per_hop"):
            raise ConfigurationError(f"unknown snr_axis {self.snr_axis!r}")
        for name in ("M", "N", "H", "snr_db", "detectors"):
            val = getattr(self, name)
            if not isinstance(val, (list, tuple)):
                val = [val]
            if len(val) == 0:
                raise ConfigurationError(f"sweep axis {name!r} is empty")
            setattr(self, name, list(val))
        self.snr_db = [float(s) for s in self.snr_db]
        if self.trials < 1:
            raise ConfigurationError("trials must be >= 1")
        if self.steps is not None and self.steps < 1:
            raise ConfigurationError("steps must be >= 1")
        bad = [d for d in self.detectors if d not in DETECTORS]
        if bad:
            raise ConfigurationError(f"unknown detectors {bad}; expected {DETECTORS}")
        unknown = set(self.rician) - set(RICIAN_DEFAULTS)
        if unknown:
            raise ConfigurationError(f"unknown rician keys {sorted(unknown)}")
        self.rician = {**RICIAN_DEFAULTS, **self.rician}
        if self.quantization is not None:
            self.quantizer()

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_yaml(cls, path):
        with open(path) as fh:
            return cls.from_dict(yaml.safe_load(fh) or {})

    def quantizer(self):
        if self.quantization is None:
            return None
        q = dict(self.quantization)
        for key in ("mu_range", "v_range"):
            if key in q:
                q[key] = tuple(q[key])
        try:
            return StatQuantizer(**q)
        except TypeError as exc:
            raise ConfigurationError(f"bad quantization block: {exc}") from None

    def hops(self, H, snr_db):
        kw = {"axis": self.snr_axis, "power_cap": self.power_cap}
        if self.regime == "rician":
            r = self.rician
            dist = r["distance_m"]
            kw.update(fading="rician", k_db=r["k_db"],
                      distance_m=tuple(dist) if isinstance(dist, (list, tuple)) else dist,
                      path_loss_exponent=r["path_loss_exponent"], ref_loss_db=r["ref_loss_db"])
        return calibrated_hops(H, snr_db, **kw)


@dataclass
class ResultRow:
    regime: str
    M: int
    N: int
    H: int
    snr_axis: str
    snr_db: float
    detector: str
    steps: int
    mse: float
    ser: float
    ber: float
    mse_se: float
    ser_se: float
    snr_eq_mean: float
    trials: int
    status: str = "ok"
    wall_time_ms: float = 0.0

    def csv_fields(self):
        d = asdict(self)
        return [_fmt(d[c]) for c in CSV_COLUMNS]


def _se(values):
    v = np.asarray(values, dtype=float)
    return float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0


def _skipped(config, M, N, H, snr_db, det, steps, reason):
    nan = math.nan
    return ResultRow(config.regime, M, N, H, config.snr_axis, snr_db, det, steps,
                     nan, nan, nan, nan, nan, nan, 0, f"skipped: {reason}")


def _run_point(config, index, M, N, H, snr_db, model):
    steps = config.steps or H
    const = build_constellation(M)
    try:
        hops = config.hops(H, snr_db)
    except ConfigurationError as exc:
        return [_skipped(config, M, N, H, snr_db, d, steps, exc) for d in config.detectors]

    quantizer = config.quantizer()
    decoders = {}
    for det in config.detectors:
        if det == "ml":
            decoders[det] = lambda x, st: ml_decode(x, st, const)
        elif det == "ddim-bayes":
            cfg = DetectorConfig(steps, const, "exact_bayes")
            decoders[det] = lambda x, st, cfg=cfg: ddim_decode(x, st, cfg)
        elif model is not None:
            cfg = DetectorConfig(steps, const, "learned", model)
            decoders[det] = lambda x, st, cfg=cfg: ddim_decode(x, st, cfg)

    per_trial = {d: [] for d in decoders}
    elapsed = {d: 0.0 for d in decoders}
    snrs = []
    for trial in range(config.trials):
        rng = np.random.default_rng([config.seed, index, trial])
        block = draw_block(const, N, rng)
        x_H, stats, _ = propagate_chain(block, hops, rng)
        snrs.append(stats.snr_eq)
        rx_stats = quantizer(stats) if quantizer else stats
        for det, decode in decoders.items():
            t0 = time.perf_counter()
            est = decode(x_H, rx_stats)
            elapsed[det] += time.perf_counter() - t0
            per_trial[det].append(compute_errors(block, est, const))

    rows = []
    for det in config.detectors:
        if det not in decoders:
            rows.append(_skipped(config, M, N, H, snr_db, det, steps, "no trained model"))
            continue
        reps = per_trial[det]
        rows.append(ResultRow(
            config.regime, M, N, H, config.snr_axis, snr_db, det, steps,
            mse=float(np.mean([r.mse for r in reps])),
            ser=float(np.mean([r.ser for r in reps])),
            ber=float(np.mean([r.ber for r in reps])),
            mse_se=_se([r.mse for r in reps]),
            ser_se=_se([r.ser for r in reps]),
            snr_eq_mean=float(np.mean(snrs)),
            trials=config.trials,
            wall_time_ms=1e3 * elapsed[det],
        ))
    return rows


def grid(config):
    return list(itertools.product(config.M, config.N, config.H, config.snr_db))


def run_experiment(config, model=None):
    """Rows for every grid point x detector, in grid order."""
    if model is None and config.model and "ddim-learned" in config.detectors:
        model = MlpDenoiser.load(config.model)
    points = grid(config)
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            futures = [pool.submit(_run_point, config, i, *p, model) for i, p in enumerate(points)]
            chunks = [f.result() for f in futures]
    else:
        chunks = [_run_point(config, i, *p, model) for i, p in enumerate(points)]
    return [row for chunk in chunks for row in chunk]


# ---------------------------------------------------------------------------
# output


def emit_csv(rows, path):
    if not rows:
        raise ValueError("no rows to write")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in rows:
            w.writerow(row.csv_fields())


def emit_timings(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("M", "N", "H", "snr_db", "detector", "wall_time_ms"))
        for r in rows:
            w.writerow((r.M, r.N, r.H, _fmt(r.snr_db), r.detector, _fmt(r.wall_time_ms)))


def read_csv(path):
    """Parse a results CSV back into rows (timings are not stored there)."""
    types = {f.name: f.type for f in fields(ResultRow)}
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != CSV_COLUMNS:
            raise ValueError(f"unexpected header {header}")
        for rec in reader:
            kw = {k: types[k](v) for k, v in zip(header, rec)}
            rows.append(ResultRow(**kw))
    return rows


def emit_plotdata(rows, out_dir):
    """Write one whitespace table per (metric, sweep axis).

    File ``<metric>_vs_snr_by_<axis>.dat`` holds SNR in the first column and
    one column per (axis value, detector); the other sweep axes are held at
    their first value. Returns the written paths.
    """
    if not rows:
        raise ValueError("no rows to write")
    os.makedirs(out_dir, exist_ok=True)
    axes = [a for a in ("M", "N", "H") if len({getattr(r, a) for r in rows}) > 1] or ["M"]
    snrs = sorted({r.snr_db for r in rows})
    paths = []
    for axis in axes:
        others = {a: getattr(rows[0], a) for a in ("M", "N", "H") if a != axis}
        sel = [r for r in rows if all(getattr(r, a) == v for a, v in others.items())]
        series = []
        for r in sel:
            key = (getattr(r, axis), r.detector)
            if key not in series:
                series.append(key)
        table = {(getattr(r, axis), r.detector, r.snr_db): r for r in sel}
        for metric in ("mse", "ser", "ber"):
            path = os.path.join(out_dir, f"{metric}_vs_snr_by_{axis}.dat")
            with open(path, "w") as fh:
                fh.write("# " + " ".join(["snr_db"] + [f"{axis}={v}:{d}" for v, d in series]) + "\n")
                for s in snrs:
                    vals = []
                    for v, d in series:
                        row = table.get((v, d, s))
                        vals.append(_fmt(getattr(row, metric)) if row else "nan")
                    fh.write(" ".join([_fmt(s)] + vals) + "\n")
            paths.append(path)
    return paths


# ---------------------------------------------------------------------------
# signalling overhead


def utilization(N, M, B_csi):
    """Payload fraction N^2 k / (N^2 k + B) of a block, k = log2 M."""
    if N < 1 or M < 2 or B_csi < 0:
        raise ValueError("N >= 1, M >= 2 and B_csi >= 0 required")
    payload = N * N * math.log2(M)
    return payload / (payload + B_csi)


def min_block_side(M, B_csi, target=0.95):
    """Smallest N with utilization >= target."""
    N = 1
    while utilization(N, M, B_csi) < target:
        N += 1
    return N


# overhead claims reproduced by `util`: (M, N) pairs stated to reach 0.95
UTILIZATION_CLAIMS = ((16, 20), (256, 12))


def utilization_table(Ns=(8, 12, 16, 20, 24, 32, 64), Ms=(4, 16, 64, 256), Bs=(80, 96), target=0.95):
    """Rows of (N, M, B, eta) plus claim checks flagged when the formula disagrees."""
    table = [(N, M, B, utilization(N, M, B)) for B in Bs for M in Ms for N in Ns]
    checks = []
    for M, N in UTILIZATION_CLAIMS:
        for B in Bs:
            eta = utilization(N, M, B)
            checks.append({"M": M, "N": N, "B": B, "eta": eta, "holds": eta >= target,
                           "min_N": min_block_side(M, B, target)})
    return table, checks


# ---------------------------------------------------------------------------
# denoiser training pipeline


@dataclass
class TrainConfig:
    M: int = 4
    hops: int = 10
    snr_db_range: list = field(default_factory=lambda: [5.0, 15.0])
    regime: str = "awgn_only"
    rician: dict = field(default_factory=lambda: dict(RICIAN_DEFAULTS))
    count: int = 10000
    validation: int = 400
    epochs: int = 5
    batch: int = 64
    lr: float = 1e-3
    weight_decay: float = 0.01
    hidden: int = 128
    seed: int = 0

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigurationError(f"unknown train config keys {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_yaml(cls, path):
        with open(path) as fh:
            return cls.from_dict(yaml.safe_load(fh) or {})

    def chain_space(self):
        lo, hi = self.snr_db_range
        if self.regime == "awgn_only":
            return ChainSpace(hops=self.hops, snr_db_range=(lo, hi))
        if self.regime != "rician":
            raise ConfigurationError(f"unknown regime {self.regime!r}")
        r = {**RICIAN_DEFAULTS, **self.rician}
        dist = r["distance_m"]
        return ChainSpace(hops=self.hops, snr_db_range=(lo, hi), fading="rician", k_db=r["k_db"],
                          distance_m=tuple(dist) if isinstance(dist, (list, tuple)) else dist,
                          path_loss_exponent=r["path_loss_exponent"], ref_loss_db=r["ref_loss_db"])


def epsilon_mse(model_or_const, data):
    """Mean |eps_hat - target|^2 of a trained model, or of exact Bayes for a constellation."""
    if isinstance(model_or_const, MlpDenoiser):
        eps, _ = model_or_const.predict(data.x_t, data.t, data.lam)
    else:
        from .denoise import bayes_x0_array

        x0 = bayes_x0_array(data.x_t, data.abar_t, model_or_const)
        eps = (data.x_t - np.sqrt(data.abar_t) * x0) / np.sqrt(1.0 - data.abar_t)
    d = eps - data.target_eps
    return float(np.mean(d.real**2 + d.imag**2))


def train_pipeline(cfg):
    """Generate data, train, and validate; returns (model, report dict)."""
    const = build_constellation(cfg.M)
    space = cfg.chain_space()
    seeds = np.random.SeedSequence(cfg.seed).spawn(4)
    data = generate_training_set(space, const, cfg.count, np.random.default_rng(seeds[0]))
    val = generate_training_set(space, const, cfg.validation, np.random.default_rng(seeds[1]))
    model = MlpDenoiser(hidden=cfg.hidden, rng=np.random.default_rng(seeds[2]))
    train(model, data, epochs=cfg.epochs, batch=cfg.batch, lr=cfg.lr,
          rng=np.random.default_rng(seeds[3]), weight_decay=cfg.weight_decay)
    report = {
        "loss_history": list(model.history),
        "val_eps_mse": epsilon_mse(model, val),
        "val_eps_mse_bayes": epsilon_mse(const, val),
    }
    return model, report
