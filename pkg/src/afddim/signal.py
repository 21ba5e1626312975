"""Square M-QAM constellations with Gray labels, symbol blocks and error metrics."""

from dataclasses import dataclass, field

import numpy as np

from . import kernels

SUPPORTED_ORDERS = (4, 16, 64, 256)


class ConfigurationError(ValueError):
    """Raised for invalid or unsupported configuration values."""


def _frozen(arr, dtype):
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class Constellation:
    """Finite alphabet with bit labels and a prior.

    ``bit_labels[i]`` is the label of ``points[i]``. Unit average power and
    the square grid are guaranteed by :func:`build_constellation`; hand-built
    alphabets only need consistent lengths and a valid prior.
    """

    order: int
    points: np.ndarray
    bit_labels: tuple
    prior: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "points", _frozen(self.points, np.complex128))
        object.__setattr__(self, "prior", _frozen(self.prior, np.float64))
        object.__setattr__(self, "bit_labels", tuple(self.bit_labels))
        n = self.points.size
        if n != self.order or self.prior.size != n or len(self.bit_labels) != n:
            raise ConfigurationError("points, prior and bit_labels must all have `order` entries")
        if np.any(self.prior < 0) or abs(self.prior.sum() - 1.0) > 1e-12:
            raise ConfigurationError("prior must be non-negative and sum to 1")
        widths = {len(b) for b in self.bit_labels}
        if len(widths) != 1:
            raise ConfigurationError("bit labels must share one width")

    @property
    def bits_per_symbol(self):
        return len(self.bit_labels[0])

    @property
    def label_ints(self):
        return np.array([int(b, 2) for b in self.bit_labels], dtype=np.int64)

    @property
    def log_prior(self):
        with np.errstate(divide="ignore"):
            return np.log(self.prior)

    @property
    def average_power(self):
        return float(self.prior @ np.abs(self.points) ** 2)

    @property
    def mean(self):
        return complex(self.prior @ self.points)

    def decide(self, samples):
        """Nearest-point hard decision; ties go to the lowest symbol index."""
        return kernels.nearest_index(samples, self.points)


def _gray(n):
    return n ^ (n >> 1)


def build_constellation(M, prior=None):
    """Square M-QAM, unit average power under ``prior`` (uniform by default).

    Symbol index ``i`` carries the natural binary label of ``i``: the upper
    half of the bits selects the in-phase level and the lower half the
    quadrature level, each through a reflected binary (Gray) code, so
    grid-adjacent points differ in exactly one bit.
    """
    if M not in SUPPORTED_ORDERS:
        raise ConfigurationError(f"unsupported QAM order {M}; expected one of {SUPPORTED_ORDERS}")
    k = int(np.log2(M))
    half = k // 2
    side = 1 << half
    # level position of each Gray code word along one axis
    position = np.empty(side, dtype=np.int64)
    for pos in range(side):
        position[_gray(pos)] = pos
    idx = np.arange(M)
    i_pos = position[idx >> half]
    q_pos = position[idx & (side - 1)]
    raw = (2 * i_pos - (side - 1)) + 1j * (2 * q_pos - (side - 1))

    prior = np.full(M, 1.0 / M) if prior is None else np.asarray(prior, dtype=np.float64)
    if prior.shape != (M,):
        raise ConfigurationError("prior must have M entries")
    prior = prior / prior.sum()
    power = float(prior @ np.abs(raw) ** 2)
    labels = tuple(format(i, f"0{k}b") for i in range(M))
    return Constellation(order=M, points=raw / np.sqrt(power), bit_labels=labels, prior=prior)


def grid_neighbors(const):
    """Index pairs of horizontally or vertically adjacent points of a square grid."""
    side = int(round(np.sqrt(const.order)))
    pts = const.points
    step = np.min(np.abs(np.diff(np.unique(np.round(pts.real, 12)))))
    pairs = []
    for i in range(const.order):
        for j in range(i + 1, const.order):
            d = pts[j] - pts[i]
            if (abs(abs(d.real) - step) < 1e-9 and abs(d.imag) < 1e-9) or (
                abs(abs(d.imag) - step) < 1e-9 and abs(d.real) < 1e-9
            ):
                pairs.append((i, j))
    assert len(pairs) == 2 * side * (side - 1)
    return pairs


@dataclass(frozen=True, eq=False)
class SymbolBlock:
    """Flat block of ``side**2`` complex samples; the N x N geometry is metadata."""

    samples: np.ndarray
    side: int
    symbol_indices: np.ndarray = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "samples", _frozen(np.reshape(self.samples, -1), np.complex128))
        if self.side < 1 or self.samples.size != self.side * self.side:
            raise ConfigurationError(f"block length {self.samples.size} is not side**2 for side={self.side}")
        if self.symbol_indices is not None:
            idx = _frozen(np.reshape(self.symbol_indices, -1), np.int64)
            if idx.size != self.samples.size:
                raise ConfigurationError("symbol_indices length differs from samples")
            object.__setattr__(self, "symbol_indices", idx)

    def __len__(self):
        return self.samples.size

    def with_samples(self, samples):
        """Same geometry and source indices, new sample values."""
        return SymbolBlock(samples, self.side, self.symbol_indices)


def draw_block(const, N, rng):
    if N < 1:
        raise ConfigurationError("block side N must be >= 1")
    idx = rng.choice(const.order, size=N * N, p=const.prior)
    return SymbolBlock(const.points[idx], N, idx)


@dataclass(frozen=True)
class ErrorReport:
    mse: float
    ser: float
    ber: float
    trials: int = 1
    symbols: int = 0

    def merge(self, other):
        """Symbol-weighted combination of two reports."""
        n = self.symbols + other.symbols
        if n == 0:
            return ErrorReport(0.0, 0.0, 0.0, self.trials + other.trials, 0)
        a, b = self.symbols / n, other.symbols / n
        return ErrorReport(
            mse=a * self.mse + b * other.mse,
            ser=a * self.ser + b * other.ser,
            ber=a * self.ber + b * other.ber,
            trials=self.trials + other.trials,
            symbols=n,
        )


_POPCOUNT = np.array([bin(i).count("1") for i in range(256)], dtype=np.int64)


def bit_errors(sent, decided, const):
    """Number of label bit flips between sent and decided symbol indices."""
    labels = const.label_ints
    diff = labels[np.asarray(sent)] ^ labels[np.asarray(decided)]
    return int(_POPCOUNT[diff].sum())


def compute_errors(truth, estimate, const):
    if truth.symbol_indices is None:
        raise ConfigurationError("truth block must carry symbol_indices")
    if len(truth) != len(estimate):
        raise ConfigurationError(f"length mismatch: {len(truth)} vs {len(estimate)}")
    n = len(truth)
    err = truth.samples - estimate.samples
    mse = float(np.mean(err.real**2 + err.imag**2))
    decided = const.decide(estimate.samples)
    sent = truth.symbol_indices
    ser = float(np.count_nonzero(decided != sent)) / n
    ber = bit_errors(sent, decided, const) / (n * const.bits_per_symbol)
    return ErrorReport(mse=mse, ser=ser, ber=ber, trials=1, symbols=n)
