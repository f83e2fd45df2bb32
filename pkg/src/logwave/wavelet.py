"""Row-wise multilevel DWT and subband stacking.

Each modulated row is split recursively into a coarse approximation and
per-level detail coefficients, every subband is interpolated back to the
window length, and the results are stacked into a (J+1) x H x W tensor
whose channel 0 is the deepest approximation followed by details from
coarsest to finest.

Conventions are pinned so coefficients are bit-reproducible:

* Orthonormal filters. The Haar step is a_k = (x[2k] + x[2k+1]) / sqrt(2),
  d_k = (x[2k] - x[2k+1]) / sqrt(2); Daubechies-4 uses the periodized
  orthogonal filter bank (analysis a_k = sum_m h[m] x[(2k+m) mod N]).
* Odd-length inputs at any level are padded by repeating the final sample
  before the paired filter step; original lengths are recorded so the
  inverse transform is exact.
* Upsampling maps coefficient index k affinely onto [0, W-1] and
  interpolates linearly; a single coefficient broadcasts as a constant.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import IO, Sequence

import numpy as np

from .errors import ConfigError, DataError

SQRT2 = np.sqrt(2.0)

# Normalized db4 decomposition low-pass filter (sums to sqrt(2), unit energy).
_DB4_LOW = np.array([
    0.48296291314469025,
    0.8365163037378079,
    0.22414386804185735,
    -0.12940952255092145,
])

_FAMILIES = ("haar", "db4")
_UPSAMPLING_METHODS = ("linear",)
_BOUNDARY_MODES = ("periodic",)


def _filters(family: str) -> tuple[np.ndarray, np.ndarray]:
    if family == "haar":
        low = np.array([1.0, 1.0]) / SQRT2
    elif family == "db4":
        low = _DB4_LOW
    else:
        raise ConfigError(f"unknown wavelet family {family!r} (choose from {_FAMILIES})")
    # Quadrature mirror: g[m] = (-1)^m h[L-1-m]
    high = low[::-1].copy()
    high[1::2] *= -1.0
    return low, high


@dataclass
class WaveletConfig:
    family: str = "haar"
    levels: int = 2
    boundary: str = "periodic"
    upsampling: str = "linear"

    def __post_init__(self):
        if self.levels < 1:
            raise ConfigError(f"levels must be >= 1, got {self.levels}")
        if self.family not in _FAMILIES:
            raise ConfigError(f"unknown wavelet family {self.family!r}")
        if self.boundary not in _BOUNDARY_MODES:
            raise ConfigError(f"unknown boundary mode {self.boundary!r}")
        if self.upsampling not in _UPSAMPLING_METHODS:
            raise ConfigError(f"unknown upsampling method {self.upsampling!r}")


def default_levels(width: int) -> int:
    """Decomposition depth used when none is configured: 2 for short daily
    windows, 3 once the window is long enough to support it."""
    levels = 3 if width >= 72 else 2
    if 2 ** levels > width:
        raise ConfigError(f"window of {width} bins is too short for a {levels}-level DWT")
    return levels


@dataclass
class WaveletPyramid:
    """Multilevel coefficients: approx is A_J, details[j-1] is D_j (finest first).

    `level_lengths[j-1]` records the signal length fed to level j so the
    inverse transform can drop padding exactly.
    """

    approx: np.ndarray
    details: list[np.ndarray]
    level_lengths: list[int]

    @property
    def levels(self) -> int:
        return len(self.details)

    def energy(self) -> float:
        return float(np.sum(self.approx ** 2) + sum(np.sum(d ** 2) for d in self.details))


def _analysis_step(x: np.ndarray, low: np.ndarray, high: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if x.size % 2 == 1:
        x = np.concatenate([x, x[-1:]])
    n = x.size
    if low.size == 2:
        a = (x[0::2] + x[1::2]) / SQRT2
        d = (x[0::2] - x[1::2]) / SQRT2
        return a, d
    half = n // 2
    a = np.zeros(half)
    d = np.zeros(half)
    for m in range(low.size):
        rolled = x[(2 * np.arange(half) + m) % n]
        a += low[m] * rolled
        d += high[m] * rolled
    return a, d


def _synthesis_step(a: np.ndarray, d: np.ndarray, low: np.ndarray, high: np.ndarray,
                    original_length: int) -> np.ndarray:
    if a.size != d.size:
        raise DataError(f"approx length {a.size} != detail length {d.size}")
    n = 2 * a.size
    if low.size == 2:
        x = np.empty(n)
        x[0::2] = (a + d) / SQRT2
        x[1::2] = (a - d) / SQRT2
    else:
        x = np.zeros(n)
        for m in range(low.size):
            idx = (2 * np.arange(a.size) + m) % n
            np.add.at(x, idx, low[m] * a + high[m] * d)
    if original_length > n:
        raise DataError(f"cannot reconstruct length {original_length} from {n} samples")
    return x[:original_length]


def dwt_multilevel(signal: Sequence[float], config: WaveletConfig) -> WaveletPyramid:
    """J-level decomposition of one row.

    The approximation is re-filtered at each level; detail vectors come out
    finest-scale first (details[0] spans pairs of original samples).
    """
    x = np.asarray(signal, dtype=float)
    if x.ndim != 1:
        raise DataError(f"expected a 1-D signal, got shape {x.shape}")
    if 2 ** config.levels > x.size:
        raise ConfigError(
            f"{config.levels}-level DWT needs at least {2 ** config.levels} samples, got {x.size}"
        )
    low, high = _filters(config.family)
    details: list[np.ndarray] = []
    lengths: list[int] = []
    approx = x
    for _ in range(config.levels):
        lengths.append(approx.size)
        approx, d = _analysis_step(approx, low, high)
        details.append(d)
    return WaveletPyramid(approx=approx, details=details, level_lengths=lengths)


def idwt_multilevel(pyramid: WaveletPyramid, config: WaveletConfig) -> np.ndarray:
    """Exact inverse of `dwt_multilevel` for a pyramid built with `config`."""
    if pyramid.levels != config.levels:
        raise DataError(f"pyramid has {pyramid.levels} levels, config expects {config.levels}")
    low, high = _filters(config.family)
    x = pyramid.approx
    for d, length in zip(reversed(pyramid.details), reversed(pyramid.level_lengths)):
        x = _synthesis_step(x, d, low, high, length)
    return x


def upsample_to_length(coeffs: Sequence[float], width: int, method: str = "linear") -> np.ndarray:
    """Stretch a coefficient vector onto `width` samples.

    Coefficient positions map affinely onto [0, width - 1]; values between
    them are linearly interpolated. Length equal to `width` is the
    identity, a single coefficient broadcasts as a constant.
    """
    if method not in _UPSAMPLING_METHODS:
        raise ConfigError(f"unknown upsampling method {method!r}")
    c = np.asarray(coeffs, dtype=float)
    if c.size == 0:
        raise DataError("cannot upsample an empty coefficient vector")
    if c.size > width:
        raise DataError(f"coefficient vector of {c.size} longer than target {width}")
    if c.size == width:
        return c.copy()
    if c.size == 1:
        return np.full(width, c[0])
    return np.interp(np.linspace(0.0, c.size - 1, num=width), np.arange(c.size), c)


@dataclass
class MultiResTensor:
    """(J+1) x H x W stack of upsampled subbands.

    Channel 0 holds the deepest approximation; channels 1..J hold the
    details ordered coarse to fine (channel 1 = D_J, channel J = D_1).
    """

    values: np.ndarray  # (C, H, W)
    levels: int

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def num_categories(self) -> int:
        return self.values.shape[1]

    @property
    def num_bins(self) -> int:
        return self.values.shape[2]

    def write_debug_csv(self, fh: IO[str]) -> None:
        """Header (C, H, W, levels), then channel-major rows."""
        writer = csv.writer(fh, lineterminator="\n")
        c, h, w = self.values.shape
        writer.writerow([c, h, w, self.levels])
        for channel in self.values:
            for row in channel:
                writer.writerow([repr(float(v)) for v in row])

    @classmethod
    def read_debug_csv(cls, fh: IO[str]) -> "MultiResTensor":
        reader = csv.reader(fh)
        c, h, w, levels = (int(v) for v in next(reader))
        flat = np.array([[float(v) for v in next(reader)] for _ in range(c * h)])
        return cls(values=flat.reshape(c, h, w), levels=levels)


def decompose_matrix(xhat: np.ndarray, config: WaveletConfig) -> MultiResTensor:
    """Row-wise multilevel DWT of a modulated matrix, stacked at full width."""
    xhat = np.asarray(xhat, dtype=float)
    if xhat.ndim != 2:
        raise DataError(f"expected an H x W matrix, got shape {xhat.shape}")
    h, w = xhat.shape
    channels = np.zeros((config.levels + 1, h, w))
    for row in range(h):
        pyramid = dwt_multilevel(xhat[row], config)
        channels[0, row] = upsample_to_length(pyramid.approx, w, config.upsampling)
        # details[-1] is the coarsest; it goes right after the approximation
        for j, detail in enumerate(reversed(pyramid.details)):
            channels[1 + j, row] = upsample_to_length(detail, w, config.upsampling)
    return MultiResTensor(values=channels, levels=config.levels)
