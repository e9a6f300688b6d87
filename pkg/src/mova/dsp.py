"""STFT analysis/synthesis (sqrt-Hann, 50% overlap) and the DOA grid encoding."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .motion import wrap_deg


@dataclass(frozen=True)
class StftConfig:
    window_len: int = 512
    hop: int = 256
    fs: int = 16000

    def __post_init__(self):
        if self.hop * 2 != self.window_len:
            raise ValueError("hop must equal window_len / 2")

    @property
    def num_bins(self) -> int:
        return self.window_len // 2 + 1

    @property
    def bin_freqs(self) -> np.ndarray:
        return np.fft.rfftfreq(self.window_len, d=1.0 / self.fs)

    def num_frames(self, num_samples: int) -> int:
        return int(np.ceil(num_samples / self.hop))

    def window(self) -> np.ndarray:
        # periodic sqrt-Hann; squared copies at 50% overlap sum to exactly 1
        n = np.arange(self.window_len)
        return np.sin(np.pi * n / self.window_len)


@dataclass
class Spectrogram:
    """Complex STFT tensor, channels x frames x bins."""

    data: np.ndarray
    config: StftConfig

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 3:
            raise ValueError("spectrogram data must be channels x frames x bins")
        if self.data.shape[2] != self.config.num_bins:
            raise ValueError(
                f"expected {self.config.num_bins} bins, got {self.data.shape[2]}"
            )

    @property
    def num_channels(self) -> int:
        return self.data.shape[0]

    @property
    def num_frames(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class DoaGrid:
    """Equidistant angular regions covering the full circle."""

    num_regions: int = 180

    @property
    def resolution(self) -> float:
        return 360.0 / self.num_regions


@dataclass(frozen=True)
class OneHotDoa:
    vector: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vector, dtype=np.float64)
        object.__setattr__(self, "vector", v)
        hot = np.flatnonzero(v)
        if len(hot) != 1 or v[hot[0]] != 1.0:
            raise ValueError("one-hot vector must have exactly one entry equal to 1")

    @property
    def index(self) -> int:
        return int(np.argmax(self.vector))


def stft(signal: np.ndarray, config: StftConfig) -> Spectrogram:
    """Multichannel STFT. Frame t covers samples [t*hop, t*hop + window_len).

    The tail is zero-padded to complete the last frame.
    """
    x = np.atleast_2d(np.asarray(signal, dtype=np.float64))
    if x.shape[1] == 0:
        raise ValueError("empty signal")
    if x.shape[1] < config.window_len:
        raise ValueError("signal shorter than one analysis window")
    n_frames = config.num_frames(x.shape[1])
    pad = (n_frames - 1) * config.hop + config.window_len - x.shape[1]
    x = np.pad(x, ((0, 0), (0, pad)))
    idx = np.arange(config.window_len)[None, :] + config.hop * np.arange(n_frames)[:, None]
    frames = x[:, idx] * config.window()[None, None, :]
    return Spectrogram(data=np.fft.rfft(frames, axis=2), config=config)


def istft(spec: Spectrogram, config: StftConfig, num_samples: int | None = None) -> np.ndarray:
    """Inverse STFT via windowed overlap-add; perfect reconstruction interior."""
    if spec.config != config:
        raise ValueError("spectrogram was produced with a different STFT config")
    win = config.window()
    frames = np.fft.irfft(spec.data, n=config.window_len, axis=2) * win[None, None, :]
    n_ch, n_frames, _ = frames.shape
    total = (n_frames - 1) * config.hop + config.window_len
    out = np.zeros((n_ch, total))
    norm = np.zeros(total)
    for t in range(n_frames):
        start = t * config.hop
        out[:, start : start + config.window_len] += frames[:, t]
        norm[start : start + config.window_len] += win**2
    out /= np.maximum(norm, 1e-12)[None, :]
    if num_samples is not None:
        out = out[:, :num_samples]
    if out.shape[0] == 1:
        return out[0]
    return out


def encode_doa(theta: float, grid: DoaGrid) -> OneHotDoa:
    """One-hot encode an azimuth into its grid region."""
    index = int(np.floor(wrap_deg(theta) / grid.resolution)) % grid.num_regions
    v = np.zeros(grid.num_regions)
    v[index] = 1.0
    return OneHotDoa(vector=v)


def decode_doa(index: int, grid: DoaGrid) -> float:
    """Region center (deg) of a grid index."""
    if not 0 <= index < grid.num_regions:
        raise ValueError(f"region index {index} out of range [0, {grid.num_regions})")
    return index * grid.resolution + grid.resolution / 2.0


def region_index(theta, grid: DoaGrid) -> np.ndarray:
    """Vectorized grid index of azimuth(s)."""
    return (np.floor(wrap_deg(theta) / grid.resolution)).astype(np.int64) % grid.num_regions


def region_centers(grid: DoaGrid) -> np.ndarray:
    return np.arange(grid.num_regions) * grid.resolution + grid.resolution / 2.0
