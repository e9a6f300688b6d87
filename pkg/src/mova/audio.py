"""WAV I/O helpers (32-bit float PCM throughout)."""

from __future__ import annotations

import numpy as np
from scipy.io import wavfile


def write_wav(path, signal: np.ndarray, fs: int) -> None:
    """Write a mono (1-D) or multichannel (channels x samples) float32 WAV."""
    data = np.asarray(signal, dtype=np.float32)
    if data.ndim == 2:
        data = data.T  # scipy expects samples x channels
    wavfile.write(str(path), fs, data)


def read_wav(path) -> tuple[np.ndarray, int]:
    """Read a WAV file as float32, returned as (channels x samples) or 1-D mono."""
    fs, data = wavfile.read(str(path))
    if data.dtype == np.int16:
        data = data.astype(np.float32) / 32768.0
    elif data.dtype == np.int32:
        data = data.astype(np.float32) / 2147483648.0
    else:
        data = data.astype(np.float32)
    if data.ndim == 2:
        data = data.T
    return data, int(fs)
