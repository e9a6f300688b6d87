"""Shoe-box image-method room impulse responses and moving-source rendering.

RIRs are synthesized from a separable image lattice with an 81-tap
Hann-windowed-sinc fractional-delay filter bank (8 polyphase branches,
linearly interpolated). The uniform wall reflection coefficient is
calibrated per (room, T60) by bisection so that the Schroeder backward
integration of the generated RIR matches the requested T60; Eyring's
formula only seeds the search. The image method's DC buildup is removed
with a 50 Hz high-pass (skipped for direct-path-only responses).

Moving sources are rendered hop-synchronously: the dry signal is split
into hop-spaced blocks under raised-cosine (squared sqrt-Hann) crossfade
windows that sum to one, each block is convolved with the RIR at that
hop's source position, and the results are overlap-added. A constant
path therefore reproduces the static render exactly up to the high-pass
tail truncation.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.fft import irfft, next_fast_len, rfft
from scipy.signal import butter, sosfreqz

SPEED_OF_SOUND = 343.0

_FILTER_TAPS = 81
_N_SUB = 8
_RIR_T60_COVER = 1.1  # RIR length covers at least this multiple of T60
_HIGHPASS_HZ = 50.0
_MIN_SOURCE_MIC_DIST = 0.01


@dataclass(frozen=True)
class RoomSpec:
    """Shoe-box room: dimensions (m), reverberation time (s)."""

    dims: tuple[float, float, float]
    t60: float
    speed_of_sound: float = SPEED_OF_SOUND

    def __post_init__(self):
        if any(d <= 0 for d in self.dims):
            raise ValueError(f"room dimensions must be positive, got {self.dims}")
        if self.t60 <= 0:
            raise ValueError(f"t60 must be positive, got {self.t60}")

    def contains(self, point, margin: float = 0.0) -> bool:
        p = np.asarray(point, dtype=np.float64)
        return bool(np.all(p >= margin) and np.all(p <= np.asarray(self.dims) - margin))


@dataclass(frozen=True)
class ArrayGeometry:
    """Microphone positions (m, room coordinates) and the reference channel."""

    mic_positions: np.ndarray
    reference_index: int = 0

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.mic_positions, dtype=np.float64))
        object.__setattr__(self, "mic_positions", pos)
        if pos.shape[0] < 1 or pos.shape[1] != 3:
            raise ValueError("mic_positions must be an (M, 3) array with M >= 1")
        if not 0 <= self.reference_index < pos.shape[0]:
            raise ValueError("reference_index out of range")

    @property
    def num_mics(self) -> int:
        return self.mic_positions.shape[0]

    @property
    def center(self) -> np.ndarray:
        return self.mic_positions.mean(axis=0)

    @classmethod
    def circular(cls, center, radius: float = 0.05, num_mics: int = 3,
                 reference_index: int = 0) -> "ArrayGeometry":
        """Uniform circular array in the horizontal plane (default: 3 mics, 10 cm diameter)."""
        center = np.asarray(center, dtype=np.float64)
        angles = 2 * np.pi * np.arange(num_mics) / num_mics
        offsets = radius * np.stack(
            [np.cos(angles), np.sin(angles), np.zeros(num_mics)], axis=1
        )
        return cls(mic_positions=center[None, :] + offsets,
                   reference_index=reference_index)


@dataclass(frozen=True)
class SourcePath:
    """Per-hop 3-D source positions (m)."""

    positions: np.ndarray

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positions, dtype=np.float64))
        object.__setattr__(self, "positions", pos)
        if pos.shape[1] != 3:
            raise ValueError("positions must be (hops, 3)")

    def __len__(self) -> int:
        return self.positions.shape[0]

    def is_static(self) -> bool:
        return bool(np.all(self.positions == self.positions[0]))


def path_from_trajectory(traj_thetas, center, radius: float, height: float) -> SourcePath:
    """Place azimuth samples on a circle of given radius/height around center."""
    th = np.deg2rad(np.asarray(traj_thetas, dtype=np.float64))
    center = np.asarray(center, dtype=np.float64)
    pos = np.stack(
        [center[0] + radius * np.cos(th), center[1] + radius * np.sin(th),
         np.full_like(th, height)], axis=1
    )
    return SourcePath(positions=pos)


@dataclass
class Rir:
    """Per-microphone impulse response, (M, L) samples at fs."""

    taps: np.ndarray
    fs: int

    def __post_init__(self):
        self.taps = np.atleast_2d(np.asarray(self.taps, dtype=np.float64))
        if not np.all(np.isfinite(self.taps)):
            raise ValueError("RIR contains non-finite values")


# --- fractional-delay filter bank -------------------------------------------

def _filter_bank() -> np.ndarray:
    """(n_sub+1, taps) Hann-windowed sinc filters, unit DC gain each."""
    half = _FILTER_TAPS // 2
    frac = np.arange(_N_SUB + 1) / _N_SUB
    t = np.arange(-half, half + 1)
    bank = np.sinc(t[None, :] - frac[:, None]) * np.hanning(_FILTER_TAPS)[None, :]
    bank /= bank.sum(axis=1, keepdims=True)
    return bank


_BANK = _filter_bank()
_BANK_HALF = _FILTER_TAPS // 2


@njit(cache=True)
def _accumulate_images(dx2, dy2, dz2, bx, by, bz, cx, cy, cz, max_count,
                       dmax, samples_per_m, trains):
    """Scatter image contributions into polyphase impulse trains."""
    n_sub = trains.shape[0] - 1
    dmax2 = dmax * dmax
    for i in range(dx2.shape[0]):
        for j in range(dy2.shape[0]):
            bxy = bx[i] * by[j]
            cxy = cx[i] + cy[j]
            dxy2 = dx2[i] + dy2[j]
            for k in range(dz2.shape[0]):
                d2 = dxy2 + dz2[k]
                if d2 < dmax2 and d2 > 1e-8 and cxy + cz[k] <= max_count:
                    d = np.sqrt(d2)
                    amp = bxy * bz[k] / (12.566370614359172 * d)
                    delay = d * samples_per_m
                    ip = int(delay)
                    f = (delay - ip) * n_sub
                    s = int(f)
                    w = f - s
                    trains[s, ip] += amp * (1.0 - w)
                    trains[s + 1, ip] += amp * w


class _ImageModel:
    """Image lattice for one room/reflection-coefficient/order setting."""

    def __init__(self, room: RoomSpec, beta: float, fs: int,
                 max_order: int | None, d_max: float):
        self.room = room
        self.beta = beta
        self.fs = fs
        self.d_max = d_max
        self.max_count = 10**9 if max_order is None else max_order
        self.samples_per_m = fs / room.speed_of_sound
        self.train_len = int(np.ceil(d_max * self.samples_per_m)) + 2
        self._axes = []
        for a in range(3):
            length = self.room.dims[a]
            if max_order is not None:
                n_hi = (max_order + 2) // 2
            else:
                n_hi = int(np.ceil((d_max + length) / (2 * length)))
            n = np.arange(-n_hi, n_hi + 1)
            counts = np.concatenate([2 * np.abs(n), np.abs(n) + np.abs(n - 1)])
            self._axes.append((n, counts, beta ** counts))

    def _axis_coords(self, axis: int, src_coord: float) -> np.ndarray:
        n = self._axes[axis][0]
        length = self.room.dims[axis]
        return np.concatenate([2 * n * length + src_coord, 2 * n * length - src_coord])

    def impulse_trains(self, source, mics) -> np.ndarray:
        """Polyphase impulse trains, (M, n_sub+1, train_len)."""
        mics = np.atleast_2d(mics)
        trains = np.zeros((mics.shape[0], _N_SUB + 1, self.train_len))
        coords = [self._axis_coords(a, source[a]) for a in range(3)]
        for m, mic in enumerate(mics):
            dx2 = (coords[0] - mic[0]) ** 2
            dy2 = (coords[1] - mic[1]) ** 2
            dz2 = (coords[2] - mic[2]) ** 2
            _accumulate_images(
                dx2, dy2, dz2,
                self._axes[0][2], self._axes[1][2], self._axes[2][2],
                self._axes[0][1], self._axes[1][1], self._axes[2][1],
                self.max_count, self.d_max, self.samples_per_m, trains[m],
            )
        return trains


def _highpass_response(nfft: int, fs: int) -> np.ndarray:
    sos = butter(2, _HIGHPASS_HZ, btype="highpass", fs=fs, output="sos")
    _, h = sosfreqz(sos, worN=nfft // 2 + 1, fs=fs)
    return h


def _trains_to_rir(trains: np.ndarray, rir_len: int, fs: int,
                   highpass: bool) -> np.ndarray:
    nfft = next_fast_len(trains.shape[-1] + _FILTER_TAPS)
    bank_spec = rfft(_BANK, nfft, axis=1)
    spec = (rfft(trains, nfft, axis=2) * bank_spec[None, :, :]).sum(axis=1)
    if highpass:
        spec *= _highpass_response(nfft, fs)[None, :]
    rir = irfft(spec, nfft, axis=1)[:, _BANK_HALF:]
    if rir.shape[1] < rir_len:
        rir = np.pad(rir, ((0, 0), (0, rir_len - rir.shape[1])))
    return rir[:, :rir_len]


# --- reflection-coefficient calibration --------------------------------------

def _eyring_beta(room: RoomSpec) -> float:
    lx, ly, lz = room.dims
    volume = lx * ly * lz
    surface = 2 * (lx * ly + lx * lz + ly * lz)
    alpha = 1.0 - np.exp(-0.161 * volume / (surface * room.t60))
    return float(np.sqrt(1.0 - alpha))


class _BetaCache:
    """Per-(room, t60) calibrated reflection coefficients, optionally on disk."""

    def __init__(self):
        self._mem: dict[str, float] = {}
        cache_dir = os.environ.get("MOVA_CACHE")
        self._path = None
        if cache_dir:
            os.makedirs(cache_dir, exist_ok=True)
            self._path = os.path.join(cache_dir, "beta_cache.json")
            if os.path.exists(self._path):
                try:
                    with open(self._path) as f:
                        self._mem.update(json.load(f))
                except (json.JSONDecodeError, OSError):
                    pass

    @staticmethod
    def key(room: RoomSpec, fs: int) -> str:
        d = ",".join(f"{v:.4f}" for v in room.dims)
        return f"{d}|{room.t60:.4f}|{fs}"

    def get(self, room: RoomSpec, fs: int) -> float | None:
        return self._mem.get(self.key(room, fs))

    def put(self, room: RoomSpec, fs: int, beta: float) -> None:
        self._mem[self.key(room, fs)] = beta
        if self._path:
            try:
                with open(self._path, "w") as f:
                    json.dump(self._mem, f, sort_keys=True)
            except OSError:
                pass


_beta_cache = _BetaCache()


def schroeder_t60(rir: np.ndarray, fs: int) -> float:
    """T60 from Schroeder backward integration, fitted on the -5..-25 dB range.

    The direct sound is excluded (fit starts 2.5 ms after the strongest tap).
    """
    rir = np.asarray(rir, dtype=np.float64)
    start = int(np.argmax(np.abs(rir)) + 0.0025 * fs)
    energy = rir[start:] ** 2
    if energy.sum() <= 0:
        raise ValueError("RIR has no energy after the direct sound")
    curve = np.cumsum(energy[::-1])[::-1]
    curve = 10.0 * np.log10(curve / curve[0] + 1e-300)
    i5 = int(np.argmax(curve <= -5.0))
    i25 = int(np.argmax(curve <= -25.0))
    if i25 <= i5:
        raise ValueError("RIR too short for a -5..-25 dB decay fit")
    slope = (curve[i25] - curve[i5]) / ((i25 - i5) / fs)
    return -60.0 / slope


def _calibrated_beta(room: RoomSpec, fs: int) -> float:
    """Bisect the uniform reflection coefficient until the measured T60 matches."""
    cached = _beta_cache.get(room, fs)
    if cached is not None:
        return cached
    dims = np.asarray(room.dims)
    mic = dims / 2.0
    src = np.clip(mic + np.array([0.7, 0.6, 0.1]), 0.05, dims - 0.05)
    d_max = room.speed_of_sound * _RIR_T60_COVER * room.t60 + 1.0
    rir_len = int(np.ceil(_RIR_T60_COVER * room.t60 * fs)) + _FILTER_TAPS
    lo, hi = 0.05, 0.995
    for _ in range(14):
        mid = 0.5 * (lo + hi)
        model = _ImageModel(room, mid, fs, None, d_max)
        rir = _trains_to_rir(model.impulse_trains(src, mic[None, :]), rir_len, fs,
                             highpass=True)[0]
        if schroeder_t60(rir, fs) > room.t60:
            hi = mid
        else:
            lo = mid
    beta = 0.5 * (lo + hi)
    _beta_cache.put(room, fs, beta)
    return beta


# --- public RIR and rendering API --------------------------------------------

def _check_geometry(room: RoomSpec, array: ArrayGeometry, source) -> None:
    source = np.asarray(source, dtype=np.float64)
    if not room.contains(source):
        raise ValueError(f"source {source} outside room {room.dims}")
    for mic in array.mic_positions:
        if not room.contains(mic):
            raise ValueError(f"microphone {mic} outside room {room.dims}")
        if np.linalg.norm(source - mic) < _MIN_SOURCE_MIC_DIST:
            raise ValueError("source coincides with a microphone")


def _model_for(room: RoomSpec, fs: int, max_order) -> tuple[_ImageModel, int]:
    """Image model plus target RIR length for a room/order setting."""
    if max_order == 0:
        diag = float(np.linalg.norm(room.dims))
        d_max = diag + 1.0
        rir_len = int(np.ceil(d_max * fs / room.speed_of_sound)) + _FILTER_TAPS
        return _ImageModel(room, 1.0, fs, 0, d_max), rir_len
    d_max = room.speed_of_sound * _RIR_T60_COVER * room.t60 + 1.0
    rir_len = int(np.ceil(_RIR_T60_COVER * room.t60 * fs)) + _FILTER_TAPS
    beta = _calibrated_beta(room, fs)
    if max_order == "auto":
        return _ImageModel(room, beta, fs, None, d_max), rir_len
    return _ImageModel(room, beta, fs, int(max_order), d_max), rir_len


def simulate_rir(room: RoomSpec, array: ArrayGeometry, source, fs: int,
                 max_order="auto") -> Rir:
    """Image-method RIR from a point source to all array microphones.

    max_order: "auto" (reflections covering >= 1.1 * T60), or an integer
    bound on the total reflection count (0 = direct path only).
    """
    if fs <= 0:
        raise ValueError("fs must be positive")
    _check_geometry(room, array, source)
    model, rir_len = _model_for(room, fs, max_order)
    trains = model.impulse_trains(np.asarray(source, float), array.mic_positions)
    taps = _trains_to_rir(trains, rir_len, fs, highpass=(max_order != 0))
    return Rir(taps=taps, fs=fs)


def render_static(rir: Rir, dry: np.ndarray, fs: int | None = None) -> np.ndarray:
    """Convolve a mono dry signal with a static RIR; output trimmed to len(dry)."""
    if fs is not None and fs != rir.fs:
        raise ValueError(f"sample-rate mismatch: rir {rir.fs}, signal {fs}")
    dry = np.asarray(dry, dtype=np.float64)
    n = len(dry)
    nfft = next_fast_len(n + rir.taps.shape[1] - 1)
    spec = rfft(dry, nfft) * rfft(rir.taps, nfft, axis=1)
    return irfft(spec, nfft, axis=1)[:, :n]


def _crossfade_windows(num_samples: int, hop: int,
                       num_hops: int) -> tuple[np.ndarray, np.ndarray]:
    """(num_hops, 2*hop) raised-cosine windows with exact sum-to-one coverage."""
    n = np.arange(2 * hop)
    win = np.sin(np.pi * (n + 0.5) / (2 * hop)) ** 2
    starts = np.arange(num_hops) * hop - hop // 2
    coverage = np.zeros(num_samples)
    for h, s in enumerate(starts):
        lo, hi = max(s, 0), min(s + 2 * hop, num_samples)
        coverage[lo:hi] += win[lo - s : hi - s]
    windows = np.tile(win, (num_hops, 1))
    for h, s in enumerate(starts):
        lo, hi = max(s, 0), min(s + 2 * hop, num_samples)
        windows[h, lo - s : hi - s] /= coverage[lo:hi]
        windows[h, : lo - s] = 0.0
        windows[h, hi - s :] = 0.0
    return windows, starts


def _render_path(room: RoomSpec, array: ArrayGeometry, path: SourcePath,
                 dry: np.ndarray, fs: int, hop: int, max_order) -> np.ndarray:
    dry = np.asarray(dry, dtype=np.float64)
    n = len(dry)
    expected = int(np.ceil(n / hop))
    if len(path) != expected:
        raise ValueError(
            f"path length {len(path)} does not match ceil(len(dry)/hop) = {expected}"
        )
    for p in path.positions:
        _check_geometry(room, array, p)

    model, rir_len = _model_for(room, fs, max_order)
    nfft = next_fast_len(2 * hop + rir_len - 1)

    windows, starts = _crossfade_windows(n, hop, len(path))
    out = np.zeros((array.num_mics, n))

    spec_cache: dict[bytes, np.ndarray] = {}
    for h in range(len(path)):
        key = path.positions[h].tobytes()
        rir_spec = spec_cache.get(key)
        if rir_spec is None:
            trains = model.impulse_trains(path.positions[h], array.mic_positions)
            rir = _trains_to_rir(trains, rir_len, fs, highpass=(max_order != 0))
            rir_spec = rfft(rir, nfft, axis=1)
            spec_cache[key] = rir_spec
        s = starts[h]
        lo, hi = max(s, 0), min(s + 2 * hop, n)
        block = dry[lo:hi] * windows[h, lo - s : hi - s]
        seg = irfft(rfft(block, nfft)[None, :] * rir_spec, nfft, axis=1)
        write_hi = min(lo + seg.shape[1], n)
        out[:, lo:write_hi] += seg[:, : write_hi - lo]
    return out


def render_moving(room: RoomSpec, array: ArrayGeometry, path: SourcePath,
                  dry: np.ndarray, fs: int, hop: int,
                  max_order="auto") -> np.ndarray:
    """Render a moving source, updating the RIR once per hop."""
    return _render_path(room, array, path, dry, fs, hop, max_order)


def render_direct_path(room: RoomSpec, array: ArrayGeometry, path: SourcePath,
                       dry: np.ndarray, fs: int, hop: int) -> np.ndarray:
    """Direct-path-only render at the reference microphone (the dry target)."""
    ref = ArrayGeometry(
        mic_positions=array.mic_positions[array.reference_index][None, :],
        reference_index=0,
    )
    return _render_path(room, ref, path, dry, fs, hop, max_order=0)[0]
