"""Target speaker tracking: DAS steered power, particle filter, MAP decoding.

The particle filter propagates azimuth/velocity particles with the
constant-velocity motion model and weights them with a per-frame
pseudo-likelihood built from the delay-and-sum steered power map
(temperature-softmax over the normalized map row). The per-frame posterior
over the DOA grid is a weighted particle histogram with light triangular
smoothing, which also serves as the interchange format for external
trackers.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .acoustics import ArrayGeometry
from .dsp import DoaGrid, Spectrogram, region_centers, region_index
from .motion import MotionParams, Trajectory, wrap_deg

_POSTERIOR_MAGIC = b"MOVAPG1\x00"
_ROW_SUM_WARN = 1e-6
_ROW_SUM_REJECT = 1e-4
_POSTERIOR_FLOOR = 1e-9
_LIKELIHOOD_FLOOR = 1e-6


@dataclass
class SteeredPowerMap:
    values: np.ndarray  # (frames, regions), nonnegative
    grid: DoaGrid

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if not np.all(np.isfinite(self.values)) or np.any(self.values < 0):
            raise ValueError("steered power map must be finite and nonnegative")


@dataclass(frozen=True)
class PfConfig:
    num_particles: int = 500
    seed: int = 0
    beta: float = 8.0  # softmax temperature on the normalized power row
    init_theta_std: float = 2.0  # deg
    init_theta_dot_std: float = 0.0  # deg/s; trajectories start from rest
    resample_threshold: float = 0.5  # resample when ESS < threshold * N
    band_hz: tuple[float, float] = (125.0, 4000.0)
    whiten: bool = True  # magnitude-whiten bins before the likelihood map

    def __post_init__(self):
        if self.num_particles < 1:
            raise ValueError("num_particles must be >= 1")


@dataclass
class PosteriorGrid:
    rows: np.ndarray  # (frames, regions), each row a probability vector
    grid: DoaGrid
    theta0: float | None = None

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.float64)
        sums = self.rows.sum(axis=1)
        if np.any(self.rows < 0) or np.any(np.abs(sums - 1.0) > 1e-6):
            raise ValueError("posterior rows must be probability vectors")


@dataclass
class DoaEstimateTrack:
    thetas: np.ndarray  # per-frame azimuth estimate (deg, wrapped)
    confidence: np.ndarray  # per-frame max posterior (or 1.0 for oracle)

    def __post_init__(self):
        self.thetas = np.asarray(self.thetas, dtype=np.float64)
        self.confidence = np.asarray(self.confidence, dtype=np.float64)
        if np.any(self.thetas < 0) or np.any(self.thetas >= 360):
            raise ValueError("track azimuths must be wrapped to [0, 360)")

    def __len__(self) -> int:
        return len(self.thetas)


def steering_weights(array: ArrayGeometry, grid: DoaGrid, freqs: np.ndarray,
                     speed_of_sound: float = 343.0) -> np.ndarray:
    """Far-field DAS weights, conjugated and 1/M-scaled: (regions, bins, mics).

    Multiplying the observed spectrogram and summing over mics aligns a
    plane wave arriving from the region's azimuth in the array plane.
    """
    centers = np.deg2rad(region_centers(grid))
    u = np.stack([np.cos(centers), np.sin(centers), np.zeros_like(centers)], axis=1)
    rel = array.mic_positions - array.center[None, :]
    # advance (s) of each mic relative to the array center for source azimuth theta
    tau = (u @ rel.T) / speed_of_sound  # (regions, mics)
    phase = -2j * np.pi * freqs[None, :, None] * tau[:, None, :]
    return np.exp(phase) / array.num_mics


def das_power_map(spec: Spectrogram, array: ArrayGeometry, grid: DoaGrid,
                  band: tuple[float, float] = (125.0, 4000.0),
                  speed_of_sound: float = 343.0,
                  whiten: bool = False) -> SteeredPowerMap:
    """Per-frame, per-region output power of a delay-and-sum beamformer.

    With whiten=True each bin is magnitude-normalized first (phase
    transform), so every active time-frequency bin votes with equal weight.
    Without it the map is dominated by the loudest source and a quieter
    speaker barely registers as a local peak.
    """
    if spec.num_channels < 2:
        raise ValueError("DAS power map needs at least two channels")
    freqs = spec.config.bin_freqs
    sel = (freqs >= band[0]) & (freqs <= band[1])
    if not np.any(sel):
        raise ValueError(f"band {band} selects no frequency bins")
    w = steering_weights(array, grid, freqs[sel], speed_of_sound)
    y = spec.data[:, :, sel]  # (mics, frames, bins)
    if whiten:
        y = y / np.maximum(np.abs(y), 1e-12)
    values = np.empty((spec.num_frames, grid.num_regions))
    chunk = max(1, int(2**22 // (grid.num_regions * sel.sum())))
    for lo in range(0, spec.num_frames, chunk):
        hi = min(lo + chunk, spec.num_frames)
        beamformed = np.einsum("ikm,mtk->tik", w, y[:, lo:hi, :], optimize=True)
        values[lo:hi] = np.sum(np.abs(beamformed) ** 2, axis=2)
    return SteeredPowerMap(values=values, grid=grid)


def _circular_mean_deg(thetas: np.ndarray, weights: np.ndarray) -> float:
    rad = np.deg2rad(thetas)
    c = np.sum(weights * np.cos(rad))
    s = np.sum(weights * np.sin(rad))
    return float(wrap_deg(np.rad2deg(np.arctan2(s, c))))


def _systematic_resample(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    n = len(weights)
    positions = (rng.random() + np.arange(n)) / n
    return np.searchsorted(np.cumsum(weights), positions).clip(max=n - 1)


def _posterior_row(thetas: np.ndarray, weights: np.ndarray, grid: DoaGrid) -> np.ndarray:
    idx = region_index(thetas, grid)
    row = np.bincount(idx, weights=weights, minlength=grid.num_regions)
    # circular triangular smoothing over one neighboring cell
    row = 0.5 * row + 0.25 * np.roll(row, 1) + 0.25 * np.roll(row, -1)
    row = row + _POSTERIOR_FLOOR
    return row / row.sum()


@dataclass
class PfDiagnostics:
    resample_frames: list = field(default_factory=list)
    fallback_frames: list = field(default_factory=list)  # prediction-only updates


def pf_track(spec: Spectrogram, theta0: float, motion: MotionParams,
             pf_config: PfConfig, array: ArrayGeometry, grid: DoaGrid,
             power_map: SteeredPowerMap | None = None,
             diagnostics: PfDiagnostics | None = None,
             ) -> tuple[PosteriorGrid, DoaEstimateTrack]:
    """Particle-filter DOA track from the initial direction only.

    A precomputed power_map may be passed in; otherwise it is derived from
    the spectrogram with the config's frequency band.
    """
    if not np.isfinite(theta0):
        raise ValueError("theta0 must be finite")
    if power_map is None:
        power_map = das_power_map(spec, array, grid, band=pf_config.band_hz,
                                  whiten=pf_config.whiten)
    n_frames = power_map.values.shape[0]
    n = pf_config.num_particles
    rng = np.random.default_rng(pf_config.seed)
    dt = motion.delta_t

    # truncate the initial cloud at 2 sigma: with a zero-noise motion model the
    # particles never move, so the tails bound the worst-case static estimate
    init = rng.normal(0.0, pf_config.init_theta_std, size=n)
    init = np.clip(init, -2 * pf_config.init_theta_std, 2 * pf_config.init_theta_std)
    thetas = wrap_deg(theta0 + init)
    theta_dots = rng.normal(0.0, pf_config.init_theta_dot_std, size=n)
    weights = np.full(n, 1.0 / n)

    rows = np.empty((n_frames, grid.num_regions))
    estimates = np.empty(n_frames)
    confidence = np.empty(n_frames)
    for t in range(n_frames):
        if t > 0:
            nu = rng.normal(0.0, motion.sigma, size=n)
            thetas = wrap_deg(thetas + dt * theta_dots + 0.5 * dt * dt * nu)
            theta_dots = theta_dots + dt * nu
        row = power_map.values[t]
        peak = row.max()
        if peak > 0:
            scores = pf_config.beta * row / peak
            like = np.exp(scores - scores.max())
            like = like / like.sum()
            like = np.maximum(like, _LIKELIHOOD_FLOOR)
            weights = weights * like[region_index(thetas, grid)]
            weights = weights / weights.sum()
        elif diagnostics is not None:
            diagnostics.fallback_frames.append(t)
        ess = 1.0 / np.sum(weights**2)
        if ess < pf_config.resample_threshold * n:
            idx = _systematic_resample(weights, rng)
            thetas, theta_dots = thetas[idx], theta_dots[idx]
            weights = np.full(n, 1.0 / n)
            if diagnostics is not None:
                diagnostics.resample_frames.append(t)
        rows[t] = _posterior_row(thetas, weights, grid)
        estimates[t] = _circular_mean_deg(thetas, weights)
        confidence[t] = rows[t].max()
    posterior = PosteriorGrid(rows=rows, grid=grid, theta0=float(wrap_deg(theta0)))
    track = DoaEstimateTrack(thetas=estimates, confidence=confidence)
    return posterior, track


def map_decode(posterior: PosteriorGrid) -> DoaEstimateTrack:
    """Per-frame argmax over the posterior grid, with wrap-aware tie-breaking
    toward the previous frame's estimate (frame 0 breaks toward theta0)."""
    centers = region_centers(posterior.grid)
    thetas = np.empty(posterior.rows.shape[0])
    confidence = posterior.rows.max(axis=1)
    prev = posterior.theta0
    for t, row in enumerate(posterior.rows):
        peak = row.max()
        tied = np.flatnonzero(row == peak)
        if len(tied) == 1 or prev is None:
            best = tied[0]
        else:
            dist = np.abs(centers[tied] - prev) % 360.0
            best = tied[np.argmin(np.minimum(dist, 360.0 - dist))]
        thetas[t] = centers[best]
        prev = thetas[t]
    return DoaEstimateTrack(thetas=thetas, confidence=confidence)


def oracle_track(trajectory: Trajectory, grid: DoaGrid) -> DoaEstimateTrack:
    """Ground-truth azimuths quantized to grid centers (strong guidance)."""
    centers = region_centers(grid)
    idx = region_index(trajectory.thetas, grid)
    return DoaEstimateTrack(thetas=centers[idx], confidence=np.ones(len(idx)))


# --- posterior-grid interchange format ---------------------------------------

def write_posterior_grid(path, posterior: PosteriorGrid) -> None:
    rows = posterior.rows.astype("<f4")
    with open(path, "wb") as f:
        f.write(_POSTERIOR_MAGIC)
        f.write(struct.pack("<II", rows.shape[0], rows.shape[1]))
        f.write(rows.tobytes())


def read_posterior_grid(path, theta0: float | None = None) -> PosteriorGrid:
    with open(path, "rb") as f:
        header = f.read(16)
        if len(header) < 16 or header[:8] != _POSTERIOR_MAGIC:
            raise ValueError(f"{path}: not a posterior-grid file (bad magic)")
        n_frames, n_regions = struct.unpack("<II", header[8:])
        payload = f.read()
    expected = n_frames * n_regions * 4
    if len(payload) != expected:
        raise ValueError(
            f"{path}: frame-count mismatch, expected {expected} payload bytes, "
            f"got {len(payload)}"
        )
    rows = np.frombuffer(payload, dtype="<f4").reshape(n_frames, n_regions)
    rows = rows.astype(np.float64)
    sums = rows.sum(axis=1)
    dev = np.abs(sums - 1.0)
    if np.any(dev > _ROW_SUM_REJECT):
        raise ValueError(f"{path}: posterior rows are not normalized")
    if np.any(dev > _ROW_SUM_WARN):
        import warnings

        warnings.warn(f"{path}: renormalizing posterior rows", stacklevel=2)
    rows = rows / sums[:, None]
    return PosteriorGrid(rows=rows, grid=DoaGrid(num_regions=n_regions), theta0=theta0)


def write_track_csv(path, track: DoaEstimateTrack) -> None:
    with open(path, "w", newline="") as f:
        f.write("frame,theta_deg,confidence\n")
        for i in range(len(track)):
            f.write(f"{i},{track.thetas[i]:.6f},{track.confidence[i]:.6f}\n")


def read_track_csv(path) -> DoaEstimateTrack:
    thetas, conf = [], []
    with open(path) as f:
        header = f.readline().strip()
        if header != "frame,theta_deg,confidence":
            raise ValueError(f"{path}: unexpected track CSV header")
        for line in f:
            _, th, c = line.strip().split(",")
            thetas.append(float(th))
            conf.append(float(c))
    return DoaEstimateTrack(thetas=np.asarray(thetas), confidence=np.asarray(conf))
