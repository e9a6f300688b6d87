"""Mask-based target extraction on the reference channel.

The neural spatially-selective filter is out of scope; extraction is closed
with a complex oracle mask (dry target over mixture reference, magnitude
clipped), optionally gated by a DOA cue so that tracking errors propagate
into extraction quality.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .dsp import Spectrogram, StftConfig, istft, stft
from .metrics import angular_error
from .motion import Trajectory
from .scene import SceneAudio
from .tracking import DoaEstimateTrack

_MASK_MAGIC = b"MOVAMK1\x00"
MASK_MAX = 2.0
_EPS_SCALE = 1e-8


@dataclass
class Mask:
    """Complex time-frequency mask, (frames, bins), |M| <= mask_max."""

    values: np.ndarray
    mask_max: float = MASK_MAX

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.complex128)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("mask contains non-finite values")
        if np.any(np.abs(self.values) > self.mask_max * (1 + 1e-9)):
            raise ValueError(f"mask magnitude exceeds {self.mask_max}")


@dataclass
class ExtractionResult:
    estimate: np.ndarray  # mono samples
    mask: Mask
    scene_id: str = ""
    cue_source: str = ""


def apply_mask(spec_ref: np.ndarray, mask: Mask, config: StftConfig,
               num_samples: int | None = None) -> np.ndarray:
    """Estimate = iSTFT(mask * reference-channel spectrogram)."""
    spec_ref = np.asarray(spec_ref)
    if spec_ref.shape != mask.values.shape:
        raise ValueError(
            f"mask shape {mask.values.shape} != spectrogram shape {spec_ref.shape}"
        )
    masked = Spectrogram(data=(mask.values * spec_ref)[None, :, :], config=config)
    return istft(masked, config, num_samples=num_samples)


def clip_mask(values: np.ndarray, mask_max: float = MASK_MAX) -> np.ndarray:
    mag = np.abs(values)
    over = mag > mask_max
    values = values.copy()
    values[over] *= mask_max / mag[over]
    return values


def oracle_complex_mask(scene: SceneAudio, config: StftConfig,
                        mask_max: float = MASK_MAX) -> Mask:
    """Ratio mask dry-target / mixture-reference, clipped; zero on dead bins."""
    ref_idx = 0  # SceneAudio stores the reference channel first by convention
    y_ref = stft(scene.mixture, config).data[ref_idx]
    s = stft(scene.dry_target, config).data[0]
    eps = _EPS_SCALE * np.max(np.abs(y_ref))
    dead = np.abs(y_ref) < eps
    with np.errstate(divide="ignore", invalid="ignore"):
        values = np.where(dead, 0.0, s / np.where(dead, 1.0, y_ref))
    return Mask(values=clip_mask(values, mask_max), mask_max=mask_max)


def cue_gate(cue_track: DoaEstimateTrack, truth: Trajectory,
             gate_threshold_deg: float = 20.0) -> np.ndarray:
    """Per-frame boolean gate: True where the cue is within threshold of truth."""
    if len(cue_track) != len(truth.thetas):
        raise ValueError(
            f"cue track has {len(cue_track)} frames, trajectory has {len(truth.thetas)}"
        )
    errors = angular_error(cue_track.thetas, truth.thetas)
    return errors <= gate_threshold_deg


def cue_conditioned_extract(scene: SceneAudio, config: StftConfig,
                            cue_track: DoaEstimateTrack, truth: Trajectory,
                            external_mask: Mask | None = None,
                            gate_threshold_deg: float = 20.0,
                            scene_id: str = "",
                            cue_source: str = "") -> ExtractionResult:
    """Extract with an external mask, or with the oracle mask gated by cue validity.

    Frames where the cue deviates from the ground truth by more than the gate
    threshold receive a zero mask, so tracking errors degrade the extraction.
    """
    y_ref = stft(scene.mixture, config).data[0]
    n_frames = y_ref.shape[0]
    if len(cue_track) != n_frames:
        raise ValueError(
            f"cue track has {len(cue_track)} frames, spectrogram has {n_frames}"
        )
    if external_mask is not None:
        mask = external_mask
    else:
        mask = oracle_complex_mask(scene, config)
        gate = cue_gate(cue_track, truth, gate_threshold_deg)
        values = mask.values * gate[:, None]
        mask = Mask(values=values, mask_max=mask.mask_max)
    estimate = apply_mask(y_ref, mask, config, num_samples=scene.mixture.shape[1])
    return ExtractionResult(estimate=estimate, mask=mask,
                            scene_id=scene_id, cue_source=cue_source)


# --- mask interchange format --------------------------------------------------

def write_mask(path, mask: Mask) -> None:
    values = mask.values.astype("<c8")
    with open(path, "wb") as f:
        f.write(_MASK_MAGIC)
        f.write(struct.pack("<II", values.shape[0], values.shape[1]))
        f.write(values.tobytes())


def read_mask(path) -> Mask:
    with open(path, "rb") as f:
        header = f.read(16)
        if len(header) < 16 or header[:8] != _MASK_MAGIC:
            raise ValueError(f"{path}: not a mask file (bad magic)")
        n_frames, n_bins = struct.unpack("<II", header[8:])
        payload = f.read()
    expected = n_frames * n_bins * 8
    if len(payload) != expected:
        raise ValueError(f"{path}: truncated mask file")
    values = np.frombuffer(payload, dtype="<c8").reshape(n_frames, n_bins)
    # float32 storage may round a magnitude-2 entry a hair above the bound
    return Mask(values=clip_mask(values.astype(np.complex128)))
