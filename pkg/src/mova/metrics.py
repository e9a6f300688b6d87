"""Evaluation metrics: SI-SDR for extraction, wrap-aware angular error and
margin accuracy for tracking, plus per-condition aggregation."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, asdict, fields

import numpy as np

SI_SDR_CAP_DB = 60.0


def si_sdr(estimate: np.ndarray, reference: np.ndarray) -> float:
    """Scale-invariant signal-to-distortion ratio in dB, capped at +/-60 dB."""
    est = np.asarray(estimate, dtype=np.float64)
    ref = np.asarray(reference, dtype=np.float64)
    if est.shape != ref.shape:
        raise ValueError(f"length mismatch: {est.shape} vs {ref.shape}")
    ref_energy = np.dot(ref, ref)
    if ref_energy <= 0:
        raise ValueError("reference signal is silent")
    if np.dot(est, est) == 0:
        return -SI_SDR_CAP_DB
    alpha = np.dot(est, ref) / ref_energy
    target = alpha * ref
    noise = est - target
    noise_energy = np.dot(noise, noise)
    target_energy = np.dot(target, target)
    if noise_energy <= 0 or target_energy / noise_energy > 10 ** (SI_SDR_CAP_DB / 10):
        return SI_SDR_CAP_DB
    value = 10.0 * np.log10(target_energy / noise_energy)
    return float(np.clip(value, -SI_SDR_CAP_DB, SI_SDR_CAP_DB))


def angular_error(est, truth) -> np.ndarray | float:
    """Wrap-aware absolute angular difference in [0, 180] degrees."""
    d = np.abs(np.asarray(est, dtype=np.float64) - np.asarray(truth, dtype=np.float64))
    d = d % 360.0
    out = np.minimum(d, 360.0 - d)
    return float(out) if out.ndim == 0 else out


def frame_accuracy(track_thetas, truth_thetas, margin: float = 5.0) -> float:
    """Fraction of frames with angular error <= margin (inclusive)."""
    track_thetas = np.asarray(track_thetas, dtype=np.float64)
    truth_thetas = np.asarray(truth_thetas, dtype=np.float64)
    if track_thetas.shape != truth_thetas.shape:
        raise ValueError(
            f"frame count mismatch: {track_thetas.shape} vs {truth_thetas.shape}"
        )
    return float(np.mean(angular_error(track_thetas, truth_thetas) <= margin))


@dataclass
class TrackingReport:
    scene_id: str
    condition: float
    accuracy: float
    median_ae: float
    ae_q25: float
    ae_q75: float

    @classmethod
    def from_track(cls, scene_id: str, condition: float, track_thetas,
                   truth_thetas, margin: float = 5.0) -> "TrackingReport":
        ae = angular_error(track_thetas, truth_thetas)
        return cls(
            scene_id=scene_id,
            condition=condition,
            accuracy=frame_accuracy(track_thetas, truth_thetas, margin),
            median_ae=float(np.median(ae)),
            ae_q25=float(np.quantile(ae, 0.25)),
            ae_q75=float(np.quantile(ae, 0.75)),
        )


@dataclass
class ExtractionReport:
    scene_id: str
    condition: float
    si_sdr_db: float
    si_sdr_mixture_db: float

    @property
    def si_sdr_improvement_db(self) -> float:
        return self.si_sdr_db - self.si_sdr_mixture_db


@dataclass
class ConditionSummary:
    condition: float
    num_scenes: int
    accuracy: float | None = None
    median_ae: float | None = None
    ae_q25: float | None = None
    ae_q75: float | None = None
    mean_si_sdr_db: float | None = None
    mean_si_sdr_mixture_db: float | None = None
    mean_si_sdr_improvement_db: float | None = None


def aggregate(tracking_reports=None, extraction_reports=None) -> list[ConditionSummary]:
    """Per-condition summary: mean SI-SDR, median/quartile AE, mean accuracy."""
    tracking_reports = list(tracking_reports or [])
    extraction_reports = list(extraction_reports or [])
    conditions = sorted(
        {r.condition for r in tracking_reports} | {r.condition for r in extraction_reports}
    )
    if not conditions:
        raise ValueError("no reports to aggregate")
    summaries = []
    for cond in conditions:
        trk = [r for r in tracking_reports if r.condition == cond]
        ext = [r for r in extraction_reports if r.condition == cond]
        summary = ConditionSummary(condition=cond, num_scenes=max(len(trk), len(ext)))
        if trk:
            summary.accuracy = float(np.mean([r.accuracy for r in trk]))
            summary.median_ae = float(np.median([r.median_ae for r in trk]))
            summary.ae_q25 = float(np.median([r.ae_q25 for r in trk]))
            summary.ae_q75 = float(np.median([r.ae_q75 for r in trk]))
        if ext:
            summary.mean_si_sdr_db = float(np.mean([r.si_sdr_db for r in ext]))
            summary.mean_si_sdr_mixture_db = float(
                np.mean([r.si_sdr_mixture_db for r in ext])
            )
            summary.mean_si_sdr_improvement_db = float(
                np.mean([r.si_sdr_improvement_db for r in ext])
            )
        summaries.append(summary)
    return summaries


def write_summary_json(path, summaries: list[ConditionSummary]) -> None:
    with open(path, "w") as f:
        json.dump([asdict(s) for s in summaries], f, indent=2, sort_keys=True)


def write_summary_csv(path, summaries: list[ConditionSummary]) -> None:
    names = [f.name for f in fields(ConditionSummary)]
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=names)
        writer.writeheader()
        for s in summaries:
            writer.writerow(asdict(s))
