"""Randomized two-speaker scene generation, rendering and dataset assembly.

A scene draws a shoe-box room, a circular 3-mic array, and two moving
speakers (target + interferer) on constant-radius, constant-height circular
arcs around the array, with azimuths following the constant-velocity motion
model. Signals decompose as mixture = direct-path target (all channels) +
everything else, so the additive signal model holds sample-exactly and the
"noise" term carries the target's reflections plus the reverberant
interferer.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field, asdict

import numpy as np

from . import motion as mo
from .acoustics import ArrayGeometry, RoomSpec, path_from_trajectory, render_moving
from .audio import write_wav
from .corpus import Corpus

_ACTIVE_FRAME_S = 0.05
_ACTIVE_THRESHOLD_DB = -40.0
_MAX_SAMPLE_RETRIES = 1000


@dataclass(frozen=True)
class SceneConstraints:
    """Geometric and level constraints for scene sampling."""

    min_separation_deg: float = 10.0
    radius_range: tuple[float, float] = (0.8, 1.2)
    height_range: tuple[float, float] = (1.4, 1.9)
    snr_range_db: tuple[float, float] = (-5.0, 5.0)
    room_l_range: tuple[float, float] = (5.0, 8.0)
    room_w_range: tuple[float, float] = (4.0, 7.0)
    room_h_range: tuple[float, float] = (2.5, 3.5)
    t60_range: tuple[float, float] = (0.2, 0.5)
    array_jitter_m: float = 0.5
    array_height_m: float = 1.5
    array_radius_m: float = 0.05
    num_mics: int = 3


@dataclass(frozen=True)
class SpeakerSpec:
    speaker: str
    utterance: int
    theta0_deg: float
    radius_m: float
    height_m: float
    trajectory_seed: int


@dataclass(frozen=True)
class SceneSpec:
    scene_id: str
    seed: int
    room: RoomSpec
    array_center: tuple[float, float, float]
    target: SpeakerSpec
    interferer: SpeakerSpec
    sigma: float  # deg/s^2, shared by both speakers
    snr_db: float
    duration: float
    fs: int
    hop: int = 256
    array_radius_m: float = 0.05
    num_mics: int = 3
    max_order: int | None = None  # None = auto; 0 = anechoic
    interferer_gain: float | None = None  # explicit override of the SNR-derived gain

    def array(self) -> ArrayGeometry:
        return ArrayGeometry.circular(
            self.array_center, radius=self.array_radius_m, num_mics=self.num_mics
        )

    def motion_params(self) -> mo.MotionParams:
        return mo.MotionParams(
            sigma=self.sigma, delta_t=self.hop / self.fs, num_frames=self.num_hops - 1
        )

    @property
    def num_hops(self) -> int:
        return int(np.ceil(self.duration * self.fs / self.hop))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["room"] = {"dims": list(self.room.dims), "t60": self.room.t60,
                     "speed_of_sound": self.room.speed_of_sound}
        d["array_center"] = list(self.array_center)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        d = dict(d)
        room = d.pop("room")
        d["room"] = RoomSpec(dims=tuple(room["dims"]), t60=room["t60"],
                             speed_of_sound=room.get("speed_of_sound", 343.0))
        d["array_center"] = tuple(d["array_center"])
        d["target"] = SpeakerSpec(**d["target"])
        d["interferer"] = SpeakerSpec(**d["interferer"])
        return cls(**d)


@dataclass
class SceneAudio:
    """Rendered scene signals; mixture = target_direct + interference sample-exact."""

    mixture: np.ndarray  # (M, N)
    target_direct: np.ndarray  # (M, N) direct-path target on all channels
    interference: np.ndarray  # (M, N) target reflections + reverberant interferer
    dry_target: np.ndarray  # (N,) reference channel of target_direct
    target_trajectory: mo.Trajectory
    interferer_trajectory: mo.Trajectory
    fs: int


def angular_separation(a: float, b: float) -> float:
    d = abs(a - b) % 360.0
    return min(d, 360.0 - d)


def _active_power(signal: np.ndarray, fs: int) -> float:
    """Mean power over active frames (>= -40 dB below the loudest frame)."""
    frame = max(int(_ACTIVE_FRAME_S * fs), 1)
    n = (len(signal) // frame) * frame
    if n == 0:
        frames = signal[None, :]
    else:
        frames = signal[:n].reshape(-1, frame)
    powers = np.mean(frames**2, axis=1)
    peak = powers.max()
    if peak <= 0:
        raise ValueError("silent input signal")
    active = powers[powers >= peak * 10 ** (_ACTIVE_THRESHOLD_DB / 10.0)]
    return float(active.mean())


def mix_gains(target: np.ndarray, interferer: np.ndarray, snr_db: float,
              fs: int = 16000) -> float:
    """Gain for the interferer so the target/interferer SNR equals snr_db."""
    p_t = _active_power(np.asarray(target, float), fs)
    p_i = _active_power(np.asarray(interferer, float), fs)
    return float(np.sqrt(p_t / p_i) * 10 ** (-snr_db / 20.0))


def sample_scene_spec(corpus: Corpus, constraints: SceneConstraints,
                      sigma: float, duration: float, fs: int, seed: int,
                      scene_id: str = "scene", hop: int = 256) -> SceneSpec:
    """Draw a random scene satisfying all geometric constraints (deterministic)."""
    if len(corpus.speakers) < 2:
        raise ValueError("corpus must contain at least two speakers")
    rng = np.random.default_rng(seed)
    c = constraints
    dims = (rng.uniform(*c.room_l_range), rng.uniform(*c.room_w_range),
            rng.uniform(*c.room_h_range))
    room = RoomSpec(dims=dims, t60=float(rng.uniform(*c.t60_range)))
    center = (
        dims[0] / 2 + rng.uniform(-c.array_jitter_m, c.array_jitter_m),
        dims[1] / 2 + rng.uniform(-c.array_jitter_m, c.array_jitter_m),
        c.array_height_m,
    )
    spk_t, spk_i = rng.choice(corpus.speakers, size=2, replace=False)

    def draw_speaker(speaker: str) -> SpeakerSpec:
        return SpeakerSpec(
            speaker=str(speaker),
            utterance=int(rng.integers(len(corpus.utterances(speaker)))),
            theta0_deg=float(rng.uniform(0.0, 360.0)),
            radius_m=float(rng.uniform(*c.radius_range)),
            height_m=float(rng.uniform(*c.height_range)),
            trajectory_seed=int(rng.integers(2**31)),
        )

    target = draw_speaker(spk_t)
    for attempt in range(_MAX_SAMPLE_RETRIES):
        interferer = draw_speaker(spk_i)
        if angular_separation(target.theta0_deg, interferer.theta0_deg) >= c.min_separation_deg:
            break
    else:
        raise RuntimeError(
            f"could not satisfy the {c.min_separation_deg} deg separation "
            f"constraint after {_MAX_SAMPLE_RETRIES} attempts"
        )
    return SceneSpec(
        scene_id=scene_id,
        seed=seed,
        room=room,
        array_center=center,
        target=target,
        interferer=interferer,
        sigma=sigma,
        snr_db=float(rng.uniform(*c.snr_range_db)),
        duration=duration,
        fs=fs,
        hop=hop,
        array_radius_m=c.array_radius_m,
        num_mics=c.num_mics,
    )


def _load_dry(corpus: Corpus, spk: SpeakerSpec, duration: float, fs: int) -> np.ndarray:
    signal = corpus.load_utterance(spk.speaker, spk.utterance, fs)
    n = int(round(duration * fs))
    if len(signal) < n:
        raise ValueError(
            f"utterance {spk.speaker}/{spk.utterance} is shorter than the "
            f"requested {duration} s (no looping)"
        )
    return signal[:n].astype(np.float64)


def render_scene(spec: SceneSpec, corpus: Corpus) -> SceneAudio:
    """Render a scene to its signal-model components."""
    array = spec.array()
    params = spec.motion_params()
    dry_t = _load_dry(corpus, spec.target, spec.duration, spec.fs)
    dry_i = _load_dry(corpus, spec.interferer, spec.duration, spec.fs)

    traj_t = mo.sample_trajectory(
        mo.CVState(spec.target.theta0_deg, 0.0), params, spec.target.trajectory_seed
    )
    traj_i = mo.sample_trajectory(
        mo.CVState(spec.interferer.theta0_deg, 0.0), params, spec.interferer.trajectory_seed
    )
    path_t = path_from_trajectory(traj_t.thetas, spec.array_center,
                                  spec.target.radius_m, spec.target.height_m)
    path_i = path_from_trajectory(traj_i.thetas, spec.array_center,
                                  spec.interferer.radius_m, spec.interferer.height_m)

    if spec.interferer_gain is not None:
        gain = spec.interferer_gain
    else:
        gain = mix_gains(dry_t, dry_i, spec.snr_db, spec.fs)

    order = "auto" if spec.max_order is None else spec.max_order
    target_reverb = render_moving(spec.room, array, path_t, dry_t, spec.fs,
                                  spec.hop, max_order=order)
    interf_reverb = render_moving(spec.room, array, path_i, dry_i, spec.fs,
                                  spec.hop, max_order=order)
    target_direct = render_moving(spec.room, array, path_t, dry_t, spec.fs,
                                  spec.hop, max_order=0)

    mixture = target_reverb + gain * interf_reverb
    interference = mixture - target_direct
    # re-sum so mixture == target_direct + interference holds bit-exactly
    mixture = target_direct + interference
    return SceneAudio(
        mixture=mixture,
        target_direct=target_direct,
        interference=interference,
        dry_target=target_direct[array.reference_index],
        target_trajectory=traj_t,
        interferer_trajectory=traj_i,
        fs=spec.fs,
    )


# --- dataset generation -------------------------------------------------------

# frame index at which a condition's expected displacement is pinned (5 s at 16 ms)
_CONDITION_REF_SECONDS = 5.0


@dataclass(frozen=True)
class GenerationConfig:
    num_scenes: int = 50
    conditions: tuple[float, ...] = (0.0, 180.0, 360.0)  # E|dtheta| in deg per 5 s
    duration: float = 5.0
    fs: int = 16000
    hop: int = 256
    seed: int = 0
    num_regions: int = 180
    emit_components: bool = False  # also write target/interference WAVs

    def sigma_for(self, condition: float) -> float:
        dt = self.hop / self.fs
        t_ref = int(round(_CONDITION_REF_SECONDS / dt))
        return mo.sigma_from_displacement(condition, dt, t_ref)


@dataclass
class ManifestEntry:
    scene_id: str
    condition: float
    sigma: float
    spec: dict
    paths: dict


@dataclass
class DatasetManifest:
    config: dict
    entries: list
    errors: list = field(default_factory=list)

    def save(self, path) -> None:
        payload = {
            "config": self.config,
            "entries": [asdict(e) if dataclasses.is_dataclass(e) else e
                        for e in self.entries],
            "errors": self.errors,
        }
        with open(path, "w") as f:
            json.dump(payload, f, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        with open(path) as f:
            payload = json.load(f)
        entries = [ManifestEntry(**e) for e in payload["entries"]]
        return cls(config=payload["config"], entries=entries,
                   errors=payload.get("errors", []))


def _scene_seed(base_seed: int, cond_idx: int, scene_idx: int) -> int:
    ss = np.random.SeedSequence([base_seed, cond_idx, scene_idx])
    return int(ss.generate_state(1)[0])


def generate_dataset(config: GenerationConfig, corpus: Corpus, out_dir,
                     constraints: SceneConstraints | None = None,
                     resume: bool = False,
                     progress=None) -> DatasetManifest:
    """Render num_scenes scenes per condition and write audio + manifest."""
    constraints = constraints or SceneConstraints()
    out_dir = str(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    entries: list[ManifestEntry] = []
    errors: list[dict] = []
    for ci, cond in enumerate(config.conditions):
        sigma = config.sigma_for(cond)
        for si in range(config.num_scenes):
            scene_id = f"c{int(round(cond)):03d}_s{si:04d}"
            seed = _scene_seed(config.seed, ci, si)
            spec = sample_scene_spec(
                corpus, constraints, sigma, config.duration, config.fs,
                seed, scene_id=scene_id, hop=config.hop,
            )
            paths = {
                "mixture": f"{scene_id}_mix.wav",
                "dry_target": f"{scene_id}_dry.wav",
                "target_trajectory": f"{scene_id}_traj_target.csv",
                "interferer_trajectory": f"{scene_id}_traj_interferer.csv",
            }
            if config.emit_components:
                paths["target_direct"] = f"{scene_id}_target.wav"
                paths["interference"] = f"{scene_id}_interference.wav"
            entry = ManifestEntry(scene_id=scene_id, condition=cond, sigma=sigma,
                                  spec=spec.to_dict(), paths=paths)
            if resume and all(
                os.path.exists(os.path.join(out_dir, p)) for p in paths.values()
            ):
                entries.append(entry)
                continue
            try:
                audio = render_scene(spec, corpus)
            except (ValueError, RuntimeError) as exc:
                errors.append({"scene_id": scene_id, "error": str(exc)})
                continue
            write_wav(os.path.join(out_dir, paths["mixture"]), audio.mixture, config.fs)
            write_wav(os.path.join(out_dir, paths["dry_target"]), audio.dry_target,
                      config.fs)
            mo.write_trajectory_csv(os.path.join(out_dir, paths["target_trajectory"]),
                                    audio.target_trajectory)
            mo.write_trajectory_csv(
                os.path.join(out_dir, paths["interferer_trajectory"]),
                audio.interferer_trajectory,
            )
            if config.emit_components:
                write_wav(os.path.join(out_dir, paths["target_direct"]),
                          audio.target_direct, config.fs)
                write_wav(os.path.join(out_dir, paths["interference"]),
                          audio.interference, config.fs)
            entries.append(entry)
            if progress is not None:
                progress(scene_id)
    manifest = DatasetManifest(config=asdict(config), entries=entries, errors=errors)
    manifest.save(os.path.join(out_dir, "manifest.json"))
    return manifest
