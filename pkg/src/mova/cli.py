"""Command-line pipeline: param / simulate / track / extract / evaluate.

Exit codes: 0 success, 1 usage error, 2 data error, 3 partial failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import motion as mo
from .audio import read_wav, write_wav
from .corpus import Corpus
from .dsp import DoaGrid, StftConfig, stft
from .extraction import cue_conditioned_extract, read_mask
from .metrics import (
    ExtractionReport,
    TrackingReport,
    aggregate,
    si_sdr,
    write_summary_csv,
    write_summary_json,
)
from .scene import DatasetManifest, GenerationConfig, SceneAudio, SceneSpec, generate_dataset
from .tracking import (
    PfConfig,
    map_decode,
    oracle_track,
    pf_track,
    read_posterior_grid,
    write_posterior_grid,
    write_track_csv,
    read_track_csv,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_PARTIAL = 3


class DataError(Exception):
    pass


def _load_config_overrides(args: argparse.Namespace, parser: argparse.ArgumentParser,
                           allowed: set[str], argv: list[str]) -> None:
    """Apply JSON config-file values for flags the user did not set explicitly."""
    if not getattr(args, "config", None):
        return
    with open(args.config) as f:
        cfg = json.load(f)
    unknown = set(cfg) - allowed
    if unknown:
        parser.error(f"unknown config keys: {sorted(unknown)}")
    for key, value in cfg.items():
        if f"--{key.replace('_', '-')}" not in argv:  # explicit flags win
            setattr(args, key, value)


def _stft_config(manifest: DatasetManifest) -> StftConfig:
    cfg = manifest.config
    return StftConfig(window_len=2 * cfg["hop"], hop=cfg["hop"], fs=cfg["fs"])


def _grid(manifest: DatasetManifest) -> DoaGrid:
    return DoaGrid(num_regions=manifest.config["num_regions"])


def _manifest_dir(manifest_path: str) -> str:
    return os.path.dirname(os.path.abspath(manifest_path))


def _load_manifest(path: str) -> DatasetManifest:
    if not os.path.exists(path):
        raise DataError(f"manifest not found: {path}")
    return DatasetManifest.load(path)


def _entry_trajectory(entry, data_dir: str, which: str, hop: int, fs: int):
    path = os.path.join(data_dir, entry.paths[f"{which}_trajectory"])
    return mo.read_trajectory_csv(path, delta_t=hop / fs)


# --- subcommands ---------------------------------------------------------------

def cmd_param(args) -> int:
    sigma = mo.sigma_from_displacement(args.disp, args.dt, args.frames)
    params = mo.MotionParams(sigma=sigma, delta_t=args.dt, num_frames=args.frames) \
        if sigma > 0 else None
    print(f"sigma = {sigma:.6f} deg/s^2")
    if params is not None:
        check = mo.expected_abs_displacement(params, args.frames)
        print(f"round-trip expected |displacement| at t={args.frames}: {check:.6f} deg")
    print(
        "Monte-Carlo check: python -c \"from mova import motion; import numpy as np; "
        f"p = motion.MotionParams({sigma!r}, {args.dt!r}, {args.frames}); "
        f"d = motion.sample_displacements(p, 10000, 0); "
        f"print(np.abs(d[:, -1]).mean())\""
    )
    return EXIT_OK


def cmd_simulate(args, parser, argv) -> int:
    allowed = {"scenes", "conditions", "duration", "fs", "hop", "seed",
               "num_regions", "emit_components"}
    _load_config_overrides(args, parser, allowed, argv)
    config = GenerationConfig(
        num_scenes=args.scenes,
        conditions=tuple(args.conditions),
        duration=args.duration,
        fs=args.fs,
        hop=args.hop,
        seed=args.seed,
        num_regions=args.num_regions,
        emit_components=args.emit_components,
    )
    if not os.path.isdir(args.corpus):
        raise DataError(f"corpus directory not found: {args.corpus}")
    corpus = Corpus.load(args.corpus)
    if args.dry_run:
        print(json.dumps(dataclasses.asdict(config), sort_keys=True))
        print(f"corpus: {len(corpus.speakers)} speakers; config valid")
        return EXIT_OK
    os.makedirs(args.out, exist_ok=True)
    progress = (lambda sid: print(f"rendered {sid}", flush=True)) if args.verbose else None
    manifest = generate_dataset(config, corpus, args.out, resume=args.resume,
                                progress=progress)
    manifest_path = os.path.join(args.out, "manifest.json")
    print(f"wrote {len(manifest.entries)} scenes -> {manifest_path}")
    if manifest.errors:
        for err in manifest.errors:
            print(f"scene {err['scene_id']} failed: {err['error']}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_track(args) -> int:
    manifest = _load_manifest(args.manifest)
    data_dir = _manifest_dir(args.manifest)
    config = _stft_config(manifest)
    grid = _grid(manifest)
    os.makedirs(args.out, exist_ok=True)
    external_dir = None
    if args.tracker.startswith("external:"):
        external_dir = args.tracker.split(":", 1)[1]
        if not os.path.isdir(external_dir):
            raise DataError(f"external posterior directory not found: {external_dir}")
    failures = 0
    for i, entry in enumerate(manifest.entries):
        spec = SceneSpec.from_dict(entry.spec)
        truth = _entry_trajectory(entry, data_dir, "target", spec.hop, spec.fs)
        track_path = os.path.join(args.out, f"{entry.scene_id}_track.csv")
        posterior_path = os.path.join(args.out, f"{entry.scene_id}_posterior.bin")
        try:
            if args.tracker == "oracle":
                track = oracle_track(truth, grid)
                posterior = None
            elif args.tracker == "das-pf":
                mixture, fs = read_wav(os.path.join(data_dir, entry.paths["mixture"]))
                spec_y = stft(mixture, config)
                pf_config = PfConfig(
                    num_particles=args.particles,
                    seed=int(np.random.SeedSequence([args.seed, i]).generate_state(1)[0]),
                )
                posterior, track = pf_track(
                    spec_y, spec.target.theta0_deg, spec.motion_params(),
                    pf_config, spec.array(), grid,
                )
            elif external_dir is not None:
                ext_path = os.path.join(external_dir,
                                        f"{entry.scene_id}_posterior.bin")
                if not os.path.exists(ext_path):
                    raise DataError(f"missing posterior file: {ext_path}")
                posterior = read_posterior_grid(ext_path,
                                                theta0=spec.target.theta0_deg)
                track = map_decode(posterior)
            else:
                raise DataError(f"unknown tracker: {args.tracker}")
        except DataError:
            raise
        except (ValueError, OSError) as exc:
            print(f"scene {entry.scene_id} failed: {exc}", file=sys.stderr)
            failures += 1
            continue
        write_track_csv(track_path, track)
        if posterior is not None:
            write_posterior_grid(posterior_path, posterior)
    print(f"tracked {len(manifest.entries) - failures}/{len(manifest.entries)} scenes "
          f"-> {args.out}")
    return EXIT_PARTIAL if failures else EXIT_OK


def _scene_audio_from_files(entry, data_dir: str, spec: SceneSpec) -> SceneAudio:
    mixture, fs = read_wav(os.path.join(data_dir, entry.paths["mixture"]))
    dry, _ = read_wav(os.path.join(data_dir, entry.paths["dry_target"]))
    traj_t = _entry_trajectory(entry, data_dir, "target", spec.hop, spec.fs)
    traj_i = _entry_trajectory(entry, data_dir, "interferer", spec.hop, spec.fs)
    zeros = np.zeros_like(mixture)
    return SceneAudio(mixture=mixture.astype(np.float64),
                      target_direct=zeros, interference=zeros,
                      dry_target=dry.astype(np.float64),
                      target_trajectory=traj_t, interferer_trajectory=traj_i, fs=fs)


def cmd_extract(args) -> int:
    manifest = _load_manifest(args.manifest)
    data_dir = _manifest_dir(args.manifest)
    config = _stft_config(manifest)
    external_dir = None
    if args.mask.startswith("external:"):
        external_dir = args.mask.split(":", 1)[1]
        if not os.path.isdir(external_dir):
            raise DataError(f"external mask directory not found: {external_dir}")
    elif args.mask != "oracle-gated":
        raise DataError(f"unknown mask source: {args.mask}")
    os.makedirs(args.out, exist_ok=True)
    for entry in manifest.entries:
        out_path = os.path.join(args.out, f"{entry.scene_id}_est.wav")
        if os.path.exists(out_path) and not args.force:
            raise DataError(f"refusing to overwrite {out_path} (use --force)")
    failures = 0
    for entry in manifest.entries:
        spec = SceneSpec.from_dict(entry.spec)
        out_path = os.path.join(args.out, f"{entry.scene_id}_est.wav")
        try:
            scene = _scene_audio_from_files(entry, data_dir, spec)
            track = read_track_csv(
                os.path.join(args.tracks, f"{entry.scene_id}_track.csv")
            )
            external_mask = None
            if external_dir is not None:
                external_mask = read_mask(
                    os.path.join(external_dir, f"{entry.scene_id}_mask.bin")
                )
            result = cue_conditioned_extract(
                scene, config, track, scene.target_trajectory,
                external_mask=external_mask,
                gate_threshold_deg=args.gate_deg,
                scene_id=entry.scene_id, cue_source=args.mask,
            )
        except (ValueError, OSError) as exc:
            print(f"scene {entry.scene_id} failed: {exc}", file=sys.stderr)
            failures += 1
            continue
        write_wav(out_path, result.estimate, spec.fs)
    print(f"extracted {len(manifest.entries) - failures}/{len(manifest.entries)} "
          f"scenes -> {args.out}")
    return EXIT_PARTIAL if failures else EXIT_OK


def cmd_evaluate(args) -> int:
    manifest = _load_manifest(args.manifest)
    data_dir = _manifest_dir(args.manifest)
    os.makedirs(args.out, exist_ok=True)
    tracking_reports = []
    extraction_reports = []
    missing = []
    for entry in manifest.entries:
        spec = SceneSpec.from_dict(entry.spec)
        truth = _entry_trajectory(entry, data_dir, "target", spec.hop, spec.fs)
        if args.tracks:
            track_path = os.path.join(args.tracks, f"{entry.scene_id}_track.csv")
            if os.path.exists(track_path):
                track = read_track_csv(track_path)
                tracking_reports.append(TrackingReport.from_track(
                    entry.scene_id, entry.condition, track.thetas, truth.thetas,
                    margin=args.margin,
                ))
            else:
                missing.append(track_path)
        dry, _ = read_wav(os.path.join(data_dir, entry.paths["dry_target"]))
        mixture, _ = read_wav(os.path.join(data_dir, entry.paths["mixture"]))
        mix_score = si_sdr(mixture[0].astype(np.float64), dry.astype(np.float64))
        if args.extracted:
            est_path = os.path.join(args.extracted, f"{entry.scene_id}_est.wav")
            if os.path.exists(est_path):
                est, _ = read_wav(est_path)
                extraction_reports.append(ExtractionReport(
                    scene_id=entry.scene_id, condition=entry.condition,
                    si_sdr_db=si_sdr(est.astype(np.float64), dry.astype(np.float64)),
                    si_sdr_mixture_db=mix_score,
                ))
            else:
                missing.append(est_path)
        else:
            extraction_reports.append(ExtractionReport(
                scene_id=entry.scene_id, condition=entry.condition,
                si_sdr_db=mix_score, si_sdr_mixture_db=mix_score,
            ))
    if not tracking_reports and not extraction_reports:
        raise DataError("nothing to evaluate")
    summaries = aggregate(tracking_reports, extraction_reports)
    write_summary_json(os.path.join(args.out, "summary.json"), summaries)
    write_summary_csv(os.path.join(args.out, "summary.csv"), summaries)
    if args.plot_data:
        _write_plot_data(args, manifest, data_dir, summaries)
    for s in summaries:
        parts = [f"condition {s.condition:g}"]
        if s.accuracy is not None:
            parts.append(f"acc@{args.margin:g} {s.accuracy:.3f} "
                         f"medAE {s.median_ae:.2f} deg")
        if s.mean_si_sdr_db is not None:
            parts.append(f"SI-SDR {s.mean_si_sdr_db:.2f} dB "
                         f"(mix {s.mean_si_sdr_mixture_db:.2f} dB)")
        print("  ".join(parts))
    if missing:
        for path in missing:
            print(f"missing input: {path}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def _write_plot_data(args, manifest, data_dir, summaries) -> None:
    """Per-figure CSVs: per-scene DOA-vs-time tracks and metric-vs-condition."""
    plot_dir = os.path.join(args.out, "plot_data")
    os.makedirs(plot_dir, exist_ok=True)
    with open(os.path.join(plot_dir, "metrics_vs_condition.csv"), "w") as f:
        f.write("condition,accuracy,median_ae,ae_q25,ae_q75,mean_si_sdr_db\n")
        for s in summaries:
            f.write(f"{s.condition},{s.accuracy},{s.median_ae},{s.ae_q25},"
                    f"{s.ae_q75},{s.mean_si_sdr_db}\n")
    if not args.tracks:
        return
    for entry in manifest.entries:
        track_path = os.path.join(args.tracks, f"{entry.scene_id}_track.csv")
        if not os.path.exists(track_path):
            continue
        spec = SceneSpec.from_dict(entry.spec)
        truth = _entry_trajectory(entry, data_dir, "target", spec.hop, spec.fs)
        track = read_track_csv(track_path)
        dt = spec.hop / spec.fs
        with open(os.path.join(plot_dir, f"{entry.scene_id}_doa_vs_time.csv"), "w") as f:
            f.write("time_s,truth_deg,estimate_deg\n")
            for i in range(min(len(track), len(truth.thetas))):
                f.write(f"{i * dt:.6f},{truth.thetas[i]:.6f},{track.thetas[i]:.6f}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mova",
        description="Moving-speaker mixture synthesis, DOA tracking and "
                    "mask-based extraction.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("param", help="motion-noise std from a target displacement")
    p.add_argument("--disp", type=float, required=True,
                   help="target expected |displacement| in degrees")
    p.add_argument("--dt", type=float, default=0.016, help="frame step in seconds")
    p.add_argument("--frames", type=int, default=312, help="frame index t")

    p = sub.add_parser("simulate", help="generate a scene dataset")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="JSON config file (flags override it)")
    p.add_argument("--scenes", type=int, default=50)
    p.add_argument("--conditions", type=float, nargs="+", default=[0.0, 180.0, 360.0],
                   help="expected |displacement| per 5 s, degrees")
    p.add_argument("--duration", type=float, default=5.0)
    p.add_argument("--fs", type=int, default=16000)
    p.add_argument("--hop", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--num-regions", dest="num_regions", type=int, default=180)
    p.add_argument("--emit-components", dest="emit_components", action="store_true")
    p.add_argument("--dry-run", dest="dry_run", action="store_true")
    p.add_argument("--resume", action="store_true")
    p.add_argument("--verbose", action="store_true")

    p = sub.add_parser("track", help="track the target speaker per scene")
    p.add_argument("--manifest", required=True)
    p.add_argument("--tracker", default="das-pf",
                   help="das-pf | oracle | external:<posterior-dir>")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--particles", type=int, default=500)

    p = sub.add_parser("extract", help="mask-based extraction per scene")
    p.add_argument("--manifest", required=True)
    p.add_argument("--tracks", required=True)
    p.add_argument("--mask", default="oracle-gated",
                   help="oracle-gated | external:<mask-dir>")
    p.add_argument("--out", required=True)
    p.add_argument("--gate-deg", dest="gate_deg", type=float, default=20.0)
    p.add_argument("--force", action="store_true")

    p = sub.add_parser("evaluate", help="tracking/extraction reports")
    p.add_argument("--manifest", required=True)
    p.add_argument("--tracks", default=None)
    p.add_argument("--extracted", default=None,
                   help="directory of extracted WAVs; omit to score the raw mixture")
    p.add_argument("--out", required=True)
    p.add_argument("--margin", type=float, default=5.0)
    p.add_argument("--plot-data", dest="plot_data", action="store_true")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    if argv is None:
        argv = sys.argv[1:]
    args = parser.parse_args(argv)
    try:
        if args.command == "param":
            return cmd_param(args)
        if args.command == "simulate":
            return cmd_simulate(args, parser, argv)
        if args.command == "track":
            return cmd_track(args)
        if args.command == "extract":
            return cmd_extract(args)
        if args.command == "evaluate":
            return cmd_evaluate(args)
        parser.error(f"unknown command {args.command}")
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
