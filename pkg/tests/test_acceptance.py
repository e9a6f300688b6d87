"""End-to-end acceptance gate for the toolkit.

Each test checks one release criterion at its stated tolerance and records a
single PASS/FAIL line, echoed in an "acceptance criteria" section after the
run (see conftest). The heavyweight criteria (static tracking accuracy,
degradation ordering, extraction bounds) share one module-scoped batch of
rendered scenes: 50 scenes for each motion condition at 5 s / 16 kHz.

The unprocessed-mixture level check needs real recorded speech; point
MOVA_REAL_CORPUS at a corpus directory to enable it, otherwise it is skipped.
"""

import os
import time

import numpy as np
import pytest

from mova import cli
from mova.acoustics import ArrayGeometry, RoomSpec, SourcePath, render_moving, render_static, simulate_rir, schroeder_t60
from mova.corpus import Corpus
from mova.dsp import DoaGrid, StftConfig, istft, stft
from mova.extraction import apply_mask, cue_conditioned_extract, oracle_complex_mask
from mova.metrics import angular_error, frame_accuracy, si_sdr
from mova.motion import (
    MotionParams,
    displacement_variance,
    expected_abs_displacement,
    sample_displacements,
    sigma_from_displacement,
)
from mova.scene import SceneConstraints, render_scene, sample_scene_spec
from mova.tracking import PfConfig, pf_track

SEED = 1337
NUM_SCENES = 50
CONDITIONS = (0.0, 180.0, 360.0)  # expected |displacement| in deg per 5 s
DURATION = 5.0
FS = 16000
STFT_CFG = StftConfig()
GRID = DoaGrid()


def _fit_sigma(disp: float, delta_t: float = 0.016, t: int = 312) -> MotionParams:
    sigma = sigma_from_displacement(disp, delta_t, t)
    return MotionParams(sigma=sigma, delta_t=delta_t, num_frames=t)


@pytest.fixture(scope="module")
def pipeline(corpus):
    """Render the acceptance scene batch and run tracking + extraction once.

    Returns ({condition: [per-scene metric dict]}, {condition: pf seconds}).
    """
    constraints = SceneConstraints()
    delta_t = STFT_CFG.hop / STFT_CFG.fs
    t_ref = int(round(DURATION / delta_t))
    results: dict[float, list[dict]] = {}
    pf_seconds: dict[float, float] = {}
    for ci, cond in enumerate(CONDITIONS):
        sigma = sigma_from_displacement(cond, delta_t, t_ref)
        per_scene = []
        pf_elapsed = 0.0
        for si in range(NUM_SCENES):
            seed = int(np.random.SeedSequence([SEED, ci, si]).generate_state(1)[0])
            spec = sample_scene_spec(corpus, constraints, sigma, DURATION, FS,
                                     seed, scene_id=f"c{ci}s{si}")
            audio = render_scene(spec, corpus)
            mix_spec = stft(audio.mixture, STFT_CFG)
            t0 = time.perf_counter()
            _, track = pf_track(mix_spec, spec.target.theta0_deg,
                                spec.motion_params(),
                                PfConfig(seed=seed & 0x7FFFFFFF),
                                spec.array(), GRID)
            pf_elapsed += time.perf_counter() - t0
            truth = audio.target_trajectory.thetas
            oracle_mask = oracle_complex_mask(audio, STFT_CFG)
            oracle_est = apply_mask(mix_spec.data[0], oracle_mask, STFT_CFG,
                                    num_samples=audio.mixture.shape[1])
            gated = cue_conditioned_extract(audio, STFT_CFG, track,
                                            audio.target_trajectory)
            per_scene.append({
                "accuracy": frame_accuracy(track.thetas, truth),
                "median_ae": float(np.median(angular_error(track.thetas, truth))),
                "mixture_si_sdr": si_sdr(audio.mixture[0], audio.dry_target),
                "oracle_si_sdr": si_sdr(oracle_est, audio.dry_target),
                "gated_si_sdr": si_sdr(gated.estimate, audio.dry_target),
            })
        results[cond] = per_scene
        pf_seconds[cond] = pf_elapsed
    return results, pf_seconds


def test_motion_displacement_statistics(verdict):
    t0 = time.perf_counter()
    worst_mean, worst_var = 0.0, 0.0
    for disp in (90.0, 180.0, 360.0):
        params = _fit_sigma(disp)
        final = sample_displacements(params, num_runs=10_000, seed=SEED)[:, -1]
        mean_rel = abs(np.mean(np.abs(final)) - expected_abs_displacement(params, 312)) / disp
        var_rel = abs(np.var(final) / displacement_variance(params, 312) - 1.0)
        worst_mean = max(worst_mean, mean_rel)
        worst_var = max(worst_var, var_rel)
    elapsed = time.perf_counter() - t0
    ok = worst_mean <= 0.02 and worst_var <= 0.03 and elapsed < 10.0
    verdict("motion statistics vs 10k-run Monte Carlo", ok,
             f"mean err {worst_mean:.4f} (<=0.02), var err {worst_var:.4f} "
             f"(<=0.03), {elapsed:.1f}s (<10s)")


def test_stft_reconstruction_and_parseval(corpus, verdict):
    rng = np.random.default_rng(SEED)
    speech = corpus.load_utterance(corpus.speakers[0], 0, FS)[: 5 * FS]
    t0 = time.perf_counter()
    worst = 0.0
    for x in (rng.standard_normal(5 * FS), speech):
        y = istft(stft(x, STFT_CFG), STFT_CFG, num_samples=len(x))
        lo, hi = STFT_CFG.window_len, len(x) - STFT_CFG.window_len
        worst = max(worst, np.linalg.norm(y[lo:hi] - x[lo:hi])
                    / np.linalg.norm(x[lo:hi]))
    frame = rng.standard_normal(STFT_CFG.window_len) * STFT_CFG.window()
    spec = np.fft.rfft(frame)
    weights = np.full(len(spec), 2.0)
    weights[0] = weights[-1] = 1.0
    parseval = abs(np.sum(weights * np.abs(spec) ** 2) / STFT_CFG.window_len
                   / np.sum(frame**2) - 1.0)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-6 and parseval <= 1e-6 and elapsed < 1.0
    verdict("STFT reconstruction + Parseval", ok,
             f"recon err {worst:.2e} (<=1e-6), Parseval err {parseval:.2e} "
             f"(<=1e-6), {elapsed:.2f}s (<1s)")


def test_rir_decay_and_static_degeneracy(rng, verdict):
    t0 = time.perf_counter()
    array = ArrayGeometry(mic_positions=np.array([[3.0, 2.5, 1.5]]))
    worst_rel = 0.0
    for t60 in (0.2, 0.35, 0.5):
        room = RoomSpec(dims=(6.0, 5.0, 3.0), t60=t60)
        rir = simulate_rir(room, array, [4.2, 3.4, 1.6], FS)
        worst_rel = max(worst_rel, abs(schroeder_t60(rir.taps[0], FS) / t60 - 1.0))
    room = RoomSpec(dims=(6.0, 5.0, 3.0), t60=0.3)
    circ = ArrayGeometry.circular([3.0, 2.5, 1.5])
    dry = rng.standard_normal(FS)
    pos = np.tile([4.0, 3.2, 1.6], (int(np.ceil(len(dry) / 256)), 1))
    moving = render_moving(room, circ, SourcePath(pos), dry, FS, hop=256)
    static = render_static(simulate_rir(room, circ, pos[0], FS), dry)
    degeneracy = np.linalg.norm(moving - static) / np.linalg.norm(static)
    elapsed = time.perf_counter() - t0
    ok = worst_rel <= 0.15 and degeneracy <= 1e-4 and elapsed < 60.0
    verdict("RIR T60 decay + static-path degeneracy", ok,
             f"T60 err {worst_rel:.3f} (<=0.15), static err {degeneracy:.2e} "
             f"(<=1e-4), {elapsed:.1f}s (<60s)")


def test_tracking_static_condition(pipeline, verdict):
    results, pf_seconds = pipeline
    acc = float(np.mean([s["accuracy"] for s in results[0.0]]))
    elapsed = pf_seconds[0.0]
    ok = acc >= 0.95 and elapsed < 600.0
    verdict(f"static-scene tracking accuracy over {NUM_SCENES} scenes", ok,
             f"accuracy@5deg {acc:.3f} (>=0.95), filter time {elapsed:.0f}s (<600s)")


def test_tracking_degrades_with_motion(pipeline, verdict):
    results, _ = pipeline
    acc = [float(np.mean([s["accuracy"] for s in results[c]])) for c in CONDITIONS]
    mae = [float(np.median([s["median_ae"] for s in results[c]])) for c in CONDITIONS]
    ok = acc[0] > acc[1] > acc[2] and mae[0] < mae[1] < mae[2]
    verdict("tracking degrades monotonically with motion", ok,
             "accuracy " + " > ".join(f"{a:.3f}" for a in acc)
             + ", median AE " + " < ".join(f"{m:.2f}" for m in mae))


def test_oracle_mask_extraction_bound(pipeline, verdict):
    results, _ = pipeline
    scenes = [s for c in CONDITIONS for s in results[c]]
    med = float(np.median([s["oracle_si_sdr"] for s in scenes]))
    worst_gap = min(s["oracle_si_sdr"] - s["mixture_si_sdr"] for s in scenes)
    ok = med >= 10.0 and worst_gap >= 0.0
    verdict(f"oracle-mask extraction bound over {len(scenes)} scenes", ok,
             f"median SI-SDR {med:.2f} dB (>=10), worst gain over mixture "
             f"{worst_gap:.2f} dB (>=0)")


@pytest.mark.skipif("MOVA_REAL_CORPUS" not in os.environ,
                    reason="set MOVA_REAL_CORPUS to a recorded-speech corpus")
def test_unprocessed_mixture_level_real_corpus(verdict):
    corpus = Corpus.load(os.environ["MOVA_REAL_CORPUS"])
    constraints = SceneConstraints()
    delta_t = STFT_CFG.hop / STFT_CFG.fs
    t_ref = int(round(DURATION / delta_t))
    means = []
    for ci, cond in enumerate(CONDITIONS):
        sigma = sigma_from_displacement(cond, delta_t, t_ref)
        scores = []
        for si in range(NUM_SCENES):
            seed = int(np.random.SeedSequence([SEED, 7, ci, si]).generate_state(1)[0])
            spec = sample_scene_spec(corpus, constraints, sigma, DURATION, FS,
                                     seed, scene_id=f"r{ci}s{si}")
            audio = render_scene(spec, corpus)
            scores.append(si_sdr(audio.mixture[0], audio.dry_target))
        means.append(float(np.mean(scores)))
    ok = all(abs(m - (-6.8)) <= 2.0 for m in means)
    verdict("unprocessed mixture level on recorded speech", ok,
             "mean mixture SI-SDR per condition "
             + ", ".join(f"{m:.2f}" for m in means) + " dB (-6.8 +/- 2)")


def test_gated_extraction_degrades_with_motion(pipeline, verdict):
    results, _ = pipeline
    gated = [float(np.mean([s["gated_si_sdr"] for s in results[c]]))
             for c in CONDITIONS]
    ok = gated[0] > gated[1] > gated[2]
    verdict("cue-gated extraction degrades monotonically with motion", ok,
             "mean SI-SDR " + " > ".join(f"{g:.2f}" for g in gated) + " dB")


def test_metric_edge_cases(rng, verdict):
    ref = rng.standard_normal(4000)
    est = ref + 0.3 * rng.standard_normal(4000)
    scale_err = max(abs(si_sdr(a * est, ref) - si_sdr(est, ref))
                    for a in (1e-3, 0.5, 7.0, 1e3))
    noise = rng.standard_normal(4000)
    noise -= np.dot(noise, ref) / np.dot(ref, ref) * ref
    noise *= np.linalg.norm(ref) / np.linalg.norm(noise)
    orthogonal_db = si_sdr(ref + noise, ref)
    wrap = angular_error(10.0, 350.0)
    inclusive = frame_accuracy([15.0], [10.0])  # error exactly at the margin
    exclusive = frame_accuracy([15.001], [10.0])
    ok = (scale_err <= 1e-9 and abs(orthogonal_db) <= 0.1
          and wrap == pytest.approx(20.0) and inclusive == 1.0 and exclusive == 0.0)
    verdict("metric edge cases", ok,
             f"scale err {scale_err:.1e} dB (<=1e-9), orthogonal {orthogonal_db:.3f} dB "
             f"(|.|<=0.1), wrap {wrap:.1f} deg (=20), margin inclusive {inclusive:.0f}")


def test_pipeline_determinism(corpus, tmp_path_factory, verdict):
    def run(tag: str) -> dict[str, bytes]:
        root = tmp_path_factory.mktemp(f"determinism_{tag}")
        data, tracks, est, report = (root / n for n in
                                     ("data", "tracks", "est", "report"))
        assert cli.main(["simulate", "--corpus", corpus.root, "--out", str(data),
                         "--scenes", "10", "--conditions", "0",
                         "--duration", str(DURATION), "--seed", "5"]) == cli.EXIT_OK
        assert cli.main(["track", "--manifest", str(data / "manifest.json"),
                         "--tracker", "das-pf", "--seed", "5",
                         "--out", str(tracks)]) == cli.EXIT_OK
        assert cli.main(["extract", "--manifest", str(data / "manifest.json"),
                         "--tracks", str(tracks), "--out", str(est)]) == cli.EXIT_OK
        assert cli.main(["evaluate", "--manifest", str(data / "manifest.json"),
                         "--tracks", str(tracks), "--extracted", str(est),
                         "--out", str(report)]) == cli.EXIT_OK
        return {
            "manifest": (data / "manifest.json").read_bytes(),
            "summary_json": (report / "summary.json").read_bytes(),
            "summary_csv": (report / "summary.csv").read_bytes(),
        }

    first, second = run("a"), run("b")
    mismatched = [k for k in first if first[k] != second[k]]
    ok = not mismatched
    verdict("seeded pipeline determinism (10 scenes, two runs)", ok,
             "manifest and reports byte-identical" if ok
             else f"mismatch in {mismatched}")


def test_pipeline_report_sanity(pipeline):
    """Non-criterion guard: the shared batch rendered everything it promised."""
    results, _ = pipeline
    assert all(len(results[c]) == NUM_SCENES for c in CONDITIONS)
    assert all(np.isfinite(v) for c in CONDITIONS for s in results[c]
               for v in s.values())
