"""Speech corpus access: a directory of mono WAV utterances plus an index file.

The index (index.json) maps speaker id -> list of utterance paths relative to
the corpus root. A synthetic speech-like corpus generator is included so the
pipeline can run end to end without a real recording corpus.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .audio import read_wav, write_wav

INDEX_NAME = "index.json"


@dataclass
class Corpus:
    root: str
    index: dict[str, list[str]]

    @classmethod
    def load(cls, root) -> "Corpus":
        root = str(root)
        index_path = os.path.join(root, INDEX_NAME)
        if not os.path.exists(index_path):
            raise FileNotFoundError(f"corpus index not found: {index_path}")
        with open(index_path) as f:
            index = json.load(f)
        if not isinstance(index, dict) or not index:
            raise ValueError(f"corpus index {index_path} is empty or malformed")
        return cls(root=root, index=index)

    @property
    def speakers(self) -> list[str]:
        return sorted(self.index)

    def utterances(self, speaker: str) -> list[str]:
        return self.index[speaker]

    def load_utterance(self, speaker: str, utt_idx: int, fs: int) -> np.ndarray:
        path = os.path.join(self.root, self.index[speaker][utt_idx])
        signal, file_fs = read_wav(path)
        if file_fs != fs:
            raise ValueError(f"{path}: expected fs {fs}, got {file_fs}")
        if signal.ndim != 1:
            raise ValueError(f"{path}: corpus utterances must be mono")
        return signal


def _synthetic_utterance(rng: np.random.Generator, duration: float, fs: int,
                         f0: float) -> np.ndarray:
    """Speech-like signal: pitched harmonic bursts plus shaped noise, syllabic gaps."""
    n = int(duration * fs)
    t = np.arange(n) / fs
    f0_track = f0 * (1.0 + 0.12 * np.sin(2 * np.pi * rng.uniform(0.3, 0.9) * t)
                     + 0.04 * rng.standard_normal())
    phase = 2 * np.pi * np.cumsum(f0_track) / fs
    voiced = np.zeros(n)
    for h in range(1, 9):
        voiced += rng.uniform(0.3, 1.0) / h * np.sin(h * phase + rng.uniform(0, 2 * np.pi))
    noise = lfilter([1.0], [1.0, -0.92], rng.standard_normal(n))
    noise /= np.max(np.abs(noise)) + 1e-12
    # syllabic amplitude modulation around 3-4 Hz with pauses
    env = 0.5 + 0.5 * np.sin(2 * np.pi * rng.uniform(2.5, 4.5) * t + rng.uniform(0, 2 * np.pi))
    env = env**1.5
    gate = (lfilter(np.ones(fs // 4) / (fs // 4), [1.0], rng.standard_normal(n)) > -0.02)
    sig = (0.8 * voiced + 0.4 * noise) * env * gate
    peak = np.max(np.abs(sig))
    if peak > 0:
        sig = 0.5 * sig / peak
    return sig.astype(np.float64)


def generate_synthetic_corpus(root, num_speakers: int = 4, utts_per_speaker: int = 3,
                              duration: float = 6.0, fs: int = 16000,
                              seed: int = 0) -> Corpus:
    """Write a small synthetic corpus (distinct pitch per speaker) to disk."""
    root = str(root)
    os.makedirs(root, exist_ok=True)
    rng = np.random.default_rng(seed)
    index: dict[str, list[str]] = {}
    f0s = np.linspace(95.0, 230.0, num_speakers)
    for s in range(num_speakers):
        speaker = f"spk{s:02d}"
        index[speaker] = []
        for u in range(utts_per_speaker):
            rel = f"{speaker}_{u:02d}.wav"
            sig = _synthetic_utterance(rng, duration, fs, f0s[s])
            write_wav(os.path.join(root, rel), sig, fs)
            index[speaker].append(rel)
    with open(os.path.join(root, INDEX_NAME), "w") as f:
        json.dump(index, f, indent=2, sort_keys=True)
    return Corpus(root=root, index=index)
