#!/usr/bin/env python3
"""Write a small synthetic speech-like corpus for running the pipeline
without any recorded data.

Usage:
    python scripts/make_demo_corpus.py out/corpus --speakers 6 --utts 3
"""

import argparse

from mova.corpus import generate_synthetic_corpus


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("out", help="corpus output directory")
    parser.add_argument("--speakers", type=int, default=6)
    parser.add_argument("--utts", type=int, default=3, help="utterances per speaker")
    parser.add_argument("--duration", type=float, default=6.0, help="seconds")
    parser.add_argument("--fs", type=int, default=16000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    corpus = generate_synthetic_corpus(
        args.out, num_speakers=args.speakers, utts_per_speaker=args.utts,
        duration=args.duration, fs=args.fs, seed=args.seed,
    )
    n_utts = sum(len(v) for v in corpus.index.values())
    print(f"wrote {len(corpus.speakers)} speakers / {n_utts} utterances to {corpus.root}")


if __name__ == "__main__":
    main()
