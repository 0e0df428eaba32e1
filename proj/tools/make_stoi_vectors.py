#!/usr/bin/env python3
"""Writes the STOI cross-check WAVs under tests/data and prints reference scores.

The scores come from pystoi (pip install pystoi) evaluated on the float32
samples exactly as stored in the files.
"""
import pathlib
import sys

import numpy as np
from scipy.io import wavfile


def speech_like(fs, seconds, rng):
    """Connected-speech surrogate: gliding harmonic source under random
    syllable bumps, troughs held about 20 dB below the syllable peaks."""
    n = int(fs * seconds)
    t = np.arange(n) / fs
    f0 = 120 + 30 * np.sin(2 * np.pi * 0.7 * t) + 15 * np.sin(2 * np.pi * 2.3 * t)
    phase = 2 * np.pi * np.cumsum(f0) / fs
    voiced = sum(np.sin(k * phase) / k for k in range(1, 30))
    env = np.zeros(n)
    start = 0.0
    while start < seconds:
        dur = rng.uniform(0.12, 0.3)
        m = (t >= start) & (t < start + dur)
        env[m] += rng.uniform(0.5, 1.0) * np.sin(np.pi * (t[m] - start) / dur) ** 2
        start += dur + rng.uniform(0.02, 0.1)
    env = np.maximum(env, 0.1)
    x = voiced * env + 1e-3 * rng.standard_normal(n)
    return (0.5 * x / np.max(np.abs(x))).astype(np.float32)


def write(path, fs, x):
    wavfile.write(path, fs, x.astype(np.float32))
    return wavfile.read(path)[1].astype(np.float64)


def main(out_dir):
    from pystoi import stoi

    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(20240611)
    for fs in (16000, 10000):
        clean = speech_like(fs, 3.0, rng)
        noise = rng.standard_normal(clean.size).astype(np.float32)
        noise *= np.sqrt(np.mean(clean.astype(np.float64) ** 2) / np.mean(noise.astype(np.float64) ** 2))
        noisy = clean + noise
        noisy = (noisy / max(1.0, np.max(np.abs(noisy)) / 0.95)).astype(np.float32)
        white = (0.3 * rng.standard_normal(clean.size)).clip(-0.95, 0.95).astype(np.float32)
        tag = f"{fs // 1000}k"
        x = write(out / f"stoi_clean_{tag}.wav", fs, clean)
        y = write(out / f"stoi_noisy_{tag}.wav", fs, noisy)
        w = write(out / f"stoi_white_{tag}.wav", fs, white)
        print(f"{tag} noisy {stoi(x, y, fs):.10f}")
        print(f"{tag} white {stoi(x, w, fs):.10f}")
        print(f"{tag} self  {stoi(x, x, fs):.10f}")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "tests/data")
