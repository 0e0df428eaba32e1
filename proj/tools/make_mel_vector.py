#!/usr/bin/env python3
"""Writes the white-noise pair used by the multi-scale mel loss cross-check and
prints the loss computed with librosa's filterbank and STFT."""
import pathlib
import sys

import librosa
import numpy as np
from scipy.io import wavfile

WINDOWS = [32, 64, 128, 256, 512, 1024, 2048]
BINS = [5, 10, 20, 40, 80, 160, 320]


def log_mel(x, n_fft, n_mels):
    fb = librosa.filters.mel(sr=16000, n_fft=n_fft, n_mels=n_mels, fmin=0.0, fmax=8000.0, htk=False, norm="slaney")
    spec = np.abs(librosa.stft(x, n_fft=n_fft, hop_length=n_fft // 4, win_length=n_fft, window="hann",
                               center=True, pad_mode="reflect"))
    return np.log10(np.maximum(fb @ spec, 1e-5))


def main(out_dir):
    out = pathlib.Path(out_dir)
    rng = np.random.default_rng(13)
    pair = (0.3 * rng.standard_normal((2, 4000))).clip(-0.99, 0.99).astype(np.float32)
    wavfile.write(out / "mel_noise_x.wav", 16000, pair[0])
    wavfile.write(out / "mel_noise_y.wav", 16000, pair[1])
    x = wavfile.read(out / "mel_noise_x.wav")[1].astype(np.float64)
    y = wavfile.read(out / "mel_noise_y.wav")[1].astype(np.float64)
    loss = np.mean([np.mean(np.abs(log_mel(x, w, b) - log_mel(y, w, b))) for w, b in zip(WINDOWS, BINS)])
    print(f"mel loss {loss:.12f}")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "tests/data")
