"""WAV loading and the log-mel spectrogram frontend for the acoustic embedder.

The frontend follows the AudioSet recipe: 16 kHz mono input, 25 ms Hann
windows hopped every 10 ms, a 64-band mel filterbank spanning 125-7500 Hz,
log compression with a small offset, and non-overlapping examples of 96
frames (0.96 s) each.  Everything is plain numpy so the only model weights
involved live in the embedder checkpoint.
"""

from __future__ import annotations

import wave
from pathlib import Path

import numpy as np

from . import ExtractorError

SAMPLE_RATE = 16000
WINDOW_SECONDS = 0.025
HOP_SECONDS = 0.010
N_FFT = 512
N_MELS = 64
MEL_MIN_HZ = 125.0
MEL_MAX_HZ = 7500.0
LOG_OFFSET = 0.01
EXAMPLE_FRAMES = 96

# log-mel value of digital silence; used to pad short utterances
SILENCE_LOG_MEL = float(np.log(LOG_OFFSET))


def read_wav(path) -> tuple[np.ndarray, int]:
    """Read a PCM WAV file as (mono float64 waveform in [-1, 1], sample rate).

    Stereo files are averaged down to mono.  Only 16-bit PCM is accepted;
    anything unreadable raises ExtractorError.
    """
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as fh:
            n_channels = fh.getnchannels()
            sampwidth = fh.getsampwidth()
            rate = fh.getframerate()
            n_frames = fh.getnframes()
            raw = fh.readframes(n_frames)
    except (OSError, wave.Error, EOFError) as exc:
        raise ExtractorError(f"unreadable audio {path}: {exc}") from None
    if sampwidth != 2:
        raise ExtractorError(f"{path}: only 16-bit PCM supported, got {8 * sampwidth}-bit")
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    if n_channels > 1:
        samples = samples.reshape(-1, n_channels).mean(axis=1)
    return samples, rate


def resample(x: np.ndarray, rate_in: int, rate_out: int = SAMPLE_RATE) -> np.ndarray:
    """Linear-interpolation resampling; identity when the rates match."""
    if rate_in == rate_out:
        return x
    if rate_in <= 0 or rate_out <= 0:
        raise ExtractorError(f"bad sample rate {rate_in} -> {rate_out}")
    if x.size == 0:
        return x
    n_out = max(1, int(round(x.size * rate_out / rate_in)))
    t_out = np.arange(n_out) * (rate_in / rate_out)
    return np.interp(t_out, np.arange(x.size), x)


def _hann(n: int) -> np.ndarray:
    # periodic Hann, the STFT convention
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def frame_signal(x: np.ndarray, window: int, hop: int) -> np.ndarray:
    """Slice x into overlapping frames of `window` samples; (n_frames, window)."""
    if x.size < window:
        return np.empty((0, window))
    n_frames = 1 + (x.size - window) // hop
    idx = np.arange(window)[None, :] + hop * np.arange(n_frames)[:, None]
    return x[idx]


def mel_filterbank(
    n_mels: int = N_MELS,
    n_fft: int = N_FFT,
    rate: int = SAMPLE_RATE,
    fmin: float = MEL_MIN_HZ,
    fmax: float = MEL_MAX_HZ,
) -> np.ndarray:
    """Triangular mel filterbank, (n_fft // 2 + 1, n_mels)."""

    def to_mel(hz):
        return 1127.0 * np.log1p(np.asarray(hz, dtype=np.float64) / 700.0)

    bin_hz = np.fft.rfftfreq(n_fft, d=1.0 / rate)
    bin_mel = to_mel(bin_hz)
    edges = np.linspace(to_mel(fmin), to_mel(fmax), n_mels + 2)
    bank = np.zeros((bin_hz.size, n_mels))
    for m in range(n_mels):
        lo, center, hi = edges[m], edges[m + 1], edges[m + 2]
        up = (bin_mel - lo) / (center - lo)
        down = (hi - bin_mel) / (hi - center)
        bank[:, m] = np.maximum(0.0, np.minimum(up, down))
    return bank


def log_mel_spectrogram(x: np.ndarray, rate: int = SAMPLE_RATE) -> np.ndarray:
    """Log-mel features for a 16 kHz waveform; (n_frames, N_MELS).

    Inputs at other rates are resampled first.  Signals shorter than one
    window yield zero frames; example batching pads those.
    """
    x = resample(np.asarray(x, dtype=np.float64), rate)
    window = int(round(WINDOW_SECONDS * SAMPLE_RATE))
    hop = int(round(HOP_SECONDS * SAMPLE_RATE))
    frames = frame_signal(x, window, hop)
    if frames.shape[0] == 0:
        return np.empty((0, N_MELS))
    spectrum = np.abs(np.fft.rfft(frames * _hann(window), n=N_FFT, axis=1))
    return np.log(spectrum @ mel_filterbank() + LOG_OFFSET)


def examples_from_log_mel(mel: np.ndarray) -> np.ndarray:
    """Batch a log-mel matrix into (n_examples, EXAMPLE_FRAMES, N_MELS).

    Full examples are taken without overlap and any tail shorter than one
    example is dropped, except that inputs below one example are padded with
    the silence log-mel value so every utterance yields at least one example.
    """
    n_frames = mel.shape[0]
    if n_frames < EXAMPLE_FRAMES:
        pad = np.full((EXAMPLE_FRAMES - n_frames, N_MELS), SILENCE_LOG_MEL)
        mel = np.concatenate([mel, pad], axis=0) if n_frames else pad
        n_frames = EXAMPLE_FRAMES
    n_examples = n_frames // EXAMPLE_FRAMES
    return mel[: n_examples * EXAMPLE_FRAMES].reshape(n_examples, EXAMPLE_FRAMES, N_MELS)


def waveform_examples(x: np.ndarray, rate: int) -> np.ndarray:
    """Waveform straight to batched log-mel examples."""
    return examples_from_log_mel(log_mel_spectrogram(x, rate))
