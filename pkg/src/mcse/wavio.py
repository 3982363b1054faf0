"""Multichannel WAV read/write (PCM 16-bit and 32-bit float)."""

from __future__ import annotations

import numpy as np
from scipy.io import wavfile

from .dsp import TimeSignal


def write_wav(path, signal: TimeSignal, encoding: str = "float32"):
    """Write channels-first samples to a WAV file.

    float32 keeps samples bit-exact; pcm16 scales [-1, 1) to int16 with
    clipping.
    """
    data = np.asarray(signal.samples, dtype=np.float64).T  # (L, C) for the container
    if encoding == "float32":
        wavfile.write(path, signal.sample_rate, data.astype(np.float32))
    elif encoding == "pcm16":
        clipped = np.clip(data, -1.0, 32767.0 / 32768.0)
        wavfile.write(path, signal.sample_rate, np.round(clipped * 32768.0).astype(np.int16))
    else:
        raise ValueError(f"unknown encoding {encoding!r}; use 'float32' or 'pcm16'")


def read_wav(path) -> TimeSignal:
    """Read a WAV file into float64 channels-first samples. PCM is scaled
    to [-1, 1); float data is passed through."""
    rate, data = wavfile.read(path)
    data = np.atleast_2d(data)
    if data.shape[0] != 1:
        data = data.T  # (C, L)
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        samples = data.astype(np.float64) / 2147483648.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    elif data.dtype == np.uint8:
        samples = (data.astype(np.float64) - 128.0) / 128.0
    else:
        raise ValueError(f"unsupported WAV sample format {data.dtype}")
    return TimeSignal(samples, rate)
