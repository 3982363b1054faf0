"""Two-stage multichannel enhancement pipeline.

Stage I: a MIMO CRN sees the real and imaginary planes of all P mixture
channels (2P input channels, reals first) and emits a complex ratio mask
per channel; masked mixtures are the per-channel first-stage estimates.

Spatial filter: each frequency band is treated independently. The band's
P first-stage estimates form a (T, 2P) real/imag feature that is layer
normalized, run through a shared 2-layer bidirectional LSTM (hidden 64
per direction), and projected to the band's (T, 2) filtered real/imag
output. One parameter set serves every band; bands ride the batch axis.

Stage II: a MISO CRN takes the spatial filter output plus the reference
mixture channel (4 input channels) and directly maps to the clean
spectrogram estimate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import layers as L
from .crn import CrnConfig, CrnParams, crn_forward, init_crn_params
from .dsp import (
    FFT_SIZE,
    FRAME_SIZE,
    HOP_SIZE,
    SAMPLE_RATE,
    Spectrogram,
    TimeSignal,
    istft,
    stft,
)
from .tensor import Tensor, concat, no_grad

SPATIAL_HIDDEN = 64
SPATIAL_LAYERS = 2

# A Stage-I result is just a P-channel spectrogram of per-channel estimates.
StageOneOutput = Spectrogram


@dataclass
class StftSettings:
    frame_size: int = FRAME_SIZE
    hop: int = HOP_SIZE
    fft_size: int = FFT_SIZE
    sample_rate: int = SAMPLE_RATE


@dataclass
class TwoStageModel:
    p_channels: int
    stage1: CrnParams
    spatial: dict
    stage2: CrnParams
    stft: StftSettings = field(default_factory=StftSettings)

    def named_params(self) -> dict:
        out = {}
        for name, t in self.stage1.params.items():
            out[f"stage1.{name}"] = t
        for name, t in self.spatial.items():
            out[f"spatial.{name}"] = t
        for name, t in self.stage2.params.items():
            out[f"stage2.{name}"] = t
        return out

    def named_buffers(self) -> dict:
        out = {}
        for name, b in self.stage1.buffers.items():
            out[f"stage1.{name}"] = b
        for name, b in self.stage2.buffers.items():
            out[f"stage2.{name}"] = b
        return out

    def stage_params(self, stage: str) -> dict:
        if stage == "stage1":
            return {f"stage1.{k}": v for k, v in self.stage1.params.items()}
        if stage == "stage2":
            out = {f"spatial.{k}": v for k, v in self.spatial.items()}
            out.update({f"stage2.{k}": v for k, v in self.stage2.params.items()})
            return out
        if stage == "joint":
            return self.named_params()
        raise ValueError(f"unknown stage {stage!r}")


def init_spatial_params(p_channels: int, rng: np.random.Generator, dtype=np.float32) -> dict:
    feat = 2 * p_channels
    params = {
        "ln.gamma": L.full_param((feat,), 1.0, dtype),
        "ln.beta": L.zeros_param((feat,), dtype),
    }
    params.update(
        L.init_lstm_params(
            rng, feat, SPATIAL_HIDDEN, SPATIAL_LAYERS, bidirectional=True,
            dtype=dtype, prefix="lstm",
        )
    )
    params["fc.w"] = L.uniform_param(rng, (2, 2 * SPATIAL_HIDDEN), 2 * SPATIAL_HIDDEN, dtype)
    params["fc.b"] = L.zeros_param((2,), dtype)
    return params


def init_two_stage_model(
    p_channels: int,
    width_scale=Fraction(1),
    freq_bins: int = 256,
    seed: int = 0,
    dtype=np.float32,
) -> TwoStageModel:
    if p_channels < 1:
        raise ValueError("p_channels must be at least 1")
    rng = np.random.default_rng(seed)
    stage1_cfg = CrnConfig(
        c_in=2 * p_channels, c_out=2 * p_channels,
        width_scale=width_scale, freq_bins=freq_bins, decoder_mode="mask",
    )
    stage2_cfg = CrnConfig(
        c_in=4, c_out=2, width_scale=width_scale, freq_bins=freq_bins, decoder_mode="map",
    )
    return TwoStageModel(
        p_channels=p_channels,
        stage1=init_crn_params(stage1_cfg, rng, dtype),
        spatial=init_spatial_params(p_channels, rng, dtype),
        stage2=init_crn_params(stage2_cfg, rng, dtype),
    )


# -- tensor-level forward passes (shared by training and inference) ---------------


def _check_spec(model: TwoStageModel, y: Spectrogram):
    if y.channels != model.p_channels:
        raise ValueError(f"model expects {model.p_channels} channels, got {y.channels}")
    if y.bins != model.stage1.config.freq_bins:
        raise ValueError(
            f"model expects {model.stage1.config.freq_bins} bins, got {y.bins}"
        )


def stage1_tensors(y_re, y_im, model: TwoStageModel, training: bool = False):
    """y_re/y_im: (P, T, F) arrays or Tensors. Returns masked-estimate
    tensors (s1_re, s1_im), each (P, T, F)."""
    y_re = y_re if isinstance(y_re, Tensor) else Tensor(np.asarray(y_re, dtype=np.float32))
    y_im = y_im if isinstance(y_im, Tensor) else Tensor(np.asarray(y_im, dtype=np.float32))
    feat = concat([y_re, y_im], axis=0)
    m_re, m_im = crn_forward(feat, model.stage1, training=training)
    s_re = m_re * y_re - m_im * y_im
    s_im = m_re * y_im + m_im * y_re
    return s_re, s_im


def spatial_tensors(s1_re, s1_im, model: TwoStageModel):
    """First-stage estimates (P, T, F) -> single-channel filtered (T, F) pair.

    Bands are stacked on the batch axis of the shared LSTM, so permuting
    input bands permutes output bands identically.
    """
    p = model.spatial
    # (P, T, F) -> (F, T, P), then features (F, T, 2P), reals first
    xr = s1_re.transpose(2, 1, 0)
    xi = s1_im.transpose(2, 1, 0)
    x = concat([xr, xi], axis=2)
    x = L.layernorm(x, p["ln.gamma"], p["ln.beta"])
    h = L.lstm_seq(x, p, SPATIAL_HIDDEN, SPATIAL_LAYERS, bidirectional=True)
    out = L.linear(h, p["fc.w"], p["fc.b"])  # (F, T, 2)
    f_re = out[:, :, 0].transpose(1, 0)
    f_im = out[:, :, 1].transpose(1, 0)
    return f_re, f_im


def stage2_tensors(f_re, f_im, y0_re, y0_im, model: TwoStageModel, training: bool = False):
    """Spatial-filter output (T, F) plus mixture reference channel (T, F) ->
    final estimate tensors (T, F) pair."""
    y0_re = y0_re if isinstance(y0_re, Tensor) else Tensor(np.asarray(y0_re, dtype=np.float32))
    y0_im = y0_im if isinstance(y0_im, Tensor) else Tensor(np.asarray(y0_im, dtype=np.float32))
    t_len, f_bins = f_re.shape
    stackable = [
        f_re.reshape(1, t_len, f_bins),
        y0_re.reshape(1, t_len, f_bins),
        f_im.reshape(1, t_len, f_bins),
        y0_im.reshape(1, t_len, f_bins),
    ]
    feat = concat(stackable, axis=0)  # reals first, then imaginaries
    e_re, e_im = crn_forward(feat, model.stage2, training=training)
    return e_re[0], e_im[0]


def two_stage_tensors(y_re, y_im, model: TwoStageModel, training: bool = False):
    s_re, s_im = stage1_tensors(y_re, y_im, model, training)
    f_re, f_im = spatial_tensors(s_re, s_im, model)
    y0_re = np.asarray(y_re if not isinstance(y_re, Tensor) else y_re.data)[0]
    y0_im = np.asarray(y_im if not isinstance(y_im, Tensor) else y_im.data)[0]
    return stage2_tensors(f_re, f_im, y0_re, y0_im, model, training)


# -- spectrogram-level public API ---------------------------------------------------


def stage1_mimo(y: Spectrogram, model: TwoStageModel) -> StageOneOutput:
    """Per-channel first-stage estimates of the clean reverberant image."""
    _check_spec(model, y)
    with no_grad():
        s_re, s_im = stage1_tensors(y.re, y.im, model, training=False)
    return y.like(s_re.data.astype(np.float64), s_im.data.astype(np.float64))


def spatial_filter(s1: StageOneOutput, model: TwoStageModel) -> Spectrogram:
    """Collapse P first-stage channels to one with the band-shared filter."""
    _check_spec(model, s1)
    with no_grad():
        f_re, f_im = spatial_tensors(
            Tensor(np.asarray(s1.re, dtype=np.float32)),
            Tensor(np.asarray(s1.im, dtype=np.float32)),
            model,
        )
    return s1.like(f_re.data[None].astype(np.float64), f_im.data[None].astype(np.float64))


def stage2_miso(filtered: Spectrogram, y_ref: Spectrogram, model: TwoStageModel) -> Spectrogram:
    """Final single-channel estimate from the filtered signal and the
    reference mixture channel."""
    if filtered.channels != 1 or y_ref.channels != 1:
        raise ValueError("stage2_miso expects single-channel spectrograms")
    if filtered.re.shape != y_ref.re.shape:
        raise ValueError("filtered/reference shape mismatch")
    with no_grad():
        e_re, e_im = stage2_tensors(
            Tensor(np.asarray(filtered.re[0], dtype=np.float32)),
            Tensor(np.asarray(filtered.im[0], dtype=np.float32)),
            y_ref.re[0], y_ref.im[0], model, training=False,
        )
    return filtered.like(e_re.data[None].astype(np.float64), e_im.data[None].astype(np.float64))


def enhance(x: TimeSignal, model: TwoStageModel) -> TimeSignal:
    """Full pipeline: multichannel waveform in, single-channel waveform out
    (same length, same sample rate)."""
    if x.channels != model.p_channels:
        raise ValueError(f"model expects {model.p_channels} channels, got {x.channels}")
    if x.sample_rate != model.stft.sample_rate:
        raise ValueError(
            f"model operates at {model.stft.sample_rate} Hz, got {x.sample_rate} Hz"
        )
    s = model.stft
    y = stft(x, s.frame_size, s.hop, s.fft_size)
    with no_grad():
        e_re, e_im = two_stage_tensors(y.re, y.im, model, training=False)
    est = y.like(e_re.data[None].astype(np.float64), e_im.data[None].astype(np.float64))
    return istft(est, length=x.length)
