"""Convolutional recurrent network for spectrogram-to-spectrogram mapping.

Encoder: six conv blocks (conv + batchnorm + PReLU), kernel (1, 3),
stride (1, 2), so only the frequency axis is downsampled: 256 -> 128 ->
64 -> 32 -> 16 -> 8 -> 4 at the default width. The bottleneck flattens
(C6, T, F_b) to a (T, C6*F_b) sequence for a 2-layer bidirectional LSTM
whose output width equals its input width, then reshapes back. Two
mirrored deconv decoders (one for the real plane, one for the imaginary)
consume skip connections from the encoder, concatenated on the channel
axis; the last block takes no skip and restores the full frequency axis.

All channel counts scale by a rational width multiplier so the same
topology runs desk-sized.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import layers as L
from .tensor import Tensor, concat

BASE_CHANNELS = (16, 32, 64, 128, 256, 256)
KERNEL = (1, 3)
STRIDE = (1, 2)
PADDING = (0, 1)
OUTPUT_PADDING = (0, 1)
LSTM_LAYERS = 2
ENCODER_DEPTH = 6


@dataclass
class CrnConfig:
    c_in: int
    c_out: int
    width_scale: Fraction = Fraction(1)
    freq_bins: int = 256
    decoder_mode: str = "mask"  # "mask": output multiplies the input; "map": direct estimate
    dual_decoder: bool = True

    def __post_init__(self):
        self.width_scale = Fraction(self.width_scale)
        if self.c_in <= 0 or self.c_out <= 0:
            raise ValueError("channel counts must be positive")
        if self.decoder_mode not in ("mask", "map"):
            raise ValueError(f"unknown decoder_mode {self.decoder_mode!r}")
        if self.dual_decoder and self.c_out % 2 != 0:
            raise ValueError("dual-decoder c_out is the total over both branches and must be even")
        if self.freq_bins % (1 << ENCODER_DEPTH) != 0:
            raise ValueError(f"freq_bins must be divisible by {1 << ENCODER_DEPTH}")
        for base in BASE_CHANNELS:
            scaled = base * self.width_scale
            if scaled.denominator != 1 or scaled <= 0:
                raise ValueError(
                    f"width_scale {self.width_scale} does not yield integer channels for base {base}"
                )
        if self.lstm_input % 2 != 0:
            raise ValueError("bottleneck width must be even to split across LSTM directions")

    @property
    def ladder(self) -> tuple:
        return tuple(int(b * self.width_scale) for b in BASE_CHANNELS)

    @property
    def f_bottleneck(self) -> int:
        return self.freq_bins >> ENCODER_DEPTH

    @property
    def lstm_input(self) -> int:
        return self.ladder[-1] * self.f_bottleneck

    @property
    def lstm_hidden(self) -> int:
        # per direction; the bidirectional output then matches lstm_input
        # (512 per direction at width 1 with 256 bins)
        return self.lstm_input // 2

    @property
    def branch_out(self) -> int:
        return self.c_out // 2 if self.dual_decoder else self.c_out

    def decoder_in_channels(self) -> tuple:
        """Per-block decoder input channels (skip concatenation included)."""
        ladder = self.ladder
        ins = [2 * ladder[5]]
        for i in range(4, 0, -1):
            ins.append(2 * ladder[i])
        ins.append(ladder[0])  # last block takes no skip
        return tuple(ins)

    def decoder_out_channels(self) -> tuple:
        ladder = self.ladder
        return tuple(list(ladder[4::-1]) + [self.branch_out])


@dataclass
class CrnParams:
    """Named parameter tensors plus non-trainable batchnorm buffers."""

    config: CrnConfig
    params: dict = field(default_factory=dict)
    buffers: dict = field(default_factory=dict)

    def trainable(self) -> dict:
        return self.params


def _init_block(params, buffers, rng, name, w_shape, fan_in, out_ch, dtype):
    params[f"{name}.w"] = L.uniform_param(rng, w_shape, fan_in, dtype)
    params[f"{name}.b"] = L.zeros_param((out_ch,), dtype)
    params[f"{name}.bn.gamma"] = L.full_param((out_ch,), 1.0, dtype)
    params[f"{name}.bn.beta"] = L.zeros_param((out_ch,), dtype)
    params[f"{name}.prelu.a"] = L.full_param((out_ch,), 0.25, dtype)
    buffers[f"{name}.bn.mean"] = np.zeros(out_ch, dtype=dtype)
    buffers[f"{name}.bn.var"] = np.ones(out_ch, dtype=dtype)


def init_crn_params(config: CrnConfig, rng: np.random.Generator, dtype=np.float32) -> CrnParams:
    params: dict = {}
    buffers: dict = {}
    ladder = config.ladder
    kt, kf = KERNEL

    c_prev = config.c_in
    for i, c in enumerate(ladder):
        _init_block(
            params, buffers, rng, f"enc{i}", (c, c_prev, kt, kf), c_prev * kt * kf, c, dtype
        )
        c_prev = c

    params.update(
        L.init_lstm_params(
            rng, config.lstm_input, config.lstm_hidden, LSTM_LAYERS,
            bidirectional=True, dtype=dtype, prefix="lstm",
        )
    )

    branches = ("dec_re", "dec_im") if config.dual_decoder else ("dec",)
    ins = config.decoder_in_channels()
    outs = config.decoder_out_channels()
    for branch in branches:
        for i, (ci, co) in enumerate(zip(ins, outs)):
            _init_block(
                params, buffers, rng, f"{branch}{i}", (ci, co, kt, kf), ci * kt * kf, co, dtype
            )
    return CrnParams(config, params, buffers)


def _conv_block(x, p: CrnParams, name: str, training: bool):
    h = L.conv2d(x, p.params[f"{name}.w"], p.params[f"{name}.b"], STRIDE, PADDING)
    h = L.batchnorm2d(
        h, p.params[f"{name}.bn.gamma"], p.params[f"{name}.bn.beta"],
        p.buffers[f"{name}.bn.mean"], p.buffers[f"{name}.bn.var"], training,
    )
    return L.prelu(h, p.params[f"{name}.prelu.a"])


def _deconv_block(x, p: CrnParams, name: str, training: bool):
    h = L.deconv2d(x, p.params[f"{name}.w"], p.params[f"{name}.b"], STRIDE, PADDING, OUTPUT_PADDING)
    h = L.batchnorm2d(
        h, p.params[f"{name}.bn.gamma"], p.params[f"{name}.bn.beta"],
        p.buffers[f"{name}.bn.mean"], p.buffers[f"{name}.bn.var"], training,
    )
    return L.prelu(h, p.params[f"{name}.prelu.a"])


def crn_forward(x, p: CrnParams, training: bool = False, trace: list | None = None):
    """Run the CRN on x: Tensor or array (C_in, T, freq_bins).

    Returns a (re, im) pair of (branch_out, T, freq_bins) tensors. With
    dual_decoder=False the single branch's output is returned for both
    positions split down the channel axis.
    """
    cfg = p.config
    if not isinstance(x, Tensor):
        x = Tensor(x)
    if x.ndim != 3 or x.shape[0] != cfg.c_in or x.shape[2] != cfg.freq_bins:
        raise ValueError(
            f"crn_forward expects ({cfg.c_in}, T, {cfg.freq_bins}) input, got {x.shape}"
        )
    t_len = x.shape[1]
    if t_len == 0:
        raise ValueError("empty time axis")

    def note(tag, tensor):
        if trace is not None:
            trace.append((tag, tuple(tensor.shape)))

    note("input", x)
    skips = []
    h = x
    for i in range(ENCODER_DEPTH):
        h = _conv_block(h, p, f"enc{i}", training)
        note(f"enc{i}", h)
        skips.append(h)

    c6 = cfg.ladder[-1]
    fb = cfg.f_bottleneck
    seq = h.transpose(1, 0, 2).reshape(t_len, c6 * fb)
    note("lstm_in", seq)
    seq = L.lstm_seq(seq, p.params, cfg.lstm_hidden, LSTM_LAYERS, bidirectional=True)
    note("lstm_out", seq)
    h = seq.reshape(t_len, c6, fb).transpose(1, 0, 2)

    branches = ("dec_re", "dec_im") if cfg.dual_decoder else ("dec",)
    outs = []
    for branch in branches:
        d = h
        for i in range(ENCODER_DEPTH):
            if i < ENCODER_DEPTH - 1:
                d = concat([d, skips[ENCODER_DEPTH - 1 - i]], axis=0)
            d = _deconv_block(d, p, f"{branch}{i}", training)
            note(f"{branch}{i}", d)
        outs.append(d)

    if cfg.dual_decoder:
        return outs[0], outs[1]
    half = cfg.c_out // 2
    return outs[0][:half], outs[0][half:]
