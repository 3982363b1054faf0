"""Classical multichannel baselines: delay-and-sum, WPE dereverberation,
mask-driven MVDR beamforming, and a learned filter-and-sum front end.

All four consume and produce Spectrograms. WPE and MVDR work per
frequency band on the (T, P) matrix of that band's frames.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .crn import CrnConfig, CrnParams, crn_forward, init_crn_params
from .dsp import Spectrogram, TimeSignal, istft, shift_fractional, stft
from .tensor import Tensor, concat, no_grad

WPE_TAPS = 10
WPE_DELAY = 3
WPE_ITERATIONS = 3
WPE_VARIANCE_FLOOR = 1e-10
MVDR_LOADING = 1e-6
MVDR_FORGETTING = 0.98


# -- delay and sum ------------------------------------------------------------------


def delay_and_sum(y: Spectrogram, delays) -> Spectrogram:
    """Average the channels after removing per-channel delays (in samples,
    fractional allowed). Alignment runs in the time domain, where a
    fractional shift is exact for band-limited content; per-frame phase
    ramps would wrap inside the analysis window."""
    delays = np.asarray(delays, dtype=np.float64)
    if delays.shape != (y.channels,):
        raise ValueError(f"need one delay per channel, got {delays.shape} for {y.channels}")
    length = (y.frames - 1) * y.hop + y.frame_size
    time = istft(y, length=length)
    acc = np.zeros(length)
    for p in range(y.channels):
        acc += shift_fractional(time.samples[p], -delays[p])
    acc /= y.channels
    return stft(TimeSignal(acc[None, :], y.sample_rate), y.frame_size, y.hop, y.fft_size)


def geometry_delays(mic_positions: np.ndarray, source_position, sample_rate: int,
                    speed_of_sound: float = 343.0) -> np.ndarray:
    """Direct-path delays in samples, offset so the earliest channel is 0."""
    mics = np.asarray(mic_positions, dtype=np.float64)
    src = np.asarray(source_position, dtype=np.float64)
    dist = np.linalg.norm(mics - src[None, :], axis=1)
    delays = dist / speed_of_sound * sample_rate
    return delays - delays.min()


# -- weighted prediction error dereverberation -----------------------------------------


def wpe(
    y: Spectrogram,
    taps: int = WPE_TAPS,
    delay: int = WPE_DELAY,
    iterations: int = WPE_ITERATIONS,
    variance_floor: float = WPE_VARIANCE_FLOOR,
) -> Spectrogram:
    """Multichannel linear-prediction dereverberation, one predictor per
    frequency band. taps=0 returns the input unchanged.

    Each iteration re-estimates the time-varying source variance from the
    current estimate (floored), solves the variance-weighted normal
    equations for the prediction filters, and subtracts the prediction.
    Singular normal equations fall back to increased diagonal loading with
    a warning.
    """
    if taps < 0 or delay < 1 or iterations < 1:
        raise ValueError("need taps >= 0, delay >= 1, iterations >= 1")
    if taps == 0:
        return y.like(y.re.copy(), y.im.copy())
    z = y.to_complex()  # (P, T, F)
    p, t_len, f_bins = z.shape
    if t_len <= delay + taps:
        raise ValueError("utterance too short for the requested taps and delay")
    out = z.copy()
    kp = taps * p

    for f in range(f_bins):
        yf = z[:, :, f].T  # (T, P)
        # stacked delayed context for each frame: (T, taps*P)
        ctx = np.zeros((t_len, kp), dtype=np.complex128)
        for k in range(taps):
            shift = delay + k
            ctx[shift:, k * p : (k + 1) * p] = yf[: t_len - shift, :]
        xf = yf.copy()
        for _ in range(iterations):
            lam = np.maximum(np.mean(np.abs(xf) ** 2, axis=1), variance_floor)
            cw = ctx / lam[:, None]
            r = cw.conj().T @ ctx  # (KP, KP)
            pmat = cw.conj().T @ yf  # (KP, P)
            g = _solve_loaded(r, pmat, f)
            xf = yf - ctx @ g
        out[:, :, f] = xf.T
    return y.like(out.real.copy(), out.imag.copy())


def _solve_loaded(r: np.ndarray, rhs: np.ndarray, band: int) -> np.ndarray:
    import warnings

    base = max(np.trace(r).real / max(r.shape[0], 1), 1.0)
    load = 1e-10 * base
    eye = np.eye(r.shape[0])
    for attempt in range(7):
        try:
            return np.linalg.solve(r + load * eye, rhs)
        except np.linalg.LinAlgError:
            if attempt == 0:
                warnings.warn(
                    f"WPE normal equations singular at band {band}; increasing diagonal loading"
                )
            load *= 1e3
    raise np.linalg.LinAlgError(f"WPE normal equations unsolvable at band {band}")


# -- mask-driven MVDR ----------------------------------------------------------------------


@dataclass
class CovarianceEstimate:
    """Running per-band speech/noise spatial covariances, (F, P, P) complex
    Hermitian. mode 'block' accumulates whole utterances; mode 'frame'
    applies an exponential forgetting update per frame."""

    speech: np.ndarray
    noise: np.ndarray
    mode: str = "block"
    forgetting: float = MVDR_FORGETTING

    @classmethod
    def empty(cls, f_bins: int, p: int, mode: str = "block",
              forgetting: float = MVDR_FORGETTING) -> "CovarianceEstimate":
        if mode not in ("block", "frame"):
            raise ValueError(f"mode must be 'block' or 'frame', got {mode!r}")
        if not 0.0 < forgetting < 1.0:
            raise ValueError("forgetting factor must lie in (0, 1)")
        eye = np.tile(np.eye(p, dtype=np.complex128)[None], (f_bins, 1, 1))
        return cls(eye * 1e-8, eye * 1e-8, mode, forgetting)

    def update(self, y_frame: np.ndarray, speech_mask: np.ndarray, noise_mask: np.ndarray):
        """Frame-recursive update. y_frame: (F, P); masks: (F,) in [0, 1]."""
        if self.mode != "frame":
            raise ValueError("update() only applies in 'frame' mode")
        outer = y_frame[:, :, None] * y_frame[:, None, :].conj()
        lam = self.forgetting
        self.speech *= lam
        self.speech += (1.0 - lam) * speech_mask[:, None, None] * outer
        self.noise *= lam
        self.noise += (1.0 - lam) * noise_mask[:, None, None] * outer

    @classmethod
    def block(cls, z: np.ndarray, speech_mask: np.ndarray, noise_mask: np.ndarray) -> "CovarianceEstimate":
        """Utterance-level mask-weighted covariances. z: (P, T, F) complex;
        masks: (T, F)."""
        zf = np.transpose(z, (2, 1, 0))  # (F, T, P)
        ws = speech_mask.T[:, :, None]  # (F, T, 1)
        wn = noise_mask.T[:, :, None]
        denom_s = np.maximum(speech_mask.sum(axis=0), 1e-10)[:, None, None]
        denom_n = np.maximum(noise_mask.sum(axis=0), 1e-10)[:, None, None]
        cs = np.einsum("ftp,ftq->fpq", ws * zf, zf.conj()) / denom_s
        cn = np.einsum("ftp,ftq->fpq", wn * zf, zf.conj()) / denom_n
        return cls(cs, cn, "block")


def steering_from_covariance(speech_cov: np.ndarray) -> np.ndarray:
    """Principal eigenvector per band, phase-normalized to channel 0."""
    vals, vecs = np.linalg.eigh(speech_cov)
    d = vecs[..., -1]  # eigenvector of the largest eigenvalue
    phase = np.exp(-1j * np.angle(d[..., [0]]))
    return d * phase


def _mvdr_weights(noise_cov: np.ndarray, d: np.ndarray, loading: float) -> np.ndarray:
    """w = Rn^-1 d / (d^H Rn^-1 d) per band, with relative diagonal loading."""
    p = noise_cov.shape[-1]
    tr = np.trace(noise_cov, axis1=-2, axis2=-1).real / p
    eye = np.eye(p)
    rn = noise_cov + loading * np.maximum(tr, 1e-30)[..., None, None] * eye
    num = np.linalg.solve(rn, d[..., None])[..., 0]
    den = np.einsum("...p,...p->...", d.conj(), num)
    return num / den[..., None]


def mask_mvdr(
    y: Spectrogram,
    speech_mask: np.ndarray,
    noise_mask: np.ndarray,
    mode: str = "block",
    forgetting: float = MVDR_FORGETTING,
    loading: float = MVDR_LOADING,
) -> Spectrogram:
    """Minimum-variance distortionless-response beamforming with
    mask-weighted covariances. Masks are (T, F) values in [0, 1];
    steering is the principal eigenvector of the speech covariance,
    so the distortionless constraint w^H d = 1 holds by construction.
    """
    speech_mask = np.asarray(speech_mask, dtype=np.float64)
    noise_mask = np.asarray(noise_mask, dtype=np.float64)
    expected = (y.frames, y.bins)
    if speech_mask.shape != expected or noise_mask.shape != expected:
        raise ValueError(f"masks must be (T, F) = {expected}")
    for name, m in (("speech", speech_mask), ("noise", noise_mask)):
        if m.min() < 0.0 or m.max() > 1.0:
            raise ValueError(f"{name} mask must lie in [0, 1]")
        if m.sum() == 0.0:
            raise ValueError(f"{name} mask is all zero; covariance undefined")
    z = y.to_complex()  # (P, T, F)
    p, t_len, f_bins = z.shape

    if mode == "block":
        cov = CovarianceEstimate.block(z, speech_mask, noise_mask)
        d = steering_from_covariance(cov.speech)
        w = _mvdr_weights(cov.noise, d, loading)  # (F, P)
        out = np.einsum("fp,ptf->tf", w.conj(), z)
    elif mode == "frame":
        cov = CovarianceEstimate.empty(f_bins, p, "frame", forgetting)
        out = np.empty((t_len, f_bins), dtype=np.complex128)
        for t in range(t_len):
            cov.update(z[:, t, :].T, speech_mask[t], noise_mask[t])
            d = steering_from_covariance(cov.speech)
            w = _mvdr_weights(cov.noise, d, loading)
            out[t] = np.einsum("fp,fp->f", w.conj(), z[:, t, :].T)
    else:
        raise ValueError(f"mode must be 'block' or 'frame', got {mode!r}")
    return y.like(out.real[None].copy(), out.imag[None].copy())


def oracle_masks(clean: Spectrogram, interference: Spectrogram):
    """Magnitude-ratio masks from rendered components, averaged over
    channels: speech_mask = |S|^2 / (|S|^2 + |N|^2)."""
    es = (clean.magnitude() ** 2).mean(axis=0)
    en = (interference.magnitude() ** 2).mean(axis=0)
    total = es + en
    live = total > 0
    sm = np.zeros_like(es)
    sm[live] = es[live] / total[live]
    return sm, 1.0 - sm


# -- learned filter-and-sum -------------------------------------------------------------------


@dataclass
class FilterSumModel:
    p_channels: int
    crn: CrnParams

    def named_params(self) -> dict:
        return {f"crn.{k}": v for k, v in self.crn.params.items()}


def init_filter_sum_model(p_channels: int, width_scale=1, freq_bins: int = 256,
                          seed: int = 0, dtype=np.float32) -> FilterSumModel:
    cfg = CrnConfig(
        c_in=2 * p_channels, c_out=2 * p_channels,
        width_scale=width_scale, freq_bins=freq_bins, decoder_mode="mask",
    )
    rng = np.random.default_rng(seed)
    return FilterSumModel(p_channels, init_crn_params(cfg, rng, dtype))


def combine_filter_sum(y: Spectrogram, w_re: np.ndarray, w_im: np.ndarray) -> Spectrogram:
    """sum_p W_p * Y_p with complex per-channel filters (P, T, F)."""
    if w_re.shape != y.re.shape or w_im.shape != y.re.shape:
        raise ValueError("filter shape must match the spectrogram")
    re = (w_re * y.re - w_im * y.im).sum(axis=0)
    im = (w_re * y.im + w_im * y.re).sum(axis=0)
    return y.like(re[None], im[None])


def filter_sum_tensors(y_re, y_im, model: FilterSumModel, training: bool = False):
    """Graph version for training: returns single-channel (T, F) tensors."""
    y_re = y_re if isinstance(y_re, Tensor) else Tensor(np.asarray(y_re, dtype=np.float32))
    y_im = y_im if isinstance(y_im, Tensor) else Tensor(np.asarray(y_im, dtype=np.float32))
    feat = concat([y_re, y_im], axis=0)
    w_re, w_im = crn_forward(feat, model.crn, training=training)
    re = (w_re * y_re - w_im * y_im).sum(axis=0)
    im = (w_re * y_im + w_im * y_re).sum(axis=0)
    return re, im


def filter_and_sum_nn(y: Spectrogram, model: FilterSumModel) -> Spectrogram:
    if y.channels != model.p_channels:
        raise ValueError(f"model expects {model.p_channels} channels, got {y.channels}")
    with no_grad():
        re, im = filter_sum_tensors(y.re, y.im, model, training=False)
    return y.like(re.data[None].astype(np.float64), im.data[None].astype(np.float64))
