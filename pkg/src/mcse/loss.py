"""Training objectives on square-root-compressed spectra.

total_loss = L_RI + L_Mag + alpha * L_MagHurts, all mean-reduced:
  L_RI        mean squared real-part error plus mean squared imag-part error
  L_Mag       mean squared magnitude error
  L_MagHurts  penalizes only magnitude underestimation,
              mean(max(0, |target| - |estimate|)^2), alpha = 2

Both operands are compressed with S * (|S| + eps)^(-1/2) before any of the
terms are formed; ri_mag_loss and mag_hurts_loss therefore expect already
compressed inputs, and total_loss does the compression itself. The
magnitude's gradient is zeroed at silent bins instead of propagating
through the square root's singular point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import COMPRESS_EPS, Spectrogram
from .tensor import Tensor, magnitude, power, relu


@dataclass
class LossWeights:
    alpha: float = 2.0


def _pair(x):
    """Accept a Spectrogram, a (re, im) pair of Tensors, or a pair of arrays."""
    if isinstance(x, Spectrogram):
        return Tensor(x.re), Tensor(x.im)
    re, im = x
    re = re if isinstance(re, Tensor) else Tensor(np.asarray(re))
    im = im if isinstance(im, Tensor) else Tensor(np.asarray(im))
    if re.shape != im.shape:
        raise ValueError("re/im shape mismatch")
    return re, im


def compress_pair(re: Tensor, im: Tensor, eps: float = COMPRESS_EPS):
    """Square-root compression in the graph. Returns (re, im, magnitude)
    of the compressed value."""
    mag = magnitude(re, im)
    scale = power(mag + eps, -0.5)
    cre = re * scale
    cim = im * scale
    return cre, cim, mag * scale


def ri_mag_loss(est, tgt) -> Tensor:
    """Real/imag plus magnitude squared error. Both inputs must already be
    square-root compressed (total_loss applies the compression)."""
    ere, eim = _pair(est)
    tre, tim = _pair(tgt)
    if ere.shape != tre.shape:
        raise ValueError(f"estimate shape {ere.shape} does not match target {tre.shape}")
    emag = magnitude(ere, eim)
    tmag = magnitude(tre, tim)
    dre = ere - tre
    dim = eim - tim
    dmag = emag - tmag
    return (dre * dre).mean() + (dim * dim).mean() + (dmag * dmag).mean()


def mag_hurts_loss(est, tgt) -> Tensor:
    """Penalty on magnitude underestimation only; zero wherever the
    estimate's magnitude meets or exceeds the target's. Inputs already
    compressed, as in ri_mag_loss."""
    ere, eim = _pair(est)
    tre, tim = _pair(tgt)
    if ere.shape != tre.shape:
        raise ValueError(f"estimate shape {ere.shape} does not match target {tre.shape}")
    gap = relu(magnitude(tre, tim) - magnitude(ere, eim))
    return (gap * gap).mean()


def total_loss(est, tgt, weights: LossWeights = LossWeights()) -> Tensor:
    """Full objective on raw (uncompressed) spectra; compression applied
    to both operands here."""
    ere, eim = _pair(est)
    tre, tim = _pair(tgt)
    if ere.shape != tre.shape:
        raise ValueError(f"estimate shape {ere.shape} does not match target {tre.shape}")
    cer, cei, cemag = compress_pair(ere, eim)
    ctr, cti, ctmag = compress_pair(tre, tim)

    dre = cer - ctr
    dim = cei - cti
    dmag = cemag - ctmag
    ri_mag = (dre * dre).mean() + (dim * dim).mean() + (dmag * dmag).mean()
    gap = relu(ctmag - cemag)
    hurts = (gap * gap).mean()
    return ri_mag + weights.alpha * hurts
