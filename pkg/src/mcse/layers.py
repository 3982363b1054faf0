"""Neural network layers on top of the autodiff Tensor.

Each layer is a function of a Tensor input plus explicit parameter Tensors,
with a hand-written backward. Convolutions operate on single samples laid
out channel-first as (C, T, F); recurrent/dense layers take (T, D) or a
band-batched (B, T, D).
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, _accum, _as_tensor, grad_enabled, make_node


def _pair(v):
    if isinstance(v, (tuple, list)):
        if len(v) != 2:
            raise ValueError(f"expected a pair, got {v!r}")
        return int(v[0]), int(v[1])
    return int(v), int(v)


def uniform_param(rng: np.random.Generator, shape, fan_in: int, dtype=np.float32) -> Tensor:
    """Weight init: uniform in +-sqrt(1/fan_in)."""
    bound = float(np.sqrt(1.0 / fan_in))
    data = rng.uniform(-bound, bound, size=shape).astype(dtype)
    return Tensor(data, requires_grad=True)


def zeros_param(shape, dtype=np.float32) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=True)


def full_param(shape, value, dtype=np.float32) -> Tensor:
    return Tensor(np.full(shape, value, dtype=dtype), requires_grad=True)


# -- 2-D convolution over (C, T, F) ---------------------------------------------


def conv2d(x, w, b=None, stride=(1, 2), padding=(0, 1)) -> Tensor:
    """x: (C_in, T, F); w: (C_out, C_in, kt, kf); b: (C_out,) or None."""
    x, w = _as_tensor(x), _as_tensor(w)
    if x.ndim != 3 or w.ndim != 4:
        raise ValueError(f"conv2d expects (C,T,F) input and 4-D kernel, got {x.shape}, {w.shape}")
    if x.shape[0] != w.shape[1]:
        raise ValueError(f"conv2d channel mismatch: input {x.shape[0]}, kernel {w.shape[1]}")
    st, sf = _pair(stride)
    pt, pf = _pair(padding)
    c_out, c_in, kt, kf = w.shape
    _, t_in, f_in = x.shape
    t_out = (t_in + 2 * pt - kt) // st + 1
    f_out = (f_in + 2 * pf - kf) // sf + 1
    if t_out <= 0 or f_out <= 0:
        raise ValueError(f"conv2d output would be empty for input {x.shape}")

    xp = np.pad(x.data, ((0, 0), (pt, pt), (pf, pf)))
    out = np.zeros((c_out, t_out, f_out), dtype=x.data.dtype)
    for it in range(kt):
        for jf in range(kf):
            sl = xp[:, it : it + t_out * st : st, jf : jf + f_out * sf : sf]
            out += np.einsum("oc,ctf->otf", w.data[:, :, it, jf], sl, optimize=True)
    if b is not None:
        b = _as_tensor(b)
        out = out + b.data[:, None, None]

    parents = (x, w) if b is None else (x, w, b)

    def backward(g):
        if b is not None:
            _accum(b, g.sum(axis=(1, 2)))
        dxp = np.zeros_like(xp)
        dw = np.zeros_like(w.data)
        for it in range(kt):
            for jf in range(kf):
                sl = xp[:, it : it + t_out * st : st, jf : jf + f_out * sf : sf]
                dw[:, :, it, jf] = np.einsum("otf,ctf->oc", g, sl, optimize=True)
                dxp[:, it : it + t_out * st : st, jf : jf + f_out * sf : sf] += np.einsum(
                    "oc,otf->ctf", w.data[:, :, it, jf], g, optimize=True
                )
        _accum(w, dw)
        if pt or pf:
            dxp = dxp[:, pt : pt + t_in, pf : pf + f_in]
        _accum(x, dxp)

    return make_node(out, parents, backward)


def deconv2d(x, w, b=None, stride=(1, 2), padding=(0, 1), output_padding=(0, 1)) -> Tensor:
    """Transposed convolution. x: (C_in, T, F); w: (C_in, C_out, kt, kf)."""
    x, w = _as_tensor(x), _as_tensor(w)
    if x.ndim != 3 or w.ndim != 4:
        raise ValueError(f"deconv2d expects (C,T,F) input and 4-D kernel, got {x.shape}, {w.shape}")
    if x.shape[0] != w.shape[0]:
        raise ValueError(f"deconv2d channel mismatch: input {x.shape[0]}, kernel {w.shape[0]}")
    st, sf = _pair(stride)
    pt, pf = _pair(padding)
    ot, of = _pair(output_padding)
    if ot >= st and ot > 0 or of >= sf and of > 0:
        raise ValueError("output_padding must be smaller than stride")
    c_in, c_out, kt, kf = w.shape
    _, t_in, f_in = x.shape
    t_out = (t_in - 1) * st - 2 * pt + kt + ot
    f_out = (f_in - 1) * sf - 2 * pf + kf + of
    if t_out <= 0 or f_out <= 0:
        raise ValueError(f"deconv2d output would be empty for input {x.shape}")

    t_full = (t_in - 1) * st + kt + ot
    f_full = (f_in - 1) * sf + kf + of
    buf = np.zeros((c_out, t_full, f_full), dtype=x.data.dtype)
    for it in range(kt):
        for jf in range(kf):
            buf[:, it : it + t_in * st : st, jf : jf + f_in * sf : sf] += np.einsum(
                "io,itf->otf", w.data[:, :, it, jf], x.data, optimize=True
            )
    out = buf[:, pt : pt + t_out, pf : pf + f_out]
    if b is not None:
        b = _as_tensor(b)
        out = out + b.data[:, None, None]
    out = np.ascontiguousarray(out)

    parents = (x, w) if b is None else (x, w, b)

    def backward(g):
        if b is not None:
            _accum(b, g.sum(axis=(1, 2)))
        gbuf = np.zeros((c_out, t_full, f_full), dtype=g.dtype)
        gbuf[:, pt : pt + t_out, pf : pf + f_out] = g
        dx = np.zeros_like(x.data)
        dw = np.zeros_like(w.data)
        for it in range(kt):
            for jf in range(kf):
                gsl = gbuf[:, it : it + t_in * st : st, jf : jf + f_in * sf : sf]
                dw[:, :, it, jf] = np.einsum("itf,otf->io", x.data, gsl, optimize=True)
                dx += np.einsum("io,otf->itf", w.data[:, :, it, jf], gsl, optimize=True)
        _accum(w, dw)
        _accum(x, dx)

    return make_node(out, parents, backward)


# -- normalization ---------------------------------------------------------------


def batchnorm2d(
    x,
    gamma,
    beta,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Per-channel normalization of a (C, T, F) sample.

    Train mode normalizes with the sample's own (T, F) statistics and
    updates the running buffers in place (biased variance for the
    normalization, unbiased for the running buffer). Eval mode uses the
    running buffers as constants.
    """
    x, gamma, beta = _as_tensor(x), _as_tensor(gamma), _as_tensor(beta)
    if x.ndim != 3:
        raise ValueError(f"batchnorm2d expects (C,T,F), got {x.shape}")
    c = x.shape[0]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ValueError("batchnorm2d parameter shape mismatch")
    n = x.shape[1] * x.shape[2]

    if training:
        mean = x.data.mean(axis=(1, 2))
        var = x.data.var(axis=(1, 2))
        if n > 1:
            unbiased = var * (n / (n - 1.0))
        else:
            unbiased = var
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean.astype(running_mean.dtype)
        running_var *= 1.0 - momentum
        running_var += momentum * unbiased.astype(running_var.dtype)
    else:
        mean = running_mean.astype(x.data.dtype)
        var = running_var.astype(x.data.dtype)

    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean[:, None, None]) * inv_std[:, None, None]
    out = gamma.data[:, None, None] * xhat + beta.data[:, None, None]

    def backward(g):
        _accum(gamma, (g * xhat).sum(axis=(1, 2)))
        _accum(beta, g.sum(axis=(1, 2)))
        gx = g * gamma.data[:, None, None]
        if training:
            s1 = gx.sum(axis=(1, 2), keepdims=True)
            s2 = (gx * xhat).sum(axis=(1, 2), keepdims=True)
            dx = (inv_std[:, None, None] / n) * (n * gx - s1 - xhat * s2)
        else:
            dx = gx * inv_std[:, None, None]
        _accum(x, dx)

    return make_node(out, (x, gamma, beta), backward)


def layernorm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis of x (..., D)."""
    x, gamma, beta = _as_tensor(x), _as_tensor(gamma), _as_tensor(beta)
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ValueError("layernorm parameter shape mismatch")
    mean = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean) * inv_std
    out = gamma.data * xhat + beta.data

    def backward(g):
        lead = tuple(range(g.ndim - 1))
        _accum(gamma, (g * xhat).sum(axis=lead))
        _accum(beta, g.sum(axis=lead))
        gx = g * gamma.data
        s1 = gx.sum(axis=-1, keepdims=True)
        s2 = (gx * xhat).sum(axis=-1, keepdims=True)
        _accum(x, (inv_std / d) * (d * gx - s1 - xhat * s2))

    return make_node(out, (x, gamma, beta), backward)


# -- activations -------------------------------------------------------------------


def prelu(x, a) -> Tensor:
    """Per-channel parametric ReLU on a channel-first tensor; a: (C,)."""
    x, a = _as_tensor(x), _as_tensor(a)
    if a.ndim != 1 or a.shape[0] != x.shape[0]:
        raise ValueError(f"prelu slope shape {a.shape} does not match channels {x.shape[0]}")
    a_b = a.data.reshape((x.shape[0],) + (1,) * (x.ndim - 1))
    neg = x.data < 0
    out = np.where(neg, a_b * x.data, x.data)

    def backward(g):
        axes = tuple(range(1, x.ndim))
        _accum(a, np.where(neg, g * x.data, 0.0).sum(axis=axes))
        _accum(x, np.where(neg, g * a_b, g))

    return make_node(out, (x, a), backward)


# -- dense -------------------------------------------------------------------------


def linear(x, w, b=None) -> Tensor:
    """x: (..., D_in); w: (D_out, D_in); b: (D_out,) or None."""
    x, w = _as_tensor(x), _as_tensor(w)
    if x.shape[-1] != w.shape[1]:
        raise ValueError(f"linear shape mismatch: input {x.shape}, weight {w.shape}")
    out = np.matmul(x.data, w.data.T)
    if b is not None:
        b = _as_tensor(b)
        out = out + b.data

    parents = (x, w) if b is None else (x, w, b)

    def backward(g):
        g2 = g.reshape(-1, g.shape[-1])
        x2 = x.data.reshape(-1, x.data.shape[-1])
        _accum(w, g2.T @ x2)
        if b is not None:
            _accum(b, g2.sum(axis=0))
        _accum(x, np.matmul(g, w.data))

    return make_node(out, parents, backward)


# -- LSTM --------------------------------------------------------------------------


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def lstm_cell_seq(x, w_ih, w_hh, b) -> Tensor:
    """One direction of one LSTM layer over a whole sequence.

    x: (B, T, D); w_ih: (4H, D); w_hh: (4H, H); b: (4H,). Gate order i, f,
    g, o. Initial hidden and cell state are zero. Returns (B, T, H).
    The full BPTT backward is written out by hand.
    """
    x, w_ih, w_hh, b = _as_tensor(x), _as_tensor(w_ih), _as_tensor(w_hh), _as_tensor(b)
    if x.ndim != 3:
        raise ValueError(f"lstm_cell_seq expects (B,T,D), got {x.shape}")
    four_h, d_in = w_ih.shape
    if four_h % 4 != 0:
        raise ValueError("w_ih first dim must be 4*hidden")
    h_size = four_h // 4
    if w_hh.shape != (four_h, h_size) or b.shape != (four_h,):
        raise ValueError("lstm parameter shape mismatch")
    if x.shape[-1] != d_in:
        raise ValueError(f"lstm input width {x.shape[-1]} does not match w_ih {w_ih.shape}")
    bsz, t_len, _ = x.shape

    pre = np.matmul(x.data, w_ih.data.T) + b.data
    gates = np.empty((bsz, t_len, four_h), dtype=x.data.dtype)
    cells = np.empty((bsz, t_len, h_size), dtype=x.data.dtype)
    tanh_c = np.empty_like(cells)
    hs = np.empty_like(cells)
    h = np.zeros((bsz, h_size), dtype=x.data.dtype)
    c = np.zeros((bsz, h_size), dtype=x.data.dtype)
    for t in range(t_len):
        z = pre[:, t] + h @ w_hh.data.T
        i = _sigmoid(z[:, :h_size])
        f = _sigmoid(z[:, h_size : 2 * h_size])
        g_ = np.tanh(z[:, 2 * h_size : 3 * h_size])
        o = _sigmoid(z[:, 3 * h_size :])
        c = f * c + i * g_
        tc = np.tanh(c)
        h = o * tc
        gates[:, t, :h_size] = i
        gates[:, t, h_size : 2 * h_size] = f
        gates[:, t, 2 * h_size : 3 * h_size] = g_
        gates[:, t, 3 * h_size :] = o
        cells[:, t] = c
        tanh_c[:, t] = tc
        hs[:, t] = h
    out = hs.copy()

    def backward(grad_out):
        dz_all = np.empty((bsz, t_len, four_h), dtype=grad_out.dtype)
        dh_next = np.zeros((bsz, h_size), dtype=grad_out.dtype)
        dc_next = np.zeros((bsz, h_size), dtype=grad_out.dtype)
        dw_hh = np.zeros_like(w_hh.data)
        for t in range(t_len - 1, -1, -1):
            i = gates[:, t, :h_size]
            f = gates[:, t, h_size : 2 * h_size]
            g_ = gates[:, t, 2 * h_size : 3 * h_size]
            o = gates[:, t, 3 * h_size :]
            tc = tanh_c[:, t]
            c_prev = cells[:, t - 1] if t > 0 else np.zeros_like(dc_next)
            h_prev = hs[:, t - 1] if t > 0 else np.zeros_like(dh_next)

            dh = grad_out[:, t] + dh_next
            do = dh * tc
            dc = dc_next + dh * o * (1.0 - tc * tc)
            di = dc * g_
            df = dc * c_prev
            dg = dc * i
            dz = np.concatenate(
                [
                    di * i * (1.0 - i),
                    df * f * (1.0 - f),
                    dg * (1.0 - g_ * g_),
                    do * o * (1.0 - o),
                ],
                axis=1,
            )
            dz_all[:, t] = dz
            dw_hh += dz.T @ h_prev
            dh_next = dz @ w_hh.data
            dc_next = dc * f
        _accum(w_hh, dw_hh)
        _accum(b, dz_all.sum(axis=(0, 1)))
        g2 = dz_all.reshape(-1, four_h)
        x2 = x.data.reshape(-1, d_in)
        _accum(w_ih, g2.T @ x2)
        _accum(x, np.matmul(dz_all, w_ih.data))

    return make_node(out, (x, w_ih, w_hh, b), backward)


def init_lstm_params(
    rng: np.random.Generator,
    input_size: int,
    hidden_size: int,
    layers: int,
    bidirectional: bool,
    dtype=np.float32,
    prefix: str = "lstm",
) -> dict:
    """Named parameter dict for a (possibly bidirectional) stacked LSTM."""
    params = {}
    dirs = ("fw", "bw") if bidirectional else ("fw",)
    for layer in range(layers):
        d_in = input_size if layer == 0 else hidden_size * len(dirs)
        for dr in dirs:
            key = f"{prefix}.l{layer}.{dr}"
            params[f"{key}.w_ih"] = uniform_param(rng, (4 * hidden_size, d_in), d_in, dtype)
            params[f"{key}.w_hh"] = uniform_param(
                rng, (4 * hidden_size, hidden_size), hidden_size, dtype
            )
            params[f"{key}.b"] = zeros_param((4 * hidden_size,), dtype)
    return params


def lstm_seq(x, params: dict, hidden_size: int, layers: int, bidirectional: bool,
             prefix: str = "lstm") -> Tensor:
    """Run a stacked (bi)LSTM over x: (T, D) or (B, T, D).

    Returns (T, H*dirs) or (B, T, H*dirs). Parameters are looked up by the
    names produced by init_lstm_params.
    """
    x = _as_tensor(x)
    squeeze = x.ndim == 2
    if squeeze:
        x = x.reshape((1,) + tuple(x.shape))
    if x.ndim != 3:
        raise ValueError(f"lstm_seq expects (T,D) or (B,T,D), got {x.shape}")
    out = x
    for layer in range(layers):
        key = f"{prefix}.l{layer}"
        fw = lstm_cell_seq(
            out, params[f"{key}.fw.w_ih"], params[f"{key}.fw.w_hh"], params[f"{key}.fw.b"]
        )
        if bidirectional:
            rev = out[:, ::-1]
            bw = lstm_cell_seq(
                rev, params[f"{key}.bw.w_ih"], params[f"{key}.bw.w_hh"], params[f"{key}.bw.b"]
            )
            out = concat_feature(fw, bw[:, ::-1])
        else:
            out = fw
    if squeeze:
        out = out.reshape(tuple(out.shape[1:]))
    return out


def concat_feature(a, b) -> Tensor:
    from .tensor import concat

    return concat([a, b], axis=a.ndim - 1)
