"""Binary checkpoints: magic + version, a JSON architecture descriptor,
then named float32 little-endian tensors. Parameters, batchnorm buffers,
and (optionally) optimizer state all ride the same tensor table, so a
save/load round trip is bit-exact and training can resume exactly.
"""

from __future__ import annotations

import json
import struct
from fractions import Fraction
from pathlib import Path

import numpy as np

from .crn import CrnConfig, init_crn_params
from .optim import AdamWState
from .pipeline import StftSettings, TwoStageModel, init_spatial_params
from .tensor import Tensor

MAGIC = b"MCSECKPT"
VERSION = 1

INIT_NOTES = {
    "weights": "uniform(-sqrt(1/fan_in), sqrt(1/fan_in)) per matrix",
    "biases": "zero",
    "prelu_slope": 0.25,
    "bn": "gamma 1, beta 0, running mean 0, running var 1",
    "lstm": "single bias per gate block, gate order i,f,g,o, zero initial state",
}


def _write_tensors(fh, tensors: dict):
    fh.write(struct.pack("<I", len(tensors)))
    for name, arr in tensors.items():
        data = np.ascontiguousarray(arr, dtype="<f4")
        nb = name.encode()
        fh.write(struct.pack("<H", len(nb)))
        fh.write(nb)
        fh.write(struct.pack("<B", data.ndim))
        for d in data.shape:
            fh.write(struct.pack("<I", d))
        fh.write(data.tobytes())


def _read_tensors(fh) -> dict:
    (count,) = struct.unpack("<I", fh.read(4))
    out = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<H", fh.read(2))
        name = fh.read(nlen).decode()
        (rank,) = struct.unpack("<B", fh.read(1))
        shape = tuple(struct.unpack("<I", fh.read(4))[0] for _ in range(rank))
        n = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(fh.read(4 * n), dtype="<f4").reshape(shape).copy()
        out[name] = data
    return out


def _crn_descriptor(cfg: CrnConfig) -> dict:
    return {
        "c_in": cfg.c_in,
        "c_out": cfg.c_out,
        "width_scale": str(cfg.width_scale),
        "freq_bins": cfg.freq_bins,
        "decoder_mode": cfg.decoder_mode,
        "dual_decoder": cfg.dual_decoder,
    }


def _crn_from_descriptor(d: dict) -> CrnConfig:
    return CrnConfig(
        c_in=int(d["c_in"]),
        c_out=int(d["c_out"]),
        width_scale=Fraction(d["width_scale"]),
        freq_bins=int(d["freq_bins"]),
        decoder_mode=d["decoder_mode"],
        dual_decoder=bool(d["dual_decoder"]),
    )


def save_checkpoint(path, model, optimizer: AdamWState | None = None,
                    extra: dict | None = None):
    """Serialize a TwoStageModel or FilterSumModel with optional optimizer
    state. Tensors are written as float32 regardless of working dtype."""
    from .baselines import FilterSumModel

    if isinstance(model, TwoStageModel):
        header = {
            "kind": "two_stage",
            "p_channels": model.p_channels,
            "stage1": _crn_descriptor(model.stage1.config),
            "stage2": _crn_descriptor(model.stage2.config),
            "stft": {
                "frame_size": model.stft.frame_size,
                "hop": model.stft.hop,
                "fft_size": model.stft.fft_size,
                "sample_rate": model.stft.sample_rate,
            },
        }
        buffers = model.named_buffers()
    elif isinstance(model, FilterSumModel):
        header = {
            "kind": "filter_sum",
            "p_channels": model.p_channels,
            "crn": _crn_descriptor(model.crn.config),
        }
        buffers = {f"crn.{k}": v for k, v in model.crn.buffers.items()}
    else:
        raise TypeError(f"cannot checkpoint {type(model).__name__}")
    header["init"] = INIT_NOTES
    header["optimizer_step"] = optimizer.step if optimizer is not None else None
    if extra:
        header["extra"] = extra

    tensors = {}
    for name, t in model.named_params().items():
        tensors[f"param.{name}"] = t.data
    for name, b in buffers.items():
        tensors[f"buffer.{name}"] = b
    if optimizer is not None:
        for name, m in optimizer.m.items():
            tensors[f"opt.m.{name}"] = m
        for name, v in optimizer.v.items():
            tensors[f"opt.v.{name}"] = v

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        hdr = json.dumps(header, sort_keys=True).encode()
        fh.write(struct.pack("<I", len(hdr)))
        fh.write(hdr)
        _write_tensors(fh, tensors)


def load_checkpoint(path):
    """Returns (model, optimizer_state_or_None, header)."""
    from .baselines import FilterSumModel

    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise ValueError(f"{path} is not a checkpoint (bad magic {magic!r})")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode())
        tensors = _read_tensors(fh)

    rng = np.random.default_rng(0)  # layout source only; data is overwritten below
    kind = header.get("kind")
    if kind == "two_stage":
        model = TwoStageModel(
            p_channels=int(header["p_channels"]),
            stage1=init_crn_params(_crn_from_descriptor(header["stage1"]), rng),
            spatial=init_spatial_params(int(header["p_channels"]), rng),
            stage2=init_crn_params(_crn_from_descriptor(header["stage2"]), rng),
            stft=StftSettings(**header["stft"]),
        )
        buffers = model.named_buffers()
    elif kind == "filter_sum":
        model = FilterSumModel(
            int(header["p_channels"]),
            init_crn_params(_crn_from_descriptor(header["crn"]), rng),
        )
        buffers = {f"crn.{k}": v for k, v in model.crn.buffers.items()}
    else:
        raise ValueError(f"unsupported model kind {kind!r}")

    params = model.named_params()
    for name, t in params.items():
        key = f"param.{name}"
        if key not in tensors:
            raise ValueError(f"checkpoint missing parameter {name!r}")
        if tensors[key].shape != t.data.shape:
            raise ValueError(
                f"shape mismatch for {name!r}: checkpoint {tensors[key].shape}, model {t.data.shape}"
            )
        t.data = tensors[key]
    for name, b in buffers.items():
        key = f"buffer.{name}"
        if key not in tensors:
            raise ValueError(f"checkpoint missing buffer {name!r}")
        b[...] = tensors[key]

    optimizer = None
    if header.get("optimizer_step") is not None:
        # stagewise runs track moments for a subset of the parameters
        optimizer = AdamWState(step=int(header["optimizer_step"]))
        for key, arr in tensors.items():
            if key.startswith("opt.m."):
                name = key[len("opt.m."):]
            elif key.startswith("opt.v."):
                name = key[len("opt.v."):]
            else:
                continue
            if name not in params:
                raise ValueError(f"optimizer state for unknown parameter {name!r}")
            (optimizer.m if key.startswith("opt.m.") else optimizer.v)[name] = arr
    return model, optimizer, header
