"""Command-line interface.

Subcommands:
  simulate   render a synthetic multichannel dataset and its manifest
  train      optimize a stage of the two-stage model on a manifest
  enhance    run the full pipeline on a multichannel WAV
  baseline   ds | wpe | mvdr | filtersum on a multichannel WAV
  evaluate   score estimate WAVs against reference WAVs (STOI/WER/combined)

Every subcommand accepts --config with `key = value` lines; command-line
flags win over config-file values. Unknown keys or flags exit nonzero.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import baselines as B
from .config import ConfigError, load_config
from .dsp import TimeSignal, istft, stft
from .metrics import MetricReport, stoi, wer
from .optim import TrainConfig
from .pipeline import enhance, init_two_stage_model
from .simkit import DatasetConfig, build_dataset
from .train import load_training_set, train
from .wavio import read_wav, write_wav


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mcse", description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="render a synthetic dataset")
    sim.add_argument("--out", required=True, help="output directory")
    sim.add_argument("--config", help="key = value config file")
    sim.add_argument("--seed", type=int)
    sim.add_argument("--count", type=int, help="number of utterances")
    sim.add_argument("--seconds", type=float)

    tr = sub.add_parser("train", help="train the two-stage model")
    tr.add_argument("--data", required=True, help="manifest path")
    tr.add_argument("--out", required=True, help="run directory")
    tr.add_argument("--stage", choices=("stage1", "stage2", "joint"))
    tr.add_argument("--config", help="key = value config file")
    tr.add_argument("--seed", type=int)
    tr.add_argument("--model", help="checkpoint to continue from")
    tr.add_argument("--iters", type=int)

    en = sub.add_parser("enhance", help="enhance a multichannel WAV")
    en.add_argument("--model", required=True, help="checkpoint path")
    en.add_argument("--in", dest="input", required=True, help="multichannel WAV")
    en.add_argument("--out", required=True, help="output WAV")

    ba = sub.add_parser("baseline", help="run a classical baseline")
    ba.add_argument("method", choices=("ds", "wpe", "mvdr", "filtersum"))
    ba.add_argument("--in", dest="input", required=True, help="multichannel WAV")
    ba.add_argument("--out", required=True, help="output WAV")
    ba.add_argument("--config", help="key = value config file")
    ba.add_argument("--delays", help="comma-separated per-channel delays in samples (ds)")
    ba.add_argument("--speech-ref", help="clean-component WAV for oracle masks (mvdr)")
    ba.add_argument("--noise-ref", help="noise-component WAV for oracle masks (mvdr)")
    ba.add_argument("--model", help="checkpoint for filtersum")
    ba.add_argument("--seed", type=int, default=0)

    ev = sub.add_parser("evaluate", help="score estimates against references")
    ev.add_argument("--ref", required=True, help="directory of reference WAVs")
    ev.add_argument("--est", required=True, help="directory of estimate WAVs")
    ev.add_argument("--ref-transcripts", help="directory of reference .txt transcripts")
    ev.add_argument("--est-transcripts", help="directory of estimate .txt transcripts")
    ev.add_argument("--out", help="write the key-value report here")
    return parser


def _merged_config(args, defaults: dict) -> dict:
    cfg = dict(defaults)
    if getattr(args, "config", None):
        cfg.update(load_config(args.config))
    return cfg


def _cmd_simulate(args) -> int:
    cfg = _merged_config(args, {})
    kwargs = {}
    for key in ("num_utterances", "seconds", "seed", "snr_db_min", "snr_db_max",
                "absorption", "max_image_order", "sample_rate"):
        if key in cfg:
            kwargs[key] = cfg[key]
    if "room_x" in cfg or "room_y" in cfg or "room_z" in cfg:
        kwargs["room"] = (
            cfg.get("room_x", 6.0), cfg.get("room_y", 5.0), cfg.get("room_z", 3.0)
        )
    if args.seed is not None:
        kwargs["seed"] = args.seed
    if args.count is not None:
        kwargs["num_utterances"] = args.count
    if args.seconds is not None:
        kwargs["seconds"] = args.seconds
    manifest = build_dataset(DatasetConfig(out_dir=args.out, **kwargs))
    print(f"wrote {manifest}")
    return 0


def _cmd_train(args) -> int:
    cfg = _merged_config(args, {})
    tc_kwargs = {}
    for key in ("batch_size", "lr", "lr_halving_interval", "weight_decay",
                "max_iters", "seed", "stage", "checkpoint_interval"):
        if key in cfg:
            tc_kwargs[key] = cfg[key]
    if args.stage:
        tc_kwargs["stage"] = args.stage
    if args.seed is not None:
        tc_kwargs["seed"] = args.seed
    if args.iters is not None:
        tc_kwargs["max_iters"] = args.iters
    config = TrainConfig.desk(**tc_kwargs)

    if args.model:
        from .checkpoint import load_checkpoint

        model, _, _ = load_checkpoint(args.model)
    else:
        entries_probe = read_wav_channels(args.data)
        model = init_two_stage_model(
            p_channels=cfg.get("p_channels", entries_probe),
            width_scale=cfg.get("width_scale", 1),
            freq_bins=cfg.get("freq_bins", 256),
            seed=config.seed,
        )
    data = load_training_set(args.data, model.stft)
    curve = train(data, model, config, out_dir=args.out)
    print(f"trained {config.stage} for {len(curve)} iterations; "
          f"final loss {curve[-1][2]:.6f}; run dir {args.out}")
    return 0


def read_wav_channels(manifest_path) -> int:
    from .simkit import read_manifest

    entries = read_manifest(manifest_path)
    return read_wav(entries[0].mix_path).channels


def _cmd_enhance(args) -> int:
    from .checkpoint import load_checkpoint

    model, _, _ = load_checkpoint(args.model)
    x = read_wav(args.input)
    out = enhance(x, model)
    write_wav(args.out, out)
    print(f"wrote {args.out}")
    return 0


def _cmd_baseline(args) -> int:
    cfg = _merged_config(args, {})
    x = read_wav(args.input)
    y = stft(x)

    if args.method == "ds":
        if args.delays:
            delays = np.array([float(v) for v in args.delays.split(",")])
        else:
            delays = np.zeros(y.channels)
        out_spec = B.delay_and_sum(y, delays)
    elif args.method == "wpe":
        out_spec = B.wpe(
            stft(x, 512, 256, 512),
            taps=cfg.get("wpe_taps", B.WPE_TAPS),
            delay=cfg.get("wpe_delay", B.WPE_DELAY),
            iterations=cfg.get("wpe_iterations", B.WPE_ITERATIONS),
        )
        out = istft(out_spec, length=x.length)
        write_wav(args.out, out)
        print(f"wrote {args.out} (all {out.channels} dereverberated channels)")
        return 0
    elif args.method == "mvdr":
        if not args.speech_ref or not args.noise_ref:
            print("baseline mvdr needs --speech-ref and --noise-ref for oracle masks",
                  file=sys.stderr)
            return 2
        s_ref = stft(read_wav(args.speech_ref))
        n_ref = stft(read_wav(args.noise_ref))
        sm, nm = B.oracle_masks(s_ref, n_ref)
        out_spec = B.mask_mvdr(
            y, sm, nm,
            mode=cfg.get("mvdr_mode", "block"),
            forgetting=cfg.get("mvdr_forgetting", B.MVDR_FORGETTING),
        )
    elif args.method == "filtersum":
        if args.model:
            from .checkpoint import load_checkpoint

            model, _, header = load_checkpoint(args.model)
            if header.get("kind") != "filter_sum":
                raise ValueError(
                    f"{args.model} holds a {header.get('kind')!r} model, not filter_sum"
                )
        else:
            model = B.init_filter_sum_model(
                y.channels, width_scale=cfg.get("width_scale", 1),
                freq_bins=cfg.get("freq_bins", 256), seed=args.seed,
            )
        out_spec = B.filter_and_sum_nn(y, model)
    else:  # unreachable behind argparse choices
        return 2

    out = istft(out_spec, length=x.length)
    write_wav(args.out, out)
    print(f"wrote {args.out}")
    return 0


def _read_transcript(path: Path) -> list:
    return path.read_text().split()


def _cmd_evaluate(args) -> int:
    ref_dir = Path(args.ref)
    est_dir = Path(args.est)
    refs = sorted(ref_dir.glob("*.wav"))
    if not refs:
        print(f"no reference WAVs in {ref_dir}", file=sys.stderr)
        return 1
    report = MetricReport()
    for ref_path in refs:
        est_path = est_dir / ref_path.name
        if not est_path.exists():
            print(f"missing estimate for {ref_path.name}", file=sys.stderr)
            return 1
        ref = read_wav(ref_path)
        est = read_wav(est_path)
        n = min(ref.length, est.length)
        score = stoi(ref.samples[0, :n], est.samples[0, :n], ref.sample_rate)
        wer_score = None
        if args.ref_transcripts and args.est_transcripts:
            rt = Path(args.ref_transcripts) / (ref_path.stem + ".txt")
            et = Path(args.est_transcripts) / (ref_path.stem + ".txt")
            if rt.exists() and et.exists():
                wer_score = wer(_read_transcript(rt), _read_transcript(et))
        report.add(ref_path.stem, score, wer_score)
    print(report.to_text())
    if args.out:
        Path(args.out).write_text(report.to_keyvalues() + "\n")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "train":
            return _cmd_train(args)
        if args.command == "enhance":
            return _cmd_enhance(args)
        if args.command == "baseline":
            return _cmd_baseline(args)
        if args.command == "evaluate":
            return _cmd_evaluate(args)
        parser.error(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, FileNotFoundError, NotImplementedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
