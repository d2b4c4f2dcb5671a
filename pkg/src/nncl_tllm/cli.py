"""Command-line surface: train, evaluate, forecast, export-embeddings,
make-synthetic.

Exit codes: 0 success, 1 runtime failure, 2 usage/config error. Errors go to
stderr. NNCL_TLLM_THREADS caps intra-run parallelism.
"""

from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import math
import os
import sys
from pathlib import Path

import numpy as np
import torch

from . import __version__
from .checkpoint import export_embeddings, load_checkpoint, save_checkpoint
from .config import ConfigError, RunConfig
from .data import SplitSpec, load_csv, split
from .model import torch_dtype
from .synthetic import make_synthetic
from .trainer import StepReport, evaluate, fit

EXIT_RUNTIME = 1
EXIT_USAGE = 2


def _data_fingerprint(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    d = cfg.to_dict()
    if args.seed is not None:
        d["seed"] = args.seed
    if getattr(args, "horizon", None):
        d["horizon"] = args.horizon
    if getattr(args, "few_shot", None) is not None:
        d["few_shot_fraction"] = args.few_shot
    for ablation in getattr(args, "ablation", None) or []:
        if ablation == "no-nncl":
            d["disable_nncl"] = True
        elif ablation == "no-proto":
            d["disable_proto"] = True
    return RunConfig.from_dict(d)


def cmd_train(args) -> int:
    cfg = RunConfig.from_file(args.config)
    cfg = _apply_overrides(cfg, args)
    data_path = Path(args.data)
    frame = load_csv(data_path)
    spec = SplitSpec(cfg.train_frac, cfg.train_frac + cfg.val_frac, mode="ratio")
    train_frame, val_frame, test_frame = split(frame, spec, cfg.lookback)

    started = datetime.datetime.now(datetime.timezone.utc).isoformat()
    trainer, history = fit(cfg, train_frame, val_frame)
    report = evaluate(trainer, test_frame)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out / "checkpoint.bin", trainer)
    with open(out / "history.csv", "w") as fh:
        fh.write(StepReport.CSV_HEADER + "\n")
        for r in history:
            fh.write(r.csv_row() + "\n")

    n_train = len(train_frame.values[0])
    windows_per_channel = n_train - cfg.lookback - cfg.horizon + 1
    subset = math.ceil(cfg.few_shot_fraction * windows_per_channel)
    manifest = {
        "version": __version__,
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "data": str(data_path),
        "data_sha256": _data_fingerprint(data_path),
        "few_shot_windows_per_channel": subset,
        "steps": trainer.step,
        "metrics": report,
        "started": started,
        "finished": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    print(f"wrote {out / 'checkpoint.bin'}, {out / 'history.csv'}, "
          f"{out / 'manifest.json'}")
    print(f"test mse={report['avg']['mse']:.6g} mae={report['avg']['mae']:.6g}")
    return 0


def cmd_evaluate(args) -> int:
    trainer = load_checkpoint(args.checkpoint)
    frame = load_csv(args.data)
    horizons = args.horizons or [trainer.cfg.horizon]
    report = evaluate(trainer, frame, horizons=horizons)
    lines = ["horizon,mse,mae"]
    for row in report["rows"] + [report["avg"]]:
        lines.append(f"{row['horizon']},{row['mse']:.6g},{row['mae']:.6g}")
    text = "\n".join(lines)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n")
    return 0


def cmd_forecast(args) -> int:
    trainer = load_checkpoint(args.checkpoint)
    frame = load_csv(args.data)
    cfg = trainer.cfg
    if frame.length < cfg.lookback:
        raise ValueError(f"need at least {cfg.lookback} steps of history")
    x = frame.values[:, -cfg.lookback:]
    ch = np.arange(frame.n_channels)
    if frame.n_channels != trainer.model.n_channels:
        raise ValueError(
            f"checkpoint was trained on {trainer.model.n_channels} channels, "
            f"data has {frame.n_channels}")
    dt = torch_dtype(cfg.dtype)
    y_hat = trainer.predict(torch.as_tensor(x, dtype=dt),
                            torch.as_tensor(ch)).numpy()
    lines = ["step," + ",".join(frame.channel_names or
                                (f"ch{i}" for i in range(frame.n_channels)))]
    for h in range(cfg.horizon):
        lines.append(f"{h + 1}," + ",".join(f"{y_hat[c, h]:.9g}"
                                            for c in range(frame.n_channels)))
    text = "\n".join(lines)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n")
    return 0


def cmd_export_embeddings(args) -> int:
    trainer = load_checkpoint(args.checkpoint)
    name, shape = export_embeddings(trainer, args.what, args.out,
                                    allow_empty=args.allow_empty)
    print(f"wrote {args.out}: {name} shape {list(shape)}")
    return 0


def cmd_make_synthetic(args) -> int:
    frame = make_synthetic(n_steps=args.steps, n_channels=args.channels,
                           seed=args.seed if args.seed is not None else 0)
    lines = ["date," + ",".join(frame.channel_names)]
    for t in range(frame.length):
        lines.append(f"{t}," + ",".join(f"{frame.values[c, t]:.9g}"
                                        for c in range(frame.n_channels)))
    Path(args.out).write_text("\n".join(lines) + "\n")
    print(f"wrote {args.out}: {frame.n_channels} channels x {frame.length} steps")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nncl-tllm")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and persist the run")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--horizon", type=int)
    p.add_argument("--few-shot", dest="few_shot", type=float)
    p.add_argument("--ablation", action="append", choices=["no-nncl", "no-proto"])
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="metrics table for a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--horizon", dest="horizons", action="append", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("forecast", help="emit a horizon-step CSV for the last window")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("export-embeddings", help="export a matrix to a tensor archive")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--what", required=True,
                   choices=["prototypes", "queue", "vocabulary"])
    p.add_argument("--out", required=True)
    p.add_argument("--allow-empty", action="store_true")
    p.set_defaults(func=cmd_export_embeddings)

    p = sub.add_parser("make-synthetic", help="emit the seeded synthetic benchmark CSV")
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=10_000)
    p.add_argument("--channels", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_make_synthetic)

    return parser


def main(argv: list[str] | None = None) -> int:
    threads = os.environ.get("NNCL_TLLM_THREADS")
    if threads:
        try:
            torch.set_num_threads(max(1, int(threads)))
        except ValueError:
            print(f"invalid NNCL_TLLM_THREADS value {threads!r}", file=sys.stderr)
            return EXIT_USAGE
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
