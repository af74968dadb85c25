"""Command-line entry point.

    grasptrack gen           --out data/train --seed 0
    grasptrack train         --data data/train --out runs/a --eval-data data/val
    grasptrack eval          --checkpoint runs/a/checkpoint.bin --data data/val --out reports/val
    grasptrack ablate        --checkpoint ... --data data/occluded --out reports/ablate
    grasptrack bench-latency --checkpoint ... --data data/val --n-hist-sweep 4,6,8
    grasptrack serve         --checkpoint-root runs/a --port 8765
    grasptrack replay        --trace reports/val/report.json

Every command takes --config (INI) plus repeatable --set section.key=value
overrides and echoes the effective configuration for provenance. Exit
codes: 0 success, 1 configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

from .config import ConfigError, DatasetConfig, DecodeConfig, EvalConfig, effective_dict, load_config


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None, help="INI config file")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override a config value (repeatable)")
    p.add_argument("--force", action="store_true", help="allow writing into non-empty outputs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="grasptrack", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic clip dataset")
    _add_common(p)
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--seed", type=int, default=None, help="dataset seed")
    p.add_argument("--n-clips", type=int, default=None)
    p.add_argument("--frames", type=int, default=None, help="frames per clip (eval sequences may exceed n_clip)")
    p.add_argument("--occlusion", choices=["none", "partial", "heavy"], default=None,
                   help="occlusion protocol level")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train a tracker checkpoint")
    _add_common(p)
    p.add_argument("--data", required=True, help="training dataset directory")
    p.add_argument("--out", required=True, help="run directory (checkpoint + logs)")
    p.add_argument("--eval-data", default=None, help="held-out dataset for accuracy logging")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--n-hist", type=int, default=None)
    p.add_argument("--n-clip", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on a dataset")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None, help="directory for report.json / report.csv")
    p.add_argument("--prompt-interval", type=int, default=None, help="frames between prompts; 0 = first frame only")
    p.add_argument("--n-hist", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="paired evaluation with and without the memory bank")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--prompt-interval", type=int, default=None)
    p.add_argument("--n-hist", type=int, default=None)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("bench-latency", help="per-frame latency across memory sizes")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--n-hist-sweep", default="4,6,8", help="comma-separated N_hist values")
    p.add_argument("--multi-thread", action="store_true", help="skip the single-thread BLAS pin")
    p.set_defaults(func=cmd_bench_latency)

    p = sub.add_parser("serve", help="run the streaming session server")
    _add_common(p)
    p.add_argument("--checkpoint-root", default=".", help="directory resolving checkpoint names in start messages")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--frames", type=int, default=256, help="frames per streamed scene")
    p.add_argument("--frame-interval", type=float, default=0.04, help="seconds between frames")
    p.add_argument("--n-hist", type=int, default=None)
    p.add_argument("--ui-dir", default=None, help="static directory for the browser client")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("replay", help="re-score a saved benchmark report from its trace")
    _add_common(p)
    p.add_argument("--trace", required=True, help="report.json produced by eval/ablate")
    p.set_defaults(func=cmd_replay)
    return parser


def _load(args) -> "ExperimentConfig":
    cfg = load_config(args.config, args.overrides)
    for attr, dotted in (
        ("seed", None),
        ("n_hist", "train.n_hist"),
        ("n_clip", "train.n_clip"),
        ("epochs", "train.epochs"),
        ("prompt_interval", "eval.prompt_interval"),
    ):
        value = getattr(args, attr, None)
        if value is None:
            continue
        if attr == "seed":
            cfg.dataset.seed = value
            cfg.train.seed = value
            cfg.eval.seed = value
        else:
            section, key = dotted.split(".")
            setattr(getattr(cfg, section), key, value)
    if getattr(args, "n_hist", None) is not None:
        cfg.eval.n_hist = args.n_hist
        cfg.model.mem_capacity = max(cfg.model.mem_capacity, args.n_hist)
    return cfg


def _echo(cfg) -> None:
    print("effective config:")
    print(json.dumps(effective_dict(cfg), indent=2, default=str))


def _fresh_dir(path: Path, force: bool) -> Path:
    if path.exists() and any(path.iterdir()) and not force:
        raise ConfigError(f"output {path} is not empty (pass --force to overwrite)")
    path.mkdir(parents=True, exist_ok=True)
    return path


OCCLUSION_LEVELS = {
    "none": {"occlusion_prob": 0.0},
    "partial": {"occlusion_prob": 1.0, "occlusion_min": 1, "occlusion_max": 4},
    "heavy": {"occlusion_prob": 1.0, "occlusion_min": 5, "occlusion_max": 8},
}


def cmd_gen(args) -> int:
    from .scene import generate_dataset

    cfg = _load(args)
    if args.occlusion is not None:
        for key, value in OCCLUSION_LEVELS[args.occlusion].items():
            setattr(cfg.dataset.scene, key, value)
    if args.n_clips is not None:
        cfg.dataset.n_clips = args.n_clips
    _echo(cfg)
    generate_dataset(args.out, cfg.dataset, n_frames=args.frames, force=args.force)
    print(f"dataset written to {args.out} ({cfg.dataset.n_clips} clips)")
    return 0


def cmd_train(args) -> int:
    from . import bench
    from .training import train

    cfg = _load(args)
    _echo(cfg)
    out = _fresh_dir(Path(args.out), args.force)
    eval_fn = None
    if args.eval_data:
        decode = DecodeConfig(**{**asdict(cfg.decode)})

        def eval_fn(model):
            return bench.evaluate(model, args.eval_data, cfg.eval, decode).accuracy

    cfg.model.frame_height = cfg.scene.height
    cfg.model.frame_width = cfg.scene.width
    cfg.model.mem_capacity = max(cfg.model.mem_capacity, cfg.train.n_hist)
    ckpt, _, report = train(
        args.data, cfg.train, model_cfg=cfg.model, loss_cfg=cfg.loss,
        out_dir=out, eval_dir=args.eval_data, eval_fn=eval_fn, log=print,
    )
    print(f"checkpoint: {ckpt}")
    if report.eval_accuracy is not None:
        print(f"held-out accuracy: {report.eval_accuracy:.3f}")
    return 0


def _write_report(out, force, payload: dict, report=None) -> None:
    if out is None:
        print(json.dumps(payload if report is None else report.as_dict(), indent=2)[:2000])
        return
    out = _fresh_dir(Path(out), force)
    with open(out / "report.json", "w") as f:
        json.dump(payload, f, indent=2)
    if report is not None:
        report.save_csv(out / "report.csv")
    print(f"report written to {out}")


def cmd_eval(args) -> int:
    from . import bench

    cfg = _load(args)
    _echo(cfg)
    report = bench.evaluate(args.checkpoint, args.data, cfg.eval)
    print(f"accuracy: {report.accuracy:.4f} over {report.evaluated_frames} frames; "
          f"latency {report.latency_ms['total']:.1f} ms/frame "
          f"(decode+propagate {report.latency_ms['decode_propagate']:.1f} ms)")
    _write_report(args.out, args.force, report.as_dict(), report)
    return 0


def cmd_ablate(args) -> int:
    from . import bench

    cfg = _load(args)
    _echo(cfg)
    result = bench.ablate_memory(args.checkpoint, args.data, cfg.eval)
    print(f"with memory:    {result['with_memory']['accuracy']:.4f}")
    print(f"without memory: {result['without_memory']['accuracy']:.4f}")
    print(f"gap:            {result['accuracy_gap']:+.4f}")
    _write_report(args.out, args.force, result)
    return 0


def cmd_bench_latency(args) -> int:
    from . import bench

    cfg = _load(args)
    _echo(cfg)
    sweep = tuple(int(v) for v in args.n_hist_sweep.split(",") if v.strip())
    table = bench.bench_latency(args.checkpoint, args.data, sweep, cfg.eval,
                                single_thread=not args.multi_thread)
    for row in table["rows"]:
        print(f"n_hist {row['n_hist']}: total {row['total_ms']:.2f} ms, "
              f"decode+propagate {row['decode_propagate_ms']:.2f} ms over {row['frames']} frames")
    _write_report(args.out, args.force, table)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .server import create_app

    cfg = _load(args)
    _echo(cfg)
    app = create_app(
        checkpoint_root=args.checkpoint_root,
        scene=cfg.scene,
        stream_frames=args.frames,
        frame_interval=args.frame_interval,
        n_hist=args.n_hist or cfg.eval.n_hist,
        ui_dir=args.ui_dir,
    )
    print(f"serving on ws://{args.host}:{args.port}/ws")
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_replay(args) -> int:
    from .bench import rescore_trace

    with open(args.trace) as f:
        payload = json.load(f)
    if "per_sequence" not in payload:
        raise ConfigError(f"{args.trace} is not an evaluation report (no per_sequence trace)")
    result = rescore_trace(payload)
    print(json.dumps(result, indent=2))
    if not result["matches_report"]:
        print("MISMATCH: stored accuracy disagrees with re-scored trace", file=sys.stderr)
        return 2
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 2
    except Exception as e:  # runtime failure: keep the message, spare the trace
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
