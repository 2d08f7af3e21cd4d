"""Command-line pipeline: corpus, training, generation, evaluation.

Exit codes are stable for scripting: 0 success, 1 runtime error, 2 usage
error. Every command is deterministic given its flags and seeds.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np
import torch

from .affect import EmotionPoint, normalize_av
from .backbone import sample_batch
from .config import AppConfig, load_config
from .corpus import MANIFEST_NAME, TOKENS_SUBDIR, generate_corpus, write_tokens
from .metrics import evaluate_system, write_scatter_csv
from .predictor import EmotionPredictor, train_predictor
from .trainer import load_generator, resume, train_generator


def _load_app_config(args: argparse.Namespace) -> AppConfig:
    return load_config(Path(args.config) if args.config else None)


def _override_seed(cfg, seed: int | None):
    return cfg if seed is None else dataclasses.replace(cfg, seed=seed)


def cmd_make_corpus(args: argparse.Namespace) -> int:
    app = _load_app_config(args)
    corpus_cfg = _override_seed(app.corpus, args.seed)
    manifest = generate_corpus(corpus_cfg.to_spec(), Path(args.out))
    print(f"wrote corpus manifest {manifest}")
    return 0


def cmd_train_lm(args: argparse.Namespace) -> int:
    from .plotting import loss_curves_figure

    out_dir = Path(args.out)
    if args.resume:
        if args.extra_steps is None:
            raise ValueError("--resume requires --extra-steps")
        result = resume(Path(args.resume), Path(args.manifest), args.extra_steps,
                        out_dir=out_dir)
    else:
        app = _load_app_config(args)
        train_cfg = _override_seed(app.train, args.seed)
        if args.alpha is not None:
            train_cfg = dataclasses.replace(train_cfg, alpha=args.alpha)
        if args.steps is not None:
            train_cfg = dataclasses.replace(train_cfg, steps=args.steps)
        result = train_generator(Path(args.manifest), out_dir, cfg=train_cfg,
                                 backbone_cfg=app.backbone,
                                 cond_cfg=app.conditioning,
                                 align_cfg=app.align, window=app.window,
                                 extractor_seed=app.extractor_seed)
    if result.records:
        loss_curves_figure(result.records, out_dir / "loss_curves.png")
    last = result.records[-1] if result.records else {}
    print(f"wrote checkpoint {result.checkpoint_path} "
          f"(step {last.get('step', 'n/a')}, ce {last.get('ce', float('nan')):.4f})")
    return 0


def cmd_train_predictor(args: argparse.Namespace) -> int:
    app = _load_app_config(args)
    cfg = _override_seed(app.predictor, args.seed)
    predictor, log = train_predictor(Path(args.manifest), cfg,
                                     vocab_size=app.backbone.vocab_size,
                                     window=app.window, d_feat=app.align.d_feat,
                                     extractor_seed=app.extractor_seed)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt = out_dir / "predictor.ckpt"
    predictor.save(ckpt)
    with (out_dir / "predictor_log.jsonl").open("w", encoding="utf-8") as fh:
        for record in log:
            fh.write(json.dumps(record) + "\n")
    final = log[-1] if log else {}
    print(f"wrote predictor {ckpt} (val ccc v={final.get('val_ccc_v', float('nan')):.3f} "
          f"a={final.get('val_ccc_a', float('nan')):.3f})")
    return 0


def cmd_generate(args: argparse.Namespace) -> int:
    app = _load_app_config(args)
    job = _override_seed(app.generate, args.seed)
    system, header = load_generator(Path(args.checkpoint))
    system.eval()

    grid_v = np.linspace(1.0, 9.0, job.grid_v)
    grid_a = np.linspace(1.0, 9.0, job.grid_a)
    emotions = [EmotionPoint(float(v), float(a))
                for v in grid_v for a in grid_a for _ in range(job.per_point)]
    n = len(emotions)
    seeds = [int(s) for s in np.random.SeedSequence(job.seed).generate_state(n)]

    av = torch.tensor([[normalize_av(e).v_n, normalize_av(e).a_n] for e in emotions],
                      dtype=torch.float32)
    with torch.no_grad():
        cond = system.conditioning(av)
    clips = sample_batch(system.backbone, cond, job.length,
                         job.temperature, job.top_k, seeds)

    out_dir = Path(args.out)
    (out_dir / TOKENS_SUBDIR).mkdir(parents=True, exist_ok=True)
    manifest = out_dir / MANIFEST_NAME
    vocab = system.backbone_cfg.vocab_size
    width = max(5, len(str(n - 1)))
    with manifest.open("w", encoding="utf-8") as fh:
        for i, emotion in enumerate(emotions):
            clip_id = f"gen_{i:0{width}d}"
            rel = f"{TOKENS_SUBDIR}/{clip_id}.bin"
            write_tokens(out_dir / rel, clips[i], vocab)
            fh.write(json.dumps({
                "clip_id": clip_id,
                "valence": emotion.valence,
                "arousal": emotion.arousal,
                "tokens": rel,
                "seed": seeds[i],
                "extractor_seed": header["extractor_seed"],
            }) + "\n")
    print(f"wrote {n} generated clips to {manifest}")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    from .plotting import scatter_figure

    predictor = EmotionPredictor.load(Path(args.predictor))
    report, rows = evaluate_system(Path(args.generated), predictor,
                                   Path(args.reference), eps=args.eps,
                                   system_name=args.system_name,
                                   seed=args.seed if args.seed is not None else 0)
    report_path = Path(args.report)
    report_path.parent.mkdir(parents=True, exist_ok=True)
    report.save_json(report_path)
    stem = report_path.with_suffix("")
    scatter_csv = Path(f"{stem}_scatter.csv")
    write_scatter_csv(rows, scatter_csv)
    figure_path = scatter_figure(rows, report, Path(f"{stem}_scatter.png"))
    print(f"wrote {report_path}, {scatter_csv} and {figure_path}")
    print(f"  fd={report.fd:.4f} r_a={report.r_a:.3f} r_v={report.r_v:.3f} "
          f"ccc_a={report.ccc_a:.3f} ccc_v={report.ccc_v:.3f} "
          f"n={report.n_clips}")
    return 0


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None,
                        help="override the command's seed from the config")
    parser.add_argument("--config", type=str, default=None,
                        help="path to an INI config file (defaults built in)")
    parser.add_argument("--threads", type=int, default=1,
                        help="torch CPU threads (fixed count keeps runs "
                             "reproducible)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="affectgen",
        description="Emotion-conditioned token generation and its "
                    "controllability benchmark on a synthetic corpus.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-corpus", help="generate a synthetic corpus")
    p.add_argument("--out", required=True, help="output directory")
    _add_common(p)
    p.set_defaults(func=cmd_make_corpus)

    p_train = sub.add_parser("train", help="train a model")
    train_sub = p_train.add_subparsers(dest="model", required=True)

    p = train_sub.add_parser("lm", help="train the conditioned generator")
    p.add_argument("--manifest", required=True, help="corpus manifest path")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--alpha", type=float, default=None,
                   help="alignment loss weight (0 gives the cross-entropy-"
                        "only ablation)")
    p.add_argument("--steps", type=int, default=None, help="override step count")
    p.add_argument("--resume", type=str, default=None,
                   help="checkpoint to continue from")
    p.add_argument("--extra-steps", type=int, default=None,
                   help="steps to run when resuming")
    _add_common(p)
    p.set_defaults(func=cmd_train_lm)

    p = train_sub.add_parser("predictor", help="train the emotion predictor")
    p.add_argument("--manifest", required=True, help="corpus manifest path")
    p.add_argument("--out", required=True, help="output directory")
    _add_common(p)
    p.set_defaults(func=cmd_train_predictor)

    p = sub.add_parser("generate", help="sample clips on an emotion grid")
    p.add_argument("--checkpoint", required=True, help="generator checkpoint")
    p.add_argument("--out", required=True, help="output directory")
    _add_common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="benchmark generated clips")
    p.add_argument("--generated", required=True,
                   help="generated clips directory or manifest")
    p.add_argument("--predictor", required=True, help="predictor checkpoint")
    p.add_argument("--reference", required=True,
                   help="reference corpus directory or manifest")
    p.add_argument("--report", required=True, help="output report JSON path")
    p.add_argument("--system-name", default="system", help="label for the report")
    p.add_argument("--eps", type=float, default=1e-6,
                   help="covariance regularization for the distribution "
                        "distance")
    _add_common(p)
    p.set_defaults(func=cmd_evaluate)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    torch.set_num_threads(max(1, args.threads))
    try:
        return args.func(args)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
