"""Command-line interface.

Subcommands: `gen` (emit language datasets), `meta-train` (train an
initialization and checkpoint it), `eval` (100-shot accuracy over fresh
languages), `analyze <mode>` (bias analyses), and `report` (merge result
CSVs into summary tables and SVG charts).  Every run is reproducible from
its config file plus seed; each command writes its outputs under --out.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, load_config, save_config
from .harness import (
    consistency_analysis,
    constraint_set_analysis,
    eval_100shot,
    pos_analysis,
    summarize,
)
from .langspace import (
    GenerationError,
    enumerate_universals,
    make_dataset,
    sample_language,
    save_dataset,
)
from .metalearn import meta_train
from .reporting import read_results, write_report, write_results
from .seq2seq import init_params, load_checkpoint, save_checkpoint

EASE_ANALYSES = ("constraint-set", "ranking", "set", "all")


def _resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.out is not None:
        updates["out"] = args.out
    if getattr(args, "checkpoint", None) is not None:
        updates["checkpoint"] = args.checkpoint
    return dataclasses.replace(cfg, **updates) if updates else cfg


def _out_dir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_inits(cfg: ExperimentConfig, rng: np.random.Generator):
    """The initializations under comparison: 'meta' from the checkpoint when
    one is given (its stored model config wins) plus a fresh 'random'
    baseline of the same shape."""
    model_config = cfg.model
    inits = {}
    if cfg.checkpoint:
        params, model_config, _ = load_checkpoint(cfg.checkpoint)
        inits["meta"] = params
    inits["random"] = init_params(model_config, rng)
    return inits, model_config


def cmd_gen(args) -> int:
    cfg = _resolve_config(args)
    out = _out_dir(cfg)
    rng = np.random.default_rng(cfg.seed)
    for i in range(args.n):
        if args.condition == "universal":
            universals = enumerate_universals()
            u = universals[int(rng.integers(len(universals)))]
            while True:
                lang = sample_language(rng, kind="consistent")
                if lang.default[1] in u.premise_classes:
                    break
            ds = make_dataset(lang, rng, n_train=args.n_train, n_test=args.n_test,
                              condition="universal",
                              premise_template=u.premise_template,
                              conclusion_template=u.conclusion_template)
        else:
            ds = make_dataset(
                sample_language(rng, kind=args.kind), rng,
                n_train=args.n_train, n_test=args.n_test,
                condition=args.condition, max_len=args.max_len,
                holdout_length=(args.holdout_length
                                if args.condition == "length-holdout" else None),
            )
        for path in save_dataset(ds, out / f"{args.prefix}-{i:03d}", seed=cfg.seed):
            print(path)
    return 0


def cmd_meta_train(args) -> int:
    cfg = dataclasses.replace(_resolve_config(args), mode="meta-train")
    out = _out_dir(cfg)
    save_config(cfg, out / "config.json")
    rng = np.random.default_rng(cfg.seed)
    meta = cfg.meta
    result = meta_train(
        cfg.model, rng,
        n_languages=meta.n_languages, n_passes=meta.n_passes,
        warmup_episodes=meta.warmup_episodes, n_holdout=meta.n_holdout,
        eval_every=meta.eval_every, patience=meta.patience,
        n_train=meta.n_train, n_test=meta.n_test,
        inner_lr=meta.inner_lr, inner_steps=meta.inner_steps,
        meta_lr=meta.meta_lr, order=meta.order,
        eval_k=meta.eval_k, eval_inner_steps=meta.eval_inner_steps,
        kind=meta.kind, max_len=meta.max_len, batch_size=meta.batch_size,
        log_path=out / "train_log.csv",
        progress=(None if args.quiet else
                  lambda n, acc: print(f"languages={n} holdout_accuracy={acc:.4f}")),
    )
    extra = {
        "seed": cfg.seed,
        "languages_seen": result.state.languages_seen,
        "best_score": result.state.best_score,
        "stopped_early": result.stopped_early,
    }
    save_checkpoint(out / "checkpoint.npz", result.m0, cfg.model, extra=extra)
    save_checkpoint(out / "final.npz", result.state.m0, cfg.model, extra=extra)
    print(f"checkpoint: {out / 'checkpoint.npz'}")
    print(f"log: {out / 'train_log.csv'}")
    print(f"languages_seen={result.state.languages_seen} "
          f"best_score={result.state.best_score:.4f} "
          f"stopped_early={result.stopped_early}")
    return 0


def cmd_eval(args) -> int:
    cfg = dataclasses.replace(_resolve_config(args), mode="eval-100shot")
    out = _out_dir(cfg)
    rng = np.random.default_rng(cfg.seed)
    inits, model_config = _load_inits(cfg, rng)
    results = eval_100shot(inits, model_config, rng, cfg.eval)
    path = write_results(out / "results-eval-100shot.csv", results)
    print(path)
    for row in summarize(results).rows:
        print(f"{row.init}: mean_accuracy={row.mean:.4f} std={row.std:.4f} "
              f"n={row.n_languages}")
    return 0


def cmd_analyze(args) -> int:
    mode = args.mode
    cfg = dataclasses.replace(
        _resolve_config(args),
        mode=("ease" if mode == "ease" else f"pos-{mode.removeprefix('pos-')}"),
    )
    out = _out_dir(cfg)
    rng = np.random.default_rng(cfg.seed)
    inits, model_config = _load_inits(cfg, rng)
    if mode == "ease":
        results = []
        if args.analysis in ("constraint-set", "all"):
            results += constraint_set_analysis(inits, model_config, rng, cfg.ease)
        if args.analysis in ("ranking", "all"):
            results += consistency_analysis(inits, model_config, rng, cfg.ease,
                                            kind="ranking")
        if args.analysis in ("set", "all"):
            results += consistency_analysis(inits, model_config, rng, cfg.ease,
                                            kind="set")
    else:
        kinds = {
            "pos-newphonemes": ("new-phonemes",),
            "pos-length": ("length-5", "length-6"),
            "pos-universals": ("universals",),
        }[mode]
        results = []
        for kind in kinds:
            results += pos_analysis(inits, model_config, rng, kind, cfg.pos)
    path = write_results(out / f"results-{cfg.mode}.csv", results)
    print(path)
    report = summarize(results)
    for row in report.rows:
        print(f"{row.analysis} {row.init} {row.condition}: mean={row.mean:.4f} "
              f"std={row.std:.4f} n={row.n_languages}")
    for ratio in report.ratios:
        print(f"{ratio.analysis} {ratio.init} {ratio.name}={ratio.value:.4f}")
    return 0


def cmd_report(args) -> int:
    cfg = _resolve_config(args)
    out = _out_dir(cfg)
    runs = Path(args.runs) if args.runs else out
    files = sorted(runs.glob("results-*.csv"))
    if not files:
        raise FileNotFoundError(f"no results-*.csv files under {runs}")
    results = []
    for f in files:
        results += read_results(f)
    written = write_report(out, results)
    for path in written["tables"] + written["figures"]:
        print(path)
    return 0


def _add_common(parser: argparse.ArgumentParser, checkpoint: bool = False) -> None:
    parser.add_argument("--config", help="JSON experiment config")
    parser.add_argument("--seed", type=int, default=None, help="master RNG seed")
    parser.add_argument("--out", default=None, help="output directory")
    if checkpoint:
        parser.add_argument("--checkpoint", default=None,
                            help="meta-trained checkpoint (.npz)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="metasyl",
        description="Meta-learning of syllable-structure languages: "
                    "data generation, training, and bias analyses.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="emit language datasets (JSONL + metadata)")
    _add_common(p)
    p.add_argument("--n", type=int, default=3, help="number of languages")
    p.add_argument("--condition", default="standard",
                   choices=("standard", "inconsistent-ranking", "inconsistent-set",
                            "new-phonemes", "length-holdout", "universal"))
    p.add_argument("--kind", default="consistent",
                   choices=("consistent", "inconsistent-ranking", "inconsistent-set"))
    p.add_argument("--n-train", type=int, default=100)
    p.add_argument("--n-test", type=int, default=100)
    p.add_argument("--max-len", type=int, default=5)
    p.add_argument("--holdout-length", type=int, default=5)
    p.add_argument("--prefix", default="lang")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("meta-train", help="meta-train an initialization")
    _add_common(p)
    p.add_argument("--quiet", action="store_true", help="suppress progress lines")
    p.set_defaults(func=cmd_meta_train)

    p = sub.add_parser("eval", help="100-shot accuracy over fresh languages")
    _add_common(p, checkpoint=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("analyze", help="run a bias analysis")
    _add_common(p, checkpoint=True)
    p.add_argument("mode", choices=("ease", "pos-newphonemes", "pos-length",
                                    "pos-universals"))
    p.add_argument("--analysis", default="all", choices=EASE_ANALYSES,
                   help="which ease analyses to run (ease mode only)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("report", help="merge result CSVs into tables + SVG charts")
    _add_common(p)
    p.add_argument("--runs", default=None,
                   help="directory holding results-*.csv (default: --out)")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ValueError, OSError, GenerationError, KeyError) as exc:
        print(f"metasyl: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
