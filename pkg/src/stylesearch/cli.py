"""Command-line entry points tying the modules into reproducible runs.

Commands: train-oracle, search, random-search, eval, stylize, report,
synth-data. Every command that does work first writes the fully
resolved configuration (all defaults materialized) into the output
directory as config.json, so a finished run directory is a complete
record of what produced it.

Exit codes: 0 success; 1 usage or configuration error; 2 data error
(missing or malformed inputs, missing oracle cache); 3 numerical
failure (divergence, non-convergence).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from stylesearch.config import (
    DOMAIN_DATA,
    RunConfig,
    derive_seed,
    load_config,
    save_config,
)
from stylesearch.data import DataError, NumericalError, load_datasets
from stylesearch.genome import Genome
from stylesearch.images import (
    center_crop_multiple,
    load_image,
    save_image,
    synth_images,
)
from stylesearch.network import StyleNet, load_checkpoint, save_checkpoint
from stylesearch.objective import (
    Evaluator,
    TrainingDiverged,
    load_oracle_cache,
    oracle_cache_ok,
    train_oracle,
    write_oracle_cache,
)
from stylesearch.search import run_random_search, run_search

ORACLE_DIR = "oracle"


class _Parser(argparse.ArgumentParser):
    """argparse exits with code 2 on usage errors; this CLI reserves 2
    for data problems, so usage errors exit 1 instead."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _add_shared(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--seed", type=int, help="global seed override")
    p.add_argument("--out", help="output directory (default: run)")
    p.add_argument("--workers", type=int, help="worker thread count")
    p.add_argument("--image-size", type=int, dest="image_size",
                   help="square image side, multiple of 16")


def build_parser() -> _Parser:
    root = _Parser(prog="stylesearch",
                   description="Evolutionary architecture search for "
                               "style-transfer decoders.")
    sub = root.add_subparsers(dest="command", required=True,
                              parser_class=_Parser)

    p = sub.add_parser("train-oracle",
                       help="train the reference network and cache its "
                            "stylized validation outputs")
    _add_shared(p)

    p = sub.add_parser("search", help="run the evolutionary search")
    _add_shared(p)
    p.add_argument("--population", type=int, help="population size")
    p.add_argument("--budget", type=int,
                   help="total evaluations, initial population included")
    p.add_argument("--tournament", type=int, help="tournament sample size")
    p.add_argument("--resume", action="store_true",
                   help="continue an interrupted run from its history file")

    p = sub.add_parser("random-search", help="run the random-draw baseline")
    _add_shared(p)
    p.add_argument("--draws", type=int, default=200,
                   help="number of random architectures (default 200)")

    p = sub.add_parser("eval", help="score one genome against the oracle")
    _add_shared(p)
    p.add_argument("--genome", required=True,
                   help="genome bit string (31 bits, or 32 with the "
                        "leading padding zero)")

    p = sub.add_parser("stylize",
                       help="apply a trained checkpoint to an image pair")
    p.add_argument("checkpoint")
    p.add_argument("content")
    p.add_argument("style")
    p.add_argument("output")
    p.add_argument("--config", help="JSON config file (plan cross-check)")

    p = sub.add_parser("report", help="build the metrics report bundle")
    p.add_argument("histories", nargs="+", help="history JSONL files")
    p.add_argument("--out", required=True, help="report output directory")
    p.add_argument("--config",
                   help="fallback config for weights when a history has "
                        "no sibling config.json")

    p = sub.add_parser("synth-data",
                       help="write the synthetic train/content/style sets "
                            "as PNG files")
    _add_shared(p)
    p.add_argument("--train-count", type=int, dest="train_count",
                   help="training images to write")
    p.add_argument("--pair-count", type=int, dest="pair_count",
                   help="validation images per side to write")
    return root


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "out", None) is not None:
        cfg.out_dir = args.out
    if getattr(args, "workers", None) is not None:
        cfg.search.workers = args.workers
    if getattr(args, "image_size", None) is not None:
        cfg.image_size = args.image_size
    if getattr(args, "population", None) is not None:
        cfg.search.population = args.population
    if getattr(args, "budget", None) is not None:
        cfg.search.budget = args.budget
    if getattr(args, "tournament", None) is not None:
        cfg.search.tournament = args.tournament
    if getattr(args, "train_count", None) is not None:
        cfg.data.train_count = args.train_count
    if getattr(args, "pair_count", None) is not None:
        cfg.data.pair_count = args.pair_count
    if cfg.out_dir is None:
        cfg.out_dir = "run"
    cfg.validate()
    return cfg


def echo_config(cfg: RunConfig) -> None:
    os.makedirs(cfg.out_dir, exist_ok=True)
    path = os.path.join(cfg.out_dir, "config.json")
    save_config(path, cfg)
    print(f"resolved config written to {path}")
    print(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))


def _require_oracle(cfg: RunConfig, pairs):
    cache_dir = os.path.join(cfg.out_dir, ORACLE_DIR)
    if not oracle_cache_ok(cache_dir, cfg, pairs):
        raise DataError(
            f"no oracle cache matching this config under {cache_dir}; "
            f"run `stylesearch train-oracle --out {cfg.out_dir}` first")
    return load_oracle_cache(cache_dir)


def _print_best(tag: str, rec) -> None:
    b = rec.breakdown
    print(f"{tag} genome:   {rec.genome.to_string()}")
    print(f"{tag} L:        {b.L:.6f}")
    print(f"{tag} E/P/O:    {b.E:.6f} / {b.P:.6f} / {b.O:.6f}")
    print(f"{tag} popcount: {rec.genome.popcount}")


def cmd_train_oracle(args) -> int:
    cfg = resolve_config(args)
    echo_config(cfg)
    train, pairs = load_datasets(cfg)
    cache_dir = os.path.join(cfg.out_dir, ORACLE_DIR)
    if oracle_cache_ok(cache_dir, cfg, pairs):
        print(f"cache hit: {cache_dir} already matches this config, "
              f"skipping training")
        return 0
    t0 = time.perf_counter()
    oracle = train_oracle(cfg, train, pairs)
    write_oracle_cache(cache_dir, oracle, cfg, pairs)
    recon = float(np.mean([
        np.mean((oracle.net.reconstruct(img) - img) ** 2) for img in train]))
    ev = Evaluator(cfg, train, pairs, oracle)
    e, p = ev.score_decoder(oracle.net.decoder)
    print(f"oracle trained in {time.perf_counter() - t0:.1f}s "
          f"({cfg.oracle.steps} steps)")
    print(f"oracle reconstruction MSE: {recon:.6f}")
    print(f"oracle self-eval E={e} P={p}")
    print(f"cache written to {cache_dir}")
    return 0


def cmd_search(args) -> int:
    cfg = resolve_config(args)
    echo_config(cfg)
    train, pairs = load_datasets(cfg)
    oracle = _require_oracle(cfg, pairs)
    evaluator = Evaluator(cfg, train, pairs, oracle)
    history_path = os.path.join(cfg.out_dir, "evolution.jsonl")
    t0 = time.perf_counter()
    result = run_search(cfg, evaluator, out_path=history_path,
                        resume=args.resume)
    print(f"search finished: {len(result.history)} evaluations in "
          f"{time.perf_counter() - t0:.1f}s -> {history_path}")
    decoder = evaluator.train_decoder(result.best.genome)
    ckpt = os.path.join(cfg.out_dir, "best.ckpt")
    save_checkpoint(ckpt, StyleNet(evaluator.encoder, decoder))
    _print_best("best", result.best)
    print(f"best checkpoint: {ckpt}")
    return 0


def cmd_random_search(args) -> int:
    cfg = resolve_config(args)
    echo_config(cfg)
    train, pairs = load_datasets(cfg)
    oracle = _require_oracle(cfg, pairs)
    evaluator = Evaluator(cfg, train, pairs, oracle)
    history_path = os.path.join(cfg.out_dir, "random.jsonl")
    t0 = time.perf_counter()
    result = run_random_search(cfg, evaluator, args.draws,
                               out_path=history_path)
    print(f"random search finished: {len(result.history)} evaluations in "
          f"{time.perf_counter() - t0:.1f}s -> {history_path}")
    decoder = evaluator.train_decoder(result.best.genome)
    ckpt = os.path.join(cfg.out_dir, "best_random.ckpt")
    save_checkpoint(ckpt, StyleNet(evaluator.encoder, decoder))
    _print_best("best", result.best)
    print(f"best checkpoint: {ckpt}")
    return 0


def cmd_eval(args) -> int:
    cfg = resolve_config(args)
    echo_config(cfg)
    genome = Genome.parse_code(args.genome)
    train, pairs = load_datasets(cfg)
    oracle = _require_oracle(cfg, pairs)
    evaluator = Evaluator(cfg, train, pairs, oracle)
    breakdown = evaluator.evaluate(genome)
    payload = {
        "genome": genome.to_string(), "popcount": genome.popcount,
        "E": breakdown.E, "P": breakdown.P, "O": breakdown.O,
        "L": breakdown.L, "failed": breakdown.failed,
    }
    out_path = os.path.join(cfg.out_dir, "eval.json")
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    for key in ("genome", "popcount", "E", "P", "O", "L", "failed"):
        print(f"{key}: {payload[key]}")
    print(f"written to {out_path}")
    return 0


def cmd_stylize(args) -> int:
    net = load_checkpoint(args.checkpoint)
    if args.config:
        cfg = load_config(args.config)
        if tuple(cfg.channel_plan) != tuple(net.encoder.plan):
            raise DataError(
                f"checkpoint channel plan {tuple(net.encoder.plan)} "
                f"does not match config plan {tuple(cfg.channel_plan)}")
    images = {}
    for role, path in (("content", args.content), ("style", args.style)):
        try:
            img = load_image(path)
        except (OSError, ValueError) as exc:
            raise DataError(f"{role} image {path}: {exc}") from exc
        if img.shape[0] == 1:
            img = np.repeat(img, 3, axis=0)
        cropped, changed = center_crop_multiple(img, 16)
        if changed:
            print(f"{role} image center-cropped from "
                  f"{img.shape[1]}x{img.shape[2]} to "
                  f"{cropped.shape[1]}x{cropped.shape[2]}")
        images[role] = cropped
    out = net.stylize(images["content"], images["style"])
    out = np.clip(out, 0.0, 1.0)
    save_image(args.output, out)
    print(f"stylized image written to {args.output} "
          f"({out.shape[1]}x{out.shape[2]})")
    return 0


def cmd_report(args) -> int:
    from stylesearch.report import generate_report

    weights = (0.8, 0.1, 0.1)
    if args.config:
        oc = load_config(args.config).objective
        weights = (oc.alpha, oc.beta, oc.gamma)
    configs = {}
    for path in args.histories:
        if not os.path.exists(path):
            raise DataError(f"history file not found: {path}")
        sibling = os.path.join(os.path.dirname(os.path.abspath(path)),
                               "config.json")
        if os.path.exists(sibling):
            configs[path] = load_config(sibling)
    try:
        generate_report(args.histories, args.out, weights=weights,
                        configs=configs)
    except ValueError as exc:
        # malformed history lines and failed self-checks are input
        # problems, not usage problems
        raise DataError(str(exc)) from exc
    print(f"report bundle written to {args.out}")
    return 0


def cmd_synth_data(args) -> int:
    cfg = resolve_config(args)
    echo_config(cfg)
    sets = (("train", cfg.data.train_count, 0),
            ("content", cfg.data.pair_count, 1),
            ("style", cfg.data.pair_count, 2))
    for name, count, k in sets:
        directory = os.path.join(cfg.out_dir, name)
        os.makedirs(directory, exist_ok=True)
        imgs = synth_images(count, cfg.image_size,
                            derive_seed(cfg.seed, DOMAIN_DATA, k))
        for i, img in enumerate(imgs):
            save_image(os.path.join(directory, f"img_{i:03d}.png"), img)
        print(f"wrote {count} images to {directory}")
    return 0


COMMANDS = {
    "train-oracle": cmd_train_oracle,
    "search": cmd_search,
    "random-search": cmd_random_search,
    "eval": cmd_eval,
    "stylize": cmd_stylize,
    "report": cmd_report,
    "synth-data": cmd_synth_data,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, TrainingDiverged, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except RuntimeError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
