"""Report bundle generation from search history files.

A bundle is a directory with:

* trajectories.csv - per-record E/P/O/L and best-so-far L, all methods;
* hamming.csv - per-record Hamming distance to each run's best genome;
* metrics.csv - per-method image metrics: Frechet feature distance of
  the best network's outputs to the style set and to the oracle
  outputs, and the mean total-variation score (values are comparable
  only within this report, not to any published numbers);
* comparison.csv - best-record summary per method (2+ methods);
* SVG charts: loss scatter, best-so-far curve, and per-method
  objective and Hamming-trajectory plots.

Before writing anything the self-check pass re-derives every stored L
from its E/P/O columns and the objective weights and requires bit-exact
agreement, and verifies the best-so-far series is non-increasing.
"""

from __future__ import annotations

import csv
import os

from stylesearch.config import RunConfig
from stylesearch.metrics import (
    feature_stats,
    frechet_distance,
    hamming_trajectory,
    objective_trajectories,
    tv_score,
)
from stylesearch.search import best_record, read_history
from stylesearch.svgplot import Series, chart


def method_label(path) -> str:
    """Short name for a history file: its stem, or the parent directory
    name when the stem is just "history"."""
    stem = os.path.splitext(os.path.basename(path))[0]
    if stem != "history":
        return stem
    parent = os.path.basename(os.path.dirname(os.path.abspath(path)))
    return parent or stem


def self_check(history, alpha: float, beta: float, gamma: float) -> None:
    """Validate stored-objective consistency for one history.

    Every record's L must equal alpha*E + beta*P + gamma*O bit-exactly
    (failed records must carry the infinite sentinel), and the running
    minimum of L must be non-increasing.
    """
    best = float("inf")
    prev_best = float("inf")
    for rec in history:
        b = rec.breakdown
        expected = float("inf") if b.failed else (
            alpha * b.E + beta * b.P + gamma * b.O)
        if expected != b.L:
            raise ValueError(
                f"record {rec.index}: stored L {b.L!r} does not equal "
                f"recomputed {expected!r}")
        best = min(best, b.L)
        if best > prev_best:
            raise ValueError(f"record {rec.index}: best-so-far increased")
        prev_best = best


def _fmt(v) -> str:
    if isinstance(v, float):
        return "%.17g" % v
    return str(v)


def _write_csv(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def compute_image_metrics(cfg: RunConfig, history):
    """Image-level metrics for one finished run.

    Rebuilds the evaluation context from the run config (datasets,
    oracle cache under the run's output directory), retrains the best
    genome's decoder, stylizes the validation pairs, and returns
    {fid_style, fid_oracle, tv} for those outputs.
    """
    from stylesearch.config import DOMAIN_EXTRACTOR, derive_seed
    from stylesearch.data import DataError, load_datasets
    from stylesearch.network import Encoder
    from stylesearch.objective import Evaluator, load_oracle_cache, oracle_cache_ok

    train, pairs = load_datasets(cfg)
    cache_dir = os.path.join(cfg.out_dir, "oracle")
    if not oracle_cache_ok(cache_dir, cfg, pairs):
        raise DataError(f"no valid oracle cache under {cache_dir}; "
                        f"run train-oracle first")
    oracle = load_oracle_cache(cache_dir)
    ev = Evaluator(cfg, train, pairs, oracle)
    best = best_record(history)
    decoder = ev.train_decoder(best.genome)
    outputs = [ev.stylize_decoder(decoder, i) for i in range(len(pairs))]
    extractor = Encoder(derive_seed(cfg.seed, DOMAIN_EXTRACTOR),
                        cfg.channel_plan)
    out_stats = feature_stats(outputs, extractor)
    style_stats = feature_stats([s for _, s in pairs], extractor)
    oracle_stats = feature_stats(list(oracle.outputs), extractor)
    return {
        "fid_surrogate_style": frechet_distance(out_stats, style_stats),
        "fid_surrogate_oracle": frechet_distance(out_stats, oracle_stats),
        "tv_score": sum(tv_score(o) for o in outputs) / len(outputs),
    }


METRIC_ROWS = ("fid_surrogate_style", "fid_surrogate_oracle", "tv_score")


def generate_report(history_paths, out_dir, weights=(0.8, 0.1, 0.1),
                    configs=None, log=print) -> dict:
    """Build the full bundle; returns {label: best SearchRecord}.

    `configs` maps history path -> RunConfig for runs whose image
    metrics can be recomputed; other runs get empty metric cells.
    weights are the objective weights used by the self-check when a
    run has no config.
    """
    if not history_paths:
        raise ValueError("need at least one history file")
    configs = configs or {}
    os.makedirs(out_dir, exist_ok=True)

    runs = []  # (label, history, cfg or None)
    seen = set()
    for path in history_paths:
        label = method_label(path)
        if label in seen:
            raise ValueError(f"duplicate method label {label!r}")
        seen.add(label)
        runs.append((label, read_history(path), configs.get(path)))

    for label, history, cfg in runs:
        oc = cfg.objective if cfg is not None else None
        a, b, g = ((oc.alpha, oc.beta, oc.gamma) if oc is not None
                   else weights)
        self_check(history, a, b, g)
        log(f"self-check ok: {label} ({len(history)} records)")

    traj_rows, ham_rows = [], []
    for label, history, _ in runs:
        for (i, e, p, o, l, bl), rec in zip(objective_trajectories(history),
                                            history):
            traj_rows.append((label, i, rec.genome.to_string(), rec.gen,
                              e, p, o, l, bl))
        for i, dist in enumerate(hamming_trajectory(history)):
            ham_rows.append((label, i, dist))
    _write_csv(os.path.join(out_dir, "trajectories.csv"),
               ("method", "index", "genome", "gen", "E", "P", "O", "L",
                "best_L"), traj_rows)
    _write_csv(os.path.join(out_dir, "hamming.csv"),
               ("method", "index", "hamming_to_best"), ham_rows)

    metric_cells = {}
    for label, history, cfg in runs:
        if cfg is not None:
            metric_cells[label] = compute_image_metrics(cfg, history)
            log(f"image metrics computed: {label}")
        else:
            metric_cells[label] = {}
            log(f"image metrics skipped (no run config): {label}")
    labels = [r[0] for r in runs]
    rows = []
    for name in METRIC_ROWS:
        rows.append([name] + [
            (_fmt(metric_cells[l][name]) if name in metric_cells[l] else "")
            for l in labels])
    _write_csv(os.path.join(out_dir, "metrics.csv"),
               ["metric"] + labels, rows)

    bests = {label: best_record(history) for label, history, _ in runs}
    if len(runs) >= 2:
        comp = []
        for label, history, _ in runs:
            rec = bests[label]
            b = rec.breakdown
            comp.append((label, len(history), rec.genome.to_string(),
                         b.L, b.E, b.P, b.O, rec.genome.popcount))
        _write_csv(os.path.join(out_dir, "comparison.csv"),
                   ("method", "evaluations", "best_genome", "best_L",
                    "best_E", "best_P", "best_O", "best_popcount"), comp)
        header = f"{'method':<16}{'evals':>7}{'best_L':>12}{'popcount':>10}"
        log(header)
        for label, history, _ in runs:
            rec = bests[label]
            log(f"{label:<16}{len(history):>7}{rec.breakdown.L:>12.6f}"
                f"{rec.genome.popcount:>10}")

    chart(os.path.join(out_dir, "loss_scatter.svg"),
          [Series.of(label, [r.index for r in history],
                     [r.breakdown.L for r in history], "scatter")
           for label, history, _ in runs],
          title="Explored architectures", xlabel="evaluation index",
          ylabel="loss L")
    best_series = []
    for label, history, _ in runs:
        rows_ = objective_trajectories(history)
        best_series.append(Series.of(label, [r[0] for r in rows_],
                                     [r[5] for r in rows_], "line"))
    chart(os.path.join(out_dir, "best_loss.svg"), best_series,
          title="Best loss so far", xlabel="evaluation index",
          ylabel="best L")
    for label, history, _ in runs:
        rows_ = objective_trajectories(history)
        idx = [r[0] for r in rows_]
        chart(os.path.join(out_dir, f"objectives_{label}.svg"),
              [Series.of("E (pixel)", idx, [r[1] for r in rows_], "scatter"),
               Series.of("P (feature)", idx, [r[2] for r in rows_], "scatter"),
               Series.of("O (operators)", idx, [r[3] for r in rows_],
                         "scatter")],
              title=f"Objective terms: {label}", xlabel="evaluation index",
              ylabel="value")
        chart(os.path.join(out_dir, f"hamming_{label}.svg"),
              [Series.of(label, idx, hamming_trajectory(history),
                         "scatter")],
              title=f"Hamming distance to best: {label}",
              xlabel="evaluation index", ylabel="bits")
    return bests
