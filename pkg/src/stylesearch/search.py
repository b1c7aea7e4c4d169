"""Asynchronous aging-evolution search plus a random-search baseline.

The population is a fixed-size insertion-ordered multiset. Each step a
worker, under the population lock, samples a tournament subset, takes
its best member as parent, and mutates it; the expensive evaluation then
runs outside the lock; finally the child is committed: appended to the
population and the history, while the record with the lowest generation
index leaves. The search's answer is the loss argmin over the whole
history, not the final population.

Every committed record is appended to a JSON-lines history file as it
lands, so an interrupted run can resume: the population is a pure
function of the history prefix and is rebuilt by replay.

Determinism: initial genomes come from one seeded stream; the
tournament and mutation draws for the k-th child slot come from a stream
keyed by k. With one worker, runs are byte-identical; with many, results
depend only on commit interleaving, and a replay checker can verify any
run was a valid serial execution.
"""

from __future__ import annotations

import json
import math
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from stylesearch.config import (
    DOMAIN_INIT,
    DOMAIN_RANDOM,
    DOMAIN_SELECT,
    RunConfig,
    rng_for,
)
from stylesearch.genome import Genome
from stylesearch.objective import ObjectiveBreakdown

HISTORY_FIELDS = ("index", "genome", "gen", "worker", "E", "P", "O", "L",
                  "failed", "seconds")


@dataclass(frozen=True)
class SearchRecord:
    """One evaluated architecture, immutable once committed."""

    index: int
    genome: Genome
    breakdown: ObjectiveBreakdown
    gen: int
    worker: int
    seconds: float


@dataclass(frozen=True)
class CommitEvent:
    """Bookkeeping for the linearizability check: which parent was
    picked, at which population version, for which committed child."""

    commit_index: int
    select_version: int
    parent: str


@dataclass
class SearchResult:
    best: SearchRecord
    history: list
    events: list = field(default_factory=list)


def record_key(rec: SearchRecord):
    """Total order for argmin: loss, then age, then genome string."""
    return (rec.breakdown.L, rec.gen, rec.genome.to_string())


def best_record(history) -> SearchRecord:
    if not history:
        raise ValueError("empty history")
    return min(history, key=record_key)


def _fmt_float(x: float) -> str:
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    if math.isnan(x):
        return "NaN"
    return "%.17g" % x


def record_line(rec: SearchRecord) -> str:
    """One history line; field order fixed, floats at 17 significant
    digits, non-finite values as bare Infinity/NaN tokens."""
    b = rec.breakdown
    return (
        '{"index": %d, "genome": "%s", "gen": %d, "worker": %d, '
        '"E": %s, "P": %s, "O": %s, "L": %s, "failed": %s, "seconds": %s}'
        % (rec.index, rec.genome.to_string(), rec.gen, rec.worker,
           _fmt_float(b.E), _fmt_float(b.P), _fmt_float(b.O), _fmt_float(b.L),
           "true" if b.failed else "false", _fmt_float(rec.seconds))
    )


def parse_history_line(text: str, lineno: int, path="history") -> SearchRecord:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from exc
    missing = [k for k in HISTORY_FIELDS if k not in obj]
    if missing:
        raise ValueError(f"{path}:{lineno}: missing fields {missing}")
    breakdown = ObjectiveBreakdown(
        E=float(obj["E"]), P=float(obj["P"]), O=float(obj["O"]),
        L=float(obj["L"]), alpha=float("nan"), beta=float("nan"),
        gamma=float("nan"), failed=bool(obj["failed"]))
    return SearchRecord(
        index=int(obj["index"]), genome=Genome.from_string(obj["genome"]),
        breakdown=breakdown, gen=int(obj["gen"]), worker=int(obj["worker"]),
        seconds=float(obj["seconds"]))


def read_history(path, drop_torn_tail: bool = False) -> list[SearchRecord]:
    """Parse a history file. With drop_torn_tail, an unparsable final
    line (a crash mid-write) is dropped instead of raising."""
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().split("\n") if ln.strip()]
    for i, line in enumerate(lines):
        try:
            records.append(parse_history_line(line, i + 1, path=str(path)))
        except ValueError:
            if drop_torn_tail and i == len(lines) - 1:
                break
            raise
    for i, rec in enumerate(records):
        if rec.index != i:
            raise ValueError(f"{path}: record {i} carries index {rec.index}")
    return records


def replay_population(history, population_size: int) -> list[SearchRecord]:
    """Rebuild the population implied by a history prefix: the first P
    records seed it, then each later record enters and the lowest-gen
    (earliest-inserted on ties) record leaves."""
    if len(history) < population_size:
        raise ValueError("history shorter than the population size")
    population = list(history[:population_size])
    for rec in history[population_size:]:
        population.append(rec)
        oldest = min(range(len(population)),
                     key=lambda i: (population[i].gen, i))
        population.pop(oldest)
    return population


def check_linearizable(history, events, population_size: int) -> None:
    """Verify a run was a valid serial execution: every child's parent
    was a population member at the recorded selection version, and no
    child committed before its selection. Raises ValueError otherwise."""
    n = len(history)
    for ev in events:
        if not population_size <= ev.select_version <= ev.commit_index < n:
            raise ValueError(
                f"child {ev.commit_index}: selection version "
                f"{ev.select_version} is out of order")
    population = list(history[:population_size])
    members = {}
    for rec in population:
        members[rec.genome.to_string()] = members.get(rec.genome.to_string(), 0) + 1
    by_version = sorted(events, key=lambda e: e.select_version)
    pos = 0
    for version in range(population_size, n + 1):
        while pos < len(by_version) and by_version[pos].select_version == version:
            ev = by_version[pos]
            if members.get(ev.parent, 0) < 1:
                raise ValueError(
                    f"child {ev.commit_index}: parent {ev.parent} was not "
                    f"in the population at version {version}")
            pos += 1
        if version == n:
            break
        rec = history[version]
        population.append(rec)
        members[rec.genome.to_string()] = members.get(rec.genome.to_string(), 0) + 1
        oldest = min(range(len(population)), key=lambda i: (population[i].gen, i))
        gone = population.pop(oldest)
        key = gone.genome.to_string()
        members[key] -= 1
        if not members[key]:
            del members[key]
    if pos != len(by_version):
        raise ValueError("selection events past the final commit")


class _HistoryWriter:
    def __init__(self, path):
        self.fh = open(path, "a", encoding="utf-8") if path else None

    def append(self, rec: SearchRecord) -> None:
        if self.fh is not None:
            self.fh.write(record_line(rec) + "\n")
            self.fh.flush()

    def close(self) -> None:
        if self.fh is not None:
            self.fh.close()


def _rewrite_history(path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(record_line(rec) + "\n")


def run_search(cfg: RunConfig, evaluator, out_path=None,
               resume: bool = False) -> SearchResult:
    """Aging-evolution search to a budget of exactly cfg.search.budget
    evaluated architectures (initial population included)."""
    sc = cfg.search
    sc.validate()
    pop_size, budget, workers = sc.population, sc.budget, sc.workers
    single = workers == 1

    history: list[SearchRecord] = []
    if resume and out_path and os.path.exists(out_path):
        history = read_history(out_path, drop_torn_tail=True)
        if len(history) > budget:
            raise ValueError(
                f"{out_path}: holds {len(history)} records, over budget {budget}")
        if 0 < len(history) < pop_size:
            history = []  # interrupted during init: start over
        _rewrite_history(out_path, history)
    elif out_path and os.path.exists(out_path):
        os.remove(out_path)

    writer = _HistoryWriter(out_path)
    events: list[CommitEvent] = []
    lock = threading.Lock()
    errors: list[BaseException] = []

    def timed_eval(genome):
        t0 = time.perf_counter()
        breakdown = evaluator.evaluate(genome)
        seconds = 0.0 if single else time.perf_counter() - t0
        return breakdown, seconds

    try:
        if not history:
            init_rng = rng_for(cfg.seed, DOMAIN_INIT)
            init_genomes = [Genome.random(init_rng) for _ in range(pop_size)]
            if single:
                evals = [timed_eval(g) for g in init_genomes]
            else:
                with ThreadPoolExecutor(max_workers=workers) as pool:
                    evals = list(pool.map(timed_eval, init_genomes))
            for i, (genome, (breakdown, seconds)) in enumerate(
                    zip(init_genomes, evals)):
                rec = SearchRecord(index=i, genome=genome, breakdown=breakdown,
                                   gen=0, worker=i % workers, seconds=seconds)
                history.append(rec)
                writer.append(rec)

        population = replay_population(history, pop_size)
        children_total = budget - pop_size
        state = {
            "next_slot": len(history) - pop_size,
            "gen": max(r.gen for r in history),
        }

        def worker_loop(worker_id: int) -> None:
            try:
                while True:
                    with lock:
                        if state["next_slot"] >= children_total or errors:
                            return
                        slot = state["next_slot"]
                        state["next_slot"] = slot + 1
                        select_version = len(history)
                        sel_rng = rng_for(cfg.seed, DOMAIN_SELECT, slot)
                        picks = sel_rng.choice(len(population), size=sc.tournament,
                                               replace=False)
                        parent = min((population[i] for i in picks), key=record_key)
                        child = parent.genome.mutate(sel_rng, sc.p_flip)
                        parent_str = parent.genome.to_string()
                    breakdown, seconds = timed_eval(child)
                    with lock:
                        state["gen"] += 1
                        rec = SearchRecord(index=len(history), genome=child,
                                           breakdown=breakdown, gen=state["gen"],
                                           worker=worker_id, seconds=seconds)
                        history.append(rec)
                        population.append(rec)
                        oldest = min(range(len(population)),
                                     key=lambda i: (population[i].gen, i))
                        population.pop(oldest)
                        assert len(population) == pop_size
                        events.append(CommitEvent(rec.index, select_version,
                                                  parent_str))
                        writer.append(rec)
            except BaseException as exc:  # noqa: BLE001 - reported to caller
                with lock:
                    errors.append(exc)

        if single:
            worker_loop(0)
        else:
            threads = [threading.Thread(target=worker_loop, args=(w,))
                       for w in range(workers)]
            for t in threads:
                t.start()
            for t in threads:
                t.join()
        if errors:
            raise errors[0]
    finally:
        writer.close()

    return SearchResult(best=best_record(history), history=history,
                        events=events)


def run_random_search(cfg: RunConfig, evaluator, draws: int,
                      out_path=None) -> SearchResult:
    """Baseline: `draws` independent uniform genomes, argmin returned.

    Genomes come from one seeded stream, so the first n draws of a
    longer run equal an n-draw run (nested-prefix property)."""
    if draws < 1:
        raise ValueError("draws must be >= 1")
    workers = cfg.search.workers
    single = workers == 1
    rng = rng_for(cfg.seed, DOMAIN_RANDOM)
    genomes = [Genome.random(rng) for _ in range(draws)]

    def timed_eval(genome):
        t0 = time.perf_counter()
        breakdown = evaluator.evaluate(genome)
        seconds = 0.0 if single else time.perf_counter() - t0
        return breakdown, seconds

    if single:
        evals = [timed_eval(g) for g in genomes]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            evals = list(pool.map(timed_eval, genomes))

    if out_path and os.path.exists(out_path):
        os.remove(out_path)
    writer = _HistoryWriter(out_path)
    history = []
    try:
        for i, (genome, (breakdown, seconds)) in enumerate(zip(genomes, evals)):
            rec = SearchRecord(index=i, genome=genome, breakdown=breakdown,
                               gen=0, worker=i % workers, seconds=seconds)
            history.append(rec)
            writer.append(rec)
    finally:
        writer.close()
    return SearchResult(best=best_record(history), history=history)
