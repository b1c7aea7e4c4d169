"""Acceptance gate: eight criteria, one pass/fail line each.

Each test prints `acceptance k/8 [...]: PASS` (or FAIL) straight to the
terminal, bypassing capture, so the gate's outcome is visible in any
pytest run. Tolerances are pinned here and nowhere else.
"""

import contextlib
import json
import os
import time

import numpy as np
import pytest

from stylesearch.config import (
    DOMAIN_EXTRACTOR,
    ObjectiveConfig,
    RunConfig,
    SearchConfig,
    derive_seed,
)
from stylesearch.data import load_datasets
from stylesearch.genome import GENOME_BITS, Genome
from stylesearch.images import synth_images
from stylesearch.linalg import sym_eig
from stylesearch.metrics import (
    GaussianStats,
    frechet_distance,
    hamming_trajectory,
    leading_trailing_means,
)
from stylesearch.network import (
    Decoder,
    Encoder,
    build_network,
    load_checkpoint,
    save_checkpoint,
    wct,
)
from stylesearch.objective import (
    Evaluator,
    ObjectiveBreakdown,
    train_oracle,
    write_oracle_cache,
)
from stylesearch.report import self_check
from stylesearch.search import (
    check_linearizable,
    read_history,
    run_random_search,
    run_search,
)
from stylesearch.tensor import (
    Tensor,
    add,
    concat,
    conv2d,
    instance_norm,
    mse_loss,
    relu,
    split_channels,
    tsum,
    upsample_nearest,
)

from helpers import check_op_grad, numeric_grad, rel_err

# Seed for the end-to-end desk run; the directional convergence claims
# are properties of a healthy run, not of every random seed, so the run
# is pinned the way any experiment config pins its seed.
DESK_SEED = 0


@contextlib.contextmanager
def verdict(capsys, k, label):
    try:
        yield
    except BaseException:
        with capsys.disabled():
            print(f"\nacceptance {k}/8 [{label}]: FAIL", flush=True)
        raise
    with capsys.disabled():
        print(f"\nacceptance {k}/8 [{label}]: PASS", flush=True)


# -- 1: finite-difference gradient checks ------------------------------

def op_cases(rng):
    """One loss builder per differentiable op, freshly parameterized."""
    x = Tensor(rng.normal(size=(3, 6, 6)), requires_grad=True)
    w = Tensor(rng.normal(size=(4, 3, 3, 3)) * 0.4, requires_grad=True)
    b = Tensor(rng.normal(size=(4,)) * 0.1, requires_grad=True)
    y = Tensor(rng.normal(size=(3, 6, 6)), requires_grad=True)
    t = Tensor(rng.normal(size=(4, 6, 6)), requires_grad=True)
    return {
        "conv2d": (lambda: mse_loss(conv2d(x, w, b), t), [x, w, b]),
        "relu": (lambda: tsum(relu(conv2d(x, w, b))), [x, w, b]),
        "upsample_nearest": (lambda: tsum(upsample_nearest(x, 2)), [x]),
        # b is omitted: instance norm subtracts the per-channel mean, so
        # a conv bias is mathematically inert and its true grad is 0
        # (asserted separately below).
        "instance_norm": (lambda: mse_loss(instance_norm(conv2d(x, w, b)), t),
                          [x, w]),
        "concat": (lambda: tsum(concat(x, y)), [x, y]),
        "split_channels": (lambda: tsum(split_channels(concat(x, y), (2, 4))[1]),
                           [x, y]),
        "add": (lambda: tsum(add(relu(x), relu(y))), [x, y]),
        "mse_loss": (lambda: mse_loss(x, y), [x, y]),
    }


def test_acceptance_gradients(capsys):
    with verdict(capsys, 1, "finite-difference gradients"):
        t0 = time.perf_counter()
        from helpers import autodiff_grads
        for seed in range(20):
            rng = np.random.default_rng(1000 + seed)
            for name, (build, tensors) in op_cases(rng).items():
                worst = check_op_grad(build, tensors, tol=1e-4)
                assert worst < 1e-4, f"{name} seed {seed}: {worst}"
            # a conv bias feeding an instance norm is mathematically
            # inert; its grad must vanish up to rounding residue
            x = Tensor(rng.normal(size=(3, 6, 6)), requires_grad=True)
            w = Tensor(rng.normal(size=(4, 3, 3, 3)) * 0.4, requires_grad=True)
            b = Tensor(rng.normal(size=(4,)) * 0.1, requires_grad=True)
            t = Tensor(rng.normal(size=(4, 6, 6)), requires_grad=True)
            autodiff_grads(
                lambda: mse_loss(instance_norm(conv2d(x, w, b)), t), [x, w, b])
            assert np.abs(b.grad).max() < 1e-12

        # full network: finite differences along random parameter
        # directions vs the tape's directional derivative
        genome = Genome.from_string("1" + "111111" * 5)
        enc = Encoder(seed=3, plan=(4, 8, 8, 8, 8))
        dec = Decoder(genome, (4, 8, 8, 8, 8), seed=4)
        img = synth_images(1, 16, seed=5)[0]
        feats = enc.forward(img)
        target = Tensor(np.asarray(img))
        params = dec.parameters()

        def loss_value():
            return float(mse_loss(dec.forward(feats), target).data)

        from stylesearch.tensor import Tape
        for p in params:
            p.grad = None
        with Tape() as tape:
            loss = mse_loss(dec.forward(feats), target)
            tape.backward(loss)
        grads = [p.grad.copy() for p in params]

        rng = np.random.default_rng(6)
        h = 1e-5
        for trial in range(5):
            direction = [rng.normal(size=p.data.shape) for p in params]
            norm = np.sqrt(sum((d * d).sum() for d in direction))
            direction = [d / norm for d in direction]
            analytic = sum((g * d).sum() for g, d in zip(grads, direction))
            for p, d in zip(params, direction):
                p.data += h * d
            up = loss_value()
            for p, d in zip(params, direction):
                p.data -= 2 * h * d
            down = loss_value()
            for p, d in zip(params, direction):
                p.data += h * d
            fd = (up - down) / (2 * h)
            assert abs(fd - analytic) <= 1e-3 * max(1.0, abs(fd)), (
                f"direction {trial}: fd {fd} vs tape {analytic}")

        elapsed = time.perf_counter() - t0
        assert elapsed < 120.0, f"gradient suite took {elapsed:.1f}s"


# -- 2: whitening-coloring statistics ----------------------------------

def test_acceptance_wct_statistics(capsys):
    with verdict(capsys, 2, "feature statistics transfer"):
        t0 = time.perf_counter()
        for channels in (4, 8, 16):
            for seed in range(5):
                rng = np.random.default_rng(100 * channels + seed)
                content = rng.normal(size=(channels, 7, 9))
                scale = rng.uniform(0.5, 2.0, size=(channels, 1, 1))
                shift = rng.uniform(-1.0, 1.0, size=(channels, 1, 1))
                style = rng.normal(size=(channels, 8, 6)) * scale + shift
                out = wct(content, style)

                of = out.reshape(channels, -1)
                sf = style.reshape(channels, -1)
                mean_out = of.mean(axis=1)
                mean_style = sf.mean(axis=1)
                cov_out = np.cov(of, bias=True)
                cov_style = np.cov(sf, bias=True)
                assert np.abs(mean_out - mean_style).max() < 1e-8
                assert rel_err(cov_out, cov_style) < 1e-4

                feat = rng.normal(size=(channels, 6, 6))
                assert np.abs(wct(feat, feat) - feat).max() < 1e-6
        elapsed = time.perf_counter() - t0
        assert elapsed < 60.0, f"statistics suite took {elapsed:.1f}s"


# -- 3: eigensolver and Frechet closed form ----------------------------

def test_acceptance_eigensolver(capsys):
    with verdict(capsys, 3, "eigensolver and distance closed form"):
        for n in (2, 3, 5, 8, 16, 31, 64):
            for seed in range(3):
                rng = np.random.default_rng(10 * n + seed)
                m = rng.normal(size=(n, n))
                a = (m + m.T) / 2.0
                vals, vecs = sym_eig(a)
                recon = vecs @ np.diag(vals) @ vecs.T
                scale = max(1.0, float(np.linalg.norm(a)))
                assert np.linalg.norm(recon - a) / scale < 1e-9
                assert np.linalg.norm(vecs.T @ vecs - np.eye(n)) < 1e-9

        a = GaussianStats(mean=np.array([0.0]), cov=np.array([[4.0]]), count=4)
        b = GaussianStats(mean=np.array([1.0]), cov=np.array([[1.0]]), count=4)
        assert abs(frechet_distance(a, b) - 2.0) < 1e-10


# -- 4: search beats random on the counting objective ------------------

class PopcountEvaluator:
    """loss = popcount / 31: the pure exploitation landscape."""

    oc = ObjectiveConfig(alpha=1.0, beta=0.0, gamma=0.0)

    def evaluate(self, genome):
        frac = genome.popcount / GENOME_BITS
        return ObjectiveBreakdown.build(frac, 0.0, 0.0, self.oc)


def test_acceptance_search_beats_random(capsys):
    with verdict(capsys, 4, "evolution vs random baseline"):
        t0 = time.perf_counter()
        wins = 0
        for seed in range(100):
            cfg = RunConfig(seed=seed, search=SearchConfig(
                population=20, budget=140, tournament=5, workers=1))
            evo = run_search(cfg, PopcountEvaluator())
            rand = run_random_search(cfg, PopcountEvaluator(), 200)
            if evo.best.breakdown.L <= rand.best.breakdown.L:
                wins += 1
        elapsed = time.perf_counter() - t0
        assert wins >= 95, f"evolution won only {wins}/100 paired trials"
        assert elapsed < 60.0, f"paired trials took {elapsed:.1f}s"


# -- 5/6: the end-to-end desk run and its identities -------------------

@pytest.fixture(scope="module")
def desk_run(tmp_path_factory):
    """Oracle plus full evolutionary search at desk scale, shared by the
    end-to-end, identity, and reproducibility criteria."""
    out = os.fspath(tmp_path_factory.mktemp("desk"))
    cfg = RunConfig(seed=DESK_SEED, out_dir=out)
    train, pairs = load_datasets(cfg)
    t0 = time.perf_counter()
    oracle = train_oracle(cfg, train, pairs)
    write_oracle_cache(os.path.join(out, "oracle"), oracle, cfg, pairs)
    evaluator = Evaluator(cfg, train, pairs, oracle)
    history_path = os.path.join(out, "evolution.jsonl")
    result = run_search(cfg, evaluator, out_path=history_path)
    elapsed = time.perf_counter() - t0
    return {
        "cfg": cfg, "oracle": oracle, "evaluator": evaluator,
        "result": result, "elapsed": elapsed, "out": out,
        "history_path": history_path, "train": train, "pairs": pairs,
    }


def test_acceptance_desk_run(desk_run, capsys):
    with verdict(capsys, 5, "desk-scale search"):
        cfg = desk_run["cfg"]
        assert cfg.search.population == 8
        assert cfg.search.budget == 40
        assert cfg.search.workers == 4
        assert cfg.train.steps == 200
        assert cfg.image_size == 32
        assert len(desk_run["train"]) == 8
        assert len(desk_run["pairs"]) == 8

        assert desk_run["elapsed"] <= 600.0, (
            f"run took {desk_run['elapsed']:.0f}s")

        history = desk_run["result"].history
        assert len(history) == 40
        init = history[:8]
        init_best = min(r.breakdown.L for r in init)
        best = desk_run["result"].best.breakdown
        assert best.L < init_best, (
            f"no strict improvement: best {best.L} vs init {init_best}")

        o_median = float(np.median([r.breakdown.O for r in init]))
        assert best.O <= o_median, (
            f"operator fraction {best.O} above initial median {o_median}")

        head, tail = leading_trailing_means(hamming_trajectory(history), 0.25)
        assert tail <= head, (
            f"Hamming trajectory diverged: head {head:.2f} tail {tail:.2f}")


def test_acceptance_objective_identities(desk_run, capsys):
    with verdict(capsys, 6, "objective identities"):
        ev = desk_run["evaluator"]
        oracle = desk_run["oracle"]
        e, p = ev.score_decoder(oracle.net.decoder)
        assert e == 0.0, f"oracle self-eval E = {e!r}"
        assert p == 0.0, f"oracle self-eval P = {p!r}"

        oc = desk_run["cfg"].objective
        history = read_history(desk_run["history_path"])
        assert len(history) == 40
        self_check(history, oc.alpha, oc.beta, oc.gamma)
        for rec in history:
            b = rec.breakdown
            if not b.failed:
                assert b.L == oc.alpha * b.E + oc.beta * b.P + oc.gamma * b.O


# -- 7: reproducibility ------------------------------------------------

def test_acceptance_reproducibility(desk_run, tmp_path, capsys):
    with verdict(capsys, 7, "reproducibility and linearizability"):
        # single worker, twice, all artifacts byte-identical
        cfg = RunConfig(
            seed=9, image_size=16, channel_plan=(4, 8, 8, 8, 8),
            search=SearchConfig(population=4, budget=12, tournament=2,
                                workers=1))
        cfg.data.train_count = 2
        cfg.data.pair_count = 2
        cfg.train.steps = 20
        cfg.oracle.steps = 20
        train, pairs = load_datasets(cfg)
        artifacts = []
        for run in ("a", "b"):
            oracle = train_oracle(cfg, train, pairs)
            ev = Evaluator(cfg, train, pairs, oracle)
            hist = os.fspath(tmp_path / f"{run}.jsonl")
            res = run_search(cfg, ev, out_path=hist)
            ckpt = os.fspath(tmp_path / f"{run}.ckpt")
            decoder = ev.train_decoder(res.best.genome)
            from stylesearch.network import StyleNet
            save_checkpoint(ckpt, StyleNet(ev.encoder, decoder))
            stylized = load_checkpoint(ckpt).stylize(pairs[0][0], pairs[0][1])
            artifacts.append((open(hist, "rb").read(),
                              open(ckpt, "rb").read(),
                              stylized.tobytes()))
        assert artifacts[0][0] == artifacts[1][0], "history bytes differ"
        assert artifacts[0][1] == artifacts[1][1], "checkpoint bytes differ"
        assert artifacts[0][2] == artifacts[1][2], "stylized output differs"

        # 8-worker stress: fixed population size at every commit, and a
        # linearizable commit order over ten thousand steps
        from helpers import MockEvaluator
        pop = 8
        steps = 10_000
        stress = RunConfig(seed=17, search=SearchConfig(
            population=pop, budget=pop + steps, tournament=3, workers=8))
        res = run_search(stress, MockEvaluator(max_delay=0.0004))
        history, events = res.history, res.events
        assert len(history) == pop + steps
        assert [r.index for r in history] == list(range(pop + steps))

        population = list(history[:pop])
        for rec in history[pop:]:
            population.append(rec)
            oldest = min(range(len(population)),
                         key=lambda i: (population[i].gen, i))
            population.pop(oldest)
            assert len(population) == pop
        check_linearizable(history, events, pop)


# -- 8: genome layer ----------------------------------------------------

TEST_MASK = (0, 5, 6, 13, 15)  # bottleneck, skip+concat pair, conv, norm


def test_acceptance_genome_layer(capsys):
    with verdict(capsys, 8, "genome decode and build"):
        published = Genome.parse_code("01010000000100000000000000001111")
        assert published.operator_fraction == 7 / 31
        assert published.popcount == 7

        def forward_ok(genome):
            net = build_network(genome, encoder_seed=1, decoder_seed=2)
            content, style = synth_images(2, 16, seed=3)
            rec = net.reconstruct(content)
            sty = net.stylize(content, style)
            assert rec.shape == (3, 16, 16)
            assert sty.shape == (3, 16, 16)
            assert np.all(np.isfinite(rec))
            assert np.all(np.isfinite(sty))

        for value in range(2 ** len(TEST_MASK)):
            bits = [0] * GENOME_BITS
            for j, position in enumerate(TEST_MASK):
                bits[position] = (value >> j) & 1
            forward_ok(Genome(tuple(bits)))

        rng = np.random.default_rng(8)
        for _ in range(100):
            forward_ok(Genome.random(rng))
