"""Candidate scoring: train a decoder for reconstruction, then compare
its stylized outputs against a supervisory reference network.

A candidate's loss is L = alpha*E + beta*P + gamma*O:

    E  mean pixel distance between the candidate's stylized validation
       outputs and the reference outputs,
    P  mean perceptual distance: the same comparison in the five-stage
       feature pyramid of a frozen extractor,
    O  the fraction of genome bits switched on.

All Frobenius distances are divided by the square root of the element
count, so the weights mean the same thing at any resolution. Candidates
whose training loss leaves the reals are marked failed and carry an
infinite loss instead of crashing the run.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass

import numpy as np

from stylesearch.config import (
    DOMAIN_CANDIDATE,
    DOMAIN_ENCODER,
    DOMAIN_EXTRACTOR,
    DOMAIN_ORACLE,
    ObjectiveConfig,
    RunConfig,
    TrainConfig,
    derive_seed,
)
from stylesearch.genome import Genome
from stylesearch.network import (
    DEFAULT_PLAN,
    Decoder,
    Encoder,
    StyleContext,
    StyleNet,
    load_checkpoint,
    read_array,
    save_checkpoint,
    write_array,
)
from stylesearch.tensor import Adam, Tape, Tensor, mse_loss

# The supervisory reference: whitening-coloring at the bottleneck and
# every encoder skip merged by concat-project, nothing else switched on.
ORACLE_GENOME = Genome.from_string("1" + "000011" * 5)

ARRAY_MAGIC = b"SSARR\x00\x01\x00"
MANIFEST_NAME = "manifest.json"
ORACLE_CHECKPOINT = "oracle.ckpt"


class TrainingDiverged(Exception):
    """Raised when a candidate's training loss leaves the reals."""


@dataclass(frozen=True)
class ObjectiveBreakdown:
    """One candidate's score, with the weights that produced it."""

    E: float
    P: float
    O: float
    L: float
    alpha: float
    beta: float
    gamma: float
    failed: bool = False

    @classmethod
    def build(cls, E: float, P: float, O: float, oc: ObjectiveConfig,
              failed: bool = False) -> "ObjectiveBreakdown":
        if failed:
            E = P = L = float("inf")
        else:
            L = oc.alpha * E + oc.beta * P + oc.gamma * O
        return cls(E=E, P=P, O=O, L=L, alpha=oc.alpha, beta=oc.beta,
                   gamma=oc.gamma, failed=failed)

    def expected_l(self) -> float:
        """What L must equal given the stored fields: the exact weighted
        sum, or the infinite sentinel for failed candidates."""
        if self.failed:
            return float("inf")
        return self.alpha * self.E + self.beta * self.P + self.gamma * self.O


def normalized_distance(a, b) -> float:
    """Frobenius distance divided by sqrt(element count)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    d = a - b
    return float(np.sqrt((d * d).sum() / d.size))


def train_candidate(genome: Genome, encoder: Encoder, images, cfg: TrainConfig,
                    seed: int, plan=DEFAULT_PLAN, features=None):
    """Train a fresh decoder for image reconstruction.

    One Adam step per image, cycling the training set in order; style
    transforms stay off throughout. Returns (decoder, last training
    loss). Pass precomputed encoder `features` to skip re-encoding when
    many candidates train on the same set.
    """
    if len(images) == 0:
        raise ValueError("training set is empty")
    if features is None:
        features = [encoder.forward(img) for img in images]
    targets = [Tensor(np.asarray(img, dtype=np.float64)) for img in images]
    decoder = Decoder(genome, plan, seed)
    if cfg.steps == 0:
        vals = [mse_loss(decoder.forward(f), t).item()
                for f, t in zip(features, targets)]
        return decoder, float(np.mean(vals))
    opt = Adam(decoder.parameters(), lr=cfg.lr, betas=(cfg.beta1, cfg.beta2),
               eps=cfg.eps)
    last = float("nan")
    for step in range(cfg.steps):
        i = step % len(images)
        opt.zero_grad()
        with Tape() as tape:
            out = decoder.forward(features[i])
            loss = mse_loss(out, targets[i])
            tape.backward(loss)
        last = loss.item()
        if not np.isfinite(last):
            raise TrainingDiverged(f"training loss became {last} at step {step}")
        opt.step()
    return decoder, last


@dataclass
class Oracle:
    """The frozen reference network and its cached stylized outputs,
    one per validation pair."""

    net: StyleNet
    outputs: list


def train_oracle(cfg: RunConfig, train_images, pairs) -> Oracle:
    """Train the reference network (ten-fold step budget) and stylize
    every validation pair once."""
    encoder = Encoder(derive_seed(cfg.seed, DOMAIN_ENCODER), cfg.channel_plan)
    oracle_train = TrainConfig(steps=cfg.oracle.steps, lr=cfg.train.lr,
                               beta1=cfg.train.beta1, beta2=cfg.train.beta2,
                               eps=cfg.train.eps)
    decoder, _ = train_candidate(
        ORACLE_GENOME, encoder, train_images, oracle_train,
        derive_seed(cfg.seed, DOMAIN_ORACLE), cfg.channel_plan)
    net = StyleNet(encoder, decoder)
    outputs = [net.stylize(c, s, cfg.objective.eig_floor) for c, s in pairs]
    return Oracle(net, outputs)


def save_array(path, arr) -> None:
    with open(path, "wb") as fh:
        fh.write(ARRAY_MAGIC)
        write_array(fh, np.asarray(arr, dtype=np.float64))


def load_array(path) -> np.ndarray:
    with open(path, "rb") as fh:
        if fh.read(len(ARRAY_MAGIC)) != ARRAY_MAGIC:
            raise ValueError(f"{path}: not a tensor file")
        arr = read_array(fh)
        if fh.read(1):
            raise ValueError(f"{path}: trailing bytes")
    return arr


def _array_sha(arr) -> str:
    return hashlib.sha256(
        np.ascontiguousarray(arr, dtype="<f8").tobytes()
    ).hexdigest()


def _file_sha(path) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _manifest_inputs(cfg: RunConfig, pairs) -> dict:
    return {
        "genome": ORACLE_GENOME.to_string(),
        "seed": cfg.seed,
        "image_size": cfg.image_size,
        "channel_plan": list(cfg.channel_plan),
        "oracle_steps": cfg.oracle.steps,
        "lr": cfg.train.lr,
        "eig_floor": cfg.objective.eig_floor,
        "content_hashes": [_array_sha(c) for c, _ in pairs],
        "style_hashes": [_array_sha(s) for _, s in pairs],
    }


def oracle_cache_ok(cache_dir, cfg: RunConfig, pairs) -> bool:
    """True when the cache directory holds outputs for exactly this
    oracle configuration and validation set."""
    manifest_path = os.path.join(cache_dir, MANIFEST_NAME)
    if not os.path.exists(manifest_path):
        return False
    try:
        with open(manifest_path, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
    except (json.JSONDecodeError, OSError):
        return False
    if manifest.get("inputs") != _manifest_inputs(cfg, pairs):
        return False
    ckpt = os.path.join(cache_dir, ORACLE_CHECKPOINT)
    if not os.path.exists(ckpt) or _file_sha(ckpt) != manifest.get("checkpoint_sha"):
        return False
    files = manifest.get("output_files", [])
    hashes = manifest.get("output_hashes", [])
    if len(files) != len(pairs) or len(hashes) != len(pairs):
        return False
    for name, want in zip(files, hashes):
        path = os.path.join(cache_dir, name)
        if not os.path.exists(path):
            return False
        try:
            stored = load_array(path)
        except ValueError:
            return False
        if _array_sha(stored) != want:
            return False
    return True


def write_oracle_cache(cache_dir, oracle: Oracle, cfg: RunConfig, pairs) -> None:
    os.makedirs(cache_dir, exist_ok=True)
    ckpt = os.path.join(cache_dir, ORACLE_CHECKPOINT)
    save_checkpoint(ckpt, oracle.net)
    files = []
    for i, out in enumerate(oracle.outputs):
        name = f"output_{i:03d}.arr"
        save_array(os.path.join(cache_dir, name), out)
        files.append(name)
    manifest = {
        "inputs": _manifest_inputs(cfg, pairs),
        "checkpoint_sha": _file_sha(ckpt),
        "output_files": files,
        "output_hashes": [_array_sha(o) for o in oracle.outputs],
    }
    with open(os.path.join(cache_dir, MANIFEST_NAME), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_oracle_cache(cache_dir) -> Oracle:
    """Load a cached oracle; callers wanting validity against a config
    and dataset should check `oracle_cache_ok` first."""
    manifest_path = os.path.join(cache_dir, MANIFEST_NAME)
    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    net = load_checkpoint(os.path.join(cache_dir, ORACLE_CHECKPOINT))
    outputs = [load_array(os.path.join(cache_dir, name))
               for name in manifest["output_files"]]
    return Oracle(net, outputs)


class Evaluator:
    """Shared read-only scoring context: encoder, extractor, oracle
    outputs, and every per-pair quantity that does not depend on the
    candidate. Safe to call from multiple worker threads."""

    def __init__(self, cfg: RunConfig, train_images, pairs, oracle: Oracle):
        if len(oracle.outputs) != len(pairs):
            raise ValueError("oracle cache size does not match validation set")
        self.cfg = cfg
        self.encoder = oracle.net.encoder
        self.extractor = Encoder(derive_seed(cfg.seed, DOMAIN_EXTRACTOR),
                                 cfg.channel_plan)
        self.train_images = list(train_images)
        self.train_features = [self.encoder.forward(img) for img in self.train_images]
        self.pairs = list(pairs)
        self.oracle_outputs = [np.asarray(o, dtype=np.float64) for o in oracle.outputs]
        floor = cfg.objective.eig_floor
        self.content_features = [self.encoder.forward(c) for c, _ in self.pairs]
        self.style_contexts = [
            StyleContext(self.encoder.forward(s), floor) for _, s in self.pairs
        ]
        # The transformed bottleneck only depends on the pair, never on
        # the candidate, so compute it once per pair.
        self.bottleneck = [
            ctx.transform(feats[-1], len(feats))
            for feats, ctx in zip(self.content_features, self.style_contexts)
        ]
        self.oracle_stages = [self.extractor.forward(o) for o in self.oracle_outputs]

    def candidate_seed(self, genome: Genome) -> int:
        return derive_seed(self.cfg.seed, DOMAIN_CANDIDATE, genome.as_int())

    def stylize_decoder(self, decoder: Decoder, pair_index: int) -> np.ndarray:
        """Stylize one validation pair with a trained decoder, reusing
        the per-pair caches."""
        return decoder.forward(
            self.content_features[pair_index],
            style_ctx=self.style_contexts[pair_index],
            bottleneck_cache=self.bottleneck[pair_index],
        ).data

    def score_decoder(self, decoder: Decoder) -> tuple[float, float]:
        """E and P of an already-trained decoder over the validation set."""
        pixel, percep = [], []
        for i in range(len(self.pairs)):
            out = self.stylize_decoder(decoder, i)
            pixel.append(normalized_distance(out, self.oracle_outputs[i]))
            stages = self.extractor.forward(out)
            percep.append(sum(
                normalized_distance(a, b)
                for a, b in zip(stages, self.oracle_stages[i])
            ))
        return float(np.mean(pixel)), float(np.mean(percep))

    def evaluate(self, genome: Genome) -> ObjectiveBreakdown:
        """Train a fresh decoder for this genome and score it."""
        oc = self.cfg.objective
        o_term = genome.operator_fraction
        try:
            decoder, _ = train_candidate(
                genome, self.encoder, self.train_images, self.cfg.train,
                self.candidate_seed(genome), self.cfg.channel_plan,
                features=self.train_features)
        except TrainingDiverged:
            return ObjectiveBreakdown.build(0.0, 0.0, o_term, oc, failed=True)
        e_term, p_term = self.score_decoder(decoder)
        return ObjectiveBreakdown.build(e_term, p_term, o_term, oc)

    def train_decoder(self, genome: Genome) -> Decoder:
        """The same training path `evaluate` uses, returning the decoder
        (for saving the winner as a checkpoint)."""
        decoder, _ = train_candidate(
            genome, self.encoder, self.train_images, self.cfg.train,
            self.candidate_seed(genome), self.cfg.channel_plan,
            features=self.train_features)
        return decoder
