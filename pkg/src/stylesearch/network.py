"""Auto-encoder networks assembled from decoded genomes.

The encoder is a fixed five-stage conv stack (stage 1 at full resolution,
each later stage halving resolution with average pooling and doubling
channels). Decoders mirror it stage by stage; a genome decides, per
stage, which optional operators are wired in: extra convolutions,
instance normalization, whitening-coloring transforms, and encoder skip
connections merged by addition or by concat-and-project.

Decoders are trained for plain reconstruction. Style transfer happens
only at inference: the flagged whitening-coloring points re-align the
running feature statistics to those of a style image. That transform is
a statistical surgery, not a differentiable op, so stylized forwards
refuse to run under a gradient tape.
"""

from __future__ import annotations

import struct

import numpy as np

from stylesearch import kernels
from stylesearch.genome import Genome
from stylesearch.linalg import covariance, sym_pow
from stylesearch.tensor import (
    Tensor,
    active_tape,
    add,
    concat,
    conv2d,
    instance_norm,
    relu,
    upsample_nearest,
)

DEFAULT_PLAN = (8, 16, 32, 64, 128)
STAGES = 5
DOWNSCALE = 2 ** (STAGES - 1)
DEFAULT_EIG_FLOOR = 1e-8

CHECKPOINT_MAGIC = b"SSNET\x00\x01\x00"


def he_conv_init(rng, c_out: int, c_in: int, k: int):
    """Kaiming-normal weight and zero bias for a conv layer."""
    scale = np.sqrt(2.0 / (c_in * k * k))
    w = rng.standard_normal((c_out, c_in, k, k)) * scale
    b = np.zeros(c_out)
    return w, b


class Encoder:
    """Frozen five-stage feature extractor over 3xHxW images in [0, 1]."""

    def __init__(self, seed: int, plan=DEFAULT_PLAN):
        if len(plan) != STAGES:
            raise ValueError(f"channel plan needs {STAGES} entries")
        self.seed = int(seed)
        self.plan = tuple(int(c) for c in plan)
        rng = np.random.default_rng(np.random.SeedSequence(self.seed))
        self.weights = []
        c_prev = 3
        for c in self.plan:
            self.weights.append(he_conv_init(rng, c, c_prev, 3))
            c_prev = c

    def forward(self, image) -> list[np.ndarray]:
        """Feature maps of all five stages, shallowest first."""
        x = np.ascontiguousarray(image, dtype=np.float64)
        if x.ndim != 3 or x.shape[0] != 3:
            raise ValueError("encoder expects a 3xHxW image")
        if x.shape[1] % DOWNSCALE or x.shape[2] % DOWNSCALE:
            raise ValueError(f"image sides must be divisible by {DOWNSCALE}")
        feats = []
        for i, (w, b) in enumerate(self.weights):
            if i > 0:
                x = kernels.avgpool2_forward(x)
            x = np.maximum(kernels.conv2d_forward(x, w, b, 1), 0.0)
            feats.append(x)
        return feats

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in self.weights:
            out.extend((w, b))
        return out


def _flatten(feat):
    f = np.asarray(feat, dtype=np.float64)
    if f.ndim != 3:
        raise ValueError("feature maps are CHW")
    return f.reshape(f.shape[0], -1)


def style_coloring(style_feat, eig_floor: float = DEFAULT_EIG_FLOOR):
    """Precompute the coloring transform of a style feature map:
    the square-root covariance and the channel means."""
    fs = _flatten(style_feat)
    mean, cov = covariance(fs)
    return sym_pow(cov, 0.5, eig_floor), mean


def whiten(content_feat, eig_floor: float = DEFAULT_EIG_FLOOR):
    """Center a feature map and equalize its channel covariance."""
    fc = _flatten(content_feat)
    mean, cov = covariance(fc)
    white = sym_pow(cov, -0.5, eig_floor) @ (fc - mean[:, None])
    return white.reshape(np.asarray(content_feat).shape)


def wct(content_feat, style_feat, eig_floor: float = DEFAULT_EIG_FLOOR):
    """Whitening-coloring transform: re-express content features with the
    channel statistics (mean and covariance) of the style features."""
    c = np.asarray(content_feat).shape[0]
    s = np.asarray(style_feat).shape[0]
    if c != s:
        raise ValueError(f"channel mismatch in wct: content {c} vs style {s}")
    coloring, style_mean = style_coloring(style_feat, eig_floor)
    white = _flatten(whiten(content_feat, eig_floor))
    out = coloring @ white + style_mean[:, None]
    return out.reshape(np.asarray(content_feat).shape)


class StyleContext:
    """Style-side transforms of one style image, computed once and reused
    across every decoder that stylizes against it."""

    def __init__(self, style_features, eig_floor: float = DEFAULT_EIG_FLOOR):
        self.eig_floor = eig_floor
        self.colorings = [style_coloring(f, eig_floor) for f in style_features]

    def transform(self, content_feat, stage: int):
        """Whiten a content feature map and color it with the stored
        stage statistics."""
        coloring, style_mean = self.colorings[stage - 1]
        c = np.asarray(content_feat).shape[0]
        if coloring.shape[0] != c:
            raise ValueError(
                f"channel mismatch in wct at stage {stage}: {c} vs {coloring.shape[0]}"
            )
        white = _flatten(whiten(content_feat, self.eig_floor))
        out = coloring @ white + style_mean[:, None]
        return out.reshape(np.asarray(content_feat).shape)


class Decoder:
    """Trainable decoder whose wiring is decided by a genome."""

    def __init__(self, genome: Genome, plan=DEFAULT_PLAN, seed: int = 0):
        if len(plan) != STAGES:
            raise ValueError(f"channel plan needs {STAGES} entries")
        self.genome = genome
        self.plan = tuple(int(c) for c in plan)
        self.seed = int(seed)
        self.layout = genome.decode()
        rng = np.random.default_rng(np.random.SeedSequence(self.seed))
        self._params: list[Tensor] = []
        self.stage_convs = []

        def make_conv(c_out, c_in, k):
            w, b = he_conv_init(rng, c_out, c_in, k)
            wt = Tensor(w, requires_grad=True)
            bt = Tensor(b, requires_grad=True)
            self._params.extend((wt, bt))
            return wt, bt

        for sp in self.layout.stages:
            c = self.plan[sp.stage - 1]
            c_next = self.plan[sp.stage - 2] if sp.stage >= 2 else self.plan[0]
            convs = {}
            if sp.skip and sp.skip_concat:
                convs["proj"] = make_conv(c, 2 * c, 1)
            if sp.extra_conv_a:
                convs["extra_a"] = make_conv(c, c, 3)
            if sp.extra_conv_b:
                convs["extra_b"] = make_conv(c, c, 3)
            convs["main"] = make_conv(c_next, c, 3)
            self.stage_convs.append(convs)
        self.final_conv = make_conv(3, self.plan[0], 3)

    def parameters(self) -> list[Tensor]:
        return list(self._params)

    @property
    def param_count(self) -> int:
        return sum(t.size for t in self._params)

    def forward(self, features, style_ctx: StyleContext | None = None,
                bottleneck_cache=None) -> Tensor:
        """Decode encoder features back to an image.

        With a `style_ctx`, flagged whitening-coloring points fire and
        the result is a stylization; `bottleneck_cache` can supply the
        already-transformed bottleneck feature map (it only depends on
        the content/style pair, so callers evaluating many decoders
        against fixed pairs precompute it).
        """
        stylizing = style_ctx is not None
        if stylizing and active_tape() is not None:
            raise RuntimeError("stylized forward is not differentiable")
        x_nd = np.asarray(features[STAGES - 1], dtype=np.float64)
        if stylizing and self.layout.bottleneck_wct:
            if bottleneck_cache is not None:
                x_nd = bottleneck_cache
            else:
                x_nd = style_ctx.transform(x_nd, STAGES)
        x = Tensor(x_nd)
        for sp, convs in zip(self.layout.stages, self.stage_convs):
            if sp.stage < STAGES:
                x = upsample_nearest(x, 2)
            if sp.skip:
                f = Tensor(np.asarray(features[sp.stage - 1], dtype=np.float64))
                if sp.skip_concat:
                    w, b = convs["proj"]
                    x = conv2d(concat(x, f), w, b)
                else:
                    x = add(x, f)
            if stylizing and sp.wct:
                x = Tensor(style_ctx.transform(x.data, sp.stage))
            if sp.extra_conv_a:
                w, b = convs["extra_a"]
                x = relu(conv2d(x, w, b))
            if sp.extra_conv_b:
                w, b = convs["extra_b"]
                x = relu(conv2d(x, w, b))
            w, b = convs["main"]
            x = relu(conv2d(x, w, b))
            if sp.instance_norm:
                x = instance_norm(x)
        w, b = self.final_conv
        return conv2d(x, w, b)

    def arrays(self) -> list[np.ndarray]:
        return [t.data for t in self._params]


class StyleNet:
    """Encoder plus a genome-decoded decoder, as one unit."""

    def __init__(self, encoder: Encoder, decoder: Decoder):
        if encoder.plan != decoder.plan:
            raise ValueError("encoder and decoder channel plans differ")
        self.encoder = encoder
        self.decoder = decoder

    @property
    def genome(self) -> Genome:
        return self.decoder.genome

    @property
    def plan(self):
        return self.decoder.plan

    def reconstruct(self, image):
        """Round-trip an image through the auto-encoder."""
        return self.decoder.forward(self.encoder.forward(image)).data

    def stylize(self, content_image, style_image,
                eig_floor: float = DEFAULT_EIG_FLOOR):
        """Rebuild the content image with flagged feature statistics
        swapped for those of the style image."""
        content_feats = self.encoder.forward(content_image)
        style_feats = self.encoder.forward(style_image)
        ctx = StyleContext(style_feats, eig_floor)
        return self.decoder.forward(content_feats, style_ctx=ctx).data


def build_network(genome: Genome, plan=DEFAULT_PLAN, encoder_seed: int = 0,
                  decoder_seed: int = 0) -> StyleNet:
    return StyleNet(Encoder(encoder_seed, plan), Decoder(genome, plan, decoder_seed))


def write_array(fh, arr: np.ndarray) -> None:
    """Append one array: rank, extents, then little-endian float64 data."""
    fh.write(struct.pack("<B", arr.ndim))
    for d in arr.shape:
        fh.write(struct.pack("<I", d))
    fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def _read_exact(fh, n: int) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise ValueError("truncated checkpoint")
    return buf


def read_array(fh) -> np.ndarray:
    """Inverse of `write_array`."""
    (ndim,) = struct.unpack("<B", _read_exact(fh, 1))
    shape = tuple(struct.unpack("<I", _read_exact(fh, 4))[0] for _ in range(ndim))
    count = int(np.prod(shape)) if shape else 1
    data = np.frombuffer(_read_exact(fh, 8 * count), dtype="<f8")
    return data.reshape(shape).astype(np.float64)


def save_checkpoint(path, net: StyleNet) -> None:
    """Write a network to a self-contained binary file: magic, genome,
    channel plan, then every parameter array as little-endian float64."""
    arrays = net.encoder.arrays() + net.decoder.arrays()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        genome_bytes = net.genome.to_string().encode("ascii")
        fh.write(struct.pack("<B", len(genome_bytes)))
        fh.write(genome_bytes)
        fh.write(struct.pack("<B", len(net.plan)))
        for c in net.plan:
            fh.write(struct.pack("<I", c))
        fh.write(struct.pack("<Q", net.encoder.seed))
        fh.write(struct.pack("<Q", net.decoder.seed))
        fh.write(struct.pack("<I", len(arrays)))
        for arr in arrays:
            write_array(fh, arr)


def load_checkpoint(path) -> StyleNet:
    """Rebuild a network saved by `save_checkpoint`, bit-exact."""
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a network checkpoint")
        (glen,) = struct.unpack("<B", _read_exact(fh, 1))
        genome = Genome.from_string(_read_exact(fh, glen).decode("ascii"))
        (plen,) = struct.unpack("<B", _read_exact(fh, 1))
        plan = tuple(struct.unpack("<I", _read_exact(fh, 4))[0] for _ in range(plen))
        (enc_seed,) = struct.unpack("<Q", _read_exact(fh, 8))
        (dec_seed,) = struct.unpack("<Q", _read_exact(fh, 8))
        (n_arrays,) = struct.unpack("<I", _read_exact(fh, 4))
        arrays = [read_array(fh) for _ in range(n_arrays)]
        if fh.read(1):
            raise ValueError("trailing bytes in checkpoint")
    net = build_network(genome, plan, enc_seed, dec_seed)
    slots = net.encoder.arrays() + net.decoder.arrays()
    if len(slots) != len(arrays):
        raise ValueError("checkpoint parameter count does not match genome")
    for slot, arr in zip(slots, arrays):
        if slot.shape != arr.shape:
            raise ValueError("checkpoint array shape mismatch")
        slot[...] = arr
    return net
