"""Dataset assembly: load image directories or synthesize a corpus.

A run needs a training set (images the oracle and candidates train on)
and validation pairs (content, style). With directories configured the
images come from disk; otherwise a deterministic synthetic corpus is
generated from the run seed, so every experiment works with zero
external data.
"""

from __future__ import annotations

from stylesearch.config import DOMAIN_DATA, RunConfig, derive_seed
from stylesearch.images import load_dir, synth_images


class DataError(Exception):
    """Missing, malformed, or mismatched input data (CLI exit code 2)."""


class NumericalError(Exception):
    """A numerical routine failed to converge or produced non-finite
    values where finite ones are required (CLI exit code 3)."""


def _check_sizes(images, names, size: int, where: str) -> None:
    for img, name in zip(images, names):
        c, h, w = img.shape
        if (h, w) != (size, size):
            raise DataError(
                f"{where}: {name} is {h}x{w}, config expects {size}x{size}")
        if c != 3:
            raise DataError(f"{where}: {name} has {c} channels, need 3")


def load_datasets(cfg: RunConfig):
    """Return (train_images, pairs) for a run config.

    pairs is a list of (content, style) image tuples. Directory inputs
    must match the configured image size exactly; the synthetic fallback
    derives three disjoint seeded sets from the run seed.
    """
    d = cfg.data
    dirs = (d.train_dir, d.content_dir, d.style_dir)
    if any(dirs) and not all(dirs):
        raise DataError(
            "either all of train/content/style dirs are set, or none")
    if d.train_dir is None:
        train = synth_images(d.train_count, cfg.image_size,
                             derive_seed(cfg.seed, DOMAIN_DATA, 0))
        content = synth_images(d.pair_count, cfg.image_size,
                               derive_seed(cfg.seed, DOMAIN_DATA, 1))
        style = synth_images(d.pair_count, cfg.image_size,
                             derive_seed(cfg.seed, DOMAIN_DATA, 2))
    else:
        try:
            train, train_names = load_dir(d.train_dir)
            content, content_names = load_dir(d.content_dir)
            style, style_names = load_dir(d.style_dir)
        except (OSError, ValueError) as exc:
            raise DataError(str(exc)) from exc
        _check_sizes(train, train_names, cfg.image_size, d.train_dir)
        _check_sizes(content, content_names, cfg.image_size, d.content_dir)
        _check_sizes(style, style_names, cfg.image_size, d.style_dir)
        if len(train) < d.train_count:
            raise DataError(f"{d.train_dir}: {len(train)} images, "
                            f"config needs {d.train_count}")
        if len(content) < d.pair_count or len(style) < d.pair_count:
            raise DataError(f"validation dirs need {d.pair_count} images "
                            f"each, found {len(content)} and {len(style)}")
        train = train[:d.train_count]
        content = content[:d.pair_count]
        style = style[:d.pair_count]
    return list(train), list(zip(content, style))
