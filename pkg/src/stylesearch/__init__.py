"""Evolutionary search over decoder wirings for style-transfer auto-encoders.

The package trains small reconstruction decoders described by 31-bit
genomes, scores them against a fixed oracle, and evolves the population
with an asynchronous aging tournament. Hot numeric kernels run through a
compiled extension when it is available and fall back to numpy otherwise
(see `stylesearch.kernels`).
"""

__version__ = "0.1.0"

from stylesearch.config import RunConfig
from stylesearch.genome import Genome
from stylesearch.network import (
    StyleNet,
    build_network,
    load_checkpoint,
    save_checkpoint,
)
from stylesearch.objective import Evaluator, train_candidate, train_oracle
from stylesearch.search import (
    best_record,
    read_history,
    run_random_search,
    run_search,
)
from stylesearch.tensor import Adam, Tape, Tensor

__all__ = [
    "Adam",
    "Evaluator",
    "Genome",
    "RunConfig",
    "StyleNet",
    "Tape",
    "Tensor",
    "__version__",
    "best_record",
    "build_network",
    "load_checkpoint",
    "read_history",
    "run_random_search",
    "run_search",
    "save_checkpoint",
    "train_candidate",
    "train_oracle",
]
