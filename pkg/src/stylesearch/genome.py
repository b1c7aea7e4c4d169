"""31-bit genomes describing decoder wirings.

Bit layout, most significant first in the string form:

    bit 0        whitening-coloring transform at the bottleneck
    bits 1-6     stage 5 flags   (deepest decoder stage)
    bits 7-12    stage 4 flags
    bits 13-18   stage 3 flags
    bits 19-24   stage 2 flags
    bits 25-30   stage 1 flags   (full-resolution stage)

Each stage's six flags, in order: extra_conv_a, extra_conv_b,
instance_norm, wct, skip, skip_concat. The skip_concat flag selects
concat-and-project merging for the stage's encoder skip connection and
is inert while skip is 0; it still counts toward the operator fraction,
which is defined on raw bits.
"""

from __future__ import annotations

from dataclasses import dataclass

GENOME_BITS = 31
P_FLIP_DEFAULT = 1.0 / GENOME_BITS
STAGE_COUNT = 5
STAGE_FLAGS = 6
STAGE_FLAG_NAMES = (
    "extra_conv_a",
    "extra_conv_b",
    "instance_norm",
    "wct",
    "skip",
    "skip_concat",
)


@dataclass(frozen=True)
class StagePlan:
    """Resolved flags for one decoder stage."""

    stage: int
    extra_conv_a: bool
    extra_conv_b: bool
    instance_norm: bool
    wct: bool
    skip: bool
    skip_concat: bool


@dataclass(frozen=True)
class DecoderLayout:
    """Structural description of a decoder: bottleneck flag plus the five
    stage plans ordered deepest (stage 5) to shallowest (stage 1)."""

    bottleneck_wct: bool
    stages: tuple[StagePlan, ...]


def stage_bit_range(stage: int) -> tuple[int, int]:
    """Half-open bit range [lo, hi) holding the flags of a stage (5..1)."""
    if not 1 <= stage <= STAGE_COUNT:
        raise ValueError(f"stage must be in 1..{STAGE_COUNT}, got {stage}")
    lo = 1 + (STAGE_COUNT - stage) * STAGE_FLAGS
    return lo, lo + STAGE_FLAGS


@dataclass(frozen=True)
class Genome:
    """Immutable 31-bit vector with decode, mutation and distance helpers."""

    bits: tuple[int, ...]

    def __post_init__(self):
        if len(self.bits) != GENOME_BITS:
            raise ValueError(f"genome needs {GENOME_BITS} bits, got {len(self.bits)}")
        if any(b not in (0, 1) for b in self.bits):
            raise ValueError("genome bits must be 0 or 1")

    @classmethod
    def from_string(cls, s: str) -> "Genome":
        """Parse a strict 31-character 0/1 string."""
        if len(s) != GENOME_BITS or any(ch not in "01" for ch in s):
            raise ValueError(f"expected {GENOME_BITS} chars of 0/1, got {s!r}")
        return cls(tuple(int(ch) for ch in s))

    @classmethod
    def parse_code(cls, s: str) -> "Genome":
        """Parse a genome code leniently.

        Accepts the strict 31-character form, plus 32-character codes
        with a leading '0' pad (a common way these nets are quoted),
        ignoring surrounding whitespace.
        """
        t = s.strip()
        if len(t) == GENOME_BITS + 1 and t[0] == "0":
            t = t[1:]
        return cls.from_string(t)

    @classmethod
    def random(cls, rng) -> "Genome":
        """Draw each bit Bernoulli(1/2) from a numpy Generator."""
        return cls(tuple(int(b) for b in rng.integers(0, 2, size=GENOME_BITS)))

    @classmethod
    def zeros(cls) -> "Genome":
        return cls((0,) * GENOME_BITS)

    def to_string(self) -> str:
        return "".join(str(b) for b in self.bits)

    def as_int(self) -> int:
        """Bits packed into an int, bit 0 most significant."""
        value = 0
        for b in self.bits:
            value = (value << 1) | b
        return value

    @property
    def popcount(self) -> int:
        return sum(self.bits)

    @property
    def operator_fraction(self) -> float:
        """Fraction of set bits, the O term of the search objective."""
        return self.popcount / GENOME_BITS

    def mutate(self, rng, p_flip: float = P_FLIP_DEFAULT) -> "Genome":
        """Flip each bit independently with probability p_flip; if that
        changes nothing, flip one uniformly chosen bit so children always
        differ from their parent. Returns a new genome."""
        if not 0.0 < p_flip <= 1.0:
            raise ValueError("p_flip must be in (0, 1]")
        flips = rng.random(GENOME_BITS) < p_flip
        if not flips.any():
            flips[int(rng.integers(0, GENOME_BITS))] = True
        return Genome(tuple(b ^ int(f) for b, f in zip(self.bits, flips)))

    def hamming(self, other: "Genome") -> int:
        return sum(a != b for a, b in zip(self.bits, other.bits))

    def decode(self) -> DecoderLayout:
        """Expand the bit vector into a structural decoder description."""
        stages = []
        for stage in range(STAGE_COUNT, 0, -1):
            lo, hi = stage_bit_range(stage)
            flags = self.bits[lo:hi]
            stages.append(StagePlan(stage, *(bool(f) for f in flags)))
        return DecoderLayout(bottleneck_wct=bool(self.bits[0]), stages=tuple(stages))

    def __str__(self):
        return self.to_string()
