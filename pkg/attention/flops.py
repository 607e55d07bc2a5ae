# attention/flops.py
"""
Analytic multiply-accumulate counts for PL-attention (PLA) and full
self-attention over all lane tokens (MSA).

PLA is three attention blocks (PPA, LLA, PYA). The MSA baseline has the same
depth: one full attention layer over all N(M+1) tokens per PLA block.

Convention: every token entering a block pays Q/K/V/output projections
(4*C^2 MACs). Each (query, key) pair pays C MACs for the score and C for the
weighted sum, summed over heads. Softmax exponentials are counted separately
and left out of ``total``. Position-embedding and EP-head MLPs are identical
for both kinds and not counted.

``score_units`` is the pair count of one pass: PPA + LLA + PYA for PLA, one
full layer for MSA.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

from lanes.errors import InvalidConfig

KINDS = ("PLA", "MSA")
BLOCKS = 3


@dataclass(frozen=True)
class FlopCount:
    kind: str
    n: int
    m: int
    c: int
    heads: int
    blocks: int
    projection_macs: int
    score_macs: int
    weighted_sum_macs: int
    softmax_ops: int
    score_units: int

    @property
    def attention_macs(self) -> int:
        return self.score_macs + self.weighted_sum_macs

    @property
    def total(self) -> int:
        return self.projection_macs + self.attention_macs

    @property
    def flops(self) -> int:
        return 2 * self.total

    def to_dict(self) -> dict:
        out = asdict(self)
        out.update(attention_macs=self.attention_macs, total=self.total, flops=self.flops)
        return out


def score_units(kind: str, n: int, m: int) -> int:
    """Number of (query, key) pairs scored in one pass."""
    if kind == "PLA":
        # PPA per lane, LLA over CLS tokens, PYA per y index
        return n * (m + 1) ** 2 + n ** 2 + m * n ** 2
    return (n * (m + 1)) ** 2


def scored_pairs(kind: str, n: int, m: int) -> int:
    units = score_units(kind, n, m)
    return units if kind == "PLA" else BLOCKS * units


def projected_tokens(kind: str, n: int, m: int) -> int:
    if kind == "PLA":
        return n * (m + 1) + n + n * m
    return BLOCKS * n * (m + 1)


def flop_estimate(kind: str, n: int, m: int, c: int, heads: int = 1) -> FlopCount:
    kind = str(kind).upper()
    if kind not in KINDS:
        raise InvalidConfig(f"kind must be one of {KINDS}, got {kind!r}")
    for name, value in (("n", n), ("m", m), ("c", c), ("heads", heads)):
        if int(value) != value or value < 1:
            raise InvalidConfig(f"{name} must be a positive integer, got {value!r}")
    if c % heads:
        raise InvalidConfig(f"c ({c}) must be divisible by heads ({heads})")
    pairs = scored_pairs(kind, n, m)
    return FlopCount(
        kind=kind, n=n, m=m, c=c, heads=heads, blocks=BLOCKS,
        projection_macs=projected_tokens(kind, n, m) * 4 * c * c,
        score_macs=pairs * c,
        weighted_sum_macs=pairs * c,
        softmax_ops=pairs * heads,
        score_units=score_units(kind, n, m),
    )
