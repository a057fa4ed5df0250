"""Digital periphery: sign handling, two-cycle nibble accumulation, and the
shift-add tree that combines per-slice ADC codes into full MACs.

The adder tree has four levels; level i merges the codes of 2^i slices.
Two's-complement operands place one bit plane per slice (MSB plane negated,
its +1 absorbed by the accumulator), ternary operands arrive pre-subtracted
by the differential ADC, one signed trit plane per slice pair.
"""

from __future__ import annotations

from dataclasses import dataclass

from .adc import AdcCode

TREE_LEVELS = 4
TWOS_BITWIDTHS = (1, 2, 4, 8)


@dataclass(frozen=True)
class PartialSum:
    value: int
    weight_bit_index: int = 0
    input_nibble_index: int = 0

    def __post_init__(self):
        if self.input_nibble_index not in (0, 1):
            raise ValueError("input_nibble_index outside {0, 1}")
        if self.weight_bit_index < 0:
            raise ValueError("negative weight_bit_index")


@dataclass(frozen=True)
class TreeConfig:
    level: int
    encoding: str  # "twos" | "ternary"

    def __post_init__(self):
        if not 0 <= self.level < TREE_LEVELS:
            raise ValueError(f"tree level outside [0, {TREE_LEVELS - 1}]")
        if self.encoding not in ("twos", "ternary"):
            raise ValueError(f"unknown encoding: {self.encoding}")


def sign_transform(code: AdcCode, is_msb_plane: bool,
                   weight_bit_index: int = 0,
                   input_nibble_index: int = 0) -> PartialSum:
    """Zero-reference an ADC code; the MSB plane of a two's-complement weight
    carries negative significance, so its partial is negated here."""
    value = code.value
    if is_msb_plane:
        value = -value
    return PartialSum(value=value, weight_bit_index=weight_bit_index,
                      input_nibble_index=input_nibble_index)


def accumulate_nibbles(low: PartialSum, high: PartialSum) -> int:
    """Second accumulation cycle for 8-bit inputs: high nibble weighs 16."""
    if low.input_nibble_index != 0 or high.input_nibble_index != 1:
        raise ValueError("nibble partials in the wrong order")
    if low.weight_bit_index != high.weight_bit_index:
        raise ValueError("nibble partials from different bit planes")
    return low.value + 16 * high.value


def supported_bitwidths(level: int, encoding: str) -> int:
    """Weight bitwidth resolvable at a tree level: 1/2/4/8 for two's
    complement, 2^(level-1)+1 for ternary (which needs at least one pair)."""
    cfg = TreeConfig(level=level, encoding=encoding)
    if cfg.encoding == "twos":
        return TWOS_BITWIDTHS[level]
    if level == 0:
        raise ValueError("ternary encoding is unsupported at tree level 0")
    return 2 ** (level - 1) + 1


def plane_count(level: int, encoding: str) -> int:
    """Number of plane partials entering the tree at a level."""
    if encoding == "twos":
        return 2 ** level
    return 2 ** (level - 1)


def tree_combine(partials, cfg: TreeConfig) -> int:
    """Shift-add the plane partials, least-significant plane first.

    partials may be ints or PartialSums; the MSB plane of a two's-complement
    operand must already be sign_transform'ed. Sums are kept at full width,
    no saturation.
    """
    values = [p.value if isinstance(p, PartialSum) else int(p) for p in partials]
    expected = plane_count(cfg.level, cfg.encoding)
    if cfg.encoding == "ternary" and cfg.level == 0:
        raise ValueError("ternary encoding is unsupported at tree level 0")
    if len(values) != expected:
        raise ValueError(f"expected {expected} plane partials, got {len(values)}")
    return sum(v << p for p, v in enumerate(values))
