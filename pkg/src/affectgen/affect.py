"""Core valence-arousal value types and scale conversions.

Emotions are annotated on a 1..9 rating scale on both axes and consumed by
models on a symmetric [-1, 1] scale. The grid quantizer snaps continuous
points onto the 81 integer-coordinate prompts used by the discrete
text-prompting baseline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

RAW_LO = 1.0
RAW_HI = 9.0

_RAW_MID = 5.0
_RAW_HALFSPAN = 4.0


def _check_range(name: str, value: float, lo: float, hi: float) -> None:
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value!r}")
    if not lo <= value <= hi:
        raise ValueError(f"{name} must be within [{lo:g}, {hi:g}], got {value!r}")


@dataclass(frozen=True)
class EmotionPoint:
    """A continuous (valence, arousal) annotation on the 1..9 rating scale."""

    valence: float
    arousal: float

    def __post_init__(self) -> None:
        _check_range("valence", self.valence, RAW_LO, RAW_HI)
        _check_range("arousal", self.arousal, RAW_LO, RAW_HI)


@dataclass(frozen=True)
class NormalizedEmotion:
    """A (valence, arousal) pair on the model-facing [-1, 1] scale."""

    v_n: float
    a_n: float

    def __post_init__(self) -> None:
        _check_range("v_n", self.v_n, -1.0, 1.0)
        _check_range("a_n", self.a_n, -1.0, 1.0)


@dataclass(frozen=True)
class GridPoint:
    """Integer grid coordinates, one of the 81 points of {1..9} x {1..9}."""

    valence: int
    arousal: int

    def __post_init__(self) -> None:
        for name, value in (("valence", self.valence), ("arousal", self.arousal)):
            if isinstance(value, bool) or not isinstance(value, int):
                raise ValueError(f"{name} must be an integer, got {value!r}")
            if not 1 <= value <= 9:
                raise ValueError(f"{name} must be within {{1..9}}, got {value!r}")


def normalize_av(p: EmotionPoint) -> NormalizedEmotion:
    """Map the 1..9 rating scale onto [-1, 1], per axis."""
    return NormalizedEmotion(
        v_n=(p.valence - _RAW_MID) / _RAW_HALFSPAN,
        a_n=(p.arousal - _RAW_MID) / _RAW_HALFSPAN,
    )


def denormalize_av(n: NormalizedEmotion) -> EmotionPoint:
    """Exact inverse of :func:`normalize_av`."""
    return EmotionPoint(
        valence=_RAW_MID + _RAW_HALFSPAN * n.v_n,
        arousal=_RAW_MID + _RAW_HALFSPAN * n.a_n,
    )


def _round_half_up(x: float) -> int:
    # Fixed tie rule: exact .5 values round toward the larger integer.
    return int(math.floor(x + 0.5))


def quantize_to_grid(p: EmotionPoint) -> GridPoint:
    """Snap a continuous point to the nearest of the 81 integer grid points.

    Axes round independently; exact half-way values round up.
    """
    return GridPoint(
        valence=_round_half_up(p.valence),
        arousal=_round_half_up(p.arousal),
    )


def grid_points() -> list[GridPoint]:
    """All 81 grid points, valence-major order."""
    return [GridPoint(v, a) for v in range(1, 10) for a in range(1, 10)]
