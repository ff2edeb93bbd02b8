"""Synthetic +/-1 embedding used in place of content-adaptive embedders."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

MAX_PAYLOAD = math.log2(3)
MAX_CHANGE_RATE = 2.0 / 3.0


def ternary_entropy(beta: float) -> float:
    """Bits per pixel carried when each pixel changes by +1 or -1 with
    total probability ``beta`` (equiprobable direction)."""
    if beta <= 0:
        return 0.0
    if beta >= 1:
        return 1.0
    return -beta * math.log2(beta / 2) - (1 - beta) * math.log2(1 - beta)


def change_rate_for_payload(payload: float, tol: float = 1e-12) -> float:
    """Invert :func:`ternary_entropy` on ``[0, 2/3]`` by bisection."""
    if not 0 <= payload <= MAX_PAYLOAD + 1e-15:
        raise ValueError(f"payload must lie in [0, log2(3)], got {payload}")
    if payload == 0:
        return 0.0
    if payload >= MAX_PAYLOAD:
        return MAX_CHANGE_RATE
    lo, hi = 0.0, MAX_CHANGE_RATE
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if ternary_entropy(mid) < payload:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class EmbedParams:
    payload: float  # bits per pixel
    seed: int = 0
    change_rate: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "change_rate", change_rate_for_payload(self.payload))

    @classmethod
    def from_change_rate(cls, change_rate: float, seed: int = 0) -> "EmbedParams":
        return cls(ternary_entropy(change_rate), seed)


def lsbm_embed(cover: np.ndarray, params: EmbedParams) -> np.ndarray:
    """Change each pixel with probability ``params.change_rate`` by +1 or -1.

    Saturated pixels are pushed inwards (0 -> 1, 255 -> 254) so that the
    realised change rate stays at the target.  The draw for a pixel depends
    only on the seed and its raster index.
    """
    change_rate = params.change_rate
    cover = np.asarray(cover, dtype=np.uint8)
    rng = np.random.default_rng(params.seed)
    u = rng.random(cover.shape)
    change = u < change_rate
    # reuse the same uniform to pick the direction: below half the rate -> +1
    delta = np.where(u < change_rate / 2, 1, -1) * change
    stego = cover.astype(np.int16) + delta
    stego[(cover == 0) & change] = 1
    stego[(cover == 255) & change] = 254
    return stego.astype(np.uint8)
