"""Shared helpers: hand-rolled oracles and sequence builders."""

from __future__ import annotations

import numpy as np
import pytest

from stripekit.codec import AceSequence, Side
from stripekit.minutiae import (
    Minutia,
    MinutiaKind,
    RegionId,
    canonical_keypoints,
)


def make_minutia(
    kind: MinutiaKind,
    region: RegionId = RegionId.FORE,
    orientation: float = 30.0,
    branch: float | None = None,
    convergence: float | None = None,
) -> Minutia:
    """Valid minutia with template keypoints and lawful default angles."""
    if kind is MinutiaKind.CONVERGENCE and not 180.0 <= orientation % 360.0 < 360.0:
        orientation = 200.0
    if kind is not MinutiaKind.RIDGE and branch is None:
        branch = 45.0
    if kind is MinutiaKind.ENCLOSURE and convergence is None:
        convergence = 45.0
    return Minutia(
        kind=kind,
        keypoints=canonical_keypoints(kind),
        orientation_deg=orientation,
        region=region,
        branch_deg=branch,
        convergence_deg=convergence,
    )


def make_sequence(specs, anchor: int = 0, side: Side = Side.LEFT) -> AceSequence:
    """Build a sequence from (kind, region, orientation, rc) tuples."""
    minutiae = []
    counts = []
    for kind, region, orientation, rc in specs:
        minutiae.append(make_minutia(kind, region, orientation))
        counts.append(rc)
    return AceSequence(tuple(minutiae), tuple(counts), anchor_index=anchor, side=side)


def random_valid_sequence(rng: np.random.Generator, min_len: int = 1, max_len: int = 30) -> AceSequence:
    """Random grammatical sequence with regions in cyclic scan order."""
    kinds = list(MinutiaKind)
    n = int(rng.integers(min_len, max_len + 1))
    per_region = rng.multinomial(n, [1 / 3, 1 / 3, 1 / 3])
    specs = []
    for region, count in zip(RegionId, per_region):
        for _ in range(count):
            kind = kinds[int(rng.integers(4))]
            if kind is MinutiaKind.CONVERGENCE:
                orientation = float(rng.uniform(180.0, 360.0))
            else:
                orientation = float(rng.uniform(0.0, 360.0))
            specs.append((kind, region, orientation, int(rng.integers(0, 7))))
    if not specs:
        specs = [(MinutiaKind.RIDGE, RegionId.FORE, 10.0, 0)]
    anchor = int(rng.integers(len(specs)))
    side = Side.LEFT if rng.random() < 0.5 else Side.RIGHT
    return make_sequence(specs, anchor=anchor, side=side)


def bilinear_scalar(image: np.ndarray, x: float, y: float, fill: float | None = 0.0) -> float:
    """Literal per-pixel bilinear lookup, the sampling oracle for warps."""
    h, w = image.shape
    if fill is None:
        x = min(max(x, 0.0), w - 1.0)
        y = min(max(y, 0.0), h - 1.0)
    elif x < 0.0 or x > w - 1.0 or y < 0.0 or y > h - 1.0:
        return fill
    x0 = int(np.floor(x))
    y0 = int(np.floor(y))
    x1 = min(x0 + 1, w - 1)
    y1 = min(y0 + 1, h - 1)
    fx = x - x0
    fy = y - y0
    top = image[y0, x0] * (1.0 - fx) + image[y0, x1] * fx
    bot = image[y1, x0] * (1.0 - fx) + image[y1, x1] * fx
    return top * (1.0 - fy) + bot * fy


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
