"""Camera-trap-style observation of clean coat textures.

A capture crops a view window from the texture (size and position
jittered per view), applies a mild horizontal shear standing in for
viewpoint variation, downsamples with the Lanczos filter, and randomly
degrades a fraction of outputs with Gaussian noise and motion blur.
Descriptor-side degradation lives here too: junction-type minutiae can
be demoted to plain ridges, the failure mode poor imaging inflicts on
structural detail.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .augment import warp_homography
from .codec import AceSequence
from .minutiae import Minutia, MinutiaKind
from .raster import box_blur_horizontal, resize
from .util import as_rng, check_keys


class TextureTooSmall(ValueError):
    pass


@dataclass
class CaptureConfig:
    """Post-processing parameters for simulated captures.

    Crops are drawn uniformly between ``crop_min`` and ``crop_max``
    (width, height); the crop is then scaled by ``downsample_factor``.
    Gaussian noise of the configured sigma hits ``noise_prob`` of
    captures and horizontal motion blur of the configured radius hits
    ``blur_prob``.
    """

    downsample_factor: float = 0.7
    noise_sigma: float = 0.07
    noise_prob: float = 0.2
    blur_radius: int = 3
    blur_prob: float = 0.1
    crop_min: tuple[int, int] = (301, 156)
    crop_max: tuple[int, int] = (413, 195)
    shear_range: tuple[float, float] = (-0.15, 0.15)
    background: float = 0.85
    ink: float = 0.08
    views_per_id: int = 12

    def __post_init__(self) -> None:
        for name in ("noise_prob", "blur_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.crop_min[0] > self.crop_max[0] or self.crop_min[1] > self.crop_max[1]:
            raise ValueError("crop_min must not exceed crop_max")

    @classmethod
    def from_dict(cls, d: dict) -> "CaptureConfig":
        check_keys(d, cls.__dataclass_fields__, "capture config")
        kwargs = dict(d)
        for key in ("crop_min", "crop_max", "shear_range"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)


def capture(texture, cfg: CaptureConfig, view_index: int = 0, seed=None) -> tuple[np.ndarray, dict]:
    """Render one observation of a coat texture.

    ``texture`` is a stripe mask array or any object exposing one as
    ``.image``. Deterministic per (texture, cfg, view_index, seed); the
    random draw order is fixed: crop size, crop position, shear, noise
    coin, blur coin, then the noise field. Returns the image and the
    drawn parameters for manifest recording.
    """
    mask = texture.image if hasattr(texture, "image") else texture
    rng = as_rng(seed if not isinstance(seed, (int, np.integer)) else [seed, view_index])
    th, tw = mask.shape

    cw = int(rng.integers(cfg.crop_min[0], cfg.crop_max[0] + 1))
    ch = int(rng.integers(cfg.crop_min[1], cfg.crop_max[1] + 1))
    if tw < cw or th < ch:
        raise TextureTooSmall(
            f"texture {tw}x{th} cannot host a {cw}x{ch} crop window"
        )
    x0 = int(rng.integers(0, tw - cw + 1))
    y0 = int(rng.integers(0, th - ch + 1))
    shear = float(rng.uniform(*cfg.shear_range))
    apply_noise = bool(rng.random() < cfg.noise_prob)
    apply_blur = bool(rng.random() < cfg.blur_prob)

    crop = mask[y0 : y0 + ch, x0 : x0 + cw]
    image = cfg.background + (cfg.ink - cfg.background) * crop

    if shear != 0.0:
        cy = (ch - 1) / 2.0  # shear about the horizontal midline
        h = np.array([[1.0, shear, -shear * cy], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        image = warp_homography(image, h, fill=cfg.background)

    out_w = int(np.floor(cfg.downsample_factor * cw))
    out_h = int(np.floor(cfg.downsample_factor * ch))
    if (out_w, out_h) != (cw, ch):
        image = resize(image, (out_w, out_h), method="lanczos")

    if apply_noise:
        image = image + rng.normal(0.0, cfg.noise_sigma, size=image.shape)
    if apply_blur:
        image = box_blur_horizontal(image, cfg.blur_radius)
    image = np.clip(image, 0.0, 1.0)

    params = {
        "view_index": int(view_index),
        "crop": [x0, y0, cw, ch],
        "shear": shear,
        "downsample_factor": cfg.downsample_factor,
        "noise": apply_noise,
        "blur": apply_blur,
    }
    return image, params


def degrade_visibility(seq: AceSequence, demote_prob: float, seed=None) -> AceSequence:
    """Demote junction-type minutiae to plain ridges, as poor imaging does.

    Each bifurcation/convergence/enclosure is independently demoted with
    the given probability: bifurcations and convergences collapse to one
    ridge, enclosures split into two (the loop reads as two stripes), so
    demoting an enclosure grows the sequence by one. Ridge counts stay
    attached to the first derived minutia; demotion is one-way.
    """
    if not 0.0 <= demote_prob <= 1.0:
        raise ValueError(f"demote probability must lie in [0, 1], got {demote_prob}")
    rng = as_rng(seed)
    junction_kinds = (MinutiaKind.BIFURCATION, MinutiaKind.CONVERGENCE, MinutiaKind.ENCLOSURE)

    minutiae: list[Minutia] = []
    counts: list[int] = []
    new_index: list[int] = []
    for m, rc in zip(seq.minutiae, seq.ridge_counts):
        new_index.append(len(minutiae))
        if m.kind in junction_kinds and rng.random() < demote_prob:
            if m.kind is MinutiaKind.ENCLOSURE:
                kp = m.keypoints
                minutiae.append(
                    Minutia(MinutiaKind.RIDGE, (kp[0], kp[1]), m.orientation_deg, m.region)
                )
                counts.append(rc)
                minutiae.append(
                    Minutia(MinutiaKind.RIDGE, (kp[3], kp[4]), m.orientation_deg, m.region)
                )
                counts.append(0)
            else:
                kp = m.keypoints
                minutiae.append(
                    Minutia(MinutiaKind.RIDGE, (kp[0], kp[1]), m.orientation_deg, m.region)
                )
                counts.append(rc)
        else:
            minutiae.append(m)
            counts.append(rc)
    return AceSequence(
        tuple(minutiae),
        tuple(counts),
        anchor_index=new_index[seq.anchor_index],
        side=seq.side,
    )
