"""Statistical synthesis of virtual coat textures and their descriptors.

A virtual individual is born as a minutiae sequence sampled from
region-specific occurrence statistics, then expressed as a flat stripe
texture: the canvas splits into three column bands (fore, mid, hind) and
a cursor sweeps left to right, interposing plain stripes to realize each
ridge count and stamping a library patch for each minutia. The stamped
placements and drawn stripes are recorded so the descriptor can be read
straight back off the texture, which is the module's core consistency
check. Populations pair each identity with several capture-simulated
views and a manifest.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .augment import AugmentConfig, MinutiaeLibrary, build_library, AnnotatedPatch, warp_homography
from .capture import CaptureConfig, capture
from .codec import MAX_TOKENS, AceSequence, Side, encode, token_view
from .manifest import ManifestRow, write_manifest
from .minutiae import (
    SCAN_ORDER,
    Keypoint,
    Minutia,
    MinutiaKind,
    RegionId,
    canonical_keypoints,
    stroke_geometry,
)
from .raster import draw_polyline, resize, save_png
from .util import as_rng, check_keys


class CanvasOverflow(RuntimeError):
    pass


# --- region statistics -------------------------------------------------------


@dataclass
class KindDistribution:
    """Occurrence probabilities over the four kinds plus a count range."""

    probs: dict[MinutiaKind, float]
    count_range: tuple[int, int]

    def __post_init__(self) -> None:
        total = sum(self.probs.values())
        if any(p < 0 for p in self.probs.values()) or abs(total - 1.0) > 1e-9:
            raise ValueError(f"kind probabilities must be non-negative and sum to 1, got {total}")
        lo, hi = self.count_range
        if lo < 0 or hi < lo:
            raise ValueError(f"bad count range {self.count_range}")


@dataclass
class RegionStats:
    """Per-region minutiae statistics driving sequence sampling."""

    regions: dict[RegionId, KindDistribution]

    def __post_init__(self) -> None:
        missing = [r for r in RegionId if r not in self.regions]
        if missing:
            raise ValueError(f"stats missing region(s): {[r.name for r in missing]}")

    @classmethod
    def from_dict(cls, d: dict) -> "RegionStats":
        regions = {}
        for name, spec in d.items():
            region = RegionId[name.upper()]
            check_keys(spec, ("probs", "count_range"), f"region stats [{name}]")
            probs = {MinutiaKind(k): float(v) for k, v in spec["probs"].items()}
            regions[region] = KindDistribution(probs, tuple(spec["count_range"]))
        return cls(regions)


def default_region_stats() -> RegionStats:
    """Placeholder occurrence table: ridge-dominant, junction types rarer.

    These values are a documented stand-in chosen for plausible texture
    density; fidelity work should load an empirically measured table via
    configuration.
    """
    return RegionStats(
        {
            RegionId.FORE: KindDistribution(
                {
                    MinutiaKind.RIDGE: 0.70,
                    MinutiaKind.BIFURCATION: 0.13,
                    MinutiaKind.CONVERGENCE: 0.12,
                    MinutiaKind.ENCLOSURE: 0.05,
                },
                (3, 6),
            ),
            RegionId.MID: KindDistribution(
                {
                    MinutiaKind.RIDGE: 0.62,
                    MinutiaKind.BIFURCATION: 0.16,
                    MinutiaKind.CONVERGENCE: 0.15,
                    MinutiaKind.ENCLOSURE: 0.07,
                },
                (4, 7),
            ),
            RegionId.HIND: KindDistribution(
                {
                    MinutiaKind.RIDGE: 0.68,
                    MinutiaKind.BIFURCATION: 0.14,
                    MinutiaKind.CONVERGENCE: 0.13,
                    MinutiaKind.ENCLOSURE: 0.05,
                },
                (3, 6),
            ),
        }
    )


def truncated_geometric(p: float = 0.5, max_value: int = 6) -> np.ndarray:
    """Ridge-count distribution: geometric(p) renormalized onto 0..max_value."""
    raw = np.array([p * (1.0 - p) ** k for k in range(max_value + 1)])
    return raw / raw.sum()


# --- sequence sampling ---------------------------------------------------------


def sample_sequence(
    stats: RegionStats,
    seed=None,
    side: Side = Side.LEFT,
    rc_probs: np.ndarray | None = None,
) -> AceSequence:
    """Draw one descriptor sequence from the occurrence statistics.

    Counts per region are uniform within the configured range, kinds are
    i.i.d. from the region's probability vector, ridge counts come from
    ``rc_probs`` (truncated geometric by default). Minutiae carry
    template keypoints with randomized lawful angles; regions appear in
    scan order.
    """
    rng = as_rng(seed)
    if rc_probs is None:
        rc_probs = truncated_geometric()
    kinds_list = list(MinutiaKind)

    minutiae: list[Minutia] = []
    counts: list[int] = []
    for region in SCAN_ORDER:
        dist = stats.regions[region]
        lo, hi = dist.count_range
        n = int(rng.integers(lo, hi + 1))
        probs = np.array([dist.probs.get(k, 0.0) for k in kinds_list])
        for _ in range(n):
            kind = kinds_list[int(rng.choice(len(kinds_list), p=probs))]
            if kind is MinutiaKind.CONVERGENCE:
                orientation = float(rng.uniform(180.0, 360.0))
            else:
                orientation = float(rng.uniform(0.0, 360.0))
            branch = None if kind is MinutiaKind.RIDGE else float(rng.uniform(20.0, 70.0))
            conv = float(rng.uniform(20.0, 70.0)) if kind is MinutiaKind.ENCLOSURE else None
            minutiae.append(
                Minutia(
                    kind=kind,
                    keypoints=canonical_keypoints(kind),
                    orientation_deg=orientation,
                    region=region,
                    branch_deg=branch,
                    convergence_deg=conv,
                )
            )
            counts.append(int(rng.choice(len(rc_probs), p=rc_probs)))
    return AceSequence(tuple(minutiae), tuple(counts), anchor_index=0, side=side)


def cyclic_key(seq: AceSequence) -> tuple:
    """Rotation-invariant identity key (lexicographically minimal rotation)."""
    view = token_view(seq)
    return min(tuple(view[r:] + view[:r]) for r in range(len(view)))


# --- texture assembly -----------------------------------------------------------


@dataclass
class SynthesisConfig:
    """Canvas geometry for texture assembly.

    The minimum spacing between stamped patches is patch_width plus
    ``patch_gap`` pixels, preventing accidental topological merges.
    ``band_fractions`` sets the relative column widths of the three
    region bands; true anatomical boundaries are not standardized, so
    the default is an even split.
    """

    canvas: tuple[int, int] = (1024, 512)  # (width, height)
    patch_width: int = 20
    lane_height_frac: float = 0.7
    stripe_width: int = 4
    stripe_gap: int = 2
    patch_gap: int = 2
    band_margin: int = 6
    band_fractions: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)

    def __post_init__(self) -> None:
        if len(self.band_fractions) != 3 or any(f <= 0 for f in self.band_fractions):
            raise ValueError("band_fractions must be three positive weights")

    @classmethod
    def from_dict(cls, d: dict) -> "SynthesisConfig":
        check_keys(d, cls.__dataclass_fields__, "synthesis config")
        kwargs = dict(d)
        if "canvas" in kwargs:
            kwargs["canvas"] = tuple(kwargs["canvas"])
        if "band_fractions" in kwargs:
            kwargs["band_fractions"] = tuple(kwargs["band_fractions"])
        return cls(**kwargs)


@dataclass
class CoatTexture:
    """Assembled stripe mask plus everything needed to read it back.

    ``placements`` pairs each sequence minutia with its stamp anchor
    (x, y) in pixels, in scan order; ``plain_stripes`` holds the center
    x of every interposed plain stripe. ``region_of_column`` maps each
    column to its band.
    """

    image: np.ndarray
    region_of_column: np.ndarray
    placements: list[tuple[Minutia, tuple[float, float]]]
    plain_stripes: list[float]

    @property
    def size(self) -> tuple[int, int]:
        h, w = self.image.shape
        return (w, h)


def region_bands(
    width: int, fractions: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
) -> dict[RegionId, tuple[int, int]]:
    """Column bands for the three regions, in scan order."""
    total = sum(fractions)
    edges = [0]
    acc = 0.0
    for f in fractions[:-1]:
        acc += f / total
        edges.append(int(round(acc * width)))
    edges.append(width)
    return {region: (edges[i], edges[i + 1]) for i, region in enumerate(SCAN_ORDER)}


def _rotate_patch(entry: AnnotatedPatch, target_orientation: float) -> np.ndarray:
    """Spin a library patch so its annotation matches the target orientation."""
    delta = (target_orientation - entry.minutia.orientation_deg) % 360.0
    if delta == 0.0:
        return entry.image
    h, w = entry.image.shape
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    rad = np.deg2rad(delta)
    rot = np.array(
        [[np.cos(rad), -np.sin(rad), 0.0], [np.sin(rad), np.cos(rad), 0.0], [0.0, 0.0, 1.0]]
    )
    t_fwd = np.array([[1.0, 0.0, cx], [0.0, 1.0, cy], [0.0, 0.0, 1.0]])
    t_back = np.array([[1.0, 0.0, -cx], [0.0, 1.0, -cy], [0.0, 0.0, 1.0]])
    return warp_homography(entry.image, t_fwd @ rot @ t_back, fill=0.0)


def assemble_texture(
    seq: AceSequence,
    library: MinutiaeLibrary,
    cfg: SynthesisConfig | None = None,
    seed=None,
) -> CoatTexture:
    """Express a sequence as a stripe texture.

    The cursor sweeps the three region bands left to right; each minutia
    first realizes its ridge count as plain full-height stripes, then
    stamps a library patch of matching kind and region (rotated to the
    minutia's orientation) inside its band. Raises LibraryGap when no
    patch covers a needed (kind, region) and CanvasOverflow when a band
    cannot hold its share at the configured spacing.
    """
    cfg = cfg or SynthesisConfig()
    rng = as_rng(seed)
    region_rank = {region: i for i, region in enumerate(SCAN_ORDER)}
    ranks = [region_rank[m.region] for m in seq.minutiae]
    if ranks != sorted(ranks):
        raise ValueError("sequence regions must be in scan order for texture assembly")
    width, height = cfg.canvas
    bands = region_bands(width, cfg.band_fractions)
    lane_h = int(round(cfg.lane_height_frac * height))
    lane_y0 = (height - lane_h) // 2

    image = np.zeros((height, width), dtype=np.float64)
    region_of_column = np.empty(width, dtype=np.int64)
    for region, (x0, x1) in bands.items():
        region_of_column[x0:x1] = list(RegionId).index(region)

    placements: list[tuple[Minutia, tuple[float, float]]] = []
    plain_stripes: list[float] = []
    cursor = cfg.band_margin
    for minutia, rc in zip(seq.minutiae, seq.ridge_counts):
        band_lo, band_hi = bands[minutia.region]
        cursor = max(cursor, band_lo + cfg.band_margin)
        for _ in range(rc):
            if cursor + cfg.stripe_width > band_hi - cfg.band_margin:
                raise CanvasOverflow(
                    f"band {minutia.region.name} cannot hold its stripes at this spacing"
                )
            image[:, cursor : cursor + cfg.stripe_width] = 1.0
            plain_stripes.append(cursor + cfg.stripe_width / 2.0)
            cursor += cfg.stripe_width + cfg.stripe_gap
        if cursor + cfg.patch_width > band_hi - cfg.band_margin:
            raise CanvasOverflow(
                f"band {minutia.region.name} cannot hold its minutiae at this spacing"
            )
        entry = library.sample(minutia.kind, minutia.region, rng)
        patch = _rotate_patch(entry, minutia.orientation_deg)
        stamp = resize(patch, (cfg.patch_width, lane_h), method="bilinear")
        target = image[lane_y0 : lane_y0 + lane_h, cursor : cursor + cfg.patch_width]
        np.maximum(target, stamp, out=target)
        placements.append((minutia, (cursor + cfg.patch_width / 2.0, height / 2.0)))
        cursor += cfg.patch_width + cfg.patch_gap

    return CoatTexture(
        image=image,
        region_of_column=region_of_column,
        placements=placements,
        plain_stripes=plain_stripes,
    )


def sequence_from_texture(
    texture: CoatTexture, anchor_index: int = 0, side: Side = Side.LEFT
) -> AceSequence:
    """Read the descriptor back off a texture's recorded geometry.

    Placements and plain stripes are merged in scan (x) order; each
    minutia's ridge count is the number of plain stripes since the
    previous placement. Together with ``encode`` this closes the
    text-to-texture loop.
    """
    events: list[tuple[float, int, object]] = []
    for x in texture.plain_stripes:
        events.append((x, 0, None))
    for minutia, (x, _) in texture.placements:
        events.append((x, 1, minutia))
    events.sort(key=lambda e: (e[0], e[1]))

    minutiae: list[Minutia] = []
    counts: list[int] = []
    pending = 0
    for _, tag, payload in events:
        if tag == 0:
            pending += 1
        else:
            minutiae.append(payload)
            counts.append(pending)
            pending = 0
    return AceSequence(tuple(minutiae), tuple(counts), anchor_index=anchor_index, side=side)


# --- built-in seed patches --------------------------------------------------------


def default_seed_patches(patch_size: int = 96, thickness: float = 5.0) -> list[AnnotatedPatch]:
    """Schematic seed patches: one canonical minutia per (kind, region).

    Stroke geometry is rendered into the central half of the patch so the
    augmentation chain has room to move keypoints without breaking them.
    """
    seeds = []
    for region in RegionId:
        for kind in MinutiaKind:
            orientation = 270.0 if kind is MinutiaKind.CONVERGENCE else 90.0
            kps = tuple(
                Keypoint(0.25 + 0.5 * kp.x, 0.25 + 0.5 * kp.y) for kp in canonical_keypoints(kind)
            )
            minutia = Minutia(
                kind=kind,
                keypoints=kps,
                orientation_deg=orientation,
                region=region,
                branch_deg=None if kind is MinutiaKind.RIDGE else 45.0,
                convergence_deg=45.0 if kind is MinutiaKind.ENCLOSURE else None,
            )
            image = np.zeros((patch_size, patch_size), dtype=np.float64)
            for polyline in stroke_geometry(minutia):
                pts = np.asarray(polyline) * (patch_size - 1.0)
                draw_polyline(image, pts, thickness=thickness, value=1.0)
            seeds.append(AnnotatedPatch(image, minutia))
    return seeds


def default_library(n_per_seed: int = 4, seed=0) -> MinutiaeLibrary:
    """Small ready-to-use library grown from the built-in seed patches."""
    return build_library(default_seed_patches(), n_per_seed, AugmentConfig(), seed)


# --- population synthesis -----------------------------------------------------------


@dataclass
class PopulationConfig:
    """Knobs for whole-population generation."""

    synthesis: SynthesisConfig = field(default_factory=SynthesisConfig)
    capture: CaptureConfig = field(default_factory=CaptureConfig)
    id_prefix: str = "vid"
    rc_probs: np.ndarray | None = None
    max_attempts: int = 32

    @classmethod
    def from_dict(cls, d: dict) -> "PopulationConfig":
        check_keys(d, cls.__dataclass_fields__, "population config")
        kwargs = dict(d)
        if "synthesis" in kwargs:
            kwargs["synthesis"] = SynthesisConfig.from_dict(kwargs["synthesis"])
        if "capture" in kwargs:
            kwargs["capture"] = CaptureConfig.from_dict(kwargs["capture"])
        if "rc_probs" in kwargs and kwargs["rc_probs"] is not None:
            kwargs["rc_probs"] = np.asarray(kwargs["rc_probs"], dtype=np.float64)
        return cls(**kwargs)


@dataclass
class VirtualIdentity:
    """One synthetic individual: label, side, descriptor, texture."""

    id: str
    side: Side
    sequence: AceSequence
    texture: CoatTexture


def synthesize_population(
    n_ids: int,
    views_per_id: int,
    stats: RegionStats | None = None,
    library: MinutiaeLibrary | None = None,
    cfg: PopulationConfig | None = None,
    seed=None,
    out_dir: str | Path | None = None,
) -> tuple[list[VirtualIdentity], list[ManifestRow]]:
    """Generate a virtual population with capture-simulated views.

    Each identity owns one sequence/texture pair; flank sides alternate
    (every side is its own identity). Sequences colliding with an earlier
    identity (up to rotation) or overflowing the canvas are resampled,
    bounded by ``cfg.max_attempts``. Manifest rows pair every view image
    with the identity's descriptor text; when ``out_dir`` is given the
    view PNGs and manifest are written beneath it, with image paths
    relative to it either way.
    """
    if n_ids < 1:
        raise ValueError("need at least one identity")
    stats = stats or default_region_stats()
    cfg = cfg or PopulationConfig()
    if library is None:
        library = default_library()

    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    id_seeds = root.spawn(n_ids)
    identities: list[VirtualIdentity] = []
    rows: list[ManifestRow] = []
    seen: set[tuple] = set()

    for i in range(n_ids):
        side = Side.LEFT if i % 2 == 0 else Side.RIGHT
        label = f"{cfg.id_prefix}_{i:04d}"
        id_ss = id_seeds[i]
        texture = None
        for _ in range(cfg.max_attempts):
            attempt_ss = id_ss.spawn(1)[0]
            seq = sample_sequence(stats, attempt_ss, side=side, rc_probs=cfg.rc_probs)
            if len(seq) > MAX_TOKENS:
                continue
            key = cyclic_key(seq)
            if key in seen:
                continue
            try:
                texture = assemble_texture(seq, library, cfg.synthesis, id_ss.spawn(1)[0])
            except CanvasOverflow:
                continue
            break
        if texture is None:
            raise RuntimeError(f"could not synthesize identity {label} in {cfg.max_attempts} attempts")
        seen.add(key)
        text = encode(seq)
        identities.append(VirtualIdentity(id=label, side=side, sequence=seq, texture=texture))
        if out_dir is not None:
            tex_path = Path(out_dir) / "textures" / f"{label}.png"
            tex_path.parent.mkdir(parents=True, exist_ok=True)
            save_png(tex_path, texture.image)

        for view_ss, v in zip(id_ss.spawn(views_per_id), range(views_per_id)):
            image, cap_params = capture(texture, cfg.capture, view_index=v, seed=view_ss)
            rel_path = f"images/{label}_v{v:02d}.png"
            if out_dir is not None:
                full = Path(out_dir) / rel_path
                full.parent.mkdir(parents=True, exist_ok=True)
                save_png(full, image)
            rows.append(
                ManifestRow(
                    image_path=rel_path,
                    text=text,
                    id=label,
                    side=side.value,
                    split="unassigned",
                    view_index=v,
                    capture=cap_params,
                )
            )

    if out_dir is not None:
        write_manifest(Path(out_dir) / "manifest.jsonl", rows)
    return identities, rows
