"""Geometric augmentation of annotated stripe patches.

Builds the minutiae library that coat synthesis samples from: each
annotated seed patch is expanded into many variants via a fixed chain of
random translation, keypoint-perturbed perspective distortion, local
non-linear warping, rotation, and scaling. Keypoint annotations are
transported through the same maps, and variants whose annotation no
longer validates are discarded and resampled.

All image warps use inverse mapping: an output pixel looks up its source
position, sampled bilinearly. The local warp displaces each pixel p
within an influence radius r of a start point p_i toward/away from a
target p_j, with falloff

    p' = p - rho * (p_j - p_i) * (1 - k1 / r),
    k1 = |p - p_i|,
    rho = ((r^2 - |p - p_i|^2) / (r^2 - |p - p_i|^2 + k0 |p_j - p_i|^2))^2,

and rho clamped to zero at and beyond the radius, so the boundary is a
fixed point of the map.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .minutiae import Keypoint, Minutia, MinutiaKind, RegionId, minutia_from_dict, minutia_to_dict, validate
from .raster import bilinear_sample, load_png, pixel_grid, save_png
from .util import as_rng, check_keys


class DegenerateConfiguration(ValueError):
    pass


class SingularHomography(ValueError):
    pass


class KindBrokenByAugmentation(RuntimeError):
    pass


class LibraryGap(KeyError):
    def __init__(self, kind: MinutiaKind, region: RegionId):
        self.kind = kind
        self.region = region
        super().__init__(f"library has no entry for {kind.value} in region {region.name}")


@dataclass(frozen=True)
class WarpParams:
    """Local warp parameters: start/target points in pixels, strength, radius."""

    p_i: tuple[float, float]
    p_j: tuple[float, float]
    k0: float
    r: float

    def __post_init__(self) -> None:
        if self.r <= 0:
            raise ValueError(f"influence radius must be positive, got {self.r}")
        if self.k0 <= 0:
            raise ValueError(f"strength coefficient must be positive, got {self.k0}")


@dataclass
class AugmentConfig:
    """Parameter ranges for the augmentation chain.

    Translation is drawn per axis with uniform magnitude up to
    ``translation_max_px`` (random sign). Corner jitter drives the
    perspective stage and the warp offset bounds the local distortion
    target; both are free parameters of this toolkit.
    """

    translation_max_px: float = 15.0
    rotation_range_deg: tuple[float, float] = (-15.0, 15.0)
    scale_range: tuple[float, float] = (0.8, 1.2)
    warp_radius_px: float = 50.0
    warp_strength: float = 200.0
    corner_jitter_px: float = 5.0
    warp_offset_px: float = 10.0
    fill: float = 0.0

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentConfig":
        check_keys(d, cls.__dataclass_fields__, "augment config")
        kwargs = dict(d)
        for key in ("rotation_range_deg", "scale_range"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)

    def identity(self) -> "AugmentConfig":
        """Copy with every range collapsed so the chain is a no-op."""
        return AugmentConfig(
            translation_max_px=0.0,
            rotation_range_deg=(0.0, 0.0),
            scale_range=(1.0, 1.0),
            warp_radius_px=self.warp_radius_px,
            warp_strength=self.warp_strength,
            corner_jitter_px=0.0,
            warp_offset_px=0.0,
            fill=self.fill,
        )


# --- homography fitting and warping -----------------------------------------


def _normalization_transform(pts: np.ndarray) -> np.ndarray:
    """Hartley conditioning: centroid to origin, mean radius sqrt(2)."""
    centroid = pts.mean(axis=0)
    d = np.linalg.norm(pts - centroid, axis=1).mean()
    s = np.sqrt(2.0) / d if d > 0 else 1.0
    return np.array(
        [[s, 0.0, -s * centroid[0]], [0.0, s, -s * centroid[1]], [0.0, 0.0, 1.0]]
    )


def fit_homography(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Estimate the 3x3 projective map taking src points to dst points.

    Direct linear transform over >= 4 correspondences, solved via SVD on
    conditioned coordinates; with exactly 4 points the solution
    interpolates (reprojection residual below 1e-9, enforced), with more
    it is the algebraic least-squares minimizer. The result is scaled so
    that H[2, 2] == 1.

    Raises DegenerateConfiguration when the correspondences do not pin
    down a unique accurate map (three collinear source points, or a
    near-degenerate quad whose fit cannot reach the residual bound).
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 2:
        raise ValueError("src and dst must both be (N, 2) arrays")
    n = src.shape[0]
    if n < 4:
        raise DegenerateConfiguration(f"need at least 4 point pairs, got {n}")

    t_src = _normalization_transform(src)
    t_dst = _normalization_transform(dst)
    sh = np.column_stack([src, np.ones(n)]) @ t_src.T
    dh = np.column_stack([dst, np.ones(n)]) @ t_dst.T

    a = np.zeros((2 * n, 9))
    for i in range(n):
        x, y = sh[i, 0], sh[i, 1]
        u, v = dh[i, 0], dh[i, 1]
        a[2 * i] = [-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u]
        a[2 * i + 1] = [0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v]

    _, s, vt = np.linalg.svd(a)
    if n == 4 and s[-2] < 1e-9 * max(s[0], 1.0):
        raise DegenerateConfiguration("correspondences are rank-deficient")
    h_norm = vt[-1].reshape(3, 3)
    h = np.linalg.inv(t_dst) @ h_norm @ t_src
    if abs(h[2, 2]) < 1e-12 * np.abs(h).max():
        raise DegenerateConfiguration("fitted map has no finite normalization")
    h = h / h[2, 2]
    if n == 4:
        # exactly-determined fits must interpolate; near-collinear quads that
        # cannot reach the documented tolerance are rejected, not returned
        residual = np.abs(apply_homography_points(h, src) - dst).max()
        if not residual < 1e-9:
            raise DegenerateConfiguration(
                f"near-degenerate correspondences (reprojection residual {residual:.2e})"
            )
    return h


def apply_homography_points(h: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Map (N, 2) points through a homography, with perspective divide."""
    pts = np.asarray(pts, dtype=np.float64)
    ph = np.column_stack([pts, np.ones(len(pts))]) @ h.T
    return ph[:, :2] / ph[:, 2:3]


def warp_homography(image: np.ndarray, h: np.ndarray, fill: float = 0.0) -> np.ndarray:
    """Warp an image forward through ``h`` using inverse mapping.

    Every output pixel (x', y') samples the source at H^{-1} (x', y', 1),
    bilinearly; samples falling outside the source are set to ``fill``.
    """
    try:
        h_inv = np.linalg.inv(np.asarray(h, dtype=np.float64))
    except np.linalg.LinAlgError as exc:
        raise SingularHomography("homography is not invertible") from exc

    height, width = image.shape
    xs, ys = pixel_grid(height, width)
    denom = h_inv[2, 0] * xs + h_inv[2, 1] * ys + h_inv[2, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        sx = (h_inv[0, 0] * xs + h_inv[0, 1] * ys + h_inv[0, 2]) / denom
        sy = (h_inv[1, 0] * xs + h_inv[1, 1] * ys + h_inv[1, 2]) / denom
    bad = ~np.isfinite(sx) | ~np.isfinite(sy)
    if bad.any():
        sx = np.where(bad, -1e12, sx)
        sy = np.where(bad, -1e12, sy)
    return bilinear_sample(image, sx, sy, fill=fill)


# --- local non-linear warp ----------------------------------------------------


def local_warp_source_coords(
    x: np.ndarray, y: np.ndarray, p: WarpParams
) -> tuple[np.ndarray, np.ndarray]:
    """Source-lookup coordinates of the local warp for output pixels (x, y)."""
    xi, yi = p.p_i
    xj, yj = p.p_j
    d2 = (x - xi) ** 2 + (y - yi) ** 2
    k1 = np.sqrt(d2)
    num = p.r**2 - d2
    dij2 = (xj - xi) ** 2 + (yj - yi) ** 2
    denom = num + p.k0 * dij2
    with np.errstate(divide="ignore", invalid="ignore"):
        rho = np.where((num > 0.0) & (denom > 0.0), (num / denom) ** 2, 0.0)
    factor = rho * (1.0 - k1 / p.r)
    return x - factor * (xj - xi), y - factor * (yj - yi)


def warp_local(image: np.ndarray, p: WarpParams, fill: float = 0.0) -> np.ndarray:
    """Apply the local non-linear distortion to an image.

    Pixels at distance >= r from the start point are untouched.
    """
    height, width = image.shape
    xs, ys = pixel_grid(height, width)
    sx, sy = local_warp_source_coords(xs, ys, p)
    return bilinear_sample(image, sx, sy, fill=fill)


def local_warp_transport(
    pts: np.ndarray, p: WarpParams, iterations: int = 40, tol: float = 1e-12
) -> np.ndarray:
    """Forward-transport points through the local warp.

    The warp is defined as an inverse (sampling) map, so the forward
    position q of a source point k satisfies source_coords(q) = k; it is
    found by fixed-point iteration, which converges rapidly for the
    gentle displacement fields used in augmentation.
    """
    pts = np.asarray(pts, dtype=np.float64)
    q = pts.copy()
    for _ in range(iterations):
        sx, sy = local_warp_source_coords(q[:, 0], q[:, 1], p)
        # q solves q - disp(q) = k  =>  q = k + (q - source_coords(q))
        new_q = pts + np.column_stack([q[:, 0] - sx, q[:, 1] - sy])
        if np.abs(new_q - q).max() < tol:
            q = new_q
            break
        q = new_q
    return q


# --- the augmentation chain ---------------------------------------------------


@dataclass
class AugmentStage:
    """One applied stage: either a 3x3 matrix map or a local warp."""

    name: str
    matrix: np.ndarray | None = None
    warp: WarpParams | None = None


@dataclass
class AugmentResult:
    image: np.ndarray
    minutia: Minutia
    stages: list[AugmentStage]
    draws: dict = field(default_factory=dict)


def _center_matrix(inner: np.ndarray, cx: float, cy: float) -> np.ndarray:
    t_fwd = np.array([[1.0, 0.0, cx], [0.0, 1.0, cy], [0.0, 0.0, 1.0]])
    t_back = np.array([[1.0, 0.0, -cx], [0.0, 1.0, -cy], [0.0, 0.0, 1.0]])
    return t_fwd @ inner @ t_back


def transport_points(pts: np.ndarray, stages: list[AugmentStage]) -> np.ndarray:
    """Push points through a stage chain, in order."""
    out = np.asarray(pts, dtype=np.float64)
    for stage in stages:
        if stage.matrix is not None:
            out = apply_homography_points(stage.matrix, out)
        else:
            out = local_warp_transport(out, stage.warp)
    return out


def draw_stages(
    shape: tuple[int, int], cfg: AugmentConfig, rng: np.random.Generator
) -> tuple[list[AugmentStage], dict]:
    """Sample the five-stage chain for a patch of the given (H, W) shape."""
    height, width = shape
    cx, cy = (width - 1) / 2.0, (height - 1) / 2.0

    dx = rng.uniform(-cfg.translation_max_px, cfg.translation_max_px)
    dy = rng.uniform(-cfg.translation_max_px, cfg.translation_max_px)
    t_mat = np.array([[1.0, 0.0, dx], [0.0, 1.0, dy], [0.0, 0.0, 1.0]])

    corners = np.array(
        [[0.0, 0.0], [width - 1.0, 0.0], [width - 1.0, height - 1.0], [0.0, height - 1.0]]
    )
    jitter = rng.uniform(-cfg.corner_jitter_px, cfg.corner_jitter_px, size=(4, 2))
    # unperturbed corners mean an exact identity, not a refitted near-identity
    h_mat = np.eye(3) if not jitter.any() else fit_homography(corners, corners + jitter)

    xi = rng.uniform(0.25 * width, 0.75 * width)
    yi = rng.uniform(0.25 * height, 0.75 * height)
    angle = rng.uniform(0.0, 2.0 * np.pi)
    mag = rng.uniform(0.0, cfg.warp_offset_px)
    warp = WarpParams(
        p_i=(xi, yi),
        p_j=(xi + mag * np.cos(angle), yi + mag * np.sin(angle)),
        k0=cfg.warp_strength,
        r=cfg.warp_radius_px,
    )

    theta = rng.uniform(*cfg.rotation_range_deg)
    rad = np.deg2rad(theta)
    r_mat = _center_matrix(
        np.array(
            [[np.cos(rad), -np.sin(rad), 0.0], [np.sin(rad), np.cos(rad), 0.0], [0.0, 0.0, 1.0]]
        ),
        cx,
        cy,
    )

    s = rng.uniform(*cfg.scale_range)
    s_mat = _center_matrix(np.diag([s, s, 1.0]), cx, cy)

    stages = [
        AugmentStage("translate", matrix=t_mat),
        AugmentStage("perspective", matrix=h_mat),
        AugmentStage("local_warp", warp=warp),
        AugmentStage("rotate", matrix=r_mat),
        AugmentStage("scale", matrix=s_mat),
    ]
    draws = {
        "translation": (dx, dy),
        "corner_jitter": jitter,
        "warp": warp,
        "rotation_deg": theta,
        "scale": s,
    }
    return stages, draws


def augment_minutia(
    patch: np.ndarray, minutia: Minutia, cfg: AugmentConfig, seed=None
) -> AugmentResult:
    """Run the five-stage augmentation chain on one annotated patch.

    The raster goes through translation, keypoint-perturbed perspective
    distortion, local non-linear warp, rotation, and scaling (in that
    order, each as its own inverse-mapped resampling pass); annotation
    keypoints ride through the same maps and the orientation angle picks
    up the rotation stage's angle. Deterministic per seed.

    Raises KindBrokenByAugmentation when the transported annotation no
    longer validates (keypoints pushed out of the patch, or an angle
    leaving its lawful range).
    """
    rng = as_rng(seed)
    stages, draws = draw_stages(patch.shape, cfg, rng)

    image = patch
    for stage in stages:
        if stage.matrix is not None:
            image = warp_homography(image, stage.matrix, fill=cfg.fill)
        else:
            image = warp_local(image, stage.warp, fill=cfg.fill)

    height, width = patch.shape
    scale_px = np.array([width - 1.0, height - 1.0])
    kps_px = np.array([[kp.x, kp.y] for kp in minutia.keypoints]) * scale_px
    moved = transport_points(kps_px, stages) / scale_px

    if (moved < 0.0).any() or (moved > 1.0).any():
        raise KindBrokenByAugmentation("keypoints transported outside the patch")
    new_minutia = Minutia(
        kind=minutia.kind,
        keypoints=tuple(Keypoint(float(x), float(y)) for x, y in moved),
        orientation_deg=minutia.orientation_deg + draws["rotation_deg"],
        region=minutia.region,
        branch_deg=minutia.branch_deg,
        convergence_deg=minutia.convergence_deg,
    )
    result = validate(new_minutia)
    if not result.ok:
        raise KindBrokenByAugmentation(f"augmented annotation invalid: {result.message}")
    return AugmentResult(image=image, minutia=new_minutia, stages=stages, draws=draws)


# --- the minutiae library -------------------------------------------------------


@dataclass
class AnnotatedPatch:
    """A raster patch plus the minutia annotation it depicts."""

    image: np.ndarray
    minutia: Minutia


class MinutiaeLibrary:
    """Augmented patch variants indexed by (kind, region)."""

    def __init__(self, entries: list[AnnotatedPatch] | None = None):
        self.entries: list[AnnotatedPatch] = []
        self._index: dict[tuple[MinutiaKind, RegionId], list[int]] = {}
        for e in entries or []:
            self.add(e)

    def add(self, entry: AnnotatedPatch) -> None:
        key = (entry.minutia.kind, entry.minutia.region)
        self._index.setdefault(key, []).append(len(self.entries))
        self.entries.append(entry)

    def __len__(self) -> int:
        return len(self.entries)

    def get(self, kind: MinutiaKind, region: RegionId) -> list[AnnotatedPatch]:
        return [self.entries[i] for i in self._index.get((kind, region), [])]

    def sample(self, kind: MinutiaKind, region: RegionId, rng: np.random.Generator) -> AnnotatedPatch:
        idxs = self._index.get((kind, region))
        if not idxs:
            raise LibraryGap(kind, region)
        return self.entries[idxs[rng.integers(len(idxs))]]

    def kind_histogram(self) -> dict[MinutiaKind, int]:
        hist = {kind: 0 for kind in MinutiaKind}
        for e in self.entries:
            hist[e.minutia.kind] += 1
        return hist

    def covers(self, kind: MinutiaKind, region: RegionId) -> bool:
        return bool(self._index.get((kind, region)))


def build_library(
    seeds: list[AnnotatedPatch],
    n_per_seed: int,
    cfg: AugmentConfig | None = None,
    seed=None,
    max_retries: int = 32,
) -> MinutiaeLibrary:
    """Expand annotated seed patches into a minutiae library.

    Produces exactly ``n_per_seed`` validated variants per seed; a
    variant that breaks its annotation is discarded and resampled, up to
    ``max_retries`` attempts each, after which the failure propagates.
    """
    cfg = cfg or AugmentConfig()
    library = MinutiaeLibrary()
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    for seed_patch, child in zip(seeds, root.spawn(max(len(seeds), 1))):
        result = validate(seed_patch.minutia)
        if not result.ok:
            raise ValueError(f"seed patch annotation invalid: {result.message}")
        for _ in range(n_per_seed):
            for attempt in range(max_retries):
                try:
                    out = augment_minutia(seed_patch.image, seed_patch.minutia, cfg, child.spawn(1)[0])
                except KindBrokenByAugmentation:
                    continue
                library.add(AnnotatedPatch(out.image, out.minutia))
                break
            else:
                raise KindBrokenByAugmentation(
                    f"could not produce a valid variant of {seed_patch.minutia.kind.value} "
                    f"in {max_retries} attempts"
                )
    return library


def save_library(library: MinutiaeLibrary, directory: str | Path) -> None:
    """Persist a library as PNG patches with JSON annotation sidecars."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    import json

    for i, entry in enumerate(library.entries):
        stem = directory / f"entry_{i:05d}"
        save_png(stem.with_suffix(".png"), entry.image)
        stem.with_suffix(".json").write_text(json.dumps(minutia_to_dict(entry.minutia), indent=2))


def load_library(directory: str | Path) -> MinutiaeLibrary:
    directory = Path(directory)
    import json

    library = MinutiaeLibrary()
    for png in sorted(directory.glob("entry_*.png")):
        sidecar = png.with_suffix(".json")
        minutia = minutia_from_dict(json.loads(sidecar.read_text()))
        library.add(AnnotatedPatch(load_png(png), minutia))
    return library
