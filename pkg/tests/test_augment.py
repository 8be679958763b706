import numpy as np
import pytest

from stripekit.augment import (
    AugmentConfig,
    DegenerateConfiguration,
    LibraryGap,
    SingularHomography,
    WarpParams,
    apply_homography_points,
    augment_minutia,
    build_library,
    draw_stages,
    fit_homography,
    load_library,
    local_warp_source_coords,
    local_warp_transport,
    save_library,
    warp_homography,
    warp_local,
)
from stripekit.minutiae import MinutiaKind, RegionId
from stripekit.synthesis import default_seed_patches

from conftest import bilinear_scalar


def checkerboard(n=32, cell=4):
    ys, xs = np.mgrid[0:n, 0:n]
    return (((xs // cell) + (ys // cell)) % 2).astype(np.float64)


def brute_force_homography_warp(image, h, fill=0.0):
    """Per-pixel transcription of inverse-mapped projective warping."""
    h_inv = np.linalg.inv(h)
    rows, cols = image.shape
    out = np.empty_like(image)
    for yy in range(rows):
        for xx in range(cols):
            d = h_inv[2, 0] * xx + h_inv[2, 1] * yy + h_inv[2, 2]
            sx = (h_inv[0, 0] * xx + h_inv[0, 1] * yy + h_inv[0, 2]) / d
            sy = (h_inv[1, 0] * xx + h_inv[1, 1] * yy + h_inv[1, 2]) / d
            out[yy, xx] = bilinear_scalar(image, sx, sy, fill)
    return out


def brute_force_local_warp(image, p, fill=0.0):
    """Per-pixel transcription of the local distortion displacement."""
    rows, cols = image.shape
    xi, yi = p.p_i
    xj, yj = p.p_j
    dij2 = (xj - xi) ** 2 + (yj - yi) ** 2
    out = np.empty_like(image)
    for yy in range(rows):
        for xx in range(cols):
            d2 = (xx - xi) ** 2 + (yy - yi) ** 2
            k1 = np.sqrt(d2)
            num = p.r**2 - d2
            if num > 0.0:
                rho = (num / (num + p.k0 * dij2)) ** 2
            else:
                rho = 0.0
            factor = rho * (1.0 - k1 / p.r)
            sx = xx - factor * (xj - xi)
            sy = yy - factor * (yj - yi)
            out[yy, xx] = bilinear_scalar(image, sx, sy, fill)
    return out


class TestFitHomography:
    def test_identity_fixed_point(self, rng):
        src = rng.uniform(0, 100, size=(4, 2))
        h = fit_homography(src, src)
        assert np.abs(h - np.eye(3)).max() < 1e-9

    def test_pure_translation(self, rng):
        src = rng.uniform(0, 100, size=(4, 2))
        h = fit_homography(src, src + np.array([5.0, 3.0]))
        expected = np.array([[1, 0, 5], [0, 1, 3], [0, 0, 1]], dtype=float)
        assert np.abs(h - expected).max() < 1e-8

    def test_random_exact_fits_reproject(self, rng):
        for _ in range(200):
            src = rng.uniform(0, 512, size=(4, 2))
            dst = src + rng.normal(0, 25, size=(4, 2))
            try:
                h = fit_homography(src, dst)
            except DegenerateConfiguration:
                continue
            proj = apply_homography_points(h, src)
            assert np.abs(proj - dst).max() < 1e-9

    def test_least_squares_with_extra_points(self, rng):
        true_h = np.array([[1.1, 0.02, 3.0], [-0.01, 0.95, -2.0], [1e-4, -2e-4, 1.0]])
        src = rng.uniform(0, 200, size=(12, 2))
        dst = apply_homography_points(true_h, src)
        h = fit_homography(src, dst)
        assert np.abs(h / h[2, 2] - true_h).max() < 1e-6

    def test_collinear_sources_degenerate(self):
        src = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [5.0, 1.0]])
        dst = np.array([[0.0, 0.0], [1.0, 1.5], [2.0, 2.5], [5.0, 2.0]])
        with pytest.raises(DegenerateConfiguration):
            fit_homography(src, dst)

    def test_too_few_points(self):
        with pytest.raises(DegenerateConfiguration):
            fit_homography(np.zeros((3, 2)), np.zeros((3, 2)))

    def test_bottom_right_normalized(self, rng):
        src = rng.uniform(0, 100, size=(4, 2))
        dst = src + rng.normal(0, 5, size=(4, 2))
        h = fit_homography(src, dst)
        assert h[2, 2] == pytest.approx(1.0)


class TestWarpHomography:
    def test_identity_exact(self):
        img = checkerboard()
        assert np.array_equal(warp_homography(img, np.eye(3)), img)

    def test_integer_translation_shifts(self):
        img = checkerboard()
        h = np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        out = warp_homography(img, h, fill=0.0)
        assert np.array_equal(out[:, 1:], img[:, :-1])

    def test_matches_brute_force_oracle(self, rng):
        img = checkerboard()
        for _ in range(5):
            src = np.array([[0, 0], [31, 0], [31, 31], [0, 31]], dtype=float)
            dst = src + rng.uniform(-3, 3, size=(4, 2))
            h = fit_homography(src, dst)
            fast = warp_homography(img, h, fill=0.25)
            slow = brute_force_homography_warp(img, h, fill=0.25)
            assert np.abs(fast - slow).max() < 1e-9

    def test_singular_rejected(self):
        img = checkerboard()
        with pytest.raises(SingularHomography):
            warp_homography(img, np.zeros((3, 3)))


class TestWarpLocal:
    def test_boundary_fixed_point(self):
        p = WarpParams(p_i=(100.0, 100.0), p_j=(110.0, 100.0), k0=200.0, r=50.0)
        sx, sy = local_warp_source_coords(np.array([150.0]), np.array([100.0]), p)
        assert sx[0] == 150.0 and sy[0] == 100.0

    def test_outside_radius_unchanged(self):
        p = WarpParams(p_i=(10.0, 10.0), p_j=(15.0, 10.0), k0=200.0, r=8.0)
        img = checkerboard(64)
        out = warp_local(img, p)
        far = np.ones_like(img, dtype=bool)
        ys, xs = np.mgrid[0:64, 0:64]
        far &= (xs - 10.0) ** 2 + (ys - 10.0) ** 2 >= 8.0**2
        assert np.array_equal(out[far], img[far])

    def test_hand_computed_displacement(self):
        # at the start point: rho = (2500/22500)^2 = 1/81, shift = 10/81
        p = WarpParams(p_i=(100.0, 100.0), p_j=(110.0, 100.0), k0=200.0, r=50.0)
        sx, sy = local_warp_source_coords(np.array([100.0]), np.array([100.0]), p)
        assert sx[0] == pytest.approx(100.0 - 10.0 / 81.0, abs=1e-12)
        assert sy[0] == pytest.approx(100.0, abs=1e-12)

    def test_large_strength_approaches_identity(self):
        img = checkerboard(64)
        p = WarpParams(p_i=(32.0, 32.0), p_j=(40.0, 32.0), k0=1e9, r=30.0)
        out = warp_local(img, p)
        assert np.abs(out - img).max() < 1e-5

    def test_matches_brute_force_oracle(self, rng):
        img = rng.uniform(0, 1, size=(64, 64))
        for _ in range(3):
            p = WarpParams(
                p_i=(float(rng.uniform(10, 50)), float(rng.uniform(10, 50))),
                p_j=(float(rng.uniform(10, 50)), float(rng.uniform(10, 50))),
                k0=200.0,
                r=float(rng.uniform(10, 40)),
            )
            fast = warp_local(img, p, fill=0.5)
            slow = brute_force_local_warp(img, p, fill=0.5)
            assert np.abs(fast - slow).max() < 1e-9

    def test_transport_inverts_source_map(self, rng):
        p = WarpParams(p_i=(30.0, 30.0), p_j=(38.0, 30.0), k0=200.0, r=25.0)
        pts = rng.uniform(10, 50, size=(20, 2))
        moved = local_warp_transport(pts, p)
        sx, sy = local_warp_source_coords(moved[:, 0], moved[:, 1], p)
        assert np.abs(np.column_stack([sx, sy]) - pts).max() < 1e-9


class TestAugmentChain:
    def test_identity_collapse(self):
        seed_patch = default_seed_patches()[0]
        cfg = AugmentConfig().identity()
        out = augment_minutia(seed_patch.image, seed_patch.minutia, cfg, seed=0)
        assert np.array_equal(out.image, seed_patch.image)
        for a, b in zip(out.minutia.keypoints, seed_patch.minutia.keypoints):
            assert abs(a.x - b.x) < 1e-12 and abs(a.y - b.y) < 1e-12

    def test_rotation_draws_stay_in_range(self, rng):
        cfg = AugmentConfig()
        for _ in range(10_000):
            _, draws = draw_stages((96, 96), cfg, rng)
            assert -15.0 <= draws["rotation_deg"] <= 15.0
            assert abs(draws["translation"][0]) <= 15.0
            assert abs(draws["translation"][1]) <= 15.0
            assert 0.8 <= draws["scale"] <= 1.2

    def test_matrix_transport_commutes_with_composition(self, rng):
        cfg = AugmentConfig()
        stages, _ = draw_stages((96, 96), cfg, rng)
        matrix_stages = [s for s in stages if s.matrix is not None]
        pts = rng.uniform(20, 70, size=(10, 2))
        sequential = pts.copy()
        for s in matrix_stages:
            sequential = apply_homography_points(s.matrix, sequential)
        composed = np.eye(3)
        for s in matrix_stages:
            composed = s.matrix @ composed
        assert np.abs(apply_homography_points(composed, pts) - sequential).max() < 1e-9

    def test_keypoint_transport_matches_sequential_maps(self, rng):
        # brute-force each stage's point map independently, in order
        seed_patch = default_seed_patches()[1]
        out = augment_minutia(seed_patch.image, seed_patch.minutia, AugmentConfig(), seed=11)
        h, w = seed_patch.image.shape
        scale = np.array([w - 1.0, h - 1.0])
        pts = np.array([[kp.x, kp.y] for kp in seed_patch.minutia.keypoints]) * scale
        for stage in out.stages:
            if stage.matrix is not None:
                moved = []
                for x, y in pts:
                    hx = stage.matrix[0, 0] * x + stage.matrix[0, 1] * y + stage.matrix[0, 2]
                    hy = stage.matrix[1, 0] * x + stage.matrix[1, 1] * y + stage.matrix[1, 2]
                    hw = stage.matrix[2, 0] * x + stage.matrix[2, 1] * y + stage.matrix[2, 2]
                    moved.append([hx / hw, hy / hw])
                pts = np.array(moved)
            else:
                pts = local_warp_transport(pts, stage.warp)
        got = np.array([[kp.x, kp.y] for kp in out.minutia.keypoints]) * scale
        assert np.abs(got - pts).max() < 1e-9

    def test_orientation_picks_up_rotation(self):
        seed_patch = default_seed_patches()[0]
        out = augment_minutia(seed_patch.image, seed_patch.minutia, AugmentConfig(), seed=4)
        expected = (seed_patch.minutia.orientation_deg + out.draws["rotation_deg"]) % 360.0
        assert out.minutia.orientation_deg == pytest.approx(expected)

    def test_kind_preserved(self, rng):
        for seed_patch in default_seed_patches()[:8]:
            out = augment_minutia(seed_patch.image, seed_patch.minutia, AugmentConfig(), seed=2)
            assert out.minutia.kind is seed_patch.minutia.kind


class TestLibrary:
    def test_zero_variants_empty(self):
        lib = build_library(default_seed_patches()[:4], 0, AugmentConfig(), seed=0)
        assert len(lib) == 0

    def test_count_contract(self):
        seeds = default_seed_patches()[:4]
        lib = build_library(seeds, 25, AugmentConfig(), seed=0)
        assert len(lib) == 100
        from stripekit.minutiae import validate

        for entry in lib.entries:
            assert validate(entry.minutia).ok

    def test_kind_histogram_scales(self):
        seeds = default_seed_patches()  # one per (kind, region): 12 seeds
        lib = build_library(seeds, 5, AugmentConfig(), seed=1)
        hist = lib.kind_histogram()
        for kind in MinutiaKind:
            n_seeds = sum(1 for s in seeds if s.minutia.kind is kind)
            assert hist[kind] == n_seeds * 5

    def test_gap_raises(self):
        lib = build_library(default_seed_patches()[:1], 2, AugmentConfig(), seed=0)
        with pytest.raises(LibraryGap):
            lib.sample(MinutiaKind.ENCLOSURE, RegionId.HIND, np.random.default_rng(0))

    def test_save_load_roundtrip(self, tmp_path):
        lib = build_library(default_seed_patches()[:3], 2, AugmentConfig(), seed=0)
        save_library(lib, tmp_path / "lib")
        loaded = load_library(tmp_path / "lib")
        assert len(loaded) == len(lib)
        assert [e.minutia.kind for e in loaded.entries] == [e.minutia.kind for e in lib.entries]
        assert loaded.entries[0].image.shape == lib.entries[0].image.shape
