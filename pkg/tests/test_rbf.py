import json

import numpy as np
import pytest

from stripekit import rbf


def gaussian_elimination_solve(a, b):
    """Independent dense solver for the test oracle (partial pivoting)."""
    a = a.astype(np.float64).copy()
    b = b.astype(np.float64).copy()
    n = len(b)
    for col in range(n):
        pivot = col + np.argmax(np.abs(a[col:, col]))
        a[[col, pivot]] = a[[pivot, col]]
        b[[col, pivot]] = b[[pivot, col]]
        for row in range(col + 1, n):
            f = a[row, col] / a[col, col]
            a[row, col:] -= f * a[col, col:]
            b[row] -= f * b[col]
    x = np.zeros(n)
    for row in range(n - 1, -1, -1):
        x[row] = (b[row] - a[row, row + 1 :] @ x[row + 1 :]) / a[row, row]
    return x


class TestFit:
    def test_single_node_exact(self):
        w = rbf.fit(np.array([[5.0, 5.0]]), np.array([[2.0, 0.0]]), epsilon=1.0)
        assert np.abs(rbf.evaluate(w, np.array([5.0, 5.0])) - [2.0, 0.0]).max() < 1e-12

    def test_three_node_residuals(self):
        nodes = np.array([[0.0, 0.0], [10.0, 0.0], [5.0, 8.0]])
        disp = np.array([[1.0, -1.0], [0.0, 2.0], [-3.0, 0.5]])
        w = rbf.fit(nodes, disp)
        assert np.abs(rbf.evaluate(w, nodes) - disp).max() < 1e-8

    def test_node_exactness_up_to_200(self, rng):
        for n in (10, 50, 200):
            nodes = rng.uniform(0, 256, size=(n, 2))
            disp = rng.normal(0, 3, size=(n, 2))
            w = rbf.fit(nodes, disp)
            assert np.abs(rbf.evaluate(w, nodes) - disp).max() < 1e-8

    def test_midpoint_matches_hand_solved_system(self):
        nodes = np.array([[0.0, 0.0], [10.0, 0.0], [5.0, 8.0]])
        disp = np.array([[1.0, -1.0], [0.0, 2.0], [-3.0, 0.5]])
        eps = 2.0
        w = rbf.fit(nodes, disp, epsilon=eps)

        def phi(r):
            return np.sqrt(r * r + eps * eps)

        a = np.empty((3, 3))
        for i in range(3):
            for j in range(3):
                a[i, j] = phi(np.hypot(*(nodes[i] - nodes[j])))
        wx = gaussian_elimination_solve(a, disp[:, 0])
        wy = gaussian_elimination_solve(a, disp[:, 1])
        q = nodes.mean(axis=0)
        kq = np.array([phi(np.hypot(*(q - nodes[i]))) for i in range(3)])
        expected = np.array([kq @ wx, kq @ wy])
        assert np.abs(rbf.evaluate(w, q) - expected).max() < 1e-8

    def test_duplicate_nodes_rejected(self):
        nodes = np.array([[1.0, 1.0], [1.0, 1.0], [3.0, 4.0]])
        with pytest.raises(rbf.SingularSystem):
            rbf.fit(nodes, np.zeros((3, 2)))

    def test_non_positive_epsilon(self):
        with pytest.raises(rbf.NonPositiveEpsilon):
            rbf.fit(np.array([[0.0, 0.0]]), np.array([[1.0, 1.0]]), epsilon=0.0)

    def test_zero_displacements_zero_field(self, rng):
        nodes = rng.uniform(0, 50, size=(8, 2))
        w = rbf.fit(nodes, np.zeros((8, 2)))
        queries = rng.uniform(0, 50, size=(30, 2))
        assert np.abs(rbf.evaluate(w, queries)).max() < 1e-10

    def test_linearity_in_data(self, rng):
        nodes = rng.uniform(0, 64, size=(12, 2))
        disp = rng.normal(0, 2, size=(12, 2))
        w1 = rbf.fit(nodes, disp, epsilon=3.0)
        w2 = rbf.fit(nodes, 2.0 * disp, epsilon=3.0)
        queries = rng.uniform(-10, 74, size=(40, 2))
        assert np.abs(2.0 * rbf.evaluate(w1, queries) - rbf.evaluate(w2, queries)).max() < 1e-8

    def test_deterministic_weights(self, rng):
        nodes = rng.uniform(0, 64, size=(20, 2))
        disp = rng.normal(0, 2, size=(20, 2))
        w1 = rbf.fit(nodes, disp)
        w2 = rbf.fit(nodes, disp)
        assert np.array_equal(w1.w_x, w2.w_x) and np.array_equal(w1.w_y, w2.w_y)

    def test_exactness_across_epsilons(self, rng):
        nodes = rng.uniform(0, 64, size=(6, 2))
        disp = rng.normal(0, 2, size=(6, 2))
        for eps in (0.5, 5.0, 50.0):
            w = rbf.fit(nodes, disp, epsilon=eps)
            assert np.abs(rbf.evaluate(w, nodes) - disp).max() < 1e-8


class TestImageApplication:
    def smooth_gradient(self, n=64):
        ys, xs = np.mgrid[0:n, 0:n]
        return 0.5 + 0.25 * np.sin(xs / 9.0) + 0.25 * np.cos(ys / 11.0)

    def zero_warp(self):
        return rbf.fit(np.array([[10.0, 10.0], [50.0, 40.0]]), np.zeros((2, 2)))

    def gentle_warp(self, rng):
        # smooth low-frequency deformation sampled on a covering node grid
        gx, gy = np.meshgrid(np.linspace(4, 60, 4), np.linspace(4, 60, 4))
        nodes = np.column_stack([gx.ravel(), gy.ravel()])
        disp = np.column_stack(
            [
                1.5 * np.sin(nodes[:, 1] / 20.0),
                1.5 * np.cos(nodes[:, 0] / 17.0),
            ]
        )
        return rbf.fit(nodes, disp)

    def test_zero_field_identity(self):
        img = self.smooth_gradient()
        assert np.array_equal(rbf.apply_inverse(img, self.zero_warp()), img)

    def test_inverse_then_forward_roundtrip(self, rng):
        img = self.smooth_gradient()
        w = self.gentle_warp(rng)
        rt = rbf.apply_forward(rbf.apply_inverse(img, w), w)
        mean_err = np.abs(rt - img).mean()
        assert mean_err < 0.02 * (img.max() - img.min())

    def test_transport_matches_analytic_within_half_pixel(self, rng):
        w = self.gentle_warp(rng)
        pts = rng.uniform(10, 54, size=(50, 2))
        moved = rbf.transport_points(w, pts)
        one_step = pts - rbf.evaluate(w, pts)
        assert np.abs(moved - one_step).max() < 0.5

    def test_transport_satisfies_sampling_equation(self, rng):
        w = self.gentle_warp(rng)
        pts = rng.uniform(10, 54, size=(20, 2))
        moved = rbf.transport_points(w, pts)
        assert np.abs(moved + rbf.evaluate(w, moved) - pts).max() < 1e-9


class TestSerialization:
    def test_json_roundtrip(self, tmp_path, rng):
        nodes = rng.uniform(0, 32, size=(5, 2))
        disp = rng.normal(0, 1, size=(5, 2))
        w = rbf.fit(nodes, disp)
        path = tmp_path / "warp.json"
        rbf.save_warp(w, path)
        loaded = rbf.load_warp(path)
        assert loaded.epsilon == w.epsilon
        assert np.array_equal(loaded.nodes, w.nodes)
        assert np.array_equal(loaded.w_x, w.w_x)
        queries = rng.uniform(0, 32, size=(10, 2))
        assert np.array_equal(rbf.evaluate(loaded, queries), rbf.evaluate(w, queries))

    def test_schema_fields(self, rng):
        w = rbf.fit(np.array([[1.0, 2.0]]), np.array([[0.5, -0.5]]), epsilon=1.0)
        d = rbf.warp_to_dict(w)
        assert set(d) == {"epsilon", "nodes", "weights"}
        assert set(d["weights"]) == {"x", "y"}
        json.dumps(d)
