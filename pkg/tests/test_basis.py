import numpy as np
import pytest

from m1dg import basis


def random_triangle(rng):
    for _ in range(100):
        v = rng.uniform(-2.0, 2.0, size=(3, 2))
        d1, d2 = v[1] - v[0], v[2] - v[0]
        det = d1[0] * d2[1] - d1[1] * d2[0]
        if det < 0.0:
            v = v[[0, 2, 1]]
            det = -det
        if det > 0.2:  # avoid slivers
            return v
    raise RuntimeError("no well-shaped triangle found")


class TestRules:
    def test_gauss3_matches_displayed_rule(self):
        x, w = basis.gauss_rule(3)
        np.testing.assert_allclose(
            np.sort(x), [-0.5 * np.sqrt(0.6), 0.0, 0.5 * np.sqrt(0.6)], atol=1e-15
        )
        np.testing.assert_allclose(np.sort(w), np.sort([5 / 18, 8 / 18, 5 / 18]), atol=1e-15)

    def test_gauss1(self):
        x, w = basis.gauss_rule(1)
        np.testing.assert_allclose(x, [0.0], atol=1e-16)
        np.testing.assert_allclose(w, [1.0], atol=1e-16)

    def test_gauss2_integrates_x2(self):
        x, w = basis.gauss_rule(2)
        assert abs(np.sum(w * x * x) - 1.0 / 12.0) < 1e-15

    def test_weight_sums(self):
        for n in range(1, 6):
            _, w = basis.gauss_rule(n)
            assert abs(w.sum() - 1.0) < 1e-14
        for n in (3, 4):
            _, w = basis.gauss_lobatto_rule(n)
            assert abs(w.sum() - 1.0) < 1e-14

    def test_lobatto_values(self):
        x, w = basis.gauss_lobatto_rule(3)
        np.testing.assert_allclose(x, [-0.5, 0.0, 0.5], atol=1e-16)
        assert w[0] == pytest.approx(1.0 / 6.0, abs=1e-16)
        x, w = basis.gauss_lobatto_rule(4)
        np.testing.assert_allclose(
            x, [-0.5, -0.5 / np.sqrt(5), 0.5 / np.sqrt(5), 0.5], atol=1e-15
        )
        assert w[0] == pytest.approx(1.0 / 12.0, abs=1e-16)

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            basis.gauss_rule(6)
        with pytest.raises(ValueError):
            basis.gauss_lobatto_rule(5)


class TestReferenceBasis:
    @pytest.mark.parametrize("shape", ["tri", "rect"])
    @pytest.mark.parametrize("k", [0, 1, 2])
    def test_orthonormal_mass_matrix(self, shape, k):
        rb = basis.reference_basis(shape, k)
        nodes, weights = basis.error_quadrature(shape, 6)
        phi = rb.evaluate(nodes)
        mass = np.einsum("q,qi,qj->ij", weights, phi, phi)
        np.testing.assert_allclose(mass, np.eye(rb.n_modes), atol=1e-13)
        assert np.linalg.cond(mass) < 1e3

    def test_mode_counts(self):
        # N_k = (k+1)(k+2)/2 on both shapes
        assert basis.reference_basis("tri", 2).n_modes == 6
        assert basis.reference_basis("rect", 2).n_modes == 6
        assert basis.reference_basis("rect", 1).n_modes == 3

    def test_constant_mode_carries_mean(self):
        for shape in ("tri", "rect"):
            rb = basis.reference_basis(shape, 2)
            nodes, weights = basis.error_quadrature(shape, 6)
            phi = rb.evaluate(nodes)
            area = weights.sum()
            means = np.einsum("q,qi->i", weights, phi) / area
            assert means[0] == pytest.approx(rb.mean_value, rel=1e-13)
            np.testing.assert_allclose(means[1:], 0.0, atol=1e-14)

    @pytest.mark.parametrize("shape", ["tri", "rect"])
    @pytest.mark.parametrize("k", [1, 2])
    def test_projection_reproduces_polynomials(self, shape, k):
        rng = np.random.default_rng(5)
        rb = basis.reference_basis(shape, k)
        quad = basis.reference_quadrature(shape, k)
        # random polynomial of degree <= k expressed in the basis itself
        coef = rng.standard_normal(rb.n_modes)
        target = lambda pts: rb.evaluate(pts) @ coef
        phi = rb.evaluate(quad.volume_nodes)
        proj = np.einsum("q,qi,q->i", quad.volume_weights, phi, target(quad.volume_nodes))
        check = quad.srk_nodes
        np.testing.assert_allclose(
            rb.evaluate(check) @ proj, target(check), atol=1e-12
        )


class TestTriangleDecomposition:
    def test_weight_totals(self):
        quad = basis.reference_quadrature("tri", 2)
        ec = quad.cellmean_edge_count
        assert ec == 9
        assert quad.cellmean_weights[:ec].sum() == pytest.approx(1.0 / 3.0, abs=1e-14)
        assert quad.cellmean_weights[ec:].sum() == pytest.approx(2.0 / 3.0, abs=1e-14)
        assert quad.cellmean_weights.sum() == pytest.approx(1.0, abs=1e-14)
        assert np.all(quad.cellmean_weights > 0.0)

    def test_node_count_k2(self):
        quad = basis.reference_quadrature("tri", 2)
        assert len(quad.srk_nodes) == 18
        assert len(quad.cellmean_nodes) == 18

    def test_constant_reproduced(self):
        rng = np.random.default_rng(1)
        v = random_triangle(rng)
        quad = basis.triangle_cellmean_set(2, v)
        c = 3.7
        vals = np.full(len(quad.cellmean_nodes), c)
        assert np.dot(quad.cellmean_weights, vals) == pytest.approx(c, rel=1e-14)

    @pytest.mark.parametrize("seed", range(5))
    def test_degree3_exactness_on_random_triangles(self, seed):
        # oracle: high-order collapsed tensor rule, independent of the
        # decomposition construction
        rng = np.random.default_rng(seed)
        coeffs = rng.standard_normal((4, 4))
        poly = lambda x, y: sum(
            coeffs[p, q] * x**p * y**q for p in range(4) for q in range(4) if p + q <= 3
        )
        for _ in range(20):
            v = random_triangle(rng)
            quad = basis.triangle_cellmean_set(2, v)
            mean = np.dot(quad.cellmean_weights, poly(*quad.cellmean_nodes.T))
            ref_nodes, ref_weights = basis.error_quadrature("tri", 8)
            bmat = np.stack([v[1] - v[0], v[2] - v[0]], axis=-1)
            phys = v[0][None, :] + ref_nodes @ bmat.T
            oracle = np.dot(ref_weights, poly(*phys.T)) / ref_weights.sum()
            assert mean == pytest.approx(oracle, rel=1e-12, abs=1e-12)

    def test_degenerate_triangle_rejected(self):
        with pytest.raises(ValueError):
            basis.triangle_cellmean_set(2, np.array([[0.0, 0], [1, 0], [2, 0]]))

    def test_nodes_inside_closed_cell(self):
        for k in (0, 1, 2):
            quad = basis.reference_quadrature("tri", k)
            x, y = quad.srk_nodes.T
            bary = np.stack([1.0 - x - y, x, y])
            assert np.all(bary >= -1e-12) and np.all(bary <= 1.0 + 1e-12)


class TestRectNodes:
    def test_srk_count_k2(self):
        quad = basis.reference_quadrature("rect", 2)
        # 16 Gauss-Lobatto tensor nodes plus 12 edge Gauss nodes
        assert len(quad.srk_nodes) == 28

    def test_tensor_rule_exact_x2y2(self):
        quad = basis.reference_quadrature("rect", 2)
        x, y = quad.volume_nodes.T
        # integral of (x + 1/2)^2 (y + 1/2)^2 over the unit square is 1/9
        val = np.dot(quad.volume_weights, (x + 0.5) ** 2 * (y + 0.5) ** 2)
        assert val == pytest.approx(1.0 / 9.0, rel=1e-14)

    def test_volume_weights_sum_to_area(self):
        quad = basis.reference_quadrature("rect", 2)
        assert quad.volume_weights.sum() == pytest.approx(1.0, abs=1e-14)
        phys = basis.rect_node_set(2, np.array([0.3, 0.4]), 0.2, 0.5)
        assert phys.volume_weights.sum() == pytest.approx(1.0, abs=1e-14)

    def test_cellmean_identity(self):
        rng = np.random.default_rng(9)
        rb = basis.reference_basis("rect", 2)
        quad = basis.reference_quadrature("rect", 2)
        coef = rng.standard_normal(rb.n_modes)
        mean = rb.mean_value * coef[0]
        vals = rb.evaluate(quad.cellmean_nodes) @ coef
        assert np.dot(quad.cellmean_weights, vals) == pytest.approx(mean, rel=1e-13)
        # first-layer (edge) weight per node is (1/2) * (1/6) * w_beta
        ec = quad.cellmean_edge_count
        _, w = basis.gauss_rule(3)
        np.testing.assert_allclose(
            quad.cellmean_weights[:ec], np.tile(0.5 * w / 6.0, 4), atol=1e-15
        )

    def test_limiter_set_contains_decomposition(self):
        quad = basis.reference_quadrature("rect", 2)
        for p in quad.cellmean_nodes:
            assert np.min(np.max(np.abs(quad.limiter_nodes - p), axis=1)) < 1e-12

    def test_cellmean_identity_triangle_all_k(self):
        rng = np.random.default_rng(19)
        for k in (0, 1, 2):
            rb = basis.reference_basis("tri", k)
            quad = basis.reference_quadrature("tri", k)
            coef = rng.standard_normal(rb.n_modes)
            mean = rb.mean_value * coef[0] * 0.5 / 0.5  # constant mode mean
            vals = rb.evaluate(quad.cellmean_nodes) @ coef
            assert np.dot(quad.cellmean_weights, vals) == pytest.approx(
                rb.mean_value * coef[0], rel=1e-12, abs=1e-14
            )
