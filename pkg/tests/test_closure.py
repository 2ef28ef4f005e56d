import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from m1dg import closure as cl

# Derived by direct evaluation of chi(f) = (3 + 4 f^2)/(5 + 2 sqrt(4 - 3 f^2)).
CHI_HALF = 4.0 / (5.0 + 2.0 * np.sqrt(3.25))


def random_realizable(rng, n, strict=True, fmax=None):
    """Sample realizable states with log-spread densities and uniform f."""
    psi0 = np.exp(rng.uniform(-3.0, 2.0, size=n))
    if fmax is None:
        fmax = 1.0 - 1e-9 if strict else 1.0
    f = rng.uniform(0.0, fmax, size=n)
    phi = rng.uniform(0.0, 2.0 * np.pi, size=n)
    return np.stack(
        [psi0, f * psi0 * np.cos(phi), f * psi0 * np.sin(phi)], axis=-1
    )


class TestEddington:
    def test_endpoints(self):
        assert cl.eddington_chi(0.0) == pytest.approx(1.0 / 3.0, abs=1e-15)
        assert cl.eddington_chi(1.0) == 1.0

    def test_half(self):
        assert cl.eddington_chi(0.5) == pytest.approx(CHI_HALF, rel=1e-14)

    def test_range_and_monotonicity(self):
        f = np.linspace(0.0, 1.0, 1001)
        chi = cl.eddington_chi(f)
        assert np.all(chi >= 1.0 / 3.0 - 1e-14)
        assert np.all(chi <= 1.0 + 1e-14)
        assert np.all(np.diff(chi) >= 0.0)

    def test_domain_error(self):
        with pytest.raises(cl.RealizabilityError):
            cl.eddington_chi(1.5)
        with pytest.raises(cl.RealizabilityError):
            cl.eddington_chi(-0.1)

    def test_derivative_against_central_differences(self):
        f = np.linspace(0.005, 0.995, 100)
        h = 1e-7
        fd = (cl.eddington_chi(f + h) - cl.eddington_chi(f - h)) / (2.0 * h)
        assert np.max(np.abs(cl.eddington_chi_prime(f) - fd)) < 1e-6

    def test_derivative_vanishes_at_zero(self):
        assert cl.eddington_chi_prime(0.0) == 0.0


class TestRealizability:
    def test_examples(self):
        assert cl.is_realizable(np.array([1.0, 0.0, 0.0]))
        assert cl.distance_to_boundary(np.array([1.0, 0.0, 0.0])) == 1.0
        # |psi1| = 1 = psi0: on the boundary, still realizable (closed set)
        assert cl.is_realizable(np.array([1.0, 0.6, 0.8]))
        assert cl.distance_to_boundary(np.array([1.0, 0.6, 0.8])) == 0.0
        assert not cl.is_realizable(np.array([0.5, 0.6, 0.0]))
        assert cl.distance_to_boundary(np.array([0.5, 0.6, 0.0])) == pytest.approx(-0.1)

    def test_fix_examples(self):
        u = cl.realizability_fix(np.array([1.0, 0.5, 0.0]))
        np.testing.assert_array_equal(u, [1.0, 0.5, 0.0])
        u = cl.realizability_fix(np.array([-1.0, 0.0, 0.0]))
        np.testing.assert_array_equal(u, [1e-12, 0.0, 0.0])
        u = cl.realizability_fix(np.array([1.0, 2.0, 0.0]))
        np.testing.assert_allclose(u, [1.0, 1.0 - 1e-12, 0.0], rtol=0, atol=1e-16)

    @given(
        psi0=st.floats(-1e6, 1e6, allow_nan=False),
        p1x=st.floats(-1e6, 1e6, allow_nan=False),
        p1y=st.floats(-1e6, 1e6, allow_nan=False),
    )
    @settings(max_examples=300, deadline=None)
    def test_fix_output_strict_and_idempotent(self, psi0, p1x, p1y):
        u = cl.realizability_fix(np.array([psi0, p1x, p1y]))
        assert cl.is_strictly_realizable(u)
        np.testing.assert_array_equal(cl.realizability_fix(u), u)


class TestClosure:
    def test_isotropic(self):
        p = cl.closure_pressure(np.array([1.0, 0.0, 0.0]))
        assert p.xx == pytest.approx(1.0 / 3.0, abs=1e-15)
        assert p.yy == pytest.approx(1.0 / 3.0, abs=1e-15)
        assert p.zz == pytest.approx(1.0 / 3.0, abs=1e-15)
        assert p.xy == 0.0

    def test_free_streaming(self):
        p = cl.closure_pressure(np.array([1.0, 1.0, 0.0]))
        np.testing.assert_allclose([p.xx, p.xy, p.yy], [1.0, 0.0, 0.0], atol=1e-15)

    def test_half_flux_state(self):
        p = cl.closure_pressure(np.array([2.0, 0.0, 1.0]))
        assert p.xx == pytest.approx(2.0 * 0.5 * (1.0 - CHI_HALF), rel=1e-14)
        assert p.xy == 0.0
        assert p.yy == pytest.approx(2.0 * CHI_HALF, rel=1e-14)

    def test_rejects_nonrealizable(self):
        with pytest.raises(cl.RealizabilityError):
            cl.closure_pressure(np.array([1.0, 2.0, 0.0]))

    def test_trace_identity(self):
        rng = np.random.default_rng(42)
        u = random_realizable(rng, 10_000, strict=False)
        p = cl.closure_pressure(u)
        np.testing.assert_allclose(p.trace(), u[..., 0], rtol=1e-12)

    def test_flux_examples(self):
        fx, gy = cl.flux(np.array([1.0, 0.0, 0.0]))
        np.testing.assert_allclose(fx, [0.0, 1.0 / 3.0, 0.0], atol=1e-15)
        np.testing.assert_allclose(gy, [0.0, 0.0, 1.0 / 3.0], atol=1e-15)
        fx, gy = cl.flux(np.array([1.0, 1.0, 0.0]))
        np.testing.assert_allclose(fx, [1.0, 1.0, 0.0], atol=1e-15)
        np.testing.assert_allclose(gy, [0.0, 0.0, 0.0], atol=1e-15)
        fx, gy = cl.flux(np.array([2.0, 0.0, 1.0]))
        np.testing.assert_allclose(fx, [0.0, 1.0 - CHI_HALF, 0.0], rtol=1e-14, atol=1e-15)
        np.testing.assert_allclose(gy, [1.0, 0.0, 2.0 * CHI_HALF], rtol=1e-14, atol=1e-15)


class TestJacobian:
    def test_isotropic_limit(self):
        jac = cl.directional_jacobian(np.array([1.0, 0.0, 0.0]), np.array([1.0, 0.0]))
        expected = np.array([[0.0, 1.0, 0.0], [1.0 / 3.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
        np.testing.assert_allclose(jac, expected, atol=1e-15)

    def test_against_finite_differences(self):
        rng = np.random.default_rng(7)
        u = random_realizable(rng, 200, fmax=0.98)
        phi = rng.uniform(0.0, 2.0 * np.pi, size=200)
        n = np.stack([np.cos(phi), np.sin(phi)], axis=-1)
        jac = cl.directional_jacobian(u, n)
        h = 1e-6
        for k in range(3):
            e = np.zeros(3)
            e[k] = h
            fp, gp = cl.flux(u + e)
            fm, gm = cl.flux(u - e)
            fd = ((fp - fm) * n[:, :1] + (gp - gm) * n[:, 1:]) / (2.0 * h)
            scale = np.max(np.abs(jac), axis=(-2, -1))
            err = np.max(np.abs(jac[..., :, k] - fd), axis=-1) / scale
            assert np.max(err) < 1e-5

    def test_rotational_invariance(self):
        rng = np.random.default_rng(3)
        u = random_realizable(rng, 50, fmax=0.95)
        phi0 = rng.uniform(0.0, 2.0 * np.pi, size=50)
        n = np.stack([np.cos(phi0), np.sin(phi0)], axis=-1)
        jac = cl.directional_jacobian(u, n)
        for angle in rng.uniform(0.0, 2.0 * np.pi, size=5):
            c, s = np.cos(angle), np.sin(angle)
            rot = np.array([[c, -s], [s, c]])
            t = np.eye(3)
            t[1:, 1:] = rot
            u_rot = u.copy()
            u_rot[:, 1:] = u[:, 1:] @ rot.T
            jac_rot = cl.directional_jacobian(u_rot, n @ rot.T)
            expected = np.einsum("ij,njk,kl->nil", t, jac, t.T)
            assert np.max(np.abs(jac_rot - expected)) < 1e-10

    def test_boundary_is_singular(self):
        with pytest.raises(cl.RealizabilityError):
            cl.directional_jacobian(np.array([1.0, 1.0, 0.0]), np.array([1.0, 0.0]))

    def test_normal_must_be_unit(self):
        with pytest.raises(ValueError):
            cl.directional_jacobian(np.array([1.0, 0.0, 0.0]), np.array([1.0, 1.0]))


class TestEigendecomposition:
    def test_isotropic_speeds(self):
        for n in ([1.0, 0.0], [0.0, 1.0], [0.6, 0.8]):
            dec = cl.eigendecomposition(np.array([1.0, 0.0, 0.0]), np.array(n))
            np.testing.assert_allclose(
                dec.eigenvalues,
                [-1.0 / np.sqrt(3.0), 0.0, 1.0 / np.sqrt(3.0)],
                atol=1e-12,
            )

    def test_speed_collapse_near_boundary(self):
        dec = cl.eigendecomposition(
            np.array([1.0, 1.0 - 1e-6, 0.0]), np.array([1.0, 0.0])
        )
        assert dec.eigenvalues.max() - dec.eigenvalues.min() < 0.05

    def test_reconstruction_property(self):
        rng = np.random.default_rng(11)
        u = random_realizable(rng, 1000, fmax=0.999)
        phi = rng.uniform(0.0, 2.0 * np.pi, size=1000)
        n = np.stack([np.cos(phi), np.sin(phi)], axis=-1)
        jac = cl.directional_jacobian(u, n)
        lam, right, left, cond, ok = cl.eigensystem(u, n)
        assert np.all(ok)
        recon = np.einsum("nij,nj,njk->nik", right, lam, left)
        scale = np.max(np.abs(jac), axis=(-2, -1))
        assert np.max(np.max(np.abs(recon - jac), axis=(-2, -1)) / scale) < 1e-8

    def test_left_inverts_right(self):
        rng = np.random.default_rng(13)
        u = random_realizable(rng, 500, fmax=0.99)
        lam, right, left, cond, ok = cl.eigensystem(u, np.array([1.0, 0.0]))
        assert np.all(ok)
        prod = np.einsum("nij,njk->nik", left, right)
        assert np.max(np.abs(prod - np.eye(3))) < 1e-10

    def test_sorted_ascending(self):
        rng = np.random.default_rng(17)
        u = random_realizable(rng, 200, fmax=0.99)
        lam, *_ = cl.eigensystem(u, np.array([0.0, 1.0]))
        assert np.all(np.diff(lam, axis=-1) >= 0.0)

    def test_speed_bound(self):
        # |lambda| <= 1 justifies the unit viscosity constant in the LF flux.
        rng = np.random.default_rng(19)
        u = random_realizable(rng, 10_000, fmax=1.0 - 1e-9)
        lam, *_ = cl.eigensystem(u, np.array([1.0, 0.0]))
        assert np.max(np.abs(lam)) <= 1.0 + 1e-10

    def test_condition_growth_toward_boundary(self):
        conds = []
        for eps in 10.0 ** -np.arange(1, 9):
            dec = cl.eigendecomposition(
                np.array([1.0, 1.0 - eps, 0.0]), np.array([1.0, 0.0])
            )
            conds.append(dec.condition_estimate)
        conds = np.array(conds)
        assert np.all(np.diff(conds) > 0.0)
        # roughly 2/eps: same order of magnitude across six decades
        ratio = conds / (2.0 / 10.0 ** -np.arange(1, 9))
        assert np.all(ratio > 0.01) and np.all(ratio < 100.0)


class TestHalfRangeLemma:
    def test_edge_trace_combinations_realizable(self):
        # For realizable U and any unit nu, (psi0 -+ psi1.nu, psi1 -+ psi2.nu)
        # must stay in the cone; this is what makes upwind edge averages safe.
        rng = np.random.default_rng(23)
        u = random_realizable(rng, 10_000, strict=False)
        phi = rng.uniform(0.0, 2.0 * np.pi, size=10_000)
        nu = np.stack([np.cos(phi), np.sin(phi)], axis=-1)
        p = cl.closure_pressure(u)
        p1dotnu = u[:, 1] * nu[:, 0] + u[:, 2] * nu[:, 1]
        p2nu_x = p.xx * nu[:, 0] + p.xy * nu[:, 1]
        p2nu_y = p.xy * nu[:, 0] + p.yy * nu[:, 1]
        scale = np.abs(u[:, 0]) + np.hypot(u[:, 1], u[:, 2])
        for sign in (+1.0, -1.0):
            combo = np.stack(
                [
                    u[:, 0] + sign * p1dotnu,
                    u[:, 1] + sign * p2nu_x,
                    u[:, 2] + sign * p2nu_y,
                ],
                axis=-1,
            )
            dist = cl.distance_to_boundary(combo)
            assert np.all(dist >= -1e-12 * scale)
            assert np.all(combo[:, 0] >= -1e-12 * scale)
