import numpy as np
import pytest

from shrinktori import (
    ConformalStructure,
    GridSpec,
    TorusMap,
    area,
    clifford_seed,
    derivatives,
    fundamental_forms,
    metric_g_tau,
    min_distance_to_origin,
)
from shrinktori.errors import DegenerateMetric
from shrinktori.grid import (
    laplace_beltrami,
    map_derivatives,
    mean_curvature,
    metric_g_tau_inv,
    partial_deriv,
    quadrature,
    resample,
    rotate,
    scale,
    translate,
)
from shrinktori.seeds import round_product_seed, warped_clifford_seed

PI = np.pi


class TestGridSpec:
    def test_spacing(self):
        g = GridSpec(16, 32)
        assert g.hx == 1 / 16 and g.hy == 1 / 32

    @pytest.mark.parametrize("nx,ny", [(4, 16), (16, 6), (15, 16), (16, 17)])
    def test_rejects_small_or_odd(self, nx, ny):
        with pytest.raises(ValueError):
            GridSpec(nx, ny)


class TestMetricGTau:
    def test_square_torus_is_identity(self):
        assert np.allclose(metric_g_tau(ConformalStructure(0, 1)), np.eye(2))

    def test_sheared(self):
        g = metric_g_tau(ConformalStructure(1, 1))
        assert np.allclose(g, [[1, 1], [1, 2]])
        assert np.isclose(np.linalg.det(g), 1.0)

    def test_stretched(self):
        g = metric_g_tau(ConformalStructure(0, 2))
        assert np.allclose(g, [[1, 0], [0, 4]])
        assert np.isclose(np.linalg.det(g), 4.0)

    def test_det_is_tau2_squared(self):
        tau = ConformalStructure(0.7, 1.3)
        assert np.isclose(np.linalg.det(metric_g_tau(tau)), 1.3**2)
        assert np.allclose(metric_g_tau(tau) @ metric_g_tau_inv(tau), np.eye(2))

    @pytest.mark.parametrize("t2", [0.0, -1.0])
    def test_rejects_lower_half_plane(self, t2):
        with pytest.raises(ValueError):
            ConformalStructure(0.0, t2)


class TestDerivatives:
    def test_constant_map(self, grid32):
        u = TorusMap(grid32, np.ones(grid32.shape + (4,)))
        du = map_derivatives(u)
        assert np.max(np.abs(du[0])) < 1e-12
        assert np.max(np.abs(du[1])) < 1e-12

    @pytest.mark.parametrize("backend", ["fd4", "spectral"])
    def test_clifford_first_derivatives(self, clifford64, backend):
        d1, d2 = map_derivatives(clifford64, backend)
        n1 = np.linalg.norm(d1, axis=-1)
        n2 = np.linalg.norm(d2, axis=-1)
        tol = 1e-4 if backend == "fd4" else 1e-10
        assert np.allclose(n1, 2 * PI * np.sqrt(2), rtol=tol)
        assert np.allclose(n2, 2 * PI * np.sqrt(2), rtol=tol)
        assert np.max(np.abs(np.einsum("xyk,xyk->xy", d1, d2))) < 1e-10

    def test_linear_ramp_exact(self, grid32):
        lin = np.array([[0.3, 0.0, -0.2, 0.0], [0.0, 0.5, 0.0, 0.1]])
        x, y = grid32.nodes()
        vals = x[..., None] * lin[0] + y[..., None] * lin[1]
        u = TorusMap(grid32, vals, lin)
        d1, d2 = map_derivatives(u)
        assert np.allclose(d1, lin[0], atol=1e-13)
        assert np.allclose(d2, lin[1], atol=1e-13)

    def test_translation_invariance(self, clifford32):
        shifted = translate(clifford32, [3.0, -2.0, 1.0, 0.5])
        d0 = map_derivatives(clifford32)
        d1 = map_derivatives(shifted)
        assert np.allclose(d0[0], d1[0], atol=1e-12)
        assert np.allclose(d0[1], d1[1], atol=1e-12)

    def test_spectral_exact_below_nyquist(self, grid32):
        x, y = grid32.nodes()
        f = np.sin(2 * PI * 5 * x) * np.cos(2 * PI * 3 * y)
        df = partial_deriv(f, 0, grid32, "spectral")
        exact = 2 * PI * 5 * np.cos(2 * PI * 5 * x) * np.cos(2 * PI * 3 * y)
        assert np.max(np.abs(df - exact)) < 1e-9


class TestFundamentalForms:
    def test_clifford_mean_curvature(self, clifford64):
        data = fundamental_forms(clifford64)
        target = -0.5 * clifford64.values
        assert np.max(np.linalg.norm(data.H - target, axis=-1)) < 1e-10
        assert abs(data.maxA2 - 1.0) < 1e-10

    def test_h_orthogonal_to_tangents(self, clifford64):
        data = fundamental_forms(clifford64)
        for i in range(2):
            dot = np.einsum("xyk,xyk->xy", data.H, data.du[i])
            assert np.max(np.abs(dot)) < 1e-9

    def test_flat_patch_has_no_curvature(self, grid32):
        lin = np.array([[1.0, 0.0, 0.3, 0.0], [0.2, 1.0, 0.0, 0.0]])
        x, y = grid32.nodes()
        vals = x[..., None] * lin[0] + y[..., None] * lin[1]
        u = TorusMap(grid32, vals, lin)
        data = fundamental_forms(u)
        assert np.max(np.linalg.norm(data.H, axis=-1)) < 1e-11
        assert data.maxA2 < 1e-11

    def test_unit_product_torus(self, grid32):
        u = round_product_seed(grid32, 1.0, 1.0)
        data = fundamental_forms(u)
        hn = np.linalg.norm(data.H, axis=-1)
        assert np.allclose(hn, np.sqrt(2.0), rtol=1e-6)

    def test_rotation_equivariance_exact(self, clifford32, rng):
        R = np.linalg.qr(rng.standard_normal((4, 4)))[0]
        if np.linalg.det(R) < 0:
            R[:, 0] *= -1
        H_rot = fundamental_forms(rotate(clifford32, R)).H
        H_ref = fundamental_forms(clifford32).H @ R.T
        assert np.max(np.abs(H_rot - H_ref)) < 1e-12

    def test_mean_curvature_fast_path_matches(self, grid32):
        u = warped_clifford_seed(grid32)
        assert np.allclose(mean_curvature(u), fundamental_forms(u).H, atol=1e-12)

    def test_degenerate_metric_reports_node(self, grid32):
        vals = clifford_seed(grid32).values.copy()
        vals[3:8, :] = vals[5:6, :]   # locally constant in x: D1 u = 0 at node 5
        with pytest.raises(DegenerateMetric) as exc:
            fundamental_forms(TorusMap(grid32, vals))
        assert exc.value.node[0] == 5


class TestArea:
    def test_clifford(self, clifford64):
        assert abs(area(clifford64) / (8 * PI**2) - 1) < 1e-4

    def test_unit_product(self, grid32):
        u = round_product_seed(grid32, 1.0, 1.0)
        assert abs(area(u) / (4 * PI**2) - 1) < 1e-3

    def test_scaling_law(self, clifford32):
        a1 = area(clifford32)
        a2 = area(scale(clifford32, 2.5))
        assert abs(a2 / a1 - 2.5**2) < 1e-12

    def test_refinement_order(self):
        ref = 8 * PI**2
        errs = [abs(area(warped_clifford_seed(GridSpec(n, n))) - ref)
                for n in (32, 64)]
        order = np.log2(errs[0] / errs[1])
        assert order >= 1.9

    def test_spectral_backend_exact_on_warped(self):
        u = warped_clifford_seed(GridSpec(64, 64))
        assert abs(area(u, "spectral") - 8 * PI**2) < 1e-9


class TestMinDistance:
    def test_clifford_is_two(self, clifford32):
        assert abs(min_distance_to_origin(clifford32) - 2.0) < 1e-12

    def test_translated(self, clifford32):
        u = translate(clifford32, [10.0, 0.0, 0.0, 0.0])
        assert min_distance_to_origin(u) >= 8.0

    def test_zero_map(self, grid32):
        u = TorusMap(grid32, np.zeros(grid32.shape + (4,)))
        assert min_distance_to_origin(u) == 0.0


class TestLaplaceBeltrami:
    def test_clifford_eigenfunction(self, clifford64):
        # f = cos(2 pi x): Delta_g f = -(2 pi)^2 g^{11} f = -f/2 on the Clifford torus
        x, _ = clifford64.grid.nodes()
        f = np.cos(2 * PI * x) * np.ones(clifford64.grid.shape)
        lap = laplace_beltrami(f, clifford64)
        assert np.max(np.abs(lap + 0.5 * f)) < 1e-4

    def test_integrates_to_zero(self, grid32):
        u = warped_clifford_seed(grid32)
        data = derivatives(u)
        x, y = grid32.nodes()
        f = np.sin(2 * PI * (x + 2 * y)) * np.ones(grid32.shape)
        lap = laplace_beltrami(f, u, data=data)
        assert abs(quadrature(lap * data.sqrt_det_g, grid32)) < 1e-10


class TestResample:
    def test_roundtrip_bandlimited(self, clifford32):
        up = resample(clifford32, GridSpec(64, 64))
        back = resample(up, GridSpec(32, 32))
        assert np.max(np.abs(back.values - clifford32.values)) < 1e-12

    def test_downsample_matches_seed(self, clifford64):
        down = resample(clifford64, GridSpec(16, 16))
        direct = clifford_seed(GridSpec(16, 16))
        assert np.max(np.abs(down.values - direct.values)) < 1e-12
