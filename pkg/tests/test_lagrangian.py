import numpy as np
import pytest

from shrinktori import (
    GridSpec,
    OneForm,
    TorusMap,
    clifford_seed,
    lagrangian_angle,
    lagrangian_perturb,
    maslov_numbers,
    one_form_to_variation,
    symplectic_residual,
)
from shrinktori.errors import (
    NonIntegerPeriod,
    NotClosed,
    NotLagrangian,
    ProjectionDiverged,
)
from shrinktori.grid import derivatives, fundamental_forms, partial_deriv, scale, translate
from shrinktori.lagrangian import (
    complex_structure,
    injectivity_scale,
    lagrangian_tolerance,
    mean_curvature_form,
    omega_pairing,
)
from shrinktori.seeds import abresch_langer_curve, product_torus_seed, warped_clifford_seed
from shrinktori.variational import random_bandlimited_pair

PI = np.pi


def reversed_clifford(grid):
    u = clifford_seed(grid)
    vals = u.values.copy()
    vals[..., 3] *= -1.0          # reverse the second circle's orientation
    return TorusMap(grid, vals)


def unitary_rotation(theta, phi):
    """diag(e^{i theta}, e^{i phi}) acting on R^4 = C^2."""
    c1, s1 = np.cos(theta), np.sin(theta)
    c2, s2 = np.cos(phi), np.sin(phi)
    R = np.zeros((4, 4))
    R[:2, :2] = [[c1, -s1], [s1, c1]]
    R[2:, 2:] = [[c2, -s2], [s2, c2]]
    return R


class TestSymplecticResidual:
    def test_clifford_zero(self, clifford64):
        assert symplectic_residual(clifford64) < 1e-12

    def test_graph_of_nonclosed_form(self, clifford64):
        # move along J alpha^sharp for a NON-closed alpha: breaks F*omega = 0
        g = clifford64.grid
        x, y = g.nodes()
        a = np.sin(2 * PI * y) * np.ones(g.shape)
        b = np.zeros(g.shape)
        data = derivatives(clifford64)
        sharp = np.zeros_like(clifford64.values)
        for i in range(2):
            coeff = data.inv_metric[..., i, 0] * a + data.inv_metric[..., i, 1] * b
            sharp += coeff[..., None] * data.du[i]
        X = complex_structure(sharp)
        X /= np.max(np.linalg.norm(X, axis=-1))
        u = TorusMap(g, clifford64.values + 0.15 * X)
        assert symplectic_residual(u) > 0.01

    def test_unitary_invariance(self, clifford32, rng):
        from shrinktori.grid import rotate

        R = unitary_rotation(0.83, -1.21)
        r0 = symplectic_residual(clifford32)
        r1 = symplectic_residual(rotate(clifford32, R))
        assert abs(r0 - r1) < 1e-12

    def test_omega_pairing_convention(self):
        e = np.eye(4)
        assert omega_pairing(e[0], e[1]) == 1.0
        assert omega_pairing(e[1], e[0]) == -1.0
        assert omega_pairing(e[2], e[3]) == 1.0
        assert omega_pairing(e[0], e[2]) == 0.0


class TestLagrangianAngle:
    def test_clifford_angle_field(self, clifford64):
        ang = lagrangian_angle(clifford64)
        assert ang.winding == (1, 1)
        x, y = clifford64.grid.nodes()
        resid = ang.theta - 2 * PI * (x + y)
        assert np.max(resid) - np.min(resid) < 1e-8    # constant offset only

    def test_orientation_reversed(self, grid64):
        ang = lagrangian_angle(reversed_clifford(grid64))
        assert ang.winding == (1, -1)

    def test_phase_rotation_shifts_angle(self, clifford64):
        from shrinktori.grid import rotate

        phi0 = 0.7
        ang0 = lagrangian_angle(clifford64)
        ang1 = lagrangian_angle(rotate(clifford64, unitary_rotation(phi0, 0.0)))
        assert ang1.winding == ang0.winding
        diff = (ang1.theta - ang0.theta - phi0 + PI) % (2 * PI) - PI
        assert np.max(np.abs(diff)) < 1e-8

    def test_single_valued_exponential(self, clifford32):
        ang = lagrangian_angle(clifford32)
        per = ang.periodic_part(clifford32.grid)
        assert np.max(np.abs(per - per[0, 0])) < 1e-8

    def test_rejects_non_lagrangian(self, grid32, rng):
        u = TorusMap(grid32, clifford_seed(grid32).values
                     + 0.3 * rng.standard_normal(grid32.shape + (4,)))
        with pytest.raises(NotLagrangian):
            lagrangian_angle(u)


class TestMeanCurvatureForm:
    def test_dtheta_equals_h_form(self, clifford64):
        ang = lagrangian_angle(clifford64)
        h1, h2 = mean_curvature_form(clifford64)
        g = clifford64.grid
        x, y = g.nodes()
        per = ang.theta - 2 * PI * (ang.winding[0] * x + ang.winding[1] * y)
        d1 = partial_deriv(per, 0, g) + 2 * PI * ang.winding[0]
        d2 = partial_deriv(per, 1, g) + 2 * PI * ang.winding[1]
        assert np.max(np.abs(d1 - h1)) < 50 * g.hx**2
        assert np.max(np.abs(d2 - h2)) < 50 * g.hy**2

    def test_h_form_closed(self, clifford64):
        h1, h2 = mean_curvature_form(clifford64)
        g = clifford64.grid
        curl = partial_deriv(h2, 0, g) - partial_deriv(h1, 1, g)
        assert np.max(np.abs(curl)) < 50 * g.hx**2

    def test_h_form_closed_on_al_product(self):
        g = GridSpec(64, 64)
        u, _ = product_torus_seed(abresch_langer_curve(1, 1),
                                  abresch_langer_curve(2, 3), g)
        h1, h2 = mean_curvature_form(u)
        curl = partial_deriv(h2, 0, g) - partial_deriv(h1, 1, g)
        scale_h = max(np.max(np.abs(h1)), np.max(np.abs(h2)))
        assert np.max(np.abs(curl)) < 50 * g.hx**2 * max(scale_h, 1.0) * 2 * PI


class TestMaslov:
    def test_clifford(self, clifford64):
        assert maslov_numbers(clifford64) == (2, 2)

    def test_orientation_reversed(self, grid64):
        assert maslov_numbers(reversed_clifford(grid64)) == (2, -2)

    def test_scaling_translation_invariance(self, clifford64):
        u = translate(scale(clifford64, 1.7), [0.4, -0.2, 0.1, 0.9])
        assert maslov_numbers(u) == (2, 2)

    def test_integrality_margin(self):
        # periods within 0.05 pi of integer multiples on all test surfaces
        for u in (clifford_seed(GridSpec(64, 64)),
                  warped_clifford_seed(GridSpec(64, 64)),
                  product_torus_seed(abresch_langer_curve(1, 1),
                                     abresch_langer_curve(2, 3),
                                     GridSpec(64, 64))[0]):
            h1, h2 = mean_curvature_form(u)
            for p in (np.mean(h1), np.mean(h2)):
                assert abs(p / PI - round(p / PI)) < 0.05

    def test_under_resolution_signals(self, grid64):
        u = warped_clifford_seed(grid64)
        with pytest.raises(NonIntegerPeriod):
            maslov_numbers(u, max_round_error=1e-12)


class TestOneForm:
    def test_harmonic_dx_variation(self, clifford64):
        alpha = OneForm.harmonic(clifford64.grid, 1.0, 0.0)
        X = one_form_to_variation(clifford64, alpha)
        x, _ = clifford64.grid.nodes()
        expected = np.zeros_like(X)
        expected[..., 0] = -np.cos(2 * PI * x) / (2 * np.sqrt(2) * PI)
        expected[..., 1] = -np.sin(2 * PI * x) / (2 * np.sqrt(2) * PI)
        assert np.max(np.abs(X - expected)) < 1e-6

    def test_zero_form(self, clifford32):
        X = one_form_to_variation(clifford32, OneForm.harmonic(clifford32.grid, 0, 0))
        assert np.max(np.abs(X)) == 0.0

    def test_variation_is_normal(self, clifford64, rng):
        f = random_bandlimited_pair(clifford64.grid, rng).phi[..., 0]
        X = one_form_to_variation(clifford64, OneForm.exact(f, clifford64.grid))
        data = derivatives(clifford64)
        scale_x = np.max(np.linalg.norm(X, axis=-1))
        for i in range(2):
            dot = np.einsum("xyk,xyk->xy", X, data.du[i])
            assert np.max(np.abs(dot)) < 50 * clifford64.grid.hx**2 * scale_x * 9

    def test_first_order_lagrangian_preservation(self, clifford64, rng):
        f = random_bandlimited_pair(clifford64.grid, rng).phi[..., 0]
        X = one_form_to_variation(clifford64, OneForm.exact(f, clifford64.grid))
        X /= np.max(np.linalg.norm(X, axis=-1))
        for s in (1e-1, 1e-2, 1e-3):
            r = symplectic_residual(TorusMap(clifford64.grid,
                                             clifford64.values + s * X))
            assert r <= 4.0 * s**2 + 1e-4

    def test_closedness_rejected(self, grid32):
        x, y = grid32.nodes()
        a = np.sin(2 * PI * y) * np.ones(grid32.shape)
        b = np.zeros(grid32.shape)
        with pytest.raises(NotClosed):
            OneForm.from_components(a, b, grid32)

    def test_decomposition_reconstructs(self, grid32, rng):
        f = random_bandlimited_pair(grid32, rng).phi[..., 0]
        alpha = OneForm.exact(3.0 * f, grid32)
        rebuilt = OneForm.from_components(alpha.a + 0.7, alpha.b - 0.2, grid32)
        assert rebuilt.reconstruction_defect(grid32) < 1e-10
        assert abs(rebuilt.p - 0.7) < 1e-12
        assert abs(rebuilt.q + 0.2) < 1e-12


class TestLagrangianPerturb:
    def test_zero_amplitude_identity(self, clifford32):
        alpha = OneForm.harmonic(clifford32.grid, 1.0, 0.0)
        out = lagrangian_perturb(clifford32, alpha, 0.0)
        assert np.array_equal(out.values, clifford32.values)

    def test_harmonic_dx_small(self, clifford64):
        g = clifford64.grid
        alpha = OneForm.harmonic(g, 1.0, 0.0)
        X = one_form_to_variation(clifford64, alpha)
        unit = alpha.scaled(1.0 / np.max(np.linalg.norm(X, axis=-1)))
        out = lagrangian_perturb(clifford64, unit, 1e-2)
        assert symplectic_residual(out) <= max(lagrangian_tolerance(g),
                                               10 * g.hx**2)
        assert maslov_numbers(out) == (2, 2)

    def test_amplitude_guard(self, clifford32):
        g = clifford32.grid
        alpha = OneForm.harmonic(g, 1.0, 0.0)
        X = one_form_to_variation(clifford32, alpha)
        unit = alpha.scaled(1.0 / np.max(np.linalg.norm(X, axis=-1)))
        bound = 0.1 * injectivity_scale(clifford32)
        with pytest.raises(ValueError, match="injectivity"):
            lagrangian_perturb(clifford32, unit, 2.0 * bound)

    def test_projection_reduces_quadratic_error(self, clifford64, rng):
        f = random_bandlimited_pair(clifford64.grid, rng).phi[..., 0]
        alpha = OneForm.exact(f, clifford64.grid)
        X = one_form_to_variation(clifford64, alpha)
        unit = alpha.scaled(1.0 / np.max(np.linalg.norm(X, axis=-1)))
        s = 5e-2
        raw = TorusMap(clifford64.grid, clifford64.values
                       + s * one_form_to_variation(clifford64, unit))
        # tighten the tolerance so the O(s^2) defect is above target and the
        # sweeps must engage
        out = lagrangian_perturb(clifford64, unit, s, tol_factor=2.0)
        assert symplectic_residual(out) < symplectic_residual(raw)
        assert symplectic_residual(out) <= 10 * clifford64.grid.hx**2

    def test_projection_diverged_when_disabled(self, clifford64, rng):
        f = random_bandlimited_pair(clifford64.grid, rng).phi[..., 0]
        alpha = OneForm.exact(f, clifford64.grid)
        X = one_form_to_variation(clifford64, alpha)
        unit = alpha.scaled(1.0 / np.max(np.linalg.norm(X, axis=-1)))
        with pytest.raises(ProjectionDiverged):
            lagrangian_perturb(clifford64, unit, 8e-2, k_proj=0, tol_factor=2.0)

    def test_injectivity_scale_clifford(self, clifford64):
        # distant-sheet distance on the Clifford torus: chord across N/8 band
        est = injectivity_scale(clifford64)
        assert 0.5 < est < 2.5
