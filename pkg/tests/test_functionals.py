import math

import numpy as np
import pytest

from shrinktori import (
    BasePoint,
    ConformalStructure,
    GridSpec,
    TorusMap,
    abresch_langer_curve,
    area,
    clifford_seed,
    drift_identity_residual,
    energy,
    entropy,
    f_functional,
    product_torus_seed,
    shrinker_residual,
    willmore,
)
from shrinktori.errors import NotShrinker
from shrinktori.functionals import entropy_refine, is_numerical_shrinker, shrink_tolerance
from shrinktori.grid import scale, translate
from shrinktori.seeds import round_product_seed, warped_clifford_seed

PI = np.pi


def sphere_fixture(n=64, r=1.7):
    """Double cover of the round sphere; offset in y avoids the polar circles."""
    g = GridSpec(n, n)
    xs = np.arange(n)[:, None] / n
    ys = (np.arange(n)[None, :] + 0.5) / n
    vals = np.empty((n, n, 4))
    vals[..., 0] = r * np.cos(2 * PI * xs) * np.sin(2 * PI * ys)
    vals[..., 1] = r * np.sin(2 * PI * xs) * np.sin(2 * PI * ys)
    vals[..., 2] = r * np.cos(2 * PI * ys)
    vals[..., 3] = 0.0
    return TorusMap(g, vals)


class TestFFunctional:
    def test_clifford_closed_form(self, clifford64):
        val = f_functional(clifford64, BasePoint((0, 0, 0, 0), 1.0))
        assert abs(val / (2 * PI / math.e) - 1) < 1e-4

    def test_decay_at_large_scale(self, clifford32):
        val = f_functional(clifford32, BasePoint((0, 0, 0, 0), 1e6))
        assert val < 1e-4

    def test_rescale_invariance(self, clifford32):
        b = BasePoint((0.3, -0.1, 0.2, 0.0), 0.8)
        v0 = f_functional(clifford32, b)
        c = 1.7
        bc = BasePoint(tuple(c * np.array(b.x0)), c * c * b.t0)
        v1 = f_functional(scale(clifford32, c), bc)
        assert abs(v0 - v1) < 1e-12

    def test_rejects_nonpositive_scale(self):
        with pytest.raises(ValueError):
            BasePoint((0, 0, 0, 0), 0.0)


class TestEntropy:
    def test_clifford(self, clifford64):
        rep = entropy(clifford64)
        assert abs(rep.lam - 2 * PI / math.e) < 1e-3
        assert np.linalg.norm(rep.argmax.x0) < 1e-2
        assert abs(rep.argmax.t0 - 1.0) < 1e-2

    def test_translation_invariance(self, clifford32):
        v = np.array([1.5, -0.7, 0.3, 2.0])
        rep = entropy(translate(clifford32, v))
        base = entropy(clifford32)
        assert abs(rep.lam - base.lam) < 1e-6
        assert np.linalg.norm(np.array(rep.argmax.x0) - v) < 1e-2

    def test_scaling_invariance(self, clifford32):
        rep = entropy(scale(clifford32, 2.0))
        base = entropy(clifford32)
        assert abs(rep.lam - base.lam) < 1e-6
        assert abs(rep.argmax.t0 - 4.0) < 4e-2

    @pytest.mark.parametrize("c", [0.5, 2.0])
    def test_combined_invariance(self, clifford32, rng, c):
        v = rng.uniform(-5, 5, size=4)
        rep = entropy(translate(scale(clifford32, c), v))
        base = entropy(clifford32)
        assert abs(rep.lam - base.lam) < 1e-6

    def test_matches_f_at_origin_for_shrinkers(self, clifford64):
        rep = entropy(clifford64)
        f01 = f_functional(clifford64, BasePoint((0, 0, 0, 0), 1.0))
        assert abs(rep.lam - f01) < 1e-3

    def test_newton_refine_agrees(self, clifford32):
        r = entropy_refine(clifford32, BasePoint((0.02, 0, -0.01, 0), 1.1))
        assert abs(r.lam - entropy(clifford32).lam) < 1e-10


class TestEnergy:
    def test_clifford_closed_form(self, clifford64, tau_square):
        val = energy(clifford64, tau_square)
        assert abs(val / (8 * PI**2 / math.e) - 1) < 1e-4

    def test_constant_map_zero(self, grid32, tau_square):
        u = TorusMap(grid32, np.ones(grid32.shape + (4,)))
        assert energy(u, tau_square) == 0.0

    def test_four_pi_lambda_clifford(self, clifford64, tau_square):
        e = energy(clifford64, tau_square)
        lam = entropy(clifford64).lam
        assert abs(e - 4 * PI * lam) / e < 1e-3

    def test_four_pi_lambda_al_product(self):
        g = GridSpec(64, 64)
        u, tau = product_torus_seed(abresch_langer_curve(1, 1),
                                    abresch_langer_curve(2, 3), g)
        e = energy(u, tau)
        lam = entropy(u).lam
        assert abs(e - 4 * PI * lam) / e < 1e-3

    def test_nonnegative_and_zero_iff_constant(self, grid32, tau_square, rng):
        u = TorusMap(grid32, rng.standard_normal(grid32.shape + (4,)))
        assert energy(u, tau_square) > 0.0


class TestWillmore:
    def test_clifford_quarter_area(self, clifford64):
        w = willmore(clifford64)
        assert abs(w / (2 * PI**2) - 1) < 1e-4
        assert abs(w - area(clifford64) / 4) / w < 1e-6

    def test_round_sphere_oracle(self):
        sph = sphere_fixture(64)
        # torus grid double-covers the sphere
        assert abs(willmore(sph) / 2 - 4 * PI) / (4 * PI) < 2e-3

    def test_scale_invariance(self, clifford32):
        assert abs(willmore(scale(clifford32, 3.0)) - willmore(clifford32)) < 1e-10

    def test_quarter_area_violated_off_shrinkers(self, grid32):
        x, y = grid32.nodes()
        vals = clifford_seed(grid32).values.copy()
        vals[..., 0] *= 1.3     # ellipsoidal stretch
        u = TorusMap(grid32, vals)
        w = willmore(u)
        assert abs(w - area(u) / 4) / w > 0.01


class TestShrinkerResidual:
    def test_clifford_tiny(self, clifford64):
        assert shrinker_residual(clifford64) < 1e-12

    def test_warped_order(self):
        r = [shrinker_residual(warped_clifford_seed(GridSpec(n, n)))
             for n in (64, 128)]
        assert np.log2(r[0] / r[1]) >= 1.9

    def test_unit_product_rejected(self, grid32):
        u = round_product_seed(grid32, 1.0, 1.0)
        res = shrinker_residual(u)
        assert abs(res - math.sqrt(2) / 2) < 1e-3     # | -u + u/2 | = sqrt(2)/2
        assert res > shrink_tolerance(u)
        assert not is_numerical_shrinker(u)

    def test_scaled_clifford_rejected(self, clifford64):
        # the acceptance tolerance is O(h^2), so coarse grids are permissive;
        # at N = 64 the wrong scale is safely outside it
        u = scale(clifford64, 2.0)
        assert shrinker_residual(u) > 1.0
        assert not is_numerical_shrinker(u)

    def test_shrinkers_meet_radius_two_ball(self, clifford64):
        from shrinktori import min_distance_to_origin

        g = GridSpec(64, 64)
        for u in (clifford64, product_torus_seed(
                abresch_langer_curve(1, 1), abresch_langer_curve(2, 3), g)[0]):
            assert is_numerical_shrinker(u)
            assert min_distance_to_origin(u) <= 2.0 + 10 * g.hx**2


class TestDriftIdentity:
    def test_clifford_both_sides_vanish(self, clifford64):
        assert drift_identity_residual(clifford64) < 1e-10

    def test_refuses_non_shrinker(self, grid32):
        u = round_product_seed(grid32, 1.0, 1.0)
        with pytest.raises(NotShrinker):
            drift_identity_residual(u)

    def test_refinement_order(self):
        c1 = abresch_langer_curve(1, 1)
        c2 = abresch_langer_curve(2, 3)
        res = []
        for n in (32, 64):
            u, _ = product_torus_seed(c1, c2, GridSpec(n, n))
            res.append(drift_identity_residual(u))
        assert res[1] <= res[0] / 3.0      # order 2 gives 1/4; fd4 does better
