import math

import numpy as np
import pytest

from shrinktori import (
    ConformalStructure,
    GridSpec,
    RunConfig,
    TorusMap,
    abresch_langer_curve,
    area,
    clifford_seed,
    entropy,
    product_torus_seed,
    read_snapshot,
    shrinker_residual,
    symplectic_residual,
    write_snapshot,
)
from shrinktori.errors import ConfigError, ShootingFailed, SnapshotError
from shrinktori.functionals import is_numerical_shrinker
from shrinktori.lagrangian import lagrangian_tolerance
from shrinktori.seeds import CIRCLE_ENTROPY
from shrinktori.variational import gradient_M

PI = np.pi


class TestCliffordSeed:
    def test_area(self, clifford64):
        assert abs(area(clifford64) / (8 * PI**2) - 1) < 1e-4

    def test_shrinker_residual(self, clifford64):
        assert shrinker_residual(clifford64) < 1e-12

    def test_symplectic_residual(self, clifford64):
        assert symplectic_residual(clifford64) <= lagrangian_tolerance(clifford64.grid)

    def test_accepted_as_shrinker(self, clifford64):
        assert is_numerical_shrinker(clifford64)


class TestAbreschLanger:
    def test_circle_case(self):
        c = abresch_langer_curve(1, 1)
        assert abs(c.length - 2 * PI * math.sqrt(2)) < 1e-10
        assert abs(c.entropy_1d - math.sqrt(2 * PI / math.e)) < 1e-10
        assert abs(c.entropy_1d - CIRCLE_ENTROPY) < 1e-12

    def test_noncircular_2_3(self):
        c = abresch_langer_curve(2, 3)
        assert c.entropy_1d > CIRCLE_ENTROPY
        gap = np.linalg.norm(c.points[0] - c.points[-1])
        # samples exclude the endpoint: the gap is one arclength step
        assert gap < 2 * c.length / len(c.points)

    def test_closure_certificate(self):
        # frozen from the shooting run; guards against regressions
        c = abresch_langer_curve(2, 3)
        assert abs(c.length - 21.12197613) < 1e-6
        assert abs(c.entropy_1d - 3.0924101850) < 1e-8

    def test_curvature_relation(self):
        # k = -<F, N>/2 along the curve (shrinker equation for curves)
        c = abresch_langer_curve(2, 3)
        pts = c.points
        m = len(pts)
        k_wave = 2 * PI * np.fft.fftfreq(m, d=1.0 / m) / c.length
        spec = np.fft.fft(pts, axis=0)
        T = np.real(np.fft.ifft(1j * k_wave[:, None] * spec, axis=0))
        dT = np.real(np.fft.ifft(-(k_wave[:, None] ** 2) * spec, axis=0))
        N = np.column_stack([-T[:, 1], T[:, 0]])
        k_curv = np.einsum("ik,ik->i", dT, N)
        target = -0.5 * np.einsum("ik,ik->i", pts, N)
        assert np.max(np.abs(k_curv - target)) < 1e-6

    @pytest.mark.parametrize("p,q", [(1, 3), (3, 4), (2, 2), (0, 1)])
    def test_inadmissible(self, p, q):
        with pytest.raises(ShootingFailed):
            abresch_langer_curve(p, q)


class TestProductSeed:
    def test_circle_circle_is_clifford(self, grid32, clifford32):
        c = abresch_langer_curve(1, 1)
        u, tau = product_torus_seed(c, c, grid32)
        assert tau.tau1 == 0.0 and abs(tau.tau2 - 1.0) < 1e-12
        assert np.max(np.abs(u.values - clifford32.values)) < 1e-9

    def test_al_product(self):
        g = GridSpec(64, 64)
        c1 = abresch_langer_curve(1, 1)
        c2 = abresch_langer_curve(2, 3)
        u, tau = product_torus_seed(c1, c2, g)
        assert abs(tau.tau2 - c2.length / c1.length) < 1e-12
        assert is_numerical_shrinker(u)
        assert symplectic_residual(u) <= lagrangian_tolerance(g)
        # entropy factorizes over the two planes
        lam = entropy(u).lam
        assert abs(lam - c1.entropy_1d * c2.entropy_1d) < 1e-4
        # conformality <=> tau-criticality of the energy
        nu = gradient_M(u, tau).nu
        assert np.linalg.norm(nu) <= 20.0 * g.hx**2


class TestSnapshots:
    def test_roundtrip_bit_faithful(self, tmp_path, clifford32):
        path = tmp_path / "c.snap"
        tau = ConformalStructure(0.25, 1.75)
        write_snapshot(path, clifford32, tau, time=0.125)
        u, tau2, t = read_snapshot(path)
        assert np.array_equal(u.values, clifford32.values)
        assert tau2.tau1 == tau.tau1 and tau2.tau2 == tau.tau2
        assert t == 0.125

    def test_truncated_file_reports_count(self, tmp_path, clifford32):
        path = tmp_path / "c.snap"
        write_snapshot(path, clifford32, ConformalStructure(0, 1))
        lines = path.read_text().splitlines()
        path.write_text("\n".join(lines[:-3]) + "\n")
        with pytest.raises(SnapshotError, match="data lines"):
            read_snapshot(path)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "bad.snap"
        path.write_text("NOTATORUS 8 8 0 1 0\n")
        with pytest.raises(SnapshotError, match="header"):
            read_snapshot(path)

    def test_rejects_nonpositive_tau2(self, tmp_path, clifford32):
        path = tmp_path / "c.snap"
        write_snapshot(path, clifford32, ConformalStructure(0, 1))
        lines = path.read_text().splitlines()
        head = lines[0].split()
        head[4] = "-1.0"
        path.write_text("\n".join([" ".join(head)] + lines[1:]) + "\n")
        with pytest.raises(SnapshotError, match="tau2"):
            read_snapshot(path)

    def test_rejects_nonfinite(self, tmp_path, clifford32):
        path = tmp_path / "c.snap"
        write_snapshot(path, clifford32, ConformalStructure(0, 1))
        lines = path.read_text().splitlines()
        lines[5] = "nan 0.0 0.0 0.0"
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(SnapshotError, match="non-finite"):
            read_snapshot(path)


class TestRunConfig:
    def test_defaults_valid(self):
        cfg = RunConfig()
        assert cfg.n == 64 and cfg.backend == "fd4"

    def test_parse(self):
        cfg = RunConfig.from_text("n = 32\nbackend = spectral  # comment\nseed = 7\n")
        assert cfg.n == 32 and cfg.backend == "spectral" and cfg.seed == 7

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown key"):
            RunConfig.from_text("frobnicate = 3\n")

    def test_nonpositive_tolerance_rejected(self):
        with pytest.raises(ConfigError, match="positive"):
            RunConfig.from_text("tol_crit = 0\n")

    def test_bad_value_rejected(self):
        with pytest.raises(ConfigError):
            RunConfig.from_text("n = pancake\n")

    def test_echo_roundtrip(self):
        cfg = RunConfig(n=48, delta=0.05)
        cfg2 = RunConfig.from_text(cfg.to_text())
        assert cfg2 == cfg
