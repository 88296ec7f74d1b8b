"""Weighted-energy variational machinery.

The energy E(u, tau) = 1/2 int e^{-|u|^2/4} |Du|^2_tau d(mu_tau) is viewed as
a functional of the map u together with the flat conformal parameter tau.
This module provides

* the weighted inner product <(phi1,nu1),(phi2,nu2)> on variation pairs,
* the gradient M(u, tau): the pair characterized by
      d/ds E(u + s phi, tau + s nu)|_0 = <M, (phi, nu)>,
  with first component -g^{ij} e^{|u|^2/4} D_j(e^{-|u|^2/4} D_i u)
  - |Du|^2_tau u / 4 and second component the exact tau-gradient,
* the sigma-family B(sigma) (the same expression with g_sigma) and its
  analytic sigma-derivative,
* the linearization L of M at a critical point, implemented as the exact
  Frechet derivative of the discrete gradient so that the assembled matrix
  is self-adjoint in the weighted inner product to roundoff,
* a dense assembly on coarse grids for spectral analysis,
* a preconditioned descent to critical points, and
* empirical gradient-inequality sampling around a critical point
  (|E - E_c|^{1-theta} <= C2 ||M|| fitted over perturbation samples).

All derivative operators are skew-adjoint under the periodic trapezoid rule,
so discrete integration by parts is exact and the defining property of M
holds to roundoff, not merely to discretization order.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateMetric, InsufficientSamples, MaxIterations, NotCritical
from .functionals import energy
from .grid import (
    DEFAULT_BACKEND,
    ConformalStructure,
    GridSpec,
    TorusMap,
    map_derivatives,
    metric_g_tau,
    metric_g_tau_inv,
    partial_deriv,
    resample,
)

TOL_CRIT = 1e-6
TAU2_MIN = 1e-2
ASSEMBLY_MAX_N = 24

# Centered and spectral first differences annihilate the Nyquist line on even
# grids, which injects two spurious null directions into the assembled
# Hessian at the Clifford point (the true kernel there is 10-dimensional:
# 6 symmetry fields plus 4 radial Jacobi fields at the |k|^2 = 2 modes).
# A weighted-self-adjoint penalty on the Nyquist subspace removes them; it
# vanishes identically on bandlimited fields.
NYQUIST_PENALTY = 10.0


@dataclass
class VariationPair:
    """Variation (phi, nu): a grid field T^2 -> R^4 plus a tau-direction."""

    phi: np.ndarray
    nu: np.ndarray

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=float)
        self.nu = np.asarray(self.nu, dtype=float).reshape(2)
        if not (np.all(np.isfinite(self.phi)) and np.all(np.isfinite(self.nu))):
            raise ValueError("variation pair contains non-finite entries")

    @classmethod
    def zero(cls, grid: GridSpec):
        return cls(np.zeros(grid.shape + (4,)), np.zeros(2))

    def __add__(self, other):
        return VariationPair(self.phi + other.phi, self.nu + other.nu)

    def __sub__(self, other):
        return VariationPair(self.phi - other.phi, self.nu - other.nu)

    def __mul__(self, c):
        return VariationPair(c * self.phi, c * self.nu)

    __rmul__ = __mul__


def weighted_inner(u: TorusMap, tau: ConformalStructure,
                   p1: VariationPair, p2: VariationPair) -> float:
    """int phi1 . phi2 e^{-|u|^2/4} d(mu_tau) + nu1 . nu2."""
    w = np.exp(-0.25 * np.einsum("xyk,xyk->xy", u.values, u.values))
    field = np.einsum("xyk,xyk->xy", p1.phi, p2.phi) * w
    return float(np.mean(field) * tau.tau2 + p1.nu @ p2.nu)


def weighted_norm(u, tau, p):
    return math.sqrt(max(weighted_inner(u, tau, p, p), 0.0))


class _Workspace:
    """Shared nodal fields for the gradient/linearization at fixed (u, tau)."""

    def __init__(self, u: TorusMap, tau: ConformalStructure, backend):
        self.u = u
        self.tau = tau
        self.backend = backend
        self.grid = u.grid
        self.du = map_derivatives(u, backend)
        w = 0.25 * np.einsum("xyk,xyk->xy", u.values, u.values)
        self.E = np.exp(-w)
        self.Einv = np.exp(w)
        self.ginv = metric_g_tau_inv(tau)
        self.m = [[np.einsum("xyk,xyk->xy", self.du[i], self.du[j])
                   for j in range(2)] for i in range(2)]
        # t_ij = e^{w} D_j(e^{-w} D_i u)
        self.t = [[self.Einv[..., None]
                   * partial_deriv(self.E[..., None] * self.du[i], j,
                                   self.grid, backend)
                   for j in range(2)] for i in range(2)]
        self.du2 = sum(self.ginv[i, j] * self.m[i][j]
                       for i in range(2) for j in range(2))
        # r = g^{ij} t_ij  (so M1 = -r - |Du|^2 u / 4)
        self.r = sum(self.ginv[i, j] * self.t[i][j]
                     for i in range(2) for j in range(2))
        # weighted means entering the tau-derivatives
        self.A = float(np.mean(self.E * self.m[0][0]))
        self.Bm = float(np.mean(self.E * self.m[0][1]))
        self.C = float(np.mean(self.E * self.m[1][1]))

    def gradient(self) -> VariationPair:
        phi = -self.r - 0.25 * self.du2[..., None] * self.u.values
        return VariationPair(phi, tau_gradient_from_means(
            self.tau, self.A, self.Bm, self.C))

    def b_sigma_derivatives(self):
        """Analytic d/d(sigma_k) of B at sigma = tau: two grid fields."""
        t1, t2 = self.tau.tau1, self.tau.tau2
        ginv = self.ginv
        dg = (np.array([[0.0, 1.0], [1.0, 2 * t1]]),
              np.array([[0.0, 0.0], [0.0, 2 * t2]]))
        out = []
        for k in range(2):
            dginv = -ginv @ dg[k] @ ginv
            field = np.zeros(self.grid.shape + (4,))
            for i in range(2):
                for j in range(2):
                    field -= dginv[i, j] * (
                        self.t[i][j]
                        + 0.25 * self.m[i][j][..., None] * self.u.values
                    )
            out.append(field)
        return out

    def tau_hessian(self):
        t1, t2 = self.tau.tau1, self.tau.tau2
        A, Bm, C = self.A, self.Bm, self.C
        h11 = A / t2
        h12 = -(t1 * A - Bm) / t2**2
        h22 = (A * t1**2 - 2 * t1 * Bm + C) / t2**3
        return np.array([[h11, h12], [h12, h22]])

    def nyquist_project(self, phi):
        """L^2-orthogonal projection onto the Nyquist Fourier lines."""
        spec = np.fft.fft2(phi, axes=(0, 1))
        mask = np.zeros(self.grid.shape, dtype=bool)
        mask[self.grid.nx // 2, :] = True
        mask[:, self.grid.ny // 2] = True
        return np.real(np.fft.ifft2(spec * mask[..., None], axes=(0, 1)))

    def apply_L(self, p: VariationPair, nyquist_penalty=NYQUIST_PENALTY) -> VariationPair:
        """Exact Frechet derivative of the discrete gradient at (u, tau).

        The optional Nyquist penalty c * Q*_w Q (Q the Nyquist-line projector,
        adjoint taken in the weighted inner product) is self-adjoint and
        positive semidefinite, and zero on any field with no Nyquist content.
        """
        phi, nu = p.phi, p.nu
        grid, backend = self.grid, self.backend
        dphi = [partial_deriv(phi, i, grid, backend) for i in range(2)]
        c = np.einsum("xyk,xyk->xy", self.u.values, phi)

        out = -0.25 * self.du2[..., None] * phi - 0.5 * c[..., None] * self.r
        for i in range(2):
            for j in range(2):
                gij = self.ginv[i, j]
                if gij == 0.0:
                    continue
                out -= gij * self.Einv[..., None] * partial_deriv(
                    self.E[..., None] * dphi[i], j, grid, backend)
                out -= (0.5 * gij) * np.einsum(
                    "xyk,xyk->xy", self.du[j], dphi[i])[..., None] * self.u.values
                out += (0.5 * gij) * self.Einv[..., None] * partial_deriv(
                    (c * self.E)[..., None] * self.du[i], j, grid, backend)

        if nyquist_penalty:
            q = self.nyquist_project(phi)
            out += nyquist_penalty * self.Einv[..., None] * self.nyquist_project(
                self.E[..., None] * q)

        dB = self.b_sigma_derivatives()
        out += nu[0] * dB[0] + nu[1] * dB[1]

        second = self.tau_hessian() @ nu
        for k in range(2):
            second[k] += float(
                np.mean(np.einsum("xyk,xyk->xy", dB[k], phi) * self.E)
                * self.tau.tau2
            )
        return VariationPair(out, second)


def tau_gradient_from_means(tau: ConformalStructure, A, Bm, C):
    """Exact gradient of E^u at tau from the weighted Dirichlet means."""
    t1, t2 = tau.tau1, tau.tau2
    d1 = (t1 * A - Bm) / t2
    d2 = (A * (t2**2 - t1**2) + 2 * t1 * Bm - C) / (2 * t2**2)
    return np.array([d1, d2])


def gradient_M(u: TorusMap, tau: ConformalStructure,
               backend=DEFAULT_BACKEND) -> VariationPair:
    """Weighted L^2-gradient of the energy; exact for the discrete quadrature."""
    return _Workspace(u, tau, backend).gradient()


def B_map(u: TorusMap, sigma: ConformalStructure,
          backend=DEFAULT_BACKEND) -> np.ndarray:
    """-g^{ij}_sigma (e^{|u|^2/4} D_j (e^{-|u|^2/4} D_i u) + (D_i u . D_j u) u / 4)."""
    ws = _Workspace(u, sigma, backend)
    field = np.zeros(u.grid.shape + (4,))
    for i in range(2):
        for j in range(2):
            field -= ws.ginv[i, j] * (
                ws.t[i][j] + 0.25 * ws.m[i][j][..., None] * u.values
            )
    return field


def dB_map(u: TorusMap, tau: ConformalStructure, nu,
           backend=DEFAULT_BACKEND, step=None) -> np.ndarray:
    """Directional sigma-derivative of B at tau.

    Analytic by default; pass a finite ``step`` for the central-difference
    oracle (the contract the analytic path is validated against).
    """
    nu = np.asarray(nu, dtype=float)
    if step is None:
        dB = _Workspace(u, tau, backend).b_sigma_derivatives()
        return nu[0] * dB[0] + nu[1] * dB[1]
    up = ConformalStructure(tau.tau1 + step * nu[0], tau.tau2 + step * nu[1])
    dn = ConformalStructure(tau.tau1 - step * nu[0], tau.tau2 - step * nu[1])
    return (B_map(u, up, backend) - B_map(u, dn, backend)) / (2 * step)


class LOperator:
    """Linearization of the gradient at an accepted critical point."""

    def __init__(self, u: TorusMap, tau: ConformalStructure,
                 backend=DEFAULT_BACKEND, tol_crit=TOL_CRIT,
                 nyquist_penalty=NYQUIST_PENALTY):
        self.ws = _Workspace(u, tau, backend)
        self.u, self.tau, self.backend = u, tau, backend
        self.nyquist_penalty = nyquist_penalty
        grad = self.ws.gradient()
        self.grad_norm = weighted_norm(u, tau, grad)
        if self.grad_norm > tol_crit:
            raise NotCritical(
                f"||M|| = {self.grad_norm:.3e} > tol_crit = {tol_crit:.3e}; "
                "the linearization is only self-adjoint at critical points"
            )

    def __call__(self, p: VariationPair) -> VariationPair:
        return self.ws.apply_L(p, self.nyquist_penalty)


def operator_L_apply(u: TorusMap, tau: ConformalStructure, p: VariationPair,
                     backend=DEFAULT_BACKEND, tol_crit=TOL_CRIT,
                     nyquist_penalty=NYQUIST_PENALTY) -> VariationPair:
    return LOperator(u, tau, backend, tol_crit, nyquist_penalty)(p)


def assemble_L(u: TorusMap, tau: ConformalStructure, n: int = None,
               backend=DEFAULT_BACKEND, tol_crit=TOL_CRIT,
               nyquist_penalty=NYQUIST_PENALTY):
    """Dense matrix of L on an n x n coarsening, plus the diagonal Gram weights.

    Returns (L_matrix, gram_diagonal, coarse_map).  Column k is L applied to
    the k-th coordinate basis pair; the Gram diagonal holds the weighted
    inner product of the basis with itself (nodal indicators are orthogonal).
    """
    if n is None:
        coarse = u
    else:
        if n > ASSEMBLY_MAX_N:
            raise ValueError(f"assembly size n = {n} > {ASSEMBLY_MAX_N} (memory guard)")
        coarse = resample(u, GridSpec(n, n))
    nx, ny = coarse.grid.shape
    dim = 4 * nx * ny + 2
    op = LOperator(coarse, tau, backend, tol_crit, nyquist_penalty)

    L = np.empty((dim, dim))
    basis_phi = np.zeros(coarse.grid.shape + (4,))
    for k in range(dim - 2):
        basis_phi.reshape(-1)[k] = 1.0
        out = op(VariationPair(basis_phi, np.zeros(2)))
        L[: dim - 2, k] = out.phi.reshape(-1)
        L[dim - 2:, k] = out.nu
        basis_phi.reshape(-1)[k] = 0.0
    for j in range(2):
        nu = np.zeros(2)
        nu[j] = 1.0
        out = op(VariationPair(np.zeros(coarse.grid.shape + (4,)), nu))
        L[: dim - 2, dim - 2 + j] = out.phi.reshape(-1)
        L[dim - 2:, dim - 2 + j] = out.nu

    w = np.exp(-0.25 * np.einsum("xyk,xyk->xy", coarse.values, coarse.values))
    gram = np.empty(dim)
    gram[: dim - 2] = np.repeat(w.reshape(-1), 4) * (tau.tau2 / (nx * ny))
    gram[dim - 2:] = 1.0
    return L, gram, coarse


def symmetry_defect(L, gram, rng, n_pairs=100):
    """max |<La,b> - <a,Lb>| / (|a| |b|) over random pairs, weighted metric."""
    S = gram[:, None] * L
    asym = S - S.T
    dim = L.shape[0]
    worst = 0.0
    for _ in range(n_pairs):
        a = rng.standard_normal(dim)
        b = rng.standard_normal(dim)
        na = math.sqrt(a @ (gram * a))
        nb = math.sqrt(b @ (gram * b))
        worst = max(worst, abs(a @ (asym @ b)) / (na * nb))
    return worst


def spectrum_of(L, gram):
    """Eigenvalues of the weighted-symmetrized operator, ascending."""
    sq = np.sqrt(gram)
    B = (sq[:, None] * L) / sq[None, :]
    return np.linalg.eigvalsh(0.5 * (B + B.T))


# ---------------------------------------------------------------------------
# critical point search
# ---------------------------------------------------------------------------

@dataclass
class CriticalPoint:
    u: TorusMap
    tau: ConformalStructure
    grad_norm: float
    energy: float
    iterations: int = 0
    descent_energies: list = None   # accepted phase-1 energies, nonincreasing


def _smooth(field, grid: GridSpec, tau: ConformalStructure):
    """Inverse-Helmholtz smoothing (1 + g_tau^{ij} k_i k_j)^{-1} in Fourier space."""
    kx = 2 * np.pi * np.fft.fftfreq(grid.nx, d=grid.hx)
    ky = 2 * np.pi * np.fft.fftfreq(grid.ny, d=grid.hy)
    ginv = metric_g_tau_inv(tau)
    q = (ginv[0, 0] * kx[:, None] ** 2
         + 2 * ginv[0, 1] * kx[:, None] * ky[None, :]
         + ginv[1, 1] * ky[None, :] ** 2)
    mult = 1.0 / (1.0 + q)
    fhat = np.fft.fft2(field, axes=(0, 1))
    return np.real(np.fft.ifft2(fhat * mult[..., None], axes=(0, 1)))


def _pack(p: VariationPair):
    return np.concatenate([p.phi.reshape(-1), p.nu])


def _unpack(v, grid: GridSpec):
    return VariationPair(v[:-2].reshape(grid.shape + (4,)), v[-2:])


def _gram_diag(u: TorusMap, tau: ConformalStructure):
    w = np.exp(-0.25 * np.einsum("xyk,xyk->xy", u.values, u.values))
    g = np.empty(4 * u.grid.nx * u.grid.ny + 2)
    g[:-2] = np.repeat(w.reshape(-1), 4) * (tau.tau2 / (u.grid.nx * u.grid.ny))
    g[-2:] = 1.0
    return g


def _newton_step(u, tau, backend, rtol=1e-8, maxiter=250):
    """Damped-Newton direction: solve L delta = M by MINRES in the weighted
    metric (symmetric indefinite; the symmetry kernel is handled by the
    solver's least-squares behavior)."""
    from scipy.sparse.linalg import LinearOperator, minres

    ws = _Workspace(u, tau, backend)
    grad = ws.gradient()
    gram = _gram_diag(u, tau)
    sq = np.sqrt(gram)
    dim = gram.size

    def matvec(y):
        p = _unpack(y / sq, u.grid)
        return _pack(ws.apply_L(p)) * sq

    A = LinearOperator((dim, dim), matvec=matvec)
    b = _pack(grad) * sq
    z, _ = minres(A, b, rtol=rtol, maxiter=maxiter)
    return _unpack(z / sq, u.grid), grad, ws


def find_critical_point(u0: TorusMap, tau0: ConformalStructure,
                        backend=DEFAULT_BACKEND, tol_crit=TOL_CRIT,
                        max_descent=200, max_newton=60, eta0=1e-2, eta_max=2.0,
                        tau2_min=TAU2_MIN) -> CriticalPoint:
    """Locate a critical point of the weighted energy near (u0, tau0).

    Phase 1 is the damped preconditioned gradient descent (mass lumping by
    e^{-|u|^2/4} sqrt(det g_tau) plus inverse-Helmholtz smoothing, strict
    energy decrease by backtracking, tau2 projected above tau2_min).  Every
    compact shrinker is a saddle of this energy (scaling, translation, and
    the Lagrangian-unstable directions carry negative Hessian), so descent
    alone cannot reach ||M|| <= tol_crit from a generic start: it is run
    while the gradient norm improves and the best iterate is kept.  Phase 2
    polishes that iterate with damped Newton steps on M = 0 (MINRES on the
    self-adjoint linearization), which converges to the saddle.
    """
    u = u0.copy()
    tau = tau0
    e_cur = energy(u, tau, backend)
    energies = [e_cur]
    eta = eta0

    best = (u, tau, np.inf)
    it = 0
    stall = 0
    while it < max_descent:
        ws = _Workspace(u, tau, backend)
        grad = ws.gradient()
        gnorm = weighted_norm(u, tau, grad)
        if gnorm < best[2]:
            best = (u, tau, gnorm)
            stall = 0
        else:
            stall += 1
        if gnorm <= tol_crit:
            return CriticalPoint(u, tau, gnorm, e_cur, it, energies)
        if stall >= 3:
            break   # saddle escape: gradient norm no longer improving

        lumped = grad.phi / (ws.E[..., None] * tau.tau2)
        d_phi = _smooth(lumped, u.grid, tau)
        d_nu = grad.nu / max(1.0, float(np.trace(ws.tau_hessian())) / 2.0)

        accepted = False
        while eta > 1e-14:
            t2 = max(tau.tau2 - eta * d_nu[1], tau2_min)
            cand = TorusMap(u.grid, u.values - eta * d_phi)
            tau_new = ConformalStructure(tau.tau1 - eta * d_nu[0], t2)
            e_new = energy(cand, tau_new, backend)
            if e_new < e_cur:
                u, tau, e_cur = cand, tau_new, e_new
                energies.append(e_cur)
                accepted = True
                eta = min(eta * 1.5, eta_max)
                break
            eta *= 0.5
        it += 1
        if not accepted:
            break

    u, tau, gnorm = best
    for k in range(max_newton):
        if gnorm <= tol_crit:
            break
        delta, grad, _ = _newton_step(u, tau, backend)
        stepped = False
        t = 1.0
        while t > 1e-8:
            t2 = max(tau.tau2 - t * delta.nu[1], tau2_min)
            cand = TorusMap(u.grid, u.values - t * delta.phi)
            tau_new = ConformalStructure(tau.tau1 - t * delta.nu[0], t2)
            g_new = weighted_norm(cand, tau_new, gradient_M(cand, tau_new, backend))
            if g_new < gnorm:
                u, tau, gnorm = cand, tau_new, g_new
                stepped = True
                break
            t *= 0.5
        it += 1
        if not stepped:
            break
    if gnorm > tol_crit:
        raise MaxIterations(
            f"critical-point search stalled at ||M|| = {gnorm:.3e} "
            f"(tol_crit = {tol_crit:.1e}, {it} iterations)"
        )
    return CriticalPoint(u, tau, gnorm, energy(u, tau, backend), it, energies)


# ---------------------------------------------------------------------------
# kernel fields and the gradient-inequality fit
# ---------------------------------------------------------------------------

def rotation_generators():
    """The six antisymmetric generators of so(4)."""
    gens = []
    for a in range(4):
        for b in range(a + 1, 4):
            R = np.zeros((4, 4))
            R[a, b] = -1.0
            R[b, a] = 1.0
            gens.append(R)
    return gens


def symmetry_fields(u: TorusMap, backend=DEFAULT_BACKEND):
    """The 8 known kernel generators: 6 rotations R u and 2 domain shifts D_i u."""
    fields = [VariationPair(u.values @ R.T, np.zeros(2))
              for R in rotation_generators()]
    du = map_derivatives(u, backend)
    fields.append(VariationPair(du[0], np.zeros(2)))
    fields.append(VariationPair(du[1], np.zeros(2)))
    return fields


def orthonormal_kernel_basis(u, tau, fields, drop_tol=1e-6):
    """Gram-Schmidt in the weighted inner product, dropping dependent fields."""
    basis = []
    for f in fields:
        v = VariationPair(f.phi.copy(), f.nu.copy())
        for b in basis:
            v = v - weighted_inner(u, tau, v, b) * b
        n = weighted_norm(u, tau, v)
        scale = weighted_norm(u, tau, f)
        if n > drop_tol * max(scale, 1.0):
            basis.append((1.0 / n) * v)
    return basis


def holder_proxy_norm(p: VariationPair, grid: GridSpec) -> float:
    """Max norm plus the largest first-difference quotient, plus |nu|.

    Grid-scale stand-in for the C^{0,alpha} norm used in the inequality.
    """
    sup = float(np.max(np.abs(p.phi)))
    dq = max(
        float(np.max(np.abs(np.roll(p.phi, -1, axis=0) - p.phi))) / grid.hx,
        float(np.max(np.abs(np.roll(p.phi, -1, axis=1) - p.phi))) / grid.hy,
    )
    return sup + dq + float(np.linalg.norm(p.nu))


@dataclass
class LojasiewiczFit:
    theta: float
    C2: float
    n_samples: int
    max_violation: float
    slope: float                 # transverse log-log slope of |dE| vs ||M||
    samples: np.ndarray          # (n, 2): (|E - E_c|, ||M||_proxy)


def random_bandlimited_pair(grid: GridSpec, rng, band=None):
    """Random smooth variation pair with Fourier support |k| <= band."""
    if band is None:
        band = max(2, grid.nx // 8)
    kx = np.fft.fftfreq(grid.nx, d=1.0 / grid.nx)
    ky = np.fft.fftfreq(grid.ny, d=1.0 / grid.ny)
    mask = (np.abs(kx[:, None]) <= band) & (np.abs(ky[None, :]) <= band)
    spec = (rng.standard_normal(grid.shape + (4,))
            + 1j * rng.standard_normal(grid.shape + (4,))) * mask[..., None]
    phi = np.real(np.fft.ifft2(spec, axes=(0, 1)))
    phi /= max(np.max(np.abs(phi)), 1e-30)
    return VariationPair(phi, rng.standard_normal(2))


def lojasiewicz_fit(cp: CriticalPoint, backend=DEFAULT_BACKEND,
                    n_directions=16, eps_lo=1e-4, eps_hi=1e-1, n_eps=13,
                    min_samples=200, rng=None) -> LojasiewiczFit:
    """Empirical gradient-inequality fit around an accepted critical point.

    Samples (u + eps phi, tau + eps nu) over random bandlimited directions
    orthogonalized against the known symmetry kernel, records
    (|E - E_c|, ||M||_proxy), fits the log-log slope, and reports the largest
    theta in (0, 1/2] with a C2 making the inequality hold on every sample.
    """
    if rng is None:
        rng = np.random.default_rng(np.random.Philox(2024))
    if n_directions * n_eps < min_samples:
        raise InsufficientSamples(
            f"{n_directions} x {n_eps} < required {min_samples} samples"
        )
    u, tau = cp.u, cp.tau
    e_c = cp.energy
    kernel = orthonormal_kernel_basis(u, tau, symmetry_fields(u, backend))

    eps = np.logspace(math.log10(eps_lo), math.log10(eps_hi), n_eps)
    rows = []
    for _ in range(n_directions):
        d = random_bandlimited_pair(u.grid, rng)
        for b in kernel:
            d = d - weighted_inner(u, tau, d, b) * b
        d = (1.0 / weighted_norm(u, tau, d)) * d
        for e in eps:
            cand = TorusMap(u.grid, u.values + e * d.phi)
            tau_c = ConformalStructure(tau.tau1 + e * d.nu[0],
                                       tau.tau2 + e * d.nu[1])
            de = abs(energy(cand, tau_c, backend) - e_c)
            gn = holder_proxy_norm(gradient_M(cand, tau_c, backend), u.grid)
            rows.append((de, gn))
    samples = np.array(rows)
    good = (samples[:, 0] > 1e-13 * max(abs(e_c), 1.0)) & (samples[:, 1] > 0)
    if int(np.sum(good)) < min_samples:
        raise InsufficientSamples(
            f"only {int(np.sum(good))} usable samples (need {min_samples})"
        )
    logde = np.log(samples[good, 0])
    loggn = np.log(samples[good, 1])
    slope = float(np.polyfit(loggn, logde, 1)[0])
    theta = min(0.5, max(1e-3, 1.0 - 1.0 / slope))
    ratios = samples[good, 0] ** (1.0 - theta) / samples[good, 1]
    C2 = float(np.max(ratios)) * (1.0 + 1e-12)
    violation = float(np.max(samples[good, 0] ** (1.0 - theta)
                             - C2 * samples[good, 1]))
    return LojasiewiczFit(theta=theta, C2=C2, n_samples=int(np.sum(good)),
                          max_violation=violation, slope=slope,
                          samples=samples[good])
