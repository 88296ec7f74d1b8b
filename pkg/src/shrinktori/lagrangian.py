"""Symplectic and Lagrangian structure of sampled tori in R^4 = C^2.

Conventions: coordinates (x1, y1, x2, y2) with z_k = x_k + i y_k, standard
complex structure J(a, b, c, d) = (-b, a, -d, c), and symplectic form
omega(X, Y) = <J X, Y> = dx1 ^ dy1 + dx2 ^ dy2.

On a Lagrangian surface the tangent planes are Lagrangian planes; the
determinant of a unitary frame matrix defines the angle theta with
H = J grad(theta), equivalently dtheta = <-J H, D_i u> dx^i, and the
Maslov pair is (2 w1, 2 w2) for the winding (w1, w2) of theta.

Closed 1-forms alpha generate Lagrangian variations X = J alpha^sharp; the
finite perturbation is realized to first order plus residual-driven
projection sweeps that contract the pulled-back symplectic form.
"""

from dataclasses import dataclass

import numpy as np

from .errors import (
    FrameDegenerate,
    NonIntegerPeriod,
    NotClosed,
    NotLagrangian,
    ProjectionDiverged,
)
from .grid import (
    DEFAULT_BACKEND,
    GridSpec,
    ImmersionData,
    TorusMap,
    derivatives,
    fundamental_forms,
    partial_deriv,
)

TOL_LAG_FACTOR = 50.0


def complex_structure(v):
    """Apply J nodewise to an (..., 4) field."""
    out = np.empty_like(v)
    out[..., 0] = -v[..., 1]
    out[..., 1] = v[..., 0]
    out[..., 2] = -v[..., 3]
    out[..., 3] = v[..., 2]
    return out


def omega_pairing(v, w):
    """omega(v, w) = <J v, w> nodewise."""
    return np.einsum("...k,...k->...", complex_structure(v), w)


def lagrangian_tolerance(grid: GridSpec, factor=TOL_LAG_FACTOR):
    h = max(grid.hx, grid.hy)
    return factor * h * h


def symplectic_residual(u: TorusMap, backend=DEFAULT_BACKEND,
                        data: ImmersionData = None) -> float:
    """max |omega(D1 u, D2 u)| / sqrt(det g): dimensionless Lagrangian defect."""
    if data is None:
        data = derivatives(u, backend)
    w = omega_pairing(data.du[0], data.du[1])
    return float(np.max(np.abs(w) / data.sqrt_det_g))


def _require_lagrangian(u, backend, data, tol):
    res = symplectic_residual(u, backend, data)
    if res > tol:
        raise NotLagrangian(f"symplectic residual {res:.3e} > tolerance {tol:.3e}")
    return res


# ---------------------------------------------------------------------------
# closed 1-forms
# ---------------------------------------------------------------------------

def _poisson_solve(rhs, grid: GridSpec):
    """Spectral solve of the flat Laplacian: Delta f = rhs - mean(rhs)."""
    kx = 2 * np.pi * np.fft.fftfreq(grid.nx, d=grid.hx)
    ky = 2 * np.pi * np.fft.fftfreq(grid.ny, d=grid.hy)
    k2 = kx[:, None] ** 2 + ky[None, :] ** 2
    k2[0, 0] = 1.0
    fhat = np.fft.fft2(rhs) / (-k2)
    fhat[0, 0] = 0.0
    return np.real(np.fft.ifft2(fhat))


@dataclass
class OneForm:
    """Closed 1-form a dx + b dy stored with its harmonic + exact split.

    a = p + D1 f and b = q + D2 f with a periodic potential f; the
    decomposition is recomputed spectrally on construction from components
    and must reproduce (a, b) within 1e-10 of their scale.
    """

    a: np.ndarray
    b: np.ndarray
    p: float
    q: float
    potential: np.ndarray

    @classmethod
    def harmonic(cls, grid: GridSpec, p: float, q: float):
        z = np.zeros(grid.shape)
        return cls(z + p, z + q, float(p), float(q), z.copy())

    @classmethod
    def exact(cls, f, grid: GridSpec):
        f = np.asarray(f, dtype=float) - float(np.mean(f))
        a = partial_deriv(f, 0, grid, "spectral")
        b = partial_deriv(f, 1, grid, "spectral")
        return cls(a, b, 0.0, 0.0, f)

    @classmethod
    def from_components(cls, a, b, grid: GridSpec, tol=None):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        scale = max(float(np.max(np.abs(a))), float(np.max(np.abs(b))), 1e-30)
        if tol is None:
            tol = lagrangian_tolerance(grid)
        curl = (partial_deriv(b, 0, grid, "spectral")
                - partial_deriv(a, 1, grid, "spectral"))
        defect = float(np.max(np.abs(curl))) / scale
        if defect > tol:
            raise NotClosed(f"d(alpha) residual {defect:.3e} > tolerance {tol:.3e}")
        p = float(np.mean(a))
        q = float(np.mean(b))
        div = (partial_deriv(a - p, 0, grid, "spectral")
               + partial_deriv(b - q, 1, grid, "spectral"))
        f = _poisson_solve(div, grid)
        form = cls(a, b, p, q, f)
        if form.reconstruction_defect(grid) > 1e-10 * scale + 1e-14:
            raise NotClosed(
                "harmonic + exact decomposition failed to reproduce the form "
                f"(defect {form.reconstruction_defect(grid):.3e})"
            )
        return form

    def reconstruction_defect(self, grid: GridSpec) -> float:
        ra = self.p + partial_deriv(self.potential, 0, grid, "spectral")
        rb = self.q + partial_deriv(self.potential, 1, grid, "spectral")
        return float(max(np.max(np.abs(ra - self.a)), np.max(np.abs(rb - self.b))))

    def scaled(self, c: float):
        return OneForm(c * self.a, c * self.b, c * self.p, c * self.q,
                       c * self.potential)


# ---------------------------------------------------------------------------
# Lagrangian angle and Maslov pair
# ---------------------------------------------------------------------------

@dataclass
class AngleField:
    """Lifted angle samples plus the integer winding over the two cycles."""

    theta: np.ndarray
    winding: tuple

    def periodic_part(self, grid: GridSpec):
        x, y = grid.nodes()
        return self.theta - 2 * np.pi * (self.winding[0] * x + self.winding[1] * y)


def _wrap(d):
    return (d + np.pi) % (2 * np.pi) - np.pi


def lagrangian_angle(u: TorusMap, backend=DEFAULT_BACKEND,
                     tol_factor=TOL_LAG_FACTOR) -> AngleField:
    """Angle of det_C of the orthonormal tangent frame, lifted over the grid."""
    data = derivatives(u, backend)
    _require_lagrangian(u, backend, data, lagrangian_tolerance(u.grid, tol_factor))

    d1, d2 = data.du
    n1 = np.linalg.norm(d1, axis=-1, keepdims=True)
    floor = 1e-12 * float(np.max(n1))
    if np.min(n1) <= floor:
        raise FrameDegenerate("D1 u vanishes at a node")
    e1 = d1 / n1
    w = d2 - np.einsum("xyk,xyk->xy", d2, e1)[..., None] * e1
    nw = np.linalg.norm(w, axis=-1, keepdims=True)
    if np.min(nw) <= 1e-12 * float(np.max(nw)):
        raise FrameDegenerate("tangent frame nearly parallel at a node")
    e2 = w / nw

    z1 = e1[..., 0] + 1j * e1[..., 1]
    z2 = e1[..., 2] + 1j * e1[..., 3]
    w1 = e2[..., 0] + 1j * e2[..., 1]
    w2 = e2[..., 2] + 1j * e2[..., 3]
    theta_raw = np.angle(z1 * w2 - z2 * w1)

    # consistent lift: unwrap the first column, then each row from it
    col0 = np.unwrap(theta_raw[:, 0])
    theta = np.unwrap(theta_raw, axis=1)
    theta += (col0 - theta_raw[:, 0])[:, None]

    wind1 = int(np.rint(np.sum(_wrap(np.diff(theta_raw[:, 0], append=theta_raw[0, 0])))
                        / (2 * np.pi)))
    wind2 = int(np.rint(np.sum(_wrap(np.diff(theta_raw[0, :], append=theta_raw[0, 0])))
                        / (2 * np.pi)))
    return AngleField(theta, (wind1, wind2))


def mean_curvature_form(u: TorusMap, backend=DEFAULT_BACKEND,
                        data: ImmersionData = None):
    """Components (h1, h2) of the 1-form <-J H, D_i u> dx^i (equals dtheta)."""
    if data is None:
        data = fundamental_forms(u, backend)
    mJH = -complex_structure(data.H)
    return tuple(np.einsum("xyk,xyk->xy", mJH, data.du[i]) for i in range(2))


def maslov_numbers(u: TorusMap, backend=DEFAULT_BACKEND,
                   tol_factor=TOL_LAG_FACTOR, max_round_error=0.1):
    """Integer pair (m1, m2): cycle periods of the mean-curvature form over pi."""
    data = fundamental_forms(u, backend)
    _require_lagrangian(u, backend, data, lagrangian_tolerance(u.grid, tol_factor))
    h1, h2 = mean_curvature_form(u, backend, data)
    periods = np.array([np.mean(h1), np.mean(h2)])   # cycle integrals, cell-averaged
    raw = periods / np.pi
    rounded = np.rint(raw).astype(int)
    err = float(np.max(np.abs(raw - rounded)))
    if err >= max_round_error:
        raise NonIntegerPeriod(
            f"Maslov periods {raw} deviate from integers by {err:.3f} >= "
            f"{max_round_error} (broken Lagrangian structure or under-resolution)"
        )
    return int(rounded[0]), int(rounded[1])


# ---------------------------------------------------------------------------
# Lagrangian variations and perturbation
# ---------------------------------------------------------------------------

def one_form_to_variation(u: TorusMap, alpha: OneForm,
                          backend=DEFAULT_BACKEND,
                          tol_factor=TOL_LAG_FACTOR):
    """Variation field X = J alpha^sharp; normal to the image within O(h^2)."""
    data = derivatives(u, backend)
    _require_lagrangian(u, backend, data, lagrangian_tolerance(u.grid, tol_factor))
    comp = (alpha.a, alpha.b)
    sharp = np.zeros_like(u.values)
    for i in range(2):
        coeff = (data.inv_metric[..., i, 0] * comp[0]
                 + data.inv_metric[..., i, 1] * comp[1])
        sharp += coeff[..., None] * data.du[i]
    return complex_structure(sharp)


def injectivity_scale(u: TorusMap, band_divisor=8) -> float:
    """Min distance between nodes separated by >= N/band_divisor grid steps.

    A coarse stand-in for the tubular-neighborhood radius: nearby sheets of
    the image, excluding the local mesh neighborhood.
    """
    grid = u.grid
    stride = max(1, grid.nx // 64, grid.ny // 64)
    pts = u.values[::stride, ::stride]
    nx, ny = pts.shape[:2]
    band = max(1, min(grid.nx, grid.ny) // band_divisor // stride)
    flat = pts.reshape(-1, 4)
    ii, jj = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    ii, jj = ii.ravel(), jj.ravel()
    d2 = np.sum((flat[:, None, :] - flat[None, :, :]) ** 2, axis=-1)
    di = np.abs(ii[:, None] - ii[None, :])
    dj = np.abs(jj[:, None] - jj[None, :])
    di = np.minimum(di, nx - di)
    dj = np.minimum(dj, ny - dj)
    mask = (di > band) | (dj > band)
    if not np.any(mask):
        return float(np.sqrt(np.max(d2)))
    return float(np.sqrt(np.min(d2[mask])))


def lagrangian_perturb(u: TorusMap, alpha: OneForm, s: float,
                       backend=DEFAULT_BACKEND, k_proj=20, damping=0.5,
                       tol_factor=TOL_LAG_FACTOR, amplitude_guard=True,
                       verify_maslov=True) -> TorusMap:
    """First-order Lagrangian move u + s J alpha^sharp plus projection sweeps.

    Each sweep solves the flat Poisson problem for a correction 1-form whose
    exterior derivative matches the current pulled-back symplectic defect and
    steps along J of its metric dual with the given damping; the output
    residual must reach max(tol_lag, 10 h^2) or ProjectionDiverged is raised.
    """
    grid = u.grid
    tol_lag = lagrangian_tolerance(grid, tol_factor)
    target = max(tol_lag, 10.0 * max(grid.hx, grid.hy) ** 2)

    X = one_form_to_variation(u, alpha, backend, tol_factor)
    if amplitude_guard:
        move = abs(s) * float(np.max(np.linalg.norm(X, axis=-1)))
        bound = 0.1 * injectivity_scale(u)
        if move > bound:
            raise ValueError(
                f"amplitude |s| max|X| = {move:.3e} exceeds 0.1 x injectivity "
                f"scale estimate {bound:.3e}"
            )
    if s == 0.0:
        return u.copy()

    before = maslov_numbers(u, backend, tol_factor) if verify_maslov else None
    v = u.values + s * X
    vmap = TorusMap(grid, v)
    start = symplectic_residual(vmap, backend)
    res = start
    for _ in range(k_proj):
        if res <= target:
            break
        data = derivatives(vmap, backend)
        defect = omega_pairing(data.du[0], data.du[1])
        f = _poisson_solve(defect, grid)
        # correction form (-D2 f, D1 f) has d(alpha) = Delta f = defect
        a = -partial_deriv(f, 1, grid, "spectral")
        b = partial_deriv(f, 0, grid, "spectral")
        sharp = np.zeros_like(v)
        for i in range(2):
            coeff = (data.inv_metric[..., i, 0] * a
                     + data.inv_metric[..., i, 1] * b)
            sharp += coeff[..., None] * data.du[i]
        vmap = TorusMap(grid, vmap.values + damping * complex_structure(sharp))
        res = symplectic_residual(vmap, backend)
    if res > target:
        raise ProjectionDiverged(
            f"residual {res:.3e} (started {start:.3e}) above target {target:.3e} "
            f"after {k_proj} sweeps"
        )
    if verify_maslov:
        after = maslov_numbers(vmap, backend, tol_factor)
        if after != before:
            raise ProjectionDiverged(
                f"Maslov pair changed {before} -> {after} during projection"
            )
    return vmap
