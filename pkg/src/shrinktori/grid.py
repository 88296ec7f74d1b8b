"""Discrete maps from the unit-square torus into R^4 and their induced geometry.

The domain is [0,1)^2 with coordinate area 1, sampled on a uniform periodic
grid.  A map is stored as an (nx, ny, 4) array of sample values plus an
optional linear ramp (a (2, 4) slope array) so that angle-valued or planar
test fixtures lift to exact derivatives; genuine embeddings never need the
ramp.  Two interchangeable derivative backends are provided:

* ``fd4``      -- 4th-order centered finite differences (default),
* ``spectral`` -- trigonometric differentiation, exact below Nyquist.

All geometric quantities (metric, second fundamental form, mean curvature,
area element) follow from the sampled first and second derivatives.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateMetric

DEFAULT_BACKEND = "fd4"

# degenerate-metric threshold, relative to the grid-mean of det g
DEGENERACY_RATIO = 1e-10


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic sampling of [0,1)^2; nx, ny >= 8 and even."""

    nx: int
    ny: int

    def __post_init__(self):
        for name, n in (("nx", self.nx), ("ny", self.ny)):
            if n < 8:
                raise ValueError(f"{name} = {n} < 8")
            if n % 2:
                raise ValueError(f"{name} = {n} must be even")

    @property
    def hx(self):
        return 1.0 / self.nx

    @property
    def hy(self):
        return 1.0 / self.ny

    @property
    def shape(self):
        return (self.nx, self.ny)

    def nodes(self):
        """Coordinate arrays x (nx, 1) and y (1, ny), broadcastable to the grid."""
        x = np.arange(self.nx)[:, None] * self.hx
        y = np.arange(self.ny)[None, :] * self.hy
        return x, y


@dataclass(frozen=True)
class ConformalStructure:
    """Teichmueller parameter tau = (tau1, tau2) in the upper half-plane."""

    tau1: float
    tau2: float

    def __post_init__(self):
        if not (self.tau2 > 0):
            raise ValueError(f"tau2 = {self.tau2} must be positive (upper half-plane)")

    def as_array(self):
        return np.array([self.tau1, self.tau2])


def metric_g_tau(tau: ConformalStructure) -> np.ndarray:
    """Flat metric [[1, tau1], [tau1, tau1^2 + tau2^2]] with det = tau2^2."""
    t1, t2 = tau.tau1, tau.tau2
    return np.array([[1.0, t1], [t1, t1 * t1 + t2 * t2]])


def metric_g_tau_inv(tau: ConformalStructure) -> np.ndarray:
    t1, t2 = tau.tau1, tau.tau2
    return np.array([[t1 * t1 + t2 * t2, -t1], [-t1, 1.0]]) / (t2 * t2)


@dataclass
class TorusMap:
    """Sampled map u: T^2 -> R^4.

    ``values[i, j]`` is the point at (x, y) = (i/nx, j/ny).  ``linear`` holds
    slopes of a non-periodic ramp x*linear[0] + y*linear[1] already included
    in ``values``; derivative routines difference the periodic residual and
    add the slope back, so lifted linear parts differentiate exactly.
    """

    grid: GridSpec
    values: np.ndarray
    linear: np.ndarray = field(default_factory=lambda: np.zeros((2, 4)))

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.linear = np.asarray(self.linear, dtype=float)
        expected = (self.grid.nx, self.grid.ny, 4)
        if self.values.shape != expected:
            raise ValueError(f"values shape {self.values.shape} != {expected}")
        if self.linear.shape != (2, 4):
            raise ValueError(f"linear shape {self.linear.shape} != (2, 4)")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("values contain non-finite entries")

    def copy(self):
        return TorusMap(self.grid, self.values.copy(), self.linear.copy())

    def periodic_part(self):
        x, y = self.grid.nodes()
        ramp = x[..., None] * self.linear[0] + y[..., None] * self.linear[1]
        return self.values - ramp


def _fd4(values, axis, h):
    """4th-order centered difference along a periodic axis."""
    out = np.roll(values, -1, axis=axis)
    out -= np.roll(values, 1, axis=axis)
    out *= 8.0
    out -= np.roll(values, -2, axis=axis)
    out += np.roll(values, 2, axis=axis)
    out *= 1.0 / (12.0 * h)
    return out


def _spectral(values, axis, h):
    """Trigonometric differentiation; odd multiplier, Nyquist mode zeroed."""
    n = values.shape[axis]
    k = 2.0 * np.pi * np.fft.fftfreq(n, d=1.0 / n)
    if n % 2 == 0:
        k[n // 2] = 0.0
    shape = [1] * values.ndim
    shape[axis] = n
    fhat = np.fft.fft(values, axis=axis)
    return np.real(np.fft.ifft(1j * k.reshape(shape) * fhat, axis=axis))


_BACKENDS = {"fd4": _fd4, "spectral": _spectral}


def partial_deriv(values, axis, grid: GridSpec, backend=DEFAULT_BACKEND):
    """Periodic partial derivative of a nodal field along grid axis 0 or 1.

    ``values`` may carry trailing component axes; differentiation acts on the
    leading two grid axes.
    """
    h = grid.hx if axis == 0 else grid.hy
    return _BACKENDS[backend](values, axis, h)


def map_derivatives(u: TorusMap, backend=DEFAULT_BACKEND):
    """First derivatives (D1 u, D2 u), ramp handled exactly."""
    if np.any(u.linear):
        per = u.periodic_part()
        return tuple(
            partial_deriv(per, i, u.grid, backend) + u.linear[i] for i in (0, 1)
        )
    return tuple(partial_deriv(u.values, i, u.grid, backend) for i in (0, 1))


def _inv2x2(g):
    """Inverse and determinant of a (..., 2, 2) symmetric field."""
    a = g[..., 0, 0]
    b = g[..., 0, 1]
    d = g[..., 1, 1]
    det = a * d - b * b
    inv = np.empty_like(g)
    inv[..., 0, 0] = d
    inv[..., 0, 1] = -b
    inv[..., 1, 0] = -b
    inv[..., 1, 1] = a
    return inv / det[..., None, None], det


@dataclass
class ImmersionData:
    """Pointwise differential geometry of the sampled immersion.

    First-derivative fields are always present; curvature fields (second
    derivatives, A, H) are None when produced by :func:`derivatives`.
    """

    du: tuple                    # (D1 u, D2 u), each (nx, ny, 4)
    metric: np.ndarray           # g_ij = Di u . Dj u, (nx, ny, 2, 2)
    inv_metric: np.ndarray
    det_g: np.ndarray
    sqrt_det_g: np.ndarray
    second: tuple = None         # ((D11, D12), (D12, D22)) each (nx, ny, 4)
    A: tuple = None              # A_ij = (Dij u)^perp
    H: np.ndarray = None         # mean curvature vector g^{ij} A_ij
    normA2: np.ndarray = None    # |A|^2 = g^{ij} g^{kl} <A_ik, A_jl>

    @property
    def maxA2(self):
        return float(np.max(self.normA2))

    def tangent_project(self, v):
        """Project an ambient field (nx, ny, 4) onto span{D1 u, D2 u}."""
        out = np.zeros_like(v)
        for i in range(2):
            for j in range(2):
                coeff = self.inv_metric[..., i, j] * np.einsum(
                    "xyk,xyk->xy", v, self.du[i]
                )
                out += coeff[..., None] * self.du[j]
        return out

    def normal_project(self, v):
        return v - self.tangent_project(v)


def derivatives(u: TorusMap, backend=DEFAULT_BACKEND) -> ImmersionData:
    """First fundamental form only; never raises on degenerate metrics."""
    du = map_derivatives(u, backend)
    g = np.empty(u.grid.shape + (2, 2))
    g[..., 0, 0] = np.einsum("xyk,xyk->xy", du[0], du[0])
    g[..., 0, 1] = np.einsum("xyk,xyk->xy", du[0], du[1])
    g[..., 1, 0] = g[..., 0, 1]
    g[..., 1, 1] = np.einsum("xyk,xyk->xy", du[1], du[1])
    det = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        inv, _ = _inv2x2(g)
    return ImmersionData(
        du=du,
        metric=g,
        inv_metric=inv,
        det_g=det,
        sqrt_det_g=np.sqrt(np.maximum(det, 0.0)),
    )


def _check_nondegenerate(det):
    threshold = DEGENERACY_RATIO * float(np.mean(det))
    k = np.argmin(det)
    node = np.unravel_index(k, det.shape)
    if det[node] <= threshold or not np.isfinite(det[node]):
        raise DegenerateMetric(node, det[node], threshold)


def fundamental_forms(u: TorusMap, backend=DEFAULT_BACKEND) -> ImmersionData:
    """First and second fundamental forms, H and |A|^2.

    A_ij = (Dij u)^perp, H = g^{ij} A_ij.  Raises DegenerateMetric (with the
    offending node) if det g drops below the relative threshold anywhere.
    """
    data = derivatives(u, backend)
    _check_nondegenerate(data.det_g)
    du = data.du
    d11 = partial_deriv(du[0], 0, u.grid, backend)
    d12 = partial_deriv(du[0], 1, u.grid, backend)
    d22 = partial_deriv(du[1], 1, u.grid, backend)

    # project the three distinct second derivatives to the normal bundle
    ginv = data.inv_metric
    sec = (d11, d12, d22)
    A3 = [data.normal_project(s) for s in sec]
    g00 = ginv[..., 0, 0, None]
    g01 = ginv[..., 0, 1, None]
    g11 = ginv[..., 1, 1, None]
    H = g00 * A3[0] + 2.0 * g01 * A3[1] + g11 * A3[2]

    # |A|^2 = g^{ik} g^{jl} <A_ij, A_kl> expanded over the 3 distinct entries
    p00 = np.einsum("xyk,xyk->xy", A3[0], A3[0])
    p01 = np.einsum("xyk,xyk->xy", A3[0], A3[1])
    p02 = np.einsum("xyk,xyk->xy", A3[0], A3[2])
    p11 = np.einsum("xyk,xyk->xy", A3[1], A3[1])
    p12 = np.einsum("xyk,xyk->xy", A3[1], A3[2])
    p22 = np.einsum("xyk,xyk->xy", A3[2], A3[2])
    a = ginv[..., 0, 0]
    b = ginv[..., 0, 1]
    c = ginv[..., 1, 1]
    normA2 = (a * a * p00 + c * c * p22 + (2 * a * c + 2 * b * b) * p11
              + 4 * a * b * p01 + 4 * b * c * p12 + 2 * b * b * p02)

    data.second = ((d11, d12), (d12, d22))
    data.A = ((A3[0], A3[1]), (A3[1], A3[2]))
    data.H = H
    data.normA2 = normA2
    return data


def mean_curvature(u: TorusMap, backend=DEFAULT_BACKEND) -> np.ndarray:
    """H alone, on the cheap path used by flow stage evaluations."""
    data = derivatives(u, backend)
    _check_nondegenerate(data.det_g)
    du = data.du
    d11 = partial_deriv(du[0], 0, u.grid, backend)
    d12 = partial_deriv(du[0], 1, u.grid, backend)
    d22 = partial_deriv(du[1], 1, u.grid, backend)
    ginv = data.inv_metric
    trace = (ginv[..., 0, 0, None] * d11
             + 2.0 * ginv[..., 0, 1, None] * d12
             + ginv[..., 1, 1, None] * d22)
    return data.normal_project(trace)


def quadrature(field, grid: GridSpec):
    """Periodic trapezoid rule over [0,1)^2: the plain nodal mean."""
    return float(np.mean(field))


def area(u: TorusMap, backend=DEFAULT_BACKEND) -> float:
    """Induced area: quadrature of sqrt(det g)."""
    return quadrature(derivatives(u, backend).sqrt_det_g, u.grid)


def min_distance_to_origin(u: TorusMap) -> float:
    return float(np.min(np.linalg.norm(u.values, axis=-1)))


def laplace_beltrami(f, u: TorusMap, data: ImmersionData = None,
                     backend=DEFAULT_BACKEND):
    """Laplace-Beltrami of a scalar nodal field in the induced metric.

    Divergence form: (1/sqrt g) D_i(sqrt g g^{ij} D_j f).
    """
    if data is None:
        data = derivatives(u, backend)
    df = [partial_deriv(f, i, u.grid, backend) for i in range(2)]
    out = np.zeros_like(f)
    for i in range(2):
        w = data.sqrt_det_g * (
            data.inv_metric[..., i, 0] * df[0] + data.inv_metric[..., i, 1] * df[1]
        )
        out += partial_deriv(w, i, u.grid, backend)
    return out / data.sqrt_det_g


def resample(u: TorusMap, grid: GridSpec) -> TorusMap:
    """Trigonometric resampling of the map onto another uniform grid."""
    if grid.shape == u.grid.shape:
        return u.copy()
    if np.any(u.linear):
        raise ValueError("resampling of ramped maps is not supported")
    spec = np.fft.fft2(u.values, axes=(0, 1))
    out = np.zeros((grid.nx, grid.ny, 4), dtype=complex)
    hx = min(u.grid.nx, grid.nx) // 2
    hy = min(u.grid.ny, grid.ny) // 2
    ox = np.r_[0: hx + 1, u.grid.nx - hx + 1: u.grid.nx]
    nx_ = np.r_[0: hx + 1, grid.nx - hx + 1: grid.nx]
    oy = np.r_[0: hy + 1, u.grid.ny - hy + 1: u.grid.ny]
    ny_ = np.r_[0: hy + 1, grid.ny - hy + 1: grid.ny]
    out[np.ix_(nx_, ny_)] = spec[np.ix_(ox, oy)]
    vals = np.real(np.fft.ifft2(out, axes=(0, 1))) * (
        grid.nx * grid.ny / (u.grid.nx * u.grid.ny)
    )
    return TorusMap(grid, vals)


def rotate(u: TorusMap, R) -> TorusMap:
    """Apply an ambient linear map (e.g. SO(4) rotation) nodewise."""
    R = np.asarray(R, dtype=float)
    return TorusMap(u.grid, u.values @ R.T, u.linear @ R.T)


def translate(u: TorusMap, v) -> TorusMap:
    return TorusMap(u.grid, u.values + np.asarray(v, dtype=float), u.linear.copy())


def scale(u: TorusMap, c: float) -> TorusMap:
    return TorusMap(u.grid, c * u.values, c * u.linear)
