"""Seed surfaces, snapshot persistence, and run configuration.

Seed generators: the Clifford torus sqrt(2)(cos 2pi x, sin 2pi x, cos 2pi y,
sin 2pi y), closed self-shrinking plane curves (circle and the non-circular
closed curves with rotation index p and q curvature petals, admissible for
1/2 < p/q < sqrt(2)/2), and conformally parametrized products of two such
curves.  Products of shrinker curves are Lagrangian self-shrinking tori; the
Gaussian weight factorizes over the two planes, so the torus entropy is the
product of the 1-d curve entropies.
"""

import math
from dataclasses import dataclass, field, fields

import numpy as np
from scipy.integrate import solve_ivp

from .errors import ConfigError, ShootingFailed, SnapshotError
from .grid import ConformalStructure, GridSpec, TorusMap

CIRCLE_RADIUS = math.sqrt(2.0)   # radius of the shrinking circle
CIRCLE_CURVATURE = 1.0 / CIRCLE_RADIUS

# 1-d entropy of any round circle: sup over scale of the Gaussian length
CIRCLE_ENTROPY = math.sqrt(2.0 * math.pi / math.e)


def clifford_seed(grid: GridSpec) -> TorusMap:
    """The Clifford torus S^1(sqrt 2) x S^1(sqrt 2), the basic exact shrinker."""
    x, y = grid.nodes()
    vals = np.empty(grid.shape + (4,))
    vals[..., 0] = CIRCLE_RADIUS * np.cos(2 * np.pi * x)
    vals[..., 1] = CIRCLE_RADIUS * np.sin(2 * np.pi * x)
    vals[..., 2] = CIRCLE_RADIUS * np.cos(2 * np.pi * y)
    vals[..., 3] = CIRCLE_RADIUS * np.sin(2 * np.pi * y)
    return TorusMap(grid, vals)


def warped_clifford_seed(grid: GridSpec, amp=0.3) -> TorusMap:
    """Clifford image under a wavy (non-bandlimited) reparametrization.

    Same exact shrinker image, but the sampled map is no longer a pure
    wavenumber-1 trigonometric polynomial, so discretization errors are
    resolvable; used for convergence-order measurements.
    """
    x, y = grid.nodes()
    xi = x + amp * np.sin(2 * np.pi * x) / (2 * np.pi)
    eta = y + amp * np.sin(2 * np.pi * y) / (2 * np.pi)
    vals = np.empty(grid.shape + (4,))
    vals[..., 0] = CIRCLE_RADIUS * np.cos(2 * np.pi * xi)
    vals[..., 1] = CIRCLE_RADIUS * np.sin(2 * np.pi * xi)
    vals[..., 2] = CIRCLE_RADIUS * np.cos(2 * np.pi * eta)
    vals[..., 3] = CIRCLE_RADIUS * np.sin(2 * np.pi * eta)
    return TorusMap(grid, vals)


def round_product_seed(grid: GridSpec, r1: float, r2: float) -> TorusMap:
    """Product of round circles of radii r1, r2 (a shrinker only at sqrt 2)."""
    x, y = grid.nodes()
    vals = np.empty(grid.shape + (4,))
    vals[..., 0] = r1 * np.cos(2 * np.pi * x)
    vals[..., 1] = r1 * np.sin(2 * np.pi * x)
    vals[..., 2] = r2 * np.cos(2 * np.pi * y)
    vals[..., 3] = r2 * np.sin(2 * np.pi * y)
    return TorusMap(grid, vals)


# ---------------------------------------------------------------------------
# closed self-shrinking plane curves
# ---------------------------------------------------------------------------

@dataclass
class ShrinkerCurve:
    """Closed plane shrinker curve, sampled at uniform arclength.

    ``points`` holds m samples (endpoint excluded); the curve satisfies the
    curvature relation k = -<F, N>/2 up to the shooting tolerance.
    """

    points: np.ndarray          # (m, 2)
    rotation_index: int         # p: total turning / 2 pi
    petals: int                 # q: curvature maxima
    length: float
    entropy_1d: float

    def sample(self, n: int) -> np.ndarray:
        """Resample at n uniform-arclength points by trigonometric interpolation."""
        m = self.points.shape[0]
        if n == m:
            return self.points.copy()
        return _trig_resample(self.points, n)


def _trig_resample(vals, n):
    """Resample m periodic samples at n points by truncating/padding the spectrum."""
    m = vals.shape[0]
    spec = np.fft.rfft(vals, axis=0)
    out = np.zeros((n // 2 + 1,) + spec.shape[1:], dtype=complex)
    k = min(spec.shape[0], out.shape[0])
    out[:k] = spec[:k]
    if n < m and n % 2 == 0:
        out[-1] = out[-1].real
    return np.fft.irfft(out, n, axis=0) * (n / m)


def _curve_rhs(_s, state):
    # state = (Fx, Fy, Tx, Ty, k, phi, theta); N = (-Ty, Tx)
    fx, fy, tx, ty, k, phi, _ = state
    return [tx, ty, -k * ty, k * tx, 0.5 * k * phi, 1.0 - 2.0 * k * k, k]


def _half_petal(k0, rtol=1e-12, atol=1e-12):
    """Integrate the (k, phi, theta) subsystem from a curvature maximum to the
    next curvature extremum (phi returns to 0); returns (s_half, theta_half)."""

    def rhs(_s, state):
        k, phi, _ = state
        return [0.5 * k * phi, 1.0 - 2.0 * k * k, k]

    def event(_s, state):
        return state[1]

    event.terminal = True
    event.direction = 1.0   # phi re-crosses zero from below
    sol = solve_ivp(rhs, [0.0, 100.0], [k0, 0.0, 0.0], method="DOP853",
                    events=event, rtol=rtol, atol=atol, max_step=0.1)
    if not sol.t_events[0].size:
        raise ShootingFailed(f"no curvature extremum reached from k0 = {k0}")
    s_half = float(sol.t_events[0][0])
    theta_half = float(sol.y_events[0][0][2])
    return s_half, theta_half


def _circle_curve(n_samples):
    s = 2 * np.pi * np.arange(n_samples) / n_samples
    pts = CIRCLE_RADIUS * np.column_stack([np.cos(s), np.sin(s)])
    return ShrinkerCurve(pts, 1, 1, 2 * np.pi * CIRCLE_RADIUS, CIRCLE_ENTROPY)


def abresch_langer_curve(p: int, q: int, tol=1e-10, n_samples=4096) -> ShrinkerCurve:
    """Closed shrinker curve with rotation index p and q petals, by shooting.

    Shoots on the maximal curvature k0 so that the turning angle per half
    petal equals pi p / q; admissible for 1/2 < p/q < sqrt(2)/2 (plus the
    circle (1,1)).  Raises ShootingFailed outside the admissible window.
    """
    if p < 1 or q < 1 or math.gcd(p, q) != 1:
        raise ShootingFailed(f"(p, q) = ({p}, {q}) must be coprime positive integers")
    if (p, q) == (1, 1):
        return _circle_curve(n_samples)
    ratio = p / q
    if not (0.5 < ratio < math.sqrt(0.5)):
        raise ShootingFailed(
            f"p/q = {ratio:.4f} outside the admissible window (1/2, sqrt(2)/2)"
        )

    target = math.pi * ratio
    # theta_half decreases from pi/sqrt(2) (k0 -> 1/sqrt 2) to pi/2 (k0 -> inf)
    lo, hi = CIRCLE_CURVATURE * (1 + 1e-6), 40.0
    th_lo = _half_petal(lo)[1]
    th_hi = _half_petal(hi)[1]
    if not (th_hi < target < th_lo):
        raise ShootingFailed(
            f"target turning {target:.6f} outside achievable range "
            f"({th_hi:.6f}, {th_lo:.6f})"
        )
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        th = _half_petal(mid)[1]
        if th > target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-14 * mid:
            break
    k0 = 0.5 * (lo + hi)
    s_half, _ = _half_petal(k0)
    length = 2 * q * s_half

    # reconstruct the closed curve; start at a curvature maximum where
    # F = -2 k0 N with T = (0, 1), N = (-1, 0)
    y0 = [2 * k0, 0.0, 0.0, 1.0, k0, 0.0, 0.0]
    sol = solve_ivp(_curve_rhs, [0.0, length], y0, method="DOP853",
                    dense_output=True, rtol=1e-12, atol=1e-12, max_step=0.05)
    gap = np.linalg.norm(sol.y[:2, -1] - np.array(y0[:2]))
    if gap > max(tol, 1e-8) * length:
        raise ShootingFailed(f"curve failed to close: gap {gap:.3e} over length {length:.3e}")

    s = length * np.arange(n_samples) / n_samples
    states = sol.sol(s)
    pts = states[:2].T.copy()
    dens = np.exp(-0.25 * np.sum(pts**2, axis=1))
    entropy_1d = float((4 * np.pi) ** -0.5 * np.mean(dens) * length)
    return ShrinkerCurve(pts, p, q, length, entropy_1d)


def product_torus_seed(c1: ShrinkerCurve, c2: ShrinkerCurve, grid: GridSpec):
    """Conformal product torus (c1(L1 x), c2(L2 y)) with suggested tau.

    Proportional-arclength sampling makes the induced metric diagonal with
    ratio (L2/L1)^2, so the pair is conformal exactly at tau = (0, L2/L1).
    Returns (TorusMap, ConformalStructure).
    """
    a = c1.sample(grid.nx)
    b = c2.sample(grid.ny)
    vals = np.empty(grid.shape + (4,))
    vals[..., 0] = a[:, None, 0]
    vals[..., 1] = a[:, None, 1]
    vals[..., 2] = b[None, :, 0]
    vals[..., 3] = b[None, :, 1]
    tau = ConformalStructure(0.0, c2.length / c1.length)
    return TorusMap(grid, vals), tau


# ---------------------------------------------------------------------------
# snapshot persistence
# ---------------------------------------------------------------------------

SNAPSHOT_MAGIC = "TORUSMAP"


def write_snapshot(path, u: TorusMap, tau: ConformalStructure, time=0.0):
    """Plain-text snapshot: header then nx*ny rows of 4 floats, x fastest."""
    nx, ny = u.grid.nx, u.grid.ny
    lines = [f"{SNAPSHOT_MAGIC} {nx} {ny} {tau.tau1:.16e} {tau.tau2:.16e} {time:.16e}"]
    for j in range(ny):
        for i in range(nx):
            lines.append(" ".join(f"{v:.16e}" for v in u.values[i, j]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_snapshot(path):
    """Inverse of write_snapshot; returns (TorusMap, ConformalStructure, time)."""
    with open(path) as fh:
        raw = [ln.strip() for ln in fh]
    raw = [ln for ln in raw if ln]
    if not raw:
        raise SnapshotError(f"{path}: empty file")
    head = raw[0].split()
    if len(head) != 6 or head[0] != SNAPSHOT_MAGIC:
        raise SnapshotError(f"{path}: malformed header {raw[0]!r}")
    try:
        nx, ny = int(head[1]), int(head[2])
        tau1, tau2, time = float(head[3]), float(head[4]), float(head[5])
    except ValueError as exc:
        raise SnapshotError(f"{path}: malformed header fields: {exc}") from exc
    if tau2 <= 0:
        raise SnapshotError(f"{path}: tau2 = {tau2} not in the upper half-plane")
    expected = nx * ny
    if len(raw) - 1 != expected:
        raise SnapshotError(
            f"{path}: expected {expected} data lines, found {len(raw) - 1} "
            f"(first problem at line {min(len(raw), expected + 1) + 1})"
        )
    vals = np.empty((nx, ny, 4))
    for idx, ln in enumerate(raw[1:]):
        parts = ln.split()
        if len(parts) != 4:
            raise SnapshotError(f"{path}: line {idx + 2}: expected 4 floats, got {len(parts)}")
        j, i = divmod(idx, nx)
        vals[i, j] = [float(v) for v in parts]
    if not np.all(np.isfinite(vals)):
        bad = int(np.flatnonzero(~np.isfinite(vals.reshape(-1, 4)).all(axis=1))[0])
        raise SnapshotError(f"{path}: non-finite values at line {bad + 2}")
    grid = GridSpec(nx, ny)
    return TorusMap(grid, vals), ConformalStructure(tau1, tau2), time


# ---------------------------------------------------------------------------
# run configuration
# ---------------------------------------------------------------------------

_POSITIVE_KEYS = {
    "tol_crit", "c_min", "dt_min", "cfl", "t_max", "delta", "Lambda",
    "tol_shrink_factor", "tol_lag_factor", "census_tol",
}


@dataclass
class RunConfig:
    """Flat run options; parsed from `key = value` lines with # comments."""

    n: int = 64
    backend: str = "fd4"
    seed: int = 12345
    tol_crit: float = 1e-6
    tol_shrink_factor: float = 10.0
    tol_lag_factor: float = 50.0
    cfl: float = 0.1
    dt_min: float = 1e-14
    t_max: float = 10.0
    track_entropy: bool = True
    snap_every: int = 0
    k_max: int = 16
    c_min: float = 1e-4
    K_exact: int = 8
    delta: float = 0.1
    Lambda: float = 100.0
    census_tol: float = 1e-3

    def __post_init__(self):
        if self.backend not in ("fd4", "spectral"):
            raise ConfigError(f"unknown backend {self.backend!r}")
        for key in _POSITIVE_KEYS:
            if getattr(self, key) <= 0:
                raise ConfigError(f"{key} must be positive, got {getattr(self, key)}")

    @classmethod
    def from_text(cls, text):
        known = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected `key = value`, got {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in known:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            kwargs[key] = _coerce(key, value, known[key], lineno)
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path):
        with open(path) as fh:
            return cls.from_text(fh.read())

    def to_text(self):
        return "\n".join(f"{f.name} = {getattr(self, f.name)}" for f in fields(self))


def _coerce(key, value, typ, lineno):
    try:
        if typ in (int, "int"):
            return int(value)
        if typ in (float, "float"):
            return float(value)
        if typ in (bool, "bool"):
            if value.lower() in ("true", "1", "yes", "on"):
                return True
            if value.lower() in ("false", "0", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {value!r}")
        return value
    except ValueError as exc:
        raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from exc
