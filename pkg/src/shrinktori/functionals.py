"""Gaussian-weighted functionals of sampled tori.

Implements, for a surface u: T^2 -> R^4 with induced measure d(mu):

* the Gaussian-density functional
      F_{x0,t0}(u) = (4 pi t0)^{-1} int exp(-|u - x0|^2 / (4 t0)) d(mu),
* its supremum over centers and scales, the entropy lambda(u),
* the weighted Dirichlet energy
      E(u, tau) = 1/2 int exp(-|u|^2/4) |Du|^2_tau d(mu_tau),
* the Willmore energy 1/4 int |H|^2 d(mu),
* the self-shrinker residual max |H + u^perp / 2|,
* the drift-Laplacian identity residual of Delta_g |u|^2 = 4 - |u^perp|^2.

For a self-shrinker the entropy is attained at (x0, t0) = (0, 1), the energy
equals 4 pi lambda at the conformal parameter, and Willmore equals area/4.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .errors import NotShrinker
from .grid import (     # noqa: F401  (re-export quadrature convention)
    DEFAULT_BACKEND,
    ConformalStructure,
    ImmersionData,
    TorusMap,
    derivatives,
    fundamental_forms,
    metric_g_tau_inv,
    quadrature,
)


@dataclass(frozen=True)
class BasePoint:
    """Gaussian center x0 in R^4 and scale t0 > 0."""

    x0: tuple
    t0: float

    def __post_init__(self):
        if not (self.t0 > 0):
            raise ValueError(f"t0 = {self.t0} must be positive")
        object.__setattr__(self, "x0", tuple(float(v) for v in self.x0))
        if len(self.x0) != 4:
            raise ValueError("x0 must be a point in R^4")


ORIGIN_UNIT = BasePoint((0.0, 0.0, 0.0, 0.0), 1.0)


@dataclass
class EntropyReport:
    lam: float
    argmax: BasePoint
    n_restarts: int
    converged: bool


def f_functional(u: TorusMap, b: BasePoint, backend=DEFAULT_BACKEND,
                 data: ImmersionData = None) -> float:
    """Gaussian-weighted area (4 pi t0)^{-1} int e^{-|u-x0|^2/(4 t0)} d(mu)."""
    if data is None:
        data = derivatives(u, backend)
    diff = u.values - np.asarray(b.x0)
    dist2 = np.einsum("xyk,xyk->xy", diff, diff)
    integrand = np.exp(-dist2 / (4.0 * b.t0)) * data.sqrt_det_g
    return quadrature(integrand, u.grid) / (4.0 * np.pi * b.t0)


def _f_batch(values, sqrt_det_g, centers, t0):
    """F over a batch of centers at one scale; centers (k, 4)."""
    flat = values.reshape(-1, 4)
    w = sqrt_det_g.reshape(-1)
    d2 = (
        np.sum(flat * flat, axis=1)[None, :]
        - 2.0 * centers @ flat.T
        + np.sum(centers * centers, axis=1)[:, None]
    )
    vals = np.exp(-d2 / (4.0 * t0)) @ w
    return vals / (4.0 * np.pi * t0 * flat.shape[0])


def entropy(u: TorusMap, backend=DEFAULT_BACKEND, n_lattice=5, n_scales=17,
            n_refine=5, xatol=1e-6, warm_start: BasePoint = None,
            maxiter=2000) -> EntropyReport:
    """sup_{x0, t0} F_{x0,t0}(u) by coarse scan plus simplex refinement.

    The scan covers a lattice over the image's bounding box inflated by 20%
    and log-spaced scales in [1e-2, 1e2]; the best starts are polished by
    Nelder-Mead in (x0, log t0).  With ``warm_start`` the scan is skipped and
    a single refinement runs from the given base point.
    """
    data = derivatives(u, backend)

    def objective(z):
        return -f_functional(u, BasePoint(tuple(z[:4]), np.exp(z[4])),
                             backend, data=data)

    starts = []
    simplex_scale = None
    if warm_start is not None:
        starts.append(np.array([*warm_start.x0, np.log(warm_start.t0)]))
        n_restarts = 1
        simplex_scale = 1e-3
    else:
        lo = u.values.reshape(-1, 4).min(axis=0)
        hi = u.values.reshape(-1, 4).max(axis=0)
        mid, half = 0.5 * (lo + hi), 0.6 * (hi - lo)   # 20% inflation
        axes = [np.linspace(m - h, m + h, n_lattice) if h > 0 else np.array([m])
                for m, h in zip(mid, half)]
        lattice = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 4)
        scales = np.logspace(-2, 2, n_scales)
        best = []
        for t0 in scales:
            vals = _f_batch(u.values, data.sqrt_det_g, lattice, t0)
            k = int(np.argmax(vals))
            best.append((float(vals[k]), np.array([*lattice[k], np.log(t0)])))
        best.sort(key=lambda item: -item[0])
        starts = [z for _, z in best[:n_refine]]
        n_restarts = len(starts)

    top_val, top_z, converged = -np.inf, starts[0], True
    for z0 in starts:
        options = {"xatol": xatol, "fatol": 1e-12, "maxiter": maxiter}
        if simplex_scale is not None:
            steps = np.maximum(simplex_scale * np.abs(z0), 10 * xatol)
            options["initial_simplex"] = np.vstack(
                [z0, z0 + np.diag(steps)])
        res = minimize(objective, z0, method="Nelder-Mead", options=options)
        if -res.fun > top_val:
            top_val, top_z = -res.fun, res.x
            converged = bool(res.success)
    arg = BasePoint(tuple(top_z[:4]), float(np.exp(top_z[4])))
    return EntropyReport(lam=float(top_val), argmax=arg,
                         n_restarts=n_restarts, converged=converged)


def entropy_refine(u: TorusMap, start: BasePoint, backend=DEFAULT_BACKEND,
                   data: ImmersionData = None, tol=1e-12, max_iter=12
                   ) -> EntropyReport:
    """Newton polish of the F-functional maximum from a nearby base point.

    Works in (x0, log t0), where the gradient and Hessian of log F are
    closed-form Gaussian moments of the surface; used by the flow's per-step
    entropy tracking, where the argmax moves smoothly.
    """
    if data is None:
        data = derivatives(u, backend)
    w = data.sqrt_det_g.reshape(-1) / (u.grid.nx * u.grid.ny)
    pts = u.values.reshape(-1, 4)
    z = np.array([*start.x0, np.log(start.t0)])

    def logF_parts(z):
        x0, tau = z[:4], z[4]
        diff = pts - x0
        d2 = np.einsum("ik,ik->i", diff, diff)
        E = np.exp(-0.25 * d2 * np.exp(-tau)) * w
        S = E.sum()
        return diff, d2, E, S

    diff, d2, E, S = logF_parts(z)
    val = -z[4] + np.log(S)
    converged = False
    for _ in range(max_iter):
        et = np.exp(-z[4])
        m1 = E @ diff
        m2 = E @ d2
        M2 = diff.T @ (E[:, None] * diff)
        m3 = (E * d2) @ diff
        m4 = E @ (d2 * d2)
        gS = np.empty(5)
        gS[:4] = 0.5 * et * m1
        gS[4] = 0.25 * et * m2
        HS = np.empty((5, 5))
        HS[:4, :4] = 0.5 * et * (0.5 * et * M2 - S * np.eye(4))
        HS[:4, 4] = HS[4, :4] = -0.5 * et * m1 + 0.125 * et * et * m3
        HS[4, 4] = -0.25 * et * m2 + 0.0625 * et * et * m4
        g = gS / S
        g[4] -= 1.0
        H = HS / S - np.outer(g + np.array([0, 0, 0, 0, 1.0]),
                              g + np.array([0, 0, 0, 0, 1.0]))
        if np.linalg.norm(g) < tol:
            converged = True
            break
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            step = -g
        trial = z - step
        diff_t, d2_t, E_t, S_t = logF_parts(trial)
        val_t = -trial[4] + np.log(S_t)
        if not np.isfinite(val_t) or val_t < val:
            # Hessian not usable here: fall back to a damped ascent step
            scale = 1e-2 / max(np.linalg.norm(g), 1.0)
            trial = z + scale * g
            diff_t, d2_t, E_t, S_t = logF_parts(trial)
            val_t = -trial[4] + np.log(S_t)
            if val_t < val:
                break
        z, diff, d2, E, S, val = trial, diff_t, d2_t, E_t, S_t, val_t
    lam = np.exp(val) / (4 * np.pi)
    arg = BasePoint(tuple(z[:4]), float(np.exp(z[4])))
    return EntropyReport(lam=float(lam), argmax=arg, n_restarts=1,
                         converged=converged)


def energy(u: TorusMap, tau: ConformalStructure, backend=DEFAULT_BACKEND,
           data: ImmersionData = None) -> float:
    """Weighted Dirichlet energy 1/2 int e^{-|u|^2/4} |Du|^2_tau tau2 dxdy."""
    if data is None:
        data = derivatives(u, backend)
    ginv = metric_g_tau_inv(tau)
    du = data.du
    dirichlet = (
        ginv[0, 0] * data.metric[..., 0, 0]
        + 2.0 * ginv[0, 1] * data.metric[..., 0, 1]
        + ginv[1, 1] * data.metric[..., 1, 1]
    )
    weight = np.exp(-0.25 * np.einsum("xyk,xyk->xy", u.values, u.values))
    return 0.5 * tau.tau2 * quadrature(weight * dirichlet, u.grid)


def willmore(u: TorusMap, backend=DEFAULT_BACKEND,
             data: ImmersionData = None) -> float:
    """Willmore energy 1/4 int |H|^2 d(mu); equals area/4 on shrinkers."""
    if data is None:
        data = fundamental_forms(u, backend)
    h2 = np.einsum("xyk,xyk->xy", data.H, data.H)
    return 0.25 * quadrature(h2 * data.sqrt_det_g, u.grid)


def shrinker_residual(u: TorusMap, backend=DEFAULT_BACKEND,
                      data: ImmersionData = None) -> float:
    """max over nodes of |H + u^perp / 2|; zero exactly on self-shrinkers."""
    if data is None:
        data = fundamental_forms(u, backend)
    res = data.H + 0.5 * data.normal_project(u.values)
    return float(np.max(np.linalg.norm(res, axis=-1)))


def shrink_tolerance(u: TorusMap, backend=DEFAULT_BACKEND, factor=10.0,
                     data: ImmersionData = None) -> float:
    """Acceptance tolerance for the shrinker residual.

    factor * (max induced nodal spacing)^2 * max |H|: matches the
    discretization order, so exact shrinkers pass under refinement.
    """
    if data is None:
        data = fundamental_forms(u, backend)
    spacing2 = max(
        float(np.max(data.metric[..., 0, 0])) * u.grid.hx**2,
        float(np.max(data.metric[..., 1, 1])) * u.grid.hy**2,
    )
    maxH = float(np.max(np.linalg.norm(data.H, axis=-1)))
    return factor * spacing2 * max(maxH, 1e-30)


def is_numerical_shrinker(u: TorusMap, backend=DEFAULT_BACKEND, factor=10.0,
                          data: ImmersionData = None) -> bool:
    if data is None:
        data = fundamental_forms(u, backend)
    return shrinker_residual(u, backend, data) <= shrink_tolerance(
        u, backend, factor, data
    )


def drift_identity_residual(u: TorusMap, backend=DEFAULT_BACKEND) -> float:
    """max-node residual of Delta_g |u|^2 + |u^perp|^2 - 4 on an accepted shrinker."""
    from .grid import laplace_beltrami

    data = fundamental_forms(u, backend)
    if not is_numerical_shrinker(u, backend, data=data):
        raise NotShrinker(
            f"drift identity requires an accepted shrinker; residual "
            f"{shrinker_residual(u, backend, data):.3e} > tolerance "
            f"{shrink_tolerance(u, backend, data=data):.3e}"
        )
    f = np.einsum("xyk,xyk->xy", u.values, u.values)
    lap = laplace_beltrami(f, u, data=data, backend=backend)
    perp = data.normal_project(u.values)
    perp2 = np.einsum("xyk,xyk->xy", perp, perp)
    return float(np.max(np.abs(lap + perp2 - 4.0)))
