"""Piecewise Lagrangian mean curvature flow with entropy-lowering surgeries.

A run alternates smooth Lagrangian MCF legs with area-preserving,
entropy-decreasing Lagrangian perturbations performed when a leg ends in a
type-I singularity modelled by a compact self-shrinker of bounded area.  At
each surgery time t1 the certified conditions are

  (1) the new leg starts where the perturbation says it does,
  (2) area is preserved:  mu(F^{i+1}_{t1}) = mu(F^i_{t1}) (relative 1e-6),
  (3) entropy strictly drops:  lambda(F^{i+1}_{t1}) < lambda(F^i_{t1}),
  (4) the C^0 distance is at most delta * sqrt(mu(F^i_{t1})),

and the Maslov pair is carried through unchanged.  The perturbation is found
by direct entropy sampling over a dictionary of closed 1-forms (harmonic
dx, dy plus random exact forms), each realized as a Lagrangian move with the
amplitude schedule +-{delta1/4, delta1/2, delta1}, delta1 = delta
sqrt(area)/6; rescale_back restores scale, center, and exact area match.

The module also hosts the entropy census: descend seeds to accepted
shrinkers and cluster their entropies, a desk-scale probe of the finiteness
of the entropy spectrum at bounded area.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    MaxIterations,
    NoDecreaseFound,
    NotCauchy,
    NotLagrangian,
    NotShrinker,
    ToolkitError,
)
from .functionals import (
    entropy,
    f_functional,
    is_numerical_shrinker,
    shrinker_residual,
)
from .grid import DEFAULT_BACKEND, ConformalStructure, TorusMap, area, fundamental_forms
from .lagrangian import (
    OneForm,
    lagrangian_perturb,
    lagrangian_tolerance,
    maslov_numbers,
    one_form_to_variation,
    symplectic_residual,
)
from .flow import (
    FlowState,
    RescaleResult,
    SingularityReport,
    run_to_singularity,
    type1_rescale,
)
from .variational import find_critical_point, random_bandlimited_pair

C_MIN = 1e-4          # minimum certified entropy drop per surgery
K_EXACT = 8           # random exact forms in the dictionary
K_MAX = 16            # hard cap on the number of legs


@dataclass
class PerturbationEvent:
    t: float
    lambda_before: float
    lambda_after: float
    area_before: float
    area_after: float
    c0_distance: float
    delta_bound: float
    maslov_before: tuple
    maslov_after: tuple
    kappa: float
    form_index: int
    amplitude: float

    def certificates(self):
        return {
            "area_match": abs(self.area_after / self.area_before - 1.0) <= 1e-6,
            "entropy_drop": self.lambda_after < self.lambda_before,
            "c0_close": self.c0_distance <= self.delta_bound,
            "maslov_invariant": self.maslov_before == self.maslov_after,
        }

    def all_certified(self):
        return all(self.certificates().values())


@dataclass
class LegSummary:
    index: int
    t_start: float
    t_end: float
    steps: int
    area_start: float
    area_end: float
    entropy_start: float
    report: SingularityReport


@dataclass
class PiecewiseFlowLog:
    legs: list = field(default_factory=list)
    events: list = field(default_factory=list)
    terminal: str = ""
    outcome: str = ""     # terminal-non-compact | cap-reached | no-singularity

    def text_report(self):
        lines = ["piecewise Lagrangian MCF log", "=" * 32]
        for leg in self.legs:
            lines.append(
                f"leg {leg.index}: t in [{leg.t_start:.6g}, {leg.t_end:.6g}], "
                f"{leg.steps} steps, area {leg.area_start:.6g} -> {leg.area_end:.6g}, "
                f"entropy {leg.entropy_start:.9g}"
            )
            r = leg.report
            lines.append(
                f"  singularity: T0_est = {r.T0_est:.9g}, type1_constant = "
                f"{r.type1_constant:.4g}, is_type1 = {r.is_type1}"
            )
        for ev in self.events:
            lines.append(
                f"event at t = {ev.t:.6g}: lambda {ev.lambda_before:.9g} -> "
                f"{ev.lambda_after:.9g}, area {ev.area_before:.9g} -> "
                f"{ev.area_after:.9g}, C0 distance {ev.c0_distance:.4g} "
                f"(bound {ev.delta_bound:.4g}), kappa = {ev.kappa:.6g}, "
                f"maslov {ev.maslov_before} -> {ev.maslov_after}"
            )
            for name, ok in ev.certificates().items():
                lines.append(f"  certificate {name}: {'PASS' if ok else 'FAIL'}")
        lines.append(f"terminal: {self.terminal}")
        lines.append(f"outcome: {self.outcome}")
        return "\n".join(lines)


def _form_dictionary(u: TorusMap, k_exact=K_EXACT, seed=777, backend=DEFAULT_BACKEND):
    """Harmonic dx, dy plus k random bandlimited exact forms."""
    grid = u.grid
    forms = [OneForm.harmonic(grid, 1.0, 0.0), OneForm.harmonic(grid, 0.0, 1.0)]
    rng = np.random.default_rng(np.random.Philox(seed))
    band = max(2, grid.nx // 8)
    for _ in range(k_exact):
        f = random_bandlimited_pair(grid, rng, band=band).phi[..., 0]
        forms.append(OneForm.exact(f, grid))
    return forms


def perturbation_search(model: TorusMap, delta: float, Lambda: float = None,
                        backend=DEFAULT_BACKEND, c_min=C_MIN, k_exact=K_EXACT,
                        seed=777, entropy_before=None):
    """First dictionary candidate that certifiably lowers the entropy.

    Returns (perturbed map, form, amplitude, entropy reports).  Candidates
    are Lagrangian moves along J alpha^sharp for closed alpha, normalized so
    the amplitude is the C^0 move; certification requires an entropy drop of
    at least c_min, C^0 distance <= 3 delta1, Lagrangian residual within
    tolerance, and an unchanged Maslov pair.
    """
    a = area(model, backend)
    if Lambda is not None and a > Lambda:
        raise NotShrinker(f"model area {a:.4g} exceeds the bound {Lambda:.4g}")
    if not is_numerical_shrinker(model, backend):
        raise NotShrinker(
            f"perturbation requires an accepted shrinker (residual "
            f"{shrinker_residual(model, backend):.3e})"
        )
    res_lag = symplectic_residual(model, backend)
    tol_lag = lagrangian_tolerance(model.grid)
    if res_lag > tol_lag:
        raise NotLagrangian(f"model symplectic residual {res_lag:.3e} > {tol_lag:.3e}")

    if entropy_before is None:
        entropy_before = entropy(model, backend)
    lam0 = entropy_before.lam
    maslov0 = maslov_numbers(model, backend)

    delta1 = delta * math.sqrt(a) / 6.0
    amplitudes = [delta1 / 4, -delta1 / 4, delta1 / 2, -delta1 / 2, delta1, -delta1]
    best_margin = -math.inf
    for idx, form in enumerate(_form_dictionary(model, k_exact, seed, backend)):
        X = one_form_to_variation(model, form, backend)
        scale = float(np.max(np.linalg.norm(X, axis=-1)))
        if scale <= 0:
            continue
        unit = form.scaled(1.0 / scale)
        for s in amplitudes:
            try:
                cand = lagrangian_perturb(model, unit, s, backend)
            except (ToolkitError, ValueError):
                continue   # amplitude bound or projection failure: skip candidate
            dist = float(np.max(np.linalg.norm(cand.values - model.values, axis=-1)))
            if dist > 3.0 * delta1:
                continue
            rep = entropy(cand, backend, warm_start=entropy_before.argmax)
            full = entropy(cand, backend)
            if full.lam > rep.lam:
                rep = full
            drop = lam0 - rep.lam
            best_margin = max(best_margin, drop)
            if drop < c_min:
                continue
            if maslov_numbers(cand, backend) != maslov0:
                continue
            return cand, (idx, form), s, entropy_before, rep
    raise NoDecreaseFound(
        f"no candidate dropped entropy by c_min = {c_min:.1e} "
        f"(best margin {best_margin:.3e})",
        best_margin=best_margin,
    )


def rescale_back(perturbed: TorusMap, target_area: float, T0: float, t1: float,
                 q, backend=DEFAULT_BACKEND):
    """Undo the type-I rescaling for the perturbed model.

    kappa matches the rescaled areas, so the output area equals
    (T0 - t1) * target_area, the area of the pre-perturbation flow surface.
    Returns (map, kappa).
    """
    if not (target_area > 0):
        raise ValueError("target_area must be positive")
    kappa = math.sqrt(target_area / area(perturbed, backend))
    vals = math.sqrt(T0 - t1) * (kappa * perturbed.values) + np.asarray(q)
    return TorusMap(perturbed.grid, vals), kappa


def _compactness_ok(model: TorusMap, Lambda: float, backend) -> bool:
    """Area bound plus the rescaled-diameter sanity check."""
    a = area(model, backend)
    if a > Lambda:
        return False
    pts = model.values.reshape(-1, 4)
    diam = float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))
    return diam <= 10.0 * math.sqrt(Lambda)


def run_piecewise(F0: TorusMap, Lambda: float, delta: float,
                  backend=DEFAULT_BACKEND, k_max=K_MAX, c_min=C_MIN,
                  k_exact=K_EXACT, seed=777, t_max=10.0,
                  cauchy_tol=1e-3) -> PiecewiseFlowLog:
    """Drive the piecewise flow until the terminal singularity or the cap.

    Each leg flows to its singular time; if the type-I rescaling settles to a
    compact model of area <= Lambda, a certified perturbation event starts
    the next leg at the earliest settled time.  Every event's Definition
    certificates are recorded in the log; errors terminate the run with the
    failure recorded, never silently.
    """
    log = PiecewiseFlowLog()
    current = F0.copy()
    t_cur = 0.0
    for leg_idx in range(k_max):
        lam_start = entropy(current, backend)
        try:
            traj, report = run_to_singularity(
                FlowState(current, t_cur), backend, t_max=t_max)
        except ToolkitError as exc:
            log.terminal = f"leg {leg_idx}: flow error: {exc}"
            log.outcome = "no-singularity"
            return log
        log.legs.append(LegSummary(
            index=leg_idx, t_start=t_cur, t_end=traj.times[-1],
            steps=len(traj.times) - 1, area_start=traj.areas[0],
            area_end=traj.areas[-1], entropy_start=lam_start.lam,
            report=report,
        ))
        if not report.is_type1:
            log.terminal = (
                f"leg {leg_idx}: singularity at T0 ~ {report.T0_est:.6g} is "
                "not type I"
            )
            log.outcome = "terminal-non-compact"
            return log
        try:
            rescale = type1_rescale(traj, report, backend, cauchy_tol=cauchy_tol)
        except NotCauchy as exc:
            log.terminal = (
                f"leg {leg_idx}: type I at T0 ~ {report.T0_est:.6g} is not "
                f"modelled by a compact self-shrinker: {exc}"
            )
            log.outcome = "terminal-non-compact"
            return log
        model = rescale.model
        if not _compactness_ok(model, Lambda, backend):
            log.terminal = (
                f"leg {leg_idx}: compact model exceeds the area/diameter "
                f"bound (area {area(model, backend):.4g} vs Lambda = {Lambda:.4g})"
            )
            log.outcome = "terminal-non-compact"
            return log

        # surgery at the earliest settled rescale time
        t1 = rescale.settled_time
        k = int(np.argmin(np.abs(np.array([t for t, _ in traj.snapshots]) - t1)))
        t1, before_map = traj.snapshots[k]
        T0 = report.T0_est
        scale = math.sqrt(T0 - t1)
        rescaled_before = TorusMap(
            before_map.grid, (before_map.values - report.q_est) / scale)

        try:
            perturbed, (form_idx, form), amp, rep_before, rep_after = \
                perturbation_search(model, delta, Lambda, backend, c_min,
                                    k_exact, seed)
        except (NoDecreaseFound, NotShrinker, NotLagrangian) as exc:
            log.terminal = f"leg {leg_idx}: perturbation search failed: {exc}"
            log.outcome = "error"
            return log

        target_area = area(rescaled_before, backend)
        after_map, kappa = rescale_back(
            perturbed, target_area, T0, t1, report.q_est, backend)

        lam_before = entropy(before_map, backend)
        lam_after = entropy(after_map, backend)
        ev = PerturbationEvent(
            t=t1,
            lambda_before=lam_before.lam,
            lambda_after=lam_after.lam,
            area_before=area(before_map, backend),
            area_after=area(after_map, backend),
            c0_distance=float(np.max(np.linalg.norm(
                after_map.values - before_map.values, axis=-1))),
            delta_bound=delta * math.sqrt(area(before_map, backend)),
            maslov_before=maslov_numbers(before_map, backend),
            maslov_after=maslov_numbers(after_map, backend),
            kappa=kappa,
            form_index=form_idx,
            amplitude=amp,
        )
        log.events.append(ev)
        if not ev.all_certified():
            log.terminal = (
                f"leg {leg_idx}: event certification failed: {ev.certificates()}"
            )
            log.outcome = "error"
            return log
        current = after_map
        t_cur = t1
    log.terminal = f"cap k_max = {k_max} reached"
    log.outcome = "cap-reached"
    return log


# ---------------------------------------------------------------------------
# entropy census
# ---------------------------------------------------------------------------

@dataclass
class CensusEntry:
    seed_index: int
    entropy: float
    area: float
    residual: float
    embedded: bool
    converged: bool
    note: str = ""


@dataclass
class CensusReport:
    entries: list
    clusters: list            # list of (center, [seed indices])
    tolerance: float

    def text_report(self):
        lines = [f"entropy census: {len(self.entries)} seeds, "
                 f"{len(self.clusters)} clusters at tolerance {self.tolerance:g}"]
        for c, members in self.clusters:
            lines.append(f"  lambda ~ {c:.9g}: seeds {members}")
        for e in self.entries:
            status = "ok" if e.converged else f"skipped ({e.note})"
            lines.append(
                f"  seed {e.seed_index}: lambda = {e.entropy:.9g}, area = "
                f"{e.area:.6g}, residual = {e.residual:.3e}, embedded = "
                f"{e.embedded} [{status}]"
            )
        return "\n".join(lines)


def embedded_at_grid_scale(u: TorusMap, backend=DEFAULT_BACKEND,
                           dist_factor=1e-3, angle_tol=0.2) -> bool:
    """No distinct nodes closer than dist_factor * diameter with non-aligned
    tangent planes: grid-scale embeddedness evidence."""
    from scipy.spatial import cKDTree

    pts = u.values.reshape(-1, 4)
    diam = float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))
    tree = cKDTree(pts)
    pairs = tree.query_pairs(dist_factor * diam, output_type="ndarray")
    if pairs.size == 0:
        return True
    nx, ny = u.grid.shape
    data = fundamental_forms(u, backend)
    # orthonormal tangent frame per node
    e1 = data.du[0] / np.linalg.norm(data.du[0], axis=-1, keepdims=True)
    w = data.du[1] - np.einsum("xyk,xyk->xy", data.du[1], e1)[..., None] * e1
    e2 = w / np.linalg.norm(w, axis=-1, keepdims=True)
    frames = np.stack([e1.reshape(-1, 4), e2.reshape(-1, 4)], axis=1)

    ij = np.stack(np.unravel_index(np.arange(nx * ny), (nx, ny)), axis=1)
    for a, b in pairs:
        di = np.abs(ij[a] - ij[b])
        di = np.minimum(di, np.array([nx, ny]) - di)
        if max(di) <= 2:
            continue   # grid neighbors share a tangent plane by construction
        # principal angles between the two tangent planes
        M = frames[a] @ frames[b].T
        svals = np.linalg.svd(M, compute_uv=False)
        if np.min(svals) < 1.0 - angle_tol:
            return False
    return True


def entropy_census(seed_maps, Lambda: float, backend=DEFAULT_BACKEND,
                   tol_cluster=1e-3, tol_crit=1e-6,
                   taus=None) -> CensusReport:
    """Descend each seed to an accepted shrinker and cluster the entropies."""
    entries = []
    for k, seed in enumerate(seed_maps):
        tau0 = taus[k] if taus is not None else ConformalStructure(0.0, 1.0)
        try:
            cp = find_critical_point(seed, tau0, backend, tol_crit=tol_crit)
        except (MaxIterations, ToolkitError) as exc:
            entries.append(CensusEntry(k, math.nan, math.nan, math.nan,
                                       False, False, note=str(exc)[:80]))
            continue
        u = cp.u
        a = area(u, backend)
        res = shrinker_residual(u, backend)
        if a > Lambda:
            entries.append(CensusEntry(k, math.nan, a, res, False, False,
                                       note="area above bound"))
            continue
        if not is_numerical_shrinker(u, backend):
            entries.append(CensusEntry(k, math.nan, a, res, False, False,
                                       note="shrinker residual too large"))
            continue
        lam = entropy(u, backend).lam
        entries.append(CensusEntry(
            k, lam, a, res, embedded_at_grid_scale(u, backend), True))

    values = sorted((e.entropy, e.seed_index) for e in entries if e.converged)
    clusters = []
    for lam, idx in values:
        if clusters and lam - clusters[-1][0][-1] <= tol_cluster:
            clusters[-1][0].append(lam)
            clusters[-1][1].append(idx)
        else:
            clusters.append(([lam], [idx]))
    clusters = [(float(np.mean(vals)), members) for vals, members in clusters]
    return CensusReport(entries=entries, clusters=clusters, tolerance=tol_cluster)
