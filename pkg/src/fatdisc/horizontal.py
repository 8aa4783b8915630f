"""Damped Newton inversion of the horizontality operator and the cutoff homotopy."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .admissibility import admissibility_check, coefficient_fields
from .errors import AdmissibilityError, DomainError, FatDiscError, FrameError, ScaleError, StagnationError
from .fixtures import plateau
from .geometry import CorankTwoDistribution
from .linearized import BoundaryData, right_inverse
from .mesh import (MAX_NORM_ORDER, DiscMesh, MeshMap, OneFormField, build_disc_mesh, chord_integrals,
                   edge_midpoints, fit_edge_values, graded_norm, horizontality_operator, interpolate_map)

Pair = tuple  # (OneFormField, OneFormField)


@dataclass(frozen=True)
class SolveOptions:
    max_iters: int = 20
    damping: float = 1.0
    residual_target: float = 1e-10
    admissibility_guard: bool = True
    s_order: int = 2
    tau_min: float = 1.0 / 1024
    smallness_bound: Optional[float] = None
    boundary_mode: str = "pinned"

    def __post_init__(self):
        if self.max_iters < 1:
            raise DomainError("max_iters must be >= 1")
        if not 0 < self.damping <= 1:
            raise DomainError("damping must lie in (0, 1]")
        if not self.residual_target > 0:
            raise DomainError("residual_target must be positive")
        if not 0 < self.tau_min <= self.damping:
            raise DomainError("tau_min must lie in (0, damping]")


def horizontality_residual(dist: CorankTwoDistribution, f: MeshMap) -> tuple:
    """``(|f* alpha1|_0, |f* alpha2|_0)``."""
    P, Q = horizontality_operator(dist, f)
    return graded_norm(P, 0), graded_norm(Q, 0)


def _residual(dist, f, target):
    P, Q = horizontality_operator(dist, f)
    if target is not None:
        P, Q = P - target[0], Q - target[1]
    return P, Q, max(graded_norm(P, 0), graded_norm(Q, 0))


@dataclass
class NewtonLog:
    residuals: list = field(default_factory=list)
    steps: list = field(default_factory=list)  # tau per accepted step
    increment_norms: list = field(default_factory=list)
    target_norm: float = 0.0
    converged: bool = False
    message: str = ""

    @property
    def iterations(self) -> int:
        return len(self.steps)

    @property
    def reduction(self) -> float:
        if len(self.residuals) < 2 or self.residuals[-1] == 0:
            return math.inf if self.residuals and self.residuals[-1] == 0 else 1.0
        return self.residuals[0] / self.residuals[-1]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["iterations"] = self.iterations
        return d


def newton_invert(dist: CorankTwoDistribution, f0: MeshMap, g: Optional[Pair] = None,
                  opts: Optional[SolveOptions] = None):
    """Solve ``D(f) = g`` near ``f0`` by damped Newton; ``g = None`` means ``D(f) = 0``.

    Each increment is ``right_inverse(f_k, g - D(f_k))`` with zero boundary
    data, scaled by the largest ``tau`` in ``damping * 2^-j`` that lowers the
    residual (and keeps the map admissible when the guard is on).
    Returns ``(f, log)``.
    """
    opts = SolveOptions() if opts is None else opts
    log = NewtonLog()
    if g is not None:
        log.target_norm = max(graded_norm(g[0], 0), graded_norm(g[1], 0))
        if opts.smallness_bound is not None:
            size = max(graded_norm(g[0], opts.s_order), graded_norm(g[1], opts.s_order))
            if size >= opts.smallness_bound:
                raise DomainError(f"|g|_{opts.s_order} = {size:.3e} exceeds the smallness bound")
    mesh = f0.mesh
    zero = BoundaryData.zeros(mesh)
    inc_order = min(opts.s_order + 2, MAX_NORM_ORDER)
    f = f0
    P, Q, res = _residual(dist, f, g)
    log.residuals.append(res)
    for _ in range(opts.max_iters):
        if res <= opts.residual_target:
            break
        try:
            coeffs = coefficient_fields(dist, f, strict=True)
            s = right_inverse(dist, f, -P, -Q, zero, coeffs=coeffs, mode=opts.boundary_mode, check=False)
        except FrameError as exc:
            raise AdmissibilityError(f"iterate left the admissible set: {exc}", exc.elements) from exc
        tau = opts.damping
        last_bad = None
        while tau >= opts.tau_min:
            trial = f.displaced(tau * s.assembled)
            tP, tQ, tres = _residual(dist, trial, g)
            ok = np.isfinite(tres) and tres < res
            if ok and opts.admissibility_guard:
                rep = admissibility_check(dist, trial)
                if not rep.admissible:
                    ok = False
                    last_bad = rep.failing_elements()
            if ok:
                break
            tau *= 0.5
        else:
            log.message = "no decrease at the smallest step"
            if last_bad is not None:
                raise AdmissibilityError(
                    f"every damped step leaves the admissible set (element {int(last_bad[0])})", last_bad
                )
            raise StagnationError(f"no residual decrease down to tau = {opts.tau_min:g}", log)
        f, P, Q, res = trial, tP, tQ, tres
        log.residuals.append(res)
        log.steps.append(tau)
        log.increment_norms.append(graded_norm(f.values - f0.values, inc_order, mesh=mesh))
    log.converged = res <= opts.residual_target
    if not log.message:
        log.message = "converged" if log.converged else "iteration limit reached"
    return f, log


# ---------------------------------------------------------------------------
# jets of the horizontality defect


def _monomials(degree: int):
    return [(i, k - i) for k in range(degree + 1) for i in range(k, -1, -1)]


def _vandermonde(u: np.ndarray, degree: int) -> np.ndarray:
    return np.stack([u[:, 0] ** i * u[:, 1] ** j for i, j in _monomials(degree)], axis=1)


def defect_jets(dist: CorankTwoDistribution, f: MeshMap, sigma, max_r: int, fit_radius: float = 0.3,
                degree: Optional[int] = None) -> np.ndarray:
    """Largest derivative of ``D(f)`` of each order ``0..max_r`` at ``sigma``.

    The nodal values of ``f`` near ``sigma`` are fitted by a polynomial map;
    the pullbacks of that map are evaluated exactly on a small stencil and
    fitted again, and the derivatives are read off the Taylor coefficients.
    """
    mesh = f.mesh
    sigma = np.asarray(sigma, dtype=float)
    degree = max(4, max_r + 3) if degree is None else degree
    n_terms = len(_monomials(degree))
    dist_to = np.linalg.norm(mesh.nodes - sigma, axis=1)
    radius = fit_radius
    sel = dist_to <= radius
    while np.count_nonzero(sel) < 3 * n_terms and radius < 2.0:
        radius *= 1.25
        sel = dist_to <= radius
    u = (mesh.nodes[sel] - sigma) / radius
    coef, *_ = np.linalg.lstsq(_vandermonde(u, degree), f.values[sel], rcond=None)

    def poly_map(p):
        w = (p - sigma) / radius
        V = _vandermonde(w, degree)
        dV = []
        for axis in range(2):
            cols = []
            for i, j in _monomials(degree):
                e = (i, j)[axis]
                if e == 0:
                    cols.append(np.zeros(len(w)))
                else:
                    ii, jj = (i - 1, j) if axis == 0 else (i, j - 1)
                    cols.append(e * w[:, 0] ** ii * w[:, 1] ** jj / radius)
            dV.append(np.stack(cols, axis=1))
        return V @ coef, np.stack([dV[0] @ coef, dV[1] @ coef], axis=-1)

    rho = 0.25 * radius
    pd = 2 * degree
    ang = np.linspace(0, 2 * np.pi, 4 * pd, endpoint=False)
    rings = np.linspace(0.2, 1.0, pd)
    pts = np.concatenate([[[0.0, 0.0]]] + [np.stack([r * np.cos(ang), r * np.sin(ang)], 1) for r in rings])
    val, jac = poly_map(sigma + rho * pts)
    comps = []
    for form in (dist.alpha1, dist.alpha2):
        a = form.coefficients(val)
        comps.append(np.einsum("ni,nik->nk", a, jac))
    D = np.concatenate(comps, axis=1)  # (n, 4)
    c, *_ = np.linalg.lstsq(_vandermonde(pts, pd), D, rcond=None)
    out = np.zeros(max_r + 1)
    for idx, (i, j) in enumerate(_monomials(pd)):
        k = i + j
        if k <= max_r:
            deriv = np.abs(c[idx]) * math.factorial(i) * math.factorial(j) / rho ** k
            out[k] = max(out[k], float(np.max(deriv)))
    return out


def infinitesimal_order(dist: CorankTwoDistribution, f: MeshMap, sigma, max_r: int, tol: float = 1e-8,
                        fit_radius: float = 0.3) -> int:
    """Largest ``r <= max_r`` with every derivative of ``D(f)`` of order ``<= r`` below ``tol`` at ``sigma``.

    Returns -1 when ``D(f)(sigma)`` itself is not small.
    """
    sigma = np.asarray(sigma, dtype=float)
    if np.linalg.norm(sigma) >= 1.0:
        raise DomainError("sigma must lie in the open unit disc")
    if max_r > MAX_NORM_ORDER:
        raise DomainError(f"max_r is limited to {MAX_NORM_ORDER}")
    jets = defect_jets(dist, f, sigma, max_r, fit_radius)
    order = -1
    for k, v in enumerate(jets):
        if v >= tol:
            break
        order = k
    return order


# ---------------------------------------------------------------------------
# cutoff and homotopy


def cutoff_profile(mesh: DiscMesh, sigma, delta: float) -> np.ndarray:
    """Plateau ``rho_delta`` at the edge midpoints, shape ``(Ne, 3)``."""
    mids = edge_midpoints(mesh)
    return plateau(mids.reshape(-1, 2), center=sigma, inner=0.5 * delta, outer=delta).reshape(mids.shape[:2])


def make_cutoff(dist: CorankTwoDistribution, f: MeshMap, sigma, r: int, eps: float,
                delta0: Optional[float] = None, min_cells: float = 2.0):
    """``g_eps = -rho_delta * D(f)`` with ``rho_delta = 1`` on ``|p - sigma| <= delta/2``, 0 beyond ``delta``.

    The product is taken edge by edge: every chord integral of ``f* alpha_i``
    is multiplied by ``rho_delta`` at the edge midpoint before the elementwise
    fit, so ``g0 + g_eps`` stays in the image of the discrete pullback.
    ``delta`` starts at the distance to the boundary and is halved until
    ``|g_eps|_r < eps``.  Returns ``(g_eps, (delta/2, delta))``.
    """
    mesh = f.mesh
    sigma = np.asarray(sigma, dtype=float)
    chords = [chord_integrals(dist, f, i) for i in (1, 2)]
    delta = (1.0 - np.linalg.norm(sigma)) if delta0 is None else float(delta0)
    while True:
        if 0.5 * delta < min_cells * mesh.h:
            raise ScaleError(
                f"no cutoff radius resolvable at h = {mesh.h:.3g} gives |g_eps|_{r} < {eps:g}; refine the mesh"
            )
        rho = cutoff_profile(mesh, sigma, delta)
        g_eps = tuple(fit_edge_values(mesh, -rho * c) for c in chords)
        if graded_norm(g_eps, r) < eps:
            return g_eps, (0.5 * delta, delta)
        delta *= 0.5


@dataclass
class HomotopyResult:
    family: list
    times: list
    W_radius: float
    cutoff_radius: float
    center: np.ndarray
    scale: float
    g0: Pair
    g_eps: Pair
    per_t: list = field(default_factory=list)

    @property
    def final(self) -> MeshMap:
        return self.family[-1]

    def final_residual_on_W(self, dist: CorankTwoDistribution) -> float:
        """``|D(f_1)|_0`` over element barycenters of the inner ball, in rescaled coordinates."""
        P, Q = horizontality_operator(dist, self.final)
        w = self.W_radius / self.scale
        return max(graded_norm(P, 0, region=((0.0, 0.0), w)), graded_norm(Q, 0, region=((0.0, 0.0), w)))


def admissible_radius(dist: CorankTwoDistribution, f: MeshMap, sigma) -> float:
    """Radius of the largest ball about ``sigma`` (inside the disc) free of non-admissible elements."""
    sigma = np.asarray(sigma, dtype=float)
    rep = admissibility_check(dist, f)
    limit = 1.0 - np.linalg.norm(sigma)
    bad = rep.failing_elements()
    if bad.size:
        d = np.linalg.norm(f.mesh.barycenters[bad] - sigma, axis=1) - f.mesh.h
        limit = min(limit, float(np.min(d)))
    return max(limit, 0.0)


def homotopy_family(dist: CorankTwoDistribution, f: MeshMap, sigma, r: int, eps: float,
                    opts: Optional[SolveOptions] = None, t_samples: int = 5, max_refinements: int = 4,
                    order_tol: float = 1e-8) -> HomotopyResult:
    """Continuation ``D(f_t) = g0 + t g_eps`` from ``f_0 = f`` (restricted to a ball about ``sigma``)."""
    opts = SolveOptions() if opts is None else opts
    sigma = np.asarray(sigma, dtype=float)
    order = infinitesimal_order(dist, f, sigma, r, tol=order_tol)
    if order < r:
        raise DomainError(f"infinitesimal order at sigma is {order} < {r}")
    R0 = admissible_radius(dist, f, sigma)
    if R0 < 4 * f.mesh.h:
        raise AdmissibilityError("no admissible neighbourhood of sigma resolvable on this mesh")
    if np.allclose(sigma, 0.0) and R0 >= 1.0:
        work, scale = f, 1.0
    else:
        mesh = build_disc_mesh(f.mesh.resolution)
        work = MeshMap(mesh, interpolate_map(f, sigma + R0 * mesh.nodes))
        scale = R0
    g0 = horizontality_operator(dist, work)
    g_eps, (w_rad, cut_rad) = make_cutoff(dist, work, (0.0, 0.0), r, eps)

    def target(t):
        return (g0[0] + g_eps[0] * t, g0[1] + g_eps[1] * t)

    start = {"t": 0.0, "iterations": 0, "residual": 0.0, "converged": True,
             "admissible": admissibility_check(dist, work).admissible}
    family, times, per_t = [work], [0.0], [start]
    pending = list(np.linspace(0.0, 1.0, t_samples)[1:])
    current, t_prev, refinements = work, 0.0, 0
    while pending:
        t = float(pending[0])
        try:
            nxt, log = newton_invert(dist, current, target(t), opts)
            if not log.converged:
                raise StagnationError(f"Newton did not reach the target at t = {t:.4g}: {log.message}", log)
        except FatDiscError as exc:
            if refinements >= max_refinements:
                err = type(exc)(f"continuation failed at t = {t:.4g}: {exc}")
                err.__dict__.update(exc.__dict__)  # keep the log or failing elements
                raise err from exc
            refinements += 1
            pending.insert(0, 0.5 * (t_prev + t))
            continue
        pending.pop(0)
        rep = admissibility_check(dist, nxt)
        family.append(nxt)
        times.append(t)
        per_t.append({"t": t, "iterations": log.iterations, "residual": log.residuals[-1],
                      "converged": log.converged, "admissible": rep.admissible})
        current, t_prev = nxt, t
    return HomotopyResult(family, times, w_rad * scale, cut_rad * scale, sigma, scale, g0, g_eps, per_t)
