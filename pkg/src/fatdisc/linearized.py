"""Linearized horizontality operator along a mesh map and its right inverse.

A section along ``f`` is written ``d = d0 + a Z1 + b Z2`` with ``d0`` in the
distribution.  The linearization sends it to

    P = da + iota_{d0} d alpha_1 (pulled back),
    Q = db + iota_{d0} d alpha_2 (pulled back).

The right inverse imposes ``omega1(d0, JX) = omega1(d0, JY) = 0``, which turns
the second pair into ``grad b = G + B grad a`` with ``B = [[p, q], [r, s]]`` and
``G = Q - B P``.  Curl-freeness of ``grad b`` gives a divergence-form scalar
equation for ``a``; ``b`` is then recovered as a least-squares potential and
``d0`` from a 4x4 system per element.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .admissibility import EllipticCoefficients, TangentSplit, admissibility_check, coefficient_fields
from .errors import AdmissibilityError, DiscretizationError, DomainError, EllipticityError, FrameError
from .geometry import CorankTwoDistribution
from .mesh import DiscMesh, MeshMap, OneFormField, graded_norm


# ---------------------------------------------------------------------------
# data types


@dataclass(frozen=True, eq=False)
class SectionAlongMap:
    """``d = d0 + a Z1 + b Z2`` along a mesh map.

    ``a``, ``b`` and ``assembled`` are nodal; ``d0`` holds per-element
    coordinates in the frame ``(X, Y, JX, JY)`` and ``d0_vectors`` the same
    vectors in R^6.
    """

    mesh: DiscMesh
    a: np.ndarray
    b: np.ndarray
    d0: np.ndarray
    d0_vectors: np.ndarray
    assembled: np.ndarray
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for name in ("a", "b", "d0", "d0_vectors", "assembled"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __add__(self, other: "SectionAlongMap") -> "SectionAlongMap":
        return SectionAlongMap(self.mesh, self.a + other.a, self.b + other.b, self.d0 + other.d0,
                               self.d0_vectors + other.d0_vectors, self.assembled + other.assembled)

    def scaled(self, c: float) -> "SectionAlongMap":
        return SectionAlongMap(self.mesh, c * self.a, c * self.b, c * self.d0, c * self.d0_vectors,
                               c * self.assembled)


@dataclass(frozen=True)
class BoundaryData:
    """Dirichlet data for ``a`` and ``b``; arrays follow ``mesh.boundary_nodes``."""

    a0: np.ndarray
    b0: np.ndarray
    base_index: int

    @classmethod
    def zeros(cls, mesh: DiscMesh) -> "BoundaryData":
        nb = len(mesh.boundary_nodes)
        return cls(np.zeros(nb), np.zeros(nb), int(mesh.boundary_nodes[0]))

    @classmethod
    def from_nodal(cls, mesh: DiscMesh, a, b, base_index: Optional[int] = None) -> "BoundaryData":
        bn = mesh.boundary_nodes
        base = int(bn[0]) if base_index is None else int(base_index)
        return cls(np.asarray(a, dtype=float)[bn], np.asarray(b, dtype=float)[bn], base)

    def validate(self, mesh: DiscMesh) -> None:
        nb = len(mesh.boundary_nodes)
        if np.shape(self.a0) != (nb,) or np.shape(self.b0) != (nb,):
            raise DomainError(f"boundary data must have {nb} entries")
        if not (np.all(np.isfinite(self.a0)) and np.all(np.isfinite(self.b0))):
            raise DomainError("boundary data must be finite")
        if self.base_index not in set(mesh.boundary_nodes.tolist()):
            raise DomainError(f"base index {self.base_index} is not a boundary node")

    def b_at_base(self, mesh: DiscMesh) -> float:
        pos = int(np.flatnonzero(mesh.boundary_nodes == self.base_index)[0])
        return float(self.b0[pos])


# ---------------------------------------------------------------------------
# helpers


def _coeffs(dist, f, coeffs, strict=False) -> EllipticCoefficients:
    return coefficient_fields(dist, f, strict=strict) if coeffs is None else coeffs


def project_to_distribution(dist: CorankTwoDistribution, points, vectors):
    """Split ``v = pi_D v + Z c`` along the Reeb plane; returns ``(pi_D v, c)``."""
    C = dist.coefficient_matrix(points)  # (..., 2, 6)
    Z = dist.reeb_fields(points)  # (..., 6, 2)
    v = np.asarray(vectors, dtype=float)
    c = np.linalg.solve(C @ Z, np.einsum("...ij,...j->...i", C, v)[..., None])[..., 0]
    return v - np.einsum("...ij,...j->...i", Z, c), c


def _kernel_coords(split: TangentSplit, vectors) -> np.ndarray:
    return np.einsum("eji,ej->ei", split.basis, vectors)


def _omega_pairs(omega: np.ndarray, u: np.ndarray, split: TangentSplit) -> np.ndarray:
    """``(omega(u, X), omega(u, Y))`` per element, ``u`` in kernel coordinates."""
    x = _kernel_coords(split, split.X)
    y = _kernel_coords(split, split.Y)
    return np.stack([np.einsum("ei,eij,ej->e", u, omega, x), np.einsum("ei,eij,ej->e", u, omega, y)], axis=1)


def auxiliary_directions(coeffs: EllipticCoefficients) -> np.ndarray:
    """Frame coordinates ``(Ne, 4, 2)`` of a basis of ``{u : omega1(u, JX) = omega1(u, JY) = 0}``.

    The basis vectors have the form ``JX + .. X + .. Y`` and ``JY + .. X + .. Y``.
    """
    F = coeffs.frame
    Wf = np.einsum("eki,ekl,elj->eij", F, coeffs.split.omega1, F)  # omega1 in frame coordinates
    # rows: omega1(e, JX), omega1(e, JY) for e = (alpha, beta, 1, 0) and (alpha, beta, 0, 1)
    M = np.swapaxes(Wf[:, :2, 2:], 1, 2)  # (Ne, 2[cond], 2[alpha,beta])
    rhs = -np.swapaxes(Wf[:, 2:, 2:], 1, 2)  # (Ne, 2[cond], 2[e])
    top = np.linalg.solve(M, rhs)
    out = np.zeros((len(F), 4, 2))
    out[:, :2] = top
    out[:, 2, 0] = 1.0
    out[:, 3, 1] = 1.0
    return out


# ---------------------------------------------------------------------------
# the linearization


def section_from_vectors(dist: CorankTwoDistribution, f: MeshMap, vectors,
                         coeffs: Optional[EllipticCoefficients] = None) -> SectionAlongMap:
    """Split nodal vectors along ``f`` into ``(d0, a, b)``.

    ``d0`` on an element is the element average of the nodal distribution
    parts, projected along the Reeb plane at the barycenter image.
    """
    coeffs = _coeffs(dist, f, coeffs)
    V = np.asarray(vectors, dtype=float)
    if V.shape != f.values.shape:
        raise DomainError(f"expected nodal vectors of shape {f.values.shape}")
    nodal_d, ab = project_to_distribution(dist, f.values, V)
    mean = nodal_d[f.mesh.elements].mean(axis=1)
    d0v, _ = project_to_distribution(dist, coeffs.split.points, mean)
    u = _kernel_coords(coeffs.split, d0v)
    d0 = np.linalg.solve(coeffs.frame, u[..., None])[..., 0]
    return SectionAlongMap(f.mesh, ab[:, 0], ab[:, 1], d0, d0v, V)


def reeb_section(dist: CorankTwoDistribution, f: MeshMap, a, b,
                 coeffs: Optional[EllipticCoefficients] = None) -> SectionAlongMap:
    """``a Z1 + b Z2`` with scalar or nodal ``a``, ``b``."""
    mesh = f.mesh
    a = np.broadcast_to(np.asarray(a, dtype=float), (mesh.n_nodes,)).copy()
    b = np.broadcast_to(np.asarray(b, dtype=float), (mesh.n_nodes,)).copy()
    Z = dist.reeb_fields(f.values)
    assembled = Z[:, :, 0] * a[:, None] + Z[:, :, 1] * b[:, None]
    ne = mesh.n_elements
    return SectionAlongMap(mesh, a, b, np.zeros((ne, 4)), np.zeros((ne, 6)), assembled)


def apply_linearization(dist: CorankTwoDistribution, f: MeshMap, s: SectionAlongMap,
                        coeffs: Optional[EllipticCoefficients] = None):
    """``(P, Q)`` with ``P = grad a + (omega1(d0, X), omega1(d0, Y))`` and likewise for ``Q``."""
    split = _coeffs(dist, f, coeffs).split
    mesh = f.mesh
    u = _kernel_coords(split, s.d0_vectors)
    P = mesh.gradient(s.a) + _omega_pairs(split.omega1, u, split)
    Q = mesh.gradient(s.b) + _omega_pairs(split.omega2, u, split)
    return OneFormField(mesh, P), OneFormField(mesh, Q)


# ---------------------------------------------------------------------------
# elimination and the scalar Dirichlet problem


@dataclass(frozen=True, eq=False)
class ScalarEllipticProblem:
    """``div(K grad a) = div F`` with elementwise constant ``K`` and ``F``."""

    mesh: DiscMesh
    K: np.ndarray  # (Ne, 2, 2)
    F: np.ndarray  # (Ne, 2)
    B: np.ndarray  # (Ne, 2, 2), grad b = G + B grad a
    G: np.ndarray  # (Ne, 2)

    def symbol(self, xi) -> np.ndarray:
        """Principal symbol ``r xi1^2 + (s - p) xi1 xi2 - q xi2^2`` per element."""
        xi = np.asarray(xi, dtype=float)
        return np.einsum("i,eij,j->e", xi, self.K, xi)

    @property
    def discriminant(self) -> np.ndarray:
        K = self.K
        return (K[:, 0, 1] + K[:, 1, 0]) ** 2 - 4.0 * K[:, 0, 0] * K[:, 1, 1]

    def stiffness(self) -> sp.csr_matrix:
        return _assemble(self.mesh, self.K)

    def load(self) -> np.ndarray:
        return _load(self.mesh, self.F)


def _assemble(mesh: DiscMesh, K: np.ndarray) -> sp.csr_matrix:
    g = mesh.grads  # (Ne, 2, 3)
    local = np.einsum("e,eki,ekl,elj->eij", mesh.areas, g, K, g)
    rows = np.repeat(mesh.elements, 3, axis=1).ravel()
    cols = np.tile(mesh.elements, (1, 3)).ravel()
    n = mesh.n_nodes
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


def _load(mesh: DiscMesh, F: np.ndarray) -> np.ndarray:
    local = np.einsum("e,eki,ek->ei", mesh.areas, mesh.grads, F)
    out = np.zeros(mesh.n_nodes)
    np.add.at(out, mesh.elements.ravel(), local.ravel())
    return out


def eliminate_to_scalar(coeffs: EllipticCoefficients, P: OneFormField, Q: OneFormField) -> ScalarEllipticProblem:
    """Eliminate ``d0`` and ``b``; raises :class:`EllipticityError` where the symbol has real zeros."""
    disc = coeffs.discriminant
    bad = ~(disc < 0)
    if np.any(bad):
        idx = np.flatnonzero(bad)
        raise EllipticityError(
            f"discriminant (p - s)^2 + 4qr >= 0 on {idx.size} element(s), first {idx[:10].tolist()}", idx
        )
    B = coeffs.block
    G = Q.values - np.einsum("eij,ej->ei", B, P.values)
    K = np.stack([np.stack([coeffs.r, coeffs.s], -1), np.stack([-coeffs.p, -coeffs.q], -1)], -2)
    F = np.stack([-G[:, 1], G[:, 0]], axis=1)
    return ScalarEllipticProblem(P.mesh, K, F, B, G)


def _factorize(A: sp.spmatrix):
    try:
        lu = spla.splu(sp.csc_matrix(A), permc_spec="COLAMD")
    except RuntimeError as exc:  # "Factor is exactly singular"
        raise DiscretizationError(f"sparse factorization failed: {exc}") from exc
    return lu


def _dirichlet_solve(mesh: DiscMesh, A: sp.csr_matrix, rhs: np.ndarray, bnodes, bvals) -> np.ndarray:
    n = mesh.n_nodes
    u = np.zeros(n)
    u[bnodes] = bvals
    free = np.ones(n, dtype=bool)
    free[bnodes] = False
    if not np.any(free):
        return u
    A = A.tocsr()
    Aff = A[free][:, free]
    r = rhs[free] - A[free][:, ~free] @ u[~free]
    u[free] = _factorize(Aff).solve(r)
    if not np.all(np.isfinite(u)):
        raise DiscretizationError("non-finite solution of the Dirichlet problem")
    return u


def solve_reduced_dirichlet(coeffs: EllipticCoefficients, P: OneFormField, Q: OneFormField,
                            bdry: Optional[BoundaryData] = None, mode: str = "pinned",
                            boundary_weight: float = 1.0):
    """Solve for ``(a, b)``; returns ``(a, b, diagnostics)``.

    ``a`` takes its boundary values exactly.  In ``"pinned"`` mode ``b`` is the
    least-squares potential of ``G + B grad a`` fixed at the base node; in
    ``"least_squares"`` mode the boundary values of ``b`` enter as a weighted
    penalty instead.
    """
    mesh = P.mesh
    bdry = BoundaryData.zeros(mesh) if bdry is None else bdry
    bdry.validate(mesh)
    prob = eliminate_to_scalar(coeffs, P, Q)
    bn = mesh.boundary_nodes
    a = _dirichlet_solve(mesh, prob.stiffness(), prob.load(), bn, bdry.a0)

    g = prob.G + np.einsum("eij,ej->ei", prob.B, mesh.gradient(a))
    L = _assemble(mesh, np.broadcast_to(np.eye(2), (mesh.n_elements, 2, 2)))
    rhs = _load(mesh, g)
    if mode == "pinned":
        b = _dirichlet_solve(mesh, L, rhs, np.array([bdry.base_index]), [bdry.b_at_base(mesh)])
    elif mode == "least_squares":
        w = np.zeros(mesh.n_nodes)
        w[bn] = boundary_weight * 2.0 * np.pi / len(bn)
        rhs = rhs.copy()
        rhs[bn] += w[bn] * bdry.b0
        b = _factorize(L + sp.diags(w)).solve(rhs)
    else:
        raise DomainError(f"unknown boundary mode {mode!r}")

    mismatch = g - mesh.gradient(b)
    g_norm = float(np.sqrt(np.sum(mesh.areas * np.sum(g ** 2, axis=1))))
    curl = float(np.sqrt(np.sum(mesh.areas * np.sum(mismatch ** 2, axis=1))))
    diagnostics = {
        "mode": mode,
        "boundary_mismatch": float(np.max(np.abs(b[bn] - bdry.b0))),
        "a_boundary_error": float(np.max(np.abs(a[bn] - bdry.a0))),
        "curl_residual": curl,
        "curl_residual_relative": curl / g_norm if g_norm > 0 else 0.0,
        "discriminant_range": [float(np.min(coeffs.discriminant)), float(np.max(coeffs.discriminant))],
    }
    return a, b, diagnostics


# ---------------------------------------------------------------------------
# reconstruction and the right inverse


def reconstruct_section(dist: CorankTwoDistribution, coeffs: EllipticCoefficients, f: MeshMap,
                        a, b, P: OneFormField, cond_limit: float = 1e10) -> SectionAlongMap:
    """Solve ``omega1(d0, .) = (P1 - a_x, P2 - a_y, 0, 0)`` on ``(X, Y, JX, JY)`` per element."""
    mesh = f.mesh
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    split = coeffs.split
    F = coeffs.frame
    # omega1(F c, F_k) = (F^T omega1^T F c)_k
    M = np.einsum("eki,elk,elj->eij", F, split.omega1, F)
    cond = np.linalg.cond(M)
    bad = ~(cond < cond_limit)
    if np.any(bad):
        idx = np.flatnonzero(bad)
        raise FrameError(f"reconstruction system singular on {idx.size} element(s), first {idx[:10].tolist()}", idx)
    w = P.values - mesh.gradient(a)
    rhs = np.concatenate([w, np.zeros_like(w)], axis=1)
    d0 = np.linalg.solve(M, rhs[..., None])[..., 0]
    d0v = np.einsum("eij,ej->ei", split.basis, np.einsum("eij,ej->ei", F, d0))

    nodal_d, _ = project_to_distribution(dist, f.values, mesh.to_nodes(d0v))
    Z = dist.reeb_fields(f.values)
    assembled = nodal_d + Z[:, :, 0] * a[:, None] + Z[:, :, 1] * b[:, None]
    return SectionAlongMap(mesh, a, b, d0, d0v, assembled)


def right_inverse(dist: CorankTwoDistribution, f: MeshMap, P: OneFormField, Q: OneFormField,
                  bdry: Optional[BoundaryData] = None, coeffs: Optional[EllipticCoefficients] = None,
                  mode: str = "pinned", check: bool = True) -> SectionAlongMap:
    """Section ``s`` with ``apply_linearization(s) ~ (P, Q)`` and the given boundary data.

    Diagnostics of the scalar solve are attached to ``s.diagnostics``.
    """
    if check:
        rep = admissibility_check(dist, f)
        if not rep.admissible:
            idx = rep.failing_elements()
            raise AdmissibilityError(
                f"map is not admissible on {idx.size} element(s), first {idx[:10].tolist()}", idx
            )
    coeffs = coefficient_fields(dist, f, strict=True) if coeffs is None else coeffs
    a, b, diag = solve_reduced_dirichlet(coeffs, P, Q, bdry, mode=mode)
    s = reconstruct_section(dist, coeffs, f, a, b, P)
    s.diagnostics.update(diag)
    return s


def first_order_residuals(dist: CorankTwoDistribution, f: MeshMap, s: SectionAlongMap,
                          P: OneFormField, Q: OneFormField,
                          coeffs: Optional[EllipticCoefficients] = None) -> dict:
    """Sup-norm residuals of the first-order systems satisfied by ``s``.

    ``"first"`` is ``grad a + omega1(d0, .) - P``, ``"second"`` uses omega2,
    ``"second_reduced"`` the form with omega2 replaced through ``p, q, r, s``,
    and ``"auxiliary"`` is ``omega1(d0, JX), omega1(d0, JY)``.
    """
    coeffs = _coeffs(dist, f, coeffs)
    split = coeffs.split
    mesh = f.mesh
    u = _kernel_coords(split, s.d0_vectors)
    w1 = _omega_pairs(split.omega1, u, split)
    ga, gb = mesh.gradient(s.a), mesh.gradient(s.b)
    F = coeffs.frame
    aux = np.stack([np.einsum("ei,eij,ej->e", u, split.omega1, F[:, :, k]) for k in (2, 3)], axis=1)
    second = gb + _omega_pairs(split.omega2, u, split) - Q.values
    reduced = gb + np.einsum("eij,ej->ei", coeffs.block, w1) - Q.values
    return {
        "first": float(np.max(np.abs(ga + w1 - P.values))),
        "second": float(np.max(np.abs(second))),
        "second_reduced": float(np.max(np.abs(reduced))),
        "auxiliary": float(np.max(np.abs(aux))),
    }


# ---------------------------------------------------------------------------
# tame estimate probe


def random_smooth_vectors(points, rng: np.random.Generator, n_modes: int = 3, max_freq: float = 2.0):
    """Random trigonometric vector fields ``points (N, 2) -> (N, 6)``."""
    out = np.zeros((len(points), 6))
    for j in range(6):
        k = rng.uniform(-max_freq, max_freq, size=(n_modes, 2))
        phase = rng.uniform(0, 2 * np.pi, size=n_modes)
        amp = rng.normal(size=n_modes)
        out[:, j] = np.sum(amp * np.cos(points @ k.T + phase), axis=1)
    return out


def tame_estimate_probe(dist: CorankTwoDistribution, f: MeshMap, n: int = 0, trials: int = 50,
                        seed: int = 0, coeffs: Optional[EllipticCoefficients] = None) -> float:
    """Largest observed ``|L_f s|_n / |s|_{n+1}`` over random smooth sections."""
    coeffs = _coeffs(dist, f, coeffs)
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(trials):
        V = random_smooth_vectors(f.mesh.nodes, rng)
        s = section_from_vectors(dist, f, V, coeffs)
        P, Q = apply_linearization(dist, f, s, coeffs)
        den = graded_norm(V, n + 1, mesh=f.mesh)
        if den > 0:
            best = max(best, graded_norm((P, Q), n) / den)
    return best
