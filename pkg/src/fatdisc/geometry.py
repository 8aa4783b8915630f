"""One-forms and corank-2 distributions on R^6, with pointwise structure checks.

Coordinates are ordered ``(x1, x2, y1, y2, z1, z2)``.  Every callable that
describes a form or a vector field is vectorized: it takes an array of shape
``(..., 6)`` and returns ``(..., 6)`` (coefficients / components) or
``(..., 6, 6)`` (derivatives).

Matrix conventions used throughout:

* ``exterior_matrix(x)[i, j] = d_i A_j - d_j A_i`` so ``d alpha(u, v) = u @ W @ v``.
* a vector-field jacobian is ``jac[j, i] = d_i V_j``.
* in an orthonormal kernel basis ``B`` the restricted forms are
  ``omega_k = B.T @ W_k @ B`` and the connecting automorphism solves
  ``omega1 @ A = omega2``, i.e. ``omega1(u, A v) = omega2(u, v)``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from .errors import (
    ConfigurationError,
    DegeneracyError,
    DegenerateDistributionError,
    DomainError,
    EvaluationError,
)

COORDS = ("x1", "x2", "y1", "y2", "z1", "z2")
DIM = 6
RANK = 4

Array = np.ndarray


def _fd_steps(x: Array, step: float) -> Array:
    return step * np.maximum(1.0, np.abs(x))


def _central_jacobian(fun: Callable[[Array], Array], x: Array, step: float) -> Array:
    """Central-difference jacobian, ``jac[..., j, i] = d_i fun_j``."""
    x = np.asarray(x, dtype=float)
    h = _fd_steps(x, step)
    cols = []
    for i in range(DIM):
        e = np.zeros(DIM)
        e[i] = 1.0
        hi = h[..., i, None]
        cols.append((fun(x + hi * e) - fun(x - hi * e)) / (2.0 * hi))
    return np.stack(cols, axis=-1)


def _check_finite(values: Array, what: str) -> Array:
    if not np.all(np.isfinite(values)):
        raise EvaluationError(f"{what} produced non-finite values")
    return values


@dataclass(frozen=True)
class DifferentialOneForm:
    """A one-form ``sum_i A_i dx^i`` on R^6.

    ``dcoeff`` returns the skew matrix of the exterior derivative; when it is
    missing the derivative is taken by central differences with step
    ``fd_step`` (scaled by the coordinate magnitude).
    """

    coeff: Callable[[Array], Array]
    dcoeff: Optional[Callable[[Array], Array]] = None
    fd_step: float = 1e-5

    def coefficients(self, x) -> Array:
        x = np.asarray(x, dtype=float)
        return _check_finite(np.asarray(self.coeff(x), dtype=float), "form coefficients")

    def __call__(self, x, v) -> Array:
        """Evaluate ``alpha_x(v)``."""
        return np.einsum("...i,...i->...", self.coefficients(x), np.asarray(v, dtype=float))

    def exterior_matrix(self, x) -> Array:
        x = np.asarray(x, dtype=float)
        if self.dcoeff is not None:
            W = np.asarray(self.dcoeff(x), dtype=float)
        else:
            jac = _central_jacobian(self.coefficients, x, self.fd_step)
            W = np.swapaxes(jac, -1, -2) - jac
        return _check_finite(W, "exterior derivative")


@dataclass(frozen=True)
class VectorField:
    """A vector field on R^6 with an optional analytic jacobian."""

    value: Callable[[Array], Array]
    jac: Optional[Callable[[Array], Array]] = None
    fd_step: float = 1e-5

    def __call__(self, x) -> Array:
        x = np.asarray(x, dtype=float)
        return _check_finite(np.asarray(self.value(x), dtype=float), "vector field")

    def jacobian(self, x) -> Array:
        x = np.asarray(x, dtype=float)
        if self.jac is not None:
            return _check_finite(np.asarray(self.jac(x), dtype=float), "vector field jacobian")
        return _central_jacobian(self.__call__, x, self.fd_step)


def constant_field(vector) -> VectorField:
    vec = np.asarray(vector, dtype=float)

    def value(x):
        return np.broadcast_to(vec, np.shape(x)).copy()

    def jac(x):
        return np.zeros(np.shape(x)[:-1] + (DIM, DIM))

    return VectorField(value, jac)


def constant_form(vector) -> DifferentialOneForm:
    vec = np.asarray(vector, dtype=float)

    def coeff(x):
        return np.broadcast_to(vec, np.shape(x)).copy()

    def dcoeff(x):
        return np.zeros(np.shape(x)[:-1] + (DIM, DIM))

    return DifferentialOneForm(coeff, dcoeff)


@dataclass(frozen=True)
class CorankTwoDistribution:
    """``ker alpha1 ∩ ker alpha2`` with optional Reeb directions."""

    alpha1: DifferentialOneForm
    alpha2: DifferentialOneForm
    reeb1: Optional[VectorField] = None
    reeb2: Optional[VectorField] = None
    label: str = ""

    @property
    def has_reeb(self) -> bool:
        return self.reeb1 is not None and self.reeb2 is not None

    def forms(self):
        return (self.alpha1, self.alpha2)

    def coefficient_matrix(self, x) -> Array:
        """Rows are the coefficients of alpha1 and alpha2; shape ``(..., 2, 6)``."""
        return np.stack([self.alpha1.coefficients(x), self.alpha2.coefficients(x)], axis=-2)

    def exterior_matrices(self, x) -> Array:
        """Shape ``(..., 2, 6, 6)``."""
        return np.stack([self.alpha1.exterior_matrix(x), self.alpha2.exterior_matrix(x)], axis=-3)

    def reeb_fields(self, x) -> Array:
        """Shape ``(..., 6, 2)`` with columns Z1, Z2."""
        if not self.has_reeb:
            raise ConfigurationError(f"distribution {self.label!r} has no Reeb fields")
        return np.stack([self.reeb1(x), self.reeb2(x)], axis=-1)


@dataclass(frozen=True)
class DistributionFrame:
    point: Array
    basis: Array
    omega1: Array
    omega2: Array
    A: Array
    J: Optional[Array] = None

    def to_ambient(self, coords) -> Array:
        return self.basis @ np.asarray(coords, dtype=float)

    def to_frame(self, vectors) -> Array:
        return self.basis.T @ np.asarray(vectors, dtype=float)

    def apply_A(self, vectors) -> Array:
        """Apply the connecting automorphism to ambient vectors lying in D."""
        return self.basis @ (self.A @ self.to_frame(vectors))

    def with_acs(self) -> "DistributionFrame":
        return replace(self, J=compatible_acs(self))


# ---------------------------------------------------------------------------
# kernel frames

_PAIRS = list(itertools.combinations(range(DIM), 2))
_REEB_PAIR = _PAIRS.index((4, 5))
PIVOT_RULES = ("reeb", "max")


def _pivot_choice(C: Array, rule: str) -> tuple[Array, Array]:
    """Return (pair index per point, |minor| of the chosen pair)."""
    minors = np.stack(
        [C[..., 0, i] * C[..., 1, j] - C[..., 0, j] * C[..., 1, i] for i, j in _PAIRS], axis=-1
    )
    absm = np.abs(minors)
    best = np.argmax(absm, axis=-1)
    if rule == "reeb":
        keep = absm[..., _REEB_PAIR] >= 1e-3 * np.take_along_axis(absm, best[..., None], -1)[..., 0]
        best = np.where(keep, _REEB_PAIR, best)
    elif rule != "max":
        raise DomainError(f"unknown pivot rule {rule!r}; expected one of {PIVOT_RULES}")
    chosen = np.take_along_axis(absm, best[..., None], -1)[..., 0]
    return best, chosen


def kernel_frames(dist: CorankTwoDistribution, points, pivot: str = "reeb"):
    """Batched kernel bases and restricted forms at ``points`` (shape ``(..., 6)``).

    Returns ``(basis, omega1, omega2, A)`` with shapes ``(..., 6, 4)``,
    ``(..., 4, 4)`` x 3.  ``A`` is NaN where omega1 is singular.
    """
    x = np.asarray(points, dtype=float)
    C = dist.coefficient_matrix(x)
    pair_idx, chosen = _pivot_choice(C, pivot)
    scale = np.einsum("...ij,...ij->...", C, C)
    bad = chosen <= 1e-12 * np.maximum(scale, 1e-300)
    if np.any(bad):
        where = np.argwhere(np.atleast_1d(bad))[0]
        raise DegenerateDistributionError(f"alpha1, alpha2 are dependent at sample {tuple(where)}")

    flat_C = C.reshape(-1, 2, DIM)
    flat_pair = pair_idx.reshape(-1)
    N = np.zeros((flat_C.shape[0], DIM, RANK))
    for k in np.unique(flat_pair):
        sel = flat_pair == k
        piv = list(_PAIRS[k])
        free = [c for c in range(DIM) if c not in piv]
        Cp = flat_C[sel][:, :, piv]
        Cf = flat_C[sel][:, :, free]
        block = -np.linalg.solve(Cp, Cf)
        sub = np.zeros((int(sel.sum()), DIM, RANK))
        sub[:, free, :] = np.eye(RANK)
        sub[:, piv, :] = block
        N[sel] = sub
    Q, R = np.linalg.qr(N)
    signs = np.sign(np.diagonal(R, axis1=-2, axis2=-1))
    signs[signs == 0] = 1.0
    basis = (Q * signs[:, None, :]).reshape(x.shape[:-1] + (DIM, RANK))

    W = dist.exterior_matrices(x)
    Bt = np.swapaxes(basis, -1, -2)
    omega1 = Bt @ W[..., 0, :, :] @ basis
    omega2 = Bt @ W[..., 1, :, :] @ basis
    A = _connecting(omega1, omega2)
    return basis, omega1, omega2, A


def _connecting(omega1: Array, omega2: Array) -> Array:
    A = np.full(omega1.shape, np.nan)
    det = np.linalg.det(omega1)
    ok = np.abs(det) > 1e-14 * np.maximum(1.0, np.linalg.norm(omega1, axis=(-2, -1))) ** 4
    if np.any(ok):
        A[ok] = np.linalg.solve(omega1[ok], omega2[ok])
    return A


def kernel_basis(dist: CorankTwoDistribution, x, pivot: str = "reeb") -> DistributionFrame:
    x = np.asarray(x, dtype=float)
    basis, o1, o2, A = kernel_frames(dist, x, pivot)
    return DistributionFrame(point=x.copy(), basis=basis, omega1=o1, omega2=o2, A=A)


def exterior_derivative(form: DifferentialOneForm, x, u, v) -> float:
    """``d alpha_x(u, v)``."""
    W = form.exterior_matrix(np.asarray(x, dtype=float))
    return float(np.asarray(u, dtype=float) @ W @ np.asarray(v, dtype=float))


# ---------------------------------------------------------------------------
# fatness


@dataclass
class FatnessReport:
    fat: bool
    det_omega1: float
    det_omega2: float
    eigenvalues: Array
    reasons: list = field(default_factory=list)

    def __bool__(self):
        return self.fat


def is_fat_at(dist: CorankTwoDistribution, x, tol: float = 1e-8, pivot: str = "reeb") -> FatnessReport:
    """Fatness through nondegeneracy of omega_i and the spectrum of A."""
    frame = kernel_basis(dist, x, pivot)
    reasons = []
    dets = []
    for name, om in (("omega1", frame.omega1), ("omega2", frame.omega2)):
        d = float(np.linalg.det(om))
        dets.append(d)
        if abs(d) <= tol * max(1.0, np.linalg.norm(om)) ** 4:
            reasons.append(f"{name} degenerate (det={d:.3e})")
    if np.all(np.isfinite(frame.A)):
        eig = np.linalg.eigvals(frame.A)
        bound = tol * max(1.0, float(np.max(np.abs(eig))))
        real = eig[np.abs(eig.imag) <= bound]
        if real.size:
            reasons.append(f"A has real eigenvalue(s) {np.sort(real.real)}")
    else:
        eig = np.full(RANK, np.nan + 0j)
    return FatnessReport(not reasons, dets[0], dets[1], eig, reasons)


def _in_distribution(dist, x, v, tol=1e-8) -> None:
    C = dist.coefficient_matrix(x)
    resid = np.abs(C @ v)
    if np.max(resid) > tol * max(1.0, np.linalg.norm(C)) * np.linalg.norm(v):
        raise DomainError(f"vector is not in D (|alpha(v)| = {np.max(resid):.3e})")


def fatness_via_phi(dist: CorankTwoDistribution, x, v, tol: float = 1e-8, pivot: str = "reeb") -> bool:
    """Surjectivity of ``u -> (omega1(v, u), omega2(v, u))`` for a unit ``v`` in D."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.linalg.norm(v) == 0:
        raise DomainError("v must be nonzero")
    _in_distribution(dist, x, v)
    frame = kernel_basis(dist, x, pivot)
    c = frame.to_frame(v / np.linalg.norm(v))
    phi = np.stack([c @ frame.omega1, c @ frame.omega2])
    return bool(np.linalg.svd(phi, compute_uv=False)[-1] > tol)


# ---------------------------------------------------------------------------
# Reeb directions


@dataclass
class ReebReport:
    residuals: dict
    passed: dict
    dalpha_z1z2: tuple

    @property
    def ok(self) -> bool:
        return all(self.passed.values())


def check_reeb_directions(dist: CorankTwoDistribution, x, tol: float = 1e-8, pivot: str = "reeb") -> ReebReport:
    if not dist.has_reeb:
        raise ConfigurationError(f"distribution {dist.label!r} has no Reeb fields")
    x = np.asarray(x, dtype=float)
    Z = dist.reeb_fields(x)
    C = dist.coefficient_matrix(x)
    pairing = C @ Z  # pairing[i, j] = alpha_i(Z_j)
    frame = kernel_basis(dist, x, pivot)
    W = dist.exterior_matrices(x)
    contr = [Z[:, i] @ W[j] @ frame.basis for i in range(2) for j in range(2)]
    J1 = dist.reeb1.jacobian(x)
    J2 = dist.reeb2.jacobian(x)
    bracket = J2 @ Z[:, 0] - J1 @ Z[:, 1]
    residuals = {
        "a": float(max(abs(pairing[0, 0] - 1.0), abs(pairing[0, 1]))),
        "b": float(max(abs(pairing[1, 0]), abs(pairing[1, 1] - 1.0))),
        "c": float(max(np.max(np.abs(c)) for c in contr)),
        "d": float(np.max(np.abs(bracket))),
    }
    passed = {k: r <= tol for k, r in residuals.items()}
    dz = (float(Z[:, 0] @ W[0] @ Z[:, 1]), float(Z[:, 0] @ W[1] @ Z[:, 1]))
    return ReebReport(residuals, passed, dz)


# ---------------------------------------------------------------------------
# linear algebra on D_x


def symplectic_complement(frame: DistributionFrame, V, i: int, tol: float = 1e-10) -> Array:
    """Orthonormal basis (columns, ambient coordinates) of ``V^{perp_i}``."""
    if i not in (1, 2):
        raise DomainError("i must be 1 or 2")
    V = np.atleast_2d(np.asarray(V, dtype=float))
    if V.shape[0] != DIM:
        V = V.T
    coords = frame.to_frame(V)
    if np.linalg.norm(frame.basis @ coords - V) > 1e-8 * max(1.0, np.linalg.norm(V)):
        raise DomainError("V is not contained in D_x")
    sv = np.linalg.svd(coords, compute_uv=False)
    if V.shape[1] > RANK or sv[-1] <= tol * max(1.0, sv[0]):
        raise DomainError("V is linearly dependent")
    omega = frame.omega1 if i == 1 else frame.omega2
    null = scipy.linalg.null_space(coords.T @ omega, rcond=tol)
    return frame.basis @ null


def compatible_acs(frame: DistributionFrame, tol: float = 1e-12) -> Array:
    """Polar almost complex structure ``J = K (-K^2)^{-1/2}`` in frame coordinates.

    ``K`` is the matrix of ``u -> iota_u omega1`` in the orthonormal basis, so
    ``omega1(u, v) = <K u, v>`` and ``omega1(u, J u) > 0``.
    """
    K = frame.omega1.T
    if abs(np.linalg.det(K)) <= tol * max(1.0, np.linalg.norm(K)) ** 4:
        raise DegeneracyError("omega1 is degenerate; no compatible J")
    w, U = np.linalg.eigh(-(K @ K))
    inv_sqrt = (U / np.sqrt(w)) @ U.T
    return K @ inv_sqrt


def compatible_acs_batch(omega1: Array) -> Array:
    K = np.swapaxes(omega1, -1, -2)
    w, U = np.linalg.eigh(-(K @ K))
    inv_sqrt = (U / np.sqrt(w)[..., None, :]) @ np.swapaxes(U, -1, -2)
    return K @ inv_sqrt


def bracket_step_two(dist: CorankTwoDistribution, x, tol: float = 1e-6, pivot: str = "reeb",
                     fd_step: float = 1e-5) -> bool:
    """Whether ``D_x + span [V_i, V_j]_x`` is all of R^6 for the kernel frame fields."""
    x = np.asarray(x, dtype=float)

    def frame_fields(pts):
        return kernel_frames(dist, pts, pivot)[0]

    B = frame_fields(x)
    h = _fd_steps(x, fd_step)
    dB = np.empty((DIM, DIM, RANK))  # dB[i] = d_i B
    for i in range(DIM):
        e = np.zeros(DIM)
        e[i] = h[i]
        dB[i] = (frame_fields(x + e) - frame_fields(x - e)) / (2 * h[i])
    # DV_k[j, i] = d_i (V_k)_j
    DV = np.transpose(dB, (2, 1, 0))
    brackets = [DV[b] @ B[:, a] - DV[a] @ B[:, b] for a, b in itertools.combinations(range(RANK), 2)]
    M = np.column_stack([B] + brackets)
    sv = np.linalg.svd(M, compute_uv=False)
    return bool(sv[DIM - 1] > tol * sv[0])


# ---------------------------------------------------------------------------
# model distributions


def _model_coeff1(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape)
    out[..., 0] = -x[..., 2]
    out[..., 1] = x[..., 3]
    out[..., 4] = 1.0
    return out


def _model_coeff2(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape)
    out[..., 0] = -x[..., 3]
    out[..., 1] = -x[..., 2]
    out[..., 5] = 1.0
    return out


def _const_skew(entries):
    W = np.zeros((DIM, DIM))
    for (i, j), val in entries.items():
        W[i, j] = val
        W[j, i] = -val

    def dcoeff(x):
        return np.broadcast_to(W, np.shape(x)[:-1] + (DIM, DIM)).copy()

    return dcoeff


def holomorphic_contact_model() -> CorankTwoDistribution:
    """Real and imaginary parts of ``dz - y dx`` on C^3 = R^6.

    ``alpha1 = dz1 - (y1 dx1 - y2 dx2)``, ``alpha2 = dz2 - (y2 dx1 + y1 dx2)``,
    Reeb fields ``d/dz1`` and ``d/dz2``.
    """
    a1 = DifferentialOneForm(_model_coeff1, _const_skew({(0, 2): 1.0, (1, 3): -1.0}))
    a2 = DifferentialOneForm(_model_coeff2, _const_skew({(0, 3): 1.0, (1, 2): 1.0}))
    return CorankTwoDistribution(
        a1, a2, constant_field(np.eye(DIM)[4]), constant_field(np.eye(DIM)[5]),
        label="holomorphic_contact",
    )


def integrable_example() -> CorankTwoDistribution:
    """``ker dz1 ∩ ker dz2``: flat, the standard non-fat counterexample."""
    return CorankTwoDistribution(
        constant_form(np.eye(DIM)[4]), constant_form(np.eye(DIM)[5]),
        constant_field(np.eye(DIM)[4]), constant_field(np.eye(DIM)[5]),
        label="integrable",
    )


def heisenberg_structure_constants() -> Array:
    """Antisymmetric structure constants (shape 2x4x4) of the model's linear part."""
    W = holomorphic_contact_model().exterior_matrices(np.zeros(DIM))
    return -0.5 * W[:, :RANK, :RANK]


def from_structure_constants(gamma, g: Optional[Callable] = None, label: str = "normal_form",
                             fd_step: float = 1e-5) -> CorankTwoDistribution:
    """``alpha_i = dz_i - sum Gamma^i_jk x_j dx_k + sum g_ij(x) dx_j`` on R^6.

    ``gamma`` has shape ``(2, 4, 4)`` or ``(2, 6, 6)`` (the latter must vanish
    on the z indices).  ``g`` maps ``(..., 4)`` to ``(..., 2, 4)`` and must only
    depend on the x coordinates.
    """
    G = np.asarray(gamma, dtype=float)
    if G.shape == (2, DIM, DIM):
        if np.any(G[:, RANK:, :]) or np.any(G[:, :, RANK:]):
            raise DomainError("structure constants must vanish on the z indices")
        G = G[:, :RANK, :RANK]
    if G.shape != (2, RANK, RANK):
        raise DomainError(f"structure constants must have shape (2, 4, 4), got {G.shape}")
    if not np.allclose(G, -np.swapaxes(G, 1, 2), atol=1e-12):
        raise DomainError("structure constants must satisfy Gamma^i_jk = -Gamma^i_kj")

    def make(i):
        def coeff(x):
            x = np.asarray(x, dtype=float)
            out = np.zeros(x.shape)
            out[..., :RANK] = -np.einsum("...j,jk->...k", x[..., :RANK], G[i])
            if g is not None:
                out[..., :RANK] += np.asarray(g(x[..., :RANK]), dtype=float)[..., i, :]
            out[..., RANK + i] = 1.0
            return out

        if g is None:
            W = np.zeros((DIM, DIM))
            W[:RANK, :RANK] = -G[i] + G[i].T

            def dcoeff(x):
                return np.broadcast_to(W, np.shape(x)[:-1] + (DIM, DIM)).copy()

            return DifferentialOneForm(coeff, dcoeff, fd_step)
        return DifferentialOneForm(coeff, None, fd_step)

    return CorankTwoDistribution(
        make(0), make(1), constant_field(np.eye(DIM)[4]), constant_field(np.eye(DIM)[5]), label=label
    )


# ---------------------------------------------------------------------------
# numeric type constraints


def radon_hurwitz(k: int) -> int:
    """``rho(k)`` for ``k = 2^(4a+b) * odd``: ``8a + 2^b``."""
    if k < 1:
        raise DomainError("k must be positive")
    c = 0
    while k % 2 == 0:
        k //= 2
        c += 1
    a, b = divmod(c, 4)
    return 8 * a + 2 ** b


@dataclass
class TypeReport:
    k: int
    n: int
    checks: dict
    reasons: list

    @property
    def admissible(self) -> bool:
        return all(self.checks.values())


def check_type_constraints(k: int, n: int) -> TypeReport:
    """Necessary numeric conditions for a fat distribution of rank k in dimension n."""
    if not 0 < k < n:
        raise DomainError("need 0 < k < n")
    p = n - k
    checks = {}
    reasons = []
    even = k % 2 == 0
    div4 = k % 4 == 0 if k < n - 1 else True
    checks["divisibility"] = even and div4
    if not even:
        reasons.append(f"divisibility: rank {k} is not divisible by 2")
    elif not div4:
        reasons.append(f"divisibility: rank {k} is not divisible by 4 (required since k < n - 1 = {n - 1})")
    checks["rank_bound"] = k >= p + 1
    if not checks["rank_bound"]:
        reasons.append(f"rank_bound: k = {k} < (n - k) + 1 = {p + 1}")
    fields = radon_hurwitz(k) - 1
    checks["sphere_fields"] = fields >= p
    if not checks["sphere_fields"]:
        reasons.append(f"sphere_fields: S^{k - 1} admits only {fields} independent fields, need {p}")
    return TypeReport(k, n, checks, reasons)
