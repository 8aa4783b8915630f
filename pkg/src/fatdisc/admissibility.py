"""Tangent splitting along a mesh map, the coefficients of A on im df, and admissibility."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, FrameError
from .geometry import CorankTwoDistribution, compatible_acs_batch, kernel_frames
from .mesh import MeshMap

COND_LIMIT = 1e8


@dataclass(frozen=True, eq=False)
class TangentSplit:
    """``f_* d_x = X + a1 Z1 + a2 Z2`` and ``f_* d_y = Y + b1 Z1 + b2 Z2`` per element."""

    points: np.ndarray  # (Ne, 6) barycenter images
    basis: np.ndarray  # (Ne, 6, 4) orthonormal kernel bases
    omega1: np.ndarray
    omega2: np.ndarray
    A: np.ndarray
    Z: np.ndarray  # (Ne, 6, 2)
    X: np.ndarray  # (Ne, 6)
    Y: np.ndarray
    a: np.ndarray  # (Ne, 2) = (a1, a2)
    b: np.ndarray  # (Ne, 2) = (b1, b2)


def split_tangents(dist: CorankTwoDistribution, f: MeshMap, pivot: str = "reeb") -> TangentSplit:
    if not dist.has_reeb:
        raise ConfigurationError(f"distribution {dist.label!r} has no Reeb fields")
    pts = f.barycenter_values()
    basis, o1, o2, A = kernel_frames(dist, pts, pivot)
    Z = dist.reeb_fields(pts)
    M = np.concatenate([basis, Z], axis=2)
    c = np.linalg.solve(M, f.jac)  # (Ne, 6, 2)
    X = np.einsum("eij,ej->ei", basis, c[:, :4, 0])
    Y = np.einsum("eij,ej->ei", basis, c[:, :4, 1])
    return TangentSplit(pts, basis, o1, o2, A, Z, X, Y, c[:, 4:, 0], c[:, 4:, 1])


@dataclass(frozen=True, eq=False)
class EllipticCoefficients:
    """``AX = pX + qY + p'JX + q'JY``, ``AY = rX + sY + r'JX + s'JY`` per element.

    ``frame`` holds the columns ``(x, y, Jx, Jy)`` in orthonormal kernel
    coordinates; ``J`` is the polar almost complex structure of omega1.
    """

    p: np.ndarray
    q: np.ndarray
    r: np.ndarray
    s: np.ndarray
    p_prime: np.ndarray
    q_prime: np.ndarray
    r_prime: np.ndarray
    s_prime: np.ndarray
    frame: np.ndarray
    J: np.ndarray
    cond: np.ndarray
    split: TangentSplit

    @property
    def discriminant(self) -> np.ndarray:
        return (self.p - self.s) ** 2 + 4.0 * self.q * self.r

    @property
    def block(self) -> np.ndarray:
        """``[[p, q], [r, s]]`` per element, shape (Ne, 2, 2)."""
        return np.stack([np.stack([self.p, self.q], -1), np.stack([self.r, self.s], -1)], -2)

    def frame_vectors(self) -> np.ndarray:
        """Ambient frame ``(X, Y, JX, JY)`` as columns, shape (Ne, 6, 4)."""
        return self.split.basis @ self.frame

    def residual(self) -> np.ndarray:
        """``|AX - (pX + qY + p'JX + q'JY)|`` and the same for Y, per element."""
        A = self.split.A
        F = self.frame
        cX = np.stack([self.p, self.q, self.p_prime, self.q_prime], -1)
        cY = np.stack([self.r, self.s, self.r_prime, self.s_prime], -1)
        rX = np.einsum("eij,ej->ei", A, F[:, :, 0]) - np.einsum("eij,ej->ei", F, cX)
        rY = np.einsum("eij,ej->ei", A, F[:, :, 1]) - np.einsum("eij,ej->ei", F, cY)
        return np.maximum(np.linalg.norm(rX, axis=1), np.linalg.norm(rY, axis=1))


def coefficients_from_split(split: TangentSplit, strict: bool = True,
                            cond_limit: float = COND_LIMIT) -> EllipticCoefficients:
    x = np.einsum("eji,ej->ei", split.basis, split.X)
    y = np.einsum("eji,ej->ei", split.basis, split.Y)
    J = compatible_acs_batch(split.omega1)
    Jx = np.einsum("eij,ej->ei", J, x)
    Jy = np.einsum("eij,ej->ei", J, y)
    F = np.stack([x, y, Jx, Jy], axis=2)
    cond = np.linalg.cond(F)
    cond[~np.isfinite(cond)] = np.inf
    bad = cond > cond_limit
    if strict and np.any(bad):
        idx = np.flatnonzero(bad)
        raise FrameError(
            f"frame (X, Y, JX, JY) ill-conditioned on {idx.size} element(s), first {idx[:10].tolist()}", idx
        )
    Ax = np.einsum("eij,ej->ei", split.A, x)
    Ay = np.einsum("eij,ej->ei", split.A, y)
    rhs = np.stack([Ax, Ay], axis=2)
    coef = np.full((len(F), 4, 2), np.nan)
    good = ~bad & (cond < 1e14) & np.all(np.isfinite(split.A), axis=(1, 2))
    if np.any(good):
        coef[good] = np.linalg.solve(F[good], rhs[good])
    return EllipticCoefficients(
        p=coef[:, 0, 0], q=coef[:, 1, 0], r=coef[:, 0, 1], s=coef[:, 1, 1],
        p_prime=coef[:, 2, 0], q_prime=coef[:, 3, 0], r_prime=coef[:, 2, 1], s_prime=coef[:, 3, 1],
        frame=F, J=J, cond=cond, split=split,
    )


def coefficient_fields(dist: CorankTwoDistribution, f: MeshMap, strict: bool = True,
                       pivot: str = "reeb") -> EllipticCoefficients:
    return coefficients_from_split(split_tangents(dist, f, pivot), strict=strict)


def _min_singular(M: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(M, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return np.linalg.svd(M / norms, compute_uv=False)[:, -1]


@dataclass(frozen=True, eq=False)
class AdmissibilityReport:
    immersion: np.ndarray
    transverse: np.ndarray
    totally_real: np.ndarray
    elliptic: np.ndarray
    sigma_min: np.ndarray
    transversality: np.ndarray
    real_margin: np.ndarray
    discriminant: np.ndarray
    tol: float

    @property
    def passed(self) -> np.ndarray:
        return self.immersion & self.transverse & self.totally_real & self.elliptic

    @property
    def admissible(self) -> bool:
        return bool(np.all(self.passed))

    def failing_elements(self) -> np.ndarray:
        return np.flatnonzero(~self.passed)

    def summary(self) -> dict:
        disc = self.discriminant[np.isfinite(self.discriminant)]
        return {
            "admissible": self.admissible,
            "tol": self.tol,
            "n_elements": int(self.passed.size),
            "failures": {
                "immersion": int(np.sum(~self.immersion)),
                "transverse": int(np.sum(~self.transverse)),
                "totally_real": int(np.sum(~self.totally_real)),
                "elliptic": int(np.sum(~self.elliptic)),
            },
            "first_failing_element": int(self.failing_elements()[0]) if not self.admissible else None,
            "discriminant_range": [float(disc.min()), float(disc.max())] if disc.size else None,
            "min_singular_value": float(np.min(self.sigma_min)),
        }


def admissibility_check(dist: CorankTwoDistribution, f: MeshMap, tol: float = 1e-8,
                        pivot: str = "reeb") -> AdmissibilityReport:
    """Per-element immersion, transversality, total reality and ellipticity flags."""
    if not dist.has_reeb:
        raise ConfigurationError(f"distribution {dist.label!r} has no Reeb fields")
    split = split_tangents(dist, f, pivot)
    sigma = np.linalg.svd(f.jac, compute_uv=False)[:, -1]
    trans = _min_singular(np.concatenate([f.jac, split.Z], axis=2))
    coeffs = coefficients_from_split(split, strict=False, cond_limit=np.inf)
    real_margin = _min_singular(coeffs.frame)
    disc = coeffs.discriminant
    elliptic = np.isfinite(disc) & (disc < -tol)
    return AdmissibilityReport(
        immersion=sigma > tol,
        transverse=trans > tol,
        totally_real=real_margin > tol,
        elliptic=elliptic,
        sigma_min=sigma,
        transversality=trans,
        real_margin=real_margin,
        discriminant=disc,
        tol=tol,
    )
