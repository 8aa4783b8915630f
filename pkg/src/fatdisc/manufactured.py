"""Manufactured sections along analytic maps, for convergence studies of the right inverse."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .geometry import CorankTwoDistribution, compatible_acs_batch, kernel_frames
from .linearized import BoundaryData, project_to_distribution
from .mesh import DiscMesh, OneFormField

Scalar = Callable[[np.ndarray], np.ndarray]


def central_jacobian(func, points, step: float = 1e-6) -> np.ndarray:
    """``(N, 6, 2)`` jacobian of a map of the disc by central differences."""
    p = np.asarray(points, dtype=float)
    cols = []
    for k in range(2):
        e = np.zeros(2)
        e[k] = step
        cols.append((np.asarray(func(p + e)) - np.asarray(func(p - e))) / (2 * step))
    return np.stack(cols, axis=-1)


@dataclass(frozen=True)
class ManufacturedSection:
    """``d = d0 + a Z1 + b Z2`` with ``d0 = c1 e1 + c2 e2`` in the auxiliary plane.

    ``e1 = JX + .. X + .. Y`` and ``e2 = JY + .. X + .. Y`` span the solutions
    of ``omega1(d0, JX) = omega1(d0, JY) = 0``.  Each scalar is given with its
    gradient as ``(value, grad)`` callables on ``(N, 2)`` points.
    """

    a: Scalar
    grad_a: Scalar
    b: Scalar
    grad_b: Scalar
    c1: Scalar
    c2: Scalar

    def _frames(self, dist: CorankTwoDistribution, func, points):
        img = np.asarray(func(points), dtype=float)
        jac = central_jacobian(func, points)
        basis, o1, o2, _ = kernel_frames(dist, img)
        X, _ = project_to_distribution(dist, img, jac[..., 0])
        Y, _ = project_to_distribution(dist, img, jac[..., 1])
        x = np.einsum("nji,nj->ni", basis, X)
        y = np.einsum("nji,nj->ni", basis, Y)
        J = compatible_acs_batch(o1)
        F = np.stack([x, y, np.einsum("nij,nj->ni", J, x), np.einsum("nij,nj->ni", J, y)], axis=2)
        Wf = np.einsum("nki,nkl,nlj->nij", F, o1, F)
        top = np.linalg.solve(np.swapaxes(Wf[:, :2, 2:], 1, 2), -np.swapaxes(Wf[:, 2:, 2:], 1, 2))
        e = np.zeros((len(F), 4, 2))
        e[:, :2] = top
        e[:, 2, 0] = e[:, 3, 1] = 1.0
        c = np.stack([self.c1(points), self.c2(points)], axis=1)
        u = np.einsum("nij,njk,nk->ni", F, e, c)  # kernel coordinates of d0
        return img, basis, o1, o2, x, y, u

    def vectors(self, dist: CorankTwoDistribution, func, points) -> np.ndarray:
        """Exact ambient section at ``points``."""
        img, basis, *_, u = self._frames(dist, func, points)
        Z = dist.reeb_fields(img)
        d0 = np.einsum("nij,nj->ni", basis, u)
        return d0 + Z[:, :, 0] * self.a(points)[:, None] + Z[:, :, 1] * self.b(points)[:, None]

    def data(self, dist: CorankTwoDistribution, func, mesh: DiscMesh):
        """Exact ``(P, Q)`` at element barycenters and boundary data read from the section."""
        pts = mesh.barycenters
        img, basis, o1, o2, x, y, u = self._frames(dist, func, pts)

        def pair(om):
            return np.stack([np.einsum("ni,nij,nj->n", u, om, x), np.einsum("ni,nij,nj->n", u, om, y)], axis=1)

        P = OneFormField(mesh, self.grad_a(pts) + pair(o1))
        Q = OneFormField(mesh, self.grad_b(pts) + pair(o2))
        bdry = BoundaryData.from_nodal(mesh, self.a(mesh.nodes), self.b(mesh.nodes))
        return P, Q, bdry


def smooth_section() -> ManufacturedSection:
    """A fixed smooth section used by convergence tables."""
    return ManufacturedSection(
        a=lambda p: np.sin(p[:, 0] + 0.5) * np.cos(p[:, 1]),
        grad_a=lambda p: np.stack([np.cos(p[:, 0] + 0.5) * np.cos(p[:, 1]),
                                   -np.sin(p[:, 0] + 0.5) * np.sin(p[:, 1])], axis=1),
        b=lambda p: p[:, 0] ** 2 - p[:, 1] ** 2 + 0.3 * p[:, 0] * p[:, 1],
        grad_b=lambda p: np.stack([2 * p[:, 0] + 0.3 * p[:, 1], -2 * p[:, 1] + 0.3 * p[:, 0]], axis=1),
        c1=lambda p: np.cos(p[:, 0] * p[:, 1]),
        c2=lambda p: 0.5 * np.sin(p[:, 0] - p[:, 1]),
    )
