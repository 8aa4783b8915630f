"""Analytic test maps: holomorphic Legendrian discs and smooth perturbations."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import DomainError


def legendrian_disc(coeffs: Sequence[complex] = (0, 0, 1)):
    """The 1-jet lift ``w -> (w, h'(w), h(w))`` of ``h(w) = sum c_k w^k``.

    Horizontal for the holomorphic contact model.  The default ``h = w^2``
    gives ``(x, y, 2x, 2y, x^2 - y^2, 2xy)``.
    """
    c = np.asarray(coeffs, dtype=complex)
    if len(c) > 5:
        raise DomainError("fixtures are limited to polynomials of degree <= 4")
    h = np.polynomial.Polynomial(c)
    dh = h.deriv()

    def f(points):
        p = np.asarray(points, dtype=float)
        w = p[..., 0] + 1j * p[..., 1]
        hv, dv = h(w), dh(w)
        return np.stack([w.real, w.imag, dv.real, dv.imag, hv.real, hv.imag], axis=-1)

    return f


def inclusion_disc(points):
    p = np.asarray(points, dtype=float)
    out = np.zeros(p.shape[:-1] + (6,))
    out[..., 0] = p[..., 0]
    out[..., 1] = p[..., 1]
    return out


def y_plane_disc(points):
    """``(x, y) -> (0, 0, x, y, 0, 0)``, tangent to the Y-directions."""
    p = np.asarray(points, dtype=float)
    out = np.zeros(p.shape[:-1] + (6,))
    out[..., 2] = p[..., 0]
    out[..., 3] = p[..., 1]
    return out


def degenerate_disc(points):
    """``(x, y) -> (x, 0, 0, y, 0, 0)``: an immersion transverse to the Reeb plane
    and totally real, but with vanishing discriminant, so not elliptic."""
    p = np.asarray(points, dtype=float)
    out = np.zeros(p.shape[:-1] + (6,))
    out[..., 0] = p[..., 0]
    out[..., 3] = p[..., 1]
    return out


def constant_disc(points):
    p = np.asarray(points, dtype=float)
    return np.zeros(p.shape[:-1] + (6,))


def smooth_step(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1, built from exp(-1/t)."""
    t = np.asarray(t, dtype=float)

    def e(s):
        out = np.zeros_like(s)
        pos = s > 0
        out[pos] = np.exp(-1.0 / s[pos])
        return out

    a, b = e(t), e(1.0 - t)
    return a / (a + b)


def bump(points, center=(0.0, 0.0), radius=1.0):
    """``exp(1 - 1/(1 - r^2))`` on the disc of given radius, 0 outside; value 1 at the center."""
    p = np.asarray(points, dtype=float)
    r2 = np.sum((p - np.asarray(center)) ** 2, axis=-1) / radius ** 2
    out = np.zeros(r2.shape)
    inside = r2 < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - r2[inside]))
    return out


def plateau(points, center=(0.0, 0.0), inner=0.5, outer=1.0):
    """Radial cutoff equal to 1 for ``r <= inner`` and 0 for ``r >= outer``."""
    p = np.asarray(points, dtype=float)
    r = np.linalg.norm(p - np.asarray(center), axis=-1)
    return smooth_step((outer - r) / (outer - inner))


def perturbed(base, amplitude: float, component: int = 4, profile=None):
    """``base + amplitude * profile * e_component``; default profile is a bump of radius 0.7."""
    if profile is None:
        def profile(p):
            return bump(p, radius=0.7)

    def f(points):
        out = np.array(base(points), dtype=float)
        out[..., component] += amplitude * profile(points)
        return out

    return f


def order_defect(base, amplitude: float, order: int, component: int = 4, inner=0.4, outer=0.8):
    """``base + amplitude * |p|^(order+2) * plateau * e_component``.

    The horizontality defect then vanishes to the given order at the origin;
    the plateau keeps the perturbation polynomial near the center.
    """
    def f(points):
        p = np.asarray(points, dtype=float)
        r2 = np.sum(p ** 2, axis=-1)
        out = np.array(base(points), dtype=float)
        out[..., component] += amplitude * r2 ** ((order + 2) / 2.0) * plateau(p, inner=inner, outer=outer)
        return out

    return f


BASE_FIXTURES = ("legendrian", "inclusion", "y_plane", "degenerate", "constant")


def base_fixture(name: str, coeffs: Sequence[complex] = (0, 0, 1)):
    """Look up a base map by name; ``coeffs`` only applies to ``legendrian``."""
    table = {
        "inclusion": inclusion_disc,
        "y_plane": y_plane_disc,
        "degenerate": degenerate_disc,
        "constant": constant_disc,
    }
    if name == "legendrian":
        return legendrian_disc(coeffs)
    if name not in table:
        raise DomainError(f"unknown fixture {name!r}; choose from {', '.join(BASE_FIXTURES)}")
    return table[name]
