import dataclasses

import numpy as np
import pytest

from conftest import legendrian_map, mesh_at
from fatdisc.admissibility import (
    admissibility_check,
    coefficient_fields,
    coefficients_from_split,
    split_tangents,
)
from fatdisc.errors import ConfigurationError, FrameError
from fatdisc.fixtures import bump, constant_disc, degenerate_disc, legendrian_disc, y_plane_disc
from fatdisc.geometry import CorankTwoDistribution
from fatdisc.mesh import MeshMap


def x1y1_plane(p):
    out = np.zeros(p.shape[:-1] + (6,))
    out[..., 0] = p[..., 0]
    out[..., 2] = p[..., 1]
    return out


def test_split_reproduces_jacobian_and_lies_in_distribution(model):
    f = legendrian_map(16, (0, 1j, 0.5, 0.2))
    sp = split_tangents(model, f)
    Z = sp.Z
    recon_x = sp.X + np.einsum("eij,ej->ei", Z, sp.a)
    recon_y = sp.Y + np.einsum("eij,ej->ei", Z, sp.b)
    assert np.allclose(recon_x, f.jac[:, :, 0], atol=1e-12)
    assert np.allclose(recon_y, f.jac[:, :, 1], atol=1e-12)
    C = model.coefficient_matrix(sp.points)
    assert np.max(np.abs(np.einsum("eki,ei->ek", C, sp.X))) < 1e-12
    assert np.max(np.abs(np.einsum("eki,ei->ek", C, sp.Y))) < 1e-12


def test_legendrian_disc_coefficients_and_discriminant(model):
    f = legendrian_map(16)
    co = coefficient_fields(model, f)
    assert np.allclose(co.p, 0, atol=1e-10) and np.allclose(co.s, 0, atol=1e-10)
    assert np.allclose(co.q, -1, atol=1e-10) and np.allclose(co.r, 1, atol=1e-10)
    assert np.allclose(co.discriminant, -4, atol=1e-9)
    assert np.max(co.residual()) < 1e-9
    rep = admissibility_check(model, f)
    assert rep.admissible
    assert rep.summary()["discriminant_range"] == pytest.approx([-4, -4], abs=1e-9)


def test_discriminant_oracle_by_direct_linear_algebra(model):
    """AX = -Y and AY = X for the graph of a holomorphic jet: solve in the ambient frame."""
    f = legendrian_map(8, (0.1, 0.3, 1j))
    sp = split_tangents(model, f)
    A6 = np.einsum("eij,ejk,elk->eil", sp.basis, sp.A, sp.basis)  # A in ambient coordinates on D
    AX = np.einsum("eij,ej->ei", A6, sp.X)
    AY = np.einsum("eij,ej->ei", A6, sp.Y)
    assert np.allclose(AX, -sp.Y, atol=1e-10)
    assert np.allclose(AY, sp.X, atol=1e-10)


def test_horizontal_immersions_have_no_transverse_terms(model):
    # quadratic h: the piecewise-linear map is exactly horizontal on every element
    for coeffs in [(0, 0, 1), (0, 1j, 0.5), (0.3, -1, 0.5j)]:
        co = coefficient_fields(model, legendrian_map(16, coeffs))
        for v in (co.p_prime, co.q_prime, co.r_prime, co.s_prime):
            assert np.max(np.abs(v)) < 1e-8


def test_transverse_terms_vanish_at_first_order_for_higher_degree(model):
    # cubic and quartic h are horizontal only up to interpolation error
    coeffs = (0.2, -0.4, 0.3, 0.1j, 0.05)
    errs = []
    for res in (8, 16, 32):
        co = coefficient_fields(model, legendrian_map(res, coeffs))
        errs.append(max(np.max(np.abs(v)) for v in (co.p_prime, co.q_prime, co.r_prime, co.s_prime)))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 0.9), errs


def test_discriminant_invariant_under_rescaling(model):
    f = MeshMap.from_function(mesh_at(8), lambda p: legendrian_disc()(p) + 0.05 * bump(p)[..., None] * np.eye(6)[3])
    sp = split_tangents(model, f)
    base = coefficients_from_split(sp)
    scaled = coefficients_from_split(dataclasses.replace(sp, X=2 * sp.X))
    assert np.array_equal(np.sign(base.discriminant), np.sign(scaled.discriminant))
    assert np.allclose(base.discriminant, scaled.discriminant, rtol=1e-9)
    assert np.allclose(scaled.q, 2 * base.q) and np.allclose(scaled.r, base.r / 2)


def test_constant_map_fails_immersion(model):
    rep = admissibility_check(model, MeshMap.from_function(mesh_at(8), constant_disc))
    assert not rep.admissible
    assert not rep.immersion.any()


def test_y_plane_is_immersed_transverse_and_reported(model):
    rep = admissibility_check(model, MeshMap.from_function(mesh_at(8), y_plane_disc))
    assert rep.immersion.all() and rep.transverse.all()
    s = rep.summary()
    assert set(s["failures"]) == {"immersion", "transverse", "totally_real", "elliptic"}
    assert len(rep.discriminant) == mesh_at(8).n_elements


def test_degenerate_disc_fails_only_ellipticity(model):
    rep = admissibility_check(model, MeshMap.from_function(mesh_at(8), degenerate_disc))
    assert rep.immersion.all() and rep.transverse.all() and rep.totally_real.all()
    assert not rep.elliptic.any()
    assert np.allclose(rep.discriminant, 0, atol=1e-12)


def test_x1y1_plane_is_not_totally_real(model):
    f = MeshMap.from_function(mesh_at(8), x1y1_plane)
    rep = admissibility_check(model, f)
    assert not rep.totally_real.any()
    with pytest.raises(FrameError) as exc:
        coefficient_fields(model, f)
    assert len(exc.value.elements) == mesh_at(8).n_elements


def test_admissibility_is_open(model, rng):
    m = mesh_at(16)
    base = legendrian_map(16)
    for _ in range(5):
        direction = rng.normal(size=6)
        center = rng.uniform(-0.3, 0.3, size=2)
        pert = 1e-4 * bump(m.nodes, center, 0.6)[:, None] * direction[None]
        assert admissibility_check(model, base.displaced(pert)).admissible


def test_missing_reeb_is_configuration_error(model):
    bare = CorankTwoDistribution(model.alpha1, model.alpha2, label="bare")
    with pytest.raises(ConfigurationError):
        admissibility_check(bare, legendrian_map(4))
