import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import legendrian_map, mesh_at
from fatdisc.errors import CapabilityError, DomainError, ParseError
from fatdisc.fixtures import constant_disc, inclusion_disc
from fatdisc.mesh import (
    MeshMap,
    OneFormField,
    build_disc_mesh,
    graded_norm,
    interpolate_map,
    load_map_csv,
    load_map_json,
    pullback,
    save_map_csv,
    save_map_json,
)


@pytest.mark.parametrize("res", [2, 3, 5, 8, 16, 33])
def test_mesh_invariants(res):
    m = build_disc_mesh(res)
    assert m.check() == []
    assert m.n_nodes >= 5
    assert np.all(np.linalg.norm(m.nodes, axis=1) <= 1 + 1e-12)
    # total area approaches pi from below (inscribed polygon)
    assert 0.8 * math.pi < m.areas.sum() <= math.pi


def test_mesh_refinement_halves_h():
    for res in (4, 8, 16, 32):
        ratio = build_disc_mesh(res).h / build_disc_mesh(2 * res).h
        assert 2 / 1.5 <= ratio <= 2 * 1.5


def test_boundary_nodes_grow_linearly():
    counts = np.array([len(build_disc_mesh(r).boundary_nodes) for r in (8, 16, 32, 64)])
    per_res = counts / np.array([8, 16, 32, 64])
    assert np.ptp(per_res) < 0.5


def test_mesh_is_deterministic():
    a, b = build_disc_mesh(12), build_disc_mesh(12)
    assert np.array_equal(a.nodes, b.nodes) and np.array_equal(a.elements, b.elements)


def test_resolution_below_two_rejected():
    with pytest.raises(DomainError):
        build_disc_mesh(1)


def test_jacobian_is_exact_for_affine_maps(rng):
    m = mesh_at(8)
    L = rng.normal(size=(6, 2))
    c = rng.normal(size=6)
    f = MeshMap.from_function(m, lambda p: p @ L.T + c)
    assert np.allclose(f.jac, L[None], atol=1e-12)


# ---------------------------------------------------------------------------
# pullbacks


def test_constant_map_pulls_back_to_zero(model):
    f = MeshMap.from_function(mesh_at(8), lambda p: constant_disc(p) + 0.3)
    for which in (1, 2):
        assert pullback(model, f, which).sup() == 0.0


def test_legendrian_and_inclusion_pullbacks_vanish(model):
    for f in (legendrian_map(16), MeshMap.from_function(mesh_at(16), inclusion_disc)):
        for which in (1, 2):
            assert pullback(model, f, which).sup() < 1e-10


def _analytic_pullback(model, func, jac, pts):
    vals = func(pts)
    out = []
    for form in (model.alpha1, model.alpha2):
        coef = form.coefficients(vals)
        out.append(np.einsum("ei,eij->ej", coef, jac(pts)))
    return out


def test_pullback_converges_to_analytic_pullback(model):
    def func(p):
        x, y = p[..., 0], p[..., 1]
        return np.stack([x + 0.1 * y ** 2, y, np.sin(x), x * y, 0.3 * np.cos(y), x ** 3], axis=-1)

    def jac(p):
        x, y = p[:, 0], p[:, 1]
        z, o = np.zeros_like(x), np.ones_like(x)
        return np.stack([
            np.stack([o, 0.2 * y], -1), np.stack([z, o], -1), np.stack([np.cos(x), z], -1),
            np.stack([y, x], -1), np.stack([z, -0.3 * np.sin(y)], -1), np.stack([3 * x ** 2, z], -1),
        ], axis=1)

    errs = []
    for res in (8, 16, 32):
        m = mesh_at(res)
        f = MeshMap.from_function(m, func)
        exact = _analytic_pullback(model, func, jac, m.barycenters)
        errs.append(max(np.max(np.abs(pullback(model, f, k + 1).values - exact[k])) for k in range(2)))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 0.8), (errs, orders)


def test_pullback_rejects_bad_index(model):
    with pytest.raises(DomainError):
        pullback(model, legendrian_map(4), 3)


# ---------------------------------------------------------------------------
# graded norms


@pytest.mark.parametrize("n", [0, 1, 2, 3])
def test_graded_norm_of_constant(n):
    m = mesh_at(8)
    assert graded_norm(np.full(m.n_nodes, -2.5), n, m) == pytest.approx(2.5, abs=1e-9)


def test_graded_norm_of_coordinate():
    m = mesh_at(16)
    x = m.nodes[:, 0]
    assert graded_norm(x, 0, m) == pytest.approx(1.0)
    assert graded_norm(x, 1, m) >= 1.0 - 1e-12
    # derivative of x is 1; the fit reproduces it exactly
    assert graded_norm(0.5 * x, 1, m) == pytest.approx(0.5, abs=1e-9)


def test_graded_norm_monotone_on_random_fields(rng):
    m = mesh_at(12)
    x, y = m.nodes[:, 0], m.nodes[:, 1]
    for _ in range(100):
        a = rng.normal(size=6)
        u = a[0] + a[1] * np.sin(a[2] * x + y) + a[3] * np.cos(a[4] * y) * x + a[5] * x * y ** 2
        norms = [graded_norm(u, n, m) for n in range(4)]
        assert all(n0 <= n1 for n0, n1 in zip(norms, norms[1:]))


def test_graded_norm_elementwise_and_region():
    m = mesh_at(16)
    b = m.barycenters
    fld = OneFormField(m, np.stack([b[:, 0], 2 * b[:, 1]], axis=1))
    assert graded_norm(fld, 0) == pytest.approx(np.max(np.abs(fld.values)))
    assert graded_norm(fld, 0, region=((0, 0), 0.25)) <= 0.5 + 1e-12
    assert graded_norm(fld, 1) == pytest.approx(2.0, rel=0.05)


def test_graded_norm_capability_and_domain():
    m = mesh_at(8)
    with pytest.raises(CapabilityError):
        graded_norm(np.zeros(m.n_nodes), 4, m)
    with pytest.raises(DomainError):
        graded_norm(np.zeros(m.n_nodes), -1, m)
    with pytest.raises(DomainError):
        graded_norm(np.zeros(7), 0, m)


@settings(max_examples=25, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5))
def test_graded_norm_of_affine_field(c, a, b):
    m = mesh_at(8)
    u = c + a * m.nodes[:, 0] + b * m.nodes[:, 1]
    n1 = graded_norm(u, 1, m)
    assert n1 >= max(abs(a), abs(b)) - 1e-8
    assert n1 == pytest.approx(max(graded_norm(u, 0, m), abs(a), abs(b)), abs=1e-8)


# ---------------------------------------------------------------------------
# import / export


def test_map_csv_and_json_round_trip(tmp_path):
    f = legendrian_map(8, (0, 1j, 0.5))
    save_map_csv(f, tmp_path / "f.csv")
    g = load_map_csv(tmp_path / "f.csv", f.mesh)
    assert np.array_equal(f.values, g.values)
    save_map_json(f, tmp_path / "f.json")
    h = load_map_json(tmp_path / "f.json")
    assert np.array_equal(f.values, h.values)
    assert np.array_equal(f.mesh.elements, h.mesh.elements)


def test_map_csv_errors_have_line_numbers(tmp_path):
    f = legendrian_map(4)
    p = tmp_path / "f.csv"
    save_map_csv(f, p)
    lines = p.read_text().splitlines()
    lines[3] = lines[3].replace(",", ",oops", 1)
    p.write_text("\n".join(lines) + "\n")
    with pytest.raises(ParseError) as exc:
        load_map_csv(p, f.mesh)
    assert exc.value.location.endswith(":4")


def test_interpolation_reproduces_affine_map(rng):
    m = mesh_at(8)
    L = rng.normal(size=(6, 2))
    f = MeshMap.from_function(m, lambda p: p @ L.T)
    pts = rng.uniform(-0.5, 0.5, size=(20, 2))
    assert np.allclose(interpolate_map(f, pts), pts @ L.T, atol=1e-12)
