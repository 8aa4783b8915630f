import numpy as np
import pytest

from conftest import legendrian_map, mesh_at
from fatdisc.admissibility import admissibility_check
from fatdisc.errors import AdmissibilityError, DomainError, ScaleError, StagnationError
from fatdisc.fixtures import bump, inclusion_disc, legendrian_disc, order_defect, perturbed
from fatdisc.horizontal import (
    SolveOptions,
    homotopy_family,
    horizontality_residual,
    infinitesimal_order,
    make_cutoff,
    newton_invert,
)
from fatdisc.linearized import project_to_distribution
from fatdisc.mesh import MeshMap, edge_midpoints, graded_norm, horizontality_operator


def perturbed_map(res, amp, component=4, base=None):
    base = legendrian_disc() if base is None else base
    return MeshMap.from_function(mesh_at(res), perturbed(base, amp, component))


# ---------------------------------------------------------------------------
# residual


def test_horizontal_fixtures_have_zero_residual(model):
    assert max(horizontality_residual(model, legendrian_map(32))) < 1e-10
    assert max(horizontality_residual(model, legendrian_map(16, (0, 1j, 0.5)))) < 1e-10
    assert max(horizontality_residual(model, MeshMap.from_function(mesh_at(16), inclusion_disc))) < 1e-12


def test_z1_bump_residual_matches_bump_gradient(model):
    m = mesh_at(32)
    r1, r2 = horizontality_residual(model, perturbed_map(32, 1e-2))
    # alpha1 changes by 1e-2 d(bump); alpha2 does not see z1
    b = bump(m.nodes, radius=0.7)
    expected = 1e-2 * np.max(np.abs(m.gradient(b)))
    assert r1 == pytest.approx(expected, rel=1e-9)
    assert r2 < 1e-12


# ---------------------------------------------------------------------------
# Newton


def test_newton_leaves_horizontal_map_unchanged(model):
    f0 = legendrian_map(16)
    f, log = newton_invert(model, f0)
    assert f is f0
    assert log.iterations == 0 and log.converged


def test_newton_removes_z1_bump(model):
    f0 = perturbed_map(32, 1e-3)
    assert admissibility_check(model, f0).admissible
    f, log = newton_invert(model, f0, opts=SolveOptions(max_iters=20))
    assert log.converged
    assert log.reduction >= 1e3
    assert admissibility_check(model, f).admissible
    assert sum(horizontality_residual(model, f)) <= SolveOptions().residual_target


@pytest.mark.parametrize("mode", ["pinned", "least_squares"])
def test_newton_keeps_reeb_components_on_boundary(model, mode):
    f0 = perturbed_map(16, 1e-3, component=2)
    bn = f0.mesh.boundary_nodes
    f, log = newton_invert(model, f0, opts=SolveOptions(max_iters=3, boundary_mode=mode))
    assert log.iterations == 3
    _, c = project_to_distribution(model, f.values, f.values - f0.values)
    assert np.max(np.abs(c[bn, 0])) < 1e-10
    if mode == "pinned":
        assert np.abs(c[f0.mesh.boundary_nodes[0], 1]) < 1e-12


def test_iteration_counts_non_increasing_in_perturbation_size(model):
    counts = []
    for amp in (1e-2, 1e-3, 1e-4):
        _, log = newton_invert(model, perturbed_map(16, amp, base=legendrian_disc((0, 0.2j, 1))))
        assert log.converged
        counts.append(log.iterations)
    assert counts == sorted(counts, reverse=True)


def test_non_reeb_perturbation_floor_shrinks_with_h(model):
    """Off the Reeb directions the discrete residual stalls at an O(h) floor relative to its start."""
    red = []
    for res in (8, 16, 32):
        _, log = newton_invert(model, perturbed_map(res, 1e-3, component=2), opts=SolveOptions(max_iters=20))
        assert all(b < a for a, b in zip(log.residuals, log.residuals[1:]))
        red.append(log.reduction)
    assert red[1] / red[0] > 1.8 and red[2] / red[1] > 1.8, red


def test_newton_on_non_totally_real_map_raises(model):
    def plane(p):
        out = np.zeros(p.shape[:-1] + (6,))
        out[..., 0] = p[..., 0]
        out[..., 2] = p[..., 1]
        return out

    f0 = MeshMap.from_function(mesh_at(8), plane)
    with pytest.raises(AdmissibilityError):
        newton_invert(model, f0)


def test_newton_stagnation_carries_log(model):
    f0 = perturbed_map(16, 1.0, component=0)
    with pytest.raises(StagnationError) as exc:
        newton_invert(model, f0, opts=SolveOptions(damping=1.0, tau_min=1.0))
    assert exc.value.log is not None and len(exc.value.log.residuals) >= 1


def test_smallness_bound_rejects_large_targets(model):
    f0 = legendrian_map(8)
    g = horizontality_operator(model, perturbed_map(8, 0.1))
    with pytest.raises(DomainError):
        newton_invert(model, f0, g, SolveOptions(smallness_bound=1e-6))


@pytest.mark.parametrize("kw", [dict(max_iters=0), dict(damping=0.0), dict(damping=1.5),
                                dict(residual_target=0.0), dict(tau_min=2.0)])
def test_solve_options_validation(kw):
    with pytest.raises(DomainError):
        SolveOptions(**kw)


# ---------------------------------------------------------------------------
# infinitesimal order and cutoff


def defect_map(res, order, amp=2e-3):
    return MeshMap.from_function(mesh_at(res), order_defect(legendrian_disc(), amp, order))


def test_infinitesimal_order_examples(model):
    assert infinitesimal_order(model, legendrian_map(32), (0, 0), 3) == 3
    assert infinitesimal_order(model, legendrian_map(32), (0.2, -0.1), 3) == 3
    # |p|^(r + 2) is a polynomial only for even r, so only those orders are exact
    for r in (0, 2):
        assert infinitesimal_order(model, defect_map(32, r), (0, 0), 3) >= r
    assert infinitesimal_order(model, perturbed_map(32, 1e-2, component=2), (0, 0), 3) == -1


def test_infinitesimal_order_domain(model):
    with pytest.raises(DomainError):
        infinitesimal_order(model, legendrian_map(8), (1.0, 0.0), 2)
    with pytest.raises(DomainError):
        infinitesimal_order(model, legendrian_map(8), (0, 0), 4)


def test_cutoff_of_zero_defect_is_zero(model):
    g, (w, d) = make_cutoff(model, legendrian_map(16), (0, 0), 2, 1e-6)
    assert g[0].sup() < 1e-12 and g[1].sup() < 1e-12
    assert w == pytest.approx(0.5 * d)


def test_cutoff_support_and_termination(model):
    f = defect_map(32, 2)
    g0 = horizontality_operator(model, f)
    g, (w, d) = make_cutoff(model, f, (0, 0), 2, 0.01)
    assert graded_norm(g, 2) < 0.01
    assert d < 1.0  # the bisection had to shrink the radius
    r = np.linalg.norm(edge_midpoints(f.mesh), axis=2)
    inside = np.all(r <= w, axis=1)
    outside = np.all(r >= d, axis=1)
    assert inside.any() and outside.any()
    for gi, g0i in zip(g, g0):
        assert np.allclose(gi.values[inside], -g0i.values[inside], rtol=0, atol=1e-15)
        assert np.all(gi.values[outside] == 0)


def test_cutoff_scale_error_when_defect_does_not_vanish(model):
    with pytest.raises(ScaleError):
        make_cutoff(model, perturbed_map(16, 1e-2, component=2), (0, 0), 2, 1e-8)


# ---------------------------------------------------------------------------
# homotopy


def test_homotopy_of_horizontal_map_is_constant(model):
    f = legendrian_map(16)
    res = homotopy_family(model, f, (0, 0), 2, 1e-3, t_samples=3)
    assert all(ft is f or np.array_equal(ft.values, f.values) for ft in res.family)
    assert res.g_eps[0].sup() < 1e-12 and res.g0[0].sup() < 1e-12


def test_homotopy_on_order_two_defect(model):
    f = defect_map(32, 2)
    opts = SolveOptions(residual_target=1e-6)
    res = homotopy_family(model, f, (0, 0), 2, 0.05, opts, t_samples=5)
    assert np.max(np.abs(res.family[0].values - f.values)) <= 1e-10
    assert all(s["admissible"] for s in res.per_t)
    assert all(admissibility_check(model, ft).admissible for ft in res.family)
    assert all(s["residual"] < opts.residual_target for s in res.per_t)
    assert res.final_residual_on_W(model) < 1e-6
    assert res.times[0] == 0.0 and res.times[-1] == 1.0


def test_homotopy_requires_infinitesimal_solution(model):
    with pytest.raises(DomainError):
        homotopy_family(model, perturbed_map(16, 1e-2, component=2), (0, 0), 2, 0.05)
