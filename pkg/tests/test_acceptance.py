"""Desk-scale acceptance suite.

Each test records one ``criterion NN: PASS/FAIL`` line (printed at the end of
the pytest run) and then asserts the criterion.  Run directly with
``python tests/test_acceptance.py`` to see only these lines.
"""

import dataclasses
import time

import numpy as np
import pytest
from scipy.linalg import subspace_angles

from conftest import legendrian_map, record_acceptance
from fatdisc.admissibility import split_tangents
from fatdisc.config import RunConfig
from fatdisc.geometry import (
    bracket_step_two,
    check_reeb_directions,
    fatness_via_phi,
    holomorphic_contact_model,
    integrable_example,
    is_fat_at,
    kernel_basis,
    kernel_frames,
)
from fatdisc.linearized import apply_linearization, reeb_section, tame_estimate_probe
from fatdisc.runs import run_homotopy, run_invert, run_solve_linearized

SEED = 20240611

# reports of criteria 4-7, kept for the determinism check
FIRST_RUNS = {}


def _configs():
    return {
        "solve": (run_solve_linearized, RunConfig(resolutions=(16, 32, 64), seed=SEED)),
        "invert": (run_invert, RunConfig(resolution=32, perturb_amplitude=1e-3, perturb_component="z1",
                                         max_iters=20, seed=SEED)),
        "homotopy": (run_homotopy, RunConfig(resolution=32, defect_order=2, defect_amplitude=2e-3, order=2,
                                             eps=0.05, homotopy_target=1e-6, seed=SEED)),
    }


def _run(name):
    func, cfg = _configs()[name]
    t0 = time.perf_counter()
    rep = func(cfg)
    elapsed = time.perf_counter() - t0
    FIRST_RUNS.setdefault(name, rep)
    return rep, elapsed


def _written_files(rep, outdir):
    """Bytes of every written artifact except the metadata file."""
    rep.write(outdir)
    return {p.name: p.read_bytes() for p in sorted(outdir.iterdir()) if p.name != "metadata.json"}


def test_criterion_01_structural_suite():
    t0 = time.perf_counter()
    model = holomorphic_contact_model()
    pts = np.random.default_rng(SEED).uniform(-1, 1, size=(1000, 6))
    fails = {"fat": 0, "reeb": 0, "bracket": 0}
    for x in pts:
        fails["fat"] += not is_fat_at(model, x).fat
        fails["reeb"] += not check_reeb_directions(model, x).ok
        fails["bracket"] += not bracket_step_two(model, x)
    A = kernel_frames(model, pts)[3]
    a2 = float(np.max(np.abs(A @ A + np.eye(4))))
    integrable_fails = not is_fat_at(integrable_example(), pts[0]).fat
    elapsed = time.perf_counter() - t0
    ok = not any(fails.values()) and a2 < 1e-10 and integrable_fails and elapsed < 10
    record_acceptance(1, ok, f"failures {fails}, max|A^2+I| = {a2:.1e}, integrable non-fat: "
                             f"{integrable_fails}, {elapsed:.1f} s")
    assert ok


def test_criterion_02_fatness_cross_oracle():
    rng = np.random.default_rng(SEED + 2)
    disagreements = 0
    checked = 0
    for dist in (holomorphic_contact_model(), integrable_example()):
        for x in rng.uniform(-1, 1, size=(100, 6)):
            basis = kernel_basis(dist, x).basis
            vs = rng.normal(size=(100, 4)) @ basis.T
            via_phi = all(fatness_via_phi(dist, x, v) for v in vs)
            disagreements += via_phi != is_fat_at(dist, x, tol=1e-8).fat
            checked += 1
    ok = disagreements == 0
    record_acceptance(2, ok, f"{disagreements} disagreements over {checked} points x 100 directions")
    assert ok


def test_criterion_03_invariance_of_tangent_plane():
    model = holomorphic_contact_model()
    f = legendrian_map(32)
    sp = split_tangents(model, f)
    x = np.einsum("eji,ej->ei", sp.basis, sp.X)
    y = np.einsum("eji,ej->ei", sp.basis, sp.Y)
    worst = 0.0
    for e in range(len(x)):
        V = np.column_stack([x[e], y[e]])
        worst = max(worst, float(np.max(subspace_angles(V, sp.A[e] @ V))))
    ok = worst < 1e-6
    record_acceptance(3, ok, f"max principal angle {worst:.1e} over {len(x)} elements")
    assert ok


def test_criterion_04_manufactured_convergence():
    rep, elapsed = _run("solve")
    orders = rep.results["observed_order"]
    ok = (rep.exit_code == 0 and min(orders["section_sup"]) >= 1.0 and min(orders["a_l2"]) >= 1.5
          and elapsed < 120)
    record_acceptance(4, ok, "section orders " + ", ".join(f"{o:.3f}" for o in orders["section_sup"])
                      + "; a orders " + ", ".join(f"{o:.3f}" for o in orders["a_l2"]) + f"; {elapsed:.1f} s")
    assert ok


def test_criterion_05_first_order_systems():
    rep = FIRST_RUNS.get("solve") or _run("solve")[0]
    ratios = []
    for r in rep.results["runs"]:
        worst_residual = max(r["residuals"]["first"], r["residuals"]["second"])
        ratios.append(worst_residual / (r["h"] * r["data_scale"]))
    worst = max(ratios)
    ok = worst <= 5
    record_acceptance(5, ok, "residual / (h * data scale) = " + ", ".join(f"{v:.3f}" for v in ratios))
    assert ok


def test_criterion_06_nonlinear_inversion():
    rep, elapsed = _run("invert")
    res = rep.results
    ok = (res["reduction"] >= 1e3 and res["iterations"] <= 20 and res["admissible"] and elapsed < 60)
    # a bump off the Reeb directions stalls at an O(h) floor; reported, not gating
    func, cfg = _configs()["invert"]
    side = func(dataclasses.replace(cfg, perturb_component="y1"))
    record_acceptance(6, ok, f"z1 bump: reduction {res['reduction']:.2e} in {res['iterations']} iteration(s), "
                             f"admissible {res['admissible']}, {elapsed:.1f} s; y1 bump (not gating): reduction "
                             f"{side.results['log']['residuals'][0] / side.results['log']['residuals'][-1]:.0f}")
    assert ok


def test_criterion_07_homotopy():
    rep, elapsed = _run("homotopy")
    res = rep.results
    ok = (res["infinitesimal_order"] >= 2 and res["start_difference"] is not None
          and res["start_difference"] <= 1e-10 and res["all_admissible"] and res["residual_on_W"] < 1e-6
          and elapsed < 180)
    record_acceptance(7, ok, f"order {res['infinitesimal_order']}, |f_0 - f| = {res['start_difference']}, "
                             f"residual on W {res['residual_on_W']:.2e}, all admissible {res['all_admissible']}, "
                             f"{elapsed:.1f} s")
    assert ok


def test_criterion_08_tame_estimate_probe():
    model = holomorphic_contact_model()
    ratios = [tame_estimate_probe(model, legendrian_map(res), n=0, trials=50, seed=SEED) for res in (16, 32, 64)]
    spread = max(ratios) / min(ratios)
    ok = spread < 2
    record_acceptance(8, ok, "ratios " + ", ".join(f"{r:.4f}" for r in ratios) + f", spread {spread:.3f}")
    assert ok


def test_criterion_09_reeb_kernel():
    model = holomorphic_contact_model()
    worst = 0.0
    for coeffs in ((0, 0, 1), (0.1, -0.3j, 0.5, 0.05)):
        f = legendrian_map(32, coeffs)
        for a, b in ((1.0, 0.0), (0.0, 1.0), (0.7, -1.3)):
            P, Q = apply_linearization(model, f, reeb_section(model, f, a, b))
            worst = max(worst, P.sup(), Q.sup())
    ok = worst < 1e-12
    record_acceptance(9, ok, f"max residual {worst:.1e}")
    assert ok


def test_criterion_10_determinism(tmp_path):
    same = {}
    for name in ("solve", "invert", "homotopy"):
        first = FIRST_RUNS.get(name) or _run(name)[0]
        func, cfg = _configs()[name]
        second = func(cfg)
        a = _written_files(first, tmp_path / f"{name}_a")
        b = _written_files(second, tmp_path / f"{name}_b")
        same[name] = a == b and "report.json" in a
    ok = all(same.values())
    record_acceptance(10, ok, "byte-identical reports: " + ", ".join(f"{k} {v}" for k, v in same.items()))
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
