"""One function per CLI subcommand: each turns a RunConfig into a RunReport."""

from __future__ import annotations

import math
import time

import numpy as np

from .admissibility import admissibility_check, coefficient_fields
from .config import RunConfig
from .errors import FatDiscError, StagnationError
from .fixtures import base_fixture, bump, order_defect
from .geometry import (
    COORDS,
    bracket_step_two,
    check_reeb_directions,
    check_type_constraints,
    compatible_acs,
    is_fat_at,
    kernel_basis,
)
from .horizontal import SolveOptions, homotopy_family, infinitesimal_order, newton_invert
from .linearized import BoundaryData, first_order_residuals, right_inverse
from .manufactured import smooth_section
from .mesh import (
    MeshMap,
    OneFormField,
    build_disc_mesh,
    graded_norm,
    horizontality_operator,
    map_to_document,
)
from .report import RunReport, convergence_figure, element_map_figure, history_figure

NEWTON_NOTE = ("plain damped Newton at fixed resolution; no Nash-Moser smoothing step "
               "(the discretization regularizes the loss of derivatives)")
NODE_HEADER = ["node", "x", "y"] + list(COORDS)


class _Clock:
    def __init__(self, report: RunReport):
        self.report = report

    def __call__(self, name):
        clock = self

        class _Span:
            def __enter__(self):
                self.t = time.perf_counter()

            def __exit__(self, *exc):
                clock.report.timings[name] = time.perf_counter() - self.t

        return _Span()


def _new_report(command: str, cfg: RunConfig) -> RunReport:
    return RunReport(command=command, config=cfg.to_dict())


def _node_rows(f: MeshMap):
    m = f.mesh
    return [[i, m.nodes[i, 0], m.nodes[i, 1], *f.values[i]] for i in range(m.n_nodes)]


def fixture_function(cfg: RunConfig, mesh=None):
    """The configured base map with its optional bump and order-defect perturbations."""
    func = base_fixture(cfg.fixture, cfg.coeffs)
    if cfg.perturb_amplitude:
        comp = COORDS.index(cfg.perturb_component)
        radius = cfg.perturb_radius
        # the amplitude is the |.|_1 size of the perturbation on the run's mesh
        mesh = build_disc_mesh(cfg.resolution) if mesh is None else mesh
        unit = graded_norm(bump(mesh.nodes, radius=radius), 1, mesh=mesh)
        amp = cfg.perturb_amplitude / unit
        base = func

        def func(points, base=base):
            out = np.array(base(points), dtype=float)
            out[..., comp] += amp * bump(points, radius=radius)
            return out
    if cfg.defect_order >= 0:
        func = order_defect(func, cfg.defect_amplitude, cfg.defect_order,
                            component=COORDS.index(cfg.perturb_component))
    return func


def _solve_options(cfg: RunConfig, residual_target=None) -> SolveOptions:
    return SolveOptions(
        max_iters=cfg.max_iters, damping=cfg.damping,
        residual_target=cfg.residual_target if residual_target is None else residual_target,
        admissibility_guard=cfg.admissibility_guard, s_order=cfg.s_order, boundary_mode=cfg.boundary_mode,
    )


# ---------------------------------------------------------------------------
# check


def run_check(cfg: RunConfig) -> RunReport:
    rep = _new_report("check", cfg)
    clock = _Clock(rep)
    dist = cfg.distribution()
    rng = np.random.default_rng(cfg.seed)
    pts = rng.uniform(-1.0, 1.0, size=(cfg.points, 6))
    failures = {"fatness": [], "reeb": [], "bracket": []}
    rows = []
    eigs = []
    a2_max = 0.0
    with clock("structural"):
        for i, x in enumerate(pts):
            try:
                fr = is_fat_at(dist, x, cfg.tol, cfg.pivot)
                fat, why = fr.fat, "; ".join(fr.reasons)
                frame = kernel_basis(dist, x, cfg.pivot)
            except FatDiscError as exc:
                fat, why, frame = False, str(exc), None
            if not fat:
                failures["fatness"].append({"sample": i, "reason": why})
            reeb_ok = None
            if dist.has_reeb:
                rr = check_reeb_directions(dist, x, cfg.tol, cfg.pivot)
                reeb_ok = rr.ok
                if not rr.ok:
                    bad = sorted(k for k, v in rr.passed.items() if not v)
                    failures["reeb"].append({"sample": i, "reason": f"conditions {', '.join(bad)} fail"})
            br = bracket_step_two(dist, x, pivot=cfg.pivot) if frame is not None else False
            if not br:
                failures["bracket"].append({"sample": i, "reason": "D + [D, D] is not all of R^6"})
            err = math.nan
            if frame is not None and np.all(np.isfinite(frame.A)):
                err = float(np.max(np.abs(frame.A @ frame.A + np.eye(4))))
                a2_max = max(a2_max, err)
                eigs.append(np.linalg.eigvals(frame.A))
            rows.append([i, *x, int(fat), "" if reeb_ok is None else int(reeb_ok), int(br), err])

    checks = {
        "fatness": {"passed": not failures["fatness"], "failures": len(failures["fatness"]),
                    "first": failures["fatness"][:5]},
        "bracket_step_two": {"passed": not failures["bracket"], "failures": len(failures["bracket"]),
                             "first": failures["bracket"][:5]},
    }
    if dist.has_reeb:
        checks["reeb_directions"] = {"passed": not failures["reeb"], "failures": len(failures["reeb"]),
                                     "first": failures["reeb"][:5]}
    else:
        rep.notes.append("no Reeb fields configured; Reeb checks skipped")
    if cfg.type is not None:
        k, n = cfg.type
        tr = check_type_constraints(k, n)
        checks["type_constraints"] = {"passed": tr.admissible, "k": k, "n": n, "checks": tr.checks,
                                      "reasons": tr.reasons}
    ok = all(c["passed"] for c in checks.values())
    rep.results = {
        "model": cfg.model_label,
        "samples": cfg.points,
        "checks": checks,
        "a_squared_plus_identity_max": a2_max if eigs else None,
    }
    rep.exit_code = 0 if ok else 1
    failed = sorted(name for name, c in checks.items() if not c["passed"])
    rep.verdict = "all checks pass" if ok else "failed: " + ", ".join(failed)
    rep.tables["samples"] = (["sample", *COORDS, "fat", "reeb_ok", "bracket_ok", "a_squared_error"], rows)
    if eigs:
        ev = np.concatenate(eigs)

        def draw(fig):
            ax = fig.add_subplot(111)
            ax.plot(ev.real, ev.imag, ".", ms=3)
            ax.axhline(0.0, color="k", lw=0.5)
            ax.set_xlabel("Re")
            ax.set_ylabel("Im")
            ax.set_title("eigenvalues of A over the samples")
        rep.figures["spectrum"] = draw
    return rep


# ---------------------------------------------------------------------------
# frames


def run_frames(cfg: RunConfig) -> RunReport:
    rep = _new_report("frames", cfg)
    dist = cfg.distribution()
    x = np.asarray(cfg.point, dtype=float)
    frame = kernel_basis(dist, x, cfg.pivot)
    fr = is_fat_at(dist, x, cfg.tol, cfg.pivot)
    res = {
        "point": x,
        "basis": frame.basis,
        "omega1": frame.omega1,
        "omega2": frame.omega2,
        "A": frame.A,
        "fat": fr.fat,
        "fatness_reasons": fr.reasons,
        "eigenvalues_of_A": [[float(e.real), float(e.imag)] for e in np.sort_complex(fr.eigenvalues)],
    }
    if abs(np.linalg.det(frame.omega1)) > 1e-12:
        J = compatible_acs(frame)
        res["J"] = J
        res["J_squared_plus_identity"] = float(np.max(np.abs(J @ J + np.eye(4))))
    if dist.has_reeb:
        res["reeb_fields"] = dist.reeb_fields(x).T
    rep.results = res
    rep.tables["frame"] = (["vector", *COORDS], [[f"V{k + 1}", *frame.basis[:, k]] for k in range(4)])
    rep.exit_code = 0
    rep.verdict = "frame computed" + ("" if fr.fat else " (not fat at this point)")
    return rep


# ---------------------------------------------------------------------------
# fixtures


def run_fixtures(cfg: RunConfig) -> RunReport:
    rep = _new_report("fixtures", cfg)
    dist = cfg.distribution()
    mesh = build_disc_mesh(cfg.resolution)
    f = MeshMap.from_function(mesh, fixture_function(cfg, mesh))
    P, Q = horizontality_operator(dist, f)
    res = {"n_nodes": mesh.n_nodes, "n_elements": mesh.n_elements, "h": mesh.h,
           "horizontality_residual": [P.sup(), Q.sup()]}
    if dist.has_reeb:
        adm = admissibility_check(dist, f, cfg.tol)
        res["admissibility"] = adm.summary()
    rep.results = res
    rep.tables["map"] = (NODE_HEADER, _node_rows(f))
    rep.documents["map"] = map_to_document(f)
    rep.figures["z_coordinates"] = element_map_figure(
        mesh, f.barycenter_values()[:, 4], "fixture: z1 at barycenters", "z1")
    rep.exit_code = 0
    rep.verdict = "fixture written"
    return rep


# ---------------------------------------------------------------------------
# solve-linearized


def _admissibility_failure(rep: RunReport, adm, mesh, res: int) -> RunReport:
    bad = adm.failing_elements()
    rows = [[e, *mesh.barycenters[e], int(adm.immersion[e]), int(adm.transverse[e]), int(adm.totally_real[e]),
             int(adm.elliptic[e]), adm.discriminant[e]] for e in range(mesh.n_elements)]
    rep.tables["admissibility"] = (["element", "x", "y", "immersion", "transverse", "totally_real",
                                    "elliptic", "discriminant"], rows)
    rep.figures["discriminant"] = element_map_figure(
        mesh, adm.discriminant, f"discriminant (p - s)^2 + 4qr at resolution {res}", "discriminant", bad)
    rep.results["admissibility"] = adm.summary()
    rep.exit_code = 1
    rep.verdict = f"map is not admissible on {bad.size} of {mesh.n_elements} elements"
    return rep


def _orders(h, e):
    return [math.log(e[k] / e[k + 1]) / math.log(h[k] / h[k + 1]) if e[k + 1] > 0 and e[k] > 0 else None
            for k in range(len(e) - 1)]


def run_solve_linearized(cfg: RunConfig) -> RunReport:
    rep = _new_report("solve-linearized", cfg)
    clock = _Clock(rep)
    dist = cfg.distribution()
    func = fixture_function(cfg)
    resolutions = [cfg.resolution] if cfg.data == "zero" else list(cfg.resolutions)
    ms = smooth_section()
    rows, per_res = [], []
    for res in resolutions:
        with clock(f"resolution_{res}"):
            mesh = build_disc_mesh(res)
            f = MeshMap.from_function(mesh, func)
            adm = admissibility_check(dist, f, cfg.tol)
            if not adm.admissible:
                return _admissibility_failure(rep, adm, mesh, res)
            coeffs = coefficient_fields(dist, f)
            if cfg.data == "zero":
                P = Q = OneFormField.zeros(mesh)
                bdry = BoundaryData.zeros(mesh)
            else:
                P, Q, bdry = ms.data(dist, func, mesh)
            s = right_inverse(dist, f, P, Q, bdry, coeffs=coeffs, mode=cfg.boundary_mode, check=False)
            resid = first_order_residuals(dist, f, s, P, Q, coeffs)
            scale = max(P.sup(), Q.sup())
            entry = {
                "resolution": res, "h": mesh.h, "n_nodes": mesh.n_nodes,
                "residuals": resid,
                "data_scale": scale,
                "second_over_h_scale": resid["second"] / (mesh.h * scale) if scale > 0 else 0.0,
                "diagnostics": dict(s.diagnostics),
                "section_sup": float(np.max(np.abs(s.assembled))),
            }
            if cfg.data == "manufactured":
                exact = ms.vectors(dist, func, mesh.nodes)
                entry["section_error"] = float(np.max(np.abs(s.assembled - exact)))
                entry["a_l2_error"] = mesh.l2_norm(s.a - ms.a(mesh.nodes))
                entry["b_sup_error"] = float(np.max(np.abs(s.b - ms.b(mesh.nodes))))
                rows.append([res, mesh.h, entry["section_error"], entry["a_l2_error"], entry["b_sup_error"],
                             resid["first"], resid["second"], entry["second_over_h_scale"],
                             s.diagnostics["boundary_mismatch"]])
            per_res.append(entry)
    rep.results = {"runs": per_res}
    last_mesh, last = mesh, s
    rep.tables["section"] = (
        ["node", "x", "y", "a", "b"] + [f"s_{c}" for c in COORDS],
        [[i, *last_mesh.nodes[i], last.a[i], last.b[i], *last.assembled[i]] for i in range(last_mesh.n_nodes)],
    )
    if cfg.data == "manufactured":
        h = [r["h"] for r in per_res]
        es = [r["section_error"] for r in per_res]
        ea = [r["a_l2_error"] for r in per_res]
        rep.results["observed_order"] = {"section_sup": _orders(h, es), "a_l2": _orders(h, ea)}
        rep.tables["convergence"] = (["resolution", "h", "section_error", "a_l2_error", "b_sup_error",
                                      "first_residual", "second_residual", "second_over_h_scale",
                                      "b_boundary_mismatch"], rows)
        if len(h) > 1:
            rep.figures["convergence"] = convergence_figure(
                h, {"section sup error": es, "a L2 error": ea}, "manufactured section")
        rep.verdict = "solved; convergence table written"
    else:
        rep.verdict = "solved zero data"
    rep.exit_code = 0
    return rep


# ---------------------------------------------------------------------------
# invert


def _newton_tables(rep: RunReport, log, name="newton"):
    rows = [[k, r, log.steps[k - 1] if k else "", log.increment_norms[k - 1] if k else ""]
            for k, r in enumerate(log.residuals)]
    rep.tables[name] = (["iteration", "residual", "tau", "increment_norm"], rows)
    rep.figures[name] = history_figure({"|D(f)|_0": (list(range(len(log.residuals))), log.residuals)},
                                       "Newton residual", "iteration", "residual")


def run_invert(cfg: RunConfig) -> RunReport:
    rep = _new_report("invert", cfg)
    rep.notes.append(NEWTON_NOTE)
    clock = _Clock(rep)
    dist = cfg.distribution()
    mesh = build_disc_mesh(cfg.resolution)
    f0 = MeshMap.from_function(mesh, fixture_function(cfg, mesh))
    opts = _solve_options(cfg)
    try:
        with clock("newton"):
            f, log = newton_invert(dist, f0, None, opts)
    except StagnationError as exc:
        _newton_tables(rep, exc.log)
        rep.results = {"error": str(exc), "log": exc.log.to_dict()}
        rep.exit_code, rep.verdict = 1, f"stagnation: {exc}"
        return rep
    adm = admissibility_check(dist, f, cfg.tol)
    _newton_tables(rep, log)
    rep.results = {
        "initial_residual": log.residuals[0],
        "final_residual": log.residuals[-1],
        "reduction": log.reduction,
        "iterations": log.iterations,
        "converged": log.converged,
        "admissible": adm.admissible,
        "admissibility": adm.summary(),
        "displacement_norm_1": graded_norm(f.values - f0.values, 1, mesh=mesh),
        "log": log.to_dict(),
    }
    rep.tables["map"] = (NODE_HEADER, _node_rows(f))
    ok = log.converged and adm.admissible
    rep.exit_code = 0 if ok else 1
    rep.verdict = (f"converged in {log.iterations} iteration(s), reduction {log.reduction:.3e}" if ok
                   else f"target not met: {log.message}, admissible={adm.admissible}")
    return rep


# ---------------------------------------------------------------------------
# homotopy


def run_homotopy(cfg: RunConfig) -> RunReport:
    rep = _new_report("homotopy", cfg)
    rep.notes.append(NEWTON_NOTE)
    clock = _Clock(rep)
    dist = cfg.distribution()
    mesh = build_disc_mesh(cfg.resolution)
    f = MeshMap.from_function(mesh, fixture_function(cfg, mesh))
    order = infinitesimal_order(dist, f, cfg.center, cfg.order)
    opts = _solve_options(cfg, residual_target=cfg.homotopy_target)
    with clock("homotopy"):
        result = homotopy_family(dist, f, cfg.center, cfg.order, cfg.eps, opts, t_samples=cfg.t_samples)
    w_res = result.final_residual_on_W(dist)
    start_diff = float(np.max(np.abs(result.family[0].values - f.values))) if result.scale == 1.0 else None
    all_adm = all(p["admissible"] for p in result.per_t)
    rep.results = {
        "infinitesimal_order": order,
        "times": result.times,
        "per_t": result.per_t,
        "W_radius": result.W_radius,
        "cutoff_radius": result.cutoff_radius,
        "scale": result.scale,
        "start_difference": start_diff,
        "residual_on_W": w_res,
        "all_admissible": all_adm,
    }
    rep.tables["family_steps"] = (["t", "iterations", "residual", "converged", "admissible"],
                                  [[p["t"], p["iterations"], p["residual"], int(p["converged"]),
                                    int(p["admissible"])] for p in result.per_t])
    fm = result.family[0].mesh
    rep.tables["family"] = (["t"] + NODE_HEADER,
                            [[t, *row] for t, g in zip(result.times, result.family) for row in _node_rows(g)])
    rep.figures["family_residual"] = history_figure(
        {"Newton residual": (result.times, [max(p["residual"], 1e-300) for p in result.per_t])},
        "continuation", "t", "residual")
    P, Q = horizontality_operator(dist, result.final)
    rep.figures["final_defect"] = element_map_figure(
        fm, np.maximum(np.abs(P.values).max(axis=1), np.abs(Q.values).max(axis=1)),
        "|D(f_1)| per element", "defect")
    ok = all_adm and w_res < cfg.homotopy_target
    rep.exit_code = 0 if ok else 1
    rep.verdict = (f"f_1 horizontal on W (residual {w_res:.3e})" if ok
                   else f"target not met: residual on W {w_res:.3e}, all admissible={all_adm}")
    return rep


COMMANDS = {
    "check": run_check,
    "frames": run_frames,
    "fixtures": run_fixtures,
    "solve-linearized": run_solve_linearized,
    "invert": run_invert,
    "homotopy": run_homotopy,
}
