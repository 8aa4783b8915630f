"""Command-line entry point.

Exit codes: 0 when every check or target passes, 1 when a check fails or a
solver misses its target, 2 when the configuration cannot be parsed.
"""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

from . import __version__
from .config import load_config
from .errors import ConfigurationError, FatDiscError, ParseError
from .report import RunReport
from .runs import COMMANDS

# flag -> (config key, argparse kwargs)
_COMMON = {
    "--model": ("model", {"help": "holomorphic_contact or integrable"}),
    "--resolution": ("resolution", {"help": "mesh resolution (>= 2)"}),
    "--seed": ("seed", {"help": "seed for sampled points"}),
    "--tol": ("tol", {"help": "tolerance for structural and admissibility checks"}),
}
_FIXTURE = {
    "--fixture": ("fixture", {"help": "legendrian, inclusion, y_plane, degenerate or constant"}),
    "--coeffs": ("coeffs", {"help": "polynomial coefficients of h, e.g. '0, 0, 1' or '0, 1j, 0.5'"}),
}
_NEWTON = {
    "--max-iters": ("max_iters", {}),
    "--damping": ("damping", {}),
    "--residual-target": ("residual_target", {}),
    "--boundary-mode": ("boundary_mode", {"help": "pinned or least_squares"}),
    "--no-guard": ("admissibility_guard", {"action": "store_const", "const": "false",
                                           "help": "do not reject non-admissible iterates"}),
}
_SPECIFIC = {
    "check": {
        "--type": ("type", {"nargs": 2, "metavar": ("K", "N"), "help": "also test rank K in dimension N"}),
        "--points": ("points", {"help": "number of sampled points"}),
    },
    "frames": {
        "--point": ("point", {"nargs": 6, "metavar": "C", "help": "x1 x2 y1 y2 z1 z2"}),
    },
    "fixtures": {
        **_FIXTURE,
        "--amplitude": ("perturb_amplitude", {"help": "size in |.|_1 of a bump perturbation"}),
        "--component": ("perturb_component", {"help": "coordinate the bump moves"}),
        "--defect-order": ("defect_order", {}),
        "--defect-amplitude": ("defect_amplitude", {}),
    },
    "solve-linearized": {
        **_FIXTURE,
        "--data": ("data", {"help": "manufactured or zero"}),
        "--resolutions": ("resolutions", {"nargs": "+", "help": "resolutions of the convergence table"}),
        "--boundary-mode": ("boundary_mode", {"help": "pinned or least_squares"}),
    },
    "invert": {
        **_FIXTURE,
        "--amplitude": ("perturb_amplitude", {"help": "size in |.|_1 of the bump perturbation"}),
        "--component": ("perturb_component", {"help": "coordinate the bump moves (default z1)"}),
        **_NEWTON,
    },
    "homotopy": {
        **_FIXTURE,
        "--defect-order": ("defect_order", {"help": "vanishing order of the planted defect (-1: none)"}),
        "--defect-amplitude": ("defect_amplitude", {}),
        "--component": ("perturb_component", {}),
        "--order": ("order", {"help": "required infinitesimal order r"}),
        "--eps": ("eps", {"help": "smallness of the cut-off target"}),
        "--center": ("center", {"nargs": 2, "metavar": ("X", "Y")}),
        "--t-samples": ("t_samples", {}),
        "--target": ("homotopy_target", {"help": "residual required on the inner ball"}),
        **_NEWTON,
    },
}

_HELP = {
    "check": "structural checks of a distribution on sampled points",
    "frames": "kernel frame, restricted forms, A and J at one point",
    "fixtures": "write a fixture map as CSV and JSON",
    "solve-linearized": "right inverse of the linearized operator; convergence table",
    "invert": "damped Newton inversion of the horizontality operator",
    "homotopy": "continuation from an infinitesimal solution to a horizontal map near a point",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fatdisc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"fatdisc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, extra in _SPECIFIC.items():
        p = sub.add_parser(name, help=_HELP[name])
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a configuration key (repeatable)")
        p.add_argument("--out", help="directory for report, tables, figures and metadata")
        p.add_argument("--quiet", action="store_true", help="print only the verdict")
        for flag, (key, kw) in {**_COMMON, **extra}.items():
            p.add_argument(flag, dest="opt_" + key, default=None, **kw)
    return parser


def _overrides(args) -> list:
    out = []
    for item in args.set:
        if "=" not in item:
            raise ParseError("expected KEY=VALUE", f"command line, --set {item}")
        key, value = item.split("=", 1)
        out.append((key, value, f"command line, --set {item}"))
    for name, value in sorted(vars(args).items()):
        if name.startswith("opt_") and value is not None:
            key = name[4:]
            text = " ".join(value) if isinstance(value, list) else str(value)
            out.append((key, text, f"command line, {key}"))
    if args.out:
        out.append(("output", args.out, "command line, --out"))
    return out


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, _overrides(args))
    except (ParseError, ConfigurationError) as exc:
        print(f"fatdisc: error: {exc}", file=sys.stderr)
        return 2
    try:
        report = COMMANDS[args.command](cfg)
    except (ParseError, ConfigurationError) as exc:
        print(f"fatdisc: error: {exc}", file=sys.stderr)
        return 2
    except FatDiscError as exc:
        report = RunReport(command=args.command, config=cfg.to_dict(), exit_code=1,
                           verdict=f"{type(exc).__name__}: {exc}")
        log = getattr(exc, "log", None)
        report.results = {"error": str(exc), "error_type": type(exc).__name__}
        if log is not None and hasattr(log, "to_dict"):
            report.results["log"] = log.to_dict()
        elements = getattr(exc, "elements", None)
        if elements is not None:
            report.results["elements"] = [int(e) for e in list(elements)[:100]]
    if cfg.output:
        report.write(cfg.output, argv=sys.argv if argv is None else ["fatdisc", *argv])
    if args.quiet:
        print(report.verdict)
    else:
        sys.stdout.write(report.text())
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
