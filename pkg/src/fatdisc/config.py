"""Run configuration: a flat ``key = value`` text file plus command-line overrides.

Example::

    # model distribution, mesh and fixture
    model = holomorphic_contact
    resolution = 32
    fixture = legendrian
    coeffs = 0, 0, 1
    perturb_amplitude = 1e-3

or, instead of ``model``, explicit forms and Reeb fields::

    alpha1 = dz1 - y1*dx1 + y2*dx2
    alpha2 = dz2 - y2*dx1 - y1*dx2
    Z1 = [0, 0, 0, 0, 1, 0]
    Z2 = [0, 0, 0, 0, 0, 1]
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import ParseError
from .expr import parse_one_form, parse_vector_field
from .fixtures import BASE_FIXTURES
from .geometry import COORDS, CorankTwoDistribution, holomorphic_contact_model, integrable_example

MODELS = {"holomorphic_contact": holomorphic_contact_model, "integrable": integrable_example}
EXPRESSION_KEYS = ("alpha1", "alpha2", "Z1", "Z2")


def _floats(text):
    return tuple(float(t) for t in text.replace(",", " ").split())


def _ints(text):
    return tuple(int(t) for t in text.replace(",", " ").split())


def _complexes(text):
    return tuple(complex(t.replace(" ", "")) for t in text.split(","))


def _bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _choice(*options):
    def conv(text):
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {text!r}")
        return text
    return conv


def _component(text):
    text = text.strip()
    if text in COORDS:
        return text
    raise ValueError(f"expected a coordinate name {', '.join(COORDS)}")


@dataclass
class RunConfig:
    model: Optional[str] = None
    alpha1: Optional[str] = None
    alpha2: Optional[str] = None
    Z1: Optional[str] = None
    Z2: Optional[str] = None
    resolution: int = 32
    resolutions: tuple = (16, 32, 64)
    seed: int = 0
    output: Optional[str] = None
    tol: float = 1e-8
    points: int = 100
    type: Optional[tuple] = None
    point: tuple = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    pivot: str = "reeb"
    fixture: str = "legendrian"
    coeffs: tuple = (0j, 0j, 1 + 0j)
    perturb_amplitude: float = 0.0
    perturb_component: str = "z1"
    perturb_radius: float = 0.7
    defect_order: int = -1
    defect_amplitude: float = 0.002
    data: str = "manufactured"
    boundary_mode: str = "pinned"
    max_iters: int = 20
    damping: float = 1.0
    residual_target: float = 1e-10
    admissibility_guard: bool = True
    s_order: int = 2
    center: tuple = (0.0, 0.0)
    order: int = 2
    eps: float = 0.05
    t_samples: int = 5
    homotopy_target: float = 1e-6
    sources: dict = field(default_factory=dict, repr=False, compare=False)

    def to_dict(self) -> dict:
        """Every setting that affects results; the output directory is not one of them."""
        out = {}
        for f in dataclasses.fields(self):
            if f.name in ("sources", "output"):
                continue
            v = getattr(self, f.name)
            if f.name == "coeffs":
                v = [[c.real, c.imag] for c in v]
            elif isinstance(v, tuple):
                v = list(v)
            out[f.name] = v
        return out

    def distribution(self) -> CorankTwoDistribution:
        exprs = {k: getattr(self, k) for k in EXPRESSION_KEYS if getattr(self, k) is not None}
        if exprs and self.model:
            raise ParseError("give either model or explicit expressions, not both", self.sources.get("model"))
        if not exprs:
            return MODELS[self.model or "holomorphic_contact"]()
        missing = [k for k in ("alpha1", "alpha2") if k not in exprs]
        if missing:
            raise ParseError(f"missing {', '.join(missing)}", self.sources.get(next(iter(exprs))))
        a1 = parse_one_form(self.alpha1, self.sources.get("alpha1"))
        a2 = parse_one_form(self.alpha2, self.sources.get("alpha2"))
        z1 = parse_vector_field(self.Z1, self.sources.get("Z1")) if self.Z1 else None
        z2 = parse_vector_field(self.Z2, self.sources.get("Z2")) if self.Z2 else None
        return CorankTwoDistribution(a1, a2, z1, z2, label="custom")

    @property
    def model_label(self) -> str:
        if any(getattr(self, k) is not None for k in EXPRESSION_KEYS):
            return "custom"
        return self.model or "holomorphic_contact"


_CONVERTERS = {
    "model": _choice(*MODELS),
    "alpha1": str, "alpha2": str, "Z1": str, "Z2": str,
    "resolution": int,
    "resolutions": _ints,
    "seed": int,
    "output": str,
    "tol": float,
    "points": int,
    "type": _ints,
    "point": _floats,
    "pivot": _choice("reeb", "max"),
    "fixture": _choice(*BASE_FIXTURES),
    "coeffs": _complexes,
    "perturb_amplitude": float,
    "perturb_component": _component,
    "perturb_radius": float,
    "defect_order": int,
    "defect_amplitude": float,
    "data": _choice("manufactured", "zero"),
    "boundary_mode": _choice("pinned", "least_squares"),
    "max_iters": int,
    "damping": float,
    "residual_target": float,
    "admissibility_guard": _bool,
    "s_order": int,
    "center": _floats,
    "order": int,
    "eps": float,
    "t_samples": int,
    "homotopy_target": float,
}


def _validate(cfg: RunConfig) -> None:
    def bad(key, msg):
        raise ParseError(f"{key}: {msg}", cfg.sources.get(key))

    if cfg.resolution < 2:
        bad("resolution", "must be at least 2")
    if any(r < 2 for r in cfg.resolutions):
        bad("resolutions", "every resolution must be at least 2")
    if cfg.type is not None and len(cfg.type) != 2:
        bad("type", "expected two integers k n")
    if cfg.type is not None and not 0 < cfg.type[0] < cfg.type[1]:
        bad("type", "need 0 < k < n")
    if len(cfg.point) != 6:
        bad("point", "expected six coordinates")
    if len(cfg.center) != 2:
        bad("center", "expected two coordinates")
    if len(cfg.coeffs) > 5:
        bad("coeffs", "at most five coefficients (degree 4)")
    if cfg.points < 1:
        bad("points", "must be positive")


def apply_setting(cfg: RunConfig, key: str, value: str, location: str) -> None:
    key = key.strip()
    if key not in _CONVERTERS:
        raise ParseError(f"unknown key {key!r}", location)
    try:
        setattr(cfg, key, _CONVERTERS[key](value.strip()))
    except ValueError as exc:
        raise ParseError(f"bad value for {key}: {exc}", location) from None
    cfg.sources[key] = location


def parse_config_text(text: str, name: str = "<config>", cfg: Optional[RunConfig] = None) -> RunConfig:
    cfg = cfg if cfg is not None else RunConfig()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError("expected 'key = value'", f"{name}:{lineno}")
        key, value = line.split("=", 1)
        apply_setting(cfg, key, value, f"{name}:{lineno}")
    return cfg


def load_config(path=None, overrides=()) -> RunConfig:
    """Read ``path`` (optional) and apply ``overrides``, a sequence of ``(key, value, location)``."""
    cfg = RunConfig()
    if path is not None:
        p = Path(path)
        try:
            text = p.read_text()
        except OSError as exc:
            raise ParseError(f"cannot read config: {exc.strerror}", str(p)) from None
        parse_config_text(text, str(p), cfg)
    for key, value, location in overrides:
        apply_setting(cfg, key, value, location)
    _validate(cfg)
    # parse expressions eagerly so errors surface before any work is done
    cfg.distribution()
    return cfg
