"""Deterministic run reports: JSON and text documents, CSV tables, figures and a metadata file.

Everything that depends only on the configuration goes into ``report.json``,
``report.txt`` and the CSV files, which are byte-identical across runs with
the same configuration.  Wall-clock data (timestamp, timings, host) is kept in
``metadata.json``.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import platform
import sys
import tempfile
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import __version__

SCHEMA = "fatdisc.report/1"


def to_plain(obj):
    """Convert numpy scalars and arrays, tuples and non-finite floats to JSON-safe values."""
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def canonical_json(obj) -> str:
    return json.dumps(to_plain(obj), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def render_text(doc: dict, indent: int = 0) -> str:
    """Indented ``key: value`` rendering; short numeric lists stay on one line."""
    lines = []
    pad = "  " * indent
    for key in sorted(doc):
        val = doc[key]
        if isinstance(val, dict):
            lines.append(f"{pad}{key}:")
            lines.append(render_text(val, indent + 1).rstrip("\n"))
        elif isinstance(val, list) and val and isinstance(val[0], dict):
            lines.append(f"{pad}{key}:")
            for i, item in enumerate(val):
                lines.append(f"{pad}  [{i}]")
                lines.append(render_text(item, indent + 2).rstrip("\n"))
        else:
            lines.append(f"{pad}{key}: {_scalar_text(val)}")
    return "\n".join(line for line in lines if line) + "\n"


def _scalar_text(val) -> str:
    if isinstance(val, float):
        return f"{val:.6e}"
    if isinstance(val, list):
        return "[" + ", ".join(_scalar_text(v) for v in val) + "]"
    if val is None:
        return "-"
    return str(val)


def write_atomic(path, data) -> None:
    """Write text or bytes to ``path`` through a temporary file and ``os.replace``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, (bytes, bytearray)) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


@dataclass
class RunReport:
    """Collects the pieces of one command's output before they are written."""

    command: str
    config: dict
    exit_code: int = 0
    verdict: str = ""
    notes: list = field(default_factory=list)
    results: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)  # name -> (header, rows)
    documents: dict = field(default_factory=dict)  # name -> JSON-able dict
    figures: dict = field(default_factory=dict)  # name -> callable(fig)
    timings: dict = field(default_factory=dict)

    def document(self) -> dict:
        return {
            "schema": SCHEMA,
            "version": __version__,
            "command": self.command,
            "config": self.config,
            "exit_code": self.exit_code,
            "verdict": self.verdict,
            "notes": list(self.notes),
            "results": self.results,
            "files": sorted([f"{n}.csv" for n in self.tables] + [f"{n}.json" for n in self.documents]
                            + [f"{n}.png" for n in self.figures]),
        }

    def json_text(self) -> str:
        return canonical_json(self.document())

    def text(self) -> str:
        doc = to_plain(self.document())
        head = [f"fatdisc {__version__}  {self.command}", f"verdict: {self.verdict}", ""]
        return "\n".join(head) + render_text(doc)

    def metadata(self, argv=None, outdir=None) -> dict:
        return {
            "output": None if outdir is None else str(outdir),
            "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            "version": __version__,
            "command": self.command,
            "argv": list(sys.argv if argv is None else argv),
            "timings_s": self.timings,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "platform": platform.platform(),
        }

    def write(self, outdir, argv=None) -> list:
        """Write every artifact into ``outdir``; returns the written paths."""
        out = Path(outdir)
        written = []

        def put(name, data):
            write_atomic(out / name, data)
            written.append(out / name)

        put("report.json", self.json_text())
        put("report.txt", self.text())
        for name, (header, rows) in sorted(self.tables.items()):
            put(f"{name}.csv", csv_text(header, rows))
        for name, doc in sorted(self.documents.items()):
            put(f"{name}.json", canonical_json(doc))
        for name, draw in sorted(self.figures.items()):
            put(f"{name}.png", render_figure(draw))
        put("metadata.json", canonical_json(self.metadata(argv, out)))
        return written


def render_figure(draw: Callable) -> bytes:
    import matplotlib

    matplotlib.use("Agg")
    from matplotlib.figure import Figure

    fig = Figure(figsize=(5.0, 4.0), dpi=100)
    draw(fig)
    buf = io.BytesIO()
    fig.savefig(buf, format="png", metadata={"Software": None})
    return buf.getvalue()


# ---------------------------------------------------------------------------
# figure helpers


def element_map_figure(mesh, values, title: str, label: str, highlight: Optional[np.ndarray] = None):
    """Piecewise-constant field over the triangulation."""
    def draw(fig):
        import matplotlib.tri as mtri

        ax = fig.add_subplot(111)
        tri = mtri.Triangulation(mesh.nodes[:, 0], mesh.nodes[:, 1], mesh.elements)
        v = np.where(np.isfinite(values), values, np.nan)
        pc = ax.tripcolor(tri, facecolors=v, cmap="viridis")
        fig.colorbar(pc, ax=ax, label=label)
        if highlight is not None and len(highlight):
            c = mesh.barycenters[highlight]
            ax.plot(c[:, 0], c[:, 1], "r.", ms=2)
        ax.set_aspect("equal")
        ax.set_title(title)
    return draw


def history_figure(series: dict, title: str, xlabel: str, ylabel: str, logy: bool = True):
    def draw(fig):
        ax = fig.add_subplot(111)
        for name, (x, y) in sorted(series.items()):
            y = np.maximum(np.asarray(y, dtype=float), 1e-300) if logy else y
            ax.plot(x, y, "o-", label=name)
        if logy:
            ax.set_yscale("log")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.set_title(title)
        ax.legend()
        ax.grid(True, which="both", alpha=0.3)
    return draw


def convergence_figure(h, errors: dict, title: str):
    def draw(fig):
        ax = fig.add_subplot(111)
        for name, e in sorted(errors.items()):
            ax.loglog(h, e, "o-", label=name)
        hh = np.asarray(h)
        ref = np.asarray(next(iter(errors.values())))[0]
        ax.loglog(hh, ref * (hh / hh[0]), "k--", lw=0.8, label="order 1")
        ax.loglog(hh, ref * (hh / hh[0]) ** 2, "k:", lw=0.8, label="order 2")
        ax.set_xlabel("h")
        ax.set_ylabel("error")
        ax.set_title(title)
        ax.legend()
        ax.grid(True, which="both", alpha=0.3)
    return draw
