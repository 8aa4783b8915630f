"""Triangulated unit disc, piecewise-linear maps into R^6, pullbacks and graded norms."""

from __future__ import annotations

import csv
import json
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from .errors import CapabilityError, DomainError, ParseError
from .geometry import CorankTwoDistribution

MAX_NORM_ORDER = 3


@dataclass(frozen=True, eq=False)
class DiscMesh:
    nodes: np.ndarray
    elements: np.ndarray
    boundary_nodes: np.ndarray
    h: float
    resolution: int = 0
    # geometric caches, filled in __post_init__
    areas: np.ndarray = field(init=False, repr=False)
    grads: np.ndarray = field(init=False, repr=False)
    barycenters: np.ndarray = field(init=False, repr=False)
    edge_fit: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        elements = np.asarray(self.elements, dtype=np.int64)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "elements", elements)
        object.__setattr__(self, "boundary_nodes", np.asarray(self.boundary_nodes, dtype=np.int64))
        p = nodes[elements]
        E = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=-1)  # columns are edge vectors
        det = E[:, 0, 0] * E[:, 1, 1] - E[:, 0, 1] * E[:, 1, 0]
        object.__setattr__(self, "areas", 0.5 * det)
        ref = np.array([[-1.0, 1.0, 0.0], [-1.0, 0.0, 1.0]])
        grads = np.linalg.solve(np.swapaxes(E, 1, 2), np.broadcast_to(ref, (len(elements), 2, 3)))
        object.__setattr__(self, "grads", grads)
        object.__setattr__(self, "barycenters", p.mean(axis=1))
        D = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]], axis=1)
        object.__setattr__(self, "edge_fit", np.linalg.pinv(D))

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def interior_nodes(self) -> np.ndarray:
        mask = np.ones(self.n_nodes, dtype=bool)
        mask[self.boundary_nodes] = False
        return np.flatnonzero(mask)

    def gradient(self, nodal) -> np.ndarray:
        """Elementwise gradient of the P1 interpolant; shape ``(Ne, 2, ...)``."""
        u = np.asarray(nodal, dtype=float)[self.elements]  # (Ne, 3, ...)
        return np.einsum("eij,ej...->ei...", self.grads, u)

    def averaging_matrix(self) -> sp.csr_matrix:
        """Area-weighted element-to-node averaging."""
        rows = self.elements.ravel()
        cols = np.repeat(np.arange(self.n_elements), 3)
        w = np.repeat(self.areas, 3)
        S = sp.csr_matrix((w, (rows, cols)), shape=(self.n_nodes, self.n_elements))
        return sp.diags(1.0 / np.asarray(S.sum(axis=1)).ravel()) @ S

    def to_nodes(self, elemental) -> np.ndarray:
        v = np.asarray(elemental, dtype=float)
        flat = v.reshape(len(v), -1)
        return (self.averaging_matrix() @ flat).reshape((self.n_nodes,) + v.shape[1:])

    def lumped_mass(self) -> np.ndarray:
        m = np.zeros(self.n_nodes)
        np.add.at(m, self.elements.ravel(), np.repeat(self.areas / 3.0, 3))
        return m

    def l2_norm(self, nodal) -> float:
        u = np.asarray(nodal, dtype=float).reshape(self.n_nodes, -1)
        return float(np.sqrt(np.sum(self.lumped_mass()[:, None] * u ** 2)))

    def boundary_distance(self) -> np.ndarray:
        """Graph distance (in edges) from each node to the boundary."""
        adj = [[] for _ in range(self.n_nodes)]
        for a, b, c in self.elements:
            adj[a] += (b, c)
            adj[b] += (a, c)
            adj[c] += (a, b)
        dist = np.full(self.n_nodes, -1, dtype=np.int64)
        queue = deque(self.boundary_nodes.tolist())
        dist[self.boundary_nodes] = 0
        while queue:
            i = queue.popleft()
            for j in adj[i]:
                if dist[j] < 0:
                    dist[j] = dist[i] + 1
                    queue.append(j)
        return dist

    def edges(self) -> np.ndarray:
        e = np.concatenate([self.elements[:, [0, 1]], self.elements[:, [1, 2]], self.elements[:, [2, 0]]])
        return np.unique(np.sort(e, axis=1), axis=0)

    def check(self) -> list:
        """Return a list of violated mesh invariants (empty when valid)."""
        problems = []
        r = np.linalg.norm(self.nodes[self.boundary_nodes], axis=1)
        if np.max(np.abs(r - 1.0)) > 1e-12:
            problems.append("boundary node off the unit circle")
        if np.min(self.areas) <= 0:
            problems.append("non-positive element area")
        e = np.concatenate([self.elements[:, [0, 1]], self.elements[:, [1, 2]], self.elements[:, [2, 0]]])
        _, counts = np.unique(np.sort(e, axis=1), axis=0, return_counts=True)
        if np.any(counts > 2):
            problems.append("edge shared by more than two elements")
        # directed edges appear at most once in a consistently oriented conforming mesh
        if len(np.unique(e, axis=0)) != len(e):
            problems.append("inconsistent orientation")
        n_boundary_edges = int(np.sum(counts == 1))
        if n_boundary_edges != len(self.boundary_nodes):
            problems.append("boundary edges do not match boundary nodes")
        return problems


def build_disc_mesh(resolution: int) -> DiscMesh:
    """Concentric-ring triangulation of the unit disc.

    Ring ``k = 1..m`` carries ``6k`` equally spaced nodes at radius ``k / m``
    and consecutive rings are stitched along the shorter diagonal.  With
    ``m = ceil(0.7 * resolution)`` the largest element diameter is close to
    ``2 / resolution``.
    """
    if resolution < 2:
        raise DomainError("resolution must be >= 2")
    m = math.ceil(0.7 * resolution)
    nodes = [(0.0, 0.0)]
    rings = [[0]]
    for k in range(1, m + 1):
        n = 6 * k
        idx = []
        for j in range(n):
            t = 2.0 * math.pi * j / n
            r = k / m
            idx.append(len(nodes))
            nodes.append((r * math.cos(t), r * math.sin(t)) if k < m else (math.cos(t), math.sin(t)))
        rings.append(idx)

    elements = []
    for k in range(1, m + 1):
        inner, outer = rings[k - 1], rings[k]
        if k == 1:
            for j in range(6):
                elements.append((0, outer[j], outer[(j + 1) % 6]))
            continue
        ni, no = len(inner), len(outer)
        pts = np.array(nodes)
        i = o = 0
        while i < ni or o < no:
            # stitch with the shorter of the two candidate diagonals
            if i >= ni:
                advance_outer = True
            elif o >= no:
                advance_outer = False
            else:
                d_out = np.linalg.norm(pts[inner[i % ni]] - pts[outer[(o + 1) % no]])
                d_in = np.linalg.norm(pts[inner[(i + 1) % ni]] - pts[outer[o % no]])
                advance_outer = d_out <= d_in
            if advance_outer:
                elements.append((inner[i % ni], outer[o % no], outer[(o + 1) % no]))
                o += 1
            else:
                elements.append((inner[i % ni], outer[o % no], inner[(i + 1) % ni]))
                i += 1
    nodes = np.array(nodes)
    elements = np.array(elements, dtype=np.int64)
    p = nodes[elements]
    det = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0])
    flip = det < 0
    elements[flip] = elements[flip][:, [0, 2, 1]]
    p = nodes[elements]
    diam = np.max(np.stack([np.linalg.norm(p[:, a] - p[:, b], axis=1) for a, b in ((0, 1), (1, 2), (2, 0))]), axis=0)
    return DiscMesh(nodes, elements, np.array(rings[-1]), float(diam.max()), resolution)


# ---------------------------------------------------------------------------
# maps and one-form fields


@dataclass(frozen=True, eq=False)
class MeshMap:
    """Nodal values of a map from the disc to R^6 and its elementwise jacobian."""

    mesh: DiscMesh
    values: np.ndarray
    jac: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.mesh.n_nodes, 6):
            raise DomainError(f"expected values of shape ({self.mesh.n_nodes}, 6), got {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        jac = np.swapaxes(self.mesh.gradient(v), 1, 2)  # (Ne, 6, 2)
        jac.setflags(write=False)
        object.__setattr__(self, "jac", jac)

    @classmethod
    def from_function(cls, mesh: DiscMesh, func: Callable[[np.ndarray], np.ndarray]) -> "MeshMap":
        return cls(mesh, np.asarray(func(mesh.nodes), dtype=float))

    def barycenter_values(self) -> np.ndarray:
        return self.values[self.mesh.elements].mean(axis=1)

    def displaced(self, increment) -> "MeshMap":
        return MeshMap(self.mesh, self.values + np.asarray(increment, dtype=float))


@dataclass(frozen=True, eq=False)
class OneFormField:
    """Elementwise constant one-form ``P1 dx + P2 dy``; ``values`` has shape (Ne, 2)."""

    mesh: DiscMesh
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.mesh.n_elements, 2):
            raise DomainError(f"expected values of shape ({self.mesh.n_elements}, 2), got {v.shape}")
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, mesh: DiscMesh) -> "OneFormField":
        return cls(mesh, np.zeros((mesh.n_elements, 2)))

    @classmethod
    def from_function(cls, mesh: DiscMesh, func) -> "OneFormField":
        """Sample ``func(points) -> (..., 2)`` at element barycenters."""
        return cls(mesh, np.asarray(func(mesh.barycenters), dtype=float))

    def __add__(self, other):
        return OneFormField(self.mesh, self.values + other.values)

    def __sub__(self, other):
        return OneFormField(self.mesh, self.values - other.values)

    def __neg__(self):
        return OneFormField(self.mesh, -self.values)

    def __mul__(self, c):
        c = np.asarray(c, dtype=float)
        if c.ndim == 1:
            c = c[:, None]
        return OneFormField(self.mesh, self.values * c)

    __rmul__ = __mul__

    def sup(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0


def edge_midpoints(mesh: DiscMesh) -> np.ndarray:
    """Midpoints ``(Ne, 3, 2)`` of the element edges ``(v0 v1, v1 v2, v2 v0)``."""
    p = mesh.nodes[mesh.elements]
    return 0.5 * (p + p[:, [1, 2, 0]])


def chord_integrals(dist: CorankTwoDistribution, f: MeshMap, which: int) -> np.ndarray:
    """Midpoint-rule integrals ``(Ne, 3)`` of ``alpha_which`` along the image chords of each element's edges."""
    if which not in (1, 2):
        raise DomainError("which must be 1 or 2")
    form = dist.alpha1 if which == 1 else dist.alpha2
    fv = f.values[f.mesh.elements]  # (Ne, 3, 6)
    nxt = fv[:, [1, 2, 0]]
    return np.einsum("eki,eki->ek", form.coefficients(0.5 * (fv + nxt)), nxt - fv)


def fit_edge_values(mesh: DiscMesh, values) -> OneFormField:
    """Least-squares constant one-form per element with the given edge integrals."""
    return OneFormField(mesh, np.einsum("eik,ek->ei", mesh.edge_fit, np.asarray(values, dtype=float)))


def pullback(dist: CorankTwoDistribution, f: MeshMap, which: int) -> OneFormField:
    """Discrete ``f^* alpha_which`` as an elementwise constant one-form.

    Each edge integral of ``alpha`` along the image chord is taken with the
    midpoint rule; the constant form on an element is the least-squares fit to
    its three edge integrals.  For forms with affine coefficients this is
    exact along the chords, so quadratic horizontal maps have zero pullback.
    """
    return fit_edge_values(f.mesh, chord_integrals(dist, f, which))


def horizontality_operator(dist: CorankTwoDistribution, f: MeshMap) -> tuple:
    """``(f^* alpha1, f^* alpha2)``."""
    return pullback(dist, f, 1), pullback(dist, f, 2)


# ---------------------------------------------------------------------------
# graded norms


def _as_field(fld, mesh: Optional[DiscMesh]):
    """Normalize to (mesh, values, kind) with kind in {'node', 'element'}."""
    if isinstance(fld, OneFormField):
        return fld.mesh, fld.values, "element"
    if isinstance(fld, (tuple, list)) and fld and all(isinstance(x, OneFormField) for x in fld):
        return fld[0].mesh, np.concatenate([x.values for x in fld], axis=1), "element"
    if isinstance(fld, MeshMap):
        return fld.mesh, fld.values, "node"
    if hasattr(fld, "assembled") and hasattr(fld, "mesh"):
        return fld.mesh, fld.assembled, "node"
    if mesh is None:
        raise DomainError("raw arrays need an explicit mesh")
    arr = np.asarray(fld, dtype=float)
    if len(arr) == mesh.n_nodes:
        return mesh, arr, "node"
    if len(arr) == mesh.n_elements:
        return mesh, arr, "element"
    raise DomainError("field length matches neither nodes nor elements")


def _monomials(degree: int) -> list:
    return [(i, k - i) for k in range(degree + 1) for i in range(k, -1, -1)]


def local_derivatives(samples, values, at, degree: int, n_neighbors: Optional[int] = None) -> np.ndarray:
    """Derivatives up to ``degree - 1`` at the points ``at`` from local polynomial fits.

    Each point gets a least-squares polynomial of the given degree through its
    nearest samples.  Returns ``(len(at), n_monomials, c)``: entry ``m`` is the
    partial derivative ``d^(i+j) / dx^i dy^j`` for the m-th monomial ``(i, j)``
    of :func:`_monomials`.
    """
    samples = np.asarray(samples, dtype=float)
    values = np.asarray(values, dtype=float).reshape(len(samples), -1)
    at = np.asarray(at, dtype=float)
    mons = _monomials(degree)
    k = min(len(samples), n_neighbors or max(3 * len(mons), 12))
    _, idx = cKDTree(samples).query(at, k=k)
    U = samples[idx] - at[:, None, :]
    scale = np.max(np.linalg.norm(U, axis=2), axis=1)
    scale[scale == 0] = 1.0
    U = U / scale[:, None, None]
    V = np.stack([U[..., 0] ** i * U[..., 1] ** j for i, j in mons], axis=2)
    VT = np.swapaxes(V, 1, 2)
    coef = np.linalg.solve(VT @ V, VT @ values[idx])
    fac = np.array([math.factorial(i) * math.factorial(j) for i, j in mons], dtype=float)
    order = np.array([i + j for i, j in mons])
    return coef * fac[None, :, None] / scale[:, None, None] ** order[None, :, None]


def graded_norm(fld, n: int, mesh: Optional[DiscMesh] = None, region=None) -> float:
    """Cumulative sup-norm of discrete derivatives of total order ``<= n``.

    Order 0 is the plain sup over nodes (or elements, for elementwise
    fields).  For ``m = 1..n`` a local polynomial of degree ``m + 1`` is
    fitted around every interior node and all its derivatives of order
    ``<= m`` enter the supremum.  ``region = (center, radius)`` restricts every
    supremum to that disc.
    """
    if n < 0:
        raise DomainError("order must be nonnegative")
    if n > MAX_NORM_ORDER:
        raise CapabilityError(f"graded norms are supported up to order {MAX_NORM_ORDER}")
    mesh, vals, kind = _as_field(fld, mesh)
    vals = vals.reshape(len(vals), -1)
    samples = mesh.barycenters if kind == "element" else mesh.nodes

    def in_region(points):
        if region is None:
            return np.ones(len(points), dtype=bool)
        c, r = region
        return np.linalg.norm(points - np.asarray(c, dtype=float), axis=1) <= r + 1e-12

    sel = in_region(samples)
    best = float(np.max(np.abs(vals[sel]))) if np.any(sel) and vals.size else 0.0
    if n == 0:
        return best
    at_mask = in_region(mesh.nodes)
    at_mask[mesh.boundary_nodes] = False
    at = mesh.nodes[at_mask]
    if len(at) == 0:
        return best
    for m in range(1, n + 1):
        d = local_derivatives(samples, vals, at, m + 1)
        best = max(best, float(np.max(np.abs(d[:, :len(_monomials(m))]))))
    return best


# ---------------------------------------------------------------------------
# import / export


def save_map_csv(f: MeshMap, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node", "x", "y", "x1", "x2", "y1", "y2", "z1", "z2"])
        for i, ((x, y), v) in enumerate(zip(f.mesh.nodes, f.values)):
            w.writerow([i, repr(float(x)), repr(float(y))] + [repr(float(c)) for c in v])


def load_map_csv(path, mesh: DiscMesh) -> MeshMap:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:3] != ["node", "x", "y"]:
        raise ParseError("missing header", f"{path}:1")
    values = np.zeros((mesh.n_nodes, 6))
    seen = np.zeros(mesh.n_nodes, dtype=bool)
    for lineno, row in enumerate(rows[1:], start=2):
        try:
            i = int(row[0])
            x, y = float(row[1]), float(row[2])
            values[i] = [float(c) for c in row[3:9]]
        except (ValueError, IndexError) as exc:
            raise ParseError(str(exc), f"{path}:{lineno}") from exc
        if np.hypot(x - mesh.nodes[i, 0], y - mesh.nodes[i, 1]) > 1e-9:
            raise ParseError(f"node {i} position does not match the mesh", f"{path}:{lineno}")
        seen[i] = True
    if not seen.all():
        raise ParseError(f"{int((~seen).sum())} nodes missing", str(path))
    return MeshMap(mesh, values)


def map_to_document(f: MeshMap) -> dict:
    m = f.mesh
    return {
        "format": "fatdisc.meshmap/1",
        "resolution": m.resolution,
        "h": m.h,
        "nodes": m.nodes.tolist(),
        "elements": m.elements.tolist(),
        "boundary_nodes": m.boundary_nodes.tolist(),
        "values": f.values.tolist(),
    }


def map_from_document(doc: dict) -> MeshMap:
    if doc.get("format") != "fatdisc.meshmap/1":
        raise ParseError(f"unsupported document format {doc.get('format')!r}")
    mesh = DiscMesh(np.array(doc["nodes"]), np.array(doc["elements"]), np.array(doc["boundary_nodes"]),
                    float(doc["h"]), int(doc.get("resolution", 0)))
    return MeshMap(mesh, np.array(doc["values"]))


def save_map_json(f: MeshMap, path) -> None:
    with open(path, "w") as fh:
        json.dump(map_to_document(f), fh)


def load_map_json(path) -> MeshMap:
    with open(path) as fh:
        return map_from_document(json.load(fh))


def interpolate_map(f: MeshMap, points: Sequence) -> np.ndarray:
    """Evaluate the piecewise-linear interpolant of ``f`` at disc points."""
    from matplotlib.tri import LinearTriInterpolator, Triangulation

    tri = Triangulation(f.mesh.nodes[:, 0], f.mesh.nodes[:, 1], f.mesh.elements)
    pts = np.asarray(points, dtype=float)
    out = np.empty((len(pts), 6))
    for c in range(6):
        vals = LinearTriInterpolator(tri, f.values[:, c])(pts[:, 0], pts[:, 1])
        if np.ma.is_masked(vals):
            raise DomainError("interpolation point outside the mesh")
        out[:, c] = np.asarray(vals)
    return out
