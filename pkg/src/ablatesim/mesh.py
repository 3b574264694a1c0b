"""Structured triangle mesh of the ablation channel with tagged boundary edges.

The computational domain is the rectangle [0, L] x [0, H].  Boundary tags:

    G1 = left side   (x = 0)         inflow
    G2 = bottom side (y = 0)         wall
    G3 = right side  (x = L)         outlet
    G4 = top side outside electrode  wall
    G5 = top side, L/2 - r <= x <= L/2 + r   electrode segment

The electrode is modeled as a flat segment of length 2r on the top edge
(negligible thickness), so a structured grid with grid lines at L/2 +- r
resolves it exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

GAMMA1, GAMMA2, GAMMA3, GAMMA4, GAMMA5 = 1, 2, 3, 4, 5
ALL_TAGS = (GAMMA1, GAMMA2, GAMMA3, GAMMA4, GAMMA5)

SNAP_TOL = 1e-12


class MeshError(ValueError):
    """Invalid mesh or geometry specification."""


@dataclass
class GeometrySpec:
    """Channel geometry: lengths L, H, electrode half-width r, subdivisions."""

    L: float = 1.5
    H: float = 0.5
    r: float = 0.075
    nx: int = 48
    ny: int = 16

    def validate(self) -> None:
        if not (self.L > 0 and self.H > 0):
            raise MeshError(f"L and H must be positive, got L={self.L}, H={self.H}")
        if not (0 < 2 * self.r < self.L):
            raise MeshError(f"need 0 < 2r < L, got r={self.r}, L={self.L}")
        if self.nx < 2 or self.ny < 2:
            raise MeshError(f"nx, ny must be >= 2, got nx={self.nx}, ny={self.ny}")
        span_counts(self)

    def x_grid(self) -> np.ndarray:
        """x grid lines with L/2 +- r placed exactly.

        The three spans [0, L/2-r], the electrode, and [L/2+r, L] are each
        uniform with cell counts rounded from the target spacing L/nx; the
        total stays exactly nx.  When the uniform grid already aligns (e.g.
        nx=20 for the default channel geometry) this reduces to the uniform grid
        with the two electrode lines snapped to within 1e-12.
        """
        n1, n2, n3 = span_counts(self)
        xe_lo = 0.5 * self.L - self.r
        xe_hi = 0.5 * self.L + self.r
        return np.concatenate([
            np.linspace(0.0, xe_lo, n1 + 1)[:-1],
            np.linspace(xe_lo, xe_hi, n2 + 1)[:-1],
            np.linspace(xe_hi, self.L, n3 + 1),
        ])


def span_counts(spec: GeometrySpec) -> tuple[int, int, int]:
    """Cells per x span (left wall, electrode, right wall), summing to nx.

    Rejects specs whose target spacing is too coarse to register the
    electrode (its proportional cell count rounds to zero), i.e. no grid
    line can be placed at L/2 - r without distorting the grid beyond the
    per-span rounding rule.
    """
    prop = 2.0 * spec.r * spec.nx / spec.L  # electrode cells at uniform spacing
    n2 = int(round(prop))
    if n2 == 0:
        raise MeshError(
            f"no grid line at x={0.5 * spec.L - spec.r:.6g} for nx={spec.nx}; "
            "increase nx so the electrode segment is resolved"
        )
    if (spec.nx - n2) % 2 != 0:
        candidates = [n for n in (n2 - 1, n2 + 1) if n >= 1 and n <= spec.nx - 2]
        if not candidates:
            raise MeshError(f"cannot split nx={spec.nx} cells around the electrode")
        n2 = min(candidates, key=lambda n: abs(n - prop))
    if n2 > spec.nx - 2:
        raise MeshError(
            f"nx={spec.nx} leaves no cells for the wall spans beside the electrode"
        )
    n1 = (spec.nx - n2) // 2
    return n1, n2, n1


class Mesh2D:
    """Immutable conforming triangle mesh with tagged boundary edges.

    Attributes:
        vertices: (NV, 2) float array of coordinates.
        triangles: (NT, 3) int array, counterclockwise vertex indices.
        boundary_edges: (NB, 2) int array of vertex pairs.
        boundary_tags: (NB,) int array, one tag per boundary edge.
        areas: (NT,) positive triangle areas.
        h: (NT,) per-triangle diameter = longest edge.
    """

    def __init__(self, vertices, triangles, boundary_edges, boundary_tags):
        self.vertices = np.asarray(vertices, dtype=float)
        self.triangles = np.asarray(triangles, dtype=np.int64)
        self.boundary_edges = np.asarray(boundary_edges, dtype=np.int64)
        self.boundary_tags = np.asarray(boundary_tags, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise MeshError("vertices must have shape (NV, 2)")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise MeshError("triangles must have shape (NT, 3)")
        if self.boundary_edges.shape[0] != self.boundary_tags.shape[0]:
            raise MeshError("one tag per boundary edge required")

        p = self.vertices
        t = self.triangles
        d1 = p[t[:, 1]] - p[t[:, 0]]
        d2 = p[t[:, 2]] - p[t[:, 0]]
        self.areas = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        if np.any(self.areas <= 0.0):
            bad = int(np.argmin(self.areas))
            raise MeshError(
                f"triangle {bad} has non-positive area {self.areas[bad]:.3e} "
                "(degenerate or clockwise orientation)"
            )
        edges = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        lengths = np.linalg.norm(p[edges[:, 1]] - p[edges[:, 0]], axis=1)
        self.h = lengths.reshape(3, -1).max(axis=0)

        self._validate_boundary()
        self.vertices.setflags(write=False)
        self.triangles.setflags(write=False)
        self.boundary_edges.setflags(write=False)
        self.boundary_tags.setflags(write=False)

    # -- topology ------------------------------------------------------------

    def _edge_use_counts(self) -> dict:
        counts: dict = {}
        for tri in self.triangles:
            for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
                key = (int(min(a, b)), int(max(a, b)))
                counts[key] = counts.get(key, 0) + 1
        return counts

    def _validate_boundary(self) -> None:
        counts = self._edge_use_counts()
        topo_boundary = {k for k, c in counts.items() if c == 1}
        if any(c > 2 for c in counts.values()):
            raise MeshError("non-manifold edge: shared by more than 2 triangles")
        tagged = {}
        for (a, b), tag in zip(self.boundary_edges, self.boundary_tags):
            key = (int(min(a, b)), int(max(a, b)))
            if key in tagged:
                raise MeshError(f"edge {key} tagged more than once")
            if int(tag) not in ALL_TAGS:
                raise MeshError(f"unknown boundary tag {int(tag)} on edge {key}")
            tagged[key] = int(tag)
        if set(tagged) != topo_boundary:
            missing = topo_boundary - set(tagged)
            extra = set(tagged) - topo_boundary
            raise MeshError(
                f"tagged edges must cover the topological boundary exactly "
                f"(missing {len(missing)}, spurious {len(extra)})"
            )

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_triangles(self) -> int:
        return self.triangles.shape[0]

    def boundary_edge_owners(self) -> np.ndarray:
        """Index of the unique triangle adjacent to each boundary edge."""
        owner_of = {}
        for it, tri in enumerate(self.triangles):
            for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
                owner_of.setdefault((int(min(a, b)), int(max(a, b))), it)
        owners = np.empty(self.boundary_edges.shape[0], dtype=np.int64)
        for k, (a, b) in enumerate(self.boundary_edges):
            owners[k] = owner_of[(int(min(a, b)), int(max(a, b)))]
        return owners

    def boundary_outward_normals(self) -> np.ndarray:
        """(NB, 2) unit outward normals, oriented away from the owner triangle."""
        owners = self.boundary_edge_owners()
        p = self.vertices
        e0 = p[self.boundary_edges[:, 0]]
        e1 = p[self.boundary_edges[:, 1]]
        tang = e1 - e0
        nrm = np.stack([tang[:, 1], -tang[:, 0]], axis=1)
        nrm /= np.linalg.norm(nrm, axis=1)[:, None]
        centroids = p[self.triangles[owners]].mean(axis=1)
        mids = 0.5 * (e0 + e1)
        flip = np.einsum("ij,ij->i", nrm, centroids - mids) > 0.0
        nrm[flip] *= -1.0
        return nrm

    def boundary_vertices_with_tag(self, tag: int) -> np.ndarray:
        """Sorted unique vertex indices lying on edges of the given tag."""
        sel = self.boundary_tags == tag
        return np.unique(self.boundary_edges[sel].ravel())


def generate_channel_mesh(spec: GeometrySpec) -> Mesh2D:
    """Build the structured nx-by-ny channel mesh of the rectangle [0,L]x[0,H].

    Each grid cell is split into two counterclockwise triangles; the x grid
    places vertices exactly at the electrode endpoints L/2 +- r (see
    :meth:`GeometrySpec.x_grid`), so the G5 tag aligns with element edges.
    """
    spec.validate()
    L, H, r, nx, ny = spec.L, spec.H, spec.r, spec.nx, spec.ny

    x = spec.x_grid()
    y = np.linspace(0.0, H, ny + 1)

    xx, yy = np.meshgrid(x, y, indexing="xy")
    vertices = np.column_stack([xx.ravel(), yy.ravel()])

    def vid(i, j):
        return j * (nx + 1) + i

    triangles = []
    for j in range(ny):
        for i in range(nx):
            v00 = vid(i, j)
            v10 = vid(i + 1, j)
            v01 = vid(i, j + 1)
            v11 = vid(i + 1, j + 1)
            triangles.append((v00, v10, v11))
            triangles.append((v00, v11, v01))

    edges = []
    tags = []
    for j in range(ny):  # left / right columns
        edges.append((vid(0, j), vid(0, j + 1)))
        tags.append(GAMMA1)
        edges.append((vid(nx, j), vid(nx, j + 1)))
        tags.append(GAMMA3)
    for i in range(nx):  # bottom row
        edges.append((vid(i, 0), vid(i + 1, 0)))
        tags.append(GAMMA2)
    xe_lo, xe_hi = 0.5 * L - r, 0.5 * L + r
    for i in range(nx):  # top row: electrode segment vs remaining wall
        a, b = vid(i, ny), vid(i + 1, ny)
        inside = (x[i] >= xe_lo - SNAP_TOL) and (x[i + 1] <= xe_hi + SNAP_TOL)
        edges.append((a, b))
        tags.append(GAMMA5 if inside else GAMMA4)

    return Mesh2D(vertices, triangles, edges, tags)


def boundary_edges_with_tag(mesh: Mesh2D, tag: int) -> list[tuple[int, int]]:
    """Edges carrying ``tag``, ordered by increasing arclength along their side."""
    if tag not in ALL_TAGS:
        raise MeshError(f"unknown tag {tag}")
    sel = mesh.boundary_tags == tag
    edges = [tuple(int(v) for v in e) for e in mesh.boundary_edges[sel]]
    p = mesh.vertices

    def midpoint_key(edge):
        m = 0.5 * (p[edge[0]] + p[edge[1]])
        return (m[0], m[1])

    return sorted(edges, key=midpoint_key)


def mesh_quality_report(mesh: Mesh2D) -> dict:
    """Min angle (degrees), max edge-length aspect ratio, h_min, h_max."""
    p = mesh.vertices
    t = mesh.triangles
    corners = p[t]  # (NT, 3, 2)
    min_angle = np.inf
    max_aspect = 0.0
    for k in range(3):
        a = corners[:, k]
        b = corners[:, (k + 1) % 3]
        c = corners[:, (k + 2) % 3]
        u = b - a
        v = c - a
        cosang = np.einsum("ij,ij->i", u, v) / (
            np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1)
        )
        ang = np.degrees(np.arccos(np.clip(cosang, -1.0, 1.0)))
        min_angle = min(min_angle, float(ang.min()))
    lengths = np.stack(
        [
            np.linalg.norm(corners[:, 1] - corners[:, 0], axis=1),
            np.linalg.norm(corners[:, 2] - corners[:, 1], axis=1),
            np.linalg.norm(corners[:, 0] - corners[:, 2], axis=1),
        ]
    )
    max_aspect = float((lengths.max(axis=0) / lengths.min(axis=0)).max())
    return {
        "min_angle": float(min_angle),
        "max_aspect": max_aspect,
        "h_min": float(mesh.h.min()),
        "h_max": float(mesh.h.max()),
    }


# -- plain-text mesh format ---------------------------------------------------
#
#   MESH2D v1
#   NV <n>      followed by n lines "x y"
#   NT <m>      followed by m lines "i j k"
#   NB <p>      followed by p lines "i j tag"
#
# Indices are 0-based; tags are the integers 1..5 for G1..G5.


def save_mesh(mesh: Mesh2D, path) -> None:
    lines = ["MESH2D v1", f"NV {mesh.num_vertices}"]
    lines += [f"{repr(float(x))} {repr(float(y))}" for x, y in mesh.vertices]
    lines.append(f"NT {mesh.num_triangles}")
    lines += [f"{a} {b} {c}" for a, b, c in mesh.triangles]
    lines.append(f"NB {mesh.boundary_edges.shape[0]}")
    lines += [
        f"{a} {b} {tag}"
        for (a, b), tag in zip(mesh.boundary_edges, mesh.boundary_tags)
    ]
    with open(path, "w", encoding="ascii", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def load_mesh(path) -> Mesh2D:
    with open(path, "r", encoding="ascii") as f:
        tokens = f.read().split("\n")
    it = iter(tok for tok in tokens if tok.strip())
    header = next(it).strip()
    if header != "MESH2D v1":
        raise MeshError(f"bad mesh file header: {header!r}")

    def expect_count(kw):
        line = next(it).split()
        if line[0] != kw:
            raise MeshError(f"expected {kw} section, got {line[0]!r}")
        return int(line[1])

    nv = expect_count("NV")
    vertices = np.array([[float(w) for w in next(it).split()] for _ in range(nv)])
    nt = expect_count("NT")
    triangles = np.array([[int(w) for w in next(it).split()] for _ in range(nt)])
    nb = expect_count("NB")
    rows = [[int(w) for w in next(it).split()] for _ in range(nb)]
    edges = np.array([[a, b] for a, b, _ in rows])
    tags = np.array([tag for _, _, tag in rows])
    return Mesh2D(vertices, triangles, edges, tags)
