"""Structured rectangular and (structured or imported) triangular meshes.

A mesh is immutable after construction and holds complete edge topology:
every edge knows its left/right cells, the local edge index inside each, the
outward normal as seen from the left cell, and a boundary tag. Local edge
``i`` of a cell connects its vertices ``i`` and ``i+1`` (counterclockwise),
so outward normals follow from orientation alone.

The import format is plain ASCII, whitespace separated, ``#`` comments:
vertex count, ``x y`` lines, element count, 1-based ``i j k`` lines, and
optional ``tag <name> <v1> <v2>`` lines marking boundary edges.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["Mesh", "MeshError", "build_rect_mesh", "build_tri_mesh_from_rect", "import_tri_mesh"]

INTERIOR = 0


class MeshError(ValueError):
    """Invalid mesh construction input."""


@dataclass(frozen=True)
class Mesh:
    kind: str  # "rect" | "tri"
    vertices: np.ndarray  # (nv, 2)
    cells: np.ndarray  # (nc, 3|4) vertex ids, counterclockwise
    cell_areas: np.ndarray  # (nc,)
    centroids: np.ndarray  # (nc, 2)
    edge_vertices: np.ndarray  # (ne, 2)
    edge_lengths: np.ndarray  # (ne,)
    edge_normals: np.ndarray  # (ne, 2) outward from the left cell
    edge_cells: np.ndarray  # (ne, 2) left, right (-1 on the boundary)
    edge_local: np.ndarray  # (ne, 2) local edge index in left/right cell
    edge_tags: np.ndarray  # (ne,) index into tag_names, 0 = interior
    tag_names: tuple
    cell_edges: np.ndarray  # (nc, 3|4)
    cell_neighbors: np.ndarray  # (nc, 3|4), -1 across the boundary
    structured: dict = field(default_factory=dict)  # nx/ny/dx/dy/origin when regular

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_edges(self) -> int:
        return len(self.edge_vertices)

    @property
    def boundary_edges(self) -> np.ndarray:
        return np.flatnonzero(self.edge_cells[:, 1] < 0)

    def cell_vertices(self, i: int) -> np.ndarray:
        return self.vertices[self.cells[i]]


def _polygon_areas(vertices: np.ndarray, cells: np.ndarray) -> np.ndarray:
    pts = vertices[cells]  # (nc, m, 2)
    x, y = pts[..., 0], pts[..., 1]
    xn, yn = np.roll(x, -1, axis=1), np.roll(y, -1, axis=1)
    return 0.5 * np.sum(x * yn - xn * y, axis=1)


def _build_topology(vertices, cells, kind, boundary_tagger, tag_names, structured=None):
    """Derive edges, normals, and neighbor maps from cell connectivity."""
    cells = np.asarray(cells, dtype=np.int64)
    nverts_per_cell = cells.shape[1]
    areas = _polygon_areas(vertices, cells)
    if np.any(areas <= 0.0):
        bad = int(np.flatnonzero(areas <= 0.0)[0])
        raise MeshError(f"cell {bad} has non-positive area")
    centroids = vertices[cells].mean(axis=1)

    edge_map: dict[tuple[int, int], int] = {}
    ev, e_left, e_right, el_left, el_right = [], [], [], [], []
    for c in range(len(cells)):
        for loc in range(nverts_per_cell):
            a = int(cells[c, loc])
            b = int(cells[c, (loc + 1) % nverts_per_cell])
            key = (a, b) if a < b else (b, a)
            if key not in edge_map:
                edge_map[key] = len(ev)
                ev.append((a, b))
                e_left.append(c)
                el_left.append(loc)
                e_right.append(-1)
                el_right.append(-1)
            else:
                idx = edge_map[key]
                if e_right[idx] != -1:
                    raise MeshError(
                        f"edge {key} referenced by more than two cells"
                    )
                e_right[idx] = c
                el_right[idx] = loc

    edge_vertices = np.array(ev, dtype=np.int64)
    edge_cells = np.stack([e_left, e_right], axis=-1).astype(np.int64)
    edge_local = np.stack([el_left, el_right], axis=-1).astype(np.int64)
    d = vertices[edge_vertices[:, 1]] - vertices[edge_vertices[:, 0]]
    lengths = np.hypot(d[:, 0], d[:, 1])
    # counterclockwise cells: outward normal is the edge direction rotated -90
    normals = np.stack([d[:, 1], -d[:, 0]], axis=-1) / lengths[:, None]

    tags = np.zeros(len(edge_vertices), dtype=np.int64)
    for e in np.flatnonzero(edge_cells[:, 1] < 0):
        tags[e] = boundary_tagger(edge_vertices[e], normals[e])

    cell_edges = np.full((len(cells), nverts_per_cell), -1, dtype=np.int64)
    cell_neighbors = np.full((len(cells), nverts_per_cell), -1, dtype=np.int64)
    for e in range(len(edge_vertices)):
        lc, rc = edge_cells[e]
        cell_edges[lc, edge_local[e, 0]] = e
        if rc >= 0:
            cell_edges[rc, edge_local[e, 1]] = e
            cell_neighbors[lc, edge_local[e, 0]] = rc
            cell_neighbors[rc, edge_local[e, 1]] = lc

    return Mesh(
        kind=kind,
        vertices=np.asarray(vertices, dtype=float),
        cells=cells,
        cell_areas=areas,
        centroids=centroids,
        edge_vertices=edge_vertices,
        edge_lengths=lengths,
        edge_normals=normals,
        edge_cells=edge_cells,
        edge_local=edge_local,
        edge_tags=tags,
        tag_names=tuple(tag_names),
        cell_edges=cell_edges,
        cell_neighbors=cell_neighbors,
        structured=structured or {},
    )


def _side_tagger(x0, x1, y0, y1, tag_names):
    tol = 1e-9 * max(x1 - x0, y1 - y0)

    def tagger(verts_ids_unused, normal):
        nx, ny = normal
        if nx < -0.5:
            return tag_names.index("left")
        if nx > 0.5:
            return tag_names.index("right")
        if ny < -0.5:
            return tag_names.index("bottom")
        return tag_names.index("top")

    return tagger


RECT_TAGS = ("interior", "left", "right", "bottom", "top")


def build_rect_mesh(domain, h: float) -> Mesh:
    """Uniform rectangle mesh over ``domain = (x0, x1, y0, y1)``.

    ``nx = round(width / h)`` cells per direction; the stored spacings are
    the exact quotients, so the domain is covered without remainder.
    """
    x0, x1, y0, y1 = map(float, domain)
    if x1 <= x0 or y1 <= y0 or h <= 0.0:
        raise MeshError("domain extents and h must be positive")
    nx = max(1, round((x1 - x0) / h))
    ny = max(1, round((y1 - y0) / h))
    dx = (x1 - x0) / nx
    dy = (y1 - y0) / ny
    xs = x0 + dx * np.arange(nx + 1)
    ys = y0 + dy * np.arange(ny + 1)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    vertices = np.stack([gx.ravel(), gy.ravel()], axis=-1)

    def vid(i, j):
        return i * (ny + 1) + j

    i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    i, j = i.ravel(), j.ravel()
    cells = np.stack(
        [vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)], axis=-1
    )
    structured = {"nx": nx, "ny": ny, "dx": dx, "dy": dy, "origin": (x0, y0)}
    return _build_topology(
        vertices, cells, "rect", _side_tagger(x0, x1, y0, y1, list(RECT_TAGS)),
        RECT_TAGS, structured,
    )


def build_tri_mesh_from_rect(domain, h: float, split: str = "four-way") -> Mesh:
    """Triangulate a uniform rectangle mesh.

    ``two-way`` cuts each rectangle along its bl-tr diagonal; ``four-way``
    adds the centroid and cuts into four, which preserves both mirror
    symmetries of the grid (needed for meaningful symmetry checks).
    """
    rect = build_rect_mesh(domain, h)
    s = rect.structured
    nx, ny = s["nx"], s["ny"]
    verts = rect.vertices
    cells = []
    if split == "two-way":
        for c in range(rect.n_cells):
            v = rect.cells[c]
            cells.append([v[0], v[1], v[2]])
            cells.append([v[0], v[2], v[3]])
        vertices = verts
    elif split == "four-way":
        centers = rect.centroids
        vertices = np.concatenate([verts, centers])
        for c in range(rect.n_cells):
            v = rect.cells[c]
            m = len(verts) + c
            for loc in range(4):
                cells.append([v[loc], v[(loc + 1) % 4], m])
        vertices = vertices
    else:
        raise MeshError(f"unknown split {split!r}")
    x0, x1, y0, y1 = map(float, domain)
    structured = dict(s, split=split)
    return _build_topology(
        vertices, np.array(cells), "tri",
        _side_tagger(x0, x1, y0, y1, list(RECT_TAGS)), RECT_TAGS, structured,
    )


def import_tri_mesh(text: str) -> Mesh:
    """Parse the ASCII node/element listing into a validated triangle mesh.

    Clockwise elements are reoriented; dangling vertex ids, duplicate
    elements, and zero-area triangles are rejected with the offending line
    number.
    """
    tokens: list[tuple[int, str]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0]
        tokens.extend((lineno, t) for t in body.split())

    pos = 0

    def take(what):
        nonlocal pos
        if pos >= len(tokens):
            raise MeshError(f"unexpected end of input while reading {what}")
        tok = tokens[pos]
        pos += 1
        return tok

    def take_int(what):
        lineno, t = take(what)
        try:
            return int(t), lineno
        except ValueError:
            raise MeshError(f"line {lineno}: expected integer {what}, got {t!r}") from None

    def take_float(what):
        lineno, t = take(what)
        try:
            return float(t), lineno
        except ValueError:
            raise MeshError(f"line {lineno}: expected number {what}, got {t!r}") from None

    nv, _ = take_int("vertex count")
    if nv < 3:
        raise MeshError("need at least 3 vertices")
    vertices = np.empty((nv, 2))
    for i in range(nv):
        vertices[i, 0], _ = take_float("x")
        vertices[i, 1], _ = take_float("y")

    nt, _ = take_int("element count")
    if nt < 1:
        raise MeshError("need at least one element")
    cells = np.empty((nt, 3), dtype=np.int64)
    seen = {}
    for e in range(nt):
        ids = []
        for _ in range(3):
            v, lineno = take_int("vertex id")
            if not 1 <= v <= nv:
                raise MeshError(
                    f"line {lineno}: element {e + 1} references vertex {v} "
                    f"of {nv}"
                )
            ids.append(v - 1)
        key = tuple(sorted(ids))
        if len(set(ids)) != 3:
            raise MeshError(f"element {e + 1} repeats a vertex")
        if key in seen:
            raise MeshError(f"element {e + 1} duplicates element {seen[key] + 1}")
        seen[key] = e
        a, b, c = (vertices[k] for k in ids)
        area2 = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if area2 == 0.0:
            raise MeshError(f"element {e + 1} has zero area")
        if area2 < 0.0:
            ids = [ids[0], ids[2], ids[1]]
        cells[e] = ids

    # optional boundary tags: "tag <name> <v1> <v2>"
    tag_names = ["interior"]
    tagged: dict[tuple[int, int], int] = {}
    while pos < len(tokens):
        lineno, word = take("tag")
        if word != "tag":
            raise MeshError(f"line {lineno}: expected 'tag', got {word!r}")
        _, name = take("tag name")
        v1, _ = take_int("tag vertex")
        v2, lineno2 = take_int("tag vertex")
        if not (1 <= v1 <= nv and 1 <= v2 <= nv):
            raise MeshError(f"line {lineno2}: tag references unknown vertex")
        if name not in tag_names:
            tag_names.append(name)
        key = (min(v1, v2) - 1, max(v1, v2) - 1)
        tagged[key] = tag_names.index(name)

    if "boundary" not in tag_names:
        tag_names.append("boundary")
    default = tag_names.index("boundary")

    def tagger(everts, normal):
        key = (min(everts), max(everts))
        return tagged.get(key, default)

    return _build_topology(vertices, cells, "tri", tagger, tag_names)
