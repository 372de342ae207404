"""Conforming triangle meshes with marked boundaries.

Provides structured unit-square style meshes, seeded random vertex
distortion that leaves the boundary fixed, a reader for ASCII MSH 2.2
files, and mesh statistics including the characteristic lengths

    h_p = (area / n_pressure_locations)^(1/2)
    h_v = (area / n_velocity_locations)^(1/2)

where pressure locations are the vertices and velocity locations are the
vertices plus the element centroids.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np


class BCKind(enum.Enum):
    """Boundary condition kind attached to a marker."""

    DIRICHLET = "dirichlet"
    NEUMANN = "neumann"


class MeshValidationError(ValueError):
    pass


class MshParseError(ValueError):
    pass


class DistortionError(RuntimeError):
    """Raised when random distortion produces a degenerate triangle."""


@dataclass(frozen=True)
class Mesh:
    """Immutable conforming triangle mesh.

    Attributes
    ----------
    vertices : ndarray, shape (n_vertices, 2)
    triangles : ndarray, shape (n_elements, 3)
        Vertex indices, counterclockwise.
    boundary_facets : ndarray, shape (n_facets, 2)
        Boundary edges oriented counterclockwise with respect to their
        owning triangle, so the outward normal is the edge direction
        rotated by -90 degrees.
    facet_markers : ndarray, shape (n_facets,)
        Index into `marker_names` per boundary facet.
    marker_names : tuple of str
    markers : dict
        Maps each marker name to its BCKind.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_facets: np.ndarray
    facet_markers: np.ndarray
    marker_names: tuple
    markers: dict

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_elements(self) -> int:
        return self.triangles.shape[0]

    def with_bc(self, markers: dict) -> "Mesh":
        """Return a copy with boundary-condition kinds reassigned."""
        unknown = set(markers) - set(self.marker_names)
        if unknown:
            raise ValueError(f"unknown marker names: {sorted(unknown)}")
        merged = dict(self.markers)
        merged.update(markers)
        return replace(self, markers=merged)

    def facet_kinds(self) -> np.ndarray:
        """BCKind per boundary facet, aligned with `boundary_facets`."""
        kinds = np.array([self.markers[name] for name in self.marker_names], dtype=object)
        return kinds[self.facet_markers]

    def dirichlet_vertices(self) -> np.ndarray:
        """Sorted indices of vertices lying on a Dirichlet-marked facet."""
        kinds = self.facet_kinds()
        on_d = self.boundary_facets[kinds == BCKind.DIRICHLET]
        return np.unique(on_d)

    def boundary_vertices(self) -> np.ndarray:
        return np.unique(self.boundary_facets)


def triangle_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Signed areas, positive for counterclockwise triangles."""
    p = vertices[triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def _edge_counts(triangles: np.ndarray):
    """Map from undirected edge to occurrence count over all triangles."""
    edges = {}
    for tri in triangles:
        for k in range(3):
            key = (min(tri[k], tri[(k + 1) % 3]), max(tri[k], tri[(k + 1) % 3]))
            edges[key] = edges.get(key, 0) + 1
    return edges


def validate(mesh: Mesh) -> None:
    """Check mesh invariants, raising MeshValidationError on the first failure."""
    if mesh.vertices.ndim != 2 or mesh.vertices.shape[1] != 2:
        raise MeshValidationError("vertices must have shape (n, 2)")
    if not np.all(np.isfinite(mesh.vertices)):
        raise MeshValidationError("non-finite vertex coordinates")
    if mesh.triangles.ndim != 2 or mesh.triangles.shape[1] != 3:
        raise MeshValidationError("triangles must have shape (n, 3)")
    if mesh.triangles.size and (
        mesh.triangles.min() < 0 or mesh.triangles.max() >= mesh.n_vertices
    ):
        raise MeshValidationError("triangle vertex index out of range")

    areas = triangle_areas(mesh.vertices, mesh.triangles)
    if np.any(areas <= 0.0):
        bad = int(np.argmin(areas))
        raise MeshValidationError(
            f"triangle {bad} has non-positive area {areas[bad]:.3e}"
        )

    edge_counts = _edge_counts(mesh.triangles)
    if any(c > 2 for c in edge_counts.values()):
        raise MeshValidationError("non-conforming mesh: edge shared by >2 triangles")
    boundary_edges = {e for e, c in edge_counts.items() if c == 1}

    facet_keys = set()
    for a, b in mesh.boundary_facets:
        key = (min(a, b), max(a, b))
        if key not in boundary_edges:
            raise MeshValidationError(f"facet ({a}, {b}) is not a boundary edge")
        if key in facet_keys:
            raise MeshValidationError(f"facet ({a}, {b}) listed twice")
        facet_keys.add(key)
    missing = boundary_edges - facet_keys
    if missing:
        raise MeshValidationError(f"{len(missing)} boundary edges lack a marked facet")

    if mesh.facet_markers.shape[0] != mesh.boundary_facets.shape[0]:
        raise MeshValidationError("facet_markers length mismatch")
    if mesh.facet_markers.size and mesh.facet_markers.max() >= len(mesh.marker_names):
        raise MeshValidationError("facet marker index out of range")
    for name in mesh.marker_names:
        if name not in mesh.markers:
            raise MeshValidationError(f"marker {name!r} has no boundary-condition kind")

    # Facet orientation must be counterclockwise in the owning triangle.
    directed = set()
    for tri in mesh.triangles:
        for k in range(3):
            directed.add((int(tri[k]), int(tri[(k + 1) % 3])))
    for a, b in mesh.boundary_facets:
        if (int(a), int(b)) not in directed:
            raise MeshValidationError(
                f"facet ({a}, {b}) is oriented against its owning triangle"
            )


def _finalize(vertices, triangles, facets, facet_markers, marker_names, markers) -> Mesh:
    vertices = np.ascontiguousarray(vertices, dtype=float)
    triangles = np.ascontiguousarray(triangles, dtype=np.int64)
    facets = np.ascontiguousarray(facets, dtype=np.int64).reshape(-1, 2)
    facet_markers = np.ascontiguousarray(facet_markers, dtype=np.int64)
    for arr in (vertices, triangles, facets, facet_markers):
        arr.setflags(write=False)
    mesh = Mesh(vertices, triangles, facets, facet_markers, tuple(marker_names), dict(markers))
    validate(mesh)
    return mesh


def generate_structured(
    nx: int,
    ny: int,
    lower=(0.0, 0.0),
    upper=(1.0, 1.0),
    markers: dict | None = None,
) -> Mesh:
    """Structured triangulation of a rectangle: nx by ny cells, two triangles each.

    Cells are split along the diagonal from the lower-left to the upper-right
    corner.  Boundary markers are "left", "right", "bottom", "top"; all
    default to Dirichlet unless `markers` overrides them.
    """
    if nx < 1 or ny < 1:
        raise ValueError("nx and ny must be positive")
    x = np.linspace(lower[0], upper[0], nx + 1)
    y = np.linspace(lower[1], upper[1], ny + 1)
    xx, yy = np.meshgrid(x, y, indexing="xy")
    vertices = np.column_stack((xx.ravel(), yy.ravel()))

    def vid(i, j):
        return j * (nx + 1) + i

    tris = []
    for j in range(ny):
        for i in range(nx):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
            tris.append((v00, v10, v11))
            tris.append((v00, v11, v01))

    marker_names = ("left", "right", "bottom", "top")
    facets = []
    fmark = []
    for j in range(ny):
        facets.append((vid(0, j + 1), vid(0, j)))
        fmark.append(0)
        facets.append((vid(nx, j), vid(nx, j + 1)))
        fmark.append(1)
    for i in range(nx):
        facets.append((vid(i, 0), vid(i + 1, 0)))
        fmark.append(2)
        facets.append((vid(i + 1, ny), vid(i, ny)))
        fmark.append(3)

    bc = {name: BCKind.DIRICHLET for name in marker_names}
    if markers:
        bc.update(markers)
    return _finalize(vertices, tris, facets, fmark, marker_names, bc)


def _shortest_incident_edge(mesh: Mesh) -> np.ndarray:
    """Length of the shortest mesh edge incident to each vertex."""
    tri = mesh.triangles
    shortest = np.full(mesh.n_vertices, np.inf)
    for k in range(3):
        a = tri[:, k]
        b = tri[:, (k + 1) % 3]
        lengths = np.linalg.norm(mesh.vertices[a] - mesh.vertices[b], axis=1)
        np.minimum.at(shortest, a, lengths)
        np.minimum.at(shortest, b, lengths)
    return shortest


def distort(mesh: Mesh, fraction: float, seed: int) -> Mesh:
    """Randomly displace interior vertices; boundary vertices stay fixed.

    Each interior vertex moves by an independent uniform draw in
    [-fraction * l, fraction * l] per coordinate, where l is the shortest
    edge incident to that vertex in the undistorted mesh.  The draw is
    deterministic for a given seed.  Raises DistortionError if any triangle
    degenerates.
    """
    if not 0.0 <= fraction < 0.5:
        raise ValueError("fraction must lie in [0, 0.5)")
    rng = np.random.default_rng(seed)
    scale = fraction * _shortest_incident_edge(mesh)
    disp = rng.uniform(-1.0, 1.0, size=mesh.vertices.shape) * scale[:, None]
    disp[mesh.boundary_vertices()] = 0.0
    moved = mesh.vertices + disp

    areas = triangle_areas(moved, mesh.triangles)
    if np.any(areas <= 0.0):
        raise DistortionError(
            f"distortion with fraction {fraction} and seed {seed} "
            f"degenerated {int(np.sum(areas <= 0.0))} triangle(s)"
        )
    return _finalize(
        moved,
        mesh.triangles,
        mesh.boundary_facets,
        mesh.facet_markers,
        mesh.marker_names,
        mesh.markers,
    )


def _orient(vertices, triangles, facets):
    """Fix triangle orientation to CCW and orient facets CCW in their owner."""
    areas = triangle_areas(vertices, triangles)
    flip = areas < 0.0
    triangles = triangles.copy()
    triangles[flip] = triangles[flip][:, [0, 2, 1]]

    directed = set()
    for tri in triangles:
        for k in range(3):
            directed.add((int(tri[k]), int(tri[(k + 1) % 3])))
    oriented = []
    for a, b in facets:
        if (int(a), int(b)) in directed:
            oriented.append((int(a), int(b)))
        else:
            oriented.append((int(b), int(a)))
    return triangles, np.array(oriented, dtype=np.int64).reshape(-1, 2)


def read_msh(path: str) -> Mesh:
    """Read an ASCII MSH 2.2 file (nodes, line and triangle elements).

    Line elements carry boundary markers through their first (physical)
    tag; names from $PhysicalNames are used when present, otherwise the
    marker is called "tag<N>".  All markers default to Dirichlet.  Binary
    files, nonzero z coordinates, and malformed sections raise
    MshParseError with the offending line number.
    """
    with open(path, "r", encoding="ascii") as handle:
        lines = handle.read().splitlines()

    def err(lineno, message):
        return MshParseError(f"{path}:{lineno + 1}: {message}")

    idx = 0

    def expect(token):
        nonlocal idx
        while idx < len(lines) and not lines[idx].strip():
            idx += 1
        if idx >= len(lines) or lines[idx].strip() != token:
            raise err(min(idx, len(lines) - 1), f"expected {token}")
        idx += 1

    expect("$MeshFormat")
    fields = lines[idx].split()
    if len(fields) != 3:
        raise err(idx, "malformed $MeshFormat line")
    if fields[0] != "2.2":
        raise err(idx, f"unsupported MSH version {fields[0]} (need 2.2)")
    if fields[1] != "0":
        raise err(idx, "binary MSH files are unsupported")
    idx += 1
    expect("$EndMeshFormat")

    phys_names = {}
    save = idx
    try:
        expect("$PhysicalNames")
    except MshParseError:
        idx = save
    else:
        count = int(lines[idx])
        idx += 1
        for _ in range(count):
            parts = lines[idx].split(maxsplit=2)
            if len(parts) != 3:
                raise err(idx, "malformed physical name")
            phys_names[int(parts[1])] = parts[2].strip().strip('"')
            idx += 1
        expect("$EndPhysicalNames")

    expect("$Nodes")
    try:
        n_nodes = int(lines[idx])
    except ValueError:
        raise err(idx, "malformed node count") from None
    idx += 1
    coords = np.empty((n_nodes, 2))
    node_ids = {}
    for k in range(n_nodes):
        parts = lines[idx].split()
        if len(parts) != 4:
            raise err(idx, "malformed node line")
        node_ids[int(parts[0])] = k
        x, y, z = float(parts[1]), float(parts[2]), float(parts[3])
        if z != 0.0:
            raise err(idx, f"node has nonzero z coordinate {z:g}; only planar meshes are supported")
        coords[k] = (x, y)
        idx += 1
    expect("$EndNodes")

    expect("$Elements")
    try:
        n_elems = int(lines[idx])
    except ValueError:
        raise err(idx, "malformed element count") from None
    idx += 1
    triangles = []
    facets = []
    facet_tags = []
    for _ in range(n_elems):
        parts = lines[idx].split()
        if len(parts) < 3:
            raise err(idx, "malformed element line")
        etype = int(parts[1])
        ntags = int(parts[2])
        tags = [int(t) for t in parts[3 : 3 + ntags]]
        conn = parts[3 + ntags :]
        try:
            nodes = [node_ids[int(c)] for c in conn]
        except KeyError as exc:
            raise err(idx, f"element references unknown node {exc.args[0]}") from None
        if etype == 1:
            if len(nodes) != 2:
                raise err(idx, "line element needs 2 nodes")
            facets.append(nodes)
            facet_tags.append(tags[0] if tags else 0)
        elif etype == 2:
            if len(nodes) != 3:
                raise err(idx, "triangle element needs 3 nodes")
            triangles.append(nodes)
        elif etype == 15:
            pass  # isolated point elements carry no geometry here
        else:
            raise err(idx, f"unsupported element type {etype}")
        idx += 1
    expect("$EndElements")

    if not triangles:
        raise MshParseError(f"{path}: file contains no triangles")
    triangles = np.array(triangles, dtype=np.int64)
    facets = np.array(facets, dtype=np.int64).reshape(-1, 2)
    triangles, facets = _orient(coords, triangles, facets)

    tag_list = sorted(set(facet_tags))
    marker_names = tuple(phys_names.get(t, f"tag{t}") for t in tag_list)
    tag_to_idx = {t: i for i, t in enumerate(tag_list)}
    facet_markers = np.array([tag_to_idx[t] for t in facet_tags], dtype=np.int64)
    markers = {name: BCKind.DIRICHLET for name in marker_names}
    return _finalize(coords, triangles, facets, facet_markers, marker_names, markers)


@dataclass(frozen=True)
class MeshStats:
    """Size statistics and characteristic lengths of a mesh."""

    n_vertices: int
    n_elements: int
    area: float
    h_p: float
    h_v: float


def stats(mesh: Mesh) -> MeshStats:
    """Vertex/element counts, total area, and characteristic lengths."""
    area = float(np.sum(triangle_areas(mesh.vertices, mesh.triangles)))
    n_p = mesh.n_vertices
    n_v = mesh.n_vertices + mesh.n_elements
    return MeshStats(
        n_vertices=mesh.n_vertices,
        n_elements=mesh.n_elements,
        area=area,
        h_p=float(np.sqrt(area / n_p)),
        h_v=float(np.sqrt(area / n_v)),
    )
