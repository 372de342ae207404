"""Control-volume geometry for the four discretization schemes.

Every scheme shares the same pressure control volumes: the classic boxes,
where the box of vertex v collects, from each incident triangle, the
quadrilateral spanned by v, the two adjacent edge midpoints, and the
centroid.  Velocity control volumes differ per scheme:

- non-overlapping: per-vertex unions of corner triangles (vertex plus the
  two adjacent edge midpoints) and, per element, the medial triangle as
  the bubble control volume.  These tile the domain exactly.
- overlapping: boxes for the vertex unknowns plus the medial triangles for
  the bubbles; the medial triangles overlap the boxes, and only the boxes
  form a partition of the domain.
- hybrid and fem: boxes only (bubble unknowns take Galerkin equations, so
  they need no control volume).

All interior faces are straight segments strictly inside one triangle
(they meet element edges only at midpoints), each stored once with a unit
normal pointing from the `inside` control volume to the `outside` one.
Boundary pieces of control volumes are kept separately with their marker
and the outward domain normal.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .mesh import Mesh

_GAUSS2 = (0.5 - np.sqrt(3.0) / 6.0, 0.5 + np.sqrt(3.0) / 6.0)


class SchemeKind(enum.Enum):
    NONOVERLAPPING = "non-overlapping"
    OVERLAPPING = "overlapping"
    HYBRID = "hybrid"
    FEM = "fem"

    @classmethod
    def parse(cls, name) -> "SchemeKind":
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower().replace("_", "-")
        aliases = {
            "non-overlapping": cls.NONOVERLAPPING,
            "nonoverlapping": cls.NONOVERLAPPING,
            "overlapping": cls.OVERLAPPING,
            "hybrid": cls.HYBRID,
            "fem": cls.FEM,
        }
        if key not in aliases:
            raise ValueError(f"unknown scheme {name!r}; choose from {sorted(aliases)}")
        return aliases[key]


@dataclass(frozen=True)
class ElementData:
    """Per-element geometry used by basis evaluation and assembly."""

    coords: np.ndarray        # (ne, 3, 2)
    centroids: np.ndarray     # (ne, 2)
    areas: np.ndarray         # (ne,)
    jacobians: np.ndarray     # (ne, 2, 2), columns are edge vectors
    inv_jacobians: np.ndarray  # (ne, 2, 2)


def element_data(mesh: Mesh) -> ElementData:
    coords = mesh.vertices[mesh.triangles]
    centroids = coords.mean(axis=1)
    d1 = coords[:, 1] - coords[:, 0]
    d2 = coords[:, 2] - coords[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    jac = np.empty((mesh.n_elements, 2, 2))
    jac[:, :, 0] = d1
    jac[:, :, 1] = d2
    inv = np.empty_like(jac)
    inv[:, 0, 0] = d2[:, 1]
    inv[:, 0, 1] = -d2[:, 0]
    inv[:, 1, 0] = -d1[:, 1]
    inv[:, 1, 1] = d1[:, 0]
    inv /= det[:, None, None]
    return ElementData(coords, centroids, 0.5 * det, jac, inv)


def to_reference(eldata: ElementData, elements: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Map physical points to reference coordinates of their elements.

    `elements` and `points` broadcast along the leading axes; points has
    shape (..., 2) and elements indexes its leading dimension.
    """
    origin = eldata.coords[elements, 0]
    inv = eldata.inv_jacobians[elements]
    d = points - origin
    return np.einsum("...ik,...k->...i", inv, d)


@dataclass(frozen=True)
class SubControlVolume:
    """One per-element polygonal piece of a control volume."""

    cv: int
    element: int
    polygon: np.ndarray   # (k, 2), counterclockwise
    volume: float
    dof_location: np.ndarray


@dataclass(frozen=True)
class SubControlVolumeFace:
    """Interior face between control volumes, stored once.

    The unit normal points from `inside` to `outside`; `outside` is None
    for overlapping-scheme bubble faces, whose flux only enters the bubble
    balance.  `quad_points`/`quad_weights` give a two-point Gauss rule
    along the segment with weights summing to the face length.
    """

    element: int
    inside: int
    outside: int | None
    a: np.ndarray
    b: np.ndarray
    normal: np.ndarray
    length: float
    quad_points: np.ndarray   # (2, 2)
    quad_weights: np.ndarray  # (2,)


@dataclass(frozen=True)
class BoundarySegment:
    """Piece of a control-volume boundary on the domain boundary."""

    cv: int
    element: int
    a: np.ndarray
    b: np.ndarray
    normal: np.ndarray
    length: float
    marker: str


def _rot_minus90(d: np.ndarray) -> np.ndarray:
    return np.stack((d[..., 1], -d[..., 0]), axis=-1)


def _segment_quad(a: np.ndarray, b: np.ndarray):
    t0, t1 = _GAUSS2
    pts = np.stack((a + t0 * (b - a), a + t1 * (b - a)), axis=-2)
    lengths = np.linalg.norm(b - a, axis=-1)
    weights = np.repeat(0.5 * lengths[..., None], 2, axis=-1)
    return pts, weights


def _polygon_areas(polys: np.ndarray) -> np.ndarray:
    """Shoelace area of padded polygons (last vertex may repeat)."""
    x = polys[..., 0]
    y = polys[..., 1]
    xn = np.roll(x, -1, axis=-1)
    yn = np.roll(y, -1, axis=-1)
    return 0.5 * np.sum(x * yn - xn * y, axis=-1)


@dataclass
class ControlVolumeSet:
    """Structure-of-arrays description of one family of control volumes.

    Control-volume ids double as unknown ids: vertex control volumes use
    the vertex index, bubble control volumes use n_vertices + element.
    `partition` marks the ids whose volumes tile the domain.
    """

    dof_locations: np.ndarray   # (n_cvs, 2)
    partition: np.ndarray       # (n_cvs,) bool
    scv_cv: np.ndarray
    scv_element: np.ndarray
    scv_nverts: np.ndarray
    scv_polys: np.ndarray       # (m, 4, 2), padded by repeating the last vertex
    scv_volumes: np.ndarray
    face_element: np.ndarray
    face_inside: np.ndarray
    face_outside: np.ndarray    # -1 when the flux has no receiving balance
    face_a: np.ndarray
    face_b: np.ndarray
    face_normal: np.ndarray
    face_length: np.ndarray
    face_qpoints: np.ndarray    # (F, 2, 2)
    face_qweights: np.ndarray   # (F, 2)
    seg_cv: np.ndarray
    seg_element: np.ndarray
    seg_a: np.ndarray
    seg_b: np.ndarray
    seg_normal: np.ndarray
    seg_length: np.ndarray
    seg_marker: np.ndarray      # index into marker_names
    marker_names: tuple

    @property
    def n_cvs(self) -> int:
        return self.dof_locations.shape[0]

    @property
    def n_faces(self) -> int:
        return self.face_inside.shape[0]

    @property
    def n_segments(self) -> int:
        return self.seg_cv.shape[0]

    def subcontrol_volume(self, i: int) -> SubControlVolume:
        k = int(self.scv_nverts[i])
        return SubControlVolume(
            cv=int(self.scv_cv[i]),
            element=int(self.scv_element[i]),
            polygon=self.scv_polys[i, :k].copy(),
            volume=float(self.scv_volumes[i]),
            dof_location=self.dof_locations[self.scv_cv[i]].copy(),
        )

    def face(self, i: int) -> SubControlVolumeFace:
        out = int(self.face_outside[i])
        return SubControlVolumeFace(
            element=int(self.face_element[i]),
            inside=int(self.face_inside[i]),
            outside=None if out < 0 else out,
            a=self.face_a[i].copy(),
            b=self.face_b[i].copy(),
            normal=self.face_normal[i].copy(),
            length=float(self.face_length[i]),
            quad_points=self.face_qpoints[i].copy(),
            quad_weights=self.face_qweights[i].copy(),
        )

    def boundary_segment(self, i: int) -> BoundarySegment:
        return BoundarySegment(
            cv=int(self.seg_cv[i]),
            element=int(self.seg_element[i]),
            a=self.seg_a[i].copy(),
            b=self.seg_b[i].copy(),
            normal=self.seg_normal[i].copy(),
            length=float(self.seg_length[i]),
            marker=self.marker_names[self.seg_marker[i]],
        )

    def cv_volumes(self) -> np.ndarray:
        """Total volume per control-volume id."""
        vol = np.zeros(self.n_cvs)
        np.add.at(vol, self.scv_cv, self.scv_volumes)
        return vol


def _pad_tris(polys3: np.ndarray) -> np.ndarray:
    return np.concatenate((polys3, polys3[:, -1:, :]), axis=1)


def _boundary_segments(mesh: Mesh):
    """Split every boundary facet at its midpoint into two CV pieces."""
    owner = {}
    for e, tri in enumerate(mesh.triangles):
        for k in range(3):
            owner[(int(tri[k]), int(tri[(k + 1) % 3]))] = e
    cv, elem, pa, pb, marker = [], [], [], [], []
    for f, (a, b) in enumerate(mesh.boundary_facets):
        a, b = int(a), int(b)
        e = owner[(a, b)]
        va = mesh.vertices[a]
        vb = mesh.vertices[b]
        mid = 0.5 * (va + vb)
        cv += [a, b]
        elem += [e, e]
        pa += [va, mid]
        pb += [mid, vb]
        marker += [int(mesh.facet_markers[f])] * 2
    pa = np.array(pa).reshape(-1, 2)
    pb = np.array(pb).reshape(-1, 2)
    d = pb - pa
    lengths = np.linalg.norm(d, axis=1)
    normals = _rot_minus90(d) / lengths[:, None]
    return (
        np.array(cv, dtype=np.int64),
        np.array(elem, dtype=np.int64),
        pa,
        pb,
        normals,
        lengths,
        np.array(marker, dtype=np.int64),
    )


def _box_pieces(mesh: Mesh, eldata: ElementData):
    """Sub-volumes and interior faces of the vertex boxes."""
    ne = mesh.n_elements
    X = eldata.coords
    C = eldata.centroids
    M = 0.5 * (X + np.roll(X, -1, axis=1))   # M[:, k] = midpoint of edge (k, k+1)
    Mprev = np.roll(M, 1, axis=1)
    T = mesh.triangles

    Cb = np.broadcast_to(C[:, None, :], X.shape)
    polys = np.stack((X, M, Cb, Mprev), axis=2).reshape(-1, 4, 2)
    scv_cv = T.reshape(-1).astype(np.int64)
    scv_elem = np.repeat(np.arange(ne, dtype=np.int64), 3)
    volumes = _polygon_areas(polys)

    face_a = M.reshape(-1, 2)
    face_b = np.repeat(C, 3, axis=0)
    d = face_b - face_a
    lengths = np.linalg.norm(d, axis=1)
    normals = _rot_minus90(d) / lengths[:, None]
    inside = T.reshape(-1).astype(np.int64)
    outside = np.roll(T, -1, axis=1).reshape(-1).astype(np.int64)
    elem = np.repeat(np.arange(ne, dtype=np.int64), 3)
    return (polys, scv_cv, scv_elem, volumes), (face_a, face_b, normals, lengths, inside, outside, elem)


def _medial_pieces(mesh: Mesh, eldata: ElementData, outside_kind: str):
    """Medial-triangle bubble volumes and their three faces per element.

    outside_kind "vertex" routes each face flux into the opposite corner's
    vertex balance (non-overlapping); "none" leaves the outside empty
    (overlapping).
    """
    ne = mesh.n_elements
    nv = mesh.n_vertices
    X = eldata.coords
    M = 0.5 * (X + np.roll(X, -1, axis=1))
    T = mesh.triangles

    polys = _pad_tris(M)
    scv_cv = nv + np.arange(ne, dtype=np.int64)
    scv_elem = np.arange(ne, dtype=np.int64)
    volumes = _polygon_areas(polys)

    Mnext = np.roll(M, -1, axis=1)
    face_a = M.reshape(-1, 2)
    face_b = Mnext.reshape(-1, 2)
    d = face_b - face_a
    lengths = np.linalg.norm(d, axis=1)
    normals = _rot_minus90(d) / lengths[:, None]
    inside = np.repeat(scv_cv, 3)
    if outside_kind == "vertex":
        # face k runs from midpoint k to midpoint k+1 and cuts off vertex k+1
        outside = np.roll(T, -1, axis=1).reshape(-1).astype(np.int64)
    else:
        outside = np.full(3 * ne, -1, dtype=np.int64)
    elem = np.repeat(np.arange(ne, dtype=np.int64), 3)
    return (polys, scv_cv, scv_elem, volumes), (face_a, face_b, normals, lengths, inside, outside, elem)


def _corner_pieces(mesh: Mesh, eldata: ElementData):
    """Corner-triangle sub-volumes of the non-overlapping vertex volumes."""
    ne = mesh.n_elements
    X = eldata.coords
    M = 0.5 * (X + np.roll(X, -1, axis=1))
    Mprev = np.roll(M, 1, axis=1)
    polys = _pad_tris(np.stack((X, M, Mprev), axis=2).reshape(-1, 3, 2))
    scv_cv = mesh.triangles.reshape(-1).astype(np.int64)
    scv_elem = np.repeat(np.arange(ne, dtype=np.int64), 3)
    volumes = _polygon_areas(polys)
    return polys, scv_cv, scv_elem, volumes


def _assemble_set(mesh, dof_locations, partition, scvs, faces, segments) -> ControlVolumeSet:
    polys = np.concatenate([s[0] for s in scvs])
    scv_cv = np.concatenate([s[1] for s in scvs])
    scv_elem = np.concatenate([s[2] for s in scvs])
    volumes = np.concatenate([s[3] for s in scvs])
    nverts = np.concatenate(
        [np.full(s[0].shape[0], 3 if np.array_equal(s[0][:, 2], s[0][:, 3]) else 4, dtype=np.int64) for s in scvs]
    ) if scvs else np.empty(0, dtype=np.int64)

    if faces:
        face_a = np.concatenate([f[0] for f in faces])
        face_b = np.concatenate([f[1] for f in faces])
        face_n = np.concatenate([f[2] for f in faces])
        face_l = np.concatenate([f[3] for f in faces])
        face_in = np.concatenate([f[4] for f in faces])
        face_out = np.concatenate([f[5] for f in faces])
        face_e = np.concatenate([f[6] for f in faces])
    else:
        face_a = face_b = face_n = np.empty((0, 2))
        face_l = np.empty(0)
        face_in = face_out = face_e = np.empty(0, dtype=np.int64)
    qpts, qwts = _segment_quad(face_a, face_b)

    seg_cv, seg_elem, seg_a, seg_b, seg_n, seg_l, seg_m = segments
    return ControlVolumeSet(
        dof_locations=dof_locations,
        partition=partition,
        scv_cv=scv_cv,
        scv_element=scv_elem,
        scv_nverts=nverts,
        scv_polys=polys,
        scv_volumes=volumes,
        face_element=face_e,
        face_inside=face_in,
        face_outside=face_out,
        face_a=face_a,
        face_b=face_b,
        face_normal=face_n,
        face_length=face_l,
        face_qpoints=qpts,
        face_qweights=qwts,
        seg_cv=seg_cv,
        seg_element=seg_elem,
        seg_a=seg_a,
        seg_b=seg_b,
        seg_normal=seg_n,
        seg_length=seg_l,
        seg_marker=seg_m,
        marker_names=mesh.marker_names,
    )


def _empty_segments():
    return (
        np.empty(0, dtype=np.int64),
        np.empty(0, dtype=np.int64),
        np.empty((0, 2)),
        np.empty((0, 2)),
        np.empty((0, 2)),
        np.empty(0),
        np.empty(0, dtype=np.int64),
    )


def build_boxes(mesh: Mesh, eldata: ElementData | None = None) -> ControlVolumeSet:
    """Vertex boxes: the pressure control volumes of every scheme."""
    eldata = eldata or element_data(mesh)
    box_scv, box_faces = _box_pieces(mesh, eldata)
    segments = _boundary_segments(mesh)
    partition = np.ones(mesh.n_vertices, dtype=bool)
    return _assemble_set(mesh, mesh.vertices, partition, [box_scv], [box_faces], segments)


def build_nonoverlapping(mesh: Mesh, eldata: ElementData | None = None) -> ControlVolumeSet:
    """Corner-triangle vertex volumes plus medial bubble volumes (a tiling).

    The only interior faces are the medial edges; corner pieces of the same
    vertex volume meet along element edges and need no face there.
    """
    eldata = eldata or element_data(mesh)
    corner = _corner_pieces(mesh, eldata)
    medial_scv, medial_faces = _medial_pieces(mesh, eldata, "vertex")
    segments = _boundary_segments(mesh)
    dofs = np.vstack((mesh.vertices, eldata.centroids))
    partition = np.ones(mesh.n_vertices + mesh.n_elements, dtype=bool)
    return _assemble_set(mesh, dofs, partition, [corner, medial_scv], [medial_faces], segments)


def build_overlapping(mesh: Mesh, eldata: ElementData | None = None) -> ControlVolumeSet:
    """Boxes for vertex unknowns plus overlapping medial bubble volumes."""
    eldata = eldata or element_data(mesh)
    box_scv, box_faces = _box_pieces(mesh, eldata)
    medial_scv, medial_faces = _medial_pieces(mesh, eldata, "none")
    segments = _boundary_segments(mesh)
    dofs = np.vstack((mesh.vertices, eldata.centroids))
    partition = np.zeros(mesh.n_vertices + mesh.n_elements, dtype=bool)
    partition[: mesh.n_vertices] = True
    return _assemble_set(
        mesh, dofs, partition, [box_scv, medial_scv], [box_faces, medial_faces], segments
    )


def build_bubble_cv(coords: np.ndarray):
    """Medial-triangle control volume of a single triangle.

    Returns the SubControlVolume and its three faces (outside None), with
    normals pointing out of the medial triangle toward the cut-off corner.
    """
    coords = np.asarray(coords, dtype=float)
    if coords.shape != (3, 2):
        raise ValueError("coords must have shape (3, 2)")
    M = 0.5 * (coords + np.roll(coords, -1, axis=0))
    area = _polygon_areas(M[None, :, :])[0]
    if area <= 0.0:
        raise ValueError("triangle must be counterclockwise")
    centroid = coords.mean(axis=0)
    scv = SubControlVolume(
        cv=0, element=0, polygon=M.copy(), volume=float(area), dof_location=centroid
    )
    faces = []
    for k in range(3):
        a, b = M[k], M[(k + 1) % 3]
        d = b - a
        length = float(np.linalg.norm(d))
        normal = np.array([d[1], -d[0]]) / length
        qp, qw = _segment_quad(a[None, :], b[None, :])
        faces.append(
            SubControlVolumeFace(
                element=0, inside=0, outside=None, a=a.copy(), b=b.copy(),
                normal=normal, length=length, quad_points=qp[0], quad_weights=qw[0],
            )
        )
    return scv, faces


@dataclass(frozen=True)
class GridDiscretization:
    """Mesh plus the pressure and velocity control volumes of one scheme."""

    mesh: Mesh
    scheme: SchemeKind
    elements: ElementData
    pressure: ControlVolumeSet
    velocity: ControlVolumeSet

    @property
    def n_velocity_locations(self) -> int:
        return self.mesh.n_vertices + self.mesh.n_elements

    @property
    def n_pressure_dofs(self) -> int:
        return self.mesh.n_vertices

    @property
    def n_dofs(self) -> int:
        return 2 * self.n_velocity_locations + self.n_pressure_dofs

    @property
    def velocity_dof_locations(self) -> np.ndarray:
        return np.vstack((self.mesh.vertices, self.elements.centroids))

    def element_velocity_dofs(self) -> np.ndarray:
        """Velocity unknown ids per element: three vertices plus the bubble."""
        ne = self.mesh.n_elements
        bubbles = self.mesh.n_vertices + np.arange(ne, dtype=np.int64)
        return np.column_stack((self.mesh.triangles, bubbles))


def build(mesh: Mesh, scheme) -> GridDiscretization:
    """Build the control-volume discretization for a scheme."""
    scheme = SchemeKind.parse(scheme)
    eldata = element_data(mesh)
    pressure = build_boxes(mesh, eldata)
    if scheme is SchemeKind.NONOVERLAPPING:
        velocity = build_nonoverlapping(mesh, eldata)
    elif scheme is SchemeKind.OVERLAPPING:
        velocity = build_overlapping(mesh, eldata)
    else:
        velocity = build_boxes(mesh, eldata)
    return GridDiscretization(mesh, scheme, eldata, pressure, velocity)
