"""Cubed-sphere meshes and the differential geometry of element charts.

Elements are spherical quadrilaterals. Within an element the chart blends the
four corner points bilinearly in reference coordinates (xi1, xi2) in [-1, 1]^2
and projects radially onto the sphere, so shared edges depend only on their two
endpoint corners and conforming neighbors collocate exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class MeshError(ValueError):
    """Inconsistent mesh connectivity or degenerate element geometry."""


class NodePairingError(MeshError):
    """Paired interface nodes failed to coincide physically."""


_PAIRING_TOL = 1e-9  # relative to the sphere radius

# Local frames (outward normal, tangent1, tangent2) for the six cube faces,
# chosen right-handed: t1 x t2 = n, so all element charts are counterclockwise
# seen from outside the sphere.
_FACE_FRAMES = np.array(
    [
        [[1, 0, 0], [0, 1, 0], [0, 0, 1]],
        [[0, 1, 0], [-1, 0, 0], [0, 0, 1]],
        [[-1, 0, 0], [0, -1, 0], [0, 0, 1]],
        [[0, -1, 0], [1, 0, 0], [0, 0, 1]],
        [[0, 0, 1], [1, 0, 0], [0, 1, 0]],
        [[0, 0, -1], [0, 1, 0], [1, 0, 0]],
    ],
    dtype=float,
)

# Endpoint corners (start, end) of each element face in the local corner
# numbering x1=(-1,-1), x2=(1,-1), x3=(1,1), x4=(-1,1); faces are ordered
# south (xi2=-1), east (xi1=+1), north (xi2=+1), west (xi1=-1).
_FACE_CORNERS = ((0, 1), (1, 2), (3, 2), (0, 3))

# Reference direction (1-based) normal to each face and the outward sign.
FACE_DIRECTION = (2, 1, 2, 1)
FACE_SIGN = (-1.0, 1.0, 1.0, -1.0)


@dataclass
class MeshTopology:
    """Element corners plus conforming face-to-face connectivity.

    corners: (n_elements, 4, 3) Cartesian corner positions.
    neighbor / neighbor_face: (n_elements, 4) index tables.
    reversed_edge: (n_elements, 4) True where the shared edge parameter runs
    in opposite directions on the two sides.
    """

    radius: float
    corners: np.ndarray
    neighbor: np.ndarray
    neighbor_face: np.ndarray
    reversed_edge: np.ndarray

    @property
    def n_elements(self) -> int:
        return self.corners.shape[0]


class _PointIndex:
    """Spatial hash that merges points closer than tol."""

    def __init__(self, tol: float):
        self.tol = tol
        self._cells: dict[tuple[int, int, int], list[int]] = {}
        self.points: list[np.ndarray] = []

    def insert(self, p: np.ndarray) -> int:
        cell = tuple(np.floor(p / self.tol).astype(np.int64))
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for dz in (-1, 0, 1):
                    probe = (cell[0] + dx, cell[1] + dy, cell[2] + dz)
                    for idx in self._cells.get(probe, ()):
                        if np.max(np.abs(self.points[idx] - p)) <= self.tol:
                            return idx
        idx = len(self.points)
        self.points.append(p)
        self._cells.setdefault(cell, []).append(idx)
        return idx


def build_cubed_sphere(per_face: int, radius: float) -> MeshTopology:
    """Equiangular gnomonic cubed-sphere mesh with per_face^2 elements per face.

    Corner grid angles are alpha, beta in {-pi/4 + k (pi/2)/per_face}; corners
    are radius * normalize(n + tan(alpha) t1 + tan(beta) t2) per cube face.
    Connectivity is recovered by matching physical corner positions.
    """
    if per_face < 1:
        raise MeshError(f"per_face must be >= 1, got {per_face}")
    if radius <= 0:
        raise MeshError(f"radius must be positive, got {radius}")
    m = int(per_face)
    angles = -np.pi / 4.0 + np.arange(m + 1) * (np.pi / 2.0) / m
    tans = np.tan(angles)
    corners = np.empty((6 * m * m, 4, 3))
    e = 0
    for face in range(6):
        n, t1, t2 = _FACE_FRAMES[face]
        grid = n[None, None, :] + tans[:, None, None] * t1 + tans[None, :, None] * t2
        grid = radius * grid / np.linalg.norm(grid, axis=-1, keepdims=True)
        for r in range(m):
            for c in range(m):
                corners[e, 0] = grid[r, c]
                corners[e, 1] = grid[r + 1, c]
                corners[e, 2] = grid[r + 1, c + 1]
                corners[e, 3] = grid[r, c + 1]
                e += 1
    return topology_from_corners(corners, radius)


def topology_from_corners(corners: np.ndarray, radius: float) -> MeshTopology:
    """Recover face connectivity for a closed quad mesh given element corners.

    corners has shape (n_elements, 4, 3) with each element's corners listed
    counterclockwise as seen from outside the sphere. Corners of adjacent
    elements must coincide to within the pairing tolerance.
    """
    corners = np.asarray(corners, dtype=float)
    index = _PointIndex(_PAIRING_TOL * radius)
    corner_ids = np.array(
        [[index.insert(corners[e, k]) for k in range(4)] for e in range(corners.shape[0])]
    )
    for e in range(corners.shape[0]):
        if len(set(corner_ids[e])) != 4:
            raise MeshError(f"element {e} has coincident corners")

    edges: dict[tuple[int, int], list[tuple[int, int]]] = {}
    for e in range(corners.shape[0]):
        for f, (ca, cb) in enumerate(_FACE_CORNERS):
            key = tuple(sorted((corner_ids[e, ca], corner_ids[e, cb])))
            edges.setdefault(key, []).append((e, f))

    n_elem = corners.shape[0]
    neighbor = np.full((n_elem, 4), -1, dtype=np.int64)
    neighbor_face = np.full((n_elem, 4), -1, dtype=np.int64)
    reversed_edge = np.zeros((n_elem, 4), dtype=bool)
    for key, sides in edges.items():
        if len(sides) != 2:
            raise MeshError(f"edge {key} shared by {len(sides)} faces, expected 2")
        (ea, fa), (eb, fb) = sides
        start_a = corner_ids[ea, _FACE_CORNERS[fa][0]]
        start_b = corner_ids[eb, _FACE_CORNERS[fb][0]]
        neighbor[ea, fa], neighbor_face[ea, fa] = eb, fb
        neighbor[eb, fb], neighbor_face[eb, fb] = ea, fa
        reversed_edge[ea, fa] = reversed_edge[eb, fb] = start_a != start_b
    if np.any(neighbor < 0):
        raise MeshError("mesh is not closed: unmatched element faces remain")
    return MeshTopology(
        radius=float(radius),
        corners=corners,
        neighbor=neighbor,
        neighbor_face=neighbor_face,
        reversed_edge=reversed_edge,
    )


def _bilinear(corners: np.ndarray, xi1, xi2):
    """Bilinear corner blend and its reference derivatives.

    corners has shape (..., 4, 3); xi1/xi2 broadcast against the leading shape.
    Returns (x_e, d1, d2, d12), each (..., 3).
    """
    xi1 = np.asarray(xi1, dtype=float)[..., None]
    xi2 = np.asarray(xi2, dtype=float)[..., None]
    c1, c2, c3, c4 = (corners[..., k, :] for k in range(4))
    x_e = 0.25 * (
        (1 - xi1) * (1 - xi2) * c1
        + (1 + xi1) * (1 - xi2) * c2
        + (1 + xi1) * (1 + xi2) * c3
        + (1 - xi1) * (1 + xi2) * c4
    )
    d1 = 0.25 * ((1 - xi2) * (c2 - c1) + (1 + xi2) * (c3 - c4))
    d2 = 0.25 * ((1 - xi1) * (c4 - c1) + (1 + xi1) * (c3 - c2))
    d12 = 0.25 * (c1 - c2 + c3 - c4)
    d12 = np.broadcast_to(d12, d1.shape)
    return x_e, d1, d2, d12


def map_point(corners: np.ndarray, xi1, xi2, radius: float) -> np.ndarray:
    """Physical position of reference point(s) under the element chart."""
    x_e, _, _, _ = _bilinear(corners, xi1, xi2)
    norm = np.linalg.norm(x_e, axis=-1, keepdims=True)
    return radius * x_e / norm


def basis_and_metric(corners: np.ndarray, xi1, xi2, radius: float):
    """Covariant basis, metric tensors and area Jacobian of the chart.

    Returns (a1, a2, gcov, gcon, jac) with a1/a2 of shape (..., 3),
    gcov/gcon (..., 2, 2) and jac (...).
    """
    x_e, d1, d2, _ = _bilinear(corners, xi1, xi2)
    r2 = np.sum(x_e * x_e, axis=-1, keepdims=True)
    r = np.sqrt(r2)
    proj1 = np.sum(x_e * d1, axis=-1, keepdims=True) / r2
    proj2 = np.sum(x_e * d2, axis=-1, keepdims=True) / r2
    a1 = (radius / r) * (d1 - proj1 * x_e)
    a2 = (radius / r) * (d2 - proj2 * x_e)
    g11 = np.sum(a1 * a1, axis=-1)
    g12 = np.sum(a1 * a2, axis=-1)
    g22 = np.sum(a2 * a2, axis=-1)
    det = g11 * g22 - g12 * g12
    if np.any(det <= 0):
        raise MeshError("degenerate element chart: metric determinant <= 0")
    jac = np.sqrt(det)
    gcov = np.stack(
        [np.stack([g11, g12], axis=-1), np.stack([g12, g22], axis=-1)], axis=-2
    )
    gcon = np.stack(
        [
            np.stack([g22 / det, -g12 / det], axis=-1),
            np.stack([-g12 / det, g11 / det], axis=-1),
        ],
        axis=-2,
    )
    return a1, a2, gcov, gcon, jac


def _basis_derivatives(corners: np.ndarray, xi1, xi2, radius: float):
    """Second chart derivatives d(a_i)/d(xi_j), shape (..., 2, 2, 3)."""
    x_e, d1, d2, d12 = _bilinear(corners, xi1, xi2)
    r2 = np.sum(x_e * x_e, axis=-1, keepdims=True)
    r = np.sqrt(r2)
    r3 = r * r2
    r5 = r3 * r2
    d = (d1, d2)
    # pure second derivatives of the bilinear blend vanish
    dd = ((np.zeros_like(d12), d12), (d12, np.zeros_like(d12)))
    out = np.empty(x_e.shape[:-1] + (2, 2, 3))
    xdot = tuple(np.sum(x_e * d[i], axis=-1, keepdims=True) for i in range(2))
    for i in range(2):
        for j in range(2):
            mixed = np.sum(d[j] * d[i], axis=-1, keepdims=True) + np.sum(
                x_e * dd[i][j], axis=-1, keepdims=True
            )
            out[..., i, j, :] = radius * (
                dd[i][j] / r
                - d[i] * xdot[j] / r3
                - d[j] * xdot[i] / r3
                - x_e * mixed / r3
                + 3.0 * x_e * xdot[i] * xdot[j] / r5
            )
    return out


def christoffel(corners: np.ndarray, xi1, xi2, radius: float) -> np.ndarray:
    """Christoffel symbols Gamma^i_{jk} of the chart, shape (..., 2, 2, 2)."""
    a1, a2, _, gcon, _ = basis_and_metric(corners, xi1, xi2, radius)
    da = _basis_derivatives(corners, xi1, xi2, radius)
    a = np.stack([a1, a2], axis=-2)
    # dg[j, k, l] = d_j G_{kl}
    dg = np.einsum("...kjd,...ld->...jkl", da, a) + np.einsum(
        "...ljd,...kd->...jkl", da, a
    )
    gamma = 0.5 * np.einsum(
        "...il,...jkl->...ijk",
        gcon,
        dg.transpose(*range(dg.ndim - 3), -3, -2, -1)
        + dg.transpose(*range(dg.ndim - 3), -2, -3, -1)
        - dg.transpose(*range(dg.ndim - 3), -1, -2, -3),
    )
    return gamma


def lonlat(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Longitude in (-pi, pi] and latitude in [-pi/2, pi/2] of points (..., 3).

    Points on the rotation axis get longitude 0.
    """
    x = np.asarray(x, dtype=float)
    lon = np.arctan2(x[..., 1], x[..., 0])
    lon = np.where((x[..., 0] == 0.0) & (x[..., 1] == 0.0), 0.0, lon)
    r = np.linalg.norm(x, axis=-1)
    lat = np.arcsin(np.clip(x[..., 2] / r, -1.0, 1.0))
    return lon, lat


def spherical_to_cartesian_velocity(u, v, lon, lat) -> np.ndarray:
    """Cartesian tangent vector from zonal u and meridional v components."""
    sin_lon, cos_lon = np.sin(lon), np.cos(lon)
    sin_lat, cos_lat = np.sin(lat), np.cos(lat)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    return np.stack(
        [
            -u * sin_lon - v * cos_lon * sin_lat,
            u * cos_lon - v * sin_lon * sin_lat,
            v * cos_lat,
        ],
        axis=-1,
    )


def cartesian_to_spherical_velocity(vel: np.ndarray, lon, lat):
    """Zonal and meridional components of a Cartesian tangent vector."""
    sin_lon, cos_lon = np.sin(lon), np.cos(lon)
    sin_lat, cos_lat = np.sin(lat), np.cos(lat)
    u = -vel[..., 0] * sin_lon + vel[..., 1] * cos_lon
    v = (
        -vel[..., 0] * cos_lon * sin_lat
        - vel[..., 1] * sin_lon * sin_lat
        + vel[..., 2] * cos_lat
    )
    return u, v


@dataclass
class GeometryData:
    """Nodal chart geometry for every element, struct-of-arrays layout.

    x: (E, n, n, 3); a1, a2, aup1, aup2: (E, n, n, 3); gcov, gcon: (E, n, n, 2, 2);
    jac: (E, n, n); gamma: (E, n, n, 2, 2, 2). Node (i, j) collocates reference
    coordinates (nodes[i], nodes[j]).
    """

    x: np.ndarray
    a1: np.ndarray
    a2: np.ndarray
    aup1: np.ndarray
    aup2: np.ndarray
    gcov: np.ndarray
    gcon: np.ndarray
    jac: np.ndarray
    gamma: np.ndarray


def evaluate_geometry(mesh: MeshTopology, nodes: np.ndarray) -> GeometryData:
    """Evaluate chart geometry on the tensor-product nodal grid of every element."""
    xi1 = nodes[:, None]
    xi2 = nodes[None, :]
    corners = mesh.corners[:, None, None, :, :]
    x = map_point(corners, xi1, xi2, mesh.radius)
    a1, a2, gcov, gcon, jac = basis_and_metric(corners, xi1, xi2, mesh.radius)
    gamma = christoffel(corners, xi1, xi2, mesh.radius)
    outward = np.sum(np.cross(a1, a2) * x, axis=-1)
    if np.any(outward <= 0):
        raise MeshError("element chart is not right-handed (a1 x a2 points inward)")
    aup1 = gcon[..., 0, 0, None] * a1 + gcon[..., 0, 1, None] * a2
    aup2 = gcon[..., 1, 0, None] * a1 + gcon[..., 1, 1, None] * a2
    return GeometryData(
        x=x, a1=a1, a2=a2, aup1=aup1, aup2=aup2, gcov=gcov, gcon=gcon, jac=jac, gamma=gamma
    )


@dataclass
class NodalGeometry:
    """Chart geometry of a single node, for pointwise operations."""

    x: np.ndarray
    a1: np.ndarray
    a2: np.ndarray
    aup1: np.ndarray
    aup2: np.ndarray
    gcov: np.ndarray
    gcon: np.ndarray
    jac: float


def node_geometry(geom: GeometryData, e: int, i: int, j: int) -> NodalGeometry:
    return NodalGeometry(
        x=geom.x[e, i, j],
        a1=geom.a1[e, i, j],
        a2=geom.a2[e, i, j],
        aup1=geom.aup1[e, i, j],
        aup2=geom.aup2[e, i, j],
        gcov=geom.gcov[e, i, j],
        gcon=geom.gcon[e, i, j],
        jac=float(geom.jac[e, i, j]),
    )


def cartesian_to_contravariant(vel: np.ndarray, node: NodalGeometry):
    """Contravariant components (v^1, v^2) of a Cartesian tangent vector."""
    return np.dot(node.aup1, vel), np.dot(node.aup2, vel)


def contravariant_to_cartesian(v1, v2, node: NodalGeometry) -> np.ndarray:
    return v1 * node.a1 + v2 * node.a2


def interface_transform(node_l: NodalGeometry, node_r: NodalGeometry) -> np.ndarray:
    """Matrix taking contravariant vector components from R's chart to L's.

    The two nodes must be the same physical point; rows are L's contravariant
    basis vectors contracted with R's covariant ones.
    """
    radius = np.linalg.norm(node_l.x)
    if np.max(np.abs(node_l.x - node_r.x)) > _PAIRING_TOL * radius:
        raise NodePairingError(
            f"paired nodes separated by {np.max(np.abs(node_l.x - node_r.x)):.3e}"
        )
    aup = np.stack([node_l.aup1, node_l.aup2])
    alo = np.stack([node_r.a1, node_r.a2], axis=-1)
    return aup @ alo


def face_node_indices(face: int, k: np.ndarray, n_nodes: int):
    """Grid indices (i, j) of boundary node k along the given element face."""
    last = n_nodes - 1
    if face == 0:
        return k, np.zeros_like(k)
    if face == 1:
        return np.full_like(k, last), k
    if face == 2:
        return k, np.full_like(k, last)
    if face == 3:
        return np.zeros_like(k), k
    raise ValueError(f"face index must be 0..3, got {face}")
