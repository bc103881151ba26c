"""Semi-discrete right-hand side assembly on the cubed sphere.

A :class:`Discretization` bundles the mesh, nodal geometry, SBP operators,
and the flux/source variant pair, along with precomputed interface gather
tables and coordinate transformations. :func:`rhs` evaluates du/dt for the
whole mesh in one vectorized pass:

* the flux-differencing variants ("ec" and "es") contract the skew-symmetric
  operator S = 2Q - B with nonsymmetric two-point volume fluxes and apply the
  entropy-projected split source term;
* the "central" variant is the standard collocated DG baseline with
  transposed-Q volume terms, pointwise fluxes, and unsplit sources.

Interface penalties couple neighboring elements: the exterior trace has its
momentum transformed into the interior chart, all geometric factors are taken
from the interior side, and the local Lax-Friedrichs dissipation used by the
dissipative variants is oriented by the sign of the outward normal in
reference coordinates so that every boundary node is relaxed toward its
neighbor's state.

Evaluation never mutates the input field, and elements only write to their
own rows of the output, so rhs calls may be sliced across worker threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import (
    FACE_DIRECTION,
    FACE_SIGN,
    GeometryData,
    MeshTopology,
    NodePairingError,
    evaluate_geometry,
    face_node_indices,
)
from .sbp import SbpOperators
from .swe import (
    AuxNode,
    State,
    central_flux,
    ec_flux,
    entropy_variables,
    es_flux,
    llf_dissipation,
    naive_source_term,
    physical_flux,
    source_term,
)

FLUX_VARIANTS = ("ec", "es", "central")
SOURCE_VARIANTS = ("split", "naive")

_INTERFACE_TOL = 1e-9


class DiscretizationError(ValueError):
    """Raised for invalid variant pairings or inconsistent nodal data."""


class AdmissibilityError(RuntimeError):
    """A state field violated h > 0 (or became non-finite) at some node."""

    def __init__(self, element, node, time, depth):
        self.element = int(element)
        self.node = (int(node[0]), int(node[1]))
        self.time = float(time)
        self.depth = float(depth)
        super().__init__(
            f"inadmissible depth h = {self.depth} at element {self.element}, "
            f"node {self.node}, t = {self.time}"
        )


@dataclass
class Discretization:
    """Mesh, geometry, operators, and variant selection for one model setup.

    The state field layout used by all operations is an ndarray of shape
    (n_elements, N+1, N+1, 3), with the last axis holding (h, hv1, hv2).
    """

    mesh: MeshTopology
    ops: SbpOperators
    geom: GeometryData
    flux_variant: str
    source_variant: str
    coriolis: np.ndarray
    b: np.ndarray
    db: np.ndarray | None
    # interface gather tables, all indexed [element, face, face node]
    face_int_i: np.ndarray
    face_int_j: np.ndarray
    face_ext_elem: np.ndarray
    face_ext_i: np.ndarray
    face_ext_j: np.ndarray
    face_transform: np.ndarray
    node_weights: np.ndarray

    @property
    def n_elements(self):
        return self.mesh.n_elements

    @property
    def n_nodes(self):
        return self.ops.n_nodes

    @property
    def field_shape(self):
        return (self.n_elements, self.n_nodes, self.n_nodes, 3)

    def volume_aux(self):
        """AuxNode view over every node of every element."""
        g = self.geom
        return AuxNode(
            jac=g.jac,
            gcov=g.gcov,
            gcon=g.gcon,
            gamma=g.gamma,
            coriolis=self.coriolis,
            b=self.b,
            db=self.db,
        )


def pack_state(h, hv1, hv2):
    """Stack depth and momentum component arrays into a state field."""
    return np.stack(np.broadcast_arrays(h, hv1, hv2), axis=-1)


def as_state(q):
    """View a state field (..., 3) as a State of component arrays."""
    return State(h=q[..., 0], hv1=q[..., 1], hv2=q[..., 2])


def build_discretization(
    mesh,
    ops,
    flux_variant,
    source_variant=None,
    topography=None,
    coriolis=None,
):
    """Assemble a :class:`Discretization` and verify its preconditions.

    topography and coriolis are callables mapping Cartesian node positions of
    shape (..., 3) to nodal values; None means identically zero. The flux and
    source variants must pair as ec/es with "split" and central with "naive";
    passing source_variant=None picks the matching one. Topography values at
    paired interface nodes must agree (continuous b), which is checked here
    once rather than at every flux evaluation.
    """
    if flux_variant not in FLUX_VARIANTS:
        raise DiscretizationError(
            f"unknown flux variant {flux_variant!r}, expected one of {FLUX_VARIANTS}"
        )
    expected_source = "naive" if flux_variant == "central" else "split"
    if source_variant is None:
        source_variant = expected_source
    if source_variant not in SOURCE_VARIANTS:
        raise DiscretizationError(
            f"unknown source variant {source_variant!r}, expected one of {SOURCE_VARIANTS}"
        )
    if source_variant != expected_source:
        raise DiscretizationError(
            f"flux variant {flux_variant!r} requires the {expected_source!r} "
            f"source term, got {source_variant!r}"
        )

    geom = evaluate_geometry(mesh, ops.nodes)
    zeros = np.zeros(geom.jac.shape)
    b = zeros if topography is None else np.asarray(topography(geom.x), dtype=float)
    f = zeros if coriolis is None else np.asarray(coriolis(geom.x), dtype=float)
    if b.shape != geom.jac.shape or f.shape != geom.jac.shape:
        raise DiscretizationError("topography/coriolis values must be nodal scalars")

    db = None
    if source_variant == "naive":
        db = np.stack(
            [
                np.einsum("im,emj->eij", ops.D, b),
                np.einsum("jm,eim->eij", ops.D, b),
            ],
            axis=-1,
        )

    n = ops.n_nodes
    n_elem = mesh.n_elements
    k = np.arange(n)
    face_int_i = np.empty((4, n), dtype=np.int64)
    face_int_j = np.empty((4, n), dtype=np.int64)
    for face in range(4):
        face_int_i[face], face_int_j[face] = face_node_indices(face, k, n)

    face_ext_elem = mesh.neighbor
    face_ext_i = np.empty((n_elem, 4, n), dtype=np.int64)
    face_ext_j = np.empty((n_elem, 4, n), dtype=np.int64)
    for e in range(n_elem):
        for face in range(4):
            kn = k[::-1] if mesh.reversed_edge[e, face] else k
            fi, fj = face_node_indices(int(mesh.neighbor_face[e, face]), kn, n)
            face_ext_i[e, face] = fi
            face_ext_j[e, face] = fj

    # A_{R -> L} per face node: interior dual basis rows times exterior
    # covariant basis columns, with a paired-node coincidence check.
    face_transform = np.empty((n_elem, 4, n, 2, 2))
    for face in range(4):
        ii, jj = face_int_i[face], face_int_j[face]
        ee = face_ext_elem[:, face]
        ei, ej = face_ext_i[:, face], face_ext_j[:, face]
        x_int = geom.x[:, ii, jj]
        x_ext = geom.x[ee[:, None], ei, ej]
        gap = np.max(np.abs(x_int - x_ext))
        if gap > _INTERFACE_TOL * mesh.radius:
            raise NodePairingError(
                f"paired interface nodes differ by {gap} on face {face}"
            )
        rows = np.stack(
            [geom.aup1[:, ii, jj], geom.aup2[:, ii, jj]], axis=-2
        )
        cols = np.stack(
            [geom.a1[ee[:, None], ei, ej], geom.a2[ee[:, None], ei, ej]], axis=-1
        )
        face_transform[:, face] = rows @ cols

        b_int = b[:, ii, jj]
        b_ext = b[ee[:, None], ei, ej]
        b_scale = max(1.0, float(np.max(np.abs(b))))
        if np.max(np.abs(b_int - b_ext)) > _INTERFACE_TOL * b_scale:
            raise DiscretizationError(
                "bottom topography is discontinuous across element interfaces"
            )

    return Discretization(
        mesh=mesh,
        ops=ops,
        geom=geom,
        flux_variant=flux_variant,
        source_variant=source_variant,
        coriolis=f,
        b=b,
        db=db,
        face_int_i=face_int_i,
        face_int_j=face_int_j,
        face_ext_elem=face_ext_elem,
        face_ext_i=face_ext_i,
        face_ext_j=face_ext_j,
        face_transform=face_transform,
        node_weights=ops.weights[:, None] * ops.weights[None, :],
    )


def check_admissible(disc, q, t=0.0):
    """Raise :class:`AdmissibilityError` at the first offending node."""
    h = q[..., 0]
    bad = ~(h > 0.0) | ~np.isfinite(q).all(axis=-1)
    if np.any(bad):
        e, i, j = np.unravel_index(np.argmax(bad), h.shape)
        raise AdmissibilityError(e, (i, j), t, h[e, i, j])


def _pair_states(q, axis_l, axis_r):
    h, hv1, hv2 = q[..., 0], q[..., 1], q[..., 2]
    u_l = State(h=h[axis_l], hv1=hv1[axis_l], hv2=hv2[axis_l])
    u_r = State(h=h[axis_r], hv1=hv1[axis_r], hv2=hv2[axis_r])
    return u_l, u_r


def _pair_aux(disc, sl):
    g = disc.geom
    return AuxNode(
        jac=g.jac[sl],
        gcov=g.gcov[sl],
        gcon=g.gcon[sl],
        gamma=g.gamma[sl],
        coriolis=disc.coriolis[sl],
        b=disc.b[sl],
    )


_LINE_L = (slice(None), slice(None), None, slice(None))
_LINE_R = (slice(None), None, slice(None), slice(None))
_COL_L = (slice(None), slice(None), slice(None), None)
_COL_R = (slice(None), slice(None), None, slice(None))


def _flux_differencing_volume(disc, q):
    """-sum_m S_im F1#_{ij,mj} and -sum_m S_jm F2#_{ij,im}, stacked (E,n,n,3)."""
    s_mat = disc.ops.S
    u_l, u_r = _pair_states(q, _LINE_L, _LINE_R)
    f1 = ec_flux(u_l, u_r, _pair_aux(disc, _LINE_L), _pair_aux(disc, _LINE_R), 1)
    vol = -np.einsum("im,eimjc->eijc", s_mat, f1)
    u_l, u_r = _pair_states(q, _COL_L, _COL_R)
    f2 = ec_flux(u_l, u_r, _pair_aux(disc, _COL_L), _pair_aux(disc, _COL_R), 2)
    vol -= np.einsum("jm,eijmc->eijc", s_mat, f2)
    return vol


def _central_volume(disc, q):
    """Transposed-Q volume terms of the collocated DG baseline."""
    q_mat = disc.ops.Q
    u = as_state(q)
    aux = disc.volume_aux()
    f1 = physical_flux(u, aux, 1)
    f2 = physical_flux(u, aux, 2)
    vol = np.einsum("mi,emjc->eijc", q_mat, f1)
    vol += np.einsum("mj,eimc->eijc", q_mat, f2)
    return vol


def _interface_data(disc, q, face):
    """Interior and exterior traces along one face of every element.

    The exterior momentum is rotated into the interior chart; scalars are
    copied. Both aux objects carry interior geometry, with the exterior aux
    keeping its own topography value.
    """
    ii, jj = disc.face_int_i[face], disc.face_int_j[face]
    ee = disc.face_ext_elem[:, face]
    ei, ej = disc.face_ext_i[:, face], disc.face_ext_j[:, face]

    u_int = State(h=q[:, ii, jj, 0], hv1=q[:, ii, jj, 1], hv2=q[:, ii, jj, 2])
    h_ext = q[ee[:, None], ei, ej, 0]
    hv1_raw = q[ee[:, None], ei, ej, 1]
    hv2_raw = q[ee[:, None], ei, ej, 2]
    t_mat = disc.face_transform[:, face]
    u_ext = State(
        h=h_ext,
        hv1=t_mat[..., 0, 0] * hv1_raw + t_mat[..., 0, 1] * hv2_raw,
        hv2=t_mat[..., 1, 0] * hv1_raw + t_mat[..., 1, 1] * hv2_raw,
    )

    g = disc.geom
    aux_int = AuxNode(
        jac=g.jac[:, ii, jj],
        gcov=g.gcov[:, ii, jj],
        gcon=g.gcon[:, ii, jj],
        gamma=g.gamma[:, ii, jj],
        coriolis=disc.coriolis[:, ii, jj],
        b=disc.b[:, ii, jj],
    )
    aux_ext = AuxNode(
        jac=aux_int.jac,
        gcov=aux_int.gcov,
        gcon=aux_int.gcon,
        gamma=aux_int.gamma,
        coriolis=aux_int.coriolis,
        b=disc.b[ee[:, None], ei, ej],
    )
    return u_int, u_ext, aux_int, aux_ext


def _interface_flux(disc, u_int, u_ext, aux_int, aux_ext, direction, sign):
    orientation = 1 if sign > 0 else -1
    if disc.flux_variant == "ec":
        return ec_flux(u_int, u_ext, aux_int, aux_ext, direction)
    if disc.flux_variant == "es":
        return es_flux(u_int, u_ext, aux_int, aux_ext, direction, orientation)
    flux = central_flux(u_int, u_ext, aux_int, aux_ext, direction)
    return flux + llf_dissipation(u_int, u_ext, aux_int, aux_ext, direction, orientation)


def _add_interface_terms(disc, q, numerator):
    weights = disc.ops.weights
    for face in range(4):
        direction = FACE_DIRECTION[face]
        sign = FACE_SIGN[face]
        u_int, u_ext, aux_int, aux_ext = _interface_data(disc, q, face)
        f_star = _interface_flux(disc, u_int, u_ext, aux_int, aux_ext, direction, sign)
        contrib = (-sign) * weights[None, :, None] * f_star
        ii, jj = disc.face_int_i[face], disc.face_int_j[face]
        numerator[:, ii, jj] += contrib


def rhs(disc, q, t=0.0):
    """Semi-discrete du/dt for the configured variant; shape matches q."""
    check_admissible(disc, q, t)
    if disc.flux_variant == "central":
        numerator = _central_volume(disc, q)
        source = naive_source_term(as_state(q), disc.volume_aux())
    else:
        numerator = _flux_differencing_volume(disc, q)
        source = source_term(as_state(q), disc.volume_aux())
    _add_interface_terms(disc, q, numerator)
    denom = disc.node_weights[None, :, :] * disc.geom.jac
    return numerator / denom[..., None] + source


def rhs_strong(disc, q, t=0.0):
    """Strong-form assembly of the flux-differencing variants.

    Algebraically equivalent to :func:`rhs` through the SBP property; kept as
    an independent cross-check of the weak-form implementation.
    """
    if disc.flux_variant == "central":
        raise DiscretizationError("strong form is defined for the ec/es variants only")
    check_admissible(disc, q, t)
    d_mat = disc.ops.D
    jac = disc.geom.jac

    u_l, u_r = _pair_states(q, _LINE_L, _LINE_R)
    f1 = ec_flux(u_l, u_r, _pair_aux(disc, _LINE_L), _pair_aux(disc, _LINE_R), 1)
    du = -2.0 * np.einsum("im,eimjc->eijc", d_mat, f1)
    u_l, u_r = _pair_states(q, _COL_L, _COL_R)
    f2 = ec_flux(u_l, u_r, _pair_aux(disc, _COL_L), _pair_aux(disc, _COL_R), 2)
    du -= 2.0 * np.einsum("jm,eijmc->eijc", d_mat, f2)
    du /= jac[..., None]
    du += source_term(as_state(q), disc.volume_aux())

    w_end = disc.ops.weights[0]
    for face in range(4):
        direction = FACE_DIRECTION[face]
        sign = FACE_SIGN[face]
        u_int, u_ext, aux_int, aux_ext = _interface_data(disc, q, face)
        f_star = _interface_flux(disc, u_int, u_ext, aux_int, aux_ext, direction, sign)
        f_own = physical_flux(u_int, aux_int, direction)
        penalty = (-sign) * (f_star - f_own) / (w_end * aux_int.jac[..., None])
        ii, jj = disc.face_int_i[face], disc.face_int_j[face]
        du[:, ii, jj] += penalty
    return du


def semidiscrete_entropy_rate(disc, q, t=0.0):
    """d/dt of the global entropy integral implied by the current RHS."""
    du = rhs(disc, q, t)
    w = entropy_variables(as_state(q), disc.volume_aux()).as_array()
    weighted = disc.node_weights[None, :, :] * disc.geom.jac
    return float(np.einsum("eij,eijc,eijc->", weighted, w, du))
