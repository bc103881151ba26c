"""Pointwise physics of the rotating shallow water equations in covariant form.

The prognostic variables are the layer depth ``h`` and the contravariant
momentum components ``h v^1`` and ``h v^2`` expressed in the local curvilinear
coordinates of each element. Geometric data enters through :class:`AuxNode`,
which carries the area element J, the covariant and contravariant metric
tensors, the Christoffel symbols, the Coriolis parameter, and the bottom
topography at a node.

Every function in this module is a pure elementwise operation: all state and
auxiliary fields may be scalars or numpy arrays of any mutually broadcastable
shape, which lets the same kernels serve both pointwise unit checks and the
vectorized pairwise evaluations used by the flux-differencing volume terms.

Two families of two-point fluxes are provided. The nonsymmetric
entropy-conservative flux :func:`ec_flux` satisfies the shuffle condition

    w_R . f#(R, L) - w_L . f#(L, R) = (J Psi)_R - (J Psi)_L,

and :func:`es_flux` augments it with local Lax-Friedrichs dissipation on the
conservative variables. A plain arithmetic-mean flux :func:`central_flux` is
kept as the standard discontinuous Galerkin baseline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

GRAVITY = 9.80616
"""Gravitational acceleration in m/s^2 used throughout."""


class NonpositiveDepthError(ValueError):
    """Raised when an operation receives a state with h <= 0."""


@dataclass
class State:
    """Shallow water state: depth and contravariant momentum components.

    Fields may be scalars or broadcastable numpy arrays. ``hv1`` and ``hv2``
    are h times the contravariant velocity components v^1 and v^2.
    """

    h: np.ndarray
    hv1: np.ndarray
    hv2: np.ndarray


@dataclass
class AuxNode:
    """Geometric and forcing data attached to a quadrature node.

    gcov and gcon hold the covariant metric G_ij and its inverse G^ij in the
    trailing two axes; gamma holds the Christoffel symbols of the second kind
    with index layout gamma[..., i, j, k] for Gamma^i_jk. ``db`` holds nodal
    coordinate derivatives (d_1 b, d_2 b) in the trailing axis and is only
    required by :func:`naive_source_term`; flux-differencing discretizations
    leave it as None because topography enters their two-point fluxes instead.
    """

    jac: np.ndarray
    gcov: np.ndarray
    gcon: np.ndarray
    gamma: np.ndarray
    coriolis: np.ndarray
    b: np.ndarray
    db: np.ndarray | None = None


@dataclass
class EntropyVars:
    """Entropy variables w = d(eta)/du.

    w1 = g (h + b) - (v_1 v^1 + v_2 v^2)/2, and (w2, w3) are the covariant
    velocity components (v_1, v_2).
    """

    w1: np.ndarray
    w2: np.ndarray
    w3: np.ndarray

    def as_array(self):
        """Stack the three components into one array with a trailing axis."""
        return np.stack(
            np.broadcast_arrays(self.w1, self.w2, self.w3), axis=-1
        )


def _require_positive_depth(*depths):
    for h in depths:
        if np.any(np.asarray(h) <= 0.0):
            raise NonpositiveDepthError(
                "layer depth must be strictly positive, got min h = "
                f"{np.min(np.asarray(h, dtype=float))}"
            )


def _velocity(u):
    """Contravariant velocity components (v^1, v^2)."""
    return u.hv1 / u.h, u.hv2 / u.h


def _lower(aux, v1, v2):
    """Lower an index with the covariant metric: v_i = G_ij v^j."""
    g = aux.gcov
    return (
        g[..., 0, 0] * v1 + g[..., 0, 1] * v2,
        g[..., 1, 0] * v1 + g[..., 1, 1] * v2,
    )


def physical_flux(u, aux, j):
    """Pointwise flux J f^j of the covariant shallow water equations.

    The mass component is J h v^j and the momentum components are
    J (h v^i v^j + g h^2 G^{ij} / 2). Returns an array with the three flux
    components stacked along the trailing axis.
    """
    _require_positive_depth(u.h)
    jd = _direction_index(j)
    v1, v2 = _velocity(u)
    vj = v1 if jd == 0 else v2
    half_gh2 = 0.5 * GRAVITY * u.h * u.h
    mass = aux.jac * u.h * vj
    mom1 = aux.jac * (u.hv1 * vj + half_gh2 * aux.gcon[..., 0, jd])
    mom2 = aux.jac * (u.hv2 * vj + half_gh2 * aux.gcon[..., 1, jd])
    return np.stack(np.broadcast_arrays(mass, mom1, mom2), axis=-1)


def entropy(u, aux):
    """Entropy (total energy) density eta = h v_i v^i / 2 + g h^2 / 2 + g h b.

    This is the convex function whose gradient with respect to
    (h, h v^1, h v^2) gives :func:`entropy_variables`; the caller applies
    quadrature weights and J.
    """
    _require_positive_depth(u.h)
    v1, v2 = _velocity(u)
    vlow1, vlow2 = _lower(aux, v1, v2)
    kinetic = 0.5 * u.h * (vlow1 * v1 + vlow2 * v2)
    return kinetic + 0.5 * GRAVITY * u.h * u.h + GRAVITY * u.h * aux.b


def entropy_variables(u, aux):
    """Entropy variables w = d(eta)/du as an :class:`EntropyVars`."""
    _require_positive_depth(u.h)
    v1, v2 = _velocity(u)
    vlow1, vlow2 = _lower(aux, v1, v2)
    w1 = GRAVITY * (u.h + aux.b) - 0.5 * (vlow1 * v1 + vlow2 * v2)
    return EntropyVars(w1=w1, w2=vlow1, w3=vlow2)


def entropy_hessian(u, aux):
    """Closed-form Hessian d(w)/du, a symmetric positive definite 3x3 block.

    Returns an array of shape ``broadcast + (3, 3)``.
    """
    _require_positive_depth(u.h)
    v1, v2 = _velocity(u)
    vlow1, vlow2 = _lower(aux, v1, v2)
    shape = np.broadcast_shapes(
        np.shape(u.h), np.shape(vlow1), np.shape(aux.gcov[..., 0, 0])
    )
    hess = np.empty(shape + (3, 3))
    hess[..., 0, 0] = GRAVITY * u.h + vlow1 * v1 + vlow2 * v2
    hess[..., 0, 1] = hess[..., 1, 0] = -vlow1
    hess[..., 0, 2] = hess[..., 2, 0] = -vlow2
    hess[..., 1, 1] = aux.gcov[..., 0, 0]
    hess[..., 1, 2] = hess[..., 2, 1] = aux.gcov[..., 0, 1]
    hess[..., 2, 2] = aux.gcov[..., 1, 1]
    return hess / np.asarray(u.h)[..., None, None]


def flux_potential(u, aux, j):
    """Flux potential J Psi^j = J g h^2 v^j / 2."""
    _require_positive_depth(u.h)
    jd = _direction_index(j)
    v1, v2 = _velocity(u)
    vj = v1 if jd == 0 else v2
    return 0.5 * GRAVITY * aux.jac * u.h * u.h * vj


def wave_speed(u, aux, j):
    """Contravariant wave speed estimate lambda^j = |v^j| + sqrt(g h G^jj)."""
    _require_positive_depth(u.h)
    jd = _direction_index(j)
    v1, v2 = _velocity(u)
    vj = v1 if jd == 0 else v2
    return np.abs(vj) + np.sqrt(GRAVITY * u.h * aux.gcon[..., jd, jd])


def ec_flux(u_l, u_r, aux_l, aux_r, j):
    """Nonsymmetric entropy-conservative two-point flux in direction j.

    The mass component is the arithmetic mean of J h v^j. The momentum
    components combine a skew-symmetric splitting of the advective terms with
    a pressure term g (G^ij J h)_L h_R / 2 and a nonconservative topography
    term g (G^ij J h)_L (b_R - b_L) / 2. For interface use the right state
    must already be expressed in the left chart and both aux arguments
    evaluated on the left side.
    """
    _require_positive_depth(u_l.h, u_r.h)
    jd = _direction_index(j)
    v1_l, v2_l = _velocity(u_l)
    v1_r, v2_r = _velocity(u_r)
    vj_l = v1_l if jd == 0 else v2_l
    vj_r = v1_r if jd == 0 else v2_r
    vlow1_r, vlow2_r = _lower(aux_r, v1_r, v2_r)

    a_l = aux_l.jac * u_l.h * vj_l
    a_r = aux_r.jac * u_r.h * vj_r
    mass = 0.5 * (a_l + a_r)

    gcon_l = aux_l.gcon
    press = 0.5 * GRAVITY * aux_l.jac * u_l.h * (u_r.h + aux_r.b - aux_l.b)
    components = [mass]
    for1 = (v1_l, v1_r)
    for2 = (v2_l, v2_r)
    for idx, (vi_l, vi_r) in enumerate((for1, for2)):
        raised_r = gcon_l[..., idx, 0] * vlow1_r + gcon_l[..., idx, 1] * vlow2_r
        advect = 0.25 * (a_l * vi_l + a_r * vi_r + a_r * vi_l + a_l * raised_r)
        components.append(advect + gcon_l[..., idx, jd] * press)
    return np.stack(np.broadcast_arrays(*components), axis=-1)


def llf_dissipation(u_l, u_r, aux_l, aux_r, j, orientation=1):
    """Local Lax-Friedrichs dissipation on the conservative variables.

    Returns ``-orientation * (J_L / 2) * max(lambda_L, lambda_R) * (u_R - u_L)``
    stacked along the trailing axis. ``orientation`` is +1 when the outward
    normal of the element supplying the left state points along +xi^j and -1
    when it points along -xi^j, so that the jump is always penalized in the
    upwind sense regardless of which end of the reference element the
    interface sits on.
    """
    if orientation not in (1, -1):
        raise ValueError(f"orientation must be +1 or -1, got {orientation!r}")
    lam = np.maximum(wave_speed(u_l, aux_l, j), wave_speed(u_r, aux_r, j))
    factor = -0.5 * orientation * aux_l.jac * lam
    return np.stack(
        np.broadcast_arrays(
            factor * (u_r.h - u_l.h),
            factor * (u_r.hv1 - u_l.hv1),
            factor * (u_r.hv2 - u_l.hv2),
        ),
        axis=-1,
    )


def es_flux(u_l, u_r, aux_l, aux_r, j, orientation=1):
    """Entropy-stable interface flux: :func:`ec_flux` plus LLF dissipation.

    With the default ``orientation=1`` this is
    ``ec_flux - (J_L / 2) max(lambda_L^j, lambda_R^j) (u_R - u_L)``; see
    :func:`llf_dissipation` for the role of ``orientation``.
    """
    return ec_flux(u_l, u_r, aux_l, aux_r, j) + llf_dissipation(
        u_l, u_r, aux_l, aux_r, j, orientation
    )


def central_flux(u_l, u_r, aux_l, aux_r, j):
    """Arithmetic mean of the pointwise fluxes, the standard DG volume flux."""
    return 0.5 * (physical_flux(u_l, aux_l, j) + physical_flux(u_r, aux_r, j))


def source_term(u, aux):
    """Momentum source for the flux-differencing discretizations.

    The geometric part is the residual of the skew-symmetric splitting,
    -(Gamma^i_jk h v^j v^k - G^ik Gamma^l_jk h v^j v_l)/2, which together
    with the Coriolis force -f J G^ij eps_jk h v^k contracts to zero against
    the entropy variables. The mass component is identically zero.
    """
    _require_positive_depth(u.h)
    v1, v2 = _velocity(u)
    vlow1, vlow2 = _lower(aux, v1, v2)
    vup = np.stack(np.broadcast_arrays(v1, v2), axis=-1)
    vlow = np.stack(np.broadcast_arrays(vlow1, vlow2), axis=-1)

    quad_up = np.einsum("...ijk,...j,...k->...i", aux.gamma, vup, vup)
    traced = np.einsum("...ljk,...j,...l->...k", aux.gamma, vup, vlow)
    quad_mixed = np.einsum("...ik,...k->...i", aux.gcon, traced)
    geometric = -0.5 * np.asarray(u.h)[..., None] * (quad_up - quad_mixed)

    cor1, cor2 = _coriolis_force(u, aux)
    zero = np.zeros(np.broadcast_shapes(np.shape(geometric[..., 0]), np.shape(cor1)))
    return np.stack(
        np.broadcast_arrays(
            zero, geometric[..., 0] + cor1, geometric[..., 1] + cor2
        ),
        axis=-1,
    )


def _coriolis_force(u, aux):
    """Components of -f J G^ij eps_jk h v^k with eps the Levi-Civita symbol."""
    factor = -aux.coriolis * aux.jac
    return (
        factor * (aux.gcon[..., 0, 0] * u.hv2 - aux.gcon[..., 0, 1] * u.hv1),
        factor * (aux.gcon[..., 1, 0] * u.hv2 - aux.gcon[..., 1, 1] * u.hv1),
    )


def naive_source_term(u, aux):
    """Unsplit pointwise source used by the standard DG baseline.

    Sums the full geometric source -Gamma^i_jk tau^jk with
    tau^jk = h v^j v^k + g h^2 G^jk / 2, the collocated bottom topography
    force -g h G^ij d_j b, and the Coriolis force. Requires ``aux.db``.
    """
    _require_positive_depth(u.h)
    if aux.db is None:
        raise ValueError("naive_source_term requires aux.db (nodal topography gradient)")
    v1, v2 = _velocity(u)
    vup = np.stack(np.broadcast_arrays(v1, v2), axis=-1)
    tau = np.asarray(u.h)[..., None, None] * vup[..., :, None] * vup[..., None, :]
    tau = tau + np.asarray(0.5 * GRAVITY * u.h * u.h)[..., None, None] * aux.gcon
    geometric = -np.einsum("...ijk,...jk->...i", aux.gamma, tau)

    grad_b = np.einsum("...ij,...j->...i", aux.gcon, aux.db)
    bottom = -GRAVITY * np.asarray(u.h)[..., None] * grad_b

    cor1, cor2 = _coriolis_force(u, aux)
    total1 = geometric[..., 0] + bottom[..., 0] + cor1
    total2 = geometric[..., 1] + bottom[..., 1] + cor2
    zero = np.zeros(np.shape(total1))
    return np.stack(np.broadcast_arrays(zero, total1, total2), axis=-1)


def _direction_index(j):
    if j not in (1, 2):
        raise ValueError(f"coordinate direction must be 1 or 2, got {j!r}")
    return j - 1
