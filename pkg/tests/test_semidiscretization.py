import numpy as np
import pytest

from covswe.geometry import build_cubed_sphere, topology_from_corners
from covswe.sbp import build_operators
from covswe.semidiscretization import (
    AdmissibilityError,
    DiscretizationError,
    as_state,
    build_discretization,
    check_admissible,
    pack_state,
    rhs,
    rhs_strong,
    semidiscrete_entropy_rate,
)
from covswe.swe import (
    GRAVITY,
    AuxNode,
    State,
    ec_flux,
    entropy,
    wave_speed,
)

RADIUS = 6.37122e6
OMEGA = 7.292e-5


def coriolis_parameter(x):
    return 2.0 * OMEGA * x[..., 2] / RADIUS


def smooth_topography(x):
    xn = x / RADIUS
    return 800.0 * (1.0 + 0.5 * xn[..., 0] * xn[..., 2] + 0.3 * xn[..., 1])


def build(flux_variant, per_face=2, degree=3, topography=None, coriolis=None):
    mesh = build_cubed_sphere(per_face, RADIUS)
    ops = build_operators(degree)
    return build_discretization(
        mesh, ops, flux_variant, topography=topography, coriolis=coriolis
    )


def tangent_field(x, coeffs):
    """Low-order polynomial vector field projected onto the sphere tangent."""
    xn = x / RADIUS
    raw = coeffs[0] + np.einsum("ab,...b->...a", coeffs[1], xn)
    raw = raw + coeffs[2] * xn * xn[..., [1, 2, 0]]
    radial = np.einsum("...a,...a->...", raw, xn)
    return raw - radial[..., None] * xn


def smooth_state(disc, rng, h0=5000.0, h_amp=300.0, v_amp=30.0):
    """Admissible field whose traces are continuous across interfaces."""
    g = disc.geom
    xn = g.x / RADIUS
    h = h0 + h_amp * (
        np.sin(2.0 * xn[..., 0]) * xn[..., 2] + 0.5 * np.cos(3.0 * xn[..., 1])
    )
    h = h - disc.b
    coeffs = (
        rng.normal(size=3),
        rng.normal(size=(3, 3)),
        rng.normal(),
    )
    vel = v_amp * tangent_field(g.x, coeffs)
    v1 = np.einsum("eijd,eijd->eij", g.aup1, vel)
    v2 = np.einsum("eijd,eijd->eij", g.aup2, vel)
    return pack_state(h, h * v1, h * v2)


def tendency_scales(disc, q):
    """(3,) array of characteristic tendency magnitudes for rest-state checks."""
    u = as_state(q)
    aux = disc.volume_aux()
    lam = np.max(wave_speed(u, aux, 1) + wave_speed(u, aux, 2))
    h_max = float(np.max(u.h))
    return np.array([lam * h_max, lam * lam * h_max, lam * lam * h_max])


def total_mass(disc, q):
    w2j = disc.node_weights[None] * disc.geom.jac
    return float(np.sum(w2j * q[..., 0]))


def total_entropy(disc, q):
    w2j = disc.node_weights[None] * disc.geom.jac
    return float(np.sum(w2j * entropy(as_state(q), disc.volume_aux())))


class TestBuildValidation:
    def test_variant_pairing_enforced(self):
        mesh = build_cubed_sphere(1, RADIUS)
        ops = build_operators(2)
        with pytest.raises(DiscretizationError):
            build_discretization(mesh, ops, "central", source_variant="split")
        with pytest.raises(DiscretizationError):
            build_discretization(mesh, ops, "ec", source_variant="naive")
        with pytest.raises(DiscretizationError):
            build_discretization(mesh, ops, "entropy")

    def test_default_source_pairing(self):
        mesh = build_cubed_sphere(1, RADIUS)
        ops = build_operators(2)
        assert build_discretization(mesh, ops, "es").source_variant == "split"
        central = build_discretization(mesh, ops, "central")
        assert central.source_variant == "naive"
        assert central.db is not None and central.db.shape == (6, 3, 3, 2)

    def test_discontinuous_topography_rejected(self):
        mesh = build_cubed_sphere(1, RADIUS)
        ops = build_operators(2)

        def jumpy(x):
            values = np.zeros(x.shape[:-1])
            values[::2] = 100.0
            return values

        with pytest.raises(DiscretizationError):
            build_discretization(mesh, ops, "ec", topography=jumpy)


class TestWellBalancing:
    @pytest.mark.parametrize("variant", ["ec", "es"])
    def test_rest_state_rhs_vanishes(self, variant):
        disc = build(
            variant,
            topography=smooth_topography,
            coriolis=coriolis_parameter,
        )
        surface = 6000.0
        h = surface - disc.b
        q = pack_state(h, np.zeros_like(h), np.zeros_like(h))
        du = rhs(disc, q, 0.0)
        scales = tendency_scales(disc, q)
        for c in range(3):
            assert np.max(np.abs(du[..., c])) <= 1e-12 * scales[c]

    def test_rest_state_strong_form_vanishes(self):
        disc = build("ec", topography=smooth_topography)
        h = 6000.0 - disc.b
        q = pack_state(h, np.zeros_like(h), np.zeros_like(h))
        du = rhs_strong(disc, q, 0.0)
        scales = tendency_scales(disc, q)
        for c in range(3):
            assert np.max(np.abs(du[..., c])) <= 1e-12 * scales[c]

    def test_rest_state_entropy_rate(self):
        disc = build("es", topography=smooth_topography)
        h = 6000.0 - disc.b
        q = pack_state(h, np.zeros_like(h), np.zeros_like(h))
        rate = semidiscrete_entropy_rate(disc, q, 0.0)
        lam = np.max(wave_speed(as_state(q), disc.volume_aux(), 1))
        assert abs(rate) <= 1e-12 * abs(total_entropy(disc, q)) * lam


class TestConservation:
    @pytest.mark.parametrize("variant", ["ec", "es", "central"])
    def test_mass_rate_vanishes(self, variant):
        rng = np.random.default_rng(42)
        disc = build(
            variant,
            topography=smooth_topography,
            coriolis=coriolis_parameter,
        )
        q = smooth_state(disc, rng)
        # make the interface jumps substantial to exercise the dissipation
        q[..., 0] += 20.0 * rng.standard_normal(q[..., 0].shape)
        q[..., 1] += 0.1 * np.abs(q[..., 1]).max() * rng.standard_normal(q[..., 1].shape)
        du = rhs(disc, q, 0.0)
        w2j = disc.node_weights[None] * disc.geom.jac
        rate = float(np.sum(w2j * du[..., 0]))
        u = as_state(q)
        lam = np.max(
            wave_speed(u, disc.volume_aux(), 1) + wave_speed(u, disc.volume_aux(), 2)
        )
        assert abs(rate) <= 1e-12 * total_mass(disc, q) * lam


class TestEntropyRates:
    def make_noisy_state(self, disc, seed=7):
        rng = np.random.default_rng(seed)
        q = smooth_state(disc, rng)
        q[..., 0] += 25.0 * rng.standard_normal(q[..., 0].shape)
        q[..., 1] += 5e-6 * rng.standard_normal(q[..., 1].shape)
        q[..., 2] += 5e-6 * rng.standard_normal(q[..., 2].shape)
        return q

    def rate_scale(self, disc, q):
        return abs(total_entropy(disc, q)) / 86400.0

    def test_ec_rate_is_zero(self):
        disc = build("ec", topography=smooth_topography, coriolis=coriolis_parameter)
        q = self.make_noisy_state(disc)
        rate = semidiscrete_entropy_rate(disc, q, 0.0)
        assert abs(rate) <= 1e-10 * self.rate_scale(disc, q)

    def test_es_rate_is_negative(self):
        disc = build("es", topography=smooth_topography, coriolis=coriolis_parameter)
        q = self.make_noisy_state(disc)
        rate = semidiscrete_entropy_rate(disc, q, 0.0)
        assert rate <= 1e-12 * self.rate_scale(disc, q)
        # with jumps of this size the dissipation must be macroscopic
        assert rate < -1e-6 * self.rate_scale(disc, q)

    def test_es_dissipates_no_less_than_ec_everywhere(self):
        disc_ec = build("ec", topography=smooth_topography)
        disc_es = build("es", topography=smooth_topography)
        q = self.make_noisy_state(disc_ec, seed=11)
        rate_ec = semidiscrete_entropy_rate(disc_ec, q, 0.0)
        rate_es = semidiscrete_entropy_rate(disc_es, q, 0.0)
        assert rate_es < rate_ec + 1e-10 * self.rate_scale(disc_ec, q)


class TestWeakStrongEquivalence:
    @pytest.mark.parametrize("variant", ["ec", "es"])
    def test_agreement_on_random_fields(self, variant):
        rng = np.random.default_rng(3)
        disc = build(variant, topography=smooth_topography, coriolis=coriolis_parameter)
        q = smooth_state(disc, rng)
        q[..., 0] += 15.0 * rng.standard_normal(q[..., 0].shape)
        weak = rhs(disc, q, 0.0)
        strong = rhs_strong(disc, q, 0.0)
        for c in range(3):
            scale = np.max(np.abs(weak[..., c]))
            assert np.max(np.abs(weak[..., c] - strong[..., c])) <= 1e-11 * scale

    def test_strong_form_rejects_central(self):
        disc = build("central")
        q = pack_state(
            np.full((disc.n_elements, 4, 4), 1000.0),
            np.zeros((disc.n_elements, 4, 4)),
            np.zeros((disc.n_elements, 4, 4)),
        )
        with pytest.raises(DiscretizationError):
            rhs_strong(disc, q, 0.0)


class TestAdmissibility:
    def test_locates_offending_node(self):
        disc = build("ec")
        n = disc.n_nodes
        h = np.full((disc.n_elements, n, n), 100.0)
        q = pack_state(h, np.zeros_like(h), np.zeros_like(h))
        q[5, 2, 1, 0] = -3.0
        with pytest.raises(AdmissibilityError) as err:
            rhs(disc, q, 12.5)
        assert err.value.element == 5
        assert err.value.node == (2, 1)
        assert err.value.time == 12.5
        assert err.value.depth == -3.0

    def test_rejects_non_finite_momentum(self):
        disc = build("ec")
        n = disc.n_nodes
        h = np.full((disc.n_elements, n, n), 100.0)
        q = pack_state(h, np.zeros_like(h), np.zeros_like(h))
        q[0, 0, 0, 1] = np.nan
        with pytest.raises(AdmissibilityError):
            check_admissible(disc, q, 0.0)

    def test_accepts_admissible_field(self):
        disc = build("ec")
        n = disc.n_nodes
        h = np.full((disc.n_elements, n, n), 100.0)
        check_admissible(disc, pack_state(h, h, h), 0.0)


class TestCentralFreeStream:
    def test_constant_state_residual_is_truncation_level(self):
        # The pointwise-flux baseline does not satisfy a discrete metric
        # identity: the divergence of the analytically evaluated metric terms
        # only cancels the Christoffel sources up to interpolation error, so a
        # constant state is preserved to truncation accuracy, not roundoff.
        disc = build("central", degree=3, per_face=2)
        h0 = 5960.0
        h = np.full((disc.n_elements, 4, 4), h0)
        q = pack_state(h, np.zeros_like(h), np.zeros_like(h))
        du = rhs(disc, q, 0.0)
        assert np.max(np.abs(du[..., 0])) == 0.0
        scales = tendency_scales(disc, q)
        residual = np.max(np.abs(du[..., 1:]))
        assert residual <= 2e-3 * scales[1]
        # refinement shrinks the defect
        fine = build("central", degree=3, per_face=4)
        hف = np.full((fine.n_elements, 4, 4), h0)
        qf = pack_state(hف, np.zeros_like(hف), np.zeros_like(hف))
        duf = rhs(fine, qf, 0.0)
        residual_fine = np.max(np.abs(duf[..., 1:])) / tendency_scales(fine, qf)[1]
        assert residual_fine < 0.5 * residual / scales[1]

    def test_ec_preserves_constant_state_to_roundoff(self):
        disc = build("ec", degree=3, per_face=2)
        h = np.full((disc.n_elements, 4, 4), 5960.0)
        q = pack_state(h, np.zeros_like(h), np.zeros_like(h))
        du = rhs(disc, q, 0.0)
        scales = tendency_scales(disc, q)
        for c in range(3):
            assert np.max(np.abs(du[..., c])) <= 1e-12 * scales[c]


class TestCoordinateObjectivity:
    @pytest.mark.parametrize("variant", ["ec", "es"])
    def test_cyclic_corner_relabeling(self, variant):
        rng = np.random.default_rng(19)
        mesh = build_cubed_sphere(2, RADIUS)
        ops = build_operators(3)
        disc = build_discretization(
            mesh, ops, variant, topography=smooth_topography,
            coriolis=coriolis_parameter,
        )
        rotated_mesh = topology_from_corners(mesh.corners[:, [1, 2, 3, 0], :], RADIUS)
        disc_rot = build_discretization(
            rotated_mesh, ops, variant, topography=smooth_topography,
            coriolis=coriolis_parameter,
        )

        q = smooth_state(disc, rng)
        # same physical field sampled through the rotated charts:
        # node (i', j') of the rotated element is node (N - j', i') originally
        n = ops.n_nodes
        idx_i = np.arange(n)[:, None] * np.ones(n, dtype=int)[None, :]
        idx_j = np.ones(n, dtype=int)[:, None] * np.arange(n)[None, :]
        src_i, src_j = n - 1 - idx_j, idx_i
        assert np.max(np.abs(disc_rot.geom.x - disc.geom.x[:, src_i, src_j])) < 1e-7

        g, gr = disc.geom, disc_rot.geom
        vel = (
            q[..., 1:2] * g.a1 + q[..., 2:3] * g.a2
        )[:, src_i, src_j] / q[:, src_i, src_j, 0:1]
        h_rot = q[:, src_i, src_j, 0]
        v1 = np.einsum("eijd,eijd->eij", gr.aup1, vel)
        v2 = np.einsum("eijd,eijd->eij", gr.aup2, vel)
        q_rot = pack_state(h_rot, h_rot * v1, h_rot * v2)

        du = rhs(disc, q, 0.0)
        du_rot = rhs(disc_rot, q_rot, 0.0)
        cart = du[..., 1:2] * g.a1 + du[..., 2:3] * g.a2
        cart_rot = du_rot[..., 1:2] * gr.a1 + du_rot[..., 2:3] * gr.a2

        scale_mass = np.max(np.abs(du[..., 0]))
        scale_mom = np.max(np.abs(cart))
        assert np.max(np.abs(du_rot[..., 0] - du[:, src_i, src_j, 0])) <= 1e-10 * scale_mass
        assert np.max(np.abs(cart_rot - cart[:, src_i, src_j])) <= 1e-10 * scale_mom


class TestManufacturedVolume:
    def test_flux_differencing_matches_split_derivative(self):
        # On a flat metric with linear nodal data, contracting the derivative
        # matrix with the two-point flux reproduces the analytic value of the
        # skew-split derivative exactly for degree >= 3 operators.
        ops = build_operators(3)
        xi = ops.nodes
        h = 2.0 + 0.3 * xi
        v1 = 0.5 - 0.2 * xi
        v2 = 0.1 + 0.4 * xi
        b = 0.2 + 0.05 * xi

        eye = np.tile(np.eye(2), (ops.n_nodes, 1, 1))
        aux = AuxNode(
            jac=np.ones_like(xi),
            gcov=eye,
            gcon=eye,
            gamma=np.zeros((ops.n_nodes, 2, 2, 2)),
            coriolis=np.zeros_like(xi),
            b=b,
        )
        u = State(h=h, hv1=h * v1, hv2=h * v2)

        u_l = State(h=h[:, None], hv1=(h * v1)[:, None], hv2=(h * v2)[:, None])
        u_r = State(h=h[None, :], hv1=(h * v1)[None, :], hv2=(h * v2)[None, :])
        aux_l = AuxNode(
            jac=aux.jac[:, None], gcov=aux.gcov[:, None], gcon=aux.gcon[:, None],
            gamma=aux.gamma[:, None], coriolis=aux.coriolis[:, None], b=b[:, None],
        )
        aux_r = AuxNode(
            jac=aux.jac[None, :], gcov=aux.gcov[None, :], gcon=aux.gcon[None, :],
            gamma=aux.gamma[None, :], coriolis=aux.coriolis[None, :], b=b[None, :],
        )
        pair = ec_flux(u_l, u_r, aux_l, aux_r, 1)
        volume = 2.0 * np.einsum("im,imc->ic", ops.D, pair)

        # oracle: polynomial arithmetic for the split form
        import numpy.polynomial.polynomial as poly

        ph = np.array([2.0, 0.3])
        pv1 = np.array([0.5, -0.2])
        pv2 = np.array([0.1, 0.4])
        pb = np.array([0.2, 0.05])

        def at_nodes(p):
            return poly.polyval(xi, p)

        d_hv1 = poly.polyder(poly.polymul(ph, pv1))
        mass = at_nodes(d_hv1)
        split_1 = 0.5 * (
            at_nodes(poly.polyder(poly.polymul(poly.polymul(ph, pv1), pv1)))
            + v1 * at_nodes(d_hv1)
            + h * v1 * at_nodes(poly.polyder(pv1))
        ) + GRAVITY * h * at_nodes(poly.polyder(poly.polyadd(ph, pb)))
        split_2 = 0.5 * (
            at_nodes(poly.polyder(poly.polymul(poly.polymul(ph, pv1), pv2)))
            + v2 * at_nodes(d_hv1)
            + h * v1 * at_nodes(poly.polyder(pv2))
        )
        expected = np.stack([mass, split_1, split_2], axis=-1)
        assert np.max(np.abs(volume - expected)) < 1e-12 * np.max(np.abs(expected))
