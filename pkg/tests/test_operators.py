import numpy as np
import pytest
from conftest import cplx, rel_err
from hypothesis import given
from hypothesis import strategies as st

from irgnm.gridmath import GramianSpec, ImagingGeometry
from irgnm.operators import (
    HoloData,
    Object2D,
    ParallelProjector,
    PhaseContrastOperator,
    TomoPhaseContrastOperator,
    Volume3D,
    backproject,
    ctf_apply,
    ctf_invert_homogeneous,
    ctf_multipliers,
    pc_adjoint,
    pc_derivative,
    pc_forward,
    radon,
    tomo_adjoint,
    tomo_derivative,
    tomo_forward,
)
from irgnm.phantom import SpherePacking, render_packing


def _pairing(fwd, adj, h, g, gx=None, gy=None):
    """Relative mismatch of <A h, g>_Y and <h, A* g>_X."""
    gx = gx or GramianSpec()
    gy = gy or GramianSpec()
    lhs = np.vdot(fwd(h), gy.apply(g)).real
    rhs = np.vdot(h, gx.apply(adj(g))).real
    return abs(lhs - rhs) / max(abs(lhs), 1e-300)


def _gauss(n, w, amp=1.0):
    y, x = np.indices((n, n)) - n / 2
    return amp * np.exp(-(x**2 + y**2) / (2 * w**2))


def _straight_line_hologram(f, nf):
    # written out directly with numpy, no package helpers
    n0, n1 = f.shape
    xi2 = np.fft.fftfreq(n0)[:, None] ** 2 + np.fft.fftfreq(n1)[None, :] ** 2
    u = np.exp(-1j * f)
    psi = np.fft.ifft2(np.exp(1j * np.pi * xi2 / nf) * np.fft.fft2(u))
    return np.abs(psi) ** 2


class TestPhaseContrastForward:
    def test_empty_object_gives_flat_field(self):
        for pad in (False, True):
            I = pc_forward(np.zeros((32, 40), complex), 0.01, pad=pad)
            assert np.max(np.abs(I - 1)) <= 1e-12

    def test_disc_matches_straight_line_evaluation(self):
        n = 64
        y, x = np.indices((n, n)) - n / 2
        disc = (x**2 + y**2 <= 12**2).astype(float)
        f = 0.3 * disc - 0.5j * 0.05 * disc
        I = pc_forward(Object2D(f), 0.02)
        assert rel_err(I, _straight_line_hologram(f, 0.02)) <= 1e-12

    def test_weak_phase_object_follows_ctf(self):
        phi = _gauss(128, 4.0, 1e-3)
        I = pc_forward(phi + 0j, 0.05)
        assert rel_err(I - 1, ctf_apply(phi, np.zeros_like(phi), 0.05)) <= 0.02

    def test_pure_absorber_loses_intensity(self):
        mu = _gauss(64, 6.0, 0.5)
        I = pc_forward(Object2D.from_components(np.zeros_like(mu), mu), 0.01)
        # energy conservation of the unitary propagator
        assert np.isclose(I.sum(), np.exp(-mu).sum(), rtol=1e-12)

    def test_intensity_nonnegative(self, rng):
        f = 0.5 * rng.standard_normal((32, 32)) - 0.1j * rng.random((32, 32))
        assert np.all(pc_forward(f, 0.01, pad=True) >= 0)

    def test_accepts_geometry_object(self):
        f = 0.1 * _gauss(32, 3.0) + 0j
        g = ImagingGeometry(0.03)
        np.testing.assert_array_equal(pc_forward(f, g), pc_forward(f, 0.03))


class TestPhaseContrastDerivative:
    @pytest.mark.parametrize("pad", [False, True])
    def test_linear_in_direction(self, rng, pad):
        f = 0.2 * cplx(rng, (24, 24))
        h1, h2 = cplx(rng, (24, 24)), cplx(rng, (24, 24))
        lhs = pc_derivative(f, 2.0 * h1 - 3.0 * h2, 0.02, pad=pad)
        rhs = 2.0 * pc_derivative(f, h1, 0.02, pad=pad) - 3.0 * pc_derivative(f, h2, 0.02, pad=pad)
        assert rel_err(lhs, rhs) <= 1e-12

    def test_at_zero_equals_ctf(self, rng):
        phi = rng.standard_normal((128, 128))
        mu = rng.standard_normal((128, 128))
        d = pc_derivative(np.zeros((128, 128)), phi - 0.5j * mu, 0.05)
        assert rel_err(d, ctf_apply(phi, mu, 0.05)) <= 1e-10

    @pytest.mark.parametrize("pad", [False, True])
    def test_taylor_remainder_is_quadratic(self, rng, pad):
        op = PhaseContrastOperator((32, 32), 0.02, pad=pad)
        f = 0.3 * cplx(rng, (32, 32))
        h = cplx(rng, (32, 32))
        y, A = op.linearize(f)
        Ah = A(h)
        rem = [np.linalg.norm(op(f + t * h) - y - t * Ah) for t in (1e-2, 1e-3)]
        assert 75 <= rem[0] / rem[1] <= 125


class TestPhaseContrastAdjoint:
    @pytest.mark.parametrize("pad", [False, True])
    @pytest.mark.parametrize(
        "gx,gy",
        [
            (GramianSpec(), GramianSpec()),
            (GramianSpec.sobolev(1.0), GramianSpec()),
            (GramianSpec(), GramianSpec.weighted(np.linspace(0.5, 2.0, 64 * 64).reshape(64, 64))),
            (GramianSpec.sobolev(0.5), GramianSpec.weighted(np.full((64, 64), 3.0))),
        ],
        ids=["id-id", "sob-id", "id-weighted", "sob-weighted"],
    )
    def test_pairing(self, rng, pad, gx, gy):
        f = 0.3 * cplx(rng, (64, 64))
        fwd = lambda h: pc_derivative(f, h, 0.02, pad=pad)
        adj = lambda g: pc_adjoint(f, g, 0.02, gram_X=gx, gram_Y=gy, pad=pad)
        for _ in range(5):
            h, g = cplx(rng, (64, 64)), rng.standard_normal((64, 64))
            assert _pairing(fwd, adj, h, g, gx, gy) <= 1e-10

    def test_adjoint_at_zero_is_transposed_multiplier(self, rng):
        g = rng.standard_normal((48, 48))
        s, c = ctf_multipliers((48, 48), 0.05)
        ghat = np.fft.fft2(g)
        # h = a + i b enters as 2 sin * F(a) + 2 cos * F(b)
        expected = np.fft.ifft2(2 * s * ghat).real + 1j * np.fft.ifft2(2 * c * ghat).real
        assert rel_err(pc_adjoint(np.zeros((48, 48)), g, 0.05), expected) <= 1e-12


class TestCTF:
    def test_multipliers_at_zero_frequency(self):
        s, c = ctf_multipliers((16, 16), 0.1)
        assert s[0, 0] == 0 and c[0, 0] == 1

    def test_pure_phase_has_no_dc(self, rng):
        phi = rng.standard_normal((32, 32))
        assert abs(ctf_apply(phi, np.zeros_like(phi), 0.1).sum()) <= 1e-10

    def test_pure_absorber_dc(self):
        mu = np.full((16, 16), 0.1)
        np.testing.assert_allclose(ctf_apply(np.zeros_like(mu), mu, 0.1), -0.1, atol=1e-14)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            ctf_apply(np.zeros((4, 4)), np.zeros((4, 5)), 0.1)

    def test_homogeneous_inversion_round_trip(self):
        phi = _gauss(128, 8.0, 0.1)
        c = 0.21
        I = 1 + ctf_apply(phi, c * phi, 0.05)
        assert rel_err(ctf_invert_homogeneous(I, c, 0.05, 1e-6), phi) <= 0.01

    def test_flat_field_inverts_to_zero(self):
        rec = ctf_invert_homogeneous(np.ones((32, 32)), 0.1, 0.05, 1e-3)
        assert np.max(np.abs(rec)) <= 1e-14

    def test_inversion_rejects_nonpositive_reg(self):
        with pytest.raises(ValueError):
            ctf_invert_homogeneous(np.ones((8, 8)), 0.1, 0.05, 0.0)


def _ball(n, radius):
    c = (n - 1) / 2.0
    return render_packing(SpherePacking(np.array([[c, c, c]]), radius, 1.0), (n, n, n)).v.real


class TestRadon:
    @pytest.mark.slow
    def test_ball_projection_matches_chord_length(self):
        n, R = 128, 128 * 0.3
        vol = _ball(n, R)
        angles = np.deg2rad([0.0, 17.0, 45.0, 90.0, 133.0])
        proj = radon(vol, angles)
        a, s = np.indices((n, n)) - (n - 1) / 2.0
        chord = 2 * np.sqrt(np.maximum(R**2 - a**2 - s**2, 0))
        for p in proj:
            assert np.sqrt(np.mean((p - chord) ** 2)) <= 0.015 * np.sqrt(np.mean(chord**2))

    def test_zero_volume(self):
        assert not np.any(radon(np.zeros((8, 10, 10)), [0.0, 1.0]))

    def test_mass_preserved(self):
        vol = _ball(64, 15.0)
        proj = radon(vol, np.deg2rad([0.0, 30.0, 77.0]))
        for p in proj:
            assert np.isclose(p.sum(), vol.sum(), rtol=1e-3)

    def test_quarter_turn_swaps_axes(self, rng):
        vol = np.zeros((4, 16, 16))
        vol[:, 3:6, 9:14] = rng.random((4, 3, 5))
        p0, p90 = radon(vol, [0.0, np.pi / 2])
        np.testing.assert_allclose(p0, vol.sum(axis=2), atol=1e-10)
        # at 90 degrees the rays run along -y and the detector along +z
        np.testing.assert_allclose(p90, vol.sum(axis=1), atol=1e-10)

    def test_backprojection_is_transpose(self, rng):
        angles = np.linspace(0, np.pi, 12, endpoint=False)
        P = ParallelProjector((32, 32, 32), angles)
        for _ in range(3):
            v = rng.standard_normal((32, 32, 32))
            p = rng.standard_normal(P.data_shape)
            lhs = np.vdot(P.forward(v), p)
            rhs = np.vdot(v, P.adjoint(p))
            assert abs(lhs - rhs) <= 1e-10 * abs(lhs)

    def test_single_angle_backprojection_smears_along_rays(self):
        proj = np.zeros((1, 4, 16))
        proj[0, :, 7] = 1.0
        vol = backproject(proj, [0.0], (4, 16, 16))
        # constant along the ray direction (axis 2) away from the boundary
        inner = vol[:, 7, 2:-2]
        np.testing.assert_allclose(inner, np.broadcast_to(inner[:, :1], inner.shape), rtol=1e-12)
        assert np.allclose(vol[:, :6, :], 0) and np.allclose(vol[:, 9:, :], 0)

    def test_restrict_selects_angles(self, rng):
        angles = np.linspace(0, np.pi, 6, endpoint=False)
        P = ParallelProjector((4, 12, 12), angles)
        v = rng.random((4, 12, 12))
        np.testing.assert_allclose(P.restrict([1, 4]).forward(v), P.forward(v)[[1, 4]], atol=1e-12)

    def test_volume_voxel_size_scales(self, rng):
        v = rng.random((4, 8, 8))
        np.testing.assert_allclose(radon(Volume3D(v, 2.5), [0.3]), 2.5 * radon(v, [0.3]), rtol=1e-12)

    def test_shape_errors(self):
        P = ParallelProjector((4, 8, 8), [0.0])
        with pytest.raises(ValueError):
            P.forward(np.zeros((4, 8, 9)))
        with pytest.raises(ValueError):
            P.adjoint(np.zeros((2, 4, 8)))
        with pytest.raises(ValueError):
            ParallelProjector((4, 8, 8), [])


class TestTomo:
    angles = np.linspace(0, np.pi, 6, endpoint=False)

    def test_zero_volume_gives_flat_frames(self):
        data = tomo_forward(np.zeros((8, 12, 12)), self.angles, 0.05)
        assert isinstance(data, HoloData)
        np.testing.assert_allclose(data.frames, 1.0, atol=1e-12)

    def test_is_composition_of_projection_and_hologram(self, rng):
        v = 0.01 * cplx(rng, (8, 12, 12))
        frames = tomo_forward(v, self.angles, 0.05, projection_scale=2.0).frames
        proj = 2.0 * radon(v, self.angles)
        for k in range(len(self.angles)):
            assert rel_err(frames[k], pc_forward(proj[k], 0.05)) <= 1e-12

    def test_pairing(self, rng):
        v = 0.01 * cplx(rng, (32, 32, 32))
        for _ in range(3):
            h = cplx(rng, (32, 32, 32))
            g = rng.standard_normal((6, 32, 32))
            fwd = lambda h: tomo_derivative(v, h, self.angles, 0.05, pad=True)
            adj = lambda g: tomo_adjoint(v, g, self.angles, 0.05, pad=True)
            assert _pairing(fwd, adj, h, g) <= 1e-10

    def test_taylor_remainder(self, rng):
        op = TomoPhaseContrastOperator((8, 16, 16), self.angles, 0.05, projection_scale=0.5)
        v = 0.02 * cplx(rng, op.domain_shape)
        h = cplx(rng, op.domain_shape)
        y, A = op.linearize(v)
        rem = [np.linalg.norm(op(v + t * h) - y - t * A(h)) for t in (1e-2, 1e-3)]
        assert 75 <= rem[0] / rem[1] <= 125

    def test_restrict_matches_full_operator(self, rng):
        op = TomoPhaseContrastOperator((6, 10, 10), self.angles, 0.05)
        v = 0.05 * cplx(rng, op.domain_shape)
        np.testing.assert_allclose(op.restrict([0, 3, 5])(v), op(v)[[0, 3, 5]], atol=1e-12)


@given(st.floats(1e-3, 1.0), st.integers(0, 2**31 - 1))
def test_unit_flux_conserved_for_phase_objects(nf, seed):
    phi = np.random.default_rng(seed).standard_normal((16, 16))
    assert np.isclose(pc_forward(phi + 0j, nf).mean(), 1.0, rtol=1e-10)
