import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import cplx, rel_err
from irgnm.gridmath import (
    FrequencyGrid,
    FresnelPropagator,
    GramianSpec,
    ImagingGeometry,
    fft2,
    fresnel_propagate,
    gram_apply,
    gram_apply_inverse,
    ifft2,
    weighted_inner,
)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
fields = st.tuples(st.integers(2, 12), st.integers(2, 12)).flatmap(
    lambda s: st.tuples(arrays(float, s, elements=finite), arrays(float, s, elements=finite))
).map(lambda t: t[0] + 1j * t[1])


class TestFFT:
    def test_constant_image_dc(self):
        spec = fft2(np.ones((8, 8)))
        expected = np.zeros((8, 8))
        expected[0, 0] = 8.0
        assert np.allclose(spec, expected, atol=1e-14)

    def test_delta_flat_spectrum(self):
        d = np.zeros((4, 4))
        d[0, 0] = 1.0
        assert np.allclose(fft2(d), 0.25, atol=1e-15)

    @given(fields)
    def test_parseval_and_roundtrip(self, x):
        nx = np.linalg.norm(x)
        assert abs(np.linalg.norm(fft2(x)) - nx) <= 1e-12 * max(nx, 1e-300)
        assert np.linalg.norm(ifft2(fft2(x)) - x) <= 1e-12 * max(nx, 1e-300)

    def test_rejects_non_finite(self):
        x = np.zeros((4, 4))
        x[1, 2] = np.nan
        with pytest.raises(ValueError, match="non-finite"):
            fft2(x)


class TestFrequencyGrid:
    def test_range_and_ordering(self):
        g = FrequencyGrid((6, 5))
        ky, kx = g.xi
        assert ky.min() >= -0.5 and ky.max() < 0.5
        assert kx.min() >= -0.5 and kx.max() < 0.5
        assert ky[0, 0] == 0 and kx[0, 0] == 0
        assert ky[3, 0] == -0.5  # negative frequencies in the upper half
        assert np.allclose(g.xi_squared, ky**2 + kx**2)

    def test_reproducible(self):
        assert np.array_equal(FrequencyGrid((7, 9)).xi_squared, FrequencyGrid((7, 9)).xi_squared)


class TestGeometry:
    def test_from_setup_consistency(self):
        g = ImagingGeometry.from_setup(pixel_size=29.3, defocus=1.2e7, wavenumber=2 * np.pi / 0.093)
        nf = 29.3**2 * (2 * np.pi / 0.093) / (2 * np.pi * 1.2e7)
        assert abs(g.fresnel_number - nf) <= 1e-12 * nf

    def test_inconsistent_setup_rejected(self):
        with pytest.raises(ValueError, match="inconsistent"):
            ImagingGeometry(0.01, pixel_size=10.0, defocus=1e6, wavenumber=60.0)

    @pytest.mark.parametrize("nf", [0.0, -1.0, np.inf])
    def test_invalid_fresnel_number(self, nf):
        with pytest.raises(ValueError, match="invalid geometry"):
            ImagingGeometry(nf)


class TestPropagator:
    def test_constant_field_unchanged(self):
        psi = np.full((16, 16), 0.3 - 0.7j)
        assert np.allclose(fresnel_propagate(psi, 0.01), psi, atol=1e-14)

    def test_unitary_and_invertible(self, rng):
        psi = cplx(rng, (64, 48))
        fwd = fresnel_propagate(psi, 0.005)
        assert abs(np.linalg.norm(fwd) - np.linalg.norm(psi)) <= 1e-12 * np.linalg.norm(psi)
        assert rel_err(fresnel_propagate(fwd, 0.005, "inverse"), psi) <= 1e-12

    def test_semigroup(self, rng):
        psi = cplx(rng, (32, 32))
        twice = fresnel_propagate(fresnel_propagate(psi, 0.02), 0.02)
        assert rel_err(twice, fresnel_propagate(psi, 0.01)) <= 1e-10

    def test_gaussian_matches_closed_form(self):
        # exp(-r^2 / 2w^2) propagated by the continuous Fresnel multiplier
        n, w, nf = 256, 6.0, 1e-2
        y, x = np.indices((n, n)) - n // 2
        r2 = x**2 + y**2
        psi0 = np.exp(-r2 / (2 * w**2))
        a = 2 * np.pi**2 * w**2 - 1j * np.pi / nf
        exact = 2 * np.pi * w**2 * (np.pi / a) * np.exp(-np.pi**2 * r2 / a)
        num = np.fft.fftshift(fresnel_propagate(np.fft.ifftshift(psi0), nf))
        assert np.sqrt(np.mean(np.abs(num - exact) ** 2)) <= 1e-6

    def test_adjoint_with_padding(self, rng):
        prop = FresnelPropagator((20, 24), 0.01, pad=True)
        u, v = cplx(rng, (20, 24)), cplx(rng, (20, 24))
        lhs = np.vdot(prop.forward(u), v)
        rhs = np.vdot(u, prop.adjoint(v))
        assert abs(lhs - rhs) <= 1e-12 * abs(lhs)

    def test_padded_constant_field_unchanged(self):
        psi = np.full((10, 14), 2.0 + 0j)
        assert np.allclose(FresnelPropagator((10, 14), 0.01, pad=True)(psi), psi)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="does not match"):
            FresnelPropagator((8, 8), 0.1).forward(np.zeros((8, 9)))

    def test_bad_direction(self):
        with pytest.raises(ValueError, match="direction"):
            fresnel_propagate(np.zeros((4, 4)), 0.1, "sideways")


class TestGramian:
    def test_sobolev_zero_is_identity(self, rng):
        f = cplx(rng, (8, 8))
        assert np.array_equal(gram_apply(f, GramianSpec.sobolev(0)), f)
        assert GramianSpec.sobolev(0).is_identity

    def test_constant_unchanged(self):
        f = np.full((8, 6), 3.0)
        assert np.allclose(gram_apply(f, GramianSpec.sobolev(1.5)), f)

    @pytest.mark.parametrize("s", [0.5, 1.0, 2.0])
    def test_single_mode(self, s):
        n = 16
        ky, kx = 3, -5
        y, x = np.indices((n, n))
        mode = np.exp(2j * np.pi * (ky * y + kx * x) / n)
        xi2 = (ky / n) ** 2 + (kx / n) ** 2
        out = gram_apply(mode, GramianSpec.sobolev(s))
        assert rel_err(out, (1 + xi2) ** s * mode) <= 1e-12

    def test_real_input_stays_real(self, rng):
        out = gram_apply(rng.standard_normal((8, 8)), GramianSpec.sobolev(1))
        assert np.isrealobj(out)

    def test_inverse(self, rng):
        f = cplx(rng, (12, 10))
        for spec in (GramianSpec.sobolev(0.7), GramianSpec.weighted(rng.uniform(0.5, 2, (12, 10)))):
            assert rel_err(gram_apply_inverse(gram_apply(f, spec), spec), f) <= 1e-12

    def test_negative_weights_rejected(self):
        with pytest.raises(ValueError, match="non-negative"):
            GramianSpec.weighted(np.array([[1.0, -1.0]]))

    def test_negative_exponent_rejected(self):
        with pytest.raises(ValueError):
            GramianSpec.sobolev(-1)


class TestWeightedInner:
    def test_identity_is_euclidean(self, rng):
        f, g = cplx(rng, (6, 6)), cplx(rng, (6, 6))
        assert np.isclose(weighted_inner(f, g), np.vdot(f, g))

    @given(fields, st.floats(0, 3))
    def test_sobolev_dominates_identity(self, f, s):
        lhs = weighted_inner(f, f, GramianSpec.sobolev(s)).real
        assert lhs >= weighted_inner(f, f).real * (1 - 1e-12)

    @given(fields, st.sampled_from([0.0, 0.5, 2.0]))
    def test_positive_definite(self, f, s):
        if np.linalg.norm(f) > 1e-100:
            assert weighted_inner(f, f, GramianSpec.sobolev(s)).real > 0

    def test_hermitian(self, rng):
        f, g = cplx(rng, (10, 8)), cplx(rng, (10, 8))
        for spec in (None, GramianSpec.sobolev(1.2), GramianSpec.weighted(rng.uniform(1, 2, (10, 8)))):
            a = weighted_inner(f, g, spec)
            b = weighted_inner(g, f, spec)
            assert abs(a - np.conj(b)) <= 1e-12 * abs(a)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape mismatch"):
            weighted_inner(np.zeros((2, 2)), np.zeros((2, 3)))
