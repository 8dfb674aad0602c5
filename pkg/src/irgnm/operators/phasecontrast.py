"""Near-field phase contrast: forward map, Frechet derivative, adjoint and CTF."""

from __future__ import annotations

import numpy as np

from ..gridmath import (
    FrequencyGrid,
    FresnelPropagator,
    GramianSpec,
    ImagingGeometry,
    fft2,
    ifft2,
)
from .objects import Object2D

__all__ = [
    "PhaseContrastOperator",
    "pc_forward",
    "pc_derivative",
    "pc_adjoint",
    "ctf_multipliers",
    "ctf_apply",
    "ctf_invert_homogeneous",
]


def _field(obj):
    if isinstance(obj, Object2D):
        return obj.f
    return np.asarray(obj, dtype=complex)


def _geometry(geom):
    return geom if isinstance(geom, ImagingGeometry) else ImagingGeometry(float(geom))


class PhaseContrastDerivative:
    """Frechet derivative ``h -> 2 Im(conj(psi) D(u h))`` at a fixed object.

    ``adjoint`` is the transpose with respect to the real Euclidean inner
    products ``Re <h1, h2>`` on objects and ``<g1, g2>`` on intensities.
    Works on single images or stacks (leading axes are batch axes).
    """

    def __init__(self, propagator, transmission, wave):
        self.propagator = propagator
        self.transmission = transmission  # u = exp(-i f)
        self.wave = wave  # psi = D(u)

    def __call__(self, h):
        h = np.asarray(h)
        if h.shape != self.transmission.shape:
            raise ValueError(f"perturbation shape {h.shape} does not match object shape {self.transmission.shape}")
        return 2.0 * np.imag(np.conj(self.wave) * self.propagator.forward(self.transmission * h))

    def adjoint(self, g):
        g = np.asarray(g, dtype=float)
        if g.shape != self.wave.shape:
            raise ValueError(f"data shape {g.shape} does not match detector shape {self.wave.shape}")
        return np.conj(self.transmission) * self.propagator.adjoint(2j * g * self.wave)


class PhaseContrastOperator:
    """Forward operator ``F(f) = |D(exp(-i f))|^2`` on a fixed grid.

    Parameters
    ----------
    shape : tuple
        Image shape (object and detector grids coincide).
    geom : ImagingGeometry or float
        Geometry or bare Fresnel number.
    pad : bool
        Use replicate padding inside the propagator.
    """

    def __init__(self, shape, geom, pad=True):
        self.shape = tuple(shape)
        self.geom = _geometry(geom)
        self.propagator = FresnelPropagator(self.shape, self.geom, pad=pad)

    @property
    def domain_shape(self):
        return self.shape

    def _wave(self, f):
        f = np.asarray(f, dtype=complex)
        if f.shape[-2:] != self.shape:
            raise ValueError(f"object shape {f.shape} does not match operator shape {self.shape}")
        u = np.exp(-1j * f)
        return u, self.propagator.forward(u)

    def __call__(self, f):
        _, psi = self._wave(f)
        return np.abs(psi) ** 2

    def linearize(self, f):
        """Return ``(F(f), F'[f])``."""
        u, psi = self._wave(f)
        return np.abs(psi) ** 2, PhaseContrastDerivative(self.propagator, u, psi)


def pc_forward(obj, geom, pad=False):
    """Hologram ``|D(exp(-i f))|^2`` of a 2D object."""
    f = _field(obj)
    return PhaseContrastOperator(f.shape, geom, pad=pad)(f)


def pc_derivative(obj, h, geom, pad=False):
    f = _field(obj)
    _, deriv = PhaseContrastOperator(f.shape, geom, pad=pad).linearize(f)
    return deriv(np.asarray(h, dtype=complex))


def pc_adjoint(obj, g, geom, gram_X=None, gram_Y=None, pad=False):
    """Adjoint ``G_X^-1 F'[f]^T G_Y g`` of the derivative."""
    f = _field(obj)
    gram_X = gram_X or GramianSpec()
    gram_Y = gram_Y or GramianSpec()
    _, deriv = PhaseContrastOperator(f.shape, geom, pad=pad).linearize(f)
    return gram_X.apply_inverse(deriv.adjoint(gram_Y.apply(np.asarray(g, dtype=float))))


def ctf_multipliers(shape, geom):
    """Return ``(sin, cos)`` of ``pi xi^2 / N_F`` on the DFT grid."""
    chi = np.pi * FrequencyGrid(shape).xi_squared / _geometry(geom).fresnel_number
    return np.sin(chi), np.cos(chi)


def ctf_apply(phi, mu, geom):
    """Linearized contrast ``I - 1`` predicted by the contrast transfer function."""
    phi = np.asarray(phi, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if phi.shape != mu.shape:
        raise ValueError(f"shape mismatch: {phi.shape} vs {mu.shape}")
    s, c = ctf_multipliers(phi.shape, geom)
    return ifft2(2 * s * fft2(phi) - c * fft2(mu)).real


def ctf_invert_homogeneous(intensity, ratio, geom, reg):
    """Direct single-material CTF inversion by regularized Fourier division.

    Solves ``F(I - 1) = m F(phi)`` with ``m = 2 sin(chi) - c cos(chi)``
    (``mu = c phi``) in the Tikhonov sense.

    Parameters
    ----------
    intensity : ndarray
        Flat-field corrected hologram.
    ratio : float
        Absorption-to-phase ratio ``c = mu / phi``.
    geom : ImagingGeometry or float
    reg : float
        Tikhonov parameter, must be positive.

    Returns
    -------
    phi : ndarray
        Recovered phase shifts.
    """
    if not reg > 0:
        raise ValueError(f"CTF regularization must be > 0, got {reg}")
    if ratio < 0:
        raise ValueError(f"ratio must be >= 0, got {ratio}")
    intensity = np.asarray(intensity, dtype=float)
    s, c = ctf_multipliers(intensity.shape, geom)
    m = 2 * s - ratio * c
    return ifft2(m * fft2(intensity - 1.0) / (m**2 + reg)).real
