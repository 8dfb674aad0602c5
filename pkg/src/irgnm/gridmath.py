"""Uniform-grid Fourier tools: transforms, Fresnel propagation and Gramians.

Frequencies are measured in cycles per pixel (the feature length ``a``), in
the standard discrete-transform ordering with the DC term at index 0.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft as sfft

__all__ = [
    "FrequencyGrid",
    "ImagingGeometry",
    "GramianSpec",
    "FresnelPropagator",
    "fft2",
    "ifft2",
    "fresnel_propagate",
    "gram_apply",
    "gram_apply_inverse",
    "weighted_inner",
]


def _workers():
    value = os.environ.get("IRGNM_NUM_THREADS")
    return int(value) if value else 1


def _check_finite(a, name="input"):
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")


def fft2(field):
    """Unitary 2D DFT over the last two axes."""
    field = np.asarray(field)
    _check_finite(field, "fft2 input")
    return sfft.fft2(field, norm="ortho", workers=_workers())


def ifft2(spectrum):
    """Inverse of :func:`fft2`."""
    spectrum = np.asarray(spectrum)
    _check_finite(spectrum, "ifft2 input")
    return sfft.ifft2(spectrum, norm="ortho", workers=_workers())


@dataclass(frozen=True)
class FrequencyGrid:
    """Spatial frequencies of an n-D uniform grid with unit spacing."""

    shape: tuple

    def __post_init__(self):
        object.__setattr__(self, "shape", tuple(int(n) for n in self.shape))
        if any(n < 1 for n in self.shape):
            raise ValueError(f"invalid grid shape {self.shape}")

    @cached_property
    def xi(self):
        """Per-axis frequency coordinates, broadcastable against the grid."""
        return tuple(
            np.fft.fftfreq(n).reshape([-1 if i == ax else 1 for i in range(len(self.shape))])
            for ax, n in enumerate(self.shape)
        )

    @cached_property
    def xi_squared(self):
        out = np.zeros(self.shape)
        for x in self.xi:
            out = out + x**2
        return out

    @property
    def xi_abs(self):
        return np.sqrt(self.xi_squared)


@dataclass(frozen=True)
class ImagingGeometry:
    """Effective parallel-beam geometry of a near-field setup.

    Parameters
    ----------
    fresnel_number : float
        Per-pixel Fresnel number ``a**2 k / (2 pi d)``.
    pixel_size : float
        Pixel (feature) size ``a`` in nm.
    defocus : float, optional
        Propagation distance ``d`` in nm.
    wavenumber : float, optional
        X-ray wavenumber ``k`` in 1/nm.
    """

    fresnel_number: float
    pixel_size: float = 1.0
    defocus: float | None = None
    wavenumber: float | None = None

    def __post_init__(self):
        if not np.isfinite(self.fresnel_number) or self.fresnel_number <= 0:
            raise ValueError(f"invalid geometry: fresnel_number must be > 0, got {self.fresnel_number}")
        if self.pixel_size <= 0:
            raise ValueError(f"invalid geometry: pixel_size must be > 0, got {self.pixel_size}")
        if self.defocus is not None and self.wavenumber is not None:
            expected = self.pixel_size**2 * self.wavenumber / (2 * np.pi * self.defocus)
            if abs(expected - self.fresnel_number) > 1e-9 * abs(expected):
                raise ValueError(
                    f"inconsistent geometry: a^2 k / (2 pi d) = {expected!r} "
                    f"but fresnel_number = {self.fresnel_number!r}"
                )

    @classmethod
    def from_setup(cls, pixel_size, defocus, wavenumber):
        nf = pixel_size**2 * wavenumber / (2 * np.pi * defocus)
        return cls(nf, pixel_size, defocus, wavenumber)


class _Padding:
    """Replicate ("edge") padding of the last two axes and its transpose."""

    def __init__(self, shape, factor=2):
        self.shape = tuple(shape)
        self.padded_shape = tuple(int(factor * n) for n in self.shape)
        self.before = tuple((p - n) // 2 for p, n in zip(self.padded_shape, self.shape))
        # source index for every padded index, per axis
        self._index = tuple(
            np.clip(np.arange(p) - b, 0, n - 1)
            for p, b, n in zip(self.padded_shape, self.before, self.shape)
        )
        self._crop = tuple(slice(b, b + n) for b, n in zip(self.before, self.shape))

    def pad(self, a):
        return a[..., self._index[0], :][..., self._index[1]]

    def pad_adjoint(self, a):
        out = np.zeros(a.shape[:-2] + (self.shape[0], a.shape[-1]), dtype=a.dtype)
        np.add.at(out, (Ellipsis, self._index[0], slice(None)), a)
        res = np.zeros(a.shape[:-2] + self.shape, dtype=a.dtype)
        np.add.at(res, (Ellipsis, self._index[1]), out)
        return res

    def crop(self, a):
        return a[(Ellipsis,) + self._crop]

    def crop_adjoint(self, a):
        out = np.zeros(a.shape[:-2] + self.padded_shape, dtype=a.dtype)
        out[(Ellipsis,) + self._crop] = a
        return out


class FresnelPropagator:
    """Fourier-multiplier Fresnel propagator for a fixed image shape.

    The propagator is the unitary map ``F^-1 exp(i pi xi^2 / N_F) F``. The
    sign of the phase makes the linearized intensity about a clean beam equal
    ``2 sin(chi) F(phi) - cos(chi) F(mu)`` for transmission ``exp(-i f)``. With
    ``pad=True`` the field is replicate-padded to twice its size per axis
    before propagation and cropped afterwards, which suppresses wrap-around
    at the cost of unitarity. Instances are immutable and can be shared.
    """

    def __init__(self, shape, geometry, pad=False, pad_factor=2):
        if not isinstance(geometry, ImagingGeometry):
            geometry = ImagingGeometry(float(geometry))
        self.shape = tuple(int(n) for n in shape)
        self.geometry = geometry
        self.pad = bool(pad)
        self._padding = _Padding(self.shape, pad_factor) if self.pad else None
        work_shape = self._padding.padded_shape if self.pad else self.shape
        xi2 = FrequencyGrid(work_shape).xi_squared
        self._kernel = np.exp(1j * np.pi * xi2 / geometry.fresnel_number)
        self._kernel.setflags(write=False)

    def _check(self, psi):
        psi = np.asarray(psi)
        if psi.shape[-2:] != self.shape:
            raise ValueError(f"field shape {psi.shape[-2:]} does not match propagator shape {self.shape}")
        return psi

    def _apply(self, psi, kernel):
        psi = self._check(psi)
        if self.pad:
            psi = self._padding.pad(psi)
        out = ifft2(kernel * fft2(psi))
        if self.pad:
            out = self._padding.crop(out)
        return out

    def forward(self, psi):
        return self._apply(psi, self._kernel)

    def inverse(self, psi):
        return self._apply(psi, self._kernel.conj())

    def adjoint(self, psi):
        """Exact transpose-conjugate of :meth:`forward` (including padding)."""
        if not self.pad:
            return self.inverse(psi)
        psi = self._check(psi)
        out = ifft2(self._kernel.conj() * fft2(self._padding.crop_adjoint(psi)))
        return self._padding.pad_adjoint(out)

    __call__ = forward


def fresnel_propagate(psi, geom, direction="forward", pad=False):
    """Propagate a complex field by the Fresnel multiplier of ``geom``.

    Parameters
    ----------
    psi : ndarray
        Complex field; the last two axes are propagated.
    geom : ImagingGeometry or float
        Geometry or bare Fresnel number.
    direction : {"forward", "inverse"}
    pad : bool
        Replicate-pad to twice the size before propagation.
    """
    psi = np.asarray(psi)
    prop = FresnelPropagator(psi.shape[-2:], geom, pad=pad)
    if direction == "forward":
        return prop.forward(psi)
    if direction == "inverse":
        return prop.inverse(psi)
    raise ValueError(f"unknown direction {direction!r}")


@dataclass(frozen=True)
class GramianSpec:
    """Gramian of a discrete Hilbert-space norm.

    ``kind`` is one of ``"identity"``, ``"sobolev"`` (Fourier weight
    ``(1 + xi^2)^s`` over the last two axes) or ``"weighted"`` (pointwise
    positive weights).
    """

    kind: str = "identity"
    s: float = 0.0
    weights: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.kind not in ("identity", "sobolev", "weighted"):
            raise ValueError(f"unknown Gramian kind {self.kind!r}")
        if self.kind == "sobolev" and self.s < 0:
            raise ValueError(f"Sobolev exponent must be >= 0, got {self.s}")
        if self.kind == "weighted":
            if self.weights is None:
                raise ValueError("weighted Gramian requires weights")
            w = np.asarray(self.weights, dtype=float)
            if np.any(w < 0) or not np.all(np.isfinite(w)):
                raise ValueError("Gramian weights must be finite and non-negative")
            object.__setattr__(self, "weights", w)

    @classmethod
    def identity(cls):
        return cls("identity")

    @classmethod
    def sobolev(cls, s):
        return cls("sobolev", s=float(s))

    @classmethod
    def weighted(cls, weights):
        return cls("weighted", weights=weights)

    @property
    def is_identity(self):
        return self.kind == "identity" or (self.kind == "sobolev" and self.s == 0)

    def _multiplier(self, shape, power):
        xi2 = FrequencyGrid(shape[-2:]).xi_squared
        return (1.0 + xi2) ** (power * self.s)

    def _fourier(self, f, power):
        f = np.asarray(f)
        out = ifft2(self._multiplier(f.shape, power) * fft2(f))
        return out.real if np.isrealobj(f) else out

    def apply(self, f):
        if self.is_identity:
            return np.asarray(f)
        if self.kind == "sobolev":
            return self._fourier(f, 1)
        return self.weights * f

    def apply_inverse(self, f):
        if self.is_identity:
            return np.asarray(f)
        if self.kind == "sobolev":
            return self._fourier(f, -1)
        if np.any(self.weights == 0):
            raise ValueError("weighted Gramian with zero weights is not invertible")
        return f / self.weights


def gram_apply(f, spec):
    return spec.apply(f)


def gram_apply_inverse(f, spec):
    return spec.apply_inverse(f)


def weighted_inner(f, g, spec=None):
    """Inner product ``<f, G g>``, conjugate-linear in ``f``."""
    f = np.asarray(f)
    g = np.asarray(g)
    if f.shape != g.shape:
        raise ValueError(f"shape mismatch: {f.shape} vs {g.shape}")
    spec = spec or GramianSpec()
    return np.vdot(f, spec.apply(g))
