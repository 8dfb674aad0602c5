"""All-at-once phase contrast tomography operator ``|D(exp(-i k R f))|^2``."""

from __future__ import annotations

import numpy as np

from ..gridmath import GramianSpec
from .objects import HoloData, Volume3D
from .phasecontrast import PhaseContrastOperator
from .radon import ParallelProjector

__all__ = [
    "TomoPhaseContrastOperator",
    "tomo_forward",
    "tomo_derivative",
    "tomo_adjoint",
]


class TomoDerivative:
    def __init__(self, projector, scale, pc_deriv):
        self.projector = projector
        self.scale = scale
        self.pc_deriv = pc_deriv

    def __call__(self, h):
        return self.pc_deriv(self.scale * self.projector.forward(h))

    def adjoint(self, g):
        return self.scale * self.projector.adjoint(self.pc_deriv.adjoint(g))


class TomoPhaseContrastOperator:
    """Maps a complex volume ``delta - i beta`` to one hologram per angle.

    Parameters
    ----------
    vol_shape : tuple
        ``(n_axis, ny, nz)``.
    angles : array_like
        Incident angles in radians.
    geom : ImagingGeometry or float
        Detector geometry (frames have shape ``(n_axis, ny)``).
    projection_scale : float
        Factor ``k * voxel_size`` turning voxel sums into phase shifts.
    pad : bool
        Replicate padding in the Fresnel propagator.
    """

    def __init__(self, vol_shape, angles, geom, projection_scale=1.0, pad=True, projector=None):
        self.projector = projector or ParallelProjector(vol_shape, angles)
        self.vol_shape = self.projector.vol_shape
        self.angles = self.projector.angles
        self.projection_scale = float(projection_scale)
        self.pc = PhaseContrastOperator(self.projector.frame_shape, geom, pad=pad)
        self.geom = self.pc.geom

    @property
    def domain_shape(self):
        return self.vol_shape

    @property
    def n_frames(self):
        return len(self.angles)

    def restrict(self, indices):
        """Operator on a subset of frames; shares the projection cache."""
        return TomoPhaseContrastOperator(
            self.vol_shape, None, self.geom, self.projection_scale,
            pad=self.pc.propagator.pad, projector=self.projector.restrict(indices),
        )

    def project(self, vol):
        return self.projection_scale * self.projector.forward(np.asarray(vol, dtype=complex))

    def __call__(self, vol):
        return self.pc(self.project(vol))

    def linearize(self, vol):
        data, pc_deriv = self.pc.linearize(self.project(vol))
        return data, TomoDerivative(self.projector, self.projection_scale, pc_deriv)


def _volume(vol):
    return vol.v if isinstance(vol, Volume3D) else np.asarray(vol, dtype=complex)


def tomo_forward(vol, angles, geom, projection_scale=1.0, pad=False):
    """Simulate holograms of a volume for every angle."""
    v = _volume(vol)
    op = TomoPhaseContrastOperator(v.shape, angles, geom, projection_scale, pad=pad)
    return HoloData(op(v), op.angles, op.geom)


def tomo_derivative(vol, h_vol, angles, geom, projection_scale=1.0, pad=False):
    v = _volume(vol)
    op = TomoPhaseContrastOperator(v.shape, angles, geom, projection_scale, pad=pad)
    _, deriv = op.linearize(v)
    return deriv(_volume(h_vol))


def tomo_adjoint(vol, g_frames, angles, geom, projection_scale=1.0, pad=False, gram_X=None, gram_Y=None):
    v = _volume(vol)
    op = TomoPhaseContrastOperator(v.shape, angles, geom, projection_scale, pad=pad)
    _, deriv = op.linearize(v)
    gram_X = gram_X or GramianSpec()
    gram_Y = gram_Y or GramianSpec()
    g = g_frames.frames if isinstance(g_frames, HoloData) else np.asarray(g_frames, dtype=float)
    return gram_X.apply_inverse(deriv.adjoint(gram_Y.apply(g)))
