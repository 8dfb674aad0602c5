"""Object, volume and data containers shared by operators and solvers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..gridmath import ImagingGeometry

__all__ = ["Object2D", "Volume3D", "HoloData", "ConstraintSpec"]

_SIGNS = (None, "nonnegative", "nonpositive")


@dataclass
class Object2D:
    """Complex 2D object ``f = phi - i mu / 2``."""

    f: np.ndarray
    pixel_size: float = 1.0

    def __post_init__(self):
        self.f = np.asarray(self.f, dtype=complex)
        if self.f.ndim != 2:
            raise ValueError(f"Object2D needs a 2D array, got shape {self.f.shape}")

    @classmethod
    def from_components(cls, phi, mu=None, pixel_size=1.0):
        phi = np.asarray(phi, dtype=float)
        mu = np.zeros_like(phi) if mu is None else np.asarray(mu, dtype=float)
        return cls(phi - 0.5j * mu, pixel_size)

    @property
    def shape(self):
        return self.f.shape

    @property
    def phi(self):
        return self.f.real.copy()

    @property
    def mu(self):
        return -2.0 * self.f.imag


@dataclass
class Volume3D:
    """Complex refractive field ``delta - i beta`` on a voxel grid.

    Axis 0 is the rotation axis; axis 2 is the optical axis at angle zero.
    """

    v: np.ndarray
    voxel_size: float = 1.0

    def __post_init__(self):
        self.v = np.asarray(self.v, dtype=complex)
        if self.v.ndim != 3 or self.v.size == 0:
            raise ValueError(f"Volume3D needs a non-empty 3D array, got shape {self.v.shape}")
        if not np.all(np.isfinite(self.v)):
            raise ValueError("Volume3D contains non-finite entries")

    @property
    def shape(self):
        return self.v.shape

    @property
    def delta(self):
        return self.v.real.copy()

    @property
    def beta(self):
        return -self.v.imag


@dataclass
class HoloData:
    """Stack of intensity frames with their incident angles (radians)."""

    frames: np.ndarray
    angles: np.ndarray
    geom: ImagingGeometry
    noise_norm: float | None = None

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=float)
        if frames.ndim == 2:
            frames = frames[None]
        if frames.ndim != 3:
            raise ValueError(f"frames must be a stack of 2D images, got shape {frames.shape}")
        self.frames = frames
        self.angles = np.atleast_1d(np.asarray(self.angles, dtype=float))
        if len(self.angles) != len(frames):
            raise ValueError(f"{len(frames)} frames but {len(self.angles)} angles")
        if len(self.angles) > 1 and np.any(np.diff(self.angles) <= 0):
            raise ValueError("angles must be strictly increasing")
        if np.any(frames < 0):
            raise ValueError("intensities must be non-negative")

    def __len__(self):
        return len(self.frames)

    def subset(self, indices):
        indices = np.asarray(indices)
        return HoloData(self.frames[indices], self.angles[indices], self.geom)


@dataclass
class ConstraintSpec:
    """A priori constraints on the reconstructed object.

    Parameters
    ----------
    support_mask : ndarray of bool, optional
        The object vanishes outside the mask.
    homogeneous_ratio : float, optional
        Couples ``mu = c phi`` via ``f = (1 - i c / 2) phi``.
    real_valued : bool
        Zero absorption (imaginary part).
    sign : str or (str, str), optional
        ``"nonnegative"`` / ``"nonpositive"`` for the (phase, absorption)
        components, enforced by the linearized penalty. A single string
        applies to both.
    penalty_weight : float or "auto"
        Penalty weight ``gamma``; ``"auto"`` uses the initial
        regularization parameter.
    """

    support_mask: np.ndarray | None = None
    homogeneous_ratio: float | None = None
    real_valued: bool = False
    sign: object = None
    penalty_weight: object = "auto"
    _signs: tuple = field(init=False, repr=False, default=(None, None))

    def __post_init__(self):
        if self.support_mask is not None:
            self.support_mask = np.asarray(self.support_mask, dtype=bool)
        if self.homogeneous_ratio is not None and not 0 <= self.homogeneous_ratio < np.inf:
            raise ValueError(f"homogeneous_ratio must be in [0, inf), got {self.homogeneous_ratio}")
        sign = self.sign
        signs = (sign, sign) if sign is None or isinstance(sign, str) else tuple(sign)
        if len(signs) != 2 or any(s not in _SIGNS for s in signs):
            raise ValueError(f"invalid sign constraint {self.sign!r}")
        self._signs = signs
        if self.penalty_weight != "auto" and float(self.penalty_weight) < 0:
            raise ValueError("penalty_weight must be >= 0")

    @property
    def component_signs(self):
        """Sign constraints for the (phase, absorption) components."""
        return self._signs

    @property
    def has_sign(self):
        return any(s is not None for s in self._signs)

    @property
    def has_subspace(self):
        return (
            self.support_mask is not None
            or self.homogeneous_ratio is not None
            or self.real_valued
        )

    def check_shape(self, shape):
        if self.support_mask is not None and self.support_mask.shape != tuple(shape):
            raise ValueError(
                f"support mask shape {self.support_mask.shape} does not match object shape {tuple(shape)}"
            )
