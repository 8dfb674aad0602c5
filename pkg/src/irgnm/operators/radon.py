"""Parallel-beam Radon transform by rotate-and-sum with bilinear interpolation.

Each angle is a sparse matrix acting on the (y, z) slice perpendicular to the
rotation axis (axis 0). Backprojection applies the exact transpose, so the
pair is adjoint to machine precision.
"""

from __future__ import annotations

import threading

import numpy as np
import scipy.sparse as sp

from .objects import Volume3D

__all__ = ["ParallelProjector", "radon", "backproject"]


def _angle_matrix(ny, nz, n_det, theta, step):
    """Sparse line-integral matrix of shape ``(n_det, ny * nz)`` for one angle."""
    cy, cz = (ny - 1) / 2.0, (nz - 1) / 2.0
    half_len = 0.5 * np.hypot(ny, nz) + 1.0
    nt = int(np.ceil(2 * half_len / step))
    t = (np.arange(nt) - (nt - 1) / 2.0) * step
    s = np.arange(n_det) - (n_det - 1) / 2.0
    ss, tt = np.meshgrid(s, t, indexing="ij")
    c, sn = np.cos(theta), np.sin(theta)
    # ray direction at angle 0 is +z; the detector coordinate runs along y
    y = cy + ss * c - tt * sn
    z = cz + ss * sn + tt * c
    y0 = np.floor(y)
    z0 = np.floor(z)
    fy = y - y0
    fz = z - z0
    y0 = y0.astype(np.int64)
    z0 = z0.astype(np.int64)
    det = np.broadcast_to(np.arange(n_det)[:, None], ss.shape)

    rows, cols, vals = [], [], []
    for dy, dz, w in (
        (0, 0, (1 - fy) * (1 - fz)),
        (1, 0, fy * (1 - fz)),
        (0, 1, (1 - fy) * fz),
        (1, 1, fy * fz),
    ):
        yi = y0 + dy
        zi = z0 + dz
        ok = (yi >= 0) & (yi < ny) & (zi >= 0) & (zi < nz) & (w > 0)
        rows.append(det[ok])
        cols.append(yi[ok] * nz + zi[ok])
        vals.append(w[ok] * step)
    m = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_det, ny * nz),
    )
    return m.tocsr()


class ParallelProjector:
    """Radon transform of a volume for a list of angles.

    Parameters
    ----------
    vol_shape : tuple
        ``(n_axis, ny, nz)``; axis 0 is the rotation axis.
    angles : array_like
        Incident angles in radians.
    n_det : int, optional
        Detector width; defaults to ``ny``.
    step : float
        Sampling step along the ray in voxels.
    voxel_size : float
        Scale applied so outputs are physical path lengths.
    """

    def __init__(self, vol_shape, angles, n_det=None, step=0.5, voxel_size=1.0, _cache=None):
        self.vol_shape = tuple(int(n) for n in vol_shape)
        if len(self.vol_shape) != 3 or min(self.vol_shape) < 1:
            raise ValueError(f"invalid volume shape {vol_shape}")
        self.angles = np.atleast_1d(np.asarray(angles, dtype=float))
        if self.angles.size == 0:
            raise ValueError("angle list is empty")
        if not np.all(np.isfinite(self.angles)):
            raise ValueError("angles must be finite")
        self.n_det = int(n_det or self.vol_shape[1])
        self.step = float(step)
        self.voxel_size = float(voxel_size)
        self._cache = {} if _cache is None else _cache
        self._lock = threading.Lock()
        self._stack = None

    @property
    def frame_shape(self):
        return (self.vol_shape[0], self.n_det)

    @property
    def data_shape(self):
        return (len(self.angles),) + self.frame_shape

    def _matrix(self, theta):
        key = float(theta)
        m = self._cache.get(key)
        if m is None:
            _, ny, nz = self.vol_shape
            m = _angle_matrix(ny, nz, self.n_det, key, self.step)
            self._cache[key] = m
        return m

    @property
    def matrix(self):
        """Stacked sparse matrix of shape ``(n_angles * n_det, ny * nz)``."""
        with self._lock:
            if self._stack is None:
                mats = [self._matrix(t) for t in self.angles]
                self._stack = sp.vstack(mats, format="csr") * self.voxel_size
                self._stack_T = self._stack.T.tocsr()
            return self._stack

    def restrict(self, indices):
        """Projector for a subset of the angles sharing the matrix cache."""
        return ParallelProjector(
            self.vol_shape, self.angles[np.asarray(indices)], self.n_det,
            self.step, self.voxel_size, _cache=self._cache,
        )

    def forward(self, vol):
        vol = np.asarray(vol)
        if vol.shape != self.vol_shape:
            raise ValueError(f"volume shape {vol.shape} does not match projector shape {self.vol_shape}")
        n0 = self.vol_shape[0]
        flat = vol.reshape(n0, -1)
        proj = self.matrix @ flat.T  # (n_angles * n_det, n0)
        return proj.T.reshape(n0, len(self.angles), self.n_det).transpose(1, 0, 2).copy()

    def adjoint(self, proj):
        proj = np.asarray(proj)
        if proj.shape != self.data_shape:
            raise ValueError(f"projection shape {proj.shape} does not match expected {self.data_shape}")
        self.matrix
        n0 = self.vol_shape[0]
        flat = proj.transpose(1, 0, 2).reshape(n0, -1)
        vol = self._stack_T @ flat.T  # (ny * nz, n0)
        return vol.T.reshape(self.vol_shape).copy()

    __call__ = forward


def radon(vol, angles, voxel_size=None, step=0.5):
    """Projections of a volume for each angle, shape ``(n_angles, n_axis, n_det)``."""
    if isinstance(vol, Volume3D):
        voxel_size = vol.voxel_size if voxel_size is None else voxel_size
        vol = vol.v
    vol = np.asarray(vol)
    return ParallelProjector(vol.shape, angles, step=step, voxel_size=voxel_size or 1.0).forward(vol)


def backproject(projections, angles, vol_shape, voxel_size=1.0, step=0.5):
    """Exact transpose of :func:`radon`."""
    return ParallelProjector(vol_shape, angles, step=step, voxel_size=voxel_size).adjoint(projections)
