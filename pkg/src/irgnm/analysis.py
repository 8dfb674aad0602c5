"""Resolution and structure analysis of reconstructed volumes.

Fourier shell correlation with the 1/2-bit threshold, deconvolution by the
form factor of a homogeneous sphere, and sub-voxel peak localization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft
from scipy import ndimage

__all__ = [
    "FscCurve",
    "Resolution",
    "PeakSet",
    "fsc",
    "half_bit_threshold",
    "resolution_from_fsc",
    "fsc_first_dip",
    "form_factor",
    "form_factor_first_zero",
    "formfactor_deconvolve",
    "formfactor_convolve",
    "gaussian_fourier_filter",
    "locate_peaks",
    "split_half_indices",
]

FWHM_TO_SIGMA = 1.0 / (2.0 * np.sqrt(2.0 * np.log(2.0)))


@dataclass
class FscCurve:
    """Shell-wise correlation of two volumes.

    Attributes
    ----------
    shell_centers : ndarray
        Spatial frequency of each shell in cycles per voxel.
    correlation : ndarray
    shell_counts : ndarray
        Number of Fourier coefficients per shell.
    threshold : ndarray
        1/2-bit threshold for each shell.
    zero_energy : ndarray of bool
        Shells where either volume has no energy (correlation set to 0).
    """

    shell_centers: np.ndarray
    correlation: np.ndarray
    shell_counts: np.ndarray
    threshold: np.ndarray
    zero_energy: np.ndarray

    def __len__(self):
        return len(self.shell_centers)


@dataclass
class Resolution:
    """Half-period resolution read off an FSC curve."""

    value: float
    frequency: float
    nyquist_limited: bool

    def __str__(self):
        if self.nyquist_limited:
            return f"Nyquist-limited (<= {self.value:g})"
        return f"{self.value:g}"


@dataclass
class PeakSet:
    positions: np.ndarray
    amplitudes: np.ndarray

    @property
    def count(self):
        return len(self.amplitudes)

    def __len__(self):
        return self.count


def _freq_radius(shape):
    grids = np.meshgrid(*(sfft.fftfreq(n) for n in shape), indexing="ij", sparse=True)
    return np.sqrt(sum(g**2 for g in grids))


def half_bit_threshold(shell_counts):
    """1/2-bit information threshold for shells with ``n`` coefficients."""
    n = np.asarray(shell_counts, dtype=float)
    if np.any(n < 1):
        raise ValueError("shell counts must be >= 1")
    r = 1.0 / np.sqrt(n)
    return (0.2071 + 1.9102 * r) / (1.2071 + 0.9102 * r)


def fsc(vol_a, vol_b, n_shells=None):
    """Fourier shell correlation of two equally shaped arrays.

    Parameters
    ----------
    vol_a, vol_b : ndarray
        Real or complex volumes (any dimension, usually 3D).
    n_shells : int, optional
        Number of shells between zero and the Nyquist frequency 0.5, centred
        at ``linspace(0, 0.5, n_shells)``. Defaults to unit-width shells of
        integer radius for the smallest axis.

    Returns
    -------
    FscCurve
    """
    a = np.asarray(vol_a)
    b = np.asarray(vol_b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if n_shells is None:
        n_shells = min(a.shape) // 2 + 1
    n_shells = int(n_shells)
    if n_shells < 4:
        raise ValueError(f"n_shells must be >= 4, got {n_shells}")
    width = 0.5 / (n_shells - 1)
    idx = np.rint(_freq_radius(a.shape) / width).astype(np.int64)
    keep = idx < n_shells
    idx = idx[keep]
    fa = sfft.fftn(a)[keep]
    fb = sfft.fftn(b)[keep]
    cross = np.bincount(idx, (fa * np.conj(fb)).real, n_shells)
    ea = np.bincount(idx, np.abs(fa) ** 2, n_shells)
    eb = np.bincount(idx, np.abs(fb) ** 2, n_shells)
    counts = np.bincount(idx, minlength=n_shells)
    denom = np.sqrt(ea * eb)
    zero = ~(denom > 0)
    corr = np.where(zero, 0.0, cross / np.where(zero, 1.0, denom))
    corr = np.clip(corr, -1.0, 1.0)
    centers = np.linspace(0.0, 0.5, n_shells)
    return FscCurve(centers, corr, counts, half_bit_threshold(np.maximum(counts, 1)), zero)


def resolution_from_fsc(curve, voxel_size=1.0):
    """Half-period at the first downward crossing of the 1/2-bit threshold.

    The crossing frequency is interpolated linearly between the bracketing
    shells. Without a crossing the Nyquist half-period is returned with
    ``nyquist_limited=True``.
    """
    d = curve.correlation - curve.threshold
    valid = curve.shell_counts > 0
    for k in range(1, len(d)):
        if not (valid[k] and valid[k - 1]):
            continue
        if d[k - 1] >= 0 > d[k]:
            x0, x1 = curve.shell_centers[k - 1], curve.shell_centers[k]
            xc = x0 + d[k - 1] / (d[k - 1] - d[k]) * (x1 - x0)
            return Resolution(voxel_size / (2.0 * xc), float(xc), False)
    nyq = float(curve.shell_centers[-1])
    return Resolution(voxel_size / (2.0 * nyq), nyq, True)


def fsc_first_dip(curve):
    """Index of the first local minimum of the FSC that lies below the threshold.

    For a packing of identical spheres this shell sits at the first zero of
    the sphere form factor. Returns ``None`` if there is no such shell.
    """
    c = curve.correlation
    for k in range(1, len(c) - 1):
        if c[k] < curve.threshold[k] and c[k] <= c[k - 1] and c[k] <= c[k + 1]:
            return k
    return None


def form_factor(q, radius):
    """Normalized form factor ``3 (sin x - x cos x) / x^3`` with ``x = q R``.

    ``q`` is an angular spatial frequency (``2 pi`` times cycles per length).
    """
    x = np.asarray(q, dtype=float) * float(radius)
    out = np.ones_like(x)
    small = np.abs(x) < 1e-3
    xs = x[~small]
    out[~small] = 3.0 * (np.sin(xs) - xs * np.cos(xs)) / xs**3
    out[small] = 1.0 - x[small] ** 2 / 10.0
    return out


def form_factor_first_zero():
    """First positive root of ``tan x = x`` (first zero of the form factor)."""
    from scipy.optimize import brentq

    return brentq(lambda x: np.sin(x) - x * np.cos(x), 4.0, 4.7, xtol=1e-14)


def _angular_radius(shape):
    return 2.0 * np.pi * _freq_radius(shape)


def gaussian_fourier_filter(shape, fwhm):
    """Fourier multiplier of a periodic Gaussian blur with the given FWHM."""
    if fwhm is None or fwhm <= 0:
        return np.ones(shape)
    sigma = fwhm * FWHM_TO_SIGMA
    return np.exp(-0.5 * (sigma * _angular_radius(shape)) ** 2)


def formfactor_deconvolve(vol, sphere_diameter, smooth_fwhm=2.0, reg=1e-3):
    """Smooth, then divide by the sphere form factor with Tikhonov damping.

    Parameters
    ----------
    vol : ndarray
        Real volume.
    sphere_diameter : float
        Sphere diameter in voxels.
    smooth_fwhm : float
        FWHM of the Gaussian pre-filter in voxels (0 disables it).
    reg : float
        Tikhonov parameter relative to the unit peak of the form factor.

    Returns
    -------
    ndarray
        Real volume with peaks at sphere centres.
    """
    if not sphere_diameter > 0:
        raise ValueError(f"sphere diameter must be > 0, got {sphere_diameter}")
    if not reg > 0:
        raise ValueError(f"reg must be > 0, got {reg}")
    v = np.asarray(vol, dtype=float)
    K = form_factor(_angular_radius(v.shape), sphere_diameter / 2.0)
    G = gaussian_fourier_filter(v.shape, smooth_fwhm)
    return sfft.ifftn(sfft.fftn(v) * G * K / (K**2 + reg)).real


def formfactor_convolve(vol, sphere_diameter, smooth_fwhm=0.0):
    """Convolve with the normalized sphere kernel (and optional Gaussian)."""
    v = np.asarray(vol, dtype=float)
    K = form_factor(_angular_radius(v.shape), sphere_diameter / 2.0)
    G = gaussian_fourier_filter(v.shape, smooth_fwhm)
    return sfft.ifftn(sfft.fftn(v) * K * G).real


def _refine(v, p):
    """Per-axis 3-point parabolic refinement around integer maximum ``p``."""
    pos = np.asarray(p, dtype=float)
    amp = float(v[p])
    for ax in range(v.ndim):
        if p[ax] == 0 or p[ax] == v.shape[ax] - 1:
            continue
        lo = list(p)
        hi = list(p)
        lo[ax] -= 1
        hi[ax] += 1
        vm, v0, vp = v[tuple(lo)], v[p], v[tuple(hi)]
        curv = vm - 2 * v0 + vp
        if curv >= 0:
            continue
        off = float(np.clip(0.5 * (vm - vp) / curv, -0.5, 0.5))
        pos[ax] += off
        amp -= 0.25 * (vm - vp) * off
    return pos, amp


def locate_peaks(vol, min_separation=2.0, threshold_frac=0.1):
    """Local maxima refined to sub-voxel accuracy.

    Parameters
    ----------
    vol : ndarray
    min_separation : float
        Minimum distance between accepted peaks in voxels; weaker peaks
        closer than this to a stronger one are suppressed.
    threshold_frac : float
        Candidates must exceed this fraction of the global maximum.

    Returns
    -------
    PeakSet
        Positions in voxel coordinates, strongest first.
    """
    if min_separation < 1:
        raise ValueError(f"min_separation must be >= 1 voxel, got {min_separation}")
    v = np.asarray(vol, dtype=float)
    empty = PeakSet(np.zeros((0, v.ndim)), np.zeros(0))
    vmax = v.max()
    if not vmax > 0:
        return empty
    mx = ndimage.maximum_filter(v, size=3, mode="nearest")
    mn = ndimage.minimum_filter(v, size=3, mode="nearest")
    cand = (v >= mx) & (v > mn) & (v > threshold_frac * vmax)
    points = np.argwhere(cand)
    if len(points) == 0:
        return empty
    refined = [_refine(v, tuple(p)) for p in points]
    order = sorted(range(len(refined)), key=lambda i: (-refined[i][1], tuple(points[i])))
    accepted = []
    for i in order:
        pos, amp = refined[i]
        if all(np.linalg.norm(pos - q) >= min_separation for q, _ in accepted):
            accepted.append((pos, amp))
    return PeakSet(np.array([p for p, _ in accepted]), np.array([a for _, a in accepted]))


def split_half_indices(n_frames):
    """Even and odd frame indices, i.e. two interleaved complementary sets."""
    idx = np.arange(int(n_frames))
    return idx[0::2], idx[1::2]
