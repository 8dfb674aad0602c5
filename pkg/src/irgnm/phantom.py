"""Synthetic objects, sphere packings and noise models for simulations."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .operators.objects import Object2D, Volume3D

__all__ = [
    "Disc",
    "Rectangle",
    "Glyph",
    "PhantomSpec2D",
    "SpherePacking",
    "NoiseModel",
    "text_glyph",
    "builtin_glyph",
    "two_material_phantom",
    "render_phantom2d",
    "hcp_lattice",
    "fcc_lattice",
    "cubic_lattice",
    "random_packing",
    "jitter",
    "render_packing",
    "add_noise",
]

# 5x7 bitmaps; '#' marks material
_FONT = {
    "A": [".###.", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"],
    "B": ["####.", "#...#", "#...#", "####.", "#...#", "#...#", "####."],
    "D": ["####.", "#...#", "#...#", "#...#", "#...#", "#...#", "####."],
    "E": ["#####", "#....", "#....", "####.", "#....", "#....", "#####"],
    "N": ["#...#", "##..#", "#.#.#", "#..##", "#...#", "#...#", "#...#"],
    "O": [".###.", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."],
    "P": ["####.", "#...#", "#...#", "####.", "#....", "#....", "#...."],
    "Q": [".###.", "#...#", "#...#", "#...#", "#.#.#", "#..#.", ".##.#"],
    "R": ["####.", "#...#", "#...#", "####.", "#.#..", "#..#.", "#...#"],
    "W": ["#...#", "#...#", "#...#", "#.#.#", "#.#.#", "##.##", "#...#"],
    "T": ["#####", "..#..", "..#..", "..#..", "..#..", "..#..", "..#.."],
}


def text_glyph(text, spacing=1):
    """Boolean bitmap of ``text`` in a 5x7 block font."""
    cols = []
    gap = np.zeros((7, spacing), dtype=bool)
    for i, ch in enumerate(text.upper()):
        if ch not in _FONT:
            raise ValueError(f"no glyph for character {ch!r}")
        if i:
            cols.append(gap)
        cols.append(np.array([[c == "#" for c in row] for row in _FONT[ch]]))
    return np.hstack(cols)


def builtin_glyph():
    """Multi-hole test glyph used by the two-material simulation."""
    return text_glyph("OB")


@dataclass
class Disc:
    center: tuple
    radius: float
    phi: float = 0.0
    mu: float = 0.0

    def coverage(self, y, x):
        return ((y - self.center[0]) ** 2 + (x - self.center[1]) ** 2) <= self.radius**2

    def bounds(self):
        (cy, cx), r = self.center, self.radius
        return cy - r, cy + r, cx - r, cx + r


@dataclass
class Rectangle:
    corner: tuple
    size: tuple
    phi: float = 0.0
    mu: float = 0.0

    def coverage(self, y, x):
        (y0, x0), (h, w) = self.corner, self.size
        return (y >= y0) & (y < y0 + h) & (x >= x0) & (x < x0 + w)

    def bounds(self):
        (y0, x0), (h, w) = self.corner, self.size
        return y0, y0 + h, x0, x0 + w


@dataclass
class Glyph:
    """Bitmap placed with its top-left corner at ``origin``, ``scale`` px per cell."""

    bitmap: np.ndarray
    origin: tuple
    scale: float
    phi: float = 0.0
    mu: float = 0.0

    def __post_init__(self):
        self.bitmap = np.asarray(self.bitmap, dtype=bool)

    def coverage(self, y, x):
        y, x = np.broadcast_arrays(y, x)
        iy = np.floor((y - self.origin[0]) / self.scale).astype(int)
        ix = np.floor((x - self.origin[1]) / self.scale).astype(int)
        h, w = self.bitmap.shape
        ok = (iy >= 0) & (iy < h) & (ix >= 0) & (ix < w)
        out = np.zeros(y.shape, dtype=bool)
        out[ok] = self.bitmap[iy[ok], ix[ok]]
        return out

    def bounds(self):
        h, w = self.bitmap.shape
        y0, x0 = self.origin
        return y0, y0 + h * self.scale, x0, x0 + w * self.scale


@dataclass
class PhantomSpec2D:
    """Piecewise-constant 2D object composed additively from elements.

    Pixel ``(i, j)`` covers ``[i - 0.5, i + 0.5) x [j - 0.5, j + 0.5)``.
    ``missing_material`` negates phase and absorption (a structure milled
    out of a film).
    """

    shape: tuple
    elements: list = field(default_factory=list)
    pixel_size: float = 1.0
    missing_material: bool = False
    supersample: int = 8


def render_phantom2d(spec):
    """Render a phantom with area-fraction anti-aliasing of edges."""
    ny, nx = spec.shape
    phi = np.zeros((ny, nx))
    mu = np.zeros((ny, nx))
    s = int(spec.supersample)
    sub = (np.arange(s) + 0.5) / s - 0.5
    y = (np.arange(ny)[:, None] + sub[None, :]).ravel()
    x = (np.arange(nx)[:, None] + sub[None, :]).ravel()
    for el in spec.elements:
        y0, y1, x0, x1 = el.bounds()
        if y0 < -0.5 or x0 < -0.5 or y1 > ny - 0.5 or x1 > nx - 0.5:
            raise ValueError(f"element {type(el).__name__} at {el.bounds()} leaves the {spec.shape} frame")
        frac = el.coverage(y[:, None], x[None, :]).reshape(ny, s, nx, s).mean(axis=(1, 3))
        phi += el.phi * frac
        mu += el.mu * frac
    if spec.missing_material:
        phi, mu = -phi, -mu
    return Object2D.from_components(phi, mu, spec.pixel_size)


def two_material_phantom(n=256, disc_radius=None, glyph=None, glyph_scale=None,
                         phi=0.2, mu=0.04, pixel_size=1.0):
    """Absorbing glyph inside a purely phase-shifting disc of equal phase.

    The glyph region has phase ``phi`` and absorption ``mu``; the rest of the
    disc has phase ``phi`` and no absorption.

    Returns
    -------
    spec : PhantomSpec2D
    disc : Disc
    glyph : Glyph
    """
    disc_radius = disc_radius or n / 8.0
    bitmap = builtin_glyph() if glyph is None else np.asarray(glyph, dtype=bool)
    h, w = bitmap.shape
    glyph_scale = glyph_scale or max(1.0, np.floor(1.75 * disc_radius / np.hypot(h, w)))
    c = (n - 1) / 2.0
    origin = (c + 0.5 - h * glyph_scale / 2, c + 0.5 - w * glyph_scale / 2)
    disc = Disc((c, c), disc_radius, phi, 0.0)
    # glyph adds absorption only; phase is already provided by the disc
    # snap to pixel edges so every glyph cell covers whole pixels
    g = Glyph(bitmap, tuple(np.round(origin) - 0.5), glyph_scale, 0.0, mu)
    return PhantomSpec2D((n, n), [disc, g], pixel_size), disc, g


@dataclass
class SpherePacking:
    """Identical homogeneous spheres (centres in voxel units)."""

    centers: np.ndarray
    radius: float
    delta_value: float = 1.0
    overlap_tol: float = 1e-6

    def __post_init__(self):
        self.centers = np.asarray(self.centers, dtype=float).reshape(-1, 3)
        if self.radius <= 0:
            raise ValueError("radius must be > 0")

    def __len__(self):
        return len(self.centers)

    def min_distance(self):
        c = self.centers
        if len(c) < 2:
            return np.inf
        d = np.linalg.norm(c[:, None] - c[None], axis=-1)
        d[np.diag_indices(len(c))] = np.inf
        return float(d.min())

    def validate(self, vol_shape=None):
        if self.min_distance() < 2 * self.radius * (1 - self.overlap_tol):
            raise ValueError(
                f"spheres overlap: minimum centre distance {self.min_distance():.4g} "
                f"< diameter {2 * self.radius:.4g}"
            )
        if vol_shape is not None and len(self.centers):
            lo = self.centers - self.radius
            hi = self.centers + self.radius
            if np.any(lo < -0.5) or np.any(hi > np.asarray(vol_shape) - 0.5):
                raise ValueError("spheres extend outside the volume")


def hcp_lattice(radius, n=(3, 3, 3), origin=(0.0, 0.0, 0.0)):
    """Hexagonal close-packed sites with nearest-neighbour distance ``2 r``.

    ``n`` counts (rows, columns, layers); layers stack along axis 0 in ABAB
    order.
    """
    d = 2.0 * radius
    ny, nx, nl = n
    sites = []
    for layer, row, col in product(range(nl), range(ny), range(nx)):
        x = d * (col + 0.5 * (row % 2))
        y = d * np.sqrt(3) / 2 * row
        if layer % 2:
            x += d / 2
            y += d / (2 * np.sqrt(3))
        z = d * np.sqrt(2.0 / 3.0) * layer
        sites.append((z, y, x))
    return np.asarray(sites) + np.asarray(origin, dtype=float)


def fcc_lattice(radius, n=(3, 3, 3), origin=(0.0, 0.0, 0.0)):
    """Face-centred cubic sites (ABC stacking of close-packed layers)."""
    d = 2.0 * radius
    ny, nx, nl = n
    shifts = [(0.0, 0.0), (d / 2, d / (2 * np.sqrt(3))), (d, d / np.sqrt(3))]
    sites = []
    for layer, row, col in product(range(nl), range(ny), range(nx)):
        sx, sy = shifts[layer % 3]
        x = d * (col + 0.5 * (row % 2)) + sx
        y = d * np.sqrt(3) / 2 * row + sy
        z = d * np.sqrt(2.0 / 3.0) * layer
        sites.append((z, y, x))
    return np.asarray(sites) + np.asarray(origin, dtype=float)


def cubic_lattice(spacing, n=(4, 4, 4), origin=(0.0, 0.0, 0.0)):
    idx = np.array(list(product(*(range(k) for k in n))), dtype=float)
    return idx * spacing + np.asarray(origin, dtype=float)


def random_packing(n_spheres, radius, vol_shape, seed=0, gap=0.0, margin=1.0, max_tries=100000):
    """Random sequential addition of non-overlapping spheres."""
    rng = np.random.default_rng(seed)
    lo = radius + margin - 0.5
    hi = np.asarray(vol_shape, dtype=float) - 0.5 - radius - margin
    centers = []
    for _ in range(max_tries):
        c = rng.uniform(lo, hi)
        if all(np.linalg.norm(c - o) >= 2 * radius + gap for o in centers):
            centers.append(c)
            if len(centers) == n_spheres:
                return np.asarray(centers)
    raise ValueError(f"could only place {len(centers)} of {n_spheres} spheres")


def jitter(centers, amplitude, seed=0):
    """Displace sites by uniform random offsets of the given amplitude."""
    rng = np.random.default_rng(seed)
    return np.asarray(centers) + rng.uniform(-amplitude, amplitude, np.shape(centers))


def render_packing(spec, vol_shape, voxel_size=1.0, supersample=5):
    """Render spheres into a real ``delta`` volume (``beta = 0``).

    Boundary voxels get the covered volume fraction, estimated on a
    ``supersample**3`` sub-grid.
    """
    spec.validate(vol_shape)
    vol = np.zeros(vol_shape)
    s = int(supersample)
    sub = (np.arange(s) + 0.5) / s - 0.5
    r = spec.radius
    for c in spec.centers:
        lo = np.maximum(np.floor(c - r - 0.5).astype(int), 0)
        hi = np.minimum(np.ceil(c + r + 0.5).astype(int) + 1, vol_shape)
        axes = [
            (np.arange(lo[i], hi[i])[:, None] + sub[None, :]).ravel() - c[i]
            for i in range(3)
        ]
        inside = (
            axes[0][:, None, None] ** 2 + axes[1][None, :, None] ** 2 + axes[2][None, None, :] ** 2
        ) <= r * r
        n0, n1, n2 = hi - lo
        frac = inside.reshape(n0, s, n1, s, n2, s).mean(axis=(1, 3, 5))
        vol[lo[0]:hi[0], lo[1]:hi[1], lo[2]:hi[2]] += spec.delta_value * frac
    return Volume3D(vol, voxel_size)


@dataclass(frozen=True)
class NoiseModel:
    """``kind="gaussian"`` adds ``sigma`` white noise; ``"poisson"`` draws
    photon counts at ``peak_flux`` per unit intensity."""

    kind: str = "gaussian"
    sigma: float = 0.0
    peak_flux: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("gaussian", "poisson"):
            raise ValueError(f"unknown noise model {self.kind!r}")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if not self.peak_flux > 0:
            raise ValueError("peak_flux must be > 0")


def add_noise(I, model, rng=None):
    """Corrupt intensities according to ``model``.

    Returns
    -------
    noisy : ndarray
    noise_norm : float
        Realized Euclidean norm of the perturbation.
    """
    I = np.asarray(I, dtype=float)
    rng = rng or np.random.default_rng(model.seed)
    if model.kind == "gaussian":
        if model.sigma == 0:
            return I.copy(), 0.0
        noisy = I + model.sigma * rng.standard_normal(I.shape)
    else:
        if np.any(I < 0):
            raise ValueError("Poisson noise needs non-negative intensities")
        noisy = rng.poisson(model.peak_flux * I) / model.peak_flux
    return noisy, float(np.linalg.norm(noisy - I))
