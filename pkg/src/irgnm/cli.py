"""Command-line interface.

``irgnm <simulate|reconstruct2d|reconstruct-tomo|analyze {fsc,localize}|export-image>
--config PATH [--seed N] [--out DIR]``

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import csv
import io as _io
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import formfactor_deconvolve, fsc, locate_peaks, resolution_from_fsc, split_half_indices
from .config import ConfigError, load_config
from .gridmath import GramianSpec, ImagingGeometry
from .io import (
    ArrayContainer,
    ContainerError,
    atomic_write_text,
    export_image,
    read_container,
    write_container,
    write_history,
)
from .kaczmarz import KaczmarzConfig, build_schedule, kaczmarz_reconstruct
from .operators import (
    ConstraintSpec,
    TomoPhaseContrastOperator,
    ctf_invert_homogeneous,
    pc_forward,
)
from .operators.phasecontrast import PhaseContrastOperator
from .phantom import (
    NoiseModel,
    SpherePacking,
    add_noise,
    fcc_lattice,
    hcp_lattice,
    jitter,
    random_packing,
    render_packing,
    render_phantom2d,
    text_glyph,
    two_material_phantom,
)
from .solver import Fidelity, NumericalError, SolverConfig, irgnm

log = logging.getLogger("irgnm")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4


class DataError(RuntimeError):
    """Missing or inconsistent input data."""


def _config_value(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _geometry(cfg, container=None):
    nf = None
    if container is not None and container.fresnel_number is not None:
        nf = container.fresnel_number
    if cfg.geometry.fresnel_number is not None:
        nf = cfg.geometry.fresnel_number
    if nf is None:
        raise ConfigError("geometry.fresnel_number is required (not found in config or input metadata)")
    return _config_value(ImagingGeometry, nf, pixel_size=cfg.geometry.pixel_size_nm)


def _noise(cfg, intensity, seed):
    n = cfg.noise
    if n.kind == "none":
        return intensity, 0.0
    model = _config_value(NoiseModel, n.kind, sigma=n.sigma, peak_flux=n.peak_flux, seed=seed)
    return add_noise(intensity, model)


def _disc_mask(shape, radius):
    yy, xx = np.indices(shape[-2:])
    cy, cx = (shape[-2] - 1) / 2.0, (shape[-1] - 1) / 2.0
    return (yy - cy) ** 2 + (xx - cx) ** 2 <= radius**2


def _constraints(cfg, shape, tomo=False):
    c = cfg.constraints
    mask = None
    if c.support_radius is not None:
        if tomo:
            # cylinder around the rotation axis (axis 0)
            mask = np.broadcast_to(_disc_mask(shape[1:], c.support_radius), shape).copy()
        else:
            mask = _disc_mask(shape, c.support_radius)
    return _config_value(
        ConstraintSpec, support_mask=mask, homogeneous_ratio=c.homogeneous_ratio,
        real_valued=c.real_valued, sign=c.sign, penalty_weight=c.penalty_weight,
    )


def _packing_centers(cfg, seed):
    p = cfg.phantom
    n = p.vol_size
    if p.lattice == "random":
        centers = random_packing(p.n_spheres, p.radius, (n, n, n), seed=seed)
    else:
        gen = hcp_lattice if p.lattice == "hcp" else fcc_lattice
        if len(p.lattice_dims) != 3:
            raise ConfigError("phantom.lattice_dims needs three entries")
        centers = gen(p.spacing_radius, tuple(int(k) for k in p.lattice_dims))
        centers = centers - centers.mean(axis=0) + (n - 1) / 2.0
    if p.jitter > 0:
        centers = jitter(centers, p.jitter, seed=seed)
    return centers


def _write_centers(path, centers, voxel_nm):
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x_vox", "y_vox", "z_vox", "x_nm", "y_nm", "z_nm"])
    for z, y, x in centers:
        w.writerow([f"{x:.6f}", f"{y:.6f}", f"{z:.6f}",
                    f"{x * voxel_nm:.6f}", f"{y * voxel_nm:.6f}", f"{z * voxel_nm:.6f}"])
    atomic_write_text(path, buf.getvalue())


def cmd_simulate(cfg, out, seed):
    p = cfg.phantom
    px = cfg.geometry.pixel_size_nm
    geom = _geometry(cfg)
    if p.kind == "two_material":
        spec, _, _ = _config_value(
            two_material_phantom, p.size, p.disc_radius, text_glyph(p.glyph_text), p.glyph_scale,
            p.phi, p.mu, px,
        )
        spec.missing_material = p.missing_material
        obj = render_phantom2d(spec)
        clean = pc_forward(obj, geom, pad=cfg.geometry.pad)
        noisy, eps = _noise(cfg, clean, seed)
        write_container(out / "phantom", ArrayContainer(obj.f, ["y", "x"], px, geom.fresnel_number))
        write_container(out / "hologram", ArrayContainer(
            noisy, ["y", "x"], px, geom.fresnel_number, extra={"noise_norm": eps, "seed": seed}))
    else:
        n = p.vol_size
        centers = _packing_centers(cfg, seed)
        packing = _config_value(SpherePacking, centers, p.radius, p.delta)
        vol = _config_value(render_packing, packing, (n, n, n), px)
        t = cfg.tomo
        angles = np.linspace(0.0, np.deg2rad(t.angle_range_deg), t.n_angles, endpoint=False)
        op = TomoPhaseContrastOperator((n, n, n), angles, geom, t.projection_scale, pad=cfg.geometry.pad)
        clean = op(vol.v)
        noisy, eps = _noise(cfg, clean, seed)
        write_container(out / "phantom", ArrayContainer(vol.v, ["z", "y", "x"], px))
        write_container(out / "hologram", ArrayContainer(
            noisy, ["angle", "z", "y"], px, geom.fresnel_number, np.rad2deg(angles),
            extra={"noise_norm": eps, "seed": seed, "projection_scale": t.projection_scale}))
        _write_centers(out / "phantom_centers.csv", centers, px)
    print(f"noise norm: {eps:.6g}")
    return EXIT_OK


def _read_input(path, what="io.input"):
    if not path:
        raise ConfigError(f"{what} is not set")
    try:
        return read_container(path)
    except (FileNotFoundError, ContainerError) as exc:
        raise DataError(str(exc)) from exc


def cmd_reconstruct2d(cfg, out, seed):
    cont = _read_input(cfg.io.input)
    data = cont.data
    if data.ndim != 2 or np.iscomplexobj(data):
        raise DataError(f"expected a real 2D hologram, got {data.dtype} array of shape {data.shape}")
    geom = _geometry(cfg, cont)
    s = cfg.solver
    px = cont.pixel_size_nm
    if s.ctf:
        ratio = cfg.constraints.homogeneous_ratio or 0.0
        phi = _config_value(ctf_invert_homogeneous, data, ratio, geom, s.ctf_reg)
        f = phi * (1.0 - 0.5j * ratio)
        records = [{"step": 0, "method": "ctf", "reg": s.ctf_reg}]
    else:
        cons = _constraints(cfg, data.shape)
        fid = _config_value(Fidelity, s.fidelity, s.I0)
        conf = _config_value(
            SolverConfig, alpha0=s.alpha0, alpha_reduction=s.alpha_reduction, tau=s.tau,
            max_newton=s.max_newton, cg_tol=s.cg_tol, cg_max=s.cg_max,
            gram_X=GramianSpec.sobolev(s.sobolev_s) if s.sobolev_s else GramianSpec(),
            fidelity=fid, constraints=cons, stop_rule=s.stop_rule,
            plateau_fraction=s.plateau_fraction, endgame_steps=s.endgame_steps,
            endgame_factor=s.endgame_factor,
        )
        noise_norm = cont.extra.get("noise_norm") or None
        if s.stop_rule == "discrepancy" and noise_norm is None:
            raise DataError("discrepancy stopping needs noise_norm in the hologram metadata")
        op = PhaseContrastOperator(data.shape, geom, pad=cfg.geometry.pad)
        res = irgnm(op, data, conf, noise_norm=noise_norm if s.stop_rule in ("auto", "discrepancy") else None)
        f = res.f
        records = res.records
        print(f"stopped: {res.stop_reason} after {res.newton_count} Newton steps, {res.total_cg} CG iterations")
    write_container(out / "object", ArrayContainer(f, ["y", "x"], px, geom.fresnel_number))
    write_container(out / "phi", ArrayContainer(f.real.copy(), ["y", "x"], px, geom.fresnel_number))
    write_container(out / "mu", ArrayContainer(-2.0 * f.imag, ["y", "x"], px, geom.fresnel_number))
    write_history(out / "history.jsonl", records)
    return EXIT_OK


def cmd_reconstruct_tomo(cfg, out, seed):
    cont = _read_input(cfg.io.input)
    data = cont.data
    if data.ndim != 3 or np.iscomplexobj(data):
        raise DataError(f"expected a real hologram stack, got {data.dtype} array of shape {data.shape}")
    if cont.angles_deg is None:
        raise DataError("hologram metadata has no angles")
    angles = cont.angles_rad
    if len(angles) != data.shape[0]:
        raise DataError(f"{len(angles)} angles for {data.shape[0]} frames")
    geom = _geometry(cfg, cont)
    n0, ny = data.shape[1:]
    vol_shape = (n0, ny, ny)
    scale = cont.extra.get("projection_scale", cfg.tomo.projection_scale)
    op = TomoPhaseContrastOperator(vol_shape, angles, geom, scale, pad=cfg.geometry.pad)
    k = cfg.kaczmarz
    conf = _config_value(
        KaczmarzConfig, alpha0=k.alpha0, beta=k.beta, gamma=k.gamma, cg_tol=k.cg_tol, cg_max=k.cg_max,
        constraints=_constraints(cfg, vol_shape, tomo=True),
    )
    px = cont.pixel_size_nm

    def run(indices, run_seed):
        sched = _config_value(build_schedule, len(indices), k.wedge_size, k.passes, k.order, run_seed)
        return kaczmarz_reconstruct(op.restrict(indices), data[indices], sched, conf)

    if k.split_half:
        halves = split_half_indices(data.shape[0])
        for name, idx, s in (("a", halves[0], seed), ("b", halves[1], seed + 1)):
            res = run(idx, s)
            write_container(out / f"volume_{name}", ArrayContainer(res.f, ["z", "y", "x"], px))
            write_history(out / f"history_{name}.jsonl", res.records)
            print(f"half {name}: {len(idx)} frames, residual {res.residual_history[0]:.4g} -> {res.residual_history[-1]:.4g}")
    else:
        res = run(np.arange(data.shape[0]), seed)
        write_container(out / "volume", ArrayContainer(res.f, ["z", "y", "x"], px))
        write_history(out / "history.jsonl", res.records)
        print(f"residual {res.residual_history[0]:.4g} -> {res.residual_history[-1]:.4g}, "
              f"{res.extra['mean_cg']:.1f} CG iterations per step")
    return EXIT_OK


def _fmt_length(value, voxel_nm):
    if voxel_nm:
        return f"{value:.4g} voxels ({value * voxel_nm:.4g} nm)"
    return f"{value:.4g} voxels"


def cmd_analyze(cfg, out, seed, mode):
    a = cfg.analysis
    cont = _read_input(cfg.io.input)
    vol = np.real(cont.data)
    voxel_nm = cont.pixel_size_nm
    if mode == "fsc":
        other = _read_input(cfg.io.input_b, "io.input_b")
        if other.data.shape != cont.data.shape:
            raise DataError(f"shape mismatch: {cont.data.shape} vs {other.data.shape}")
        curve = _config_value(fsc, vol, np.real(other.data), a.n_shells)
        res = resolution_from_fsc(curve)
        lines = ["# frequency_cycles_per_voxel correlation threshold_half_bit shell_count"]
        for row in zip(curve.shell_centers, curve.correlation, curve.threshold, curve.shell_counts):
            lines.append(f"{row[0]:.8f} {row[1]:.8f} {row[2]:.8f} {int(row[3])}")
        if res.nyquist_limited:
            summary = "resolution: Nyquist-limited"
        else:
            summary = f"resolution: {_fmt_length(res.value, voxel_nm)} (half-period)"
        lines.append(f"# {summary}")
        atomic_write_text(out / "fsc.txt", "\n".join(lines) + "\n")
        print(summary)
    else:
        dec = _config_value(formfactor_deconvolve, vol, a.sphere_diameter, a.smooth_fwhm, a.reg)
        peaks = _config_value(locate_peaks, dec, a.min_separation, a.threshold_frac)
        _write_centers(out / "peaks.csv", peaks.positions.reshape(-1, 3), voxel_nm or 1.0)
        print(f"peaks: {peaks.count}")
    return EXIT_OK


def cmd_export_image(cfg, out, seed):
    e = cfg.export
    cont = _read_input(e.input, "export.input")
    arr = cont.data
    if arr.ndim == 3:
        if e.slice_index is None:
            raise DataError("3D input needs export.slice_index")
        if not 0 <= e.slice_axis < 3 or not 0 <= e.slice_index < arr.shape[e.slice_axis]:
            raise DataError(f"slice {e.slice_index} on axis {e.slice_axis} is outside shape {arr.shape}")
        arr = np.take(arr, e.slice_index, axis=e.slice_axis)
    elif arr.ndim != 2:
        raise DataError(f"cannot export a {arr.ndim}D array as an image")
    comp = {
        "real": np.real, "imag": np.imag, "abs": np.abs,
        "phi": np.real, "mu": lambda z: -2.0 * np.imag(z),
    }[e.component]
    export_image(comp(arr), out / e.output, e.normalization, e.p_low, e.p_high, e.bits)
    print(f"wrote {out / e.output}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="irgnm", description="Newton-type phase retrieval and tomography")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="TOML run configuration")
        p.add_argument("--seed", type=int, default=None, help="override the configured seed")
        p.add_argument("--out", default=None, help="output directory (overrides io.out_dir)")
        p.add_argument("-v", "--verbose", action="store_true", help="log solver progress")

    for name in ("simulate", "reconstruct2d", "reconstruct-tomo", "export-image"):
        common(sub.add_parser(name))
    an = sub.add_parser("analyze")
    an.add_argument("mode", choices=("fsc", "localize"))
    common(an)
    return parser


COMMANDS = {
    "simulate": cmd_simulate,
    "reconstruct2d": cmd_reconstruct2d,
    "reconstruct-tomo": cmd_reconstruct_tomo,
    "export-image": cmd_export_image,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        seed = cfg.seed if args.seed is None else args.seed
        out = Path(args.out if args.out is not None else cfg.io.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "analyze":
            return cmd_analyze(cfg, out, seed, args.mode)
        return COMMANDS[args.command](cfg, out, seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, ContainerError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
