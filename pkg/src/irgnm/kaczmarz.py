"""Newton-Kaczmarz reconstruction over angular wedges of a tomographic series.

Each step solves one regularized Gauss-Newton subproblem for a group of
adjacent frames. The Tikhonov term pulls the update both towards the previous
iterate and (with small weight ``beta``) towards the initial guess.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .gridmath import GramianSpec
from .operators.objects import ConstraintSpec, HoloData, Volume3D
from .solver import (
    Fidelity,
    NumericalError,
    ReconResult,
    estimate_alpha0,
    fidelity_residual,
    newton_step_cg,
)

__all__ = [
    "WedgeSchedule",
    "KaczmarzConfig",
    "build_schedule",
    "kaczmarz_step",
    "kaczmarz_reconstruct",
    "global_residual",
    "reconstruct_volume",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class WedgeSchedule:
    """Ordered list of frame-index groups processed one per Newton step.

    Attributes
    ----------
    wedges : tuple of tuple of int
        Frame indices of each step, in processing order.
    wedge_size, passes : int
    order : str
        ``"sequential"`` or ``"random"``.
    seed : int or None
    """

    wedges: tuple
    wedge_size: int
    passes: int
    order: str = "sequential"
    seed: int | None = None

    def __len__(self):
        return len(self.wedges)

    def __iter__(self):
        return iter(self.wedges)

    @property
    def per_pass(self):
        return len(self.wedges) // self.passes

    def visit_counts(self, n_frames):
        counts = np.zeros(n_frames, dtype=int)
        for w in self.wedges:
            counts[list(w)] += 1
        return counts


def build_schedule(n_frames, wedge_size=6, passes=2, order="sequential", seed=None):
    """Split frames into contiguous wedges and repeat them ``passes`` times.

    With ``order="random"`` the wedge order is permuted independently in each
    pass by a generator seeded with ``seed``; wedge membership never changes.
    """
    n_frames, wedge_size, passes = int(n_frames), int(wedge_size), int(passes)
    if wedge_size < 1:
        raise ValueError(f"wedge_size must be >= 1, got {wedge_size}")
    if wedge_size > n_frames:
        raise ValueError(f"wedge_size {wedge_size} exceeds the number of frames {n_frames}")
    if passes < 1:
        raise ValueError(f"passes must be >= 1, got {passes}")
    if order not in ("sequential", "random"):
        raise ValueError(f"unknown wedge order {order!r}")
    base = [tuple(range(i, min(i + wedge_size, n_frames))) for i in range(0, n_frames, wedge_size)]
    rng = np.random.default_rng(seed)
    wedges = []
    for _ in range(passes):
        if order == "random":
            wedges.extend(base[i] for i in rng.permutation(len(base)))
        else:
            wedges.extend(base)
    return WedgeSchedule(tuple(wedges), wedge_size, passes, order, seed)


@dataclass
class KaczmarzConfig:
    """Parameters of the Newton-Kaczmarz sweep.

    ``alpha0="auto"`` estimates the regularization parameter once from the
    first wedge and keeps it fixed. ``gamma="auto"`` sets the positivity
    penalty weight to ``alpha0``. ``alpha_schedule`` and ``beta_schedule``
    optionally map the step index to per-step values.
    """

    alpha0: object = "auto"
    beta: float = 0.001
    gamma: object = "auto"
    cg_tol: float = 1e-3
    cg_max: int = 50
    gram_X: GramianSpec = field(default_factory=GramianSpec)
    fidelity: Fidelity = field(default_factory=Fidelity)
    constraints: ConstraintSpec = field(default_factory=ConstraintSpec)
    alpha_schedule: object = None
    beta_schedule: object = None

    def __post_init__(self):
        if not 0 <= self.beta <= 1:
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")
        if self.alpha0 != "auto" and not float(self.alpha0) > 0:
            raise ValueError(f"alpha0 must be > 0 or 'auto', got {self.alpha0}")
        if self.gamma != "auto" and float(self.gamma) < 0:
            raise ValueError(f"gamma must be >= 0 or 'auto', got {self.gamma}")
        if self.cg_max < 1 or not self.cg_tol > 0:
            raise ValueError("invalid CG controls")


def _frames(data):
    return data.frames if isinstance(data, HoloData) else np.asarray(data, dtype=float)


def kaczmarz_step(op_j, f_k, f0, data_j, config, alpha, gamma=0.0, beta=None, linearization=None):
    """One regularized Newton step on a single wedge.

    Returns
    -------
    f_next : ndarray
    info : StepInfo
    """
    beta = config.beta if beta is None else beta
    return newton_step_cg(op_j, f_k, f0, _frames(data_j), alpha, config, gamma,
                          anchor_weight=beta, linearization=linearization)


def global_residual(op, f, data, schedule_or_wedges, fidelity=None):
    """Fidelity norm of ``F(f) - data`` evaluated wedge by wedge."""
    frames = _frames(data)
    seen = set()
    total = 0.0
    for w in schedule_or_wedges:
        if w in seen:
            continue
        seen.add(w)
        idx = list(w)
        r, _ = fidelity_residual(op.restrict(idx)(f), frames[idx], fidelity)
        total += r * r
    return float(np.sqrt(total))


def kaczmarz_reconstruct(op, data, schedule, config=None, f0=None, callback=None):
    """Sweep Newton-Kaczmarz steps over all wedges of ``schedule``.

    Parameters
    ----------
    op : TomoPhaseContrastOperator
        Full operator; must support ``restrict(indices)``.
    data : HoloData or ndarray
        Frames of shape ``(n_frames, ...)``.
    schedule : WedgeSchedule
    config : KaczmarzConfig
    f0 : ndarray, optional
        Initial guess and anchor (default zero).
    callback : callable, optional
        Called with each per-wedge record.

    Returns
    -------
    ReconResult
        ``residual_history`` holds the global residual of the initial guess
        and after every completed pass; ``records`` holds one entry per wedge
        with the wedge residual before its update.
    """
    config = config or KaczmarzConfig()
    frames = _frames(data)
    n = frames.shape[0]
    if frames.shape[0] != op.n_frames:
        raise ValueError(f"data has {n} frames but the operator expects {op.n_frames}")
    counts = schedule.visit_counts(n)
    if np.any(counts == 0):
        raise ValueError(f"schedule leaves frames {np.flatnonzero(counts == 0).tolist()} unused")
    cons = config.constraints
    cons.check_shape(op.domain_shape)
    if f0 is None:
        f0 = np.zeros(op.domain_shape, dtype=complex)
    f = np.array(f0, dtype=complex)

    sub_ops = {}

    def sub(w):
        if w not in sub_ops:
            sub_ops[w] = op.restrict(list(w))
        return sub_ops[w]

    first = schedule.wedges[0]
    if config.alpha0 == "auto":
        op1 = sub(first)
        d1 = frames[list(first)]
        alpha0 = estimate_alpha0(op1, f0, d1, config.gram_X, config.fidelity.gramian(d1), cons)
    else:
        alpha0 = float(config.alpha0)
    gamma = 0.0
    if cons.has_sign:
        g = config.gamma if config.gamma != "auto" else cons.penalty_weight
        gamma = alpha0 if g == "auto" else float(g)

    hist = [global_residual(op, f, frames, schedule.wedges, config.fidelity)]
    alphas, gammas, cg_counts, records = [], [], [], []
    per_pass = schedule.per_pass
    for k, w in enumerate(schedule.wedges):
        op_j = sub(w)
        d_j = frames[list(w)]
        alpha = alpha0 if config.alpha_schedule is None else float(config.alpha_schedule(k))
        beta = config.beta if config.beta_schedule is None else float(config.beta_schedule(k))
        lin = op_j.linearize(f)
        res_before = fidelity_residual(lin[0], d_j, config.fidelity)[0]
        f, info = kaczmarz_step(op_j, f, f0, d_j, config, alpha, gamma, beta, linearization=lin)
        if not np.all(np.isfinite(f)):
            raise NumericalError(f"non-finite iterate after Kaczmarz step {k}")
        alphas.append(alpha)
        gammas.append(gamma)
        cg_counts.append(info.cg_iterations)
        rec = {
            "step": k + 1, "wedge": list(w), "alpha": alpha, "gamma": gamma,
            "cg": info.cg_iterations, "cg_ratio": info.cg_residual_ratio,
            "residual": res_before, "penalty": info.penalty,
        }
        records.append(rec)
        log.info("wedge step %(step)d: cg=%(cg)d wedge residual=%(residual).4e", rec)
        if callback is not None:
            callback(rec)
        if (k + 1) % per_pass == 0:
            hist.append(global_residual(op, f, frames, schedule.wedges, config.fidelity))

    mean_cg = float(np.mean(cg_counts)) if cg_counts else 0.0
    log.info("Kaczmarz sweep finished: %d steps, %.1f CG iterations per step", len(cg_counts), mean_cg)
    return ReconResult(f, hist, alphas, gammas, cg_counts, "passes_completed", None, records,
                       extra={"alpha0": alpha0, "mean_cg": mean_cg})


def reconstruct_volume(op, data, schedule, config=None, voxel_size=1.0, **kw):
    """Convenience wrapper returning the result with ``f`` as a :class:`Volume3D`."""
    res = kaczmarz_reconstruct(op, data, schedule, config, **kw)
    res.f = Volume3D(res.f, voxel_size)
    return res
