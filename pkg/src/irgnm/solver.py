"""Iteratively regularized Gauss-Newton method (IRGNM) with CG inner solves.

Operators follow a small protocol: ``op(f)`` evaluates the forward map,
``op.linearize(f)`` returns ``(op(f), deriv)`` where ``deriv(h)`` applies the
Frechet derivative and ``deriv.adjoint(g)`` its Euclidean transpose, and
``op.domain_shape`` gives the shape of the unknown. Complex unknowns are
treated as real vector spaces with inner product ``Re <f, g>``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .gridmath import GramianSpec
from .operators.objects import ConstraintSpec

__all__ = [
    "Fidelity",
    "SolverConfig",
    "ReconResult",
    "StepInfo",
    "NumericalError",
    "CGBreakdown",
    "DivergenceError",
    "fidelity_residual",
    "estimate_alpha0",
    "conjugate_gradient",
    "positivity_penalty",
    "apply_subspace_constraint",
    "newton_step_cg",
    "irgnm",
]

log = logging.getLogger(__name__)

STOP_REASONS = ("discrepancy", "plateau", "max_iter", "zero_residual")


class NumericalError(RuntimeError):
    """Raised when an iteration breaks down numerically."""


class CGBreakdown(NumericalError):
    """Non-positive curvature in CG; usually a wrong adjoint."""


class DivergenceError(NumericalError):
    """Residual increased for several consecutive Newton steps."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


def _inner(a, b):
    return float(np.vdot(a, b).real)


@dataclass(frozen=True)
class Fidelity:
    """Data fidelity norm.

    ``"l2"`` is the plain Euclidean norm; ``"poisson_quadratic"`` weights each
    pixel by ``1 / max(I0, I_obs)``, a quadratic approximation of the
    Kullback-Leibler divergence around its minimum.
    """

    kind: str = "l2"
    I0: float = 1.0

    def __post_init__(self):
        if self.kind not in ("l2", "poisson_quadratic"):
            raise ValueError(f"unknown fidelity {self.kind!r}")
        if not self.I0 > 0:
            raise ValueError(f"I0 must be > 0, got {self.I0}")

    def weights(self, data):
        if self.kind == "l2":
            return None
        data = np.asarray(data, dtype=float)
        if np.any(data < 0):
            raise ValueError("poisson_quadratic fidelity requires non-negative data")
        return 1.0 / np.maximum(self.I0, data)

    def gramian(self, data):
        w = self.weights(data)
        return GramianSpec() if w is None else GramianSpec.weighted(w)


def fidelity_residual(I_model, I_obs, fidelity=None):
    """Return the fidelity norm of ``I_model - I_obs`` and the weighted residual."""
    fidelity = fidelity or Fidelity()
    I_model = np.asarray(I_model, dtype=float)
    I_obs = np.asarray(I_obs, dtype=float)
    if I_model.shape != I_obs.shape:
        raise ValueError(f"shape mismatch: {I_model.shape} vs {I_obs.shape}")
    res = I_model - I_obs
    w = fidelity.weights(I_obs)
    if w is not None:
        res = res * np.sqrt(w)
    return float(np.linalg.norm(res)), res


@dataclass
class SolverConfig:
    """Parameters of the IRGNM outer and inner iterations.

    ``stop_rule="auto"`` uses the discrepancy principle when a noise level is
    known and the residual plateau rule otherwise. The positivity penalty
    weight lives in ``constraints.penalty_weight``.
    """

    alpha0: object = "auto"
    alpha_reduction: float = 2.0 / 3.0
    tau: float = 1.5
    max_newton: int = 50
    cg_tol: float = 1e-3
    cg_max: int = 50
    gram_X: GramianSpec = field(default_factory=GramianSpec)
    fidelity: Fidelity = field(default_factory=Fidelity)
    constraints: ConstraintSpec = field(default_factory=ConstraintSpec)
    stop_rule: str = "auto"
    plateau_fraction: float = 0.01
    endgame_steps: int = 2
    endgame_factor: float = 10.0
    divergence_window: int = 3

    def __post_init__(self):
        if self.alpha0 != "auto" and not float(self.alpha0) > 0:
            raise ValueError(f"alpha0 must be > 0 or 'auto', got {self.alpha0}")
        if not 0 < self.alpha_reduction < 1:
            raise ValueError(f"alpha_reduction must lie in (0, 1), got {self.alpha_reduction}")
        if self.tau < 1:
            raise ValueError(f"tau must be >= 1, got {self.tau}")
        if self.stop_rule not in ("auto", "discrepancy", "plateau", "max_iter"):
            raise ValueError(f"unknown stop rule {self.stop_rule!r}")
        if self.max_newton < 0 or self.cg_max < 1 or not self.cg_tol > 0:
            raise ValueError("invalid iteration controls")

    @property
    def gamma(self):
        return self.constraints.penalty_weight


@dataclass
class StepInfo:
    cg_iterations: int
    cg_residual_ratio: float
    penalty: float
    gamma: float


@dataclass
class ReconResult:
    """Outcome of a reconstruction.

    ``residual_history[k]`` is the data residual of the k-th iterate, so the
    history has ``newton_count + 1`` entries.
    """

    f: np.ndarray
    residual_history: list
    alpha_history: list
    gamma_history: list
    cg_counts: list
    stop_reason: str
    noise_norm: float | None = None
    records: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @property
    def newton_count(self):
        return len(self.residual_history) - 1

    @property
    def total_cg(self):
        return int(sum(self.cg_counts))


def conjugate_gradient(apply_A, b, tol=1e-3, maxiter=50):
    """CG for a symmetric positive definite operator in ``Re <., .>``.

    Returns
    -------
    x : ndarray
    iterations : int
    ratio : float
        Final residual norm relative to ``||b||``.
    """
    x = np.zeros_like(b)
    r = b.copy()
    rr = _inner(r, r)
    b_norm = np.sqrt(rr)
    if b_norm == 0:
        return x, 0, 0.0
    p = r.copy()
    it = 0
    while it < maxiter:
        Ap = apply_A(p)
        pAp = _inner(p, Ap)
        if not pAp > 0:
            raise CGBreakdown(f"non-positive curvature {pAp:.3e} in CG iteration {it}; check the adjoint")
        a = rr / pAp
        x += a * p
        r -= a * Ap
        rr_new = _inner(r, r)
        it += 1
        if np.sqrt(rr_new) <= tol * b_norm:
            rr = rr_new
            break
        p = r + (rr_new / rr) * p
        rr = rr_new
    return x, it, float(np.sqrt(rr) / b_norm)


# Components subject to sign constraints: phase = Re f, absorption = -Im f.
_COMPONENTS = (
    (lambda h: h.real, lambda r: r),
    (lambda h: -h.imag, lambda r: -1j * r),
)


class PositivityPenalty:
    """Linearized sign penalty ``gamma ||min(0, x_k) - min(0, sign x_k) (x - x_k)||^2``.

    On pixels where the component ``x_k`` violates its sign the term equals
    ``gamma (x_k + dx)^2`` and pulls the update towards ``dx = -x_k``;
    elsewhere it vanishes. ``apply`` is the Hessian contribution to the
    normal equations and ``rhs`` the corresponding right-hand side.
    """

    def __init__(self, f_k, signs, gamma):
        f_k = np.asarray(f_k)
        self.gamma = float(gamma)
        self.terms = []
        self.value = 0.0
        if self.gamma <= 0:
            return
        for (L, Lt), sign in zip(_COMPONENTS, signs):
            if sign is None:
                continue
            orient = 1.0 if sign == "nonnegative" else -1.0
            x = orient * L(f_k)
            mask = x < 0
            if not np.any(mask):
                continue
            self.terms.append((L, Lt, orient, mask, x))
            self.value += self.gamma * float(np.sum(x[mask] ** 2))

    @property
    def active(self):
        return bool(self.terms)

    def apply(self, d):
        out = np.zeros_like(d)
        for L, Lt, _, mask, _ in self.terms:
            out = out + self.gamma * Lt(mask * L(d))
        return out

    def rhs(self, like):
        out = np.zeros_like(like)
        for _, Lt, orient, mask, x in self.terms:
            out = out - self.gamma * orient * Lt(mask * x)
        return out


def positivity_penalty(f_k, sign, gamma):
    """Build the linearized sign penalty around ``f_k``.

    Returns
    -------
    penalty : PositivityPenalty
        Provides ``apply(d)`` and ``rhs(like)`` for the normal equations.
    value : float
        Current penalty ``gamma * sum(min(0, x_k)^2)``.
    """
    signs = (sign, None) if sign is None or isinstance(sign, str) else tuple(sign)
    pen = PositivityPenalty(f_k, signs, gamma)
    return pen, pen.value


def apply_subspace_constraint(h, constraints):
    """Orthogonal projection onto the linear constraint subspace."""
    h = np.asarray(h)
    if constraints is None or not constraints.has_subspace:
        return h
    constraints.check_shape(h.shape)
    c = constraints.homogeneous_ratio
    if c is not None:
        if constraints.real_valued and c != 0:
            raise ValueError("real_valued and a nonzero homogeneous_ratio are incompatible")
        w = 1.0 - 0.5j * c
        h = w * (np.conj(w) * h).real / abs(w) ** 2
    elif constraints.real_valued:
        h = h.real.astype(h.dtype) if np.iscomplexobj(h) else h
    if constraints.support_mask is not None:
        h = np.where(constraints.support_mask, h, 0)
    return h


def estimate_alpha0(op, f0, data, gram_X=None, gram_Y=None, constraints=None):
    """Balance data and penalty terms: ``||A A* g||_Y^2 / ||A* g||_X^2``.

    ``A`` is the derivative at ``f0`` and ``g`` the observed data.
    """
    gram_X = gram_X or GramianSpec()
    gram_Y = gram_Y or GramianSpec()
    _, A = op.linearize(f0)
    data = np.asarray(data, dtype=float)
    adj = apply_subspace_constraint(A.adjoint(gram_Y.apply(data)), constraints)
    adj = gram_X.apply_inverse(adj)
    denom = _inner(adj, gram_X.apply(adj))
    if not denom > 0 or not np.isfinite(denom):
        raise ValueError("adjoint of the data vanishes at the initial guess; set alpha0 explicitly")
    fwd = A(adj)
    alpha = _inner(fwd, gram_Y.apply(fwd)) / denom
    if not alpha > 0 or not np.isfinite(alpha):
        raise ValueError(f"degenerate alpha0 estimate {alpha}; set alpha0 explicitly")
    return float(alpha)


def newton_step_cg(op, f_k, f0, data, alpha, config, gamma=0.0, anchor_weight=1.0,
                   linearization=None, gram_Y=None):
    """One regularized Newton step.

    Minimizes ``||F(f_k) + A (f - f_k) - data||_Y^2 + alpha ||f - f_k||_X^2``
    where the penalty anchor is split between ``f0`` (weight
    ``anchor_weight``) and ``f_k`` (the rest); ``anchor_weight=1`` is the
    plain IRGNM step. A sign penalty is added when ``gamma > 0`` and the
    minimization is restricted to the constraint subspace.

    Returns
    -------
    f_next : ndarray
    info : StepInfo
    """
    if not alpha > 0:
        raise ValueError(f"alpha must be > 0, got {alpha}")
    y, A = linearization if linearization is not None else op.linearize(f_k)
    gram_X = config.gram_X
    gram_Y = gram_Y or config.fidelity.gramian(data)
    cons = config.constraints
    P = lambda h: apply_subspace_constraint(h, cons)

    pen = PositivityPenalty(f_k, cons.component_signs, gamma) if cons.has_sign else None
    if pen is not None and not pen.active:
        pen = None

    def normal(d):
        out = A.adjoint(gram_Y.apply(A(d))) + alpha * gram_X.apply(d)
        if pen is not None:
            out = out + pen.apply(d)
        return P(out)

    b = A.adjoint(gram_Y.apply(np.asarray(data, dtype=float) - y))
    if anchor_weight:
        b = b + (alpha * anchor_weight) * gram_X.apply(np.asarray(f0) - f_k)
    if pen is not None:
        b = b + pen.rhs(b)
    b = P(np.asarray(b, dtype=np.result_type(b, f_k)))

    delta, it, ratio = conjugate_gradient(normal, b, config.cg_tol, config.cg_max)
    if ratio > config.cg_tol:
        log.warning("CG stopped at %d iterations with relative residual %.2e", it, ratio)
    return f_k + delta, StepInfo(it, ratio, pen.value if pen is not None else 0.0, float(gamma))


def _plateau_reached(hist, fraction):
    if len(hist) < 2:
        return False
    dec = -np.diff(hist)
    return dec[-1] < fraction * dec.max()


def irgnm(op, data, config=None, f0=None, init=None, noise_norm=None, callback=None):
    """Reconstruct ``f`` from ``data = F(f) + noise`` by the IRGNM.

    Parameters
    ----------
    op : operator
        Forward operator following the module protocol.
    data : ndarray
        Observed intensities.
    config : SolverConfig
    f0 : ndarray, optional
        Initial guess and regularization anchor (default zero).
    init : ndarray, optional
        Starting iterate if different from ``f0``.
    noise_norm : float, optional
        Fidelity norm of the noise; enables the discrepancy principle.
    callback : callable, optional
        Called with each per-step record dict.

    Returns
    -------
    ReconResult
    """
    config = config or SolverConfig()
    data = np.asarray(data, dtype=float)
    cons = config.constraints
    cons.check_shape(op.domain_shape)
    if f0 is None:
        f0 = np.zeros(op.domain_shape, dtype=complex)
    f = np.array(f0 if init is None else init, dtype=complex)
    gram_Y = config.fidelity.gramian(data)

    rule = config.stop_rule
    if rule == "auto":
        rule = "discrepancy" if noise_norm is not None else "plateau"
    if rule == "discrepancy" and noise_norm is None:
        raise ValueError("discrepancy principle needs a noise_norm")

    y, A = op.linearize(f)
    hist = [fidelity_residual(y, data, config.fidelity)[0]]
    alphas, gammas, cg_counts, records = [], [], [], []

    if config.alpha0 == "auto":
        alpha = estimate_alpha0(op, f0, data, config.gram_X, gram_Y, cons)
    else:
        alpha = float(config.alpha0)
    alpha0 = alpha
    gamma = 0.0
    if cons.has_sign:
        gamma = alpha0 if config.gamma == "auto" else float(config.gamma)

    def step(alpha, gamma):
        nonlocal f, y, A
        f, info = newton_step_cg(op, f, f0, data, alpha, config, gamma,
                                 linearization=(y, A), gram_Y=gram_Y)
        y, A = op.linearize(f)
        hist.append(fidelity_residual(y, data, config.fidelity)[0])
        alphas.append(alpha)
        gammas.append(gamma)
        cg_counts.append(info.cg_iterations)
        rec = {
            "step": len(hist) - 1, "alpha": alpha, "gamma": gamma,
            "cg": info.cg_iterations, "cg_ratio": info.cg_residual_ratio,
            "residual": hist[-1], "penalty": info.penalty,
        }
        records.append(rec)
        log.info("step %(step)d: alpha=%(alpha).3e cg=%(cg)d residual=%(residual).4e", rec)
        if callback is not None:
            callback(rec)

    reason = None
    while True:
        k = len(hist) - 1
        if hist[-1] == 0:
            reason = "zero_residual"
        elif rule == "discrepancy" and hist[-1] <= config.tau * noise_norm:
            reason = "discrepancy"
        elif rule == "plateau" and _plateau_reached(hist, config.plateau_fraction):
            reason = "plateau"
        elif k >= config.max_newton:
            reason = "max_iter"
        if reason is not None:
            break
        w = config.divergence_window
        if w and len(hist) > w and all(np.diff(hist[-w - 1:]) > 0):
            result = ReconResult(f, hist, alphas, gammas, cg_counts, "diverged", noise_norm, records)
            raise DivergenceError(
                f"residual increased in {w} consecutive Newton steps (k={k}); "
                "the problem may be too nonlinear or the adjoint is wrong", result)
        step(alpha, gamma)
        alpha *= config.alpha_reduction

    if cons.has_sign and gamma > 0 and reason != "zero_residual":
        for _ in range(config.endgame_steps):
            gamma *= config.endgame_factor
            step(alpha, gamma)

    return ReconResult(f, hist, alphas, gammas, cg_counts, reason, noise_norm, records,
                       extra={"alpha0": alpha0})
