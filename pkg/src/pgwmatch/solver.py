"""Partial optimal transport solver.

Minimises ``<L(Cs, Ct, T), T> + alpha <K, T>`` over the partial coupling
polytope ``{T >= 0, T 1 <= mu_s, T^T 1 <= mu_t, 1^T T 1 = b}`` with proximal
point iterations. Each proximal subproblem is solved by mirror (KL) projected
gradient steps, and each KL projection onto the polytope is computed by
cycling the closed-form projections onto the three constraint sets.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numba
import numpy as np

from pgwmatch.errors import NumericalError, ValidationError

EXP_CLAMP = 50.0


@dataclass(frozen=True)
class PartialCouplingSpec:
    """Marginal upper bounds and the transported mass ``b``."""

    mu_s: np.ndarray
    mu_t: np.ndarray
    b: float

    def __post_init__(self):
        mu_s = np.asarray(self.mu_s, dtype=float)
        mu_t = np.asarray(self.mu_t, dtype=float)
        if mu_s.ndim != 1 or mu_t.ndim != 1:
            raise ValidationError("marginals must be vectors")
        if np.any(mu_s < 0) or np.any(mu_t < 0):
            raise ValidationError("marginals must be nonnegative")
        if not 0 < self.b <= 1:
            raise ValidationError(f"b must lie in (0, 1], got {self.b}")
        if self.b > min(mu_s.sum(), mu_t.sum()) + 1e-12:
            raise ValidationError(f"b={self.b} exceeds the available mass")
        object.__setattr__(self, "mu_s", mu_s)
        object.__setattr__(self, "mu_t", mu_t)
        object.__setattr__(self, "b", float(self.b))

    @property
    def shape(self) -> tuple[int, int]:
        return self.mu_s.shape[0], self.mu_t.shape[0]

    def initial_plan(self) -> np.ndarray:
        """Product coupling rescaled to mass ``b``."""
        t = np.outer(self.mu_s, self.mu_t)
        return t * (self.b / t.sum())


@dataclass(frozen=True)
class SolverConfig:
    gamma: float = 0.01
    tau: float = 5.0
    outer_iters: int = 20
    pgd_iters: int = 10
    proj_cycles: int = 20000
    tol: float = 1e-6
    proj_step_tol: float = 1e-5
    floor: float = 1e-30
    max_backtracks: int = 8

    def __post_init__(self):
        for name in ("gamma", "tau", "outer_iters", "pgd_iters", "proj_cycles", "tol", "proj_step_tol", "floor"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"solver.{name} must be positive, got {getattr(self, name)}")
        if self.max_backtracks < 0:
            raise ValidationError("solver.max_backtracks must be nonnegative")


@dataclass(frozen=True)
class LossFactorization:
    """Element-wise loss written as ``l(a, b) = d1(a) + d2(b) - h1(a) h2(b)``.

    The derivative fields are used for gradients with respect to the cost
    matrices.
    """

    d1: Callable
    d2: Callable
    h1: Callable
    h2: Callable
    d1_prime: Callable
    d2_prime: Callable
    h1_prime: Callable
    h2_prime: Callable

    def loss(self, a, b):
        return self.d1(a) + self.d2(b) - self.h1(a) * self.h2(b)


SQUARE_LOSS = LossFactorization(
    d1=np.square,
    d2=np.square,
    h1=lambda a: a,
    h2=lambda b: 2.0 * b,
    d1_prime=lambda a: 2.0 * a,
    d2_prime=lambda b: 2.0 * b,
    h1_prime=np.ones_like,
    h2_prime=lambda b: np.full_like(b, 2.0),
)


def _check_shapes(cs, ct, t):
    if cs.ndim != 2 or cs.shape[0] != cs.shape[1]:
        raise ValidationError(f"Cs must be square, got {cs.shape}")
    if ct.ndim != 2 or ct.shape[0] != ct.shape[1]:
        raise ValidationError(f"Ct must be square, got {ct.shape}")
    if t.shape != (cs.shape[0], ct.shape[0]):
        raise ValidationError(f"plan shape {t.shape} does not match costs {cs.shape} x {ct.shape}")


def gw_loss_matrix(cs, ct, t, spec: PartialCouplingSpec, fac: LossFactorization = SQUARE_LOSS):
    """Factorised loss matrix ``L_jj' = sum_ii' l(cs_ij, ct_i'j') T_ii'``.

    The two separable terms are weighted by the marginal bounds ``mu_s`` and
    ``mu_t`` rather than by the marginals of ``t``; they coincide whenever
    ``t`` saturates both bounds.
    """
    cs = np.asarray(cs, dtype=float)
    ct = np.asarray(ct, dtype=float)
    t = np.asarray(t, dtype=float)
    _check_shapes(cs, ct, t)
    if spec.shape != t.shape:
        raise ValidationError(f"marginals {spec.shape} do not match plan {t.shape}")
    row = fac.d1(cs).T @ spec.mu_s
    col = fac.d2(ct).T @ spec.mu_t
    return row[:, None] + col[None, :] - fac.h1(cs).T @ t @ fac.h2(ct)


def objective_eval(cs, ct, k_cross, t, alpha, spec, fac: LossFactorization = SQUARE_LOSS) -> float:
    """``<L(Cs, Ct, T), T> + alpha <K, T>``. Pass ``cs=ct=None`` to drop the GW term."""
    t = np.asarray(t, dtype=float)
    value = 0.0
    if cs is not None:
        value += float(np.sum(gw_loss_matrix(cs, ct, t, spec, fac) * t))
    if k_cross is not None and alpha != 0:
        value += alpha * float(np.sum(np.asarray(k_cross) * t))
    return value


def objective_grad(cs, ct, k_cross, t, alpha, spec, fac: LossFactorization = SQUARE_LOSS):
    """Gradient of :func:`objective_eval` with respect to ``t``."""
    grad = np.zeros_like(t)
    if cs is not None:
        h1, h2 = fac.h1(cs), fac.h2(ct)
        row = fac.d1(cs).T @ spec.mu_s
        col = fac.d2(ct).T @ spec.mu_t
        cross = h1.T @ t @ h2
        if np.array_equal(cs, cs.T) and np.array_equal(ct, ct.T):
            cross = 2.0 * cross
        else:
            cross = cross + h1 @ t @ h2.T
        grad += row[:, None] + col[None, :] - cross
    if k_cross is not None and alpha != 0:
        grad += alpha * np.asarray(k_cross)
    return grad


# -- closed-form KL projections ----------------------------------------------


def _capped_ratio(bound, sums):
    ratio = np.ones_like(sums)
    np.divide(bound, sums, out=ratio, where=sums > bound)
    return ratio


def _exact_ratio(bound, sums):
    ratio = np.zeros_like(sums)
    np.divide(bound, sums, out=ratio, where=sums > 0)
    return ratio


def kl_proj_c1(g, mu_s, equality=False):
    """KL projection onto ``{T 1 <= mu_s}``: shrink the rows that overflow.

    With ``equality=True`` project onto ``{T 1 = mu_s}`` instead (zero rows
    stay zero).
    """
    g = np.asarray(g, dtype=float)
    ratio = _exact_ratio if equality else _capped_ratio
    return g * ratio(mu_s, g.sum(axis=1))[:, None]


def kl_proj_c2(g, mu_t, equality=False):
    """KL projection onto ``{T^T 1 <= mu_t}``: shrink the columns that overflow."""
    g = np.asarray(g, dtype=float)
    ratio = _exact_ratio if equality else _capped_ratio
    return g * ratio(mu_t, g.sum(axis=0))[None, :]


def kl_proj_c3(g, b, floor=1e-30):
    """KL projection onto ``{1^T T 1 = b}``: uniform rescaling."""
    g = np.asarray(g, dtype=float)
    total = g.sum()
    if not total > floor:
        raise NumericalError("vanished plan: total mass is not positive")
    return g * (b / total)


def constraint_residuals(t, spec: PartialCouplingSpec) -> tuple[float, float, float]:
    """Violation of the row bound, column bound and total-mass constraints."""
    r1 = max(float(np.max(t.sum(axis=1) - spec.mu_s)), 0.0)
    r2 = max(float(np.max(t.sum(axis=0) - spec.mu_t)), 0.0)
    r3 = abs(float(t.sum()) - spec.b)
    return r1, r2, r3


@dataclass
class ProjectionResult:
    plan: np.ndarray
    residual: float
    cycles: int
    converged: bool


def periodic_projection(g0, spec: PartialCouplingSpec, cfg: SolverConfig = SolverConfig()) -> ProjectionResult:
    """KL projection onto the partial coupling polytope by cycling C1, C2, C3.

    The two inequality sets carry Dykstra corrections, so the cycle converges
    to the KL projection itself rather than to some feasible point. It stops
    when every residual is below ``cfg.tol`` and a full cycle moves less than
    ``cfg.proj_step_tol`` mass. If ``cfg.proj_cycles`` is exhausted the
    iterate with the smallest residual is returned with ``converged=False``.

    When ``b`` equals the whole mass of a marginal, the bound on that side can
    only hold with equality, and the equality projection is used for it. The
    feasible set is unchanged but the cycle converges linearly instead of
    crawling.
    """
    g = np.asarray(g0, dtype=float)
    if np.any(g < 0) or not np.all(np.isfinite(g)):
        raise ValidationError("projection input must be finite and nonnegative")
    mu_s, mu_t, b = spec.mu_s, spec.mu_t, spec.b
    u, v, res, cycles = _cycle_scalings(
        np.ascontiguousarray(g), mu_s, mu_t, b,
        b >= mu_s.sum() - 1e-12, b >= mu_t.sum() - 1e-12,
        cfg.tol, cfg.proj_step_tol, cfg.floor, cfg.proj_cycles,
    )
    if res < 0:
        raise NumericalError("vanished plan: total mass is not positive")
    return ProjectionResult(u[:, None] * g * v[None, :], float(res), int(cycles), bool(res < cfg.tol))


@numba.njit(cache=True)
def _cycle_scalings(g, mu_s, mu_t, b, exact_rows, exact_cols, tol, step_tol, floor, max_cycles):
    # every projection rescales rows or columns, so the iterate is always
    # diag(u) g diag(v); one cycle needs two matrix-vector products.
    # p and q are the Dykstra corrections of the two inequality sets; the
    # cycle stops once it is feasible and moves less than step_tol mass
    n, m = g.shape
    u = np.ones(n)
    v = np.ones(m)
    p = np.ones(n)
    q = np.ones(m)
    rows = g @ v
    best_u, best_v, best_res = u.copy(), v.copy(), np.inf
    for cycle in range(1, max_cycles + 1):
        step = 0.0
        for i in range(n):
            s = rows[i] * p[i]
            if exact_rows:
                r = mu_s[i] / s if s > 0 else 0.0
                new = u[i] * p[i] * r
            else:
                r = mu_s[i] / s if s > mu_s[i] else 1.0
                new = u[i] * p[i] * r
                p[i] = 1.0 / r
            if u[i] > 0:
                step += abs(new / u[i] - 1.0) * rows[i]
            u[i] = new
        cols = v * (g.T @ u)
        for j in range(m):
            s = cols[j] * q[j]
            if exact_cols:
                r = mu_t[j] / s if s > 0 else 0.0
            else:
                r = mu_t[j] / s if s > mu_t[j] else 1.0
            f = q[j] * r
            if not exact_cols:
                q[j] = 1.0 / r
            step += abs(f - 1.0) * cols[j]
            v[j] *= f
            cols[j] *= f
        total = cols.sum()
        if not total > floor:
            return u, v, -1.0, cycle
        step += abs(b - total)
        u *= b / total
        cols *= b / total
        rows = u * (g @ v)
        res = max((rows - mu_s).max(), (cols - mu_t).max(), abs(rows.sum() - b), 0.0)
        if res < tol and step < step_tol:
            return u, v, res, cycle
        if res < best_res:
            best_res = res
            best_u[:] = u
            best_v[:] = v
    return best_u, best_v, best_res, max_cycles


def pgd_step(t, t_anchor, grad, spec, cfg: SolverConfig = SolverConfig(), tau=None) -> ProjectionResult:
    """One KL mirror step on the proximal objective followed by the projection.

    ``grad`` is the gradient of the unregularised objective at ``t``; the
    proximal term contributes ``gamma (log t - log t_anchor)``.
    """
    tau = cfg.tau if tau is None else tau
    log_t = np.log(np.maximum(t, cfg.floor))
    log_anchor = np.log(np.maximum(t_anchor, cfg.floor))
    full_grad = grad + cfg.gamma * (log_t - log_anchor)
    if not np.all(np.isfinite(full_grad)):
        raise NumericalError("non-finite gradient in transport step")
    g0 = np.maximum(t, cfg.floor) * np.exp(np.clip(-tau * full_grad, -EXP_CLAMP, EXP_CLAMP))
    return periodic_projection(g0, spec, cfg)


def proximal_solve(
    cs,
    ct,
    k_cross,
    alpha,
    spec: PartialCouplingSpec,
    cfg: SolverConfig = SolverConfig(),
    t_init=None,
    fac: LossFactorization = SQUARE_LOSS,
    log: bool = False,
):
    """Solve the partial transport subproblem by proximal point iterations.

    Parameters
    ----------
    cs, ct : ndarray or None
        Intra-graph cost matrices. ``None`` for both drops the GW term, which
        leaves a partial Wasserstein problem with cost ``alpha * k_cross``.
    k_cross : ndarray or None
        Cross-graph unary cost.
    alpha : float
        Weight of the unary term.
    t_init : ndarray, optional
        Feasible starting plan. Defaults to the product coupling at mass b.
    log : bool
        If True also return a dict with the per-outer-iteration objective
        values, a per-inner-step trace and convergence flags.

    Returns
    -------
    T : ndarray
    log : dict, only if ``log`` is True
    """
    if (cs is None) != (ct is None):
        raise ValidationError("cs and ct must be given together")
    if cs is not None:
        cs = np.asarray(cs, dtype=float)
        ct = np.asarray(ct, dtype=float)
        _check_shapes(cs, ct, np.empty(spec.shape))
    if k_cross is not None:
        k_cross = np.asarray(k_cross, dtype=float)
        if k_cross.shape != spec.shape:
            raise ValidationError(f"cross cost shape {k_cross.shape} does not match {spec.shape}")

    t = spec.initial_plan() if t_init is None else np.asarray(t_init, dtype=float)
    if max(constraint_residuals(t, spec)) >= cfg.tol:
        t = periodic_projection(t, spec, cfg).plan

    def f(x):
        return objective_eval(cs, ct, k_cross, x, alpha, spec, fac)

    def grad(x):
        return objective_grad(cs, ct, k_cross, x, alpha, spec, fac)

    value = f(t)
    objectives = [value]
    trace = []
    all_converged = True
    tau = cfg.tau
    for outer in range(cfg.outer_iters):
        anchor = t
        for _ in range(cfg.max_backtracks + 1):
            x = anchor
            rows = []
            ok = True
            for inner in range(cfg.pgd_iters):
                res = pgd_step(x, anchor, grad(x), spec, cfg, tau=tau)
                x = res.plan
                ok &= res.converged
                if log:
                    rows.append((outer, inner, f(x), *constraint_residuals(x, spec)))
            new_value = f(x)
            # descent safeguard: halve the step if the outer iterate got worse
            if new_value <= value + 1e-12 * max(1.0, abs(value)):
                break
            tau *= 0.5
        else:
            break
        all_converged &= ok
        trace.extend(rows)
        change = np.abs(x - t).sum()
        t, value = x, new_value
        objectives.append(value)
        if change < cfg.tol * spec.b:
            break

    if log:
        return t, {"objective": objectives, "trace": trace, "converged": all_converged, "tau": tau}
    return t
