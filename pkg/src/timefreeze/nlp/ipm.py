"""Primal-dual interior-point solver with a line-search filter.

Inequalities receive slacks (c_ineq(x) + s = 0, s >= 0); bounded variables
and slacks carry logarithmic barrier terms.  Each barrier subproblem is
attacked with Newton steps on the reduced primal-dual KKT system:

* sparse LU factorization of the (symmetric, possibly indefinite) KKT matrix,
* inertia-free regularization: the primal diagonal is shifted by delta_w,
  bumped and retried whenever factorization fails or the step fails a
  positive-curvature test,
* a filter line search (theta = constraint violation, phi = barrier
  objective) with Armijo switching and one second-order correction round,
* fraction-to-the-boundary stepping, safeguarded multiplier updates,
* monotone barrier reduction mu <- max(tol/10, min(kappa_mu mu, mu^theta_mu)).

When the problem supplies no Lagrangian Hessian a damped dense BFGS estimate
stands in, which is plenty for small problems; large transcriptions are
expected to provide exact curvature.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .problem import NlpProblem

_STATUSES = ("converged", "max-iter", "regularization-failure")


@dataclass
class IpmOptions:
    tol: float = 1e-8
    mu0: float = 0.1
    max_iter: int = 300
    kappa_mu: float = 0.2        # linear barrier shrink factor
    theta_mu: float = 1.5        # superlinear barrier shrink exponent
    kappa_eps: float = 10.0      # subproblem is "solved" at E_mu <= kappa_eps * mu
    tau_min: float = 0.99        # fraction-to-the-boundary floor
    gamma_theta: float = 1e-5
    gamma_phi: float = 1e-5
    eta_phi: float = 1e-4        # Armijo constant
    s_phi: float = 2.3           # switching-condition exponents
    s_theta: float = 1.1
    delta_sw: float = 1.0
    alpha_min: float = 1e-12
    bound_push: float = 1e-2     # relative interior push for x0
    kappa_sigma: float = 1e10    # multiplier safeguard width
    delta_w_min: float = 1e-8
    delta_w_max: float = 1e10
    s_max: float = 100.0         # residual scaling cap
    max_soc: int = 2
    lam_init_max: float = 1e3    # reject least-squares duals larger than this
    max_primal_step: float = np.inf   # cap on ||alpha * dx||_inf per iteration
    delta_c_floor: float = 0.0   # unconditional dual regularization
    feas_restore: bool = False   # Gauss-Newton feasibility rescue when theta stalls
    mu_min: Optional[float] = None    # barrier floor; None means tol / 10
    theta_cap: float = np.inf    # absolute ceiling on the filter's theta_max
    dual_rescue: bool = False    # re-derive multipliers after a dual explosion
    dual_step_cap: float = np.inf    # relative cap on ||(dlam, dnu)||_inf
    max_dir_norm: float = np.inf     # reject directions with ||dx||_inf above this
    delta_w_floor: float = 0.0   # unconditional primal regularization
    corrector: bool = True       # second-order correction when the step jams
    # slack-correction depth scales with mu (catches wall chases before the
    # dual freezes the coordinate); 0 keeps the fixed 1e-11 threshold
    slack_crash_scale: float = 0.0
    # let mid-run dual rescues adopt a least-squares fit past lam_init_max;
    # right for well-posed problems whose row scaling makes big duals honest,
    # wrong for degenerate ones where magnitude means rank loss
    rescue_large_duals: bool = False
    verbose: bool = False


@dataclass
class IpmResult:
    x: np.ndarray
    f: float
    status: str
    iterations: int
    kkt_error: float
    constraint_violation: float
    mu: float
    lam_eq: np.ndarray
    lam_ineq: np.ndarray
    z_lower: np.ndarray
    z_upper: np.ndarray
    message: str = ""
    wall_time: float = 0.0
    # one row per iteration: (mu, kkt_error, theta, f, alpha, delta_w)
    log: list = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.status == "converged"


class _Iterate:
    """Mutable bundle of primal and dual state plus cached evaluations."""

    def __init__(self, p: NlpProblem, x, s, lam, nu, z_l, z_u, z_s):
        self.p = p
        self.x = x
        self.s = s
        self.lam = lam
        self.nu = nu
        self.z_l = z_l
        self.z_u = z_u
        self.z_s = z_s
        self.refresh()

    def refresh(self):
        p = self.p
        self.fval, self.grad = p.f_grad(self.x)
        self.c_eq, self.J_eq = p.eq_jac(self.x)
        self.c_in, self.J_in = p.ineq_jac(self.x)

    def theta(self) -> float:
        return float(np.sum(np.abs(self.c_eq)) + np.sum(np.abs(self.c_in + self.s)))


def _interior_start(x0, lb, ub, push):
    x = np.asarray(x0, dtype=float).copy()
    fin_l, fin_u = np.isfinite(lb), np.isfinite(ub)
    p_l = np.where(fin_l, push * np.maximum(1.0, np.abs(lb)), 0.0)
    p_u = np.where(fin_u, push * np.maximum(1.0, np.abs(ub)), 0.0)
    both = fin_l & fin_u
    width = np.where(both, ub - lb, np.inf)
    p_l = np.minimum(p_l, 0.5 * width)
    p_u = np.minimum(p_u, 0.5 * width)
    lo = np.where(fin_l, lb + p_l, -np.inf)
    hi = np.where(fin_u, ub - p_u, np.inf)
    return np.clip(x, lo, hi)


def _least_squares_duals(p: NlpProblem, x, z_l, z_u, opt, allow_large=False):
    """Multipliers fitting stationarity at x in the least-squares sense.

    Without this, an equality-dominated problem starts from a zero-curvature
    Lagrangian Hessian and the first Newton steps are unguided.  At a cold
    start an estimate whose magnitude blows past lam_init_max says more about
    degeneracy than about the duals, so it is discarded in favor of zeros.
    Mid-run rescues pass allow_large instead: rows that carry a step-size
    factor have adjoints of order 1/h, the magnitude is real, and replacing a
    tight fit with zeros would strand the iterate entirely.
    """
    m_eq, m_in = p.n_eq, p.n_ineq
    lam = np.zeros(m_eq)
    nu = np.zeros(m_in)
    if m_eq + m_in == 0:
        return lam, nu
    _, g = p.f_grad(x)
    mats = []
    if m_eq:
        mats.append(p.eq_jac(x)[1])
    if m_in:
        mats.append(p.ineq_jac(x)[1])
    jac = sparse.vstack(mats).tocsr()
    rhs = -(g - z_l + z_u)
    # damped normal equations, solved directly: iterative least squares
    # (lsqr and friends) crawls on these Jacobians and a half-fit dual
    # estimate is worse than none at all.  The ladder stops at the first
    # modest fit; failing that it keeps the smallest finite one.
    scale = max(1.0, float(jac.multiply(jac).sum()) / jac.shape[0])
    sol = None
    for damp in (1e-12, 1e-9, 1e-6, 1e-3):
        try:
            mat = (jac @ jac.T + damp * scale * sparse.eye(jac.shape[0])).tocsc()
            cand = splu(mat).solve(jac @ rhs)
        except RuntimeError:
            continue
        if not np.all(np.isfinite(cand)):
            continue
        if not allow_large or np.abs(cand).max() <= opt.lam_init_max:
            sol = cand
            break
        if sol is None or np.abs(cand).max() < np.abs(sol).max():
            sol = cand
    if sol is None or (not allow_large and np.abs(sol).max() > opt.lam_init_max):
        return lam, nu
    lam = sol[:m_eq]
    # cone-feasible inequality duals; clipping spoils the fit slightly but a
    # negative initial nu points the barrier the wrong way entirely
    nu = np.maximum(sol[m_eq:], 0.0)
    return lam, nu


def _recenter_bound_duals(p: NlpProblem, it, mu: float) -> None:
    """Pull crashed coordinates off their walls and reset the bound and slack
    duals to the barrier-centered values mu/d.

    A variable that overshoots the central path onto its bound deadlocks the
    iteration: the centered dual mu/d explodes, the primal-dual diagonal z/d
    freezes the coordinate in place, and no (lam, nu) can patch stationarity.
    Nudging it back to a distance of order mu costs a little feasibility
    (the filter is reset by the caller anyway) and dissolves the lock.

    A trashed z makes stationarity unfittable by any (lam, nu), so a multiplier
    refit would change nothing without this step.
    """
    lb, ub = p.lb, p.ub
    fin_l, fin_u = np.isfinite(lb), np.isfinite(ub)
    width = np.where(fin_l & fin_u, ub - lb, np.inf)
    d_min = np.minimum(0.1 * mu, 0.25 * width)
    it.x = np.where(fin_l, np.maximum(it.x, lb + d_min), it.x)
    it.x = np.where(fin_u, np.minimum(it.x, ub - d_min), it.x)
    if p.n_ineq:
        it.s = np.maximum(it.s, np.minimum(0.1 * mu, 1.0))
    it.refresh()
    d_l = np.where(fin_l, it.x - lb, 1.0)
    d_u = np.where(fin_u, ub - it.x, 1.0)
    it.z_l = np.where(fin_l, np.clip(mu / d_l, 1e-8, 1e8), 0.0)
    it.z_u = np.where(fin_u, np.clip(mu / d_u, 1e-8, 1e8), 0.0)
    if p.n_ineq:
        it.z_s = np.clip(mu / it.s, 1e-8, 1e8)


def solve_nlp(
    problem: NlpProblem,
    x0,
    options: IpmOptions = None,
    lam_eq0=None,
    lam_ineq0=None,
    z_lower0=None,
    z_upper0=None,
) -> IpmResult:
    """Solve the problem from x0; warm multipliers and bound duals are optional.

    Passing bound duals switches to warm-start behavior: the interior push is
    shrunk so a point converged against its bounds is not dragged back into
    the interior, which would throw away exactly the active-set information a
    previous solve paid for.
    """
    opt = options or IpmOptions()
    t0 = time.perf_counter()
    n, m_eq, m_in = problem.n, problem.n_eq, problem.n_ineq
    lb, ub = problem.lb, problem.ub
    fin_l, fin_u = np.isfinite(lb), np.isfinite(ub)

    mu = opt.mu0
    warm_z = z_lower0 is not None and z_upper0 is not None
    push = min(opt.bound_push, 1e-8) if warm_z else opt.bound_push
    x = _interior_start(x0, lb, ub, push)
    lam = None if lam_eq0 is None else np.asarray(lam_eq0, float).copy()
    nu = None if lam_ineq0 is None else np.asarray(lam_ineq0, float).copy()

    c_in0 = problem.ineq(x)
    s = np.maximum(-c_in0, 1e-4)
    if warm_z:
        z_l = np.where(fin_l, np.maximum(np.asarray(z_lower0, float), 1e-8), 0.0)
        z_u = np.where(fin_u, np.maximum(np.asarray(z_upper0, float), 1e-8), 0.0)
    else:
        z_l = np.where(fin_l, np.clip(mu / np.where(fin_l, x - lb, 1.0), 1e-8, 1e8), 0.0)
        z_u = np.where(fin_u, np.clip(mu / np.where(fin_u, ub - x, 1.0), 1e-8, 1e8), 0.0)
    if m_in and warm_z and nu is not None:
        # at a KKT point the slack dual coincides with the constraint multiplier
        z_s = np.maximum(nu, 1e-8)
    else:
        z_s = np.clip(mu / s, 1e-8, 1e8) if m_in else np.zeros(0)

    if lam is None or nu is None:
        lam_ls, nu_ls = _least_squares_duals(problem, x, z_l, z_u, opt)
        lam = lam_ls if lam is None else lam
        nu = nu_ls if nu is None else nu

    it = _Iterate(problem, x, s, lam, nu, z_l, z_u, z_s)
    bfgs = _BfgsState(n, it) if problem.lag_hess is None else None

    theta0 = it.theta()
    theta_max = min(1e4 * max(1.0, theta0), max(opt.theta_cap, 10.0 * theta0))
    theta_min_sw = 1e-4 * max(1.0, theta0)
    filt: list[tuple[float, float]] = [(theta_max, -np.inf)]
    mu_floor = max(opt.tol / 10.0, opt.mu_min if opt.mu_min is not None else 0.0)

    delta_w_last = 0.0
    log = []
    status, message = "max-iter", "iteration limit reached"
    k = 0
    stall = 0
    err_floor = np.inf
    last_rescue = -(10 ** 9)
    for k in range(opt.max_iter):
        err_0 = _kkt_error(problem, it, 0.0, opt.s_max)
        if err_0 <= opt.tol:
            status, message = "converged", f"KKT error {err_0:.3e} <= tol"
            break
        # a single degenerate step can launch the multipliers to where no
        # line search recovers them; re-derive them from scratch instead
        if (
            opt.dual_rescue
            and k - last_rescue > 10
            and err_0 > max(1e4, 100.0 * err_floor)
        ):
            _recenter_bound_duals(problem, it, mu)
            it.lam, it.nu = _least_squares_duals(
                problem, it.x, it.z_l, it.z_u, opt,
                allow_large=opt.rescue_large_duals,
            )
            filt = [(theta_max, -np.inf)]
            last_rescue = k
            err_floor = np.inf
            log.append((mu, err_0, it.theta(), it.fval, 0.0, -2.0))
            if opt.verbose:
                print(f"[ipm {k:3d}] dual rescue after E0={err_0:.2e}")
            continue
        err_floor = min(err_floor, err_0)

        # barrier subproblem bookkeeping
        while mu > mu_floor and _kkt_error(problem, it, mu, opt.s_max) <= opt.kappa_eps * mu:
            # the superlinear jump is earned, not scheduled: land on mu^theta
            # only if the iterate is already centered there, else one linear
            # step; a blind jump drops the barrier out from under an iterate
            # whose active set is still moving
            cand = max(mu_floor, min(opt.kappa_mu * mu, mu ** opt.theta_mu))
            if cand < opt.kappa_mu * mu and not (
                _kkt_error(problem, it, cand, opt.s_max) <= opt.kappa_eps * cand
            ):
                cand = max(mu_floor, opt.kappa_mu * mu)
            mu = cand
            filt = [(theta_max, -np.inf)]
        if (
            mu_floor > opt.tol / 10.0 * (1.0 + 1e-12)
            and mu <= mu_floor * (1.0 + 1e-12)
            and _kkt_error(problem, it, mu, opt.s_max) <= opt.kappa_eps * mu
        ):
            status, message = (
                "converged",
                f"centered at the barrier floor mu = {mu:.1e}",
            )
            break

        tau = max(opt.tau_min, 1.0 - mu)
        step = _newton_direction(problem, it, mu, delta_w_last, opt, bfgs)
        if step is None:
            status, message = (
                "regularization-failure",
                f"KKT regularization exceeded {opt.delta_w_max:.1e}",
            )
            break
        dx, ds, dlam, dnu, delta_w, lu, hxx = step
        if delta_w > 0.0:
            delta_w_last = delta_w
        if np.isfinite(opt.dual_step_cap):
            # near-degenerate constraint blocks send the multiplier step off
            # along a near-null direction; the filter never sees the duals, so
            # shrinking their step costs nothing and prevents zombie iterates
            d_norm = max(
                float(np.max(np.abs(dlam), initial=0.0)),
                float(np.max(np.abs(dnu), initial=0.0)),
            )
            d_cap = opt.dual_step_cap * max(
                1.0,
                float(np.max(np.abs(it.lam), initial=0.0)),
                float(np.max(np.abs(it.nu), initial=0.0)),
            )
            if d_norm > d_cap:
                dlam *= d_cap / d_norm
                dnu *= d_cap / d_norm

        x_old, s_old = it.x.copy(), it.s.copy()
        if bfgs is not None:
            bfgs.capture(it)
        ok, alpha, n_soc = _filter_line_search(
            problem, it, filt, mu, tau, dx, ds, dlam, dnu, lu, opt,
            theta_max, theta_min_sw,
        )
        if not ok:
            # direction unusable even at tiny steps: sharpen regularization
            bumped = _newton_direction(
                problem, it, mu, max(10.0 * max(delta_w, opt.delta_w_min), opt.delta_w_min),
                opt, bfgs, force_delta=True,
            )
            if bumped is not None:
                dx, ds, dlam, dnu, delta_w, lu, hxx = bumped
                delta_w_last = delta_w
                ok, alpha, n_soc = _filter_line_search(
                    problem, it, filt, mu, tau, dx, ds, dlam, dnu, lu, opt,
                    theta_max, theta_min_sw,
                )
            if not ok and opt.dual_rescue and k - last_rescue > 5:
                # the search can starve without the multipliers ever reaching
                # the explosion threshold: moderately wrong duals turn every
                # Newton direction into barrier ascent and the filter pins the
                # iterate in place; rebuilding the duals is cheaper than giving
                # up and usually unjams it
                _recenter_bound_duals(problem, it, mu)
                it.lam, it.nu = _least_squares_duals(
                    problem, it.x, it.z_l, it.z_u, opt,
                    allow_large=opt.rescue_large_duals,
                )
                del filt[:]
                filt.append((theta_max, -np.inf))
                last_rescue = k
                err_floor = np.inf
                log.append((mu, err_0, it.theta(), it.fval, 0.0, -2.0))
                if opt.verbose:
                    print(f"[ipm {k:3d}] dual rescue after stalled line search")
                continue
            if not ok and opt.feas_restore:
                if _feasibility_restore(problem, it, opt, mu):
                    # the filter's memory belongs to the abandoned region
                    del filt[:]
                    filt.append((theta_max, -np.inf))
                    log.append((mu, err_0, it.theta(), it.fval, 0.0, -1.0))
                    if opt.verbose:
                        print(
                            f"[ipm {k:3d}] restoration -> th={it.theta():.2e}"
                        )
                    continue
            if not ok:
                status, message = (
                    "regularization-failure",
                    "filter line search failed at alpha_min"
                    if bumped is not None
                    else "line search failed and regularization is exhausted",
                )
                break

        _update_duals(
            it, mu, tau, x_old, s_old, alpha * dx, alpha * ds, fin_l, fin_u, lb, ub, opt
        )
        # slack correction: a coordinate that overshoots onto its wall leaves
        # the quadratic model's trust region, the centered dual mu/d explodes,
        # and the primal-dual diagonal z/d freezes it there for good; restart
        # it a healthy distance inside with a unit-scale dual instead.  An
        # honest active bound settles at mu/z with z near its multiplier, so
        # anything far below mu is a chase, not an active set
        d_crash = max(1e-11, opt.slack_crash_scale * mu)
        push = max(mu, 1e-9)
        crash_l = fin_l & (it.x - lb < d_crash)
        crash_u = fin_u & (ub - it.x < d_crash)
        if crash_l.any() or crash_u.any():
            width = np.where(fin_l & fin_u, ub - lb, np.inf)
            p_x = np.minimum(push, 0.25 * width)
            it.x = np.where(crash_l, lb + p_x, it.x)
            it.x = np.where(crash_u, ub - p_x, it.x)
            it.z_l = np.where(crash_l, mu / p_x, it.z_l)
            it.z_u = np.where(crash_u, mu / p_x, it.z_u)
            it.refresh()
        if m_in:
            crash_s = it.s < d_crash
            if crash_s.any():
                it.s = np.where(crash_s, push, it.s)
                it.z_s = np.where(crash_s, mu / push, it.z_s)
        if bfgs is not None:
            bfgs.update(it)
        log.append((mu, err_0, it.theta(), it.fval, alpha, delta_w))
        if opt.verbose:
            print(
                f"[ipm {k:3d}] mu={mu:.1e} E0={err_0:.2e} th={it.theta():.2e} "
                f"f={it.fval:.6e} a={alpha:.2e} dw={delta_w:.1e} soc={n_soc}"
            )
        # creeping steps that leave the infeasibility high mean the filter is
        # fighting the barrier far from the constraint manifold; pull back
        stalled = alpha < 1e-2 and it.theta() > 1e3 * opt.tol
        stall = stall + 1 if stalled else 0
        if opt.feas_restore and stall >= 6:
            if _feasibility_restore(problem, it, opt, mu):
                del filt[:]
                filt.append((theta_max, -np.inf))
                log.append((mu, err_0, it.theta(), it.fval, 0.0, -1.0))
                if opt.verbose:
                    print(f"[ipm {k:3d}] restoration -> th={it.theta():.2e}")
            stall = 0
    else:
        k = opt.max_iter

    err_final = _kkt_error(problem, it, 0.0, opt.s_max)
    if status != "converged" and err_final <= opt.tol:
        status, message = "converged", f"KKT error {err_final:.3e} <= tol"
    return IpmResult(
        x=it.x.copy(),
        f=it.fval,
        status=status,
        iterations=k,
        kkt_error=err_final,
        constraint_violation=it.theta(),
        mu=mu,
        lam_eq=it.lam.copy(),
        lam_ineq=it.nu.copy(),
        z_lower=it.z_l.copy(),
        z_upper=it.z_u.copy(),
        message=message,
        wall_time=time.perf_counter() - t0,
        log=log,
    )


# ---------------------------------------------------------------------------
# pieces
# ---------------------------------------------------------------------------


def _kkt_error(p: NlpProblem, it: _Iterate, mu: float, s_max: float) -> float:
    """Scaled optimality error of the barrier problem (mu = 0: the true KKT)."""
    lb, ub = p.lb, p.ub
    fin_l, fin_u = np.isfinite(lb), np.isfinite(ub)
    r_x = it.grad + it.J_eq.T @ it.lam + it.J_in.T @ it.nu - it.z_l + it.z_u
    parts = [np.abs(r_x)]
    comp = []
    if fin_l.any():
        comp.append((it.x[fin_l] - lb[fin_l]) * it.z_l[fin_l] - mu)
    if fin_u.any():
        comp.append((ub[fin_u] - it.x[fin_u]) * it.z_u[fin_u] - mu)
    if p.n_ineq:
        parts.append(np.abs(it.nu - it.z_s))
        comp.append(it.s * it.z_s - mu)
    mult_sum = np.sum(np.abs(it.lam)) + np.sum(np.abs(it.nu))
    z_sum = np.sum(it.z_l) + np.sum(it.z_u) + np.sum(it.z_s)
    n_mult = p.n_eq + p.n_ineq + int(fin_l.sum() + fin_u.sum()) + p.n_ineq
    s_d = max(s_max, (mult_sum + z_sum) / max(1, n_mult)) / s_max
    s_c = max(s_max, z_sum / max(1, int(fin_l.sum() + fin_u.sum()) + p.n_ineq)) / s_max
    e_dual = max(float(np.max(q, initial=0.0)) for q in parts) / s_d
    e_comp = max((float(np.max(np.abs(q), initial=0.0)) for q in comp), default=0.0) / s_c
    e_prim = max(
        float(np.max(np.abs(it.c_eq), initial=0.0)),
        float(np.max(np.abs(it.c_in + it.s), initial=0.0)),
    )
    return max(e_dual, e_prim, e_comp)


def _sigma_terms(it: _Iterate, p: NlpProblem):
    lb, ub = p.lb, p.ub
    fin_l, fin_u = np.isfinite(lb), np.isfinite(ub)
    sig_x = np.zeros(p.n)
    if fin_l.any():
        sig_x[fin_l] += it.z_l[fin_l] / (it.x[fin_l] - lb[fin_l])
    if fin_u.any():
        sig_x[fin_u] += it.z_u[fin_u] / (ub[fin_u] - it.x[fin_u])
    sig_s = it.z_s / it.s if p.n_ineq else np.zeros(0)
    return sig_x, sig_s


def _barrier_gradient(it: _Iterate, p: NlpProblem, mu: float):
    lb, ub = p.lb, p.ub
    fin_l, fin_u = np.isfinite(lb), np.isfinite(ub)
    g_x = it.grad.copy()
    if fin_l.any():
        g_x[fin_l] -= mu / (it.x[fin_l] - lb[fin_l])
    if fin_u.any():
        g_x[fin_u] += mu / (ub[fin_u] - it.x[fin_u])
    g_s = -mu / it.s if p.n_ineq else np.zeros(0)
    return g_x, g_s


def _barrier_value(p: NlpProblem, x, s, fval, mu: float) -> float:
    lb, ub = p.lb, p.ub
    fin_l, fin_u = np.isfinite(lb), np.isfinite(ub)
    out = fval
    if fin_l.any():
        d = x[fin_l] - lb[fin_l]
        if np.any(d <= 0.0):
            return np.inf
        out -= mu * np.sum(np.log(d))
    if fin_u.any():
        d = ub[fin_u] - x[fin_u]
        if np.any(d <= 0.0):
            return np.inf
        out -= mu * np.sum(np.log(d))
    if s.size:
        if np.any(s <= 0.0):
            return np.inf
        out -= mu * np.sum(np.log(s))
    return float(out)


def _corrector_extra(p, it, mu, dx, ds):
    """Second-order complementarity correction terms for the condensed rhs.

    The affine direction linearizes d * z = mu and overshoots into whichever
    bound it approaches; re-solving with the quadratic term restored (estimated
    along the affine step) bends the direction away from the wall.  Same
    factorization, one extra back-substitution.
    """
    lb, ub = p.lb, p.ub
    fin_l, fin_u = np.isfinite(lb), np.isfinite(ub)
    extra_x = np.zeros(p.n)
    if fin_l.any():
        d = it.x[fin_l] - lb[fin_l]
        dz = mu / d - it.z_l[fin_l] - (it.z_l[fin_l] / d) * dx[fin_l]
        extra_x[fin_l] -= dx[fin_l] * dz / d
    if fin_u.any():
        d = ub[fin_u] - it.x[fin_u]
        dz = mu / d - it.z_u[fin_u] + (it.z_u[fin_u] / d) * dx[fin_u]
        extra_x[fin_u] -= dx[fin_u] * dz / d
    extra_s = np.zeros(p.n_ineq)
    if p.n_ineq:
        dzs = mu / it.s - it.z_s - (it.z_s / it.s) * ds
        extra_s = -(ds * dzs) / it.s
    return extra_x, extra_s


def _newton_direction(p, it, mu, delta_seed, opt, bfgs, force_delta=False):
    """Factor the KKT matrix, bumping delta_w until the step has usable curvature.

    Returns (dx, ds, dlam, dnu, delta_w, lu, hxx) or None when regularization
    is exhausted.
    """
    n, m_eq, m_in = p.n, p.n_eq, p.n_ineq
    sig_x, sig_s = _sigma_terms(it, p)
    g_x, g_s = _barrier_gradient(it, p, mu)

    if bfgs is not None:
        hess = sparse.csr_matrix(bfgs.B)
    else:
        hess = p.hessian(it.x, 1.0, it.lam, it.nu)

    rhs = np.concatenate(
        [
            -(g_x + it.J_eq.T @ it.lam + it.J_in.T @ it.nu),
            -(it.nu - mu / it.s) if m_in else np.zeros(0),
            -it.c_eq,
            -(it.c_in + it.s),
        ]
    )

    if force_delta:
        trial_deltas = [max(delta_seed, opt.delta_w_floor)]
    else:
        # the floor keeps the factorization away from the exactly singular
        # matrices a degenerate constraint block produces; the scalar curvature
        # test below cannot reject those because the bad subspace carries no
        # weight in the norm
        first = 0.0 if delta_seed == 0.0 else max(opt.delta_w_min, delta_seed / 3.0)
        trial_deltas = [max(first, opt.delta_w_floor)]
    attempts = 0
    delta_w = trial_deltas[0]
    while True:
        # a floor on the dual regularization keeps near-parallel constraint
        # gradients (degenerate complementarity products) from blowing up the
        # multiplier step; plain LU gives no inertia signal to catch this
        delta_c = max(opt.delta_c_floor, 1e-8 * max(mu, 1e-8) if delta_w > 0.0 else 0.0)
        hxx = (hess + sparse.diags(sig_x + delta_w)).tocsc()
        if m_eq == 0 and m_in == 0:
            kkt = hxx
        elif m_in == 0:
            kkt = sparse.bmat(
                [
                    [hxx, it.J_eq.T],
                    [it.J_eq, -delta_c * sparse.eye(m_eq)],
                ],
                format="csc",
            )
        else:
            e_in = sparse.eye(m_in)
            rows = [
                [hxx, None, it.J_eq.T, it.J_in.T],
                [None, sparse.diags(sig_s + delta_w), None, e_in],
                [it.J_eq, None, -delta_c * sparse.eye(m_eq), None],
                [it.J_in, e_in, None, -delta_c * e_in],
            ]
            if m_eq == 0:
                rows = [[r[0], r[1], r[3]] for r in (rows[0], rows[1], rows[3])]
            kkt = sparse.bmat(rows, format="csc")
        try:
            lu = splu(kkt)
            sol = lu.solve(rhs)
        except RuntimeError:
            sol = None
        if sol is not None and np.all(np.isfinite(sol)):
            resid = kkt @ sol - rhs
            if np.max(np.abs(resid)) > 1e-8 * max(1.0, np.max(np.abs(rhs))):
                sol = sol - lu.solve(resid)
            dx = sol[:n]
            ds = sol[n : n + m_in]
            dlam = sol[n + m_in : n + m_in + m_eq]
            dnu = sol[n + m_in + m_eq :]
            curv = float(dx @ (hxx @ dx))
            if m_in:
                curv += float(ds @ ((sig_s + delta_w) * ds))
            nrm2 = float(dx @ dx + ds @ ds)
            # a gigantic direction is a null-space artifact, not a step: the
            # scalar curvature test cannot see a singular subspace, but the
            # fraction-to-boundary rule would crush alpha to nothing anyway,
            # so damping further loses nothing
            size_ok = (
                not np.isfinite(opt.max_dir_norm)
                or float(np.max(np.abs(dx), initial=0.0)) <= opt.max_dir_norm
            )
            if (curv >= 1e-10 * nrm2 or nrm2 == 0.0) and size_ok:
                # only while infeasible: with theta ~ 0 the filter is in pure
                # Armijo mode and a bent direction can lose the descent
                # property the switching condition demands
                if opt.corrector and nrm2 > 0.0 and it.theta() > max(10 * opt.tol, 1e-8):
                    tau = max(opt.tau_min, 1.0 - mu)
                    a_aff = _primal_alpha_max(p, it, dx, ds, tau)
                    if a_aff < 0.5:
                        ex, es = _corrector_extra(p, it, mu, dx, ds)
                        rhs2 = rhs.copy()
                        rhs2[:n] += ex
                        if m_in:
                            rhs2[n : n + m_in] += es
                        sol2 = lu.solve(rhs2)
                        if np.all(np.isfinite(sol2)):
                            dx2 = sol2[:n]
                            ds2 = sol2[n : n + m_in]
                            curv2 = float(dx2 @ (hxx @ dx2))
                            if m_in:
                                curv2 += float(ds2 @ ((sig_s + delta_w) * ds2))
                            nrm2_2 = float(dx2 @ dx2 + ds2 @ ds2)
                            better = _primal_alpha_max(
                                p, it, dx2, ds2, tau
                            ) > 1.2 * a_aff
                            if better and (curv2 >= 1e-10 * nrm2_2 or nrm2_2 == 0.0):
                                dx, ds = dx2, ds2
                                dlam = sol2[n + m_in : n + m_in + m_eq]
                                dnu = sol2[n + m_in + m_eq :]
                return dx, ds, dlam, dnu, delta_w, lu, hxx
        # bump and retry
        attempts += 1
        if delta_w == 0.0:
            delta_w = opt.delta_w_min * 100.0
        else:
            delta_w *= 8.0 if attempts > 1 else 100.0
        if delta_w > opt.delta_w_max:
            return None


def _max_step_to_boundary(val, dval, tau):
    """Largest alpha in (0, 1] with val + alpha dval >= (1 - tau) val."""
    alpha = 1.0
    neg = dval < 0.0
    if np.any(neg):
        alpha = min(1.0, float(np.min(-tau * val[neg] / dval[neg])))
    return alpha


def _primal_alpha_max(p, it, dx, ds, tau):
    lb, ub = p.lb, p.ub
    fin_l, fin_u = np.isfinite(lb), np.isfinite(ub)
    alpha = 1.0
    if fin_l.any():
        alpha = min(alpha, _max_step_to_boundary(it.x[fin_l] - lb[fin_l], dx[fin_l], tau))
    if fin_u.any():
        alpha = min(alpha, _max_step_to_boundary(ub[fin_u] - it.x[fin_u], -dx[fin_u], tau))
    if ds.size:
        alpha = min(alpha, _max_step_to_boundary(it.s, ds, tau))
    return alpha


def _filter_acceptable(filt, theta, phi, gamma_theta, gamma_phi):
    for th_j, ph_j in filt:
        if not (theta < (1.0 - gamma_theta) * th_j or phi < ph_j - gamma_phi * th_j):
            return False
    return True


def _filter_line_search(
    p, it, filt, mu, tau, dx, ds, dlam, dnu, lu, opt, theta_max, theta_min_sw
):
    """Backtracking filter search; mutates `it` on success.  Returns
    (accepted, alpha, soc_rounds_used)."""
    theta_k = it.theta()
    phi_k = _barrier_value(p, it.x, it.s, it.fval, mu)
    g_x, g_s = _barrier_gradient(it, p, mu)
    dphi = float(g_x @ dx + (g_s @ ds if ds.size else 0.0))

    alpha_max = _primal_alpha_max(p, it, dx, ds, tau)
    if np.isfinite(opt.max_primal_step):
        step_inf = float(np.abs(dx).max(initial=0.0))
        if step_inf > 0.0:
            alpha_max = min(alpha_max, opt.max_primal_step / step_inf)
    alpha = alpha_max
    n_soc_used = 0
    while alpha >= opt.alpha_min:
        x_t = it.x + alpha * dx
        s_t = it.s + alpha * ds
        f_t = p.f(x_t)
        c_eq_t = p.eq(x_t)
        c_in_t = p.ineq(x_t)
        theta_t = float(np.sum(np.abs(c_eq_t)) + np.sum(np.abs(c_in_t + s_t)))
        phi_t = _barrier_value(p, x_t, s_t, f_t, mu)

        accepted, f_type = _trial_ok(
            opt, filt, theta_k, phi_k, dphi, alpha, theta_t, phi_t,
            theta_max, theta_min_sw,
        )
        if not accepted and alpha == alpha_max and theta_t >= theta_k and opt.max_soc:
            x_t, s_t, theta_t, phi_t, f_t, soc_ok = _second_order_correction(
                p, it, mu, tau, alpha, dx, ds, lu, opt,
            )
            n_soc_used = 1
            if soc_ok:
                accepted, f_type = _trial_ok(
                    opt, filt, theta_k, phi_k, dphi, alpha, theta_t, phi_t,
                    theta_max, theta_min_sw,
                )
        if accepted:
            if not f_type:
                filt.append(
                    ((1.0 - opt.gamma_theta) * theta_k, phi_k - opt.gamma_phi * theta_k)
                )
            it.x = x_t
            it.s = s_t
            it.lam = it.lam + alpha * dlam
            it.nu = it.nu + alpha * dnu
            it.refresh()
            return True, alpha, n_soc_used
        alpha *= 0.5
    return False, 0.0, n_soc_used


def _trial_ok(opt, filt, theta_k, phi_k, dphi, alpha, theta_t, phi_t,
              theta_max, theta_min_sw):
    """Filter + switching/Armijo acceptance.  Returns (accepted, f_type)."""
    if not np.isfinite(phi_t) or theta_t > theta_max:
        return False, False
    if not _filter_acceptable(
        filt + [(theta_k, phi_k)], theta_t, phi_t, opt.gamma_theta, opt.gamma_phi
    ):
        return False, False
    switching = (
        dphi < 0.0
        and alpha * (-dphi) ** opt.s_phi > opt.delta_sw * theta_k ** opt.s_theta
    )
    if theta_k <= theta_min_sw and switching:
        return phi_t <= phi_k + opt.eta_phi * alpha * dphi, True
    return True, False


def _second_order_correction(p, it, mu, tau, alpha, dx, ds, lu, opt):
    """One corrective solve with the stored factorization to cancel the
    constraint curvature picked up along the step."""
    n, m_eq, m_in = p.n, p.n_eq, p.n_ineq
    x_t = it.x + alpha * dx
    s_t = it.s + alpha * ds
    c_eq_soc = alpha * it.c_eq + p.eq(x_t)
    c_in_soc = alpha * (it.c_in + it.s) + p.ineq(x_t) + s_t if m_in else np.zeros(0)
    rhs = np.concatenate([np.zeros(n + m_in), -c_eq_soc, -c_in_soc])
    try:
        sol = lu.solve(rhs)
    except RuntimeError:
        return x_t, s_t, np.inf, np.inf, np.inf, False
    if not np.all(np.isfinite(sol)):
        return x_t, s_t, np.inf, np.inf, np.inf, False
    dx_c, ds_c = sol[:n], sol[n : n + m_in]
    alpha_c = _primal_alpha_max(p, it, alpha * dx + dx_c, alpha * ds + ds_c, tau)
    x_c = it.x + alpha_c * (alpha * dx + dx_c)
    s_c = it.s + alpha_c * (alpha * ds + ds_c)
    f_c = p.f(x_c)
    c_eq_c = p.eq(x_c)
    c_in_c = p.ineq(x_c)
    theta_c = float(np.sum(np.abs(c_eq_c)) + np.sum(np.abs(c_in_c + s_c)))
    phi_c = _barrier_value(p, x_c, s_c, f_c, mu)
    return x_c, s_c, theta_c, phi_c, f_c, True


def _feasibility_restore(p, it, opt, mu, max_gn=20):
    """Gauss-Newton descent on the squared constraint residual in (x, s).

    A rescue for the filter search, not an optimality phase: it ignores the
    objective entirely and pulls the iterate back toward the constraint
    manifold, staying strictly inside bounds.  Returns True when the
    infeasibility measure dropped enough to be worth resuming from.
    """
    n, m_eq, m_in = p.n, p.n_eq, p.n_ineq
    lb, ub = p.lb, p.ub
    fin_l, fin_u = np.isfinite(lb), np.isfinite(ub)
    theta_start = it.theta()
    if theta_start <= 0.0:
        return False
    x, s = it.x.copy(), it.s.copy()
    c_eq, J_eq = it.c_eq, it.J_eq
    c_in, J_in = it.c_in, it.J_in
    improved = False
    for _ in range(max_gn):
        if m_in:
            jac = sparse.bmat(
                [[J_eq, None], [J_in, sparse.eye(m_in)]], format="csc"
            )
            r = np.concatenate([c_eq, c_in + s])
        else:
            jac = J_eq.tocsc()
            r = c_eq
        normal = (jac.T @ jac).tocsc()
        reg = 1e-10 * max(1.0, normal.diagonal().max())
        normal += reg * sparse.eye(n + m_in, format="csc")
        try:
            d = splu(normal).solve(-jac.T @ r)
        except RuntimeError:
            break
        if not np.all(np.isfinite(d)):
            break
        dx, ds = d[:n], d[n:]
        # stay strictly interior: fraction-to-boundary at a mild tau
        alpha = 1.0
        for val, dval, fin in (
            (x - lb, dx, fin_l),
            (ub - x, -dx, fin_u),
        ):
            msk = fin & (dval < 0.0)
            if msk.any():
                alpha = min(alpha, float(np.min(-0.99 * val[msk] / dval[msk])))
        if m_in:
            msk = ds < 0.0
            if msk.any():
                alpha = min(alpha, float(np.min(-0.99 * s[msk] / ds[msk])))
        alpha = min(alpha, 1.0)
        r_norm = float(r @ r)
        accepted = False
        while alpha > 1e-10:
            x_t = x + alpha * dx
            s_t = s + alpha * ds if m_in else s
            c_eq_t = p.eq(x_t)
            c_in_t = p.ineq(x_t)
            r_t = (
                np.concatenate([c_eq_t, c_in_t + s_t]) if m_in else c_eq_t
            )
            if float(r_t @ r_t) <= (1.0 - 1e-4 * alpha) * r_norm:
                x, s = x_t, s_t
                c_eq, c_in = c_eq_t, c_in_t
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break
        improved = True
        theta_now = float(np.sum(np.abs(c_eq)) + np.sum(np.abs(c_in + s)))
        if theta_now <= max(0.05 * theta_start, 1e-10):
            break
        _, J_eq = p.eq_jac(x)
        _, J_in = p.ineq_jac(x)
    if not improved:
        return False
    it.x, it.s = x, np.maximum(s, 1e-10) if m_in else s
    it.refresh()
    if it.theta() > 0.9 * theta_start:
        return False
    # restored point is a fresh start for the barrier: re-center bound duals
    d_l = np.where(fin_l, it.x - lb, 1.0)
    d_u = np.where(fin_u, ub - it.x, 1.0)
    it.z_l = np.where(fin_l, np.clip(mu / d_l, 1e-8, 1e8), 0.0)
    it.z_u = np.where(fin_u, np.clip(mu / d_u, 1e-8, 1e8), 0.0)
    if m_in:
        it.z_s = np.clip(mu / it.s, 1e-8, 1e8)
    return True


def _update_duals(it, mu, tau, x_old, s_old, dx, ds, fin_l, fin_u, lb, ub, opt):
    """Multiplier steps from the linearized complementarities at the pre-step
    point, with their own boundary rule plus the kappa_sigma clip."""
    p = it.p
    dz_l = np.zeros(p.n)
    dz_u = np.zeros(p.n)
    if fin_l.any():
        d = x_old[fin_l] - lb[fin_l]
        dz_l[fin_l] = mu / d - it.z_l[fin_l] - (it.z_l[fin_l] / d) * dx[fin_l]
    if fin_u.any():
        d = ub[fin_u] - x_old[fin_u]
        dz_u[fin_u] = mu / d - it.z_u[fin_u] + (it.z_u[fin_u] / d) * dx[fin_u]
    a_l = _max_step_to_boundary(it.z_l[fin_l], dz_l[fin_l], tau) if fin_l.any() else 1.0
    a_u = _max_step_to_boundary(it.z_u[fin_u], dz_u[fin_u], tau) if fin_u.any() else 1.0
    a_z = min(a_l, a_u)
    if p.n_ineq:
        dz_s = mu / s_old - it.z_s - (it.z_s / s_old) * ds
        a_z = min(a_z, _max_step_to_boundary(it.z_s, dz_s, tau))
        it.z_s = it.z_s + a_z * dz_s
    it.z_l = it.z_l + a_z * dz_l
    it.z_u = it.z_u + a_z * dz_u
    # keep the primal-dual Hessian close to the barrier one
    ks = opt.kappa_sigma
    if fin_l.any():
        d = it.x[fin_l] - lb[fin_l]
        it.z_l[fin_l] = np.clip(it.z_l[fin_l], mu / (ks * d), ks * mu / d)
    if fin_u.any():
        d = ub[fin_u] - it.x[fin_u]
        it.z_u[fin_u] = np.clip(it.z_u[fin_u], mu / (ks * d), ks * mu / d)
    if p.n_ineq:
        it.z_s = np.clip(it.z_s, mu / (ks * it.s), ks * mu / it.s)


class _BfgsState:
    """Damped dense BFGS model of the Lagrangian Hessian.

    capture() stashes the pre-step evaluations (they are about to be replaced
    by the line search's refresh); update() then forms the gradient difference
    at the new multipliers without re-evaluating the old point.
    """

    def __init__(self, n: int, it: _Iterate):
        self.n = n
        self.B = np.eye(n) * max(1.0, float(np.max(np.abs(it.grad), initial=1.0)))
        self.capture(it)

    def capture(self, it: _Iterate):
        self._x_prev = it.x.copy()
        self._grad_prev = it.grad
        self._J_eq_prev = it.J_eq
        self._J_in_prev = it.J_in

    def update(self, it: _Iterate):
        dx = it.x - self._x_prev
        if float(dx @ dx) < 1e-24:
            return
        g_new = it.grad + it.J_eq.T @ it.lam + it.J_in.T @ it.nu
        g_old = (
            self._grad_prev
            + self._J_eq_prev.T @ it.lam
            + self._J_in_prev.T @ it.nu
        )
        y = g_new - g_old
        Bdx = self.B @ dx
        dBd = float(dx @ Bdx)
        dy = float(dx @ y)
        if dy < 0.2 * dBd:  # Powell damping
            th = 0.8 * dBd / (dBd - dy)
            y = th * y + (1.0 - th) * Bdx
            dy = float(dx @ y)
        if dy > 1e-12 * max(1.0, dBd):
            self.B += np.outer(y, y) / dy - np.outer(Bdx, Bdx) / dBd
