"""Direct collocation transcription of the pump-track minimum-time problem.

The continuous problem: steer the two-mass rider model from a given start to
q1 = q_goal in the least *physical* time, using the blended contact dynamics
in numerical time.  Because the clock state only advances in the free mode,
the objective is simply the terminal clock value.

Discretization
--------------
* E integration intervals of free length h_e (bounded around a nominal h),
  each carrying a 2-stage Radau IIA collocation step.  The scheme is stiffly
  accurate (c2 = 1), so the second stage state *is* the interval's end state
  and no separate node variables exist.
* The control is piecewise constant: N control intervals of m integration
  intervals each (E = N m).
* Mode selection is transcribed with one step variable per switching
  function (alpha1 for the gap c1 = q2, alpha2 for the gap rate c2 = v2) and
  nonnegative splits c = c_plus - c_minus at every stage.  The blend is

      theta_free = alpha1 + (1 - alpha1) alpha2
      theta_aux  = (1 - alpha1)(1 - alpha2)

  and the step logic is imposed through relaxed complementarity products

      alpha . c_minus <= sigma,   (1 - alpha) . c_plus <= sigma,

  driven to sigma -> 0 by an outer homotopy.

Variable layout (one flat vector z):
    z[0:7]                     initial state x0
    per interval e (base_e = 7 + 27 e):
        +0..7    stage-1 state      +7..14  stage-2 state (= end state)
        +14      h_e
        +15..21  stage-1 mode block (a1, a2, c1p, c1m, c2p, c2m)
        +21..27  stage-2 mode block
    z[7 + 27 E + k]            scaled control on interval k (k < N)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import sparse

from ..models import PumpParams, build_pump_system
from ..models.pump import pump_accelerations, track_height
from ..nlp import NlpProblem
from ..nlp.ad import Dual2, seed, seed2
from ..core import sliding_weights, SlidingModeError

# Radau IIA, two stages: c = (1/3, 1), third order, stiffly accurate.
RADAU_C = np.array([1.0 / 3.0, 1.0])
RADAU_A = np.array([[5.0 / 12.0, -1.0 / 12.0], [3.0 / 4.0, 1.0 / 4.0]])

NX = 7          # extended pump state dimension
BLK = 27        # variables per integration interval
MODE = 6        # per-stage mode block width


def theta_free(a1, a2):
    return a1 + (1.0 - a1) * a2


def theta_aux(a1, a2):
    return (1.0 - a1) * (1.0 - a2)


@dataclass
class PumpTranscription:
    """Index bookkeeping plus all NLP callbacks for one problem instance."""

    params: PumpParams
    x_init: np.ndarray
    n_controls: int = 30          # N
    per_control: int = 2          # m
    tau_total_guess: float = 8.0
    u_ref: float = 100.0          # control scaling: z carries u / u_ref

    def __post_init__(self):
        self.x_init = np.asarray(self.x_init, dtype=float)
        if self.x_init.shape != (NX,):
            raise ValueError(f"x_init must have shape ({NX},)")
        if self.n_controls < 1 or self.per_control < 1:
            raise ValueError("need at least one control and one integration interval")
        self.E = self.n_controls * self.per_control
        self.n_var = NX + BLK * self.E + self.n_controls
        self.h_nominal = self.tau_total_guess / self.E
        self.system = build_pump_system(self.params)
        # equality rows: initial pin, collocation, splits, terminal position
        self.n_eq = NX + (2 * NX + 4) * self.E + 1
        # inequality rows: 8 step-times-split products per interval, then the
        # cross products between consecutive stage points that keep a switching
        # function from changing sign inside an interval.  A sign change has to
        # land on an interval boundary (where the node's own splits vanish), so
        # the free step lengths soak up event alignment and a mid-interval
        # stage never blends the two vector fields across a switch, which
        # would corrupt the impact's tangential kick.
        cross_i, cross_j = [], []
        for e in range(self.E):
            pairs = []
            if e > 0:
                pairs.append((self.i_mode(e - 1, 1).start, self.i_mode(e, 0).start))
            pairs.append((self.i_mode(e, 0).start, self.i_mode(e, 1).start))
            for ma, mb in pairs:
                cross_i.extend([ma + 2, ma + 3, ma + 4, ma + 5])
                cross_j.extend([mb + 3, mb + 2, mb + 5, mb + 4])
        self._cross_i = np.asarray(cross_i, dtype=int)
        self._cross_j = np.asarray(cross_j, dtype=int)
        self.n_ineq = 8 * self.E + self._cross_i.size

    # -- index helpers -------------------------------------------------------

    def base(self, e: int) -> int:
        return NX + BLK * e

    def i_stage(self, e: int, stage: int) -> slice:
        b = self.base(e) + NX * stage
        return slice(b, b + NX)

    def i_h(self, e: int) -> int:
        return self.base(e) + 2 * NX

    def i_mode(self, e: int, stage: int) -> slice:
        b = self.base(e) + 2 * NX + 1 + MODE * stage
        return slice(b, b + MODE)

    def i_u(self, k: int) -> int:
        return NX + BLK * self.E + k

    def i_start(self, e: int) -> slice:
        """State the interval integrates from: x0 or the previous end stage."""
        return slice(0, NX) if e == 0 else self.i_stage(e - 1, 1)

    @property
    def i_terminal_clock(self) -> int:
        return self.i_stage(self.E - 1, 1).start + 6

    def interval_indices(self, e: int) -> np.ndarray:
        """All variables interval e's constraints touch (start state, own
        block, its control)."""
        own = np.arange(self.base(e), self.base(e) + BLK)
        start = np.arange(self.i_start(e).start, self.i_start(e).stop)
        return np.concatenate([start, own, [self.i_u(e // self.per_control)]])

    # -- dynamics ------------------------------------------------------------

    def _collocation_rows(self, x_start, stages, modes, h, u_phys):
        """14 collocation + 4 split residuals for one interval.

        x_start: list of 7 scalars; stages: [stage1, stage2] lists;
        modes: [(a1, a2, c1p, c1m, c2p, c2m)] * 2.
        """
        p = self.params
        ks = []
        for X, mb in zip(stages, modes):
            a1, a2 = mb[0], mb[1]
            th1, th2 = theta_free(a1, a2), theta_aux(a1, a2)
            ff = _pump_free(p, X, u_phys)
            fa = _pump_aux(p, X)
            ks.append([th1 * ff[i] + th2 * fa[i] for i in range(NX)])
        rows = []
        for i, X in enumerate(stages):
            for comp in range(NX):
                acc = RADAU_A[i, 0] * ks[0][comp] + RADAU_A[i, 1] * ks[1][comp]
                rows.append(X[comp] - x_start[comp] - h * acc)
        for X, mb in zip(stages, modes):
            rows.append(X[1] - (mb[2] - mb[3]))   # c1 = q2 split
            rows.append(X[4] - (mb[4] - mb[5]))   # c2 = v2 split
        return rows

    # -- NLP callbacks --------------------------------------------------------

    def objective(self, z):
        return z[self.i_terminal_clock]

    def objective_grad(self, z):
        g = np.zeros(self.n_var)
        g[self.i_terminal_clock] = 1.0
        return g

    def eq_con(self, z):
        rows = [z[i] - self.x_init[i] for i in range(NX)]
        for e in range(self.E):
            x_start = [z[i] for i in _srange(self.i_start(e))]
            stages = [
                [z[i] for i in _srange(self.i_stage(e, s))] for s in (0, 1)
            ]
            modes = [[z[i] for i in _srange(self.i_mode(e, s))] for s in (0, 1)]
            h = z[self.i_h(e)]
            u_phys = z[self.i_u(e // self.per_control)] * self.u_ref
            rows.extend(self._collocation_rows(x_start, stages, modes, h, u_phys))
        rows.append(z[self.i_stage(self.E - 1, 1).start + 0] - self.params.q_goal)
        return rows

    def make_ineq_con(self, sigma: float) -> Callable:
        def ineq(z):
            rows = []
            for e in range(self.E):
                for s in (0, 1):
                    mb = [z[i] for i in _srange(self.i_mode(e, s))]
                    a1, a2, c1p, c1m, c2p, c2m = mb
                    rows.append(a1 * c1m - sigma)
                    rows.append((1.0 - a1) * c1p - sigma)
                    rows.append(a2 * c2m - sigma)
                    rows.append((1.0 - a2) * c2p - sigma)
            for i, j in zip(self._cross_i, self._cross_j):
                rows.append(z[i] * z[j] - sigma)
            return rows

        return ineq

    def bounds(self):
        lb = np.full(self.n_var, -np.inf)
        ub = np.full(self.n_var, np.inf)
        p = self.params
        for e in range(self.E):
            for s in (0, 1):
                st = self.i_stage(e, s)
                lb[st.start + 2] = p.l_min       # link length is a state bound
                ub[st.start + 2] = p.l_max
                mb = self.i_mode(e, s)
                lb[mb.start : mb.start + 2] = 0.0   # steps in [0, 1]
                ub[mb.start : mb.start + 2] = 1.0
                lb[mb.start + 2 : mb.stop] = 0.0    # splits nonnegative
            # The wheel never ends an interval below the surface.  The interior
            # stage may undershoot while an impact resolves mid-interval, but a
            # trajectory that PARKS below the surface (q2 < 0 with v2 ~ 0 over
            # whole intervals) is an artifact of the relaxation: the exact flow
            # freezes positions while unfreezing, so {q2 < 0} is unreachable,
            # and letting iterates settle there opens a spurious sliding mode
            # that games the suspension geometry.  Endpoint bounds cut those
            # arcs off without touching the genuine one-interval transient.
            lb[self.i_stage(e, 1).start + 1] = 0.0
            # the floor leaves room for an interval that holds nothing but a
            # short impact restoration (its length is |v2| / k_n)
            lb[self.i_h(e)] = 0.05 * self.h_nominal
            ub[self.i_h(e)] = 5.0 * self.h_nominal
        lb[2] = p.l_min
        ub[2] = p.l_max
        for k in range(self.n_controls):
            lb[self.i_u(k)] = p.u_min / self.u_ref
            ub[self.i_u(k)] = p.u_max / self.u_ref
        return lb, ub

    # -- sparsity and curvature -----------------------------------------------

    def eq_pattern(self) -> sparse.csr_matrix:
        rows, cols = [], []
        for i in range(NX):
            rows.append(i)
            cols.append(i)
        r0 = NX
        for e in range(self.E):
            touched = self.interval_indices(e)
            n_rows = 2 * NX + 4
            for r in range(n_rows):
                rows.extend([r0 + r] * len(touched))
                cols.extend(touched)
            r0 += n_rows
        rows.append(r0)
        cols.append(self.i_stage(self.E - 1, 1).start)
        data = np.ones(len(rows), dtype=bool)
        return sparse.csr_matrix(
            (data, (rows, cols)), shape=(self.n_eq, self.n_var)
        )

    def ineq_pattern(self) -> sparse.csr_matrix:
        rows, cols = [], []
        r = 0
        for e in range(self.E):
            for s in (0, 1):
                mb = self.i_mode(e, s)
                a1, a2 = mb.start, mb.start + 1
                c1p, c1m, c2p, c2m = mb.start + 2, mb.start + 3, mb.start + 4, mb.start + 5
                for pair in ((a1, c1m), (a1, c1p), (a2, c2m), (a2, c2p)):
                    rows.extend([r, r])
                    cols.extend(pair)
                    r += 1
        for i, j in zip(self._cross_i, self._cross_j):
            rows.extend([r, r])
            cols.extend([i, j])
            r += 1
        data = np.ones(len(rows), dtype=bool)
        return sparse.csr_matrix(
            (data, (rows, cols)), shape=(self.n_ineq, self.n_var)
        )

    def eq_jac_batched(self, z):
        """Values and exact Jacobian of all equality rows in one array sweep.

        Every interval sees the same 35 local coordinates (the
        interval_indices order: start state, own block, control), so a single
        first-order dual evaluation over (E,)-array values produces every
        collocation/split row and its derivative stripe at once.  Unlike the
        Hessian sweep the start state is seeded here: it enters linearly but
        its Jacobian entries are needed.
        """
        z = np.asarray(z, dtype=float)
        E = self.E
        idx = np.stack([self.interval_indices(e) for e in range(E)])
        nloc = idx.shape[1]
        zl = seed([z[idx[:, j]] for j in range(nloc)])
        x_start = [zl[i] for i in range(NX)]
        stages = [
            [zl[NX + NX * s + i] for i in range(NX)] for s in (0, 1)
        ]
        h = zl[3 * NX]
        modes = [
            [zl[3 * NX + 1 + MODE * s + i] for i in range(MODE)] for s in (0, 1)
        ]
        u_phys = zl[nloc - 1] * self.u_ref
        rows = self._collocation_rows(x_start, stages, modes, h, u_phys)

        n_rows = 2 * NX + 4
        vals = np.empty(self.n_eq)
        vals[:NX] = z[:NX] - self.x_init
        vals[NX : NX + n_rows * E] = np.stack(
            [np.asarray(r.val, dtype=float) for r in rows], axis=1
        ).ravel()
        t_col = self.i_stage(E - 1, 1).start
        vals[-1] = z[t_col] - self.params.q_goal

        dots = np.moveaxis(np.stack([r.dot for r in rows]), 2, 0)  # (E, 18, 35)
        grow = (
            NX
            + n_rows * np.arange(E)[:, None, None]
            + np.arange(n_rows)[None, :, None]
        )
        grow = np.broadcast_to(grow, dots.shape)
        gcol = np.broadcast_to(idx[:, None, :], dots.shape)
        keep = dots != 0.0
        data = np.concatenate([np.ones(NX), dots[keep], [1.0]])
        r_all = np.concatenate([np.arange(NX), grow[keep], [self.n_eq - 1]])
        c_all = np.concatenate([np.arange(NX), gcol[keep], [t_col]])
        jac = sparse.csr_matrix(
            (data, (r_all, c_all)), shape=(self.n_eq, self.n_var)
        )
        return vals, jac

    def make_ineq_jac(self, sigma: float) -> Callable:
        """Closed-form companion to make_ineq_con: each relaxed product row
        a*c - sigma has exactly two nonzeros, c at the step column (negated
        for the (1 - a) rows) and +-a at the split column."""
        E = self.E
        mcols = np.empty((E, 2), dtype=int)
        for e in range(E):
            for s in (0, 1):
                mcols[e, s] = self.i_mode(e, s).start

        def ineq_jac(z):
            mb = z[mcols[:, :, None] + np.arange(MODE)[None, None, :]]
            a1, a2 = mb[..., 0], mb[..., 1]
            c1p, c1m, c2p, c2m = mb[..., 2], mb[..., 3], mb[..., 4], mb[..., 5]
            vals = (
                np.stack(
                    [a1 * c1m, (1.0 - a1) * c1p, a2 * c2m, (1.0 - a2) * c2p],
                    axis=-1,
                )
                - sigma
            )
            cols = np.stack(
                [
                    np.stack([mcols + 0, mcols + 3], axis=-1),
                    np.stack([mcols + 0, mcols + 2], axis=-1),
                    np.stack([mcols + 1, mcols + 5], axis=-1),
                    np.stack([mcols + 1, mcols + 4], axis=-1),
                ],
                axis=2,
            )
            data = np.stack(
                [
                    np.stack([c1m, a1], axis=-1),
                    np.stack([-c1p, 1.0 - a1], axis=-1),
                    np.stack([c2m, a2], axis=-1),
                    np.stack([-c2p, 1.0 - a2], axis=-1),
                ],
                axis=2,
            )
            ci, cj = self._cross_i, self._cross_j
            vals_cross = z[ci] * z[cj] - sigma
            cols_cross = np.stack([ci, cj], axis=-1)
            data_cross = np.stack([z[cj], z[ci]], axis=-1)
            r = np.repeat(np.arange(self.n_ineq), 2)
            jac = sparse.csr_matrix(
                (
                    np.concatenate([data.ravel(), data_cross.ravel()]),
                    (r, np.concatenate([cols.ravel(), cols_cross.ravel()])),
                ),
                shape=(self.n_ineq, self.n_var),
            )
            return np.concatenate([vals.ravel(), vals_cross]), jac

        return ineq_jac

    def lag_hess(self, z, sigma_f, lam_eq, lam_ineq) -> sparse.csr_matrix:
        """Exact Lagrangian curvature, swept over all intervals in one batch.

        The objective and the pin/terminal rows are linear, and x_start enters
        each interval's residuals only linearly, so all curvature lives in the
        28 own-block-plus-control coordinates.  Every interval shares that
        local structure, so one Dual2 evaluation with (E,)-array values covers
        the whole horizon; the per-interval 28 x 28 blocks then scatter-add
        into the global matrix (overlaps on shared control columns sum).
        """
        z = np.asarray(z, dtype=float)
        E = self.E
        nloc = BLK + 1
        idx = np.empty((E, nloc), dtype=int)
        xs = np.empty((E, NX))
        for e in range(E):
            idx[e, :BLK] = np.arange(self.base(e), self.base(e) + BLK)
            idx[e, BLK] = self.i_u(e // self.per_control)
            xs[e] = z[self.i_start(e)]
        n_rows = 2 * NX + 4
        lam_blk = np.asarray(lam_eq, dtype=float)[NX : NX + n_rows * E]
        lam_blk = lam_blk.reshape(E, n_rows)
        nu_all = np.asarray(lam_ineq, dtype=float)
        nu_blk = nu_all[: 8 * E].reshape(E, 8)
        nu_cross = nu_all[8 * E :]

        zl = seed2([z[idx[:, j]] for j in range(nloc)])
        stages = [[zl[NX * s + i] for i in range(NX)] for s in (0, 1)]
        h = zl[2 * NX]
        modes = [
            [zl[2 * NX + 1 + MODE * s + i] for i in range(MODE)] for s in (0, 1)
        ]
        u_phys = zl[BLK] * self.u_ref
        x_start = [xs[:, i] for i in range(NX)]
        rows = self._collocation_rows(x_start, stages, modes, h, u_phys)

        def weighted(row, w):
            # manual product with a plain weight vector skips the zero-seed
            # coercion a Dual2 multiply would allocate
            return Dual2(row.val * w, row.dot * w, row.hess * w)

        acc = None
        for i, row in enumerate(rows):
            w = lam_blk[:, i]
            if np.any(w != 0.0):
                term = weighted(row, w)
                acc = term if acc is None else acc + term
        col = 0
        for mb in modes:
            a1, a2, c1p, c1m, c2p, c2m = mb
            for j, prod in enumerate(
                (a1 * c1m, (1.0 - a1) * c1p, a2 * c2m, (1.0 - a2) * c2p)
            ):
                w = nu_blk[:, col + j]
                if np.any(w != 0.0):
                    term = weighted(prod, w)
                    acc = term if acc is None else acc + term
            col += 4
        # the cross products are bilinear, so their curvature is the bare
        # multiplier sitting at one symmetric coordinate pair each
        hc = None
        live = nu_cross != 0.0
        if np.any(live):
            ci, cj = self._cross_i[live], self._cross_j[live]
            w = nu_cross[live]
            hc = sparse.csr_matrix(
                (
                    np.concatenate([w, w]),
                    (np.concatenate([ci, cj]), np.concatenate([cj, ci])),
                ),
                shape=(self.n_var, self.n_var),
            )
        if acc is None:
            empty = sparse.csr_matrix((self.n_var, self.n_var))
            return hc if hc is not None else empty

        blocks = np.moveaxis(acc.hess, 2, 0)          # (E, 28, 28)
        tri_r = np.broadcast_to(idx[:, :, None], blocks.shape)
        tri_c = np.broadcast_to(idx[:, None, :], blocks.shape)
        keep = blocks != 0.0
        out = sparse.csr_matrix(
            (blocks[keep], (tri_r[keep], tri_c[keep])),
            shape=(self.n_var, self.n_var),
        )
        return out + hc if hc is not None else out

    # -- problem assembly ------------------------------------------------------

    def build_problem(self, sigma: float) -> NlpProblem:
        lb, ub = self.bounds()
        return NlpProblem(
            n=self.n_var,
            objective=self.objective,
            grad=self.objective_grad,
            eq_con=self.eq_con,
            n_eq=self.n_eq,
            eq_jac_pattern=self.eq_pattern(),
            eq_jac_fn=self.eq_jac_batched,
            ineq_con=self.make_ineq_con(sigma),
            n_ineq=self.n_ineq,
            ineq_jac_pattern=self.ineq_pattern(),
            ineq_jac_fn=self.make_ineq_jac(sigma),
            lb=lb,
            ub=ub,
            lag_hess=self.lag_hess,
            name=f"pump-ocp sigma={sigma:g}",
        )

    # -- mode-locked polish -------------------------------------------------

    def _classify(self, z, c_tol: float) -> np.ndarray:
        """Branch code per (interval, stage, pair): 1, 0, or 2 for surface.

        Each switching pair is classified on its own, because landings and
        takeoffs sit exactly on one surface while crossing the other.  A pair
        whose positive split clears c_tol is branch 1, one whose negative
        split clears it is branch 0, and a pair with both splits small sits on
        its switching surface.  A second pass then re-reads interval-boundary
        nodes: when the branch flips between a boundary node and the first
        stage point after it, the sign change belongs to the node itself (the
        cross products keep it out of the interior), so the node is surface.
        """
        codes = np.empty((self.E, 2, 2), dtype=int)
        for e in range(self.E):
            for s in (0, 1):
                _, _, c1p, c1m, c2p, c2m = z[self.i_mode(e, s)]
                for k, (cp, cm) in enumerate(((c1p, c1m), (c2p, c2m))):
                    if cp > max(c_tol, cm):
                        codes[e, s, k] = 1
                    elif cm > max(c_tol, cp):
                        codes[e, s, k] = 0
                    else:
                        codes[e, s, k] = 2
        for e in range(self.E - 1):
            for k in (0, 1):
                a, b = codes[e, 1, k], codes[e + 1, 0, k]
                if a != b and a != 2 and b != 2:
                    codes[e, 1, k] = 2
        return codes

    def mode_pattern(self, z, c_tol: float = 1e-3) -> list[tuple[int, float]]:
        """Pin list (variable index, value) for the contact pattern in z.

        Branch-1 pairs are locked to weight 1 with the negative split zeroed;
        branch-0 pairs symmetrically; surface pairs have both splits pinned to
        zero while the weight stays free to take whatever sliding value the
        dynamics assign.  On contact arcs both pairs are surface-bound, which
        leaves a one-parameter gauge in the weights: only their combination
        a1 + (1 - a1) a2 enters the dynamics.  The second weight is pinned to
        zero there so the first carries the sliding value alone; without this
        the gauge direction has barrier-scale gradient against
        regularization-scale curvature and the line search spends itself
        swinging the weights around their orbit.
        """
        codes = self._classify(z, c_tol)
        pins: list[tuple[int, float]] = []
        for e in range(self.E):
            for s in (0, 1):
                mb = self.i_mode(e, s)
                i_a1, i_a2, i_c1p, i_c1m, i_c2p, i_c2m = range(mb.start, mb.stop)
                for k, (i_a, i_cp, i_cm) in enumerate(
                    ((i_a1, i_c1p, i_c1m), (i_a2, i_c2p, i_c2m))
                ):
                    code = codes[e, s, k]
                    if code == 1:
                        pins += [(i_a, 1.0), (i_cm, 0.0)]
                    elif code == 0:
                        pins += [(i_a, 0.0), (i_cp, 0.0)]
                    else:
                        pins += [(i_cp, 0.0), (i_cm, 0.0)]
                if codes[e, s, 0] == 2 and codes[e, s, 1] == 2:
                    pins.append((i_a2, 0.0))
        return pins

    def polish_start(self, z, c_tol: float = 1e-3) -> np.ndarray:
        """Project an incumbent onto its own mode pattern.

        Applies every pin and repairs the kept split of each signed pair from
        the stage state, so the only constraint rows that feel the projection
        are the dynamics defects at points whose blend weight actually moved.
        On double-surface points the first weight absorbs the combined value
        a1 + (1 - a1) a2 before the second is zeroed, which keeps the blended
        field, and therefore the defects, unchanged there.
        """
        codes = self._classify(z, c_tol)
        z0 = z.copy()
        for e in range(self.E):
            for s in (0, 1):
                mb = self.i_mode(e, s)
                a1, a2 = z[mb][:2]
                st = self.i_stage(e, s)
                i_a1, i_a2, i_c1p, i_c1m, i_c2p, i_c2m = range(mb.start, mb.stop)
                for k, (i_a, i_cp, i_cm, w) in enumerate(
                    (
                        (i_a1, i_c1p, i_c1m, z[st][1]),
                        (i_a2, i_c2p, i_c2m, z[st][4]),
                    )
                ):
                    code = codes[e, s, k]
                    if code == 1:
                        z0[i_a], z0[i_cp], z0[i_cm] = 1.0, max(w, 0.0), 0.0
                    elif code == 0:
                        z0[i_a], z0[i_cp], z0[i_cm] = 0.0, 0.0, max(-w, 0.0)
                    else:
                        z0[i_cp] = z0[i_cm] = 0.0
                if codes[e, s, 0] == 2 and codes[e, s, 1] == 2:
                    z0[i_a1] = min(max(a1 + (1.0 - a1) * a2, 0.0), 1.0)
                    z0[i_a2] = 0.0
        return z0

    def build_pinned_problem(self, pins: list[tuple[int, float]]) -> NlpProblem:
        """Smooth equality-constrained problem with the mode pattern locked.

        The relaxed products are dropped entirely; each pinned coordinate is
        held by a linear equality row instead of its box (which widens so the
        barrier never sees a zero-width interior).  Solving this from a
        relaxation incumbent drives the complementarity residual to exact
        zero instead of chasing it down a conditioning cliff.
        """
        idx = np.array([i for i, _ in pins], dtype=int)
        vals = np.array([v for _, v in pins], dtype=float)
        n_pin = len(pins)
        lb, ub = self.bounds()
        lb[idx] = vals - 0.5
        ub[idx] = vals + 0.5
        base_eq = self.eq_con
        base_jac = self.eq_jac_batched

        def eq_con(z):
            rows = list(base_eq(z))
            rows.extend(z[i] - v for i, v in zip(idx, vals))
            return rows

        pin_jac = sparse.csr_matrix(
            (np.ones(n_pin), (np.arange(n_pin), idx)),
            shape=(n_pin, self.n_var),
        )
        pattern = sparse.vstack(
            [self.eq_pattern(), pin_jac.astype(bool)]
        ).tocsr()

        def eq_jac(z):
            v0, j0 = base_jac(z)
            return (
                np.concatenate([v0, z[idx] - vals]),
                sparse.vstack([j0, pin_jac]).tocsr(),
            )

        def hess(z, sigma_f, lam_eq, lam_ineq):
            return self.lag_hess(
                z, sigma_f, lam_eq[: self.n_eq], np.zeros(self.n_ineq)
            )

        return NlpProblem(
            n=self.n_var,
            objective=self.objective,
            grad=self.objective_grad,
            eq_con=eq_con,
            n_eq=self.n_eq + n_pin,
            eq_jac_pattern=pattern,
            eq_jac_fn=eq_jac,
            lb=lb,
            ub=ub,
            lag_hess=hess,
            name="pump-ocp mode-locked",
        )

    # -- initialization ---------------------------------------------------------

    def ramp_guess(self) -> np.ndarray:
        """Cold start: constant-speed slide along the surface to the goal."""
        p = self.params
        z = np.zeros(self.n_var)
        z[0:NX] = self.x_init
        v_ramp = max(self.x_init[3], p.q_goal / self.tau_total_guess)
        taus = self._stage_taus(np.full(self.E, self.h_nominal))
        for e in range(self.E):
            for s in (0, 1):
                tau = taus[e, s]
                frac = tau / self.tau_total_guess
                x = np.array(
                    [
                        min(p.q_goal, v_ramp * tau),
                        0.0,
                        self.x_init[2],
                        v_ramp,
                        0.0,
                        0.0,
                        tau,
                    ]
                )
                z[self.i_stage(e, s)] = x
                z[self.i_mode(e, s)] = self._mode_block(x, 0.0)
            z[self.i_h(e)] = self.h_nominal
        return z

    def guess_from_simulation(self, traj, control=None, tau_cut=None) -> np.ndarray:
        """Seed stage states and mode blocks from a simulated trajectory.

        tau_cut maps only the trajectory up to that numerical time onto the
        grid (states beyond it repeat the cut state), for runs that stall
        short of the goal.
        """
        tau_end = float(traj.tau_grid[-1]) if tau_cut is None else float(tau_cut)
        h = np.full(self.E, tau_end / self.E)
        z = np.zeros(self.n_var)
        z[0:NX] = traj.states[0]
        taus = self._stage_taus(h)
        for e in range(self.E):
            for s in (0, 1):
                tau = min(taus[e, s], tau_end)
                x = traj.sample(tau)
                u_val = 0.0 if control is None else float(control(tau)[0])
                z[self.i_stage(e, s)] = x
                z[self.i_mode(e, s)] = self._mode_block(x, u_val)
            z[self.i_h(e)] = h[e]
        if control is not None:
            for k in range(self.n_controls):
                tau_mid = taus[k * self.per_control, 0]
                z[self.i_u(k)] = float(control(tau_mid)[0]) / self.u_ref
        return z

    def _stage_taus(self, h: np.ndarray) -> np.ndarray:
        starts = np.concatenate([[0.0], np.cumsum(h)[:-1]])
        return starts[:, None] + h[:, None] * RADAU_C[None, :]

    def _mode_block(self, x, u_val, tol=1e-9) -> np.ndarray:
        """Consistent (a1, a2, splits) for a state: exact steps off the
        boundary, the sliding weight on it."""
        c1, c2 = float(x[1]), float(x[4])
        if c1 > tol:
            a1 = 1.0
            a2 = 1.0 if c2 > 0.0 else 0.0
        elif c2 < -tol:
            a1, a2 = 0.0, 0.0          # restoration: gap closing or closed
        else:
            a1 = 0.0
            try:
                w = sliding_weights(self.system, np.asarray(x, float), np.array([u_val]))
                a2 = float(np.clip(w.theta1, 0.0, 1.0))
            except SlidingModeError:
                a2 = 1.0 if c2 >= 0.0 else 0.0
        return np.array(
            [a1, a2, max(c1, 0.0), max(-c1, 0.0), max(c2, 0.0), max(-c2, 0.0)]
        )

    # -- extraction ---------------------------------------------------------------

    def stage_states(self, z) -> np.ndarray:
        out = np.empty((self.E, 2, NX))
        for e in range(self.E):
            for s in (0, 1):
                out[e, s] = z[self.i_stage(e, s)]
        return out

    def mode_blocks(self, z) -> np.ndarray:
        out = np.empty((self.E, 2, MODE))
        for e in range(self.E):
            for s in (0, 1):
                out[e, s] = z[self.i_mode(e, s)]
        return out

    def step_sizes(self, z) -> np.ndarray:
        return np.array([z[self.i_h(e)] for e in range(self.E)])

    def controls(self, z) -> np.ndarray:
        return np.array(
            [z[self.i_u(k)] * self.u_ref for k in range(self.n_controls)]
        )

    def control_knots(self, z) -> np.ndarray:
        """Physical-time boundaries of the N control intervals.

        The control belongs to the clock, not to numerical time: a replay
        integrates its own numerical-time axis, and small event-timing
        differences would shift every later switch if the knots lived there.
        On the clock the two time axes agree by construction.  A block that
        advances the clock by nothing (fully frozen) gets a hair of width so
        the knots stay strictly increasing; its level is never applied.
        """
        t_nodes = np.concatenate([[float(z[6])], self.stage_states(z)[:, 1, 6]])
        knots = t_nodes[:: self.per_control].copy()
        for i in range(1, knots.size):
            knots[i] = max(knots[i], knots[i - 1] + 1e-10)
        return knots

    def complementarity_residual(self, z) -> float:
        worst = 0.0
        for e in range(self.E):
            for s in (0, 1):
                a1, a2, c1p, c1m, c2p, c2m = z[self.i_mode(e, s)]
                worst = max(
                    worst,
                    a1 * c1m,
                    (1.0 - a1) * c1p,
                    a2 * c2m,
                    (1.0 - a2) * c2p,
                )
        if self._cross_i.size:
            worst = max(worst, float(np.max(z[self._cross_i] * z[self._cross_j])))
        return float(worst)

    def theta_profile(self, z) -> np.ndarray:
        mb = self.mode_blocks(z)
        return theta_free(mb[:, :, 0], mb[:, :, 1])


def _srange(s: slice):
    return range(s.start, s.stop)


def _pump_free(p: PumpParams, X, u_phys):
    """Componentwise free-mode field; mirrors the model's vector version but
    stays scalar so dual seeds flow through cleanly."""
    a_slack, a_link = pump_accelerations(p, X[0], X[3], u_phys)
    return [X[3], X[4], X[5], 0.0, a_slack, a_link, 1.0]


def _pump_aux(p: PumpParams, X):
    _, dh, _ = track_height(p, X[0])
    return [0.0, 0.0, 0.0, -p.k_n * dh, p.k_n, 0.0, 0.0]
