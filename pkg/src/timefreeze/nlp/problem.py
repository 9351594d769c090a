"""Problem container for the interior-point solver.

Holds the callbacks of a smooth NLP

    minimize    f(x)
    subject to  c_eq(x)  = 0
                c_ineq(x) <= 0
                lb <= x <= ub

plus optional structure (sparsity patterns for colored Jacobians, an exact
Lagrangian Hessian callback).  Derivatives default to forward-mode duals on
the supplied callables, so any function written with numpy ufuncs works
without extra code.

Fixed variables are not supported: pin a value with an equality row instead
of collapsing its bounds.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import sparse

from .ad import colored_jacobian, jacobian, value_and_grad, value_of


def _as_bound(b, n: int, default: float) -> np.ndarray:
    if b is None:
        return np.full(n, default)
    arr = np.asarray(b, dtype=float)
    if arr.ndim == 0:
        return np.full(n, float(arr))
    if arr.shape != (n,):
        raise ValueError(f"bound shape {arr.shape} does not match n={n}")
    return arr.copy()


@dataclass
class NlpProblem:
    """A smooth constrained problem in the solver's canonical form.

    Parameters
    ----------
    n:
        Number of decision variables.
    objective:
        Scalar callable; must accept dual numbers.
    eq_con, ineq_con:
        Vector callables (or None).  ``eq_con(x) = 0``, ``ineq_con(x) <= 0``.
    n_eq, n_ineq:
        Row counts of the two constraint blocks.
    lb, ub:
        Box bounds; scalars broadcast, None means unbounded on that side.
    eq_jac_pattern, ineq_jac_pattern:
        Optional boolean sparsity patterns enabling colored (grouped-seed)
        Jacobian sweeps.  Without a pattern the Jacobian is computed densely.
    grad:
        Optional analytic objective gradient ``grad(x) -> (n,)``; without it
        the gradient comes from a forward AD sweep.
    lag_hess:
        Optional exact Hessian of the Lagrangian
        ``sigma_f * f + lam_eq . c_eq + lam_ineq . c_ineq``
        as ``lag_hess(x, sigma_f, lam_eq, lam_ineq) -> (n, n) matrix``
        (dense or sparse, symmetric).  When absent the solver falls back to a
        damped BFGS estimate.
    """

    n: int
    objective: Callable
    eq_con: Optional[Callable] = None
    n_eq: int = 0
    ineq_con: Optional[Callable] = None
    n_ineq: int = 0
    lb: Optional[np.ndarray] = None
    ub: Optional[np.ndarray] = None
    eq_jac_pattern: Optional[sparse.spmatrix] = None
    ineq_jac_pattern: Optional[sparse.spmatrix] = None
    grad: Optional[Callable] = None
    eq_jac_fn: Optional[Callable] = None
    ineq_jac_fn: Optional[Callable] = None
    lag_hess: Optional[Callable] = None
    name: str = ""

    def __post_init__(self):
        if self.n <= 0:
            raise ValueError("n must be positive")
        self.lb = _as_bound(self.lb, self.n, -np.inf)
        self.ub = _as_bound(self.ub, self.n, np.inf)
        if np.any(self.ub - self.lb <= 1e-14):
            raise ValueError(
                "degenerate box: pin variables with an equality row, not lb == ub"
            )
        if (self.eq_con is None) != (self.n_eq == 0):
            raise ValueError("eq_con and n_eq must be given together")
        if (self.ineq_con is None) != (self.n_ineq == 0):
            raise ValueError("ineq_con and n_ineq must be given together")
        for pat, m, label in (
            (self.eq_jac_pattern, self.n_eq, "eq"),
            (self.ineq_jac_pattern, self.n_ineq, "ineq"),
        ):
            if pat is not None and pat.shape != (m, self.n):
                raise ValueError(f"{label} pattern shape {pat.shape} != ({m}, {self.n})")

    # -- evaluation helpers -------------------------------------------------

    def f(self, x: np.ndarray) -> float:
        return float(value_of(self.objective(np.asarray(x, dtype=float))))

    def f_grad(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        if self.grad is not None:
            x = np.asarray(x, dtype=float)
            return self.f(x), np.asarray(self.grad(x), dtype=float)
        return value_and_grad(self.objective, x)

    def eq(self, x: np.ndarray) -> np.ndarray:
        if self.eq_con is None:
            return np.zeros(0)
        c = np.asarray(
            [float(value_of(v)) for v in np.ravel(self.eq_con(np.asarray(x, float)))]
        )
        if c.shape != (self.n_eq,):
            raise ValueError(f"eq_con returned {c.shape}, expected ({self.n_eq},)")
        return c

    def ineq(self, x: np.ndarray) -> np.ndarray:
        if self.ineq_con is None:
            return np.zeros(0)
        g = np.asarray(
            [float(value_of(v)) for v in np.ravel(self.ineq_con(np.asarray(x, float)))]
        )
        if g.shape != (self.n_ineq,):
            raise ValueError(f"ineq_con returned {g.shape}, expected ({self.n_ineq},)")
        return g

    def eq_jac(self, x: np.ndarray) -> tuple[np.ndarray, sparse.csr_matrix]:
        if self.eq_jac_fn is not None:
            val, jac = self.eq_jac_fn(np.asarray(x, dtype=float))
            return np.asarray(val, dtype=float), jac.tocsr()
        return self._jac(self.eq_con, self.n_eq, self.eq_jac_pattern, x)

    def ineq_jac(self, x: np.ndarray) -> tuple[np.ndarray, sparse.csr_matrix]:
        if self.ineq_jac_fn is not None:
            val, jac = self.ineq_jac_fn(np.asarray(x, dtype=float))
            return np.asarray(val, dtype=float), jac.tocsr()
        return self._jac(self.ineq_con, self.n_ineq, self.ineq_jac_pattern, x)

    def _jac(self, fn, m, pattern, x):
        if fn is None:
            return np.zeros(0), sparse.csr_matrix((0, self.n))
        if pattern is not None:
            val, jac = colored_jacobian(fn, x, pattern)
            return val, jac.tocsr()
        val, jac = jacobian(fn, x)
        return val, sparse.csr_matrix(jac)

    def hessian(self, x, sigma_f, lam_eq, lam_ineq) -> Optional[sparse.csr_matrix]:
        if self.lag_hess is None:
            return None
        h = self.lag_hess(x, sigma_f, lam_eq, lam_ineq)
        h = sparse.csr_matrix(h)
        if h.shape != (self.n, self.n):
            raise ValueError(f"lag_hess returned {h.shape}, expected square n={self.n}")
        return h
