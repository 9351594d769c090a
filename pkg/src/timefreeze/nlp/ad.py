"""Forward-mode automatic differentiation on numpy arrays.

Two carrier types are provided: :class:`Dual` propagates first derivatives
along ``k`` seed directions, :class:`Dual2` additionally propagates the full
``k x k`` matrix of second derivatives.  Values may be scalars or arrays; the
seed axis is always the leading axis of ``dot`` (and the two leading axes of
``hess``), so batched evaluation over e.g. all collocation steps at once is a
matter of passing array-valued entries.

Both types plug into the numpy ufunc machinery, so model code written with
plain ``np.sin``/``np.cos``/arithmetic differentiates unchanged.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from scipy import sparse

__all__ = [
    "Dual",
    "Dual2",
    "seed",
    "seed2",
    "value_of",
    "dot_of",
    "where",
    "derivatives",
    "value_and_grad",
    "jacobian",
    "hessian",
    "greedy_column_groups",
    "colored_jacobian",
]


def _aligned_dot(dot: np.ndarray, val_ndim: int, target_ndim: int) -> np.ndarray:
    """Insert singleton axes after the seed axis so dots broadcast like vals."""
    if target_ndim == val_ndim:
        return dot
    shape = dot.shape[:1] + (1,) * (target_ndim - val_ndim) + dot.shape[1:]
    return dot.reshape(shape)


def _aligned_hess(hess: np.ndarray, val_ndim: int, target_ndim: int) -> np.ndarray:
    if target_ndim == val_ndim:
        return hess
    shape = hess.shape[:2] + (1,) * (target_ndim - val_ndim) + hess.shape[2:]
    return hess.reshape(shape)


class Dual:
    """First-order forward-mode carrier: value plus k directional derivatives."""

    __slots__ = ("val", "dot")

    def __init__(self, val, dot):
        self.val = np.asarray(val, dtype=float) if np.ndim(val) else float(val)
        self.dot = np.asarray(dot, dtype=float)

    @property
    def nseeds(self) -> int:
        return self.dot.shape[0]

    @property
    def shape(self):
        return np.shape(self.val)

    def __len__(self):
        return len(self.val)

    def __getitem__(self, idx):
        sl = (slice(None),) + (idx if isinstance(idx, tuple) else (idx,))
        return Dual(self.val[idx], self.dot[sl])

    def __repr__(self):
        return f"Dual(val={self.val!r}, nseeds={self.nseeds})"

    # -- arithmetic ---------------------------------------------------------

    def _coerce(self, other):
        if isinstance(other, Dual):
            return other
        return Dual(other, np.zeros((self.nseeds,) + np.shape(np.asarray(other, dtype=float))))

    def _binary(self, other, dval, da, db):
        other = self._coerce(other)
        av, bv = self.val, other.val
        nd = max(np.ndim(av), np.ndim(bv))
        ad = _aligned_dot(self.dot, np.ndim(av), nd)
        bd = _aligned_dot(other.dot, np.ndim(bv), nd)
        return Dual(dval(av, bv), da(av, bv) * ad + db(av, bv) * bd)

    def __add__(self, other):
        return self._binary(other, lambda a, b: a + b, lambda a, b: 1.0, lambda a, b: 1.0)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, lambda a, b: a - b, lambda a, b: 1.0, lambda a, b: -1.0)

    def __rsub__(self, other):
        return self._coerce(other).__sub__(self)

    def __mul__(self, other):
        return self._binary(other, lambda a, b: a * b, lambda a, b: b, lambda a, b: a)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._binary(
            other, lambda a, b: a / b, lambda a, b: 1.0 / b, lambda a, b: -a / (b * b)
        )

    def __rtruediv__(self, other):
        return self._coerce(other).__truediv__(self)

    def __neg__(self):
        return Dual(-self.val, -self.dot)

    def __pos__(self):
        return self

    def __pow__(self, p):
        if isinstance(p, Dual):
            raise TypeError("dual-valued exponents are not supported")
        p = float(p)
        return Dual(self.val**p, p * self.val ** (p - 1.0) * self.dot)

    # comparisons operate on values only (branch decisions, no derivative)
    def __lt__(self, other):
        return self.val < value_of(other)

    def __le__(self, other):
        return self.val <= value_of(other)

    def __gt__(self, other):
        return self.val > value_of(other)

    def __ge__(self, other):
        return self.val >= value_of(other)

    def _unary(self, fval, fprime):
        return Dual(fval(self.val), fprime(self.val) * self.dot)

    def clip(self, a_min=None, a_max=None, **kwargs):
        # np.clip resolves through this method, not through the ufunc hook
        return _clip_impl(self, a_min, a_max)

    def __array_ufunc__(self, ufunc, method, *inputs, **kwargs):
        if method != "__call__" or kwargs.get("out") is not None:
            return NotImplemented
        return _apply_ufunc(Dual, ufunc.__name__, inputs)


class Dual2:
    """Second-order forward-mode carrier: value, gradient and dense Hessian."""

    __slots__ = ("val", "dot", "hess")

    def __init__(self, val, dot, hess):
        self.val = np.asarray(val, dtype=float) if np.ndim(val) else float(val)
        self.dot = np.asarray(dot, dtype=float)
        self.hess = np.asarray(hess, dtype=float)

    @property
    def nseeds(self) -> int:
        return self.dot.shape[0]

    def __getitem__(self, idx):
        sl1 = (slice(None),) + (idx if isinstance(idx, tuple) else (idx,))
        sl2 = (slice(None), slice(None)) + (idx if isinstance(idx, tuple) else (idx,))
        return Dual2(self.val[idx], self.dot[sl1], self.hess[sl2])

    def __repr__(self):
        return f"Dual2(val={self.val!r}, nseeds={self.nseeds})"

    def _coerce(self, other):
        if isinstance(other, Dual2):
            return other
        k = self.nseeds
        s = np.shape(np.asarray(other, dtype=float))
        return Dual2(other, np.zeros((k,) + s), np.zeros((k, k) + s))

    def _binary(self, other, fval, da, db, daa, dab, dbb):
        other = self._coerce(other)
        av, bv = self.val, other.val
        nd = max(np.ndim(av), np.ndim(bv))
        ad = _aligned_dot(self.dot, np.ndim(av), nd)
        bd = _aligned_dot(other.dot, np.ndim(bv), nd)
        ah = _aligned_hess(self.hess, np.ndim(av), nd)
        bh = _aligned_hess(other.hess, np.ndim(bv), nd)
        ga, gb = da(av, bv), db(av, bv)
        dot = ga * ad + gb * bd
        hess = ga * ah + gb * bh
        haa, hab, hbb = daa(av, bv), dab(av, bv), dbb(av, bv)
        if np.ndim(haa) or haa:
            hess = hess + haa * (ad[:, None] * ad[None, :])
        if np.ndim(hab) or hab:
            cross = ad[:, None] * bd[None, :]
            hess = hess + hab * (cross + bd[:, None] * ad[None, :])
        if np.ndim(hbb) or hbb:
            hess = hess + hbb * (bd[:, None] * bd[None, :])
        return Dual2(fval(av, bv), dot, hess)

    def __add__(self, other):
        return self._binary(
            other, lambda a, b: a + b,
            lambda a, b: 1.0, lambda a, b: 1.0,
            lambda a, b: 0.0, lambda a, b: 0.0, lambda a, b: 0.0,
        )

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(
            other, lambda a, b: a - b,
            lambda a, b: 1.0, lambda a, b: -1.0,
            lambda a, b: 0.0, lambda a, b: 0.0, lambda a, b: 0.0,
        )

    def __rsub__(self, other):
        return self._coerce(other).__sub__(self)

    def __mul__(self, other):
        return self._binary(
            other, lambda a, b: a * b,
            lambda a, b: b, lambda a, b: a,
            lambda a, b: 0.0, lambda a, b: 1.0, lambda a, b: 0.0,
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._binary(
            other, lambda a, b: a / b,
            lambda a, b: 1.0 / b, lambda a, b: -a / (b * b),
            lambda a, b: 0.0, lambda a, b: -1.0 / (b * b), lambda a, b: 2.0 * a / (b * b * b),
        )

    def __rtruediv__(self, other):
        return self._coerce(other).__truediv__(self)

    def __neg__(self):
        return Dual2(-self.val, -self.dot, -self.hess)

    def __pos__(self):
        return self

    def __pow__(self, p):
        if isinstance(p, Dual2):
            raise TypeError("dual-valued exponents are not supported")
        p = float(p)
        return self._unary(
            lambda v: v**p,
            lambda v: p * v ** (p - 1.0),
            lambda v: p * (p - 1.0) * v ** (p - 2.0),
        )

    def __lt__(self, other):
        return self.val < value_of(other)

    def __le__(self, other):
        return self.val <= value_of(other)

    def __gt__(self, other):
        return self.val > value_of(other)

    def __ge__(self, other):
        return self.val >= value_of(other)

    def _unary(self, fval, fp, fpp):
        g, h = fp(self.val), fpp(self.val)
        hess = g * self.hess + h * (self.dot[:, None] * self.dot[None, :])
        return Dual2(fval(self.val), g * self.dot, hess)

    def clip(self, a_min=None, a_max=None, **kwargs):
        return _clip_impl(self, a_min, a_max)

    def __array_ufunc__(self, ufunc, method, *inputs, **kwargs):
        if method != "__call__" or kwargs.get("out") is not None:
            return NotImplemented
        return _apply_ufunc(Dual2, ufunc.__name__, inputs)


_UNARY_RULES = {
    "sin": (np.sin, np.cos, lambda v: -np.sin(v)),
    "cos": (np.cos, lambda v: -np.sin(v), lambda v: -np.cos(v)),
    "exp": (np.exp, np.exp, np.exp),
    "log": (np.log, lambda v: 1.0 / v, lambda v: -1.0 / (v * v)),
    "sqrt": (np.sqrt, lambda v: 0.5 / np.sqrt(v), lambda v: -0.25 * v**-1.5),
    "tanh": (
        np.tanh,
        lambda v: 1.0 - np.tanh(v) ** 2,
        lambda v: -2.0 * np.tanh(v) * (1.0 - np.tanh(v) ** 2),
    ),
    "square": (np.square, lambda v: 2.0 * v, lambda v: 2.0 * np.ones_like(v)),
    "negative": (lambda v: -v, lambda v: -np.ones_like(np.asarray(v, dtype=float)), lambda v: 0.0),
    "positive": (lambda v: v, lambda v: np.ones_like(np.asarray(v, dtype=float)), lambda v: 0.0),
    "absolute": (np.abs, np.sign, lambda v: 0.0),
    "fabs": (np.abs, np.sign, lambda v: 0.0),
}

_BINARY_OPS = {
    "add": lambda a, b: a + b,
    "subtract": lambda a, b: a - b,
    "multiply": lambda a, b: a * b,
    "true_divide": lambda a, b: a / b,
    "divide": lambda a, b: a / b,
}

_COMPARISONS = {
    "greater": np.greater,
    "greater_equal": np.greater_equal,
    "less": np.less,
    "less_equal": np.less_equal,
    "equal": np.equal,
    "not_equal": np.not_equal,
    "isfinite": np.isfinite,
    "isnan": np.isnan,
    "sign": np.sign,
}


def _apply_ufunc(cls, name, inputs):
    if name in _BINARY_OPS:
        a, b = inputs
        if isinstance(a, cls):
            return _BINARY_OPS[name](a, b)
        return _rewrap_left(cls, _BINARY_OPS[name], a, b)
    if name in _UNARY_RULES:
        (x,) = inputs
        fval, fp, fpp = _UNARY_RULES[name]
        if cls is Dual:
            return x._unary(fval, fp)
        return x._unary(fval, fp, fpp)
    if name == "power":
        a, b = inputs
        if isinstance(b, (Dual, Dual2)):
            return NotImplemented
        return a.__pow__(b)
    if name in _COMPARISONS:
        vals = [value_of(x) for x in inputs]
        return _COMPARISONS[name](*vals)
    if name in ("maximum", "minimum"):
        a, b = inputs
        take_a = np.greater_equal(value_of(a), value_of(b))
        if name == "minimum":
            take_a = ~take_a
        return where(take_a, a, b)
    if name == "clip":
        x, lo, hi = inputs
        if isinstance(lo, (Dual, Dual2)) or isinstance(hi, (Dual, Dual2)):
            return NotImplemented
        return _clip_impl(x, lo, hi)
    return NotImplemented


def _clip_impl(x, lo, hi):
    out = x
    if lo is not None:
        out = where(value_of(out) < lo, lo, out)
    if hi is not None:
        out = where(value_of(out) > hi, hi, out)
    return out


def _rewrap_left(cls, op, a, b):
    # plain-left operand: let the dual's reflected operator handle it
    if op is _BINARY_OPS["subtract"]:
        return b.__rsub__(a)
    if op is _BINARY_OPS["true_divide"]:
        return b.__rtruediv__(a)
    return op(b, a)


def value_of(x):
    """Value part of a dual, or the argument itself if it is plain."""
    if isinstance(x, (Dual, Dual2)):
        return x.val
    return x


def dot_of(x, nseeds: int):
    if isinstance(x, (Dual, Dual2)):
        return x.dot
    return np.zeros((nseeds,) + np.shape(np.asarray(x, dtype=float)))


def where(cond, a, b):
    """Branch on a boolean (array) condition; differentiates each branch."""
    cond = np.asarray(value_of(cond), dtype=bool)
    if not isinstance(a, (Dual, Dual2)) and not isinstance(b, (Dual, Dual2)):
        return np.where(cond, a, b)
    ref = a if isinstance(a, (Dual, Dual2)) else b
    a = ref._coerce(a) if not isinstance(a, type(ref)) else a
    b = ref._coerce(b) if not isinstance(b, type(ref)) else b
    val = np.where(cond, a.val, b.val)
    nd = np.ndim(val)
    ad = _aligned_dot(a.dot, np.ndim(a.val), nd)
    bd = _aligned_dot(b.dot, np.ndim(b.val), nd)
    dot = np.where(cond, ad, bd)
    if isinstance(ref, Dual):
        return Dual(val, dot)
    ah = _aligned_hess(a.hess, np.ndim(a.val), nd)
    bh = _aligned_hess(b.hess, np.ndim(b.val), nd)
    return Dual2(val, dot, np.where(cond, ah, bh))


def seed(values: Sequence) -> list[Dual]:
    """Lift a list of scalars/arrays to Duals, one seed direction per entry."""
    k = len(values)
    out = []
    for i, v in enumerate(values):
        s = np.shape(np.asarray(v, dtype=float))
        dot = np.zeros((k,) + s)
        dot[i] = 1.0
        out.append(Dual(v, dot))
    return out


def seed2(values: Sequence) -> list[Dual2]:
    """Second-order version of :func:`seed`."""
    k = len(values)
    out = []
    for i, v in enumerate(values):
        s = np.shape(np.asarray(v, dtype=float))
        dot = np.zeros((k,) + s)
        dot[i] = 1.0
        out.append(Dual2(v, dot, np.zeros((k, k) + s)))
    return out


def _seed_vector(x: np.ndarray) -> Dual:
    n = x.shape[0]
    return Dual(np.asarray(x, dtype=float), np.eye(n))


def value_and_grad(f: Callable, x: np.ndarray) -> tuple[float, np.ndarray]:
    """Evaluate a scalar function and its gradient in one forward sweep."""
    out = f(_seed_vector(np.asarray(x, dtype=float)))
    if isinstance(out, (Dual, Dual2)):
        return float(out.val), np.asarray(out.dot, dtype=float).copy()
    return float(out), np.zeros(len(x))


def _gather(out, nseeds: int) -> tuple[np.ndarray, np.ndarray]:
    """Flatten a function's output to (values, seed-major dot array).

    Accepts a dual with scalar or array payload, a plain scalar/array, or a
    sequence (possibly an object array) mixing dual and plain entries, which is
    what componentwise-constructed model fields return.
    """
    if isinstance(out, (Dual, Dual2)):
        val = np.atleast_1d(np.asarray(out.val, dtype=float))
        dot = np.asarray(out.dot, dtype=float).reshape(nseeds, -1)
        return val.ravel(), dot
    arr = np.asarray(out)
    if arr.dtype == object:
        flat = arr.ravel()
        val = np.array([float(value_of(e)) for e in flat])
        dot = np.zeros((nseeds, flat.size))
        for j, e in enumerate(flat):
            if isinstance(e, (Dual, Dual2)):
                dot[:, j] = np.asarray(e.dot, dtype=float)
        return val, dot
    val = np.atleast_1d(arr.astype(float)).ravel()
    return val, np.zeros((nseeds, val.size))


def jacobian(f: Callable, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Dense Jacobian of a vector function via one n-seed forward sweep."""
    x = np.asarray(x, dtype=float)
    out = f(_seed_vector(x))
    val, dot = _gather(out, x.size)
    return val, dot.T.copy()


def derivatives(f: Callable, x: np.ndarray):
    """Value plus gradient (scalar f) or Jacobian (vector f)."""
    x = np.asarray(x, dtype=float)
    out = f(_seed_vector(x))
    val, dot = _gather(out, x.size)
    scalar_out = not isinstance(out, (list, tuple)) and np.ndim(value_of(out)) == 0
    if val.size == 1 and scalar_out:
        return float(val[0]), dot[:, 0].copy()
    return val, dot.T.copy()


def hessian(f: Callable, x: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    """Value, gradient and dense Hessian of a scalar function."""
    x = np.asarray(x, dtype=float)
    n = x.size
    d = Dual2(x, np.eye(n), np.zeros((n, n, n)))
    out = f(d)
    if isinstance(out, Dual2):
        return float(out.val), out.dot.copy(), out.hess.copy()
    return float(out), np.zeros(n), np.zeros((n, n))


def greedy_column_groups(pattern: sparse.spmatrix) -> np.ndarray:
    """Group structurally non-conflicting Jacobian columns.

    Two columns conflict when some row contains both.  Returns an int array of
    group ids; columns in one group can share a single seed direction.
    """
    pat = sparse.csc_matrix(pattern, dtype=bool)
    n = pat.shape[1]
    adj = (pat.T @ pat).tocsr()
    groups = np.full(n, -1, dtype=int)
    order = np.argsort(-np.diff(adj.indptr))  # high degree first
    for col in order:
        nbrs = adj.indices[adj.indptr[col] : adj.indptr[col + 1]]
        used = set(groups[nbrs[groups[nbrs] >= 0]].tolist())
        g = 0
        while g in used:
            g += 1
        groups[col] = g
    return groups


def colored_jacobian(
    f: Callable, x: np.ndarray, pattern: sparse.spmatrix
) -> tuple[np.ndarray, sparse.csr_matrix]:
    """Sparse Jacobian via column grouping: one seed per group of columns."""
    x = np.asarray(x, dtype=float)
    pat = sparse.coo_matrix(pattern)
    groups = greedy_column_groups(pat)
    k = int(groups.max()) + 1 if groups.size else 0
    dot = np.zeros((k, x.size))
    dot[groups, np.arange(x.size)] = 1.0
    out = f(Dual(x, dot))
    val, out_dot = _gather(out, k)
    data = out_dot[groups[pat.col], pat.row]
    jac = sparse.csr_matrix((data, (pat.row, pat.col)), shape=pat.shape)
    return val, jac
