"""Univariate and tensor-product polynomial bases with first derivatives.

Chebyshev and monomial bases live on a rectangular box that is mapped
affinely onto ``[-1, 1]^l``; Hermite bases are evaluated in standard-normal
coordinates and carry no box.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError
from .indexset import MultiIndexSet

CHEBYSHEV = "chebyshev"
HERMITE = "hermite"
MONOMIAL = "monomial"
KINDS = (CHEBYSHEV, HERMITE, MONOMIAL)


class DomainWarning(UserWarning):
    """Chebyshev argument outside its native interval [-1, 1]."""


@dataclass(frozen=True)
class BasisFamily:
    kind: str
    normalized: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"unknown basis family {self.kind!r}; expected one of {KINDS}")
        if self.normalized and self.kind != HERMITE:
            raise ParameterError("only Hermite polynomials support normalization")

    @classmethod
    def chebyshev(cls):
        return cls(CHEBYSHEV)

    @classmethod
    def hermite(cls, normalized=True):
        return cls(HERMITE, normalized)

    @classmethod
    def monomial(cls):
        return cls(MONOMIAL)


@dataclass(frozen=True)
class DomainBox:
    lower: np.ndarray
    upper: np.ndarray

    def __init__(self, lower, upper):
        lo = np.atleast_1d(np.asarray(lower, dtype=float)).copy()
        hi = np.atleast_1d(np.asarray(upper, dtype=float)).copy()
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ParameterError("box bounds must be 1-D arrays of equal length")
        if not np.all(lo < hi):
            raise ParameterError("box requires lower < upper in every dimension")
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def cube(cls, lower, upper, dim):
        return cls(np.full(dim, lower, dtype=float), np.full(dim, upper, dtype=float))

    @property
    def dim(self):
        return self.lower.size

    def to_unit(self, x):
        """Affine map from the box onto ``[-1, 1]^l``."""
        return (2.0 * np.asarray(x, dtype=float) - self.lower - self.upper) / (self.upper - self.lower)

    def from_unit(self, t):
        return 0.5 * (np.asarray(t, dtype=float) + 1.0) * (self.upper - self.lower) + self.lower

    def chain_factor(self):
        return 2.0 / (self.upper - self.lower)

    def contains(self, x, tol=0.0):
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def __eq__(self, other):
        return (
            isinstance(other, DomainBox)
            and np.array_equal(self.lower, other.lower)
            and np.array_equal(self.upper, other.upper)
        )

    def __hash__(self):
        return hash((self.lower.tobytes(), self.upper.tobytes()))


def _check_degree(n):
    if int(n) != n or n < 0:
        raise ParameterError(f"polynomial degree must be a non-negative integer, got {n}")


def _flag_chebyshev_range(t):
    if np.any(np.abs(t) > 1.0 + 1e-12):
        warnings.warn("Chebyshev polynomial evaluated outside [-1, 1]", DomainWarning, stacklevel=3)


def tables(family, nmax, t):
    """Values and derivatives of degrees ``0..nmax`` at every entry of ``t``.

    Returns two arrays of shape ``t.shape + (nmax + 1,)``.
    """
    t = np.asarray(t, dtype=float)
    vals = np.empty(t.shape + (nmax + 1,))
    ders = np.empty_like(vals)
    vals[..., 0] = 1.0
    ders[..., 0] = 0.0
    if nmax == 0:
        return vals, ders

    if family.kind == CHEBYSHEV:
        # dT_n/dt = n U_{n-1}, U from the second-kind recurrence
        u_prev = np.ones_like(t)
        u_cur = 2.0 * t
        vals[..., 1] = t
        ders[..., 1] = 1.0
        for k in range(1, nmax):
            vals[..., k + 1] = 2.0 * t * vals[..., k] - vals[..., k - 1]
            ders[..., k + 1] = (k + 1) * u_cur
            u_prev, u_cur = u_cur, 2.0 * t * u_cur - u_prev
    elif family.kind == HERMITE:
        vals[..., 1] = t
        for k in range(1, nmax):
            vals[..., k + 1] = t * vals[..., k] - k * vals[..., k - 1]
        for k in range(1, nmax + 1):
            ders[..., k] = k * vals[..., k - 1]
        if family.normalized:
            norms = np.sqrt([math.factorial(k) for k in range(nmax + 1)], dtype=float)
            vals /= norms
            ders /= norms
    else:
        for k in range(1, nmax + 1):
            vals[..., k] = vals[..., k - 1] * t
            ders[..., k] = k * vals[..., k - 1]
    return vals, ders


def eval_1d(family, n, t):
    """Degree-``n`` polynomial of ``family`` at ``t``.

    >>> eval_1d(BasisFamily.chebyshev(), 2, 0.5)
    -0.5
    """
    _check_degree(n)
    if family.kind == CHEBYSHEV:
        _flag_chebyshev_range(t)
    vals, _ = tables(family, int(n), t)
    out = vals[..., int(n)]
    return float(out) if out.ndim == 0 else out


def deriv_1d(family, n, t):
    """First derivative of the degree-``n`` polynomial at ``t``."""
    _check_degree(n)
    if family.kind == CHEBYSHEV:
        _flag_chebyshev_range(t)
    _, ders = tables(family, int(n), t)
    out = ders[..., int(n)]
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class TensorBasis:
    """Tensor-product basis ``P_j(x) = prod_k f_{beta_jk}(t_k)``.

    ``t`` is ``x`` mapped from ``box`` onto ``[-1, 1]^l`` when a box is
    given, and ``x`` itself otherwise.
    """

    family: BasisFamily
    index_set: MultiIndexSet
    box: DomainBox | None = None
    _idx: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.box is not None and self.box.dim != self.index_set.dim:
            raise ParameterError(
                f"box dimension {self.box.dim} does not match index-set dimension {self.index_set.dim}"
            )
        object.__setattr__(self, "_idx", self.index_set.as_array())

    @property
    def dim(self):
        return self.index_set.dim

    @property
    def size(self):
        return len(self.index_set)

    def __len__(self):
        return self.size

    @property
    def orthonormal(self):
        """True when the basis is orthonormal under the standard Gaussian measure."""
        return (
            self.family.kind == HERMITE
            and self.family.normalized
            and self.box is None
            and self.index_set.indices[0] == (0,) * self.dim
        )

    def with_index_set(self, index_set):
        return TensorBasis(self.family, index_set, self.box)

    def _native(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise ParameterError(f"points must have {self.dim} coordinates, got shape {X.shape}")
        T = self.box.to_unit(X) if self.box is not None else X
        if self.family.kind == CHEBYSHEV:
            _flag_chebyshev_range(T)
        return T

    def _factor_tables(self, T):
        nmax = int(self._idx.max()) if self._idx.size else 0
        vals, ders = tables(self.family, nmax, T)  # (n, l, nmax+1)
        cols = np.arange(self.dim)
        V = vals[:, cols[None, :], self._idx]  # (n, M, l)
        D = ders[:, cols[None, :], self._idx]
        return V, D

    def design_matrix(self, X):
        """``(n, M)`` matrix of all basis values at the rows of ``X``."""
        T = self._native(X)
        V, _ = self._factor_tables(T)
        return V.prod(axis=2)

    def design_gradients(self, X):
        """``(l, n, M)`` array; slice ``k`` holds d/dx_k of every basis function."""
        T = self._native(X)
        V, D = self._factor_tables(T)
        out = np.empty((self.dim, T.shape[0], self.size))
        for k in range(self.dim):
            others = np.delete(V, k, axis=2).prod(axis=2)
            out[k] = D[:, :, k] * others
        if self.box is not None:
            out *= self.box.chain_factor()[:, None, None]
        return out

    def design_row(self, x):
        return self.design_matrix(np.asarray(x, dtype=float).reshape(1, -1))[0]

    def design_grad_rows(self, x):
        return self.design_gradients(np.asarray(x, dtype=float).reshape(1, -1))[:, 0, :]


def _single(basis, idx):
    idx = tuple(int(b) for b in idx)
    if len(idx) != basis.dim:
        raise ParameterError(f"multi-index {idx} has length {len(idx)}, expected {basis.dim}")
    for b in idx:
        _check_degree(b)
    return TensorBasis(basis.family, MultiIndexSet(basis.dim, (idx,)), basis.box)


def eval_multi(basis, idx, x):
    """Value of the tensor polynomial with degrees ``idx`` at point ``x``."""
    return float(_single(basis, idx).design_row(x)[0])


def grad_multi(basis, idx, x):
    """Gradient (length ``l``) of the tensor polynomial with degrees ``idx`` at ``x``."""
    return _single(basis, idx).design_grad_rows(x)[:, 0]
