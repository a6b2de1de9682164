"""Multi-index sets for tensor-product polynomial bases.

Sets are truncated with the hyperbolic rule ``sum(beta_i**p) <= q**p``;
``p = 1`` gives the usual total-degree simplex, smaller ``p`` drops
mixed terms first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParameterError

_BOUNDARY_TOL = 1e-12


def _sort_key(beta):
    # graded, then descending lexicographic: (1,0) before (0,1)
    return (sum(beta), tuple(-b for b in beta))


@dataclass(frozen=True)
class MultiIndexSet:
    """Ordered, duplicate-free collection of multi-indices.

    Attributes
    ----------
    dim : int
        Number of variables ``l``.
    indices : tuple of tuple of int
        Degrees per variable, zero index first.
    p, q : float
        Hyperbolicity exponent and degree bound used to build the set.
        Sets built from explicit lists carry ``p = 1`` and ``q`` equal to
        the largest total degree.
    """

    dim: int
    indices: tuple
    p: float = 1.0
    q: float = 0.0

    def __post_init__(self):
        if self.dim < 1:
            raise ParameterError("dimension must be >= 1")
        seen = set()
        for beta in self.indices:
            if len(beta) != self.dim:
                raise ParameterError(f"index {beta} has length {len(beta)}, expected {self.dim}")
            if any(b < 0 for b in beta):
                raise ParameterError(f"negative degree in {beta}")
            if beta in seen:
                raise ParameterError(f"duplicate index {beta}")
            seen.add(beta)

    @classmethod
    def from_indices(cls, indices, p=1.0, q=None):
        """Build a set from an arbitrary iterable of indices, re-sorted graded-lex."""
        idx = sorted({tuple(int(b) for b in beta) for beta in indices}, key=_sort_key)
        if not idx:
            raise ParameterError("empty index list")
        if q is None:
            q = max(sum(beta) for beta in idx)
        return cls(len(idx[0]), tuple(idx), float(p), float(q))

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def __getitem__(self, j):
        return self.indices[j]

    def __contains__(self, beta):
        return tuple(beta) in set(self.indices)

    def as_array(self):
        """Indices as an ``(M, l)`` integer array."""
        return np.array(self.indices, dtype=int).reshape(len(self.indices), self.dim)

    def max_degree(self):
        return max((max(beta) for beta in self.indices), default=0)

    def prefix(self, size):
        """First ``size`` indices in graded order, as a new set."""
        if not 1 <= size <= len(self):
            raise ParameterError(f"prefix size {size} outside 1..{len(self)}")
        return MultiIndexSet(self.dim, self.indices[:size], self.p, self.q)

    def to_text(self):
        lines = [f"{self.dim} {self.q!r} {self.p!r}"]
        lines += [" ".join(str(b) for b in beta) for beta in self.indices]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
        if not rows or len(rows[0]) != 3:
            raise ParameterError("index-set header must be 'l q p'")
        dim, q, p = int(rows[0][0]), float(rows[0][1]), float(rows[0][2])
        indices = tuple(tuple(int(v) for v in r) for r in rows[1:])
        return cls(dim, indices, p, q)

    def save(self, path):
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path):
        return cls.from_text(Path(path).read_text())


def hyperbolic_set(l, q, p=1.0):
    """All multi-indices ``beta`` with ``sum(beta_i**p) <= q**p``.

    The comparison is inclusive with an absolute slack of 1e-12 so that
    boundary indices such as ``(2, 0, ...)`` at ``q = 2, p = 0.5`` are kept.

    Examples
    --------
    >>> hyperbolic_set(2, 2, 1.0).indices
    ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2))
    """
    if int(l) != l or l < 1:
        raise ParameterError(f"dimension must be a positive integer, got {l}")
    if not 0.0 < p <= 1.0:
        raise ParameterError(f"hyperbolicity p must lie in (0, 1], got {p}")
    if q < 0:
        raise ParameterError(f"degree bound q must be >= 0, got {q}")
    l = int(l)
    budget = float(q) ** p
    max_deg = int(math.floor(q + _BOUNDARY_TOL))
    powers = [float(b) ** p for b in range(max_deg + 1)]

    found = []

    # depth-first: remaining budget shrinks, so pruning keeps l=40 cheap
    def extend(prefix, remaining):
        if len(prefix) == l:
            found.append(tuple(prefix))
            return
        for b in range(max_deg + 1):
            cost = powers[b]
            if cost > remaining + _BOUNDARY_TOL:
                break
            prefix.append(b)
            extend(prefix, remaining - cost)
            prefix.pop()

    extend([], budget)
    found.sort(key=_sort_key)
    return MultiIndexSet(l, tuple(found), float(p), float(q))


def total_degree_set(l, q):
    return hyperbolic_set(l, q, 1.0)


def count_total_degree(l, q):
    """Number of ``l``-variate monomials of total degree at most ``q``."""
    if int(l) != l or l < 1 or int(q) != q or q < 0:
        raise ParameterError("l must be a positive integer and q a non-negative integer")
    return math.comb(int(l) + int(q), int(q))
