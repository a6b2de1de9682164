"""Candidate point generation and maxvol-based point selection."""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg
from scipy.special import ndtri

from .errors import ConvergenceError, DegeneracyError, ParameterError

MAXVOL_TOL = 0.01
MAX_SWAPS = 200


@dataclass(frozen=True)
class PointSet:
    """Sample points, one per row, plus how they were generated."""

    points: np.ndarray
    provenance: str
    seed: int

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.shape[0] == 0:
            raise ParameterError("a point set must contain at least one point")
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return self.points.shape[0]

    @property
    def dim(self):
        return self.points.shape[1]

    def subset(self, rows, provenance="maxvol-reduced"):
        return PointSet(self.points[np.asarray(rows)], provenance, self.seed)

    def to_csv(self, path=None, header=None):
        buf = io.StringIO()
        if header:
            buf.write(f"# {header}\n")
        buf.write(f"# seed={self.seed} provenance={self.provenance}\n")
        np.savetxt(buf, self.points, delimiter=",", fmt="%.17g")
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path):
        text = Path(path).read_text()
        seed, provenance = 0, "uniform"
        for line in text.splitlines():
            if line.startswith("#") and "seed=" in line:
                for tok in line[1:].split():
                    key, _, val = tok.partition("=")
                    if key == "seed":
                        seed = int(val)
                    elif key == "provenance":
                        provenance = val
        pts = np.loadtxt(io.StringIO(text), delimiter=",", comments="#", ndmin=2)
        return cls(pts, provenance, seed)


def _check_count(n):
    if int(n) != n or n < 1:
        raise ParameterError(f"number of points must be a positive integer, got {n}")
    return int(n)


def uniform_random(box, n, seed):
    """``n`` i.i.d. uniform points in ``box``."""
    n = _check_count(n)
    rng = np.random.default_rng(seed)
    u = rng.random((n, box.dim))
    return PointSet(box.lower + u * (box.upper - box.lower), "uniform", int(seed))


def lhs(box, n, seed):
    """Latin hypercube design: every dimension has one point per stratum."""
    n = _check_count(n)
    rng = np.random.default_rng(seed)
    l = box.dim
    strata = np.stack([rng.permutation(n) for _ in range(l)], axis=1)
    u = (strata + rng.random((n, l))) / n
    return PointSet(box.lower + u * (box.upper - box.lower), "lhs", int(seed))


def unit_to_normal(points):
    """Map points of the open unit cube to standard-normal coordinates."""
    u = np.clip(np.asarray(points, dtype=float), 1e-16, 1.0 - 1e-16)
    return ndtri(u)


def _dominant_rows(C, rows, tol, max_swaps):
    """Swap rows into ``rows`` until ``|C @ inv(C[rows])| <= 1 + tol``."""
    rows = np.array(rows, dtype=int)
    try:
        B = scipy.linalg.solve(C[rows].T, C.T).T
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise DegeneracyError("initial maxvol block is singular") from exc
    swaps = 0
    while True:
        i, j = np.unravel_index(np.argmax(np.abs(B)), B.shape)
        if abs(B[i, j]) <= 1.0 + tol:
            return rows, swaps
        if swaps == max_swaps:
            raise ConvergenceError(f"maxvol did not converge within {max_swaps} swaps")
        # rank-one update of B after replacing row rows[j] by row i
        col = B[:, j].copy()
        row = B[i].copy()
        row[j] -= 1.0
        B -= np.outer(col, row) / B[i, j]
        rows[j] = i
        swaps += 1


def maxvol(C, tol=MAXVOL_TOL, max_swaps=MAX_SWAPS, n_starts=8, seed=0):
    """Rows of an ``(n, r)`` matrix whose ``r x r`` block is dominant.

    A single start converges to a local maximum of ``|det|``.  The first
    start is the rank-revealing QR pivot choice; ``n_starts`` further starts
    from seeded random non-singular blocks are tried and the block with the
    largest volume is kept.  Every returned block is dominant.

    Returns
    -------
    rows : ndarray of int, length r
    coef : ndarray, shape (n, r)
        ``C @ inv(C[rows])``; entries are bounded by ``1 + tol``.
    """
    C = np.asarray(C, dtype=float)
    n, r = C.shape
    if n < r:
        raise ParameterError(f"need at least as many rows ({n}) as columns ({r})")
    _, R, piv = scipy.linalg.qr(C.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag.size < r or diag[-1] <= 1e-13 * max(diag[0], 1e-300):
        raise DegeneracyError("candidate matrix is rank deficient")
    starts = [piv[:r]]
    rng = np.random.default_rng(seed)
    attempts = 0
    while len(starts) < n_starts + 1 and n > r and attempts < 20 * (n_starts + 1):
        attempts += 1
        cand = rng.choice(n, r, replace=False)
        if np.linalg.cond(C[cand]) < 1e12:
            starts.append(cand)

    best_rows, best_logvol = None, -np.inf
    for start in starts:
        rows, _ = _dominant_rows(C, start, tol, max_swaps)
        _, logvol = np.linalg.slogdet(C[rows])
        if logvol > best_logvol + 1e-12:
            best_rows, best_logvol = rows, logvol
    coef = scipy.linalg.solve(C[best_rows].T, C.T).T
    return best_rows, coef


def maxvol_select(C, m, tol=MAXVOL_TOL, max_swaps=MAX_SWAPS, n_starts=8, seed=0):
    """Choose ``m >= r`` rows of ``C`` with large (Gram) volume.

    The first ``r`` rows come from :func:`maxvol`; the remaining ``m - r``
    are added one at a time, each maximizing ``det(C_S^T C_S)``.
    """
    C = np.asarray(C, dtype=float)
    n, r = C.shape
    if int(m) != m or m < r:
        raise ParameterError(f"target row count {m} must be an integer >= {r}")
    if m > n:
        raise ParameterError(f"cannot select {m} rows from {n}")
    rows, _ = maxvol(C, tol, max_swaps, n_starts, seed)
    selected = list(rows)
    if m == r:
        return np.array(selected, dtype=int)

    # scores s_i = c_i (C_S^T C_S)^{-1} c_i^T; adding row k scales det by 1 + s_k
    G_inv = np.linalg.inv(C[rows].T @ C[rows])
    scores = np.einsum("ij,jk,ik->i", C, G_inv, C)
    chosen = np.zeros(n, dtype=bool)
    chosen[rows] = True
    scores[chosen] = -np.inf
    for _ in range(int(m) - r):
        k = int(np.argmax(scores))
        c = C[k]
        w = G_inv @ c
        denom = 1.0 + c @ w
        v = C @ w
        G_inv -= np.outer(w, w) / denom
        scores -= v**2 / denom
        chosen[k] = True
        scores[chosen] = -np.inf
        selected.append(k)
    return np.array(selected, dtype=int)
