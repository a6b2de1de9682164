"""Gradient-enhanced least-squares fitting of polynomial surrogates.

The linear system stacks one block of function-value rows followed by one
block per partial derivative::

    [ P_j(xi_i)          ]         [ f(xi_i)          ]
    [ d_1 P_j(xi_i)      ] alpha = [ d_1 f(xi_i)      ]
    [ ...                ]         [ ...              ]
    [ d_l P_j(xi_i)      ]         [ d_l f(xi_i)      ]

each block running over the ``m`` sample points in the same order.
"""

from __future__ import annotations

import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .basis import BasisFamily, DomainBox, TensorBasis
from .errors import DegeneracyError, EvaluationError, ParameterError
from .indexset import MultiIndexSet
from .sampling import PointSet, lhs, maxvol_select, uniform_random, unit_to_normal
from .stats import InputDistribution

RANK_TOL = 1e-10
FORMAT_VERSION = 1


@dataclass(frozen=True)
class GradSamples:
    """Function values and (optionally) gradients at ``m`` points."""

    points: np.ndarray
    values: np.ndarray
    gradients: np.ndarray | None = None

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        vals = np.asarray(self.values, dtype=float).reshape(-1)
        if vals.size != pts.shape[0]:
            raise ParameterError(f"{vals.size} values for {pts.shape[0]} points")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "values", vals)
        if self.gradients is not None:
            grads = np.asarray(self.gradients, dtype=float).reshape(pts.shape[0], -1)
            if grads.shape != pts.shape:
                raise ParameterError(f"gradient array shape {grads.shape} != points shape {pts.shape}")
            object.__setattr__(self, "gradients", grads)

    @property
    def m(self):
        return self.points.shape[0]

    @property
    def dim(self):
        return self.points.shape[1]

    @property
    def with_derivatives(self):
        return self.gradients is not None

    def without_derivatives(self):
        return GradSamples(self.points, self.values, None)

    @classmethod
    def from_csv(cls, path, with_derivatives=None):
        """Read columns ``x_1..x_l, f[, df_1..df_l]``."""
        text = Path(path).read_text()
        data = np.loadtxt(io.StringIO(text), delimiter=",", comments="#", ndmin=2)
        ncol = data.shape[1]
        if with_derivatives is None:
            names = [
                ln[1:].strip().split(",")
                for ln in text.splitlines()
                if ln.startswith("#") and ln[1:].strip().startswith("x_")
            ]
            if names:
                with_derivatives = any(n.strip().startswith("df_") for n in names[-1])
            else:
                # no column header: odd column counts are read as x, f, grad
                with_derivatives = ncol % 2 == 1 and ncol >= 3
        if with_derivatives:
            if ncol % 2 == 0:
                raise ParameterError(f"{ncol} columns cannot hold x, f and a gradient")
            l = (ncol - 1) // 2
            return cls(data[:, :l], data[:, l], data[:, l + 1 :])
        return cls(data[:, :-1], data[:, -1], None)

    def to_csv(self, path=None, header=None):
        cols = [self.points, self.values[:, None]]
        if self.with_derivatives:
            cols.append(self.gradients)
        buf = io.StringIO()
        if header:
            buf.write(f"# {header}\n")
        names = [f"x_{k + 1}" for k in range(self.dim)] + ["f"]
        if self.with_derivatives:
            names += [f"df_{k + 1}" for k in range(self.dim)]
        buf.write("# " + ",".join(names) + "\n")
        np.savetxt(buf, np.hstack(cols), delimiter=",", fmt="%.17g")
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


@dataclass(frozen=True)
class GradSystem:
    matrix: np.ndarray
    rhs: np.ndarray
    m: int
    dim: int
    with_derivatives: bool

    @property
    def shape(self):
        return self.matrix.shape


@dataclass(frozen=True)
class FitReport:
    residual_norm: float
    rank: int
    sigma_max: float
    sigma_min: float
    n_rows: int
    n_cols: int

    @property
    def full_rank(self):
        return self.rank == self.n_cols


@dataclass(frozen=True)
class Surrogate:
    """``f_hat(x) = sum_j alpha_j P_j(x)``.

    When ``input_map`` is set the basis lives in standard coordinates and
    the surrogate accepts physical inputs, converting them first.
    """

    basis: TensorBasis
    coefficients: np.ndarray
    report: FitReport | None = None
    input_map: InputDistribution | None = None
    points: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        coef = np.asarray(self.coefficients, dtype=float).reshape(-1)
        if coef.size != self.basis.size:
            raise ParameterError(f"{coef.size} coefficients for a basis of size {self.basis.size}")
        object.__setattr__(self, "coefficients", coef)

    @property
    def dim(self):
        return self.basis.dim

    def _standard(self, X):
        X = np.asarray(X, dtype=float)
        if self.input_map is not None:
            X = self.input_map.to_standard(X)
        return X

    def __call__(self, X):
        """Surrogate values; a single point gives a float, ``(n, l)`` gives ``(n,)``."""
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        out = self.basis.design_matrix(self._standard(X)) @ self.coefficients
        return float(out[0]) if single else out

    def gradient(self, X):
        """Gradient; ``(l,)`` for one point, ``(n, l)`` for many."""
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        G = np.einsum("knm,m->nk", self.basis.design_gradients(self._standard(X)), self.coefficients)
        if self.input_map is not None:
            G = G / self.input_map.scale()
        return G[0] if single else G

    def to_text(self):
        b = self.basis
        lines = [
            f"gradfit-surrogate {FORMAT_VERSION}",
            f"family {b.family.kind}",
            f"normalized {int(b.family.normalized)}",
            f"dim {b.dim}",
        ]
        if b.box is None:
            lines.append("box none")
        else:
            lines.append("box")
            lines += [f"{lo!r} {hi!r}" for lo, hi in zip(b.box.lower.tolist(), b.box.upper.tolist())]
        lines.append("input-map " + ("none" if self.input_map is None else self.input_map.to_text()))
        lines.append(f"indexset {b.size}")
        lines += b.index_set.to_text().splitlines()
        lines.append(f"coefficients {b.size}")
        lines += [f"{c:.17g}" for c in self.coefficients]
        return "\n".join(lines) + "\n"

    def save(self, path):
        Path(path).write_text(self.to_text())

    @classmethod
    def from_text(cls, text):
        lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
        it = iter(lines)

        def expect(key):
            try:
                parts = next(it).split(maxsplit=1)
            except StopIteration:
                raise ParameterError(f"surrogate file truncated before {key!r}") from None
            if parts[0] != key:
                raise ParameterError(f"surrogate file: expected {key!r}, found {parts[0]!r}")
            return parts[1] if len(parts) > 1 else ""

        version = int(expect("gradfit-surrogate"))
        if version != FORMAT_VERSION:
            raise ParameterError(f"unsupported surrogate format version {version}")
        family = BasisFamily(expect("family"), bool(int(expect("normalized"))))
        dim = int(expect("dim"))
        box = None
        if expect("box") != "none":
            bounds = np.array([[float(v) for v in next(it).split()] for _ in range(dim)])
            box = DomainBox(bounds[:, 0], bounds[:, 1])
        imap = expect("input-map")
        input_map = None if imap == "none" else InputDistribution.parse(imap)
        size = int(expect("indexset"))
        iset = MultiIndexSet.from_text("\n".join(next(it) for _ in range(size + 1)))
        ncoef = int(expect("coefficients"))
        coef = np.array([float(next(it)) for _ in range(ncoef)])
        return cls(TensorBasis(family, iset, box), coef, None, input_map)

    @classmethod
    def load(cls, path):
        return cls.from_text(Path(path).read_text())


def assemble(basis, samples, deriv_weight=1.0):
    """Build the stacked value/gradient least-squares system."""
    if samples.dim != basis.dim:
        raise ParameterError(f"samples have {samples.dim} coordinates, basis has {basis.dim}")
    blocks = [basis.design_matrix(samples.points)]
    rhs = [samples.values]
    if samples.with_derivatives:
        grads = basis.design_gradients(samples.points)
        for k in range(basis.dim):
            blocks.append(deriv_weight * grads[k])
            rhs.append(deriv_weight * samples.gradients[:, k])
    return GradSystem(np.vstack(blocks), np.concatenate(rhs), samples.m, basis.dim, samples.with_derivatives)


def _matrix(system):
    return system.matrix if isinstance(system, GradSystem) else np.asarray(system, dtype=float)


def numeric_rank(system, rank_tol=RANK_TOL):
    """Number of singular values above ``rank_tol * sigma_max``."""
    s = np.linalg.svd(_matrix(system), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rank_tol * s[0]))


def solve_lsq(system, rank_tol=RANK_TOL):
    """Minimum-norm least-squares solution by truncated SVD.

    Returns
    -------
    coefficients : ndarray
    report : FitReport
    """
    A = _matrix(system)
    F = system.rhs if isinstance(system, GradSystem) else None
    if F is None:
        raise ParameterError("solve_lsq needs a GradSystem with a right-hand side")
    if A.size == 0:
        raise DegeneracyError("empty system")
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    if s[0] == 0.0:
        raise DegeneracyError("system matrix is identically zero")
    keep = s > rank_tol * s[0]
    alpha = Vt[keep].T @ ((U[:, keep].T @ F) / s[keep])
    report = FitReport(
        residual_norm=float(np.linalg.norm(A @ alpha - F)),
        rank=int(keep.sum()),
        sigma_max=float(s[0]),
        sigma_min=float(s[-1]),
        n_rows=A.shape[0],
        n_cols=A.shape[1],
    )
    return alpha, report


def _evaluate(fn, X, workers=None, what="function"):
    def one(x):
        try:
            return np.asarray(fn(x), dtype=float)
        except Exception as exc:
            raise EvaluationError(f"{what} evaluator failed at {x.tolist()}: {exc}", point=x) from exc

    if workers and workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            out = list(pool.map(one, X))
    else:
        out = [one(x) for x in X]
    return np.array(out)


def select_points(basis, m, n_candidates=None, sampler="uniform", seed=0, dist=None):
    """Steps 1-2 of the fitting procedure: draw candidates, maxvol-reduce to ``m``.

    Candidates are drawn in ``basis.box`` or, for a box-free basis, in
    standard-normal coordinates (mapped through ``dist`` when given).  The
    maxvol candidate matrix holds function rows for the first
    ``min(m, M)`` basis functions so that one selected row is one point.

    Returns the selected points in physical coordinates.
    """
    n_candidates = m if n_candidates is None else n_candidates
    if m > n_candidates:
        raise ParameterError(f"m={m} exceeds the number of candidates N={n_candidates}")
    if sampler not in ("uniform", "lhs"):
        raise ParameterError(f"unknown sampler {sampler!r}")
    draw = uniform_random if sampler == "uniform" else lhs
    if basis.box is not None:
        if dist is not None:
            raise ParameterError("an input distribution is only supported for box-free (Hermite) bases")
        cand = draw(basis.box, n_candidates, seed)
        std = cand.points
        phys = cand.points
    else:
        unit = DomainBox.cube(0.0, 1.0, basis.dim)
        cand = draw(unit, n_candidates, seed)
        std = unit_to_normal(cand.points)
        phys = std if dist is None else dist.from_standard(std)
        cand = PointSet(phys, cand.provenance, cand.seed)
    if n_candidates == m:
        return cand
    r = min(m, basis.size)
    C = basis.design_matrix(std)[:, :r]
    rows = maxvol_select(C, m)
    return cand.subset(rows)


def sample_function(f, grad, points, workers=None):
    """Evaluate ``f`` (and ``grad`` when not None) at every row of ``points``."""
    X = np.atleast_2d(np.asarray(points, dtype=float))
    values = _evaluate(f, X, workers, "function").reshape(-1)
    gradients = None
    if grad is not None:
        gradients = _evaluate(grad, X, workers, "gradient").reshape(X.shape)
    return GradSamples(X, values, gradients)


def fit_samples(basis, samples, rank_tol=RANK_TOL, deriv_weight=1.0, input_map=None):
    """Fit a surrogate to physical-coordinate samples."""
    if input_map is not None:
        samples = GradSamples(
            input_map.to_standard(samples.points),
            samples.values,
            None if samples.gradients is None else samples.gradients * input_map.scale(),
        )
    system = assemble(basis, samples, deriv_weight)
    alpha, report = solve_lsq(system, rank_tol)
    if report.rank < 1:
        raise DegeneracyError("system has numeric rank 0")
    pts = samples.points if input_map is None else input_map.from_standard(samples.points)
    return Surrogate(basis, alpha, report, input_map, pts)


def fit(
    f,
    grad,
    basis,
    m,
    n_candidates=None,
    sampler="uniform",
    seed=0,
    dist=None,
    rank_tol=RANK_TOL,
    deriv_weight=1.0,
    workers=None,
):
    """Fit a surrogate from point evaluations of ``f`` and, optionally, its gradient.

    Parameters
    ----------
    f : callable
        ``f(x) -> float`` for a 1-D point ``x``.
    grad : callable or None
        ``grad(x) -> (l,)`` array.  ``None`` fits on function values only.
    basis : TensorBasis
    m : int
        Number of points at which ``f`` is evaluated.
    n_candidates : int, optional
        Candidate count ``N >= m``; maxvol reduces ``N`` to ``m`` when larger.
    dist : InputDistribution, optional
        Physical input law for a box-free Hermite basis.
    """
    points = select_points(basis, m, n_candidates, sampler, seed, dist)
    samples = sample_function(f, grad, points.points, workers)
    return fit_samples(basis, samples, rank_tol, deriv_weight, dist)


def eval_surrogate(s, x):
    return s(x)


def grad_surrogate(s, x):
    return s.gradient(x)


def rel_l2_error(s, f, test_points, vectorized=False):
    """Discrete relative error ``||f - f_hat||_2 / ||f||_2`` over ``test_points``."""
    X = np.atleast_2d(np.asarray(test_points, dtype=float))
    if X.shape[0] < 1:
        raise ParameterError("need at least one test point")
    exact = np.asarray(f(X), dtype=float).reshape(-1) if vectorized else _evaluate(f, X).reshape(-1)
    norm = np.linalg.norm(exact)
    if norm == 0.0:
        raise DegeneracyError("reference function vanishes on every test point")
    return float(np.linalg.norm(exact - s(X)) / norm)


def interval_errors(s, f, lower, upper, n=100_001):
    """Continuous L2 and max-norm errors of a 1-D surrogate on ``[lower, upper]``.

    The L2 norm uses the trapezoid rule on ``n`` equispaced nodes; ``f``
    must accept a NumPy array.
    """
    if s.dim != 1:
        raise ParameterError("interval_errors is for 1-D surrogates")
    x = np.linspace(lower, upper, n)
    err = np.asarray(f(x), dtype=float) - s(x[:, None])
    return float(np.sqrt(np.trapezoid(err**2, x))), float(np.max(np.abs(err)))
