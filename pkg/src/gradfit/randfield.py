"""EOLE approximation of a Gaussian random field and its lognormal transform.

With node correlation matrix ``C`` (eigenpairs ``lam_i, phi_i``) the field
is approximated by

    g(x) = sum_{i<=N} xi_i / sqrt(lam_i) * phi_i . c(x),   c_j(x) = rho(x, eta_j)

with ``rho(x, y) = exp(-|x - y|^2 / sigma^2)`` and i.i.d. standard normal ``xi``.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

from .errors import ParameterError, TruncationError

EIG_FLOOR = 1e-12


def correlation(X, Y, sigma):
    """Squared-exponential correlation matrix between point sets."""
    return np.exp(-cdist(np.atleast_2d(X), np.atleast_2d(Y), "sqeuclidean") / sigma**2)


def grid_nodes(per_side=8, lower=-1.0, upper=1.0):
    """Regular ``per_side x per_side`` node grid on a square."""
    s = np.linspace(lower, upper, per_side)
    xx, yy = np.meshgrid(s, s, indexing="xy")
    return np.column_stack([xx.ravel(), yy.ravel()])


@dataclass(frozen=True)
class EoleModel:
    nodes: np.ndarray
    sigma: float
    eigvals: np.ndarray
    eigvecs: np.ndarray

    @property
    def n_terms(self):
        return self.eigvals.size

    def weights(self, x):
        """``(Q, N)`` matrix mapping ``xi`` to field values at the rows of ``x``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.nodes.shape[1]:
            raise ParameterError(f"query points have {x.shape[1]} coordinates, nodes have {self.nodes.shape[1]}")
        return correlation(x, self.nodes, self.sigma) @ self.eigvecs / np.sqrt(self.eigvals)

    def truncated_covariance(self):
        """Rank-``N`` reconstruction ``sum lam_i phi_i phi_i^T`` of the node correlation."""
        return (self.eigvecs * self.eigvals) @ self.eigvecs.T


def build_eole(nodes, sigma, n_terms):
    """Assemble the node correlation matrix and keep its ``n_terms`` leading eigenpairs."""
    nodes = np.atleast_2d(np.asarray(nodes, dtype=float))
    K = nodes.shape[0]
    if sigma <= 0:
        raise ParameterError(f"correlation length must be positive, got {sigma}")
    if int(n_terms) != n_terms or not 1 <= n_terms <= K:
        raise ParameterError(f"number of terms must be in 1..{K}, got {n_terms}")
    if K > 1:
        D = cdist(nodes, nodes)
        np.fill_diagonal(D, np.inf)
        if D.min() == 0.0:
            raise ParameterError("nodes must be distinct")
    C = correlation(nodes, nodes, sigma)
    lam, phi = np.linalg.eigh(C)
    order = np.argsort(lam)[::-1][: int(n_terms)]
    lam, phi = lam[order], phi[:, order]
    if lam[-1] <= EIG_FLOOR:
        raise TruncationError(
            f"eigenvalue {lam[-1]:.3e} at order {n_terms} is below {EIG_FLOOR}; use fewer terms or a coarser grid"
        )
    gram = phi.T @ phi
    if not np.allclose(gram, np.eye(phi.shape[1]), atol=1e-8, rtol=0):
        # re-orthonormalize; eigh output can drift for clustered eigenvalues
        phi, _ = np.linalg.qr(phi)
    return EoleModel(nodes, float(sigma), lam, phi)


def sample_gaussian_field(model, xi, x):
    """Field values for one ``xi`` (N,) -> (Q,) or a batch ``(S, N)`` -> ``(S, Q)``."""
    xi = np.asarray(xi, dtype=float)
    if xi.shape[-1] != model.n_terms:
        raise ParameterError(f"xi has {xi.shape[-1]} entries, model has {model.n_terms} terms")
    return xi @ model.weights(x).T


@dataclass(frozen=True)
class LognormalParams:
    """``k = exp(a + b g)`` for a standard Gaussian field ``g``."""

    a: float
    b: float

    def __post_init__(self):
        if self.b < 0:
            raise ParameterError("b must be non-negative")

    @classmethod
    def from_moments(cls, mean, std):
        b2 = np.log1p((std / mean) ** 2)
        return cls(float(np.log(mean) - 0.5 * b2), float(np.sqrt(b2)))

    @property
    def mean(self):
        return float(np.exp(self.a + 0.5 * self.b**2))

    @property
    def std(self):
        return float(np.sqrt(np.expm1(self.b**2) * np.exp(2 * self.a + self.b**2)))


def lognormal_field(model, params, xi, x):
    return np.exp(params.a + params.b * sample_gaussian_field(model, xi, x))


def disk_average(model, params, xi, center, radius, n=32):
    """Average of ``k`` over a disk by polar midpoint quadrature, with its ``xi``-gradient.

    Returns ``(value, gradient)``; ``gradient`` has length ``N``.
    """
    r = (np.arange(n) + 0.5) / n * radius
    th = (np.arange(2 * n) + 0.5) / (2 * n) * 2 * np.pi
    R, TH = np.meshgrid(r, th, indexing="ij")
    pts = np.column_stack([center[0] + (R * np.cos(TH)).ravel(), center[1] + (R * np.sin(TH)).ravel()])
    w = R.ravel() / R.sum()
    W = model.weights(pts)
    k = np.exp(params.a + params.b * (W @ np.asarray(xi, dtype=float)))
    value = float(w @ k)
    grad = params.b * (w * k) @ W
    return value, grad


def snapshot_csv(model, params, xi, x, path=None, header=None):
    """Write ``x, y, g, k`` rows for a field realization."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    g = sample_gaussian_field(model, xi, x)
    k = np.exp(params.a + params.b * g)
    buf = io.StringIO()
    if header:
        buf.write(f"# {header}\n")
    buf.write("# x,y,g,k\n")
    np.savetxt(buf, np.column_stack([x, g, k]), delimiter=",", fmt="%.17g")
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text
