"""Moments and distributions from PCE surrogates, with Monte Carlo references."""

from __future__ import annotations

import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import ndtri

from .errors import ContractError, EvaluationError, ParameterError

MC_BLOCK = 65536


@dataclass(frozen=True)
class InputDistribution:
    """Independent per-parameter input laws.

    ``kinds[i]`` is ``"normal"`` (``a`` = mean, ``b`` = standard deviation)
    or ``"uniform"`` (``a``, ``b`` = bounds).  Standard coordinates are
    ``(x - mean) / sd`` for normal parameters and the affine image in
    ``[-1, 1]`` for uniform ones.
    """

    kinds: tuple
    a: tuple
    b: tuple

    def __post_init__(self):
        if not (len(self.kinds) == len(self.a) == len(self.b)) or not self.kinds:
            raise ParameterError("distribution needs matching, non-empty parameter lists")
        for kind, a, b in zip(self.kinds, self.a, self.b):
            if kind == "normal":
                if not b > 0:
                    raise ParameterError(f"normal standard deviation must be positive, got {b}")
            elif kind == "uniform":
                if not a < b:
                    raise ParameterError(f"uniform bounds need a < b, got ({a}, {b})")
            else:
                raise ParameterError(f"unknown distribution kind {kind!r}")

    @classmethod
    def normal(cls, mean, sd):
        mean, sd = np.atleast_1d(mean).astype(float), np.atleast_1d(sd).astype(float)
        return cls(("normal",) * mean.size, tuple(mean), tuple(sd))

    @classmethod
    def standard_normal(cls, dim):
        return cls.normal(np.zeros(dim), np.ones(dim))

    @classmethod
    def uniform(cls, lower, upper):
        lower, upper = np.atleast_1d(lower).astype(float), np.atleast_1d(upper).astype(float)
        return cls(("uniform",) * lower.size, tuple(lower), tuple(upper))

    @classmethod
    def parse(cls, text):
        """Parse ``normal:10000:1000,uniform:0:1`` style specifications."""
        kinds, a, b = [], [], []
        for item in text.split(","):
            parts = item.strip().split(":")
            if len(parts) != 3:
                raise ParameterError(f"bad distribution item {item!r}; expected kind:a:b")
            kinds.append(parts[0])
            a.append(float(parts[1]))
            b.append(float(parts[2]))
        return cls(tuple(kinds), tuple(a), tuple(b))

    def to_text(self):
        return ",".join(f"{k}:{float(a)!r}:{float(b)!r}" for k, a, b in zip(self.kinds, self.a, self.b))

    @property
    def dim(self):
        return len(self.kinds)

    def _shift_scale(self):
        shift = np.empty(self.dim)
        scale = np.empty(self.dim)
        for i, (kind, a, b) in enumerate(zip(self.kinds, self.a, self.b)):
            if kind == "normal":
                shift[i], scale[i] = a, b
            else:
                shift[i], scale[i] = 0.5 * (a + b), 0.5 * (b - a)
        return shift, scale

    def to_standard(self, x):
        shift, scale = self._shift_scale()
        return (np.asarray(x, dtype=float) - shift) / scale

    def from_standard(self, z):
        shift, scale = self._shift_scale()
        return np.asarray(z, dtype=float) * scale + shift

    def scale(self):
        """``dx / dz`` per parameter; gradients in standard coordinates are ``grad_x * scale``."""
        return self._shift_scale()[1]

    def sample(self, rng, n):
        """``(n, dim)`` physical samples drawn from ``rng``.

        Rows are generated in order from a single uniform stream, so the
        first ``k`` rows do not depend on ``n``.
        """
        u = rng.random((n, self.dim))
        z = np.empty_like(u)
        for i, kind in enumerate(self.kinds):
            if kind == "normal":
                z[:, i] = ndtri(np.clip(u[:, i], 1e-300, None))
            else:
                z[:, i] = 2.0 * u[:, i] - 1.0
        return self.from_standard(z)


class EmpiricalCdf:
    """Right-continuous step CDF of a finite sample."""

    def __init__(self, samples):
        values = np.sort(np.asarray(samples, dtype=float).ravel())
        if values.size == 0:
            raise ParameterError("empirical CDF needs at least one sample")
        self.values = values

    @property
    def n(self):
        return self.values.size

    def __call__(self, v):
        out = np.searchsorted(self.values, v, side="right") / self.n
        return float(out) if np.ndim(out) == 0 else out

    def quantile(self, prob):
        return np.quantile(self.values, prob)

    def ks_distance(self, cdf):
        """Kolmogorov-Smirnov distance to a continuous CDF callable."""
        F = cdf(self.values)
        upper = np.arange(1, self.n + 1) / self.n
        lower = np.arange(0, self.n) / self.n
        return float(max(np.max(np.abs(upper - F)), np.max(np.abs(F - lower))))

    def to_csv(self, path=None, header=None):
        buf = io.StringIO()
        if header:
            buf.write(f"# {header}\n")
        buf.write("# value,probability\n")
        probs = np.arange(1, self.n + 1) / self.n
        np.savetxt(buf, np.column_stack([self.values, probs]), delimiter=",", fmt="%.17g")
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


@dataclass(frozen=True)
class MonteCarloResult:
    mean: float
    std: float
    cdf: EmpiricalCdf

    @property
    def n(self):
        return self.cdf.n

    @property
    def mean_stderr(self):
        return self.std / np.sqrt(self.n)


def _require_orthonormal(s):
    if not getattr(s.basis, "orthonormal", False):
        raise ContractError(
            "PCE moments need an orthonormal basis: normalized Hermite, no box, zero index first"
        )


def pce_mean(s):
    """Mean of an orthonormal-PCE surrogate: the constant-term coefficient."""
    _require_orthonormal(s)
    return float(s.coefficients[0])


def pce_std(s):
    """Standard deviation of an orthonormal-PCE surrogate."""
    _require_orthonormal(s)
    return float(np.sqrt(np.sum(np.asarray(s.coefficients[1:]) ** 2)))


def _evaluate_block(f, X, vectorized):
    if vectorized:
        return np.asarray(f(X), dtype=float).reshape(X.shape[0])
    out = np.empty(X.shape[0])
    for i, x in enumerate(X):
        try:
            out[i] = f(x)
        except Exception as exc:
            raise EvaluationError(f"evaluator failed at {x.tolist()}: {exc}", point=x) from exc
    return out


def _block_samples(dist, seed, k, size):
    # child k of the seed sequence depends only on (seed, k), not on the partitioning
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(k,)))
    return dist.sample(rng, size)


def sample_values(f, dist, n, seed, vectorized=False, workers=None, block=MC_BLOCK):
    """Evaluate ``f`` on ``n`` draws from ``dist``; identical for any ``workers``."""
    if int(n) != n or n < 1:
        raise ParameterError(f"sample count must be a positive integer, got {n}")
    n = int(n)
    sizes = [min(block, n - start) for start in range(0, n, block)]

    def run(k):
        return _evaluate_block(f, _block_samples(dist, seed, k, sizes[k]), vectorized)

    if workers and workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(run, range(len(sizes))))
    else:
        parts = [run(k) for k in range(len(sizes))]
    return np.concatenate(parts)


def monte_carlo(f, dist, n, seed, vectorized=False, workers=None):
    """Sample mean, unbiased standard deviation and empirical CDF of ``f(X)``."""
    if int(n) != n or n < 2:
        raise ParameterError("Monte Carlo needs at least 2 samples")
    y = sample_values(f, dist, n, seed, vectorized, workers)
    return MonteCarloResult(float(y.mean()), float(y.std(ddof=1)), EmpiricalCdf(y))


def surrogate_cdf(s, dist, n, seed):
    """Empirical CDF of a surrogate under input law ``dist``."""
    return EmpiricalCdf(sample_values(s, dist, n, seed, vectorized=True))
