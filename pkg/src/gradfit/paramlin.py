"""Parametric linear systems ``E(xi) x' + A(xi) x = B u`` with sensitivities.

``E`` and ``A`` are affine in the parameters::

    A(xi) = A0 + sum_i xi_i A_i,    E(xi) = E0 + sum_i xi_i E_i

so ``dA/dxi_i = A_i``.  Differentiating the system gives, for each ``i``,

    E x_i' + A x_i = B_i u - E_i x' - A_i x

which has the same left-hand operator as the state equation; one sparse LU
factorization therefore serves the state solve and all ``l`` sensitivity
solves.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve, splu

from .errors import FactorizationError, ParameterError


def _csr(M, n, name):
    M = sp.csr_matrix(M, dtype=float)
    if M.shape != (n, n):
        raise ParameterError(f"{name} has shape {M.shape}, expected {(n, n)}")
    return M


@dataclass
class ParamLinearSystem:
    """Affine-parametric sparse system.

    Attributes
    ----------
    A0 : sparse (n, n)
    A_params : list of sparse (n, n), one per parameter
    B : ndarray (n, d)
    E0, E_params : optional; ``None`` means the zero matrix (purely algebraic system)
    B_params : optional list of (n, d) parameter derivatives of ``B``; zero by default
    u : optional nominal constant input, length d
    labels : optional names for the state entries (node ids for circuits)
    """

    A0: sp.csr_matrix
    A_params: list
    B: np.ndarray
    E0: sp.csr_matrix | None = None
    E_params: list | None = None
    B_params: list | None = None
    u: np.ndarray | None = None
    labels: list | None = field(default=None)

    def __post_init__(self):
        self.A0 = sp.csr_matrix(self.A0, dtype=float)
        n = self.A0.shape[0]
        if self.A0.shape != (n, n):
            raise ParameterError(f"A0 must be square, got {self.A0.shape}")
        self.A_params = [_csr(M, n, f"A_{i + 1}") for i, M in enumerate(self.A_params)]
        self.B = np.asarray(self.B, dtype=float)
        if self.B.ndim == 1:
            self.B = self.B[:, None]
        if self.B.shape[0] != n:
            raise ParameterError(f"B has {self.B.shape[0]} rows, expected {n}")
        l = len(self.A_params)
        if self.E0 is not None:
            self.E0 = _csr(self.E0, n, "E0")
        if self.E_params is not None:
            if len(self.E_params) != l:
                raise ParameterError(f"{len(self.E_params)} E derivatives for {l} parameters")
            self.E_params = [_csr(M, n, f"E_{i + 1}") for i, M in enumerate(self.E_params)]
        if self.B_params is not None:
            if len(self.B_params) != l:
                raise ParameterError(f"{len(self.B_params)} B derivatives for {l} parameters")
            self.B_params = [np.asarray(Bi, dtype=float).reshape(self.B.shape) for Bi in self.B_params]
        if self.u is not None:
            self.u = np.asarray(self.u, dtype=float).reshape(self.B.shape[1])

    @property
    def n(self):
        return self.A0.shape[0]

    @property
    def l(self):
        return len(self.A_params)

    @property
    def d(self):
        return self.B.shape[1]

    def _check_xi(self, xi):
        xi = np.zeros(self.l) if xi is None else np.asarray(xi, dtype=float).reshape(-1)
        if xi.size != self.l:
            raise ParameterError(f"expected {self.l} parameter values, got {xi.size}")
        return xi

    def A(self, xi=None):
        xi = self._check_xi(xi)
        out = self.A0.copy()
        for v, Ai in zip(xi, self.A_params):
            if v != 0.0:
                out = out + v * Ai
        return out.tocsr()

    def E(self, xi=None):
        xi = self._check_xi(xi)
        out = sp.csr_matrix((self.n, self.n)) if self.E0 is None else self.E0.copy()
        if self.E_params is not None:
            for v, Ei in zip(xi, self.E_params):
                if v != 0.0:
                    out = out + v * Ei
        return out.tocsr()

    def E_deriv(self, i):
        if self.E_params is None:
            return None
        return self.E_params[i]

    def input(self, u):
        u = self.u if u is None else u
        if u is None:
            raise ParameterError("no input given and the system has no nominal input")
        return np.asarray(u, dtype=float).reshape(self.d)


@dataclass(frozen=True)
class SensitivitySolution:
    """State ``x`` (n,) and sensitivities ``sens`` (l, n), ``sens[i] = dx/dxi_i``."""

    x: np.ndarray
    sens: np.ndarray


@dataclass(frozen=True)
class Trajectory:
    """Time grid ``t`` (K,), states ``x`` (K, n), sensitivities ``sens`` (K, l, n)."""

    t: np.ndarray
    x: np.ndarray
    sens: np.ndarray

    def to_csv(self, path=None, header=None, labels=None):
        K, l, n = self.sens.shape
        labels = labels or [str(j + 1) for j in range(n)]
        names = ["t"] + [f"x[{lab}]" for lab in labels]
        names += [f"dx[{lab}]/dxi_{i + 1}" for i in range(l) for lab in labels]
        data = np.column_stack([self.t, self.x, self.sens.reshape(K, l * n)])
        buf = io.StringIO()
        if header:
            buf.write(f"# {header}\n")
        buf.write("# " + ",".join(names) + "\n")
        np.savetxt(buf, data, delimiter=",", fmt="%.17g")
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def _factor(M, step=None):
    try:
        lu = splu(sp.csc_matrix(M))
    except RuntimeError as exc:
        where = "" if step is None else f" at step {step}"
        raise FactorizationError(f"singular matrix{where}: {exc}", step=step) from exc
    diag = np.abs(lu.U.diagonal())
    if diag.size and diag.min() <= 1e-14 * max(diag.max(), 1e-300):
        where = "" if step is None else f" at step {step}"
        raise FactorizationError(f"numerically singular matrix{where}", step=step)
    return lu


def _sens_rhs(sys, x, u, xdot=None):
    """Columns ``B_i u - E_i xdot - A_i x`` for every parameter, shape (n, l)."""
    R = np.empty((sys.n, sys.l))
    for i, Ai in enumerate(sys.A_params):
        r = -(Ai @ x)
        if xdot is not None and sys.E_params is not None:
            r -= sys.E_params[i] @ xdot
        if sys.B_params is not None:
            r += sys.B_params[i] @ u
        R[:, i] = r
    return R


def solve_dc_with_sens(sys, xi=None, u=None):
    """Static solve ``A(xi) x = B u`` and ``A(xi) x_i = B_i u - A_i x`` on one LU."""
    xi = sys._check_xi(xi)
    u = sys.input(u)
    lu = _factor(sys.A(xi))
    x = lu.solve(sys.B @ u)
    if sys.l == 0:
        return SensitivitySolution(x, np.zeros((0, sys.n)))
    S = lu.solve(_sens_rhs(sys, x, u))
    return SensitivitySolution(x, np.asarray(S).reshape(sys.n, sys.l).T.copy())


def build_extended(sys, xi=None):
    """Explicit block-lower-triangular extended matrices.

    Returns ``(E_ext, A_ext, B_ext)`` of sizes ``(l+1)n x (l+1)n`` and
    ``(l+1)n x d``; the first block column holds ``A, A_1, ..., A_l``
    (resp. ``E, E_i``), the diagonal repeats ``A`` (resp. ``E``).
    """
    xi = sys._check_xi(xi)
    n, l = sys.n, sys.l
    A = sys.A(xi)
    E = sys.E(xi)
    zero = sp.csr_matrix((n, n))

    def blocks(main, derivs):
        rows = []
        for i in range(l + 1):
            row = [None] * (l + 1)
            row[0] = main if i == 0 else (derivs[i - 1] if derivs is not None else zero)
            if i > 0:
                row[i] = main
            rows.append(row)
        return sp.bmat(rows, format="csr")

    A_ext = blocks(A, sys.A_params)
    E_ext = blocks(E, sys.E_params)
    B_ext = np.zeros(((l + 1) * n, sys.d))
    B_ext[:n] = sys.B
    if sys.B_params is not None:
        for i, Bi in enumerate(sys.B_params):
            B_ext[(i + 1) * n : (i + 2) * n] = Bi
    return E_ext, A_ext, B_ext


def solve_extended(sys, xi=None, u=None):
    """Solve the extended static system directly (verification path)."""
    u = sys.input(u)
    _, A_ext, B_ext = build_extended(sys, xi)
    z = spsolve(sp.csc_matrix(A_ext), B_ext @ u)
    n = sys.n
    return SensitivitySolution(z[:n], z[n:].reshape(sys.l, n))


def integrate_dae_with_sens(sys, xi, u_func, t_grid, x0=None):
    """Backward-Euler integration of the state and its parameter sensitivities.

    Each step solves ``(E/h + A) x_{k+1} = (E/h) x_k + B u(t_{k+1})`` and,
    with the same factorization,
    ``(E/h + A) s_{k+1} = (E/h) s_k - E_i (x_{k+1} - x_k)/h - A_i x_{k+1} + B_i u``.
    The initial state ``x0`` (default zero) does not depend on the parameters.
    """
    xi = sys._check_xi(xi)
    t = np.asarray(t_grid, dtype=float).reshape(-1)
    if t.size < 2 or np.any(np.diff(t) <= 0):
        raise ParameterError("time grid must be strictly increasing with at least two points")
    n, l = sys.n, sys.l
    A = sys.A(xi)
    E = sys.E(xi)
    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).reshape(n)
    S = np.zeros((n, l))
    xs = np.empty((t.size, n))
    sens = np.empty((t.size, l, n))
    xs[0] = x
    sens[0] = S.T
    cache = {}
    for k in range(1, t.size):
        h = t[k] - t[k - 1]
        key = round(h, 15)
        if key not in cache:
            cache[key] = _factor((E / h + A).tocsc(), step=k)
        lu = cache[key]
        u = np.asarray(u_func(t[k]), dtype=float).reshape(sys.d)
        x_new = lu.solve((E @ x) / h + sys.B @ u)
        if l:
            xdot = (x_new - x) / h
            rhs = (E @ S) / h + _sens_rhs(sys, x_new, u, xdot)
            S = np.asarray(lu.solve(rhs)).reshape(n, l)
        x = x_new
        xs[k] = x
        sens[k] = S.T
    return Trajectory(t, xs, sens)


def _stencil(n, a, b, g):
    """Conductance stencil between state indices ``a`` and ``b`` (None = ground)."""
    rows, cols, vals = [], [], []
    for i in (a, b):
        if i is not None:
            rows.append(i)
            cols.append(i)
            vals.append(g)
    if a is not None and b is not None:
        rows += [a, b]
        cols += [b, a]
        vals += [-g, -g]
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


@dataclass
class Netlist:
    """Resistor/capacitor/current-source circuit description.

    Node ids are arbitrary integers; ``ground`` is removed from the
    unknowns.  Parameter indices are 1-based.
    """

    resistors: list = field(default_factory=list)  # (a, b, R, param or None)
    capacitors: list = field(default_factory=list)  # (a, b, C, param or None)
    sources: list = field(default_factory=list)  # (node, I)
    ground: int | None = None

    @classmethod
    def parse(cls, text):
        """Read ``R a b value [param]``, ``C a b value [param]``, ``I node value``, ``GROUND node``."""
        net = cls()
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tok = line.split()
            kind = tok[0].upper()
            try:
                if kind in ("R", "C") and len(tok) in (4, 5):
                    param = int(tok[4]) if len(tok) == 5 else None
                    if param is not None and param < 1:
                        raise ValueError("parameter index must be >= 1")
                    if float(tok[3]) <= 0:
                        raise ValueError("element value must be positive")
                    entry = (int(tok[1]), int(tok[2]), float(tok[3]), param)
                    (net.resistors if kind == "R" else net.capacitors).append(entry)
                elif kind == "I" and len(tok) == 3:
                    net.sources.append((int(tok[1]), float(tok[2])))
                elif kind == "GROUND" and len(tok) == 2:
                    net.ground = int(tok[1])
                else:
                    raise ValueError(f"cannot parse {raw.strip()!r}")
            except ValueError as exc:
                raise ParameterError(f"netlist line {lineno}: {exc}") from None
        if net.ground is None:
            raise ParameterError("netlist has no GROUND line")
        return net

    @classmethod
    def load(cls, path):
        return cls.parse(Path(path).read_text())

    def to_text(self):
        lines = [f"R {a} {b} {r!r}" + (f" {p}" if p else "") for a, b, r, p in self.resistors]
        lines += [f"C {a} {b} {c!r}" + (f" {p}" if p else "") for a, b, c, p in self.capacitors]
        lines += [f"I {node} {cur!r}" for node, cur in self.sources]
        lines.append(f"GROUND {self.ground}")
        return "\n".join(lines) + "\n"

    def system(self):
        """Nodal-analysis ``ParamLinearSystem``; parametrized elements vary as ``g (1 + xi_i)``."""
        nodes = set()
        for a, b, _, _ in self.resistors + self.capacitors:
            nodes.update((a, b))
        unknowns = sorted(nodes - {self.ground})
        index = {node: j for j, node in enumerate(unknowns)}
        index[self.ground] = None
        n = len(unknowns)
        if n == 0:
            raise ParameterError("circuit has no non-ground nodes")
        l = max([p or 0 for *_, p in self.resistors + self.capacitors], default=0)

        def assemble(elements, conductance):
            base = sp.csr_matrix((n, n))
            derivs = [sp.csr_matrix((n, n)) for _ in range(l)]
            for a, b, value, p in elements:
                st = _stencil(n, index[a], index[b], conductance(value))
                base = base + st
                if p is not None:
                    derivs[p - 1] = derivs[p - 1] + st
            return base.tocsr(), [d.tocsr() for d in derivs]

        A0, A_params = assemble(self.resistors, lambda r: 1.0 / r)
        E0, E_params = (None, None)
        if self.capacitors:
            E0, E_params = assemble(self.capacitors, lambda c: c)
        B = np.zeros((n, len(self.sources)))
        u = np.zeros(len(self.sources))
        for k, (node, cur) in enumerate(self.sources):
            if node not in index or index[node] is None:
                raise ParameterError(f"current source at node {node} is not attached to a non-ground node")
            B[index[node], k] = 1.0
            u[k] = cur
        return ParamLinearSystem(A0, A_params, B, E0, E_params, None, u, unknowns)


def grid_netlist(rows, cols, injections, param_edges=(), ground=None):
    """Unit-resistor ``rows x cols`` grid; nodes numbered 1.. row-major.

    ``injections`` maps node -> injected current; ``param_edges`` lists
    node pairs whose conductance becomes ``1 + xi_i`` (in list order).
    ``ground`` defaults to the last node.
    """
    if rows < 2 or cols < 2:
        raise ParameterError("grid must be at least 2 x 2")
    N = rows * cols
    ground = N if ground is None else ground
    if not 1 <= ground <= N:
        raise ParameterError(f"ground node {ground} is not in the grid")
    edges = []
    for r in range(rows):
        for c in range(cols):
            node = r * cols + c + 1
            if c + 1 < cols:
                edges.append((node, node + 1))
            if r + 1 < rows:
                edges.append((node, node + cols))
    param_of = {}
    for i, (a, b) in enumerate(param_edges):
        key = (min(a, b), max(a, b))
        if key not in set(edges):
            raise ParameterError(f"edge {a}-{b} is not a grid edge")
        param_of[key] = i + 1
    inj = injections.items() if isinstance(injections, dict) else injections
    sources = []
    for node, cur in inj:
        if not 1 <= node <= N or node == ground:
            raise ParameterError(f"injection node {node} is not a connected non-ground grid node")
        sources.append((int(node), float(cur)))
    resistors = [(a, b, 1.0, param_of.get((a, b))) for a, b in edges]
    return Netlist(resistors, [], sources, ground)


def resistor_grid(rows, cols, injections, param_edges=(), ground=None):
    """``ParamLinearSystem`` of a unit-resistor grid (see :func:`grid_netlist`)."""
    return grid_netlist(rows, cols, injections, param_edges, ground).system()
