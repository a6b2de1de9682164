"""Command-line entry point: ``gradfit <subcommand> ...``.

Exit codes: 0 success, 2 usage or input-file error, 3 numerical failure.
Every output file starts with a comment line holding the invocation.
"""

from __future__ import annotations

import argparse
import configparser
import io
import shlex
import sys
from dataclasses import dataclass
from importlib import resources

import numpy as np

from . import expr as exprmod
from .basis import BasisFamily, DomainBox, TensorBasis
from .errors import ConvergenceError, DegeneracyError, EvaluationError, FactorizationError, GradfitError, ParameterError
from .gels import GradSamples, Surrogate, fit_samples, rel_l2_error, sample_function, select_points
from .indexset import hyperbolic_set
from .paramlin import Netlist, integrate_dae_with_sens, solve_dc_with_sens
from .randfield import LognormalParams, build_eole, grid_nodes, snapshot_csv
from .sampling import lhs, maxvol_select, uniform_random
from .stats import InputDistribution, monte_carlo, pce_mean, pce_std

EXIT_USAGE = 2
EXIT_NUMERIC = 3

BUILTIN_FUNCTIONS = {
    "model": "exp(-x1^2-0.5*(x2-1)*x2)",
}

NUMERIC_ERRORS = (DegeneracyError, ConvergenceError, FactorizationError, EvaluationError, ArithmeticError)


@dataclass
class ExperimentConfig:
    function: str = "model"
    box: str = "-2:2,-2:2"
    family: str = "chebyshev"
    q: float = 15
    p: float = 1.0
    m: int = 50
    N: int = 10_000
    sampler: str = "uniform"
    seed: int = 0
    sizes: str = ""
    test_points: int = 10_000
    derivatives: bool = True

    def expression(self):
        text = BUILTIN_FUNCTIONS.get(self.function, self.function)
        return exprmod.parse(text, n_vars=self.box_obj().dim)

    def box_obj(self):
        return parse_box(self.box)

    def validate(self):
        if self.m > self.N:
            raise ParameterError(f"m={self.m} exceeds N={self.N}")
        if self.family not in ("chebyshev", "monomial"):
            raise ParameterError("compare/fit on a box supports the chebyshev and monomial families")
        if self.sampler not in ("uniform", "lhs"):
            raise ParameterError(f"unknown sampler {self.sampler!r}")


def parse_box(text):
    """``-2:2,-1:1`` -> DomainBox."""
    try:
        pairs = [tuple(float(v) for v in item.split(":")) for item in text.split(",")]
    except ValueError:
        raise ParameterError(f"cannot parse box {text!r}; expected lo:hi,lo:hi,...") from None
    if any(len(pr) != 2 for pr in pairs):
        raise ParameterError(f"cannot parse box {text!r}; expected lo:hi,lo:hi,...")
    return DomainBox([lo for lo, _ in pairs], [hi for _, hi in pairs])


def _floats(text):
    if not text:
        return None
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise ParameterError(f"cannot parse number list {text!r}") from None


def compare(cfg):
    """Fit with and without derivatives on one maxvol point set for a sweep of basis sizes.

    Returns rows ``(M, err_with, err_without, rank_with, rank_without)``.
    """
    cfg.validate()
    box = cfg.box_obj()
    g = cfg.expression()
    full = hyperbolic_set(box.dim, cfg.q, cfg.p)
    if cfg.sizes:
        sizes = [int(s) for s in cfg.sizes.split(",")]
    else:
        sizes = sorted({len(hyperbolic_set(box.dim, d, cfg.p)) for d in range(1, int(cfg.q) + 1)})
    if max(sizes) > len(full):
        raise ParameterError(f"basis size {max(sizes)} exceeds the {len(full)} indices available at q={cfg.q}")
    basis = TensorBasis(BasisFamily(cfg.family), full, box)
    pts = select_points(basis, cfg.m, cfg.N, cfg.sampler, cfg.seed)
    samples = sample_function(g, g.gradient, pts.points)
    test = uniform_random(box, cfg.test_points, cfg.seed + 1).points
    exact = exprmod.evaluate_many(g, test)
    rows = []
    for M in sizes:
        b = basis.with_index_set(full.prefix(M))
        s_with = fit_samples(b, samples)
        s_without = fit_samples(b, samples.without_derivatives())
        rows.append(
            (
                M,
                rel_l2_error(s_with, lambda X: exact, test, vectorized=True),
                rel_l2_error(s_without, lambda X: exact, test, vectorized=True),
                s_with.report.rank,
                s_without.report.rank,
            )
        )
    return rows


def _write(text, path):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _provenance(argv):
    return "gradfit " + " ".join(shlex.quote(a) for a in argv)


def _csv(header, names, data):
    buf = io.StringIO()
    buf.write(f"# {header}\n# {','.join(names)}\n")
    np.savetxt(buf, np.atleast_2d(data), delimiter=",", fmt="%.17g")
    return buf.getvalue()


def _basis_from_args(args, dim):
    family = BasisFamily(args.family, normalized=(args.family == "hermite"))
    iset = hyperbolic_set(dim, args.q, args.p)
    box = None if args.family == "hermite" else parse_box(args.box)
    return TensorBasis(family, iset, box)


def _load_config(path):
    """``key = value`` lines, optionally under an ``[experiment]`` header."""
    with open(path) as fh:
        text = fh.read()
    if not text.lstrip().startswith("["):
        text = "[experiment]\n" + text
    parser = configparser.ConfigParser()
    parser.read_string(text)
    out = {}
    for section in parser.sections():
        for key, val in parser[section].items():
            out[key.replace("-", "_")] = val
    return out


def cmd_compare(args, argv):
    cfg = ExperimentConfig()
    if args.config:
        fields = {name.lower(): name for name in vars(cfg)}
        for key, val in _load_config(args.config).items():
            if key.lower() not in fields:
                raise ParameterError(f"unknown config key {key!r}")
            key = fields[key.lower()]
            default = getattr(cfg, key)
            if isinstance(default, bool):
                val = val.strip().lower() in ("1", "true", "yes", "on")
            setattr(cfg, key, type(default)(val))
    for key in ("function", "box", "family", "q", "p", "m", "N", "sampler", "seed", "sizes", "test_points"):
        val = getattr(args, key, None)
        if val is not None:
            setattr(cfg, key, val)
    rows = compare(cfg)
    text = _csv(_provenance(argv), ["M", "err_with_derivatives", "err_without_derivatives", "rank_with", "rank_without"], rows)
    _write(text, args.out)


def cmd_fit(args, argv):
    dist = InputDistribution.parse(args.dist) if args.dist else None
    if args.samples:
        samples = GradSamples.from_csv(args.samples)
        if args.no_derivatives:
            samples = samples.without_derivatives()
        basis = _basis_from_args(args, samples.dim)
    else:
        if not args.function:
            raise ParameterError("fit needs --function or --samples")
        if args.family == "hermite":
            dim = dist.dim if dist else None
            text = BUILTIN_FUNCTIONS.get(args.function, args.function)
            g = exprmod.parse(text, n_vars=dim)
            dim = g.n_vars
        else:
            dim = parse_box(args.box).dim
            g = exprmod.parse(BUILTIN_FUNCTIONS.get(args.function, args.function), n_vars=dim)
        basis = _basis_from_args(args, dim)
        pts = select_points(basis, args.m, args.N or args.m, args.sampler, args.seed, dist)
        samples = sample_function(g, None if args.no_derivatives else g.gradient, pts.points)
    s = fit_samples(basis, samples, args.rank_tol, input_map=dist)
    _write(f"# {_provenance(argv)}\n" + s.to_text(), args.out)
    if args.predict:
        X = np.loadtxt(args.predict, delimiter=",", comments="#", ndmin=2)
        _write(_prediction_csv(s, X, _provenance(argv)), args.predictions)
    r = s.report
    print(f"rank {r.rank}/{r.n_cols}, rows {r.n_rows}, residual {r.residual_norm:.3e}", file=sys.stderr)


def _prediction_csv(s, X, header):
    names = [f"x_{k + 1}" for k in range(s.dim)] + ["value"] + [f"d_{k + 1}" for k in range(s.dim)]
    return _csv(header, names, np.column_stack([X, s(X), s.gradient(X)]))


def cmd_eval(args, argv):
    s = Surrogate.load(args.surrogate)
    X = np.loadtxt(args.points, delimiter=",", comments="#", ndmin=2)
    if X.shape[1] != s.dim:
        raise ParameterError(f"points file has {X.shape[1]} columns, surrogate expects {s.dim}")
    _write(_prediction_csv(s, X, _provenance(argv)), args.out)


def cmd_sample(args, argv):
    box = parse_box(args.box)
    if args.sampler == "lhs":
        ps = lhs(box, args.N, args.seed)
    else:
        ps = uniform_random(box, args.N, args.seed)
        if args.sampler == "maxvol":
            if args.m is None:
                raise ParameterError("--sampler maxvol needs --m")
            basis = TensorBasis(BasisFamily(args.family), hyperbolic_set(box.dim, args.q, args.p), box)
            C = basis.design_matrix(ps.points)[:, : min(args.m, basis.size)]
            ps = ps.subset(maxvol_select(C, args.m))
    _write(ps.to_csv(header=_provenance(argv)), args.out)


def cmd_field(args, argv):
    nodes = grid_nodes(args.grid)
    model = build_eole(nodes, args.sigma, args.terms)
    params = LognormalParams(args.a, args.b)
    xi = np.random.default_rng(args.seed).standard_normal(model.n_terms)
    s = np.linspace(-1.0, 1.0, args.resolution)
    xx, yy = np.meshgrid(s, s)
    X = np.column_stack([xx.ravel(), yy.ravel()])
    _write(snapshot_csv(model, params, xi, X, header=_provenance(argv)), args.out)


def _netlist(args):
    if args.fixture:
        text = resources.files("gradfit").joinpath("data", f"{args.fixture}.net").read_text()
        return Netlist.parse(text)
    if not args.netlist:
        raise ParameterError("need --netlist or --fixture")
    return Netlist.load(args.netlist)


def cmd_dc(args, argv):
    sys_ = _netlist(args).system()
    sol = solve_dc_with_sens(sys_, _floats(args.xi))
    names = ["node", "x"] + [f"dx/dxi_{i + 1}" for i in range(sys_.l)]
    data = np.column_stack([np.array(sys_.labels, dtype=float), sol.x, sol.sens.T])
    _write(_csv(_provenance(argv), names, data), args.out)


def cmd_dae(args, argv):
    sys_ = _netlist(args).system()
    u = sys_.input(None)
    t = np.linspace(0.0, args.t_end, int(round(args.t_end / args.h)) + 1)
    traj = integrate_dae_with_sens(sys_, _floats(args.xi), lambda _t: u, t)
    _write(traj.to_csv(header=_provenance(argv), labels=[str(v) for v in sys_.labels]), args.out)


def cmd_stats(args, argv):
    s = Surrogate.load(args.surrogate)
    if args.dist:
        dist = InputDistribution.parse(args.dist)
    elif s.input_map is not None:
        dist = s.input_map
    else:
        dist = InputDistribution.standard_normal(s.dim)
    mc = monte_carlo(s, dist, args.n, args.seed, vectorized=True)
    lines = [f"mc_mean {mc.mean:.17g}", f"mc_std {mc.std:.17g}"]
    if s.basis.orthonormal:
        lines = [f"pce_mean {pce_mean(s):.17g}", f"pce_std {pce_std(s):.17g}"] + lines
    print("\n".join(lines))
    if args.out:
        _write(mc.cdf.to_csv(header=_provenance(argv)), args.out)


def build_parser():
    parser = argparse.ArgumentParser(prog="gradfit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def basis_opts(p, q_default):
        p.add_argument("--family", choices=["chebyshev", "monomial", "hermite"], default="chebyshev")
        p.add_argument("--q", type=float, default=q_default, help="degree bound")
        p.add_argument("--p", type=float, default=1.0, help="hyperbolicity in (0, 1]")
        p.add_argument("--box", default="-1:1,-1:1", help="lo:hi per dimension, e.g. --box=-2:2,-2:2")

    p = sub.add_parser("compare", help="error vs basis size with and without derivatives")
    p.add_argument("--config")
    p.add_argument("--function")
    p.add_argument("--box")
    p.add_argument("--family", choices=["chebyshev", "monomial"])
    p.add_argument("--q", type=float)
    p.add_argument("--p", type=float)
    p.add_argument("--m", type=int)
    p.add_argument("--N", type=int)
    p.add_argument("--sampler", choices=["uniform", "lhs"])
    p.add_argument("--seed", type=int)
    p.add_argument("--sizes", help="comma-separated basis sizes (graded prefixes)")
    p.add_argument("--test-points", dest="test_points", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("fit", help="fit a surrogate and write it to a file")
    basis_opts(p, 4)
    p.add_argument("--function", help="expression in x1..xl or a built-in name")
    p.add_argument("--samples", help="CSV with x_1..x_l,f[,df_1..df_l]")
    p.add_argument("--dist", help="input law for hermite, e.g. normal:0:1,normal:5:2")
    p.add_argument("--m", type=int, default=30)
    p.add_argument("--N", type=int)
    p.add_argument("--sampler", choices=["uniform", "lhs"], default="uniform")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-derivatives", action="store_true")
    p.add_argument("--rank-tol", type=float, default=1e-10)
    p.add_argument("--predict", help="CSV of points to predict at fit time")
    p.add_argument("--predictions", help="output for --predict")
    p.add_argument("--out")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("eval", help="evaluate a saved surrogate")
    p.add_argument("--surrogate", required=True)
    p.add_argument("--points", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sample", help="generate points")
    basis_opts(p, 4)
    p.add_argument("--sampler", choices=["uniform", "lhs", "maxvol"], default="uniform")
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--m", type=int)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("field", help="lognormal EOLE field snapshot")
    p.add_argument("--grid", type=int, default=8)
    p.add_argument("--sigma", type=float, default=0.2)
    p.add_argument("--terms", type=int, default=40)
    p.add_argument("--a", type=float, default=-0.0430888)
    p.add_argument("--b", type=float, default=0.29356)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--resolution", type=int, default=41)
    p.add_argument("--out")
    p.set_defaults(func=cmd_field)

    for name, func, hlp in (("dc", cmd_dc, "static solve with sensitivities"), ("dae", cmd_dae, "transient solve with sensitivities")):
        p = sub.add_parser(name, help=hlp)
        p.add_argument("--netlist")
        p.add_argument("--fixture", help="bundled netlist name, e.g. grid2x2")
        p.add_argument("--xi", help="comma-separated parameter values (default 0)")
        p.add_argument("--out")
        if name == "dae":
            p.add_argument("--t-end", dest="t_end", type=float, default=1.0)
            p.add_argument("--h", type=float, default=1e-3)
        p.set_defaults(func=func)

    p = sub.add_parser("stats", help="mean, std and CDF of a surrogate")
    p.add_argument("--surrogate", required=True)
    p.add_argument("--dist")
    p.add_argument("--n", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="CDF CSV")
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with status 2 on usage errors
    try:
        args.func(args, argv)
    except NUMERIC_ERRORS as exc:
        print(f"gradfit: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (GradfitError, OSError, ValueError) as exc:
        print(f"gradfit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return 0
