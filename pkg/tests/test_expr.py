import math

import numpy as np
import pytest

from gradfit.errors import EvaluationError, ExprSyntaxError, ParameterError
from gradfit.expr import evaluate, evaluate_many, grad_reverse, parse, pow_cost

MODEL = "exp(-x1^2-0.5*(x2-1)*x2)"


def random_expression(rng, n_vars, n_ops, rational=False):
    """Random expression text whose sub-expressions are reused to form a DAG."""
    pool = [f"x{k + 1}" for k in range(n_vars)] + [f"{rng.uniform(0.5, 2):.3f}"]
    binary = ["+", "-", "*", "/"]
    unary = [] if rational else ["exp", "sin", "cos", "log", "sqrt"]
    for _ in range(n_ops):
        a, b = (pool[i] for i in rng.integers(len(pool), size=2))
        r = rng.random()
        if unary and r < 0.25:
            fn = unary[rng.integers(len(unary))]
            if fn in ("log", "sqrt"):
                new = f"{fn}(1+({a})^2)"
            elif fn == "exp":
                new = f"exp(sin({a}))"
            else:
                new = f"{fn}({a})"
        elif r < 0.35:
            new = f"({a})^{int(rng.integers(-2, 4))}" if not rational else f"({a})^{int(rng.integers(1, 4))}"
        else:
            op = binary[rng.integers(4)]
            new = f"({a})/(2+({b})*({b}))" if op == "/" else f"({a}){op}({b})"
        pool.append(new)
    return pool[-1]


def central_difference(g, x, h=1e-6):
    out = np.empty(x.size)
    for k in range(x.size):
        e = np.zeros(x.size)
        e[k] = h
        out[k] = (evaluate(g, x + e).value - evaluate(g, x - e).value) / (2 * h)
    return out


def test_model_function():
    g = parse(MODEL)
    assert g.n_vars == 2
    assert evaluate(g, [0.0, 0.0]).value == 1.0
    rep = grad_reverse(g, [0.0, 0.0])
    np.testing.assert_allclose(rep.gradient, [0.0, 0.5], atol=1e-15)
    x = np.array([0.3, -0.8])
    f = math.exp(-(x[0] ** 2) - 0.5 * (x[1] - 1) * x[1])
    np.testing.assert_allclose(grad_reverse(g, x).gradient, [-2 * x[0] * f, -0.5 * (2 * x[1] - 1) * f], rtol=1e-14)


def test_small_examples():
    assert grad_reverse(parse("x1"), [3.0]).gradient.tolist() == [1.0]
    np.testing.assert_allclose(grad_reverse(parse("x1*x2*x3"), [2, 3, 4]).gradient, [12, 8, 6])
    rep = evaluate(parse("5"), [])
    assert rep.value == 5.0 and rep.op_count == 0
    assert evaluate(parse("2^-2"), []).value == 0.25
    assert evaluate(parse("-x1^2"), [3.0]).value == -9.0
    assert evaluate(parse("x1 - x2 - x3"), [1, 2, 3]).value == -4.0
    assert evaluate(parse("x1 / x2 * x3"), [1, 2, 3]).value == 1.5
    assert evaluate(parse("1.5e1 + .5"), []).value == 15.5


def test_common_subexpressions_are_shared():
    g = parse("3*(x1+x1)")
    assert len(g) == 4  # 3, x1, x1+x1, product
    g = parse("sin(x1*x2) + sin(x1*x2)")
    assert sum(n.op == "sin" for n in g.nodes) == 1


def test_syntax_errors():
    with pytest.raises(ExprSyntaxError) as info:
        parse("x1+*2")
    assert info.value.position == 3
    for bad, pos in [("(x1", 3), ("x1 x2", 3), ("foo(x1)", 0), ("y", 0), ("x1^x2", 3), ("", 0)]:
        with pytest.raises(ExprSyntaxError) as info:
            parse(bad)
        assert info.value.position == pos, bad
    with pytest.raises(ExprSyntaxError):
        parse("x0")
    with pytest.raises(ExprSyntaxError):
        parse("x3", n_vars=2)


def test_domain_errors_name_the_node():
    g = parse("x1/x2")
    with pytest.raises(EvaluationError) as info:
        evaluate(g, [1.0, 0.0])
    assert info.value.node == len(g) - 1
    for text, x in [("log(x1)", [0.0]), ("log(x1)", [-1.0]), ("sqrt(x1)", [-1.0]), ("x1^-1", [0.0])]:
        with pytest.raises(EvaluationError):
            evaluate(parse(text), x)
    with pytest.raises(EvaluationError):
        grad_reverse(parse("sqrt(x1)"), [0.0])
    with pytest.raises(ParameterError):
        evaluate(parse("x1+x2"), [1.0])


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(2024)
    checked = 0
    while checked < 200:
        l = int(rng.integers(1, 6))
        g = parse(random_expression(rng, l, int(rng.integers(3, 25))), n_vars=l)
        x = rng.uniform(-1.5, 1.5, l)
        try:
            rep = grad_reverse(g, x)
        except EvaluationError:
            continue
        if not np.isfinite(rep.value) or abs(rep.value) > 1e4:
            continue
        fd = central_difference(g, x)
        scale = max(1.0, np.linalg.norm(rep.gradient))
        assert np.linalg.norm(fd - rep.gradient) <= 1e-5 * scale, g.text
        checked += 1


def test_cheap_gradient_bound_for_rational_expressions():
    rng = np.random.default_rng(7)
    for _ in range(200):
        l = int(rng.integers(1, 8))
        g = parse(random_expression(rng, l, int(rng.integers(1, 40)), rational=True), n_vars=l)
        x = rng.uniform(0.5, 1.5, l)
        n = evaluate(g, x).op_count
        assert grad_reverse(g, x).op_count <= 4 * n + 4 * l
        # the tighter bound holds for the counting rules used here
        assert grad_reverse(g, x).op_count <= 4 * n + 1


def sum_of_products(n_terms, l):
    terms = [f"{1 + k / 1000:.3f}*x{k % l + 1}*x{(3 * k + 1) % l + 1}" for k in range(n_terms)]
    return " + ".join(terms)


def test_gradient_cost_practically_independent_of_arity():
    counts = []
    for l in (2, 5, 10, 20, 40):
        g = parse(sum_of_products(200, l), n_vars=l)
        rep = grad_reverse(g, np.full(l, 0.999))
        counts.append(rep.op_count)
        assert rep.gradient.size == l
    assert (max(counts) - min(counts)) / min(counts) <= 0.10


def test_pow_cost_and_op_counts():
    assert [pow_cost(k) for k in (0, 1, 2, 3, 4, 5, 8)] == [0, 0, 1, 2, 2, 3, 3]
    assert pow_cost(-2) == 2
    assert evaluate(parse("x1*x2 + x1"), [1, 2]).op_count == 2
    assert evaluate(parse("-x1"), [1]).op_count == 0
    assert evaluate(parse("exp(x1)"), [1]).op_count == 1


def test_pow_gradient():
    for k in (-3, -1, 0, 1, 2, 5):
        g = parse(f"x1^{k}" if k >= 0 else f"x1^-{-k}")
        x = 1.7
        assert grad_reverse(g, [x]).gradient[0] == pytest.approx(k * x ** (k - 1), rel=1e-14)


def test_evaluate_many_matches_scalar():
    g = parse(MODEL)
    X = np.random.default_rng(0).uniform(-2, 2, (50, 2))
    np.testing.assert_allclose(evaluate_many(g, X), [evaluate(g, x).value for x in X], rtol=1e-15)


def test_graph_is_callable_and_topological():
    g = parse("sin(x1) * cos(x2) / (1 + x1^2)")
    for i, node in enumerate(g.nodes):
        assert all(a < i for a in node.args)
    x = np.array([0.4, 0.9])
    assert g(x) == evaluate(g, x).value
    np.testing.assert_array_equal(g.gradient(x), grad_reverse(g, x).gradient)


def test_deep_nesting_is_a_syntax_error():
    with pytest.raises(ExprSyntaxError):
        parse("(" * 5000 + "x1" + ")" * 5000)
