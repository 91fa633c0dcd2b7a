import numpy as np
import pytest

from autodiff import (
    Graph,
    NonDeterministicError,
    NonFiniteError,
    ParamStore,
    ShapeError,
    Tensor,
    absolute,
    add,
    as_tensor,
    backward,
    broadcast_to,
    clip,
    concat,
    cos,
    cumsum,
    div,
    exp,
    expand_dims,
    finite_difference_check,
    get_precision,
    getitem,
    inv,
    log,
    matmul,
    mean,
    mul,
    no_grad,
    norm,
    power,
    precision,
    reshape,
    sigmoid,
    sin,
    softplus,
    sqrt,
    stack,
    sub,
    swapaxes,
    transpose,
    tsum,
    where,
)


def test_matmul_of_ones():
    out = matmul(np.ones((2, 3)), np.ones((3, 1)))
    assert out.shape == (2, 1)
    np.testing.assert_array_equal(out.data, np.full((2, 1), 3.0))


def test_softplus_at_zero():
    assert softplus(as_tensor(0.0)).item() == pytest.approx(np.log(2.0), abs=1e-12)


def test_sum_over_empty_tensor_is_zero():
    assert tsum(np.zeros(0)).item() == 0.0


def test_shape_mismatch_names_the_operation():
    with pytest.raises(ShapeError, match="matmul"):
        matmul(np.ones((2, 3)), np.ones((2, 3)))
    with pytest.raises(ShapeError, match="add"):
        as_tensor(np.ones(3)) + np.ones(4)


def test_product_rule():
    store = ParamStore()
    w = store.add("w", 2.0)
    loss = w * 3.0
    backward(loss, store)
    assert store.grads["w"] == pytest.approx(3.0)


def test_unused_parameter_gets_zero_gradient():
    store = ParamStore()
    w = store.add("w", 2.0)
    store.add("unused", np.ones((2, 2)))
    backward(w * w, store)
    np.testing.assert_array_equal(store.grads["unused"], np.zeros((2, 2)))


def test_non_scalar_loss_is_rejected():
    store = ParamStore()
    w = store.add("w", np.ones(3))
    with pytest.raises(ShapeError):
        backward(w * 2.0, store)


def test_shared_subexpression_accumulates():
    store = ParamStore()
    x = store.add("x", 1.5)
    y = x * x
    backward(y + y * x, store)
    # d/dx (x^2 + x^3) = 2x + 3x^2
    assert store.grads["x"] == pytest.approx(2 * 1.5 + 3 * 1.5 ** 2)


def test_softplus_network_matches_finite_differences(rng):
    store = ParamStore()
    store.add("W", rng.normal(size=(4, 4)))
    x = rng.normal(size=(4, 1))
    report = finite_difference_check(lambda: tsum(softplus(matmul(store["W"], x))), store,
                                     step=1e-5, tolerance=1e-5)
    assert report.passed
    assert report.max_relative_error <= 1e-5


def test_quadratic_check_is_exact():
    store = ParamStore()
    store.add("p", 1.0)
    report = finite_difference_check(lambda: store["p"] * store["p"], store, step=1e-4, tolerance=1e-6)
    assert report.passed
    assert store.grads["p"] == pytest.approx(2.0, abs=1e-12)
    assert report.entries[0].max_abs_error <= 1e-6


def test_empty_store_passes_vacuously():
    report = finite_difference_check(lambda: as_tensor(1.0), ParamStore())
    assert report.passed
    assert report.entries == []


def test_non_deterministic_function_is_rejected():
    store = ParamStore()
    store.add("p", 1.0)
    calls = {"n": 0}

    def flaky():
        calls["n"] += 1
        return store["p"] * float(calls["n"])

    with pytest.raises(NonDeterministicError):
        finite_difference_check(flaky, store)


def test_gradient_linearity(rng):
    store = ParamStore()
    store.add("W", rng.normal(size=(3, 3)))
    x = rng.normal(size=(3,))

    def loss_one():
        return tsum(sigmoid(matmul(store["W"], x)))

    def loss_two():
        h = matmul(store["W"], x)
        return mean(h * h)

    backward(loss_one(), store)
    g1 = store.grads["W"].copy()
    backward(loss_two(), store)
    g2 = store.grads["W"].copy()
    a, b = 0.7, -2.5
    backward(loss_one() * a + loss_two() * b, store)
    np.testing.assert_allclose(store.grads["W"], a * g1 + b * g2, rtol=1e-10, atol=1e-14)


def test_repeated_backward_is_bitwise_identical(rng):
    values = rng.normal(size=(5, 5))
    results = []
    for _ in range(2):
        store = ParamStore()
        store.add("W", values)
        loss = tsum(softplus(matmul(store["W"], store["W"]), 10.0))
        backward(loss, store)
        results.append((loss.item(), store.grads["W"].copy()))
    assert results[0][0] == results[1][0]
    np.testing.assert_array_equal(results[0][1], results[1][1])


def test_exclusive_cumsum_gradient(rng):
    store = ParamStore()
    store.add("x", rng.normal(size=(2, 5)))
    weights = rng.normal(size=(2, 5))
    report = finite_difference_check(lambda: tsum(cumsum(store["x"], axis=-1, exclusive=True) * weights), store)
    assert report.passed
    np.testing.assert_array_equal(cumsum(np.ones((1, 3)), exclusive=True).data, [[0.0, 1.0, 2.0]])


def test_where_routes_gradient_to_selected_branch():
    store = ParamStore()
    a = store.add("a", np.array([1.0, 2.0]))
    b = store.add("b", np.array([3.0, 4.0]))
    backward(tsum(where(np.array([True, False]), a, b)), store)
    np.testing.assert_array_equal(store.grads["a"], [1.0, 0.0])
    np.testing.assert_array_equal(store.grads["b"], [0.0, 1.0])


def test_non_finite_forward_value_names_the_op():
    with pytest.raises(NonFiniteError, match="log"):
        log(as_tensor(np.array([1.0, 0.0])))


def test_no_grad_records_nothing():
    store = ParamStore()
    w = store.add("w", 1.0)
    with no_grad():
        out = w * 2.0
    assert not out.requires_grad
    assert out._parents == ()


def test_precision_context_restores_previous():
    with precision("float32"):
        assert get_precision() == "float32"
        assert as_tensor(1.0).data.dtype == np.float32
    assert get_precision() == "float64"


def test_graph_reuses_recorded_order(rng):
    store = ParamStore()
    store.add("w", rng.normal(size=3))
    graph = Graph()
    loss = graph.forward(lambda: tsum(store["w"] * store["w"]))
    graph.backward(store=store)
    np.testing.assert_allclose(store.grads["w"], 2.0 * store["w"].data)
    assert isinstance(loss, Tensor)


def test_param_store_state_round_trip():
    store = ParamStore()
    store.add("a", np.arange(3.0))
    state = store.state_dict()
    store["a"].data = np.zeros(3)
    store.load_state_dict(state)
    np.testing.assert_array_equal(store["a"].data, np.arange(3.0))
    with pytest.raises(ShapeError):
        store.load_state_dict({"a": np.zeros(4)})
    with pytest.raises(KeyError):
        store.load_state_dict({})


def away_from(values, points, gap=1e-3):
    """Move entries at least 10*gap off the kinks of piecewise ops."""
    values = np.array(values, dtype=np.float64)
    for point in points:
        close = np.abs(values - point) < gap
        values[close] = point + np.where(values[close] >= point, 10 * gap, -10 * gap)
    return values


def normal(rng, shape=(3, 4)):
    return rng.normal(size=shape)


def positive(rng, shape=(3, 4)):
    return rng.uniform(0.5, 2.0, size=shape)


UNARY_OPS = {
    "exp": (exp, normal),
    "log": (log, positive),
    "sin": (sin, normal),
    "cos": (cos, normal),
    "absolute": (absolute, lambda rng: away_from(normal(rng), [0.0])),
    "sqrt": (sqrt, positive),
    "power": (lambda x: power(x, 2.5), positive),
    "sigmoid": (sigmoid, normal),
    "softplus": (softplus, normal),
    "clip": (lambda x: clip(x, -0.5, 0.5), lambda rng: away_from(normal(rng), [-0.5, 0.5])),
    "sum_axis": (lambda x: tsum(x, axis=0), normal),
    "mean_keepdims": (lambda x: mean(x, axis=1, keepdims=True), normal),
    "cumsum": (lambda x: cumsum(x, axis=-1, exclusive=True), normal),
    "reshape": (lambda x: reshape(x, (4, 3)), normal),
    "transpose": (transpose, normal),
    "swapaxes": (lambda x: swapaxes(x, 0, 1), normal),
    "broadcast_to": (lambda x: broadcast_to(x, (2, 3, 4)), normal),
    "expand_dims": (lambda x: expand_dims(x, 1), normal),
    "getitem": (lambda x: getitem(x, (slice(None), [0, 2])), normal),
    "norm": (lambda x: norm(x, axis=-1), normal),
    "inv": (inv, lambda rng: 3.0 * np.eye(3) + 0.3 * rng.normal(size=(3, 3))),
}

BINARY_OPS = {
    "add": (add, normal, lambda rng: normal(rng, (4,))),
    "sub": (sub, normal, normal),
    "mul": (mul, normal, lambda rng: normal(rng, (3, 1))),
    "div": (div, normal, lambda rng: positive(rng) * rng.choice([-1.0, 1.0], size=(3, 4))),
    "matmul": (matmul, normal, lambda rng: normal(rng, (4, 2))),
    "concat": (lambda a, b: concat([a, b], axis=0), normal, normal),
    "stack": (lambda a, b: stack([a, b], axis=1), normal, normal),
    "where": (lambda a, b: where(np.arange(12).reshape(3, 4) % 3 == 0, a, b), normal, normal),
}


def check_vector_jacobian_products(op, makers, rng, cases=100):
    for case in range(cases):
        store = ParamStore()
        names = [f"x{i}" for i in range(len(makers))]
        for name, make in zip(names, makers):
            store.add(name, make(rng))
        cotangent = rng.normal(size=op(*[store[n] for n in names]).shape)
        report = finite_difference_check(lambda: tsum(op(*[store[n] for n in names]) * cotangent), store,
                                         step=1e-6, tolerance=1e-5)
        assert report.passed, (case, [(e.name, e.max_relative_error) for e in report.entries])


@pytest.mark.parametrize("name", sorted(UNARY_OPS))
def test_unary_vector_jacobian_products(name, rng):
    op, make = UNARY_OPS[name]
    check_vector_jacobian_products(op, [make], rng)


@pytest.mark.parametrize("name", sorted(BINARY_OPS))
def test_binary_vector_jacobian_products(name, rng):
    op, make_a, make_b = BINARY_OPS[name]
    check_vector_jacobian_products(op, [make_a, make_b], rng)
