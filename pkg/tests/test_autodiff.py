import numpy as np
import pytest

from videofield import autodiff as ad
from videofield.autodiff import Graph, GraphStateError, NonFiniteError, ShapeError

from conftest import central_diff, rel_err


def scalar_loss_through(op_builder, *arrays):
    """Return f(values) -> float that runs op_builder on fresh leaves and
    reduces to a scalar via mean(square(.)), for finite-difference checks."""

    def f(*values):
        g = Graph()
        leaves = [g.leaf(v, requires_grad=True) for v in values]
        out = op_builder(*leaves)
        loss = ad.reduce_mean(ad.square(out))
        return float(ad.evaluate(g, loss)[0])

    return f


def analytic_grads(op_builder, *arrays):
    g = Graph()
    leaves = [g.leaf(v, requires_grad=True) for v in arrays]
    out = op_builder(*leaves)
    loss = ad.reduce_mean(ad.square(out))
    ad.evaluate(g, loss)
    grads = ad.backward(g, loss)
    return [grads[leaf] for leaf in leaves]


PRIMITIVES = [
    ("add", lambda a, b: ad.add(a, b), 2, (3, 4)),
    ("broadcast-add", lambda a, b: ad.add(a, b), "broadcast", (2, 3, 4)),
    ("sub", lambda a, b: ad.sub(a, b), 2, (3, 4)),
    ("mul", lambda a, b: ad.mul(a, b), 2, (3, 4)),
    ("div", lambda a, b: ad.div(a, b), "posdenom", (3, 4)),
    ("matmul", lambda a, b: ad.matmul(a, b), 2, (4, 5)),
    ("relu", lambda a: ad.relu(a), 1, (3, 4)),
    ("sin", lambda a: ad.sin(a), 1, (3, 4)),
    ("cos", lambda a: ad.cos(a), 1, (3, 4)),
    ("square", lambda a: ad.square(a), 1, (3, 4)),
    ("sqrt", lambda a: ad.sqrt(a), "positive", (3, 4)),
    ("log", lambda a: ad.log(a), "positive", (3, 4)),
    ("reshape", lambda a: ad.reshape(a, (4, 3)), 1, (3, 4)),
    ("concat", lambda a, b: ad.concat([a, b], axis=1), 2, (3, 4)),
    ("slice", lambda a: ad.slice_axis(a, 1, 1, 3), 1, (3, 4)),
    ("mean-all", lambda a: ad.reduce_mean(a), 1, (3, 4)),
    ("mean-axis", lambda a: ad.reduce_mean(a, axis=0), 1, (3, 4)),
    ("sum-all", lambda a: ad.reduce_sum(a), 1, (3, 4)),
    ("sum-axis", lambda a: ad.reduce_sum(a, axis=1), 1, (3, 4)),
]


@pytest.mark.parametrize("name,builder,arity,shape", PRIMITIVES,
                         ids=[p[0] for p in PRIMITIVES])
def test_primitive_gradients_match_finite_differences(name, builder, arity, shape, rng):
    if arity == "positive":
        arrays = [rng.uniform(0.5, 2.0, shape)]
    elif arity == "posdenom":
        arrays = [rng.normal(0, 1, shape) + 3.0, rng.uniform(0.5, 2.0, shape)]
    elif arity == "broadcast":
        arrays = [rng.normal(0, 1, shape), rng.normal(0, 1, (1, 1, shape[-1]))]
    else:
        n_in = arity
        if name == "matmul":
            arrays = [rng.normal(0, 1, (4, 5)), rng.normal(0, 1, (5, 3))]
        else:
            arrays = [rng.normal(0, 1, shape) + 0.05 for _ in range(n_in)]
    grads = analytic_grads(builder, *arrays)
    for which, arr in enumerate(arrays):
        def f(x, which=which):
            vals = list(arrays)
            vals[which] = x
            return scalar_loss_through(builder)(*vals)

        flat = list(np.ndindex(arr.shape))
        picks = flat if len(flat) <= 20 else [flat[i] for i in
                                              rng.choice(len(flat), 20, replace=False)]
        for index in picks:
            numeric = central_diff(f, arr, index)
            assert rel_err(grads[which][index], numeric) <= 1e-6, (
                f"{name} input {which} at {index}"
            )


def test_batched_matmul_gradient(rng):
    a = rng.normal(0, 1, (2, 3, 4))
    b = rng.normal(0, 1, (2, 4, 5))
    grads = analytic_grads(lambda x, y: ad.matmul(x, y), a, b)
    f = scalar_loss_through(lambda x, y: ad.matmul(x, y))
    for index in [(0, 0, 0), (1, 2, 3), (0, 1, 2)]:
        numeric = central_diff(lambda x: f(x, b), a, index)
        assert rel_err(grads[0][index], numeric) <= 1e-6


def test_relu_values_and_gate():
    g = Graph()
    x = g.leaf([-1.0, 0.0, 2.0], requires_grad=True)
    out = ad.relu(x)
    assert np.array_equal(out.value, [0.0, 0.0, 2.0])
    loss = ad.reduce_sum(out)
    ad.evaluate(g, loss)
    grads = ad.backward(g, loss)
    assert np.array_equal(grads[x], [0.0, 0.0, 1.0])


def test_matmul_identity():
    g = Graph()
    a = g.leaf(np.arange(12.0).reshape(3, 4))
    eye = g.leaf(np.eye(4))
    out = ad.matmul(a, eye)
    assert np.array_equal(out.value, a.value)


def test_matmul_matches_triple_loop_oracle(rng):
    a = rng.normal(0, 1, (5, 5))
    b = rng.normal(0, 1, (5, 5))
    expected = np.zeros((5, 5))
    for i in range(5):
        for j in range(5):
            for k in range(5):
                expected[i, j] += a[i, k] * b[k, j]
    g = Graph()
    out = ad.matmul(g.leaf(a), g.leaf(b))
    np.testing.assert_allclose(out.value, expected, rtol=1e-12, atol=1e-14)


def test_mean_square_scalar_gradient():
    g = Graph()
    x = g.leaf([3.0], requires_grad=True)
    loss = ad.reduce_mean(ad.square(x))
    ad.evaluate(g, loss)
    grads = ad.backward(g, loss)
    assert grads[x][0] == pytest.approx(6.0, abs=1e-12)


def test_fan_out_accumulates_both_branches():
    # y = x*x + 3x  =>  dy/dx = 2x + 3
    g = Graph()
    x = g.leaf([2.0], requires_grad=True)
    y = ad.add(ad.mul(x, x), ad.mul(x, 3.0))
    ad.evaluate(g, y)
    grads = ad.backward(g, y)
    assert grads[x][0] == pytest.approx(7.0, abs=1e-12)


def test_backward_before_evaluate_rejected():
    g = Graph()
    x = g.leaf([1.0], requires_grad=True)
    loss = ad.reduce_mean(ad.square(x))
    with pytest.raises(GraphStateError):
        ad.backward(g, loss)


def test_non_scalar_loss_rejected():
    g = Graph()
    x = g.leaf([1.0, 2.0], requires_grad=True)
    out = ad.square(x)
    ad.evaluate(g, out)
    with pytest.raises(ShapeError):
        ad.backward(g, out)


def test_shape_mismatch_reports_shapes():
    g = Graph()
    a = g.leaf(np.ones((2, 3)))
    b = g.leaf(np.ones((2, 3)))
    with pytest.raises(ShapeError, match=r"\(2, 3\)"):
        ad.matmul(a, b)


def test_non_finite_detected_at_evaluate():
    g = Graph()
    x = g.leaf([1.0, 0.0])
    out = ad.log(x)  # log(0) = -inf
    with pytest.raises(NonFiniteError, match="log"):
        ad.evaluate(g, out)


def test_leaf_rejects_non_finite():
    g = Graph()
    with pytest.raises(NonFiniteError):
        g.leaf([np.nan])


def test_leaves_without_flag_absent_from_gradient_map():
    g = Graph()
    x = g.leaf([1.0], requires_grad=True)
    c = g.leaf([2.0])
    loss = ad.reduce_mean(ad.mul(x, c))
    ad.evaluate(g, loss)
    grads = ad.backward(g, loss)
    assert x in grads and c not in grads


def test_unreached_grad_leaf_gets_zeros():
    g = Graph()
    x = g.leaf([1.0], requires_grad=True)
    unused = g.leaf([5.0], requires_grad=True)
    loss = ad.reduce_mean(ad.square(x))
    ad.evaluate(g, loss)
    grads = ad.backward(g, loss)
    assert np.array_equal(grads[unused], [0.0])


def test_evaluate_backward_deterministic(rng):
    a = rng.normal(0, 1, (6, 6))
    b = rng.normal(0, 1, (6, 6))

    def run():
        g = Graph()
        x = g.leaf(a, requires_grad=True)
        y = g.leaf(b, requires_grad=True)
        out = ad.relu(ad.matmul(x, y))
        loss = ad.reduce_mean(ad.square(ad.add(out, ad.sin(x))))
        val = ad.evaluate(g, loss).copy()
        grads = ad.backward(g, loss)
        return val, grads[x].copy(), grads[y].copy()

    v1, gx1, gy1 = run()
    v2, gx2, gy2 = run()
    assert np.array_equal(v1, v2)
    assert np.array_equal(gx1, gx2)
    assert np.array_equal(gy1, gy2)


def test_clip01_matches_numpy_clip(rng):
    x = np.concatenate([rng.uniform(-2, 3, 50), [0.0, 1.0, -0.0, 1.5, 2.0]])
    g = Graph()
    out = ad.clip01(g.leaf(x))
    assert np.array_equal(out.value, np.clip(x, 0.0, 1.0))
