import numpy as np
import pytest
from hypothesis import given, strategies as st

from stac.nn import autodiff as ad
from stac.nn.autodiff import NonScalarLoss, Parameter, ShapeMismatch
from stac.nn.checkpoint import load_checkpoint, save_checkpoint
from stac.nn.mlp import MlpParams, forward_mlp, init_mlp, mlp_graph
from stac.nn.optim import Adam, AdamState, adam_step, polyak_update


def fd_check(loss_fn, params, eps=1e-5, tol=1e-4):
    """Compare backward() against central differences on every coordinate."""
    name, err = fd_error(loss_fn, params, eps)
    assert err < tol, (name, err)


def fd_error(loss_fn, params, eps=1e-5):
    """Largest |numeric - analytic| / max(1, |numeric| + |analytic|), and where."""
    worst = (None, 0.0)
    loss = loss_fn()
    ad.zero_grad(params)
    grads = ad.backward(loss, params)
    for p, g in zip(params, grads):
        num = np.zeros_like(p.value)
        it = np.nditer(p.value, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = p.value[i]
            p.value[i] = old + eps
            up = float(loss_fn().value)
            p.value[i] = old - eps
            down = float(loss_fn().value)
            p.value[i] = old
            num[i] = (up - down) / (2 * eps)
        err = np.abs(num - g) / np.maximum(1.0, np.abs(num) + np.abs(g))
        if err.size and err.max() >= worst[1]:
            worst = (p.name, float(err.max()))
    return worst


def _params(rng, *shapes):
    return [Parameter(rng.normal(size=s), name=f"p{i}") for i, s in enumerate(shapes)]


# -- forward ---------------------------------------------------------------------


def test_zero_net_gives_zero():
    p = MlpParams([(np.zeros((4, 3)), np.zeros(4)), (np.zeros((2, 4)), np.zeros(2))])
    assert np.array_equal(forward_mlp(p, np.array([1.0, -2.0, 3.0])), np.zeros(2))


def test_identity_layer_passes_nonnegative_input():
    p = MlpParams([(np.eye(3), np.zeros(3))])
    x = np.array([0.0, 1.5, 2.0])
    assert np.array_equal(forward_mlp(p, x), x)


def test_two_layer_forward_matches_hand_loop():
    rng = np.random.default_rng(3)
    p = init_mlp([3, 4, 2], rng)
    x = rng.normal(size=3)
    (w0, b0), (w1, b1) = p.layers
    hidden = []
    for j in range(4):
        s = b0[j]
        for k in range(3):
            s += w0[j, k] * x[k]
        hidden.append(s if s > 0 else 0.0)
    out = []
    for j in range(2):
        s = b1[j]
        for k in range(4):
            s += w1[j, k] * hidden[k]
        out.append(s)
    assert forward_mlp(p, x) == pytest.approx(out, abs=1e-12)
    # the graph version agrees with the numpy one
    layers = [(ad.as_node(w), ad.as_node(b)) for w, b in p.layers]
    assert mlp_graph(layers, x[None]).value[0] == pytest.approx(out, abs=1e-12)


def test_forward_shape_errors():
    p = init_mlp([3, 2], np.random.default_rng(0))
    with pytest.raises(ShapeMismatch):
        forward_mlp(p, np.zeros(4))
    with pytest.raises(ShapeMismatch):
        MlpParams([(np.zeros((4, 3)), np.zeros(4)), (np.zeros((2, 5)), np.zeros(2))])
    with pytest.raises(ShapeMismatch):
        MlpParams([(np.zeros((4, 3)), np.zeros(3))])


def test_init_range():
    p = init_mlp([16, 8, 3], np.random.default_rng(0), out_scale=0.1)
    (w0, b0), (w1, b1) = p.layers
    assert np.abs(w0).max() <= 0.25 and np.abs(b0).max() <= 0.25
    assert np.abs(w1).max() <= 0.1 / np.sqrt(8)


# -- backward ----------------------------------------------------------------------


def test_sum_of_squares_gradient():
    x = Parameter(np.array([1.0, -2.0, 0.5]))
    (g,) = ad.backward(ad.sum_(ad.square(x)), [x])
    assert np.array_equal(g, 2 * x.value)


def test_nonscalar_loss():
    x = Parameter(np.ones(3))
    with pytest.raises(NonScalarLoss):
        ad.backward(ad.square(x))


def test_disconnected_parameter_gets_zero():
    x, y = Parameter(np.ones(3)), Parameter(np.ones(2))
    gx, gy = ad.backward(ad.sum_(x), [x, y])
    assert np.array_equal(gx, np.ones(3)) and np.array_equal(gy, np.zeros(2))


def test_shape_errors_in_ops():
    a, b = Parameter(np.ones((2, 3))), Parameter(np.ones((2, 2)))
    with pytest.raises(ShapeMismatch):
        ad.matmul(a, b)
    with pytest.raises(ShapeMismatch):
        ad.add(a, b)
    with pytest.raises(ShapeMismatch):
        ad.minimum(a, b)


def test_shared_subexpression_accumulates():
    x = Parameter(np.array([3.0]))
    y = ad.mul(x, x)
    (g,) = ad.backward(ad.sum_(ad.add(y, y)), [x])
    assert g[0] == pytest.approx(12.0)


def test_categorical_policy_loss_matches_fd():
    rng = np.random.default_rng(0)
    w, b = _params(rng, (3, 4), (3,))
    x = rng.normal(size=(5, 4))
    q = rng.normal(size=(5, 3))
    mask = np.array([[1, 1, 1], [1, 0, 1], [0, 1, 1], [1, 1, 0], [1, 1, 1]], dtype=bool)

    def loss():
        z = ad.linear(x, w, b)
        logp = ad.logsoftmax(z, mask)
        p = ad.softmax(z, mask)
        return ad.mean(ad.sum_(ad.mul(p, ad.add(ad.scale(logp, 0.3), -q)), axis=1))

    fd_check(loss, [w, b])


OPS = ["matmul", "add", "mul", "relu", "softmax", "logsoftmax", "sum", "mean", "square",
       "scale", "min", "concat", "gather", "reshape", "rows", "linear"]


def op_graph(op, seed):
    """A scalar loss through `op` on random inputs, and the parameters to check."""
    rng = np.random.default_rng(seed)
    a, b = _params(rng, (3, 4), (3, 4))
    c = Parameter(rng.normal(size=(4, 2)))
    w = Parameter(rng.normal(size=(2, 4)))
    bias = Parameter(rng.normal(size=(2,)))
    weights = rng.normal(size=(3, 4))  # fixed readout so the loss is a generic scalar
    idx = rng.integers(4, size=3)
    rows = rng.integers(3, size=5)

    def head(n):
        r = np.random.default_rng(seed + 1).normal(size=n.shape)
        return ad.sum_(ad.mul(n, r))

    graphs = {
        "matmul": lambda: head(ad.matmul(a, c)),
        "add": lambda: head(ad.add(a, b)),
        "mul": lambda: head(ad.mul(a, b)),
        "relu": lambda: head(ad.relu(a)),
        "softmax": lambda: head(ad.softmax(a)),
        "logsoftmax": lambda: head(ad.logsoftmax(a)),
        "sum": lambda: head(ad.sum_(ad.mul(a, weights), axis=1)),
        "mean": lambda: head(ad.mean(ad.mul(a, weights), axis=0)),
        "square": lambda: head(ad.square(a)),
        "scale": lambda: head(ad.scale(a, -2.5)),
        "min": lambda: head(ad.minimum(a, b)),
        "concat": lambda: head(ad.concat([a, b], axis=1)),
        "gather": lambda: head(ad.gather(a, idx)),
        "reshape": lambda: head(ad.reshape(a, (4, 3))),
        "rows": lambda: head(ad.index_rows(a, rows)),
        "linear": lambda: head(ad.linear(a, w, bias)),
    }
    params = {"matmul": [a, c], "linear": [a, w, bias], "concat": [a, b], "add": [a, b],
              "mul": [a, b], "min": [a, b]}.get(op, [a])
    return graphs[op], params


@pytest.mark.parametrize("op", OPS)
@given(seed=st.integers(0, 2**32 - 1))
def test_every_op_matches_finite_differences(op, seed):
    fd_check(*op_graph(op, seed))


@given(st.lists(st.floats(-50, 50), min_size=1, max_size=8),
       st.lists(st.booleans(), min_size=8, max_size=8))
def test_softmax_is_a_distribution(logits, keep):
    z = np.array(logits)
    mask = np.array(keep[:len(z)])
    if not mask.any():
        mask[0] = True
    p = ad.softmax(z, mask).value
    assert np.all(p >= 0) and abs(p.sum() - 1) < 1e-9
    assert np.all(p[~mask] == 0)
    lp = ad.logsoftmax(z, mask).value
    assert np.all(np.isfinite(lp))
    assert np.allclose(np.exp(lp[mask]), p[mask])


def test_float32_mode():
    ad.set_default_dtype(np.float32)
    try:
        p = Parameter(np.ones(3))
        assert p.value.dtype == np.float32
    finally:
        ad.set_default_dtype(np.float64)


# -- optimizers -------------------------------------------------------------------


def test_adam_zero_gradient_leaves_params():
    p = [np.array([1.0, -2.0])]
    s = AdamState(lr=0.1, first_moment=[np.zeros(2)], second_moment=[np.zeros(2)])
    adam_step(s, p, [np.zeros(2)])
    assert np.array_equal(p[0], [1.0, -2.0]) and s.step_count == 1


def test_adam_first_step_is_lr_times_sign():
    p = [np.array([0.0, 0.0, 0.0])]
    g = np.array([3.0, -0.01, 1e3])
    s = AdamState(lr=0.01, first_moment=[np.zeros(3)], second_moment=[np.zeros(3)])
    adam_step(s, p, [g])
    # m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps)
    expected = -0.01 * g / (np.abs(g) + 1e-8)
    assert p[0] == pytest.approx(expected, rel=1e-12)


def test_adam_repeated_gradient_moves_monotonically():
    x = [np.array([5.0])]
    s = AdamState(lr=0.05, first_moment=[np.zeros(1)], second_moment=[np.zeros(1)])
    seen = [5.0]
    for _ in range(50):
        adam_step(s, x, [np.array([2.0])])
        seen.append(float(x[0][0]))
    assert all(b < a for a, b in zip(seen, seen[1:]))


def test_adam_shape_errors():
    s = AdamState(lr=0.1, first_moment=[np.zeros(2)], second_moment=[np.zeros(2)])
    with pytest.raises(ShapeMismatch):
        adam_step(s, [np.zeros(2)], [np.zeros(3)])
    opt = Adam([Parameter(np.zeros(2))], lr=0.1)
    with pytest.raises(ShapeMismatch):
        opt.step([np.zeros(3)])


def test_flat_adam_matches_per_array_adam():
    rng = np.random.default_rng(1)
    ps = _params(rng, (3, 2), (4,))
    ref = [p.value.copy() for p in ps]
    s = AdamState(lr=0.01, first_moment=[np.zeros_like(r) for r in ref],
                  second_moment=[np.zeros_like(r) for r in ref])
    opt = Adam(ps, lr=0.01)
    for _ in range(5):
        grads = [rng.normal(size=r.shape) for r in ref]
        adam_step(s, ref, grads)
        opt.step(grads)
    for p, r in zip(ps, ref):
        assert np.allclose(p.value, r, rtol=0, atol=1e-15)


def test_adam_minimizes_quadratic():
    x = Parameter(np.array([3.0, -4.0]))
    opt = Adam([x], lr=0.1)
    for _ in range(300):
        ad.zero_grad([x])
        ad.backward(ad.sum_(ad.square(x)))
        opt.step()
    assert np.abs(x.value).max() < 1e-2


@pytest.mark.parametrize("tau,expect", [(1.0, 2.0), (0.0, 0.0), (0.5, 1.0)])
def test_polyak(tau, expect):
    t = [np.zeros(3)]
    polyak_update(t, [np.full(3, 2.0)], tau)
    assert np.array_equal(t[0], np.full(3, expect))


def test_polyak_shape_error():
    with pytest.raises(ShapeMismatch):
        polyak_update([np.zeros(3)], [np.zeros(2)], 0.5)


def test_training_is_deterministic():
    def run():
        rng = np.random.default_rng(7)
        w, b = _params(rng, (2, 3), (2,))
        opt = Adam([w, b], lr=0.01)
        x, y = rng.normal(size=(8, 3)), rng.normal(size=(8, 2))
        for _ in range(20):
            ad.zero_grad([w, b])
            ad.backward(ad.mean(ad.square(ad.add(ad.linear(x, w, b), -y))))
            opt.step()
        return w.value.copy(), b.value.copy()

    (w1, b1), (w2, b2) = run(), run()
    assert w1.tobytes() == w2.tobytes() and b1.tobytes() == b2.tobytes()


# -- checkpoints ---------------------------------------------------------------------


@given(seed=st.integers(0, 2**32 - 1))
def test_checkpoint_round_trip_is_bit_exact(tmp_path_factory, seed):
    rng = np.random.default_rng(seed)
    arrays = {"w": rng.normal(size=(3, 5)), "b": rng.normal(size=5), "s": np.array(rng.normal()),
              "f32": rng.normal(size=(2, 2)).astype(np.float32), "empty": np.zeros((0, 3))}
    d = tmp_path_factory.mktemp("ckpt")
    save_checkpoint(d, arrays, {"step": 3})
    back, meta = load_checkpoint(d)
    assert meta == {"step": 3}
    assert list(back) == list(arrays)
    for k in arrays:
        assert back[k].dtype == arrays[k].dtype and back[k].shape == arrays[k].shape
        assert back[k].tobytes() == arrays[k].tobytes()
