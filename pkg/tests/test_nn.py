import numpy as np
import pytest

from iaac.nn import (Categorical, NetSpec, RecurrentNet, bptt_gradient, finite_difference_gradient,
                     forward_sequence, load_checkpoint, log_softmax, relative_error, save_checkpoint)


def squared_loss(target):
    def loss(out):
        diff = out - target
        return 0.5 * float(np.sum(diff ** 2)), diff
    return loss


def fd_check(net, loss_fn, x, side=None):
    analytic = bptt_gradient(net, loss_fn, x, side)
    theta = net.params.flat()

    def f(v):
        net.params.set_flat(v)
        return loss_fn(net.forward(x, side)[1])[0]

    numeric = finite_difference_gradient(f, theta, eps=1e-5)
    net.params.set_flat(theta)
    return analytic, numeric


def test_zero_gru_stays_zero():
    net = RecurrentNet(NetSpec(input_dim=3, hidden_dim=5, encoder="gru"), 0)
    net.params.set_flat(np.zeros(net.params.size))
    hidden, _ = forward_sequence(net, np.random.default_rng(0).normal(size=(7, 3)))
    assert np.all(hidden == 0.0)


def test_identity_encoder_empty_head_reproduces_inputs():
    net = RecurrentNet(NetSpec(input_dim=3, output_dim=None, encoder="none"), 0)
    x = np.random.default_rng(1).normal(size=(4, 3))
    assert np.array_equal(forward_sequence(net, x)[1], x)


def test_forward_is_pure():
    net = RecurrentNet(NetSpec(input_dim=3, hidden_dim=8, head=(6,)), 3)
    x = np.random.default_rng(2).normal(size=(10, 3))
    a = forward_sequence(net, x)[1]
    b = forward_sequence(net, x)[1]
    assert np.array_equal(a, b)


def test_dimension_mismatch():
    net = RecurrentNet(NetSpec(input_dim=3), 0)
    with pytest.raises(ValueError):
        net.forward(np.zeros((4, 2)))
    side_net = RecurrentNet(NetSpec(input_dim=3, side_dim=2), 0)
    with pytest.raises(ValueError):
        side_net.forward(np.zeros((4, 3)))


def test_step_matches_forward():
    spec = NetSpec(input_dim=4, hidden_dim=6, embed_dim=5, head=(7,), output_dim=3)
    net = RecurrentNet(spec, 4)
    x = np.random.default_rng(3).normal(size=(6, 4))
    _, out = forward_sequence(net, x)
    h = net.initial_state()
    for t in range(6):
        h, y = net.step(x[t], h)
        assert np.allclose(y, out[t], atol=1e-12)


def test_constant_loss_zero_gradient():
    net = RecurrentNet(NetSpec(input_dim=3, hidden_dim=4), 0)
    g = bptt_gradient(net, lambda out: (1.0, np.zeros_like(out)), np.ones((5, 3)))
    assert np.all(g == 0.0)


@pytest.mark.parametrize("encoder", ["gru", "elman"])
def test_recurrent_gradient_check(encoder):
    rng = np.random.default_rng(5)
    net = RecurrentNet(NetSpec(input_dim=3, hidden_dim=8, encoder=encoder, output_dim=2), rng)
    x = rng.normal(size=(5, 3))
    analytic, numeric = fd_check(net, squared_loss(rng.normal(size=(5, 2))), x)
    assert relative_error(analytic, numeric) < 1e-4


def test_linear_layer_closed_form():
    rng = np.random.default_rng(6)
    net = RecurrentNet(NetSpec(input_dim=4, encoder="none", output_dim=2), rng)
    X = rng.normal(size=(20, 4))
    Y = rng.normal(size=(20, 2))
    g = bptt_gradient(net, squared_loss(Y), X)
    W, b = net.params["out.W"], net.params["out.b"]
    # gradient of 0.5 ||X W + 1 b - Y||^2
    resid = X @ W + b - Y
    expected = np.concatenate([(X.T @ X @ W + X.T @ (np.outer(np.ones(20), b) - Y)).ravel(),
                               resid.sum(axis=0)])
    assert np.allclose(g, expected, atol=1e-10, rtol=0)


def test_categorical_basics():
    d = Categorical(np.zeros(4))
    assert all(d.log_prob(a) == pytest.approx(np.log(0.25)) for a in range(4))
    assert Categorical(np.zeros(2)).entropy() == pytest.approx(np.log(2))
    sat = Categorical(np.array([0.0, 1000.0, 0.0]))
    rng = np.random.default_rng(0)
    assert all(sat.sample(rng) == 1 for _ in range(10_000))


def test_softmax_normalized_and_entropy_nonnegative():
    rng = np.random.default_rng(0)
    for _ in range(100):
        logits = rng.normal(scale=20, size=(3, 6))
        d = Categorical(logits)
        assert np.all(np.abs(d.probs.sum(axis=-1) - 1) < 1e-12)
        assert np.all(d.entropy() >= 0)
    assert np.all(np.isfinite(log_softmax(np.array([1e4, -1e4, 0.0]))))


def test_categorical_gradients():
    rng = np.random.default_rng(1)
    logits = rng.normal(size=5)
    d = Categorical(logits)
    for a in range(5):
        num = finite_difference_gradient(lambda z: Categorical(z).log_prob(a), logits)
        assert np.allclose(d.grad_log_prob(a), num, atol=1e-8)
    num = finite_difference_gradient(lambda z: float(Categorical(z).entropy()), logits)
    assert np.allclose(d.grad_entropy(), num, atol=1e-8)
    batch = Categorical(rng.normal(size=(3, 5)))
    acts = np.array([0, 4, 2])
    g = batch.grad_log_prob(acts)
    for k in range(3):
        assert np.allclose(g[k], Categorical(batch.logits[k]).grad_log_prob(acts[k]))


def test_batched_sampling_frequencies():
    probs = np.array([0.2, 0.5, 0.3])
    d = Categorical(np.tile(np.log(probs), (50_000, 1)))
    draws = d.sample(np.random.default_rng(0))
    assert np.allclose(np.bincount(draws, minlength=3) / 50_000, probs, atol=0.01)


def test_identical_seeds_identical_nets():
    spec = NetSpec(input_dim=3, hidden_dim=4, head=(5,))
    a, b = RecurrentNet(spec, 11), RecurrentNet(spec, 11)
    assert np.array_equal(a.params.flat(), b.params.flat())


def test_init_ranges():
    net = RecurrentNet(NetSpec(input_dim=9, hidden_dim=16, head=(4,)), 0)
    assert np.all(np.abs(net.params["gru.Wx"]) <= 1 / 3)
    assert np.all(np.abs(net.params["gru.Wh"]) <= 1 / 4)
    assert np.all(net.params["gru.b"] == 0) and np.all(net.params["head0.b"] == 0)


def test_checkpoint_round_trip(tmp_path):
    net = RecurrentNet(NetSpec(input_dim=3, hidden_dim=4, side_dim=2, side_embed_dim=3, head=(5,)), 2)
    path = tmp_path / "c.json"
    save_checkpoint(path, {"critic": net}, step=123, extra={"note": "x"})
    nets, step, extra = load_checkpoint(path)
    assert step == 123 and extra == {"note": "x"}
    assert nets["critic"].spec == net.spec
    assert np.array_equal(nets["critic"].params.flat(), net.params.flat())


def test_non_finite_reported():
    net = RecurrentNet(NetSpec(input_dim=2, encoder="none"), 0)
    net.params["out.W"][0, 0] = np.inf
    with pytest.raises(FloatingPointError):
        net.forward(np.ones((1, 2)))
