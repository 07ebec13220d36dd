import numpy as np
import pytest

from yannrl.nets import AdamState, Mlp, adam_step, add_grads, soft_update_mlp, zero_grads


def test_zero_output_init_forces_zero():
    net = Mlp([3, 16, 16, 2], seed=1, zero_output_init=True)
    rng = np.random.default_rng(0)
    for _ in range(20):
        out = net.forward(rng.normal(size=3) * 5)
        assert np.array_equal(out, np.zeros(2))


def test_identity_layer_passthrough():
    net = Mlp([2, 2], activations=["identity"], seed=0)
    net.W[0] = np.eye(2)
    net.b[0] = np.zeros(2)
    x = np.array([0.3, -1.2])
    assert np.array_equal(net.forward(x), x)


def test_two_layer_tanh_hand_computation():
    # one hidden tanh unit then identity output, all weights set by hand
    net = Mlp([1, 1, 1], activations=["tanh", "identity"], seed=0)
    net.W[0] = np.array([[2.0]])
    net.b[0] = np.array([0.1])
    net.W[1] = np.array([[-1.5]])
    net.b[1] = np.array([0.25])
    expected = -1.5 * np.tanh(2.0 * 0.5 + 0.1) + 0.25
    assert abs(net.forward(np.array([0.5]))[0] - expected) <= 1e-12


def test_linear_net_gradient_is_outer_product():
    net = Mlp([3, 2], activations=["identity"], seed=4)
    x = np.array([1.0, -2.0, 0.5])
    cot = np.array([0.7, -0.3])
    grads, dx = net.backward(x, cot)
    assert np.max(np.abs(grads[0] - np.outer(cot, x))) == 0.0
    assert np.max(np.abs(grads[1] - cot)) == 0.0
    assert np.max(np.abs(dx - net.W[0].T @ cot)) < 1e-14


def test_input_gradient_of_identity_net():
    net = Mlp([2, 2], activations=["identity"], seed=0)
    net.W[0] = np.eye(2)
    cot = np.array([0.4, -0.9])
    _, dx = net.backward(np.array([1.0, 1.0]), cot)
    assert np.array_equal(dx, cot)


def _fd_check(net, seed, n_coords=50, h=1e-5):
    """Central finite differences on <cot, forward(x)> over parameter coords."""
    rng = np.random.default_rng(seed)
    x = rng.normal(size=net.n_in)
    cot = rng.normal(size=net.n_out)
    grads, dx = net.backward(x, cot)
    params = net.params()
    flat_sizes = [p.size for p in params]
    total = sum(flat_sizes)
    coords = rng.choice(total, size=min(n_coords, total), replace=False)
    worst = 0.0
    for c in coords:
        # locate (array, offset)
        idx, off = 0, int(c)
        while off >= flat_sizes[idx]:
            off -= flat_sizes[idx]
            idx += 1
        p_plus = [p.copy() for p in params]
        p_minus = [p.copy() for p in params]
        p_plus[idx].flat[off] += h
        p_minus[idx].flat[off] -= h
        f_plus = cot @ net.with_params(p_plus).forward(x)
        f_minus = cot @ net.with_params(p_minus).forward(x)
        fd = (f_plus - f_minus) / (2 * h)
        an = grads[idx].flat[off]
        denom = max(abs(fd), abs(an), 1e-8)
        worst = max(worst, abs(fd - an) / denom)
    # input gradient check
    for i in range(net.n_in):
        xp = x.copy(); xp[i] += h
        xm = x.copy(); xm[i] -= h
        fd = (cot @ net.forward(xp) - cot @ net.forward(xm)) / (2 * h)
        denom = max(abs(fd), abs(dx[i]), 1e-8)
        worst = max(worst, abs(fd - dx[i]) / denom)
    return worst


@pytest.mark.parametrize("widths,acts", [
    ([3, 5], ["tanh"]),
    ([3, 5], ["relu"]),
    ([3, 5], ["identity"]),
    ([4, 8, 2], None),
    ([2, 8, 8, 1], None),
    ([3, 6, 6, 6, 2], None),
])
def test_gradients_match_finite_differences(widths, acts):
    net = Mlp(widths, activations=acts, seed=12)
    assert _fd_check(net, seed=99) < 1e-5


def test_seeded_init_reproducible():
    a = Mlp([3, 8, 2], seed=7)
    b = Mlp([3, 8, 2], seed=7)
    for pa, pb in zip(a.params(), b.params()):
        assert np.array_equal(pa, pb)
    c = Mlp([3, 8, 2], seed=8)
    assert any(not np.array_equal(pa, pc) for pa, pc in zip(a.params(), c.params()))


def test_backward_does_not_mutate():
    net = Mlp([2, 4, 1], seed=3)
    before = [p.copy() for p in net.params()]
    net.backward(np.array([0.5, -0.5]), np.array([1.0]))
    for p0, p1 in zip(before, net.params()):
        assert np.array_equal(p0, p1)


def test_adam_zero_gradient_is_identity():
    net = Mlp([2, 4, 1], seed=3)
    state = AdamState(net, lr=0.1)
    updated, _ = adam_step(net, zero_grads(net), state)
    for p0, p1 in zip(net.params(), updated.params()):
        assert np.array_equal(p0, p1)


def test_adam_first_step_magnitude():
    # with constant gradient g the bias-corrected first step is lr*g/(|g|+eps)
    net = Mlp([1, 1], activations=["identity"], seed=0)
    state = AdamState(net, lr=0.05)
    g = [np.full_like(p, 2.0) for p in net.params()]
    updated, _ = adam_step(net, g, state)
    for p0, p1 in zip(net.params(), updated.params()):
        assert np.max(np.abs((p0 - p1) - 0.05 * 2.0 / (2.0 + state.eps))) < 1e-12


def test_adam_minimizes_quadratic():
    net = Mlp([1, 1], activations=["identity"], seed=0)
    net.W[0] = np.array([[1.0]])
    net.b[0] = np.array([0.0])
    state = AdamState(net, lr=0.1)
    for _ in range(200):
        w = net.W[0][0, 0]
        grads = [np.array([[2.0 * w]]), np.array([0.0])]
        net, state = adam_step(net, grads, state)
    assert abs(net.W[0][0, 0]) < 0.01


def test_soft_update_endpoints_and_midpoint():
    a = Mlp([2, 3, 1], seed=1)
    b = Mlp([2, 3, 1], seed=2)
    assert all(np.array_equal(x, y) for x, y in
               zip(soft_update_mlp(a, b, 1.0).params(), b.params()))
    assert all(np.array_equal(x, y) for x, y in
               zip(soft_update_mlp(a, b, 0.0).params(), a.params()))
    mid = soft_update_mlp(a, b, 0.5)
    for pm, pa, pb in zip(mid.params(), a.params(), b.params()):
        assert np.max(np.abs(pm - 0.5 * (pa + pb))) < 1e-15


def test_grad_accumulation_helpers():
    net = Mlp([2, 2], activations=["identity"], seed=0)
    total = zero_grads(net)
    g1, _ = net.backward(np.array([1.0, 0.0]), np.array([1.0, 0.0]))
    add_grads(total, g1, 0.5)
    add_grads(total, g1, 0.5)
    for t, g in zip(total, g1):
        assert np.max(np.abs(t - g)) < 1e-15


def test_checkpoint_roundtrip(tmp_path):
    net = Mlp([3, 8, 2], seed=5, zero_output_init=True)
    # perturb so the roundtrip is nontrivial
    params = [p + 0.01 for p in net.params()]
    net = net.with_params(params)
    path = tmp_path / "net.json"
    net.save(path)
    back = Mlp.load(path)
    assert back.widths == net.widths
    assert back.activations == net.activations
    for p0, p1 in zip(net.params(), back.params()):
        assert np.array_equal(p0, p1)
