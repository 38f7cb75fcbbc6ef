import math

import numpy as np
import pytest

from aicc.checkpoint import load_tensors, save_tensors
from aicc.errors import CheckpointError, DimensionError, TrainingDivergedError
from aicc.nn import (
    Adam,
    Mlp,
    NetworkArch,
    adam_step,
    finite_difference_check,
    mlp_backward,
    mlp_forward,
)


def reference_forward(params, x):
    """Second, loop-based evaluation of the network."""
    a = list(x)
    n = len(params.weights)
    for layer, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = [sum(a[i] * w[i, j] for i in range(len(a))) + b[j] for j in range(w.shape[1])]
        if layer == n - 1:
            a = z
        elif params.arch.hidden_activation == "relu":
            a = [max(v, 0.0) for v in z]
        else:
            a = [math.tanh(v) for v in z]
    return np.array(a)


def quadratic(target):
    def loss(out):
        d = out - target
        return 0.5 * float(np.sum(d * d)), d
    return loss


def away_from_kinks(params, x, margin=1e-3):
    _, tape = mlp_forward(params, x)
    return all(np.all(np.abs(z) > margin) for z in tape.preacts[:-1])


def test_zero_network_outputs_zero(rng):
    net = Mlp.zeros(NetworkArch(5, 3, (4, 4)))
    out, _ = mlp_forward(net, rng.normal(size=5))
    np.testing.assert_array_equal(out, np.zeros(3))


def test_identity_linear_layer(rng):
    net = Mlp(NetworkArch(3, 3, ()), [np.eye(3)], [np.zeros(3)])
    x = rng.normal(size=3)
    np.testing.assert_array_equal(mlp_forward(net, x)[0], x)


@pytest.mark.parametrize("act", ["relu", "tanh"])
def test_forward_matches_reference(rng, act):
    net = Mlp.init(NetworkArch(4, 3, (6, 5), act), rng)
    for b in net.biases:
        b += rng.normal(size=b.shape)
    x = rng.normal(size=4)
    np.testing.assert_allclose(mlp_forward(net, x)[0], reference_forward(net, x), rtol=1e-12, atol=1e-14)


def test_forward_is_deterministic_and_batched(rng):
    net = Mlp.init(NetworkArch(4, 2, (8, 8)), rng)
    xs = rng.normal(size=(5, 4))
    batch = mlp_forward(net, xs)[0]
    again = mlp_forward(net, xs)[0]
    assert batch.tobytes() == again.tobytes()
    for i in range(5):
        np.testing.assert_allclose(batch[i], mlp_forward(net, xs[i])[0], rtol=1e-14)


def test_forward_dimension_mismatch(rng):
    net = Mlp.init(NetworkArch(4, 2, (3,)), rng)
    with pytest.raises(DimensionError):
        mlp_forward(net, np.zeros(5))


def test_linear_neuron_gradients():
    net = Mlp(NetworkArch(1, 1, ()), [np.array([[0.7]])], [np.array([0.1])])
    out, tape = mlp_forward(net, np.array([2.0]))
    grads, g_in = mlp_backward(net, tape, np.ones(1))
    assert grads[0][0, 0] == 2.0
    assert grads[1][0] == 1.0
    assert g_in[0] == pytest.approx(0.7)


def test_relu_blocks_negative_preactivation():
    net = Mlp(NetworkArch(1, 1, (1,)), [np.array([[1.0]]), np.array([[3.0]])],
              [np.array([-5.0]), np.array([0.0])])
    _, tape = mlp_forward(net, np.array([2.0]))
    grads, g_in = mlp_backward(net, tape, np.ones(1))
    assert grads[0][0, 0] == 0.0 and grads[1][0] == 0.0 and g_in[0] == 0.0


def test_stale_tape_rejected(rng):
    net = Mlp.init(NetworkArch(2, 2, (3,)), rng)
    _, tape = mlp_forward(net, np.ones(2))
    adam_step(Adam(), [net], [np.ones_like(t) for t in net.tensors()])
    with pytest.raises(ValueError):
        mlp_backward(net, tape, np.ones(2))
    other = net.copy()
    _, tape = mlp_forward(other, np.ones(2))
    with pytest.raises(ValueError):
        mlp_backward(net, tape, np.ones(2))


def test_finite_difference_linear_net(rng):
    net = Mlp.init(NetworkArch(4, 3, ()), rng)
    x = rng.normal(size=4)
    assert finite_difference_check(net, x, quadratic(rng.normal(size=3))) < 1e-7


def test_finite_difference_tanh_net(rng):
    net = Mlp.init(NetworkArch(4, 3, (7, 6), "tanh"), rng)
    assert finite_difference_check(net, rng.normal(size=4), quadratic(rng.normal(size=3))) < 1e-6


def test_finite_difference_relu_nets():
    """Twenty random two-hidden-layer relu nets, inputs kept off the kinks."""
    checked = 0
    seed = 0
    while checked < 20:
        rng = np.random.default_rng(seed)
        seed += 1
        net = Mlp.init(NetworkArch(5, 3, (8, 8)), rng)
        for b in net.biases:
            b += 0.1 * rng.normal(size=b.shape)
        x = rng.normal(size=5)
        if not away_from_kinks(net, x):
            continue
        assert finite_difference_check(net, x, quadratic(rng.normal(size=3))) < 1e-4
        checked += 1


def test_adam_zero_gradient_keeps_params():
    p = np.array([1.0, -2.0])
    opt = Adam()
    opt.apply([p], [np.zeros(2)])
    np.testing.assert_array_equal(p, [1.0, -2.0])
    assert opt.step == 1


def test_adam_first_step_magnitude():
    for g in (3.0, -0.02):
        p = np.array([0.5])
        opt = Adam(lr=1e-3)
        opt.apply([p], [np.array([g])])
        step = p[0] - 0.5
        assert np.sign(step) == -np.sign(g)
        assert abs(step) == pytest.approx(1e-3, rel=1e-4)


def test_adam_quadratic_converges():
    x = np.array([0.0])
    opt = Adam(lr=0.1, decay_rate=0.96, decay_steps=100)
    for _ in range(500):
        opt.apply([x], [2.0 * (x - 3.0)])
    assert abs(x[0] - 3.0) < 1e-3


def test_adam_learning_rate_decay():
    opt = Adam(lr=1e-3, decay_rate=0.5, decay_steps=10)
    assert opt.learning_rate(0) == 1e-3
    assert opt.learning_rate(10) == pytest.approx(5e-4)
    assert opt.learning_rate(5) == pytest.approx(1e-3 * 0.5 ** 0.5)


def test_adam_without_decay_is_constant_rate(rng):
    a = np.array([1.0, 2.0])
    b = a.copy()
    decayed_off = Adam(lr=0.01, decay_rate=0.5, decay_steps=math.inf)
    constant = Adam(lr=0.01, decay_rate=1.0)
    for _ in range(20):
        g = rng.normal(size=2)
        decayed_off.apply([a], [g])
        constant.apply([b], [g])
    np.testing.assert_array_equal(a, b)


def test_adam_rejects_nan_gradient():
    with pytest.raises(TrainingDivergedError):
        Adam().apply([np.zeros(2)], [np.array([0.0, np.nan])])


def test_flat_roundtrip(rng):
    net = Mlp.init(NetworkArch(3, 2, (4,)), rng)
    flat = net.flat()
    assert flat.size == net.num_params == 3 * 4 + 4 + 4 * 2 + 2
    other = Mlp.zeros(net.arch)
    other.set_flat(flat)
    np.testing.assert_array_equal(other.flat(), flat)


def test_init_is_seeded():
    arch = NetworkArch(6, 4, (5, 5))
    a = Mlp.init(arch, np.random.default_rng(3)).flat()
    b = Mlp.init(arch, np.random.default_rng(3)).flat()
    assert a.tobytes() == b.tobytes()


def test_checkpoint_roundtrip(tmp_path, rng):
    tensors = [("a.w0", rng.normal(size=(3, 4))), ("a.b0", rng.normal(size=4)), ("s", np.array(2.5))]
    path = tmp_path / "x.ckpt"
    save_tensors(path, tensors, {"arch": [3, 4], "note": "hi"})
    meta, loaded = load_tensors(path)
    assert meta == {"arch": [3, 4], "note": "hi"}
    for (n1, t1), (n2, t2) in zip(tensors, loaded):
        assert n1 == n2
        np.testing.assert_array_equal(t1, t2)


def test_checkpoint_layout_is_manifest_then_le_float64(tmp_path):
    path = tmp_path / "x.ckpt"
    save_tensors(path, [("w", np.array([[1.0, 2.0]]))])
    raw = path.read_bytes()
    head, _, body = raw.partition(b"end_manifest\n")
    assert head.decode().splitlines() == ["AICC-CHECKPOINT", "schema_version 1", "tensor w 1x2"]
    assert body == np.array([1.0, 2.0], dtype="<f8").tobytes()


def test_checkpoint_truncated(tmp_path):
    path = tmp_path / "x.ckpt"
    save_tensors(path, [("w", np.ones(4))])
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(CheckpointError):
        load_tensors(path)
