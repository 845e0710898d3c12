import numpy as np
import pytest

from ecgshapegan import autodiff as ad
from ecgshapegan import nets
from ecgshapegan.autodiff import Tensor
from ecgshapegan.errors import ShapeMismatch


class TestPointwiseConv:
    def test_hand_example(self):
        # weight [[2]], bias [1] on [[[3, 4]]] -> [[[7, 9]]]
        x = Tensor(np.array([[[3.0, 4.0]]]))
        w = Tensor(np.array([[2.0]]))
        b = Tensor(np.array([1.0]))
        out = nets.pointwise_conv1(x, w, b)
        assert np.allclose(out.data, [[[7.0, 9.0]]])

    def test_equals_per_position_affine(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((3, 5, 7))
        w = rng.standard_normal((5, 4))
        b = rng.standard_normal(4)
        out = nets.pointwise_conv1(Tensor(x), Tensor(w), Tensor(b))
        want = np.einsum("bcl,cd->bdl", x, w) + b[None, :, None]
        assert np.max(np.abs(out.data - want)) < 1e-12

    def test_flat_path_matches(self):
        rng = np.random.default_rng(1)
        conv = nets.Conv1x1(3, 6, rng)
        x = rng.standard_normal((4, 3, 5))
        full = conv(Tensor(x)).data
        flat, batch, length = nets._to_flat(Tensor(x))
        via_flat = nets._from_flat(conv.flat(flat), batch, length).data
        assert np.array_equal(full, via_flat)


class TestConv1dAndPool:
    def test_kernel5_matches_direct_correlation(self):
        rng = np.random.default_rng(2)
        conv = nets.Conv1d(2, 3, kernel=5, rng=rng)
        x = rng.standard_normal((2, 2, 12))
        out = conv(Tensor(x)).data
        w = conv.w.data.reshape(5, 2, 3)  # tap-major rows, as concatenated
        want = np.zeros((2, 3, 8))
        for t in range(8):
            acc = np.zeros((2, 3))
            for k in range(5):
                acc += x[:, :, t + k] @ w[k]
            want[:, :, t] = acc + conv.b.data
        assert np.max(np.abs(out - want)) < 1e-12

    def test_max_pool2(self):
        x = Tensor(np.array([[[1.0, 3.0, -2.0, 0.0, 5.0, 4.0]]]))
        assert np.array_equal(nets.max_pool2(x).data, [[[3.0, 0.0, 5.0]]])

    def test_max_pool2_odd_drops_tail(self):
        x = Tensor(np.array([[[1.0, 2.0, 9.0]]]))
        assert np.array_equal(nets.max_pool2(x).data, [[[2.0]]])


class TestBatchNorm:
    def test_train_normalizes_batch(self):
        rng = np.random.default_rng(3)
        bn = nets.BatchNorm(4)
        x = rng.standard_normal((64, 4)) * 3.0 + 5.0
        out = bn(Tensor(x), train=True).data
        assert np.max(np.abs(out.mean(axis=0))) < 1e-6
        assert np.max(np.abs(out.var(axis=0) - 1.0)) < 1e-3  # eps-deflated

    def test_gamma_beta_applied(self):
        bn = nets.BatchNorm(2)
        bn.gamma.data = np.array([2.0, 2.0])
        bn.beta.data = np.array([1.0, -1.0])
        x = np.random.default_rng(4).standard_normal((32, 2))
        out = bn(Tensor(x), train=True).data
        assert np.allclose(out.mean(axis=0), [1.0, -1.0], atol=1e-6)

    def test_running_stats_update(self):
        bn = nets.BatchNorm(1)
        x = np.full((10, 1), 4.0) + np.linspace(-1, 1, 10)[:, None]
        bn(Tensor(x), train=True)
        assert bn.running_mean[0] == pytest.approx(0.9 * 0.0 + 0.1 * x.mean())
        assert bn.running_var[0] == pytest.approx(0.9 * 1.0 + 0.1 * x.var())

    def test_eval_is_fixed_affine(self):
        bn = nets.BatchNorm(2)
        bn.running_mean[...] = [1.0, -1.0]
        bn.running_var[...] = [4.0, 0.25]
        x = np.array([[3.0, 0.0], [1.0, -1.0]])
        out = bn(Tensor(x), train=False).data
        inv = 1.0 / np.sqrt(np.array([4.0, 0.25]) + bn.eps)
        want = (x - np.array([1.0, -1.0])) * inv
        assert np.max(np.abs(out - want)) < 1e-12
        # eval mode must not touch the buffers
        assert np.array_equal(bn.running_mean, [1.0, -1.0])


def reference_lstm(xs, layers, hidden):
    """Scalar-looped reference with explicit zero initial state."""
    sig = lambda v: 1.0 / (1.0 + np.exp(-v))
    seq = [x.copy() for x in xs]
    for w_ih, w_hh, b_ih, b_hh in layers:
        h = np.zeros((seq[0].shape[0], hidden))
        c = np.zeros_like(h)
        out = []
        for x in seq:
            gates = x @ w_ih + h @ w_hh + b_ih + b_hh
            i = sig(gates[:, :hidden])
            f = sig(gates[:, hidden : 2 * hidden])
            g = np.tanh(gates[:, 2 * hidden : 3 * hidden])
            o = sig(gates[:, 3 * hidden :])
            c = f * c + i * g
            h = o * np.tanh(c)
            out.append(h)
        seq = out
    return seq[-1]


class TestLstm:
    @pytest.mark.parametrize("steps", [1, 3])
    def test_matches_reference(self, steps):
        rng = np.random.default_rng(5)
        lstm = nets.LSTM(input_size=4, hidden_size=2, num_layers=2, rng=rng)
        xs = [rng.standard_normal((3, 4)) for _ in range(steps)]
        got = lstm([Tensor(x) for x in xs]).data
        layers = [
            (w.data, wh.data, bi.data, bh.data) for w, wh, bi, bh in lstm.layers
        ]
        want = reference_lstm(xs, layers, hidden=2)
        assert np.max(np.abs(got - want)) < 1e-12

    def test_gradients_flow_to_all_params(self):
        rng = np.random.default_rng(6)
        lstm = nets.LSTM(input_size=3, hidden_size=2, num_layers=1, rng=rng)
        xs = [Tensor(rng.standard_normal((2, 3))) for _ in range(2)]
        loss = ad.sum_(lstm(xs))
        grads = ad.grad(loss, lstm.param_tensors())
        for (name, _), g in zip(lstm.params(), grads):
            assert np.any(g.data != 0), name


class TestOneHot:
    def test_encoding(self):
        out = nets.one_hot([0, 2, 1]).data
        assert np.array_equal(out, [[1, 0, 0], [0, 0, 1], [0, 1, 0]])


class TestGenerator:
    def test_output_shape(self):
        gen = nets.Generator(k=2, max_b=5, z_dim=7, seed=0)
        z = Tensor(np.random.default_rng(0).standard_normal((4, 7)))
        out = gen(z, [0, 1, 2, 0], train=True)
        assert out.shape == (4, 2, 5)

    def test_deterministic_construction(self):
        a = nets.Generator(k=2, max_b=3, seed=9)
        b = nets.Generator(k=2, max_b=3, seed=9)
        for (_, ta), (_, tb) in zip(a.params(), b.params()):
            assert np.array_equal(ta.data, tb.data)

    def test_label_conditioning_changes_output(self):
        gen = nets.Generator(k=1, max_b=4, z_dim=6, seed=1)
        z = Tensor(np.random.default_rng(1).standard_normal((2, 6)))
        out0 = gen(z, [0, 0], train=False).data
        out1 = gen(z, [1, 1], train=False).data
        assert not np.allclose(out0, out1)

    def test_bad_noise_shape(self):
        gen = nets.Generator(k=1, max_b=2, z_dim=5, seed=0)
        with pytest.raises(ShapeMismatch):
            gen(Tensor(np.zeros((3, 4))), [0, 0, 0], train=False)

    def test_wrapper(self):
        gen = nets.Generator(k=1, max_b=2, z_dim=5, seed=0)
        z = Tensor(np.zeros((2, 5)))
        a = nets.generator_forward(gen, z, [0, 1]).data
        b = gen(z, [0, 1], train=False).data
        assert np.array_equal(a, b)


class TestCritic:
    def test_logit_shape_flat_and_3d_agree(self):
        critic = nets.Critic(t_len=12, use_batchnorm=False, seed=0)
        x = np.random.default_rng(0).standard_normal((3, 2, 12))
        out3 = critic(Tensor(x), [0, 1, 2], train=False)
        out2 = critic(Tensor(x.reshape(3, 24)), [0, 1, 2], train=False)
        assert out3.shape == (3, 1)
        assert np.array_equal(out3.data, out2.data)

    def test_score_in_unit_interval(self):
        critic = nets.Critic(t_len=12, use_batchnorm=False, seed=1)
        x = Tensor(np.random.default_rng(1).standard_normal((5, 2, 12)) * 10)
        s = critic.score(x, [0] * 5).data
        assert np.all((s > 0) & (s < 1))

    def test_label_conditioning_changes_logit(self):
        critic = nets.Critic(t_len=12, use_batchnorm=False, seed=2)
        x = Tensor(np.random.default_rng(2).standard_normal((2, 2, 12)))
        a = critic(x, [0, 0], train=False).data
        b = critic(x, [2, 2], train=False).data
        assert not np.allclose(a, b)

    def test_zeroed_head_collapses_logit(self):
        critic = nets.Critic(t_len=12, use_batchnorm=False, seed=3)
        critic.fc4.w.data[...] = 0.0
        critic.fc4.b.data[...] = 0.75
        x = Tensor(np.random.default_rng(3).standard_normal((4, 2, 12)))
        out = critic(x, [0, 1, 2, 0], train=False).data
        assert np.allclose(out, 0.75)

    def test_bad_input_shape(self):
        critic = nets.Critic(t_len=12, use_batchnorm=False, seed=0)
        with pytest.raises(ShapeMismatch):
            critic(Tensor(np.zeros((2, 25))), [0, 0], train=False)

    def test_batchnorm_variant_has_extra_params(self):
        with_bn = nets.Critic(t_len=12, use_batchnorm=True, seed=0)
        without = nets.Critic(t_len=12, use_batchnorm=False, seed=0)
        names_bn = {n for n, _ in with_bn.params()}
        names_no = {n for n, _ in without.params()}
        assert names_no < names_bn
        assert any(n.startswith("bn") for n in names_bn - names_no)


class TestStateDict:
    def test_round_trip(self):
        a = nets.Critic(t_len=12, use_batchnorm=True, seed=0)
        b = nets.Critic(t_len=12, use_batchnorm=True, seed=5)
        a.bn1.running_mean[...] = 0.3  # exercise buffer transfer
        b.load_state_dict(a.state_dict())
        for (_, ta), (_, tb) in zip(a.params(), b.params()):
            assert np.array_equal(ta.data, tb.data)
        assert np.array_equal(b.bn1.running_mean, a.bn1.running_mean)
        x = Tensor(np.random.default_rng(0).standard_normal((2, 2, 12)))
        assert np.array_equal(
            a(x, [0, 1], train=False).data, b(x, [0, 1], train=False).data
        )

    def test_load_preserves_dtype(self):
        with ad.default_dtype(np.float32):
            gen = nets.Generator(k=1, max_b=2, z_dim=4, seed=0)
        state = gen.state_dict()
        with ad.default_dtype(np.float32):
            other = nets.Generator(k=1, max_b=2, z_dim=4, seed=1)
        other.load_state_dict(state)
        assert all(t.data.dtype == np.float32 for t in other.param_tensors())
