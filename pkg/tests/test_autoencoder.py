import numpy as np
import pytest

from gzslgate.autoencoder import (
    SeenAttributeBank,
    TrainConfig,
    TwoStreamAE,
    combine_losses,
    loss_all,
    loss_cls,
    loss_cross,
    loss_recon,
    train_two_stream,
)
from gzslgate.errors import ConfigError, DataError
from gzslgate.nn import Mlp2, rng_from_seed


def random_ae(dim_v, dim_a, dim_z, hidden, rng, bias_scale=0.1):
    """Random net with random biases: keeps finite-difference checks off
    the exact ReLU/l1 kinks that zero biases can pin."""
    def net(din, dh, dout):
        m = Mlp2.init(din, dh, dout, rng)
        m.b1 = bias_scale * rng.standard_normal(dh)
        m.b2 = bias_scale * rng.standard_normal(dout)
        return m

    return TwoStreamAE(f_v=net(dim_v, hidden, dim_z),
                       g_v=net(dim_z, hidden, dim_v),
                       f_a=net(dim_a, hidden, dim_z),
                       g_a=net(dim_z, hidden, dim_a))


def identity_ae(dim):
    def eye_net():
        return Mlp2(W1=np.eye(dim), b1=np.zeros(dim),
                    W2=np.eye(dim), b2=np.zeros(dim))

    return TwoStreamAE(f_v=eye_net(), g_v=eye_net(),
                       f_a=eye_net(), g_a=eye_net())


def zero_ae(dim_v, dim_a, dim_z, hidden):
    def z(din, dh, dout):
        return Mlp2(W1=np.zeros((din, dh)), b1=np.zeros(dh),
                    W2=np.zeros((dh, dout)), b2=np.zeros(dout))

    return TwoStreamAE(f_v=z(dim_v, hidden, dim_z), g_v=z(dim_z, hidden, dim_v),
                       f_a=z(dim_a, hidden, dim_z), g_a=z(dim_z, hidden, dim_a))


def max_grad_rel_err(ae, fn, h=1e-6):
    _, grads = fn()
    worst = 0.0
    for net_name, net in ae.nets().items():
        for pname, p in net.params().items():
            it = np.nditer(p, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                orig = p[idx]
                p[idx] = orig + h
                vp = fn()[0]
                p[idx] = orig - h
                vm = fn()[0]
                p[idx] = orig
                fd = (vp - vm) / (2 * h)
                g = grads[net_name][pname][idx]
                worst = max(worst, abs(g - fd) / max(abs(g), abs(fd), 1e-2))
    return worst


class TestLossRecon:
    def test_perfect_reconstruction_is_zero(self):
        ae = identity_ae(4)
        rng = rng_from_seed(0)
        X = np.abs(rng.standard_normal((5, 4)))
        A = np.abs(rng.standard_normal((5, 4)))
        val, _ = loss_recon(ae, X, A)
        assert val == 0.0

    def test_zero_net_reconstruction(self):
        # reconstructions are all-zero, so the loss is |x|_1 + |a|_1
        ae = zero_ae(3, 2, 2, 4)
        X = np.array([[3.0, -2.0, 2.0]])   # |x|_1 = 7
        A = np.array([[1.0, -2.0]])        # |a|_1 = 3
        val, _ = loss_recon(ae, X, A)
        assert val == 10.0

    def test_gradient_oracle(self):
        rng = rng_from_seed(1)
        ae = random_ae(6, 4, 3, 5, rng)
        X = rng.standard_normal((4, 6))
        A = rng.standard_normal((4, 4))
        assert max_grad_rel_err(ae, lambda: loss_recon(ae, X, A)) < 1e-5


class TestLossCross:
    def test_aligned_pair_is_zero(self):
        # identity streams with x == a: cross paths reproduce the input
        ae = identity_ae(4)
        X = np.abs(rng_from_seed(2).standard_normal((3, 4)))
        val, _ = loss_cross(ae, X, X.copy())
        assert val == 0.0

    def test_zero_net(self):
        ae = zero_ae(3, 2, 2, 4)
        X = np.array([[3.0, -2.0, 2.0]])
        A = np.array([[1.0, -2.0]])
        val, _ = loss_cross(ae, X, A)
        assert val == 10.0

    def test_gradient_oracle(self):
        rng = rng_from_seed(3)
        ae = random_ae(6, 4, 3, 5, rng)
        X = rng.standard_normal((4, 6))
        A = rng.standard_normal((4, 4))
        assert max_grad_rel_err(ae, lambda: loss_cross(ae, X, A)) < 1e-5


class TestLossCls:
    def test_single_class_is_zero(self):
        rng = rng_from_seed(4)
        ae = random_ae(6, 4, 3, 5, rng)
        X = rng.standard_normal((4, 6))
        bank = SeenAttributeBank(rng.standard_normal((1, 4)))
        val, _ = loss_cls(ae, X, np.zeros(4, dtype=int), bank)
        assert val == pytest.approx(0.0, abs=1e-12)

    def test_equidistant_two_classes_is_ln2(self):
        # symmetric attributes and a symmetric query make both distances equal
        ae = identity_ae(2)
        X = np.array([[0.0, 0.0]])
        bank = SeenAttributeBank(np.array([[1.0, 0.0], [0.0, 1.0]]))
        val, _ = loss_cls(ae, X, np.array([0]), bank)
        assert val == pytest.approx(np.log(2.0), rel=1e-12)

    def test_gradient_flows_through_every_class_term(self):
        rng = rng_from_seed(5)
        ae = random_ae(6, 4, 3, 5, rng)
        X = rng.standard_normal((4, 6))
        bank = SeenAttributeBank(rng.standard_normal((3, 4)))
        y = rng.integers(0, 3, 4)
        assert max_grad_rel_err(ae, lambda: loss_cls(ae, X, y, bank)) < 1e-5

    def test_out_of_range_class(self):
        rng = rng_from_seed(6)
        ae = random_ae(4, 3, 2, 4, rng)
        bank = SeenAttributeBank(rng.standard_normal((2, 3)))
        with pytest.raises(ConfigError):
            loss_cls(ae, rng.standard_normal((1, 4)), np.array([2]), bank)

    def test_class_permutation_equivariance(self):
        rng = rng_from_seed(7)
        ae = random_ae(5, 4, 3, 6, rng)
        X = rng.standard_normal((6, 5))
        bank = SeenAttributeBank(rng.standard_normal((4, 4)))
        y = rng.integers(0, 4, 6)
        v1, _ = loss_cls(ae, X, y, bank)
        perm = rng.permutation(4)
        inv = np.argsort(perm)
        v2, _ = loss_cls(ae, X, inv[y], SeenAttributeBank(bank.A_S[perm]))
        assert v1 == pytest.approx(v2, rel=1e-12)

    def test_logsumexp_matches_naive_formula(self):
        rng = rng_from_seed(8)
        ae = random_ae(5, 4, 3, 6, rng)
        X = 0.3 * rng.standard_normal((6, 5))
        bank = SeenAttributeBank(0.3 * rng.standard_normal((4, 4)))
        y = rng.integers(0, 4, 6)
        val, _ = loss_cls(ae, X, y, bank)
        # literal formula, safe because distances are small here
        Zv = ae.encode_vision(X)
        Zb = ae.encode_attr(bank.A_S)
        naive = 0.0
        for i in range(6):
            d = np.sqrt(((Zv[i] - Zb) ** 2).sum(axis=1))
            naive += -np.log(np.exp(-d[y[i]]) / np.exp(-d).sum())
        assert val == pytest.approx(naive / 6, rel=1e-9)


class TestLossAll:
    def test_combination_arithmetic(self):
        assert combine_losses(2.0, 1.0, 10.0, 0.05) == 3.5
        assert combine_losses(0.0, 0.0, 0.0, 0.3) == 0.0

    def test_gradient_superposition(self):
        rng = rng_from_seed(9)
        ae = random_ae(6, 4, 3, 5, rng)
        X = rng.standard_normal((4, 6))
        bank = SeenAttributeBank(rng.standard_normal((3, 4)))
        y = rng.integers(0, 3, 4)
        A = bank.A_S[y]
        alpha = 0.05
        v_all, g_all = loss_all(ae, X, A, y, bank, alpha)
        v_r, g_r = loss_recon(ae, X, A)
        v_c, g_c = loss_cross(ae, X, A)
        v_k, g_k = loss_cls(ae, X, y, bank)
        assert v_all == pytest.approx(v_r + v_c + alpha * v_k, rel=1e-12)
        for name in ("f_v", "g_v", "f_a", "g_a"):
            for pname in ("W1", "b1", "W2", "b2"):
                expect = (g_r[name][pname] + g_c[name][pname]
                          + alpha * g_k[name][pname])
                assert np.max(np.abs(g_all[name][pname] - expect)) < 1e-12

    def test_nonnegativity(self):
        rng = rng_from_seed(10)
        for _ in range(5):
            ae = random_ae(5, 3, 2, 4, rng)
            X = rng.standard_normal((3, 5))
            bank = SeenAttributeBank(rng.standard_normal((3, 3)))
            y = rng.integers(0, 3, 3)
            assert loss_recon(ae, X, bank.A_S[y])[0] >= 0.0
            assert loss_cross(ae, X, bank.A_S[y])[0] >= 0.0
            assert loss_cls(ae, X, y, bank)[0] >= 0.0

    def test_alpha_must_be_positive(self):
        with pytest.raises(ConfigError):
            combine_losses(1.0, 1.0, 1.0, 0.0)


class TestTraining:
    def _toy_problem(self, seed):
        rng = rng_from_seed(seed)
        centers = np.array([[4.0, 0.0, 0.0, 0.0], [0.0, 4.0, 0.0, 0.0]])
        X = np.concatenate([c + 0.5 * rng.standard_normal((100, 4))
                            for c in centers])
        y = np.repeat([0, 1], 100)
        bank = SeenAttributeBank(np.array([[1.0, 0.0], [0.0, 1.0]]))
        return X, y, bank

    def test_loss_decreases(self):
        for seed in range(5):
            X, y, bank = self._toy_problem(seed)
            cfg = TrainConfig(alpha=0.05, lr=1e-3, epochs=30, batch_size=32,
                              dim_z=4, hidden_v=16, hidden_a=16, seed=seed)
            _, trace = train_two_stream(X, y, bank, cfg)
            assert trace[-1] < 0.5 * trace[0], f"seed {seed}"

    def test_zero_epochs_rejected(self):
        X, y, bank = self._toy_problem(0)
        cfg = TrainConfig(epochs=0)
        with pytest.raises(ConfigError):
            train_two_stream(X, y, bank, cfg)

    def test_empty_training_set(self):
        bank = SeenAttributeBank(np.zeros((2, 2)))
        with pytest.raises(DataError):
            train_two_stream(np.zeros((0, 4)), np.zeros(0, dtype=int),
                             bank, TrainConfig(epochs=1))

    def test_same_seed_bit_identical(self):
        X, y, bank = self._toy_problem(1)
        cfg = TrainConfig(alpha=0.05, lr=1e-3, epochs=5, batch_size=32,
                          dim_z=4, hidden_v=8, hidden_a=8, seed=42)
        ae1, t1 = train_two_stream(X, y, bank, cfg)
        ae2, t2 = train_two_stream(X, y, bank, cfg)
        assert t1 == t2
        for n1, n2 in zip(ae1.nets().values(), ae2.nets().values()):
            for p1, p2 in zip(n1.params().values(), n2.params().values()):
                assert np.array_equal(p1, p2)
