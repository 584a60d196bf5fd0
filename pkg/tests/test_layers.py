import numpy as np
import pytest

from blendkit.layers import (
    ConvFilterBank,
    EmbeddingTable,
    Linear,
    LstmParams,
    LstmState,
    bilstm_encode,
    conv_text,
    dropout,
    linear,
    lstm_cell,
    lstm_encode,
)
from blendkit.tensor import Tensor, add, bias_add, matmul, total, transpose
from blendkit.util.errors import ConfigError, DimensionError, InputError


def sig(x):
    return 1.0 / (1.0 + np.exp(-x))


def reference_cell(p: LstmParams, x: np.ndarray, h: np.ndarray, c: np.ndarray):
    """Straight-line transcription of the LSTM gate equations."""
    f = sig(x @ p.W_f.data.T + h @ p.U_f.data.T + p.b_f.data)
    i = sig(x @ p.W_i.data.T + h @ p.U_i.data.T + p.b_i.data)
    o = sig(x @ p.W_o.data.T + h @ p.U_o.data.T + p.b_o.data)
    c_hat = np.tanh(x @ p.W_c.data.T + h @ p.U_c.data.T + p.b_c.data)
    c_new = f * c + i * c_hat
    return o * np.tanh(c_new), c_new


def reference_direction(p: LstmParams, tokens: np.ndarray) -> np.ndarray:
    h = np.zeros((1, p.hidden_size))
    c = np.zeros((1, p.hidden_size))
    for x in tokens:
        h, c = reference_cell(p, x[None, :], h, c)
    return h[0]


def zero_params(input_size: int, hidden: int) -> LstmParams:
    fields = {}
    for gate in "fioc":
        fields[f"W_{gate}"] = Tensor(np.zeros((hidden, input_size)))
        fields[f"U_{gate}"] = Tensor(np.zeros((hidden, hidden)))
        fields[f"b_{gate}"] = Tensor(np.zeros(hidden))
    return LstmParams(**fields)


class TestLstmCell:

    def test_zero_parameters_give_zero_state(self, rng):
        out = lstm_cell(zero_params(3, 4), Tensor(rng.normal(size=(2, 3))), LstmState.zeros(2, 4))
        np.testing.assert_array_equal(out.c.data, np.zeros((2, 4)))
        np.testing.assert_array_equal(out.h.data, np.zeros((2, 4)))

    def test_saturated_forget_gate_keeps_cell(self, rng):
        params = zero_params(3, 2)
        params.b_f.data[:] = 20.0
        v = np.array([[0.7, -1.3]])
        out = lstm_cell(params, Tensor(rng.normal(size=(1, 3))), LstmState(Tensor(np.zeros((1, 2))), Tensor(v)))
        np.testing.assert_allclose(out.c.data, v, atol=1e-8)

    def test_matches_straight_line_transcription(self, rng):
        params = LstmParams.init(3, 2, rng)
        x, h, c = rng.normal(size=(2, 3)), rng.normal(size=(2, 2)), rng.normal(size=(2, 2))
        out = lstm_cell(params, Tensor(x), LstmState(Tensor(h), Tensor(c)))
        h_ref, c_ref = reference_cell(params, x, h, c)
        np.testing.assert_allclose(out.h.data, h_ref, rtol=0, atol=1e-12)
        np.testing.assert_allclose(out.c.data, c_ref, rtol=0, atol=1e-12)

    @pytest.mark.parametrize("seed", range(20))
    def test_state_stays_bounded(self, seed):
        rng = np.random.default_rng(seed)
        params = LstmParams.init(3, 4, rng)
        scale = rng.uniform(0.5, 5.0)
        for p in params.named_parameters("cell").values():
            p.data *= scale
        c_prev = rng.normal(scale=3.0, size=(5, 4))
        x, h_prev = rng.normal(scale=3.0, size=(5, 3)), rng.uniform(-1, 1, size=(5, 4))
        out = lstm_cell(params, Tensor(x), LstmState(Tensor(h_prev), Tensor(c_prev)))
        # sigmoid gates in (0, 1) and a tanh candidate in (-1, 1) bound both outputs
        assert (np.abs(out.c.data) <= np.abs(c_prev) + 1.0).all()
        assert (np.abs(out.h.data) <= np.abs(np.tanh(out.c.data))).all()
        assert (np.abs(out.h.data) < 1.0).all()

    def test_shape_mismatch(self, rng):
        params = LstmParams.init(3, 2, rng)
        with pytest.raises(DimensionError):
            lstm_cell(params, Tensor(np.ones((2, 4))), LstmState.zeros(2, 2))

    def test_forget_bias_initialised_to_one(self, rng):
        params = LstmParams.init(3, 4, rng)
        np.testing.assert_array_equal(params.b_f.data, np.ones(4))
        np.testing.assert_array_equal(params.b_i.data, np.zeros(4))


class TestBilstmEncode:

    def test_single_token_halves_agree(self, rng):
        params = LstmParams.init(3, 4, rng)
        out = bilstm_encode(params, params, Tensor(rng.normal(size=(1, 1, 3))), [1])
        np.testing.assert_array_equal(out.data[0, :4], out.data[0, 4:])

    def test_padding_does_not_change_output(self, rng):
        fwd, bwd = LstmParams.init(3, 4, rng), LstmParams.init(3, 4, rng)
        tokens = rng.normal(size=(1, 3, 3))
        padded = np.concatenate([tokens, rng.normal(size=(1, 7, 3))], axis=1)
        plain = bilstm_encode(fwd, bwd, Tensor(tokens), [3])
        longer = bilstm_encode(fwd, bwd, Tensor(padded), [3])
        np.testing.assert_array_equal(plain.data, longer.data)

    def test_batch_neighbours_do_not_leak(self, rng):
        fwd, bwd = LstmParams.init(3, 4, rng), LstmParams.init(3, 4, rng)
        short = rng.normal(size=(2, 3))
        batch = np.zeros((2, 6, 3))
        batch[0, :2] = short
        batch[1] = rng.normal(size=(6, 3))
        alone = bilstm_encode(fwd, bwd, Tensor(short[None]), [2])
        together = bilstm_encode(fwd, bwd, Tensor(batch), [2, 6])
        np.testing.assert_allclose(together.data[0], alone.data[0], rtol=0, atol=1e-12)

    def test_matches_hand_rolled_loops(self, rng):
        fwd, bwd = LstmParams.init(3, 4, rng), LstmParams.init(3, 4, rng)
        tokens = rng.normal(size=(5, 3))
        out = bilstm_encode(fwd, bwd, Tensor(tokens[None]), [5]).data[0]
        np.testing.assert_allclose(out[:4], reference_direction(fwd, tokens), rtol=0, atol=1e-12)
        np.testing.assert_allclose(out[4:], reference_direction(bwd, tokens[::-1]), rtol=0, atol=1e-12)

    def test_unidirectional_encoder(self, rng):
        params = LstmParams.init(3, 4, rng)
        tokens = rng.normal(size=(4, 3))
        out = lstm_encode(params, Tensor(tokens[None]), [4]).data[0]
        np.testing.assert_allclose(out, reference_direction(params, tokens), rtol=0, atol=1e-12)

    def test_zero_length_example(self, rng):
        params = LstmParams.init(3, 4, rng)
        with pytest.raises(InputError):
            bilstm_encode(params, params, Tensor(np.ones((2, 3, 3))), [3, 0])


def reference_conv(kernels, bias, embedded, lengths):
    """Nested-loop valid correlation, ReLU and max over the positions inside each true length."""
    count, width, dim = kernels.shape
    out = np.zeros((embedded.shape[0], count))
    for b in range(embedded.shape[0]):
        for f in range(count):
            best = -np.inf
            for p in range(lengths[b] - width + 1):
                s = bias[f]
                for o in range(width):
                    for d in range(dim):
                        s += kernels[f, o, d] * embedded[b, p + o, d]
                best = max(best, max(s, 0.0))
            out[b, f] = best
    return out


class TestConvText:

    def test_width_one_ones_kernel_is_max_row_sum(self):
        embedded = np.array([[[1.0, 2.0], [3.0, 4.0], [0.5, 0.5]]])
        bank = ConvFilterBank(Tensor(np.ones((1, 1, 2))), Tensor(np.zeros(1)))
        out = conv_text(bank, Tensor(embedded), [3])
        assert out.data[0, 0] == 7.0

    @pytest.mark.parametrize("b", [2.5, -1.0])
    def test_zero_kernels_give_relu_of_bias(self, rng, b):
        bank = ConvFilterBank(Tensor(np.zeros((2, 3, 4))), Tensor(np.full(2, b)))
        out = conv_text(bank, Tensor(rng.normal(size=(3, 5, 4))), [5, 4, 3])
        np.testing.assert_array_equal(out.data, np.full((3, 2), max(b, 0.0)))

    @pytest.mark.parametrize("width", [3, 4, 5])
    def test_matches_nested_loop_oracle(self, rng, width):
        bank = ConvFilterBank.init(width, 6, 4, rng)
        bank.bias.data[:] = rng.normal(scale=0.1, size=6)
        embedded = rng.normal(size=(3, 9, 4))
        lengths = np.array([9, 5, 7])
        out = conv_text(bank, Tensor(embedded), lengths)
        expected = reference_conv(bank.kernels.data, bank.bias.data, embedded, lengths)
        np.testing.assert_allclose(out.data, expected, rtol=0, atol=1e-12)

    def test_padding_does_not_change_output(self, rng):
        bank = ConvFilterBank.init(3, 4, 2, rng)
        embedded = rng.normal(size=(1, 5, 2))
        padded = np.concatenate([embedded, rng.normal(size=(1, 6, 2))], axis=1)
        np.testing.assert_array_equal(conv_text(bank, Tensor(embedded), [5]).data,
                                      conv_text(bank, Tensor(padded), [5]).data)

    def test_length_below_width_is_contract_breach(self, rng):
        bank = ConvFilterBank.init(5, 2, 3, rng)
        with pytest.raises(DimensionError):
            conv_text(bank, Tensor(rng.normal(size=(1, 5, 3))), [4])


class TestLinear:

    def test_identity_weight(self, rng):
        x = rng.normal(size=(4, 3))
        np.testing.assert_array_equal(linear(Tensor(np.eye(3)), Tensor(np.zeros(3)), Tensor(x)).data, x)

    def test_zero_weight_returns_bias(self, rng):
        v = np.array([1.0, -2.0])
        out = linear(Tensor(np.zeros((2, 3))), Tensor(v), Tensor(rng.normal(size=(4, 3))))
        np.testing.assert_array_equal(out.data, np.tile(v, (4, 1)))

    def test_matches_matmul_plus_bias(self, rng):
        layer = Linear.init(5, 3, rng)
        x = Tensor(rng.normal(size=(4, 5)))
        composed = bias_add(matmul(x, transpose(layer.weight)), layer.bias)
        np.testing.assert_array_equal(layer(x).data, composed.data)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            linear(Tensor(np.ones((2, 3))), Tensor(np.ones(2)), Tensor(np.ones((4, 2))))


class TestDropout:

    def test_rate_zero_is_identity(self, rng):
        x = Tensor(rng.normal(size=(3, 3)))
        assert dropout(x, 0.0, True, rng) is x
        assert dropout(x, 0.0, False, rng) is x

    def test_eval_mode_is_identity(self, rng):
        x = Tensor(rng.normal(size=(3, 3)))
        assert dropout(x, 0.5, False, rng) is x

    def test_survivor_scaling_preserves_mean(self, rng):
        out = dropout(Tensor(np.ones(100_000)), 0.5, True, rng)
        assert abs(out.data.mean() - 1.0) < 0.02
        assert set(np.unique(out.data)) <= {0.0, 2.0}

    @pytest.mark.parametrize("rate", [1.0, 1.5, -0.1])
    def test_invalid_rate(self, rng, rate):
        with pytest.raises(ConfigError):
            dropout(Tensor(np.ones(3)), rate, True, rng)


class TestEmbeddingTable:

    def test_init_range_and_zero_pad(self, rng):
        table = EmbeddingTable.init(10, 4, rng)
        np.testing.assert_array_equal(table.weights.data[0], np.zeros(4))
        assert np.abs(table.weights.data).max() <= 0.1

    def test_pad_row_never_receives_gradient(self, rng):
        table = EmbeddingTable.init(5, 2, rng)
        total(add(table.lookup(np.array([[0, 3, 0]])), 1.0)).backward()
        np.testing.assert_array_equal(table.weights.grad[0], np.zeros(2))
        np.testing.assert_array_equal(table.weights.grad[3], np.ones(2))

    def test_out_of_range_id(self, rng):
        with pytest.raises(InputError):
            EmbeddingTable.init(5, 2, rng).lookup(np.array([[5]]))
