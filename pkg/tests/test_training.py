"""Loss arithmetic, gradient correctness against finite differences, SGD."""

import dataclasses
import math

import numpy as np
import pytest

from nisaclab.channel import ChannelConfig
from nisaclab.dataset import generate_dataset
from nisaclab.modem import BitFrame
from nisaclab.snn import init_model, readout_probabilities
from nisaclab.training import (
    PROB_EPS,
    ParamGradients,
    TrainConfig,
    backward,
    comm_loss,
    isac_loss,
    sense_loss,
    sgd_step,
    surrogate_forward,
    train,
)

LN2 = math.log(2.0)


class TestCommLoss:
    def test_chance_probability_single_slot(self):
        assert comm_loss([0.5], [0]) == pytest.approx(LN2, rel=1e-12)

    def test_additivity_over_slots(self):
        assert comm_loss([0.5, 0.5], [1, 0]) == pytest.approx(2 * LN2, rel=1e-12)

    def test_confident_correct_is_near_zero(self):
        assert comm_loss([1.0 - 1e-9], [1]) == pytest.approx(0.0, abs=1e-8)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            comm_loss([0.5, 0.5], [1])

    def test_ssac_frame_counts_data_slots_only(self):
        frame = BitFrame(bits=np.array([0, 1, 1, 1], dtype=np.uint8), data_slot_count=2)
        p = [0.5, 0.5, 0.9, 0.9]  # sensing-slot values must not contribute
        assert comm_loss(p, frame) == pytest.approx(2 * LN2, rel=1e-12)


class TestSenseLoss:
    def test_chance_over_eighty_slots(self):
        assert sense_loss([0.5] * 80, 0) == pytest.approx(80 * LN2, rel=1e-12)

    def test_hand_value(self):
        assert sense_loss([0.75], 1) == pytest.approx(-math.log(0.75), rel=1e-12)

    def test_confident_correct_is_near_zero(self):
        assert sense_loss([1.0 - 1e-9] * 4, 1) == pytest.approx(0.0, abs=1e-7)

    def test_slot_mask_restricts_sum(self):
        mask = np.array([False, False, True, True])
        assert sense_loss([0.9, 0.9, 0.5, 0.5], 0, slot_mask=mask) == pytest.approx(
            2 * LN2, rel=1e-12
        )


class TestIsacLoss:
    def test_endpoints(self):
        assert isac_loss(2.0, 4.0, 1.0) == 2.0
        assert isac_loss(2.0, 4.0, 0.0) == 4.0

    def test_midpoint(self):
        assert isac_loss(2.0, 4.0, 0.5) == 3.0

    def test_weighted_sum_identity(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            lc, ls, beta = rng.uniform(0, 100), rng.uniform(0, 100), rng.uniform(0, 1)
            assert isac_loss(lc, ls, beta) == beta * lc + (1 - beta) * ls

    def test_beta_range(self):
        with pytest.raises(ValueError):
            isac_loss(1.0, 1.0, 1.5)


class TestProbabilityClamp:
    def test_inert_for_moderate_potentials(self):
        # potentials up to |o|=30 map to probabilities inside the clamp window
        from nisaclab.snn import sigmoid

        for o in (-30.0, -10.0, 0.0, 10.0, 30.0):
            p = sigmoid(np.array([o]))
            assert PROB_EPS < p[0] < 1.0 - PROB_EPS
            clipped = np.clip(p, PROB_EPS, 1.0 - PROB_EPS)
            assert clipped[0] == p[0]

    def test_keeps_extreme_probabilities_finite(self):
        assert math.isfinite(comm_loss([1.0], [0]))
        assert math.isfinite(sense_loss([0.0], 1))


def _smoothed_loss(model, inputs, bits, target, beta, slope) -> float:
    trace = surrogate_forward(model, inputs, slope)
    p_comm, p_sense = readout_probabilities(trace)
    return isac_loss(comm_loss(p_comm, bits), sense_loss(p_sense, target), beta)


def _fd_gradients(model, inputs, bits, target, beta, slope, h=1e-5) -> ParamGradients:
    """Central finite differences of the smoothed loss over every weight."""

    def fd_matrix(attr):
        w = getattr(model, attr)
        grad = np.zeros_like(w)
        for idx in np.ndindex(w.shape):
            for sign in (+1.0, -1.0):
                bumped = w.copy()
                bumped[idx] += sign * h
                m = dataclasses.replace(model, **{attr: bumped})
                grad[idx] += sign * _smoothed_loss(m, inputs, bits, target, beta, slope)
        return grad / (2 * h)

    return ParamGradients(
        input_weights=fd_matrix("input_weights"),
        readout_weights=fd_matrix("readout_weights"),
    )


def _max_rel_error(got: np.ndarray, want: np.ndarray) -> float:
    return float((np.abs(got - want) / np.maximum(np.abs(want), 1e-8)).max())


class TestGradients:
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_backward_matches_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        model = init_model(2, 1, rng, tau_mem=10.0, tau_syn=5.0, tau_ref=5.0)
        inputs = rng.standard_normal((4, 4))
        bits = rng.integers(0, 2, size=4)
        target, beta, slope = 1, 0.5, 1.0
        trace = surrogate_forward(model, inputs, slope)
        got = backward(model, trace, inputs, bits, target, beta, slope)
        want = _fd_gradients(model, inputs, bits, target, beta, slope)
        assert _max_rel_error(got.input_weights, want.input_weights) <= 1e-4
        assert _max_rel_error(got.readout_weights, want.readout_weights) <= 1e-4

    def test_gradient_of_duplicated_example_doubles(self):
        rng = np.random.default_rng(3)
        model = init_model(3, 1, rng)
        inputs = rng.standard_normal((5, 4))
        bits = rng.integers(0, 2, size=5)
        trace = surrogate_forward(model, inputs, 1.0)
        g = backward(model, trace, inputs, bits, 0, 0.5)
        summed_in = g.input_weights + g.input_weights
        doubled = ParamGradients(2.0 * g.input_weights, 2.0 * g.readout_weights)
        assert np.array_equal(summed_in, doubled.input_weights)

    def test_beta_one_ignores_the_sensing_label(self):
        rng = np.random.default_rng(4)
        model = init_model(3, 1, rng)
        inputs = rng.standard_normal((6, 4))
        bits = rng.integers(0, 2, size=6)
        trace = surrogate_forward(model, inputs, 1.0)
        g0 = backward(model, trace, inputs, bits, 0, beta=1.0)
        g1 = backward(model, trace, inputs, bits, 1, beta=1.0)
        assert np.array_equal(g0.input_weights, g1.input_weights)
        assert np.array_equal(g0.readout_weights, g1.readout_weights)

    def test_beta_zero_ignores_the_bits(self):
        rng = np.random.default_rng(5)
        model = init_model(3, 1, rng)
        inputs = rng.standard_normal((6, 4))
        trace = surrogate_forward(model, inputs, 1.0)
        ga = backward(model, trace, inputs, np.zeros(6, dtype=np.uint8), 1, beta=0.0)
        gb = backward(model, trace, inputs, np.ones(6, dtype=np.uint8), 1, beta=0.0)
        assert np.array_equal(ga.input_weights, gb.input_weights)


class TestSurrogateForward:
    def test_zero_weight_model_soft_spikes(self):
        model = init_model(3, 1, np.random.default_rng(0))
        model = dataclasses.replace(
            model,
            input_weights=np.zeros_like(model.input_weights),
            readout_weights=np.zeros_like(model.readout_weights),
        )
        from nisaclab.snn import sigmoid

        slope = 2.0
        trace = surrogate_forward(model, np.ones((4, 4)), slope)
        # step 0 has no refractory history yet
        assert np.allclose(trace.hidden_spikes[0], sigmoid(np.array(-slope * model.hidden_threshold)))
        # the soft spikes feed the refractory state, pushing later potentials down
        per_step = trace.hidden_spikes[:, 0]
        assert (np.diff(per_step) < 0).all()
        # zero potential and zero threshold make the readout refractory inert
        assert np.allclose(trace.readout_spikes, 0.5)

    def test_large_slope_approaches_hard_spikes(self):
        rng = np.random.default_rng(6)
        model = init_model(4, 1, rng)
        inputs = rng.standard_normal((8, 4)) * 3
        from nisaclab.snn import forward

        hard = forward(model, inputs)
        soft = surrogate_forward(model, inputs, 1e6)
        # boundary-free potentials only; smoothing perturbs later steps slightly
        assert np.allclose(soft.hidden_spikes[0], hard.hidden_spikes[0], atol=1e-6)


class TestSgdStep:
    def test_zero_gradient_is_identity(self):
        m = init_model(2, 1, np.random.default_rng(7))
        g = ParamGradients(np.zeros_like(m.input_weights), np.zeros_like(m.readout_weights))
        m2 = sgd_step(m, g, 0.1)
        assert np.array_equal(m2.input_weights, m.input_weights)
        assert np.array_equal(m2.readout_weights, m.readout_weights)

    def test_unit_rate_subtracts_gradient(self):
        m = init_model(2, 1, np.random.default_rng(8))
        g = ParamGradients(
            np.random.default_rng(9).standard_normal(m.input_weights.shape),
            np.random.default_rng(10).standard_normal(m.readout_weights.shape),
        )
        m2 = sgd_step(m, g, 1.0)
        assert np.array_equal(m2.input_weights, m.input_weights - g.input_weights)
        assert np.array_equal(m2.readout_weights, m.readout_weights - g.readout_weights)

    def test_original_model_is_untouched(self):
        m = init_model(2, 1, np.random.default_rng(11))
        before = m.input_weights.copy()
        g = ParamGradients(np.ones_like(m.input_weights), np.ones_like(m.readout_weights))
        sgd_step(m, g, 0.5)
        assert np.array_equal(m.input_weights, before)


class TestTrainConfig:
    def test_rejects_beta_out_of_range(self):
        with pytest.raises(ValueError):
            TrainConfig(beta=1.2)

    def test_rejects_nonpositive_values(self):
        with pytest.raises(ValueError):
            TrainConfig(beta=0.5, learning_rate=0.0)
        with pytest.raises(ValueError):
            TrainConfig(beta=0.5, epochs=0)


@pytest.fixture(scope="module")
def tiny_dataset():
    cfg = ChannelConfig(snr_db=10.0)
    return generate_dataset(cfg, L=8, L_b=1, n=48, mode="isac", master_seed=0)


class TestTrain:
    def test_deterministic_given_seed(self, tiny_dataset):
        def run():
            model = init_model(4, 1, np.random.default_rng(0))
            return train(model, tiny_dataset, TrainConfig(beta=0.5, epochs=3, seed=5))

        (m1, h1), (m2, h2) = run(), run()
        assert np.array_equal(m1.input_weights, m2.input_weights)
        assert np.array_equal(m1.readout_weights, m2.readout_weights)
        assert [e.losses.total for e in h1] == [e.losses.total for e in h2]

    def test_history_shape_and_loss_identity(self, tiny_dataset):
        model = init_model(4, 1, np.random.default_rng(1))
        beta = 0.3
        _, history = train(model, tiny_dataset, TrainConfig(beta=beta, epochs=4, seed=0))
        assert [e.epoch for e in history] == [1, 2, 3, 4]
        for e in history:
            assert e.losses.total == beta * e.losses.comm_loss + (1 - beta) * e.losses.sense_loss
            assert 0.0 <= e.throughput <= 1.0
            assert 0.0 <= e.detection_error <= 1.0

    def test_input_model_not_mutated(self, tiny_dataset):
        model = init_model(4, 1, np.random.default_rng(2))
        before = model.input_weights.copy()
        train(model, tiny_dataset, TrainConfig(beta=0.5, epochs=1, seed=0))
        assert np.array_equal(model.input_weights, before)

    def test_slot_masks_route_the_losses(self, tiny_dataset):
        model = init_model(4, 1, np.random.default_rng(3))
        # decode loss restricted to 4 data slots; detection loss to the rest
        _, hist_c = train(
            model, tiny_dataset,
            TrainConfig(beta=1.0, epochs=1, seed=0), data_slot_count=4,
        )
        _, hist_full = train(model, tiny_dataset, TrainConfig(beta=1.0, epochs=1, seed=0))
        assert hist_c[0].losses.comm_loss < hist_full[0].losses.comm_loss

    def test_nan_loss_aborts_with_diagnostic(self, tiny_dataset, monkeypatch):
        import nisaclab.training as training_module

        def poisoned(model, inputs, slope=None):
            oh, bh, orr, br = original(model, inputs, slope)
            return oh, bh, np.full_like(orr, np.nan), br

        original = training_module.forward_batch
        monkeypatch.setattr(training_module, "forward_batch", poisoned)
        model = init_model(4, 1, np.random.default_rng(4))
        with pytest.raises(FloatingPointError, match="epoch 1"):
            train(model, tiny_dataset, TrainConfig(beta=0.5, epochs=1, seed=0))

    def test_empty_dataset_rejected(self, tiny_dataset):
        model = init_model(4, 1, np.random.default_rng(5))
        empty = dataclasses.replace(tiny_dataset)
        empty.inputs = tiny_dataset.inputs[:0]
        empty.bits = tiny_dataset.bits[:0]
        empty.targets = tiny_dataset.targets[:0]
        with pytest.raises(ValueError):
            train(model, empty, TrainConfig(beta=0.5, epochs=1, seed=0))


class TestLossDecreases:
    def test_twenty_epochs_on_512_examples(self):
        cfg = ChannelConfig(snr_db=10.0)
        data = generate_dataset(cfg, L=80, L_b=1, n=512, mode="isac", master_seed=0)
        model = init_model(10, 1, np.random.default_rng(0))
        _, history = train(model, data, TrainConfig(beta=0.5, epochs=20, seed=0))
        assert history[-1].losses.total < history[0].losses.total
