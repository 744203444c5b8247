"""Separator tests: conditioning algebra, mask/noise heads, gating,
compositional equality, parameter counting."""

import numpy as np
import pytest

from spkfilter.attention import EnrollmentSet
from spkfilter.errors import ConfigError
from spkfilter.nn_core import Fc, Lstm, Tensor
from spkfilter.separator import (
    GatePolicy,
    ModelConfig,
    SeparatorModel,
    condition_frame,
    enhance,
    film_apply,
    full_forward,
    mask_forward,
    noise_forward,
    param_count,
)


def tiny_config(**overrides):
    base = dict(num_slots=2, feat_dim=6, embed_dim=8, prenet_dims=(5, 4),
                scorer_dims=(3, 3), mask_dims=(5, 5), noise_dims=(4,),
                noise_fc_dim=3, film_hidden=4)
    base.update(overrides)
    return ModelConfig(**base)


def unit(v):
    v = np.asarray(v, dtype=np.float64)
    return v / np.linalg.norm(v)


def tiny_enrollment(rng, config, target=0):
    slots = [unit(rng.normal(size=config.embed_dim))
             for _ in range(config.num_slots)]
    return EnrollmentSet.from_embeddings(slots, target)


class TestConditioning:
    def test_film_identity_with_injected_coefficients(self):
        rng = np.random.default_rng(0)
        frame = rng.normal(size=6)
        out = film_apply(Tensor(np.ones(6)), Tensor(np.zeros(6)), frame)
        assert np.max(np.abs(out.data - frame)) == 0.0

    def test_film_zero_coefficients_zero_output(self):
        rng = np.random.default_rng(1)
        model = SeparatorModel(tiny_config(conditioning="film"), seed=0)
        # forcing the final FiLM layers to zero makes tanh(0) = 0 exactly
        for net in (model.film_scale, model.film_shift):
            net.fc1.weight.data[:] = 0
            net.fc1.bias.data[:] = 0
        out = condition_frame(model, rng.normal(size=6),
                              Tensor(rng.normal(size=8)))
        np.testing.assert_array_equal(out.data, np.zeros(6))

    def test_concat_layout(self):
        model = SeparatorModel(tiny_config(feat_dim=3, conditioning="concat"),
                               seed=0)
        cond = np.full(8, 9.0)
        out = condition_frame(model, np.array([1.0, 2.0, 3.0]), Tensor(cond))
        np.testing.assert_array_equal(out.data[:4], [1.0, 2.0, 3.0, 9.0])
        assert out.data.shape == (11,)

    def test_mask_input_dims(self):
        assert tiny_config(conditioning="concat").mask_input_dim == 14
        assert tiny_config(conditioning="film").mask_input_dim == 6

    def test_batched_matches_per_frame(self):
        rng = np.random.default_rng(2)
        for conditioning in ("film", "concat"):
            model = SeparatorModel(tiny_config(conditioning=conditioning), seed=1)
            frames = rng.normal(size=(3, 6))
            conds = rng.normal(size=(3, 8))
            batched = model.condition_frame(frames, Tensor(conds))
            for t in range(3):
                single = model.condition_frame(frames[t], Tensor(conds[t]))
                np.testing.assert_allclose(batched.data[t], single.data,
                                           rtol=0, atol=1e-12)


class TestMaskAndNoise:
    def test_zero_parameters_give_half_masks(self):
        model = SeparatorModel(tiny_config(), seed=0)
        for layer in model.mask_net.layers:
            layer.w_x.data[:] = 0
            layer.w_h.data[:] = 0
            layer.bias.data[:] = 0
        model.mask_head.weight.data[:] = 0
        model.mask_head.bias.data[:] = 0
        mask, _ = mask_forward(model, Tensor(np.ones(6)),
                               model.initial_mask_states())
        np.testing.assert_array_equal(mask.data, np.full(6, 0.5))

    def test_zero_parameters_give_half_overlap(self):
        model = SeparatorModel(tiny_config(), seed=0)
        for layer in model.noise_net.layers:
            layer.w_x.data[:] = 0
            layer.w_h.data[:] = 0
            layer.bias.data[:] = 0
        for fc in (model.noise_fc, model.noise_head):
            fc.weight.data[:] = 0
            fc.bias.data[:] = 0
        prob, _ = noise_forward(model, Tensor(np.ones(6)),
                                model.initial_noise_states())
        np.testing.assert_array_equal(prob.data, [0.5])

    def test_identical_utterances_bit_identical_masks(self):
        rng = np.random.default_rng(3)
        model = SeparatorModel(tiny_config(), seed=2)
        enr = tiny_enrollment(rng, model.config)
        frames = rng.normal(size=(5, 6))
        a = full_forward(model, enr, frames)
        b = full_forward(model, enr, frames)
        assert a.masks.tobytes() == b.masks.tobytes()

    def test_masks_strictly_inside_unit_interval(self):
        rng = np.random.default_rng(4)
        model = SeparatorModel(tiny_config(), seed=3)
        enr = tiny_enrollment(rng, model.config)
        out = full_forward(model, enr, rng.normal(size=(20, 6)) * 5)
        assert np.all(out.masks > 0.0)
        assert np.all(out.masks < 1.0)


class TestEnhance:
    def test_closed_gate_bit_exact(self):
        rng = np.random.default_rng(5)
        policy = GatePolicy(threshold=0.5, mode="hard_gate")
        frame = rng.normal(size=6)
        mask = rng.uniform(size=6)
        out = enhance(policy, frame, mask, overlap_prob=0.0)
        assert out.tobytes() == frame.tobytes()

    def test_all_ones_mask_identity(self):
        rng = np.random.default_rng(6)
        frame = rng.normal(size=6)
        out = enhance(GatePolicy(), frame, np.ones(6), overlap_prob=1.0)
        assert out.tobytes() == frame.tobytes()

    def test_half_mask_scales(self):
        frame = np.array([2.0, -4.0])
        out = enhance(GatePolicy(), frame, np.full(2, 0.5), overlap_prob=1.0)
        np.testing.assert_array_equal(out, [1.0, -2.0])

    def test_always_on_ignores_gate(self):
        frame = np.array([2.0, -4.0])
        out = enhance(GatePolicy(mode="always_on"), frame, np.full(2, 0.5),
                      overlap_prob=0.0)
        np.testing.assert_array_equal(out, [1.0, -2.0])

    def test_bad_threshold_rejected(self):
        with pytest.raises(ConfigError):
            GatePolicy(threshold=0.0)


class TestFullForward:
    def test_empty_utterance(self):
        rng = np.random.default_rng(7)
        model = SeparatorModel(tiny_config(), seed=4)
        enr = tiny_enrollment(rng, model.config)
        out = full_forward(model, enr, np.zeros((0, 6)))
        assert out.enhanced.shape == (0, 6)
        assert out.alphas.shape == (0, 2)
        assert out.overlap_probs.shape == (0,)

    @pytest.mark.parametrize("conditioning", ["film", "concat"])
    def test_matches_manual_composition(self, conditioning):
        rng = np.random.default_rng(8)
        model = SeparatorModel(tiny_config(conditioning=conditioning), seed=5)
        enr = tiny_enrollment(rng, model.config, target=1)
        frames = rng.normal(size=(4, 6))
        policy = GatePolicy(mode="always_on")
        out = full_forward(model, enr, frames, policy)

        from spkfilter.attention import attention_forward
        att_states = model.attention.initial_states()
        mask_states = model.initial_mask_states()
        noise_states = model.initial_noise_states()
        for t in range(4):
            cond, weights, att_states = attention_forward(
                model.attention, model.strategy, Tensor(frames[t]), enr,
                att_states)
            conditioned = condition_frame(model, frames[t], cond)
            mask, mask_states = mask_forward(model, conditioned, mask_states)
            prob, noise_states = noise_forward(model, Tensor(frames[t]),
                                               noise_states)
            enhanced = enhance(policy, frames[t], mask.data,
                               float(prob.data[0]))
            np.testing.assert_allclose(out.alphas[t], weights.data, atol=1e-12)
            np.testing.assert_allclose(out.masks[t], mask.data, atol=1e-12)
            np.testing.assert_allclose(out.overlap_probs[t], prob.data[0],
                                       atol=1e-12)
            np.testing.assert_allclose(out.enhanced[t], enhanced, atol=1e-12)

    def test_causality(self):
        rng = np.random.default_rng(9)
        model = SeparatorModel(tiny_config(), seed=6)
        enr = tiny_enrollment(rng, model.config)
        frames = rng.normal(size=(6, 6))
        edited = frames.copy()
        edited[4:] += 1.0
        out_a = full_forward(model, enr, frames)
        out_b = full_forward(model, enr, edited)
        assert out_a.enhanced[:4].tobytes() == out_b.enhanced[:4].tobytes()

    def test_frame_dim_checked(self):
        rng = np.random.default_rng(10)
        model = SeparatorModel(tiny_config(), seed=7)
        enr = tiny_enrollment(rng, model.config)
        with pytest.raises(ConfigError):
            full_forward(model, enr, np.zeros((3, 7)))


class TestParamCount:
    def test_fc_count(self):
        fc = Fc(2, 3)
        assert sum(p.data.size for _, p in fc.params()) == 9

    def test_lstm_gate_algebra(self):
        lstm = Lstm(4, 3)
        assert sum(p.data.size for _, p in lstm.params()) == 96
        assert 96 == 4 * (3 * 4 + 3 * 3 + 3)

    def test_film_smaller_than_concat_at_paper_scale(self):
        film = ModelConfig.paper_scale(conditioning="film")
        concat = ModelConfig.paper_scale(conditioning="concat")
        assert param_count(film) < param_count(concat)

    def test_desk_scale_counts_positive(self):
        for conditioning in ("film", "concat"):
            cfg = ModelConfig.desk_scale(conditioning=conditioning)
            assert param_count(cfg) > 0

    def test_stable_across_builds(self):
        cfg = ModelConfig.desk_scale()
        assert param_count(cfg) == param_count(cfg)


class TestParamGroups:
    def test_groups_partition_all_parameters(self):
        model = SeparatorModel(tiny_config(), seed=8)
        att, vf = model.param_groups(1e-6, 1e-5)
        att_names = set(att.names())
        vf_names = set(vf.names())
        assert not att_names & vf_names
        assert att_names | vf_names == {n for n, _ in model.named_params()}

    def test_projection_joins_attention_group(self):
        model = SeparatorModel(
            tiny_config(strategy="concat_top_k", top_k=1), seed=9)
        att, _ = model.param_groups(1e-6, 1e-5)
        assert any("projection" in n for n in att.names())

    def test_averaging_model_has_empty_attention_group(self):
        model = SeparatorModel(tiny_config(strategy="averaging"), seed=10)
        att, vf = model.param_groups(1e-6, 1e-5)
        assert att.names() == []
        assert len(vf.names()) > 0
