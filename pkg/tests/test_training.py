import math

import numpy as np
import pytest

from layoutcap.autodiff import Parameter, backward
from layoutcap.data import BoundingBox, ObjectLayout, encode_dataset, split
from layoutcap.data import category_vocabulary
from layoutcap.encoder import AblationFlags
from layoutcap.errors import ConfigError, NumericError
from layoutcap.model import init_model
from layoutcap.rng import Rng
from layoutcap.synthetic import generate_synthetic
from layoutcap.text import BOS_ID, EOS_ID, build_vocabulary
from layoutcap.training import (Checkpoint, TrainConfig, TrainingPair,
                                adam_step, batch_loss, flatten_pairs,
                                gradient_check_suite, nn_baseline,
                                nn_baseline_caption, train)


def box(x=0.1, y=0.1, w=0.2, h=0.2):
    return BoundingBox(x, y, w, h)


def tiny_pairs(vocab_size):
    layout_a = ObjectLayout(((0, box()), (1, box(0.5))))
    layout_b = ObjectLayout(((1, box(0.3)),))
    return [
        TrainingPair(0, layout_a, [BOS_ID, 4, 5, EOS_ID]),
        TrainingPair(1, layout_b, [BOS_ID, 5, 4, 5, EOS_ID]),
    ]


def zeroed_model(k=4, v=3, kw=8):
    params = init_model(k, v, kw, Rng(0))
    for p in params.parameters():
        p.value[...] = 0.0
    return params


class TestBatchLoss:
    def test_uniform_model_closed_form(self):
        kw = 8
        params = zeroed_model(kw=kw)
        pairs = tiny_pairs(kw)
        loss, stats = batch_loss(params, pairs)
        lengths = [len(p.caption) - 1 for p in pairs]
        expected = np.mean(lengths) * math.log(kw)
        assert abs(loss.item() - expected) < 1e-9

    def test_duplicated_example_keeps_mean(self):
        params = init_model(4, 3, 8, Rng(5), init_scale=0.3)
        pairs = tiny_pairs(8)
        single, _ = batch_loss(params, [pairs[0]])
        doubled, _ = batch_loss(params, [pairs[0], pairs[0]])
        assert abs(single.item() - doubled.item()) < 1e-12

    def test_empty_batch_rejected(self):
        with pytest.raises(ConfigError):
            batch_loss(zeroed_model(), [])

    def test_example_id_attached_to_errors(self):
        params = init_model(4, 3, 8, Rng(1))
        bad = [TrainingPair("bad-id", ObjectLayout(((2, box()),)), [BOS_ID, 99, EOS_ID])]
        with pytest.raises(IndexError, match="bad-id"):
            batch_loss(params, bad)

    def test_loss_decreases_during_training(self):
        raw = generate_synthetic(3, 16)
        wv = build_vocabulary((c for e in raw for c in e.captions), min_count=1)
        cv = category_vocabulary(raw)
        ds = encode_dataset(raw, wv, cv)
        config = TrainConfig(seed=0, k=24, max_iterations=500, batch_size=8,
                             learning_rate=2e-3, eval_every=10 ** 9)
        result = train(ds, config, wv, cv)
        params, _ = result.final.build()
        start_params = init_model(config.k, cv.size, wv.size, Rng(config.seed),
                                  init_scale=config.init_scale)
        pairs = flatten_pairs(ds)
        first, _ = batch_loss(start_params, pairs)
        last, _ = batch_loss(params, pairs)
        assert last.item() < first.item()


class TestAdamStep:
    def _param(self, value=1.0):
        return Parameter(np.full((1, 1), value), "p")

    def test_zero_gradient_no_update(self):
        p = self._param(2.0)
        config = TrainConfig()
        adam_step([p], config, t=1)
        assert p.value[0, 0] == 2.0

    def test_unit_gradient_first_step_magnitude(self):
        p = self._param(0.0)
        p.grad[...] = 1.0
        config = TrainConfig(learning_rate=0.01)
        adam_step([p], config, t=1)
        expected = -0.01 * 1.0 / (1.0 + config.epsilon)
        assert abs(p.value[0, 0] - expected) < 1e-15

    def test_grads_zeroed_after_step(self):
        p = self._param()
        p.grad[...] = 3.0
        adam_step([p], TrainConfig(), t=1)
        assert (p.grad == 0).all()

    def test_global_norm_clipping(self):
        p = self._param(0.0)
        p.grad[...] = 100.0
        config = TrainConfig(learning_rate=1.0, grad_clip=5.0)
        adam_step([p], config, t=1)
        # clipped g = 5; first-step update = lr * 5/5... bias correction makes
        # update lr * g_hat/(sqrt(v_hat)+eps) = lr regardless of g scale, so
        # check the moment buffer saw the clipped gradient instead
        assert abs(p.adam_m[0, 0] - (1 - config.beta1) * 5.0) < 1e-12

    def test_nonfinite_gradient_aborts_with_diagnostics(self):
        p = Parameter(np.ones((1, 1)), "w_bad")
        p.grad[...] = np.nan
        with pytest.raises(NumericError, match="w_bad"):
            adam_step([p], TrainConfig(), t=3)

    def test_rejects_bad_t(self):
        with pytest.raises(ConfigError):
            adam_step([self._param()], TrainConfig(), t=0)


class TestDeterminism:
    def _train_once(self, iters=60):
        raw = generate_synthetic(4, 30)
        wv = build_vocabulary((c for e in raw for c in e.captions), min_count=1)
        cv = category_vocabulary(raw)
        ds = encode_dataset(raw, wv, cv)
        config = TrainConfig(seed=9, k=12, max_iterations=iters, batch_size=4,
                             eval_every=10 ** 9)
        result = train(ds, config, wv, cv)
        return result, ds, wv, cv, config

    def test_same_seed_bitwise_identical(self):
        a, *_ = self._train_once()
        b, *_ = self._train_once()
        for name in a.final.values:
            assert a.final.values[name].tobytes() == b.final.values[name].tobytes()

    def test_interrupt_resume_matches_straight_run(self):
        straight, ds, wv, cv, config = self._train_once(iters=60)
        half_config = TrainConfig(**{**config.to_json(), "max_iterations": 30,
                                     "ablation": config.ablation})
        half = train(ds, half_config, wv, cv)
        resumed = train(ds, config, wv, cv, resume_from=half.final)
        for name in straight.final.values:
            assert straight.final.values[name].tobytes() == resumed.final.values[name].tobytes()
        assert straight.final.rng_state == resumed.final.rng_state
        assert straight.final.cursor == resumed.final.cursor


class TestNnBaseline:
    def _dataset(self):
        raw = generate_synthetic(8, 40)
        wv = build_vocabulary((c for e in raw for c in e.captions), min_count=1)
        cv = category_vocabulary(raw)
        return encode_dataset(raw, wv, cv), cv

    def test_identical_query_returns_own_caption(self):
        ds, cv = self._dataset()
        for ex in ds[:5]:
            assert nn_baseline_caption(ds, ex.layout, cv.size) == ex.raw_captions[0]

    def test_total_function_on_disjoint_query(self):
        ds, cv = self._dataset()
        query = ObjectLayout(((cv.size - 1, box()),) * 4)
        assert isinstance(nn_baseline_caption(ds, query, cv.size), str)

    def test_tie_breaks_to_lowest_id(self):
        ds, cv = self._dataset()
        a = ds[0]
        # craft two equidistant training examples with distinct ids
        twin_layout = a.layout
        from copy import deepcopy
        b = deepcopy(a)
        b.id = a.id + 1000
        b.raw_captions = ["something else entirely"]
        chosen = nn_baseline(ds + [b], twin_layout, cv.size)
        assert chosen.id == a.id


class TestGradientSuite:
    def test_all_tensors_below_tolerance(self):
        errors = gradient_check_suite(0)
        expected = {"encoder.w_cat", "encoder.w_loc", "encoder.b_loc",
                    "encoder.lstm.w", "encoder.lstm.b", "encoder.w_aux",
                    "encoder.b_aux", "decoder.w_embed", "decoder.lstm.w",
                    "decoder.lstm.b", "decoder.w_out", "decoder.b_out"}
        assert set(errors) == expected
        assert max(errors.values()) < 1e-4


class TestAblationConfig:
    def test_flags_thread_through_training(self):
        raw = generate_synthetic(5, 12)
        wv = build_vocabulary((c for e in raw for c in e.captions), min_count=1)
        cv = category_vocabulary(raw)
        ds = encode_dataset(raw, wv, cv)
        config = TrainConfig(seed=1, k=8, max_iterations=5, batch_size=4,
                             eval_every=10 ** 9,
                             ablation=AblationFlags(no_locations=True))
        result = train(ds, config, wv, cv)
        assert result.final.config.ablation.no_locations
