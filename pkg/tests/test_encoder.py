import numpy as np
import pytest

from layoutcap import autodiff as ad
from layoutcap.autodiff import finite_difference_check
from layoutcap.data import BoundingBox, ObjectLayout
from layoutcap.encoder import (AblationFlags, dedup_layout, embed_step,
                               encode_batch, encode_layout, fuse_auxiliary,
                               init_encoder)
from layoutcap.errors import DimensionError, EmptyLayoutError
from layoutcap.lstm import lstm_step, zero_state
from layoutcap.rng import Rng


def box(x=0.1, y=0.1, w=0.2, h=0.2):
    return BoundingBox(x, y, w, h)


@pytest.fixture
def params():
    return init_encoder(k=6, num_categories=5, rng=Rng(10), aux_dim=3)


class TestEmbedStep:
    def test_zero_location_params_give_pure_embedding(self, params):
        params.w_loc.value[...] = 0.0
        params.b_loc.value[...] = 0.0
        out = embed_step(params, 2, box())
        np.testing.assert_array_equal(out.value[0], params.w_cat.value[:, 2])

    def test_no_locations_ignores_box(self, params):
        flags = AblationFlags(no_locations=True)
        a = embed_step(params, 1, box(0.0, 0.0, 0.1, 0.1), flags)
        b = embed_step(params, 1, box(0.7, 0.7, 0.3, 0.3), flags)
        np.testing.assert_array_equal(a.value, b.value)

    def test_hand_arithmetic(self):
        p = init_encoder(k=2, num_categories=3, rng=Rng(0))
        p.w_cat.value[:, 1] = [1.0, 0.0]
        p.w_loc.value[...] = [[1, 0, 0, 0], [0, 1, 0, 0]]
        p.b_loc.value[...] = 0.0
        out = embed_step(p, 1, box(0.5, 0.25, 0.1, 0.1))
        np.testing.assert_allclose(out.value, [[1.5, 0.25]])

    def test_category_out_of_range(self, params):
        with pytest.raises(IndexError):
            embed_step(params, 5, box())


class TestEncodeLayout:
    def test_single_object_equals_manual_unroll(self, params):
        layout = ObjectLayout(((3, box()),))
        manual = lstm_step(params.lstm, embed_step(params, 3, box()), zero_state(6))
        out = encode_layout(params, layout)
        np.testing.assert_array_equal(out.value, manual.h.value)

    def test_length_t_takes_exactly_t_steps(self, params):
        layout = ObjectLayout(((0, box()), (1, box(0.4)), (2, box(0.7))))
        state = zero_state(6)
        for cid, b in layout.entries:
            state = lstm_step(params.lstm, embed_step(params, cid, b), state)
        np.testing.assert_array_equal(encode_layout(params, layout).value, state.h.value)

    def test_no_counts_dedups_keeping_first(self, params):
        flags = AblationFlags(no_locations=True, no_counts=True)
        dup = ObjectLayout(((0, box()), (0, box(0.5)), (2, box(0.7))))
        dedup = ObjectLayout(((0, box()), (2, box(0.7))))
        np.testing.assert_array_equal(
            encode_layout(params, dup, flags).value,
            encode_layout(params, dedup, flags).value)

    def test_permutation_changes_encoding(self, params):
        a = ObjectLayout(((0, box()), (1, box(0.5))))
        b = ObjectLayout(((1, box(0.5)), (0, box())))
        diff = np.abs(encode_layout(params, a).value - encode_layout(params, b).value)
        assert diff.max() > 1e-6

    def test_no_locations_invariant_to_box_changes(self, params):
        flags = AblationFlags(no_locations=True)
        a = ObjectLayout(((0, box()), (1, box(0.5))))
        b = ObjectLayout(((0, box(0.3, 0.6, 0.1, 0.3)), (1, box(0.05, 0.05, 0.5, 0.5))))
        np.testing.assert_array_equal(encode_layout(params, a, flags).value,
                                      encode_layout(params, b, flags).value)

    def test_both_flags_duplicate_invariance(self, params):
        flags = AblationFlags(no_locations=True, no_counts=True)
        base = ObjectLayout(((0, box()), (2, box(0.5))))
        dup = ObjectLayout(((0, box()), (0, box(0.2, 0.7, 0.1, 0.1)),
                            (2, box(0.5)), (2, box(0.6))))
        np.testing.assert_array_equal(encode_layout(params, base, flags).value,
                                      encode_layout(params, dup, flags).value)

    def test_location_sensitivity_with_flags_off(self, params):
        a = ObjectLayout(((0, box(0.1)), (1, box(0.5))))
        b = ObjectLayout(((0, box(0.6)), (1, box(0.5))))
        diff = np.abs(encode_layout(params, a).value - encode_layout(params, b).value)
        assert diff.max() > 1e-6

    def test_empty_after_dedup_impossible_but_empty_layout_rejected(self, params):
        with pytest.raises(Exception):
            ObjectLayout(())

    def test_lstm_gradients_through_encoder(self, params):
        layout = ObjectLayout(((0, box()), (2, box(0.4)), (2, box(0.6))))

        def f():
            h = encode_layout(params, layout)
            return ad.sum_all(ad.mul(h, h))

        for p in (params.w_cat, params.w_loc, params.b_loc, params.lstm.w, params.lstm.b):
            assert finite_difference_check(f, p, eps=1e-5) < 1e-4


class TestEncodeBatch:
    def test_matches_single_example_path(self, params):
        layouts = [
            ObjectLayout(((0, box()),)),
            ObjectLayout(((1, box(0.3)), (2, box(0.5)), (3, box(0.7)))),
            ObjectLayout(((4, box(0.2)), (4, box(0.6)))),
        ]
        batched = encode_batch(params, layouts).value
        for i, layout in enumerate(layouts):
            single = encode_layout(params, layout).value
            np.testing.assert_allclose(batched[i:i + 1], single, atol=1e-15, rtol=0)

    def test_empty_layout_rejected(self, params):
        with pytest.raises(EmptyLayoutError):
            encode_batch(params, [])


class TestDedup:
    def test_keeps_first_occurrence_order(self):
        layout = ObjectLayout(((2, box()), (0, box(0.4)), (2, box(0.6)), (1, box(0.8, 0.1))))
        assert [cid for cid, _ in dedup_layout(layout).entries] == [2, 0, 1]


class TestFuseAuxiliary:
    def test_zero_projection_is_identity(self, params):
        params.w_aux.value[...] = 0.0
        params.b_aux.value[...] = 0.0
        h = encode_layout(params, ObjectLayout(((0, box()),)))
        fused = fuse_auxiliary(params, h, np.array([1.0, 2.0, 3.0]))
        np.testing.assert_array_equal(fused.value, h.value)

    def test_zero_aux_vector_is_identity(self, params):
        params.b_aux.value[...] = 0.0
        h = encode_layout(params, ObjectLayout(((0, box()),)))
        fused = fuse_auxiliary(params, h, np.zeros(3))
        np.testing.assert_array_equal(fused.value, h.value)

    def test_addition_shape(self):
        p = init_encoder(k=2, num_categories=2, rng=Rng(1), aux_dim=2)
        h = ad.Tensor(np.array([[1.0, 1.0]]))
        p.w_aux.value[...] = [[0.5, 0.0], [0.0, -1.0]]
        p.b_aux.value[...] = 0.0
        fused = fuse_auxiliary(p, h, np.array([1.0, 1.0]))
        np.testing.assert_allclose(fused.value, [[1.5, 0.0]])

    def test_without_aux_configured_identity(self):
        p = init_encoder(k=4, num_categories=2, rng=Rng(2), aux_dim=0)
        h = ad.Tensor(np.ones((1, 4)))
        assert fuse_auxiliary(p, h, None) is h

    def test_dimension_mismatch(self, params):
        h = ad.Tensor(np.ones((1, 6)))
        with pytest.raises(DimensionError):
            fuse_auxiliary(params, h, np.ones(5))
