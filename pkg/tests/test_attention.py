import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from autofocus import attention as A
from autofocus import tensor as T
from oracles import afa_loops


def qkv(rng, n, dh, dv=None, lead=()):
    return (rng.normal(size=lead + (n, dh)), rng.normal(size=lead + (n, dh)),
            rng.normal(size=lead + (n, dv or dh)))


class TestBands:
    @pytest.mark.parametrize("j,f,n,lo,hi", [(0, 3, 10, 0, 3), (5, 3, 10, 2, 8), (9, 3, 10, 6, 9),
                                             (4, 80, 10, 0, 9), (0, 1, 1, 0, 0)])
    def test_clipped_range(self, j, f, n, lo, hi):
        band = A.band_index_set(j, f, n)
        assert (band.lo, band.hi) == (lo, hi)
        assert band.size == hi - lo + 1

    def test_bad_position_and_focus(self):
        with pytest.raises(IndexError):
            A.band_index_set(10, 3, 10)
        with pytest.raises(ValueError):
            A.band_index_set(0, 0, 10)

    def test_mask_matches_index_sets(self):
        n, f = 12, 4
        mask = A.band_mask(n, f)
        for j in range(n):
            band = A.band_index_set(j, f, n)
            assert np.flatnonzero(mask[j]).tolist() == list(range(band.lo, band.hi + 1))

    @pytest.mark.parametrize("focal", [(), (0, 3), (9, 3), (3, 3)])
    def test_invalid_focal_sets(self, focal):
        with pytest.raises(A.ConfigError):
            A.FocalSet(focal)


class TestFocusWeights:
    def test_zero_gate_gives_uniform(self, rng):
        alpha = A.focus_weights(rng.normal(size=(5, 8)), np.zeros((3, 8)), np.zeros(3)).data
        np.testing.assert_allclose(alpha, np.full((5, 3), 1 / 3))

    def test_bias_only_gate(self):
        alpha = A.focus_weights(np.ones(4), np.zeros((2, 4)), np.array([0.0, np.log(3.0)])).data
        np.testing.assert_allclose(alpha, [0.25, 0.75])

    def test_shape_checks(self):
        with pytest.raises(T.ShapeError):
            A.focus_weights(np.ones(4), np.zeros((3, 5)), np.zeros(3))

    @pytest.mark.parametrize("alpha", [[0.5, 0.6], [1.2, -0.2], [np.nan, 1.0], [0.5, 0.5, 0.0]])
    def test_check_simplex_rejects(self, alpha):
        with pytest.raises(ValueError):
            A.check_simplex(np.array(alpha), 2)


class TestAFAForward:
    @pytest.mark.parametrize("n,focal", [(7, (1,)), (9, (1, 3)), (12, (2, 5, 20)), (5, (3, 9, 80))])
    def test_matches_loop_oracle(self, rng, n, focal):
        q, k, v = qkv(rng, n, 4, 3)
        alpha = rng.dirichlet(np.ones(len(focal)))
        got = A.afa(q, k, v, alpha, focal).data
        np.testing.assert_allclose(got, afa_loops(q, k, v, alpha, focal), atol=1e-12)

    def test_full_focus_is_dense_attention(self, rng):
        q, k, v = qkv(rng, 10, 4)
        got = A.afa(q, k, v, [1.0], (80,)).data
        np.testing.assert_allclose(got, A.dense_attention_oracle(q, k, v), atol=1e-12)
        dense = A.dense_attention(T.Tensor(q), T.Tensor(k), T.Tensor(v)).data
        np.testing.assert_allclose(got, dense, atol=1e-12)

    def test_one_hot_alpha_selects_band(self, rng):
        q, k, v = qkv(rng, 9, 4)
        got = A.afa(q, k, v, [0.0, 1.0, 0.0], (1, 2, 4)).data
        np.testing.assert_allclose(got, A.band_probabilities(q, k, 2) @ v, atol=1e-12)

    def test_batched_alpha_matches_per_slice(self, rng):
        q, k, v = qkv(rng, 7, 4, lead=(2, 3))
        alpha = rng.dirichlet(np.ones(3), size=(2, 1))
        got = A.afa(q, k, v, alpha, (1, 2, 6)).data
        for b in range(2):
            for h in range(3):
                ref = A.afa(q[b, h], k[b, h], v[b, h], alpha[b, 0], (1, 2, 6)).data
                np.testing.assert_allclose(got[b, h], ref, atol=1e-13)

    def test_extreme_scores_use_stable_path(self, rng):
        # a huge score gap underflows the shared exponent on some narrow bands
        q, k, v = qkv(rng, 8, 2)
        q[0] = [400.0, 0.0]
        k[7] = [400.0, 0.0]
        alpha = np.array([0.3, 0.7])
        got = A.afa(q, k, v, alpha, (1, 10)).data
        ref = alpha[0] * A.band_probabilities(q, k, 1) @ v + alpha[1] * A.band_probabilities(q, k, 10) @ v
        assert np.isfinite(got).all()
        np.testing.assert_allclose(got, ref, atol=1e-12)

    def test_shape_and_simplex_errors(self, rng):
        q, k, v = qkv(rng, 5, 4)
        with pytest.raises(T.ShapeError):
            A.afa(q, k[:4], v, [1.0], (3,))
        with pytest.raises(ValueError):
            A.afa(q, k, v, [0.5, 0.6], (1, 3))


class TestAFAGradients:
    def test_wrt_qkv_and_alpha(self, rng):
        q, k, v = (T.parameter(x) for x in qkv(rng, 6, 3))
        logits = T.parameter(rng.normal(size=3))
        g = rng.normal(size=(6, 3))
        f = lambda: (A.afa(q, k, v, T.softmax(logits), (1, 2, 80)) * T.Tensor(g)).sum()
        rep = T.grad_check(f, {"q": q, "k": k, "v": v, "logits": logits})
        assert rep.passed(1e-7), rep.per_parameter_errors

    def test_batched_alpha_gradients(self, rng):
        q, k, v = (T.parameter(x) for x in qkv(rng, 5, 2, lead=(2, 2)))
        logits = T.parameter(rng.normal(size=(2, 1, 2)))
        g = rng.normal(size=(2, 2, 5, 2))
        f = lambda: (A.afa(q, k, v, T.softmax(logits), (1, 3)) * T.Tensor(g)).sum()
        assert T.grad_check(f, {"q": q, "k": k, "logits": logits}).passed(1e-7)

    def test_stable_path_gradients(self, rng):
        q, k, v = qkv(rng, 6, 2)
        q[0], k[5] = [300.0, 0.0], [300.0, 0.0]
        q, k, v = T.parameter(q), T.parameter(k), T.parameter(v)
        logits = T.parameter(np.zeros(2))
        f = lambda: T.pow_(A.afa(q, k, v, T.softmax(logits), (1, 10)), 2.0).sum()
        rep = T.grad_check(f, {"v": v, "logits": logits})
        assert rep.passed(1e-6)


class TestMultiHead:
    def test_width_must_divide(self, rng):
        with pytest.raises(A.ConfigError):
            A.AttentionParams.init(10, 4, rng)

    def test_single_and_batched_agree(self, rng):
        params = A.AttentionParams.init(8, 2, rng)
        x = rng.normal(size=(2, 6, 8))
        alpha = rng.dirichlet(np.ones(2), size=2)
        batched = A.multi_head_afa(x, params, alpha, (1, 3)).data
        for b in range(2):
            single = A.multi_head_afa(x[b], params, alpha[b], (1, 3)).data
            np.testing.assert_allclose(batched[b], single, atol=1e-13)

    def test_full_focus_equals_dense_layer(self, rng):
        params = A.AttentionParams.init(8, 2, rng)
        x = rng.normal(size=(6, 8))
        afa_out = A.multi_head_afa(x, params, np.array([0.0, 1.0]), (2, 80)).data
        dense_out = A.multi_head_afa(x, params, None, None).data
        np.testing.assert_allclose(afa_out, dense_out, atol=1e-12)

    def test_encoder_keeps_shape_and_gradients(self, rng):
        layers = [A.EncoderLayer.init(4, 2, 6, rng, prefix=f"l{i}.") for i in range(2)]
        gate, bias = T.parameter(rng.normal(size=(2, 4))), T.parameter(np.zeros(2))
        r = T.parameter(rng.normal(size=(5, 4)))
        w = rng.normal(size=4)
        out = A.aft_encoder_forward(r, w, layers, gate, bias, (1, 80))
        assert out.M.shape == (5, 4)
        np.testing.assert_allclose(out.alpha.data.sum(), 1.0)
        g = rng.normal(size=(5, 4))
        f = lambda: (A.aft_encoder_forward(r, w, layers, gate, bias, (1, 80)).M * T.Tensor(g)).sum()
        params = {"r": r, "gate": gate, **layers[0].named("l0.")}
        assert T.grad_check(f, params).passed(1e-5)

    def test_empty_stack(self, rng):
        with pytest.raises(A.ConfigError):
            A.aft_encoder_forward(np.zeros((3, 4)), np.zeros(4), [], None, None, (1,))


focal_sets = st.lists(st.integers(1, 12), min_size=1, max_size=4, unique=True).map(sorted)


class TestInvariants:
    @settings(max_examples=60, deadline=None)
    @given(n=st.integers(1, 14), focal=focal_sets, seed=st.integers(0, 2**31))
    def test_output_in_convex_hull_of_values(self, n, focal, seed):
        rng = np.random.default_rng(seed)
        q, k, v = qkv(rng, n, 3)
        alpha = rng.dirichlet(np.ones(len(focal)))
        out = A.afa(q, k, v, alpha, focal).data
        assert np.all(out <= v.max(axis=0) + 1e-9) and np.all(out >= v.min(axis=0) - 1e-9)

    @settings(max_examples=60, deadline=None)
    @given(n=st.integers(1, 14), focal=focal_sets, seed=st.integers(0, 2**31))
    def test_band_rows_are_distributions_supported_on_band(self, n, focal, seed):
        rng = np.random.default_rng(seed)
        q, k, _ = qkv(rng, n, 3)
        for f in focal:
            p = A.band_probabilities(q, k, f)
            np.testing.assert_allclose(p.sum(axis=-1), 1.0, atol=1e-12)
            assert np.all(p[~A.band_mask(n, f)] == 0.0)

    @settings(max_examples=60, deadline=None)
    @given(d=st.integers(1, 6), n_f=st.integers(1, 5), seed=st.integers(0, 2**31))
    def test_focus_weights_on_simplex(self, d, n_f, seed):
        rng = np.random.default_rng(seed)
        alpha = A.focus_weights(rng.normal(size=(4, d)) * 10, rng.normal(size=(n_f, d)) * 10,
                                rng.normal(size=n_f)).data
        A.check_simplex(alpha, n_f)
