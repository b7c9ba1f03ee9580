import numpy as np
import pytest

from autofocus import tensor as T
from autofocus.attention import ConfigError
from autofocus.model import (AFTModel, BlindQA, FusionHead, ModelConfig, build_model, constrained_classes,
                             fuse_and_classify, load_checkpoint, predict, project_frames, question_kind,
                             random_baseline, semantic_aware_random)
from autofocus.text import pad_batch


def tiny(kind="aft", **kw):
    base = dict(kind=kind, d=8, heads=2, layers=1, d_ff=8, focal=(1, 3, 80), max_frames=10,
                d_appearance=3, d_motion=2, rnn_hidden=3, vocab_size=7, n_classes=4, blind_hidden=6)
    base.update(kw)
    return ModelConfig(**base)


@pytest.fixture
def batch(rng):
    ids, mask = pad_batch([[2, 3, 4], [5, 6]], 0)
    return rng.normal(size=(2, 10, 3)), rng.normal(size=(2, 10, 2)), ids, mask


class TestConfig:
    @pytest.mark.parametrize("kw", [dict(kind="cnn"), dict(d=10, heads=4), dict(layers=0),
                                    dict(n_classes=1), dict(focal=(3, 1))])
    def test_rejects(self, kw):
        with pytest.raises(ConfigError):
            tiny(**kw)

    def test_digest_tracks_content(self):
        assert tiny().digest() == tiny().digest()
        assert tiny().digest() != tiny(d_ff=16).digest()


class TestForward:
    @pytest.mark.parametrize("kind", ["aft", "transformer", "blind"])
    def test_logit_shapes(self, kind, batch):
        logits, alpha = build_model(tiny(kind)).forward(*batch)
        assert logits.shape == (2, 4)
        assert (alpha is not None) == (kind == "aft")

    def test_initial_focus_is_uniform(self, batch):
        _, alpha = AFTModel(tiny()).forward(*batch)
        np.testing.assert_allclose(alpha.data, np.full((2, 3), 1 / 3))

    def test_transformer_equals_aft_with_full_focus(self, batch):
        aft, dense = AFTModel(tiny("aft")), AFTModel(tiny("transformer"))
        state = dense.state_dict()
        aft.load_state_dict(state, strict=False)
        full = np.tile([0.0, 0.0, 1.0], (2, 1))
        a, _ = aft.forward(*batch, alpha_override=full)
        b, _ = dense.forward(*batch)
        np.testing.assert_allclose(a.data, b.data, atol=1e-12)

    def test_blind_ignores_video(self, batch, rng):
        model = BlindQA(tiny("blind"))
        a, _ = model.forward(*batch)
        b, _ = model.forward(rng.normal(size=(2, 10, 3)), rng.normal(size=(2, 10, 2)), *batch[2:])
        np.testing.assert_array_equal(a.data, b.data)

    def test_too_many_frames(self, rng, batch):
        with pytest.raises(T.ShapeError):
            AFTModel(tiny()).forward(rng.normal(size=(2, 11, 3)), rng.normal(size=(2, 11, 2)), *batch[2:])

    def test_projection_shape_checks(self, rng):
        with pytest.raises(T.ShapeError):
            project_frames(np.zeros((4, 3)), np.zeros((5, 2)), np.zeros((5, 8)))
        with pytest.raises(T.ShapeError):
            project_frames(np.zeros((4, 3)), np.zeros((4, 2)), np.zeros((6, 8)))

    def test_fusion_gradients(self, rng):
        head = FusionHead.init(4, 3, rng)
        M, w = T.parameter(rng.normal(size=(2, 5, 4))), T.parameter(rng.normal(size=(2, 4)))
        f = lambda: T.cross_entropy(fuse_and_classify(M, w, head), np.array([0, 2]))
        assert T.grad_check(f, {"M": M, "w": w, **head.named()}).passed(1e-6)

    def test_end_to_end_gradients(self, batch):
        model = AFTModel(tiny(d=4, heads=1, d_ff=4, rnn_hidden=2))
        params = model.parameters()
        subset = {k: params[k] for k in ("focus.gate", "frame_proj", "enc0.attn.wq", "text.fwd.w_rec", "head.out")}
        f = lambda: T.cross_entropy(model.forward(*batch)[0], np.array([1, 3]))
        # the zero-initialised gate gives no signal unless perturbed
        params["focus.gate"].data = np.random.default_rng(5).normal(size=params["focus.gate"].shape)
        assert T.grad_check(f, subset).passed(1e-4)


class TestCheckpoint:
    def test_round_trip(self, tmp_path, batch):
        model = AFTModel(tiny(init_seed=3))
        model.save(tmp_path / "m.npz", extra={"best_epoch": 2})
        again, extra = load_checkpoint(tmp_path / "m.npz")
        assert extra == {"best_epoch": 2}
        np.testing.assert_array_equal(model.forward(*batch)[0].data, again.forward(*batch)[0].data)

    def test_wrong_expected_config(self, tmp_path):
        AFTModel(tiny()).save(tmp_path / "m.npz")
        with pytest.raises(ValueError):
            load_checkpoint(tmp_path / "m.npz", expect=tiny(d_ff=16))

    def test_state_mismatch(self):
        model = AFTModel(tiny())
        state = model.state_dict()
        state["frame_proj"] = np.zeros((1, 1))
        with pytest.raises(T.ShapeError):
            model.load_state_dict(state)
        del state["frame_proj"]
        with pytest.raises(ValueError):
            model.load_state_dict(state)


class TestBaselines:
    def test_predict_ties_go_low(self):
        np.testing.assert_array_equal(predict(np.array([[1.0, 3.0, 3.0], [0.0, 0.0, 0.0]])), [1, 0])

    def test_random_baseline_range(self, rng):
        draws = random_baseline(5, rng, size=1000)
        assert draws.min() >= 0 and draws.max() <= 4
        with pytest.raises(ValueError):
            random_baseline(0, rng)

    @pytest.mark.parametrize("q,kind", [("Does the left team perform spike?", "binary"),
                                        ("Would the right team succeed in doing the first shot?", "binary"),
                                        ("How many times does the player perform jump?", "numeric"),
                                        ("What is the video about?", "open")])
    def test_question_kind(self, q, kind):
        assert question_kind(q) == kind

    def test_semantic_aware_draws(self, rng):
        labels = ["spike", "yes", "2", "no", "block", "10"]
        assert constrained_classes("Does the player perform jump?", labels) == [1, 3]
        assert constrained_classes("How many actions does the player perform?", labels) == [2, 5]
        draws = {semantic_aware_random("Is it?", labels, rng) for _ in range(200)}
        assert draws == {1, 3}

    def test_semantic_aware_falls_back(self, rng):
        assert semantic_aware_random("Does it?", ["a", "b"], rng) in (0, 1)
