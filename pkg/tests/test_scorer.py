"""Scoring heads: encoders, forward passes, training, gradients, registry."""

import numpy as np
import pytest

from vocalkit.audio import AudioClip
from vocalkit.features import mel_features, window_features
from vocalkit.scorer.encoder import (
    EmbeddingSequence,
    EncoderError,
    MelProjParams,
    encode_windows,
    make_encoder_params,
)
from vocalkit.scorer.heads import (
    HeadConfig,
    HeadError,
    TrainedHead,
    head_forward,
    init_params,
    predict_score,
)
from vocalkit.scorer.modelio import load_registry, save_registry
from vocalkit.scorer.registry import (
    DIMENSIONS,
    DimensionModel,
    DimensionRegistry,
    build_registry,
    infer_song,
)
from vocalkit.scorer.train import OptimizerConfig, TrainError, grad_check, train_head

import synthutil


def seq_of(arr, clip_id="x"):
    arr = np.asarray(arr, dtype=np.float64)
    return EmbeddingSequence(embeddings=arr, dim=arr.shape[1], clip_id=clip_id)


def random_head(kind, input_dim=8, hidden_dim=16, layers=1, seed=0, positional=True):
    cfg = HeadConfig(kind=kind, input_dim=input_dim, hidden_dim=hidden_dim,
                     layers=layers, positional=positional)
    return TrainedHead(config=cfg, parameters=init_params(cfg, seed))


class TestEncoder:
    def _windows(self, dur_s=10.0):
        clip = synthutil.render_take([60, 62, 64, 65, 67, 69], clip_id="w", seed=0)
        return window_features(mel_features(clip, 40))

    def test_shapes(self):
        windows = self._windows()
        params = make_encoder_params("mel-proj", 40, 64, seed=0)
        seq = encode_windows(windows, "mel-proj", params, clip_id="w")
        assert seq.embeddings.shape == (len(windows.windows), 64)
        assert seq.dim == 64

    def test_deterministic(self):
        windows = self._windows()
        params = make_encoder_params("mel-proj", 40, 32, seed=1)
        a = encode_windows(windows, "mel-proj", params, clip_id="w")
        b = encode_windows(windows, "mel-proj", params, clip_id="w")
        assert np.array_equal(a.embeddings, b.embeddings)

    def test_zero_params_zero_embeddings(self):
        windows = self._windows()
        params = MelProjParams(weight=np.zeros((16, 120)), bias=np.zeros(16))
        seq = encode_windows(windows, "mel-proj", params, clip_id="w")
        assert np.all(seq.embeddings == 0.0)

    def test_unknown_encoder_raises(self):
        with pytest.raises(EncoderError):
            encode_windows(self._windows(), "whisper-xxl", None, clip_id="w")


class TestHeadForward:
    @pytest.mark.parametrize("kind", ["mlp", "rnn", "transformer"])
    def test_valid_distribution(self, kind):
        head = random_head(kind)
        rng = np.random.default_rng(3)
        probs = head_forward(seq_of(rng.standard_normal((7, 8))), head)
        assert probs.shape == (5,)
        assert abs(probs.sum() - 1.0) <= 1e-6
        assert np.all((probs > 0) & (probs < 1))

    def test_mlp_permutation_invariant(self):
        head = random_head("mlp")
        rng = np.random.default_rng(4)
        E = rng.standard_normal((9, 8))
        perm = rng.permutation(9)
        assert np.allclose(head_forward(seq_of(E), head), head_forward(seq_of(E[perm]), head))

    def test_rnn_order_sensitive(self):
        head = random_head("rnn", seed=2)
        rng = np.random.default_rng(5)
        E = rng.standard_normal((2, 8)) * 2.0
        out_fwd = head_forward(seq_of(E), head)
        out_rev = head_forward(seq_of(E[::-1].copy()), head)
        assert not np.allclose(out_fwd, out_rev)

    def test_transformer_positional_toggle(self):
        rng = np.random.default_rng(6)
        E = rng.standard_normal((6, 8))
        perm = rng.permutation(6)
        with_pos = random_head("transformer", seed=1, positional=True)
        out_a = head_forward(seq_of(E), with_pos)
        out_b = head_forward(seq_of(E[perm]), with_pos)
        assert not np.allclose(out_a, out_b)
        no_pos = random_head("transformer", seed=1, positional=False)
        assert np.allclose(
            head_forward(seq_of(E), no_pos), head_forward(seq_of(E[perm]), no_pos)
        )

    def test_dimension_mismatch_raises(self):
        head = random_head("mlp", input_dim=8)
        with pytest.raises(HeadError):
            head_forward(seq_of(np.zeros((3, 9))), head)

    def test_odd_hidden_dim_rejected_for_transformer(self):
        with pytest.raises(HeadError):
            HeadConfig(kind="transformer", input_dim=8, hidden_dim=9)


class TestPredictScore:
    def test_one_hot(self):
        expected, argmax = predict_score(np.array([0, 0, 0, 1.0, 0]))
        assert expected == 4.0 and argmax == 4

    def test_uniform_tie_break(self):
        expected, argmax = predict_score(np.full(5, 0.2))
        assert expected == pytest.approx(3.0) and argmax == 1

    def test_hand_dot_product(self):
        expected, argmax = predict_score(np.array([0.0, 0.1, 0.2, 0.3, 0.4]))
        assert expected == pytest.approx(4.0) and argmax == 5

    def test_mass_shift_monotone(self):
        p = np.array([0.3, 0.2, 0.2, 0.2, 0.1])
        base, _ = predict_score(p)
        q = p.copy()
        q[0] -= 0.1
        q[4] += 0.1
        shifted, _ = predict_score(q)
        assert shifted > base

    def test_invalid_rejected(self):
        with pytest.raises(HeadError):
            predict_score(np.array([0.5, 0.5, 0.5, 0.0, 0.0]))


def separable_dataset(n_per_class=12, dim=8, windows=4, seed=0, scale=0.05):
    rng = np.random.default_rng(seed)
    means = rng.standard_normal((5, dim)) * 2.0
    data = []
    for label in range(1, 6):
        for i in range(n_per_class):
            E = means[label - 1] + scale * rng.standard_normal((windows, dim))
            data.append((seq_of(E, clip_id=f"{label}-{i}"), label))
    return data


class TestTraining:
    def test_separable_set_converges(self):
        data = separable_dataset()
        cfg = HeadConfig(kind="mlp", input_dim=8, hidden_dim=16, layers=1)
        opt = OptimizerConfig(learning_rate=1e-2, max_epochs=200, val_fraction=0.0,
                              batch_size=None, patience=200, seed=0)
        head = train_head(data, cfg, opt)
        correct = sum(
            int(np.argmax(head_forward(seq, head)) + 1 == label) for seq, label in data
        )
        assert correct / len(data) >= 0.95
        assert head.train_meta["epochs"] <= 200

    def test_zero_learning_rate_is_noop(self):
        data = separable_dataset(n_per_class=3)
        cfg = HeadConfig(kind="mlp", input_dim=8, hidden_dim=16, layers=1)
        opt = OptimizerConfig(learning_rate=0.0, weight_decay=0.0, max_epochs=15,
                              val_fraction=0.0, seed=7)
        head = train_head(data, cfg, opt)
        assert np.array_equal(head.parameters, init_params(cfg, 7))

    def test_duplication_invariance(self):
        data = separable_dataset(n_per_class=4)
        cfg = HeadConfig(kind="mlp", input_dim=8, hidden_dim=16, layers=1)
        opt = OptimizerConfig(learning_rate=1e-3, max_epochs=30, val_fraction=0.0,
                              batch_size=None, patience=30, seed=0)
        single = train_head(data, cfg, opt)
        doubled = train_head(data + data, cfg, opt)
        assert np.allclose(single.parameters, doubled.parameters, rtol=1e-9, atol=1e-10)

    def test_deterministic_per_seed(self):
        data = separable_dataset(n_per_class=3)
        cfg = HeadConfig(kind="rnn", input_dim=8, hidden_dim=16, layers=1)
        opt = OptimizerConfig(max_epochs=5, seed=11)
        a = train_head(data, cfg, opt)
        b = train_head(data, cfg, opt)
        assert np.array_equal(a.parameters, b.parameters)
        assert a.train_meta["loss_history"] == b.train_meta["loss_history"]

    def test_bad_label_raises(self):
        data = [(seq_of(np.zeros((2, 8))), 6)]
        cfg = HeadConfig(kind="mlp", input_dim=8, hidden_dim=16, layers=1)
        with pytest.raises(TrainError):
            train_head(data, cfg, OptimizerConfig(max_epochs=1))


class TestGradCheck:
    def _sample(self, dim=8, windows=5, seed=0):
        rng = np.random.default_rng(seed)
        return seq_of(rng.standard_normal((windows, dim))), 3

    def test_mlp(self):
        head = random_head("mlp", layers=2, seed=1)
        assert grad_check(head, self._sample(), eps=1e-4) < 1e-4

    def test_rnn(self):
        head = random_head("rnn", layers=2, seed=2)
        assert grad_check(head, self._sample(seed=2), eps=1e-4) < 1e-3

    def test_transformer(self):
        head = random_head("transformer", layers=2, seed=3)
        assert grad_check(head, self._sample(seed=3), eps=1e-4) < 1e-3

    def test_eps_bounds(self):
        head = random_head("mlp")
        with pytest.raises(TrainError):
            grad_check(head, self._sample(), eps=1e-2)


def tiny_registry(seed=0):
    models = {}
    for i, dim in enumerate(DIMENSIONS):
        params = make_encoder_params("mel-proj", 40, 8, seed=seed + i)
        head = random_head("mlp", input_dim=8, seed=seed + i)
        models[dim] = DimensionModel(encoder_id="mel-proj", encoder_params=params, head=head)
    return DimensionRegistry(models=models, n_mels=40)


class TestRegistry:
    def test_all_dimensions_required(self):
        reg = tiny_registry()
        with pytest.raises(Exception):
            DimensionRegistry(models={"breath": reg.models["breath"]})

    def test_infer_song_shape_and_range(self):
        clip = synthutil.render_take(synthutil.random_melody(20, 0), clip_id="song", seed=0)
        scores = infer_song(clip, tiny_registry())
        assert set(scores.expected) == set(DIMENSIONS)
        for d in DIMENSIONS:
            assert 1.0 <= scores.expected[d] <= 5.0
            assert abs(scores.distributions[d].sum() - 1.0) <= 1e-6
            assert 1 <= scores.argmax[d] <= 5

    def test_deterministic_replay(self):
        clip = synthutil.render_take(synthutil.random_melody(15, 1), clip_id="song", seed=1)
        reg = tiny_registry()
        a = infer_song(clip, reg)
        b = infer_song(clip, reg)
        for d in DIMENSIONS:
            assert np.array_equal(a.distributions[d], b.distributions[d])

    def test_clip30_mode_runs(self):
        melody = synthutil.random_melody(70, 2)  # ~42 s, two 30 s segments
        clip = synthutil.render_take(melody, clip_id="long", seed=2)
        scores = infer_song(clip, tiny_registry(), mode="clip30")
        for d in DIMENSIONS:
            assert abs(scores.distributions[d].sum() - 1.0) <= 1e-6

    def test_build_registry_single_candidates(self):
        rng = np.random.default_rng(0)
        params = make_encoder_params("mel-proj", 40, 8, seed=0)
        validation = [seq_of(rng.standard_normal((4, 8)), clip_id=f"v{i}") for i in range(12)]
        candidates = {
            d: [("mel-proj", params, random_head("mlp", seed=i))]
            for i, d in enumerate(DIMENSIONS)
        }
        reg = build_registry(candidates, {"mel-proj": validation},
                             judge=lambda h, m, l: True, n_triplets=10, n_mels=40)
        for i, d in enumerate(DIMENSIONS):
            assert reg.models[d].head is candidates[d][0][2]
            assert reg.models[d].benchmark_score == 1.0

    def test_build_registry_picks_higher_score(self):
        # judge agrees with head A's ranking and disagrees with head B's
        rng = np.random.default_rng(1)
        validation = [seq_of(rng.standard_normal((4, 8)), clip_id=f"v{i}") for i in range(12)]
        params = make_encoder_params("mel-proj", 40, 8, seed=0)
        head_a = random_head("rnn", seed=1)
        head_b = random_head("transformer", seed=2)
        truth = {}
        for seq in validation:
            truth[seq.clip_id] = predict_score(head_forward(seq, head_a))[0]

        def judge(h, m, l):
            return truth[h] > truth[m] > truth[l]

        candidates = {d: [("mel-proj", params, head_a), ("mel-proj", params, head_b)]
                      for d in DIMENSIONS}
        reg = build_registry(candidates, {"mel-proj": validation}, judge,
                             n_triplets=20, n_mels=40)
        for d in DIMENSIONS:
            assert reg.models[d].head is head_a

    def test_tie_break_prefers_mlp(self):
        rng = np.random.default_rng(2)
        validation = [seq_of(rng.standard_normal((4, 8)), clip_id=f"v{i}") for i in range(9)]
        params = make_encoder_params("mel-proj", 40, 8, seed=0)
        mlp = random_head("mlp", seed=3)
        rnn = random_head("rnn", seed=3)
        candidates = {d: [("mel-proj", params, rnn), ("mel-proj", params, mlp)]
                      for d in DIMENSIONS}
        reg = build_registry(candidates, {"mel-proj": validation},
                             judge=lambda h, m, l: True, n_triplets=10, n_mels=40)
        for d in DIMENSIONS:
            assert reg.models[d].head.config.kind == "mlp"


class TestModelIO:
    def test_roundtrip(self, tmp_path):
        reg = tiny_registry(seed=4)
        path = tmp_path / "models.vkrg"
        save_registry(path, reg)
        loaded = load_registry(path)
        assert loaded.n_mels == reg.n_mels
        for d in DIMENSIONS:
            assert np.array_equal(loaded.models[d].head.parameters, reg.models[d].head.parameters)
            assert loaded.models[d].head.config == reg.models[d].head.config
            assert np.array_equal(
                loaded.models[d].encoder_params.weight, reg.models[d].encoder_params.weight
            )
        assert (tmp_path / "models.vkrg.meta.json").exists()
