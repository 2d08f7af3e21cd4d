import json
import math

import numpy as np
import pytest

from affectgen.affect import EmotionPoint
from affectgen.corpus import (SWITCH_FLOOR, CorpusSpec, estimate_normalized_emotion,
                              generate_corpus, load_clip_tokens, load_manifest,
                              read_tokens, sample_clip, validate_corpus,
                              write_tokens)


def small_spec(**kwargs):
    defaults = dict(n_clips=10, seed=7, vocab_size=64, clip_len=128)
    defaults.update(kwargs)
    return CorpusSpec(**defaults)


class TestSpecValidation:
    def test_odd_vocab_rejected(self):
        with pytest.raises(ValueError, match="vocab_size"):
            small_spec(vocab_size=63)

    def test_tiny_vocab_rejected(self):
        with pytest.raises(ValueError, match="vocab_size"):
            small_spec(vocab_size=2)

    def test_short_clip_rejected(self):
        with pytest.raises(ValueError, match="clip_len"):
            small_spec(clip_len=1)

    def test_unknown_sampling_rejected(self):
        with pytest.raises(ValueError, match="emotion_sampling"):
            small_spec(emotion_sampling="gaussian")


class TestSampleClip:
    def test_deterministic(self):
        spec = small_spec()
        e = EmotionPoint(3.3, 6.1)
        a = sample_clip(e, spec, 11)
        b = sample_clip(e, spec, 11)
        assert np.array_equal(a, b)
        c = sample_clip(e, spec, 12)
        assert not np.array_equal(a, c)

    def test_max_valence_gives_pure_high_half(self):
        spec = small_spec()
        for seed in range(5):
            clip = sample_clip(EmotionPoint(9.0, 9.0), spec, seed)
            assert np.all(clip >= spec.vocab_size // 2)

    def test_min_valence_gives_pure_low_half(self):
        spec = small_spec()
        clip = sample_clip(EmotionPoint(1.0, 5.0), spec, 0)
        assert np.all(clip < spec.vocab_size // 2)

    def test_tokens_within_vocab(self):
        spec = small_spec()
        clip = sample_clip(EmotionPoint(5.0, 5.0), spec, 1)
        assert len(clip) == spec.clip_len
        assert clip.min() >= 0 and clip.max() < spec.vocab_size

    def test_switch_count_matches_binomial_expectation(self):
        # At minimum arousal the planted redraw probability is the floor
        # value; observed neighbor disagreements over many seeds must sit
        # within three standard errors of the binomial mean.
        spec = small_spec(clip_len=256)
        n_seeds = 1000
        p = SWITCH_FLOOR
        steps = spec.clip_len - 1
        counts = [int(np.sum(np.diff(sample_clip(EmotionPoint(5.0, 1.0), spec, s)) != 0))
                  for s in range(n_seeds)]
        expected = p * steps
        se_mean = math.sqrt(p * (1 - p) * steps / n_seeds)
        assert abs(np.mean(counts) - expected) < 3 * se_mean


class TestGenerateCorpus:
    def test_counts(self, tmp_path):
        spec = small_spec(n_clips=10)
        manifest = generate_corpus(spec, tmp_path / "corpus")
        records = load_manifest(manifest)
        assert len(records) == 10
        token_files = sorted((tmp_path / "corpus" / "tokens").iterdir())
        assert len(token_files) == 10

    def test_deterministic_across_directories(self, tmp_path):
        spec = small_spec()
        m1 = generate_corpus(spec, tmp_path / "one")
        m2 = generate_corpus(spec, tmp_path / "two")
        assert m1.read_bytes() == m2.read_bytes()
        for r1, r2 in zip(load_manifest(m1), load_manifest(m2)):
            assert np.array_equal(load_clip_tokens(m1, r1), load_clip_tokens(m2, r2))

    def test_uniform_grid_81_covers_each_point_once(self, tmp_path):
        spec = small_spec(n_clips=81, emotion_sampling="uniform_grid")
        manifest = generate_corpus(spec, tmp_path / "grid")
        emotions = {(r.emotion.valence, r.emotion.arousal)
                    for r in load_manifest(manifest)}
        assert emotions == {(float(v), float(a))
                            for v in range(1, 10) for a in range(1, 10)}

    def test_validate_corpus_passes_then_fails_on_truncation(self, tmp_path):
        spec = small_spec()
        manifest = generate_corpus(spec, tmp_path / "corpus")
        validate_corpus(manifest, spec)
        victim = load_manifest(manifest)[0]
        path = tmp_path / "corpus" / victim.tokens
        path.write_bytes(path.read_bytes()[:-2])
        with pytest.raises(ValueError, match="expected"):
            validate_corpus(manifest, spec)


class TestEstimatorRecoverability:
    def test_planted_values_recovered_over_500_clips(self):
        spec = small_spec(clip_len=256)
        rng = np.random.default_rng(0)
        truths, estimates = [], []
        for i in range(500):
            v, a = rng.uniform(1.0, 9.0, size=2)
            emotion = EmotionPoint(float(v), float(a))
            clip = sample_clip(emotion, spec, i)
            truths.append([(v - 5) / 4, (a - 5) / 4])
            estimates.append(estimate_normalized_emotion(clip, spec.vocab_size))
        truths = np.array(truths)
        estimates = np.array(estimates)
        for axis in (0, 1):
            r = np.corrcoef(truths[:, axis], estimates[:, axis])[0, 1]
            assert r >= 0.95


class TestTokenFiles:
    def test_round_trip(self, tmp_path):
        tokens = np.array([0, 1, 513, 65535], dtype=np.int64)
        path = tmp_path / "t.bin"
        write_tokens(path, tokens, 65536)
        assert np.array_equal(read_tokens(path), tokens)
        assert path.stat().st_size == 8

    def test_little_endian_layout(self, tmp_path):
        path = tmp_path / "t.bin"
        write_tokens(path, np.array([0x0102]), 65536)
        assert path.read_bytes() == b"\x02\x01"

    def test_out_of_range_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="vocabulary"):
            write_tokens(tmp_path / "t.bin", np.array([64]), 64)


class TestManifest:
    def test_duplicate_clip_id_rejected(self, tmp_path):
        row = {"clip_id": "a", "valence": 5.0, "arousal": 5.0,
               "tokens": "tokens/a.bin", "seed": 1}
        path = tmp_path / "manifest.jsonl"
        path.write_text(json.dumps(row) + "\n" + json.dumps(row) + "\n")
        with pytest.raises(ValueError, match="duplicate"):
            load_manifest(path)

    def test_bad_record_reports_line(self, tmp_path):
        path = tmp_path / "manifest.jsonl"
        path.write_text('{"clip_id": "a", "valence": 5.0}\n')
        with pytest.raises(ValueError, match="manifest record"):
            load_manifest(path)

    def test_empty_manifest_rejected(self, tmp_path):
        path = tmp_path / "manifest.jsonl"
        path.write_text("")
        with pytest.raises(ValueError, match="no records"):
            load_manifest(path)

    def test_extractor_seed_passthrough(self, tmp_path):
        row = {"clip_id": "a", "valence": 5.0, "arousal": 5.0,
               "tokens": "tokens/a.bin", "seed": 1, "extractor_seed": 42}
        path = tmp_path / "manifest.jsonl"
        path.write_text(json.dumps(row) + "\n")
        assert load_manifest(path)[0].extractor_seed == 42
