"""Feature pipeline tests: caching, training granularity, stem parity."""

import numpy as np
import pytest

from lipread.detectors import SyntheticLandmarkDetector
from lipread.errors import EmptySplit
from lipread.frames import decode_clip, standardize_frames
from lipread.landmarks import clip_to_tensor
from lipread.models import ModelSpec, build_model
from lipread.pipelines import LandmarkPipeline, StemPipeline, make_pipeline
from lipread.synth import generate_synthetic_corpus
from lipread.training import SplitConfig, split_manifest
from lipread.vocab import WordVocabulary

VOCAB = WordVocabulary.default()


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipeline_corpus")
    manifest = generate_synthetic_corpus(
        VOCAB, clips_per_class=2, seed=123, out_dir=root
    )
    return manifest


def test_landmark_pipeline_matches_direct_conversion(corpus):
    record = corpus.records[0]
    seq = decode_clip(corpus.resolve_path(record), record.clip_id)
    pipe = LandmarkPipeline()
    np.testing.assert_array_equal(
        pipe.clip_features(seq), clip_to_tensor(seq, SyntheticLandmarkDetector()).data
    )


def test_landmark_cache_roundtrip(corpus, tmp_path):
    pipe = LandmarkPipeline(cache_dir=tmp_path)
    record = corpus.records[3]
    first = pipe.load_clip(corpus, record)
    cache_files = list((tmp_path / "landmarks").iterdir())
    assert len(cache_files) == 1
    again = pipe.load_clip(corpus, record)
    # cache stores raw pixel coordinates at micro-pixel precision
    np.testing.assert_allclose(again, first, atol=1e-5)
    uncached = LandmarkPipeline().load_clip(corpus, record)
    np.testing.assert_allclose(again, uncached, atol=1e-5)


def test_stem_pipeline_matches_model_preprocess(corpus):
    record = corpus.records[5]
    seq = decode_clip(corpus.resolve_path(record), record.clip_id)
    pipe = StemPipeline(method="direct_lstm")
    feats = pipe.clip_features(seq)
    assert feats.shape == (20, 30, 30, 3) and feats.dtype == np.float32
    model = build_model(
        ModelSpec(method="direct_lstm", num_classes=7), VOCAB, seed=0
    )
    expect = model.preprocess(standardize_frames(seq).data.astype(np.float64))
    np.testing.assert_allclose(feats, expect, atol=1e-6)


def test_stem_cache_is_exact(corpus, tmp_path):
    pipe = StemPipeline(method="direct_cnn", cache_dir=tmp_path)
    record = corpus.records[1]
    first = pipe.load_clip(corpus, record)
    again = pipe.load_clip(corpus, record)
    np.testing.assert_array_equal(first, again)
    assert (tmp_path / "stem").exists()


def test_direct_cnn_trains_on_frames(corpus):
    split = split_manifest(corpus, SplitConfig(seed=0))
    pipe = StemPipeline(method="direct_cnn")
    xc, yc = pipe.clips(split, "train")
    xs, ys = pipe.samples(split, "train")
    assert xc.shape == (len(yc), 20, 30, 30, 3)
    assert xs.shape == (len(yc) * 20, 30, 30, 3)
    np.testing.assert_array_equal(ys, np.repeat(yc, 20))
    np.testing.assert_array_equal(xs.reshape(xc.shape), xc)


def test_direct_lstm_trains_on_clips(corpus):
    pipe = StemPipeline(method="direct_lstm")
    xc, yc = pipe.clips(corpus)
    xs, ys = pipe.samples(corpus)
    np.testing.assert_array_equal(xs, xc)
    np.testing.assert_array_equal(ys, yc)


def test_indirect_labels_follow_vocab(corpus):
    pipe = LandmarkPipeline()
    x, y = pipe.clips(corpus)
    assert x.shape == (14, 20, 20, 2)
    labels = [r.label for r in corpus.records]
    np.testing.assert_array_equal(y, [VOCAB.id_of(w) for w in labels])


def test_empty_split_raises(corpus):
    with pytest.raises(EmptySplit):
        LandmarkPipeline().clips(corpus, "test")


def test_make_pipeline_dispatch():
    assert isinstance(make_pipeline("indirect_cnn"), LandmarkPipeline)
    assert make_pipeline("direct_cnn").method == "direct_cnn"
    assert make_pipeline("direct_lstm").method == "direct_lstm"
    with pytest.raises(ValueError):
        StemPipeline(method="indirect_cnn")
