import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lipread.errors import DecodeError
from lipread.frames import (
    FRAME_SIZE,
    FrameSequence,
    decode_clip,
    letterbox,
    standard_indices,
    standardize_frames,
    write_frame_dir,
    write_video,
)


def make_seq(t, seed=0):
    rng = np.random.default_rng(seed)
    data = rng.integers(0, 256, size=(t, FRAME_SIZE, FRAME_SIZE, 3)).astype(np.float32) / 255.0
    return FrameSequence(data=data, fps=20.0, clip_id="clip")


class TestStandardIndices:
    def test_identity_at_target(self):
        assert standard_indices(20).tolist() == list(range(20))

    def test_center_crop_40(self):
        # Frozen oracle: floor((40-20)/2) = 10 leading frames dropped.
        assert standard_indices(40).tolist() == list(range(10, 30))

    def test_odd_surplus_drops_leading(self):
        idx = standard_indices(21)
        assert idx.tolist() == list(range(0, 20))
        idx = standard_indices(23)
        assert idx.tolist() == list(range(1, 21))

    def test_short_repeats_last(self):
        # Frozen oracle: 3 originals then 17 copies of index 2.
        idx = standard_indices(3)
        assert idx.tolist() == [0, 1, 2] + [2] * 17

    def test_single_frame(self):
        assert standard_indices(1).tolist() == [0] * 20

    @given(st.integers(min_value=1, max_value=200))
    def test_always_twenty_monotone(self, t):
        idx = standard_indices(t)
        assert idx.shape == (20,)
        assert np.all(np.diff(idx) >= 0)
        assert idx.min() >= 0 and idx.max() < t


class TestStandardizeFrames:
    def test_identity(self):
        seq = make_seq(20)
        out = standardize_frames(seq)
        assert np.array_equal(out.data, seq.data)

    def test_crop(self):
        seq = make_seq(40)
        out = standardize_frames(seq)
        assert out.num_frames == 20
        assert np.array_equal(out.data, seq.data[10:30])

    def test_pad(self):
        seq = make_seq(3)
        out = standardize_frames(seq)
        assert out.num_frames == 20
        assert np.array_equal(out.data[:3], seq.data)
        for i in range(3, 20):
            assert np.array_equal(out.data[i], seq.data[2])

    def test_output_shape_fixed(self):
        for t in (1, 7, 20, 33):
            out = standardize_frames(make_seq(t))
            assert out.data.shape == (20, FRAME_SIZE, FRAME_SIZE, 3)


class TestLetterbox:
    def test_square_identity(self):
        img = np.random.default_rng(0).integers(0, 256, (300, 300, 3)).astype(np.uint8)
        assert np.array_equal(letterbox(img), img)

    def test_wide_source_content_box(self):
        # Frozen oracle: 720/1280*300 = 168.75 -> content height 168 or 169.
        img = np.full((720, 1280, 3), 255, dtype=np.uint8)
        out = letterbox(img)
        assert out.shape == (300, 300, 3)
        row_filled = (out.sum(axis=(1, 2)) > 0).sum()
        assert abs(int(row_filled) - 169) <= 1
        col_filled = (out.sum(axis=(0, 2)) > 0).sum()
        assert col_filled == 300

    def test_tall_source(self):
        img = np.full((600, 300, 3), 255, dtype=np.uint8)
        out = letterbox(img)
        col_filled = (out.sum(axis=(0, 2)) > 0).sum()
        assert abs(int(col_filled) - 150) <= 1


class TestFrameSequence:
    def test_rejects_bad_shape(self):
        with pytest.raises(DecodeError):
            FrameSequence(data=np.zeros((5, 100, 100, 3), dtype=np.float32), fps=20.0, clip_id="x")

    def test_rejects_empty(self):
        with pytest.raises(DecodeError):
            FrameSequence(data=np.zeros((0, 300, 300, 3), dtype=np.float32), fps=20.0, clip_id="x")


class TestDiskRoundTrip:
    def test_frame_dir_round_trip_bit_exact(self, tmp_path):
        seq = make_seq(6)
        out = write_frame_dir(seq, tmp_path / "clip")
        back = decode_clip(out)
        assert back.num_frames == 6
        assert back.fps == seq.fps
        assert np.array_equal(back.data, seq.data)

    def test_frame_dir_names_zero_padded(self, tmp_path):
        write_frame_dir(make_seq(3), tmp_path / "clip")
        names = sorted(p.name for p in (tmp_path / "clip").glob("*.png"))
        assert names == ["00000.png", "00001.png", "00002.png"]

    def test_video_round_trip_lossless(self, tmp_path):
        seq = make_seq(5)
        path = write_video(seq, tmp_path / "clip.avi")
        back = decode_clip(path)
        assert back.num_frames == 5
        assert np.array_equal(back.data, seq.data)

    def test_decode_missing_path(self, tmp_path):
        with pytest.raises(DecodeError):
            decode_clip(tmp_path / "nope")

    def test_decode_empty_dir(self, tmp_path):
        (tmp_path / "d").mkdir()
        with pytest.raises(DecodeError):
            decode_clip(tmp_path / "d")

    def test_decode_garbage_file(self, tmp_path):
        p = tmp_path / "x.mp4"
        p.write_bytes(b"not a video")
        with pytest.raises(DecodeError):
            decode_clip(p)
