import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from endorecon.frame_select import (
    Frame,
    QualityScoreTable,
    list_frame_paths,
    load_frames,
    select_by_rchannel,
    select_by_score,
)


def make_frame(index, r=0, g=0, b=0, shape=(4, 6)):
    pixels = np.zeros(shape + (3,), dtype=np.uint8)
    pixels[..., 0] = r
    pixels[..., 1] = g
    pixels[..., 2] = b
    return Frame(index=index, path=__import__("pathlib").Path("frame_%d.png" % index), pixels=pixels)


class TestSelectByScore:
    def test_strictly_above_threshold_kept(self):
        frames = [make_frame(0), make_frame(1)]
        scores = QualityScoreTable({0: 55.0, 1: 40.0})
        kept = select_by_score(frames, scores, threshold=50.0)
        assert [f.index for f in kept] == [0]

    def test_minus_infinity_keeps_all(self):
        frames = [make_frame(i) for i in range(3)]
        scores = QualityScoreTable({i: float(i) for i in range(3)})
        kept = select_by_score(frames, scores, threshold=-np.inf)
        assert [f.index for f in kept] == [0, 1, 2]

    def test_equal_score_dropped(self):
        frames = [make_frame(0)]
        kept = select_by_score(frames, QualityScoreTable({0: 50.0}), threshold=50.0)
        assert kept == []

    def test_missing_score_names_frame(self):
        frames = [make_frame(0), make_frame(7)]
        with pytest.raises(ValueError, match="frame 7"):
            select_by_score(frames, QualityScoreTable({0: 1.0}), threshold=0.0)

    def test_order_preserved(self):
        frames = [make_frame(i) for i in range(5)]
        scores = QualityScoreTable({i: 100.0 for i in range(5)})
        kept = select_by_score(frames, scores, threshold=0.0)
        assert [f.index for f in kept] == [0, 1, 2, 3, 4]


class TestSelectByRChannel:
    def test_uniform_red_kept(self):
        kept = select_by_rchannel([make_frame(0, r=200)], threshold=100.0)
        assert len(kept) == 1

    def test_black_dropped(self):
        assert select_by_rchannel([make_frame(0)], threshold=100.0) == []

    def test_mean_exactly_at_threshold_dropped(self):
        # 2x1 frame with R values 100 and 102: mean 101 is not > 101.
        pixels = np.zeros((1, 2, 3), dtype=np.uint8)
        pixels[0, 0, 0] = 100
        pixels[0, 1, 0] = 102
        frame = Frame(0, __import__("pathlib").Path("x.png"), pixels)
        assert select_by_rchannel([frame], threshold=101.0) == []
        assert len(select_by_rchannel([frame], threshold=100.9)) == 1

    @settings(max_examples=30, deadline=None)
    @given(st.integers(min_value=0, max_value=10_000))
    def test_green_blue_channels_ignored(self, seed):
        rng = np.random.default_rng(seed)
        pixels = np.zeros((3, 3, 3), dtype=np.uint8)
        pixels[..., 0] = 150
        frame_a = Frame(0, __import__("pathlib").Path("a.png"), pixels.copy())
        noisy = pixels.copy()
        noisy[..., 1] = rng.integers(0, 256, (3, 3))
        noisy[..., 2] = rng.integers(0, 256, (3, 3))
        frame_b = Frame(0, __import__("pathlib").Path("b.png"), noisy)
        for threshold in (10.0, 149.0, 150.0, 200.0):
            assert len(select_by_rchannel([frame_a], threshold)) == len(
                select_by_rchannel([frame_b], threshold)
            )


def test_sequential_composition_is_monotone():
    frames = [make_frame(i, r=50 * i) for i in range(5)]
    scores = QualityScoreTable({i: float(i) for i in range(5)})
    first = select_by_score(frames, scores, threshold=1.0)
    second = select_by_rchannel(first, threshold=120.0)
    assert {f.index for f in second} <= {f.index for f in first}
    assert {f.index for f in second} <= {f.index for f in select_by_rchannel(frames, 120.0)}


class TestScoreCsv:
    def test_roundtrip(self, tmp_path):
        path = tmp_path / "scores.csv"
        path.write_text("frame_index,score\n0,55.5\n1,40.25\n", encoding="utf-8")
        table = QualityScoreTable.read_csv(path)
        assert table.entries == {0: 55.5, 1: 40.25}

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "scores.csv"
        path.write_text("idx,value\n0,1\n", encoding="utf-8")
        with pytest.raises(ValueError, match="frame_index,score"):
            QualityScoreTable.read_csv(path)


class TestFrameListing:
    def test_lexicographic_order_and_loading(self, tmp_path):
        for name, level in (("b.png", 80), ("a.png", 40), ("c.png", 120)):
            arr = np.full((2, 2, 3), level, dtype=np.uint8)
            Image.fromarray(arr).save(tmp_path / name)
        paths = list_frame_paths(tmp_path)
        assert [p.name for p in paths] == ["a.png", "b.png", "c.png"]
        frames = load_frames(paths)
        assert [f.index for f in frames] == [0, 1, 2]
        assert frames[0].pixels[0, 0, 0] == 40

    def test_video_files_rejected_with_pointer(self, tmp_path):
        (tmp_path / "surgery.mp4").write_bytes(b"\x00")
        with pytest.raises(ValueError, match="external tooling"):
            list_frame_paths(tmp_path)

    def test_missing_directory(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            list_frame_paths(tmp_path / "nope")
