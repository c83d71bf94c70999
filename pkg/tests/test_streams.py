"""
Тесты для счетчиковых потоков случайных чисел
"""
import numpy as np
import pytest

from dmri.streams import (
    SUBSTREAM_B0,
    SUBSTREAM_DW,
    VoxelStream,
    raw_draws,
    splitmix64,
    standard_normal,
    stream_keys,
    uniform,
    uniform_indices,
)


class TestSplitMix64:
    """Тесты генератора SplitMix64"""

    def test_reference_sequence(self):
        """Первые выходы SplitMix64 с нулевым состоянием"""
        draws = raw_draws(np.array([0], dtype=np.uint64), 3)[0]
        assert [int(v) for v in draws] == [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]

    def test_scalar(self):
        assert int(splitmix64(np.uint64(0))) == 0xE220A8397B1DCDAF


class TestStreamKeys:
    """Тесты ключей потоков"""

    def test_vectorized_matches_single(self):
        """Ключ вокселя не зависит от соседей в массиве"""
        keys = stream_keys(5, 1, 0, np.arange(10), SUBSTREAM_DW)
        assert keys[7] == stream_keys(5, 1, 0, np.array([7]), SUBSTREAM_DW)[0]

    def test_components_change_key(self):
        base = stream_keys(1, 0, 0, np.array([3]), SUBSTREAM_DW)[0]
        assert stream_keys(2, 0, 0, np.array([3]), SUBSTREAM_DW)[0] != base
        assert stream_keys(1, 1, 0, np.array([3]), SUBSTREAM_DW)[0] != base
        assert stream_keys(1, 0, 1, np.array([3]), SUBSTREAM_DW)[0] != base
        assert stream_keys(1, 0, 0, np.array([4]), SUBSTREAM_DW)[0] != base
        assert stream_keys(1, 0, 0, np.array([3]), SUBSTREAM_B0)[0] != base

    def test_full_range_seed(self):
        keys = stream_keys((1 << 64) - 1, 0, 0, np.array([0]), SUBSTREAM_DW)
        assert keys.dtype == np.uint64


class TestDraws:
    """Тесты распределений"""

    def test_uniform_range(self):
        values = uniform(stream_keys(3, 0, 0, np.arange(100), 0), 100)
        assert values.min() >= 0.0
        assert values.max() < 1.0
        assert values.mean() == pytest.approx(0.5, abs=0.01)

    def test_indices_cover_range(self):
        picks = uniform_indices(stream_keys(3, 0, 0, np.arange(50), 0), 200, 7)
        counts = np.bincount(picks.ravel(), minlength=7)
        assert counts.size == 7
        assert np.all(np.abs(counts / picks.size - 1.0 / 7.0) < 0.01)

    def test_offset_continues_stream(self):
        keys = stream_keys(9, 0, 0, np.arange(4), 0)
        full = uniform(keys, 10)
        assert np.array_equal(uniform(keys, 4, offset=6), full[:, 6:])

    def test_standard_normal_moments(self):
        values = standard_normal(stream_keys(11, 0, 0, np.arange(1000), 2), 100)
        assert values.mean() == pytest.approx(0.0, abs=0.02)
        assert values.std() == pytest.approx(1.0, abs=0.02)


class TestVoxelStream:
    """Тесты потока одного вокселя"""

    def test_matches_vectorized(self):
        stream = VoxelStream(42, 2, 1, 17, SUBSTREAM_DW)
        keys = stream_keys(42, 2, 1, np.array([17]), SUBSTREAM_DW)
        assert np.array_equal(stream.indices(30, 30), uniform_indices(keys, 30, 30)[0])

    def test_position_advances(self):
        stream = VoxelStream(1)
        first = stream.indices(5, 100)
        second = stream.indices(5, 100)
        keys = stream_keys(1, 0, 0, np.array([0]), SUBSTREAM_DW)
        assert np.array_equal(np.concatenate([first, second]), uniform_indices(keys, 10, 100)[0])
        assert stream.position == 10

    def test_normal_uses_two_words_per_value(self):
        stream = VoxelStream(1)
        values = stream.normal(3)
        assert values.shape == (3,)
        assert stream.position == 6
