"""
Счетчиковые потоки случайных чисел на основе SplitMix64.

Каждый поток задается ключом, полученным перемешиванием
(seed, индекс масштаба, повтор, линейный индекс вокселя, подпоток).
i-е число потока вычисляется напрямую из ключа и i, поэтому результат
не зависит ни от порядка обхода вокселей, ни от числа потоков исполнения.
"""
import numpy as np

GOLDEN_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1

# Подпотоки одного вокселя
SUBSTREAM_DW = 0
SUBSTREAM_B0 = 1
SUBSTREAM_NOISE = 2
SUBSTREAM_COEFFICIENTS = 3


def splitmix64(x):
    """Финализатор SplitMix64 над массивом uint64 (с прибавлением gamma)."""
    z = np.asarray(x, dtype=np.uint64)
    with np.errstate(over='ignore'):
        z = z + GOLDEN_GAMMA
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def stream_keys(seed, scale_index, replicate, voxels, substream):
    """
    Ключи потоков для набора вокселей.

    Args:
        seed: 64-битное беззнаковое зерно
        scale_index: индекс масштаба r в плане
        replicate: номер повтора
        voxels: массив линейных индексов x + nx*(y + ny*z)
        substream: SUBSTREAM_DW, SUBSTREAM_B0, ...

    Returns:
        массив uint64 той же формы, что voxels
    """
    key = splitmix64(np.uint64(int(seed) & _MASK64))
    key = splitmix64(key ^ np.uint64(int(scale_index) & _MASK64))
    key = splitmix64(key ^ np.uint64(int(replicate) & _MASK64))
    voxels = np.asarray(voxels, dtype=np.int64).astype(np.uint64)
    key = splitmix64(key ^ voxels)
    return splitmix64(key ^ np.uint64(int(substream) & _MASK64))


def raw_draws(keys, count, offset=0):
    """count 64-битных слов каждого потока: матрица (len(keys), count)."""
    keys = np.asarray(keys, dtype=np.uint64).reshape(-1, 1)
    counters = np.arange(offset, offset + count, dtype=np.uint64).reshape(1, -1)
    with np.errstate(over='ignore'):
        states = keys + counters * GOLDEN_GAMMA
    return splitmix64(states)


def uniform(keys, count, offset=0):
    """Равномерные числа в [0, 1) с 53 битами точности."""
    bits = raw_draws(keys, count, offset) >> np.uint64(11)
    return bits.astype(np.float64) * (1.0 / 9007199254740992.0)


def uniform_indices(keys, count, n, offset=0):
    """Индексы, равномерные в {0, ..., n-1}, с возвращением."""
    idx = np.floor(uniform(keys, count, offset) * n).astype(np.int64)
    return np.minimum(idx, n - 1)


def standard_normal(keys, count, offset=0):
    """Нормальные N(0, 1) по Боксу–Мюллеру; использует 2*count слов потока."""
    u1 = uniform(keys, count, offset)
    u2 = uniform(keys, count, offset + count)
    # 1 - u1 лежит в (0, 1], логарифм конечен
    radius = np.sqrt(-2.0 * np.log1p(-u1))
    return radius * np.cos(2.0 * np.pi * u2)


class VoxelStream:
    """Поток случайных чисел одного вокселя (rng_stream)."""

    def __init__(self, seed, scale_index=0, replicate=0, voxel=0, substream=SUBSTREAM_DW):
        self.key = stream_keys(seed, scale_index, replicate, np.array([voxel]), substream)
        self.position = 0

    def indices(self, count, n):
        """Следующие count индексов в {0, ..., n-1}."""
        out = uniform_indices(self.key, count, n, offset=self.position)[0]
        self.position += count
        return out

    def normal(self, count):
        out = standard_normal(self.key, count, offset=self.position)[0]
        self.position += 2 * count
        return out

    def __repr__(self):
        return f'<VoxelStream key={int(self.key[0]):#018x} position={self.position}>'
