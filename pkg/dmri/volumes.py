"""
4D объемы в памяти и минимальный ввод-вывод однофайлового NIfTI-1.

Раскладка данных: массив numpy формы (nx, ny, nz, nc) в C-порядке,
т.е. каналы одного вокселя лежат подряд (channel-fastest).
Линейный индекс вокселя: x + nx*(y + ny*z).
"""
import gzip
import io
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
from nibabel.nifti1 import Nifti1Header
from nibabel.spatialimages import HeaderDataError

from utils.error_handler import DimensionMismatchError, NiftiFormatError, UsageError

logger = logging.getLogger('dmriboot.volumes')

HEADER_SIZE = 348
VOX_OFFSET = 352
GZIP_MAGIC = b'\x1f\x8b'

# Поддерживаемые коды datatype NIfTI-1
DATATYPE_CODES = {
    2: np.uint8,
    4: np.int16,
    8: np.int32,
    16: np.float32,
    64: np.float64,
    256: np.int8,
    512: np.uint16,
    768: np.uint32,
}

WRITE_DTYPES = {
    'uint8': np.uint8,
    'int16': np.int16,
    'float32': np.float32,
    'float64': np.float64,
}


@dataclass
class Volume4D:
    """Плотный 4D объем (nx, ny, nz, nc) с шагом сетки и аффинным преобразованием."""

    data: np.ndarray
    spacing: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    affine: np.ndarray = field(default_factory=lambda: np.eye(4))
    dtype_on_disk: str = 'float32'
    header: Optional[Nifti1Header] = None

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim == 3:
            data = data[..., np.newaxis]
        if data.ndim != 4:
            raise DimensionMismatchError(f"volume data must be 3D or 4D, got {data.ndim}D")
        if min(data.shape) <= 0:
            raise DimensionMismatchError(f"volume dims must be positive, got {data.shape}")
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.spacing = tuple(float(s) for s in self.spacing)
        if len(self.spacing) != 3 or any(s <= 0 for s in self.spacing):
            raise DimensionMismatchError(f"voxel spacing must be 3 positive values, got {self.spacing}")
        self.affine = np.asarray(self.affine, dtype=np.float64).reshape(4, 4)

    @property
    def dims(self):
        return tuple(int(d) for d in self.data.shape)

    @property
    def spatial_dims(self):
        return self.dims[:3]

    @property
    def n_channels(self):
        return self.dims[3]

    def with_data(self, data, dtype_on_disk=None):
        """Новый объем с теми же метаданными и другими данными."""
        return Volume4D(
            data=data,
            spacing=self.spacing,
            affine=self.affine.copy(),
            dtype_on_disk=dtype_on_disk or self.dtype_on_disk,
            header=self.header,
        )

    def voxel_signals(self, mask):
        """Сигналы вокселей маски в порядке линейного индекса: (n_vox, nc)."""
        mask.check_compatible(self)
        coords = mask.voxel_coordinates()
        return self.data[coords]

    def __repr__(self):
        return f'<Volume4D dims={self.dims} spacing={self.spacing}>'


@dataclass
class Mask:
    """Булева маска (nx, ny, nz)."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim == 4 and data.shape[3] == 1:
            data = data[..., 0]
        if data.ndim != 3:
            raise DimensionMismatchError(f"mask must be 3D, got shape {data.shape}")
        self.data = data.astype(bool)

    @classmethod
    def full(cls, dims):
        return cls(np.ones(tuple(dims[:3]), dtype=bool))

    @classmethod
    def from_volume(cls, volume, threshold=0.0):
        """Маска из первого канала объема: значение > threshold."""
        return cls(volume.data[..., 0] > threshold)

    @property
    def dims(self):
        return tuple(int(d) for d in self.data.shape)

    @property
    def count(self):
        return int(self.data.sum())

    def check_compatible(self, volume):
        if self.dims != volume.spatial_dims:
            raise DimensionMismatchError(
                f"mask dims {self.dims} do not match volume spatial dims {volume.spatial_dims}"
            )

    def voxel_linear_indices(self):
        """Линейные индексы x + nx*(y + ny*z) вокселей маски, по возрастанию."""
        return np.flatnonzero(self.data.ravel(order='F'))

    def voxel_coordinates(self):
        """Кортеж массивов (x, y, z) в порядке voxel_linear_indices."""
        return np.unravel_index(self.voxel_linear_indices(), self.dims, order='F')

    def to_volume(self, reference=None):
        kwargs = {}
        if reference is not None:
            kwargs = {'spacing': reference.spacing, 'affine': reference.affine}
        return Volume4D(data=self.data.astype(np.float64), dtype_on_disk='uint8', **kwargs)


def scatter_signals(volume_data, mask, signals):
    """Записать сигналы (n_vox, nc) в воксели маски массива (nx, ny, nz, nc)."""
    volume_data[mask.voxel_coordinates()] = signals
    return volume_data


def gather_channels(volume, indices):
    """Канал k результата равен каналу indices[k] входа."""
    indices = np.asarray(list(indices), dtype=np.int64)
    if indices.size == 0:
        raise UsageError("channel index list is empty")
    if indices.min() < 0 or indices.max() >= volume.n_channels:
        raise UsageError(
            f"channel index out of range [0, {volume.n_channels})",
            details={'min': int(indices.min()), 'max': int(indices.max())}
        )
    return volume.with_data(volume.data[..., indices])


def _read_bytes(source):
    if isinstance(source, (bytes, bytearray)):
        raw = bytes(source)
    elif hasattr(source, 'read'):
        raw = source.read()
    else:
        try:
            raw = Path(source).read_bytes()
        except OSError as e:
            raise NiftiFormatError(f"cannot read {source}: {e}") from e
    if raw[:2] == GZIP_MAGIC:
        try:
            raw = gzip.decompress(raw)
        except (OSError, EOFError) as e:
            raise NiftiFormatError(f"corrupt gzip stream: {e}") from e
    return raw


def read_nifti(source):
    """
    Прочитать однофайловый NIfTI-1 (.nii или .nii.gz).

    Данные переводятся в float64; при scl_slope != 0 применяется v*slope + inter.
    """
    raw = _read_bytes(source)
    if len(raw) < HEADER_SIZE:
        raise NiftiFormatError(f"truncated header: {len(raw)} bytes")

    try:
        header = Nifti1Header.from_fileobj(io.BytesIO(raw), check=False)
    except (HeaderDataError, ValueError) as e:
        raise NiftiFormatError(f"invalid NIfTI-1 header: {e}") from e

    magic = bytes(header['magic'].item()).rstrip(b'\x00')
    if magic == b'ni1':
        raise NiftiFormatError("two-file NIfTI (.hdr/.img) is not supported")
    if magic != b'n+1':
        raise NiftiFormatError(f"bad NIfTI-1 magic {magic!r}")

    dim = [int(d) for d in header['dim']]
    if dim[0] not in (3, 4):
        raise NiftiFormatError(f"dim[0] must be 3 or 4, got {dim[0]}")
    shape = tuple(dim[1:dim[0] + 1])
    if any(d <= 0 for d in shape):
        raise NiftiFormatError(f"non-positive dimension in {shape}")

    code = int(header['datatype'])
    if code not in DATATYPE_CODES:
        raise NiftiFormatError(f"unsupported datatype code {code}")
    dtype = np.dtype(DATATYPE_CODES[code]).newbyteorder(header.endianness)

    offset = int(header['vox_offset'])
    n_values = int(np.prod(shape))
    n_bytes = n_values * dtype.itemsize
    if len(raw) < offset + n_bytes:
        raise NiftiFormatError(
            f"truncated data section: need {n_bytes} bytes at offset {offset}, "
            f"file has {max(len(raw) - offset, 0)}"
        )

    data = np.frombuffer(raw, dtype=dtype, count=n_values, offset=offset)
    data = data.reshape(shape, order='F').astype(np.float64)

    slope = float(header['scl_slope'])
    inter = float(header['scl_inter'])
    if slope != 0.0 and np.isfinite(slope):
        if not np.isfinite(inter):
            inter = 0.0
        if slope != 1.0 or inter != 0.0:
            data = data * slope + inter

    zooms = header.get_zooms()
    spacing = tuple(float(z) if z > 0 else 1.0 for z in zooms[:3])

    dtype_name = {np.uint8: 'uint8', np.int16: 'int16', np.float32: 'float32',
                  np.float64: 'float64'}.get(DATATYPE_CODES[code], 'float32')

    volume = Volume4D(
        data=data,
        spacing=spacing,
        affine=header.get_best_affine(),
        dtype_on_disk=dtype_name,
        header=header,
    )
    logger.debug(f"Read NIfTI {volume.dims} datatype={code} endian={header.endianness}")
    return volume


def _cast_for_disk(data, dtype):
    if np.issubdtype(dtype, np.integer):
        if not np.all(np.isfinite(data)):
            raise NiftiFormatError(f"non-finite values cannot be written as {np.dtype(dtype).name}")
        info = np.iinfo(dtype)
        rounded = np.rint(data)
        low, high = float(rounded.min()), float(rounded.max())
        if low < info.min or high > info.max:
            raise NiftiFormatError(
                f"value overflow for {np.dtype(dtype).name}: range [{low:g}, {high:g}] "
                f"outside [{info.min}, {info.max}]"
            )
        return rounded.astype(dtype)
    return data.astype(dtype)


def build_header(volume, dtype):
    """Заголовок для записи: метаданные исходного файла повторяются, если были."""
    if volume.header is not None:
        source = volume.header
        if source.endianness != '<':
            source = source.as_byteswapped('<')
        header = source.copy()
        header.extensions.clear()
    else:
        header = Nifti1Header(endianness='<')
        header.set_qform(volume.affine, code=1)
        header.set_sform(volume.affine, code=1)
    header.set_data_dtype(dtype)
    dims = volume.dims
    shape = dims if dims[3] > 1 else dims[:3]
    header.set_data_shape(shape)
    header.set_zooms(tuple(volume.spacing) + ((1.0,) if len(shape) == 4 else ()))
    header['vox_offset'] = VOX_OFFSET
    header['scl_slope'] = 1.0
    header['scl_inter'] = 0.0
    header['magic'] = b'n+1'
    return header


def write_nifti(volume, path, dtype_on_disk=None):
    """
    Записать объем: 348-байтовый заголовок + 4 нулевых байта расширения,
    vox_offset 352, little-endian, scl_slope 1, scl_inter 0.
    """
    dtype_name = dtype_on_disk or volume.dtype_on_disk
    if dtype_name not in WRITE_DTYPES:
        raise UsageError(f"unsupported output dtype {dtype_name!r}",
                         details={'allowed': sorted(WRITE_DTYPES)})
    dtype = np.dtype(WRITE_DTYPES[dtype_name]).newbyteorder('<')

    payload = _cast_for_disk(volume.data, dtype)
    header = build_header(volume, dtype)

    buffer = io.BytesIO()
    header.write_to(buffer)
    if buffer.tell() != VOX_OFFSET:
        raise NiftiFormatError(f"header serialization produced {buffer.tell()} bytes")
    data = payload if volume.n_channels > 1 else payload[..., 0]
    buffer.write(np.asarray(data, dtype=dtype).tobytes(order='F'))

    blob = buffer.getvalue()
    path = Path(path)
    if path.suffix == '.gz':
        blob = gzip.compress(blob, mtime=0)
    try:
        path.write_bytes(blob)
    except OSError as e:
        raise NiftiFormatError(f"cannot write {path}: {e}") from e
    logger.debug(f"Wrote NIfTI {path} dims={volume.dims} dtype={dtype_name}")
    return path
