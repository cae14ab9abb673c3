# apps/diffcore/checkpoint.py
"""
Flat binary parameter files.

Layout, all integers little-endian:

    magic            8 bytes  b"WHDSPOT1"
    descriptor size  uint64, then that many UTF-8 bytes of key=value lines
    record count     uint64
    per record:
        name size    uint64, then the UTF-8 name
        rank         uint64
        dims         rank x uint64
        values       product(dims) x float64, row-major
"""
import io
import struct
from typing import BinaryIO, Dict, List, Tuple

import numpy as np

from apps.common.exceptions import CheckpointError
from apps.common.utils import format_key_values, parse_key_values

MAGIC = b'WHDSPOT1'

ParameterRecord = Tuple[str, np.ndarray]


def encode_checkpoint(descriptor: Dict[str, str], records: List[ParameterRecord]) -> bytes:
    buffer = io.BytesIO()
    buffer.write(MAGIC)
    block = format_key_values(descriptor).encode('utf-8')
    buffer.write(struct.pack('<Q', len(block)))
    buffer.write(block)
    buffer.write(struct.pack('<Q', len(records)))
    for name, values in records:
        encoded = name.encode('utf-8')
        values = np.asarray(values)
        buffer.write(struct.pack('<Q', len(encoded)))
        buffer.write(encoded)
        buffer.write(struct.pack('<Q', values.ndim))
        buffer.write(struct.pack(f'<{values.ndim}Q', *values.shape))
        buffer.write(np.ascontiguousarray(values, dtype='<f8').tobytes())
    return buffer.getvalue()


def _read(stream: BinaryIO, size: int, what: str) -> bytes:
    data = stream.read(size)
    if len(data) != size:
        raise CheckpointError(f"Checkpoint truncated while reading {what}")
    return data


def decode_checkpoint(data: bytes) -> Tuple[Dict[str, str], List[ParameterRecord]]:
    stream = io.BytesIO(data)
    magic = stream.read(len(MAGIC))
    if magic != MAGIC:
        raise CheckpointError(f"Not a checkpoint file: expected magic {MAGIC!r}, found {magic!r}")
    (block_size,) = struct.unpack('<Q', _read(stream, 8, 'descriptor size'))
    try:
        descriptor = parse_key_values(_read(stream, block_size, 'descriptor').decode('utf-8'))
    except UnicodeDecodeError as exc:
        raise CheckpointError("Checkpoint descriptor is not valid UTF-8") from exc
    (count,) = struct.unpack('<Q', _read(stream, 8, 'record count'))
    records = []
    for index in range(count):
        (name_size,) = struct.unpack('<Q', _read(stream, 8, f'record {index} name size'))
        name = _read(stream, name_size, f'record {index} name').decode('utf-8')
        (rank,) = struct.unpack('<Q', _read(stream, 8, f'{name} rank'))
        dims = struct.unpack(f'<{rank}Q', _read(stream, 8 * rank, f'{name} dims'))
        size = int(np.prod(dims)) if rank else 1
        values = np.frombuffer(_read(stream, 8 * size, f'{name} values'), dtype='<f8')
        records.append((name, values.reshape(dims).astype(np.float64)))
    if stream.read(1):
        raise CheckpointError("Checkpoint has trailing bytes after the last record")
    return descriptor, records
