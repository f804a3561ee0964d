"""Fixed-width big-endian bit packing, most significant bit first."""

import numpy as np

from .errors import CorruptStream


def _bit_planes(widths):
    shifts = np.concatenate([np.arange(w - 1, -1, -1) for w in widths])
    owner = np.concatenate([np.full(w, f) for f, w in enumerate(widths)])
    return shifts.astype(np.int64), owner


def pack_fields(values, widths):
    """Pack an (N, F) integer array, field f using ``widths[f]`` bits.

    The result is zero-padded to a whole number of bytes.
    """
    values = np.asarray(values, dtype=np.int64).reshape(-1, len(widths))
    limits = np.array([1 << w for w in widths])
    if np.any(values < 0) or np.any(values >= limits):
        raise ValueError("field value does not fit its bit width")
    shifts, owner = _bit_planes(widths)
    bits = (values[:, owner] >> shifts) & 1
    return np.packbits(bits.astype(np.uint8).ravel()).tobytes()


def unpack_fields(data, widths, count):
    """Read ``count`` records of the given field widths from ``data``.

    Padding bits after the last record must be zero.
    """
    record = sum(widths)
    nbits = record * count
    if len(data) != -(-nbits // 8):
        raise CorruptStream(
            f"payload is {len(data)} bytes, expected {-(-nbits // 8)} for {count} records"
        )
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8))
    if np.any(bits[nbits:]):
        raise CorruptStream("nonzero padding bits after the payload")
    bits = bits[:nbits].reshape(count, record).astype(np.int64)
    shifts, owner = _bit_planes(widths)
    out = np.zeros((count, len(widths)), dtype=np.int64)
    for f in range(len(widths)):
        cols = owner == f
        out[:, f] = bits[:, cols] @ (np.int64(1) << shifts[cols])
    return out
