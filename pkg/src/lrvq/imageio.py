"""Binary PGM (P5) and PPM (P6) at 8 bits per sample."""

import numpy as np

from .errors import CorruptFile, InvalidInput, UnsupportedDepth, UnsupportedFormat
from .patching import ImageTensor

_CHANNELS = {b"P5": 1, b"P6": 3}
_WHITESPACE = b" \t\n\r\x0b\x0c"


def _header_tokens(data):
    """Yield (token, end offset) for the three header numbers after the magic."""
    pos, n = 2, len(data)
    for _ in range(3):
        while pos < n and (data[pos] in _WHITESPACE or data[pos] == ord("#")):
            if data[pos] == ord("#"):
                while pos < n and data[pos] not in b"\r\n":
                    pos += 1
            else:
                pos += 1
        start = pos
        while pos < n and data[pos] not in _WHITESPACE and data[pos] != ord("#"):
            pos += 1
        token = data[start:pos]
        if not token:
            raise CorruptFile("header ended before width, height and maxval")
        if not token.isdigit():
            raise CorruptFile(f"non-numeric header token {token!r}")
        yield int(token), pos


def load_image(data):
    """Parse P5/P6 bytes into a unit-interval :class:`ImageTensor`."""
    data = bytes(data)
    channels = _CHANNELS.get(data[:2])
    if channels is None:
        raise UnsupportedFormat(f"unsupported magic {data[:2]!r}; expected P5 or P6")
    (width, _), (height, _), (maxval, pos) = _header_tokens(data)
    if maxval != 255:
        raise UnsupportedDepth(f"maxval {maxval} is not supported; only 255")
    if width < 1 or height < 1:
        raise CorruptFile(f"invalid dimensions {width}x{height}")
    if pos >= len(data) or data[pos] not in _WHITESPACE:
        raise CorruptFile("missing whitespace after maxval")
    pixels = data[pos + 1 :]
    expected = width * height * channels
    if len(pixels) < expected:
        raise CorruptFile(f"pixel data truncated: {len(pixels)} of {expected} bytes")
    if len(pixels) > expected:
        raise CorruptFile(f"{len(pixels) - expected} unexpected bytes after the pixel data")
    arr = np.frombuffer(pixels, dtype=np.uint8).reshape(height, width, channels)
    return ImageTensor(arr.transpose(2, 0, 1) / 255.0)


def quantize8(data):
    """Clamp to [0, 1], scale by 255 and round half away from zero."""
    data = np.clip(np.asarray(data, dtype=np.float64), 0.0, 1.0)
    return np.floor(data * 255.0 + 0.5).astype(np.uint8)


def save_image(img, fmt=None):
    fmt = fmt or ("P5" if img.channels == 1 else "P6")
    if fmt not in ("P5", "P6") or _CHANNELS[fmt.encode()] != img.channels:
        raise InvalidInput(f"cannot write a {img.channels}-channel image as {fmt}")
    header = f"{fmt}\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + quantize8(img.data).transpose(1, 2, 0).tobytes()


def read_image(path):
    with open(path, "rb") as fh:
        return load_image(fh.read())


def write_image(img, path, fmt=None):
    with open(path, "wb") as fh:
        fh.write(save_image(img, fmt))
