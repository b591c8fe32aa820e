"""Image, kernel, and selection-operator file I/O.

Supported image formats:

* binary PGM (``P5``, one channel) and PPM (``P6``, three channels) at
  8-bit or 16-bit depth, sample values mapped linearly to [0, 1]
  (16-bit samples are big-endian per the Netpbm convention);
* ``F32``: an ASCII header line ``F32 <width> <height> <channels>\\n``
  followed by width*height*channels little-endian 32-bit floats,
  channel-major then row-major.  F32 round-trips are bit-exact.

Reading dispatches on the magic bytes, writing on the file extension.
Convolution kernels use an ASCII ``K <rows> <cols>`` header followed by
row-major entries; selection operators use a ``QSEL <w> <h>`` header
followed by little-endian 64-bit indices (debug format).
"""

import numpy as np

from .image import as_multichannel
from .quantile import SelectionOperator


class ImageIOError(Exception):
    """Base class for image file errors."""

    kind = "io"


class UnsupportedFormatError(ImageIOError):
    """Magic number or extension does not name a supported format."""

    kind = "unsupported-format"


class MalformedHeaderError(ImageIOError):
    """Header present but unparsable or inconsistent."""

    kind = "malformed-header"


class TruncatedDataError(ImageIOError):
    """Payload shorter than the header promises."""

    kind = "truncated-data"


def _read_pnm_tokens(data, count, path):
    """Parse `count` whitespace-separated header tokens, skipping # comments.

    Returns (tokens, payload offset). The offset points just past the single
    whitespace byte that terminates the last header token.
    """
    tokens = []
    pos = 0
    while len(tokens) < count:
        if pos >= len(data):
            raise MalformedHeaderError(f"{path}: header ended early")
        ch = data[pos : pos + 1]
        if ch in b" \t\r\n":
            pos += 1
        elif ch == b"#":
            nl = data.find(b"\n", pos)
            if nl < 0:
                raise MalformedHeaderError(f"{path}: unterminated comment")
            pos = nl + 1
        else:
            end = pos
            while end < len(data) and data[end : end + 1] not in b" \t\r\n#":
                end += 1
            tokens.append(data[pos:end])
            pos = end
    if pos >= len(data) or data[pos : pos + 1] not in b" \t\r\n":
        raise MalformedHeaderError(f"{path}: missing whitespace before payload")
    return tokens, pos + 1


def _read_pnm(data, path):
    magic = data[:2]
    channels = 1 if magic == b"P5" else 3
    tokens, offset = _read_pnm_tokens(data[2:], 3, path)
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise MalformedHeaderError(f"{path}: non-numeric header field") from None
    if width <= 0 or height <= 0:
        raise MalformedHeaderError(f"{path}: bad dimensions {width}x{height}")
    if not 0 < maxval < 65536:
        raise MalformedHeaderError(f"{path}: bad maxval {maxval}")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    payload = data[2 + offset :]
    need = width * height * channels * dtype.itemsize
    if len(payload) < need:
        raise TruncatedDataError(
            f"{path}: expected {need} payload bytes, found {len(payload)}"
        )
    raw = np.frombuffer(payload[:need], dtype=dtype).astype(np.float64)
    raw = raw.reshape(height, width, channels)
    return np.moveaxis(raw, 2, 0) / float(maxval)


def _read_f32(data, path):
    nl = data.find(b"\n")
    if nl < 0:
        raise MalformedHeaderError(f"{path}: missing F32 header newline")
    fields = data[:nl].split()
    if len(fields) != 4 or fields[0] != b"F32":
        raise MalformedHeaderError(f"{path}: bad F32 header {data[:nl]!r}")
    try:
        width, height, channels = (int(t) for t in fields[1:])
    except ValueError:
        raise MalformedHeaderError(f"{path}: non-numeric F32 header field") from None
    if width <= 0 or height <= 0 or channels <= 0:
        raise MalformedHeaderError(f"{path}: bad F32 dimensions")
    payload = data[nl + 1 :]
    need = width * height * channels * 4
    if len(payload) < need:
        raise TruncatedDataError(
            f"{path}: expected {need} payload bytes, found {len(payload)}"
        )
    raw = np.frombuffer(payload[:need], dtype="<f4").astype(np.float64)
    if not np.all(np.isfinite(raw)):
        raise MalformedHeaderError(f"{path}: non-finite sample values")
    return raw.reshape(channels, height, width)


def read_image(path) -> np.ndarray:
    """Read a PGM/PPM/F32 image file into a (channels, height, width) stack."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] in (b"P5", b"P6"):
        return _read_pnm(data, path)
    if data[:4] == b"F32 ":
        return _read_f32(data, path)
    raise UnsupportedFormatError(f"{path}: unrecognized magic {data[:4]!r}")


def write_image(path, mc, maxval: int = 255) -> None:
    """Write an image stack; the extension picks the format.

    ``.f32`` writes the raw float format; ``.pgm``/``.ppm`` write binary
    PNM at the given maxval (255 or 65535), clamping to [0, 1] first.
    """
    mc = as_multichannel(mc)
    name = str(path).lower()
    if name.endswith(".f32"):
        _write_f32(path, mc)
    elif name.endswith(".pgm") or name.endswith(".ppm"):
        _write_pnm(path, mc, name.endswith(".ppm"), maxval)
    else:
        raise UnsupportedFormatError(f"{path}: cannot infer format from extension")


def _write_f32(path, mc):
    c, h, w = mc.shape
    with open(path, "wb") as fh:
        fh.write(f"F32 {w} {h} {c}\n".encode("ascii"))
        fh.write(np.ascontiguousarray(mc, dtype="<f4").tobytes())


def _write_pnm(path, mc, color, maxval):
    if maxval not in (255, 65535):
        raise ValueError(f"maxval must be 255 or 65535, got {maxval}")
    c, h, w = mc.shape
    if color and c != 3:
        raise ValueError(f"PPM requires 3 channels, got {c}")
    if not color and c != 1:
        raise ValueError(f"PGM requires 1 channel, got {c}")
    magic = b"P6" if color else b"P5"
    q = np.rint(np.clip(mc, 0.0, 1.0) * maxval)
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    samples = np.moveaxis(q, 0, 2).astype(dtype)
    with open(path, "wb") as fh:
        fh.write(magic + f"\n{w} {h}\n{maxval}\n".encode("ascii"))
        fh.write(np.ascontiguousarray(samples).tobytes())


def read_kernel(path) -> np.ndarray:
    """Read a convolution kernel from the ASCII ``K <rows> <cols>`` format."""
    with open(path, "r", encoding="ascii") as fh:
        tokens = fh.read().split()
    if len(tokens) < 3 or tokens[0] != "K":
        raise MalformedHeaderError(f"{path}: expected 'K <rows> <cols>' header")
    try:
        rows, cols = int(tokens[1]), int(tokens[2])
        entries = np.array([float(t) for t in tokens[3:]], dtype=np.float64)
    except ValueError:
        raise MalformedHeaderError(f"{path}: non-numeric kernel field") from None
    if rows <= 0 or cols <= 0:
        raise MalformedHeaderError(f"{path}: bad kernel dimensions")
    if entries.size != rows * cols:
        raise TruncatedDataError(
            f"{path}: expected {rows * cols} entries, found {entries.size}"
        )
    return entries.reshape(rows, cols)


def write_kernel(path, kernel) -> None:
    kernel = np.asarray(kernel, dtype=np.float64)
    rows, cols = kernel.shape
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"K {rows} {cols}\n")
        for row in kernel:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def write_selection(path, sel: SelectionOperator) -> None:
    """Serialize a selection operator (debug format)."""
    h, w = sel.shape
    with open(path, "wb") as fh:
        fh.write(f"QSEL {w} {h}\n".encode("ascii"))
        fh.write(np.ascontiguousarray(sel.source_index, dtype="<i8").tobytes())


def read_selection(path) -> SelectionOperator:
    with open(path, "rb") as fh:
        data = fh.read()
    nl = data.find(b"\n")
    if nl < 0 or not data.startswith(b"QSEL "):
        raise MalformedHeaderError(f"{path}: expected 'QSEL <w> <h>' header")
    fields = data[:nl].split()
    try:
        w, h = int(fields[1]), int(fields[2])
    except (IndexError, ValueError):
        raise MalformedHeaderError(f"{path}: bad QSEL header") from None
    need = w * h * 8
    payload = data[nl + 1 :]
    if len(payload) < need:
        raise TruncatedDataError(f"{path}: expected {need} payload bytes")
    idx = np.frombuffer(payload[:need], dtype="<i8")
    return SelectionOperator(source_index=idx.copy(), shape=(h, w))
