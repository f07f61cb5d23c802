"""Binary file formats: coherency rasters, label rasters, indexed PNG export.

Coherency (.pt3): magic b"PT3\\0", u32le height, u32le width, then nine
float32le planes in core.PLANE_NAMES order, each row-major.  Labels
(.plb): magic b"PLB\\0", u32le height, u32le width, u8 class count, then
height*width label bytes row-major (0 = unlabeled).  Saving then loading
reproduces the in-memory objects exactly.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from .core import CoherencyImage, LabelMap

MAGIC_PT3 = b"PT3\0"
MAGIC_PLB = b"PLB\0"


class FormatError(ValueError):
    """Raised when a file does not conform to its declared layout."""


def _read_exact(path, expected_magic):
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12 or blob[:4] != expected_magic:
        raise FormatError(f"{path}: bad magic, expected {expected_magic!r}")
    height, width = struct.unpack_from("<II", blob, 4)
    if height < 1 or width < 1:
        raise FormatError(f"{path}: empty raster {height}x{width}")
    return blob, height, width


def save_coherency(image: CoherencyImage, path) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC_PT3)
        fh.write(struct.pack("<II", image.height, image.width))
        fh.write(np.ascontiguousarray(image.planes, dtype="<f4").tobytes())


def load_coherency(path) -> CoherencyImage:
    blob, height, width = _read_exact(path, MAGIC_PT3)
    need = 12 + 9 * height * width * 4
    if len(blob) != need:
        raise FormatError(f"{path}: expected {need} bytes, found {len(blob)}")
    planes = np.frombuffer(blob, dtype="<f4", offset=12).reshape(9, height, width)
    # CoherencyImage validation rejects non-finite or non-PSD payloads
    return CoherencyImage(planes.copy())


def save_labels(label_map: LabelMap, path) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC_PLB)
        fh.write(struct.pack("<IIB", label_map.height, label_map.width,
                             label_map.n_classes))
        fh.write(np.ascontiguousarray(label_map.labels).tobytes())


def load_labels(path) -> LabelMap:
    blob, height, width = _read_exact(path, MAGIC_PLB)
    need = 13 + height * width
    if len(blob) != need:
        raise FormatError(f"{path}: expected {need} bytes, found {len(blob)}")
    n_classes = blob[12]
    labels = np.frombuffer(blob, dtype=np.uint8, offset=13).reshape(height, width)
    return LabelMap(labels.copy(), n_classes)


def _png_chunk(tag: bytes, payload: bytes) -> bytes:
    crc = zlib.crc32(tag + payload) & 0xFFFFFFFF
    return struct.pack(">I", len(payload)) + tag + payload + struct.pack(">I", crc)


def write_indexed_png(path, indices: np.ndarray, palette) -> None:
    """Write an 8-bit indexed-color PNG with deterministic bytes.

    indices: (H, W) uint8 palette indices.  palette: sequence of (r, g, b)
    triples; entry 0 always renders black.  Same inputs produce the same
    file byte for byte.
    """
    idx = np.asarray(indices)
    if idx.ndim != 2 or idx.dtype != np.uint8:
        raise ValueError("indices must be a 2-d uint8 array")
    if len(palette) < int(idx.max(initial=0)) + 1:
        raise ValueError("palette has fewer entries than the largest index + 1")
    height, width = idx.shape
    plte = bytearray()
    for k, rgb in enumerate(palette):
        r, g, b = ((0, 0, 0) if k == 0 else rgb)
        plte += bytes((r, g, b))
    raw = b"".join(b"\x00" + row.tobytes() for row in np.ascontiguousarray(idx))
    ihdr = struct.pack(">IIBBBBB", width, height, 8, 3, 0, 0, 0)
    with open(path, "wb") as fh:
        fh.write(b"\x89PNG\r\n\x1a\n")
        fh.write(_png_chunk(b"IHDR", ihdr))
        fh.write(_png_chunk(b"PLTE", bytes(plte)))
        fh.write(_png_chunk(b"IDAT", zlib.compress(raw, 6)))
        fh.write(_png_chunk(b"IEND", b""))
