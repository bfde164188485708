"""Dictionary persistence and image file handling.

Dictionaries travel in a small binary container: the magic bytes
"CSSD", a 16-bit version, three 32-bit counts (modalities N, filters
K, filter side q), then N*K*q*q little-endian float64 filter values
in (modality, filter, row, column) order. Loading validates the
magic, the version, the payload length, and the unit-ball constraint
on every filter.

Images are read from PNG (via Pillow) and binary PGM/PPM files, and
normalized to [0, 1] floats: grayscale files become (H, W) planes and
color files (H, W, 3) arrays. Saving quantizes to 8 bits with
round-half-away-from-zero.
"""

import re
import struct

import numpy as np
from PIL import Image

from .cdl import Dictionary, DictionarySet

DICT_MAGIC = b"CSSD"
DICT_VERSION = 1
_HEADER = struct.Struct("<4sHIII")


class DictFormatError(Exception):
    """Raised when a dictionary file is malformed."""


def save_dict(dicts, path):
    """Write a dictionary set (or a single dictionary) to a file."""
    if isinstance(dicts, Dictionary):
        dicts = DictionarySet((dicts,))
    n, k, q = len(dicts), dicts.num_filters, dicts.filter_size
    payload = np.stack([d.filters for d in dicts.dictionaries])
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(DICT_MAGIC, DICT_VERSION, n, k, q))
        fh.write(np.ascontiguousarray(payload, dtype="<f8").tobytes())


def load_dict(path):
    """Read a dictionary set, validating structure and filter norms."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise DictFormatError(
            f"file too short for the {_HEADER.size}-byte header"
        )
    magic, version, n, k, q = _HEADER.unpack_from(raw)
    if magic != DICT_MAGIC:
        raise DictFormatError(f"bad magic {magic!r}, expected {DICT_MAGIC!r}")
    if version != DICT_VERSION:
        raise DictFormatError(
            f"unsupported version {version}, expected {DICT_VERSION}"
        )
    if min(n, k, q) < 1:
        raise DictFormatError(f"bad dimensions N={n} K={k} q={q}")
    expected = _HEADER.size + n * k * q * q * 8
    if len(raw) != expected:
        raise DictFormatError(
            f"payload length {len(raw) - _HEADER.size} does not match "
            f"header (expected {expected - _HEADER.size} bytes)"
        )
    flat = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    filters = flat.reshape(n, k, q, q).astype(np.float64)
    norms = np.linalg.norm(filters.reshape(n, k, -1), axis=2)
    if np.any(norms > 1.0 + 1e-9):
        bad = np.unravel_index(np.argmax(norms), norms.shape)
        raise DictFormatError(
            f"filter {bad[1]} of modality {bad[0]} has norm "
            f"{norms[bad]:.12f} > 1"
        )
    return DictionarySet(tuple(Dictionary(filters[m]) for m in range(n)))


def _normalize(arr, maxval):
    return np.asarray(arr, dtype=np.float64) / float(maxval)


_PNM_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n)*(\S+)")


def _pnm_tokens(raw, count):
    """First header tokens of a PNM file, skipping comments."""
    tokens, pos = [], 0
    while len(tokens) < count:
        m = _PNM_TOKEN.match(raw, pos)
        if not m:
            raise OSError("truncated PNM header")
        tokens.append(m.group(1))
        pos = m.end()
    return tokens, pos


def _load_pnm(raw):
    tokens, pos = _pnm_tokens(raw, 4)
    kind = tokens[0]
    if kind not in (b"P5", b"P6"):
        raise OSError(f"unsupported PNM type {kind!r}")
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise OSError("malformed PNM header") from None
    if not 0 < maxval < 65536:
        raise OSError(f"bad PNM maxval {maxval}")
    channels = 3 if kind == b"P6" else 1
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    count = w * h * channels
    data = raw[pos + 1:pos + 1 + count * dtype.itemsize]
    if len(data) != count * dtype.itemsize:
        raise OSError("truncated PNM pixel data")
    arr = np.frombuffer(data, dtype=dtype).reshape(
        (h, w) if channels == 1 else (h, w, 3)
    )
    return _normalize(arr, maxval)


def load_image(path):
    """Image file as float64 in [0, 1]: (H, W) for grayscale,
    (H, W, 3) for color."""
    with open(path, "rb") as fh:
        head = fh.read(2)
    if head in (b"P5", b"P6"):
        with open(path, "rb") as fh:
            return _load_pnm(fh.read())
    with Image.open(path) as img:
        if img.mode in ("P", "RGBA", "CMYK", "LA"):
            img = img.convert("RGB")
        if img.mode == "L":
            return _normalize(img, 255)
        if img.mode in ("I", "I;16"):
            return _normalize(img, 65535)
        if img.mode == "RGB":
            return _normalize(img, 255)
        raise OSError(f"unsupported image mode {img.mode}")


def _quantize(img):
    img = np.asarray(img, dtype=np.float64)
    return np.clip(np.floor(255.0 * img + 0.5), 0, 255).astype(np.uint8)


def save_image(img, path):
    """Write a plane or (H, W, 3) image as 8-bit PNG, PGM, or PPM,
    chosen by file extension."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim not in (2, 3) or (img.ndim == 3 and img.shape[2] != 3):
        raise ValueError(f"cannot save image of shape {img.shape}")
    data = _quantize(img)
    name = str(path).lower()
    if name.endswith(".png"):
        Image.fromarray(data, mode="L" if data.ndim == 2 else "RGB").save(path)
    elif name.endswith(".pgm") and data.ndim == 2:
        with open(path, "wb") as fh:
            fh.write(b"P5\n%d %d\n255\n" % (data.shape[1], data.shape[0]))
            fh.write(data.tobytes())
    elif name.endswith(".ppm") and data.ndim == 3:
        with open(path, "wb") as fh:
            fh.write(b"P6\n%d %d\n255\n" % (data.shape[1], data.shape[0]))
            fh.write(data.tobytes())
    else:
        raise OSError(f"unsupported output format for {path}")
