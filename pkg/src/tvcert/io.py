"""FLD float fields and binary PGM images.

FLD: an ASCII header ``FLD <H> <W> <C>\\n`` followed by ``H*W*C``
little-endian float64 values, row-major with the channel index fastest.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np


class FormatError(ValueError):
    """Malformed input file; the message names the byte offset."""


def write_fld(path, array: np.ndarray) -> None:
    a = np.asarray(array, dtype="<f8")
    if a.ndim == 2:
        a = a[..., None]
    if a.ndim != 3:
        raise ValueError(f"FLD holds 2-D fields with channels, got shape {a.shape}")
    H, W, C = a.shape
    with open(path, "wb") as fh:
        fh.write(f"FLD {H} {W} {C}\n".encode("ascii"))
        fh.write(np.ascontiguousarray(a).tobytes())


def parse_fld(data: bytes, name: str = "<bytes>") -> np.ndarray:
    nl = data.find(b"\n")
    if nl < 0:
        raise FormatError(f"{name}: byte {len(data)}: header line not terminated")
    header = data[:nl]
    parts = header.split(b" ")
    if not parts or parts[0] != b"FLD":
        raise FormatError(f"{name}: byte 0: expected magic 'FLD', found {header[:3]!r}")
    if len(parts) != 4:
        raise FormatError(f"{name}: byte {nl}: header needs 'FLD H W C', found {len(parts)} fields")
    dims = []
    offset = len(parts[0]) + 1
    for label, tok in zip("HWC", parts[1:]):
        if not tok.isdigit() or int(tok) == 0:
            raise FormatError(f"{name}: byte {offset}: {label} must be a positive integer, found {tok!r}")
        dims.append(int(tok))
        offset += len(tok) + 1
    H, W, C = dims
    need = H * W * C * 8
    body = data[nl + 1 :]
    if len(body) != need:
        raise FormatError(
            f"{name}: byte {nl + 1 + min(len(body), need)}: expected {need} payload bytes, found {len(body)}"
        )
    a = np.frombuffer(body, dtype="<f8").reshape(H, W, C).astype(float)
    return a[..., 0] if C == 1 else a


def read_fld(path) -> np.ndarray:
    p = Path(path)
    return parse_fld(p.read_bytes(), str(p))


def _pgm_tokens(data: bytes, count: int, name: str):
    """Read ``count`` whitespace-separated header tokens, skipping comments."""
    pos = 0
    tokens = []
    while len(tokens) < count:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise FormatError(f"{name}: byte {pos}: truncated PGM header")
        tokens.append((data[start:pos], start))
    if pos >= len(data) or not data[pos : pos + 1].isspace():
        raise FormatError(f"{name}: byte {pos}: missing whitespace after PGM header")
    return tokens, pos + 1


def parse_pgm(data: bytes, name: str = "<bytes>") -> np.ndarray:
    """Binary PGM (P5) with maxval 255 or 65535, rescaled to ``[0, 1]``."""
    tokens, body_start = _pgm_tokens(data, 4, name)
    (magic, _), *rest = tokens
    if magic != b"P5":
        raise FormatError(f"{name}: byte 0: expected magic 'P5', found {magic!r}")
    vals = []
    for label, (tok, off) in zip(("width", "height", "maxval"), rest):
        if not tok.isdigit() or int(tok) == 0:
            raise FormatError(f"{name}: byte {off}: {label} must be a positive integer, found {tok!r}")
        vals.append(int(tok))
    W, H, maxval = vals
    if maxval not in (255, 65535):
        raise FormatError(f"{name}: byte {rest[2][1]}: maxval must be 255 or 65535, found {maxval}")
    dtype = np.uint8 if maxval == 255 else np.dtype(">u2")
    need = H * W * np.dtype(dtype).itemsize
    body = data[body_start:]
    if len(body) < need:
        raise FormatError(
            f"{name}: byte {body_start + len(body)}: expected {need} pixel bytes, found {len(body)}"
        )
    img = np.frombuffer(body[:need], dtype=dtype).reshape(H, W)
    return img.astype(float) / maxval


def read_pgm(path) -> np.ndarray:
    p = Path(path)
    return parse_pgm(p.read_bytes(), str(p))


def write_pgm(path, image: np.ndarray, maxval: int = 255) -> None:
    img = np.clip(np.asarray(image, float), 0.0, 1.0)
    H, W = img.shape
    dtype = np.uint8 if maxval == 255 else np.dtype(">u2")
    with open(path, "wb") as fh:
        fh.write(f"P5\n{W} {H}\n{maxval}\n".encode("ascii"))
        fh.write(np.round(img * maxval).astype(dtype).tobytes())


def read_image(path) -> np.ndarray:
    """FLD or PGM, chosen by the magic bytes."""
    p = Path(path)
    data = p.read_bytes()
    if data.startswith(b"FLD"):
        return parse_fld(data, str(p))
    if data.startswith(b"P5"):
        return parse_pgm(data, str(p))
    raise FormatError(f"{p}: byte 0: unknown magic {data[:3]!r} (expected FLD or P5)")
