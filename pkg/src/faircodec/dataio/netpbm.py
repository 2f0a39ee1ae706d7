"""Binary PGM (P5) / PPM (P6) reading and writing."""
from __future__ import annotations

import numpy as np


class ImageFormatError(ValueError):
    pass


def _tokens(data, count):
    """First ``count`` header tokens and the offset of the pixel data."""
    out = []
    i = 0
    n = len(data)
    while len(out) < count:
        while i < n and data[i:i + 1].isspace():
            i += 1
        if i < n and data[i:i + 1] == b"#":
            while i < n and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        start = i
        while i < n and not data[i:i + 1].isspace() and data[i:i + 1] != b"#":
            i += 1
        if start == i:
            raise ImageFormatError("truncated header")
        out.append(data[start:i])
    if i >= n or not data[i:i + 1].isspace():
        raise ImageFormatError("malformed header")
    return out, i + 1


def decode_netpbm(data):
    """Decode P5/P6 bytes into a float32 (H, W, C) array scaled to [0, 1]."""
    toks, off = _tokens(data, 4)
    magic = toks[0]
    if magic not in (b"P5", b"P6"):
        raise ImageFormatError(f"unsupported magic {magic!r}; expected P5 or P6")
    try:
        w, h, maxval = (int(t) for t in toks[1:])
    except ValueError:
        raise ImageFormatError("non-numeric header field") from None
    if w <= 0 or h <= 0 or not 0 < maxval < 65536:
        raise ImageFormatError(f"invalid dimensions {w}x{h} / maxval {maxval}")
    c = 3 if magic == b"P6" else 1
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    need = w * h * c * dtype.itemsize
    pix = data[off:off + need]
    if len(pix) != need:
        raise ImageFormatError(f"pixel data has {len(pix)} bytes, expected {need}")
    arr = np.frombuffer(pix, dtype=dtype).reshape(h, w, c)
    if arr.max(initial=0) > maxval:
        raise ImageFormatError("pixel value exceeds maxval")
    return (arr.astype(np.float64) / maxval).astype(np.float32)


def encode_netpbm(image):
    """Encode a [0, 1] float image (H, W) / (H, W, 1) / (H, W, 3) as 8-bit P5/P6."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        img = img[..., None]
    h, w, c = img.shape
    if c not in (1, 3):
        raise ImageFormatError(f"cannot store {c} channels in PGM/PPM")
    q = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    magic = b"P6" if c == 3 else b"P5"
    return magic + f"\n{w} {h}\n255\n".encode() + q.tobytes()


def read_netpbm(path):
    with open(path, "rb") as fh:
        return decode_netpbm(fh.read())


def write_netpbm(path, image):
    with open(path, "wb") as fh:
        fh.write(encode_netpbm(image))


def quantize8(image):
    """Values exactly representable in an 8-bit file."""
    q = np.clip(np.rint(np.asarray(image, dtype=np.float64) * 255.0), 0, 255)
    return (q / 255.0).astype(np.float32)
