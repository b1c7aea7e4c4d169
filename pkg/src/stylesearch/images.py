"""Image files and synthetic test images.

Images travel through the package as float64 CHW arrays in [0, 1].
The PNG side is a small self-contained codec: 8-bit grayscale or RGB,
no palette, no alpha, no interlacing. Decoding handles all five scanline
filters; encoding always writes filter 0, which keeps files byte-stable
across zlib versions at a small size cost. Binary PPM (P6) is supported
as the no-compression escape hatch.
"""

from __future__ import annotations

import os
import struct
import zlib

import numpy as np

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


def _chunk(tag: bytes, payload: bytes) -> bytes:
    crc = zlib.crc32(tag + payload) & 0xFFFFFFFF
    return struct.pack(">I", len(payload)) + tag + payload + struct.pack(">I", crc)


def _quantize(image) -> np.ndarray:
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3 or img.shape[0] not in (1, 3):
        raise ValueError("expected a CHW image with 1 or 3 channels")
    return (np.clip(img, 0.0, 1.0) * 255.0).round().astype(np.uint8)


def save_png(path, image) -> None:
    """Write a [0,1] CHW image as an 8-bit PNG (grayscale or RGB)."""
    q = _quantize(image)
    c, h, w = q.shape
    color_type = 0 if c == 1 else 2
    raster = np.moveaxis(q, 0, 2)  # HWC
    lines = []
    for row in raster:
        lines.append(b"\x00" + row.tobytes())
    ihdr = struct.pack(">IIBBBBB", w, h, 8, color_type, 0, 0, 0)
    data = zlib.compress(b"".join(lines), 6)
    with open(path, "wb") as fh:
        fh.write(PNG_SIGNATURE)
        fh.write(_chunk(b"IHDR", ihdr))
        fh.write(_chunk(b"IDAT", data))
        fh.write(_chunk(b"IEND", b""))


def _paeth(a: int, b: int, c: int) -> int:
    p = a + b - c
    pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
    if pa <= pb and pa <= pc:
        return a
    if pb <= pc:
        return b
    return c


def _unfilter(raw: bytes, h: int, w: int, nch: int) -> np.ndarray:
    stride = w * nch
    if len(raw) != h * (stride + 1):
        raise ValueError("PNG raster size does not match header")
    out = np.zeros((h, stride), dtype=np.uint8)
    pos = 0
    for y in range(h):
        ftype = raw[pos]
        pos += 1
        line = bytearray(raw[pos:pos + stride])
        pos += stride
        prev = out[y - 1] if y > 0 else np.zeros(stride, dtype=np.uint8)
        if ftype == 0:
            pass
        elif ftype == 1:  # Sub
            for i in range(nch, stride):
                line[i] = (line[i] + line[i - nch]) & 0xFF
        elif ftype == 2:  # Up
            for i in range(stride):
                line[i] = (line[i] + int(prev[i])) & 0xFF
        elif ftype == 3:  # Average
            for i in range(stride):
                left = line[i - nch] if i >= nch else 0
                line[i] = (line[i] + ((left + int(prev[i])) >> 1)) & 0xFF
        elif ftype == 4:  # Paeth
            for i in range(stride):
                left = line[i - nch] if i >= nch else 0
                above_left = int(prev[i - nch]) if i >= nch else 0
                line[i] = (line[i] + _paeth(left, int(prev[i]), above_left)) & 0xFF
        else:
            raise ValueError(f"unknown PNG filter type {ftype}")
        out[y] = np.frombuffer(bytes(line), dtype=np.uint8)
    return out


def load_png(path) -> np.ndarray:
    """Read an 8-bit grayscale or RGB PNG into a [0,1] CHW float array.
    Grayscale images come back with a single channel."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != PNG_SIGNATURE:
        raise ValueError(f"{path}: not a PNG file")
    pos = 8
    header = None
    idat = []
    while pos < len(blob):
        if pos + 8 > len(blob):
            raise ValueError(f"{path}: truncated chunk header")
        (length,) = struct.unpack(">I", blob[pos:pos + 4])
        tag = blob[pos + 4:pos + 8]
        payload = blob[pos + 8:pos + 8 + length]
        if len(payload) != length or pos + 12 + length > len(blob):
            raise ValueError(f"{path}: truncated chunk body")
        (crc,) = struct.unpack(">I", blob[pos + 8 + length:pos + 12 + length])
        if crc != (zlib.crc32(tag + payload) & 0xFFFFFFFF):
            raise ValueError(f"{path}: bad CRC in {tag!r} chunk")
        pos += 12 + length
        if tag == b"IHDR":
            header = struct.unpack(">IIBBBBB", payload)
        elif tag == b"IDAT":
            idat.append(payload)
        elif tag == b"IEND":
            break
    if header is None:
        raise ValueError(f"{path}: missing IHDR")
    w, h, depth, color, comp, filt, interlace = header
    if depth != 8:
        raise ValueError(f"{path}: only 8-bit PNGs are supported")
    if color not in (0, 2):
        raise ValueError(f"{path}: unsupported color type {color} "
                         "(only grayscale and truecolor)")
    if comp != 0 or filt != 0:
        raise ValueError(f"{path}: nonstandard compression or filter method")
    if interlace != 0:
        raise ValueError(f"{path}: interlaced PNGs are not supported")
    if not idat:
        raise ValueError(f"{path}: missing IDAT")
    nch = 1 if color == 0 else 3
    raw = zlib.decompress(b"".join(idat))
    raster = _unfilter(raw, h, w, nch).reshape(h, w, nch)
    return np.moveaxis(raster, 2, 0).astype(np.float64) / 255.0


def save_ppm(path, image) -> None:
    """Write a [0,1] CHW RGB image as binary PPM (P6)."""
    q = _quantize(image)
    if q.shape[0] == 1:
        q = np.repeat(q, 3, axis=0)
    c, h, w = q.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.moveaxis(q, 0, 2).tobytes())


def load_ppm(path) -> np.ndarray:
    """Read a binary PPM (P6) into a [0,1] CHW float array."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(b"P6"):
        raise ValueError(f"{path}: not a binary PPM")
    fields = []
    pos = 2
    while len(fields) < 3:
        while pos < len(blob) and blob[pos:pos + 1].isspace():
            pos += 1
        if blob[pos:pos + 1] == b"#":
            while pos < len(blob) and blob[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos:pos + 1].isspace():
            pos += 1
        fields.append(int(blob[start:pos]))
    pos += 1  # single whitespace after maxval
    w, h, maxval = fields
    if maxval != 255:
        raise ValueError(f"{path}: only maxval 255 PPMs are supported")
    if len(blob) - pos < w * h * 3:
        raise ValueError(f"{path}: truncated pixel data")
    data = np.frombuffer(blob, dtype=np.uint8, count=w * h * 3, offset=pos)
    return np.moveaxis(data.reshape(h, w, 3), 2, 0).astype(np.float64) / 255.0


def save_image(path, image) -> None:
    ext = os.path.splitext(str(path))[1].lower()
    if ext == ".png":
        save_png(path, image)
    elif ext == ".ppm":
        save_ppm(path, image)
    else:
        raise ValueError(f"unsupported image extension {ext!r}")


def load_image(path) -> np.ndarray:
    ext = os.path.splitext(str(path))[1].lower()
    if ext == ".png":
        return load_png(path)
    if ext == ".ppm":
        return load_ppm(path)
    raise ValueError(f"unsupported image extension {ext!r}")


def load_dir(directory):
    """All PNG/PPM images in a directory, sorted by file name.

    Returns (images, names) so callers can name files in error messages.
    """
    names = sorted(
        n for n in os.listdir(directory)
        if os.path.splitext(n)[1].lower() in (".png", ".ppm")
    )
    if not names:
        raise ValueError(f"no .png or .ppm images in {directory}")
    return [load_image(os.path.join(directory, n)) for n in names], names


def center_crop_multiple(image, multiple: int = 16):
    """Center-crop (C, H, W) so H and W become multiples of `multiple`.

    Returns (cropped, changed). Errors if either dimension is smaller
    than one multiple.
    """
    c, h, w = image.shape
    nh = (h // multiple) * multiple
    nw = (w // multiple) * multiple
    if nh == 0 or nw == 0:
        raise ValueError(f"image {h}x{w} is smaller than {multiple} on a side")
    if (nh, nw) == (h, w):
        return image, False
    top = (h - nh) // 2
    left = (w - nw) // 2
    return image[:, top:top + nh, left:left + nw], True


def synth_images(count: int, size: int, seed: int) -> list[np.ndarray]:
    """Deterministic synthetic RGB images: a random linear ramp per
    channel plus multi-scale colored noise, min-max scaled into [0, 1].

    Not photographs, but they have smooth regions, edges at several
    scales, and distinct channel statistics, which is what both the
    reconstruction and the style objectives exercise.
    """
    if size < 4 or size % 2:
        raise ValueError("size must be an even integer >= 4")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    yy, xx = np.mgrid[0:size, 0:size] / max(size - 1, 1)
    out = []
    for _ in range(count):
        img = np.zeros((3, size, size))
        for c in range(3):
            gx, gy = rng.uniform(-1.0, 1.0, size=2)
            img[c] = gx * xx + gy * yy + rng.uniform(0.0, 1.0)
        scale = 1
        while scale * 4 <= size:
            coarse = rng.standard_normal((3, size // scale, size // scale))
            amp = rng.uniform(0.05, 0.35) * scale / size * 4
            img += amp * np.repeat(np.repeat(coarse, scale, axis=1), scale, axis=2)
            scale *= 2
        lo, hi = img.min(), img.max()
        img = (img - lo) / (hi - lo) if hi > lo else np.full_like(img, 0.5)
        out.append(img)
    return out
