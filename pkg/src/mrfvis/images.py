"""Minimal raster I/O: binary PPM/PGM always, PNG when Pillow is present.

PPM (P6) bytes are the deterministic test surface for every rendered
image; PNG output is a convenience wrapper around the same pixel data.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import FileFormatError


def ppm_bytes(pixels: np.ndarray) -> bytes:
    """Encode an (H, W, 3) uint8 array as binary PPM (P6)."""
    pixels = np.asarray(pixels)
    if pixels.ndim != 3 or pixels.shape[2] != 3 or pixels.dtype != np.uint8:
        raise FileFormatError(f"expected (H, W, 3) uint8 pixels, got {pixels.shape} {pixels.dtype}")
    h, w = pixels.shape[:2]
    return b"P6\n%d %d\n255\n" % (w, h) + pixels.tobytes(order="C")


def write_ppm(path: str | Path, pixels: np.ndarray) -> None:
    Path(path).write_bytes(ppm_bytes(pixels))


def _read_netpbm_header(blob: bytes, magic: bytes) -> tuple[int, int, int, int]:
    if blob[:2] != magic:
        raise FileFormatError(f"bad magic {blob[:2]!r}, expected {magic!r}")
    fields = []
    pos = 2
    while len(fields) < 3:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if blob[pos : pos + 1] == b"#":
            while pos < len(blob) and blob[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        fields.append(int(blob[start:pos]))
    pos += 1  # single whitespace after maxval
    w, h, maxval = fields
    if maxval != 255:
        raise FileFormatError(f"only 8-bit images supported, maxval={maxval}")
    return w, h, maxval, pos


def read_ppm(path: str | Path) -> np.ndarray:
    blob = Path(path).read_bytes()
    w, h, _, pos = _read_netpbm_header(blob, b"P6")
    data = np.frombuffer(blob, dtype=np.uint8, count=w * h * 3, offset=pos)
    return data.reshape(h, w, 3).copy()


def read_pgm(path: str | Path) -> np.ndarray:
    blob = Path(path).read_bytes()
    w, h, _, pos = _read_netpbm_header(blob, b"P5")
    data = np.frombuffer(blob, dtype=np.uint8, count=w * h, offset=pos)
    return data.reshape(h, w).copy()


def write_pgm(path: str | Path, pixels: np.ndarray) -> None:
    pixels = np.asarray(pixels)
    if pixels.ndim != 2 or pixels.dtype != np.uint8:
        raise FileFormatError(f"expected (H, W) uint8 pixels, got {pixels.shape} {pixels.dtype}")
    h, w = pixels.shape
    Path(path).write_bytes(b"P5\n%d %d\n255\n" % (w, h) + pixels.tobytes(order="C"))


def png_available() -> bool:
    try:
        import PIL.Image  # noqa: F401

        return True
    except ImportError:
        return False


def write_png(path: str | Path, pixels: np.ndarray) -> None:
    try:
        from PIL import Image
    except ImportError as exc:
        raise FileFormatError("PNG output requires Pillow (install mrfvis[png])") from exc
    Image.fromarray(np.asarray(pixels)).save(str(path), format="PNG")


def read_label_image(path: str | Path) -> np.ndarray:
    """Read an 8-bit label image (PGM or PNG) as (H, W) uint8."""
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        return read_pgm(path)
    if path.suffix.lower() == ".png":
        try:
            from PIL import Image
        except ImportError as exc:
            raise FileFormatError("PNG input requires Pillow (install mrfvis[png])") from exc
        img = Image.open(str(path))
        if img.mode != "L":
            img = img.convert("L")
        return np.asarray(img, dtype=np.uint8)
    raise FileFormatError(f"unsupported label image format: {path.suffix!r} (use .pgm or .png)")
