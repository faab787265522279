"""Frame file I/O: binary PPM (P6, 8-bit) and optionally PNG.

Quantization to 8 bits happens here and only here. Writing clamps to [0, 1]
first, scales by 255 and rounds half up; reading divides by 255. Grayscale
frames are replicated to three channels on write, so a round trip through
disk always yields a 3-channel frame.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .numerics import Frame

__all__ = ["frame_to_u8", "read_frame", "read_ppm", "u8_to_frame", "write_ppm", "write_png"]


def frame_to_u8(frame: Frame) -> np.ndarray:
    """Quantize to (height, width, 3) uint8."""
    px = np.clip(frame.pixels, 0.0, 1.0)
    if px.shape[0] == 1:
        px = np.repeat(px, 3, axis=0)
    return np.floor(px * 255.0 + 0.5).astype(np.uint8).transpose(1, 2, 0)


def u8_to_frame(arr: np.ndarray) -> Frame:
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected (height, width, 3) uint8, got {arr.shape}")
    return Frame(arr.astype(np.float64).transpose(2, 0, 1) / 255.0)


def write_ppm(frame: Frame, path: str | Path) -> None:
    arr = frame_to_u8(frame)
    h, w = arr.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(arr.tobytes())


def read_ppm(path: str | Path) -> Frame:
    with open(path, "rb") as fh:
        data = fh.read()
    # header: magic, width, height, maxval, then a single whitespace byte
    fields: list[bytes] = []
    pos = 0
    while len(fields) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    pos += 1
    if fields[0] != b"P6":
        raise ValueError(f"not a binary PPM (P6) file: magic {fields[0]!r}")
    w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 255:
        raise ValueError(f"only 8-bit PPM supported, maxval {maxval}")
    raw = np.frombuffer(data, dtype=np.uint8, count=w * h * 3, offset=pos)
    return u8_to_frame(raw.reshape(h, w, 3).copy())


def write_png(frame: Frame, path: str | Path) -> None:
    Image.fromarray(frame_to_u8(frame), mode="RGB").save(path, format="PNG")


def read_frame(path: str | Path) -> Frame:
    """Read a frame by extension: .ppm or .png."""
    p = Path(path)
    if p.suffix.lower() == ".ppm":
        return read_ppm(p)
    if p.suffix.lower() == ".png":
        arr = np.asarray(Image.open(p).convert("RGB"))
        return u8_to_frame(arr)
    raise ValueError(f"unsupported frame format: {p.suffix}")
