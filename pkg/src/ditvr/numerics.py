"""Frame container and the small numerical kernels everything else builds on.

All pixel math runs in float64. Values are quantized to 8-bit only when a
frame crosses a file boundary, and noise is never clamped; clamping to [0, 1]
happens once, at the end of a restoration pipeline.

Coordinate convention used throughout the package: ``u`` is the column index
(x, grows rightward), ``v`` is the row index (y, grows downward). Arrays are
indexed ``[channel, v, u]``. A flow displacement ``(du, dv)`` is added
componentwise to ``(u, v)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Frame",
    "add_gaussian_noise",
    "avg_pool_downsample",
    "bilinear_warp",
    "clamp01",
    "frame_like",
    "pseudo_inverse_upsample",
]


@dataclass(frozen=True)
class Frame:
    """A single image: float64 pixels of shape (channels, height, width).

    Channels is 1 (gray) or 3 (RGB). Pixel values must be finite but are not
    required to sit inside [0, 1]; intermediate results (noisy frames,
    diffusion states) routinely leave that range.
    """

    pixels: np.ndarray

    def __post_init__(self) -> None:
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 3:
            raise ValueError(f"expected (channels, height, width), got shape {px.shape}")
        if px.shape[0] not in (1, 3):
            raise ValueError(f"channels must be 1 or 3, got {px.shape[0]}")
        if px.shape[1] < 1 or px.shape[2] < 1:
            raise ValueError(f"empty frame: shape {px.shape}")
        if not np.all(np.isfinite(px)):
            raise ValueError("frame contains non-finite values")
        object.__setattr__(self, "pixels", px)

    @property
    def channels(self) -> int:
        return self.pixels.shape[0]

    @property
    def height(self) -> int:
        return self.pixels.shape[1]

    @property
    def width(self) -> int:
        return self.pixels.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.pixels.shape


def frame_like(frame: Frame, pixels: np.ndarray) -> Frame:
    """Wrap ``pixels`` as a Frame, asserting it matches ``frame``'s shape."""
    px = np.asarray(pixels, dtype=np.float64)
    if px.shape != frame.shape:
        raise ValueError(f"shape {px.shape} does not match {frame.shape}")
    return Frame(px)


def clamp01(frame: Frame) -> Frame:
    return Frame(np.clip(frame.pixels, 0.0, 1.0))


def _sample_bilinear(plane: np.ndarray, su: np.ndarray, sv: np.ndarray) -> np.ndarray:
    """Bilinear sample of a 2-D plane at continuous (su, sv); edge-clamped."""
    h, w = plane.shape
    su = np.clip(su, 0.0, w - 1.0)
    sv = np.clip(sv, 0.0, h - 1.0)
    u0 = np.floor(su).astype(np.int64)
    v0 = np.floor(sv).astype(np.int64)
    u1 = np.minimum(u0 + 1, w - 1)
    v1 = np.minimum(v0 + 1, h - 1)
    fu = su - u0
    fv = sv - v0
    top = plane[v0, u0] * (1.0 - fu) + plane[v0, u1] * fu
    bot = plane[v1, u0] * (1.0 - fu) + plane[v1, u1] * fu
    return top * (1.0 - fv) + bot * fv


def bilinear_warp(frame: Frame, flow) -> tuple[Frame, np.ndarray]:
    """Pull-warp a frame through a flow field.

    output(u, v) = input((u, v) + flow(u, v)), sampled bilinearly. Source
    positions outside the image are edge-clamped, and the returned boolean
    mask is False wherever the source position left the valid interpolation
    domain [0, W-1] x [0, H-1] or the flow itself was marked invalid.

    Returns (warped frame, validity mask of shape (height, width)).
    """
    h, w = frame.height, frame.width
    if (flow.height, flow.width) != (h, w):
        raise ValueError(
            f"flow grid {(flow.height, flow.width)} does not match frame {(h, w)}"
        )
    uu, vv = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    su = uu + flow.du
    sv = vv + flow.dv
    valid = (
        (su >= 0.0)
        & (su <= w - 1.0)
        & (sv >= 0.0)
        & (sv <= h - 1.0)
        & flow.valid
    )
    out = np.empty_like(frame.pixels)
    for c in range(frame.channels):
        out[c] = _sample_bilinear(frame.pixels[c], su, sv)
    return Frame(out), valid


def avg_pool_downsample(frame: Frame, factor: int) -> Frame:
    """Average-pool by an integer factor; dimensions must divide evenly."""
    if factor < 1:
        raise ValueError(f"factor must be >= 1, got {factor}")
    c, h, w = frame.shape
    if h % factor or w % factor:
        raise ValueError(f"frame {h}x{w} not divisible by factor {factor}")
    px = frame.pixels.reshape(c, h // factor, factor, w // factor, factor)
    return Frame(px.mean(axis=(2, 4)))


def pseudo_inverse_upsample(frame: Frame, factor: int) -> Frame:
    """Nearest-replication upsample: the pseudo-inverse of average pooling.

    Pooling a replicated image recovers the original exactly, which is the
    A(A^+(y)) = y identity the samplers rely on.
    """
    if factor < 1:
        raise ValueError(f"factor must be >= 1, got {factor}")
    px = np.repeat(np.repeat(frame.pixels, factor, axis=1), factor, axis=2)
    return Frame(px)


def add_gaussian_noise(frame: Frame, sigma: float, seed: int) -> Frame:
    """Add seeded i.i.d. Gaussian noise with standard deviation ``sigma``.

    The generator is numpy's default PCG64 stream, so a (frame, sigma, seed)
    triple always produces the same noisy frame. The result is intentionally
    not clamped.
    """
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(frame.shape)
    return Frame(frame.pixels + sigma * noise)
