"""Synthetic clips with exact closed-form ground-truth flow.

Every pattern is a function over continuous world coordinates, and every
frame samples it through the inverse of that frame's motion, so the flow
between any two frames is known analytically rather than estimated. With
the default integer per-frame translation the ground-truth correspondences
land exactly on pixel centers.

Motion model, with R the rotation by ``omega`` radians about ``center`` and
``vel = (du, dv)`` pixels per frame: a world point w appears in frame f at
position R_f(w - c) + c + f*vel. Forward flow at p in frame f is therefore
R(p - f*vel - c) + c + (f+1)*vel - p, and the backward flow mirrors it with
the inverse rotation.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .flow import FlowField
from .numerics import Frame, add_gaussian_noise
from .sampler import DegradationOperator, make_operator

__all__ = [
    "SyntheticSpec",
    "degrade",
    "gen_synthetic",
    "gt_flow_fields",
]

PATTERNS = ("checker", "texture", "glyphs")
MOTIONS = ("translate", "rotate", "mixed")

# 5x7 digit bitmaps, one hex byte per row, MSB = leftmost of 5 columns.
_DIGIT_ROWS = {
    0: (0x70, 0x88, 0x98, 0xA8, 0xC8, 0x88, 0x70),
    1: (0x20, 0x60, 0x20, 0x20, 0x20, 0x20, 0x70),
    2: (0x70, 0x88, 0x08, 0x30, 0x40, 0x80, 0xF8),
    3: (0x70, 0x88, 0x08, 0x30, 0x08, 0x88, 0x70),
    4: (0x10, 0x30, 0x50, 0x90, 0xF8, 0x10, 0x10),
    5: (0xF8, 0x80, 0xF0, 0x08, 0x08, 0x88, 0x70),
    6: (0x30, 0x40, 0x80, 0xF0, 0x88, 0x88, 0x70),
    7: (0xF8, 0x08, 0x10, 0x20, 0x40, 0x40, 0x40),
    8: (0x70, 0x88, 0x88, 0x70, 0x88, 0x88, 0x70),
    9: (0x70, 0x88, 0x88, 0x78, 0x08, 0x10, 0x60),
}


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a synthetic clip; flows follow in closed form."""

    pattern: str = "texture"
    motion: str = "translate"
    num_frames: int = 8
    height: int = 64
    width: int = 64
    du: float = 1.0
    dv: float = 1.0
    omega: float = 0.0
    center: tuple[float, float] | None = None
    channels: int = 1
    seed: int = 0
    checker_cell: int = 8

    def __post_init__(self) -> None:
        if self.pattern not in PATTERNS:
            raise ValueError(f"pattern must be one of {PATTERNS}, got {self.pattern!r}")
        if self.motion not in MOTIONS:
            raise ValueError(f"motion must be one of {MOTIONS}, got {self.motion!r}")
        if self.num_frames < 2:
            raise ValueError(f"need at least 2 frames, got {self.num_frames}")
        if self.height < 1 or self.width < 1:
            raise ValueError(f"bad size {self.height}x{self.width}")
        if self.channels not in (1, 3):
            raise ValueError(f"channels must be 1 or 3, got {self.channels}")
        if self.checker_cell < 1:
            raise ValueError(f"checker_cell must be >= 1, got {self.checker_cell}")

    @property
    def centre_uv(self) -> tuple[float, float]:
        if self.center is not None:
            return self.center
        return ((self.width - 1) / 2.0, (self.height - 1) / 2.0)

    @property
    def velocity(self) -> tuple[float, float]:
        if self.motion == "rotate":
            return (0.0, 0.0)
        return (self.du, self.dv)

    @property
    def spin(self) -> float:
        if self.motion == "translate":
            return 0.0
        return self.omega


def _rotate(pu: np.ndarray, pv: np.ndarray, angle: float) -> tuple[np.ndarray, np.ndarray]:
    ca, sa = np.cos(angle), np.sin(angle)
    return ca * pu - sa * pv, sa * pu + ca * pv


def _world_of(spec: SyntheticSpec, pu: np.ndarray, pv: np.ndarray, f: int):
    """World coordinates seen at pixel positions (pu, pv) of frame f."""
    cu, cv = spec.centre_uv
    du, dv = spec.velocity
    wu, wv = _rotate(pu - f * du - cu, pv - f * dv - cv, -f * spec.spin)
    return wu + cu, wv + cv


def _position_in_frame(spec: SyntheticSpec, wu: np.ndarray, wv: np.ndarray, f: int):
    """Pixel position of world points (wu, wv) in frame f."""
    cu, cv = spec.centre_uv
    du, dv = spec.velocity
    pu, pv = _rotate(wu - cu, wv - cv, f * spec.spin)
    return pu + cu + f * du, pv + cv + f * dv


class _TexturePattern:
    """Smooth band-limited field: a seeded sum of low-frequency sinusoids.

    The top of the band sits above the 4x-pool Nyquist limit on purpose, so
    pooled observations of a moving clip carry frame-varying aliasing for
    the temporal machinery to resolve.
    """

    def __init__(self, seed: int, num_waves: int = 12, max_freq: float = 0.22):
        rng = np.random.default_rng(seed)
        angles = rng.uniform(0.0, 2.0 * np.pi, num_waves)
        freqs = rng.uniform(0.015, max_freq, num_waves)
        self.fu = np.cos(angles) * freqs
        self.fv = np.sin(angles) * freqs
        self.phase = rng.uniform(0.0, 2.0 * np.pi, num_waves)
        self.amp = rng.uniform(0.5, 1.0, num_waves)
        self.norm = self.amp.sum()

    def __call__(self, wu: np.ndarray, wv: np.ndarray) -> np.ndarray:
        acc = np.zeros_like(wu, dtype=np.float64)
        for fu, fv, ph, a in zip(self.fu, self.fv, self.phase, self.amp):
            acc += a * np.sin(2.0 * np.pi * (fu * wu + fv * wv) + ph)
        return 0.5 + 0.35 * acc / self.norm


class _CheckerPattern:
    def __init__(self, cell: int):
        self.cell = cell

    def __call__(self, wu: np.ndarray, wv: np.ndarray) -> np.ndarray:
        parity = (np.floor(wu / self.cell) + np.floor(wv / self.cell)) % 2
        return 0.25 + 0.5 * parity


class _GlyphPattern:
    """Seeded digits stamped on a flat background, nearest-texel lookup."""

    def __init__(self, seed: int, height: int, width: int, count: int = 4, scale: int = 2):
        rng = np.random.default_rng(seed)
        self.scale = scale
        self.glyphs = []
        for _ in range(count):
            digit = int(rng.integers(0, 10))
            gu = float(rng.uniform(0, width - 5 * scale))
            gv = float(rng.uniform(0, height - 7 * scale))
            self.glyphs.append((digit, gu, gv))

    def __call__(self, wu: np.ndarray, wv: np.ndarray) -> np.ndarray:
        out = np.full(wu.shape, 0.1, dtype=np.float64)
        for digit, gu, gv in self.glyphs:
            col = np.floor((wu - gu) / self.scale).astype(np.int64)
            row = np.floor((wv - gv) / self.scale).astype(np.int64)
            inside = (col >= 0) & (col < 5) & (row >= 0) & (row < 7)
            idx = np.nonzero(inside)
            if idx[0].size == 0:
                continue
            rows = np.array(_DIGIT_ROWS[digit], dtype=np.int64)
            bits = np.zeros(wu.shape, dtype=bool)
            bits[idx] = (rows[row[idx]] >> (7 - col[idx])) & 1 > 0
            out = np.where(bits, 0.9, out)
        return out


def _make_pattern(spec: SyntheticSpec):
    if spec.pattern == "checker":
        return _CheckerPattern(spec.checker_cell)
    if spec.pattern == "texture":
        return _TexturePattern(spec.seed)
    return _GlyphPattern(spec.seed, spec.height, spec.width)


def _colorize(gray: np.ndarray, channels: int) -> np.ndarray:
    if channels == 1:
        return gray[None]
    g = np.clip(gray, 0.0, 1.0)
    return np.stack([g, np.clip(0.8 * g + 0.1, 0.0, 1.0), np.clip(1.0 - 0.6 * g, 0.0, 1.0)])


def gen_synthetic(spec: SyntheticSpec) -> tuple[list[Frame], list[FlowField]]:
    """Render the clip and its exact forward flows (frame f to f+1)."""
    pattern = _make_pattern(spec)
    uu, vv = np.meshgrid(
        np.arange(spec.width, dtype=np.float64), np.arange(spec.height, dtype=np.float64)
    )
    video = []
    for f in range(spec.num_frames):
        wu, wv = _world_of(spec, uu, vv, f)
        video.append(Frame(_colorize(pattern(wu, wv), spec.channels)))
    fwd, _ = gt_flow_fields(spec)
    return video, fwd


def gt_flow_fields(spec: SyntheticSpec) -> tuple[list[FlowField], list[FlowField]]:
    """Exact (forward, backward) flow fields for every consecutive pair.

    forward[i] lives on frame i's grid and points to frame i+1; backward[i]
    lives on frame i+1's grid and points back to frame i.
    """
    uu, vv = np.meshgrid(
        np.arange(spec.width, dtype=np.float64), np.arange(spec.height, dtype=np.float64)
    )
    fwd, bwd = [], []
    for f in range(spec.num_frames - 1):
        wu, wv = _world_of(spec, uu, vv, f)
        nu, nv = _position_in_frame(spec, wu, wv, f + 1)
        fwd.append(FlowField(nu - uu, nv - vv))
        wu, wv = _world_of(spec, uu, vv, f + 1)
        pu, pv = _position_in_frame(spec, wu, wv, f)
        bwd.append(FlowField(pu - uu, pv - vv))
    return fwd, bwd


def degrade(
    video: list[Frame],
    task: str,
    *,
    noise_sigma: float | None = None,
    seed: int = 0,
) -> tuple[list[Frame], DegradationOperator]:
    """Apply a named degradation and return it with its operator.

    ``srN`` pools every frame by N. ``denoiseN`` (or bare ``denoise`` with
    ``noise_sigma``) adds Gaussian noise with an independent per-frame seed
    derived from ``seed``; observations stay unclamped so the measurement
    model remains linear.
    """
    op = make_operator(task)
    sigma = op.sigma if noise_sigma is None else float(noise_sigma)
    if sigma != op.sigma:
        op = DegradationOperator(op.task, op.scale, sigma)
    out = [op.apply(f) for f in video]
    if sigma > 0.0:
        frame_seeds = np.random.SeedSequence(seed).generate_state(len(out))
        out = [add_gaussian_noise(f, sigma, int(s)) for f, s in zip(out, frame_seeds)]
    return out, op
