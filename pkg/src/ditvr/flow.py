"""Optical flow fields, block-matching estimation, and flow trajectories.

A flow field pairs per-pixel displacements ``(du, dv)`` with a validity mask.
Trajectories chain integer pixel coordinates across frames through forward
fields, and every step must survive a backward round trip: the backward field
has to map the landing point to within ``round_trip_tol`` pixels (Chebyshev
distance) of where the step started. Steps that fail, or leave the frame,
collapse the rest of the chain to the sentinel (-1, -1, -1), and the sentinel
is absorbing.

Fields are exchanged on disk in the Middlebury ``.flo`` layout: the float32
magic 202021.25, little-endian int32 width and height, then row-major
interleaved float32 (du, dv) pairs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .numerics import Frame, _sample_bilinear

__all__ = [
    "FLO_MAGIC",
    "FlowField",
    "SENTINEL",
    "TrajectorySet",
    "build_trajectories",
    "downsample_flow",
    "estimate_flow_block_matching",
    "forward_map",
    "occlusion_mask",
    "read_flo",
    "sample_flow",
    "uniform_flow",
    "write_flo",
]

FLO_MAGIC = 202021.25
SENTINEL = (-1, -1, -1)


@dataclass(frozen=True)
class FlowField:
    """Dense displacements du (horizontal) and dv (vertical) on an (H, W) grid."""

    du: np.ndarray
    dv: np.ndarray
    valid: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        du = np.asarray(self.du, dtype=np.float64)
        dv = np.asarray(self.dv, dtype=np.float64)
        if du.ndim != 2 or du.shape != dv.shape:
            raise ValueError(f"du/dv must be matching 2-D arrays, got {du.shape} and {dv.shape}")
        if not (np.all(np.isfinite(du)) and np.all(np.isfinite(dv))):
            raise ValueError("flow contains non-finite values")
        valid = self.valid
        if valid is None:
            valid = np.ones(du.shape, dtype=bool)
        else:
            valid = np.asarray(valid, dtype=bool)
            if valid.shape != du.shape:
                raise ValueError(f"valid mask shape {valid.shape} does not match {du.shape}")
        object.__setattr__(self, "du", du)
        object.__setattr__(self, "dv", dv)
        object.__setattr__(self, "valid", valid)

    @property
    def height(self) -> int:
        return self.du.shape[0]

    @property
    def width(self) -> int:
        return self.du.shape[1]


def uniform_flow(height: int, width: int, du: float, dv: float) -> FlowField:
    return FlowField(
        np.full((height, width), float(du)),
        np.full((height, width), float(dv)),
    )


def sample_flow(flow: FlowField, u, v) -> tuple[np.ndarray, np.ndarray]:
    """Bilinearly sample (du, dv) at continuous coordinates; edge-clamped."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    return _sample_bilinear(flow.du, u, v), _sample_bilinear(flow.dv, u, v)


def _block_starts(extent: int, block: int) -> np.ndarray:
    return np.arange(0, extent, block, dtype=np.int64)


def estimate_flow_block_matching(
    frame_a: Frame, frame_b: Frame, block: int = 8, radius: int = 3
) -> FlowField:
    """Integer block-matching flow from frame_a to frame_b.

    Each non-overlapping block of frame_a is assigned the displacement in
    [-radius, radius]^2 minimizing the sum of absolute differences against
    frame_b, with frame_b read through edge clamping near the borders. Ties
    break to the smallest displacement magnitude, then to the smallest
    (du, dv) lexicographically. All pixels of a block share its displacement.
    """
    if frame_a.shape != frame_b.shape:
        raise ValueError(f"frame shapes differ: {frame_a.shape} vs {frame_b.shape}")
    if block < 1 or radius < 0:
        raise ValueError(f"bad block={block} or radius={radius}")
    h, w = frame_a.height, frame_a.width
    vs = _block_starts(h, block)
    us = _block_starts(w, block)
    vv = np.arange(h, dtype=np.int64)
    uu = np.arange(w, dtype=np.int64)

    best_sad = None
    best_mag = None
    best_du = np.zeros((len(vs), len(us)), dtype=np.float64)
    best_dv = np.zeros_like(best_du)
    for du in range(-radius, radius + 1):
        src_u = np.clip(uu + du, 0, w - 1)
        for dv in range(-radius, radius + 1):
            src_v = np.clip(vv + dv, 0, h - 1)
            shifted = frame_b.pixels[:, src_v[:, None], src_u[None, :]]
            diff = np.abs(frame_a.pixels - shifted).sum(axis=0)
            sad = np.add.reduceat(np.add.reduceat(diff, vs, axis=0), us, axis=1)
            mag = du * du + dv * dv
            if best_sad is None:
                best_sad = sad
                best_mag = np.full_like(sad, mag)
                best_du.fill(du)
                best_dv.fill(dv)
                continue
            # candidates iterate in ascending (du, dv), so a strict (sad, mag)
            # improvement is the only reason to replace an earlier winner
            take = (sad < best_sad) | ((sad == best_sad) & (mag < best_mag))
            best_sad = np.where(take, sad, best_sad)
            best_mag = np.where(take, mag, best_mag)
            best_du = np.where(take, du, best_du)
            best_dv = np.where(take, dv, best_dv)

    du_full = np.repeat(np.repeat(best_du, block, axis=0), block, axis=1)[:h, :w]
    dv_full = np.repeat(np.repeat(best_dv, block, axis=0), block, axis=1)[:h, :w]
    return FlowField(du_full, dv_full)


def downsample_flow(flow: FlowField, factor: int) -> FlowField:
    """Average displacements over factor x factor cells and rescale by 1/factor.

    This is the one place a flow field changes resolution; derived grids each
    downsample the source field exactly once rather than chaining.
    """
    if factor < 1:
        raise ValueError(f"factor must be >= 1, got {factor}")
    if factor == 1:
        return flow
    h, w = flow.height, flow.width
    if h % factor or w % factor:
        raise ValueError(f"flow {h}x{w} not divisible by factor {factor}")
    shape = (h // factor, factor, w // factor, factor)
    du = flow.du.reshape(shape).mean(axis=(1, 3)) / factor
    dv = flow.dv.reshape(shape).mean(axis=(1, 3)) / factor
    valid = flow.valid.reshape(shape).all(axis=(1, 3))
    return FlowField(du, dv, valid)


def forward_map(point: tuple[float, float], flow: FlowField) -> tuple[int, int, bool]:
    """Advance one point through a flow field.

    The field is sampled bilinearly at ``point = (u, v)``, the displacement is
    added, and the result is rounded half-up to integer coordinates for chain
    building. Returns (u', v', inside) where ``inside`` says whether the
    rounded landing point lies within the grid.
    """
    u, v = float(point[0]), float(point[1])
    h, w = flow.height, flow.width
    if not (0.0 <= u <= w - 1.0 and 0.0 <= v <= h - 1.0):
        raise ValueError(f"point {(u, v)} outside {w}x{h} field")
    du, dv = sample_flow(flow, u, v)
    nu = int(np.floor(u + float(du) + 0.5))
    nv = int(np.floor(v + float(dv) + 0.5))
    inside = 0 <= nu < w and 0 <= nv < h
    return nu, nv, inside


def occlusion_mask(fwd: FlowField, bwd: FlowField, tol: float = 1.0) -> np.ndarray:
    """Forward-backward consistency mask.

    A pixel is visible (True) when following the forward field and then the
    backward field returns to within ``tol`` pixels (Chebyshev distance) of
    the start. ``tol=inf`` accepts everything.
    """
    if (fwd.height, fwd.width) != (bwd.height, bwd.width):
        raise ValueError("forward/backward grids differ")
    h, w = fwd.height, fwd.width
    uu, vv = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    tu = uu + fwd.du
    tv = vv + fwd.dv
    bu, bv = sample_flow(bwd, tu, tv)
    err_u = np.abs(tu + bu - uu)
    err_v = np.abs(tv + bv - vv)
    return np.maximum(err_u, err_v) <= tol


@dataclass(frozen=True)
class TrajectorySet:
    """Pixel chains across a video on one fixed grid.

    ``chains`` has shape (num_chains, num_frames, 3) holding (frame, u, v)
    rows or the sentinel (-1, -1, -1). Chain k starts at ``starts[k]`` in
    frame 0; once a row is the sentinel every later row of that chain is too.
    """

    height: int
    width: int
    chains: np.ndarray

    def __post_init__(self) -> None:
        ch = np.asarray(self.chains, dtype=np.int64)
        if ch.ndim != 3 or ch.shape[2] != 3:
            raise ValueError(f"chains must be (K, F, 3), got {ch.shape}")
        object.__setattr__(self, "chains", ch)

    @property
    def num_chains(self) -> int:
        return self.chains.shape[0]

    @property
    def num_frames(self) -> int:
        return self.chains.shape[1]

    def valid_mask(self) -> np.ndarray:
        """(K, F) bool: True where the chain is alive."""
        return self.chains[:, :, 0] >= 0

    def coverage(self, frame: int) -> np.ndarray:
        """(H, W) map of grid position -> covering chain index, -1 if none.

        When several chains share a position the lowest chain index wins,
        which keeps the lookup deterministic.
        """
        out = np.full((self.height, self.width), -1, dtype=np.int64)
        alive = self.valid_mask()[:, frame]
        ks = np.nonzero(alive)[0]
        us = self.chains[ks, frame, 1]
        vs = self.chains[ks, frame, 2]
        # reversed so that the lowest k is written last
        out[vs[::-1], us[::-1]] = ks[::-1]
        return out

    def history(self, frame: int, window: int) -> tuple[np.ndarray, np.ndarray]:
        """Per-position coordinates in the ``window`` preceding frames.

        Returns (coords, valid): coords is (H, W, window, 2) with (u, v) for
        frames frame-1 .. frame-window, valid is (H, W, window). Positions no
        chain passes through, sentinel entries, and frames before 0 are
        invalid.
        """
        if window < 1:
            raise ValueError(f"window must be >= 1, got {window}")
        cover = self.coverage(frame)
        coords = np.zeros((self.height, self.width, window, 2), dtype=np.int64)
        valid = np.zeros((self.height, self.width, window), dtype=bool)
        covered = cover >= 0
        ks = cover[covered]
        for i in range(window):
            f = frame - 1 - i
            if f < 0:
                break
            rows = self.chains[ks, f]
            ok = rows[:, 0] >= 0
            cc = np.zeros((len(ks), 2), dtype=np.int64)
            cc[ok, 0] = rows[ok, 1]
            cc[ok, 1] = rows[ok, 2]
            coords[covered, i, :] = cc
            valid[covered, i] = ok
        return coords, valid


def build_trajectories(
    fwd: list[FlowField],
    bwd: list[FlowField],
    starts: np.ndarray,
    round_trip_tol: float = 1.0,
) -> TrajectorySet:
    """Chain start points through forward fields with backward validation.

    ``fwd[i]`` carries frame i to frame i+1 and ``bwd[i]`` carries frame i+1
    back to frame i. A step from integer position p lands at the rounded
    forward-mapped candidate; it is accepted only when the candidate stays in
    frame and the backward field (sampled at the candidate) returns to within
    ``round_trip_tol`` pixels of p in Chebyshev distance. A rejected step
    writes the sentinel, and the sentinel is absorbing.
    """
    if len(fwd) != len(bwd):
        raise ValueError(f"need matching field lists, got {len(fwd)} forward / {len(bwd)} backward")
    starts = np.asarray(starts, dtype=np.int64)
    if starts.ndim != 2 or starts.shape[1] != 2:
        raise ValueError(f"starts must be (K, 2) of (u, v), got {starts.shape}")
    if fwd:
        h, w = fwd[0].height, fwd[0].width
        for f in list(fwd) + list(bwd):
            if (f.height, f.width) != (h, w):
                raise ValueError("all fields must share one grid")
    else:
        h = int(starts[:, 1].max()) + 1 if len(starts) else 1
        w = int(starts[:, 0].max()) + 1 if len(starts) else 1
    if len(starts) and (
        starts[:, 0].min() < 0
        or starts[:, 1].min() < 0
        or (fwd and (starts[:, 0].max() >= w or starts[:, 1].max() >= h))
    ):
        raise ValueError("start points must lie inside the grid")

    num_frames = len(fwd) + 1
    k = len(starts)
    chains = np.full((k, num_frames, 3), -1, dtype=np.int64)
    chains[:, 0, 0] = 0
    chains[:, 0, 1] = starts[:, 0]
    chains[:, 0, 2] = starts[:, 1]

    cu = starts[:, 0].astype(np.float64)
    cv = starts[:, 1].astype(np.float64)
    alive = np.ones(k, dtype=bool)
    for f, (ff, bf) in enumerate(zip(fwd, bwd)):
        if not alive.any():
            break
        du, dv = sample_flow(ff, cu, cv)
        nu = np.floor(cu + du + 0.5)
        nv = np.floor(cv + dv + 0.5)
        inside = (nu >= 0) & (nu <= w - 1) & (nv >= 0) & (nv <= h - 1)
        bu, bv = sample_flow(bf, np.clip(nu, 0, w - 1), np.clip(nv, 0, h - 1))
        err = np.maximum(np.abs(nu + bu - cu), np.abs(nv + bv - cv))
        alive = alive & inside & (err <= round_trip_tol)
        chains[alive, f + 1, 0] = f + 1
        chains[alive, f + 1, 1] = nu[alive].astype(np.int64)
        chains[alive, f + 1, 2] = nv[alive].astype(np.int64)
        cu = np.where(alive, nu, cu)
        cv = np.where(alive, nv, cv)
    return TrajectorySet(h, w, chains)


def write_flo(flow: FlowField, path: str | Path) -> None:
    h, w = flow.height, flow.width
    data = np.empty((h, w, 2), dtype="<f4")
    data[:, :, 0] = flow.du.astype("<f4")
    data[:, :, 1] = flow.dv.astype("<f4")
    with open(path, "wb") as fh:
        fh.write(np.array([FLO_MAGIC], dtype="<f4").tobytes())
        fh.write(np.array([w, h], dtype="<i4").tobytes())
        fh.write(data.tobytes())


def read_flo(path: str | Path) -> FlowField:
    with open(path, "rb") as fh:
        raw = fh.read()
    magic = np.frombuffer(raw, dtype="<f4", count=1, offset=0)[0]
    if magic != np.float32(FLO_MAGIC):
        raise ValueError(f"bad .flo magic {magic!r}")
    w, h = (int(x) for x in np.frombuffer(raw, dtype="<i4", count=2, offset=4))
    if w < 1 or h < 1:
        raise ValueError(f"bad .flo dimensions {w}x{h}")
    need = 12 + 8 * w * h
    if len(raw) < need:
        raise ValueError(f"truncated .flo: {len(raw)} bytes, need {need}")
    data = np.frombuffer(raw, dtype="<f4", count=2 * w * h, offset=12).reshape(h, w, 2)
    return FlowField(data[:, :, 0].astype(np.float64), data[:, :, 1].astype(np.float64))
