"""Spatiotemporal neighbor bookkeeping for block attention.

A frame's hidden grid is partitioned into non-overlapping square blocks.
Within a frame a block may look at the blocks to its left and above; across
frames it looks at the previous-frame block that the flow says most of its
pixels came from. Key/value slabs are cached per (layer, frame, block) with a
sliding retention window so memory stays bounded no matter how long the video
runs.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .flow import FlowField

__all__ = [
    "BlockGrid",
    "KVCache",
    "partition_blocks",
    "spatial_neighbors",
    "temporal_neighbor",
    "temporal_neighbors_topk",
    "write_occupancy_csv",
]


@dataclass(frozen=True)
class BlockGrid:
    """Partition of an (height x width) grid into block_size^2 tiles.

    rows/cols count the tiles; the right and bottom remainders are covered by
    edge padding whose extent is recorded here so consumers can replicate and
    crop consistently.
    """

    height: int
    width: int
    block_size: int
    rows: int
    cols: int
    pad_bottom: int
    pad_right: int

    @property
    def padded_height(self) -> int:
        return self.rows * self.block_size

    @property
    def padded_width(self) -> int:
        return self.cols * self.block_size

    @property
    def num_blocks(self) -> int:
        return self.rows * self.cols

    def check_block(self, p: int, q: int) -> None:
        if not (0 <= p < self.rows and 0 <= q < self.cols):
            raise IndexError(f"block ({p}, {q}) outside {self.rows}x{self.cols} grid")

    def block_of(self, u: int, v: int) -> tuple[int, int]:
        if not (0 <= u < self.width and 0 <= v < self.height):
            raise IndexError(f"pixel ({u}, {v}) outside {self.width}x{self.height} grid")
        return v // self.block_size, u // self.block_size

    def true_extent(self, p: int, q: int) -> tuple[int, int]:
        """Rows and columns of real (unpadded) pixels inside block (p, q)."""
        self.check_block(p, q)
        bh = min(self.block_size, self.height - p * self.block_size)
        bw = min(self.block_size, self.width - q * self.block_size)
        return bh, bw


def partition_blocks(dims: tuple[int, int], block_size: int) -> BlockGrid:
    """Build the block grid for a (height, width) hidden grid."""
    height, width = int(dims[0]), int(dims[1])
    if height < 1 or width < 1:
        raise ValueError(f"empty grid {height}x{width}")
    if block_size < 1:
        raise ValueError(f"block_size must be >= 1, got {block_size}")
    rows = -(-height // block_size)
    cols = -(-width // block_size)
    return BlockGrid(
        height=height,
        width=width,
        block_size=block_size,
        rows=rows,
        cols=cols,
        pad_bottom=rows * block_size - height,
        pad_right=cols * block_size - width,
    )


def spatial_neighbors(grid: BlockGrid, p: int, q: int) -> list[tuple[int, int]]:
    """Blocks to the left and above, in that order; absent ones are skipped."""
    grid.check_block(p, q)
    out = []
    if q > 0:
        out.append((p, q - 1))
    if p > 0:
        out.append((p - 1, q))
    return out


def _landing_counts(grid: BlockGrid, p: int, q: int, flow_to_prev: FlowField) -> dict[tuple[int, int], int]:
    grid.check_block(p, q)
    if (flow_to_prev.height, flow_to_prev.width) != (grid.height, grid.width):
        raise ValueError(
            f"flow grid {(flow_to_prev.height, flow_to_prev.width)} does not match "
            f"hidden grid {(grid.height, grid.width)}"
        )
    bh, bw = grid.true_extent(p, q)
    v0 = p * grid.block_size
    u0 = q * grid.block_size
    vs, us = np.meshgrid(
        np.arange(v0, v0 + bh, dtype=np.int64),
        np.arange(u0, u0 + bw, dtype=np.int64),
        indexing="ij",
    )
    nu = np.floor(us + flow_to_prev.du[vs, us] + 0.5).astype(np.int64)
    nv = np.floor(vs + flow_to_prev.dv[vs, us] + 0.5).astype(np.int64)
    inside = (nu >= 0) & (nu < grid.width) & (nv >= 0) & (nv < grid.height)
    counts: dict[tuple[int, int], int] = {}
    if inside.any():
        pp = nv[inside] // grid.block_size
        qq = nu[inside] // grid.block_size
        keys, n = np.unique(np.stack([pp, qq], axis=1), axis=0, return_counts=True)
        counts = {(int(a), int(b)): int(c) for (a, b), c in zip(keys, n)}
    return counts


def temporal_neighbors_topk(
    grid: BlockGrid, p: int, q: int, flow_to_prev: FlowField, k: int
) -> list[tuple[int, int]]:
    """Previous-frame blocks ranked by how many of this block's pixels map into them.

    Pixels are carried by ``flow_to_prev`` (the field taking the current frame
    to the previous one), rounded half-up; landings outside the frame are
    dropped. Ranking is by descending count with ties to the smallest (p', q')
    lexicographically. Returns up to ``k`` blocks, possibly none.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    counts = _landing_counts(grid, p, q, flow_to_prev)
    ranked = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
    return [blk for blk, _ in ranked[:k]]


def temporal_neighbor(
    grid: BlockGrid, p: int, q: int, flow_to_prev: FlowField
) -> tuple[int, int] | None:
    """The argmax landing block in the previous frame, or None if every pixel leaves the frame."""
    top = temporal_neighbors_topk(grid, p, q, flow_to_prev, 1)
    return top[0] if top else None


def temporal_neighbor_map(
    grid: BlockGrid, flow_to_prev: FlowField, k: int
) -> dict[tuple[int, int], list[tuple[int, int]]]:
    """Top-k landing blocks for every block of the grid in one vectorized pass.

    Equivalent to calling :func:`temporal_neighbors_topk` per block, but the
    flow is evaluated once for the whole grid, which matters when the same
    field is consulted for many blocks per denoising step.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if (flow_to_prev.height, flow_to_prev.width) != (grid.height, grid.width):
        raise ValueError(
            f"flow grid {(flow_to_prev.height, flow_to_prev.width)} does not match "
            f"hidden grid {(grid.height, grid.width)}"
        )
    vs, us = np.meshgrid(
        np.arange(grid.height, dtype=np.int64),
        np.arange(grid.width, dtype=np.int64),
        indexing="ij",
    )
    nu = np.floor(us + flow_to_prev.du + 0.5).astype(np.int64)
    nv = np.floor(vs + flow_to_prev.dv + 0.5).astype(np.int64)
    inside = (nu >= 0) & (nu < grid.width) & (nv >= 0) & (nv < grid.height)
    out: dict[tuple[int, int], list[tuple[int, int]]] = {
        (p, q): [] for p in range(grid.rows) for q in range(grid.cols)
    }
    if inside.any():
        quads = np.stack(
            [
                vs[inside] // grid.block_size,
                us[inside] // grid.block_size,
                nv[inside] // grid.block_size,
                nu[inside] // grid.block_size,
            ],
            axis=1,
        )
        keys, counts = np.unique(quads, axis=0, return_counts=True)
        grouped: dict[tuple[int, int], list[tuple[tuple[int, int], int]]] = {}
        for (sp, sq, dp, dq), c in zip(keys, counts):
            grouped.setdefault((int(sp), int(sq)), []).append(
                ((int(dp), int(dq)), int(c))
            )
        for blk, pairs in grouped.items():
            pairs.sort(key=lambda item: (-item[1], item[0]))
            out[blk] = [dst for dst, _ in pairs[:k]]
    return out


class KVCache:
    """Per-(layer, frame, block) key/value slabs with a sliding frame window.

    After inserting at frame f, any frame f0 of the same layer with
    f - f0 >= horizon is evicted, so a layer retains at most ``horizon``
    distinct frames at a time.
    """

    def __init__(self, horizon: int = 2):
        if horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {horizon}")
        self.horizon = horizon
        self._store: dict[int, dict[int, dict[tuple[int, int], tuple[np.ndarray, np.ndarray]]]] = {}
        self.dim = 0

    def __len__(self) -> int:
        return sum(len(blocks) for frames in self._store.values() for blocks in frames.values())

    def insert(self, layer: int, frame: int, block: tuple[int, int], k: np.ndarray, v: np.ndarray) -> None:
        k = np.asarray(k, dtype=np.float64)
        v = np.asarray(v, dtype=np.float64)
        if k.ndim != 2 or v.ndim != 2 or k.shape[0] != v.shape[0]:
            raise ValueError(f"K/V must be (tokens, dim) with equal token counts, got {k.shape} / {v.shape}")
        self.dim = k.shape[1]
        frames = self._store.setdefault(layer, {})
        frames.setdefault(frame, {})[(int(block[0]), int(block[1]))] = (k.copy(), v.copy())
        newest = max(frames)
        while newest - min(frames) >= self.horizon:
            del frames[min(frames)]

    def frames(self, layer: int) -> list[int]:
        return sorted(self._store.get(layer, {}))

    def has(self, layer: int, frame: int, block: tuple[int, int]) -> bool:
        blk = (int(block[0]), int(block[1]))
        return blk in self._store.get(layer, {}).get(frame, {})

    def get(self, layer: int, frame: int, block: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
        blk = (int(block[0]), int(block[1]))
        try:
            return self._store[layer][frame][blk]
        except KeyError:
            raise KeyError(f"cache miss: layer {layer}, frame {frame}, block {blk}") from None

    def gather(self, layer: int, refs: list[tuple[int, tuple[int, int]]]) -> tuple[np.ndarray, np.ndarray]:
        """Concatenate K and V slabs for ``refs`` (frame, block) in the given order.

        Missing references raise KeyError naming the offender. Empty refs give
        (0, dim) slabs.
        """
        if not refs:
            return np.zeros((0, self.dim)), np.zeros((0, self.dim))
        ks, vs = [], []
        for frame, block in refs:
            k, v = self.get(layer, frame, block)
            ks.append(k)
            vs.append(v)
        return np.concatenate(ks, axis=0), np.concatenate(vs, axis=0)

    def occupancy(self) -> list[tuple[int, int, int, int, int]]:
        """Sorted (layer, frame, block_p, block_q, token_count) rows."""
        rows = [
            (layer, frame, block[0], block[1], kv[0].shape[0])
            for layer, frames in self._store.items()
            for frame, blocks in frames.items()
            for block, kv in blocks.items()
        ]
        return sorted(rows)


def write_occupancy_csv(cache: KVCache, path: str | Path) -> None:
    """Debug dump of cache occupancy; block is rendered as ``p:q``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["layer", "frame", "block", "token_count"])
        for layer, frame, p, q, count in cache.occupancy():
            writer.writerow([layer, frame, f"{p}:{q}", count])
