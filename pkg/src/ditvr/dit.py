"""A toy diffusion transformer with trajectory-aware attention.

The model is deliberately small and untrained: every weight is drawn once
from a seeded PCG64 stream, so two constructions from the same config are
bit-identical. Restoration quality is carried by the sampler's data-fidelity
steps; the transformer provides the cross-frame wiring under test.

Layer layout: frames are patch-embedded into a token grid; designated
"vital" layers run block attention over spatiotemporal neighbors followed by
cross-attention along flow trajectories, while the remaining layers run plain
per-block self-attention. Every layer ends with a two-layer GELU MLP behind a
residual connection.

Attention follows the replace convention: the attention output becomes the
hidden state (no residual around attention itself). Queries are projections
of the current hidden state. Keys concatenate the block's own tokens with its
spatial (left/above) and flow-selected temporal neighbors, with a provenance
vector added to the pre-projection hidden state of each group - keys only,
values are provenance-free. Because projection is linear, the cache stores
raw projected slabs and the provenance offsets are added at gather time.

The noise head combines a closed-form Gaussian-prior (Wiener) estimate with
the transformer's output scaled by a confidence weight that fades at the
clean end of the schedule. The prior assumes pixels ~ N(prior_mean,
prior_var) and nothing else; it keeps prior-free sampling bounded without any
training. This implementation is forward-only: no gradients are carried
anywhere, so gradient checks do not apply.
"""

from __future__ import annotations

import json
import struct
import dataclasses
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.special import erf

from .flow import FlowField, TrajectorySet
from .numerics import Frame
from .stnc import BlockGrid, KVCache, partition_blocks, spatial_neighbors, temporal_neighbor_map

__all__ = [
    "DenoiseContext",
    "DiTConfig",
    "PositionalEncodings",
    "TrajectoryDiT",
    "default_vital_layers",
    "gelu",
    "load_weights",
    "read_config",
    "recommend_vital_layers",
    "save_weights",
    "sinusoidal_position_grid",
    "sinusoidal_time_embedding",
    "vital_layer_analysis",
    "write_config",
]

WEIGHTS_MAGIC = b"DTVW\x01\x00"


def default_vital_layers(num_layers: int) -> tuple[int, ...]:
    """Every third layer, starting at 0."""
    return tuple(range(0, num_layers, 3))


@dataclass(frozen=True)
class DiTConfig:
    num_layers: int = 6
    hidden_dim: int = 64
    heads: int = 4
    patch_size: int = 4
    block_size: int = 4
    channels: int = 1
    vital_layers: tuple[int, ...] | None = None
    seed: int = 0
    attn_window: int = 2
    # noise-head constants: zero-knowledge Gaussian prior plus texture gain
    prior_mean: float = 0.5
    prior_var: float = 0.001
    model_gain: float = 0.01
    # trajectory attention temperature (< 1 spreads weight across the
    # temporal window instead of collapsing onto the self key) and the
    # stage-1 logit bonus for flow-selected previous-frame tokens
    traj_temperature: float = 0.05
    temporal_bias: float = 1.0

    def __post_init__(self) -> None:
        if self.num_layers < 1:
            raise ValueError(f"num_layers must be >= 1, got {self.num_layers}")
        if self.hidden_dim % self.heads:
            raise ValueError(f"hidden_dim {self.hidden_dim} not divisible by heads {self.heads}")
        if self.hidden_dim % 4:
            raise ValueError(f"hidden_dim must be a multiple of 4, got {self.hidden_dim}")
        if self.patch_size < 1 or self.block_size < 1:
            raise ValueError("patch_size and block_size must be >= 1")
        if self.channels not in (1, 3):
            raise ValueError(f"channels must be 1 or 3, got {self.channels}")
        if self.attn_window < 1:
            raise ValueError(f"attn_window must be >= 1, got {self.attn_window}")
        if self.prior_var <= 0:
            raise ValueError("prior_var must be positive")
        if self.traj_temperature <= 0:
            raise ValueError("traj_temperature must be positive")
        vital = self.vital_layers
        if vital is None:
            vital = default_vital_layers(self.num_layers)
        vital = tuple(sorted(set(int(l) for l in vital)))
        if vital and (vital[0] < 0 or vital[-1] >= self.num_layers):
            raise ValueError(f"vital_layers {vital} outside 0..{self.num_layers - 1}")
        object.__setattr__(self, "vital_layers", vital)


@dataclass(frozen=True)
class PositionalEncodings:
    """Provenance vectors telling keys apart: self vs spatial vs temporal."""

    p_self: np.ndarray
    p_spatial: np.ndarray
    p_temporal: np.ndarray

    def __post_init__(self) -> None:
        vecs = [np.asarray(v, dtype=np.float64) for v in (self.p_self, self.p_spatial, self.p_temporal)]
        if any(v.ndim != 1 for v in vecs) or len({v.shape for v in vecs}) != 1:
            raise ValueError("encodings must be 1-D vectors of one dimension")
        if (
            np.array_equal(vecs[0], vecs[1])
            or np.array_equal(vecs[0], vecs[2])
            or np.array_equal(vecs[1], vecs[2])
        ):
            raise ValueError("provenance encodings must be pairwise distinct")
        object.__setattr__(self, "p_self", vecs[0])
        object.__setattr__(self, "p_spatial", vecs[1])
        object.__setattr__(self, "p_temporal", vecs[2])


@dataclass
class DenoiseContext:
    """Everything one denoise_predict call needs beyond the frame itself.

    alpha_bar is the schedule value at the queried timestep; the noise head
    needs it for its prior term. cache/trajectories/flow_to_prev wire the
    vital layers to earlier frames and may be omitted for frame 0 or for
    purely per-frame operation.
    """

    alpha_bar: float
    frame: int = 0
    cache: KVCache | None = None
    trajectories: TrajectorySet | None = None
    flow_to_prev: FlowField | None = None
    window: int = 2
    stnc_k: int = 1
    use_trajectory_attention: bool = True
    disabled_layers: frozenset = field(default_factory=frozenset)


def gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))


def sinusoidal_position_grid(rows: int, cols: int, dim: int) -> np.ndarray:
    """Fixed 2-D sin/cos position signal, (rows, cols, dim)."""
    if dim % 4:
        raise ValueError(f"dim must be a multiple of 4, got {dim}")
    quarter = dim // 4
    freqs = 10000.0 ** (-np.arange(quarter, dtype=np.float64) / quarter)
    av = np.arange(rows, dtype=np.float64)[:, None] * freqs[None, :]
    au = np.arange(cols, dtype=np.float64)[:, None] * freqs[None, :]
    ev = np.concatenate([np.sin(av), np.cos(av)], axis=1)  # (rows, dim/2)
    eu = np.concatenate([np.sin(au), np.cos(au)], axis=1)  # (cols, dim/2)
    out = np.empty((rows, cols, dim))
    out[:, :, : dim // 2] = ev[:, None, :]
    out[:, :, dim // 2 :] = eu[None, :, :]
    return out


def sinusoidal_time_embedding(t: float, dim: int) -> np.ndarray:
    half = dim // 2
    freqs = 10000.0 ** (-np.arange(half, dtype=np.float64) / half)
    args = float(t) * freqs
    return np.concatenate([np.sin(args), np.cos(args)])


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _heads_view(x: np.ndarray, heads: int) -> np.ndarray:
    # (tokens, dim) -> (heads, tokens, dim_head)
    t, d = x.shape
    return x.reshape(t, heads, d // heads).transpose(1, 0, 2)


def _attend(
    q: np.ndarray,
    k: np.ndarray,
    v: np.ndarray,
    heads: int,
    logit_bias: np.ndarray | None = None,
) -> np.ndarray:
    """Multi-head scaled dot-product attention; q (Tq, d), k/v (Tk, d).

    ``logit_bias`` (Tk,) is added to every query's logits, shared by heads.
    """
    dh = q.shape[1] // heads
    qh = _heads_view(q, heads)
    kh = _heads_view(k, heads)
    vh = _heads_view(v, heads)
    logits = qh @ kh.transpose(0, 2, 1) / np.sqrt(dh)
    if logit_bias is not None:
        logits = logits + logit_bias[None, None, :]
    out = _softmax(logits) @ vh
    return out.transpose(1, 0, 2).reshape(q.shape)


class TrajectoryDiT:
    """Seeded toy DiT exposing the attention operations individually."""

    def __init__(self, cfg: DiTConfig, weights: dict[str, np.ndarray] | None = None):
        self.cfg = cfg
        self.weights = weights if weights is not None else _init_weights(cfg)
        _check_weights(cfg, self.weights)
        self.enc = PositionalEncodings(
            self.weights["enc.self"], self.weights["enc.spatial"], self.weights["enc.temporal"]
        )

    # -- geometry ---------------------------------------------------------

    def hidden_grid(self, height: int, width: int) -> tuple[int, int]:
        p = self.cfg.patch_size
        return -(-height // p), -(-width // p)

    def block_grid(self, height: int, width: int) -> BlockGrid:
        ht, wt = self.hidden_grid(height, width)
        return partition_blocks((ht, wt), self.cfg.block_size)

    # -- embedding --------------------------------------------------------

    def patch_embed(self, frame: Frame) -> np.ndarray:
        """Linear patch projection plus the 2-D position signal, (ht, wt, d)."""
        cfg = self.cfg
        if frame.channels != cfg.channels:
            raise ValueError(f"model expects {cfg.channels} channel(s), frame has {frame.channels}")
        p = cfg.patch_size
        ht, wt = self.hidden_grid(frame.height, frame.width)
        px = np.pad(
            frame.pixels,
            ((0, 0), (0, ht * p - frame.height), (0, wt * p - frame.width)),
            mode="edge",
        )
        patches = (
            px.reshape(cfg.channels, ht, p, wt, p)
            .transpose(1, 3, 0, 2, 4)
            .reshape(ht, wt, cfg.channels * p * p)
        )
        tokens = patches @ self.weights["embed.w"] + self.weights["embed.b"]
        return tokens + sinusoidal_position_grid(ht, wt, cfg.hidden_dim)

    def _unpatchify(self, tokens: np.ndarray, height: int, width: int) -> np.ndarray:
        cfg = self.cfg
        p = cfg.patch_size
        ht, wt = tokens.shape[:2]
        raw = tokens @ self.weights["head.w"] + self.weights["head.b"]
        img = (
            raw.reshape(ht, wt, cfg.channels, p, p)
            .transpose(2, 0, 3, 1, 4)
            .reshape(cfg.channels, ht * p, wt * p)
        )
        return img[:, :height, :width]

    # -- per-layer pieces ---------------------------------------------------

    def _ffn(self, layer: int, h: np.ndarray) -> np.ndarray:
        w = self.weights
        hidden = gelu(h @ w[f"layer{layer}.ffn.w1"] + w[f"layer{layer}.ffn.b1"])
        return h + hidden @ w[f"layer{layer}.ffn.w2"] + w[f"layer{layer}.ffn.b2"]

    def _plain_self_attention(self, h: np.ndarray, layer: int) -> np.ndarray:
        """Windowed (per-block) self-attention; output replaces the state."""
        cfg = self.cfg
        ht, wt, d = h.shape
        grid = partition_blocks((ht, wt), cfg.block_size)
        hp = _pad_grid(h, grid)
        w = self.weights
        q = hp @ w[f"layer{layer}.wq"]
        k = hp @ w[f"layer{layer}.wk"]
        v = hp @ w[f"layer{layer}.wv"]
        out = np.empty_like(hp)
        b = cfg.block_size
        for p in range(grid.rows):
            for qq in range(grid.cols):
                vs = slice(p * b, (p + 1) * b)
                us = slice(qq * b, (qq + 1) * b)
                out[vs, us] = _attend(
                    q[vs, us].reshape(-1, d), k[vs, us].reshape(-1, d), v[vs, us].reshape(-1, d), cfg.heads
                ).reshape(b, b, d)
        return out[:ht, :wt]

    def block_attention(
        self,
        h: np.ndarray,
        layer: int,
        cache: KVCache,
        grid: BlockGrid,
        flow_to_prev: FlowField | None,
        enc: PositionalEncodings | None = None,
        *,
        frame: int = 0,
        stnc_k: int = 1,
    ) -> np.ndarray:
        """Block attention over self + spatial + flow-selected temporal keys.

        The current frame's projected K/V slabs are inserted into the cache
        first (they are what the next frame will reach back for), then each
        block attends over its own tokens, the blocks to its left and above,
        and, when ``flow_to_prev`` is given, the top ``stnc_k`` previous-frame
        blocks by pixel-mapping count. Provenance vectors are added to the
        hidden states behind the keys only; values stay untouched. The
        attention output replaces the hidden state.
        """
        cfg = self.cfg
        if layer not in cfg.vital_layers:
            raise ValueError(f"layer {layer} is not a vital layer {cfg.vital_layers}")
        if cache is None:
            raise ValueError("block_attention requires a cache")
        enc = enc or self.enc
        ht, wt, d = h.shape
        if (grid.height, grid.width) != (ht, wt):
            raise ValueError(f"grid {grid.height}x{grid.width} does not match tokens {ht}x{wt}")
        w = self.weights
        hp = _pad_grid(h, grid)
        q_all = hp @ w[f"layer{layer}.wq"]
        k_all = hp @ w[f"layer{layer}.wk"]
        v_all = hp @ w[f"layer{layer}.wv"]
        b = cfg.block_size

        def slab(arr: np.ndarray, p: int, qq: int) -> np.ndarray:
            return arr[p * b : (p + 1) * b, qq * b : (qq + 1) * b].reshape(-1, d)

        for p in range(grid.rows):
            for qq in range(grid.cols):
                cache.insert(layer, frame, (p, qq), slab(k_all, p, qq), slab(v_all, p, qq))

        off_self = enc.p_self @ w[f"layer{layer}.wk"]
        off_spatial = enc.p_spatial @ w[f"layer{layer}.wk"]
        off_temporal = enc.p_temporal @ w[f"layer{layer}.wk"]

        tmap = None
        if flow_to_prev is not None and stnc_k >= 1:
            tmap = temporal_neighbor_map(grid, flow_to_prev, stnc_k)

        out = np.empty_like(hp)
        for p in range(grid.rows):
            for qq in range(grid.cols):
                ks = [slab(k_all, p, qq) + off_self]
                vs = [slab(v_all, p, qq)]
                bias = [np.zeros(b * b)]
                spat = spatial_neighbors(grid, p, qq)
                if spat:
                    sk, sv = cache.gather(layer, [(frame, blk) for blk in spat])
                    ks.append(sk + off_spatial)
                    vs.append(sv)
                    bias.append(np.zeros(len(sk)))
                if tmap is not None:
                    tblocks = tmap[(p, qq)]
                    if tblocks:
                        tk, tv = cache.gather(layer, [(frame - 1, blk) for blk in tblocks])
                        ks.append(tk + off_temporal)
                        vs.append(tv)
                        bias.append(np.full(len(tk), cfg.temporal_bias))
                out[p * b : (p + 1) * b, qq * b : (qq + 1) * b] = _attend(
                    slab(q_all, p, qq),
                    np.concatenate(ks, axis=0),
                    np.concatenate(vs, axis=0),
                    cfg.heads,
                    logit_bias=np.concatenate(bias),
                ).reshape(b, b, d)
        return out[:ht, :wt]

    def _frame_kv(self, cache: KVCache, layer: int, frame: int, grid: BlockGrid) -> tuple[np.ndarray, np.ndarray]:
        """Reassemble a full-frame K/V pair from the cached block slabs."""
        refs = [(frame, (p, q)) for p in range(grid.rows) for q in range(grid.cols)]
        k, v = cache.gather(layer, refs)
        b = grid.block_size

        def to_grid(slabs: np.ndarray) -> np.ndarray:
            g = slabs.reshape(grid.rows, grid.cols, b, b, -1).transpose(0, 2, 1, 3, 4)
            g = g.reshape(grid.padded_height, grid.padded_width, -1)
            return g[: grid.height, : grid.width]

        return to_grid(k), to_grid(v)

    def trajectory_cross_attention(
        self,
        h: np.ndarray,
        layer: int,
        trajectories: TrajectorySet,
        cache: KVCache,
        window: int,
        *,
        frame: int = 0,
    ) -> np.ndarray:
        """Cross-attention along trajectories, then the layer's FFN.

        Each token queries (through its own projection) the cached key/value
        rows sitting at its trajectory's coordinates in the ``window``
        preceding frames, always alongside its own row. Sentinel trajectory
        entries and uncovered tokens simply contribute no past rows, leaving
        the token attending to itself. The attention output passes through
        the layer's residual MLP.
        """
        cfg = self.cfg
        if layer not in cfg.vital_layers:
            raise ValueError(f"layer {layer} is not a vital layer {cfg.vital_layers}")
        if window < 1:
            raise ValueError(f"window must be >= 1, got {window}")
        if window > cache.horizon - 1:
            raise ValueError(
                f"window {window} needs {window + 1} cached frames but horizon is {cache.horizon}"
            )
        ht, wt, d = h.shape
        if (trajectories.height, trajectories.width) != (ht, wt):
            raise ValueError(
                f"trajectory grid {(trajectories.height, trajectories.width)} does not match tokens {(ht, wt)}"
            )
        grid = partition_blocks((ht, wt), cfg.block_size)
        w = self.weights
        q = (h @ w[f"layer{layer}.wqt"]).reshape(-1, d)

        k_own, v_own = self._frame_kv(cache, layer, frame, grid)
        coords, valid = trajectories.history(frame, window)
        n_keys = 1 + window
        t = ht * wt
        keys = np.zeros((t, n_keys, d))
        vals = np.zeros((t, n_keys, d))
        mask = np.zeros((t, n_keys), dtype=bool)
        keys[:, 0] = k_own.reshape(t, d)
        vals[:, 0] = v_own.reshape(t, d)
        mask[:, 0] = True
        for i in range(window):
            f = frame - 1 - i
            ok = valid[:, :, i].reshape(t)
            if f < 0 or not ok.any():
                continue
            kf, vf = self._frame_kv(cache, layer, f, grid)
            cu = coords[:, :, i, 0].reshape(t)[ok]
            cv = coords[:, :, i, 1].reshape(t)[ok]
            keys[ok, 1 + i] = kf[cv, cu]
            vals[ok, 1 + i] = vf[cv, cu]
            mask[ok, 1 + i] = True

        heads = cfg.heads
        dh = d // heads
        qh = q.reshape(t, heads, dh)
        kh = keys.reshape(t, n_keys, heads, dh)
        vh = vals.reshape(t, n_keys, heads, dh)
        logits = np.einsum("thd,tkhd->thk", qh, kh) / np.sqrt(dh) * cfg.traj_temperature
        logits = np.where(mask[:, None, :], logits, -np.inf)
        attn = _softmax(logits)
        out = np.einsum("thk,tkhd->thd", attn, vh).reshape(ht, wt, d)
        return self._ffn(layer, out)

    # -- full forward -------------------------------------------------------

    def denoise_predict(self, x_t: Frame, t: int, ctx: DenoiseContext) -> np.ndarray:
        """Predict the noise in ``x_t`` at schedule position ``t``.

        Vital layers (minus any in ctx.disabled_layers) run block attention
        and, when enabled and wired, trajectory cross-attention; all other
        layers run plain per-block self-attention. The transformer's output
        is blended with the closed-form Gaussian-prior estimate; its share is
        scaled by sqrt(alpha_bar) so it fades where the prior is confident.
        """
        cfg = self.cfg
        ab = float(ctx.alpha_bar)
        if not (0.0 < ab <= 1.0):
            raise ValueError(f"alpha_bar must be in (0, 1], got {ab}")
        h = self.patch_embed(x_t) + sinusoidal_time_embedding(t, cfg.hidden_dim)
        grid = self.block_grid(x_t.height, x_t.width)
        for layer in range(cfg.num_layers):
            vital = layer in cfg.vital_layers and layer not in ctx.disabled_layers
            if vital:
                h = self.block_attention(
                    h,
                    layer,
                    ctx.cache,
                    grid,
                    ctx.flow_to_prev,
                    frame=ctx.frame,
                    stnc_k=ctx.stnc_k,
                )
                if ctx.use_trajectory_attention and ctx.trajectories is not None:
                    h = self.trajectory_cross_attention(
                        h, layer, ctx.trajectories, ctx.cache, ctx.window, frame=ctx.frame
                    )
                else:
                    h = self._ffn(layer, h)
            else:
                h = self._ffn(layer, self._plain_self_attention(h, layer))
        raw = self._unpatchify(h, x_t.height, x_t.width)

        # Wiener prior: optimal linear guess under pixels ~ N(mean, var)
        s = ab * cfg.prior_var + (1.0 - ab)
        eps_prior = np.sqrt(1.0 - ab) * (x_t.pixels - np.sqrt(ab) * cfg.prior_mean) / s
        return eps_prior + cfg.model_gain * np.sqrt(ab) * raw


def _pad_grid(h: np.ndarray, grid: BlockGrid) -> np.ndarray:
    if grid.pad_bottom == 0 and grid.pad_right == 0:
        return h
    return np.pad(h, ((0, grid.pad_bottom), (0, grid.pad_right), (0, 0)), mode="edge")


# -- weights ---------------------------------------------------------------


def _init_weights(cfg: DiTConfig) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(cfg.seed)
    d = cfg.hidden_dim
    pdim = cfg.channels * cfg.patch_size * cfg.patch_size
    w: dict[str, np.ndarray] = {}
    w["embed.w"] = rng.standard_normal((pdim, d)) / np.sqrt(pdim)
    w["embed.b"] = np.zeros(d)
    for layer in range(cfg.num_layers):
        w[f"layer{layer}.wq"] = rng.standard_normal((d, d)) / np.sqrt(d)
        w[f"layer{layer}.wk"] = rng.standard_normal((d, d)) / np.sqrt(d)
        w[f"layer{layer}.wv"] = rng.standard_normal((d, d)) / np.sqrt(d)
        w[f"layer{layer}.wqt"] = rng.standard_normal((d, d)) / np.sqrt(d)
        w[f"layer{layer}.ffn.w1"] = rng.standard_normal((d, 4 * d)) / np.sqrt(d)
        w[f"layer{layer}.ffn.b1"] = np.zeros(4 * d)
        w[f"layer{layer}.ffn.w2"] = rng.standard_normal((4 * d, d)) / np.sqrt(4 * d)
        w[f"layer{layer}.ffn.b2"] = np.zeros(d)
    w["head.w"] = rng.standard_normal((d, pdim)) / np.sqrt(d)
    w["head.b"] = np.zeros(pdim)
    w["enc.self"] = 0.5 * rng.standard_normal(d)
    w["enc.spatial"] = 0.5 * rng.standard_normal(d)
    w["enc.temporal"] = 0.5 * rng.standard_normal(d)
    return w


def _weight_names(cfg: DiTConfig) -> list[str]:
    names = ["embed.w", "embed.b"]
    for layer in range(cfg.num_layers):
        names += [
            f"layer{layer}.wq",
            f"layer{layer}.wk",
            f"layer{layer}.wv",
            f"layer{layer}.wqt",
            f"layer{layer}.ffn.w1",
            f"layer{layer}.ffn.b1",
            f"layer{layer}.ffn.w2",
            f"layer{layer}.ffn.b2",
        ]
    names += ["head.w", "head.b", "enc.self", "enc.spatial", "enc.temporal"]
    return names


def _check_weights(cfg: DiTConfig, weights: dict[str, np.ndarray]) -> None:
    missing = set(_weight_names(cfg)) - set(weights)
    if missing:
        raise ValueError(f"weights missing arrays: {sorted(missing)}")


# -- serialization ----------------------------------------------------------


def write_config(cfg: DiTConfig, path: str | Path) -> None:
    """Config as a JSON text file; the schema is the dataclass field set."""
    payload = dataclasses.asdict(cfg)
    payload["vital_layers"] = list(cfg.vital_layers)
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def read_config(path: str | Path) -> DiTConfig:
    payload = json.loads(Path(path).read_text())
    payload["vital_layers"] = tuple(payload["vital_layers"])
    return DiTConfig(**payload)


def save_weights(model: TrajectoryDiT, path: str | Path) -> None:
    """Flat float64 binary with a self-describing JSON header.

    Layout: magic, little-endian uint32 header length, UTF-8 JSON header
    (config plus the array name/shape manifest in storage order), then the
    arrays concatenated as little-endian float64.
    """
    cfg = model.cfg
    names = _weight_names(cfg)
    header = {
        "format": "ditvr-weights",
        "version": 1,
        "seed": cfg.seed,
        "config": json.loads(_config_json(cfg)),
        "arrays": [{"name": n, "shape": list(model.weights[n].shape)} for n in names],
    }
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(WEIGHTS_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for n in names:
            fh.write(model.weights[n].astype("<f8").tobytes())


def _config_json(cfg: DiTConfig) -> str:
    payload = dataclasses.asdict(cfg)
    payload["vital_layers"] = list(cfg.vital_layers)
    return json.dumps(payload)


def load_weights(path: str | Path) -> TrajectoryDiT:
    with open(path, "rb") as fh:
        magic = fh.read(len(WEIGHTS_MAGIC))
        if magic != WEIGHTS_MAGIC:
            raise ValueError(f"bad weights magic {magic!r}")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        cfg_dict = dict(header["config"])
        cfg_dict["vital_layers"] = tuple(cfg_dict["vital_layers"])
        cfg = DiTConfig(**cfg_dict)
        weights: dict[str, np.ndarray] = {}
        for spec in header["arrays"]:
            shape = tuple(spec["shape"])
            count = int(np.prod(shape)) if shape else 1
            arr = np.fromfile(fh, dtype="<f8", count=count)
            if arr.size != count:
                raise ValueError(f"truncated weights file at array {spec['name']}")
            weights[spec["name"]] = arr.reshape(shape)
    return TrajectoryDiT(cfg, weights)


# -- vital layer analysis ----------------------------------------------------


def vital_layer_analysis(
    cfg: DiTConfig,
    video: list[Frame],
    metric: str = "we",
    *,
    task: str = "denoise50",
    noise_sigma: float | None = None,
    seed: int = 0,
    num_steps: int = 25,
    flows: tuple[list[FlowField], list[FlowField]] | None = None,
) -> list[float]:
    """Per-layer sensitivity: how much the chosen metric degrades when one
    layer's trajectory mechanisms are switched off.

    The clean clip is degraded, restored once in full, and then once per
    layer with that layer demoted to plain self-attention. Degradation is
    oriented so that larger means the layer mattered more: WE(ablated) -
    WE(full) for warping error, FSim(full) - FSim(ablated) for flow
    similarity. Layers outside cfg.vital_layers degrade by exactly 0 since
    demoting them changes nothing.
    """
    from .harness import restore_with_toggles
    from .metrics import fsim_temporal, warping_error
    from .synthetic import degrade

    if metric not in ("we", "fsim"):
        raise ValueError(f"metric must be 'we' or 'fsim', got {metric!r}")

    degraded, op = degrade(video, task, noise_sigma=noise_sigma, seed=seed)

    def score(disabled: frozenset) -> float:
        restored, used_flows = restore_with_toggles(
            degraded, op, cfg, num_steps=num_steps, seed=seed, flows=flows, disabled_layers=disabled
        )
        bwd = flows[1] if flows is not None else used_flows[1]
        if metric == "we":
            return warping_error(restored, bwd)
        return fsim_temporal(restored, bwd)

    base = score(frozenset())
    out = []
    for layer in range(cfg.num_layers):
        if layer not in cfg.vital_layers:
            out.append(0.0)
            continue
        ablated = score(frozenset([layer]))
        out.append(ablated - base if metric == "we" else base - ablated)
    return out


def recommend_vital_layers(scores: list[float], k: int) -> tuple[int, ...]:
    """The k layers whose removal degraded the metric the most."""
    if k < 0:
        raise ValueError("k must be >= 0")
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return tuple(sorted(order[:k]))
